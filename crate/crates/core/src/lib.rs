//! Repeated optical homodyne detection with phase-mixed laser fields.
//!
//! The crate simulates a signal mode mixed with a coherent local oscillator
//! (LO) on a 50:50 beam splitter, followed by photon-number-difference
//! counting. The LO phase is never known: it is a latent variable drawn from
//! a phase distribution, and outcome sequences follow a mixture of i.i.d.
//! laws over that phase. The modules cover
//!
//! * [`fock`]: truncated Fock-space states (coherent, squeezed, number,
//!   phase-averaged) and the quadrature wavefunctions,
//! * [`homodyne`]: the exact finite-LO measurement operators and quadrature
//!   distributions, plus the strong-LO limit,
//! * [`phasebayes`]: phase posteriors, sequential sampling of outcome
//!   sequences, joint probabilities and localization diagnostics,
//! * [`empirical`]: empirical measures, distances and phase estimates,
//! * [`tomography`]: the common-source and independent-LO tomography
//!   scenarios, filtered back-projection and CW/PW discrimination,
//! * [`cli`]: configuration-driven batch experiments used by the binary.
//!
//! Quadrature convention everywhere: `x = (a + a†)/√2`, vacuum variance 1/2,
//! `x_θ = x cos θ + p sin θ`.

pub mod cli;
pub mod empirical;
pub mod error;
pub mod fock;
pub mod homodyne;
pub mod phasebayes;
pub mod special;
pub mod tomography;

pub use error::{Error, Result};

/// Complex scalar used for all amplitudes.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix used for operators on the truncated signal space.
pub type CMatrix = nalgebra::DMatrix<C64>;
