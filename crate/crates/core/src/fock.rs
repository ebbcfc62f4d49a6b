//! Truncated Fock-space states.
//!
//! States carry their exact amplitudes up to a cutoff `N_max`; the mass above
//! the cutoff is simply dropped (never renormalized), so `1 - norm²` is the
//! truncation tail and can be checked against the policy that produced it.

use std::f64::consts::PI;

use nalgebra::linalg::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::special::ln_factorial;
use crate::{CMatrix, Error, Result, C64};

/// Chooses Fock cutoffs.
///
/// The base rule is `N_max = ceil(μ + 10√μ + 20)` for mean photon number `μ`.
/// Constructors raise the cutoff further when the actual tail of the state
/// they build exceeds `tail_tolerance` (squeezed states have geometric tails
/// that the rule alone does not bound).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub tail_tolerance: f64,
    pub hard_max: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            tail_tolerance: 1e-12,
            hard_max: 400,
        }
    }
}

impl TruncationPolicy {
    pub fn new(tail_tolerance: f64, hard_max: usize) -> Result<Self> {
        let p = Self {
            tail_tolerance,
            hard_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tail_tolerance > 0.0 && self.tail_tolerance < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tail_tolerance must lie in (0, 1), got {}",
                self.tail_tolerance
            )));
        }
        Ok(())
    }

    /// `ceil(μ + 10√μ + 20)`.
    pub fn rule_cutoff(&self, mean_photons: f64) -> usize {
        let mu = mean_photons.max(0.0);
        (mu + 10.0 * mu.sqrt() + 20.0).ceil() as usize
    }

    pub(crate) fn check(&self, required: usize) -> Result<usize> {
        if required > self.hard_max {
            Err(Error::CutoffOverflow {
                required,
                hard_max: self.hard_max,
            })
        } else {
            Ok(required)
        }
    }

    /// Cutoff for a Poissonian photon distribution: the larger of the rule
    /// and the smallest `N` whose exact tail is within tolerance.
    pub fn poisson_cutoff(&self, mean_photons: f64) -> Result<usize> {
        let rule = self.rule_cutoff(mean_photons);
        let exact = poisson_tail_cutoff(mean_photons, self.tail_tolerance, self.hard_max)?;
        self.check(rule.max(exact))
    }
}

/// Smallest `N` such that `P(n > N) ≤ tol` for a Poisson law of mean `mu`.
///
/// The tail is accumulated from far above the mean downwards in the log
/// domain, so it is not limited by the cancellation in `1 - CDF`.
pub fn poisson_tail_cutoff(mu: f64, tol: f64, hard_max: usize) -> Result<usize> {
    if mu < 0.0 || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("mean photon number {mu}")));
    }
    if mu == 0.0 {
        return Ok(0);
    }
    let ln_pmf = |n: usize| -mu + n as f64 * mu.ln() - ln_factorial(n);
    // Start where the pmf is far below f64 resolution.
    let mut top = (mu + 40.0 * mu.sqrt() + 60.0).ceil() as usize;
    while ln_pmf(top) > -745.0 {
        top += 50;
    }
    let mut tail = 0.0;
    let mut n = top;
    // tail currently holds P(n > top) ≈ 0; walk down.
    loop {
        // tail == P(N > n)
        if tail > tol {
            let found = n + 1;
            return if found > hard_max {
                Err(Error::CutoffOverflow {
                    required: found,
                    hard_max,
                })
            } else {
                Ok(found)
            };
        }
        if n == 0 {
            return Ok(0);
        }
        tail += ln_pmf(n).exp();
        n -= 1;
    }
}

/// Pure state `Σ c_n |n⟩` truncated at `cutoff = len - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    amps: Vec<C64>,
}

impl FockVector {
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidParameter("empty amplitude vector".into()));
        }
        Ok(Self { amps })
    }

    pub fn vacuum(cutoff: usize) -> Self {
        Self::number(0, cutoff).expect("vacuum always fits")
    }

    pub fn number(n: usize, cutoff: usize) -> Result<Self> {
        if n > cutoff {
            return Err(Error::InvalidParameter(format!(
                "number state |{n}⟩ exceeds cutoff {cutoff}"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); cutoff + 1];
        amps[n] = C64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    /// Coherent state `|α⟩`, `c_n = e^{-|α|²/2} αⁿ/√(n!)`.
    pub fn coherent(alpha: C64, policy: &TruncationPolicy) -> Result<Self> {
        policy.validate()?;
        let cutoff = policy.poisson_cutoff(alpha.norm_sqr())?;
        Ok(Self::coherent_with_cutoff(alpha, cutoff))
    }

    pub fn coherent_with_cutoff(alpha: C64, cutoff: usize) -> Self {
        Self {
            amps: coherent_amplitudes(alpha, cutoff),
        }
    }

    /// Squeezed coherent state `S(r) D(β) |0⟩ = D(β e^{-r}) S(r) |0⟩` with
    /// `S(r) = exp[(r/2)(a² - a†²)]`.
    ///
    /// The quadrature `x` has mean `√2 β e^{-r}` and variance `e^{-2r}/2`;
    /// negative `r` anti-squeezes `x`.
    pub fn squeezed_coherent(r: f64, beta: f64, policy: &TruncationPolicy) -> Result<Self> {
        policy.validate()?;
        if !r.is_finite() || r.abs() > 3.0 || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "squeeze parameter must satisfy |r| ≤ 3, got r = {r}, beta = {beta}"
            )));
        }
        let gamma = C64::new(beta * (-r).exp(), 0.0);
        let full = squeezed_amplitudes(gamma, r, policy.hard_max);
        let mean: f64 = full
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum();
        // Smallest N with Σ_{n>N} |c_n|² ≤ tol, accumulated from the top.
        let mut tail = 0.0;
        let mut by_tail = None;
        for n in (0..full.len()).rev() {
            if tail > policy.tail_tolerance {
                by_tail = Some(n + 1);
                break;
            }
            tail += full[n].norm_sqr();
        }
        let by_tail = by_tail.unwrap_or(0);
        if by_tail >= policy.hard_max {
            return Err(Error::CutoffOverflow {
                required: by_tail + 1,
                hard_max: policy.hard_max,
            });
        }
        let cutoff = policy.check(policy.rule_cutoff(mean).max(by_tail))?;
        Ok(Self {
            amps: full[..=cutoff].to_vec(),
        })
    }

    pub fn cutoff(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn photon_distribution(&self) -> Vec<f64> {
        self.amps.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    /// `⟨self|other⟩` over the common support.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|⟨a|b⟩|² / (‖a‖² ‖b‖²)`.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr() / (self.norm_sqr() * other.norm_sqr())
    }

    /// Zero-padded (or truncated) copy with the given cutoff.
    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); cutoff + 1];
        for (dst, src) in amps.iter_mut().zip(&self.amps) {
            *dst = *src;
        }
        Self { amps }
    }

    pub fn to_density(&self) -> DensityOperator {
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        DensityOperator {
            matrix: &v * v.adjoint(),
        }
    }
}

fn coherent_amplitudes(alpha: C64, cutoff: usize) -> Vec<C64> {
    let mut amps = vec![C64::new(0.0, 0.0); cutoff + 1];
    let mag = alpha.norm();
    if mag == 0.0 {
        amps[0] = C64::new(1.0, 0.0);
        return amps;
    }
    let arg = alpha.arg();
    let ln_mag = mag.ln();
    for (n, a) in amps.iter_mut().enumerate() {
        let ln_abs = -0.5 * mag * mag + n as f64 * ln_mag - 0.5 * ln_factorial(n);
        *a = C64::from_polar(ln_abs.exp(), n as f64 * arg);
    }
    amps
}

/// Amplitudes of `D(γ) S(r) |0⟩` from the annihilation condition
/// `[(a - γ) + tanh r (a† - γ*)] |ψ⟩ = 0`.
fn squeezed_amplitudes(gamma: C64, r: f64, cutoff: usize) -> Vec<C64> {
    let t = r.tanh();
    let mu = gamma + gamma.conj() * t;
    let c0 = (-(0.5 * gamma.norm_sqr()) - 0.5 * t * gamma.conj() * gamma.conj()).exp()
        / r.cosh().sqrt();
    let mut amps = Vec::with_capacity(cutoff + 1);
    amps.push(c0);
    if cutoff >= 1 {
        amps.push(mu * c0);
    }
    for n in 1..cutoff {
        let next = (mu * amps[n] - amps[n - 1] * (t * (n as f64).sqrt())) / ((n + 1) as f64).sqrt();
        amps.push(next);
    }
    amps
}

/// Hermitian density matrix on the truncated space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    /// Wraps a matrix after checking it is square and Hermitian to 1e-12.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidParameter("density matrix must be square".into()));
        }
        let rho = Self { matrix };
        if rho.hermiticity_defect() > 1e-12 {
            return Err(Error::InvalidParameter("density matrix is not Hermitian".into()));
        }
        Ok(rho)
    }

    pub fn vacuum(cutoff: usize) -> Self {
        FockVector::vacuum(cutoff).to_density()
    }

    pub fn number(n: usize, cutoff: usize) -> Result<Self> {
        Ok(FockVector::number(n, cutoff)?.to_density())
    }

    pub fn coherent(alpha: C64, policy: &TruncationPolicy) -> Result<Self> {
        Ok(FockVector::coherent(alpha, policy)?.to_density())
    }

    /// The phase-averaged laser state: diagonal with Poissonian weights
    /// `e^{-|α|²}|α|^{2n}/n!`, off-diagonals exactly zero.
    pub fn phase_averaged_laser_state(magnitude: f64, policy: &TruncationPolicy) -> Result<Self> {
        policy.validate()?;
        if magnitude < 0.0 || !magnitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "magnitude must be ≥ 0, got {magnitude}"
            )));
        }
        let mu = magnitude * magnitude;
        let cutoff = policy.poisson_cutoff(mu)?;
        let mut m = CMatrix::zeros(cutoff + 1, cutoff + 1);
        for n in 0..=cutoff {
            let p = if mu == 0.0 {
                if n == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (-mu + n as f64 * mu.ln() - ln_factorial(n)).exp()
            };
            m[(n, n)] = C64::new(p, 0.0);
        }
        Ok(Self { matrix: m })
    }

    /// Convex combination `Σ w_i ρ_i`; all inputs are padded to the largest
    /// cutoff.
    pub fn mixture(parts: &[(f64, &DensityOperator)]) -> Result<Self> {
        let cutoff = parts
            .iter()
            .map(|(_, r)| r.cutoff())
            .max()
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let mut m = CMatrix::zeros(cutoff + 1, cutoff + 1);
        for (w, r) in parts {
            if *w < 0.0 {
                return Err(Error::InvalidParameter("negative mixture weight".into()));
            }
            let padded = r.with_cutoff(cutoff);
            m += padded.matrix * C64::new(*w, 0.0);
        }
        Ok(Self { matrix: m })
    }

    /// `Σ_j w_j U_{φ_j} ρ U_{φ_j}†`, i.e. `ρ_nm Σ_j w_j e^{i(n-m)φ_j}`.
    pub fn phase_mixture(&self, phases: &[f64], weights: &[f64]) -> Result<Self> {
        if phases.len() != weights.len() || phases.is_empty() {
            return Err(Error::InvalidParameter(
                "phase mixture needs matching, non-empty phase and weight lists".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let dim = self.cutoff() + 1;
        // Fourier moments of the phase weights for every index difference.
        let moments: Vec<C64> = (0..dim)
            .map(|d| {
                phases
                    .iter()
                    .zip(weights)
                    .map(|(&p, &w)| C64::from_polar(w / total, d as f64 * p))
                    .sum()
            })
            .collect();
        let mut m = self.matrix.clone();
        for i in 0..dim {
            for j in 0..dim {
                let f = if i >= j {
                    moments[i - j]
                } else {
                    moments[j - i].conj()
                };
                m[(i, j)] *= f;
            }
        }
        Ok(Self { matrix: m })
    }

    pub fn cutoff(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn photon_distribution(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|c| c.re).collect()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.photon_distribution()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest `|ρ_nm - conj(ρ_mn)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// True when every off-diagonal element is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.matrix.nrows();
        (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)] == C64::new(0.0, 0.0)))
    }

    /// Eigen-decomposition `ρ = Σ λ_i |e_i⟩⟨e_i|`, keeping `λ_i > floor`.
    pub fn pure_components(&self, floor: f64) -> Vec<(f64, FockVector)> {
        if self.is_diagonal() {
            return self
                .photon_distribution()
                .into_iter()
                .enumerate()
                .filter(|(_, p)| *p > floor)
                .map(|(n, p)| (p, FockVector::number(n, self.cutoff()).expect("n ≤ cutoff")))
                .collect();
        }
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut out = Vec::new();
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > floor {
                let col = eig.eigenvectors.column(i);
                out.push((lambda, FockVector { amps: col.iter().copied().collect() }));
            }
        }
        out
    }

    /// Zero-padded (or truncated) copy.
    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        let mut m = CMatrix::zeros(cutoff + 1, cutoff + 1);
        let k = (cutoff + 1).min(self.matrix.nrows());
        m.view_mut((0, 0), (k, k))
            .copy_from(&self.matrix.view((0, 0), (k, k)));
        Self { matrix: m }
    }
}

/// Phase-space rotation `U_φ = e^{iφ n̂}`.
pub trait PhaseRotate {
    fn phase_rotate(&self, phi: f64) -> Self;
}

impl PhaseRotate for FockVector {
    /// `c_n → c_n e^{inφ}`.
    fn phase_rotate(&self, phi: f64) -> Self {
        Self {
            amps: self
                .amps
                .iter()
                .enumerate()
                .map(|(n, c)| c * C64::from_polar(1.0, n as f64 * phi))
                .collect(),
        }
    }
}

impl PhaseRotate for DensityOperator {
    /// `ρ_nm → ρ_nm e^{i(n-m)φ}`.
    fn phase_rotate(&self, phi: f64) -> Self {
        Self {
            matrix: rotate_operator(&self.matrix, phi),
        }
    }
}

/// `U_φ A U_φ†` for an operator in the Fock basis.
pub fn rotate_operator(a: &CMatrix, phi: f64) -> CMatrix {
    let n = a.nrows();
    CMatrix::from_fn(n, a.ncols(), |i, j| {
        a[(i, j)] * C64::from_polar(1.0, (i as f64 - j as f64) * phi)
    })
}

/// Harmonic-oscillator eigenfunction `ψ_n(x)` for `x = (a + a†)/√2`.
pub fn quadrature_wavefunction(n: usize, x: f64) -> f64 {
    quadrature_wavefunctions(n, x)[n]
}

/// `ψ_0(x) … ψ_nmax(x)` by the normalized three-term recurrence
/// `ψ_{n+1} = √(2/(n+1)) x ψ_n − √(n/(n+1)) ψ_{n−1}`, carried with a separate
/// log scale so neither the Gaussian prefactor nor the polynomial growth can
/// under- or overflow mid-recurrence.
pub fn quadrature_wavefunctions(nmax: usize, x: f64) -> Vec<f64> {
    let log_pref = -0.5 * x * x - 0.25 * PI.ln();
    let mut out = vec![0.0; nmax + 1];
    // Mantissas relative to exp(log_scale).
    let mut log_scale = log_pref;
    let mut prev = 0.0f64;
    let mut cur = 1.0f64;
    out[0] = log_scale.exp();
    for n in 0..nmax {
        let next = (2.0 / (n + 1) as f64).sqrt() * x * cur - (n as f64 / (n + 1) as f64).sqrt() * prev;
        prev = cur;
        cur = next;
        let big = cur.abs().max(prev.abs());
        if big > 1e150 || (big < 1e-150 && big > 0.0) {
            let s = big.ln();
            cur /= big;
            prev /= big;
            log_scale += s;
        }
        out[n + 1] = if cur == 0.0 {
            0.0
        } else {
            cur.signum() * (cur.abs().ln() + log_scale).exp()
        };
    }
    out
}

/// Matrix elements `⟨k|D(γ)|s⟩` for `k ≤ rows`, `s ≤ cols` (inclusive).
///
/// Uses the associated-Laguerre form, walking each diagonal `k − s = const`
/// with the degree recurrence. The Laguerre values are rescaled as they grow
/// so large photon numbers neither overflow nor lose the prefactor.
pub fn displacement_matrix(gamma: C64, rows: usize, cols: usize) -> CMatrix {
    let mut d = CMatrix::zeros(rows + 1, cols + 1);
    let x = gamma.norm_sqr();
    if x == 0.0 {
        for i in 0..=rows.min(cols) {
            d[(i, i)] = C64::new(1.0, 0.0);
        }
        return d;
    }
    let ln_g = 0.5 * x.ln();
    // k ≥ s: e^{−x/2} √(s!/k!) γ^{k−s} L_s^{(k−s)}(x)
    for a in 0..=rows {
        let unit = C64::from_polar(1.0, a as f64 * gamma.arg());
        fill_diagonal(x, ln_g, a, cols.min(rows - a), |n, v| d[(n + a, n)] = unit * v);
    }
    // k < s: e^{−x/2} √(k!/s!) (−γ*)^{s−k} L_k^{(s−k)}(x)
    let mg = -gamma.conj();
    for a in 1..=cols {
        let unit = C64::from_polar(1.0, a as f64 * mg.arg());
        fill_diagonal(x, ln_g, a, rows.min(cols - a), |n, v| d[(n, n + a)] = unit * v);
    }
    d
}

/// Emits `e^{−x/2} √(n!/(n+a)!) |γ|^a L_n^{(a)}(x)` for `n = 0..=n_max`.
pub(crate) fn fill_diagonal(x: f64, ln_g: f64, a: usize, n_max: usize, mut emit: impl FnMut(usize, f64)) {
    let af = a as f64;
    let (mut prev, mut cur) = (0.0f64, 1.0f64);
    let mut ln_scale = 0.0f64;
    // ln √(n!/(n+a)!), accumulated along the diagonal
    let mut ln_ratio = -0.5 * ln_factorial(a);
    for n in 0..=n_max {
        if n > 0 {
            ln_ratio += 0.5 * ((n as f64).ln() - ((n + a) as f64).ln());
            let nf = (n - 1) as f64;
            let next = ((2.0 * nf + 1.0 + af - x) * cur - (nf + af) * prev) / (nf + 1.0);
            prev = cur;
            cur = next;
        }
        let ln_pref = -0.5 * x + ln_ratio + af * ln_g + ln_scale;
        emit(n, cur * ln_pref.exp());
        let m = cur.abs().max(prev.abs());
        if m > 1e100 || (m < 1e-100 && m > 0.0) {
            prev /= m;
            cur /= m;
            ln_scale += m.ln();
        }
    }
}
