//! Exact photon-number-difference statistics of a signal mixed with a
//! coherent local oscillator on a 50:50 beam splitter.
//!
//! Beam-splitter convention: `a_out = (a + b)/√2`, `b_out = (a − b)/√2`,
//! `Δn = n_{a,out} − n_{b,out}`, signal in `a`, LO `|α e^{iφ}⟩` in `b`.
//! With this choice a coherent signal `|β⟩` (β real) gives
//! `⟨Δn⟩ = 2αβ cos φ`, i.e. `x = Δn/(√2α)` estimates `x_φ`.
//!
//! The measurement operators are obtained without the two-mode unitary:
//! `B |m⟩|α'⟩ = D_a(γ) D_b(−γ) Σ_s √(C(m,s)/2^m) |s, m−s⟩` with `γ = α'/√2`,
//! so every amplitude `⟨k,l|B|m,α'⟩` is a short sum over displacement matrix
//! elements.

use std::f64::consts::SQRT_2;
use std::path::Path;

use nalgebra::linalg::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::fock::{displacement_matrix, quadrature_wavefunctions, rotate_operator, DensityOperator};
use crate::special::ln_binomial;
use crate::{CMatrix, Error, Result, C64};

/// Outcome alphabet `x = Δn/(√2α)` for `Δn ∈ [dn_min, dn_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    alpha: f64,
    dn_min: i64,
    dn_max: i64,
}

impl QuadratureGrid {
    pub fn new(alpha: f64, dn_min: i64, dn_max: i64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("LO amplitude must be > 0, got {alpha}")));
        }
        if dn_min > dn_max {
            return Err(Error::InvalidParameter(format!("empty Δn range [{dn_min}, {dn_max}]")));
        }
        Ok(Self { alpha, dn_min, dn_max })
    }

    pub fn symmetric(alpha: f64, half_width: i64) -> Result<Self> {
        Self::new(alpha, -half_width, half_width)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dn_min(&self) -> i64 {
        self.dn_min
    }

    pub fn dn_max(&self) -> i64 {
        self.dn_max
    }

    /// `Δx = 1/(√2 α)`.
    pub fn spacing(&self) -> f64 {
        1.0 / (SQRT_2 * self.alpha)
    }

    pub fn x(&self, dn: i64) -> f64 {
        dn as f64 * self.spacing()
    }

    pub fn len(&self) -> usize {
        (self.dn_max - self.dn_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, dn: i64) -> Option<usize> {
        (self.dn_min..=self.dn_max)
            .contains(&dn)
            .then(|| (dn - self.dn_min) as usize)
    }

    pub fn dn_at(&self, index: usize) -> i64 {
        self.dn_min + index as i64
    }

    pub fn dn_values(&self) -> impl Iterator<Item = i64> {
        self.dn_min..=self.dn_max
    }

    pub fn xs(&self) -> Vec<f64> {
        self.dn_values().map(|d| self.x(d)).collect()
    }
}

/// Default half-width of the Δn range for a signal of displacement `beta`
/// and squeezing `r`: `ceil(√2 α · x_span)`, `x_span = max(6, √2(|β|e^{|r|} + 3))`.
pub fn default_dn_half_width(alpha: f64, beta: f64, r: f64) -> i64 {
    let x_span = 6f64.max(SQRT_2 * (beta.abs() * r.abs().exp() + 3.0));
    (SQRT_2 * alpha * x_span).ceil() as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmOptions {
    /// Largest allowed omitted probability for the maximally mixed signal.
    pub mass_tolerance: f64,
    /// The Δn range is never narrower than this half-width.
    pub min_half_width: i64,
    /// Allowed column-norm deficit of the truncated displacement matrices.
    pub row_tail: f64,
    /// Upper bound on the output photon numbers considered.
    pub max_rows: usize,
}

impl Default for PovmOptions {
    fn default() -> Self {
        Self {
            mass_tolerance: 1e-11,
            min_half_width: 0,
            row_tail: 1e-14,
            max_rows: 3000,
        }
    }
}

/// Signal-space measurement operators `E_Δn(α, φ)`.
#[derive(Clone, Debug)]
pub struct BeamSplitterPovm {
    lo_amplitude: f64,
    lo_phase: f64,
    signal_cutoff: usize,
    grid: QuadratureGrid,
    elements: Vec<CMatrix>,
    omitted_mass: f64,
}

impl BeamSplitterPovm {
    pub fn build(alpha: f64, phi: f64, signal_cutoff: usize, mass_tolerance: f64) -> Result<Self> {
        Self::build_with(
            alpha,
            phi,
            signal_cutoff,
            &PovmOptions {
                mass_tolerance,
                ..PovmOptions::default()
            },
        )
    }

    pub fn build_with(alpha: f64, phi: f64, signal_cutoff: usize, opts: &PovmOptions) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("LO amplitude must be > 0, got {alpha}")));
        }
        if !(opts.mass_tolerance > 0.0) {
            return Err(Error::InvalidParameter("mass_tolerance must be > 0".into()));
        }
        let n = signal_cutoff;
        let gamma = C64::from_polar(alpha / SQRT_2, phi);
        let (d_plus, d_minus, rows) = displacement_pair(gamma, n, opts)?;

        // √(C(m, s) / 2^m)
        let mut binom = vec![vec![0.0f64; n + 1]; n + 1];
        for (m, row) in binom.iter_mut().enumerate() {
            for (s, b) in row.iter_mut().enumerate().take(m + 1) {
                *b = (0.5 * (ln_binomial(m, s) - m as f64 * std::f64::consts::LN_2)).exp();
            }
        }

        let dim = (n + 1) as f64;
        let mut captured = 0.0f64;
        let mut by_dn: Vec<(i64, CMatrix)> = Vec::new();
        let mut half: i64 = 0;
        loop {
            let targets: Vec<i64> = if half == 0 { vec![0] } else { vec![-half, half] };
            for dn in targets {
                let e = element_for(dn, rows, n, &d_plus, &d_minus, &binom);
                captured += e.diagonal().iter().map(|c| c.re).sum::<f64>();
                by_dn.push((dn, e));
            }
            let omitted = ((dim - captured) / dim).max(0.0);
            if omitted < opts.mass_tolerance && half >= opts.min_half_width {
                break;
            }
            if half as usize >= rows {
                return Err(Error::MassToleranceUnreachable {
                    tolerance: opts.mass_tolerance,
                    omitted,
                    cap: rows,
                });
            }
            half += 1;
        }
        by_dn.sort_by_key(|(dn, _)| *dn);
        let omitted_mass = ((dim - captured) / dim).max(0.0);
        Ok(Self {
            lo_amplitude: alpha,
            lo_phase: phi,
            signal_cutoff: n,
            grid: QuadratureGrid::symmetric(alpha, half)?,
            elements: by_dn.into_iter().map(|(_, e)| e).collect(),
            omitted_mass,
        })
    }

    pub fn lo_amplitude(&self) -> f64 {
        self.lo_amplitude
    }

    pub fn lo_phase(&self) -> f64 {
        self.lo_phase
    }

    pub fn signal_cutoff(&self) -> usize {
        self.signal_cutoff
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn element(&self, dn: i64) -> Option<&CMatrix> {
        self.grid.index_of(dn).map(|i| &self.elements[i])
    }

    /// Omitted probability for the maximally mixed truncated signal.
    pub fn omitted_mass(&self) -> f64 {
        self.omitted_mass
    }

    /// Operator norm of `Σ E_Δn − I`.
    pub fn completeness_defect(&self) -> f64 {
        let dim = self.signal_cutoff + 1;
        let mut sum = CMatrix::zeros(dim, dim);
        for e in &self.elements {
            sum += e;
        }
        for i in 0..dim {
            sum[(i, i)] -= C64::new(1.0, 0.0);
        }
        SymmetricEigen::new(sum)
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Smallest eigenvalue over all elements.
    pub fn min_eigenvalue(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| {
                SymmetricEigen::new(e.clone())
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Elements for LO phase `φ + ψ` from those at `φ`: `U_ψ E U_ψ†`.
    pub fn rotated(&self, psi: f64) -> Self {
        Self {
            lo_phase: self.lo_phase + psi,
            elements: self.elements.iter().map(|e| rotate_operator(e, psi)).collect(),
            ..self.clone()
        }
    }

    /// CSV with columns `dn,x,prob,density`, where `prob` is the outcome
    /// probability for the maximally mixed truncated signal.
    pub fn write_diagnostics_csv(&self, path: &Path) -> Result<()> {
        let dim = (self.signal_cutoff + 1) as f64;
        let prob: Vec<f64> = self
            .elements
            .iter()
            .map(|e| e.diagonal().iter().map(|c| c.re).sum::<f64>() / dim)
            .collect();
        QuadratureDistribution::from_parts(self.grid, prob)?.write_csv(path)
    }
}

const TAIL_ROWS: usize = 20;

/// Displacement blocks `D(±γ)` with enough output rows that every column
/// `s ≤ n` has less than `row_tail` of its mass near the truncation edge.
fn displacement_pair(gamma: C64, n: usize, opts: &PovmOptions) -> Result<(CMatrix, CMatrix, usize)> {
    let g2 = gamma.norm_sqr();
    let mut rows = n + (g2 + 12.0 * (n as f64 + g2 + 1.0).sqrt()).ceil() as usize + 25;
    loop {
        if rows > opts.max_rows {
            return Err(Error::CutoffOverflow {
                required: rows,
                hard_max: opts.max_rows,
            });
        }
        let dp = displacement_matrix(gamma, rows, n);
        // Mass in the last rows bounds the tail, which decays faster than
        // geometrically past the bulk. Summed norms stall at rounding level.
        let tail = (0..=n)
            .map(|s| dp.column(s).rows(rows + 1 - TAIL_ROWS, TAIL_ROWS).iter().map(|c| c.norm_sqr()).sum::<f64>())
            .fold(0.0f64, f64::max);
        if tail <= opts.row_tail {
            // D(−γ) = P D(γ) P with parity P.
            let dm = CMatrix::from_fn(rows + 1, n + 1, |k, s| {
                if (k + s) % 2 == 0 {
                    dp[(k, s)]
                } else {
                    -dp[(k, s)]
                }
            });
            return Ok((dp, dm, rows));
        }
        rows += 20;
    }
}

/// `E_Δn = V† V` with `V[(k,l), m] = ⟨k,l| B |m, α'⟩` for `k − l = Δn`.
fn element_for(
    dn: i64,
    rows: usize,
    n: usize,
    d_plus: &CMatrix,
    d_minus: &CMatrix,
    binom: &[Vec<f64>],
) -> CMatrix {
    let k_lo = dn.max(0) as usize;
    let k_hi = (rows as i64).min(rows as i64 + dn);
    if k_hi < k_lo as i64 {
        return CMatrix::zeros(n + 1, n + 1);
    }
    let k_hi = k_hi as usize;
    let npairs = k_hi - k_lo + 1;
    let mut v = CMatrix::zeros(npairs, n + 1);
    let mut dk = vec![C64::new(0.0, 0.0); n + 1];
    let mut dl = vec![C64::new(0.0, 0.0); n + 1];
    for (row, k) in (k_lo..=k_hi).enumerate() {
        let l = (k as i64 - dn) as usize;
        for s in 0..=n {
            dk[s] = d_plus[(k, s)];
            dl[s] = d_minus[(l, s)];
        }
        for m in 0..=n {
            let b = &binom[m];
            let mut acc = C64::new(0.0, 0.0);
            for s in 0..=m {
                acc += dk[s] * dl[m - s] * b[s];
            }
            v[(row, m)] = acc;
        }
    }
    v.ad_mul(&v)
}

/// Outcome probabilities per Δn bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDistribution {
    grid: QuadratureGrid,
    prob: Vec<f64>,
}

impl QuadratureDistribution {
    pub fn from_parts(grid: QuadratureGrid, prob: Vec<f64>) -> Result<Self> {
        if prob.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} probabilities for a grid of {} bins",
                prob.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, prob })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    pub fn prob_at(&self, dn: i64) -> f64 {
        self.grid.index_of(dn).map_or(0.0, |i| self.prob[i])
    }

    /// `prob · √2 α`.
    pub fn density(&self) -> Vec<f64> {
        let s = SQRT_2 * self.grid.alpha();
        self.prob.iter().map(|p| p * s).collect()
    }

    pub fn total(&self) -> f64 {
        self.prob.iter().sum()
    }

    pub fn mean_x(&self) -> f64 {
        let g = &self.grid;
        self.prob
            .iter()
            .enumerate()
            .map(|(i, p)| p * g.x(g.dn_at(i)))
            .sum::<f64>()
            / self.total()
    }

    pub fn variance_x(&self) -> f64 {
        let g = &self.grid;
        let mu = self.mean_x();
        self.prob
            .iter()
            .enumerate()
            .map(|(i, p)| p * (g.x(g.dn_at(i)) - mu).powi(2))
            .sum::<f64>()
            / self.total()
    }

    /// Total-variation distance on a shared grid.
    pub fn tv_distance(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("distributions on different grids".into()));
        }
        Ok(0.5 * self.prob.iter().zip(&other.prob).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dn", "x", "prob", "density"])?;
        let density = self.density();
        for (i, (p, d)) in self.prob.iter().zip(&density).enumerate() {
            let dn = self.grid.dn_at(i);
            w.write_record(&[
                dn.to_string(),
                format!("{:.12e}", self.grid.x(dn)),
                format!("{p:.12e}"),
                format!("{d:.12e}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `prob(Δn) = Tr[ρ E_Δn]`.
pub fn quadrature_distribution(rho: &DensityOperator, povm: &BeamSplitterPovm) -> Result<QuadratureDistribution> {
    if rho.cutoff() != povm.signal_cutoff() {
        return Err(Error::CutoffMismatch {
            state: rho.cutoff(),
            operator: povm.signal_cutoff(),
        });
    }
    let r = rho.matrix();
    let prob = povm
        .elements()
        .iter()
        .map(|e| {
            // Tr[ρE] = Σ_ab ρ_ab E_ba
            let mut acc = 0.0;
            for a in 0..r.nrows() {
                for b in 0..r.ncols() {
                    acc += (r[(a, b)] * e[(b, a)]).re;
                }
            }
            acc.max(0.0)
        })
        .collect();
    QuadratureDistribution::from_parts(*povm.grid(), prob)
}

/// Fourier decomposition of `q_φ(Δn)[ρ]` in the LO phase.
///
/// Because `E_Δn(φ)_{nm} = E_Δn(0)_{nm} e^{i(n−m)φ}`,
/// `q_φ(Δn) = Σ_d C_d(Δn) e^{idφ}` with `C_d = Σ_{n−m=d} ρ_mn E_nm(0)` and
/// `|d| ≤ N_max`. Evaluating at any phase is then `O(N_max)` per bin.
#[derive(Clone, Debug)]
pub struct QuadratureFourier {
    grid: QuadratureGrid,
    /// `coeffs[bin][d]` for `d = 0..=order`.
    coeffs: Vec<Vec<C64>>,
    order: usize,
}

impl QuadratureFourier {
    pub fn new(rho: &DensityOperator, povm: &BeamSplitterPovm) -> Result<Self> {
        if rho.cutoff() != povm.signal_cutoff() {
            return Err(Error::CutoffMismatch {
                state: rho.cutoff(),
                operator: povm.signal_cutoff(),
            });
        }
        let r = rho.matrix();
        let dim = r.nrows();
        let phase0 = povm.lo_phase();
        let mut coeffs = Vec::with_capacity(povm.elements().len());
        let mut peak = 0.0f64;
        for e in povm.elements() {
            let mut c = vec![C64::new(0.0, 0.0); dim];
            for (d, cd) in c.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..dim - d {
                    let nn = m + d;
                    acc += r[(m, nn)] * e[(nn, m)];
                }
                *cd = acc * C64::from_polar(1.0, -(d as f64) * phase0);
            }
            peak = peak.max(c[0].re.abs());
            coeffs.push(c);
        }
        // Highest harmonic that carries any weight.
        let floor = 1e-15 * peak.max(f64::MIN_POSITIVE);
        let order = (0..dim)
            .rev()
            .find(|&d| coeffs.iter().any(|c| c[d].norm() > floor))
            .unwrap_or(0);
        for c in &mut coeffs {
            c.truncate(order + 1);
        }
        Ok(Self {
            grid: *povm.grid(),
            coeffs,
            order,
        })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// Highest nonzero harmonic; 0 means `q_φ` does not depend on φ.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_phase_independent(&self) -> bool {
        self.order == 0
    }

    /// Writes `q_φ(Δn)` for every bin into `out`.
    pub fn fill_at(&self, phi: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.coeffs.len());
        let harmonics: Vec<C64> = (0..=self.order).map(|d| C64::from_polar(1.0, d as f64 * phi)).collect();
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            let mut acc = c[0].re;
            for d in 1..=self.order {
                acc += 2.0 * (c[d] * harmonics[d]).re;
            }
            *o = acc.max(0.0);
        }
    }

    pub fn at(&self, phi: f64) -> QuadratureDistribution {
        let mut prob = vec![0.0; self.coeffs.len()];
        self.fill_at(phi, &mut prob);
        QuadratureDistribution {
            grid: self.grid,
            prob,
        }
    }
}

/// Strong-LO density `⟨x|U_φ† ρ U_φ|x⟩` at each point.
pub fn strong_lo_density(rho: &DensityOperator, phi: f64, xs: &[f64]) -> Vec<f64> {
    let rotated = rotate_operator(rho.matrix(), -phi);
    let n = rho.cutoff();
    // Imaginary parts cancel in the real quadratic form.
    let re = rotated.map(|c| c.re);
    xs.iter()
        .map(|&x| {
            let psi = quadrature_wavefunctions(n, x);
            let mut acc = 0.0;
            for a in 0..=n {
                if psi[a] == 0.0 {
                    continue;
                }
                let mut row = 0.0;
                for b in 0..=n {
                    row += re[(a, b)] * psi[b];
                }
                acc += psi[a] * row;
            }
            acc.max(0.0)
        })
        .collect()
}

/// Strong-LO density integrated over each Δn bin (Gauss–Legendre, 8 nodes).
pub fn strong_lo_binned(rho: &DensityOperator, phi: f64, grid: &QuadratureGrid) -> QuadratureDistribution {
    const NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
    const WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
    let h = grid.spacing();
    let mut xs = Vec::with_capacity(grid.len() * 8);
    for dn in grid.dn_values() {
        let c = grid.x(dn);
        for &t in &NODES {
            xs.push(c - 0.5 * h * t);
            xs.push(c + 0.5 * h * t);
        }
    }
    let dens = strong_lo_density(rho, phi, &xs);
    let prob = dens
        .chunks(8)
        .map(|ch| {
            let mut acc = 0.0;
            for (i, w) in WEIGHTS.iter().enumerate() {
                acc += w * (ch[2 * i] + ch[2 * i + 1]);
            }
            0.5 * h * acc
        })
        .collect();
    QuadratureDistribution { grid: *grid, prob }
}
