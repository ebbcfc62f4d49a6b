//! Tomography scenarios and Wigner reconstruction.
//!
//! Four source/LO arrangements are modelled. In the common-source cases the
//! signal and LO share one laser, so only the relative phase matters and the
//! LO phase prior is never consulted. With an independent CW LO a single
//! latent relative phase persists over all `K × M` packets; with an
//! independent PW LO every packet sees a fresh LO phase.
//!
//! Reconstruction is filtered back-projection of the binned quadrature
//! densities with a hard frequency cutoff.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::empirical::{EmpiricalMeasure, IidSampler};
use crate::fock::{fill_diagonal, DensityOperator, FockVector, PhaseRotate, TruncationPolicy};
use crate::homodyne::{BeamSplitterPovm, PovmOptions, QuadratureDistribution, QuadratureFourier, QuadratureGrid};
use crate::phasebayes::{seeded_rng, LikelihoodTable, PhaseDistribution, PosteriorState};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    CommonSourceCW,
    CommonSourcePW,
    IndependentCWLO,
    IndependentPWLO,
}

/// Whether a laser emits one phase-coherent stream (CW) or packets with
/// independent random phases (PW).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    #[default]
    Cw,
    Pw,
}

/// Operation applied to the coherent packet `|β⟩` to form the signal `ρ(0)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Operation {
    #[default]
    Identity,
    /// `S(r)|β⟩`.
    Squeeze { r: f64 },
    /// `|β + γ⟩`.
    Displace { re: f64, im: f64 },
    /// Replaces the packet by `|n⟩`.
    NumberState { n: usize },
}

impl Operation {
    /// `ℰ(|β⟩⟨β|)` for a real packet amplitude `beta`.
    pub fn apply(&self, beta: f64, policy: &TruncationPolicy) -> Result<DensityOperator> {
        let b = C64::new(beta, 0.0);
        Ok(match self {
            Operation::Identity => DensityOperator::coherent(b, policy)?,
            Operation::Squeeze { r } => FockVector::squeezed_coherent(*r, beta, policy)?.to_density(),
            Operation::Displace { re, im } => DensityOperator::coherent(b + C64::new(*re, *im), policy)?,
            Operation::NumberState { n } => DensityOperator::number(*n, policy.rule_cutoff(*n as f64).max(*n))?,
        })
    }
}

/// Tabulated phase prior.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorSpec {
    #[default]
    Uniform,
    VonMises { mu: f64, kappa: f64 },
    /// All mass on the grid point nearest `phi`.
    Delta { phi: f64 },
    /// Explicit weights, one per grid point.
    Table { weights: Vec<f64> },
}

impl PriorSpec {
    pub fn to_distribution(&self, points: usize) -> Result<PhaseDistribution> {
        match self {
            PriorSpec::Uniform => PhaseDistribution::uniform(points),
            PriorSpec::VonMises { mu, kappa } => PhaseDistribution::von_mises(points, *mu, *kappa),
            PriorSpec::Delta { phi } => {
                let i = (crate::special::wrap_tau(*phi) / TAU * points as f64).round() as usize % points.max(1);
                PhaseDistribution::delta(points, i)
            }
            PriorSpec::Table { weights } => {
                if weights.len() != points {
                    return Err(Error::GridMismatch(format!(
                        "prior table has {} entries, grid {}",
                        weights.len(),
                        points
                    )));
                }
                PhaseDistribution::from_weights(weights)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            PriorSpec::Uniform => "uniform".into(),
            PriorSpec::VonMises { mu, kappa } => format!("von_mises(mu={mu},kappa={kappa})"),
            PriorSpec::Delta { phi } => format!("delta({phi})"),
            PriorSpec::Table { .. } => "table".into(),
        }
    }
}

/// How the independent PW LO samples its per-packet phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PwSampling {
    /// Draw a grid phase per packet, then the outcome at that phase.
    #[default]
    FreshPhase,
    /// Draw i.i.d. from the precomputed phase-averaged distribution.
    Averaged,
}

fn default_alpha() -> f64 {
    10.0
}
fn default_k() -> usize {
    12
}
fn default_points() -> usize {
    720
}
fn default_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub operation: Operation,
    /// Emission type of the signal laser in the independent-LO cases.
    #[serde(default)]
    pub signal_source: SourceKind,
    #[serde(default)]
    pub lo_prior: PriorSpec,
    #[serde(default)]
    pub signal_prior: PriorSpec,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Defaults to `θ_k = kπ/K`.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_points")]
    pub phase_points: usize,
    #[serde(default = "default_tol")]
    pub cutoff_tolerance: f64,
    #[serde(default)]
    pub pw_sampling: PwSampling,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, beta: f64, m: usize, seed: u64) -> Self {
        Self {
            kind,
            alpha: default_alpha(),
            beta,
            operation: Operation::Identity,
            signal_source: SourceKind::Cw,
            lo_prior: PriorSpec::Uniform,
            signal_prior: PriorSpec::Uniform,
            k: default_k(),
            theta: None,
            m,
            seed,
            phase_points: default_points(),
            cutoff_tolerance: default_tol(),
            pw_sampling: PwSampling::FreshPhase,
        }
    }

    pub fn thetas(&self) -> Vec<f64> {
        match &self.theta {
            Some(t) => t.clone(),
            None => (0..self.k).map(|i| i as f64 * PI / self.k as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be ≥ 1".into()));
        }
        let th = self.thetas();
        if th.len() != self.k {
            return Err(Error::InvalidParameter(format!("{} phases given for K = {}", th.len(), self.k)));
        }
        if th.iter().any(|t| !(0.0..PI).contains(t)) {
            return Err(Error::InvalidParameter("every θ_k must lie in [0, π)".into()));
        }
        let mut s = th.clone();
        s.sort_by(f64::total_cmp);
        if s.windows(2).any(|w| w[1] - w[0] < 1e-12) {
            return Err(Error::InvalidParameter("θ_k must be distinct".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter("alpha must be > 0 and beta finite".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidParameter("M must be ≥ 1".into()));
        }
        if self.phase_points < 2 {
            return Err(Error::InvalidParameter("phase grid needs ≥ 2 points".into()));
        }
        self.lo_prior.to_distribution(self.phase_points)?;
        self.signal_prior.to_distribution(self.phase_points)?;
        TruncationPolicy::new(self.cutoff_tolerance, 400)?;
        Ok(())
    }

    pub fn policy(&self) -> Result<TruncationPolicy> {
        TruncationPolicy::new(self.cutoff_tolerance, 400)
    }

    /// The signal packet `ρ(0)` at zero source phase.
    pub fn signal_state(&self) -> Result<DensityOperator> {
        self.operation.apply(self.beta, &self.policy()?)
    }

    /// `ρ_mix = Σ_j P_S(φ_j) U_{φ_j} ρ(0) U_{φ_j}†`.
    pub fn mixed_signal_state(&self) -> Result<DensityOperator> {
        let ps = self.signal_prior.to_distribution(self.phase_points)?;
        self.signal_state()?.phase_mixture(&ps.phases(), &ps.weights())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Signal state with its POVM-derived phase harmonics for one LO amplitude.
#[derive(Clone, Debug)]
pub struct SignalModel {
    pub alpha: f64,
    pub rho: DensityOperator,
    pub fourier: QuadratureFourier,
}

impl SignalModel {
    pub fn new(rho: DensityOperator, alpha: f64) -> Result<Self> {
        Self::with_options(rho, alpha, &PovmOptions::default())
    }

    pub fn with_options(rho: DensityOperator, alpha: f64, opts: &PovmOptions) -> Result<Self> {
        let povm = BeamSplitterPovm::build_with(alpha, 0.0, rho.cutoff(), opts)?;
        let fourier = QuadratureFourier::new(&rho, &povm)?;
        Ok(Self { alpha, rho, fourier })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        self.fourier.grid()
    }

    /// `q_θ(Δn)[ρ]`.
    pub fn distribution(&self, theta: f64) -> QuadratureDistribution {
        self.fourier.at(theta)
    }

    /// Exact (noise-free) projections at the given phases.
    pub fn projections(&self, thetas: &[f64]) -> Projections {
        Projections {
            grid: *self.grid(),
            thetas: thetas.to_vec(),
            probs: thetas.iter().map(|&t| self.distribution(t).prob().to_vec()).collect(),
        }
    }
}

/// Per-phase outcome records of one scenario run.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureDataset {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub grid: QuadratureGrid,
    pub thetas: Vec<f64>,
    pub outcomes: Vec<Vec<i64>>,
    pub measures: Vec<EmpiricalMeasure>,
}

impl QuadratureDataset {
    fn from_blocks(kind: ScenarioKind, seed: u64, grid: QuadratureGrid, thetas: Vec<f64>, outcomes: Vec<Vec<i64>>) -> Result<Self> {
        let measures = outcomes
            .iter()
            .map(|o| EmpiricalMeasure::from_outcomes(o, &grid))
            .collect::<Result<_>>()?;
        Ok(Self {
            kind,
            seed,
            grid,
            thetas,
            outcomes,
            measures,
        })
    }

    pub fn pooled_outcomes(&self) -> Vec<i64> {
        self.outcomes.concat()
    }

    pub fn projections(&self) -> Projections {
        Projections {
            grid: self.grid,
            thetas: self.thetas.clone(),
            probs: self.measures.iter().map(|m| m.frequencies()).collect(),
        }
    }

    /// One CSV per phase, `{prefix}_theta{k}.csv`, columns `dn,x,count,density`.
    pub fn write_csv(&self, dir: &Path, prefix: &str) -> Result<()> {
        for (k, (theta, m)) in self.thetas.iter().zip(&self.measures).enumerate() {
            let path = dir.join(format!("{prefix}_theta{k:02}.csv"));
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            writeln!(f, "# kind={:?} seed={} theta={:.15} m={}", self.kind, self.seed, theta, m.total())?;
            writeln!(f, "dn,x,count,density")?;
            let dens = m.density();
            for (b, (&c, d)) in m.counts().iter().zip(dens).enumerate() {
                let dn = self.grid.dn_at(b);
                writeln!(f, "{},{:.12e},{},{:.12e}", dn, self.grid.x(dn), c, d)?;
            }
            f.flush()?;
        }
        Ok(())
    }
}

/// `P̄_S(φ) = Σ_j P_S(φ_j) P(φ + φ_j)` on the common grid.
pub fn convolve_phase(ps: &PhaseDistribution, p: &PhaseDistribution) -> Result<PhaseDistribution> {
    let n = ps.len();
    if p.len() != n {
        return Err(Error::GridMismatch(format!("P_S has {n} points, P has {}", p.len())));
    }
    let a = ps.weights();
    let b = p.weights();
    let out: Vec<f64> = (0..n)
        .map(|i| a.iter().enumerate().map(|(j, w)| w * b[(i + j) % n]).sum())
        .collect();
    PhaseDistribution::from_weights(&out)
}

/// Draws a grid index from a phase distribution.
fn draw_index<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let target = rng.gen::<f64>() * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= 0.0 || c < target).min(cum.len() - 1)
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// Common-source sampling: outcomes at `θ_k` are i.i.d. from `q_{θ_k}[ρ(0)]`.
/// No LO phase prior enters this function.
pub fn sample_common_source(
    model: &SignalModel,
    thetas: &[f64],
    m: usize,
    seed: u64,
    kind: ScenarioKind,
) -> Result<QuadratureDataset> {
    let mut rng = seeded_rng(seed);
    let outcomes = thetas
        .iter()
        .map(|&t| IidSampler::new(&model.distribution(t)).draw_many(m, &mut rng))
        .collect();
    QuadratureDataset::from_blocks(kind, seed, *model.grid(), thetas.to_vec(), outcomes)
}

/// Independent CW LO: one latent relative phase with prior `prior`, shared
/// by all blocks. Block `k` uses `q_{φ+θ_k}`.
pub fn sample_independent_cw(
    model: &SignalModel,
    prior: &PhaseDistribution,
    thetas: &[f64],
    m: usize,
    seed: u64,
) -> Result<QuadratureDataset> {
    let mut rng = seeded_rng(seed);
    let mut state = PosteriorState::new(prior);
    let mut outcomes = Vec::with_capacity(thetas.len());
    for &t in thetas {
        let table = LikelihoodTable::build(&model.fourier, prior.len(), t)?;
        let mut block = Vec::with_capacity(m);
        for _ in 0..m {
            block.push(state.step(&table, &mut rng)?.0);
        }
        outcomes.push(block);
    }
    QuadratureDataset::from_blocks(ScenarioKind::IndependentCWLO, seed, *model.grid(), thetas.to_vec(), outcomes)
}

/// Independent PW LO: a single latent signal phase `φ′ ~ P_S`, then every
/// packet sees an independent LO phase `φ ~ P`.
pub fn sample_independent_pw(
    model: &SignalModel,
    lo_prior: &PhaseDistribution,
    signal_prior: &PhaseDistribution,
    thetas: &[f64],
    m: usize,
    seed: u64,
    how: PwSampling,
) -> Result<QuadratureDataset> {
    let j = lo_prior.len();
    if signal_prior.len() != j {
        return Err(Error::GridMismatch("LO and signal priors use different grids".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut outcomes = Vec::with_capacity(thetas.len());
    if model.fourier.is_phase_independent() {
        // Nothing depends on either phase; share the CW-LO draw sequence.
        let mut state = PosteriorState::new(lo_prior);
        for &t in thetas {
            let table = LikelihoodTable::build(&model.fourier, j, t)?;
            outcomes.push((0..m).map(|_| state.step(&table, &mut rng).map(|s| s.0)).collect::<Result<Vec<_>>>()?);
        }
        return QuadratureDataset::from_blocks(ScenarioKind::IndependentPWLO, seed, *model.grid(), thetas.to_vec(), outcomes);
    }
    let lo_cum = cumulative(&lo_prior.weights());
    let shift = draw_index(&cumulative(&signal_prior.weights()), &mut rng);
    for &t in thetas {
        let table = LikelihoodTable::build(&model.fourier, j, t)?;
        // q_{φ+θ}[U_{φ′} ρ U_{φ′}†] = q_{φ−φ′+θ}[ρ]
        let row_for = |i: usize| (i + j - shift) % j;
        let block = match how {
            PwSampling::FreshPhase => {
                let samplers: Vec<Option<IidSampler>> = vec![None; j];
                let mut samplers = samplers;
                let mut block = Vec::with_capacity(m);
                for _ in 0..m {
                    let i = row_for(draw_index(&lo_cum, &mut rng));
                    let s = samplers[i].get_or_insert_with(|| IidSampler::new(&table.distribution_at(i)));
                    block.push(s.draw(&mut rng));
                }
                block
            }
            PwSampling::Averaged => {
                let w = lo_prior.weights();
                let mut avg = vec![0.0; table.grid().len()];
                for (i, wi) in w.iter().enumerate() {
                    if *wi == 0.0 {
                        continue;
                    }
                    for (a, q) in avg.iter_mut().zip(table.row(row_for(i))) {
                        *a += wi * q;
                    }
                }
                let dist = QuadratureDistribution::from_parts(*table.grid(), avg)?;
                IidSampler::new(&dist).draw_many(m, &mut rng)
            }
        };
        outcomes.push(block);
    }
    QuadratureDataset::from_blocks(ScenarioKind::IndependentPWLO, seed, *model.grid(), thetas.to_vec(), outcomes)
}

/// Per-packet signal state for the independent-LO cases.
pub fn packet_state(s: &Scenario) -> Result<DensityOperator> {
    match s.signal_source {
        SourceKind::Cw => s.signal_state(),
        SourceKind::Pw => s.mixed_signal_state(),
    }
}

/// Builds the signal model a scenario samples from.
pub fn scenario_model(s: &Scenario) -> Result<SignalModel> {
    let rho = match s.kind {
        ScenarioKind::CommonSourceCW | ScenarioKind::CommonSourcePW => s.signal_state()?,
        _ => packet_state(s)?,
    };
    SignalModel::new(rho, s.alpha)
}

pub fn run_scenario(s: &Scenario) -> Result<QuadratureDataset> {
    s.validate()?;
    let model = scenario_model(s)?;
    run_scenario_with_model(s, &model)
}

/// As [`run_scenario`] with a prebuilt model (from [`scenario_model`]).
pub fn run_scenario_with_model(s: &Scenario, model: &SignalModel) -> Result<QuadratureDataset> {
    s.validate()?;
    let thetas = s.thetas();
    let j = s.phase_points;
    match s.kind {
        ScenarioKind::CommonSourceCW | ScenarioKind::CommonSourcePW => {
            sample_common_source(model, &thetas, s.m, s.seed, s.kind)
        }
        ScenarioKind::IndependentCWLO => {
            let p = s.lo_prior.to_distribution(j)?;
            let prior = match s.signal_source {
                SourceKind::Cw => convolve_phase(&s.signal_prior.to_distribution(j)?, &p)?,
                // each packet carries its own phase, already averaged into ρ_mix
                SourceKind::Pw => p,
            };
            sample_independent_cw(model, &prior, &thetas, s.m, s.seed)
        }
        ScenarioKind::IndependentPWLO => {
            let ps = match s.signal_source {
                SourceKind::Cw => s.signal_prior.to_distribution(j)?,
                SourceKind::Pw => PhaseDistribution::delta(j, 0)?,
            };
            sample_independent_pw(model, &s.lo_prior.to_distribution(j)?, &ps, &thetas, s.m, s.seed, s.pw_sampling)
        }
    }
}

/// Binned quadrature probabilities at a set of phases.
#[derive(Clone, Debug, PartialEq)]
pub struct Projections {
    pub grid: QuadratureGrid,
    pub thetas: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

impl Projections {
    /// `mean_θ ⟨x_θ²⟩ − 1/2`, an estimate of `⟨n⟩`.
    pub fn mean_photon_estimate(&self) -> f64 {
        let xs = self.grid.xs();
        let s: f64 = self
            .probs
            .iter()
            .map(|p| {
                let z: f64 = p.iter().sum();
                p.iter().zip(&xs).map(|(q, x)| q * x * x).sum::<f64>() / z
            })
            .sum();
        (s / self.probs.len() as f64 - 0.5).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionOptions {
    /// Grid points per axis. Raised when needed so the spacing resolves `k_c`.
    pub points: usize,
    /// Half-width of the phase-space window; chosen from the data if unset.
    pub half_width: Option<f64>,
    /// Filter cutoff `k_c`; defaults to `factor · √(2(2n̄+1))`.
    pub cutoff: Option<f64>,
    pub cutoff_factor: f64,
    /// Overrides the data estimate of `n̄`.
    pub mean_photons: Option<f64>,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self {
            points: 121,
            half_width: None,
            cutoff: None,
            cutoff_factor: 3.0,
            mean_photons: None,
        }
    }
}

/// Values `W(x_i, p_j)` on a rectangular grid, stored row by row in `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    /// `values[ip * xs.len() + ix]`
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn square(half_width: f64, points: usize) -> Self {
        let axis: Vec<f64> = (0..points)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (points - 1) as f64)
            .collect();
        Self {
            xs: axis.clone(),
            ps: axis,
            values: vec![0.0; points * points],
        }
    }

    pub fn dx(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    pub fn dp(&self) -> f64 {
        self.ps[1] - self.ps[0]
    }

    pub fn at(&self, ix: usize, ip: usize) -> f64 {
        self.values[ip * self.xs.len() + ix]
    }

    /// `∬ W dx dp` by the trapezoid-free cell sum.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx() * self.dp()
    }

    /// `2π ∬ W²`.
    pub fn purity(&self) -> f64 {
        TAU * self.values.iter().map(|v| v * v).sum::<f64>() * self.dx() * self.dp()
    }

    /// `2π ∬ W W'` on a shared grid.
    pub fn overlap(&self, other: &Self) -> Result<f64> {
        if self.xs != other.xs || self.ps != other.ps {
            return Err(Error::GridMismatch("Wigner grids differ".into()));
        }
        Ok(TAU * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.dx() * self.dp())
    }

    /// Grid point with the largest value, as `(x, p, W)`.
    pub fn argmax(&self) -> (f64, f64, f64) {
        let (i, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
        let nx = self.xs.len();
        (self.xs[i % nx], self.ps[i / nx], v)
    }

    /// Bilinear interpolation, zero outside the grid.
    pub fn interpolate(&self, x: f64, p: f64) -> f64 {
        let (nx, np) = (self.xs.len(), self.ps.len());
        let fx = (x - self.xs[0]) / self.dx();
        let fp = (p - self.ps[0]) / self.dp();
        if fx < 0.0 || fp < 0.0 || fx > (nx - 1) as f64 || fp > (np - 1) as f64 {
            return 0.0;
        }
        let (ix, ip) = ((fx as usize).min(nx - 2), (fp as usize).min(np - 2));
        let (tx, tp) = (fx - ix as f64, fp - ip as f64);
        let v = |i, j| self.at(i, j);
        (1.0 - tx) * (1.0 - tp) * v(ix, ip)
            + tx * (1.0 - tp) * v(ix + 1, ip)
            + (1.0 - tx) * tp * v(ix, ip + 1)
            + tx * tp * v(ix + 1, ip + 1)
    }

    /// Matrix CSV: comment header with bounds and spacing, then one row per
    /// `p` value (ascending), one column per `x` value.
    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for c in comments {
            writeln!(f, "# {c}")?;
        }
        writeln!(
            f,
            "# x_min={} x_max={} dx={} nx={} p_min={} p_max={} dp={} np={}",
            self.xs[0],
            self.xs[self.xs.len() - 1],
            self.dx(),
            self.xs.len(),
            self.ps[0],
            self.ps[self.ps.len() - 1],
            self.dp(),
            self.ps.len()
        )?;
        for row in self.values.chunks(self.xs.len()) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.10e}")).collect();
            writeln!(f, "{}", line.join(","))?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Quadrature weights `Δθ_k` for phases covering the half circle.
fn angular_weights(thetas: &[f64]) -> Result<Vec<f64>> {
    let k = thetas.len();
    if k < 3 {
        return Err(Error::InsufficientCoverage(format!("{k} phases; at least 3 are needed")));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| thetas[a].total_cmp(&thetas[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| thetas[i].rem_euclid(PI)).collect();
    let gap = |i: usize| {
        let next = if i + 1 < k { sorted[i + 1] } else { sorted[0] + PI };
        next - sorted[i]
    };
    let max_gap = (0..k).map(gap).fold(0.0f64, f64::max);
    if max_gap > PI / 2.0 {
        return Err(Error::InsufficientCoverage(format!(
            "largest gap between phases is {max_gap:.3} rad"
        )));
    }
    if k < 8 {
        log::warn!("only {k} phases; reconstruction will show angular streaks");
    }
    let mut w = vec![0.0; k];
    for (pos, &i) in order.iter().enumerate() {
        let prev = gap((pos + k - 1) % k);
        w[i] = 0.5 * (prev + gap(pos));
    }
    Ok(w)
}

/// `∫_0^{v} ... ` antiderivative of the ramp-filter kernel:
/// `H(v) = (1 − cos k_c v)/v`.
#[inline]
fn ramp_antiderivative(v: f64, kc: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        let s = (0.5 * kc * v).sin();
        2.0 * s * s / v
    }
}

pub fn reconstruct_wigner(ds: &QuadratureDataset, opts: &ReconstructionOptions) -> Result<WignerGrid> {
    reconstruct_from_projections(&ds.projections(), opts)
}

/// Filtered back-projection of piecewise-constant binned densities.
pub fn reconstruct_from_projections(proj: &Projections, opts: &ReconstructionOptions) -> Result<WignerGrid> {
    if proj.thetas.len() != proj.probs.len() {
        return Err(Error::GridMismatch("one probability vector per phase required".into()));
    }
    let weights = angular_weights(&proj.thetas)?;
    if opts.points < 3 {
        return Err(Error::InvalidParameter("reconstruction grid needs ≥ 3 points".into()));
    }
    let grid = &proj.grid;
    let xs = grid.xs();
    let dx = grid.spacing();
    let nbar = opts.mean_photons.unwrap_or_else(|| proj.mean_photon_estimate());
    let kc = opts
        .cutoff
        .unwrap_or_else(|| opts.cutoff_factor * (2.0 * (2.0 * nbar + 1.0)).sqrt());
    let half = opts.half_width.unwrap_or_else(|| {
        let mut reach = 0.0f64;
        for p in &proj.probs {
            let z: f64 = p.iter().sum();
            let mean = p.iter().zip(&xs).map(|(q, x)| q * x).sum::<f64>() / z;
            let var = p.iter().zip(&xs).map(|(q, x)| q * (x - mean).powi(2)).sum::<f64>() / z;
            reach = reach.max(mean.abs() + 5.0 * var.sqrt());
        }
        reach.max(4.0)
    });
    // The Riemann sum over the grid is only faithful when the spacing resolves the filter band.
    let resolved = (2.0 * half * kc / PI).ceil() as usize + 1;
    let points = opts.points.max(resolved);
    if points > opts.points {
        log::info!("raising Wigner grid from {} to {points} points per axis", opts.points);
    }
    let mut out = WignerGrid::square(half, points);

    // Filtered projections on a fine u grid, then linear interpolation.
    let u_max = SQRT_2 * half + dx;
    let h = (dx.min(PI / kc)) / 4.0;
    let nu = (2.0 * u_max / h).ceil() as usize + 1;
    let us: Vec<f64> = (0..nu).map(|i| -u_max + i as f64 * h).collect();
    let pref = 1.0 / (2.0 * PI * PI);
    let mut filtered = Vec::with_capacity(proj.thetas.len());
    for p in &proj.probs {
        let z: f64 = p.iter().sum();
        let mut f = vec![0.0; nu];
        for (b, &q) in p.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let g = q / z / dx;
            let xb = xs[b];
            for (fu, &u) in f.iter_mut().zip(&us) {
                *fu += g * (ramp_antiderivative(u - xb + 0.5 * dx, kc) - ramp_antiderivative(u - xb - 0.5 * dx, kc));
            }
        }
        for v in &mut f {
            *v *= pref;
        }
        filtered.push(f);
    }
    let nx = out.xs.len();
    for ip in 0..out.ps.len() {
        let pv = out.ps[ip];
        for ix in 0..nx {
            let xv = out.xs[ix];
            let mut acc = 0.0;
            for ((t, w), f) in proj.thetas.iter().zip(&weights).zip(&filtered) {
                let u = xv * t.cos() + pv * t.sin();
                let s = (u + u_max) / h;
                let i = (s as usize).min(nu - 2);
                let frac = s - i as f64;
                acc += w * (f[i] * (1.0 - frac) + f[i + 1] * frac);
            }
            out.values[ip * nx + ix] = acc;
        }
    }
    Ok(out)
}

/// Contribution of the `d`-th off-diagonal band of `ρ` to its Wigner
/// function, for each `d` (element `[d][point]`). Rotating `ρ` by `ψ`
/// multiplies band `d` by `e^{idψ}`.
fn wigner_bands(rho: &DensityOperator, xs: &[f64], ps: &[f64]) -> Vec<Vec<C64>> {
    let r = rho.matrix();
    let dim = r.nrows();
    let max_band = if rho.is_diagonal() { 0 } else { dim - 1 };
    let npts = xs.len() * ps.len();
    let mut bands = vec![vec![C64::new(0.0, 0.0); npts]; max_band + 1];
    for (ip, &p) in ps.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            let pt = ip * xs.len() + ix;
            let r2 = x * x + p * p;
            let y = 2.0 * r2;
            let ln_g = 0.5 * y.ln();
            let theta = p.atan2(x);
            for (d, band) in bands.iter_mut().enumerate() {
                // W_{|n+d⟩⟨n|} = (−1)^n/π · e^{−idθ} · e^{−y/2} √(n!/(n+d)!) y^{d/2} L_n^{(d)}(y)
                let mut acc = C64::new(0.0, 0.0);
                let phase = C64::from_polar(1.0, -(d as f64) * theta);
                let mut sum = 0.0;
                let mut sum_im = 0.0;
                if y == 0.0 {
                    if d == 0 {
                        for n in 0..dim {
                            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
                            sum += s * r[(n, n)].re;
                        }
                    }
                } else {
                    fill_diagonal(y, ln_g, d, dim - 1 - d, |n, v| {
                        let s = if n % 2 == 0 { v } else { -v };
                        let c = r[(n + d, n)];
                        sum += s * c.re;
                        sum_im += s * c.im;
                    });
                }
                acc += C64::new(sum, sum_im) * phase / PI;
                band[pt] = acc;
            }
        }
    }
    bands
}

/// Wigner function of `rho` on the given axes.
pub fn wigner_reference(rho: &DensityOperator, xs: &[f64], ps: &[f64]) -> WignerGrid {
    let bands = wigner_bands(rho, xs, ps);
    let values = (0..xs.len() * ps.len())
        .map(|pt| {
            bands[0][pt].re + 2.0 * bands[1..].iter().map(|b| b[pt].re).sum::<f64>()
        })
        .collect();
    WignerGrid {
        xs: xs.to_vec(),
        ps: ps.to_vec(),
        values,
    }
}

/// Overlap of `w` with the reference and, when requested, the best value
/// over global rotations of the reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityScore {
    /// `2π ∬ W W_ref`.
    pub overlap: f64,
    /// `overlap / √(purity_W · tr ρ_ref²)`.
    pub normalized: f64,
    /// Rotation applied to the reference.
    pub rotation: f64,
}

/// `2π ∬ W W_ref`, optionally maximized over rotations `U_ψ ρ U_ψ†`.
pub fn state_fidelity(w: &WignerGrid, reference: &DensityOperator, best_rotation: bool) -> Result<f64> {
    Ok(fidelity_score(w, reference, best_rotation)?.overlap)
}

pub fn fidelity_score(w: &WignerGrid, reference: &DensityOperator, best_rotation: bool) -> Result<FidelityScore> {
    let bands = wigner_bands(reference, &w.xs, &w.ps);
    let cell = w.dx() * w.dp();
    let ref_mass: f64 = bands[0].iter().map(|c| c.re).sum::<f64>() * cell;
    if ref_mass < 0.99 {
        return Err(Error::InvalidParameter(format!(
            "reconstruction window holds only {ref_mass:.4} of the reference state"
        )));
    }
    // overlap(ψ) = c_0 + 2 Re Σ_{d≥1} c_d e^{idψ}
    let coeffs: Vec<C64> = bands
        .iter()
        .map(|b| b.iter().zip(&w.values).map(|(c, v)| c * *v).sum::<C64>() * (TAU * cell))
        .collect();
    let at = |psi: f64| -> f64 {
        coeffs[0].re
            + 2.0
                * coeffs[1..]
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c * C64::from_polar(1.0, (i + 1) as f64 * psi)).re)
                    .sum::<f64>()
    };
    let (mut best_psi, mut best) = (0.0, at(0.0));
    if best_rotation && coeffs.len() > 1 {
        let steps = 720;
        for s in 1..steps {
            let psi = TAU * s as f64 / steps as f64;
            let v = at(psi);
            if v > best {
                best = v;
                best_psi = psi;
            }
        }
        // golden-section refinement inside the winning cell
        let (mut a, mut b) = (best_psi - TAU / steps as f64, best_psi + TAU / steps as f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..40 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if at(c) > at(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let mid = 0.5 * (a + b);
        if at(mid) > best {
            best = at(mid);
            best_psi = crate::special::wrap_tau(mid);
        }
    }
    let norm = (w.purity() * reference.purity()).sqrt();
    Ok(FidelityScore {
        overlap: best,
        normalized: if norm > 0.0 { best / norm } else { 0.0 },
        rotation: best_psi,
    })
}

/// Scores `w` against named candidate states by best-rotation normalized
/// overlap, best first.
pub fn classify(w: &WignerGrid, candidates: &[(String, DensityOperator)]) -> Result<Vec<(String, FidelityScore)>> {
    let mut scores = candidates
        .iter()
        .map(|(name, rho)| Ok((name.clone(), fidelity_score(w, rho, true)?)))
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| b.1.normalized.total_cmp(&a.1.normalized));
    Ok(scores)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationParams {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub m: usize,
    pub phase_points: usize,
    pub reconstruction: ReconstructionOptions,
}

impl Default for DiscriminationParams {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: 3f64.sqrt(),
            k: 12,
            m: 5000,
            phase_points: default_points(),
            reconstruction: ReconstructionOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    pub source: SourceKind,
    pub seed: u64,
    /// `"coherent"` or `"mixed"`.
    pub verdict: String,
    pub coherent_score: f64,
    pub mixed_score: f64,
    pub coherent_overlap: f64,
    pub mixed_overlap: f64,
}

/// Tomography with an independent CW LO on a signal laser of the given kind,
/// scored against `|β⟩⟨β|` and the phase-averaged state.
pub fn discriminate_cw_pw(source: SourceKind, params: &DiscriminationParams, seed: u64) -> Result<DiscriminationReport> {
    let mut s = Scenario::new(ScenarioKind::IndependentCWLO, params.beta, params.m, seed);
    s.alpha = params.alpha;
    s.k = params.k;
    s.phase_points = params.phase_points;
    s.signal_source = source;
    let ds = run_scenario(&s)?;
    let w = reconstruct_wigner(&ds, &params.reconstruction)?;
    let policy = s.policy()?;
    let candidates = vec![
        ("coherent".to_string(), DensityOperator::coherent(C64::new(params.beta, 0.0), &policy)?),
        ("mixed".to_string(), DensityOperator::phase_averaged_laser_state(params.beta, &policy)?),
    ];
    let scores = classify(&w, &candidates)?;
    let get = |n: &str| scores.iter().find(|(k, _)| k == n).map(|(_, s)| *s).expect("candidate scored");
    let (c, m) = (get("coherent"), get("mixed"));
    Ok(DiscriminationReport {
        source,
        seed,
        verdict: scores[0].0.clone(),
        coherent_score: c.normalized,
        mixed_score: m.normalized,
        coherent_overlap: c.overlap,
        mixed_overlap: m.overlap,
    })
}

/// Rotation by `ψ` of a reference state, for building fixed-frame references.
pub fn rotated_reference(rho: &DensityOperator, psi: f64) -> DensityOperator {
    rho.phase_rotate(psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> TruncationPolicy {
        TruncationPolicy::default()
    }

    #[test]
    fn coherent_wigner_matches_gaussian() {
        let beta = C64::new(1.2, -0.7);
        let rho = DensityOperator::coherent(beta, &policy()).unwrap();
        let axis: Vec<f64> = (0..21).map(|i| -4.0 + 0.4 * i as f64).collect();
        let w = wigner_reference(&rho, &axis, &axis);
        let (x0, p0) = (SQRT_2 * beta.re, SQRT_2 * beta.im);
        for (ip, &p) in axis.iter().enumerate() {
            for (ix, &x) in axis.iter().enumerate() {
                let exact = (-(x - x0).powi(2) - (p - p0).powi(2)).exp() / PI;
                assert!((w.at(ix, ip) - exact).abs() < 1e-10, "({x},{p})");
            }
        }
    }

    #[test]
    fn number_state_wigner_is_negative_at_origin() {
        let rho = DensityOperator::number(1, 10).unwrap();
        let w = wigner_reference(&rho, &[0.0, 1.0], &[0.0]);
        assert!((w.at(0, 0) + 1.0 / PI).abs() < 1e-12);
        // W_1 = (2r² − 1) e^{−r²} / π
        assert!((w.at(1, 0) - (-1f64).exp() / PI).abs() < 1e-12);
    }

    #[test]
    fn reference_integrates_to_one_and_purity() {
        let rho = FockVector::squeezed_coherent(-0.5, 0.8, &policy()).unwrap().to_density();
        let w = WignerGrid::square(7.0, 141);
        let w = wigner_reference(&rho, &w.xs, &w.ps);
        assert!((w.integral() - 1.0).abs() < 1e-4, "integral {} purity {}", w.integral(), w.purity());
        assert!((w.purity() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn convolution_identities() {
        let j = 64;
        let ps = PhaseDistribution::von_mises(j, 0.7, 3.0).unwrap();
        let u = PhaseDistribution::uniform(j).unwrap();
        let c = convolve_phase(&ps, &u).unwrap();
        for w in c.weights() {
            assert!((w - 1.0 / j as f64).abs() < 1e-15);
        }
        let p = PhaseDistribution::von_mises(j, -1.0, 5.0).unwrap();
        let c = convolve_phase(&PhaseDistribution::delta(j, 0).unwrap(), &p).unwrap();
        for (a, b) in c.weights().iter().zip(p.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(convolve_phase(&ps, &PhaseDistribution::uniform(32).unwrap()).is_err());
    }

    #[test]
    fn angular_weights_cover_half_circle() {
        let th: Vec<f64> = (0..12).map(|k| k as f64 * PI / 12.0).collect();
        let w = angular_weights(&th).unwrap();
        assert!(w.iter().all(|x| (x - PI / 12.0).abs() < 1e-14));
        assert!(angular_weights(&[0.0, 0.1]).is_err());
        assert!(matches!(angular_weights(&[0.0, 0.1, 0.2, 0.3]), Err(Error::InsufficientCoverage(_))));
    }

    #[test]
    fn scenario_validation() {
        let mut s = Scenario::new(ScenarioKind::CommonSourceCW, 1.0, 10, 0);
        assert!(s.validate().is_ok());
        s.theta = Some(vec![0.0; 12]);
        assert!(s.validate().is_err());
        s.theta = None;
        s.k = 0;
        assert!(s.validate().is_err());
        let mut s = Scenario::new(ScenarioKind::CommonSourceCW, 1.0, 10, 0);
        s.k = 2;
        s.theta = Some(vec![0.0, 3.5]);
        assert!(s.validate().is_err());
        let json = Scenario::new(ScenarioKind::IndependentPWLO, 1.0, 5, 3).to_json().unwrap();
        assert_eq!(Scenario::from_json(&json).unwrap().seed, 3);
    }

    #[test]
    fn vacuum_reconstruction_peaks_at_origin() {
        let model = SignalModel::new(DensityOperator::vacuum(20), 10.0).unwrap();
        let th: Vec<f64> = (0..16).map(|k| k as f64 * PI / 16.0).collect();
        let w = reconstruct_from_projections(&model.projections(&th), &ReconstructionOptions::default()).unwrap();
        let (x, p, v) = w.argmax();
        assert!(x.abs() <= w.dx() && p.abs() <= w.dp());
        assert!((v * PI - 1.0).abs() < 0.1, "W(0,0)·π = {}", v * PI);
        assert!((w.integral() - 1.0).abs() < 0.02);
    }
}
