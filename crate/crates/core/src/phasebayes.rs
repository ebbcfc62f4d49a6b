//! Phase posteriors and sequential sampling from the mixture of i.i.d. laws.
//!
//! The latent LO phase lives on a uniform grid `φ_j = 2πj/J`. Outcome `i` is
//! drawn from the predictive law `Σ_j w_j q_{φ_j}(Δn)` where `w` is the
//! posterior after outcomes `1..i−1`; the phase itself is never drawn.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::fock::DensityOperator;
use crate::homodyne::{BeamSplitterPovm, PovmOptions, QuadratureDistribution, QuadratureFourier, QuadratureGrid};
use crate::special::{log_sum_exp, wrap_pi, wrap_tau};
use crate::{Error, Result};

/// Weights more than this many e-folds below the maximum are treated as zero
/// when forming mixtures; their total share is below `J·e^{−40}`.
const PRUNE_LOG: f64 = 40.0;

/// Discretized phase distribution, stored as normalized log weights
/// (`Σ_j exp(log_w_j) = 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDistribution {
    log_w: Vec<f64>,
}

impl PhaseDistribution {
    pub fn uniform(points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidParameter("phase grid needs at least one point".into()));
        }
        Ok(Self {
            log_w: vec![-(points as f64).ln(); points],
        })
    }

    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("phase weights must be finite and ≥ 0".into()));
        }
        Self::from_log_weights(weights.iter().map(|w| w.ln()).collect())
    }

    /// Normalizes arbitrary log weights.
    pub fn from_log_weights(mut log_w: Vec<f64>) -> Result<Self> {
        if log_w.is_empty() || log_w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidParameter("invalid log weights".into()));
        }
        let z = log_sum_exp(&log_w);
        if !z.is_finite() {
            return Err(Error::InvalidParameter("phase weights are all zero".into()));
        }
        for v in &mut log_w {
            *v -= z;
        }
        Ok(Self { log_w })
    }

    /// Unit mass at grid point `index`.
    pub fn delta(points: usize, index: usize) -> Result<Self> {
        let mut w = vec![0.0; points];
        *w.get_mut(index)
            .ok_or_else(|| Error::InvalidParameter(format!("index {index} outside grid of {points}")))? = 1.0;
        Self::from_weights(&w)
    }

    /// Tabulated von Mises density `∝ exp(κ cos(φ − μ))`.
    pub fn von_mises(points: usize, mu: f64, kappa: f64) -> Result<Self> {
        let lw = (0..points)
            .map(|j| kappa * (TAU * j as f64 / points as f64 - mu).cos())
            .collect();
        Self::from_log_weights(lw)
    }

    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.len() as f64
    }

    pub fn phase(&self, index: usize) -> f64 {
        TAU * index as f64 / self.len() as f64
    }

    pub fn phases(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.phase(j)).collect()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_w
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|v| v.exp()).collect()
    }

    /// Value of the density with respect to `dφ/2π` (uniform ≡ 1).
    pub fn density(&self) -> Vec<f64> {
        let j = self.len() as f64;
        self.log_w.iter().map(|v| v.exp() * j).collect()
    }

    /// `|Σ w − 1|`.
    pub fn normalization_defect(&self) -> f64 {
        (self.weights().iter().sum::<f64>() - 1.0).abs()
    }

    /// Distribution of `φ + steps·Δφ`: `new[i] = old[i − steps]`.
    pub fn shifted(&self, steps: isize) -> Self {
        let n = self.len() as isize;
        let log_w = (0..n)
            .map(|i| self.log_w[(i - steps).rem_euclid(n) as usize])
            .collect();
        Self { log_w }
    }

    /// Resultant `Σ w_j e^{iφ_j}` as (length, angle in `[0, 2π)`).
    pub fn resultant(&self) -> (f64, f64) {
        let (mut c, mut s) = (0.0, 0.0);
        for (j, lw) in self.log_w.iter().enumerate() {
            let w = lw.exp();
            let p = self.phase(j);
            c += w * p.cos();
            s += w * p.sin();
        }
        (c.hypot(s), wrap_tau(s.atan2(c)))
    }

    pub fn circular_mean(&self) -> f64 {
        self.resultant().1
    }

    /// `√(−2 ln R)`.
    pub fn circular_std(&self) -> f64 {
        let r = self.resultant().0.min(1.0);
        (-2.0 * r.ln()).max(0.0).sqrt()
    }

    /// Standard deviation of the distance `|φ − axis|` (wrapped), i.e. the
    /// width after folding the distribution onto one side of the axis.
    pub fn folded_std(&self, axis: f64) -> f64 {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (j, lw) in self.log_w.iter().enumerate() {
            let w = lw.exp();
            let d = wrap_pi(self.phase(j) - axis).abs();
            m1 += w * d;
            m2 += w * d * d;
        }
        (m2 - m1 * m1).max(0.0).sqrt()
    }

    /// Local maxima with weight ≥ `rel_threshold · max`, refined by a
    /// parabola through the neighbouring log weights.
    pub fn modes(&self, rel_threshold: f64) -> Vec<f64> {
        let n = self.len();
        let max = self.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = max + rel_threshold.ln();
        let mut out = Vec::new();
        if n == 1 {
            return vec![0.0];
        }
        for j in 0..n {
            let l0 = self.log_w[j];
            let lm = self.log_w[(j + n - 1) % n];
            let lp = self.log_w[(j + 1) % n];
            if l0 < floor || !(l0 > lm && l0 >= lp) {
                continue;
            }
            let mut offset = 0.0;
            if lm.is_finite() && lp.is_finite() {
                let denom = lm - 2.0 * l0 + lp;
                if denom < 0.0 {
                    offset = (0.5 * (lm - lp) / denom).clamp(-0.5, 0.5);
                }
            }
            out.push(wrap_tau((j as f64 + offset) * self.spacing()));
        }
        out
    }

    /// Total-variation distance to the reflection `φ → 2·axis − φ`, with the
    /// axis snapped to the half-grid.
    pub fn reflection_asymmetry(&self, axis: f64) -> f64 {
        let n = self.len() as i64;
        let twice = (2.0 * wrap_tau(axis) / self.spacing()).round() as i64;
        let w = self.weights();
        0.5 * (0..n)
            .map(|j| (w[j as usize] - w[(twice - j).rem_euclid(n) as usize]).abs())
            .sum::<f64>()
    }
}

/// Precomputed `q_{φ_j + offset}(Δn)` for every grid phase.
#[derive(Clone, Debug)]
pub struct LikelihoodTable {
    grid: QuadratureGrid,
    phases: usize,
    offset: f64,
    /// `prob[j * bins + b]`
    prob: Vec<f64>,
    /// `log_by_bin[b * phases + j]`
    log_by_bin: Vec<f64>,
    phase_independent: bool,
}

impl LikelihoodTable {
    /// Row `j` holds `q_{2πj/J + offset}`.
    pub fn build(fourier: &QuadratureFourier, phases: usize, offset: f64) -> Result<Self> {
        if phases == 0 {
            return Err(Error::InvalidParameter("likelihood table needs ≥ 1 phase".into()));
        }
        let grid = *fourier.grid();
        let bins = grid.len();
        let mut prob = vec![0.0; phases * bins];
        let phase_independent = fourier.is_phase_independent();
        for j in 0..phases {
            let phi = TAU * j as f64 / phases as f64 + offset;
            let row = &mut prob[j * bins..(j + 1) * bins];
            if phase_independent && j > 0 {
                let (first, rest) = prob.split_at_mut(bins);
                rest[(j - 1) * bins..j * bins].copy_from_slice(first);
            } else {
                fourier.fill_at(phi, row);
            }
        }
        let mut log_by_bin = vec![0.0; phases * bins];
        for j in 0..phases {
            for b in 0..bins {
                log_by_bin[b * phases + j] = prob[j * bins + b].ln();
            }
        }
        Ok(Self {
            grid,
            phases,
            offset,
            prob,
            log_by_bin,
            phase_independent,
        })
    }

    /// Builds the POVM at LO phase 0 for the signal's cutoff and tabulates.
    pub fn from_signal(rho: &DensityOperator, alpha: f64, phases: usize, opts: &PovmOptions) -> Result<Self> {
        let povm = BeamSplitterPovm::build_with(alpha, 0.0, rho.cutoff(), opts)?;
        let fourier = QuadratureFourier::new(rho, &povm)?;
        Self::build(&fourier, phases, 0.0)
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn is_phase_independent(&self) -> bool {
        self.phase_independent
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let b = self.grid.len();
        &self.prob[j * b..(j + 1) * b]
    }

    pub fn distribution_at(&self, j: usize) -> QuadratureDistribution {
        QuadratureDistribution::from_parts(self.grid, self.row(j).to_vec()).expect("row matches grid")
    }

    /// `q_{φ_j}(Δn)` for every `j`.
    pub fn likelihood(&self, dn: i64) -> Option<Vec<f64>> {
        self.log_likelihood(dn).map(|l| l.iter().map(|v| v.exp()).collect())
    }

    pub fn log_likelihood(&self, dn: i64) -> Option<&[f64]> {
        self.grid
            .index_of(dn)
            .map(|b| &self.log_by_bin[b * self.phases..(b + 1) * self.phases])
    }
}

/// Bayesian rule: `posterior ∝ prior · likelihood`.
pub fn bayes_update(prior: &PhaseDistribution, likelihood: &[f64]) -> Result<PhaseDistribution> {
    if likelihood.len() != prior.len() {
        return Err(Error::GridMismatch(format!(
            "likelihood has {} points, prior {}",
            likelihood.len(),
            prior.len()
        )));
    }
    if likelihood.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidParameter("likelihood values must be ≥ 0".into()));
    }
    let lw: Vec<f64> = prior
        .log_w
        .iter()
        .zip(likelihood)
        .map(|(p, l)| p + l.ln())
        .collect();
    if lw.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::InvalidParameter(
            "likelihood vanishes wherever the prior has support".into(),
        ));
    }
    PhaseDistribution::from_log_weights(lw)
}

/// Running posterior used by the sequential samplers.
#[derive(Clone, Debug)]
pub struct PosteriorState {
    log_w: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    scratch_w: Vec<f64>,
    scratch_p: Vec<f64>,
}

impl PosteriorState {
    pub fn new(prior: &PhaseDistribution) -> Self {
        let n = prior.len();
        let phases: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
        Self {
            log_w: prior.log_w.clone(),
            cos: phases.iter().map(|p| p.cos()).collect(),
            sin: phases.iter().map(|p| p.sin()).collect(),
            scratch_w: vec![0.0; n],
            scratch_p: Vec::new(),
        }
    }

    pub fn distribution(&self) -> PhaseDistribution {
        PhaseDistribution {
            log_w: self.log_w.clone(),
        }
    }

    fn max_log(&self) -> f64 {
        self.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Predictive probabilities `Σ_j w_j q_j(Δn)` for every bin, left in
    /// `scratch_p`.
    fn predictive(&mut self, table: &LikelihoodTable) {
        let bins = table.grid.len();
        self.scratch_p.clear();
        if table.phase_independent {
            self.scratch_p.extend_from_slice(table.row(0));
            return;
        }
        self.scratch_p.resize(bins, 0.0);
        let max = self.max_log();
        let mut z = 0.0;
        for (j, lw) in self.log_w.iter().enumerate() {
            let d = lw - max;
            if d < -PRUNE_LOG {
                self.scratch_w[j] = 0.0;
                continue;
            }
            let w = d.exp();
            self.scratch_w[j] = w;
            z += w;
        }
        for (j, &w) in self.scratch_w.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = table.row(j);
            for (p, q) in self.scratch_p.iter_mut().zip(row) {
                *p += w * q;
            }
        }
        let inv = 1.0 / z;
        for p in &mut self.scratch_p {
            *p *= inv;
        }
    }

    /// Multiplies in `q_j(Δn)` and renormalizes.
    fn update(&mut self, table: &LikelihoodTable, dn: i64) -> Result<()> {
        let ll = table.log_likelihood(dn).ok_or(Error::OutsideSupport(dn))?;
        if !table.phase_independent {
            for (lw, l) in self.log_w.iter_mut().zip(ll) {
                *lw += l;
            }
        }
        let max = self.max_log();
        if !max.is_finite() {
            return Err(Error::OutsideSupport(dn));
        }
        let z: f64 = self
            .log_w
            .iter()
            .filter(|v| **v - max >= -PRUNE_LOG)
            .map(|v| (v - max).exp())
            .sum();
        let shift = max + z.ln();
        for lw in &mut self.log_w {
            *lw -= shift;
        }
        Ok(())
    }

    /// Draws the next outcome from the predictive law and conditions on it.
    /// Returns `(Δn, ln p(Δn | past))`.
    pub fn step<R: Rng + ?Sized>(&mut self, table: &LikelihoodTable, rng: &mut R) -> Result<(i64, f64)> {
        self.check_table(table)?;
        self.predictive(table);
        let total: f64 = self.scratch_p.iter().sum();
        let target = rng.gen::<f64>() * total;
        let mut cum = 0.0;
        let mut chosen = None;
        let mut last_positive = None;
        for (b, &p) in self.scratch_p.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            last_positive = Some(b);
            cum += p;
            // On an exact boundary the lower bin wins.
            if cum >= target {
                chosen = Some(b);
                break;
            }
        }
        let b = chosen
            .or(last_positive)
            .ok_or_else(|| Error::Tolerance("predictive distribution has no mass".into()))?;
        let log_pred = self.scratch_p[b].ln();
        let dn = table.grid.dn_at(b);
        self.update(table, dn)?;
        Ok((dn, log_pred))
    }

    /// Conditions on a given outcome; returns `ln p(Δn | past)`.
    pub fn observe(&mut self, table: &LikelihoodTable, dn: i64) -> Result<f64> {
        self.check_table(table)?;
        let b = table.grid.index_of(dn).ok_or(Error::OutsideSupport(dn))?;
        self.predictive(table);
        let lp = self.scratch_p[b].ln();
        self.update(table, dn)?;
        Ok(lp)
    }

    fn check_table(&self, table: &LikelihoodTable) -> Result<()> {
        if table.phases != self.log_w.len() {
            return Err(Error::GridMismatch(format!(
                "table has {} phases, posterior {}",
                table.phases,
                self.log_w.len()
            )));
        }
        Ok(())
    }

    /// Circular mean, circular std and reflection-folded std about 0, all
    /// over the non-negligible weights.
    pub fn summary(&self) -> TraceRow {
        let max = self.max_log();
        let (mut c, mut s, mut z) = (0.0, 0.0, 0.0);
        let (mut f1, mut f2) = (0.0, 0.0);
        let n = self.log_w.len();
        for j in 0..n {
            let d = self.log_w[j] - max;
            if d < -PRUNE_LOG {
                continue;
            }
            let w = d.exp();
            z += w;
            c += w * self.cos[j];
            s += w * self.sin[j];
            let phi = TAU * j as f64 / n as f64;
            let fold = phi.min(TAU - phi);
            f1 += w * fold;
            f2 += w * fold * fold;
        }
        let (c, s, f1, f2) = (c / z, s / z, f1 / z, f2 / z);
        let r = c.hypot(s).min(1.0);
        TraceRow {
            step: 0,
            circ_mean: wrap_tau(s.atan2(c)),
            circ_std: (-2.0 * r.ln()).max(0.0).sqrt(),
            folded_std: (f2 - f1 * f1).max(0.0).sqrt(),
        }
    }
}

/// One detection sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub seed: u64,
    pub alpha: f64,
    pub signal: String,
    pub prior: String,
    pub outcomes: Vec<i64>,
}

impl DetectionRecord {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// `x_i = Δn_i / (√2 α)`.
    pub fn x_values(&self) -> Vec<f64> {
        let s = 1.0 / (std::f64::consts::SQRT_2 * self.alpha);
        self.outcomes.iter().map(|&d| d as f64 * s).collect()
    }

    pub fn mean_x(&self) -> f64 {
        let xs = self.x_values();
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub circ_mean: f64,
    pub circ_std: f64,
    /// Width after folding about φ = 0 (the reflection axis of real signals).
    pub folded_std: f64,
}

/// Per-step posterior diagnostics of one run.
#[derive(Clone, Debug)]
pub struct PosteriorTrace {
    /// Row 0 describes the prior; row `i` the posterior after `i` outcomes.
    pub rows: Vec<TraceRow>,
    /// `ln p(x_i | x_1..x_{i−1})` of each drawn outcome.
    pub log_predictive: Vec<f64>,
    pub snapshots: Vec<(usize, PhaseDistribution)>,
    pub final_posterior: PhaseDistribution,
}

impl PosteriorTrace {
    pub fn row_at(&self, step: usize) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.step == step)
    }

    /// `Σ_i ln p(x_i | past)`.
    pub fn log_likelihood(&self) -> f64 {
        self.log_predictive.iter().sum()
    }

    /// CSV with columns `step,circ_mean,circ_std`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "circ_mean", "circ_std"])?;
        for r in &self.rows {
            w.write_record(&[
                r.step.to_string(),
                format!("{:.12e}", r.circ_mean),
                format!("{:.12e}", r.circ_std),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SampleOptions {
    /// Steps at which the full posterior is stored.
    pub snapshot_steps: Vec<usize>,
    /// Record a trace row every `trace_every` steps (0 → every step).
    pub trace_every: usize,
    pub signal_label: String,
    pub prior_label: String,
}

/// Deterministic RNG for a seed.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Runs `m` sequential detections against a precomputed table.
pub fn sample_with_table(
    table: &LikelihoodTable,
    prior: &PhaseDistribution,
    m: usize,
    seed: u64,
    opts: &SampleOptions,
) -> Result<(DetectionRecord, PosteriorTrace)> {
    if m == 0 {
        return Err(Error::InvalidParameter("M must be ≥ 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut state = PosteriorState::new(prior);
    let every = opts.trace_every.max(1);
    let mut rows = vec![state.summary()];
    let mut snapshots = Vec::new();
    if opts.snapshot_steps.contains(&0) {
        snapshots.push((0, state.distribution()));
    }
    let mut outcomes = Vec::with_capacity(m);
    let mut log_predictive = Vec::with_capacity(m);
    for i in 1..=m {
        let (dn, lp) = state.step(table, &mut rng)?;
        outcomes.push(dn);
        log_predictive.push(lp);
        if i % every == 0 || i == m {
            let mut row = state.summary();
            row.step = i;
            rows.push(row);
        }
        if opts.snapshot_steps.contains(&i) {
            snapshots.push((i, state.distribution()));
        }
    }
    let record = DetectionRecord {
        seed,
        alpha: table.grid.alpha(),
        signal: opts.signal_label.clone(),
        prior: opts.prior_label.clone(),
        outcomes,
    };
    let trace = PosteriorTrace {
        rows,
        log_predictive,
        snapshots,
        final_posterior: state.distribution(),
    };
    Ok((record, trace))
}

/// Builds the likelihood table for `(signal, alpha)` on the prior's grid and
/// samples `m` outcomes.
pub fn sample_sequence(
    signal: &DensityOperator,
    alpha: f64,
    prior: &PhaseDistribution,
    m: usize,
    seed: u64,
) -> Result<(DetectionRecord, PosteriorTrace)> {
    let table = LikelihoodTable::from_signal(signal, alpha, prior.len(), &PovmOptions::default())?;
    sample_with_table(&table, prior, m, seed, &SampleOptions::default())
}

/// `ln Σ_j w_j Π_i q_{φ_j}(x_i)` for a record of `signal` measured with LO
/// amplitude `alpha`.
pub fn joint_log_probability(
    record: &DetectionRecord,
    prior: &PhaseDistribution,
    signal: &DensityOperator,
    alpha: f64,
) -> Result<f64> {
    let table = LikelihoodTable::from_signal(signal, alpha, prior.len(), &PovmOptions::default())?;
    joint_log_probability_with_table(record, prior, &table)
}

/// Same as [`joint_log_probability`] against a precomputed table,
/// accumulated in the log domain.
pub fn joint_log_probability_with_table(
    record: &DetectionRecord,
    prior: &PhaseDistribution,
    table: &LikelihoodTable,
) -> Result<f64> {
    if prior.len() != table.phases {
        return Err(Error::GridMismatch("prior and table grids differ".into()));
    }
    let mut acc = prior.log_w.clone();
    for &dn in &record.outcomes {
        let ll = table.log_likelihood(dn).ok_or(Error::OutsideSupport(dn))?;
        for (a, l) in acc.iter_mut().zip(ll) {
            *a += l;
        }
    }
    Ok(log_sum_exp(&acc))
}

/// Posterior modes and width at the end of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub phi_modes: Vec<f64>,
    pub width: f64,
    /// Reflection axis when the width was folded over a symmetric mode pair.
    pub fold_axis: Option<f64>,
}

impl Localization {
    /// Mode closest (circularly) to `phi`.
    pub fn nearest_mode(&self, phi: f64) -> Option<f64> {
        self.phi_modes
            .iter()
            .copied()
            .min_by(|a, b| wrap_pi(a - phi).abs().total_cmp(&wrap_pi(b - phi).abs()))
    }
}

pub fn localization_summary(trace: &PosteriorTrace) -> Localization {
    localize(&trace.final_posterior)
}

/// Modes above half the maximum; if exactly two exist and the posterior is
/// mirror-symmetric about their midpoint, the width is folded over that axis.
/// Widths never drop below the spread of a uniform grid cell, `Δφ/√12`.
pub fn localize(posterior: &PhaseDistribution) -> Localization {
    let floor = posterior.spacing() / 12f64.sqrt();
    let modes = posterior.modes(0.5);
    if modes.len() == 2 {
        let mid = wrap_tau(0.5 * (modes[0] + modes[1]));
        for axis in [mid, wrap_tau(mid + std::f64::consts::PI)] {
            if posterior.reflection_asymmetry(axis) < 0.1 {
                return Localization {
                    phi_modes: modes,
                    width: posterior.folded_std(axis).max(floor),
                    fold_axis: Some(axis),
                };
            }
        }
    }
    Localization {
        phi_modes: modes,
        width: posterior.circular_std().max(floor),
        fold_axis: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::TruncationPolicy;
    use crate::C64;
    use std::f64::consts::{PI, SQRT_2};

    fn coherent_table(beta: f64, alpha: f64, j: usize) -> LikelihoodTable {
        let rho = DensityOperator::coherent(C64::new(beta, 0.0), &TruncationPolicy::default()).unwrap();
        LikelihoodTable::from_signal(&rho, alpha, j, &PovmOptions::default()).unwrap()
    }

    #[test]
    fn uniform_is_normalized() {
        let p = PhaseDistribution::uniform(720).unwrap();
        assert!(p.normalization_defect() < 1e-10);
        assert!(PhaseDistribution::uniform(0).is_err());
        assert!(PhaseDistribution::from_weights(&[0.0, 0.0]).is_err());
        assert!(PhaseDistribution::from_weights(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn flat_likelihood_keeps_prior() {
        let prior = PhaseDistribution::uniform(64).unwrap();
        let post = bayes_update(&prior, &vec![0.3; 64]).unwrap();
        for (a, b) in post.log_weights().iter().zip(prior.log_weights()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(bayes_update(&prior, &vec![0.0; 64]).is_err());
        assert!(bayes_update(&prior, &vec![1.0; 63]).is_err());
    }

    #[test]
    fn strong_lo_likelihood_at_peak_selects_zero() {
        let beta = 3f64.sqrt();
        let prior = PhaseDistribution::uniform(720).unwrap();
        let x = SQRT_2 * beta;
        let lik: Vec<f64> = prior
            .phases()
            .iter()
            .map(|phi| (-2.0 * beta * beta * (phi.cos() - x / (SQRT_2 * beta)).powi(2)).exp() / PI.sqrt())
            .collect();
        let post = bayes_update(&prior, &lik).unwrap();
        let modes = post.modes(0.5);
        assert_eq!(modes.len(), 1);
        assert!(wrap_pi(modes[0]).abs() < 1e-9);
    }

    #[test]
    fn symmetric_bimodal_modes_and_folding() {
        let j = 2048;
        let a = PhaseDistribution::von_mises(j, 1.0, 400.0).unwrap();
        let b = PhaseDistribution::von_mises(j, -1.0, 400.0).unwrap();
        let w: Vec<f64> = a.weights().iter().zip(b.weights()).map(|(x, y)| x + y).collect();
        let post = PhaseDistribution::from_weights(&w).unwrap();
        let loc = localize(&post);
        assert_eq!(loc.phi_modes.len(), 2);
        let mut m = loc.phi_modes.clone();
        m.sort_by(f64::total_cmp);
        assert!((m[0] - 1.0).abs() < 1e-3);
        assert!((m[1] - (TAU - 1.0)).abs() < 1e-3);
        assert!(loc.fold_axis.is_some());
        // von Mises κ = 400 has std ≈ 1/√κ = 0.05
        assert!((loc.width - 0.05).abs() < 0.005, "width {}", loc.width);
    }

    #[test]
    fn delta_posterior_has_single_mode() {
        let p = PhaseDistribution::delta(720, 100).unwrap();
        let loc = localize(&p);
        assert_eq!(loc.phi_modes.len(), 1);
        assert!((loc.phi_modes[0] - p.phase(100)).abs() < 1e-12);
        assert!(loc.width <= p.spacing());
    }

    #[test]
    fn shift_moves_mass() {
        let p = PhaseDistribution::delta(16, 3).unwrap();
        let s = p.shifted(5);
        assert!((s.weights()[8] - 1.0).abs() < 1e-15);
        let s = p.shifted(-4);
        assert!((s.weights()[15] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sampler_is_deterministic_and_chain_rule_holds() {
        let table = coherent_table(1.0, 2.0, 128);
        let prior = PhaseDistribution::uniform(128).unwrap();
        let (r1, t1) = sample_with_table(&table, &prior, 200, 7, &SampleOptions::default()).unwrap();
        let (r2, _) = sample_with_table(&table, &prior, 200, 7, &SampleOptions::default()).unwrap();
        assert_eq!(r1, r2);
        let joint = joint_log_probability_with_table(&r1, &prior, &table).unwrap();
        assert!((joint - t1.log_likelihood()).abs() < 1e-8);
        assert!(t1.final_posterior.normalization_defect() < 1e-10);
    }

    #[test]
    fn observe_matches_step() {
        let table = coherent_table(1.0, 2.0, 64);
        let prior = PhaseDistribution::uniform(64).unwrap();
        let (rec, trace) = sample_with_table(&table, &prior, 30, 3, &SampleOptions::default()).unwrap();
        let mut st = PosteriorState::new(&prior);
        for (dn, lp) in rec.outcomes.iter().zip(&trace.log_predictive) {
            let got = st.observe(&table, *dn).unwrap();
            assert_eq!(got, *lp);
        }
        assert!(matches!(st.observe(&table, 10_000), Err(Error::OutsideSupport(10_000))));
    }

    #[test]
    fn record_json_round_trip() {
        let rec = DetectionRecord {
            seed: 11,
            alpha: 2.0,
            signal: "coherent".into(),
            prior: "uniform".into(),
            outcomes: vec![-3, 0, 5],
        };
        let s = rec.to_json().unwrap();
        assert_eq!(DetectionRecord::from_json(&s).unwrap(), rec);
    }
}
