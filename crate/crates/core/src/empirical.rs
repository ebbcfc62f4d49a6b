//! Empirical measures of detection records and their distance to model laws.

use std::f64::consts::{SQRT_2, TAU};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::homodyne::{QuadratureDistribution, QuadratureGrid};
use crate::phasebayes::{seeded_rng, DetectionRecord};
use crate::special::percentile;
use crate::{Error, Result};

/// Largest `|x̄|/(√2β e^{−r})` excess over 1 that is still clamped rather than
/// rejected.
pub const PHASE_CLAMP_TOLERANCE: f64 = 0.1;

/// Integer counts of outcomes per Δn bin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    grid_alpha_bits: u64,
    dn_min: i64,
    counts: Vec<u64>,
    total: u64,
}

impl EmpiricalMeasure {
    pub fn empty(grid: &QuadratureGrid) -> Self {
        Self {
            grid_alpha_bits: grid.alpha().to_bits(),
            dn_min: grid.dn_min(),
            counts: vec![0; grid.len()],
            total: 0,
        }
    }

    pub fn from_outcomes(outcomes: &[i64], grid: &QuadratureGrid) -> Result<Self> {
        let mut m = Self::empty(grid);
        for &dn in outcomes {
            let b = grid.index_of(dn).ok_or(Error::OutsideSupport(dn))?;
            m.counts[b] += 1;
            m.total += 1;
        }
        Ok(m)
    }

    pub fn grid(&self) -> QuadratureGrid {
        QuadratureGrid::new(
            f64::from_bits(self.grid_alpha_bits),
            self.dn_min,
            self.dn_min + self.counts.len() as i64 - 1,
        )
        .expect("stored grid is valid")
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, dn: i64) -> u64 {
        self.grid().index_of(dn).map_or(0, |b| self.counts[b])
    }

    /// Number of outcomes `M`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// `k/M` for the bin of `dn`.
    pub fn frequency(&self, dn: i64) -> f64 {
        self.count(dn) as f64 / self.total as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let m = self.total as f64;
        self.counts.iter().map(|&k| k as f64 / m).collect()
    }

    /// Frequencies divided by the bin width `Δx`.
    pub fn density(&self) -> Vec<f64> {
        let dx = self.grid().spacing();
        self.frequencies().into_iter().map(|f| f / dx).collect()
    }

    pub fn mean_x(&self) -> f64 {
        let g = self.grid();
        let s: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(b, &k)| k as f64 * g.x(g.dn_at(b)))
            .sum();
        s / self.total as f64
    }

    /// Pools two measures on the same grid.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.grid_alpha_bits != other.grid_alpha_bits
            || self.dn_min != other.dn_min
            || self.counts.len() != other.counts.len()
        {
            return Err(Error::GridMismatch("cannot merge measures on different grids".into()));
        }
        Ok(Self {
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            total: self.total + other.total,
            ..self.clone()
        })
    }
}

/// Empirical measure of a record on `grid`.
pub fn empirical_measure(record: &DetectionRecord, grid: &QuadratureGrid) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::from_outcomes(&record.outcomes, grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub tv: f64,
    pub ks: f64,
    /// `emp_b − model_b` per bin.
    pub residuals: Vec<f64>,
}

fn same_grid(a: &QuadratureGrid, b: &QuadratureGrid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

pub fn distance(emp: &EmpiricalMeasure, model: &QuadratureDistribution) -> Result<DistanceReport> {
    same_grid(&emp.grid(), model.grid())?;
    let residuals: Vec<f64> = emp
        .frequencies()
        .iter()
        .zip(model.prob())
        .map(|(e, m)| e - m)
        .collect();
    let tv = (0.5 * residuals.iter().map(|r| r.abs()).sum::<f64>()).min(1.0);
    let mut cum = 0.0f64;
    let mut ks = 0.0f64;
    for r in &residuals {
        cum += r;
        ks = ks.max(cum.abs());
    }
    Ok(DistanceReport {
        tv,
        ks: ks.min(1.0),
        residuals,
    })
}

/// The two phases `±arccos(x̄/(√2β e^{−r}))`, with `phi_minus = 2π − phi_plus`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePair {
    pub phi_plus: f64,
    pub phi_minus: f64,
}

impl PhasePair {
    /// Member of the pair closest (circularly) to `phi`.
    pub fn closest_to(&self, phi: f64) -> f64 {
        let d = |a: f64| crate::special::wrap_pi(a - phi).abs();
        if d(self.phi_plus) <= d(self.phi_minus) {
            self.phi_plus
        } else {
            self.phi_minus
        }
    }
}

/// Phase pair from the outcome average of a displaced (squeezed) signal with
/// amplitude `beta` before the squeezer `S(r)`, so the quadrature mean is
/// `√2 β e^{−r} cos φ`.
pub fn estimate_phase_from_mean(xbar: f64, beta: f64, r: f64) -> Result<PhasePair> {
    let amp = SQRT_2 * beta * (-r).exp();
    if !(amp > 0.0) || !xbar.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need a positive amplitude and finite mean, got amp {amp}, x̄ {xbar}"
        )));
    }
    let mut ratio = xbar / amp;
    if ratio.abs() > 1.0 {
        if ratio.abs() > 1.0 + PHASE_CLAMP_TOLERANCE {
            return Err(Error::PhaseOutOfRange { ratio });
        }
        log::warn!("|x̄|/(√2βe^(−r)) = {ratio:.4} exceeds 1; clamping");
        ratio = ratio.signum();
    }
    let phi_plus = ratio.acos();
    Ok(PhasePair {
        phi_plus,
        phi_minus: crate::special::wrap_tau(TAU - phi_plus),
    })
}

/// Inverse-CDF sampler over a quadrature distribution.
#[derive(Clone, Debug)]
pub struct IidSampler {
    grid: QuadratureGrid,
    cum: Vec<f64>,
}

impl IidSampler {
    pub fn new(model: &QuadratureDistribution) -> Self {
        let mut acc = 0.0;
        let cum = model
            .prob()
            .iter()
            .map(|p| {
                acc += p.max(0.0);
                acc
            })
            .collect();
        Self {
            grid: *model.grid(),
            cum,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let total = *self.cum.last().expect("non-empty grid");
        let target = rng.gen::<f64>() * total;
        // first bin whose cumulative mass reaches the target
        let b = self.cum.partition_point(|&c| c <= 0.0 || c < target).min(self.cum.len() - 1);
        self.grid.dn_at(b)
    }

    pub fn draw_many<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<i64> {
        (0..m).map(|_| self.draw(rng)).collect()
    }
}

/// TV distances between `trials` i.i.d. samples of size `m` and the model.
pub fn resampling_tv(model: &QuadratureDistribution, m: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if m == 0 || trials == 0 {
        return Err(Error::InvalidParameter("need m ≥ 1 and trials ≥ 1".into()));
    }
    let sampler = IidSampler::new(model);
    let mut rng = seeded_rng(seed);
    (0..trials)
        .map(|_| {
            let emp = EmpiricalMeasure::from_outcomes(&sampler.draw_many(m, &mut rng), model.grid())?;
            Ok(distance(&emp, model)?.tv)
        })
        .collect()
}

/// 95th percentile of the i.i.d. resampling TV distribution.
pub fn resampling_tv_threshold(model: &QuadratureDistribution, m: usize, trials: usize, seed: u64) -> Result<f64> {
    Ok(percentile(&resampling_tv(model, m, trials, seed)?, 0.95))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic two-sample Kolmogorov–Smirnov test. Ties are handled by
/// comparing the CDFs only after each distinct value, so for integer data
/// the p-value is conservative.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("KS test needs non-empty samples".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsTest {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    })
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// CSV with columns `x,model_density,empirical_density`, preceded by
/// `# ` comment lines.
pub fn write_overlay_csv(
    path: &Path,
    emp: &EmpiricalMeasure,
    model: &QuadratureDistribution,
    comments: &[String],
) -> Result<()> {
    same_grid(&emp.grid(), model.grid())?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for c in comments {
        writeln!(f, "# {c}")?;
    }
    writeln!(f, "x,model_density,empirical_density")?;
    let g = model.grid();
    for ((b, m), e) in model.density().iter().enumerate().zip(emp.density()) {
        writeln!(f, "{:.12e},{:.12e},{:.12e}", g.x(g.dn_at(b)), m, e)?;
    }
    f.flush()?;
    Ok(())
}
