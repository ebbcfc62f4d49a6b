//! Experiment driver behind the `homodyne-sim` binary.
//!
//! Each command reads its section of an [`ExperimentConfig`], runs one
//! simulation per seed (in parallel) and writes CSV/JSON files. Files are
//! first written to a staging directory and only moved into place when the
//! whole command succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::{distance, empirical_measure, estimate_phase_from_mean, resampling_tv_threshold, write_overlay_csv, EmpiricalMeasure, PhasePair};
use crate::fock::{DensityOperator, FockVector, TruncationPolicy};
use crate::homodyne::{BeamSplitterPovm, PovmOptions, QuadratureDistribution, QuadratureFourier};
use crate::phasebayes::{localize, sample_with_table, DetectionRecord, LikelihoodTable, PhaseDistribution, PosteriorTrace, SampleOptions};
use crate::special::{fit_power_law, median};
use crate::tomography::{discriminate_cw_pw, fidelity_score, reconstruct_wigner, run_scenario_with_model, scenario_model, DiscriminationParams, DiscriminationReport, Operation, ReconstructionOptions, Scenario, ScenarioKind, SourceKind};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Povm,
    Localize,
    Fig2,
    Tomo,
    Discriminate,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Povm => "povm",
            CommandKind::Localize => "localize",
            CommandKind::Fig2 => "fig2",
            CommandKind::Tomo => "tomo",
            CommandKind::Discriminate => "discriminate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PovmParams {
    pub alpha: f64,
    pub signal_cutoff: usize,
    pub phi: f64,
    pub mass_tolerance: f64,
    /// Largest acceptable `‖Σ E − I‖`.
    pub completeness_tolerance: f64,
}

impl Default for PovmParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            signal_cutoff: 10,
            phi: 0.0,
            mass_tolerance: 1e-11,
            completeness_tolerance: 1e-8,
        }
    }
}

/// Squeezed coherent signal `D(d) S(r)|0⟩` with `d = β e^{−r}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig2Params {
    pub alpha: f64,
    pub displacement: f64,
    pub r: f64,
    pub m: usize,
    pub baseline_trials: usize,
}

impl Default for Fig2Params {
    fn default() -> Self {
        Self {
            alpha: 15f64.sqrt(),
            displacement: 3f64.sqrt(),
            r: -1.0,
            m: 10_000,
            baseline_trials: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizeParams {
    pub alpha: f64,
    pub beta: f64,
    pub operation: Operation,
    /// Steps at which the posterior width is recorded; the run length is the
    /// largest entry.
    pub checkpoints: Vec<usize>,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        Self {
            alpha: 15f64.sqrt(),
            beta: 3f64.sqrt(),
            operation: Operation::Identity,
            checkpoints: vec![100, 400, 1600, 6400],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomoParams {
    /// Seed, phase grid and cutoff tolerance are taken from the top level.
    pub scenario: Scenario,
    pub reconstruction: ReconstructionOptions,
}

impl Default for TomoParams {
    fn default() -> Self {
        Self {
            scenario: Scenario::new(ScenarioKind::CommonSourceCW, 3f64.sqrt(), 5000, 0),
            reconstruction: ReconstructionOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminateParams {
    pub source: SourceKind,
    pub params: DiscriminationParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    /// Phase grid size `J`.
    pub grid_j: usize,
    pub cutoff_tolerance: f64,
    pub povm: PovmParams,
    pub fig2: Fig2Params,
    pub localize: LocalizeParams,
    pub tomo: TomoParams,
    pub discriminate: DiscriminateParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            out_dir: None,
            grid_j: 720,
            cutoff_tolerance: 1e-12,
            povm: PovmParams::default(),
            fig2: Fig2Params::default(),
            localize: LocalizeParams::default(),
            tomo: TomoParams::default(),
            discriminate: DiscriminateParams::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| config_err(format!("cannot parse config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn policy(&self) -> Result<TruncationPolicy> {
        TruncationPolicy::new(self.cutoff_tolerance, 400).map_err(|e| config_err(format!("cutoff_tolerance: {e}")))
    }

    /// Checks the parts a command depends on, with messages naming the
    /// offending field.
    pub fn validate(&self, cmd: CommandKind) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_err("seeds: at least one seed is required"));
        }
        let mut uniq = self.seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.seeds.len() {
            return Err(config_err("seeds: duplicate seeds would overwrite each other's outputs"));
        }
        if self.grid_j < 8 {
            return Err(config_err(format!("grid_j: need at least 8 phase points, got {}", self.grid_j)));
        }
        self.policy()?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("{name}: must be a positive number, got {v}")))
            }
        };
        match cmd {
            CommandKind::Povm => {
                positive("povm.alpha", self.povm.alpha)?;
                positive("povm.mass_tolerance", self.povm.mass_tolerance)?;
                positive("povm.completeness_tolerance", self.povm.completeness_tolerance)?;
            }
            CommandKind::Fig2 => {
                positive("fig2.alpha", self.fig2.alpha)?;
                positive("fig2.displacement", self.fig2.displacement)?;
                if self.fig2.r.abs() > 3.0 {
                    return Err(config_err("fig2.r: |r| must be ≤ 3"));
                }
                if self.fig2.m == 0 || self.fig2.baseline_trials == 0 {
                    return Err(config_err("fig2.m and fig2.baseline_trials must be ≥ 1"));
                }
            }
            CommandKind::Localize => {
                positive("localize.alpha", self.localize.alpha)?;
                if self.localize.checkpoints.is_empty() || self.localize.checkpoints.contains(&0) {
                    return Err(config_err("localize.checkpoints: need one or more positive step counts"));
                }
            }
            CommandKind::Tomo => {
                self.tomo_scenario(0)
                    .validate()
                    .map_err(|e| config_err(format!("tomo.scenario: {e}")))?;
                if self.tomo.reconstruction.points < 3 {
                    return Err(config_err("tomo.reconstruction.points must be ≥ 3"));
                }
            }
            CommandKind::Discriminate => {
                let p = &self.discriminate.params;
                positive("discriminate.params.alpha", p.alpha)?;
                positive("discriminate.params.beta", p.beta)?;
                if p.k < 3 || p.m == 0 {
                    return Err(config_err("discriminate.params: need k ≥ 3 and m ≥ 1"));
                }
            }
        }
        Ok(())
    }

    fn tomo_scenario(&self, seed: u64) -> Scenario {
        let mut s = self.tomo.scenario.clone();
        s.seed = seed;
        s.phase_points = self.grid_j;
        s.cutoff_tolerance = self.cutoff_tolerance;
        s
    }
}

/// Maps an error to the process exit code: 2 for configuration problems,
/// 3 for numerical tolerance violations, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Json(_) | Error::GridMismatch(_) => 2,
        Error::Tolerance(_)
        | Error::MassToleranceUnreachable { .. }
        | Error::CutoffOverflow { .. }
        | Error::PhaseOutOfRange { .. } => 3,
        _ => 1,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Runs a command, writing its files into `out` only if it succeeds.
pub fn run_command(cmd: CommandKind, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate(cmd)?;
    fs::create_dir_all(out)?;
    let staging = out.join(format!(".staging-{}-{}", cmd.name(), std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let result = match cmd {
        CommandKind::Povm => cmd_povm(cfg, &staging),
        CommandKind::Fig2 => cmd_fig2(cfg, &staging),
        CommandKind::Localize => cmd_localize(cfg, &staging),
        CommandKind::Tomo => cmd_tomo(cfg, &staging),
        CommandKind::Discriminate => cmd_discriminate(cfg, &staging),
    };
    let moved = result.and_then(|_| {
        let mut files = Vec::new();
        let mut entries: Vec<_> = fs::read_dir(&staging)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let dest = out.join(e.file_name());
            fs::rename(e.path(), &dest)?;
            files.push(dest);
        }
        Ok(files)
    });
    let _ = fs::remove_dir_all(&staging);
    moved
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmSummary {
    pub alpha: f64,
    pub phi: f64,
    pub signal_cutoff: usize,
    pub dn_min: i64,
    pub dn_max: i64,
    pub omitted_mass: f64,
    pub completeness_defect: f64,
    pub min_eigenvalue: f64,
}

/// Builds the POVM and writes its diagnostics; fails with a tolerance error
/// when completeness is violated.
pub fn cmd_povm(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let p = &cfg.povm;
    let povm = BeamSplitterPovm::build(p.alpha, p.phi, p.signal_cutoff, p.mass_tolerance)?;
    let summary = PovmSummary {
        alpha: p.alpha,
        phi: p.phi,
        signal_cutoff: p.signal_cutoff,
        dn_min: povm.grid().dn_min(),
        dn_max: povm.grid().dn_max(),
        omitted_mass: povm.omitted_mass(),
        completeness_defect: povm.completeness_defect(),
        min_eigenvalue: povm.min_eigenvalue(),
    };
    if summary.completeness_defect > p.completeness_tolerance {
        return Err(Error::Tolerance(format!(
            "completeness defect {:e} exceeds {:e}",
            summary.completeness_defect, p.completeness_tolerance
        )));
    }
    povm.write_diagnostics_csv(&out.join("povm_diagnostics.csv"))?;
    write_json(&out.join("povm_summary.json"), &summary)
}

/// Shared, seed-independent part of the `fig2` command: squeezed signal,
/// POVM, likelihood table and uniform prior.
pub struct Fig2Experiment {
    pub params: Fig2Params,
    pub signal: DensityOperator,
    pub povm: BeamSplitterPovm,
    pub fourier: QuadratureFourier,
    pub table: LikelihoodTable,
    pub prior: PhaseDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2Summary {
    pub seed: u64,
    pub m: usize,
    /// Posterior mode used for the model curve.
    pub phi_hat: f64,
    pub phi_modes: Vec<f64>,
    pub width: f64,
    pub mean_x: f64,
    /// `±arccos(x̄/(√2 β e^{−r}))`.
    pub mean_estimate: Option<PhasePair>,
    /// Member of the pair closest to `phi_hat`.
    pub mean_estimate_near_mode: Option<f64>,
    pub tv: f64,
    pub ks: f64,
    /// 95th percentile of the i.i.d. resampling TV at the same `M`.
    pub tv_threshold: f64,
    pub within_threshold: bool,
}

pub struct Fig2Run {
    pub summary: Fig2Summary,
    pub record: DetectionRecord,
    pub trace: PosteriorTrace,
    pub empirical: EmpiricalMeasure,
    pub model: QuadratureDistribution,
}

impl Fig2Experiment {
    pub fn new(params: &Fig2Params, grid_j: usize, policy: &TruncationPolicy) -> Result<Self> {
        let beta = params.displacement * params.r.exp();
        let signal = FockVector::squeezed_coherent(params.r, beta, policy)?.to_density();
        let povm = BeamSplitterPovm::build_with(params.alpha, 0.0, signal.cutoff(), &PovmOptions::default())?;
        let fourier = QuadratureFourier::new(&signal, &povm)?;
        let table = LikelihoodTable::build(&fourier, grid_j, 0.0)?;
        Ok(Self {
            params: params.clone(),
            signal,
            povm,
            fourier,
            table,
            prior: PhaseDistribution::uniform(grid_j)?,
        })
    }

    pub fn run(&self, seed: u64) -> Result<Fig2Run> {
        let p = &self.params;
        let opts = SampleOptions {
            signal_label: format!("squeezed(r={},displacement={})", p.r, p.displacement),
            prior_label: "uniform".into(),
            trace_every: (p.m / 200).max(1),
            ..Default::default()
        };
        let (record, trace) = sample_with_table(&self.table, &self.prior, p.m, seed, &opts)?;
        let loc = localize(&trace.final_posterior);
        let phi_hat = loc.phi_modes.first().copied().unwrap_or_else(|| trace.final_posterior.circular_mean());
        let model = self.fourier.at(phi_hat);
        let empirical = empirical_measure(&record, self.povm.grid())?;
        let d = distance(&empirical, &model)?;
        // distinct stream from the detection seed
        let tv_threshold = resampling_tv_threshold(&model, p.m, p.baseline_trials, seed ^ 0x5EED_BA5E)?;
        let beta = p.displacement * p.r.exp();
        let mean_x = record.mean_x();
        let mean_estimate = estimate_phase_from_mean(mean_x, beta, p.r).ok();
        let summary = Fig2Summary {
            seed,
            m: p.m,
            phi_hat,
            phi_modes: loc.phi_modes.clone(),
            width: loc.width,
            mean_x,
            mean_estimate,
            mean_estimate_near_mode: mean_estimate.map(|pair| pair.closest_to(phi_hat)),
            tv: d.tv,
            ks: d.ks,
            tv_threshold,
            within_threshold: d.tv < tv_threshold,
        };
        Ok(Fig2Run {
            summary,
            record,
            trace,
            empirical,
            model,
        })
    }
}

/// Overlay of the empirical measure and `q_{φ̂₀}` per seed, plus summaries.
pub fn cmd_fig2(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let exp = Fig2Experiment::new(&cfg.fig2, cfg.grid_j, &cfg.policy()?)?;
    let runs: Vec<Fig2Run> = cfg.seeds.par_iter().map(|&s| exp.run(s)).collect::<Result<_>>()?;
    for run in &runs {
        let s = &run.summary;
        let header = vec![
            format!("seed={} M={} alpha={} displacement={} r={}", s.seed, s.m, cfg.fig2.alpha, cfg.fig2.displacement, cfg.fig2.r),
            format!("phi_hat={:.6} tv={:.6} tv_threshold={:.6}", s.phi_hat, s.tv, s.tv_threshold),
        ];
        write_overlay_csv(&out.join(format!("fig2_seed{}.csv", s.seed)), &run.empirical, &run.model, &header)?;
        fs::write(out.join(format!("fig2_seed{}_record.json", s.seed)), run.record.to_json()? + "\n")?;
        run.trace.write_csv(&out.join(format!("fig2_seed{}_trace.csv", s.seed)))?;
    }
    let summaries: Vec<&Fig2Summary> = runs.iter().map(|r| &r.summary).collect();
    write_json(&out.join("fig2_summary.json"), &summaries)
}

/// Posterior widths at checkpoints for one signal, shared across seeds.
pub struct LocalizationExperiment {
    pub params: LocalizeParams,
    pub table: LikelihoodTable,
    pub prior: PhaseDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRun {
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    /// Localization width (folded when the posterior is a mirror pair).
    pub widths: Vec<f64>,
    pub circ_stds: Vec<f64>,
    pub final_modes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub checkpoints: Vec<usize>,
    pub median_widths: Vec<f64>,
    /// Fit `median_width ≈ c · M^p`.
    pub fit_c: f64,
    pub fit_p: f64,
    /// `1/(2β)`, the strong-LO coefficient.
    pub strong_lo_c: f64,
    pub runs: Vec<LocalizationRun>,
}

impl LocalizationExperiment {
    pub fn new(params: &LocalizeParams, grid_j: usize, policy: &TruncationPolicy) -> Result<Self> {
        let signal = params.operation.apply(params.beta, policy)?;
        let table = LikelihoodTable::from_signal(&signal, params.alpha, grid_j, &PovmOptions::default())?;
        Ok(Self {
            params: params.clone(),
            table,
            prior: PhaseDistribution::uniform(grid_j)?,
        })
    }

    pub fn run(&self, seed: u64) -> Result<(LocalizationRun, DetectionRecord, PosteriorTrace)> {
        let mut cps = self.params.checkpoints.clone();
        cps.sort_unstable();
        cps.dedup();
        let m = *cps.last().expect("validated non-empty");
        let opts = SampleOptions {
            snapshot_steps: cps.clone(),
            trace_every: (m / 500).max(1),
            signal_label: format!("{:?}(beta={})", self.params.operation, self.params.beta),
            prior_label: "uniform".into(),
        };
        let (record, trace) = sample_with_table(&self.table, &self.prior, m, seed, &opts)?;
        let locs: Vec<_> = trace.snapshots.iter().map(|(_, p)| localize(p)).collect();
        let run = LocalizationRun {
            seed,
            checkpoints: cps,
            widths: locs.iter().map(|l| l.width).collect(),
            circ_stds: trace.snapshots.iter().map(|(_, p)| p.circular_std()).collect(),
            final_modes: locs.last().map(|l| l.phi_modes.clone()).unwrap_or_default(),
        };
        Ok((run, record, trace))
    }

    pub fn summarize(&self, runs: Vec<LocalizationRun>) -> LocalizationSummary {
        let checkpoints = runs[0].checkpoints.clone();
        let median_widths: Vec<f64> = (0..checkpoints.len())
            .map(|i| median(&runs.iter().map(|r| r.widths[i]).collect::<Vec<_>>()))
            .collect();
        let ms: Vec<f64> = checkpoints.iter().map(|&m| m as f64).collect();
        let (fit_c, fit_p) = if ms.len() >= 2 {
            fit_power_law(&ms, &median_widths)
        } else {
            (median_widths[0] * ms[0].sqrt(), f64::NAN)
        };
        LocalizationSummary {
            checkpoints,
            median_widths,
            fit_c,
            fit_p,
            strong_lo_c: 1.0 / (2.0 * self.params.beta),
            runs,
        }
    }
}

pub fn cmd_localize(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let exp = LocalizationExperiment::new(&cfg.localize, cfg.grid_j, &cfg.policy()?)?;
    let results: Vec<_> = cfg.seeds.par_iter().map(|&s| exp.run(s)).collect::<Result<_>>()?;
    let mut runs = Vec::new();
    for (run, record, trace) in results {
        fs::write(out.join(format!("localize_seed{}_record.json", run.seed)), record.to_json()? + "\n")?;
        trace.write_csv(&out.join(format!("localize_seed{}_trace.csv", run.seed)))?;
        runs.push(run);
    }
    write_json(&out.join("localize_summary.json"), &exp.summarize(runs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomoSummary {
    pub seed: u64,
    pub kind: ScenarioKind,
    pub wigner_integral: f64,
    /// Overlap with the signal `ρ(0)` in the laboratory frame.
    pub fidelity_fixed: f64,
    /// Overlap maximized over global rotations of `ρ(0)`.
    pub fidelity_best_rotation: f64,
    pub best_rotation: f64,
}

pub fn cmd_tomo(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let base = cfg.tomo_scenario(cfg.seeds[0]);
    let model = scenario_model(&base)?;
    let reference = base.signal_state()?;
    let results: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<_> {
            let s = cfg.tomo_scenario(seed);
            let ds = run_scenario_with_model(&s, &model)?;
            let w = reconstruct_wigner(&ds, &cfg.tomo.reconstruction)?;
            let fixed = fidelity_score(&w, &reference, false)?;
            let best = fidelity_score(&w, &reference, true)?;
            let summary = TomoSummary {
                seed,
                kind: s.kind,
                wigner_integral: w.integral(),
                fidelity_fixed: fixed.overlap,
                fidelity_best_rotation: best.overlap,
                best_rotation: best.rotation,
            };
            Ok((ds, w, summary))
        })
        .collect::<Result<_>>()?;
    let mut summaries = Vec::new();
    for (ds, w, summary) in results {
        ds.write_csv(out, &format!("tomo_seed{}", summary.seed))?;
        w.write_csv(
            &out.join(format!("tomo_seed{}_wigner.csv", summary.seed)),
            &[format!("seed={} kind={:?}", summary.seed, summary.kind)],
        )?;
        summaries.push(summary);
    }
    write_json(&out.join("tomo_summary.json"), &summaries)
}

pub fn cmd_discriminate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut params = cfg.discriminate.params.clone();
    params.phase_points = cfg.grid_j;
    let reports: Vec<DiscriminationReport> = cfg
        .seeds
        .par_iter()
        .map(|&s| discriminate_cw_pw(cfg.discriminate.source, &params, s))
        .collect::<Result<_>>()?;
    for r in &reports {
        write_json(&out.join(format!("discriminate_seed{}.json", r.seed)), r)?;
    }
    write_json(&out.join("discriminate_summary.json"), &reports)
}
