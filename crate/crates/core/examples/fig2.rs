//! Empirical measure of a squeezed-signal run compared with the exact
//! distribution at the posterior-mode phase.

use homodyne_sim::cli::{Fig2Experiment, Fig2Params};
use homodyne_sim::empirical::write_overlay_csv;
use homodyne_sim::fock::TruncationPolicy;

fn main() -> homodyne_sim::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let exp = Fig2Experiment::new(&Fig2Params::default(), 720, &TruncationPolicy::default())?;
    let run = exp.run(seed)?;
    let s = &run.summary;
    println!("seed {seed}: M = {}", s.m);
    println!("posterior modes {:?} (width {:.4})", s.phi_modes, s.width);
    if let Some(pair) = s.mean_estimate {
        println!("from the mean: {:.4} / {:.4}", pair.phi_plus, pair.phi_minus);
    }
    println!("TV = {:.4}, KS = {:.4}, resampling p95 = {:.4}", s.tv, s.ks, s.tv_threshold);

    let path = std::env::temp_dir().join(format!("fig2_seed{seed}.csv"));
    write_overlay_csv(&path, &run.empirical, &run.model, &[format!("seed={seed}")])?;
    println!("overlay written to {}", path.display());
    Ok(())
}
