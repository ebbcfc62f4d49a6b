//! Filtered back-projection of sampled quadrature data and overlap with the
//! signal's Wigner function.

use homodyne_sim::tomography::{
    fidelity_score, reconstruct_wigner, run_scenario, Operation, ReconstructionOptions, Scenario, ScenarioKind,
};

fn main() -> homodyne_sim::Result<()> {
    let mut s = Scenario::new(ScenarioKind::CommonSourceCW, 3f64.sqrt() * (-1f64).exp(), 5000, 11);
    s.operation = Operation::Squeeze { r: -1.0 };
    s.k = 16;
    let ds = run_scenario(&s)?;
    let w = reconstruct_wigner(&ds, &ReconstructionOptions::default())?;
    let (x, p, peak) = w.argmax();
    println!("grid {}×{}, ∬W = {:.4}", w.xs.len(), w.ps.len(), w.integral());
    println!("peak W({x:.3}, {p:.3}) = {peak:.4}");
    let f = fidelity_score(&w, &s.signal_state()?, false)?;
    println!("overlap with the squeezed reference: {:.4}", f.overlap);

    let path = std::env::temp_dir().join("wigner.csv");
    w.write_csv(&path, &[format!("seed={}", s.seed)])?;
    println!("Wigner grid written to {}", path.display());
    Ok(())
}
