//! Beam-splitter POVM for a finite local oscillator and its diagnostics.

use homodyne_sim::homodyne::BeamSplitterPovm;

fn main() -> homodyne_sim::Result<()> {
    let alpha: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(15f64.sqrt());
    let cutoff = 20;
    let povm = BeamSplitterPovm::build(alpha, 0.0, cutoff, 1e-11)?;
    let g = povm.grid();
    println!("alpha = {alpha:.4}, signal cutoff {cutoff}");
    println!("Δn ∈ [{}, {}], Δx = {:.5}", g.dn_min(), g.dn_max(), g.spacing());
    println!("omitted mass        {:.3e}", povm.omitted_mass());
    println!("completeness defect {:.3e}", povm.completeness_defect());
    println!("min eigenvalue      {:.3e}", povm.min_eigenvalue());

    let path = std::env::temp_dir().join("povm_diagnostics.csv");
    povm.write_diagnostics_csv(&path)?;
    println!("diagnostics written to {}", path.display());
    Ok(())
}
