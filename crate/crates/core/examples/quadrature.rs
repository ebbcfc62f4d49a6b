//! Finite-LO quadrature distributions against the strong-LO limit.

use homodyne_sim::fock::{FockVector, TruncationPolicy};
use homodyne_sim::homodyne::{strong_lo_binned, BeamSplitterPovm, QuadratureFourier};

fn main() -> homodyne_sim::Result<()> {
    let rho = FockVector::squeezed_coherent(-1.0, 3f64.sqrt() * (-1f64).exp(), &TruncationPolicy::default())?
        .to_density();
    let mut alphas = vec![2.0, 15f64.sqrt(), 8.0];
    if let Some(a) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        alphas = vec![a];
    }
    println!("{:>8} {:>8} {:>10} {:>10} {:>10}", "alpha", "phi", "mean x", "var x", "TV strong");
    for alpha in alphas {
        let povm = BeamSplitterPovm::build(alpha, 0.0, rho.cutoff(), 1e-11)?;
        let four = QuadratureFourier::new(&rho, &povm)?;
        for phi in [0.0, 0.8, 1.6] {
            let q = four.at(phi);
            let tv = q.tv_distance(&strong_lo_binned(&rho, phi, four.grid()))?;
            println!("{alpha:8.3} {phi:8.2} {:10.5} {:10.5} {tv:10.5}", q.mean_x(), q.variance_x());
        }
    }
    Ok(())
}
