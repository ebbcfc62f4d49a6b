//! Coherent, squeezed and phase-averaged laser states in a truncated Fock space.

use homodyne_sim::fock::{DensityOperator, FockVector, PhaseRotate, TruncationPolicy};
use homodyne_sim::C64;

fn main() -> homodyne_sim::Result<()> {
    let policy = TruncationPolicy::default();
    let beta = 3f64.sqrt();

    let coh = FockVector::coherent(C64::new(beta, 0.0), &policy)?;
    println!("coherent |√3⟩: cutoff {}, <n> = {:.12}", coh.cutoff(), coh.mean_photon_number());

    // Rotating a coherent state only moves its amplitude.
    let turned = coh.phase_rotate(1.0);
    let direct = FockVector::coherent(C64::from_polar(beta, 1.0), &policy)?;
    println!("fidelity(U_1|β⟩, |βe^i⟩) = {:.15}", turned.fidelity(&direct));

    let sq = FockVector::squeezed_coherent(-1.0, beta * (-1f64).exp(), &policy)?;
    println!("squeezed r=-1: cutoff {}, <n> = {:.6}", sq.cutoff(), sq.mean_photon_number());

    let mixed = DensityOperator::phase_averaged_laser_state(beta, &policy)?;
    println!(
        "phase-averaged laser state: purity {:.6}, diagonal {}",
        mixed.purity(),
        mixed.is_diagonal()
    );
    for (n, p) in mixed.photon_distribution().iter().take(8).enumerate() {
        println!("  P({n}) = {p:.6}");
    }
    Ok(())
}
