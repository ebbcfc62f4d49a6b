//! Sequential detections with a phase-uniform LO: the posterior over the
//! relative phase narrows as outcomes accumulate.

use homodyne_sim::fock::{DensityOperator, TruncationPolicy};
use homodyne_sim::phasebayes::{localize, sample_sequence, PhaseDistribution};
use homodyne_sim::C64;

fn main() -> homodyne_sim::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let beta = 3f64.sqrt();
    let rho = DensityOperator::coherent(C64::new(beta, 0.0), &TruncationPolicy::default())?;
    let prior = PhaseDistribution::uniform(1440)?;
    let (record, trace) = sample_sequence(&rho, 15f64.sqrt(), &prior, 2000, seed)?;

    for row in trace.rows.iter().step_by(250) {
        println!(
            "step {:5}  circ_mean {:7.4}  circ_std {:7.4}  folded {:7.4}",
            row.step, row.circ_mean, row.circ_std, row.folded_std
        );
    }
    let loc = localize(&trace.final_posterior);
    let est = (record.mean_x() / (2f64.sqrt() * beta)).clamp(-1.0, 1.0).acos();
    println!("modes {:?}, width {:.4}", loc.phi_modes, loc.width);
    println!("±arccos(x̄/√2β) = ±{est:.4}");
    println!("log-likelihood of the record {:.3}", trace.log_likelihood());
    Ok(())
}
