//! Tells a CW signal laser from a PW one by tomography with an independent
//! CW local oscillator.

use homodyne_sim::tomography::{discriminate_cw_pw, DiscriminationParams, SourceKind};

fn main() -> homodyne_sim::Result<()> {
    let params = DiscriminationParams::default();
    for (source, seed) in [(SourceKind::Cw, 1), (SourceKind::Pw, 2)] {
        let r = discriminate_cw_pw(source, &params, seed)?;
        println!(
            "{source:?} source, seed {seed}: {} (coherent {:.3}, mixed {:.3})",
            r.verdict, r.coherent_score, r.mixed_score
        );
    }
    Ok(())
}
