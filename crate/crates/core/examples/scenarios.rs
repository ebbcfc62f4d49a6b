//! The four LO/source arrangements run on the same coherent signal.

use homodyne_sim::tomography::{run_scenario, Scenario, ScenarioKind};

fn main() -> homodyne_sim::Result<()> {
    let kinds = [
        ScenarioKind::CommonSourceCW,
        ScenarioKind::CommonSourcePW,
        ScenarioKind::IndependentCWLO,
        ScenarioKind::IndependentPWLO,
    ];
    for kind in kinds {
        let mut s = Scenario::new(kind, 3f64.sqrt(), 2000, 3);
        s.alpha = 5.0;
        s.k = 4;
        s.phase_points = 360;
        let ds = run_scenario(&s)?;
        let means: Vec<String> = ds.measures.iter().map(|m| format!("{:+.3}", m.mean_x())).collect();
        println!("{kind:?}: mean x per θ_k = [{}]", means.join(", "));
    }
    Ok(())
}
