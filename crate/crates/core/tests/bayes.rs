use std::f64::consts::{SQRT_2, TAU};

use homodyne_sim::fock::{DensityOperator, TruncationPolicy};
use homodyne_sim::homodyne::{BeamSplitterPovm, PovmOptions, QuadratureFourier};
use homodyne_sim::phasebayes::{
    bayes_update, joint_log_probability, joint_log_probability_with_table, localize, sample_with_table,
    LikelihoodTable, PhaseDistribution, PosteriorState, SampleOptions,
};
use homodyne_sim::C64;

fn coherent_table(beta: f64, alpha: f64, j: usize, offset: f64) -> LikelihoodTable {
    let rho = DensityOperator::coherent(C64::new(beta, 0.0), &TruncationPolicy::default()).unwrap();
    let povm = BeamSplitterPovm::build(alpha, 0.0, rho.cutoff(), 1e-11).unwrap();
    LikelihoodTable::build(&QuadratureFourier::new(&rho, &povm).unwrap(), j, offset).unwrap()
}

#[test]
fn sequential_updates_equal_batch_update() {
    let table = coherent_table(1.0, 2.0, 256, 0.0);
    let prior = PhaseDistribution::von_mises(256, 1.0, 0.5).unwrap();
    let (record, _) = sample_with_table(&table, &prior, 60, 3, &SampleOptions::default()).unwrap();
    let mut seq = prior.clone();
    for &dn in &record.outcomes {
        seq = bayes_update(&seq, &table.likelihood(dn).unwrap()).unwrap();
    }
    // batch: prior · Π q, normalized once
    let mut batch: Vec<f64> = prior.log_weights().to_vec();
    for &dn in &record.outcomes {
        for (b, l) in batch.iter_mut().zip(table.log_likelihood(dn).unwrap()) {
            *b += l;
        }
    }
    let batch = PhaseDistribution::from_log_weights(batch).unwrap();
    let worst = seq
        .log_weights()
        .iter()
        .zip(batch.log_weights())
        .filter(|(a, _)| a.is_finite() && **a > -700.0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn joint_probability_matches_naive_summation() {
    let j = 64;
    let table = coherent_table(0.8, 1.5, j, 0.0);
    let prior = PhaseDistribution::von_mises(j, 2.0, 1.0).unwrap();
    for seed in 0..4 {
        let (record, _) = sample_with_table(&table, &prior, 5, seed, &SampleOptions::default()).unwrap();
        let w = prior.weights();
        let naive: f64 = (0..j)
            .map(|k| {
                let row = table.row(k);
                let prod: f64 = record
                    .outcomes
                    .iter()
                    .map(|&dn| row[table.grid().index_of(dn).unwrap()])
                    .product();
                w[k] * prod
            })
            .sum();
        let got = joint_log_probability_with_table(&record, &prior, &table).unwrap().exp();
        assert!(((got - naive) / naive).abs() < 1e-10, "{got} vs {naive}");
    }
}

#[test]
fn chain_rule_holds_for_sampled_records() {
    let beta = 3f64.sqrt();
    let rho = DensityOperator::coherent(C64::new(beta, 0.0), &TruncationPolicy::default()).unwrap();
    let alpha = 15f64.sqrt();
    let table = LikelihoodTable::from_signal(&rho, alpha, 360, &PovmOptions::default()).unwrap();
    let prior = PhaseDistribution::uniform(360).unwrap();
    let (record, trace) = sample_with_table(&table, &prior, 300, 9, &SampleOptions::default()).unwrap();
    let joint = joint_log_probability(&record, &prior, &rho, alpha).unwrap();
    assert!((trace.log_likelihood() - joint).abs() < 1e-8);
}

#[test]
fn number_state_posterior_stays_at_prior() {
    let rho = DensityOperator::number(2, 2).unwrap();
    let table = LikelihoodTable::from_signal(&rho, 2.0, 180, &PovmOptions::default()).unwrap();
    assert!(table.is_phase_independent());
    let q = table.distribution_at(0);
    for prior in [PhaseDistribution::uniform(180).unwrap(), PhaseDistribution::von_mises(180, 0.4, 3.0).unwrap()] {
        let (record, trace) = sample_with_table(&table, &prior, 400, 1, &SampleOptions::default()).unwrap();
        let worst = trace
            .final_posterior
            .log_weights()
            .iter()
            .zip(prior.log_weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst:e}");
        // every conditional equals q
        for (&dn, &lp) in record.outcomes.iter().zip(&trace.log_predictive) {
            assert!((lp - q.prob_at(dn).ln()).abs() < 1e-12);
        }
        let iid: f64 = record.outcomes.iter().map(|&dn| q.prob_at(dn).ln()).sum();
        assert!((joint_log_probability_with_table(&record, &prior, &table).unwrap() - iid).abs() < 1e-9);
    }
}

#[test]
fn shifting_prior_and_lo_label_leaves_outcomes_unchanged() {
    let j = 360;
    let steps = 37;
    let psi = TAU * steps as f64 / j as f64;
    let base_table = coherent_table(1.2, 3.0, j, 0.0);
    let shifted_table = coherent_table(1.2, 3.0, j, -psi);
    let prior = PhaseDistribution::von_mises(j, 0.8, 2.0).unwrap();
    let shifted_prior = prior.shifted(steps as isize);
    for seed in 0..5 {
        let (a, _) = sample_with_table(&base_table, &prior, 200, seed, &SampleOptions::default()).unwrap();
        let (b, _) = sample_with_table(&shifted_table, &shifted_prior, 200, seed, &SampleOptions::default()).unwrap();
        assert_eq!(a.outcomes, b.outcomes, "seed {seed}");
    }
}

#[test]
fn observe_and_step_share_one_update_rule() {
    let table = coherent_table(1.0, 2.0, 128, 0.0);
    let prior = PhaseDistribution::uniform(128).unwrap();
    let (record, trace) = sample_with_table(&table, &prior, 50, 4, &SampleOptions::default()).unwrap();
    let mut state = PosteriorState::new(&prior);
    for &dn in &record.outcomes {
        state.observe(&table, dn).unwrap();
    }
    assert_eq!(state.distribution().log_weights(), trace.final_posterior.log_weights());
}

#[test]
fn coherent_mode_agrees_with_mean_estimator() {
    let beta = 3f64.sqrt();
    let alpha = 15f64.sqrt();
    let rho = DensityOperator::coherent(C64::new(beta, 0.0), &TruncationPolicy::default()).unwrap();
    let table = LikelihoodTable::from_signal(&rho, alpha, 1440, &PovmOptions::default()).unwrap();
    let prior = PhaseDistribution::uniform(1440).unwrap();
    let mut agree = 0;
    for seed in 0..20 {
        let (record, trace) = sample_with_table(&table, &prior, 2000, seed, &SampleOptions::default()).unwrap();
        let loc = localize(&trace.final_posterior);
        let c = (record.mean_x() / (SQRT_2 * beta)).clamp(-1.0, 1.0).acos();
        let ok = loc.phi_modes.iter().any(|&m| {
            let d1 = homodyne_sim::special::wrap_pi(m - c).abs();
            let d2 = homodyne_sim::special::wrap_pi(m + c).abs();
            d1.min(d2) <= 3.0 * loc.width
        });
        agree += ok as usize;
    }
    assert!(agree >= 19, "{agree}/20");
}

#[test]
fn coherent_width_at_400_is_near_strong_lo_value() {
    let beta = 3f64.sqrt();
    let rho = DensityOperator::coherent(C64::new(beta, 0.0), &TruncationPolicy::default()).unwrap();
    let table = LikelihoodTable::from_signal(&rho, 15f64.sqrt(), 1440, &PovmOptions::default()).unwrap();
    let prior = PhaseDistribution::uniform(1440).unwrap();
    // The posterior is Gaussian in cos φ, so its width in φ carries a 1/|sin φ₀|.
    let scaled: Vec<f64> = (0..50)
        .map(|seed| {
            let (_, trace) = sample_with_table(&table, &prior, 400, seed, &SampleOptions::default()).unwrap();
            let loc = localize(&trace.final_posterior);
            loc.width * loc.phi_modes[0].sin().abs()
        })
        .collect();
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let target = 1.0 / (2.0 * beta * 20.0);
    assert!(mean > target / 2.0 && mean < target * 2.0, "mean width·|sin φ| {mean}, target {target}");
}
