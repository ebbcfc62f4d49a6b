#![allow(dead_code)]

use std::collections::BTreeMap;

use homodyne_sim::fock::DensityOperator;
use homodyne_sim::{CMatrix, C64};
use nalgebra::DMatrix;
use rand::Rng;

/// POVM elements from the explicit two-mode unitary `exp(θ(a†b − ab†))`
/// with `θ = π/4`, the LO `|α⟩` (real α) in mode `b`, and `Δn = n_a − n_b`
/// counted after the beam splitter.
///
/// The unitary is exponentiated blockwise in each total-photon-number
/// sector, so truncation only enters through the LO amplitudes.
pub fn brute_force_povm(alpha: f64, signal_cutoff: usize) -> BTreeMap<i64, CMatrix> {
    let ns = signal_cutoff;
    // LO amplitudes, kept while above 1e-22.
    let mut lo = vec![(-alpha * alpha / 2.0).exp()];
    loop {
        let n = lo.len();
        let next = lo[n - 1] * alpha / (n as f64).sqrt();
        if next.abs() < 1e-22 && n as f64 > alpha * alpha {
            break;
        }
        lo.push(next);
    }
    let nl = lo.len() - 1;
    let theta = std::f64::consts::FRAC_PI_4;

    // For a total N the sector basis is |k, N−k⟩, k = 0..=N.
    let sector = |total: usize| -> DMatrix<f64> {
        let mut g = DMatrix::<f64>::zeros(total + 1, total + 1);
        for k in 0..total {
            // a†b |k, N−k⟩ = √((k+1)(N−k)) |k+1, N−k−1⟩
            let c = (((k + 1) * (total - k)) as f64).sqrt();
            g[(k + 1, k)] += c;
            g[(k, k + 1)] -= c;
        }
        (g * theta).exp()
    };
    let unitaries: Vec<DMatrix<f64>> = (0..=ns + nl).map(sector).collect();

    // out[s] maps (k, l) -> amplitude for input |s⟩ ⊗ |α⟩.
    let mut outs: Vec<BTreeMap<(usize, usize), f64>> = Vec::new();
    for s in 0..=ns {
        let mut out = BTreeMap::new();
        for (m, &c) in lo.iter().enumerate() {
            let total = s + m;
            let u = &unitaries[total];
            for k in 0..=total {
                let amp = u[(k, s)] * c;
                *out.entry((k, total - k)).or_insert(0.0) += amp;
            }
        }
        outs.push(out);
    }
    let mut elems: BTreeMap<i64, CMatrix> = BTreeMap::new();
    for s1 in 0..=ns {
        for s2 in 0..=ns {
            for (&(k, l), &a1) in &outs[s1] {
                if let Some(&a2) = outs[s2].get(&(k, l)) {
                    let dn = k as i64 - l as i64;
                    let e = elems.entry(dn).or_insert_with(|| CMatrix::zeros(ns + 1, ns + 1));
                    e[(s1, s2)] += C64::new(a1 * a2, 0.0);
                }
            }
        }
    }
    elems
}

/// Random density operator of rank ≤ 3 on `0..=cutoff`.
pub fn random_density<R: Rng>(rng: &mut R, cutoff: usize) -> DensityOperator {
    let d = cutoff + 1;
    let mut m = CMatrix::zeros(d, d);
    let rank = rng.gen_range(1..=3);
    for _ in 0..rank {
        let v = CMatrix::from_fn(d, 1, |i, _| {
            let decay = (-(i as f64) / 3.0).exp();
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay
        });
        m += &v * v.adjoint();
    }
    let tr = m.trace().re;
    DensityOperator::from_matrix(m / C64::new(tr, 0.0)).unwrap()
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|c| c.norm()).fold(0.0, f64::max)
}
