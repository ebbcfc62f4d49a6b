//! Small numerical helpers shared across modules.

use std::f64::consts::TAU;

use statrs::function::gamma::ln_gamma;

/// `ln n!` via the log-gamma function.
#[inline]
pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// `ln C(n, k)`.
#[inline]
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Numerically stable `ln Σ exp(x_i)`. Returns `-inf` for an empty slice or
/// when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Wraps an angle into `[0, 2π)`.
#[inline]
pub fn wrap_tau(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `(-π, π]`.
#[inline]
pub fn wrap_pi(phi: f64) -> f64 {
    let w = wrap_tau(phi);
    if w > std::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

/// Linear-interpolated percentile (`q` in `[0, 1]`) of an unsorted sample.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty sample");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in percentile input"));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi] * frac
}

/// Least-squares fit of `y = c·x^p` in log-log space; returns `(c, p)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert!(xs.len() == ys.len() && xs.len() >= 2, "need ≥ 2 matching points");
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let p = sxy / sxx;
    ((my - p * mx).exp(), p)
}

/// Median of an unsorted sample.
pub fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_matches_product() {
        let mut acc = 0.0f64;
        for n in 1..=30usize {
            acc += (n as f64).ln();
            assert!((ln_factorial(n) - acc).abs() < 1e-10 * acc.max(1.0));
        }
        assert_eq!(ln_factorial(0), 0.0);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn wrapping() {
        assert!((wrap_tau(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert!((wrap_pi(TAU - 0.5) + 0.5).abs() < 1e-15);
        assert_eq!(wrap_tau(TAU), 0.0);
    }

    #[test]
    fn power_law_recovers_exponent() {
        let xs = [100.0, 400.0, 1600.0, 6400.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 0.3 * x.powf(-0.5)).collect();
        let (c, p) = fit_power_law(&xs, &ys);
        assert!((c - 0.3).abs() < 1e-12 && (p + 0.5).abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert!((percentile(&v, 0.5) - 2.5).abs() < 1e-15);
    }
}
