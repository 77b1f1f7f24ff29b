//! Special functions used by the likelihoods and the tuning code.

use std::f64::consts::PI;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

// B_{2k} / (2k (2k - 1)) for k = 1..=8
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

const STIRLING_CUTOFF: f64 = 15.0;

/// Natural log of the gamma function for `x > 0`.
///
/// Stirling's series above 15, upward recurrence below it. Returns NaN for
/// non-positive input.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x >= STIRLING_CUTOFF {
        return stirling(x);
    }
    let shift = (STIRLING_CUTOFF - x).ceil();
    let mut prod = 1.0;
    let mut z = x;
    for _ in 0..shift as usize {
        prod *= z;
        z += 1.0;
    }
    stirling(z) - prod.ln()
}

fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut pow = inv;
    for c in STIRLING {
        series += c * pow;
        pow *= inv2;
    }
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series
}

/// `ln Γ(r + k) − ln Γ(r)` for a non-negative integer `k`.
///
/// Summing logs is exact to a few ulps for small `k`; large `k` falls back to
/// the gamma difference.
pub fn ln_rising_factorial(r: f64, k: u64) -> f64 {
    if k <= 64 {
        (0..k).map(|j| (r + j as f64).ln()).sum()
    } else {
        ln_gamma(r + k as f64) - ln_gamma(r)
    }
}

/// `ln k!`.
pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// `x − ln(1 + x)` without cancellation for small `x`.
pub fn x_minus_log1p(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // x²/2 − x³/3 + x⁴/4 − …
        let mut term = x * x;
        let mut sum = 0.0;
        for k in 2..30 {
            let t = term / k as f64;
            if k % 2 == 0 {
                sum += t;
            } else {
                sum -= t;
            }
            if t.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= x;
        }
        sum
    } else {
        x - x.ln_1p()
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `e^x E₁(x)` for `x > 0`, where `E₁` is the exponential integral.
pub fn scaled_exp_e1(x: f64) -> f64 {
    if !(x > 0.0) {
        return if x == 0.0 { f64::INFINITY } else { f64::NAN };
    }
    if x <= 1.0 {
        // E₁(x) = −γ − ln x − Σ (−x)^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let t = term / k as f64;
            sum += t;
            if t.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        (-EULER_GAMMA - x.ln() - sum) * x.exp()
    } else {
        // modified Lentz on the continued fraction 1/(x+1− 1²/(x+3− 2²/(x+5− …)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let delta = c * d;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h
    }
}

/// Log density of the marginal horseshoe prior on a single coefficient,
/// `β | τ` with the local scale integrated against a standard half-Cauchy.
pub fn horseshoe_marginal_log_density(beta: f64, tau: f64) -> f64 {
    let theta = beta / tau;
    let half_sq = 0.5 * theta * theta;
    -0.5 * (2.0 * PI.powi(3)).ln() + scaled_exp_e1(half_sq).ln() - tau.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(ln_gamma(2.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(ln_gamma(0.5), 0.5 * PI.ln(), epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(11.0), 3_628_800f64.ln(), epsilon = 1e-13);
        assert_relative_eq!(ln_gamma(30.0), 71.257_038_967_168_01, max_relative = 1e-15);
    }

    #[test]
    fn ln_gamma_matches_statrs_over_range() {
        let mut x = 1.0;
        while x < 1e7 {
            let ours = ln_gamma(x);
            let theirs = statrs::function::gamma::ln_gamma(x);
            let tol = 1e-12f64.max(2e-15 * theirs.abs());
            assert!((ours - theirs).abs() <= tol, "x={x}: {ours} vs {theirs}");
            x *= 1.37;
        }
    }

    #[test]
    fn ln_gamma_recurrence() {
        for &x in &[0.01, 0.3, 1.7, 9.9, 14.99, 15.0, 15.01, 123.4] {
            assert_relative_eq!(ln_gamma(x + 1.0) - ln_gamma(x), x.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rising_factorial_paths_agree() {
        for &r in &[0.5, 3.0, 1e3, 1e6] {
            for k in [0u64, 1, 5, 64, 65, 200] {
                let direct = ln_gamma(r + k as f64) - ln_gamma(r);
                let ours = ln_rising_factorial(r, k);
                assert!(
                    (ours - direct).abs() <= 1e-9 * direct.abs().max(1.0),
                    "r={r} k={k}"
                );
            }
        }
    }

    #[test]
    fn x_minus_log1p_continuous_at_switch() {
        for &x in &[-0.0099, 0.0099, 0.01, 0.0101, 1e-8, -1e-8] {
            let naive = x - f64::ln_1p(x);
            let ours = x_minus_log1p(x);
            assert!((ours - naive).abs() <= 1e-15 + 1e-8 * naive.abs(), "x={x}");
        }
        assert_relative_eq!(x_minus_log1p(1e-10), 5e-21, max_relative = 1e-9);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_relative_eq!(log_add_exp(-1.0, f64::NEG_INFINITY), -1.0);
        assert_relative_eq!(log_add_exp(0.0, 0.0), 2f64.ln());
    }

    #[test]
    fn exp_integral_reference_values() {
        // E₁(0.5) = 0.5597735947761608, E₁(2) = 0.04890051070806112
        assert_relative_eq!(
            scaled_exp_e1(0.5) * (-0.5f64).exp(),
            0.559_773_594_776_160_8,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            scaled_exp_e1(2.0) * (-2.0f64).exp(),
            0.048_900_510_708_061_12,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            scaled_exp_e1(1.0) * (-1.0f64).exp(),
            0.219_383_934_395_520_3,
            max_relative = 1e-13
        );
        // asymptote x e^x E₁(x) → 1
        assert_relative_eq!(1e6 * scaled_exp_e1(1e6), 1.0, max_relative = 1e-5);
    }

    #[test]
    fn horseshoe_marginal_integrates_to_one() {
        // density has a log spike at 0; integrate symmetric halves on a log grid
        let tau = 0.7;
        let mut total = 0.0;
        let n = 200_000;
        let (lo, hi) = ((1e-12f64).ln(), (1e7f64).ln());
        let h = (hi - lo) / n as f64;
        for k in 0..=n {
            let u = lo + k as f64 * h;
            let b = u.exp();
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            total += w * h * b * horseshoe_marginal_log_density(b, tau).exp();
        }
        assert_relative_eq!(2.0 * total, 1.0, max_relative = 1e-4);
    }
}
