//! Real branches of the Lambert W function by Halley iteration.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITER: usize = 50;
/// Below this distance from the branch point the series is used directly.
const SERIES_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `W₀`, defined on `[−1/e, ∞)` with values `≥ −1`.
    Principal,
    /// `W₋₁`, defined on `[−1/e, 0)` with values `≤ −1`.
    MinusOne,
}

/// `w` with `w e^w = x` on the requested branch.
pub fn lambert_w(x: f64, branch: Branch) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::argument("lambert_w of NaN"));
    }
    let offset = E.mul_add(x, 1.0);
    // a couple of ulps of slack so that x = −1/e rounded either way is accepted
    if offset < -4.0 * f64::EPSILON {
        return Err(Error::argument(format!("lambert_w: {x} is below −1/e")));
    }
    match branch {
        Branch::Principal => {
            if x == 0.0 {
                return Ok(0.0);
            }
            if x.is_infinite() {
                return Ok(f64::INFINITY);
            }
        }
        Branch::MinusOne => {
            if x >= 0.0 {
                return Err(Error::argument(format!(
                    "lambert_w on the −1 branch needs x < 0, got {x}"
                )));
            }
        }
    }
    solve(x, offset.max(0.0), branch)
}

/// Same as [`lambert_w`] but with the argument given by its offset from the
/// branch point, `q = 1 + e·x`, which keeps precision when `x ≈ −1/e`.
pub(crate) fn lambert_w_from_offset(q: f64, branch: Branch) -> Result<f64> {
    if !(q >= 0.0) || (branch == Branch::MinusOne && q >= 1.0) {
        return Err(Error::argument(format!("branch offset {q} out of domain")));
    }
    let x = (q - 1.0) / E;
    if branch == Branch::Principal && q == 1.0 {
        return Ok(0.0);
    }
    solve(x, q, branch)
}

fn branch_series(q: f64, branch: Branch) -> f64 {
    let mut p = (2.0 * q).sqrt();
    if branch == Branch::MinusOne {
        p = -p;
    }
    // W = −1 + p − p²/3 + 11p³/72 − 43p⁴/540 + 769p⁵/17280 − 221p⁶/8505
    -1.0 + p
        * (1.0
            + p * (-1.0 / 3.0
                + p * (11.0 / 72.0
                    + p * (-43.0 / 540.0 + p * (769.0 / 17280.0 - p * 221.0 / 8505.0)))))
}

fn solve(x: f64, q: f64, branch: Branch) -> Result<f64> {
    if q < SERIES_OFFSET {
        return Ok(branch_series(q, branch));
    }
    let mut w = initial_guess(x, q, branch);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        if !step.is_finite() {
            break;
        }
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            return Ok(w);
        }
    }
    if w.is_finite() {
        Ok(w)
    } else {
        Err(Error::Numeric(format!("lambert_w did not converge at {x}")))
    }
}

fn initial_guess(x: f64, q: f64, branch: Branch) -> f64 {
    match branch {
        Branch::Principal => {
            if q < 0.3 {
                branch_series(q, branch)
            } else if x < 1.0 {
                // Padé-like start good on (−0.25, 1)
                x * (1.0 + 4.0 / 3.0 * x) / (1.0 + x * (7.0 / 3.0 + 5.0 / 6.0 * x))
            } else if x < 3.0 {
                x.ln_1p()
            } else {
                let l1 = x.ln();
                let l2 = l1.ln();
                l1 - l2 + l2 / l1
            }
        }
        Branch::MinusOne => {
            if q < 0.3 {
                branch_series(q, branch)
            } else {
                let l1 = (-x).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn residual(w: f64, x: f64) -> f64 {
        ((w * w.exp() - x) / x).abs()
    }

    #[test]
    fn endpoints() {
        assert_eq!(lambert_w(0.0, Branch::Principal).unwrap(), 0.0);
        assert_relative_eq!(
            lambert_w(E, Branch::Principal).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            lambert_w(-1.0 / E, Branch::MinusOne).unwrap(),
            -1.0,
            epsilon = 1e-7
        );
        assert_relative_eq!(
            lambert_w(-1.0 / E, Branch::Principal).unwrap(),
            -1.0,
            epsilon = 1e-7
        );
    }

    #[test]
    fn principal_grid_residuals() {
        let mut xs: Vec<f64> = (1..=200)
            .map(|k| -1.0 / E + k as f64 * (1.0 / E) / 200.0)
            .collect();
        xs.extend((-30..=30).map(|k| 10f64.powf(k as f64 / 3.0)));
        xs.extend([-1e-300, 1e-300, 1e300]);
        for x in xs {
            if x == 0.0 {
                continue;
            }
            let w = lambert_w(x, Branch::Principal).unwrap();
            assert!(w >= -1.0);
            assert!(residual(w, x) < 1e-12, "x={x} w={w}");
        }
    }

    #[test]
    fn minus_one_grid_residuals() {
        let mut xs: Vec<f64> = (1..200)
            .map(|k| -1.0 / E + k as f64 * (1.0 / E) / 200.0)
            .collect();
        xs.extend((1..=100).map(|k| -10f64.powi(-k)));
        for x in xs {
            let w = lambert_w(x, Branch::MinusOne).unwrap();
            assert!(w <= -1.0);
            assert!(residual(w, x) < 1e-12, "x={x} w={w}");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(lambert_w(-0.5, Branch::Principal).is_err());
        assert!(lambert_w(0.5, Branch::MinusOne).is_err());
        assert!(lambert_w(0.0, Branch::MinusOne).is_err());
        assert!(lambert_w(f64::NAN, Branch::Principal).is_err());
    }

    #[test]
    fn offset_form_matches_direct_form() {
        for &x in &[-0.3, -0.1, -1e-3] {
            let q = E.mul_add(x, 1.0);
            for b in [Branch::Principal, Branch::MinusOne] {
                let a = lambert_w(x, b).unwrap();
                let c = lambert_w_from_offset(q, b).unwrap();
                assert_relative_eq!(a, c, max_relative = 1e-12);
            }
        }
    }
}
