//! Per-observation choice of the negative-binomial stopping parameters.
//!
//! For a Poisson mean `λ` and stopping parameter `r` the distance between the
//! two CDFs is measured by
//!
//! ```text
//! d(λ, r) = e^λ (1 + λ/r)^{−r} − 1 = sup_y |F_NB(y) / F_Pois(y) − 1|
//! ```
//!
//! which is attained at `y = 0`, decreases strictly in `r` and vanishes as
//! `r → ∞`. [`solve_r`] returns the smallest `r` in `[r_min, r_max]` with
//! `d(λ, r) ≤ d`, using the Lambert-W closed form when it verifies and
//! bisection otherwise.

use std::collections::HashMap;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::special::{ln_factorial, ln_rising_factorial, log_add_exp, x_minus_log1p};

mod lambert;

pub use lambert::{lambert_w, Branch};

/// Exponent above which the distance is reported as `+∞`.
const DISTANCE_OVERFLOW: f64 = 700.0;
const BISECTION_REL_WIDTH: f64 = 1e-10;
const DISTANCE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningPolicy {
    /// Bound on the NB/Poisson CDF distance.
    pub d: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Try the Lambert-W closed form before bisecting.
    pub use_closed_form: bool,
}

impl Default for TuningPolicy {
    fn default() -> Self {
        TuningPolicy {
            d: 0.1,
            r_min: 1e-2,
            r_max: 1e6,
            use_closed_form: true,
        }
    }
}

impl TuningPolicy {
    pub fn new(d: f64) -> Result<Self> {
        let policy = TuningPolicy {
            d,
            ..TuningPolicy::default()
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(Error::argument(format!(
                "distance bound d must be positive, got {}",
                self.d
            )));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max) || !self.r_max.is_finite() {
            return Err(Error::argument(format!(
                "need 0 < r_min < r_max, got r_min = {}, r_max = {}",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }
}

/// `e^λ (1 + λ/r)^{−r} − 1`, evaluated as `expm1(r·(x − ln(1+x)))` with `x = λ/r`.
pub fn nb_poisson_distance(lambda: f64, r: f64) -> f64 {
    let exponent = r * x_minus_log1p(lambda / r);
    if exponent > DISTANCE_OVERFLOW {
        return f64::INFINITY;
    }
    exponent.exp_m1()
}

/// Result of the brute-force CDF comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfRatioDistance {
    pub sup: f64,
    /// Count at which the supremum was attained.
    pub argmax: u64,
    /// Largest count visited.
    pub support_max: u64,
}

/// Brute-force `sup_y |F_NB(y)/F_Pois(y) − 1|`, summing both pmfs until both
/// CDFs exceed `1 − epsilon`. Intended as a test oracle for
/// [`nb_poisson_distance`].
pub fn empirical_cdf_ratio_distance(lambda: f64, r: f64, epsilon: f64) -> CdfRatioDistance {
    let ln_lambda = lambda.ln();
    let ln_p_fail = -(lambda / r).ln_1p(); // ln(r/(r+λ))
    let ln_p_succ = -(r / lambda).ln_1p(); // ln(λ/(r+λ))
    let target = (-epsilon).ln_1p();
    let ln_eps = epsilon.ln();
    let mut log_f_pois = f64::NEG_INFINITY;
    let mut log_f_nb = f64::NEG_INFINITY;
    let mut best = CdfRatioDistance {
        sup: 0.0,
        argmax: 0,
        support_max: 0,
    };
    let mut y = 0u64;
    loop {
        let yf = y as f64;
        let lp = yf * ln_lambda - lambda - ln_factorial(y);
        let ln_nb = ln_rising_factorial(r, y) - ln_factorial(y) + r * ln_p_fail + yf * ln_p_succ;
        log_f_pois = log_add_exp(log_f_pois, lp);
        log_f_nb = log_add_exp(log_f_nb, ln_nb);
        let gap = (log_f_nb - log_f_pois).exp_m1().abs();
        if gap > best.sup {
            best.sup = gap;
            best.argmax = y;
        }
        best.support_max = y;
        // past the modes both pmfs decay geometrically; bound the remaining
        // tails so rounding in the accumulated CDFs cannot stall the loop
        let ratio_pois = lambda / (yf + 1.0);
        let ratio_nb = (yf + r) / (yf + 1.0) * ln_p_succ.exp();
        let tail_done = ratio_pois < 1.0
            && ratio_nb < 1.0
            && lp - (-ratio_pois).ln_1p() < ln_eps
            && ln_nb - (-ratio_nb).ln_1p() < ln_eps;
        if (log_f_pois >= target && log_f_nb >= target) || tail_done || y >= 50_000_000 {
            break;
        }
        y += 1;
    }
    best
}

/// How [`solve_r`] arrived at its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RSource {
    /// Bound already met at `r_min`.
    Floor,
    ClosedForm,
    Bisection,
    /// Bound missed even at `r_max`.
    Cap,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningStats {
    pub floor: u64,
    pub closed_form: u64,
    pub bisection: u64,
    pub cap: u64,
    /// Closed-form attempts that failed verification.
    pub closed_form_rejected: u64,
}

impl TuningStats {
    fn record(&mut self, source: RSource, attempted_closed_form: bool) {
        match source {
            RSource::Floor => self.floor += 1,
            RSource::ClosedForm => self.closed_form += 1,
            RSource::Bisection => {
                self.bisection += 1;
                if attempted_closed_form {
                    self.closed_form_rejected += 1;
                }
            }
            RSource::Cap => self.cap += 1,
        }
    }

    pub fn merge(&mut self, other: &TuningStats) {
        self.floor += other.floor;
        self.closed_form += other.closed_form;
        self.bisection += other.bisection;
        self.cap += other.cap;
        self.closed_form_rejected += other.closed_form_rejected;
    }

    pub fn total(&self) -> u64 {
        self.floor + self.closed_form + self.bisection + self.cap
    }
}

fn within_bound(lambda: f64, r: f64, d: f64) -> bool {
    nb_poisson_distance(lambda, r) <= d * (1.0 + DISTANCE_SLACK)
}

/// Smallest `r ∈ [r_min, r_max]` meeting the distance bound (or `r_max`).
pub fn solve_r(lambda: f64, policy: &TuningPolicy) -> f64 {
    solve_r_traced(lambda, policy).0
}

pub fn solve_r_traced(lambda: f64, policy: &TuningPolicy) -> (f64, RSource) {
    if !(lambda > 0.0) {
        // λ underflowed to zero: any r is within the bound
        return (policy.r_min, RSource::Floor);
    }
    if within_bound(lambda, policy.r_min, policy.d) {
        return (policy.r_min, RSource::Floor);
    }
    if !within_bound(lambda, policy.r_max, policy.d) {
        return (policy.r_max, RSource::Cap);
    }
    if policy.use_closed_form {
        if let Some(r) = closed_form_r(lambda, policy.d) {
            if r >= policy.r_min && r <= policy.r_max && within_bound(lambda, r, policy.d) {
                return (r, RSource::ClosedForm);
            }
        }
    }
    (bisect_r(lambda, policy), RSource::Bisection)
}

/// Lambert-W solution of `d(λ, r) = d`.
///
/// With `ln c = λ − ln(1+d)` and `a = ln c / λ`, the root is
/// `r = −λ ln c / (ln c + λ W(−c^{−1/λ} ln c / λ))`. The argument
/// `−a e^{−a}` lies in `[−1/e, 0)`; both real branches are tried and the
/// first finite positive root is returned.
pub fn closed_form_r(lambda: f64, d: f64) -> Option<f64> {
    let log_c = lambda - d.ln_1p();
    if !(log_c > 0.0) {
        return None;
    }
    // offset of the argument from the branch point, 1 + e·(−a e^{−a}), with δ = 1 − a
    let delta = d.ln_1p() / lambda;
    let offset = branch_offset(delta);
    for branch in [Branch::Principal, Branch::MinusOne] {
        let w = match lambert::lambert_w_from_offset(offset, branch) {
            Ok(w) => w,
            Err(_) => continue,
        };
        let denom = log_c + lambda * w;
        let r = -lambda * log_c / denom;
        if r.is_finite() && r > 0.0 && denom.abs() > 1e-12 * log_c {
            return Some(r);
        }
    }
    None
}

/// `1 − (1−δ) e^δ`, accurate for small `δ`.
fn branch_offset(delta: f64) -> f64 {
    if delta.abs() < 1e-2 {
        // Σ_{k≥2} (k−1) δ^k / k!
        let mut sum = 0.0;
        let mut pow = delta;
        let mut fact = 1.0;
        for k in 2..30 {
            pow *= delta;
            fact *= k as f64;
            let t = (k - 1) as f64 * pow / fact;
            sum += t;
            if t.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        1.0 - (1.0 - delta) * delta.exp()
    }
}

fn bisect_r(lambda: f64, policy: &TuningPolicy) -> f64 {
    let mut lo = policy.r_min.ln();
    let mut hi = policy.r_max.ln();
    // invariant: bound fails at lo, holds at hi
    while hi - lo > BISECTION_REL_WIDTH {
        let mid = 0.5 * (lo + hi);
        if nb_poisson_distance(lambda, mid.exp()) <= policy.d {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.exp()
}

/// Rounds to 12 significant digits for the per-call cache key.
fn cache_key(lambda: f64) -> u64 {
    if lambda == 0.0 || !lambda.is_finite() {
        return lambda.to_bits();
    }
    let exp = lambda.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - exp);
    ((lambda * scale).round() / scale).to_bits()
}

/// `r_i = solve_r(exp(x_iᵀβ))` for every observation.
pub fn compute_r_vector(beta: &[f64], data: &Dataset, policy: &TuningPolicy) -> Result<Vec<f64>> {
    let mut stats = TuningStats::default();
    compute_r_vector_traced(beta, data, policy, &mut stats)
}

pub fn compute_r_vector_traced(
    beta: &[f64],
    data: &Dataset,
    policy: &TuningPolicy,
    stats: &mut TuningStats,
) -> Result<Vec<f64>> {
    let eta = data.linear_predictor(beta)?;
    Ok(r_from_linear_predictor(&eta, policy, stats))
}

pub(crate) fn r_from_linear_predictor(
    eta: &[f64],
    policy: &TuningPolicy,
    stats: &mut TuningStats,
) -> Vec<f64> {
    let mut cache: HashMap<u64, f64> = HashMap::new();
    eta.iter()
        .map(|&e| {
            let lambda = e.exp().min(f64::MAX);
            *cache.entry(cache_key(lambda)).or_insert_with(|| {
                let (r, source) = solve_r_traced(lambda, policy);
                stats.record(source, policy.use_closed_form);
                r
            })
        })
        .collect()
}

/// `1/e`, exposed for branch-domain checks.
pub const INV_E: f64 = 1.0 / E;
