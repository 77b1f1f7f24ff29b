//! Chain and weight diagnostics, posterior summaries and CPO/LPML.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::model::Dataset;
use crate::samplers::{ChainOutput, ISOutput};
use crate::special::{ln_factorial, log_sum_exp};

const MIN_ESS_LENGTH: usize = 10;
const CPO_MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssEstimate {
    pub ess: f64,
    /// The series was constant; `ess` is then its length.
    pub degenerate: bool,
}

/// Effective sample size with Geyer's initial monotone positive sequence
/// truncation of the autocorrelation sum, clamped to `(0, T]`.
pub fn ess_chain(series: &[f64]) -> Result<EssEstimate> {
    let n = series.len();
    if n < MIN_ESS_LENGTH {
        return Err(Error::argument(format!(
            "ESS needs at least {MIN_ESS_LENGTH} draws, got {n}"
        )));
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if lo == hi {
        return Ok(EssEstimate {
            ess: n as f64,
            degenerate: true,
        });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        z[..n - lag]
            .iter()
            .zip(&z[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let gamma0 = autocov(0);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = if m == 0 { gamma0 } else { autocov(2 * m) } + autocov(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let var = -gamma0 + 2.0 * sum;
    let ess = if var > 0.0 {
        n as f64 * gamma0 / var
    } else {
        n as f64
    };
    Ok(EssEstimate {
        ess: ess.clamp(f64::MIN_POSITIVE, n as f64),
        degenerate: false,
    })
}

/// How per-coordinate ESS values are combined into one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssAggregation {
    #[default]
    Min,
    Median,
}

impl EssAggregation {
    pub fn apply(self, ess: &[f64]) -> f64 {
        match self {
            EssAggregation::Min => ess.iter().copied().fold(f64::INFINITY, f64::min),
            EssAggregation::Median => {
                let mut v = ess.to_vec();
                v.sort_by(f64::total_cmp);
                let k = v.len();
                if k % 2 == 1 {
                    v[k / 2]
                } else {
                    0.5 * (v[k / 2 - 1] + v[k / 2])
                }
            }
        }
    }
}

/// Seconds per effective draw, `elapsed / min_j ESS_j` by default.
pub fn time_per_independent_sample(elapsed_seconds: f64, ess: &[f64], agg: EssAggregation) -> f64 {
    elapsed_seconds / agg.apply(ess)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpoResult {
    pub log_cpo: Vec<f64>,
    /// Observations whose likelihood underflowed for some draw.
    pub unstable: Vec<usize>,
    /// Fewer draws than recommended for the harmonic-mean estimator.
    pub few_draws: bool,
}

impl CpoResult {
    pub fn cpo(&self) -> Vec<f64> {
        self.log_cpo.iter().map(|v| v.exp()).collect()
    }

    pub fn lpml(&self) -> f64 {
        self.log_cpo.iter().sum()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.few_draws {
            out.push(format!(
                "fewer than {CPO_MIN_DRAWS} draws; harmonic-mean CPO estimates are unreliable"
            ));
        }
        for i in &self.unstable {
            out.push(format!(
                "CPO for observation {i} is dominated by a draw with zero likelihood"
            ));
        }
        out
    }
}

/// Harmonic-mean CPO, `CPO_i = [T⁻¹ Σ_t 1/f(y_i | β_t)]⁻¹`, in log space.
pub fn log_cpo(draws: &Matrix, data: &Dataset) -> Result<CpoResult> {
    check_len("draw width", draws.ncols(), data.p())?;
    let t = draws.nrows();
    if t == 0 {
        return Err(Error::argument("CPO needs at least one draw"));
    }
    let n = data.n();
    let mut neg_log_f = vec![Vec::with_capacity(t); n];
    for beta in draws.rows() {
        let eta = data.x().matvec(beta);
        for (i, (&y, e)) in data.y().iter().zip(eta).enumerate() {
            let lf = y as f64 * e - e.exp() - ln_factorial(y);
            neg_log_f[i].push(-lf);
        }
    }
    let ln_t = (t as f64).ln();
    let mut unstable = Vec::new();
    let log_cpo = neg_log_f
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if v.iter().any(|x| !x.is_finite()) {
                unstable.push(i);
            }
            -(log_sum_exp(v) - ln_t)
        })
        .collect();
    Ok(CpoResult {
        log_cpo,
        unstable,
        few_draws: t < CPO_MIN_DRAWS,
    })
}

pub fn cpo(draws: &Matrix, data: &Dataset) -> Result<Vec<f64>> {
    Ok(log_cpo(draws, data)?.cpo())
}

/// Log pseudo-marginal likelihood `Σ_i ln CPO_i`.
pub fn lpml(cpo_values: &[f64]) -> Result<f64> {
    if let Some(i) = cpo_values.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::argument(format!(
            "CPO values must be positive, entry {i} is {}",
            cpo_values[i]
        )));
    }
    Ok(cpo_values.iter().map(|v| v.ln()).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: f64,
    /// Monte Carlo standard error of `mean`.
    pub mcse: f64,
    /// The credible interval does not contain zero.
    pub excludes_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub level: f64,
    pub draws: usize,
    pub coefficients: Vec<CoefficientSummary>,
    pub acceptance_rate: Option<f64>,
    pub weight_ess: Option<f64>,
    pub elapsed_seconds: f64,
    pub time_per_independent_sample: f64,
    pub ess_aggregation: EssAggregation,
}

/// Borrowed view over sampler output for [`summarize`].
#[derive(Debug, Clone, Copy)]
pub enum SampleRef<'a> {
    Chain(&'a ChainOutput),
    Importance(&'a ISOutput),
}

impl<'a> From<&'a ChainOutput> for SampleRef<'a> {
    fn from(c: &'a ChainOutput) -> Self {
        SampleRef::Chain(c)
    }
}

impl<'a> From<&'a ISOutput> for SampleRef<'a> {
    fn from(o: &'a ISOutput) -> Self {
        SampleRef::Importance(o)
    }
}

/// Posterior summary with equal-tailed intervals at `level`.
pub fn summarize<'a>(
    sample: impl Into<SampleRef<'a>>,
    names: &[String],
    level: f64,
) -> Result<PosteriorSummary> {
    match sample.into() {
        SampleRef::Chain(c) => summarize_draws(
            &c.draws,
            None,
            names,
            level,
            c.elapsed_seconds,
            Some(c.acceptance_rate),
            EssAggregation::Min,
        ),
        SampleRef::Importance(o) => summarize_draws(
            &o.draws,
            Some(&o.log_weights),
            names,
            level,
            o.elapsed_seconds,
            None,
            EssAggregation::Min,
        ),
    }
}

/// Summary from raw draws; `log_weights` switches to self-normalized
/// weighted statistics.
pub fn summarize_draws(
    draws: &Matrix,
    log_weights: Option<&[f64]>,
    names: &[String],
    level: f64,
    elapsed_seconds: f64,
    acceptance_rate: Option<f64>,
    agg: EssAggregation,
) -> Result<PosteriorSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::argument(format!(
            "credible level must lie in (0, 1), got {level}"
        )));
    }
    let t = draws.nrows();
    if t == 0 {
        return Err(Error::argument("cannot summarize an empty sample"));
    }
    check_len("coefficient names", names.len(), draws.ncols())?;
    let weights = match log_weights {
        Some(lw) => {
            check_len("log weights", lw.len(), t)?;
            crate::samplers::relative_weights(lw)
        }
        None => vec![1.0; t],
    };
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Estimation("weights sum to zero".into()));
    }
    let weight_ess = match log_weights {
        Some(lw) => Some(crate::samplers::weight_ess(lw)?),
        None => None,
    };
    let alpha = 0.5 * (1.0 - level);

    let mut coefficients = Vec::with_capacity(draws.ncols());
    for (j, name) in names.iter().enumerate() {
        let col = draws.column(j);
        // shifted by the first draw so that a constant column is reproduced exactly
        let shift = col[0];
        let mean = shift
            + col
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * (x - shift))
                .sum::<f64>()
                / total;
        let var = col
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * (x - mean) * (x - mean))
            .sum::<f64>()
            / total;
        let sd = var.sqrt();
        let (ess, mcse) = match weight_ess {
            Some(wess) => {
                let se2 = col
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| (w / total).powi(2) * (x - mean) * (x - mean))
                    .sum::<f64>();
                (wess, se2.sqrt())
            }
            None => {
                let ess = if t >= MIN_ESS_LENGTH {
                    ess_chain(&col)?.ess
                } else {
                    t as f64
                };
                (ess, sd / ess.sqrt())
            }
        };
        let (lower, upper) = weighted_interval(&col, &weights, alpha);
        coefficients.push(CoefficientSummary {
            name: name.clone(),
            mean,
            sd,
            lower,
            upper,
            ess,
            mcse,
            excludes_zero: lower > 0.0 || upper < 0.0,
        });
    }
    let ess: Vec<f64> = coefficients.iter().map(|c| c.ess).collect();
    Ok(PosteriorSummary {
        level,
        draws: t,
        acceptance_rate,
        weight_ess,
        elapsed_seconds,
        time_per_independent_sample: time_per_independent_sample(elapsed_seconds, &ess, agg),
        ess_aggregation: agg,
        coefficients,
    })
}

fn weighted_interval(values: &[f64], weights: &[f64], alpha: f64) -> (f64, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let sw: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    (
        weighted_quantile(&sorted, &sw, alpha),
        weighted_quantile(&sorted, &sw, 1.0 - alpha),
    )
}

/// Linear interpolation between order statistics placed at cumulative
/// weights `C_{k−1} / C_{T−1}`; with unit weights this is the type-7 rule
/// `x_(⌊h⌋) + (h − ⌊h⌋)(x_(⌊h⌋+1) − x_(⌊h⌋))`, `h = (T−1)q`.
pub fn weighted_quantile(sorted: &[f64], weights: &[f64], q: f64) -> f64 {
    let t = sorted.len();
    if t == 1 {
        return sorted[0];
    }
    // cum[k] = weight of the first k points
    let mut cum = Vec::with_capacity(t);
    let mut acc = 0.0;
    for w in &weights[..t - 1] {
        cum.push(acc);
        acc += w;
    }
    cum.push(acc);
    let h = q * acc;
    let k = match cum.iter().rposition(|&c| c <= h) {
        Some(k) if k + 1 < t => k,
        Some(_) => return sorted[t - 1],
        None => return sorted[0],
    };
    let frac = (h - cum[k]) / (cum[k + 1] - cum[k]);
    sorted[k] + frac * (sorted[k + 1] - sorted[k])
}
