//! Synthetic data, a random-walk Metropolis baseline and the
//! time-per-independent-sample study harness.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{summarize, EssAggregation};
use crate::error::{Error, Result};
use crate::kernels::{fill_normal, rng_from_seed, sample_normal, sample_poisson, stream_seed};
use crate::linalg::Matrix;
use crate::model::{log_gaussian_prior, log_poisson_likelihood, Dataset, GaussianPriorParams};
use crate::samplers::{
    horseshoe_prior, horseshoe_update, is_run, mh_run, tau_optimal, ChainOutput, HorseshoeState,
    InitStrategy, MHConfig, PriorSpec,
};
use crate::tuning::TuningStats;

const MAX_REDRAWS: usize = 100;
const MIN_SCALE: f64 = 0.05;
pub const INTERCEPT_NAME: &str = "(Intercept)";

/// Simulation design for one (n, p) cell. Column 0 of the design is an
/// intercept; of the remaining `p − 1` columns `n_continuous` are standard
/// normal (exactly standardized) and the rest binary indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub seed: u64,
    /// Defaults to `⌈(p − 1)/2⌉`.
    pub n_continuous: Option<usize>,
    pub lambda_bounds: (f64, f64),
    pub beta_sd: f64,
    /// Use these coefficients instead of drawing them (no rescaling).
    pub true_beta: Option<Vec<f64>>,
}

impl SimDesign {
    pub fn new(n: usize, p: usize, seed: u64) -> Self {
        SimDesign {
            n,
            p,
            replications: 50,
            seed,
            n_continuous: None,
            lambda_bounds: (1.0, 200.0),
            beta_sd: 0.5,
            true_beta: None,
        }
    }

    pub fn continuous_columns(&self) -> usize {
        self.n_continuous
            .unwrap_or(self.p.saturating_sub(1).div_ceil(2))
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lambda_bounds;
        if self.n == 0 || self.p == 0 {
            return Err(Error::argument("simulation needs n ≥ 1 and p ≥ 1"));
        }
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::argument(format!("invalid λ bounds ({lo}, {hi})")));
        }
        if !(self.beta_sd > 0.0) {
            return Err(Error::argument("beta_sd must be positive"));
        }
        if self.continuous_columns() > self.p - 1 {
            return Err(Error::argument(format!(
                "{} continuous columns requested but only {} non-intercept columns",
                self.continuous_columns(),
                self.p - 1
            )));
        }
        if let Some(b) = &self.true_beta {
            crate::error::check_len("true_beta", b.len(), self.p)?;
        }
        Ok(())
    }

    pub fn column_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT_NAME.to_string())
            .chain((1..self.p).map(|j| format!("x{j}")))
            .collect()
    }
}

fn draw_covariates<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> Matrix {
    let (n, p) = (design.n, design.p);
    let n_cont = design.continuous_columns();
    let mut x = Matrix::zeros(n, p);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    let mut col = vec![0.0; n];
    for j in 1..p {
        if j <= n_cont {
            fill_normal(rng, &mut col);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            for v in col.iter_mut() {
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        } else {
            // uniform over two levels; redraw constant columns when n allows
            loop {
                for v in col.iter_mut() {
                    *v = if rng.random::<bool>() { 1.0 } else { 0.0 };
                }
                let ones = col.iter().filter(|v| **v == 1.0).count();
                if n < 2 || (ones > 0 && ones < n) {
                    break;
                }
            }
        }
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    x
}

fn in_bounds(eta: &[f64], (lo, hi): (f64, f64)) -> bool {
    eta.iter().all(|e| {
        let l = e.exp();
        l >= lo && l <= hi
    })
}

/// Draws a dataset satisfying `lo ≤ λ_i ≤ hi` for every observation.
///
/// Slopes are drawn from `N(0, beta_sd²)` and shrunk by the largest `s ≤ 1`
/// for which the spread of the linear predictor fits inside
/// `[ln lo, ln hi]`; the intercept then places the predictor uniformly
/// within the remaining slack. Draws needing `s < 0.05` are discarded.
pub fn simulate_dataset<R: Rng + ?Sized>(
    design: &SimDesign,
    rng: &mut R,
) -> Result<(Dataset, Vec<f64>)> {
    design.validate()?;
    let (lo, hi) = design.lambda_bounds;
    let x = draw_covariates(design, rng);
    let beta = match &design.true_beta {
        Some(b) => {
            let eta = x.matvec(b);
            if !in_bounds(&eta, design.lambda_bounds) {
                return Err(Error::Data(format!(
                    "the supplied coefficients put λ outside [{lo}, {hi}]"
                )));
            }
            b.clone()
        }
        None => draw_beta(design, &x, rng)?,
    };
    let eta = x.matvec(&beta);
    let y = eta
        .iter()
        .map(|e| sample_poisson(e.exp(), rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::new(y, x, design.column_names())?, beta))
}

fn draw_beta<R: Rng + ?Sized>(design: &SimDesign, x: &Matrix, rng: &mut R) -> Result<Vec<f64>> {
    let (lo, hi) = design.lambda_bounds;
    let width = (hi / lo).ln();
    let p = design.p;
    for _ in 0..MAX_REDRAWS {
        let mut slopes = vec![0.0; p];
        for b in slopes.iter_mut().skip(1) {
            *b = design.beta_sd * sample_normal(rng);
        }
        let eta = x.matvec(&slopes);
        let (min, max) = eta
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let range = max - min;
        let s = if range > 0.0 {
            (width / range).min(1.0)
        } else {
            1.0
        };
        if s < MIN_SCALE {
            continue;
        }
        let slack = (width - s * range).max(0.0);
        let intercept = lo.ln() - s * min + rng.random::<f64>() * slack;
        let mut beta: Vec<f64> = slopes.iter().map(|b| s * b).collect();
        beta[0] = intercept;
        if in_bounds(&x.matvec(&beta), design.lambda_bounds) {
            return Ok(beta);
        }
    }
    Err(Error::Data(format!(
        "could not satisfy λ ∈ [{lo}, {hi}] after {MAX_REDRAWS} coefficient draws"
    )))
}

/// Metropolis sampler with a spherical Gaussian random-walk proposal of
/// standard deviation `step_scale/√p` per coordinate.
pub fn random_walk_mh(
    data: &Dataset,
    prior: &PriorSpec,
    config: &MHConfig,
    step_scale: f64,
) -> Result<ChainOutput> {
    if !(step_scale > 0.0) || !step_scale.is_finite() {
        return Err(Error::argument(format!(
            "step_scale must be positive, got {step_scale}"
        )));
    }
    config.validate()?;
    prior.validate(data.p())?;
    let p = data.p();
    let sd = step_scale / (p as f64).sqrt();
    let mut rng = rng_from_seed(config.seed);
    let mut beta = config.initial_beta(p)?;
    let mut log_lik = log_poisson_likelihood(&beta, data)?;
    let (tau, mut hs_state) = match prior {
        PriorSpec::Horseshoe { tau } => (*tau, Some(HorseshoeState::new(p))),
        PriorSpec::Gaussian(_) => (0.0, None),
    };
    let retained = config.retained();
    let mut draws = Vec::with_capacity(retained * p);
    let mut trace = config
        .keep_burnin
        .then(|| Vec::with_capacity(config.iterations * p));
    let mut prior_trace = hs_state.as_ref().map(|_| Vec::with_capacity(retained * p));
    let mut accepted = Vec::with_capacity(config.iterations);
    let mut candidate = vec![0.0; p];

    let start = Instant::now();
    for t in 0..config.iterations {
        let effective: std::borrow::Cow<GaussianPriorParams> = match (prior, hs_state.as_ref()) {
            (PriorSpec::Gaussian(g), _) => std::borrow::Cow::Borrowed(g),
            (_, Some(state)) => std::borrow::Cow::Owned(horseshoe_prior(tau, &state.eta2)?),
            (_, None) => unreachable!("horseshoe state initialised above"),
        };
        fill_normal(&mut rng, &mut candidate);
        for (c, b) in candidate.iter_mut().zip(&beta) {
            *c = b + sd * *c;
        }
        let log_u = rng.random::<f64>().ln();
        let cand_lik = log_poisson_likelihood(&candidate, data)?;
        let ok = if cand_lik == f64::NEG_INFINITY {
            false
        } else {
            let log_alpha = cand_lik + log_gaussian_prior(&candidate, &effective)?
                - log_lik
                - log_gaussian_prior(&beta, &effective)?;
            log_alpha >= 0.0 || log_u < log_alpha
        };
        if ok {
            beta.copy_from_slice(&candidate);
            log_lik = cand_lik;
        }
        accepted.push(ok);
        if let Some(state) = hs_state.as_mut() {
            *state = horseshoe_update(&beta, state, tau, &mut rng)?;
        }
        if let Some(tr) = trace.as_mut() {
            tr.extend_from_slice(&beta);
        }
        if t >= config.burnin {
            draws.extend_from_slice(&beta);
            if let (Some(pt), Some(state)) = (prior_trace.as_mut(), hs_state.as_ref()) {
                pt.extend_from_slice(&state.eta2);
            }
        }
    }
    let elapsed_seconds = start.elapsed().as_secs_f64();
    let n_acc = accepted.iter().filter(|a| **a).count();
    Ok(ChainOutput {
        draws: Matrix::from_row_major(retained, p, draws)?,
        trace: trace
            .map(|tr| Matrix::from_row_major(config.iterations, p, tr))
            .transpose()?,
        acceptance_rate: n_acc as f64 / config.iterations as f64,
        accepted,
        elapsed_seconds,
        prior_trace: prior_trace
            .map(|pt| Matrix::from_row_major(retained, p, pt))
            .transpose()?,
        failures: 0,
        tuning: TuningStats::default(),
    })
}

/// Sampler compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PgMh,
    AdaptiveIs,
    /// Random walk with `step_scale = 2.38/√p`.
    RwMh,
    /// Random walk with `step_scale = 1`.
    RwMhUntuned,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::PgMh,
        Method::AdaptiveIs,
        Method::RwMh,
        Method::RwMhUntuned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PgMh => "pg_mh",
            Method::AdaptiveIs => "adaptive_is",
            Method::RwMh => "rw_mh",
            Method::RwMhUntuned => "rw_mh_untuned",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Method::PgMh => 1,
            Method::AdaptiveIs => 2,
            Method::RwMh => 3,
            Method::RwMhUntuned => 4,
        }
    }

    /// Parses a comma-separated list; `rw_mh` brings in both random-walk
    /// variants. Duplicates are dropped, order is preserved.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let ms: &[Method] = match part.parse::<Method>()? {
                Method::RwMh => &[Method::RwMh, Method::RwMhUntuned],
                Method::PgMh => &[Method::PgMh],
                Method::AdaptiveIs => &[Method::AdaptiveIs],
                Method::RwMhUntuned => &[Method::RwMhUntuned],
            };
            for m in ms {
                if !out.contains(m) {
                    out.push(*m);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::argument("no benchmark methods given"));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchPrior {
    Gaussian {
        variance: f64,
    },
    /// τ from `tau_optimal(n, min(p, n − 1))` unless given.
    Horseshoe {
        tau: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub d: f64,
    pub seed: u64,
    pub prior: BenchPrior,
    pub ess_aggregation: EssAggregation,
    pub init: InitStrategy,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            iterations: 10_000,
            burnin: 5_000,
            d: 0.1,
            seed: 1,
            prior: BenchPrior::Gaussian { variance: 2.0 },
            ess_aggregation: EssAggregation::Min,
            init: InitStrategy::Mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub replicate: usize,
    pub elapsed_seconds: f64,
    pub min_ess: f64,
    pub time_per_independent_sample: f64,
    pub acceptance_rate: Option<f64>,
    pub weight_ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFailure {
    pub method: Option<Method>,
    pub n: usize,
    pub p: usize,
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMedian {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub runs: usize,
    pub median_time_per_independent_sample: f64,
    pub median_min_ess: f64,
    pub median_elapsed_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<BenchFailure>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

impl BenchResult {
    /// Per (method, n, p) medians over replicates, in first-seen order.
    pub fn medians(&self) -> Vec<CellMedian> {
        let mut keys: Vec<(Method, usize, usize)> = Vec::new();
        for r in &self.rows {
            let k = (r.method, r.n, r.p);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(method, n, p)| {
                let rows: Vec<&BenchRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.method == method && r.n == n && r.p == p)
                    .collect();
                CellMedian {
                    method,
                    n,
                    p,
                    runs: rows.len(),
                    median_time_per_independent_sample: median(
                        rows.iter().map(|r| r.time_per_independent_sample).collect(),
                    ),
                    median_min_ess: median(rows.iter().map(|r| r.min_ess).collect()),
                    median_elapsed_seconds: median(
                        rows.iter().map(|r| r.elapsed_seconds).collect(),
                    ),
                }
            })
            .collect()
    }

    pub fn median_tpis(&self, method: Method, n: usize, p: usize) -> Option<f64> {
        self.medians()
            .into_iter()
            .find(|c| c.method == method && c.n == n && c.p == p)
            .map(|c| c.median_time_per_independent_sample)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records(out, &self.rows)
    }

    pub fn write_medians_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records(out, &self.medians())
    }
}

fn write_records<W: Write, T: Serialize>(out: W, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// Seed of the data stream for one replicate of a cell.
pub fn replicate_seed(base: u64, n: usize, p: usize, replicate: usize) -> u64 {
    stream_seed(base, &[n as u64, p as u64, replicate as u64])
}

fn method_seed(base: u64, n: usize, p: usize, replicate: usize, method: Method) -> u64 {
    stream_seed(
        base,
        &[n as u64, p as u64, replicate as u64, method.stream()],
    )
}

/// Summary, per-coordinate ESS, acceptance rate and weight ESS of one run.
type MethodRun = (f64, Vec<f64>, Option<f64>, Option<f64>);

/// A coordinate that never moves after burn-in holds a single distinct
/// value; its ESS is taken as 1 rather than the degenerate-series `T`.
fn run_method(
    method: Method,
    data: &Dataset,
    prior: &PriorSpec,
    config: &MHConfig,
) -> Result<MethodRun> {
    let names = data.column_names().to_vec();
    let p = data.p();
    let (summary, acceptance, frozen) = match method {
        Method::AdaptiveIs => {
            let out = is_run(data, prior, config)?;
            (summarize(&out, &names, 0.95)?, None, vec![false; p])
        }
        _ => {
            let out = match method {
                Method::PgMh => mh_run(data, prior, config)?,
                Method::RwMh => random_walk_mh(data, prior, config, 2.38 / (p as f64).sqrt())?,
                _ => random_walk_mh(data, prior, config, 1.0)?,
            };
            let frozen = (0..p)
                .map(|j| {
                    let c = out.draws.column(j);
                    c.iter().all(|v| *v == c[0])
                })
                .collect();
            (
                summarize(&out, &names, 0.95)?,
                Some(out.acceptance_rate),
                frozen,
            )
        }
    };
    let ess = summary
        .coefficients
        .iter()
        .zip(frozen)
        .map(|(c, f)| if f { 1.0 } else { c.ess })
        .collect();
    Ok((summary.elapsed_seconds, ess, acceptance, summary.weight_ess))
}

/// Runs every method on every replicate of every cell. Replicates run in
/// parallel; rows come back in (cell, replicate, method) order. Failed
/// runs are recorded rather than aborting the study.
pub fn run_benchmark(
    grid: &[(usize, usize)],
    replications: usize,
    methods: &[Method],
    config: &BenchConfig,
) -> Result<BenchResult> {
    if grid.is_empty() || replications == 0 || methods.is_empty() {
        return Err(Error::argument(
            "benchmark needs a non-empty grid, replicates and methods",
        ));
    }
    MHConfig::new(config.iterations, config.burnin, config.d, config.seed)?;
    for &(n, p) in grid {
        SimDesign::new(n, p, config.seed).validate()?;
    }
    let jobs: Vec<(usize, usize, usize)> = grid
        .iter()
        .flat_map(|&(n, p)| (0..replications).map(move |r| (n, p, r)))
        .collect();
    let per_job: Vec<(Vec<BenchRow>, Vec<BenchFailure>)> = jobs
        .par_iter()
        .map(|&(n, p, replicate)| run_replicate(n, p, replicate, methods, config))
        .collect();
    let mut result = BenchResult::default();
    for (rows, failures) in per_job {
        result.rows.extend(rows);
        result.failures.extend(failures);
    }
    Ok(result)
}

fn run_replicate(
    n: usize,
    p: usize,
    replicate: usize,
    methods: &[Method],
    config: &BenchConfig,
) -> (Vec<BenchRow>, Vec<BenchFailure>) {
    let fail = |method: Option<Method>, e: Error| BenchFailure {
        method,
        n,
        p,
        replicate,
        message: e.to_string(),
    };
    let mut rng = rng_from_seed(replicate_seed(config.seed, n, p, replicate));
    let design = SimDesign::new(n, p, config.seed);
    let data = match simulate_dataset(&design, &mut rng) {
        Ok((d, _)) => d,
        Err(e) => return (Vec::new(), vec![fail(None, e)]),
    };
    let prior = match &config.prior {
        BenchPrior::Gaussian { variance } => {
            GaussianPriorParams::isotropic(p, 0.0, *variance).map(PriorSpec::Gaussian)
        }
        BenchPrior::Horseshoe { tau: Some(tau) } => Ok(PriorSpec::Horseshoe { tau: *tau }),
        BenchPrior::Horseshoe { tau: None } => tau_optimal(n, p.min(n.saturating_sub(1)).max(1))
            .map(|tau| PriorSpec::Horseshoe { tau }),
    };
    let prior = match prior {
        Ok(pr) => pr,
        Err(e) => return (Vec::new(), vec![fail(None, e)]),
    };
    let init = match config.init.initial_beta(&data, &prior) {
        Ok(b) => b,
        Err(e) => return (Vec::new(), vec![fail(None, e)]),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &method in methods {
        let outcome = MHConfig::new(
            config.iterations,
            config.burnin,
            config.d,
            method_seed(config.seed, n, p, replicate, method),
        )
        .and_then(|mut mh| {
            mh.init_beta = Some(init.clone());
            run_method(method, &data, &prior, &mh)
        });
        match outcome {
            Ok((elapsed, ess, acceptance_rate, weight_ess)) => {
                let min_ess = EssAggregation::Min.apply(&ess);
                rows.push(BenchRow {
                    method,
                    n,
                    p,
                    replicate,
                    elapsed_seconds: elapsed,
                    min_ess,
                    time_per_independent_sample: crate::diagnostics::time_per_independent_sample(
                        elapsed,
                        &ess,
                        config.ess_aggregation,
                    ),
                    acceptance_rate,
                    weight_ess,
                })
            }
            Err(e) => failures.push(fail(Some(method), e)),
        }
    }
    (rows, failures)
}
