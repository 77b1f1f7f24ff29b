//! CSV ingestion with categorical encoding, run configuration and output
//! files.

use std::collections::BTreeSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::INTERCEPT_NAME;
use crate::diagnostics::{log_cpo, summarize, CpoResult, PosteriorSummary, SampleRef};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Dataset, GaussianPriorParams};
use crate::samplers::{
    is_run, mh_run, tau_optimal, ChainOutput, ISOutput, InitStrategy, MHConfig, PriorSpec,
};
use crate::tuning::{TuningPolicy, TuningStats};

pub const DRAWS_FILE: &str = "draws.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";
pub const CPO_FILE: &str = "cpo.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const LOG_WEIGHT_COLUMN: &str = "log_weight";
const RESPONSE_DEFAULT: &str = "y";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Response,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Rescale to mean 0 and variance 1 (numeric columns only).
    #[serde(default)]
    pub standardize: bool,
    /// Baseline level of a categorical column; the smallest label if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_level: Option<String>,
}

impl ColumnSpec {
    fn with(name: &str, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind,
            standardize: false,
            reference_level: None,
        }
    }

    pub fn response(name: &str) -> Self {
        Self::with(name, ColumnKind::Response)
    }

    pub fn numeric(name: &str) -> Self {
        Self::with(name, ColumnKind::Numeric)
    }

    pub fn standardized(name: &str) -> Self {
        ColumnSpec {
            standardize: true,
            ..Self::numeric(name)
        }
    }

    pub fn categorical(name: &str, reference_level: Option<&str>) -> Self {
        ColumnSpec {
            reference_level: reference_level.map(str::to_string),
            ..Self::with(name, ColumnKind::Categorical)
        }
    }
}

fn validate_specs(specs: &[ColumnSpec]) -> Result<()> {
    let responses = specs
        .iter()
        .filter(|s| s.kind == ColumnKind::Response)
        .count();
    if responses != 1 {
        return Err(Error::argument(format!(
            "exactly one response column is required, found {responses}"
        )));
    }
    let mut seen = BTreeSet::new();
    for s in specs {
        if !seen.insert(&s.name) {
            return Err(Error::argument(format!("column `{}` listed twice", s.name)));
        }
        if s.standardize && s.kind != ColumnKind::Numeric {
            return Err(Error::argument(format!(
                "column `{}`: only numeric columns can be standardized",
                s.name
            )));
        }
        if s.reference_level.is_some() && s.kind != ColumnKind::Categorical {
            return Err(Error::argument(format!(
                "column `{}`: reference level given for a non-categorical column",
                s.name
            )));
        }
    }
    Ok(())
}

/// Column specs used when none are configured: `y` is the response and
/// every other column is numeric.
pub fn default_specs(header: &[String]) -> Vec<ColumnSpec> {
    header
        .iter()
        .map(|h| {
            if h == RESPONSE_DEFAULT {
                ColumnSpec::response(h)
            } else {
                ColumnSpec::numeric(h)
            }
        })
        .collect()
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    specs: &[ColumnSpec],
    intercept: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(file, specs, intercept)
}

/// Builds a dataset from CSV text. An empty `specs` means
/// [`default_specs`]. Rows are numbered from 1, excluding the header.
pub fn parse_dataset<R: Read>(reader: R, specs: &[ColumnSpec], intercept: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read CSV header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let specs = if specs.is_empty() {
        default_specs(&header)
    } else {
        specs.to_vec()
    };
    validate_specs(&specs)?;
    let index: Vec<usize> = specs
        .iter()
        .map(|s| {
            header
                .iter()
                .position(|h| *h == s.name)
                .ok_or_else(|| Error::Parse {
                    row: 0,
                    column: s.name.clone(),
                    message: "unknown column".into(),
                })
        })
        .collect::<Result<_>>()?;

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); specs.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: r + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        for (k, &idx) in index.iter().enumerate() {
            cells[k].push(record.get(idx).unwrap_or("").trim().to_string());
        }
    }
    let n = cells.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::Data("the data file has no rows".into()));
    }

    let mut y = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    if intercept {
        columns.push((INTERCEPT_NAME.to_string(), vec![1.0; n]));
    }
    for (spec, col) in specs.iter().zip(&cells) {
        let bad = |row: usize, message: String| Error::Parse {
            row: row + 1,
            column: spec.name.clone(),
            message,
        };
        match spec.kind {
            ColumnKind::Response => {
                y = col
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        parse_count(c).ok_or_else(|| {
                            bad(i, format!("`{c}` is not a non-negative integer count"))
                        })
                    })
                    .collect::<Result<_>>()?;
            }
            ColumnKind::Numeric => {
                let mut values = col
                    .iter()
                    .enumerate()
                    .map(|(i, c)| match c.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(bad(i, format!("`{c}` is not a finite number"))),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if spec.standardize {
                    standardize(&mut values)
                        .map_err(|m| Error::Data(format!("column `{}`: {m}", spec.name)))?;
                }
                columns.push((spec.name.clone(), values));
            }
            ColumnKind::Categorical => {
                let levels: BTreeSet<&str> = col.iter().map(String::as_str).collect();
                let reference = match &spec.reference_level {
                    Some(r) if levels.contains(r.as_str()) => r.as_str(),
                    Some(r) => {
                        return Err(Error::Data(format!(
                            "column `{}`: reference level `{r}` does not occur",
                            spec.name
                        )))
                    }
                    None => levels.iter().next().copied().unwrap_or_default(),
                };
                for level in levels.iter().filter(|l| **l != reference) {
                    let dummy = col.iter().map(|c| (c == level) as u8 as f64).collect();
                    columns.push((format!("{}={}", spec.name, level), dummy));
                }
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::argument("the design has no columns"));
    }
    let p = columns.len();
    let mut x = Matrix::zeros(n, p);
    for (j, (_, values)) in columns.iter().enumerate() {
        for (i, v) in values.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    Dataset::new(y, x, columns.into_iter().map(|(name, _)| name).collect())
}

fn parse_count(cell: &str) -> Option<u64> {
    if let Ok(v) = cell.parse::<u64>() {
        return Some(v);
    }
    let v: f64 = cell.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53)).then_some(v as u64)
}

fn standardize(values: &mut [f64]) -> std::result::Result<(), String> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    for v in values.iter_mut() {
        *v -= mean;
    }
    // second pass removes the rounding left in the first mean
    let resid = values.iter().sum::<f64>() / n;
    for v in values.iter_mut() {
        *v -= resid;
    }
    let sd = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err("cannot standardize a constant column".into());
    }
    for v in values.iter_mut() {
        *v /= sd;
    }
    Ok(())
}

/// Writes the response (as `y`) followed by the design columns. An intercept
/// column is left out, so loading with `intercept = true` rebuilds the design.
pub fn write_dataset_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let keep: Vec<usize> = (0..data.p())
        .filter(|&j| {
            !(data.column_names()[j] == INTERCEPT_NAME
                && (0..data.n()).all(|i| data.x()[(i, j)] == 1.0))
        })
        .collect();
    let mut header = vec![RESPONSE_DEFAULT.to_string()];
    header.extend(keep.iter().map(|&j| data.column_names()[j].clone()));
    let mut records = Vec::with_capacity(data.n());
    for (i, y) in data.y().iter().enumerate() {
        let mut rec = vec![y.to_string()];
        rec.extend(keep.iter().map(|&j| data.x()[(i, j)].to_string()));
        records.push(rec);
    }
    write_csv(path, &header, records)
}

fn write_csv(path: &Path, header: &[String], records: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Mh,
    Is,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    /// Independent `N(mean, variance)` on every coefficient.
    Gaussian { mean: f64, variance: f64 },
    /// Exactly one of `p_n` (expected number of non-zero coefficients, giving
    /// `τ = tau_optimal(n, p_n)`) or `tau`.
    Horseshoe {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p_n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
    },
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::Gaussian {
            mean: 0.0,
            variance: 2.0,
        }
    }
}

impl PriorConfig {
    /// Parses `gaussian`, `gaussian:VAR`, `gaussian:MEAN,VAR`,
    /// `horseshoe:pn=K` or `horseshoe:tau=T`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::argument(format!("cannot parse prior `{s}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let prior = match kind.trim() {
            "gaussian" => {
                let parts: Vec<&str> = args.split(',').filter(|a| !a.trim().is_empty()).collect();
                match parts.as_slice() {
                    [] => PriorConfig::default(),
                    [v] => PriorConfig::Gaussian {
                        mean: 0.0,
                        variance: num(v)?,
                    },
                    [m, v] => PriorConfig::Gaussian {
                        mean: num(m)?,
                        variance: num(v)?,
                    },
                    _ => return Err(bad()),
                }
            }
            "horseshoe" => match args.split_once('=') {
                Some(("pn" | "p_n", k)) => PriorConfig::Horseshoe {
                    p_n: Some(k.trim().parse().map_err(|_| bad())?),
                    tau: None,
                },
                Some(("tau", t)) => PriorConfig::Horseshoe {
                    p_n: None,
                    tau: Some(num(t)?),
                },
                _ => return Err(bad()),
            },
            _ => return Err(bad()),
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorConfig::Gaussian { mean, variance } => {
                if !mean.is_finite() || !(variance > 0.0) || !variance.is_finite() {
                    return Err(Error::argument(format!(
                        "gaussian prior needs a finite mean and positive variance, got ({mean}, {variance})"
                    )));
                }
            }
            PriorConfig::Horseshoe { p_n, tau } => match (p_n, tau) {
                (Some(k), None) if k > 0 => {}
                (None, Some(t)) if t > 0.0 && t.is_finite() => {}
                _ => {
                    return Err(Error::argument(
                        "horseshoe prior needs exactly one of a positive p_n or a positive tau",
                    ))
                }
            },
        }
        Ok(())
    }

    pub fn to_spec(&self, n: usize, p: usize) -> Result<PriorSpec> {
        self.validate()?;
        match *self {
            PriorConfig::Gaussian { mean, variance } => Ok(PriorSpec::Gaussian(
                GaussianPriorParams::isotropic(p, mean, variance)?,
            )),
            PriorConfig::Horseshoe { p_n: Some(k), .. } => Ok(PriorSpec::Horseshoe {
                tau: tau_optimal(n, k)?,
            }),
            PriorConfig::Horseshoe { tau, .. } => Ok(PriorSpec::Horseshoe {
                tau: tau.unwrap_or_default(),
            }),
        }
    }
}

/// Everything needed to reproduce a `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub columns: Vec<ColumnSpec>,
    pub intercept: bool,
    pub prior: PriorConfig,
    pub sampler: SamplerKind,
    pub iterations: usize,
    pub burnin: usize,
    pub d: f64,
    pub seed: u64,
    pub level: f64,
    pub out: Option<PathBuf>,
    pub keep_burnin: bool,
    pub cpo: bool,
    pub init: InitStrategy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            columns: Vec::new(),
            intercept: true,
            prior: PriorConfig::default(),
            sampler: SamplerKind::Mh,
            iterations: 10_000,
            burnin: 5_000,
            d: TuningPolicy::default().d,
            seed: 1,
            level: 0.95,
            out: None,
            keep_burnin: false,
            cpo: false,
            init: InitStrategy::Zeros,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::argument(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.burnin >= self.iterations {
            return Err(Error::argument(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burnin, self.iterations
            )));
        }
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(Error::argument(format!(
                "d must be positive, got {}",
                self.d
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::argument(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        self.prior.validate()?;
        if !self.columns.is_empty() {
            validate_specs(&self.columns)?;
        }
        Ok(())
    }

    pub fn mh_config(&self) -> Result<MHConfig> {
        let mut c = MHConfig::new(self.iterations, self.burnin, self.d, self.seed)?;
        c.keep_burnin = self.keep_burnin;
        Ok(c)
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| Error::argument("no data file configured"))?;
        load_dataset(path, &self.columns, self.intercept)
    }
}

#[derive(Debug, Clone)]
pub enum SamplerOutput {
    Chain(ChainOutput),
    Importance(ISOutput),
}

impl SamplerOutput {
    pub fn as_ref(&self) -> SampleRef<'_> {
        match self {
            SamplerOutput::Chain(c) => SampleRef::Chain(c),
            SamplerOutput::Importance(o) => SampleRef::Importance(o),
        }
    }

    pub fn draws(&self) -> &Matrix {
        match self {
            SamplerOutput::Chain(c) => &c.draws,
            SamplerOutput::Importance(o) => &o.draws,
        }
    }

    pub fn tuning(&self) -> TuningStats {
        match self {
            SamplerOutput::Chain(c) => c.tuning,
            SamplerOutput::Importance(o) => o.tuning,
        }
    }

    pub fn failures(&self) -> u64 {
        match self {
            SamplerOutput::Chain(c) => c.failures,
            SamplerOutput::Importance(o) => o.failures,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub data: Dataset,
    pub output: SamplerOutput,
    pub summary: PosteriorSummary,
    pub cpo: Option<CpoResult>,
}

/// Loads the data, runs the configured sampler and summarizes it.
pub fn run_fit(config: &RunConfig) -> Result<FitResult> {
    config.validate()?;
    let data = config.load_data()?;
    let prior = config.prior.to_spec(data.n(), data.p())?;
    let mut mh = config.mh_config()?;
    mh.init_beta = Some(config.init.initial_beta(&data, &prior)?);
    let output = match config.sampler {
        SamplerKind::Mh => SamplerOutput::Chain(mh_run(&data, &prior, &mh)?),
        SamplerKind::Is => SamplerOutput::Importance(is_run(&data, &prior, &mh)?),
    };
    let summary = summarize(output.as_ref(), data.column_names(), config.level)?;
    let cpo = config
        .cpo
        .then(|| log_cpo(output.draws(), &data))
        .transpose()?;
    Ok(FitResult {
        data,
        output,
        summary,
        cpo,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub proposal_failures: u64,
    pub tuning: TuningStats,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub summary: PosteriorSummary,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lpml: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SummaryFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

fn fmt_row(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

pub fn write_draws_csv(
    path: &Path,
    names: &[String],
    draws: &Matrix,
    log_weights: Option<&[f64]>,
) -> Result<()> {
    let mut header = names.to_vec();
    if log_weights.is_some() {
        header.push(LOG_WEIGHT_COLUMN.into());
    }
    let records = draws
        .rows()
        .enumerate()
        .map(|(t, row)| {
            let mut rec = fmt_row(row);
            if let Some(lw) = log_weights {
                rec.push(lw[t].to_string());
            }
            rec
        })
        .collect();
    write_csv(path, &header, records)
}

/// Draws read back from `draws.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsFile {
    pub names: Vec<String>,
    pub draws: Matrix,
    pub log_weights: Option<Vec<f64>>,
}

pub fn read_draws_csv(path: impl AsRef<Path>) -> Result<DrawsFile> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut names: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let weighted = names.last().map(String::as_str) == Some(LOG_WEIGHT_COLUMN);
    if weighted {
        names.pop();
    }
    let p = names.len();
    let mut values = Vec::new();
    let mut log_weights = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: r + 1,
                column: names
                    .get(j)
                    .cloned()
                    .unwrap_or_else(|| LOG_WEIGHT_COLUMN.into()),
                message: format!("`{cell}` is not a number"),
            })?;
            if j < p {
                values.push(v);
            } else {
                log_weights.push(v);
            }
        }
        rows += 1;
    }
    Ok(DrawsFile {
        names,
        draws: Matrix::from_row_major(rows, p, values)?,
        log_weights: weighted.then_some(log_weights),
    })
}

/// Writes `draws.csv`, `summary.json`, `config.json` and, when present,
/// `cpo.csv` and `trace.csv`. Returns the paths written.
pub fn write_outputs(
    output: SampleRef<'_>,
    summary: &PosteriorSummary,
    config: &RunConfig,
    cpo: Option<&CpoResult>,
    outdir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let outdir = outdir.as_ref();
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let names: Vec<String> = summary
        .coefficients
        .iter()
        .map(|c| c.name.clone())
        .collect();
    let mut written = Vec::new();

    let draws_path = outdir.join(DRAWS_FILE);
    let (draws, log_weights, trace, stats) = match output {
        SampleRef::Chain(c) => (
            &c.draws,
            None,
            c.trace.as_ref(),
            SamplerStats {
                proposal_failures: c.failures,
                tuning: c.tuning,
            },
        ),
        SampleRef::Importance(o) => (
            &o.draws,
            Some(o.log_weights.as_slice()),
            None,
            SamplerStats {
                proposal_failures: o.failures,
                tuning: o.tuning,
            },
        ),
    };
    write_draws_csv(&draws_path, &names, draws, log_weights)?;
    written.push(draws_path);

    if let Some(tr) = trace {
        let path = outdir.join(TRACE_FILE);
        write_draws_csv(&path, &names, tr, None)?;
        written.push(path);
    }

    if let Some(c) = cpo {
        let path = outdir.join(CPO_FILE);
        let header = ["observation", "log_cpo", "cpo"].map(String::from);
        let records = c
            .log_cpo
            .iter()
            .enumerate()
            .map(|(i, l)| vec![(i + 1).to_string(), l.to_string(), l.exp().to_string()])
            .collect();
        write_csv(&path, &header, records)?;
        written.push(path);
    }

    let file = SummaryFile {
        summary: summary.clone(),
        config: config.clone(),
        sampler: Some(stats),
        lpml: cpo.map(CpoResult::lpml),
        warnings: cpo.map(CpoResult::warnings).unwrap_or_default(),
    };
    let path = outdir.join(SUMMARY_FILE);
    write_json(&path, &file)?;
    written.push(path);
    let path = outdir.join(CONFIG_FILE);
    write_json(&path, config)?;
    written.push(path);
    Ok(written)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, specs: &[ColumnSpec]) -> Result<Dataset> {
        parse_dataset(text.as_bytes(), specs, true)
    }

    #[test]
    fn categorical_dummies_against_reference() {
        let text = "y,x\n1,b\n2,a\n0,c\n3,b\n";
        let specs = [
            ColumnSpec::response("y"),
            ColumnSpec::categorical("x", None),
        ];
        let d = parse(text, &specs).unwrap();
        assert_eq!(d.column_names(), &[INTERCEPT_NAME, "x=b", "x=c"]);
        assert_eq!(d.x().column(1), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.x().column(2), vec![0.0, 0.0, 1.0, 0.0]);
        let specs = [
            ColumnSpec::response("y"),
            ColumnSpec::categorical("x", Some("c")),
        ];
        let d = parse(text, &specs).unwrap();
        assert_eq!(d.column_names(), &[INTERCEPT_NAME, "x=a", "x=b"]);
        let specs = [
            ColumnSpec::response("y"),
            ColumnSpec::categorical("x", Some("z")),
        ];
        assert!(matches!(parse(text, &specs), Err(Error::Data(_))));
    }

    #[test]
    fn standardized_column_moments() {
        let text = "y,z\n1,3.5\n2,10\n0,-4\n3,0.25\n5,7\n";
        let specs = [ColumnSpec::response("y"), ColumnSpec::standardized("z")];
        let d = parse(text, &specs).unwrap();
        let c = d.x().column(1);
        let m = c.iter().sum::<f64>() / 5.0;
        let v = c.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 5.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_cells_report_coordinates() {
        let specs = [ColumnSpec::response("y"), ColumnSpec::numeric("z")];
        match parse("y,z\n1,2\n2.5,1\n", &specs) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "y")),
            other => panic!("{other:?}"),
        }
        match parse("y,z\n1,2\n-1,1\n", &specs) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        match parse("y,z\n1,abc\n", &specs) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (1, "z")),
            other => panic!("{other:?}"),
        }
        let specs = [ColumnSpec::response("y"), ColumnSpec::numeric("w")];
        assert!(matches!(
            parse("y,z\n1,2\n", &specs),
            Err(Error::Parse { .. })
        ));
        assert!(parse("y,z\n3.0,2\n", &[]).is_ok());
    }

    #[test]
    fn spec_validation() {
        let two = [ColumnSpec::response("y"), ColumnSpec::response("z")];
        assert!(matches!(parse("y,z\n1,2\n", &two), Err(Error::Argument(_))));
        let mut cat = ColumnSpec::categorical("z", None);
        cat.standardize = true;
        assert!(parse("y,z\n1,2\n", &[ColumnSpec::response("y"), cat]).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let text = "y,x,g\n1,0.1,a\n2,-1e-7,b\n0,3.333333333333333,a\n7,2.5e10,c\n";
        let specs = [
            ColumnSpec::response("y"),
            ColumnSpec::numeric("x"),
            ColumnSpec::categorical("g", None),
        ];
        let d = parse(text, &specs).unwrap();
        let path = dir.path().join("d.csv");
        write_dataset_csv(&d, &path).unwrap();
        let back = load_dataset(&path, &[], true).unwrap();
        assert_eq!(back.y(), d.y());
        assert_eq!(back.x(), d.x());
        assert_eq!(back.column_names(), d.column_names());
        let path2 = dir.path().join("d2.csv");
        write_dataset_csv(&back, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn prior_strings() {
        assert_eq!(
            PriorConfig::parse("gaussian").unwrap(),
            PriorConfig::default()
        );
        assert_eq!(
            PriorConfig::parse("gaussian:1,4").unwrap(),
            PriorConfig::Gaussian {
                mean: 1.0,
                variance: 4.0
            }
        );
        assert_eq!(
            PriorConfig::parse("horseshoe:pn=2").unwrap(),
            PriorConfig::Horseshoe {
                p_n: Some(2),
                tau: None
            }
        );
        assert!(PriorConfig::parse("horseshoe").is_err());
        assert!(PriorConfig::parse("gaussian:-1").is_err());
        assert!(PriorConfig::parse("laplace").is_err());
    }

    #[test]
    fn config_json_defaults_and_validation() {
        let c: RunConfig =
            serde_json::from_str(r#"{"seed": 9, "prior": {"kind": "horseshoe", "p_n": 2}}"#)
                .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.iterations, 10_000);
        c.validate().unwrap();
        let bad = RunConfig {
            burnin: 10_000,
            ..RunConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Argument(_))));
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
    }
}
