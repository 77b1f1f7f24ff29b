//! Command line front end: `simulate`, `fit`, `diagnose` and `benchmark`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bench::{run_benchmark, simulate_dataset, BenchConfig, BenchPrior, Method, SimDesign};
use crate::diagnostics::{log_cpo, summarize_draws};
use crate::error::{Error, Result};
use crate::io::{
    read_draws_csv, run_fit, write_dataset_csv, write_json, write_outputs, PriorConfig, RunConfig,
    SamplerKind, SummaryFile, DRAWS_FILE, SUMMARY_FILE,
};
use crate::kernels::rng_from_seed;

#[derive(Debug, Parser)]
#[command(
    name = "pgpois",
    version,
    about = "Bayesian Poisson regression samplers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (and its true coefficients) as CSV.
    Simulate {
        #[arg(long)]
        n: usize,
        /// Number of coefficients, intercept included.
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Number of continuous covariates (default ⌈(p−1)/2⌉).
        #[arg(long)]
        continuous: Option<usize>,
    },
    /// Run a sampler and write draws and a summary.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        d: Option<f64>,
        /// gaussian[:VAR | :MEAN,VAR], horseshoe:pn=K or horseshoe:tau=T
        #[arg(long)]
        prior: Option<String>,
        #[arg(long)]
        level: Option<f64>,
        /// mh or is
        #[arg(long)]
        sampler: Option<String>,
        #[arg(long)]
        keep_burnin: bool,
        #[arg(long)]
        cpo: bool,
        /// Start the chain at the posterior mode instead of zeros.
        #[arg(long)]
        init_mode: bool,
    },
    /// Recompute the summary (and optionally CPO) from a fit directory.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        /// Write summary.json (and cpo.csv) here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        cpo: bool,
    },
    /// Time-per-independent-sample study on synthetic data.
    Benchmark {
        /// e.g. "n=25,50;p=5,10"
        #[arg(long, default_value = "n=50;p=5")]
        grid: String,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value = "pg_mh,adaptive_is,rw_mh")]
        methods: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 5_000)]
        burnin: usize,
        #[arg(long, default_value_t = 0.1)]
        d: f64,
        /// gaussian[:VAR] or horseshoe[:tau=T]
        #[arg(long, default_value = "gaussian:2")]
        prior: String,
    },
}

/// Runs the command line with `args` (program name first) and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            n,
            p,
            seed,
            out,
            continuous,
        } => simulate(n, p, seed, &out, continuous),
        Command::Fit {
            data,
            config,
            out,
            seed,
            iterations,
            burnin,
            d,
            prior,
            level,
            sampler,
            keep_burnin,
            cpo,
            init_mode,
        } => {
            let mut c = match config {
                Some(path) => RunConfig::from_json_file(path)?,
                None => RunConfig::default(),
            };
            if data.is_some() {
                c.data = data;
            }
            if out.is_some() {
                c.out = out;
            }
            if let Some(v) = seed {
                c.seed = v;
            }
            if let Some(v) = iterations {
                c.iterations = v;
            }
            if let Some(v) = burnin {
                c.burnin = v;
            }
            if let Some(v) = d {
                c.d = v;
            }
            if let Some(v) = prior {
                c.prior = PriorConfig::parse(&v)?;
            }
            if let Some(v) = level {
                c.level = v;
            }
            if let Some(v) = sampler {
                c.sampler = match v.as_str() {
                    "mh" => SamplerKind::Mh,
                    "is" => SamplerKind::Is,
                    other => {
                        return Err(Error::argument(format!(
                            "unknown sampler `{other}` (mh or is)"
                        )))
                    }
                };
            }
            c.keep_burnin |= keep_burnin;
            c.cpo |= cpo;
            if init_mode {
                c.init = crate::samplers::InitStrategy::Mode;
            }
            fit(&c)
        }
        Command::Diagnose {
            input,
            out,
            level,
            cpo,
        } => diagnose(&input, out.as_deref(), level, cpo),
        Command::Benchmark {
            grid,
            reps,
            methods,
            seed,
            out,
            iterations,
            burnin,
            d,
            prior,
        } => {
            let grid = parse_grid(&grid)?;
            let methods = Method::parse_list(&methods)?;
            let prior = match PriorConfig::parse(&prior)? {
                PriorConfig::Gaussian {
                    mean: 0.0,
                    variance,
                } => BenchPrior::Gaussian { variance },
                PriorConfig::Horseshoe { tau, p_n: None } => BenchPrior::Horseshoe { tau },
                _ => {
                    return Err(Error::argument(
                        "benchmark priors are gaussian:VAR (zero mean) or horseshoe:tau=T",
                    ))
                }
            };
            let config = BenchConfig {
                iterations,
                burnin,
                d,
                seed,
                prior,
                ..BenchConfig::default()
            };
            benchmark(&grid, reps, &methods, &config, &out)
        }
    }
}

fn simulate(n: usize, p: usize, seed: u64, out: &Path, continuous: Option<usize>) -> Result<()> {
    let mut design = SimDesign::new(n, p, seed);
    design.n_continuous = continuous;
    let mut rng = rng_from_seed(seed);
    let (data, beta) = simulate_dataset(&design, &mut rng)?;
    write_dataset_csv(&data, out)?;
    let truth = out.with_extension("truth.json");
    let record = serde_json::json!({
        "seed": seed,
        "design": design,
        "true_beta": beta,
        "columns": data.column_names(),
    });
    write_json(&truth, &record)?;
    eprintln!("wrote {} and {}", out.display(), truth.display());
    Ok(())
}

fn fit(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let outdir = config
        .out
        .clone()
        .ok_or_else(|| Error::argument("no output directory (--out)"))?;
    let result = run_fit(config)?;
    if let Some(c) = &result.cpo {
        for w in c.warnings() {
            eprintln!("warning: {w}");
        }
    }
    let written = write_outputs(
        result.output.as_ref(),
        &result.summary,
        config,
        result.cpo.as_ref(),
        &outdir,
    )?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn diagnose(input: &Path, out: Option<&Path>, level: Option<f64>, want_cpo: bool) -> Result<()> {
    let previous = SummaryFile::read(input.join(SUMMARY_FILE))?;
    let draws = read_draws_csv(input.join(DRAWS_FILE))?;
    let prev = &previous.summary;
    let summary = summarize_draws(
        &draws.draws,
        draws.log_weights.as_deref(),
        &draws.names,
        level.unwrap_or(prev.level),
        prev.elapsed_seconds,
        prev.acceptance_rate,
        prev.ess_aggregation,
    )?;
    let cpo = if want_cpo {
        let data = previous.config.load_data()?;
        let c = log_cpo(&draws.draws, &data)?;
        for w in c.warnings() {
            eprintln!("warning: {w}");
        }
        Some(c)
    } else {
        None
    };
    let file = SummaryFile {
        summary,
        config: previous.config.clone(),
        sampler: previous.sampler.clone(),
        lpml: cpo.as_ref().map(|c| c.lpml()).or(previous.lpml),
        warnings: cpo.as_ref().map(|c| c.warnings()).unwrap_or_default(),
    };
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_json(&dir.join(SUMMARY_FILE), &file)?;
            if let Some(c) = &cpo {
                let text: String = std::iter::once("observation,log_cpo,cpo\n".to_string())
                    .chain(
                        c.log_cpo
                            .iter()
                            .enumerate()
                            .map(|(i, l)| format!("{},{},{}\n", i + 1, l, l.exp())),
                    )
                    .collect();
                let path = dir.join(crate::io::CPO_FILE);
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
        }
        None => {
            let text =
                serde_json::to_string_pretty(&file).map_err(|e| Error::Data(e.to_string()))?;
            println!("{text}");
        }
    }
    Ok(())
}

/// Parses `n=25,50;p=5,10` into the Cartesian product of the lists.
pub fn parse_grid(s: &str) -> Result<Vec<(usize, usize)>> {
    let bad = || {
        Error::argument(format!(
            "cannot parse grid `{s}` (expected e.g. n=50,100;p=5)"
        ))
    };
    let mut ns = None;
    let mut ps = None;
    for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, list) = part.split_once('=').ok_or_else(bad)?;
        let values = list
            .split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        match key.trim() {
            "n" => ns = Some(values),
            "p" => ps = Some(values),
            _ => return Err(bad()),
        }
    }
    let (ns, ps) = (ns.ok_or_else(bad)?, ps.ok_or_else(bad)?);
    Ok(ns
        .iter()
        .flat_map(|&n| ps.iter().map(move |&p| (n, p)))
        .collect())
}

fn benchmark(
    grid: &[(usize, usize)],
    reps: usize,
    methods: &[Method],
    config: &BenchConfig,
    out: &Path,
) -> Result<()> {
    let result = run_benchmark(grid, reps, methods, config)?;
    let file = fs::File::create(out).map_err(|e| Error::io(out, e))?;
    result.write_csv(file)?;
    let medians_path = out.with_extension("medians.csv");
    let file = fs::File::create(&medians_path).map_err(|e| Error::io(&medians_path, e))?;
    result.write_medians_csv(file)?;
    let config_path = out.with_extension("config.json");
    write_json(
        &config_path,
        &serde_json::json!({
            "grid": grid,
            "replications": reps,
            "methods": methods,
            "config": config,
        }),
    )?;
    for f in &result.failures {
        let method = f.method.map_or("data", |m| m.name());
        eprintln!(
            "failed: {method} n={} p={} replicate={}: {}",
            f.n, f.p, f.replicate, f.message
        );
    }
    println!("method,n,p,runs,median_time_per_independent_sample,median_min_ess");
    for m in result.medians() {
        println!(
            "{},{},{},{},{:.6e},{:.1}",
            m.method, m.n, m.p, m.runs, m.median_time_per_independent_sample, m.median_min_ess
        );
    }
    eprintln!(
        "wrote {}, {} and {}",
        out.display(),
        medians_path.display(),
        config_path.display()
    );
    Ok(())
}
