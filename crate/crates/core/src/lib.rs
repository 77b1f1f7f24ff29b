//! Bayesian Poisson log-linear regression with Pólya-Gamma based
//! Metropolis–Hastings and adaptive importance sampling.

// `!(x > 0.0)` is used on purpose throughout so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod proposal;
pub mod samplers;
pub mod special;
pub mod tuning;

pub use bench::{
    random_walk_mh, run_benchmark, simulate_dataset, BenchConfig, BenchResult, Method, SimDesign,
};
pub use diagnostics::{ess_chain, lpml, summarize, PosteriorSummary};
pub use error::{Error, Result};
pub use io::{load_dataset, run_fit, ColumnSpec, RunConfig};
pub use linalg::{Cholesky, Matrix};
pub use model::{posterior_mode, Dataset, GaussianPriorParams, ModelState};
pub use samplers::{is_run, mh_run, ChainOutput, ISOutput, InitStrategy, MHConfig, PriorSpec};
pub use tuning::TuningPolicy;
