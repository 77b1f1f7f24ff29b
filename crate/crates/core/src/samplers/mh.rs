//! Metropolis-Hastings with the Pólya-gamma expectation proposal.
//!
//! Each step draws `β*` from the proposal anchored at the current state,
//! rebuilds the proposal anchored at `β*` (with `r` recomputed there) for the
//! backward density, and accepts with probability
//! `min(1, π(β*)q(β|β*) / π(β)q(β*|β))`.

use std::time::Instant;

use rand::Rng;

use super::{horseshoe_prior, horseshoe_update, ChainOutput, HorseshoeState, MHConfig, PriorSpec};
use crate::error::{check_len, Result};
use crate::kernels::{fill_normal, rng_from_seed};
use crate::linalg::Matrix;
use crate::model::{log_gaussian_prior, log_poisson_likelihood, Dataset, GaussianPriorParams};
use crate::proposal::{build_proposal, proposal_logpdf, ProposalDensity};
use crate::tuning::{compute_r_vector_traced, TuningPolicy, TuningStats};

/// Everything one step produced, enough to replay the decision.
#[derive(Debug, Clone, PartialEq)]
pub struct MhStep {
    pub beta_next: Vec<f64>,
    pub accepted: bool,
    pub log_alpha: f64,
    /// The proposed point, `None` when the forward proposal could not be built.
    pub candidate: Option<Vec<f64>>,
    pub r_forward: Vec<f64>,
    pub r_backward: Option<Vec<f64>>,
    pub log_uniform: f64,
    /// A proposal build failed and the step was rejected.
    pub failed: bool,
}

/// State carried between steps so that each accepted backward proposal can
/// serve as the next forward proposal.
struct Current {
    beta: Vec<f64>,
    log_lik: f64,
    r: Vec<f64>,
    forward: Option<ProposalDensity>,
}

impl Current {
    fn new(
        beta: Vec<f64>,
        data: &Dataset,
        policy: &TuningPolicy,
        stats: &mut TuningStats,
    ) -> Result<Self> {
        let log_lik = log_poisson_likelihood(&beta, data)?;
        let r = compute_r_vector_traced(&beta, data, policy, stats)?;
        Ok(Current {
            beta,
            log_lik,
            r,
            forward: None,
        })
    }
}

fn log_target(log_lik: f64, beta: &[f64], prior: &GaussianPriorParams) -> Result<f64> {
    if log_lik == f64::NEG_INFINITY {
        return Ok(log_lik);
    }
    Ok(log_lik + log_gaussian_prior(beta, prior)?)
}

fn step<R: Rng + ?Sized>(
    current: &mut Current,
    data: &Dataset,
    prior: &GaussianPriorParams,
    policy: &TuningPolicy,
    rng: &mut R,
    stats: &mut TuningStats,
) -> Result<MhStep> {
    let forward = match current.forward.take() {
        Some(f) => f,
        None => match build_proposal(&current.beta, data, &current.r, prior) {
            Ok(f) => f,
            Err(_) => {
                return Ok(MhStep {
                    beta_next: current.beta.clone(),
                    accepted: false,
                    log_alpha: f64::NEG_INFINITY,
                    candidate: None,
                    r_forward: current.r.clone(),
                    r_backward: None,
                    log_uniform: 0.0,
                    failed: true,
                })
            }
        },
    };

    let mut z = vec![0.0; data.p()];
    fill_normal(rng, &mut z);
    let candidate = forward.transform(&z);
    let log_uniform = rng.random::<f64>().ln();

    let cand_lik = log_poisson_likelihood(&candidate, data)?;
    let mut result = MhStep {
        beta_next: current.beta.clone(),
        accepted: false,
        log_alpha: f64::NEG_INFINITY,
        candidate: Some(candidate.clone()),
        r_forward: current.r.clone(),
        r_backward: None,
        log_uniform,
        failed: false,
    };
    if cand_lik == f64::NEG_INFINITY {
        current.forward = Some(forward);
        return Ok(result);
    }

    let cand_r = compute_r_vector_traced(&candidate, data, policy, stats)?;
    let backward = match build_proposal(&candidate, data, &cand_r, prior) {
        Ok(b) => b,
        Err(_) => {
            result.failed = true;
            result.r_backward = Some(cand_r);
            current.forward = Some(forward);
            return Ok(result);
        }
    };

    let log_alpha = log_target(cand_lik, &candidate, prior)?
        - log_target(current.log_lik, &current.beta, prior)?
        + proposal_logpdf(&backward, &current.beta)?
        - proposal_logpdf(&forward, &candidate)?;
    let accepted = log_alpha >= 0.0 || log_uniform < log_alpha;
    result.log_alpha = log_alpha;
    result.accepted = accepted;
    result.r_backward = Some(cand_r.clone());
    if accepted {
        result.beta_next = candidate.clone();
        *current = Current {
            beta: candidate,
            log_lik: cand_lik,
            r: cand_r,
            forward: Some(backward),
        };
    } else {
        current.forward = Some(forward);
    }
    Ok(result)
}

/// A single Metropolis-Hastings transition from `beta_prev` under a fixed
/// Gaussian prior. Uses `p` standard normals and one uniform from `rng`.
pub fn mh_step<R: Rng + ?Sized>(
    beta_prev: &[f64],
    data: &Dataset,
    prior: &GaussianPriorParams,
    policy: &TuningPolicy,
    rng: &mut R,
) -> Result<MhStep> {
    check_len("beta", beta_prev.len(), data.p())?;
    let mut stats = TuningStats::default();
    let mut current = Current::new(beta_prev.to_vec(), data, policy, &mut stats)?;
    step(&mut current, data, prior, policy, rng, &mut stats)
}

/// Recomputes `log α` from stored states and stopping parameters.
pub fn log_acceptance_ratio(
    beta_prev: &[f64],
    candidate: &[f64],
    r_forward: &[f64],
    r_backward: &[f64],
    data: &Dataset,
    prior: &GaussianPriorParams,
) -> Result<f64> {
    let forward = build_proposal(beta_prev, data, r_forward, prior)?;
    let backward = build_proposal(candidate, data, r_backward, prior)?;
    let prev = log_target(log_poisson_likelihood(beta_prev, data)?, beta_prev, prior)?;
    let cand = log_target(log_poisson_likelihood(candidate, data)?, candidate, prior)?;
    Ok(
        cand - prev + proposal_logpdf(&backward, beta_prev)?
            - proposal_logpdf(&forward, candidate)?,
    )
}

/// Runs the chain. Under the horseshoe prior each β step is followed by a
/// Gibbs update of the local scales.
pub fn mh_run(data: &Dataset, prior: &PriorSpec, config: &MHConfig) -> Result<ChainOutput> {
    config.validate()?;
    prior.validate(data.p())?;
    let p = data.p();
    let mut rng = rng_from_seed(config.seed);
    let mut stats = TuningStats::default();
    let mut current = Current::new(config.initial_beta(p)?, data, &config.tuning, &mut stats)?;

    let retained = config.retained();
    let mut draws = Vec::with_capacity(retained * p);
    let mut trace = config
        .keep_burnin
        .then(|| Vec::with_capacity(config.iterations * p));
    let mut accepted = Vec::with_capacity(config.iterations);
    let mut failures = 0u64;
    let (tau, mut hs_state) = match prior {
        PriorSpec::Horseshoe { tau } => (*tau, Some(HorseshoeState::new(p))),
        PriorSpec::Gaussian(_) => (0.0, None),
    };
    let mut prior_trace = hs_state.as_ref().map(|_| Vec::with_capacity(retained * p));

    let start = Instant::now();
    for t in 0..config.iterations {
        let outcome = match (prior, hs_state.as_ref()) {
            (PriorSpec::Gaussian(g), _) => {
                step(&mut current, data, g, &config.tuning, &mut rng, &mut stats)?
            }
            (PriorSpec::Horseshoe { .. }, Some(state)) => {
                let effective = horseshoe_prior(tau, &state.eta2)?;
                // prior changed since the cached proposal was built
                current.forward = None;
                step(
                    &mut current,
                    data,
                    &effective,
                    &config.tuning,
                    &mut rng,
                    &mut stats,
                )?
            }
            (PriorSpec::Horseshoe { .. }, None) => {
                unreachable!("horseshoe state initialised above")
            }
        };
        if let Some(state) = hs_state.as_mut() {
            *state = horseshoe_update(&current.beta, state, tau, &mut rng)?;
        }
        failures += outcome.failed as u64;
        accepted.push(outcome.accepted);
        if let Some(tr) = trace.as_mut() {
            tr.extend_from_slice(&current.beta);
        }
        if t >= config.burnin {
            draws.extend_from_slice(&current.beta);
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
        acceptance_rate: n_acc as f64 / accepted.len() as f64,
        accepted,
        elapsed_seconds,
        prior_trace: prior_trace
            .map(|pt| Matrix::from_row_major(retained, p, pt))
            .transpose()?,
        failures,
        tuning: stats,
    })
}
