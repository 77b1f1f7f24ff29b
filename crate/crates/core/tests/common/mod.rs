//! Shared fixtures and numerical oracles for the integration tests. The
//! oracles re-derive the Poisson log posterior independently of the crate.
#![allow(dead_code)]

use pgpois::diagnostics::ess_chain;
use pgpois::{Dataset, GaussianPriorParams};

pub struct Toy {
    pub name: &'static str,
    pub data: Dataset,
    pub prior_var: f64,
}

impl Toy {
    pub fn prior(&self) -> GaussianPriorParams {
        GaussianPriorParams::isotropic(self.data.p(), 0.0, self.prior_var).unwrap()
    }
}

pub fn grid50() -> Vec<f64> {
    (0..50).map(|i| -1.5 + 3.0 * i as f64 / 49.0).collect()
}

const Y_C: [u64; 50] = [
    0, 1, 1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 2, 2, 1, 1, 0, 0, 1, 0, 2, 0, 1, 0, 1, 1, 3, 2, 1, 0, 2,
    3, 1, 2, 4, 1, 2, 3, 1, 0, 3, 0, 1, 1, 5, 4, 2, 3, 4,
];
const Y_2D: [u64; 50] = [
    1, 2, 1, 0, 1, 2, 0, 0, 1, 1, 1, 0, 0, 0, 1, 4, 1, 2, 0, 0, 2, 1, 1, 4, 1, 0, 1, 1, 4, 1, 2, 1,
    1, 0, 4, 2, 3, 2, 5, 2, 3, 2, 2, 5, 4, 4, 5, 3, 2, 2,
];

/// Intercept-only model with ten counts.
pub fn toy_intercept() -> Toy {
    let y = vec![2, 0, 3, 1, 4, 2, 1, 0, 2, 3];
    Toy {
        name: "n=10 intercept",
        data: Dataset::from_rows(y, &[[1.0]; 10]).unwrap(),
        prior_var: 1.0,
    }
}

/// Single slope through the origin, ten observations.
pub fn toy_slope10() -> Toy {
    let x = [-1.2, -0.8, -0.5, -0.2, 0.0, 0.3, 0.6, 0.9, 1.1, 1.5];
    let y = vec![0, 1, 0, 1, 1, 2, 2, 3, 4, 5];
    let rows: Vec<[f64; 1]> = x.iter().map(|v| [*v]).collect();
    Toy {
        name: "n=10 slope",
        data: Dataset::from_rows(y, &rows).unwrap(),
        prior_var: 1.0,
    }
}

/// Single slope through the origin, fifty observations.
pub fn toy_slope50() -> Toy {
    let rows: Vec<[f64; 1]> = grid50().iter().map(|v| [*v]).collect();
    Toy {
        name: "n=50 slope",
        data: Dataset::from_rows(Y_C.to_vec(), &rows).unwrap(),
        prior_var: 1.0,
    }
}

/// Intercept and slope, fifty observations.
pub fn toy_2d() -> Toy {
    let rows: Vec<[f64; 2]> = grid50().iter().map(|v| [1.0, *v]).collect();
    Toy {
        name: "n=50 intercept+slope",
        data: Dataset::from_rows(Y_2D.to_vec(), &rows).unwrap(),
        prior_var: 1.0,
    }
}

pub fn toys_1d() -> Vec<Toy> {
    vec![toy_intercept(), toy_slope10(), toy_slope50()]
}

fn ln_fact(k: u64) -> f64 {
    (1..=k).map(|v| (v as f64).ln()).sum()
}

/// Independent log posterior: Σ [y η − e^η − ln y!] − ½ Σ β²/v.
pub fn oracle_log_post(data: &Dataset, prior_var: f64, beta: &[f64], skip: Option<usize>) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n() {
        if Some(i) == skip {
            continue;
        }
        let row = data.x().row(i);
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let y = data.y()[i];
        total += y as f64 * eta - eta.exp() - ln_fact(y);
    }
    total - 0.5 * beta.iter().map(|b| b * b).sum::<f64>() / prior_var
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Mode of a smooth 1-D log density by golden-section search on `[lo, hi]`.
fn argmax_1d<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

pub struct Moments1d {
    pub mean: f64,
    pub sd: f64,
    pub mode: f64,
    pub log_max: f64,
}

/// Posterior mean and sd of a one-coefficient model by quadrature.
pub fn quad_1d(data: &Dataset, prior_var: f64, skip: Option<usize>) -> (Moments1d, f64) {
    let lp = |b: f64| oracle_log_post(data, prior_var, &[b], skip);
    let mode = argmax_1d(&lp, -10.0, 10.0);
    let log_max = lp(mode);
    let dens = |b: f64| (lp(b) - log_max).exp();
    let (a, b) = (mode - 10.0, mode + 10.0);
    let z = simpson(&dens, a, b, 1e-13);
    let mean = simpson(&|t| t * dens(t), a, b, 1e-13) / z;
    let var = simpson(&|t| (t - mean).powi(2) * dens(t), a, b, 1e-13) / z;
    (
        Moments1d {
            mean,
            sd: var.sqrt(),
            mode,
            log_max,
        },
        z.ln() + log_max,
    )
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Posterior means and sds of a two-coefficient model by tensor
/// Gauss–Legendre quadrature over a box of ±`half_width` around `center`.
pub fn quad_2d(
    data: &Dataset,
    prior_var: f64,
    center: [f64; 2],
    half_width: [f64; 2],
    nodes: usize,
) -> ([f64; 2], [f64; 2]) {
    let (x, w) = gauss_legendre(nodes);
    let log_c = oracle_log_post(data, prior_var, &center, None);
    let mut z = 0.0;
    let mut m = [0.0; 2];
    let mut s = [0.0; 2];
    for (xi, wi) in x.iter().zip(&w) {
        for (xj, wj) in x.iter().zip(&w) {
            let b = [
                center[0] + half_width[0] * xi,
                center[1] + half_width[1] * xj,
            ];
            let f = wi * wj * (oracle_log_post(data, prior_var, &b, None) - log_c).exp();
            z += f;
            for k in 0..2 {
                m[k] += f * b[k];
                s[k] += f * b[k] * b[k];
            }
        }
    }
    let mean = [m[0] / z, m[1] / z];
    let sd = [
        (s[0] / z - mean[0] * mean[0]).sqrt(),
        (s[1] / z - mean[1] * mean[1]).sqrt(),
    ];
    (mean, sd)
}

/// Monte Carlo standard errors of the mean and of the sd of a chain.
pub fn chain_mc_se(series: &[f64]) -> (f64, f64) {
    let t = series.len() as f64;
    let mean = series.iter().sum::<f64>() / t;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
    let ess = ess_chain(series).unwrap().ess;
    let sq: Vec<f64> = series.iter().map(|v| (v - mean).powi(2)).collect();
    let sq_mean = var;
    let sq_var = sq.iter().map(|v| (v - sq_mean).powi(2)).sum::<f64>() / t;
    let sq_ess = ess_chain(&sq).unwrap().ess;
    // delta method: se(sd) = se(var) / (2 sd)
    (
        (var / ess).sqrt(),
        (sq_var / sq_ess).sqrt() / (2.0 * var.sqrt()),
    )
}

/// Self-normalized importance-sampling mean with its delta-method SE.
pub fn weighted_mean_se(values: &[f64], log_weights: &[f64]) -> (f64, f64) {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mean = values.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>() / total;
    let se2 = values
        .iter()
        .zip(&w)
        .map(|(v, wi)| (wi / total).powi(2) * (v - mean).powi(2))
        .sum::<f64>();
    (mean, se2.sqrt())
}
