//! Kriging surrogate with ARD length-scales and a constant mean.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::lhs::lhs_sample;
use super::linalg::{cholesky, dot, solve_lower, solve_upper_t};

pub const MIN_NUGGET: f64 = 1e-10;
pub const MAX_NUGGET: f64 = 1e-2;
const LENGTHSCALE_BOUNDS: (f64, f64) = (0.01, 10.0);
const SIGNAL_BOUNDS: (f64, f64) = (0.01, 100.0);
/// Range of the seeded start design.
const START_LENGTHSCALES: (f64, f64) = (0.05, 2.0);
const START_NUGGETS: (f64, f64) = (1e-8, 1e-2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    SquaredExponential,
    #[default]
    Matern52,
}

impl KernelKind {
    /// Correlation at scaled distance `r`.
    fn corr(self, r2: f64) -> f64 {
        match self {
            KernelKind::SquaredExponential => libm::exp(-0.5 * r2),
            KernelKind::Matern52 => {
                let s5r = libm::sqrt(5.0 * r2);
                (1.0 + s5r + 5.0 * r2 / 3.0) * libm::exp(-s5r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    /// Signal variance on the standardized scale.
    pub signal_var: f64,
    /// Additive diagonal term on the standardized scale.
    pub nugget: f64,
}

impl GpHyper {
    fn to_theta(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.lengthscales.iter().map(|&l| libm::log(l)).collect();
        t.push(libm::log(self.signal_var));
        t.push(libm::log(self.nugget));
        t
    }

    fn from_theta(t: &[f64]) -> Self {
        let d = t.len() - 2;
        Self {
            lengthscales: t[..d].iter().map(|&v| libm::exp(v)).collect(),
            signal_var: libm::exp(t[d]),
            nugget: libm::exp(t[d + 1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GpError {
    TooFewPoints(usize),
    DimensionMismatch,
    NonFinite,
    OutsideUnitCube { row: usize },
    SingularCovariance,
}

impl fmt::Display for GpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GpError::TooFewPoints(n) => write!(f, "need at least 2 observations, got {n}"),
            GpError::DimensionMismatch => f.write_str("inputs have inconsistent dimensions"),
            GpError::NonFinite => f.write_str("non-finite input or target"),
            GpError::OutsideUnitCube { row } => write!(f, "input row {row} lies outside the unit cube"),
            GpError::SingularCovariance => {
                write!(f, "covariance not positive definite even with nugget {MAX_NUGGET}")
            }
        }
    }
}

impl core::error::Error for GpError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFitOptions {
    pub kernel: KernelKind,
    /// Local searches started from a seeded stratified design (at least 8).
    pub n_starts: usize,
    pub seed: u64,
    /// Likelihood evaluations allowed per local search.
    pub max_evals: usize,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Matern52,
            n_starts: 8,
            seed: 0,
            max_evals: 400,
        }
    }
}

/// A fitted Gaussian-process model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    kind: KernelKind,
    hyper: GpHyper,
    mean: f64,
    scale: f64,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    /// Lower factor of `K + nugget·I`, row-major.
    chol: Vec<f64>,
    alpha: Vec<f64>,
    lml: f64,
}

fn kernel_matrix(x: &[Vec<f64>], kind: KernelKind, h: &GpHyper) -> Vec<f64> {
    let n = x.len();
    let inv: Vec<f64> = h.lengthscales.iter().map(|l| 1.0 / l).collect();
    let mut k = alloc::vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = h.signal_var + h.nugget;
        for j in 0..i {
            let v = h.signal_var * kind.corr(scaled_dist2(&x[i], &x[j], &inv));
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

fn scaled_dist2(a: &[f64], b: &[f64], inv_l: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(inv_l)
        .map(|((p, q), il)| {
            let t = (p - q) * il;
            t * t
        })
        .sum()
}

/// `(mean, scale, standardized y)`; `scale` is the population standard
/// deviation, or 1 for a constant target.
pub fn standardize(y: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    let s = libm::sqrt(var);
    let s = if s > 0.0 && s.is_finite() && s > 1e-12 * m.abs() { s } else { 1.0 };
    (m, s, y.iter().map(|v| (v - m) / s).collect())
}

/// Log marginal likelihood of standardized targets, or `None` if the
/// covariance does not factor.
pub fn log_marginal_likelihood(x: &[Vec<f64>], ys: &[f64], kind: KernelKind, h: &GpHyper) -> Option<f64> {
    let n = x.len();
    let l = cholesky(&kernel_matrix(x, kind, h), n)?;
    let alpha = solve_upper_t(&l, n, &solve_lower(&l, n, ys));
    let logdet: f64 = (0..n).map(|i| libm::log(l[i * n + i])).sum();
    let v = -0.5 * dot(ys, &alpha) - logdet - 0.5 * n as f64 * libm::log(core::f64::consts::TAU);
    v.is_finite().then_some(v)
}

/// The seeded start points of the likelihood search: a stratified design
/// over log length-scales in [0.05, 2] and log nugget in [1e-8, 1e-2],
/// with unit signal variance.
pub fn grid_starts(d: usize, opts: &GpFitOptions) -> Vec<GpHyper> {
    let n = opts.n_starts.max(8);
    let lerp = |(lo, hi): (f64, f64), u: f64| libm::exp(libm::log(lo) + u * (libm::log(hi) - libm::log(lo)));
    lhs_sample(n, d + 1, opts.seed)
        .points
        .into_iter()
        .map(|p| GpHyper {
            lengthscales: p[..d].iter().map(|&u| lerp(START_LENGTHSCALES, u)).collect(),
            signal_var: 1.0,
            nugget: lerp(START_NUGGETS, p[d]),
        })
        .collect()
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<usize, GpError> {
    if x.len() < 2 {
        return Err(GpError::TooFewPoints(x.len()));
    }
    if x.len() != y.len() {
        return Err(GpError::DimensionMismatch);
    }
    let d = x[0].len();
    if d == 0 {
        return Err(GpError::DimensionMismatch);
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(GpError::DimensionMismatch);
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite);
        }
        if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(GpError::OutsideUnitCube { row: i });
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GpError::NonFinite);
    }
    Ok(d)
}

/// Coordinate pattern search in log-hyperparameter space, maximizing.
fn pattern_search(theta: Vec<f64>, lo: &[f64], hi: &[f64], max_evals: usize, f: &dyn Fn(&[f64]) -> Option<f64>) -> (Vec<f64>, f64) {
    let mut theta = theta;
    let mut best = f(&theta).unwrap_or(f64::NEG_INFINITY);
    let mut evals = 1;
    let mut step = 1.0;
    while step > 1e-3 && evals < max_evals {
        let mut improved = false;
        for j in 0..theta.len() {
            for sign in [1.0, -1.0] {
                let v = (theta[j] + sign * step).clamp(lo[j], hi[j]);
                if v == theta[j] {
                    continue;
                }
                let mut cand = theta.clone();
                cand[j] = v;
                evals += 1;
                if let Some(val) = f(&cand) {
                    if val > best {
                        best = val;
                        theta = cand;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (theta, best)
}

/// Fits hyperparameters by maximizing the log marginal likelihood from
/// every start in [`grid_starts`] and keeping the best local optimum.
///
/// A constant target gets fixed hyperparameters (unit length-scales and
/// signal variance, minimum nugget) and predicts the constant.
pub fn gp_fit(x: &[Vec<f64>], y: &[f64], opts: &GpFitOptions) -> Result<GpModel, GpError> {
    let d = check_inputs(x, y)?;
    let (_, _, ys) = standardize(y);
    if ys.iter().all(|&v| v == 0.0) {
        let h = GpHyper {
            lengthscales: alloc::vec![1.0; d],
            signal_var: 1.0,
            nugget: MIN_NUGGET,
        };
        return GpModel::with_hyperparameters(x, y, opts.kernel, h);
    }
    let ln = libm::log;
    let mut lo = alloc::vec![ln(LENGTHSCALE_BOUNDS.0); d];
    let mut hi = alloc::vec![ln(LENGTHSCALE_BOUNDS.1); d];
    lo.extend([ln(SIGNAL_BOUNDS.0), ln(MIN_NUGGET)]);
    hi.extend([ln(SIGNAL_BOUNDS.1), ln(MAX_NUGGET)]);
    let objective = |t: &[f64]| log_marginal_likelihood(x, &ys, opts.kernel, &GpHyper::from_theta(t));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in grid_starts(d, opts) {
        let (theta, val) = pattern_search(start.to_theta(), &lo, &hi, opts.max_evals, &objective);
        if best.as_ref().is_none_or(|(_, b)| val > *b) {
            best = Some((theta, val));
        }
    }
    let (theta, val) = best.expect("at least one start");
    let h = if val.is_finite() {
        GpHyper::from_theta(&theta)
    } else {
        GpHyper {
            lengthscales: alloc::vec![1.0; d],
            signal_var: 1.0,
            nugget: MAX_NUGGET,
        }
    };
    GpModel::with_hyperparameters(x, y, opts.kernel, h)
}

impl GpModel {
    /// Conditions on `(x, y)` with the given hyperparameters. A failed
    /// factorization is retried with the nugget ×10 up to [`MAX_NUGGET`].
    pub fn with_hyperparameters(x: &[Vec<f64>], y: &[f64], kind: KernelKind, hyper: GpHyper) -> Result<Self, GpError> {
        let d = check_inputs(x, y)?;
        if hyper.lengthscales.len() != d {
            return Err(GpError::DimensionMismatch);
        }
        let (mean, scale, ys) = standardize(y);
        let n = x.len();
        let mut hyper = hyper;
        hyper.nugget = hyper.nugget.max(MIN_NUGGET);
        loop {
            if let Some(chol) = cholesky(&kernel_matrix(x, kind, &hyper), n) {
                let alpha = solve_upper_t(&chol, n, &solve_lower(&chol, n, &ys));
                let logdet: f64 = (0..n).map(|i| libm::log(chol[i * n + i])).sum();
                let lml = -0.5 * dot(&ys, &alpha) - logdet - 0.5 * n as f64 * libm::log(core::f64::consts::TAU);
                return Ok(Self {
                    kind,
                    hyper,
                    mean,
                    scale,
                    x: x.to_vec(),
                    y: y.to_vec(),
                    chol,
                    alpha,
                    lml,
                });
            }
            if hyper.nugget >= MAX_NUGGET {
                return Err(GpError::SingularCovariance);
            }
            hyper.nugget = (hyper.nugget * 10.0).min(MAX_NUGGET);
        }
    }

    /// Posterior mean and latent variance at `x`, in the units of `y`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let inv: Vec<f64> = self.hyper.lengthscales.iter().map(|l| 1.0 / l).collect();
        let ks: Vec<f64> = self
            .x
            .iter()
            .map(|xi| self.hyper.signal_var * self.kind.corr(scaled_dist2(xi, x, &inv)))
            .collect();
        let mu = dot(&ks, &self.alpha);
        let v = solve_lower(&self.chol, n, &ks);
        let var = (self.hyper.signal_var - dot(&v, &v)).max(0.0);
        (self.mean + self.scale * mu, self.scale * self.scale * var)
    }

    pub fn kernel(&self) -> KernelKind {
        self.kind
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    /// Constant mean `m` of the target.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standardization scale of the target.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Prior variance in the units of `y`.
    pub fn prior_variance(&self) -> f64 {
        self.scale * self.scale * self.hyper.signal_var
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.hyper.lengthscales.len()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Kernel value between two inputs on the standardized scale.
    pub fn kernel_value(&self, a: &[f64], b: &[f64]) -> f64 {
        let inv: Vec<f64> = self.hyper.lengthscales.iter().map(|l| 1.0 / l).collect();
        self.hyper.signal_var * self.kind.corr(scaled_dist2(a, b, &inv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| alloc::vec![i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn constant_target() {
        let x = grid1(5);
        let m = gp_fit(&x, &[0.3; 5], &GpFitOptions::default()).unwrap();
        for xi in &x {
            let (mu, var) = m.predict(xi);
            assert!((mu - 0.3).abs() < 1e-12);
            assert!(var <= m.prior_variance() * 1e-6);
        }
        assert!((m.predict(&[0.37]).0 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn fit_beats_every_start() {
        let x = alloc::vec![alloc::vec![0.1], alloc::vec![0.5], alloc::vec![0.8]];
        let y: Vec<f64> = x.iter().map(|p| libm::sin(3.0 * p[0])).collect();
        for kernel in [KernelKind::SquaredExponential, KernelKind::Matern52] {
            let opts = GpFitOptions {
                kernel,
                ..GpFitOptions::default()
            };
            let m = gp_fit(&x, &y, &opts).unwrap();
            let (_, _, ys) = standardize(&y);
            for s in grid_starts(1, &opts) {
                if let Some(v) = log_marginal_likelihood(&x, &ys, kernel, &s) {
                    assert!(m.log_marginal_likelihood() >= v - 1e-12);
                }
            }
        }
    }

    #[test]
    fn duplicate_points_need_nugget() {
        let x = alloc::vec![alloc::vec![0.5], alloc::vec![0.5], alloc::vec![0.2]];
        let h = GpHyper {
            lengthscales: alloc::vec![0.3],
            signal_var: 1.0,
            nugget: 0.0,
        };
        let m = GpModel::with_hyperparameters(&x, &[1.0, 1.0, 0.0], KernelKind::SquaredExponential, h).unwrap();
        assert!(m.hyper().nugget >= MIN_NUGGET);
    }

    #[test]
    fn far_field_reverts_to_prior() {
        let x = alloc::vec![alloc::vec![0.0, 0.0], alloc::vec![0.05, 0.0], alloc::vec![0.0, 0.05]];
        let h = GpHyper {
            lengthscales: alloc::vec![0.01, 0.01],
            signal_var: 1.3,
            nugget: 1e-8,
        };
        let y = [1.0, 2.0, 4.0];
        let m = GpModel::with_hyperparameters(&x, &y, KernelKind::Matern52, h).unwrap();
        let (mu, var) = m.predict(&[1.0, 1.0]);
        assert!((mu - m.mean()).abs() < 1e-9);
        assert!((var / m.prior_variance() - 1.0).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_inputs() {
        let o = GpFitOptions::default();
        assert_eq!(gp_fit(&[alloc::vec![0.1]], &[1.0], &o).unwrap_err(), GpError::TooFewPoints(1));
        assert!(matches!(
            gp_fit(&[alloc::vec![0.1], alloc::vec![1.5]], &[1.0, 2.0], &o),
            Err(GpError::OutsideUnitCube { row: 1 })
        ));
        assert_eq!(
            gp_fit(&[alloc::vec![0.1], alloc::vec![0.5]], &[1.0, f64::NAN], &o).unwrap_err(),
            GpError::NonFinite
        );
    }
}
