//! Scalar Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! Zero prior mean. Hyperparameters `{l_1..l_D, σ_f, σ_n}` live in log space
//! and are fitted by maximizing the log marginal likelihood with analytic
//! gradients and random restarts.

pub mod optim;

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use optim::{minimize_bounded, LbfgsOptions};

pub const MODEL_VERSION: u32 = 1;
/// Training sets above this size are stride-subsampled.
pub const MAX_TRAINING_ROWS: usize = 5000;
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("kernel matrix not positive definite even with jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least 2 training rows, got {0}")]
    InsufficientData(usize),
    #[error("non-finite training data")]
    NonFinite,
    #[error("model file version {found}, expected {MODEL_VERSION}")]
    VersionMismatch { found: u32 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
}

/// Which component of the error twist a model predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dof {
    Z,
    Pitch,
    Roll,
}

impl Dof {
    pub const ALL: [Dof; 3] = [Dof::Z, Dof::Pitch, Dof::Roll];

    /// Index into `[rho1, rho2, rho3, phi1, phi2, phi3]`.
    pub fn twist_index(self) -> usize {
        match self {
            Dof::Z => 2,
            Dof::Roll => 3,
            Dof::Pitch => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dof::Z => "z",
            Dof::Pitch => "pitch",
            Dof::Roll => "roll",
        }
    }

    pub fn parse(s: &str) -> Option<Dof> {
        Dof::ALL.into_iter().find(|d| d.name() == s)
    }
}

/// Kernel hyperparameters, stored as natural logarithms.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub log_length_scales: Vec<f64>,
    pub log_signal_std: f64,
    pub log_noise_std: f64,
}

impl Hyperparams {
    pub fn new(length_scales: &[f64], signal_std: f64, noise_std: f64) -> Self {
        Self {
            log_length_scales: length_scales.iter().map(|l| l.ln()).collect(),
            log_signal_std: signal_std.ln(),
            log_noise_std: noise_std.ln(),
        }
    }

    pub fn dim(&self) -> usize {
        self.log_length_scales.len()
    }

    pub fn length_scales(&self) -> Vec<f64> {
        self.log_length_scales.iter().map(|l| l.exp()).collect()
    }

    pub fn signal_std(&self) -> f64 {
        self.log_signal_std.exp()
    }

    pub fn noise_std(&self) -> f64 {
        self.log_noise_std.exp()
    }

    /// `[ln l_1 .. ln l_D, ln σ_f, ln σ_n]`
    pub fn to_log_vector(&self) -> DVector<f64> {
        let mut v = self.log_length_scales.clone();
        v.push(self.log_signal_std);
        v.push(self.log_noise_std);
        DVector::from_vec(v)
    }

    pub fn from_log_vector(v: &DVector<f64>) -> Self {
        let d = v.len() - 2;
        Self {
            log_length_scales: v.iter().take(d).copied().collect(),
            log_signal_std: v[d],
            log_noise_std: v[d + 1],
        }
    }

    /// Length scales from the input spread, σ_f from the target spread, σ_n = 0.1·σ_f.
    pub fn from_data(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let scales: Vec<f64> = (0..x.ncols()).map(|d| positive_or_one(column_std(x, d))).collect();
        let sf = positive_or_one(std_dev(y.iter().copied()));
        Self::new(&scales, sf, 0.1 * sf)
    }
}

fn std_dev(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn column_std(x: &DMatrix<f64>, d: usize) -> f64 {
    std_dev(x.column(d).iter().copied())
}

fn positive_or_one(v: f64) -> f64 {
    if v > 1e-12 && v.is_finite() {
        v
    } else {
        1.0
    }
}

/// `σ_f² exp(−½ Σ_d (a_d − b_d)² / l_d²)`
pub fn kernel(a: &[f64], b: &[f64], h: &Hyperparams) -> f64 {
    let mut s = 0.0;
    for ((ai, bi), ll) in a.iter().zip(b).zip(&h.log_length_scales) {
        let d = (ai - bi) * (-ll).exp();
        s += d * d;
    }
    (2.0 * h.log_signal_std - 0.5 * s).exp()
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

/// Noise-free kernel matrix `K(A, B)`.
pub fn kernel_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, h: &Hyperparams) -> DMatrix<f64> {
    let inv_l: Vec<f64> = h.log_length_scales.iter().map(|l| (-l).exp()).collect();
    let scale = |x: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..x.nrows())
            .map(|i| x.row(i).iter().zip(&inv_l).map(|(v, il)| v * il).collect())
            .collect()
    };
    let (sa, sb) = (scale(a), scale(b));
    let sf2 = (2.0 * h.log_signal_std).exp();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let s: f64 = sa[i].iter().zip(&sb[j]).map(|(p, q)| (p - q) * (p - q)).sum();
        sf2 * (-0.5 * s).exp()
    })
}

/// Cholesky of `K + σ_n² I`, adding diagonal jitter from the ladder on failure.
fn factor(k: &DMatrix<f64>, noise_var: f64) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    let n = k.nrows();
    let mut ky = k.clone();
    for i in 0..n {
        ky[(i, i)] += noise_var;
    }
    if let Some(c) = Cholesky::new(ky.clone()) {
        return Ok((c, 0.0));
    }
    for jitter in JITTER_LADDER {
        let mut kj = ky.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
    }
    Err(GpError::NotPositiveDefinite {
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

fn lml_from_factor(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * n * (2.0 * PI).ln()
}

fn check_inputs(x: &DMatrix<f64>, y: &DVector<f64>, h: &Hyperparams) -> Result<(), GpError> {
    if x.nrows() != y.len() {
        return Err(GpError::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.ncols() != h.dim() {
        return Err(GpError::DimensionMismatch {
            expected: h.dim(),
            found: x.ncols(),
        });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(GpError::NonFinite);
    }
    Ok(())
}

/// `ln p(y | X, Θ) = −½ yᵀK_y⁻¹y − ½ ln|K_y| − (n/2) ln 2π`
pub fn log_marginal_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, h: &Hyperparams) -> Result<f64, GpError> {
    check_inputs(x, y, h)?;
    let k = kernel_matrix(x, x, h);
    let (chol, _) = factor(&k, (2.0 * h.log_noise_std).exp())?;
    let alpha = chol.solve(y);
    Ok(lml_from_factor(&chol, y, &alpha))
}

/// Log marginal likelihood and its gradient with respect to the log hyperparameters.
pub fn lml_and_gradient(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    h: &Hyperparams,
) -> Result<(f64, DVector<f64>), GpError> {
    check_inputs(x, y, h)?;
    let n = x.nrows();
    let dim = x.ncols();
    let k = kernel_matrix(x, x, h);
    let noise_var = (2.0 * h.log_noise_std).exp();
    let (chol, _) = factor(&k, noise_var)?;
    let alpha = chol.solve(y);
    let lml = lml_from_factor(&chol, y, &alpha);

    // W = ααᵀ − K_y⁻¹; dLML/dθ = ½ tr(W ∂K/∂θ)
    let mut w = chol.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);

    let inv_l2: Vec<f64> = h.log_length_scales.iter().map(|l| (-2.0 * l).exp()).collect();
    let mut grad = DVector::zeros(dim + 2);
    let mut sf_term = 0.0;
    for j in 0..n {
        for i in 0..n {
            let wk = w[(i, j)] * k[(i, j)];
            if wk == 0.0 {
                continue;
            }
            sf_term += wk;
            for d in 0..dim {
                let diff = x[(i, d)] - x[(j, d)];
                grad[d] += wk * diff * diff * inv_l2[d];
            }
        }
    }
    for d in 0..dim {
        grad[d] *= 0.5;
    }
    grad[dim] = sf_term;
    grad[dim + 1] = noise_var * w.trace();
    Ok((lml, grad))
}

/// Settings for [`fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Random restarts in addition to the data-driven initialization.
    pub restarts: usize,
    pub seed: u64,
    pub max_rows: usize,
    pub lbfgs: LbfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            max_rows: MAX_TRAINING_ROWS,
            lbfgs: LbfgsOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GpModel {
    pub hyper: Hyperparams,
    /// Training inputs, `n × D`.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// `K_y⁻¹ y`
    pub alpha: DVector<f64>,
    pub chol: Cholesky<f64, Dyn>,
    /// Diagonal jitter that was needed to factor `K_y`.
    pub jitter: f64,
    pub dof: Dof,
    pub log_marginal_likelihood: f64,
}

impl PartialEq for GpModel {
    fn eq(&self, other: &Self) -> bool {
        self.hyper == other.hyper
            && self.x == other.x
            && self.y == other.y
            && self.alpha == other.alpha
            && self.chol.l_dirty() == other.chol.l_dirty()
            && self.jitter == other.jitter
            && self.dof == other.dof
            && self.log_marginal_likelihood.to_bits() == other.log_marginal_likelihood.to_bits()
    }
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on `(x, y)`.
    pub fn condition(x: DMatrix<f64>, y: DVector<f64>, hyper: Hyperparams, dof: Dof) -> Result<GpModel, GpError> {
        check_inputs(&x, &y, &hyper)?;
        if x.nrows() == 0 {
            return Err(GpError::InsufficientData(0));
        }
        let k = kernel_matrix(&x, &x, &hyper);
        let (chol, jitter) = factor(&k, (2.0 * hyper.log_noise_std).exp())?;
        let alpha = chol.solve(&y);
        let lml = lml_from_factor(&chol, &y, &alpha);
        Ok(GpModel {
            hyper,
            x,
            y,
            alpha,
            chol,
            jitter,
            dof,
            log_marginal_likelihood: lml,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.x.nrows()
    }

    /// Predictive mean and (clamped) variance at each row of `xstar`.
    pub fn predict(&self, xstar: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>), GpError> {
        if xstar.ncols() != self.input_dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.input_dim(),
                found: xstar.ncols(),
            });
        }
        let ks = kernel_matrix(xstar, &self.x, &self.hyper);
        let mean = &ks * &self.alpha;
        let v = self.chol.l_dirty().solve_lower_triangular(&ks.transpose()).expect("non-singular factor");
        let sf2 = (2.0 * self.hyper.log_signal_std).exp();
        let var = DVector::from_fn(xstar.nrows(), |i, _| (sf2 - v.column(i).norm_squared()).max(0.0));
        Ok((mean, var))
    }

    /// Predictive mean only; cheaper than [`GpModel::predict`].
    pub fn predict_mean(&self, xstar: &DMatrix<f64>) -> Result<DVector<f64>, GpError> {
        if xstar.ncols() != self.input_dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.input_dim(),
                found: xstar.ncols(),
            });
        }
        Ok(kernel_matrix(xstar, &self.x, &self.hyper) * &self.alpha)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64, GpError> {
        let m = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.predict_mean(&m)?[0])
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            version: MODEL_VERSION,
            dof_tag: self.dof,
            d: self.input_dim(),
            n: self.n_train(),
            log_length_scales: self.hyper.log_length_scales.clone(),
            log_sigma_f: self.hyper.log_signal_std,
            log_sigma_n: self.hyper.log_noise_std,
            x: (0..self.n_train()).flat_map(|i| row(&self.x, i)).collect(),
            y: self.y.iter().copied().collect(),
        }
    }

    pub fn save(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn load(bytes: &[u8]) -> Result<GpModel, GpError> {
        #[derive(Deserialize)]
        struct VersionProbe {
            version: u32,
        }
        let probe: VersionProbe =
            serde_json::from_slice(bytes).map_err(|e| GpError::CorruptModel(e.to_string()))?;
        if probe.version != MODEL_VERSION {
            return Err(GpError::VersionMismatch { found: probe.version });
        }
        let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| GpError::CorruptModel(e.to_string()))?;
        file.into_model()
    }
}

/// On-disk model layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub dof_tag: Dof,
    #[serde(rename = "D")]
    pub d: usize,
    pub n: usize,
    pub log_length_scales: Vec<f64>,
    pub log_sigma_f: f64,
    pub log_sigma_n: f64,
    /// Row-major `n × D`.
    #[serde(rename = "X")]
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<GpModel, GpError> {
        if self.log_length_scales.len() != self.d || self.x.len() != self.n * self.d || self.y.len() != self.n {
            return Err(GpError::CorruptModel(format!(
                "inconsistent sizes: D={}, n={}, {} length scales, {} inputs, {} targets",
                self.d,
                self.n,
                self.log_length_scales.len(),
                self.x.len(),
                self.y.len()
            )));
        }
        let hyper = Hyperparams {
            log_length_scales: self.log_length_scales,
            log_signal_std: self.log_sigma_f,
            log_noise_std: self.log_sigma_n,
        };
        let x = DMatrix::from_row_slice(self.n, self.d, &self.x);
        GpModel::condition(x, DVector::from_vec(self.y), hyper, self.dof_tag)
    }
}

/// Rows sorted lexicographically by `(x, y)` so that fitting does not depend on input order.
fn canonical_rows(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        for d in 0..x.ncols() {
            let c = x[(a, d)].total_cmp(&x[(b, d)]);
            if c.is_ne() {
                return c;
            }
        }
        y[a].total_cmp(&y[b])
    });
    order
}

fn select_rows(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let xs = DMatrix::from_fn(rows.len(), x.ncols(), |i, d| x[(rows[i], d)]);
    let ys = DVector::from_fn(rows.len(), |i, _| y[rows[i]]);
    (xs, ys)
}

/// Search box for the log hyperparameters, relative to the data scale.
fn bounds(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let dim = x.ncols();
    let sy = positive_or_one(std_dev(y.iter().copied())).max(y.amax());
    let mut lo = DVector::zeros(dim + 2);
    let mut hi = DVector::zeros(dim + 2);
    for d in 0..dim {
        let s = positive_or_one(column_std(x, d));
        lo[d] = (1e-3 * s).ln();
        hi[d] = (1e4 * s).ln();
    }
    lo[dim] = (1e-6 * sy).ln();
    hi[dim] = (1e3 * sy).ln();
    lo[dim + 1] = (1e-6 * sy).ln();
    hi[dim + 1] = (1e2 * sy).ln();
    (lo, hi)
}

/// Fits hyperparameters by maximizing the log marginal likelihood from
/// `init` (or a data-driven start) plus `restarts` perturbed starts.
pub fn fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    init: Option<Hyperparams>,
    opts: &FitOptions,
    dof: Dof,
) -> Result<GpModel, GpError> {
    if x.nrows() != y.len() {
        return Err(GpError::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.nrows() < 2 {
        return Err(GpError::InsufficientData(x.nrows()));
    }
    let mut rows = canonical_rows(x, y);
    if rows.len() > opts.max_rows {
        let stride = rows.len().div_ceil(opts.max_rows);
        rows = rows.into_iter().step_by(stride).collect();
    }
    let (xs, ys) = select_rows(x, y, &rows);
    let init = init.unwrap_or_else(|| Hyperparams::from_data(&xs, &ys));
    check_inputs(&xs, &ys, &init)?;
    let (lo, hi) = bounds(&xs, &ys);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![init.to_log_vector()];
    for _ in 0..opts.restarts {
        let base = init.to_log_vector();
        let jitter: Vec<f64> = (0..base.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        starts.push(base + DVector::from_vec(jitter));
    }

    let results: Vec<(f64, DVector<f64>)> = starts
        .par_iter()
        .filter_map(|start| {
            let objective = |v: &DVector<f64>| {
                lml_and_gradient(&xs, &ys, &Hyperparams::from_log_vector(v))
                    .ok()
                    .map(|(l, g)| (-l, -g))
            };
            minimize_bounded(objective, start, &lo, &hi, &opts.lbfgs).map(|r| (-r.value, r.x))
        })
        .collect();
    // Ties go to the earliest start so the result is independent of scheduling.
    let best = results
        .into_iter()
        .fold(None::<(f64, DVector<f64>)>, |acc, cand| match acc {
            Some(a) if a.0 >= cand.0 => Some(a),
            _ => Some(cand),
        })
        .ok_or(GpError::NotPositiveDefinite {
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        })?;
    GpModel::condition(xs, ys, Hyperparams::from_log_vector(&best.1), dof)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_problem(seed: u64, n: usize, dim: usize) -> (DMatrix<f64>, DVector<f64>, Hyperparams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: DMatrix<f64> = DMatrix::from_fn(n, dim, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |i, _| x[(i, 0)].sin() + 0.1 * rng.random_range(-1.0..1.0));
        let ls: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..3.0)).collect();
        let h = Hyperparams::new(&ls, rng.random_range(0.5..2.0), rng.random_range(0.05..0.5));
        (x, y, h)
    }

    /// Dense evaluation with an explicit inverse and determinant.
    fn dense_lml(x: &DMatrix<f64>, y: &DVector<f64>, h: &Hyperparams) -> f64 {
        let n = x.nrows();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let d: f64 = (0..x.ncols())
                    .map(|c| ((x[(i, c)] - x[(j, c)]) / h.length_scales()[c]).powi(2))
                    .sum();
                k[(i, j)] = h.signal_std().powi(2) * (-0.5 * d).exp();
            }
            k[(i, i)] += h.noise_std().powi(2);
        }
        let inv = k.clone().try_inverse().unwrap();
        let det = k.determinant();
        -0.5 * (y.transpose() * inv * y)[0] - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * PI).ln()
    }

    #[test]
    fn kernel_values() {
        let h = Hyperparams::new(&[1.0], 1.0, 0.1);
        assert_eq!(kernel(&[0.3], &[0.3], &h), 1.0);
        assert_relative_eq!(kernel(&[0.0], &[2f64.sqrt()], &h), (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(kernel(&[0.0], &[2f64.sqrt()], &h), 0.367879, epsilon = 1e-6);
        assert!(kernel(&[0.0], &[20.0], &h) < 1e-10);
        let h2 = Hyperparams::new(&[0.5, 2.0], 1.7, 0.1);
        assert_relative_eq!(kernel(&[1.0, 2.0], &[1.0, 2.0], &h2), 1.7 * 1.7, epsilon = 1e-14);
        assert_eq!(kernel(&[1.0, -2.0], &[0.1, 2.0], &h2), kernel(&[0.1, 2.0], &[1.0, -2.0], &h2));
    }

    #[test]
    fn lml_matches_dense_for_n3() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.5, -0.2, 1.3, 0.7]);
        let y = DVector::from_vec(vec![0.2, -0.4, 1.1]);
        let h = Hyperparams::new(&[0.8, 1.5], 1.2, 0.3);
        assert_relative_eq!(log_marginal_likelihood(&x, &y, &h).unwrap(), dense_lml(&x, &y, &h), epsilon = 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let (x, y, h) = random_problem(seed, 15, 3);
            let (_, g) = lml_and_gradient(&x, &y, &h).unwrap();
            let v = h.to_log_vector();
            for k in 0..v.len() {
                let eps = 1e-5;
                let mut vp = v.clone();
                vp[k] += eps;
                let mut vm = v.clone();
                vm[k] -= eps;
                let fp = log_marginal_likelihood(&x, &y, &Hyperparams::from_log_vector(&vp)).unwrap();
                let fm = log_marginal_likelihood(&x, &y, &Hyperparams::from_log_vector(&vm)).unwrap();
                let numeric = (fp - fm) / (2.0 * eps);
                let rel = (numeric - g[k]).abs() / g.amax().max(1e-8);
                assert!(rel < 1e-4, "seed {seed} param {k}: {numeric} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn two_point_closed_form() {
        // K_y = [[a, b], [b, a]] with a = σ_f² + σ_n², b = σ_f² e^{-d²/2l²}
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -0.5]);
        let (sf, sn, l) = (1.3f64, 0.2f64, 0.7f64);
        let h = Hyperparams::new(&[l], sf, sn);
        let m = GpModel::condition(x, y.clone(), h, Dof::Z).unwrap();
        let a = sf * sf + sn * sn;
        let b = sf * sf * (-0.5 / (l * l)).exp();
        let det = a * a - b * b;
        let xs = 0.4f64;
        let k1 = sf * sf * (-0.5 * xs * xs / (l * l)).exp();
        let k2 = sf * sf * (-0.5 * (xs - 1.0).powi(2) / (l * l)).exp();
        // [k1 k2] · inv(K_y) · y with inv = [[a, -b], [-b, a]] / det
        let mean = (k1 * (a * y[0] - b * y[1]) + k2 * (-b * y[0] + a * y[1])) / det;
        let var = sf * sf - (k1 * (a * k1 - b * k2) + k2 * (-b * k1 + a * k2)) / det;
        let (pm, pv) = m.predict(&DMatrix::from_row_slice(1, 1, &[xs])).unwrap();
        assert_relative_eq!(pm[0], mean, epsilon = 1e-12);
        assert_relative_eq!(pv[0], var, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_and_prior_reversion() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.5, 4.0]);
        let y = DVector::from_vec(vec![0.3, -0.2, 0.8, 0.1]);
        let h = Hyperparams::new(&[1.0], 1.0, 1e-6);
        let m = GpModel::condition(x.clone(), y.clone(), h, Dof::Pitch).unwrap();
        let (mean, _) = m.predict(&x).unwrap();
        for i in 0..4 {
            assert!((mean[i] - y[i]).abs() < 1e-4);
        }
        let (far_mean, far_var) = m.predict(&DMatrix::from_row_slice(1, 1, &[4.0 + 20.0])).unwrap();
        assert!(far_mean[0].abs() < 1e-10);
        assert_relative_eq!(far_var[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn stored_alpha_reproduces_targets() {
        let (x, y, h) = random_problem(4, 30, 2);
        let sn2 = h.noise_std().powi(2);
        let m = GpModel::condition(x.clone(), y.clone(), h.clone(), Dof::Roll).unwrap();
        assert_eq!(m.jitter, 0.0);
        let k = kernel_matrix(&x, &x, &h);
        let lhs = &k * &m.alpha;
        let rhs = &y - &m.alpha * sn2;
        assert!((lhs - rhs).amax() < 1e-8);
    }

    #[test]
    fn zero_targets_give_zero_mean() {
        let x = DMatrix::from_fn(20, 2, |i, d| (i as f64 * 0.37 + d as f64).sin());
        let y = DVector::zeros(20);
        let opts = FitOptions {
            restarts: 1,
            ..Default::default()
        };
        let m = fit(&x, &y, None, &opts, Dof::Z).unwrap();
        assert!(m.hyper.signal_std() < 1e-3, "σ_f = {}", m.hyper.signal_std());
        let q = DMatrix::from_fn(5, 2, |i, d| i as f64 - d as f64);
        let (mean, _) = m.predict(&q).unwrap();
        assert!(mean.amax() == 0.0);
    }

    #[test]
    fn fit_improves_likelihood() {
        let (x, y, _) = random_problem(9, 40, 2);
        let init = Hyperparams::from_data(&x, &y);
        let before = log_marginal_likelihood(&x, &y, &init).unwrap();
        let m = fit(&x, &y, Some(init), &FitOptions { restarts: 2, ..Default::default() }, Dof::Z).unwrap();
        assert!(m.log_marginal_likelihood > before);
        // Gradient at the optimum is small in every unconstrained direction.
        let (_, g) = lml_and_gradient(&m.x, &m.y, &m.hyper).unwrap();
        let (lo, hi) = bounds(&m.x, &m.y);
        let v = m.hyper.to_log_vector();
        for k in 0..g.len() {
            if v[k] > lo[k] + 1e-9 && v[k] < hi[k] - 1e-9 {
                assert!(g[k].abs() < 1e-3, "param {k}: {}", g[k]);
            }
        }
    }

    #[test]
    fn fit_rejects_tiny_data() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        let y = DVector::from_vec(vec![1.0]);
        assert_eq!(fit(&x, &y, None, &FitOptions::default(), Dof::Z).unwrap_err(), GpError::InsufficientData(1));
    }

    #[test]
    fn predict_dimension_mismatch() {
        let (x, y, h) = random_problem(1, 10, 3);
        let m = GpModel::condition(x, y, h, Dof::Z).unwrap();
        assert_eq!(
            m.predict(&DMatrix::zeros(2, 2)).unwrap_err(),
            GpError::DimensionMismatch { expected: 3, found: 2 }
        );
    }

    #[test]
    fn duplicate_rows_use_jitter_or_noise() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![0.5, 0.5, 0.5, 0.1]);
        let h = Hyperparams::new(&[1.0], 1.0, 1e-9);
        let m = GpModel::condition(x, y, h, Dof::Z).unwrap();
        assert!(m.jitter > 0.0);
    }

    #[test]
    fn save_load_round_trip() {
        let (x, y, h) = random_problem(2, 12, 3);
        let m = GpModel::condition(x, y, h, Dof::Pitch).unwrap();
        let bytes = m.save();
        let back = GpModel::load(&bytes).unwrap();
        assert_eq!(back, m);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("\"dof_tag\": \"pitch\""));
        assert!(text.contains("\"log_length_scales\""));

        let truncated = &bytes[..bytes.len() / 2];
        assert!(matches!(GpModel::load(truncated), Err(GpError::CorruptModel(_))));

        let mut file = m.to_file();
        file.version = 0;
        let v0 = serde_json::to_vec(&file).unwrap();
        assert_eq!(GpModel::load(&v0).unwrap_err(), GpError::VersionMismatch { found: 0 });

        let mut file = m.to_file();
        file.y.pop();
        let bad = serde_json::to_vec(&file).unwrap();
        assert!(matches!(GpModel::load(&bad), Err(GpError::CorruptModel(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn kernel_matrix_is_psd(seed in 0u64..1000, n in 2usize..60, dim in 1usize..6) {
            let (x, _, h) = random_problem(seed, n, dim);
            let k = kernel_matrix(&x, &x, &h);
            prop_assert!((&k - k.transpose()).amax() == 0.0);
            let min = k.symmetric_eigenvalues().min();
            prop_assert!(min >= -1e-10 * n as f64);
        }

        #[test]
        fn variance_bounded_and_monotone(seed in 0u64..1000, n in 2usize..30) {
            let (x, y, h) = random_problem(seed, n + 1, 2);
            let sf2 = h.signal_std().powi(2);
            let q = DMatrix::from_fn(8, 2, |i, d| (i as f64 - 4.0) * 0.6 + d as f64 * 0.1);
            let small = GpModel::condition(x.rows(0, n).into_owned(), y.rows(0, n).into_owned(), h.clone(), Dof::Z).unwrap();
            let big = GpModel::condition(x, y, h, Dof::Z).unwrap();
            let (_, v_small) = small.predict(&q).unwrap();
            let (_, v_big) = big.predict(&q).unwrap();
            for i in 0..8 {
                prop_assert!(v_small[i] <= sf2 + 1e-10);
                prop_assert!(v_big[i] <= v_small[i] + 1e-9);
            }
        }
    }

    #[test]
    fn fit_is_permutation_invariant() {
        let (x, y, _) = random_problem(21, 25, 2);
        let perm: Vec<usize> = (0..25).map(|i| (i * 7) % 25).collect();
        let (xp, yp) = select_rows(&x, &y, &perm);
        let opts = FitOptions {
            restarts: 1,
            ..Default::default()
        };
        let a = fit(&x, &y, None, &opts, Dof::Z).unwrap();
        let b = fit(&xp, &yp, None, &opts, Dof::Z).unwrap();
        let q = DMatrix::from_fn(6, 2, |i, d| i as f64 * 0.3 - d as f64);
        let (ma, va) = a.predict(&q).unwrap();
        let (mb, vb) = b.predict(&q).unwrap();
        assert!((ma - mb).amax() < 1e-9 && (va - vb).amax() < 1e-9);
    }
}
