//! Gaussian-process surrogate with a Matérn-5/2 ARD kernel.
//!
//! Hyperparameters are fitted by maximizing the log marginal likelihood plus
//! log-normal hyperpriors over log-parameters. Dimensions flagged active get
//! short lengthscale priors, the rest very long ones, which effectively mutes
//! them in the kernel. Targets are standardized before fitting and all
//! predictions are returned in the original units.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GtboError, Result};
use crate::lbfgs::{self, LbfgsOptions};

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Normal prior on the log of a positive parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalPrior {
    pub const fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }

    /// Log density of `θ = ln(value)` and its derivative in `θ`.
    fn log_density(&self, theta: f64) -> (f64, f64) {
        let s2 = self.sigma * self.sigma;
        let d = theta - self.mu;
        (-0.5 * d * d / s2 - self.sigma.ln() - 0.5 * LN_2PI, -d / s2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpPriors {
    pub active_lengthscale: LogNormalPrior,
    pub inactive_lengthscale: LogNormalPrior,
    pub noise_variance: LogNormalPrior,
    pub signal_variance: LogNormalPrior,
}

impl Default for GpPriors {
    fn default() -> Self {
        Self {
            active_lengthscale: LogNormalPrior::new(0.0, 1.0),
            inactive_lengthscale: LogNormalPrior::new(7.0, 1.0),
            noise_variance: LogNormalPrior::new(-4.0, 1.0),
            signal_variance: LogNormalPrior::new(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    /// Optimizer starts for a cold fit; the first sits at the prior medians.
    pub starts: usize,
    /// Optimizer starts for a warm refit; the first sits at the previous optimum.
    pub refit_starts: usize,
    pub max_iters: usize,
    /// Standard deviation of the log-space perturbation of extra starts.
    pub start_spread: f64,
    pub jitter_min: f64,
    pub jitter_max: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            refit_starts: 1,
            max_iters: 200,
            start_spread: 1.0,
            jitter_min: 1e-8,
            jitter_max: 1e-4,
        }
    }
}

/// Kernel hyperparameters, on the standardized target scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub mean_constant: f64,
}

impl Hyperparameters {
    /// Prior medians with a zero mean constant.
    pub fn prior_median(active_mask: &[bool], priors: &GpPriors) -> Self {
        Self {
            lengthscales: active_mask
                .iter()
                .map(|&a| {
                    if a {
                        priors.active_lengthscale.median()
                    } else {
                        priors.inactive_lengthscale.median()
                    }
                })
                .collect(),
            signal_variance: priors.signal_variance.median(),
            noise_variance: priors.noise_variance.median(),
            mean_constant: 0.0,
        }
    }

    fn to_theta(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        t.push(self.signal_variance.ln());
        t.push(self.noise_variance.ln());
        t.push(self.mean_constant);
        t
    }

    fn from_theta(theta: &[f64]) -> Self {
        let d = theta.len() - 3;
        Self {
            lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_variance: theta[d + 1].exp(),
            mean_constant: theta[d + 2],
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.lengthscales.len() != dim {
            return Err(invalid(format!(
                "{} lengthscales for {dim} dimensions",
                self.lengthscales.len()
            )));
        }
        let positive = self
            .lengthscales
            .iter()
            .chain([&self.signal_variance, &self.noise_variance])
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || !self.mean_constant.is_finite() {
            return Err(invalid("hyperparameters must be finite and positive"));
        }
        Ok(())
    }
}

/// Matérn-5/2 correlation at scaled distance `r`, without the variance.
pub fn matern52(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

// -(1/r) d/dr of matern52, i.e. (5/3)(1 + √5 r) e^{-√5 r}.
fn matern52_slope(r: f64) -> f64 {
    let s = SQRT5 * r;
    5.0 / 3.0 * (1.0 + s) * (-s).exp()
}

/// Posterior mean and latent variance at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Prediction with derivatives with respect to the query point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGradient {
    pub prediction: Prediction,
    pub d_mean: Vec<f64>,
    pub d_variance: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    hyper: Hyperparameters,
    active_mask: Vec<bool>,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_posterior: f64,
}

struct Data<'a> {
    dim: usize,
    n: usize,
    y: &'a [f64],
    // per pair (a > b), per dimension squared difference
    sq: Vec<f64>,
}

impl<'a> Data<'a> {
    fn new(dim: usize, x: &'a [f64], y: &'a [f64]) -> Self {
        let n = y.len();
        let mut sq = Vec::with_capacity(n * n.saturating_sub(1) / 2 * dim);
        for a in 0..n {
            for b in 0..a {
                for i in 0..dim {
                    let d = x[a * dim + i] - x[b * dim + i];
                    sq.push(d * d);
                }
            }
        }
        Self { dim, n, y, sq }
    }

    /// Kernel matrix and the scaled distance of every pair `a > b`.
    fn kernel_matrix(&self, inv_l2: &[f64], s2: f64) -> (DMatrix<f64>, Vec<f64>) {
        let n = self.n;
        let mut k = DMatrix::zeros(n, n);
        let mut dist = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        let mut p = 0;
        for a in 0..n {
            k[(a, a)] = s2;
            for b in 0..a {
                let r = dot(&self.sq[p * self.dim..(p + 1) * self.dim], inv_l2).sqrt();
                let v = s2 * matern52(r);
                k[(a, b)] = v;
                k[(b, a)] = v;
                dist.push(r);
                p += 1;
            }
        }
        (k, dist)
    }
}

fn factorize(
    mut k: DMatrix<f64>,
    base_noise: f64,
    cfg: &GpConfig,
) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] += base_noise;
    }
    let mut jitter = cfg.jitter_min;
    loop {
        let mut trial = k.clone();
        for i in 0..n {
            trial[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(trial) {
            return Some((c, jitter));
        }
        if jitter >= cfg.jitter_max {
            return None;
        }
        jitter *= 10.0;
    }
}

// Four partial sums let the compiler vectorize the reduction.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i + 4 <= n {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    while i < n {
        s0 += a[i] * b[i];
        i += 1;
    }
    (s0 + s1) + (s2 + s3)
}

/// Lower triangle (row-major, `a >= b`) of `K^{-1}` from the Cholesky factor.
fn spd_inverse_lower(chol: &Cholesky<f64, Dyn>) -> Vec<f64> {
    let l = chol.l_dirty();
    let n = l.nrows();
    let mut lr = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..=i {
            lr[i * n + k] = l[(i, k)];
        }
    }
    // m[j][k] = (L^{-1})[k][j], nonzero for k >= j
    let mut m = vec![0.0; n * n];
    for j in 0..n {
        m[j * n + j] = 1.0 / lr[j * n + j];
        for i in j + 1..n {
            let s = dot(&lr[i * n + j..i * n + i], &m[j * n + j..j * n + i]);
            m[j * n + i] = -s / lr[i * n + i];
        }
    }
    let mut inv = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            inv[a * n + b] = dot(&m[a * n + a..(a + 1) * n], &m[b * n + a..(b + 1) * n]);
        }
    }
    inv
}

fn bounds(dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![-6.0; dim];
    let mut hi = vec![12.0; dim];
    lo.extend([-10.0, -20.0, -5.0]);
    hi.extend([5.0, 2.0, 5.0]);
    (lo, hi)
}

// Negative log posterior and gradient in θ. None if factorization fails.
fn objective(
    data: &Data,
    theta: &[f64],
    mask: &[bool],
    priors: &GpPriors,
    cfg: &GpConfig,
) -> Option<(f64, Vec<f64>)> {
    let dim = data.dim;
    let n = data.n;
    let inv_l2: Vec<f64> = theta[..dim].iter().map(|t| (-2.0 * t).exp()).collect();
    let s2 = theta[dim].exp();
    let sn2 = theta[dim + 1].exp();
    let c = theta[dim + 2];

    let (kf, dist) = data.kernel_matrix(&inv_l2, s2);
    let (chol, _) = factorize(kf.clone(), sn2, cfg)?;
    let r = DVector::from_iterator(n, data.y.iter().map(|y| y - c));
    let alpha = chol.solve(&r);
    let log_det: f64 = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|v| v.ln())
        .sum::<f64>()
        * 2.0;
    let lml = -0.5 * r.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

    // W = αα^T - K^{-1}; dL/dθ = ½ tr(W dK/dθ)
    let kinv = spd_inverse_lower(&chol);
    let mut grad = vec![0.0; dim + 3];
    let mut trace_w = 0.0;
    let mut w_kf = 0.0;
    let mut p = 0;
    for a in 0..n {
        let waa = alpha[a] * alpha[a] - kinv[a * n + a];
        trace_w += waa;
        w_kf += waa * s2;
        for b in 0..a {
            let wab = alpha[a] * alpha[b] - kinv[a * n + b];
            let sq = &data.sq[p * dim..(p + 1) * dim];
            let r = dist[p];
            w_kf += 2.0 * wab * kf[(a, b)];
            // off-diagonal pair counted twice, times the ½
            let m = wab * s2 * matern52_slope(r);
            for i in 0..dim {
                grad[i] += m * sq[i] * inv_l2[i];
            }
            p += 1;
        }
    }
    grad[dim] = 0.5 * w_kf;
    grad[dim + 1] = 0.5 * sn2 * trace_w;
    grad[dim + 2] = alpha.sum();

    let mut log_prior = 0.0;
    for i in 0..dim {
        let prior = if mask[i] {
            priors.active_lengthscale
        } else {
            priors.inactive_lengthscale
        };
        let (v, dv) = prior.log_density(theta[i]);
        log_prior += v;
        grad[i] += dv;
    }
    let (v, dv) = priors.signal_variance.log_density(theta[dim]);
    log_prior += v;
    grad[dim] += dv;
    let (v, dv) = priors.noise_variance.log_density(theta[dim + 1]);
    log_prior += v;
    grad[dim + 1] += dv;

    let value = -(lml + log_prior);
    if !value.is_finite() {
        return None;
    }
    grad.iter_mut().for_each(|g| *g = -*g);
    Some((value, grad))
}

fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = if y.len() > 1 {
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (y.iter().map(|v| (v - mean) / scale).collect(), mean, scale)
}

fn check_inputs(x: &[Vec<f64>], y: &[f64], active_mask: &[bool]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(invalid(format!(
            "{} inputs but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(invalid("a GP fit needs at least 2 training points"));
    }
    let dim = active_mask.len();
    if let Some(row) = x.iter().find(|r| r.len() != dim) {
        return Err(invalid(format!(
            "input has {} coordinates, active mask has {dim}",
            row.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("targets must be finite"));
    }
    Ok(dim)
}

impl GpModel {
    /// MAP fit from several starts: the prior medians, then log-space
    /// perturbations of them.
    pub fn fit<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        y: &[f64],
        active_mask: &[bool],
        priors: &GpPriors,
        cfg: &GpConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let start = Hyperparameters::prior_median(active_mask, priors);
        Self::fit_from(x, y, active_mask, priors, cfg, &start, cfg.starts, rng)
    }

    /// MAP fit warm-started at `init`, with `cfg.refit_starts` starts.
    pub fn refit<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        y: &[f64],
        active_mask: &[bool],
        priors: &GpPriors,
        cfg: &GpConfig,
        init: &Hyperparameters,
        rng: &mut R,
    ) -> Result<Self> {
        Self::fit_from(x, y, active_mask, priors, cfg, init, cfg.refit_starts, rng)
    }

    #[allow(clippy::too_many_arguments)]
    fn fit_from<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        y: &[f64],
        active_mask: &[bool],
        priors: &GpPriors,
        cfg: &GpConfig,
        init: &Hyperparameters,
        starts: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let dim = check_inputs(x, y, active_mask)?;
        init.validate(dim)?;
        let flat: Vec<f64> = x.iter().flatten().copied().collect();
        let (ys, y_mean, y_scale) = standardize(y);
        let data = Data::new(dim, &flat, &ys);
        let (lo, hi) = bounds(dim);
        let opts = LbfgsOptions {
            max_iters: cfg.max_iters,
            grad_tol: 1e-5,
            rel_tol: 1e-9,
            ..Default::default()
        };
        let base = init.to_theta();
        let mut best: Option<lbfgs::Minimum> = None;
        for s in 0..starts.max(1) {
            let mut theta0 = base.clone();
            if s > 0 {
                for t in theta0.iter_mut().take(dim + 2) {
                    let e: f64 = StandardNormal.sample(rng);
                    *t += cfg.start_spread * e;
                }
            }
            let found = lbfgs::minimize(
                |t| objective(&data, t, active_mask, priors, cfg),
                &theta0,
                &lo,
                &hi,
                &opts,
            );
            if let Some(m) = found {
                log::debug!(
                    "gp start {s}: -log posterior {:.6} after {} iterations, {} evaluations",
                    m.value,
                    m.iterations,
                    m.evaluations
                );
                if best.as_ref().is_none_or(|b| m.value < b.value) {
                    best = Some(m);
                }
            }
        }
        let best = best.ok_or_else(|| {
            GtboError::Fit("kernel matrix not positive definite at any jitter level".into())
        })?;
        let mut model = Self::assemble(
            dim,
            flat,
            ys,
            y_mean,
            y_scale,
            Hyperparameters::from_theta(&best.x),
            active_mask.to_vec(),
            cfg,
        )?;
        model.log_posterior = -best.value;
        Ok(model)
    }

    /// Conditions on data at fixed hyperparameters (given for standardized
    /// targets).
    pub fn with_hyperparameters(
        x: &[Vec<f64>],
        y: &[f64],
        active_mask: &[bool],
        hyper: Hyperparameters,
        cfg: &GpConfig,
    ) -> Result<Self> {
        let dim = check_inputs(x, y, active_mask)?;
        hyper.validate(dim)?;
        let flat: Vec<f64> = x.iter().flatten().copied().collect();
        let (ys, y_mean, y_scale) = standardize(y);
        Self::assemble(
            dim,
            flat,
            ys,
            y_mean,
            y_scale,
            hyper,
            active_mask.to_vec(),
            cfg,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        dim: usize,
        x: Vec<f64>,
        y: Vec<f64>,
        y_mean: f64,
        y_scale: f64,
        hyper: Hyperparameters,
        active_mask: Vec<bool>,
        cfg: &GpConfig,
    ) -> Result<Self> {
        let inv_l2: Vec<f64> = hyper.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let data = Data::new(dim, &x, &y);
        let (k, _) = data.kernel_matrix(&inv_l2, hyper.signal_variance);
        let (chol, jitter) = factorize(k, hyper.noise_variance, cfg).ok_or_else(|| {
            GtboError::Fit("kernel matrix not positive definite at any jitter level".into())
        })?;
        let r = DVector::from_iterator(y.len(), y.iter().map(|v| v - hyper.mean_constant));
        let alpha = chol.solve(&r);
        Ok(Self {
            dim,
            x,
            y,
            y_mean,
            y_scale,
            hyper,
            active_mask,
            jitter,
            chol,
            alpha,
            log_posterior: f64::NAN,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active_mask
    }

    /// Jitter added to the diagonal to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Maximized log posterior (NaN for fixed-hyperparameter models).
    pub fn log_posterior(&self) -> f64 {
        self.log_posterior
    }

    /// Constant mean in original units.
    pub fn mean_constant(&self) -> f64 {
        self.y_mean + self.y_scale * self.hyper.mean_constant
    }

    /// Signal variance in original units.
    pub fn signal_variance(&self) -> f64 {
        self.y_scale * self.y_scale * self.hyper.signal_variance
    }

    /// Noise variance in original units.
    pub fn noise_variance(&self) -> f64 {
        self.y_scale * self.y_scale * self.hyper.noise_variance
    }

    pub fn train_x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    fn cross(&self, q: &[f64]) -> (DVector<f64>, Vec<f64>) {
        let n = self.len();
        let mut k = DVector::zeros(n);
        let mut r = vec![0.0; n];
        for a in 0..n {
            let xa = self.train_x(a);
            let r2: f64 = q
                .iter()
                .zip(xa)
                .zip(&self.hyper.lengthscales)
                .map(|((u, v), l)| ((u - v) / l).powi(2))
                .sum();
            r[a] = r2.sqrt();
            k[a] = self.hyper.signal_variance * matern52(r[a]);
        }
        (k, r)
    }

    /// Mean and latent variance on the standardized scale.
    pub fn predict_standardized(&self, q: &[f64]) -> Prediction {
        let (k, _) = self.cross(q);
        let mean = self.hyper.mean_constant + k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        Prediction {
            mean,
            variance: (self.hyper.signal_variance - v.norm_squared()).max(0.0),
        }
    }

    /// Posterior mean and latent variance in original units.
    pub fn predict(&self, q: &[f64]) -> Prediction {
        let p = self.predict_standardized(q);
        Prediction {
            mean: self.y_mean + self.y_scale * p.mean,
            variance: self.y_scale * self.y_scale * p.variance,
        }
    }

    pub fn predict_with_gradient(&self, q: &[f64]) -> PredictionGradient {
        let (k, r) = self.cross(q);
        let w = self.chol.solve(&k);
        let s2 = self.hyper.signal_variance;
        let mut d_mean = vec![0.0; self.dim];
        let mut d_var = vec![0.0; self.dim];
        for a in 0..self.len() {
            let xa = self.train_x(a);
            let m = -s2 * matern52_slope(r[a]);
            for i in 0..self.dim {
                let l = self.hyper.lengthscales[i];
                let dk = m * (q[i] - xa[i]) / (l * l);
                d_mean[i] += self.alpha[a] * dk;
                d_var[i] -= 2.0 * w[a] * dk;
            }
        }
        let mean = self.hyper.mean_constant + k.dot(&self.alpha);
        let variance = s2 - k.dot(&w);
        let sc = self.y_scale;
        // Clamped variance has zero gradient.
        if variance <= 0.0 {
            d_var.iter_mut().for_each(|v| *v = 0.0);
        }
        PredictionGradient {
            prediction: Prediction {
                mean: self.y_mean + sc * mean,
                variance: sc * sc * variance.max(0.0),
            },
            d_mean: d_mean.into_iter().map(|v| sc * v).collect(),
            d_variance: d_var.into_iter().map(|v| sc * sc * v).collect(),
        }
    }

    /// Posterior mean alone, in original units.
    pub fn predict_mean(&self, q: &[f64]) -> f64 {
        let (k, _) = self.cross(q);
        self.y_mean + self.y_scale * (self.hyper.mean_constant + k.dot(&self.alpha))
    }

    /// Posterior mean at every training input, in original units.
    pub fn training_means(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.predict_mean(self.train_x(i)))
            .collect()
    }
}
