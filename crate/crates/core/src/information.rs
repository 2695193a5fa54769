//! Mutual information between the activity state and a test outcome.
//!
//! Under the two-hypothesis observation model the outcome `Z` of testing a
//! group is a zero-mean Gaussian mixture: variance `σ²` with probability
//! `p_active`, `σ_n²` otherwise. The conditional entropy has a closed form,
//! the mixture entropy is estimated by Monte Carlo. All values are in nats.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::variance::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// MI clamped at zero, used for group selection.
    pub value: f64,
    /// Unclamped Monte Carlo estimate.
    pub raw: f64,
    pub mc_samples: usize,
    pub p_active: f64,
}

/// Differential entropy of `N(0, var)`.
pub fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (2.0 * PI * E * var).ln()
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    h(p) + h(1.0 - p)
}

/// Common random numbers for Monte Carlo entropy estimates.
///
/// Sample `i` is drawn from the signal component when `uniforms[i] < p` and
/// from the noise component otherwise, scaled from the shared `normals[i]`.
/// Reusing one sample set across candidate groups keeps their estimates
/// comparable.
#[derive(Debug, Clone)]
pub struct CommonSamples {
    normals: Vec<f64>,
    uniforms: Vec<f64>,
}

impl CommonSamples {
    pub fn draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let n = n.max(1);
        let normals = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let uniforms = (0..n).map(|_| rng.random::<f64>()).collect();
        Self { normals, uniforms }
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }
}

/// Precomputed per-sample log-density ratios for one noise model.
///
/// For a sample `z` the mixture log density is
/// `ℓ_n(z) + ln((1-p) + p·exp(d(z)))` with `d = ℓ_s - ℓ_n`. Both branches of
/// every common sample are tabulated once, so each evaluation costs one
/// logarithm per sample.
#[derive(Debug, Clone)]
pub struct MiEvaluator {
    uniforms: Vec<f64>,
    // (log density under the noise component, d, exp(-|d|)) per branch
    signal_branch: Vec<(f64, f64, f64)>,
    noise_branch: Vec<(f64, f64, f64)>,
    noise_entropy: f64,
    signal_entropy: f64,
}

impl MiEvaluator {
    pub fn new(samples: &CommonSamples, sigma_n_sq: f64, sigma_sq: f64) -> Self {
        let sn = sigma_n_sq.sqrt();
        let ss = sigma_sq.sqrt();
        let tabulate = |z: f64| {
            let ln = crate::variance::log_normal_pdf(z, sigma_n_sq);
            let d = crate::variance::log_normal_pdf(z, sigma_sq) - ln;
            (ln, d, (-d.abs()).exp())
        };
        Self {
            uniforms: samples.uniforms.clone(),
            signal_branch: samples.normals.iter().map(|e| tabulate(ss * e)).collect(),
            noise_branch: samples.normals.iter().map(|e| tabulate(sn * e)).collect(),
            noise_entropy: gaussian_entropy(sigma_n_sq),
            signal_entropy: gaussian_entropy(sigma_sq),
        }
    }

    pub fn for_model(samples: &CommonSamples, nm: &NoiseModel) -> Self {
        Self::new(samples, nm.sigma_n_sq, nm.sigma_sq)
    }

    pub fn mc_samples(&self) -> usize {
        self.uniforms.len()
    }

    /// `ln(p_mix(z) / p_noise(z))` for tabulated sample `i` of one branch.
    #[inline]
    fn log_mix_ratio(p: f64, (_, d, e): (f64, f64, f64)) -> f64 {
        if d > 0.0 {
            d + (-(1.0 - p) * (1.0 - e)).ln_1p()
        } else {
            (-p * (1.0 - e)).ln_1p()
        }
    }

    /// Plain Monte Carlo estimate of the mixture entropy `H(Z) = -E[ln p(Z)]`.
    pub fn entropy(&self, p_active: f64) -> f64 {
        let p = p_active.clamp(0.0, 1.0);
        let mut total = 0.0;
        for (i, &u) in self.uniforms.iter().enumerate() {
            let branch = if u < p {
                self.signal_branch[i]
            } else {
                self.noise_branch[i]
            };
            total += branch.0 + Self::log_mix_ratio(p, branch);
        }
        -total / self.uniforms.len() as f64
    }

    /// Mixture entropy with the conditional log density as control variate:
    /// `H(Z|ξ) - E[ln p(Z) - ln p(Z|ξ)]`, which has the same expectation as
    /// [`entropy`](Self::entropy) and far lower variance when the components
    /// are well separated.
    pub fn entropy_cv(&self, p_active: f64) -> f64 {
        let p = p_active.clamp(0.0, 1.0);
        self.conditional_entropy(p) - self.mean_log_ratio(p)
    }

    // mean over samples of ln p(z) - ln p(z | component)
    fn mean_log_ratio(&self, p: f64) -> f64 {
        let mut total = 0.0;
        for (i, &u) in self.uniforms.iter().enumerate() {
            total += if u < p {
                let b = self.signal_branch[i];
                Self::log_mix_ratio(p, b) - b.1
            } else {
                Self::log_mix_ratio(p, self.noise_branch[i])
            };
        }
        total / self.uniforms.len() as f64
    }

    pub fn conditional_entropy(&self, p_active: f64) -> f64 {
        let p = p_active.clamp(0.0, 1.0);
        (1.0 - p) * self.noise_entropy + p * self.signal_entropy
    }

    /// `H(Z) - H(Z|ξ)` using the control-variate entropy estimate.
    pub fn mutual_information(&self, p_active: f64) -> MiEstimate {
        let p = p_active.clamp(0.0, 1.0);
        let raw = if p == 0.0 || p == 1.0 {
            0.0
        } else {
            -self.mean_log_ratio(p)
        };
        MiEstimate {
            value: raw.max(0.0),
            raw,
            mc_samples: self.mc_samples(),
            p_active: p,
        }
    }
}

/// Monte Carlo entropy of the two-component zero-mean Gaussian mixture.
pub fn gmm_entropy_mc<R: Rng + ?Sized>(
    p_active: f64,
    sigma_n_sq: f64,
    sigma_sq: f64,
    n: usize,
    rng: &mut R,
) -> f64 {
    let samples = CommonSamples::draw(n, rng);
    MiEvaluator::new(&samples, sigma_n_sq, sigma_sq).entropy(p_active)
}

pub fn mutual_information<R: Rng + ?Sized>(
    p_active: f64,
    nm: &NoiseModel,
    n: usize,
    rng: &mut R,
) -> MiEstimate {
    let samples = CommonSamples::draw(n, rng);
    MiEvaluator::for_model(&samples, nm).mutual_information(p_active)
}
