//! Reference computations shared by the oracle and acceptance tests.
#![allow(dead_code)]

use gtbo::information::gaussian_entropy;
use gtbo::{Group, NoiseModel};

pub const D: usize = 10;
pub const Q: f64 = 0.1;

pub fn normal_logpdf(z: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * z * z / var
}

/// Ten scripted tests against the true state {2, 7}.
pub fn script() -> Vec<(Group, f64)> {
    let g = |ix: &[usize]| Group::from_indices(D, ix.iter().copied());
    vec![
        (g(&[0, 1, 2, 3, 4]), 1.1),
        (g(&[5, 6, 7, 8, 9]), -0.7),
        (g(&[0, 1]), 0.04),
        (g(&[2, 3]), -0.9),
        (g(&[3, 4]), -0.08),
        (g(&[5, 6]), 0.11),
        (g(&[7]), 0.6),
        (g(&[8, 9]), 0.02),
        (g(&[2]), 1.4),
        (g(&[0, 5, 9]), 0.15),
    ]
}

pub fn exact_marginals(obs: &[(Group, f64)], nm: &NoiseModel) -> Vec<f64> {
    let mut log_w = Vec::with_capacity(1 << D);
    for s in 0..(1u32 << D) {
        let active = |i: usize| s >> i & 1 == 1;
        let k = s.count_ones() as f64;
        let mut lw = k * Q.ln() + (D as f64 - k) * (1.0 - Q).ln();
        for (g, z) in obs {
            let hit = g.indices().into_iter().any(active);
            lw += normal_logpdf(*z, if hit { nm.sigma_sq } else { nm.sigma_n_sq });
        }
        log_w.push(lw);
    }
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    (0..D)
        .map(|i| {
            w.iter()
                .enumerate()
                .filter(|(s, _)| s >> i & 1 == 1)
                .map(|(_, v)| v)
                .sum::<f64>()
                / total
        })
        .collect()
}

/// `H(Z)` of `(1-p) N(0, sn2) + p N(0, s2)` by trapezoid quadrature in
/// `u = ln|z|`, which resolves both scales.
pub fn mixture_entropy_quadrature(p: f64, sn2: f64, s2: f64) -> f64 {
    let lo = (1e-9 * sn2.sqrt()).ln();
    let hi = (60.0 * s2.sqrt().max(sn2.sqrt())).ln();
    let n = 400_000;
    let h = (hi - lo) / n as f64;
    let dens = |z: f64| (1.0 - p) * normal_logpdf(z, sn2).exp() + p * normal_logpdf(z, s2).exp();
    let mut total = 0.0;
    for k in 0..=n {
        let z = (lo + k as f64 * h).exp();
        let f = dens(z);
        let term = if f > 0.0 { -f * f.ln() * z } else { 0.0 };
        total += if k == 0 || k == n { 0.5 * term } else { term };
    }
    2.0 * total * h
}

pub fn mi_quadrature(p: f64, sn2: f64, s2: f64) -> f64 {
    mixture_entropy_quadrature(p, sn2, s2)
        - (1.0 - p) * gaussian_entropy(sn2)
        - p * gaussian_entropy(s2)
}
