//! Box-constrained limited-memory BFGS for smooth objectives that return
//! value and gradient together.
//!
//! Steps are projected onto the box and the search direction is restricted to
//! the free variables (those not pinned at a bound by the gradient). Enough
//! for hyperparameter fitting and acquisition refinement; not a full L-BFGS-B.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease of the objective falls below this.
    pub rel_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iters: 200,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Variables held at a bound by a gradient pointing outward.
fn pinned(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&x, &g), (&l, &h))| (x <= l && g > 0.0) || (x >= h && g < 0.0))
        .collect()
}

/// Minimizes `f` over the box `[lo, hi]` starting from `x0`.
///
/// `f` returns `None` where the objective cannot be evaluated; such points
/// are treated as infinitely bad by the line search. Returns `None` only if
/// the start itself cannot be evaluated.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &LbfgsOptions,
) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let fixed = pinned(&x, &g, lo, hi);
        let pg_norm = g
            .iter()
            .zip(&fixed)
            .filter(|(_, &p)| !p)
            .fold(0.0f64, |m, (v, _)| m.max(v.abs()));
        if pg_norm < opts.grad_tol {
            break;
        }
        iterations += 1;

        // Two-loop recursion on the free subspace.
        let mut d: Vec<f64> = g
            .iter()
            .zip(&fixed)
            .map(|(&v, &p)| if p { 0.0 } else { -v })
            .collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for i in 0..n {
                d[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for i in 0..n {
                d[i] += (a - b) * s[i];
            }
        }
        for i in 0..n {
            if fixed[i] {
                d[i] = 0.0;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // Not a descent direction: restart from steepest descent.
            history.clear();
            d = g
                .iter()
                .zip(&fixed)
                .map(|(&v, &p)| if p { 0.0 } else { -v })
                .collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                break;
            }
        }
        let mut step = if history.is_empty() {
            (1.0 / d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0)
        } else {
            1.0
        };

        // Backtracking Armijo search along the projected path.
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut trial, lo, hi);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if moved.iter().all(|v| *v == 0.0) {
                break;
            }
            evaluations += 1;
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + 1e-4 * dot(&g, &moved) {
                    accepted = Some((trial, ft, gt, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn, s)) = accepted else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - fnew;
        x = xn;
        g = gn;
        fx = fnew;
        if decrease <= opts.rel_tol * fx.abs().max(1.0) {
            break;
        }
    }
    Some(Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
    })
}
