//! Synthetic benchmark functions embedded in a higher-dimensional unit cube.
//!
//! Each benchmark has a small number of active coordinates. The remaining
//! "dummy" coordinates of the ambient space have no effect on the value, so
//! the benchmarks have a known axis-aligned active subspace.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ObjectiveError, Result};

/// A point in the unit hypercube `[0, 1]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = coords
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(invalid(format!("coordinate {i} = {v} outside [0, 1]")));
        }
        Ok(Point(coords))
    }

    /// Clamps every coordinate into `[0, 1]`; NaN becomes 0.5.
    pub fn clipped(mut coords: Vec<f64>) -> Self {
        for c in &mut coords {
            *c = if c.is_nan() { 0.5 } else { c.clamp(0.0, 1.0) };
        }
        Point(coords)
    }

    pub fn center(dim: usize) -> Self {
        Point(vec![0.5; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A black-box function over `[0, 1]^D`, observed with noise.
pub trait Objective {
    fn dim(&self) -> usize;

    fn evaluate(&mut self, x: &Point) -> std::result::Result<f64, ObjectiveError>;

    /// Noiseless value, when the objective knows it.
    fn true_value(&self, _x: &Point) -> Option<f64> {
        None
    }

    /// Global minimum value, when known analytically.
    fn optimal_value(&self) -> Option<f64> {
        None
    }

    /// Ground-truth active coordinates, when known.
    fn active_indices(&self) -> Option<&[usize]> {
        None
    }
}

/// Adapts a plain closure into an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: FnMut(&[f64]) -> f64,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: FnMut(&[f64]) -> f64,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&mut self, x: &Point) -> std::result::Result<f64, ObjectiveError> {
        let y = (self.f)(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(ObjectiveError(format!("non-finite value {y}")))
        }
    }
}

/// The low-dimensional test functions available for embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseFunction {
    Branin2,
    /// Levy in an arbitrary number of dimensions; `Levy { dim: 4 }` is the
    /// standard Levy4 benchmark.
    Levy {
        dim: usize,
    },
    Hartmann6,
    Griewank8,
}

impl BaseFunction {
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            BaseFunction::Branin2 => 2,
            BaseFunction::Levy { dim } => *dim,
            BaseFunction::Hartmann6 => 6,
            BaseFunction::Griewank8 => 8,
        }
    }

    /// Native box of coordinate `i`.
    pub fn native_bounds(&self, i: usize) -> (f64, f64) {
        match self {
            BaseFunction::Branin2 => {
                if i == 0 {
                    (-5.0, 10.0)
                } else {
                    (0.0, 15.0)
                }
            }
            BaseFunction::Levy { .. } => (-10.0, 10.0),
            BaseFunction::Hartmann6 => (0.0, 1.0),
            BaseFunction::Griewank8 => (-600.0, 600.0),
        }
    }

    pub fn optimal_value(&self) -> f64 {
        match self {
            BaseFunction::Branin2 => 0.397_887_357_729_738,
            BaseFunction::Levy { .. } => 0.0,
            BaseFunction::Hartmann6 => -3.322_368_011_415_511,
            BaseFunction::Griewank8 => 0.0,
        }
    }

    /// Default observation noise standard deviation.
    pub fn default_noise_std(&self) -> f64 {
        match self {
            BaseFunction::Branin2 | BaseFunction::Griewank8 => 0.5,
            BaseFunction::Levy { .. } => 0.1,
            BaseFunction::Hartmann6 => 0.01,
        }
    }

    /// Evaluates the function at native coordinates.
    pub fn eval_native(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.intrinsic_dim());
        match self {
            BaseFunction::Branin2 => branin(x[0], x[1]),
            BaseFunction::Levy { .. } => levy(x),
            BaseFunction::Hartmann6 => hartmann6(x),
            BaseFunction::Griewank8 => griewank(x),
        }
    }

    pub fn name(&self) -> String {
        match self {
            BaseFunction::Branin2 => "branin2".into(),
            BaseFunction::Levy { dim } => format!("levy{dim}"),
            BaseFunction::Hartmann6 => "hartmann6".into(),
            BaseFunction::Griewank8 => "griewank8".into(),
        }
    }
}

impl fmt::Display for BaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for BaseFunction {
    type Err = crate::error::GtboError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "branin2" | "branin" => Ok(BaseFunction::Branin2),
            "hartmann6" | "hartmann" => Ok(BaseFunction::Hartmann6),
            "griewank8" | "griewank" => Ok(BaseFunction::Griewank8),
            "levy" => Ok(BaseFunction::Levy { dim: 4 }),
            _ => {
                if let Some(d) = lower.strip_prefix("levy") {
                    let dim: usize = d
                        .parse()
                        .map_err(|_| invalid(format!("unknown benchmark '{s}'")))?;
                    if dim == 0 {
                        return Err(invalid("levy needs at least one dimension"));
                    }
                    return Ok(BaseFunction::Levy { dim });
                }
                Err(invalid(format!("unknown benchmark '{s}'")))
            }
        }
    }
}

impl Serialize for BaseFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for BaseFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let d = w.len();
    let mut sum = (PI * w[0]).sin().powi(2);
    for wi in &w[..d - 1] {
        sum += (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2));
    }
    let wd = w[d - 1];
    sum + (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2))
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

fn hartmann6(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let inner: f64 = (0..6)
                .map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2))
                .sum();
            HARTMANN_ALPHA[i] * (-inner).exp()
        })
        .sum::<f64>()
}

fn griewank(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let prod: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
        .product();
    1.0 + sum - prod
}

/// Maps a unit-interval coordinate onto `[lo, hi]`.
pub fn unit_to_native(u: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + u * (hi - lo)
}

pub fn native_to_unit(v: f64, (lo, hi): (f64, f64)) -> f64 {
    (v - lo) / (hi - lo)
}

/// A base function embedded in `D` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub function: BaseFunction,
    pub ambient_dim: usize,
    /// `active_indices[j]` carries the base function's `j`-th coordinate.
    pub active_indices: Vec<usize>,
    pub noise_std: f64,
}

impl BenchmarkSpec {
    pub fn new(
        function: BaseFunction,
        ambient_dim: usize,
        active_indices: Vec<usize>,
        noise_std: f64,
    ) -> Result<Self> {
        let spec = Self {
            function,
            ambient_dim,
            active_indices,
            noise_std,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Draws the active indices uniformly without replacement.
    pub fn sample<R: Rng + ?Sized>(
        function: BaseFunction,
        ambient_dim: usize,
        noise_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let d = function.intrinsic_dim();
        if d > ambient_dim {
            return Err(invalid(format!(
                "{function} needs {d} dimensions but the ambient space has {ambient_dim}"
            )));
        }
        let mut active = index::sample(rng, ambient_dim, d).into_vec();
        active.sort_unstable();
        Self::new(function, ambient_dim, active, noise_std)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.function.intrinsic_dim();
        if self.active_indices.len() != d {
            return Err(invalid(format!(
                "{} needs {d} active indices, got {}",
                self.function,
                self.active_indices.len()
            )));
        }
        let mut seen = vec![false; self.ambient_dim];
        for &i in &self.active_indices {
            if i >= self.ambient_dim {
                return Err(invalid(format!(
                    "active index {i} outside ambient dimension {}",
                    self.ambient_dim
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(invalid(format!("duplicate active index {i}")));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }

    pub fn optimal_value(&self) -> f64 {
        self.function.optimal_value()
    }

    /// Native coordinates of the base function for an embedded point.
    pub fn to_native(&self, x: &[f64]) -> Vec<f64> {
        self.active_indices
            .iter()
            .enumerate()
            .map(|(j, &i)| unit_to_native(x[i], self.function.native_bounds(j)))
            .collect()
    }
}

/// Noiseless value of the embedded benchmark.
pub fn evaluate_true(spec: &BenchmarkSpec, x: &[f64]) -> Result<f64> {
    if x.len() != spec.ambient_dim {
        return Err(invalid(format!(
            "point has {} coordinates, benchmark expects {}",
            x.len(),
            spec.ambient_dim
        )));
    }
    Ok(spec.function.eval_native(&spec.to_native(x)))
}

/// Noisy observation `f(x) + N(0, noise_std^2)`.
pub fn evaluate<R: Rng + ?Sized>(spec: &BenchmarkSpec, x: &[f64], rng: &mut R) -> Result<f64> {
    let f = evaluate_true(spec, x)?;
    if spec.noise_std == 0.0 {
        return Ok(f);
    }
    let eps: f64 = StandardNormal.sample(rng);
    Ok(f + spec.noise_std * eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultMode {
    Center,
    Random,
}

impl DefaultMode {
    /// Griewank's optimum sits at the cube center, so it gets a random default.
    pub fn for_function(function: BaseFunction) -> Self {
        match function {
            BaseFunction::Griewank8 => DefaultMode::Random,
            _ => DefaultMode::Center,
        }
    }
}

pub fn default_point<R: Rng + ?Sized>(dim: usize, mode: DefaultMode, rng: &mut R) -> Point {
    match mode {
        DefaultMode::Center => Point::center(dim),
        DefaultMode::Random => Point((0..dim).map(|_| rng.random::<f64>()).collect()),
    }
}

/// A benchmark that owns its noise stream, usable as an [`Objective`].
#[derive(Debug, Clone)]
pub struct NoisyBenchmark<R> {
    spec: BenchmarkSpec,
    rng: R,
    evaluations: usize,
    fail_after: Option<usize>,
}

impl<R: Rng> NoisyBenchmark<R> {
    pub fn new(spec: BenchmarkSpec, rng: R) -> Self {
        Self {
            spec,
            rng,
            evaluations: 0,
            fail_after: None,
        }
    }

    /// Makes every evaluation after the first `n` fail. Used to exercise
    /// partial-output handling.
    pub fn fail_after(mut self, n: usize) -> Self {
        self.fail_after = Some(n);
        self
    }

    pub fn spec(&self) -> &BenchmarkSpec {
        &self.spec
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

impl<R: Rng> Objective for NoisyBenchmark<R> {
    fn dim(&self) -> usize {
        self.spec.ambient_dim
    }

    fn evaluate(&mut self, x: &Point) -> std::result::Result<f64, ObjectiveError> {
        if let Some(n) = self.fail_after {
            if self.evaluations >= n {
                return Err(ObjectiveError(format!(
                    "injected failure after {n} evaluations"
                )));
            }
        }
        self.evaluations += 1;
        evaluate(&self.spec, x, &mut self.rng).map_err(|e| ObjectiveError(e.to_string()))
    }

    fn true_value(&self, x: &Point) -> Option<f64> {
        evaluate_true(&self.spec, x).ok()
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.spec.optimal_value())
    }

    fn active_indices(&self) -> Option<&[usize]> {
        Some(&self.spec.active_indices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_from_native(function: BaseFunction, native: &[f64]) -> Vec<f64> {
        native
            .iter()
            .enumerate()
            .map(|(j, &v)| native_to_unit(v, function.native_bounds(j)))
            .collect()
    }

    #[test]
    fn branin_minimizer() {
        let f = BaseFunction::Branin2;
        let spec = BenchmarkSpec::new(f, 2, vec![0, 1], 0.0).unwrap();
        let x = unit_from_native(f, &[PI, 2.275]);
        let y = evaluate_true(&spec, &x).unwrap();
        // Direct evaluation: (2.275 - 5.1/4 + 5 - 6)^2 + 10 (1 - 1/(8 pi)) cos(pi) + 10.
        let direct =
            (2.275 - 5.1 / 4.0 + 5.0 - 6.0f64).powi(2) - 10.0 * (1.0 - 1.0 / (8.0 * PI)) + 10.0;
        assert!((y - direct).abs() < 1e-9);
        assert!((y - 0.397887).abs() < 1e-5);
    }

    #[test]
    fn known_minima() {
        let g = BaseFunction::Griewank8;
        assert_eq!(g.eval_native(&[0.0; 8]), 0.0);
        let l = BaseFunction::Levy { dim: 4 };
        assert!(l.eval_native(&[1.0; 4]).abs() < 1e-12);
        let h = BaseFunction::Hartmann6;
        let xstar = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];
        assert!((h.eval_native(&xstar) - h.optimal_value()).abs() < 1e-4);
    }

    #[test]
    fn inactive_coordinates_are_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = BenchmarkSpec::sample(BaseFunction::Hartmann6, 30, 0.0, &mut rng).unwrap();
        for _ in 0..200 {
            let a: Vec<f64> = (0..30).map(|_| rng.random()).collect();
            let mut b: Vec<f64> = (0..30).map(|_| rng.random()).collect();
            for &i in &spec.active_indices {
                b[i] = a[i];
            }
            assert_eq!(
                evaluate_true(&spec, &a).unwrap(),
                evaluate_true(&spec, &b).unwrap()
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = BenchmarkSpec::new(BaseFunction::Branin2, 5, vec![1, 3], 0.0).unwrap();
        assert!(evaluate_true(&spec, &[0.5; 4]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(BenchmarkSpec::new(BaseFunction::Branin2, 5, vec![1], 0.0).is_err());
        assert!(BenchmarkSpec::new(BaseFunction::Branin2, 5, vec![1, 1], 0.0).is_err());
        assert!(BenchmarkSpec::new(BaseFunction::Branin2, 5, vec![1, 5], 0.0).is_err());
        assert!(BenchmarkSpec::new(BaseFunction::Branin2, 5, vec![1, 2], -1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(BenchmarkSpec::sample(BaseFunction::Griewank8, 4, 0.0, &mut rng).is_err());
    }

    #[test]
    fn zero_noise_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = BenchmarkSpec::sample(BaseFunction::Levy { dim: 4 }, 10, 0.0, &mut rng).unwrap();
        let x = vec![0.3; 10];
        assert_eq!(
            evaluate(&spec, &x, &mut rng).unwrap(),
            evaluate_true(&spec, &x).unwrap()
        );
    }

    #[test]
    fn noise_variance_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec =
            BenchmarkSpec::sample(BaseFunction::Levy { dim: 4 }, 100, 0.1, &mut rng).unwrap();
        let x = vec![0.5; 100];
        let f = evaluate_true(&spec, &x).unwrap();
        let r: Vec<f64> = (0..10_000)
            .map(|_| evaluate(&spec, &x, &mut rng).unwrap() - f)
            .collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
        assert!((0.0075..=0.013).contains(&var), "variance {var}");
    }

    #[test]
    fn default_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            &*default_point(3, DefaultMode::Center, &mut rng),
            &[0.5, 0.5, 0.5]
        );
        let a = default_point(7, DefaultMode::Random, &mut ChaCha8Rng::seed_from_u64(9));
        let b = default_point(7, DefaultMode::Random, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(
            DefaultMode::for_function(BaseFunction::Griewank8),
            DefaultMode::Random
        );
        assert_eq!(
            DefaultMode::for_function(BaseFunction::Branin2),
            DefaultMode::Center
        );
    }

    #[test]
    fn names_round_trip() {
        for f in [
            BaseFunction::Branin2,
            BaseFunction::Levy { dim: 4 },
            BaseFunction::Levy { dim: 16 },
            BaseFunction::Hartmann6,
            BaseFunction::Griewank8,
        ] {
            assert_eq!(f.name().parse::<BaseFunction>().unwrap(), f);
        }
        assert!("rosenbrock".parse::<BaseFunction>().is_err());
    }

    #[test]
    fn point_bounds() {
        assert!(Point::new(vec![0.0, 1.0]).is_ok());
        assert!(Point::new(vec![1.2]).is_err());
        assert_eq!(
            &*Point::clipped(vec![-0.1, 1.3, f64::NAN]),
            &[0.0, 1.0, 0.5]
        );
    }

    proptest::proptest! {
        #[test]
        fn affine_map_round_trips(u in 0.0f64..=1.0, which in 0usize..5) {
            let b = [(-5.0, 10.0), (0.0, 15.0), (-10.0, 10.0), (0.0, 1.0), (-600.0, 600.0)][which];
            let back = native_to_unit(unit_to_native(u, b), b);
            proptest::prop_assert!((back - u).abs() < 1e-12);
        }
    }
}
