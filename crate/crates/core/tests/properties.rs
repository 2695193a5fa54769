use gtbo::engine::{active_set, converged, make_test_point, MIN_PERTURBATION};
use gtbo::experiment::{classification_curve, median_iterations};
use gtbo::information::{binary_entropy, CommonSamples, MiEvaluator};
use gtbo::objective::{evaluate_true, BaseFunction};
use gtbo::optimizer::{dedupe, log_ei};
use gtbo::{BenchmarkSpec, Group, NoiseModel, ParticleSet, Point};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn group_strategy(max_dim: usize) -> impl Strategy<Value = Group> {
    (1..max_dim).prop_flat_map(|d| {
        proptest::collection::vec(any::<bool>(), d).prop_map(|m| Group::from_mask(&m))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_round_trips(g in group_strategy(150)) {
        let back = Group::from_indices(g.dim(), g.indices());
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(Group::from_mask(&g.to_mask()), g.clone());
        let json = serde_json::to_string(&g).unwrap();
        prop_assert_eq!(serde_json::from_str::<Group>(&json).unwrap(), g.clone());
        prop_assert_eq!(g.len(), g.indices().len());
    }

    #[test]
    fn test_points_move_only_grouped_coordinates(
        g in group_strategy(40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x_def = Point::clipped((0..g.dim()).map(|_| rand::Rng::random::<f64>(&mut rng)).collect());
        let x = make_test_point(&x_def, &g, &mut rng);
        for i in 0..g.dim() {
            prop_assert!((0.0..=1.0).contains(&x[i]));
            if g.contains(i) {
                prop_assert!((x[i] - x_def[i]).abs() >= MIN_PERTURBATION);
            } else {
                prop_assert_eq!(x[i], x_def[i]);
            }
        }
    }

    #[test]
    fn posterior_stays_normalized(
        seed in any::<u64>(),
        zs in proptest::collection::vec(-3.0f64..3.0, 1..8),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 12;
        let nm = NoiseModel::new(0.0, 0.05, 2.0, 1e-12).unwrap();
        let mut ps = ParticleSet::init(400, vec![0.1; dim], &mut rng).unwrap();
        for (t, z) in zs.iter().enumerate() {
            let g = Group::from_indices(dim, [t % dim, (3 * t + 1) % dim]);
            ps.update(&g, *z, &nm, &mut rng).unwrap();
            let s: f64 = ps.weights().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(ps.ess() >= 1.0 - 1e-9 && ps.ess() <= ps.len() as f64 + 1e-9);
            for m in ps.marginals() {
                prop_assert!((0.0..=1.0).contains(&m));
            }
            let gp = ps.group_active_probability(&g);
            let mx = g.indices().iter().map(|&i| ps.marginals()[i]).fold(0.0, f64::max);
            prop_assert!(gp + 1e-12 >= mx, "group probability below a member marginal");
        }
    }

    #[test]
    fn mutual_information_is_bounded(p in 0.0f64..=1.0, ratio in 1.0f64..200.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = CommonSamples::draw(2048, &mut rng);
        let mi = MiEvaluator::new(&samples, 1.0, ratio * ratio).mutual_information(p);
        prop_assert!(mi.value >= 0.0);
        prop_assert!(mi.value <= binary_entropy(p) + 0.05, "{:?}", mi);
    }

    #[test]
    fn log_ei_increases_with_incumbent(
        mean in -5.0f64..5.0,
        var in 1e-6f64..10.0,
        inc in -5.0f64..5.0,
        step in 1e-3f64..1.0,
    ) {
        let (a, da, _) = log_ei(mean, var, inc);
        let (b, _, _) = log_ei(mean, var, inc + step);
        prop_assert!(b >= a);
        // lowering the mean by the same amount is equivalent
        let (c, _, _) = log_ei(mean - step, var, inc);
        prop_assert!((b - c).abs() <= 1e-9 * b.abs().max(1.0));
        prop_assert!(da <= 0.0);
    }

    #[test]
    fn dedupe_conserves_observations(
        ys in proptest::collection::vec(-10.0f64..10.0, 1..30),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // coordinates drawn from a small grid so duplicates occur
        let recs: Vec<(Point, f64)> = ys
            .iter()
            .map(|&y| {
                let c: Vec<f64> = (0..3).map(|_| (rand::Rng::random_range(&mut rng, 0..3) as f64) / 2.0).collect();
                (Point::new(c).unwrap(), y)
            })
            .collect();
        let d = dedupe(&recs, &[0, 2], 1e-6);
        prop_assert_eq!(d.counts.iter().sum::<usize>(), recs.len());
        let total: f64 = d.y.iter().zip(&d.counts).map(|(y, &c)| y * c as f64).sum();
        prop_assert!((total - ys.iter().sum::<f64>()).abs() < 1e-9);
        for (i, a) in d.x.iter().enumerate() {
            for b in &d.x[..i] {
                prop_assert!((a[0] - b[0]).abs() > 1e-6 || (a[2] - b[2]).abs() > 1e-6);
            }
        }
    }

    #[test]
    fn inactive_coordinates_do_not_matter(seed in any::<u64>(), dim in 8usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = BenchmarkSpec::sample(BaseFunction::Hartmann6, dim, 0.0, &mut rng).unwrap();
        let mut x: Vec<f64> = (0..dim).map(|_| rand::Rng::random(&mut rng)).collect();
        let before = evaluate_true(&spec, &x).unwrap();
        for i in (0..dim).filter(|i| !spec.active_indices.contains(i)) {
            x[i] = rand::Rng::random(&mut rng);
        }
        prop_assert_eq!(evaluate_true(&spec, &x).unwrap(), before);
    }

    #[test]
    fn classification_and_thresholds(
        m in proptest::collection::vec(0.0f64..=1.0, 1..30),
        truth_bits in any::<u32>(),
    ) {
        let truth: Vec<usize> = (0..m.len()).filter(|i| truth_bits >> (i % 32) & 1 == 1).collect();
        let c = classification_curve(std::slice::from_ref(&m), &truth)[0];
        prop_assert!((0.0..=100.0).contains(&c));
        let act = active_set(&m, 0.5);
        prop_assert!(act.iter().all(|&i| m[i] >= 0.5));
        if converged(&m, 5e-3, 0.9) {
            prop_assert!(m.iter().all(|&v| v <= 5e-3 || v >= 0.9));
        }
    }

    #[test]
    fn median_iterations_is_bracketed(v in proptest::collection::vec(proptest::option::of(0usize..300), 1..12)) {
        let finite: Vec<usize> = v.iter().flatten().copied().collect();
        match median_iterations(&v) {
            Some(m) => {
                prop_assert!(2 * finite.len() >= v.len());
                prop_assert!(m >= *finite.iter().min().unwrap() as f64);
                prop_assert!(m <= *finite.iter().max().unwrap() as f64);
            }
            None => prop_assert!(2 * finite.len() <= v.len()),
        }
    }
}
