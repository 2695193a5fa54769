//! Choosing which groups to test next.
//!
//! Groups are found by multi-start forward-backward greedy search on the
//! mutual information between the activity state and the test outcome. All
//! candidates in one selection round share a common Monte Carlo sample set,
//! so their MI values are directly comparable.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::group::{iter_bits, Group};
use crate::information::{CommonSamples, MiEstimate, MiEvaluator};
use crate::particles::ParticleSet;
use crate::variance::NoiseModel;

// Minimum MI gain for a greedy move.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub n_starts: usize,
    pub max_batch: usize,
    /// Relative MI drop (w.r.t. the first group) that ends a batch.
    pub mi_drop: f64,
    pub mc_samples: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            n_starts: 3,
            max_batch: 5,
            mi_drop: 0.01,
            mc_samples: 2048,
        }
    }
}

/// Initial groups for the greedy search.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub starts: Vec<Group>,
}

impl CandidatePool {
    /// The first start is the empty group, then starts alternate between a
    /// draw from the prior and a particle drawn from the current posterior.
    pub fn sample<R: Rng + ?Sized>(ps: &ParticleSet, count: usize, rng: &mut R) -> Self {
        let dim = ps.dim();
        let mut starts = Vec::with_capacity(count.max(1));
        starts.push(Group::empty(dim));
        for s in 1..count.max(1) {
            if s % 2 == 1 {
                let g = Group::from_indices(
                    dim,
                    ps.prior_q()
                        .iter()
                        .enumerate()
                        .filter(|(_, &q)| rng.random::<f64>() < q)
                        .map(|(i, _)| i)
                        .collect::<Vec<_>>(),
                );
                starts.push(g);
            } else {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut chosen = ps.len() - 1;
                for (k, w) in ps.weights().iter().enumerate() {
                    acc += w;
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                starts.push(ps.particle(chosen));
            }
        }
        Self { starts }
    }

    pub fn from_groups(starts: Vec<Group>) -> Self {
        Self { starts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedGroup {
    pub group: Group,
    pub mi: MiEstimate,
}

/// Greedy MI search over one particle population and one sample set.
pub struct GroupSearch<'a> {
    ps: &'a ParticleSet,
    eval: &'a MiEvaluator,
    excluded: Vec<Group>,
}

impl<'a> GroupSearch<'a> {
    pub fn new(ps: &'a ParticleSet, eval: &'a MiEvaluator) -> Self {
        Self {
            ps,
            eval,
            excluded: Vec::new(),
        }
    }

    pub fn exclude(&mut self, g: Group) {
        self.excluded.push(g);
    }

    /// MI of an arbitrary group under this search's samples.
    pub fn group_mi(&self, g: &Group) -> MiEstimate {
        self.eval
            .mutual_information(self.ps.group_active_probability(g))
    }

    fn score(&self, g: &Group, p: f64, cache: &mut HashMap<u64, f64>) -> f64 {
        if self.excluded.iter().any(|e| e == g) {
            return f64::NEG_INFINITY;
        }
        let p = p.clamp(0.0, 1.0);
        *cache
            .entry(p.to_bits())
            .or_insert_with(|| self.eval.mutual_information(p).value)
    }

    /// Runs the greedy search from every start and returns the best
    /// non-excluded group, or `None` when every start ends on an excluded one.
    pub fn best(&self, pool: &CandidatePool) -> Option<SelectedGroup> {
        let mut best: Option<(Group, f64)> = None;
        let mut cache = HashMap::new();
        for start in &pool.starts {
            let (g, s) = self.climb(start, &mut cache);
            if !s.is_finite() {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bg, bs)) => s > *bs || (s == *bs && g.tie_break_cmp(bg).is_lt()),
            };
            if better {
                best = Some((g, s));
            }
        }
        best.map(|(group, _)| {
            let mi = self.group_mi(&group);
            SelectedGroup { group, mi }
        })
    }

    fn climb(&self, start: &Group, cache: &mut HashMap<u64, f64>) -> (Group, f64) {
        let ps = self.ps;
        let m = ps.len();
        let weights = ps.weights();
        let mut g = start.clone();
        let mut hits: Vec<u32> = (0..m).map(|k| g.overlap(ps.state_words(k))).collect();
        let mut p = covered_mass(weights, &hits);
        let mut current = self.score(&g, p, cache);
        let dim = ps.dim();
        let mut gain = vec![0.0; dim];
        // Each accepted move raises the score, so the loop terminates; the
        // cap only guards against pathological floating-point ties.
        for _ in 0..4 * dim + 4 {
            let mut changed = false;

            // Forward phase: add the dimension with the largest MI.
            loop {
                gain.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..m {
                    if hits[k] == 0 {
                        for i in iter_bits(ps.state_words(k)) {
                            gain[i] += weights[k];
                        }
                    }
                }
                let mut pick: Option<(usize, f64)> = None;
                for (i, &gi) in gain.iter().enumerate() {
                    if g.contains(i) {
                        continue;
                    }
                    g.insert(i);
                    let s = self.score(&g, p + gi, cache);
                    g.remove(i);
                    if pick.is_none_or(|(_, bs)| s > bs) {
                        pick = Some((i, s));
                    }
                }
                match pick {
                    Some((i, s)) if s > current + MIN_GAIN || (g.is_empty() && s.is_finite()) => {
                        g.insert(i);
                        for (k, h) in hits.iter_mut().enumerate() {
                            if ps.state_words(k)[i / 64] >> (i % 64) & 1 == 1 {
                                *h += 1;
                            }
                        }
                        p = covered_mass(weights, &hits);
                        current = s;
                        changed = true;
                    }
                    _ => break,
                }
            }

            // Backward phase: drop the member whose removal raises MI most.
            loop {
                if g.len() <= 1 {
                    break;
                }
                gain.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..m {
                    if hits[k] == 1 {
                        let only = g
                            .words()
                            .iter()
                            .zip(ps.state_words(k))
                            .enumerate()
                            .find_map(|(w, (a, b))| {
                                let x = a & b;
                                (x != 0).then(|| w * 64 + x.trailing_zeros() as usize)
                            })
                            .expect("hit count of one implies a shared bit");
                        gain[only] += weights[k];
                    }
                }
                let mut pick: Option<(usize, f64)> = None;
                for i in g.indices() {
                    g.remove(i);
                    let s = self.score(&g, p - gain[i], cache);
                    g.insert(i);
                    if pick.is_none_or(|(_, bs)| s > bs) {
                        pick = Some((i, s));
                    }
                }
                match pick {
                    Some((i, s)) if s > current + MIN_GAIN => {
                        g.remove(i);
                        for (k, h) in hits.iter_mut().enumerate() {
                            if ps.state_words(k)[i / 64] >> (i % 64) & 1 == 1 {
                                *h -= 1;
                            }
                        }
                        p = covered_mass(weights, &hits);
                        current = s;
                        changed = true;
                    }
                    _ => break,
                }
            }

            if !changed {
                break;
            }
        }
        (g, current)
    }
}

fn covered_mass(weights: &[f64], hits: &[u32]) -> f64 {
    weights
        .iter()
        .zip(hits)
        .filter(|(_, &h)| h > 0)
        .map(|(w, _)| w)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Best group over `pool`, with a fresh common sample set of `mc_samples`.
pub fn forward_backward<R: Rng + ?Sized>(
    ps: &ParticleSet,
    nm: &NoiseModel,
    pool: &CandidatePool,
    mc_samples: usize,
    rng: &mut R,
) -> SelectedGroup {
    let samples = CommonSamples::draw(mc_samples, rng);
    let eval = MiEvaluator::for_model(&samples, nm);
    GroupSearch::new(ps, &eval)
        .best(pool)
        .expect("search without exclusions always yields a group")
}

/// Selects up to `max_batch` distinct groups from the same posterior.
///
/// Later groups are found by rerunning the search with earlier picks
/// excluded; the batch ends once a new group's MI falls below
/// `(1 - mi_drop)` times the first group's MI.
pub fn select_batch<R: Rng + ?Sized>(
    ps: &ParticleSet,
    nm: &NoiseModel,
    cfg: &SelectionConfig,
    rng: &mut R,
) -> Vec<SelectedGroup> {
    let samples = CommonSamples::draw(cfg.mc_samples, rng);
    let eval = MiEvaluator::for_model(&samples, nm);
    let mut search = GroupSearch::new(ps, &eval);
    let pool = CandidatePool::sample(ps, cfg.n_starts, rng);
    let first = search
        .best(&pool)
        .expect("search without exclusions always yields a group");
    let threshold = (1.0 - cfg.mi_drop) * first.mi.value;
    let mut batch = vec![first];
    while batch.len() < cfg.max_batch.max(1) {
        search.exclude(batch.last().unwrap().group.clone());
        let pool = CandidatePool::sample(ps, cfg.n_starts, rng);
        match search.best(&pool) {
            Some(next) if next.mi.value >= threshold => batch.push(next),
            _ => break,
        }
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nm(ratio: f64) -> NoiseModel {
        NoiseModel::new(0.0, 1.0, ratio * ratio, 1e-12).unwrap()
    }

    #[test]
    fn picks_the_uncertain_dimension() {
        // dim 0 never active, dim 1 active in half the particles
        let states = vec![Group::from_indices(2, [1]), Group::empty(2)];
        let ps = ParticleSet::from_states(&states, &[1.0, 1.0], vec![0.05; 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pool = CandidatePool::sample(&ps, 3, &mut rng);
        let best = forward_backward(&ps, &nm(100.0), &pool, 4096, &mut rng);
        assert_eq!(best.group.indices(), vec![1]);
        // quadrature value of the MI at p = 0.5, sigma / sigma_n = 100
        assert!((best.mi.value - 0.640_613).abs() < 0.02, "{:?}", best.mi);
    }

    #[test]
    fn certain_posterior_returns_minimal_group() {
        let states = vec![Group::from_indices(4, 0..4); 3];
        let ps = ParticleSet::from_states(&states, &[1.0; 3], vec![0.05; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = CandidatePool::sample(&ps, 3, &mut rng);
        let best = forward_backward(&ps, &nm(10.0), &pool, 1024, &mut rng);
        assert_eq!(best.group.indices(), vec![0]);
        assert_eq!(best.mi.value, 0.0);
    }

    #[test]
    fn pool_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ps = ParticleSet::init(50, vec![0.2; 10], &mut rng).unwrap();
        let pool = CandidatePool::sample(&ps, 3, &mut rng);
        assert_eq!(pool.starts.len(), 3);
        assert!(pool.starts[0].is_empty());
        assert_eq!(CandidatePool::sample(&ps, 0, &mut rng).starts.len(), 1);
    }

    #[test]
    fn batch_of_one_matches_single_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ps = ParticleSet::init(500, vec![0.1; 20], &mut rng).unwrap();
        let cfg = SelectionConfig {
            max_batch: 1,
            ..Default::default()
        };
        let batch = select_batch(&ps, &nm(20.0), &cfg, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(batch.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = CommonSamples::draw(cfg.mc_samples, &mut rng);
        let eval = MiEvaluator::for_model(&samples, &nm(20.0));
        let pool = CandidatePool::sample(&ps, cfg.n_starts, &mut rng);
        let single = GroupSearch::new(&ps, &eval).best(&pool).unwrap();
        assert_eq!(batch[0], single);
    }

    #[test]
    fn batch_groups_are_distinct_and_nonempty() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ps = ParticleSet::init(2000, vec![0.05; 60], &mut rng).unwrap();
        let batch = select_batch(&ps, &nm(50.0), &SelectionConfig::default(), &mut rng);
        assert!(!batch.is_empty() && batch.len() <= 5);
        for (a, ga) in batch.iter().enumerate() {
            assert!(!ga.group.is_empty());
            for gb in &batch[a + 1..] {
                assert_ne!(ga.group, gb.group);
            }
            assert!(ga.mi.value >= 0.99 * batch[0].mi.value);
        }
    }

    #[test]
    fn single_uncertain_dimension_ends_batch() {
        // dims 1 and 2 are certainly active; any group touching them has p = 1
        let states = vec![
            Group::from_indices(3, [0, 1, 2]),
            Group::from_indices(3, [1, 2]),
        ];
        let ps = ParticleSet::from_states(&states, &[1.0, 1.0], vec![0.05; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = select_batch(&ps, &nm(100.0), &SelectionConfig::default(), &mut rng);
        assert_eq!(batch.len(), 1);
        assert_eq!(batch[0].group.indices(), vec![0]);
    }

    #[test]
    fn excluded_group_is_never_returned() {
        let states = vec![Group::from_indices(2, [1]), Group::empty(2)];
        let ps = ParticleSet::from_states(&states, &[1.0, 1.0], vec![0.05; 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples = CommonSamples::draw(512, &mut rng);
        let eval = MiEvaluator::for_model(&samples, &nm(100.0));
        let mut search = GroupSearch::new(&ps, &eval);
        search.exclude(Group::from_indices(2, [1]));
        let pool = CandidatePool::from_groups(vec![Group::empty(2), Group::from_indices(2, [1])]);
        let next = search.best(&pool).unwrap();
        assert_ne!(next.group, Group::from_indices(2, [1]));
    }
}
