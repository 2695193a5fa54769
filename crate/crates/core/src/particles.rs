//! Sequential Monte Carlo posterior over binary activity states.
//!
//! Each particle is a packed bit vector `ξ_k ∈ {0,1}^D` with a log weight.
//! Observations reweight particles by the Gaussian likelihood of the tested
//! difference under the "signal" or "noise" hypothesis, depending on whether
//! the tested group intersects the particle. When the effective sample size
//! drops below a fraction of `M`, the population is systematically resampled
//! and moved with one Gibbs sweep per particle, which leaves the posterior
//! invariant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, GtboError, Result};
use crate::group::{iter_bits, word_count, Group};
use crate::variance::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcConfig {
    /// Rejuvenate when `ESS < ess_fraction * M`.
    pub ess_fraction: f64,
    pub gibbs_sweeps: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            ess_fraction: 0.5,
            gibbs_sweeps: 1,
        }
    }
}

/// A tested group together with its observed difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub group: Group,
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct ParticleSet {
    dim: usize,
    words: usize,
    count: usize,
    states: Vec<u64>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    prior_q: Vec<f64>,
    history: Vec<Observation>,
    config: SmcConfig,
}

impl ParticleSet {
    /// Samples `count` particles entrywise from `Bernoulli(prior_q[i])`.
    pub fn init<R: Rng + ?Sized>(count: usize, prior_q: Vec<f64>, rng: &mut R) -> Result<Self> {
        check_prior(&prior_q)?;
        if count == 0 {
            return Err(config("particle count must be >= 1"));
        }
        let dim = prior_q.len();
        let words = word_count(dim);
        let mut states = vec![0u64; count * words];
        for k in 0..count {
            sample_prior(&prior_q, &mut states[k * words..(k + 1) * words], rng);
        }
        Ok(Self {
            dim,
            words,
            count,
            states,
            log_weights: vec![0.0; count],
            weights: vec![1.0 / count as f64; count],
            prior_q,
            history: Vec::new(),
            config: SmcConfig::default(),
        })
    }

    /// Builds a set from explicit states and (unnormalized) weights.
    pub fn from_states(states: &[Group], weights: &[f64], prior_q: Vec<f64>) -> Result<Self> {
        check_prior(&prior_q)?;
        if states.is_empty() || states.len() != weights.len() {
            return Err(invalid("need one weight per state and at least one state"));
        }
        let dim = prior_q.len();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(invalid("state dimension does not match prior"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        let words = word_count(dim);
        let states_flat: Vec<u64> = states
            .iter()
            .flat_map(|s| s.words().iter().copied())
            .collect();
        let mut set = Self {
            dim,
            words,
            count: states.len(),
            states: states_flat,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights: vec![0.0; states.len()],
            prior_q,
            history: Vec::new(),
            config: SmcConfig::default(),
        };
        set.normalize()?;
        Ok(set)
    }

    pub fn with_config(mut self, config: SmcConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> &SmcConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn prior_q(&self) -> &[f64] {
        &self.prior_q
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub(crate) fn state_words(&self, k: usize) -> &[u64] {
        &self.states[k * self.words..(k + 1) * self.words]
    }

    pub fn particle(&self, k: usize) -> Group {
        Group::from_words(self.dim, self.state_words(k))
    }

    /// Weighted fraction of particles that share at least one dimension with `g`.
    pub fn group_active_probability(&self, g: &Group) -> f64 {
        debug_assert_eq!(g.dim(), self.dim);
        let p: f64 = (0..self.count)
            .filter(|&k| g.intersects(self.state_words(k)))
            .map(|k| self.weights[k])
            .sum();
        p.clamp(0.0, 1.0)
    }

    pub fn marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for k in 0..self.count {
            let w = self.weights[k];
            for i in iter_bits(self.state_words(k)) {
                m[i] += w;
            }
        }
        for v in &mut m {
            *v = v.clamp(0.0, 1.0);
        }
        m
    }

    /// Effective sample size `1 / Σ ω_k²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Multiplies in the likelihood of one observation without rejuvenating.
    pub fn reweight(&mut self, g: &Group, z: f64, nm: &NoiseModel) -> Result<()> {
        if g.dim() != self.dim {
            return Err(invalid(format!(
                "group dimension {} does not match particle dimension {}",
                g.dim(),
                self.dim
            )));
        }
        if !z.is_finite() {
            return Err(invalid(format!("observation must be finite, got {z}")));
        }
        let active = nm.log_lik_active(z);
        let inactive = nm.log_lik_inactive(z);
        for k in 0..self.count {
            self.log_weights[k] += if g.intersects(self.state_words(k)) {
                active
            } else {
                inactive
            };
        }
        self.history.push(Observation {
            group: g.clone(),
            z,
        });
        self.normalize()
    }

    /// Reweights, then rejuvenates if the effective sample size dropped too far.
    /// Returns whether a resample-move step ran.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        g: &Group,
        z: f64,
        nm: &NoiseModel,
        rng: &mut R,
    ) -> Result<bool> {
        self.observe(g, z, nm, rng)?;
        self.rejuvenate_if_needed(nm, rng)
    }

    /// Reweights without rejuvenating. If every weight underflows, the
    /// population is redrawn from the prior and reweighted on the full history.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        g: &Group,
        z: f64,
        nm: &NoiseModel,
        rng: &mut R,
    ) -> Result<()> {
        match self.reweight(g, z, nm) {
            Ok(()) => Ok(()),
            Err(GtboError::Degenerate(msg)) => {
                log::warn!("particle weights degenerate ({msg}); replaying history from the prior");
                self.replay_from_prior(nm, rng)
            }
            Err(e) => Err(e),
        }
    }

    pub fn rejuvenate_if_needed<R: Rng + ?Sized>(
        &mut self,
        nm: &NoiseModel,
        rng: &mut R,
    ) -> Result<bool> {
        if self.ess() < self.config.ess_fraction * self.count as f64 {
            self.resample_move(nm, rng);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Systematic resampling followed by Gibbs sweeps over the full history.
    /// A no-op before any observation.
    pub fn resample_move<R: Rng + ?Sized>(&mut self, nm: &NoiseModel, rng: &mut R) {
        if self.history.is_empty() {
            return;
        }
        self.systematic_resample(rng);
        for _ in 0..self.config.gibbs_sweeps {
            self.gibbs_sweep(nm, rng);
        }
    }

    fn systematic_resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let m = self.count;
        let step = 1.0 / m as f64;
        let mut u = rng.random::<f64>() * step;
        let mut new_states = Vec::with_capacity(self.states.len());
        let mut cumulative = self.weights[0];
        let mut j = 0;
        for _ in 0..m {
            while u > cumulative && j + 1 < m {
                j += 1;
                cumulative += self.weights[j];
            }
            new_states.extend_from_slice(self.state_words(j));
            u += step;
        }
        self.states = new_states;
        self.log_weights.iter_mut().for_each(|w| *w = 0.0);
        self.weights.iter_mut().for_each(|w| *w = step);
    }

    /// One systematic-scan Gibbs sweep per particle. Each coordinate is redrawn
    /// from its full conditional, which combines the prior log-odds with the
    /// likelihood change of every test whose outcome indicator depends on it.
    fn gibbs_sweep<R: Rng + ?Sized>(&mut self, nm: &NoiseModel, rng: &mut R) {
        let tests = self.history.len();
        let delta: Vec<f64> = self
            .history
            .iter()
            .map(|o| nm.log_lik_active(o.z) - nm.log_lik_inactive(o.z))
            .collect();
        let mut tests_of: Vec<Vec<u32>> = vec![Vec::new(); self.dim];
        for (t, o) in self.history.iter().enumerate() {
            for i in o.group.indices() {
                tests_of[i].push(t as u32);
            }
        }
        let prior_logit: Vec<f64> = self.prior_q.iter().map(|q| (q / (1.0 - q)).ln()).collect();
        let mut hits = vec![0u32; tests];
        let words = self.words;
        for k in 0..self.count {
            let state = &mut self.states[k * words..(k + 1) * words];
            for (t, o) in self.history.iter().enumerate() {
                hits[t] = o.group.overlap(state);
            }
            for i in 0..self.dim {
                let (w, b) = (i / 64, i % 64);
                let current = (state[w] >> b) & 1;
                let mut log_odds = prior_logit[i];
                for &t in &tests_of[i] {
                    if hits[t as usize] == current as u32 {
                        // i is the only active member of test t in this state,
                        // or none are: flipping i decides the indicator.
                        log_odds += delta[t as usize];
                    }
                }
                let on = rng.random::<f64>() < sigmoid(log_odds);
                if on != (current == 1) {
                    state[w] ^= 1 << b;
                    for &t in &tests_of[i] {
                        if on {
                            hits[t as usize] += 1;
                        } else {
                            hits[t as usize] -= 1;
                        }
                    }
                }
            }
        }
    }

    fn replay_from_prior<R: Rng + ?Sized>(&mut self, nm: &NoiseModel, rng: &mut R) -> Result<()> {
        let words = self.words;
        for k in 0..self.count {
            sample_prior(
                &self.prior_q,
                &mut self.states[k * words..(k + 1) * words],
                rng,
            );
        }
        for k in 0..self.count {
            let state = &self.states[k * words..(k + 1) * words];
            self.log_weights[k] = self
                .history
                .iter()
                .map(|o| {
                    if o.group.intersects(state) {
                        nm.log_lik_active(o.z)
                    } else {
                        nm.log_lik_inactive(o.z)
                    }
                })
                .sum();
        }
        self.normalize()
    }

    fn normalize(&mut self) -> Result<()> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(GtboError::Degenerate(
                "all particle weights vanished".into(),
            ));
        }
        let mut total = 0.0;
        for (w, lw) in self.weights.iter_mut().zip(self.log_weights.iter_mut()) {
            *lw -= max;
            *w = lw.exp();
            total += *w;
        }
        for w in &mut self.weights {
            *w /= total;
        }
        Ok(())
    }
}

fn check_prior(prior_q: &[f64]) -> Result<()> {
    if prior_q.is_empty() {
        return Err(config("prior must cover at least one dimension"));
    }
    if let Some(q) = prior_q.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(config(format!(
            "prior activity probability {q} outside (0, 1)"
        )));
    }
    Ok(())
}

fn sample_prior<R: Rng + ?Sized>(prior_q: &[f64], state: &mut [u64], rng: &mut R) {
    state.iter_mut().for_each(|w| *w = 0);
    for (i, &q) in prior_q.iter().enumerate() {
        if rng.random::<f64>() < q {
            state[i / 64] |= 1 << (i % 64);
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nm(sn2: f64, s2: f64) -> NoiseModel {
        NoiseModel::new(0.0, sn2, s2, 1e-12).unwrap()
    }

    fn all_states(dim: usize) -> Vec<Group> {
        (0..1usize << dim)
            .map(|s| Group::from_indices(dim, (0..dim).filter(|i| s >> i & 1 == 1)))
            .collect()
    }

    #[test]
    fn init_weights_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ps = ParticleSet::init(100, vec![0.3; 7], &mut rng).unwrap();
        assert!(ps.weights().iter().all(|&w| w == 0.01));
        assert!(ParticleSet::init(10, vec![0.0, 0.5], &mut rng).is_err());
        assert!(ParticleSet::init(10, vec![1.0], &mut rng).is_err());
        assert!(ParticleSet::init(0, vec![0.5], &mut rng).is_err());
    }

    #[test]
    fn init_bernoulli_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ps = ParticleSet::init(10_000, vec![0.5], &mut rng).unwrap();
        assert!((ps.marginals()[0] - 0.5).abs() < 0.02);
        let ps = ParticleSet::init(10_000, vec![0.05; 100], &mut rng).unwrap();
        let bits: f64 = ps.marginals().iter().sum();
        assert!((bits - 5.0).abs() < 0.5, "{bits}");
    }

    #[test]
    fn group_probability_edge_cases() {
        let ps = ParticleSet::from_states(&all_states(2), &[1.0; 4], vec![0.5; 2]).unwrap();
        assert!((ps.group_active_probability(&Group::from_indices(2, [0])) - 0.5).abs() < 1e-15);
        assert!(
            (ps.group_active_probability(&Group::from_indices(2, [0, 1])) - 0.75).abs() < 1e-15
        );
        let zeros = vec![Group::from_indices(3, [2]); 4];
        let ps = ParticleSet::from_states(&zeros, &[1.0; 4], vec![0.5; 3]).unwrap();
        assert_eq!(
            ps.group_active_probability(&Group::from_indices(3, [0, 1])),
            0.0
        );
    }

    #[test]
    fn group_probability_matches_enumeration() {
        let states = all_states(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        let ps = ParticleSet::from_states(&states, &w, vec![0.5; 3]).unwrap();
        for g in all_states(3).into_iter().skip(1) {
            let exact: f64 = states
                .iter()
                .zip(&w)
                .filter(|(s, _)| g.overlap(s.words()) >= 1)
                .map(|(_, w)| w / total)
                .sum();
            assert!((ps.group_active_probability(&g) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn likelihood_ratio_closed_form() {
        let states = vec![Group::from_indices(1, [0]), Group::empty(1)];
        let mut ps = ParticleSet::from_states(&states, &[1.0, 1.0], vec![0.5]).unwrap();
        ps.reweight(&Group::from_indices(1, [0]), 5.0, &nm(1.0, 100.0))
            .unwrap();
        let ratio = ps.weights()[0] / ps.weights()[1];
        // N(5; 0, 100) / N(5; 0, 1) = 0.1 * exp(12.5 - 0.125)
        let expected = 0.1 * (12.375f64).exp();
        assert!((ratio / expected - 1.0).abs() < 1e-9);
        assert!((ratio / 2.368e4 - 1.0).abs() < 0.01);
    }

    #[test]
    fn uninformative_observation_keeps_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParticleSet::init(50, vec![0.2; 5], &mut rng).unwrap();
        let before = ps.weights().to_vec();
        ps.reweight(&Group::from_indices(5, [1, 2]), 0.0, &nm(2.0, 2.0))
            .unwrap();
        for (a, b) in before.iter().zip(ps.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(ps.history().len(), 1);
    }

    #[test]
    fn non_finite_observation_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParticleSet::init(5, vec![0.2; 3], &mut rng).unwrap();
        assert!(ps
            .reweight(&Group::from_indices(3, [0]), f64::NAN, &nm(1.0, 2.0))
            .is_err());
        assert!(ps
            .reweight(&Group::from_indices(4, [0]), 1.0, &nm(1.0, 2.0))
            .is_err());
    }

    #[test]
    fn resample_move_without_history_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ps = ParticleSet::init(20, vec![0.3; 4], &mut rng).unwrap();
        let before: Vec<Group> = (0..20).map(|k| ps.particle(k)).collect();
        ps.resample_move(&nm(1.0, 10.0), &mut rng);
        let after: Vec<Group> = (0..20).map(|k| ps.particle(k)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn resampling_equalizes_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParticleSet::init(1000, vec![0.3; 4], &mut rng).unwrap();
        ps.reweight(&Group::from_indices(4, [0]), 3.0, &nm(1.0, 10.0))
            .unwrap();
        ps.resample_move(&nm(1.0, 10.0), &mut rng);
        assert!(ps.weights().iter().all(|&w| (w - 1e-3).abs() < 1e-18));
    }

    #[test]
    fn single_all_ones_particle() {
        let ps = ParticleSet::from_states(&[Group::from_indices(4, 0..4)], &[1.0], vec![0.5; 4])
            .unwrap();
        assert_eq!(ps.marginals(), vec![1.0; 4]);
    }

    #[test]
    fn weights_stay_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = nm(0.5, 40.0);
        let mut ps = ParticleSet::init(2000, vec![0.1; 12], &mut rng).unwrap();
        for t in 0..25 {
            let g = Group::from_indices(12, (0..12).filter(|i| (i + t) % 3 == 0));
            let z = if t % 2 == 0 { 6.0 } else { 0.3 };
            ps.update(&g, z, &model, &mut rng).unwrap();
            let s: f64 = ps.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
