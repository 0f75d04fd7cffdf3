//! FIFO replay buffer with uniform and recent-window minibatch sampling.

use std::collections::VecDeque;

use rand::Rng;

use crate::checkpoint::Container;
use crate::error::{DacError, Result};
use crate::finite_mdp::TabularActionDistribution;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

impl Transition {
    fn is_finite(&self) -> bool {
        self.reward.is_finite()
            && self.state.iter().all(|v| v.is_finite())
            && self.action.iter().all(|v| v.is_finite())
            && self.next_state.iter().all(|v| v.is_finite())
    }
}

/// FIFO ring of transitions. Eviction is strictly oldest-first and the
/// insertion counter tracks the total number of pushes ever made.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(DacError::validation("buffer capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: VecDeque::new(),
            inserted: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, transition: Transition) -> Result<()> {
        if !transition.is_finite() {
            return Err(DacError::validation("non-finite transition entries"));
        }
        if let Some(first) = self.storage.front() {
            if first.state.len() != transition.state.len()
                || first.action.len() != transition.action.len()
            {
                return Err(DacError::validation(format!(
                    "transition dims ({},{}) do not match buffer dims ({},{})",
                    transition.state.len(),
                    transition.action.len(),
                    first.state.len(),
                    first.action.len()
                )));
            }
        }
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(transition);
        self.inserted += 1;
        Ok(())
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.storage[i]
    }

    /// Uniform minibatch with replacement over the whole buffer.
    pub fn sample_minibatch(&self, m: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>> {
        self.sample_recent_window(m, self.storage.len(), rng)
    }

    /// Uniform minibatch with replacement restricted to the newest
    /// `min(n_prime, len)` transitions.
    pub fn sample_recent_window(
        &self,
        m: usize,
        n_prime: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<&Transition>> {
        if self.storage.is_empty() {
            return Err(DacError::validation("cannot sample from an empty buffer"));
        }
        if n_prime == 0 {
            return Err(DacError::validation("window size must be positive"));
        }
        let window = n_prime.min(self.storage.len());
        let base = self.storage.len() - window;
        Ok((0..m)
            .map(|_| &self.storage[base + rng.random_range(0..window)])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    /// Per-state normalized action counts. States that never occur in the
    /// buffer fall back to the uniform row, which keeps every row a valid
    /// distribution for the tabular consumers.
    pub fn empirical_action_distribution(
        &self,
        state_index: impl Fn(&Transition) -> usize,
        action_index: impl Fn(&Transition) -> usize,
        n_states: usize,
        n_actions: usize,
    ) -> Result<TabularActionDistribution> {
        let mut counts = vec![vec![0u64; n_actions]; n_states];
        for t in &self.storage {
            let s = state_index(t);
            let a = action_index(t);
            if s >= n_states || a >= n_actions {
                return Err(DacError::validation(format!(
                    "indexer out of range: state {s} (< {n_states}), action {a} (< {n_actions})"
                )));
            }
            counts[s][a] += 1;
        }
        let probs = counts
            .into_iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    vec![1.0 / n_actions as f64; n_actions]
                } else {
                    row.into_iter().map(|c| c as f64 / total as f64).collect()
                }
            })
            .collect();
        TabularActionDistribution::new(probs)
    }

    /// Serializes the buffer into checkpoint entries under `prefix`.
    pub fn dump(&self, prefix: &str, container: &mut Container) -> Result<()> {
        let n = self.storage.len();
        let (sd, ad) = match self.storage.front() {
            Some(t) => (t.state.len(), t.action.len()),
            None => (0, 0),
        };
        let mut states = Vec::with_capacity(n * sd);
        let mut actions = Vec::with_capacity(n * ad);
        let mut rewards = Vec::with_capacity(n);
        let mut next_states = Vec::with_capacity(n * sd);
        let mut dones = Vec::with_capacity(n);
        for t in &self.storage {
            states.extend_from_slice(&t.state);
            actions.extend_from_slice(&t.action);
            rewards.push(t.reward);
            next_states.extend_from_slice(&t.next_state);
            dones.push(if t.done { 1.0 } else { 0.0 });
        }
        let meta = vec![
            self.capacity as f64,
            self.inserted as f64,
            n as f64,
            sd as f64,
            ad as f64,
        ];
        container.insert(&format!("{prefix}.meta"), vec![5], meta)?;
        container.insert(&format!("{prefix}.states"), vec![n, sd], states)?;
        container.insert(&format!("{prefix}.actions"), vec![n, ad], actions)?;
        container.insert(&format!("{prefix}.rewards"), vec![n], rewards)?;
        container.insert(&format!("{prefix}.next_states"), vec![n, sd], next_states)?;
        container.insert(&format!("{prefix}.dones"), vec![n], dones)?;
        Ok(())
    }

    pub fn restore(prefix: &str, container: &Container) -> Result<Self> {
        let meta = &container.get(&format!("{prefix}.meta"))?.data;
        if meta.len() != 5 {
            return Err(DacError::Parse("malformed buffer metadata".to_string()));
        }
        let capacity = meta[0] as usize;
        let inserted = meta[1] as u64;
        let n = meta[2] as usize;
        let sd = meta[3] as usize;
        let ad = meta[4] as usize;
        let states = &container.get(&format!("{prefix}.states"))?.data;
        let actions = &container.get(&format!("{prefix}.actions"))?.data;
        let rewards = &container.get(&format!("{prefix}.rewards"))?.data;
        let next_states = &container.get(&format!("{prefix}.next_states"))?.data;
        let dones = &container.get(&format!("{prefix}.dones"))?.data;
        let mut buffer = ReplayBuffer::new(capacity)?;
        for i in 0..n {
            buffer.storage.push_back(Transition {
                state: states[i * sd..(i + 1) * sd].to_vec(),
                action: actions[i * ad..(i + 1) * ad].to_vec(),
                reward: rewards[i],
                next_state: next_states[i * sd..(i + 1) * sd].to_vec(),
                done: dones[i] != 0.0,
            });
        }
        buffer.inserted = inserted;
        Ok(buffer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tr(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: vec![tag * 10.0],
            reward: tag,
            next_state: vec![tag + 1.0],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction_keeps_the_newest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 1..=4 {
            b.push(tr(i as f64)).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.total_inserted(), 4);
        let tags: Vec<f64> = b.iter().map(|t| t.state[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn push_one_into_empty() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(tr(1.0)).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn capacity_bound_holds() {
        let mut b = ReplayBuffer::new(100).unwrap();
        for i in 0..101 {
            b.push(tr(i as f64)).unwrap();
        }
        assert_eq!(b.len(), 100);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut b = ReplayBuffer::new(4).unwrap();
        b.push(tr(1.0)).unwrap();
        let bad = Transition {
            state: vec![1.0, 2.0],
            action: vec![0.0],
            reward: 0.0,
            next_state: vec![0.0, 0.0],
            done: false,
        };
        assert!(b.push(bad).is_err());
    }

    #[test]
    fn single_element_buffer_samples_itself() {
        let mut b = ReplayBuffer::new(4).unwrap();
        b.push(tr(7.0)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let batch = b.sample_minibatch(4, &mut rng).unwrap();
        assert!(batch.iter().all(|t| t.state[0] == 7.0));
    }

    #[test]
    fn sampling_is_deterministic_under_a_seed() {
        let mut b = ReplayBuffer::new(50).unwrap();
        for i in 0..50 {
            b.push(tr(i as f64)).unwrap();
        }
        let draw = |seed: u64| -> Vec<f64> {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            b.sample_minibatch(16, &mut rng)
                .unwrap()
                .iter()
                .map(|t| t.state[0])
                .collect()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn empty_buffer_sampling_errors() {
        let b = ReplayBuffer::new(4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(b.sample_minibatch(1, &mut rng).is_err());
    }

    #[test]
    fn minibatch_sampling_is_uniform_chi_square() {
        let mut b = ReplayBuffer::new(100).unwrap();
        for i in 0..100 {
            b.push(tr(i as f64)).unwrap();
        }
        let mut rng = ChaCha12Rng::seed_from_u64(1234);
        let n = 100_000;
        let mut counts = [0u64; 100];
        for t in b.sample_minibatch(n, &mut rng).unwrap() {
            counts[t.state[0] as usize] += 1;
        }
        let expected = n as f64 / 100.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 99 degrees of freedom, upper 0.99 quantile ≈ 134.6.
        assert!(chi2 < 134.64, "chi-square statistic {chi2}");
    }

    #[test]
    fn recent_window_draws_only_from_the_window() {
        let mut b = ReplayBuffer::new(2000).unwrap();
        for i in 0..2000 {
            b.push(tr(i as f64)).unwrap();
        }
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for t in b.sample_recent_window(5000, 100, &mut rng).unwrap() {
            assert!(t.state[0] >= 1900.0);
        }
        // Window of one always returns the newest.
        for t in b.sample_recent_window(10, 1, &mut rng).unwrap() {
            assert_eq!(t.state[0], 1999.0);
        }
    }

    #[test]
    fn full_window_consumes_rng_like_plain_sampling() {
        let mut b = ReplayBuffer::new(64).unwrap();
        for i in 0..64 {
            b.push(tr(i as f64)).unwrap();
        }
        let mut r1 = ChaCha12Rng::seed_from_u64(77);
        let mut r2 = ChaCha12Rng::seed_from_u64(77);
        let a: Vec<f64> = b
            .sample_minibatch(32, &mut r1)
            .unwrap()
            .iter()
            .map(|t| t.state[0])
            .collect();
        let c: Vec<f64> = b
            .sample_recent_window(32, 1_000_000, &mut r2)
            .unwrap()
            .iter()
            .map(|t| t.state[0])
            .collect();
        assert_eq!(a, c);
    }

    #[test]
    fn empirical_distribution_counts_and_fallback() {
        let mut b = ReplayBuffer::new(16).unwrap();
        for &a in &[0.0, 0.0, 0.0, 1.0] {
            b.push(Transition {
                state: vec![0.0],
                action: vec![a],
                reward: 0.0,
                next_state: vec![0.0],
                done: true,
            })
            .unwrap();
        }
        let dist = b
            .empirical_action_distribution(
                |t| t.state[0] as usize,
                |t| t.action[0] as usize,
                2,
                2,
            )
            .unwrap();
        assert_eq!(dist.probs[0], vec![0.75, 0.25]);
        assert_eq!(dist.probs[1], vec![0.5, 0.5]);
        let sums: Vec<f64> = dist.probs.iter().map(|r| r.iter().sum()).collect();
        assert!(sums.iter().all(|s| (s - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn dump_restore_round_trips() {
        let mut b = ReplayBuffer::new(8).unwrap();
        for i in 0..5 {
            let mut t = tr(i as f64);
            t.done = i % 2 == 0;
            b.push(t).unwrap();
        }
        let mut c = Container::new();
        b.dump("buffer", &mut c).unwrap();
        let restored = ReplayBuffer::restore("buffer", &c).unwrap();
        assert_eq!(restored.capacity(), b.capacity());
        assert_eq!(restored.total_inserted(), b.total_inserted());
        assert_eq!(restored.len(), b.len());
        for (x, y) in restored.iter().zip(b.iter()) {
            assert_eq!(x, y);
        }
    }
}
