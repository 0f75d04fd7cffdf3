//! One-step exploration toy: a unique initial state, `n_actions` actions,
//! immediate termination, and a replay buffer that already holds each of
//! the first `n_actions − 1` actions exactly once.

use crate::env::{ContinuousEnv, StepOutcome};
use crate::error::{DacError, Result};
use crate::finite_mdp::FiniteMdp;
use crate::replay::{ReplayBuffer, Transition};

/// Tabular form: state 0 is the initial state, state 1 absorbs. All
/// rewards are zero, so only the entropy machinery distinguishes policies.
/// The returned buffer stores `(s₀, A_k)` for `k = 0..n_actions−1`, leaving
/// the final action unseen.
pub fn one_step_toy(n_actions: usize) -> Result<(FiniteMdp, ReplayBuffer)> {
    if n_actions < 2 {
        return Err(DacError::validation("toy MDP needs at least 2 actions"));
    }
    let mut transition = vec![vec![vec![0.0; 2]; n_actions]; 2];
    for a in 0..n_actions {
        transition[0][a][1] = 1.0; // every action terminates
        transition[1][a][1] = 1.0; // absorbing
    }
    let reward = vec![vec![0.0; n_actions]; 2];
    let mdp = FiniteMdp::new(transition, reward, 0.9, vec![1.0, 0.0])?;

    let mut buffer = ReplayBuffer::new(n_actions.max(4))?;
    for k in 0..n_actions - 1 {
        buffer.push(Transition {
            state: vec![0.0],
            action: vec![k as f64],
            reward: 0.0,
            next_state: vec![1.0],
            done: true,
        })?;
    }
    Ok((mdp, buffer))
}

/// Continuous relaxation for the function-approximation learner: a single
/// zero observation, a 1-D action in `[−1, 1]` split into `n_actions` equal
/// bins, and immediate termination. [`OneStepEmbedEnv::preload_buffer`]
/// seeds a buffer with the centers of the first `n_actions − 1` bins.
#[derive(Debug, Clone)]
pub struct OneStepEmbedEnv {
    pub n_actions: usize,
}

impl OneStepEmbedEnv {
    pub fn new(n_actions: usize) -> Result<Self> {
        if n_actions < 2 {
            return Err(DacError::validation("embedding needs at least 2 bins"));
        }
        Ok(OneStepEmbedEnv { n_actions })
    }

    /// Center of bin `k` in `[−1, 1]`.
    pub fn bin_center(&self, k: usize) -> f64 {
        -1.0 + (2.0 * k as f64 + 1.0) / self.n_actions as f64
    }

    /// Lower edge of the final (unseen) bin.
    pub fn unseen_bin_start(&self) -> f64 {
        1.0 - 2.0 / self.n_actions as f64
    }

    pub fn preload_buffer(&self, buffer: &mut ReplayBuffer) -> Result<()> {
        for k in 0..self.n_actions - 1 {
            buffer.push(Transition {
                state: vec![0.0],
                action: vec![self.bin_center(k)],
                reward: 0.0,
                next_state: vec![0.0],
                done: true,
            })?;
        }
        Ok(())
    }
}

impl ContinuousEnv for OneStepEmbedEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Vec<f64> {
        vec![0.0]
    }

    fn step(&mut self, _action: &[f64]) -> StepOutcome {
        StepOutcome {
            obs: vec![0.0],
            reward: 0.0,
            done: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_distribution_is_uniform_over_seen_actions() {
        let (mdp, buffer) = one_step_toy(10).unwrap();
        let q = buffer
            .empirical_action_distribution(|t| t.state[0] as usize, |t| t.action[0] as usize, 2, 10)
            .unwrap();
        for k in 0..9 {
            assert!((q.probs[0][k] - 1.0 / 9.0).abs() < 1e-15);
        }
        assert_eq!(q.probs[0][9], 0.0);
        // Unvisited terminal state falls back to uniform.
        assert!((q.probs[1][0] - 0.1).abs() < 1e-15);
        assert_eq!(mdp.n_states, 2);
    }

    #[test]
    fn two_action_buffer_is_degenerate() {
        let (_, buffer) = one_step_toy(2).unwrap();
        let q = buffer
            .empirical_action_distribution(|t| t.state[0] as usize, |t| t.action[0] as usize, 2, 2)
            .unwrap();
        assert_eq!(q.probs[0], vec![1.0, 0.0]);
    }

    #[test]
    fn all_episodes_terminate_immediately() {
        let (mdp, _) = one_step_toy(5).unwrap();
        for a in 0..5 {
            assert_eq!(mdp.transition[0][a][1], 1.0);
        }
        let mut env = OneStepEmbedEnv::new(5).unwrap();
        env.reset();
        assert!(env.step(&[0.3]).done);
    }

    #[test]
    fn embedded_bins_cover_the_box() {
        let env = OneStepEmbedEnv::new(10).unwrap();
        assert!((env.bin_center(0) + 0.9).abs() < 1e-15);
        assert!((env.bin_center(9) - 0.9).abs() < 1e-15);
        assert!((env.unseen_bin_start() - 0.8).abs() < 1e-15);
        let mut buffer = ReplayBuffer::new(16).unwrap();
        env.preload_buffer(&mut buffer).unwrap();
        assert_eq!(buffer.len(), 9);
    }
}
