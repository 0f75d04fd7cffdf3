//! Desk-scale environments and reward-shaping wrappers.

mod maze;
mod toy;

pub use maze::{MazeConfig, MazeEnv, MazeState, VisitationGrid};
pub use toy::{one_step_toy, OneStepEmbedEnv};

/// Observation, reward, and termination flag from one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A continuous-state, box-action environment. Actions live in `[−1,1]^d`.
pub trait ContinuousEnv {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> StepOutcome;
}

/// 1-D corridor: position in `[0, length]`, action is a clamped step,
/// observation is the position rescaled to `[−1, 1]`. Reward is zero; the
/// episode ends at the horizon. Meant to be wrapped by the reward shapers
/// below.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    pub length: f64,
    pub horizon: usize,
    position: f64,
    steps: usize,
}

impl ChainEnv {
    pub fn new(length: f64, horizon: usize) -> Self {
        ChainEnv {
            length,
            horizon,
            position: 0.5,
            steps: 0,
        }
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    fn obs(&self) -> Vec<f64> {
        vec![2.0 * self.position / self.length - 1.0]
    }
}

impl ContinuousEnv for ChainEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Vec<f64> {
        self.position = 0.5;
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let dx = action[0].clamp(-1.0, 1.0);
        self.position = (self.position + dx).clamp(0.0, self.length);
        self.steps += 1;
        StepOutcome {
            obs: self.obs(),
            reward: 0.0,
            done: self.steps >= self.horizon,
        }
    }
}

/// Accumulates rewards for `delay` steps and delivers the sum once every
/// `delay` steps, flushing whatever remains when the episode ends. Total
/// undiscounted episode reward is conserved exactly.
#[derive(Debug, Clone)]
pub struct DelayedRewardWrapper<E> {
    pub inner: E,
    delay: usize,
    pending: f64,
    since_emit: usize,
}

impl<E: ContinuousEnv> DelayedRewardWrapper<E> {
    pub fn new(inner: E, delay: usize) -> Self {
        assert!(delay >= 1, "delay must be at least 1");
        DelayedRewardWrapper {
            inner,
            delay,
            pending: 0.0,
            since_emit: 0,
        }
    }
}

impl<E: ContinuousEnv> ContinuousEnv for DelayedRewardWrapper<E> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.pending = 0.0;
        self.since_emit = 0;
        self.inner.reset()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let mut out = self.inner.step(action);
        self.pending += out.reward;
        self.since_emit += 1;
        if out.done || self.since_emit == self.delay {
            out.reward = self.pending;
            self.pending = 0.0;
            self.since_emit = 0;
        } else {
            out.reward = 0.0;
        }
        out
    }
}

/// Replaces the inner reward with `1` whenever the predicate over
/// (previous observation, action, next observation) holds, else `0`.
#[derive(Clone)]
pub struct SparseThresholdWrapper<E, P> {
    pub inner: E,
    predicate: P,
    last_obs: Vec<f64>,
}

impl<E, P> SparseThresholdWrapper<E, P>
where
    E: ContinuousEnv,
    P: Fn(&[f64], &[f64], &[f64]) -> bool,
{
    pub fn new(mut inner: E, predicate: P) -> Self {
        let last_obs = inner.reset();
        SparseThresholdWrapper {
            inner,
            predicate,
            last_obs,
        }
    }
}

impl<E, P> ContinuousEnv for SparseThresholdWrapper<E, P>
where
    E: ContinuousEnv,
    P: Fn(&[f64], &[f64], &[f64]) -> bool,
{
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.last_obs = self.inner.reset();
        self.last_obs.clone()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let mut out = self.inner.step(action);
        out.reward = if (self.predicate)(&self.last_obs, action, &out.obs) {
            1.0
        } else {
            0.0
        };
        self.last_obs = out.obs.clone();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Emits reward 1 every step and terminates at the horizon.
    struct ConstRewardEnv {
        horizon: usize,
        steps: usize,
    }

    impl ContinuousEnv for ConstRewardEnv {
        fn state_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn reset(&mut self) -> Vec<f64> {
            self.steps = 0;
            vec![0.0]
        }
        fn step(&mut self, _action: &[f64]) -> StepOutcome {
            self.steps += 1;
            StepOutcome {
                obs: vec![self.steps as f64],
                reward: 1.0,
                done: self.steps >= self.horizon,
            }
        }
    }

    #[test]
    fn delay_one_is_the_identity() {
        let mut plain = ConstRewardEnv { horizon: 7, steps: 0 };
        let mut wrapped = DelayedRewardWrapper::new(ConstRewardEnv { horizon: 7, steps: 0 }, 1);
        plain.reset();
        wrapped.reset();
        for _ in 0..7 {
            let a = [0.0];
            assert_eq!(plain.step(&a).reward, wrapped.step(&a).reward);
        }
    }

    #[test]
    fn delay_twenty_emits_bursts() {
        let mut env = DelayedRewardWrapper::new(ConstRewardEnv { horizon: 100, steps: 0 }, 20);
        env.reset();
        let mut rewards = Vec::new();
        for _ in 0..40 {
            rewards.push(env.step(&[0.0]).reward);
        }
        for (i, &r) in rewards.iter().enumerate() {
            if (i + 1) % 20 == 0 {
                assert_eq!(r, 20.0);
            } else {
                assert_eq!(r, 0.0);
            }
        }
    }

    #[test]
    fn delay_flushes_remainder_at_episode_end() {
        let mut env = DelayedRewardWrapper::new(ConstRewardEnv { horizon: 25, steps: 0 }, 20);
        env.reset();
        let mut emitted = Vec::new();
        loop {
            let out = env.step(&[0.0]);
            emitted.push(out.reward);
            if out.done {
                break;
            }
        }
        assert_eq!(emitted.len(), 25);
        assert_eq!(emitted[19], 20.0);
        assert_eq!(emitted[24], 5.0);
        let total: f64 = emitted.iter().sum();
        assert_eq!(total, 25.0);
    }

    #[test]
    fn delayed_wrapper_conserves_episode_reward() {
        for delay in [1, 3, 7, 20] {
            for horizon in [5, 20, 33] {
                let mut env =
                    DelayedRewardWrapper::new(ConstRewardEnv { horizon, steps: 0 }, delay);
                env.reset();
                let mut total = 0.0;
                loop {
                    let out = env.step(&[0.0]);
                    total += out.reward;
                    if out.done {
                        break;
                    }
                }
                assert_eq!(total, horizon as f64);
            }
        }
    }

    #[test]
    fn sparse_wrapper_always_false_gives_zero() {
        let mut env = SparseThresholdWrapper::new(
            ConstRewardEnv { horizon: 10, steps: 0 },
            |_s: &[f64], _a: &[f64], _n: &[f64]| false,
        );
        env.reset();
        for _ in 0..10 {
            assert_eq!(env.step(&[0.0]).reward, 0.0);
        }
    }

    #[test]
    fn sparse_wrapper_threshold_on_chain() {
        let mut env = SparseThresholdWrapper::new(
            ChainEnv::new(10.0, 50),
            // Observation is position rescaled to [−1,1]; 0.5 ↔ x = 7.5.
            |_s: &[f64], _a: &[f64], next: &[f64]| next[0] >= 0.5,
        );
        env.reset();
        let mut rewarded = 0;
        for _ in 0..20 {
            let out = env.step(&[1.0]);
            if out.reward == 1.0 {
                rewarded += 1;
            }
        }
        // Walking right at unit speed from 0.5 crosses 7.5 at step 7.
        assert!(rewarded > 0);
        let mut env2 = ChainEnv::new(10.0, 50);
        env2.reset();
        let mut pos = 0.5_f64;
        let mut first_reward_step = None;
        for step in 1..=20 {
            pos = (pos + 1.0).min(10.0);
            if pos >= 7.5 && first_reward_step.is_none() {
                first_reward_step = Some(step);
            }
        }
        assert_eq!(first_reward_step, Some(7));
        assert_eq!(rewarded, 20 - 7 + 1);
    }
}
