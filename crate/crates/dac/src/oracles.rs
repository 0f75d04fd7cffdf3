//! Independent reference implementations used only for verification.
//!
//! Nothing in here calls the code paths it is used to check: evaluators are
//! iterative where the main path solves linearly, improvement oracles scan
//! or enumerate where the main path optimizes, and the SAC step below is a
//! from-scratch rewrite of the standard twin-critic actor-critic update.


use crate::agent::{DacNetworks, SampledBatch};
use crate::error::Result;
use crate::finite_mdp::{FiniteMdp, QTable, TabularPolicy};
use crate::nn::{Adam, MlpGrads};
use crate::sample_entropy::entropy;

/// Soft (plain-entropy) Q evaluation of a fixed policy by value iteration:
/// `Q ← r/β + γ·P·(E_π[Q] + H(π))`. Iterates to sup-norm stationarity.
pub fn soft_q_evaluation(mdp: &FiniteMdp, pi: &TabularPolicy, beta: f64) -> QTable {
    q_evaluation_with_bonus(mdp, pi, beta, |s| entropy(&pi.probs[s]))
}

/// Unregularized Q evaluation of a fixed policy.
pub fn plain_q_evaluation(mdp: &FiniteMdp, pi: &TabularPolicy, beta: f64) -> QTable {
    q_evaluation_with_bonus(mdp, pi, beta, |_| 0.0)
}

fn q_evaluation_with_bonus(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    beta: f64,
    bonus: impl Fn(usize) -> f64,
) -> QTable {
    let mut q = mdp.zero_q();
    for _ in 0..200_000 {
        let values: Vec<f64> = (0..mdp.n_states)
            .map(|s| {
                let eq: f64 = pi.probs[s].iter().zip(&q[s]).map(|(&p, &v)| p * v).sum();
                eq + bonus(s)
            })
            .collect();
        let mut next = mdp.zero_q();
        let mut delta = 0.0_f64;
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let boot: f64 = mdp.transition[s][a]
                    .iter()
                    .zip(&values)
                    .map(|(&p, &v)| p * v)
                    .sum();
                next[s][a] = mdp.reward[s][a] / beta + mdp.gamma * boot;
                delta = delta.max((next[s][a] - q[s][a]).abs());
            }
        }
        q = next;
        if delta < 1e-14 {
            break;
        }
    }
    q
}

/// Softmax of a score row (max-subtracted).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Independent soft policy iteration: evaluation via [`soft_q_evaluation`],
/// improvement `π(·|s) ∝ exp(Q(s,·))`. Returns the converged policy.
pub fn soft_policy_iteration(
    mdp: &FiniteMdp,
    beta: f64,
    tol: f64,
    max_iters: usize,
) -> TabularPolicy {
    let mut pi = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
    for _ in 0..max_iters {
        let q = soft_q_evaluation(mdp, &pi, beta);
        let new_probs: Vec<Vec<f64>> = (0..mdp.n_states).map(|s| softmax(&q[s])).collect();
        let delta = pi
            .probs
            .iter()
            .flatten()
            .zip(new_probs.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = TabularPolicy { probs: new_probs };
        if delta < tol {
            break;
        }
    }
    pi
}

/// Grid-search maximizer of a scalar function of `p ∈ [0,1]` at the given
/// resolution. Used as the two-action simplex oracle.
pub fn grid_scan_maximize(f: impl Fn(f64) -> f64, resolution: f64) -> f64 {
    let n = (1.0 / resolution).round() as usize;
    let mut best_p = 0.0;
    let mut best_v = f64::NEG_INFINITY;
    for k in 0..=n {
        let p = k as f64 / n as f64;
        let v = f(p);
        if v > best_v {
            best_v = v;
            best_p = p;
        }
    }
    best_p
}

/// Central finite difference of `f` along coordinate `k` at `x`.
pub fn central_diff(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[k] += h;
    xm[k] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Full finite-difference gradient of `f` at `x`.
pub fn fd_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len()).map(|k| central_diff(f, x, k, h)).collect()
}

/// Relative error with an absolute floor, symmetric in its arguments.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Cosine of the angle between two gradient vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-300)
}

/// One standalone SAC gradient step (twin critics, value network with an
/// EMA target, squashed Gaussian policy), written directly from the
/// standard update equations with rewards pre-scaled by 1/β:
///
/// ```text
/// J_π  = E[min_i Q_i(s,ã) − ln π(ã|s)]            (ascent, ã reparameterized)
/// V̂    = min_i Q_i(s,ã) − ln π(ã|s)
/// Q̂    = r/β + γ·(1−done)·V̄(s')
/// ```
///
/// Consumes the RNG exactly like `train_step`: one minibatch draw, then one
/// noise vector per sample.
pub fn sac_reference_step(
    nets: &mut DacNetworks,
    batch: &SampledBatch,
    beta: f64,
    gamma: f64,
    tau: f64,
    policy_opt: &mut Adam,
    q1_opt: &mut Adam,
    q2_opt: &mut Adam,
    v_opt: &mut Adam,
) -> Result<()> {
    let m = batch.transitions.len();
    let scale = 1.0 / m as f64;

    // Fresh policy samples with the shared noise.
    let samples: Vec<_> = batch
        .transitions
        .iter()
        .zip(&batch.noise)
        .map(|(t, eps)| nets.policy.sample_with_noise(&t.state, eps.clone()))
        .collect::<Result<Vec<_>>>()?;

    // Policy ascent on E[minQ − ln π].
    let mut pi_grads = MlpGrads::zeros_like(&nets.policy.net);
    for (t, sample) in batch.transitions.iter().zip(&samples) {
        let (q1, tr1) = nets.critic_value_traced(0, &t.state, &sample.action)?;
        let (q2, tr2) = nets.critic_value_traced(1, &t.state, &sample.action)?;
        let use_first = q1 <= q2;
        let mut sink = MlpGrads::zeros_like(&nets.critics[0]);
        let input_grad = if use_first {
            nets.critics[0].backward(&tr1, &[1.0], &mut sink)
        } else {
            nets.critics[1].backward(&tr2, &[1.0], &mut sink)
        };
        let grad_action = &input_grad[t.state.len()..];
        nets.policy
            .backward_reparam(sample, grad_action, -1.0, &mut pi_grads);
    }
    pi_grads.scale(-scale); // ascent
    policy_opt.step(&mut nets.policy.net, &pi_grads);

    // Critic targets from the EMA value network.
    let q_targets: Vec<f64> = batch
        .transitions
        .iter()
        .map(|t| {
            let v_bar = nets.target_value.shadow.forward(&t.next_state)?[0];
            Ok(t.reward / beta + gamma * if t.done { 0.0 } else { v_bar })
        })
        .collect::<Result<Vec<f64>>>()?;

    // Value targets from the (pre-update) samples and post-update critics
    // would race; SAC computes V̂ with current critics before updating them.
    let v_targets: Vec<f64> = batch
        .transitions
        .iter()
        .zip(&samples)
        .map(|(t, sample)| {
            let q1 = nets.critic_value(0, &t.state, &sample.action)?;
            let q2 = nets.critic_value(1, &t.state, &sample.action)?;
            Ok(q1.min(q2) - sample.log_prob)
        })
        .collect::<Result<Vec<f64>>>()?;

    for i in 0..2 {
        let mut grads = MlpGrads::zeros_like(&nets.critics[i]);
        for (t, &target) in batch.transitions.iter().zip(&q_targets) {
            let (q, trace) = nets.critic_value_traced(i, &t.state, &t.action)?;
            nets.critics[i].backward(&trace, &[q - target], &mut grads);
        }
        grads.scale(scale);
        if i == 0 {
            q1_opt.step(&mut nets.critics[0], &grads);
        } else {
            q2_opt.step(&mut nets.critics[1], &grads);
        }
    }

    let mut v_grads = MlpGrads::zeros_like(&nets.value);
    for (t, &target) in batch.transitions.iter().zip(&v_targets) {
        let trace = nets.value.forward_traced(&t.state)?;
        let v = nets.value.output_of(&trace)[0];
        nets.value.backward(&trace, &[v - target], &mut v_grads);
    }
    v_grads.scale(scale);
    v_opt.step(&mut nets.value, &v_grads);

    nets.target_value.tau = tau;
    nets.target_value.update(&nets.value)?;
    Ok(())
}
