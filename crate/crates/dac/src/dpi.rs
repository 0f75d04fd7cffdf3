//! Exact tabular diverse policy iteration.
//!
//! Alternates exact evaluation ([`crate::finite_mdp::evaluate_diverse_q`])
//! with one of two improvement steps:
//!
//! * [`improve_closed_form`] — the closed-form maximizer of the simplified
//!   per-state objective, `π_new(·|s) ∝ R_old(s,·)·exp(Q(s,·)/α)`;
//! * [`exact_simplex_improve`] — the global per-state maximizer of
//!   `β·(E_π[Q] + H(α·π + (1−α)·q))`, solved exactly on the probability
//!   simplex through its stationarity conditions.
//!
//! The per-state objective value `J(s) = β·V(s)` is tracked across
//! iterations and must be non-decreasing; a decrease beyond tolerance is
//! surfaced as an error rather than silently accepted.

use std::fmt::Write as _;

use crate::error::{DacError, Result};
use crate::finite_mdp::{
    diverse_state_value, evaluate_diverse_q, FiniteMdp, QTable, TabularActionDistribution,
    TabularPolicy,
};
use crate::sample_entropy::{ratio_closed_form, DiscreteDistPair, MixtureWeight, EPS_Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImprovementMode {
    ClosedForm,
    ExactSimplex,
}

#[derive(Debug, Clone)]
pub struct DpiConfig {
    pub alpha: MixtureWeight,
    pub beta: f64,
    pub improvement_mode: ImprovementMode,
    pub tol: f64,
    pub max_iters: usize,
}

impl DpiConfig {
    pub fn new(
        alpha: MixtureWeight,
        beta: f64,
        improvement_mode: ImprovementMode,
        tol: f64,
        max_iters: usize,
    ) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(DacError::validation("tol must be positive"));
        }
        if max_iters == 0 {
            return Err(DacError::validation("max_iters must be at least 1"));
        }
        if !(beta > 0.0) {
            return Err(DacError::validation("beta must be positive"));
        }
        Ok(DpiConfig {
            alpha,
            beta,
            improvement_mode,
            tol,
            max_iters,
        })
    }
}

/// One recorded iteration: the policy, its exact Q table, the per-state
/// objective values, and the sup-norm policy change from the previous
/// iterate.
#[derive(Debug, Clone)]
pub struct DpiIteration {
    pub policy: TabularPolicy,
    pub q_table: QTable,
    pub j_values: Vec<f64>,
    pub max_policy_delta: f64,
}

#[derive(Debug, Clone)]
pub struct DpiTrace {
    pub iterations: Vec<DpiIteration>,
    pub converged: bool,
}

impl DpiTrace {
    pub fn final_policy(&self) -> &TabularPolicy {
        &self.iterations.last().unwrap().policy
    }

    pub fn final_j(&self) -> &[f64] {
        &self.iterations.last().unwrap().j_values
    }

    /// CSV serialization: `iter,state,J,max_policy_delta` per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema dac.dpi-trace v1\n");
        out.push_str("iter,state,J,max_policy_delta\n");
        for (i, it) in self.iterations.iter().enumerate() {
            for (s, j) in it.j_values.iter().enumerate() {
                writeln!(out, "{i},{s},{j},{}", it.max_policy_delta).unwrap();
            }
        }
        out
    }
}

/// Closed-form improvement `π_new(·|s) ∝ R_old(s,·)·exp(Q(s,·)/α)`,
/// the normalized maximizer of the frozen-ratio objective
/// `E_π[Q + α·ln R_old − α·ln π]`. Overflow is guarded by max-subtraction
/// on the scores `Q/α + ln R_old` before exponentiation.
pub fn improve_closed_form(
    q_table: &QTable,
    ratio_old: &[Vec<f64>],
    alpha: MixtureWeight,
) -> Result<TabularPolicy> {
    let a = alpha.get();
    if a <= 0.0 {
        return Err(DacError::validation(
            "closed-form improvement needs alpha in (0,1]",
        ));
    }
    let mut probs = Vec::with_capacity(q_table.len());
    for (s, q_row) in q_table.iter().enumerate() {
        let r_row = &ratio_old[s];
        let scores: Vec<f64> = q_row
            .iter()
            .zip(r_row)
            .map(|(&q, &r)| {
                if !(r > 0.0 && r < 1.0) && a < 1.0 {
                    return Err(DacError::validation(format!(
                        "ratio {r} at state {s} must lie strictly inside (0,1)"
                    )));
                }
                Ok(q / a + r.max(EPS_Q).ln())
            })
            .collect::<Result<_>>()?;
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        probs.push(exps.into_iter().map(|e| e / sum).collect());
    }
    TabularPolicy::new(probs)
}

/// Per-state objective of the improvement step, `β·(E_π[Q] + H(q_mix))`.
fn simplex_objective(pi_row: &[f64], q_row: &[f64], buf_row: &[f64], alpha: f64, beta: f64) -> f64 {
    let mut val = 0.0;
    for i in 0..pi_row.len() {
        val += pi_row[i] * q_row[i];
        let mix = alpha * pi_row[i] + (1.0 - alpha) * buf_row[i];
        if mix > 0.0 {
            val -= mix * mix.ln();
        }
    }
    beta * val
}

/// ∂/∂π_a of [`simplex_objective`]: `β·(Q_a − α·ln(q_mix_a) − α)`.
fn simplex_gradient(pi_row: &[f64], q_row: &[f64], buf_row: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    (0..pi_row.len())
        .map(|i| {
            let mix = (alpha * pi_row[i] + (1.0 - alpha) * buf_row[i]).max(EPS_Q);
            beta * (q_row[i] - alpha * (mix.ln() + 1.0))
        })
        .collect()
}

const SIMPLEX_GRAD_TOL: f64 = 1e-10;

/// Global per-state maximizer of `β·(E_π[Q] + H(α·π + (1−α)·q))` over the
/// probability simplex.
///
/// The objective is strictly concave (linear plus the entropy of an affine
/// map), so the stationarity conditions are sufficient: with multiplier λ
/// on the normalization constraint,
///
/// ```text
/// π_a(λ) = max(0, (exp((Q_a − λ)/α − 1) − (1−α)·q_a) / α)
/// ```
///
/// and `Σ_a π_a(λ)` is continuous and non-increasing in λ, so the unique
/// root of `Σ_a π_a(λ) = 1` is found by bisection to machine precision.
/// Vertex solutions come out exact (off-support entries are exactly zero).
/// The returned row satisfies the stationarity residual
/// `max_a |π_a·(g_a − ⟨π, g⟩)| ≤ 1e-10` (the gradient norm in the simplex
/// geometry), which is verified before returning.
pub fn exact_simplex_improve(
    q_table: &QTable,
    q_dist: &TabularActionDistribution,
    alpha: MixtureWeight,
    beta: f64,
) -> Result<TabularPolicy> {
    let a = alpha.get();
    let mut probs = Vec::with_capacity(q_table.len());
    for (s, q_row) in q_table.iter().enumerate() {
        let buf_row = &q_dist.probs[s];
        let n = q_row.len();
        if a == 0.0 {
            // Linear objective: uniform over the argmax set.
            let best = q_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let winners: Vec<usize> = (0..n).filter(|&i| q_row[i] >= best - 1e-12).collect();
            let mut pi = vec![0.0; n];
            for &i in &winners {
                pi[i] = 1.0 / winners.len() as f64;
            }
            probs.push(pi);
            continue;
        }

        let pi_at = |lambda: f64| -> Vec<f64> {
            q_row
                .iter()
                .zip(buf_row)
                .map(|(&qv, &qb)| {
                    let t = ((qv - lambda) / a - 1.0).min(700.0);
                    (t.exp() - (1.0 - a) * qb).max(0.0) / a
                })
                .collect()
        };
        let sum_at = |lambda: f64| -> f64 { pi_at(lambda).iter().sum() };

        // Bracket the root of Σπ(λ) = 1.
        let q_max = q_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut hi = q_max;
        let mut width = 1.0;
        while sum_at(hi) > 1.0 {
            hi += width;
            width *= 2.0;
        }
        let mut lo = q_max;
        width = 1.0;
        while sum_at(lo) < 1.0 {
            lo -= width;
            width *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sum_at(mid) >= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
                break;
            }
        }
        let mut pi = pi_at(0.5 * (lo + hi));
        let total: f64 = pi.iter().sum();
        for p in &mut pi {
            *p /= total;
        }

        let grad = simplex_gradient(&pi, q_row, buf_row, a, beta);
        let mean: f64 = pi.iter().zip(&grad).map(|(&p, &g)| p * g).sum();
        let residual = pi
            .iter()
            .zip(&grad)
            .map(|(&p, &g)| (p * (g - mean)).abs())
            .fold(0.0, f64::max);
        if residual > SIMPLEX_GRAD_TOL * beta.max(1.0) {
            return Err(DacError::numeric(format!(
                "simplex solve left a stationarity residual of {residual:e} at state {s}"
            )));
        }
        probs.push(pi);
    }
    TabularPolicy::new(probs)
}

fn policy_sup_distance(a: &TabularPolicy, b: &TabularPolicy) -> f64 {
    a.probs
        .iter()
        .flatten()
        .zip(b.probs.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs diverse policy iteration from `pi0` with `q` held fixed.
///
/// Each iteration evaluates the current policy exactly, records the
/// per-state objective `J(s) = β·V(s)`, and then improves. Iteration stops
/// when the sup-norm policy change drops below `cfg.tol` or after
/// `cfg.max_iters` improvements. A per-state objective decrease of more
/// than 1e-8 across an iteration is an error.
pub fn run_dpi(
    mdp: &FiniteMdp,
    q: &TabularActionDistribution,
    cfg: &DpiConfig,
    pi0: &TabularPolicy,
) -> Result<DpiTrace> {
    let mut policy = pi0.clone();
    let mut iterations: Vec<DpiIteration> = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        let q_table = evaluate_diverse_q(mdp, &policy, q, cfg.alpha, cfg.beta)?;
        let j_values: Vec<f64> = (0..mdp.n_states)
            .map(|s| cfg.beta * diverse_state_value(&q_table, &policy, q, cfg.alpha, s))
            .collect();
        if let Some(prev) = iterations.last() {
            for s in 0..mdp.n_states {
                if j_values[s] < prev.j_values[s] - 1e-8 {
                    return Err(DacError::Monotonicity(format!(
                        "J({s}) fell from {} to {}",
                        prev.j_values[s], j_values[s]
                    )));
                }
            }
        }
        let improved = match cfg.improvement_mode {
            ImprovementMode::ClosedForm => {
                let ratio: Vec<Vec<f64>> = (0..mdp.n_states)
                    .map(|s| {
                        ratio_closed_form(
                            &DiscreteDistPair {
                                pi_row: policy.probs[s].clone(),
                                q_row: q.probs[s].clone(),
                            },
                            cfg.alpha,
                        )
                    })
                    .collect();
                improve_closed_form(&q_table, &ratio, cfg.alpha)?
            }
            ImprovementMode::ExactSimplex => {
                exact_simplex_improve(&q_table, q, cfg.alpha, cfg.beta)?
            }
        };
        let delta = policy_sup_distance(&policy, &improved);
        iterations.push(DpiIteration {
            policy: policy.clone(),
            q_table,
            j_values,
            max_policy_delta: delta,
        });
        policy = improved;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(DpiTrace {
        iterations,
        converged,
    })
}

/// Result of the one-step exploration example: the sample-aware-entropy
/// maximizer concentrates on the single action absent from the buffer, so
/// one draw suffices to complete the action set, against `n_actions` draws
/// in expectation for the uniform (plain-entropy) maximizer.
#[derive(Debug, Clone)]
pub struct ToyExampleResult {
    /// Optimized policy row at the initial state.
    pub optimal_row: Vec<f64>,
    /// Mixture row `α·π* + (1−α)·q` at the initial state.
    pub mixture_row: Vec<f64>,
    /// Expected draws until the unseen action under the exact optimum (1).
    pub dac_expected_steps: f64,
    /// Expected draws under the uniform maximizer (`n_actions`).
    pub uniform_expected_steps: f64,
}

/// Runs diverse policy iteration on the one-step toy MDP whose buffer holds
/// each of the first `n_actions − 1` actions once, with `α = 1/n_actions`.
pub fn toy_example(n_actions: usize) -> Result<ToyExampleResult> {
    if n_actions < 2 {
        return Err(DacError::validation("toy example needs at least 2 actions"));
    }
    let (mdp, buffer) = crate::env::one_step_toy(n_actions)?;
    let q = buffer.empirical_action_distribution(
        |t| t.state[0] as usize,
        |t| t.action[0] as usize,
        mdp.n_states,
        n_actions,
    )?;
    let alpha = MixtureWeight::new(1.0 / n_actions as f64)?;
    let cfg = DpiConfig::new(alpha, 1.0, ImprovementMode::ExactSimplex, 1e-9, 200)?;
    let pi0 = TabularPolicy::uniform(mdp.n_states, n_actions);
    let trace = run_dpi(&mdp, &q, &cfg, &pi0)?;
    let optimal_row = trace.final_policy().probs[0].clone();
    let a = alpha.get();
    let mixture_row: Vec<f64> = optimal_row
        .iter()
        .zip(&q.probs[0])
        .map(|(&p, &qb)| a * p + (1.0 - a) * qb)
        .collect();
    Ok(ToyExampleResult {
        optimal_row,
        mixture_row,
        dac_expected_steps: 1.0,
        uniform_expected_steps: n_actions as f64,
    })
}

// --- Tabular softmax instruments -----------------------------------------
//
// Small helpers for checking that the frozen-ratio objective and the full
// mixture objective share a gradient at the current policy, with the policy
// parameterized by logits.

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    crate::oracles::softmax(logits)
}

/// `β·(E_π[Q] + H(α·π + (1−α)·q))` at `π = softmax(logits)`; the ratio
/// inside varies with the policy.
pub fn softmax_mixture_objective(
    logits: &[f64],
    q_row: &[f64],
    buf_row: &[f64],
    alpha: f64,
    beta: f64,
) -> f64 {
    let pi = softmax(logits);
    simplex_objective(&pi, q_row, buf_row, alpha, beta)
}

pub fn softmax_mixture_objective_grad(
    logits: &[f64],
    q_row: &[f64],
    buf_row: &[f64],
    alpha: f64,
    beta: f64,
) -> Vec<f64> {
    let pi = softmax(logits);
    let dpi = simplex_gradient(&pi, q_row, buf_row, alpha, beta);
    chain_softmax(&pi, &dpi)
}

/// `β·Σ_a π_a·(Q_a + α·ln R_a − α·ln π_a)` at `π = softmax(logits)` with the
/// ratio row frozen.
pub fn softmax_frozen_ratio_objective(
    logits: &[f64],
    q_row: &[f64],
    ratio_old: &[f64],
    alpha: f64,
    beta: f64,
) -> f64 {
    let pi = softmax(logits);
    let mut val = 0.0;
    for i in 0..pi.len() {
        val += pi[i] * (q_row[i] + alpha * ratio_old[i].ln() - alpha * pi[i].max(EPS_Q).ln());
    }
    beta * val
}

pub fn softmax_frozen_ratio_objective_grad(
    logits: &[f64],
    q_row: &[f64],
    ratio_old: &[f64],
    alpha: f64,
    beta: f64,
) -> Vec<f64> {
    let pi = softmax(logits);
    let dpi: Vec<f64> = (0..pi.len())
        .map(|i| beta * (q_row[i] + alpha * ratio_old[i].ln() - alpha * pi[i].max(EPS_Q).ln() - alpha))
        .collect();
    chain_softmax(&pi, &dpi)
}

/// Chain rule through softmax: `dJ/dz_j = π_j·(dJ/dπ_j − Σ_b π_b·dJ/dπ_b)`.
fn chain_softmax(pi: &[f64], dpi: &[f64]) -> Vec<f64> {
    let mean: f64 = pi.iter().zip(dpi).map(|(&p, &d)| p * d).sum();
    pi.iter().zip(dpi).map(|(&p, &d)| p * (d - mean)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use crate::sample_entropy::entropy;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn weight(a: f64) -> MixtureWeight {
        MixtureWeight::new(a).unwrap()
    }

    #[test]
    fn closed_form_uniform_under_constant_scores() {
        let q_table = vec![vec![2.0; 4]];
        let ratio = vec![vec![0.5; 4]];
        let pi = improve_closed_form(&q_table, &ratio, weight(0.5)).unwrap();
        for &p in &pi.probs[0] {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_flat_scores_give_uniform() {
        // Q/α negligible and the ratio of a uniform policy against a
        // uniform buffer row is constant, so the improvement stays uniform.
        let q_table = vec![vec![1e-12, 1e-12, 1e-12]];
        let pair = DiscreteDistPair {
            pi_row: vec![1.0 / 3.0; 3],
            q_row: vec![1.0 / 3.0; 3],
        };
        let ratio = vec![ratio_closed_form(&pair, weight(0.5))];
        let pi = improve_closed_form(&q_table, &ratio, weight(1.0)).unwrap();
        for &p in &pi.probs[0] {
            assert!((p - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_matches_simplex_maximizer() {
        // The closed form maximizes E_π[Q + α·lnR_old − α·lnπ]; compare the
        // frozen-ratio objective value of the closed form against mirror
        // ascent on that same frozen objective realized via a grid scan.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let alpha = 0.3 + 0.6 * rng.random::<f64>();
            let q_row: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let r_row: Vec<f64> = (0..2).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
            let pi = improve_closed_form(&vec![q_row.clone()], &vec![r_row.clone()], weight(alpha))
                .unwrap();
            let objective = |p: f64| -> f64 {
                let row = [p, 1.0 - p];
                let mut val = 0.0;
                for i in 0..2 {
                    if row[i] > 0.0 {
                        val += row[i] * (q_row[i] + alpha * r_row[i].ln() - alpha * row[i].ln());
                    }
                }
                val
            };
            let best = oracles::grid_scan_maximize(objective, 1e-6);
            assert!(
                (pi.probs[0][0] - best).abs() <= 2e-6,
                "closed form {} vs grid {}",
                pi.probs[0][0],
                best
            );
        }
    }

    #[test]
    fn simplex_alpha_one_is_softmax_of_q() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let q_table = vec![(0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect::<Vec<f64>>()];
        let q_dist = TabularActionDistribution::uniform(1, 5);
        let pi = exact_simplex_improve(&q_table, &q_dist, weight(1.0), 1.0).unwrap();
        let sm = oracles::softmax(&q_table[0]);
        for (a, b) in pi.probs[0].iter().zip(&sm) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn simplex_two_action_matches_grid_scan() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for trial in 0..20 {
            let alpha = 0.2 + 0.6 * rng.random::<f64>();
            let beta = 0.5 + rng.random::<f64>();
            let q_row: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let buf_raw: Vec<f64> = (0..2).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = buf_raw.iter().sum();
            let buf_row: Vec<f64> = buf_raw.iter().map(|x| x / total).collect();
            let q_dist = TabularActionDistribution::new(vec![buf_row.clone()]).unwrap();
            let pi =
                exact_simplex_improve(&vec![q_row.clone()], &q_dist, weight(alpha), beta).unwrap();
            let best = oracles::grid_scan_maximize(
                |p| simplex_objective(&[p, 1.0 - p], &q_row, &buf_row, alpha, beta),
                1e-6,
            );
            assert!(
                (pi.probs[0][0] - best).abs() <= 2e-6,
                "trial {trial}: ascent {} vs grid {}",
                pi.probs[0][0],
                best
            );
        }
    }

    #[test]
    fn simplex_uniform_inputs_give_uniform() {
        let q_table = vec![vec![0.7; 4]];
        let q_dist = TabularActionDistribution::uniform(1, 4);
        let pi = exact_simplex_improve(&q_table, &q_dist, weight(0.4), 1.0).unwrap();
        for &p in &pi.probs[0] {
            assert!((p - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn dpi_alpha_one_matches_soft_policy_iteration() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mdp = FiniteMdp::random(5, 3, 0.9, &mut rng);
        let q_dist = TabularActionDistribution::uniform(5, 3);
        for mode in [ImprovementMode::ClosedForm, ImprovementMode::ExactSimplex] {
            let cfg = DpiConfig::new(weight(1.0), 0.8, mode, 1e-10, 500).unwrap();
            let pi0 = TabularPolicy::uniform(5, 3);
            let trace = run_dpi(&mdp, &q_dist, &cfg, &pi0).unwrap();
            assert!(trace.converged);
            let reference = oracles::soft_policy_iteration(&mdp, 0.8, 1e-12, 500);
            let dist = trace
                .final_policy()
                .probs
                .iter()
                .flatten()
                .zip(reference.probs.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(dist <= 1e-6, "mode {mode:?}: distance {dist}");
        }
    }

    #[test]
    fn dpi_init_independent_objective() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let mdp = FiniteMdp::random(4, 3, 0.9, &mut rng);
        let q_dist = TabularActionDistribution {
            probs: TabularPolicy::random(4, 3, &mut rng).probs,
        };
        let cfg = DpiConfig::new(weight(0.5), 1.0, ImprovementMode::ExactSimplex, 1e-9, 500).unwrap();
        let t1 = run_dpi(&mdp, &q_dist, &cfg, &TabularPolicy::uniform(4, 3)).unwrap();
        let t2 = run_dpi(&mdp, &q_dist, &cfg, &TabularPolicy::random(4, 3, &mut rng)).unwrap();
        assert!(t1.converged && t2.converged);
        for s in 0..4 {
            assert!(
                (t1.final_j()[s] - t2.final_j()[s]).abs() <= 1e-6,
                "state {s}: {} vs {}",
                t1.final_j()[s],
                t2.final_j()[s]
            );
        }
    }

    #[test]
    fn dpi_monotone_q_across_iterations_both_modes() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for mode in [ImprovementMode::ClosedForm, ImprovementMode::ExactSimplex] {
            for trial in 0..5 {
                let n_s = rng.random_range(2..=6);
                let n_a = rng.random_range(2..=4);
                let mdp = FiniteMdp::random(n_s, n_a, 0.9, &mut rng);
                let q_dist = TabularActionDistribution {
                    probs: TabularPolicy::random(n_s, n_a, &mut rng).probs,
                };
                let cfg = DpiConfig::new(weight(0.5), 1.0, mode, 1e-9, 300).unwrap();
                let pi0 = TabularPolicy::random(n_s, n_a, &mut rng);
                let trace = run_dpi(&mdp, &q_dist, &cfg, &pi0).unwrap();
                for w in trace.iterations.windows(2) {
                    for s in 0..n_s {
                        for a in 0..n_a {
                            assert!(
                                w[1].q_table[s][a] >= w[0].q_table[s][a] - 1e-8,
                                "mode {mode:?} trial {trial}: Q({s},{a}) regressed"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn toy_example_puts_mass_on_the_unseen_action() {
        let result = toy_example(10).unwrap();
        assert!(
            result.optimal_row[9] >= 0.999,
            "mass on unseen action: {}",
            result.optimal_row[9]
        );
        assert_eq!(result.dac_expected_steps, 1.0);
        assert_eq!(result.uniform_expected_steps, 10.0);
        for &m in &result.mixture_row {
            assert!((m - 0.1).abs() <= 1e-6, "mixture row entry {m}");
        }
    }

    #[test]
    fn toy_example_two_actions() {
        let result = toy_example(2).unwrap();
        assert!(result.optimal_row[1] >= 0.999);
        assert!(result.optimal_row[0] <= 1e-3);
        for &m in &result.mixture_row {
            assert!((m - 0.5).abs() <= 1e-6);
        }
    }

    #[test]
    fn toy_uniform_baseline_is_plain_entropy_maximizer() {
        // At α = 1 the objective per state is E_π[Q] + H(π) with constant Q,
        // whose maximizer is uniform: expected draws n_actions.
        let (mdp, _) = crate::env::one_step_toy(6).unwrap();
        let q_dist = TabularActionDistribution::uniform(mdp.n_states, 6);
        let cfg = DpiConfig::new(weight(1.0), 1.0, ImprovementMode::ExactSimplex, 1e-9, 100).unwrap();
        let trace = run_dpi(&mdp, &q_dist, &cfg, &TabularPolicy::uniform(mdp.n_states, 6)).unwrap();
        for &p in &trace.final_policy().probs[0] {
            assert!((p - 1.0 / 6.0).abs() < 1e-8);
        }
    }

    #[test]
    fn theorem2_gradients_parallel_and_match_fd() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.random_range(2..=6);
            let alpha = 0.15 + 0.7 * rng.random::<f64>();
            let beta = 0.5 + rng.random::<f64>();
            let logits: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let q_row: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let buf_raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = buf_raw.iter().sum();
            let buf_row: Vec<f64> = buf_raw.iter().map(|x| x / total).collect();

            let pi_old = softmax(&logits);
            let ratio_old = ratio_closed_form(
                &DiscreteDistPair {
                    pi_row: pi_old.clone(),
                    q_row: buf_row.clone(),
                },
                weight(alpha),
            );

            let g_mix = softmax_mixture_objective_grad(&logits, &q_row, &buf_row, alpha, beta);
            let g_frozen =
                softmax_frozen_ratio_objective_grad(&logits, &q_row, &ratio_old, alpha, beta);
            assert!(
                oracles::cosine(&g_mix, &g_frozen) >= 1.0 - 1e-9,
                "cosine {}",
                oracles::cosine(&g_mix, &g_frozen)
            );

            let fd_mix = oracles::fd_gradient(
                &mut |z: &[f64]| softmax_mixture_objective(z, &q_row, &buf_row, alpha, beta),
                &logits,
                1e-6,
            );
            let fd_frozen = oracles::fd_gradient(
                &mut |z: &[f64]| {
                    softmax_frozen_ratio_objective(z, &q_row, &ratio_old, alpha, beta)
                },
                &logits,
                1e-6,
            );
            for k in 0..n {
                assert!(oracles::rel_err(g_mix[k], fd_mix[k], 1e-4) <= 1e-4);
                assert!(oracles::rel_err(g_frozen[k], fd_frozen[k], 1e-4) <= 1e-4);
            }
        }
    }

    #[test]
    fn trace_csv_has_schema_and_rows() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let mdp = FiniteMdp::random(3, 2, 0.8, &mut rng);
        let q_dist = TabularActionDistribution::uniform(3, 2);
        let cfg = DpiConfig::new(weight(0.5), 1.0, ImprovementMode::ExactSimplex, 1e-8, 50).unwrap();
        let trace = run_dpi(&mdp, &q_dist, &cfg, &TabularPolicy::uniform(3, 2)).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# schema dac.dpi-trace v1");
        assert_eq!(lines.next().unwrap(), "iter,state,J,max_policy_delta");
        assert!(lines.count() >= 3);
    }

    #[test]
    fn dpi_objective_beats_plain_entropy_solution_under_divergent_buffer() {
        // With a buffer row concentrated on one action, the mixture-entropy
        // optimum differs from the plain-entropy optimum; check the J of the
        // diverse solution is at least that of the soft solution.
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let mdp = FiniteMdp::random(4, 3, 0.9, &mut rng);
        let mut probs = vec![vec![0.90, 0.05, 0.05]; 4];
        probs[1] = vec![0.05, 0.90, 0.05];
        let q_dist = TabularActionDistribution::new(probs).unwrap();
        let alpha = weight(0.5);
        let cfg = DpiConfig::new(alpha, 1.0, ImprovementMode::ExactSimplex, 1e-9, 300).unwrap();
        let trace = run_dpi(&mdp, &q_dist, &cfg, &TabularPolicy::uniform(4, 3)).unwrap();

        let soft = oracles::soft_policy_iteration(&mdp, 1.0, 1e-10, 300);
        let soft_q = evaluate_diverse_q(&mdp, &soft, &q_dist, alpha, 1.0).unwrap();
        for s in 0..4 {
            let j_soft = diverse_state_value(&soft_q, &soft, &q_dist, alpha, s);
            assert!(trace.final_j()[s] >= j_soft - 1e-8);
        }
        let _ = entropy(&trace.final_policy().probs[0]);
    }
}
