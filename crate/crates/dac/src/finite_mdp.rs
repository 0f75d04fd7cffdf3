//! Exact finite-MDP machinery.
//!
//! Dense tables for transitions, rewards, policies, and buffer action
//! distributions, plus two routes to the diverse Q-function of a fixed
//! policy: a direct linear solve of the fixed-point system and repeated
//! application of the regularized Bellman backup
//!
//! ```text
//! (T Q)(s,a) = r(s,a)/β + γ·Σ_s' P(s'|s,a)·V(s')
//! V(s)       = Σ_a π(a|s)·Q(s,a) + H(α·π(·|s) + (1−α)·q(·|s))
//! ```
//!
//! The backup is a γ-contraction in sup norm, so both routes agree; tests
//! use the iteration as the independent witness for the solver.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{DacError, Result};
use crate::sample_entropy::{
    entropy, mixture_entropy, ratio_closed_form, validate_prob_row, DiscreteDistPair,
    MixtureWeight, EPS_Q,
};

/// Q table indexed as `values[state][action]`.
pub type QTable = Vec<Vec<f64>>;

/// A finite MDP with dense transition and reward tables.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a]` is a probability row over next states.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub initial_state_dist: Vec<f64>,
}

impl FiniteMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        gamma: f64,
        initial_state_dist: Vec<f64>,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(DacError::validation("MDP needs at least one state"));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(DacError::validation("MDP needs at least one action"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(DacError::validation(format!(
                "gamma must lie in [0,1), got {gamma}"
            )));
        }
        if reward.len() != n_states || transition.iter().any(|row| row.len() != n_actions) {
            return Err(DacError::validation("transition/reward table shape mismatch"));
        }
        for (s, row) in transition.iter().enumerate() {
            for (a, probs) in row.iter().enumerate() {
                if probs.len() != n_states {
                    return Err(DacError::validation(format!(
                        "transition row ({s},{a}) has length {}, expected {n_states}",
                        probs.len()
                    )));
                }
                validate_prob_row(probs, &format!("transition row ({s},{a})"))?;
            }
            if reward[s].len() != n_actions {
                return Err(DacError::validation(format!("reward row {s} shape mismatch")));
            }
            if reward[s].iter().any(|r| !r.is_finite()) {
                return Err(DacError::validation(format!("non-finite reward in row {s}")));
            }
        }
        validate_prob_row(&initial_state_dist, "initial state distribution")?;
        if initial_state_dist.len() != n_states {
            return Err(DacError::validation("initial distribution length mismatch"));
        }
        Ok(FiniteMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            initial_state_dist,
        })
    }

    /// Random MDP with Dirichlet(1) transition rows and rewards in [−1, 1].
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, rng: &mut impl Rng) -> Self {
        let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
        let mut reward = vec![vec![0.0; n_actions]; n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let raw: Vec<f64> = (0..n_states)
                    .map(|_| -(rng.random::<f64>().max(1e-12)).ln())
                    .collect();
                let sum: f64 = raw.iter().sum();
                for s2 in 0..n_states {
                    transition[s][a][s2] = raw[s2] / sum;
                }
                reward[s][a] = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        let initial = vec![1.0 / n_states as f64; n_states];
        FiniteMdp::new(transition, reward, gamma, initial).expect("generated tables are valid")
    }

    pub fn zero_q(&self) -> QTable {
        vec![vec![0.0; self.n_actions]; self.n_states]
    }
}

/// Per-state probability rows over actions for a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in probs.iter().enumerate() {
            validate_prob_row(row, &format!("policy row {s}"))?;
        }
        Ok(TabularPolicy { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TabularPolicy {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    pub fn random(n_states: usize, n_actions: usize, rng: &mut impl Rng) -> Self {
        let probs = (0..n_states)
            .map(|_| {
                let raw: Vec<f64> = (0..n_actions)
                    .map(|_| -(rng.random::<f64>().max(1e-12)).ln())
                    .collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect();
        TabularPolicy { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }
}

/// Per-state sample action distribution extracted from a replay buffer.
/// Same representation and invariants as a policy row.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularActionDistribution {
    pub probs: Vec<Vec<f64>>,
}

impl TabularActionDistribution {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in probs.iter().enumerate() {
            validate_prob_row(row, &format!("action distribution row {s}"))?;
        }
        Ok(TabularActionDistribution { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TabularActionDistribution {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }
}

fn dist_pair(pi: &TabularPolicy, q: &TabularActionDistribution, s: usize) -> DiscreteDistPair {
    DiscreteDistPair {
        pi_row: pi.probs[s].clone(),
        q_row: q.probs[s].clone(),
    }
}

/// Sample-aware entropy bonus of state `s`.
///
/// The α endpoints are taken analytically: at α = 1 the mixture is the
/// policy itself, and at α = 0 the mixture entropy no longer depends on the
/// policy, so the evaluator drops it and reduces to plain (unregularized)
/// evaluation.
pub fn entropy_bonus(
    pi: &TabularPolicy,
    q: &TabularActionDistribution,
    alpha: MixtureWeight,
    s: usize,
) -> f64 {
    let a = alpha.get();
    if a == 0.0 {
        0.0
    } else if a == 1.0 {
        entropy(&pi.probs[s])
    } else {
        mixture_entropy(&dist_pair(pi, q, s), alpha)
    }
}

/// Diverse state value `V(s) = E_π[Q(s,·)] + H(q_mix(·|s))`, with the
/// entropy evaluated through the exact closed-form ratio so the expression
/// matches what the function-approximation learner estimates.
pub fn diverse_state_value(
    q_table: &QTable,
    pi: &TabularPolicy,
    q: &TabularActionDistribution,
    alpha: MixtureWeight,
    s: usize,
) -> f64 {
    let expected_q: f64 = pi.probs[s]
        .iter()
        .zip(&q_table[s])
        .map(|(&p, &qv)| p * qv)
        .sum();
    let a = alpha.get();
    let bonus = if a == 0.0 || a == 1.0 {
        entropy_bonus(pi, q, alpha, s)
    } else {
        let pair = dist_pair(pi, q, s);
        let ratio = ratio_closed_form(&pair, alpha);
        let mut h = 0.0;
        for i in 0..pair.n_actions() {
            let api = a * pair.pi_row[i];
            // ln R − ln(α·π) = −ln q_mix; at π = 0 the difference is the
            // exact limit −ln((1−α)·q), which the floored logs would lose.
            let term = if api > EPS_Q {
                ratio[i].max(EPS_Q).ln() - api.ln()
            } else {
                -(api + (1.0 - a) * pair.q_row[i]).max(EPS_Q).ln()
            };
            h += api * term + (1.0 - a) * pair.q_row[i] * term;
        }
        h
    };
    expected_q + bonus
}

/// One application of the regularized Bellman backup `T^π`.
pub fn bellman_backup(
    q_table: &QTable,
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    q: &TabularActionDistribution,
    alpha: MixtureWeight,
    beta: f64,
) -> Result<QTable> {
    validate_eval_inputs(mdp, pi, q, beta)?;
    let values: Vec<f64> = (0..mdp.n_states)
        .map(|s| diverse_state_value(q_table, pi, q, alpha, s))
        .collect();
    let mut out = mdp.zero_q();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let bootstrap: f64 = mdp.transition[s][a]
                .iter()
                .zip(&values)
                .map(|(&p, &v)| p * v)
                .sum();
            out[s][a] = mdp.reward[s][a] / beta + mdp.gamma * bootstrap;
        }
    }
    Ok(out)
}

fn validate_eval_inputs(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    q: &TabularActionDistribution,
    beta: f64,
) -> Result<()> {
    if pi.probs.len() != mdp.n_states || q.probs.len() != mdp.n_states {
        return Err(DacError::validation("policy/action-distribution state count mismatch"));
    }
    if pi.probs.iter().any(|r| r.len() != mdp.n_actions)
        || q.probs.iter().any(|r| r.len() != mdp.n_actions)
    {
        return Err(DacError::validation("policy/action-distribution action count mismatch"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(DacError::validation(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// Exact diverse Q-function of a fixed policy, by solving the |S|·|A|
/// linear fixed-point system of the backup directly.
///
/// The system matrix `I − γ·P·π` is strictly diagonally dominant for
/// γ < 1, so the solve cannot be singular for valid inputs; a residual
/// above 1e-10 is reported as an internal numerical error.
pub fn evaluate_diverse_q(
    mdp: &FiniteMdp,
    pi: &TabularPolicy,
    q: &TabularActionDistribution,
    alpha: MixtureWeight,
    beta: f64,
) -> Result<QTable> {
    validate_eval_inputs(mdp, pi, q, beta)?;
    let n = mdp.n_states * mdp.n_actions;
    let idx = |s: usize, a: usize| s * mdp.n_actions + a;

    let bonus: Vec<f64> = (0..mdp.n_states)
        .map(|s| entropy_bonus(pi, q, alpha, s))
        .collect();

    let mut mat = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = idx(s, a);
            let mut c = mdp.reward[s][a] / beta;
            for s2 in 0..mdp.n_states {
                let p = mdp.transition[s][a][s2];
                if p == 0.0 {
                    continue;
                }
                c += mdp.gamma * p * bonus[s2];
                for a2 in 0..mdp.n_actions {
                    mat[(row, idx(s2, a2))] -= mdp.gamma * p * pi.probs[s2][a2];
                }
            }
            rhs[row] = c;
        }
    }

    let solution = mat
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| DacError::numeric("fixed-point system reported singular".to_string()))?;

    let mut table = mdp.zero_q();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            table[s][a] = solution[idx(s, a)];
        }
    }

    let backed = bellman_backup(&table, mdp, pi, q, alpha, beta)?;
    let residual = sup_distance(&table, &backed);
    if residual > 1e-10 {
        return Err(DacError::numeric(format!(
            "diverse Q solve residual {residual:e} exceeds 1e-10"
        )));
    }
    Ok(table)
}

/// Sup-norm distance between two Q tables of identical shape.
pub fn sup_distance(a: &QTable, b: &QTable) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Serializes an MDP in the plain-text table format:
///
/// ```text
/// <n_states> <n_actions> <gamma>
/// I <s> <p>
/// T <s> <a> <s'> <p>      (zero-probability entries omitted)
/// R <s> <a> <r>           (zero rewards omitted)
/// ```
pub fn write_mdp_string(mdp: &FiniteMdp) -> String {
    let mut out = String::new();
    writeln!(out, "{} {} {}", mdp.n_states, mdp.n_actions, mdp.gamma).unwrap();
    for (s, p) in mdp.initial_state_dist.iter().enumerate() {
        if *p != 0.0 {
            writeln!(out, "I {s} {p}").unwrap();
        }
    }
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            for s2 in 0..mdp.n_states {
                let p = mdp.transition[s][a][s2];
                if p != 0.0 {
                    writeln!(out, "T {s} {a} {s2} {p}").unwrap();
                }
            }
        }
    }
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let r = mdp.reward[s][a];
            if r != 0.0 {
                writeln!(out, "R {s} {a} {r}").unwrap();
            }
        }
    }
    out
}

pub fn parse_mdp_string(text: &str) -> Result<FiniteMdp> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| DacError::Parse("empty MDP file".to_string()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 {
        return Err(DacError::Parse(format!(
            "header must be `S A gamma`, got `{header}`"
        )));
    }
    let n_states: usize = head[0]
        .parse()
        .map_err(|e| DacError::Parse(format!("bad state count: {e}")))?;
    let n_actions: usize = head[1]
        .parse()
        .map_err(|e| DacError::Parse(format!("bad action count: {e}")))?;
    let gamma: f64 = head[2]
        .parse()
        .map_err(|e| DacError::Parse(format!("bad gamma: {e}")))?;

    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut reward = vec![vec![0.0; n_actions]; n_states];
    let mut initial = vec![0.0; n_states];
    let mut saw_initial = false;

    let parse_idx = |tok: &str, bound: usize, what: &str| -> Result<usize> {
        let v: usize = tok
            .parse()
            .map_err(|e| DacError::Parse(format!("bad {what} `{tok}`: {e}")))?;
        if v >= bound {
            return Err(DacError::Parse(format!("{what} {v} out of range (< {bound})")));
        }
        Ok(v)
    };

    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first() {
            Some(&"I") if toks.len() == 3 => {
                let s = parse_idx(toks[1], n_states, "state")?;
                initial[s] = toks[2]
                    .parse()
                    .map_err(|e| DacError::Parse(format!("bad probability: {e}")))?;
                saw_initial = true;
            }
            Some(&"T") if toks.len() == 5 => {
                let s = parse_idx(toks[1], n_states, "state")?;
                let a = parse_idx(toks[2], n_actions, "action")?;
                let s2 = parse_idx(toks[3], n_states, "next state")?;
                transition[s][a][s2] = toks[4]
                    .parse()
                    .map_err(|e| DacError::Parse(format!("bad probability: {e}")))?;
            }
            Some(&"R") if toks.len() == 4 => {
                let s = parse_idx(toks[1], n_states, "state")?;
                let a = parse_idx(toks[2], n_actions, "action")?;
                reward[s][a] = toks[3]
                    .parse()
                    .map_err(|e| DacError::Parse(format!("bad reward: {e}")))?;
            }
            _ => {
                return Err(DacError::Parse(format!("unrecognized record `{line}`")));
            }
        }
    }
    if !saw_initial {
        initial = vec![1.0 / n_states as f64; n_states];
    }
    FiniteMdp::new(transition, reward, gamma, initial)
}

pub fn write_mdp_file(mdp: &FiniteMdp, path: &Path) -> Result<()> {
    std::fs::write(path, write_mdp_string(mdp))?;
    Ok(())
}

pub fn read_mdp_file(path: &Path) -> Result<FiniteMdp> {
    let text = std::fs::read_to_string(path)?;
    parse_mdp_string(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn weight(a: f64) -> MixtureWeight {
        MixtureWeight::new(a).unwrap()
    }

    #[test]
    fn gamma_zero_evaluates_to_scaled_reward() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mdp = FiniteMdp::random(4, 3, 0.0, &mut rng);
        let pi = TabularPolicy::random(4, 3, &mut rng);
        let q = TabularActionDistribution::uniform(4, 3);
        let beta = 0.7;
        let table = evaluate_diverse_q(&mdp, &pi, &q, weight(0.4), beta).unwrap();
        for s in 0..4 {
            for a in 0..3 {
                assert!((table[s][a] - mdp.reward[s][a] / beta).abs() < 1e-12);
            }
        }
        // The backup ignores its input table entirely at gamma = 0.
        let arbitrary = vec![vec![42.0; 3]; 4];
        let backed = bellman_backup(&arbitrary, &mdp, &pi, &q, weight(0.4), beta).unwrap();
        assert!(sup_distance(&backed, &table) < 1e-12);
    }

    #[test]
    fn alpha_one_matches_soft_evaluation() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mdp = FiniteMdp::random(5, 3, 0.9, &mut rng);
        let pi = TabularPolicy::random(5, 3, &mut rng);
        let q = TabularActionDistribution::uniform(5, 3);
        let ours = evaluate_diverse_q(&mdp, &pi, &q, weight(1.0), 0.5).unwrap();
        let soft = oracles::soft_q_evaluation(&mdp, &pi, 0.5);
        assert!(sup_distance(&ours, &soft) <= 1e-10);
    }

    #[test]
    fn alpha_zero_matches_plain_evaluation() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mdp = FiniteMdp::random(5, 3, 0.9, &mut rng);
        let pi = TabularPolicy::random(5, 3, &mut rng);
        let q = TabularActionDistribution::uniform(5, 3);
        let ours = evaluate_diverse_q(&mdp, &pi, &q, weight(0.0), 0.5).unwrap();
        let plain = oracles::plain_q_evaluation(&mdp, &pi, 0.5);
        assert!(sup_distance(&ours, &plain) <= 1e-10);
    }

    #[test]
    fn linear_solve_matches_repeated_backups() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mdp = FiniteMdp::random(5, 3, 0.9, &mut rng);
        let pi = TabularPolicy::random(5, 3, &mut rng);
        let q = TabularActionDistribution {
            probs: TabularPolicy::random(5, 3, &mut rng).probs,
        };
        let alpha = weight(0.5);
        let solved = evaluate_diverse_q(&mdp, &pi, &q, alpha, 1.0).unwrap();
        let mut iterated = mdp.zero_q();
        for _ in 0..500 {
            iterated = bellman_backup(&iterated, &mdp, &pi, &q, alpha, 1.0).unwrap();
        }
        assert!(sup_distance(&solved, &iterated) <= 1e-8);
    }

    #[test]
    fn backup_fixes_the_evaluated_table() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mdp = FiniteMdp::random(6, 2, 0.95, &mut rng);
        let pi = TabularPolicy::random(6, 2, &mut rng);
        let q = TabularActionDistribution {
            probs: TabularPolicy::random(6, 2, &mut rng).probs,
        };
        let alpha = weight(0.3);
        let table = evaluate_diverse_q(&mdp, &pi, &q, alpha, 2.0).unwrap();
        let backed = bellman_backup(&table, &mdp, &pi, &q, alpha, 2.0).unwrap();
        assert!(sup_distance(&table, &backed) <= 1e-10);
    }

    #[test]
    fn backup_contracts_random_table_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mdp = FiniteMdp::random(5, 3, 0.85, &mut rng);
        let pi = TabularPolicy::random(5, 3, &mut rng);
        let q = TabularActionDistribution {
            probs: TabularPolicy::random(5, 3, &mut rng).probs,
        };
        let alpha = weight(0.6);
        for _ in 0..100 {
            let q1: QTable = (0..5)
                .map(|_| (0..3).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect())
                .collect();
            let q2: QTable = (0..5)
                .map(|_| (0..3).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect())
                .collect();
            let t1 = bellman_backup(&q1, &mdp, &pi, &q, alpha, 1.0).unwrap();
            let t2 = bellman_backup(&q2, &mdp, &pi, &q, alpha, 1.0).unwrap();
            let before = sup_distance(&q1, &q2);
            let after = sup_distance(&t1, &t2);
            assert!(after <= mdp.gamma * before + 1e-12);
        }
    }

    #[test]
    fn state_value_cross_checks_against_direct_entropy() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let pi = TabularPolicy::random(3, 4, &mut rng);
            let q = TabularActionDistribution {
                probs: TabularPolicy::random(3, 4, &mut rng).probs,
            };
            let alpha = weight(rng.random::<f64>() * 0.9 + 0.05);
            let table: QTable = (0..3)
                .map(|_| (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            for s in 0..3 {
                let via_ratio = diverse_state_value(&table, &pi, &q, alpha, s);
                let expected_q: f64 = pi.probs[s]
                    .iter()
                    .zip(&table[s])
                    .map(|(&p, &qv)| p * qv)
                    .sum();
                let pair = DiscreteDistPair {
                    pi_row: pi.probs[s].clone(),
                    q_row: q.probs[s].clone(),
                };
                let direct = expected_q + mixture_entropy(&pair, alpha);
                assert!((via_ratio - direct).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn state_value_alpha_one_and_symmetric_cases() {
        let table: QTable = vec![vec![1.0, -1.0]];
        let pi = TabularPolicy::new(vec![vec![0.7, 0.3]]).unwrap();
        let q_same = TabularActionDistribution::new(vec![vec![0.7, 0.3]]).unwrap();
        let expected_q = 0.7 - 0.3;
        let h_pi = entropy(&pi.probs[0]);
        let v1 = diverse_state_value(&table, &pi, &q_same, weight(1.0), 0);
        assert!((v1 - (expected_q + h_pi)).abs() < 1e-14);
        let v_half = diverse_state_value(&table, &pi, &q_same, weight(0.5), 0);
        assert!((v_half - (expected_q + h_pi)).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let transition = vec![vec![vec![0.5, 0.4]; 2]; 2];
        let reward = vec![vec![0.0; 2]; 2];
        let err = FiniteMdp::new(transition, reward, 0.9, vec![0.5, 0.5]);
        assert!(matches!(err, Err(DacError::Validation(_))));
    }

    #[test]
    fn text_format_round_trips_bit_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mdp = FiniteMdp::random(4, 2, 0.97, &mut rng);
        let text = write_mdp_string(&mdp);
        let parsed = parse_mdp_string(&text).unwrap();
        assert_eq!(parsed, mdp);
        assert_eq!(write_mdp_string(&parsed), text);
    }

    #[test]
    fn parser_rejects_out_of_range_indices() {
        let text = "2 2 0.9\nT 0 0 5 1.0\n";
        assert!(matches!(parse_mdp_string(text), Err(DacError::Parse(_))));
    }
}
