//! Named verification suites.
//!
//! Each suite exercises one contract of the crate at a pinned tolerance and
//! reports a pass/fail result with timing. The CLI `verify` command runs
//! them and exits nonzero on any failure; the acceptance test target runs
//! the same functions and asserts. Two "mutation" suites intentionally
//! break a piece of the implementation (a sign flip in the ratio-objective
//! gradient, removal of the value-target clip) and pass only if the
//! corresponding contract suite catches the break.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::agent::{
    policy_objective_grad, q_loss_grad, ratio_objective_grad, records_to_csv,
    run_training, sample_batch, train_step, v_loss_grad, v_target, AlphaMode, DacAgent, DacHyper,
    SampledBatch,
};
use crate::dpi::{
    run_dpi, softmax, softmax_frozen_ratio_objective,
    softmax_frozen_ratio_objective_grad, softmax_mixture_objective,
    softmax_mixture_objective_grad, toy_example, DpiConfig, ImprovementMode,
};
use crate::env::{ChainEnv, ContinuousEnv, DelayedRewardWrapper, OneStepEmbedEnv};
use crate::experiments::{maze_directional_comparison, maze_hyper_small};
use crate::finite_mdp::{
    bellman_backup, diverse_state_value, evaluate_diverse_q, sup_distance, FiniteMdp, QTable,
    TabularActionDistribution, TabularPolicy,
};
use crate::nn::{sigmoid, Adam, Mlp, MlpGrads, OutputActivation};
use crate::oracles;
use crate::replay::{ReplayBuffer, Transition};
use crate::sample_entropy::{
    entropy, entropy_via_ratio, js_skew_divergence, lemma3_identity_check, mixture_entropy,
    ratio_closed_form, DiscreteDistPair, MixtureWeight,
};

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub tolerance: String,
    pub detail: String,
    pub millis: u128,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} tol={:<14} {:>7} ms  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.tolerance,
            self.millis,
            self.detail
        )
    }
}

fn timed(
    name: &str,
    tolerance: &str,
    body: impl FnOnce() -> (bool, String),
) -> SuiteResult {
    let start = Instant::now();
    let (passed, detail) = body();
    SuiteResult {
        name: name.to_string(),
        passed,
        tolerance: tolerance.to_string(),
        detail,
        millis: start.elapsed().as_millis(),
    }
}

fn random_row(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn random_triple(rng: &mut ChaCha12Rng) -> (DiscreteDistPair, MixtureWeight) {
    let n = rng.random_range(2..=16);
    let pair = DiscreteDistPair {
        pi_row: random_row(rng, n),
        q_row: random_row(rng, n),
    };
    let alpha = MixtureWeight::new(rng.random::<f64>() * 0.98 + 0.01).unwrap();
    (pair, alpha)
}

/// Entropy decomposition: `H(q_mix) = D_JS^α + α·H(π) + (1−α)·H(q)` on 1000
/// random triples, max residual at most 1e-12.
pub fn suite_entropy_decomposition() -> SuiteResult {
    timed("entropy-decomposition", "1e-12", || {
        let mut rng = ChaCha12Rng::seed_from_u64(10_001);
        let mut worst = 0.0_f64;
        for _ in 0..1000 {
            let (pair, alpha) = random_triple(&mut rng);
            let a = alpha.get();
            let lhs = mixture_entropy(&pair, alpha);
            let rhs = js_skew_divergence(&pair, alpha)
                + a * entropy(&pair.pi_row)
                + (1.0 - a) * entropy(&pair.q_row);
            worst = worst.max((lhs - rhs).abs());
            if js_skew_divergence(&pair, alpha) < 0.0 {
                return (false, "negative divergence".to_string());
            }
        }
        (worst <= 1e-12, format!("max residual {worst:.3e} over 1000 triples"))
    })
}

/// Ratio-form entropy identity and the log-ratio identity, both at 1e-12
/// on 1000 random triples.
pub fn suite_ratio_identities() -> SuiteResult {
    timed("ratio-identities", "1e-12", || {
        let mut rng = ChaCha12Rng::seed_from_u64(10_002);
        let mut worst_entropy = 0.0_f64;
        let mut worst_lemma = 0.0_f64;
        for _ in 0..1000 {
            let (pair, alpha) = random_triple(&mut rng);
            let ratio = ratio_closed_form(&pair, alpha);
            let via = entropy_via_ratio(&pair, alpha, &ratio).unwrap();
            let direct = mixture_entropy(&pair, alpha);
            worst_entropy = worst_entropy.max((via - direct).abs());
            worst_lemma = worst_lemma.max(lemma3_identity_check(&pair, alpha).unwrap());
        }
        (
            worst_entropy <= 1e-12 && worst_lemma <= 1e-12,
            format!("entropy residual {worst_entropy:.3e}, log identity {worst_lemma:.3e}"),
        )
    })
}

/// Table-parameterized ratio estimator trained by exact-expectation
/// gradient ascent reaches the closed form `α·π/(α·π + (1−α)·q)` within
/// 1e-3 in at most 10k steps. `flip_sign` runs the mutated (descending)
/// gradient for the mutation smoke test.
pub fn suite_ratio_learning(flip_sign: bool) -> SuiteResult {
    let name = if flip_sign {
        "ratio-learning(sign-flipped)"
    } else {
        "ratio-learning"
    };
    timed(name, "1e-3 in 10k steps", || {
        let mut rng = ChaCha12Rng::seed_from_u64(10_003);
        let mut worst = 0.0_f64;
        for _ in 0..5 {
            let n = rng.random_range(2..=6);
            let pi = random_row(&mut rng, n);
            let q = random_row(&mut rng, n);
            let alpha = rng.random::<f64>() * 0.8 + 0.1;
            // Logit-parameterized table, R_a = sigmoid(w_a).
            let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let lr = 0.5;
            for _ in 0..10_000 {
                for a in 0..n {
                    let r = sigmoid(w[a]);
                    // d/dw of α·π·ln R + (1−α)·q·ln(1−R).
                    let mut g = alpha * pi[a] * (1.0 - r) - (1.0 - alpha) * q[a] * r;
                    if flip_sign {
                        g = -g;
                    }
                    w[a] += lr * g;
                }
            }
            for a in 0..n {
                let target = alpha * pi[a] / (alpha * pi[a] + (1.0 - alpha) * q[a]);
                worst = worst.max((sigmoid(w[a]) - target).abs());
            }
        }
        (worst <= 1e-3, format!("max distance to closed form {worst:.3e}"))
    })
}

/// Flipping the sign of the ratio-objective ascent must break
/// [`suite_ratio_learning`].
pub fn suite_mutation_ratio_sign() -> SuiteResult {
    timed("mutation-ratio-sign", "expects failure", || {
        let inner = suite_ratio_learning(true);
        (!inner.passed, format!("mutated run reported: {}", inner.detail))
    })
}

/// Diverse policy iteration on 20 random MDPs: monotone Q tables within
/// 1e-8 per iteration, the converged per-state objective beats 10,000
/// exactly evaluated random policies, and 100 random Bellman-backup pairs
/// contract by at least the discount factor.
pub fn suite_tabular_dpi() -> SuiteResult {
    timed("tabular-dpi", "1e-8 / gamma", || {
        let mut rng = ChaCha12Rng::seed_from_u64(10_004);
        let alpha = MixtureWeight::new(0.5).unwrap();
        let beta = 1.0;

        for trial in 0..20 {
            let n_s = rng.random_range(2..=10);
            let n_a = rng.random_range(2..=5);
            let gamma = 0.8 + 0.15 * rng.random::<f64>();
            let mdp = FiniteMdp::random(n_s, n_a, gamma, &mut rng);
            let q_dist = TabularActionDistribution {
                probs: TabularPolicy::random(n_s, n_a, &mut rng).probs,
            };
            let mode = if trial % 2 == 0 {
                ImprovementMode::ExactSimplex
            } else {
                ImprovementMode::ClosedForm
            };
            // The frozen-ratio map converges linearly and can need a few
            // thousand sweeps to push the policy change below 1e-9.
            let cfg = DpiConfig::new(alpha, beta, mode, 1e-9, 5000).unwrap();
            let pi0 = TabularPolicy::random(n_s, n_a, &mut rng);
            let trace = match run_dpi(&mdp, &q_dist, &cfg, &pi0) {
                Ok(t) => t,
                Err(e) => return (false, format!("trial {trial}: {e}")),
            };
            if !trace.converged {
                return (false, format!("trial {trial}: no convergence"));
            }
            for w in trace.iterations.windows(2) {
                for s in 0..n_s {
                    for a in 0..n_a {
                        if w[1].q_table[s][a] < w[0].q_table[s][a] - 1e-8 {
                            return (
                                false,
                                format!("trial {trial}: Q({s},{a}) regressed"),
                            );
                        }
                    }
                }
            }

            // Random-policy oracle: 10k exactly evaluated policies.
            let j_star = trace.final_j().to_vec();
            for k in 0..10_000 {
                let pi = TabularPolicy::random(n_s, n_a, &mut rng);
                let q_table = match evaluate_diverse_q(&mdp, &pi, &q_dist, alpha, beta) {
                    Ok(t) => t,
                    Err(e) => return (false, format!("oracle eval failed: {e}")),
                };
                for s in 0..n_s {
                    let j = beta * diverse_state_value(&q_table, &pi, &q_dist, alpha, s);
                    if j > j_star[s] + 1e-8 {
                        return (
                            false,
                            format!(
                                "trial {trial}: random policy {k} beats J*({s}): {j} > {}",
                                j_star[s]
                            ),
                        );
                    }
                }
            }

            // Contraction on 5 random table pairs per MDP (100 in total).
            for _ in 0..5 {
                let rand_table = |rng: &mut ChaCha12Rng| -> QTable {
                    (0..n_s)
                        .map(|_| (0..n_a).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect())
                        .collect()
                };
                let q1 = rand_table(&mut rng);
                let q2 = rand_table(&mut rng);
                let pi = TabularPolicy::random(n_s, n_a, &mut rng);
                let t1 = bellman_backup(&q1, &mdp, &pi, &q_dist, alpha, beta).unwrap();
                let t2 = bellman_backup(&q2, &mdp, &pi, &q_dist, alpha, beta).unwrap();
                if sup_distance(&t1, &t2) > gamma * sup_distance(&q1, &q2) + 1e-12 {
                    return (false, format!("trial {trial}: backup failed to contract"));
                }
            }
        }
        (true, "20 MDPs, 10k random policies each, 100 contraction pairs".to_string())
    })
}

/// Frozen-ratio and varying-ratio policy objectives share a gradient at the
/// current policy (cosine ≥ 1 − 1e-9) and both match finite differences at
/// relative error 1e-4.
pub fn suite_theorem2() -> SuiteResult {
    timed("gradient-equivalence", "1-1e-9 / 1e-4", || {
        let mut rng = ChaCha12Rng::seed_from_u64(10_005);
        let mut worst_cos = 1.0_f64;
        let mut worst_fd = 0.0_f64;
        for _ in 0..50 {
            let n = rng.random_range(2..=6);
            let alpha = 0.1 + 0.8 * rng.random::<f64>();
            let beta = 0.5 + rng.random::<f64>();
            let logits: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let q_row: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let buf_row = random_row(&mut rng, n);
            let pi_old = softmax(&logits);
            let ratio_old = ratio_closed_form(
                &DiscreteDistPair {
                    pi_row: pi_old,
                    q_row: buf_row.clone(),
                },
                MixtureWeight::new(alpha).unwrap(),
            );
            let g_mix = softmax_mixture_objective_grad(&logits, &q_row, &buf_row, alpha, beta);
            let g_frozen =
                softmax_frozen_ratio_objective_grad(&logits, &q_row, &ratio_old, alpha, beta);
            worst_cos = worst_cos.min(oracles::cosine(&g_mix, &g_frozen));
            let fd_mix = oracles::fd_gradient(
                &mut |z: &[f64]| softmax_mixture_objective(z, &q_row, &buf_row, alpha, beta),
                &logits,
                1e-6,
            );
            let fd_frozen = oracles::fd_gradient(
                &mut |z: &[f64]| softmax_frozen_ratio_objective(z, &q_row, &ratio_old, alpha, beta),
                &logits,
                1e-6,
            );
            for k in 0..n {
                worst_fd = worst_fd.max(oracles::rel_err(g_mix[k], fd_mix[k], 1e-4));
                worst_fd = worst_fd.max(oracles::rel_err(g_frozen[k], fd_frozen[k], 1e-4));
            }
        }
        (
            worst_cos >= 1.0 - 1e-9 && worst_fd <= 1e-4,
            format!("worst cosine {worst_cos:.12}, worst fd error {worst_fd:.3e}"),
        )
    })
}

/// The one-step exploration example: the optimizer puts at least 0.999 on
/// the unseen action, the mixture becomes uniform, and expected draws are
/// exactly 1 versus `n` for the uniform maximizer.
pub fn suite_toy_example() -> SuiteResult {
    timed("toy-example", "0.999 / 1e-6", || {
        let result = match toy_example(10) {
            Ok(r) => r,
            Err(e) => return (false, e.to_string()),
        };
        let mass = result.optimal_row[9];
        let mix_dev = result
            .mixture_row
            .iter()
            .map(|m| (m - 0.1).abs())
            .fold(0.0, f64::max);
        let ok = mass >= 0.999
            && mix_dev <= 1e-6
            && result.dac_expected_steps == 1.0
            && result.uniform_expected_steps == 10.0;
        (
            ok,
            format!("unseen-action mass {mass:.6}, mixture deviation {mix_dev:.2e}, steps 1 vs 10"),
        )
    })
}

/// With the ratio pinned to one at α = 1, a train step matches the
/// standalone SAC step parameter for parameter at 1e-10.
pub fn suite_sac_reduction() -> SuiteResult {
    timed("sac-reduction", "1e-10", || {
        let hyper = DacHyper {
            alpha_mode: AlphaMode::Fixed(1.0),
            pin_ratio_unit: true,
            hidden_size: 16,
            minibatch: 32,
            warmup: 32,
            ..DacHyper::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(10_006);
        let mut agent = DacAgent::new(3, 2, hyper.clone(), &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(1024).unwrap();
        for i in 0..128 {
            buffer
                .push(Transition {
                    state: (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                    action: (0..2).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * 0.9).collect(),
                    reward: rng.random::<f64>(),
                    next_state: (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                    done: i % 11 == 0,
                })
                .unwrap();
        }
        let mut sac_nets = agent.nets.clone();
        let mut p_opt = Adam::new(hyper.learning_rate, sac_nets.policy.net.n_params());
        let mut q1_opt = Adam::new(hyper.learning_rate, sac_nets.critics[0].n_params());
        let mut q2_opt = Adam::new(hyper.learning_rate, sac_nets.critics[1].n_params());
        let mut v_opt = Adam::new(hyper.learning_rate, sac_nets.value.n_params());

        let mut max_diff = 0.0_f64;
        for step in 0..3 {
            let mut rng_a = ChaCha12Rng::seed_from_u64(777 + step);
            let mut rng_b = ChaCha12Rng::seed_from_u64(777 + step);
            let batch_a = sample_batch(&buffer, 32, None, 2, &mut rng_a).unwrap();
            let batch_b = sample_batch(&buffer, 32, None, 2, &mut rng_b).unwrap();
            crate::agent::train_step_on_batch(&mut agent, &batch_a).unwrap();
            oracles::sac_reference_step(
                &mut sac_nets,
                &batch_b,
                hyper.beta,
                hyper.gamma,
                hyper.ema_tau,
                &mut p_opt,
                &mut q1_opt,
                &mut q2_opt,
                &mut v_opt,
            )
            .unwrap();
            let pairs = [
                (&agent.nets.policy.net, &sac_nets.policy.net),
                (&agent.nets.critics[0], &sac_nets.critics[0]),
                (&agent.nets.critics[1], &sac_nets.critics[1]),
                (&agent.nets.value, &sac_nets.value),
                (&agent.nets.target_value.shadow, &sac_nets.target_value.shadow),
            ];
            for (ours, reference) in pairs {
                for (a, b) in ours.flatten_params().iter().zip(reference.flatten_params()) {
                    max_diff = max_diff.max((a - b).abs());
                }
            }
        }
        (
            max_diff <= 1e-10,
            format!("max parameter difference over 3 shared-seed steps: {max_diff:.3e}"),
        )
    })
}

fn flatten(grads: &MlpGrads) -> Vec<f64> {
    let mut v = Vec::new();
    for w in &grads.weights {
        v.extend_from_slice(&w.data);
    }
    for b in &grads.biases {
        v.extend_from_slice(b);
    }
    v
}

/// All six agent gradient operations plus the raw network gradients match
/// central finite differences under common random numbers, over more than
/// 100 random configurations.
pub fn suite_gradient_integrity() -> SuiteResult {
    timed("gradient-integrity", "1e-3 (1e-4 exact)", || {
        let mut rng = ChaCha12Rng::seed_from_u64(10_007);
        let mut configs = 0usize;
        let mut worst = 0.0_f64;

        // Raw network battery: every parameter of 40 random networks
        // against finite differences of a quadratic readout.
        for i in 0..40 {
            configs += 1;
            let sizes: Vec<usize> = match i % 3 {
                0 => vec![2, 6, 2],
                1 => vec![3, 5, 4, 1],
                _ => vec![1, 7, 3],
            };
            let act = if i % 2 == 0 {
                OutputActivation::Linear
            } else {
                OutputActivation::Sigmoid
            };
            let mut net = Mlp::new(&sizes, act, 1.0, &mut rng);
            let input: Vec<f64> =
                (0..sizes[0]).map(|_| crate::nn::standard_normal(&mut rng)).collect();
            let value = |n: &Mlp| -> f64 {
                n.forward(&input).unwrap().iter().map(|y| 0.5 * y * y).sum()
            };
            let trace = net.forward_traced(&input).unwrap();
            let out = net.output_of(&trace).to_vec();
            let mut grads = MlpGrads::zeros_like(&net);
            net.backward(&trace, &out, &mut grads);
            let analytic = flatten(&grads);
            let params = net.flatten_params();
            for k in 0..params.len() {
                let mut p = params.clone();
                p[k] += 1e-6;
                net.set_flat_params(&p).unwrap();
                let plus = value(&net);
                p[k] -= 2e-6;
                net.set_flat_params(&p).unwrap();
                let minus = value(&net);
                net.set_flat_params(&params).unwrap();
                let fd = (plus - minus) / 2e-6;
                worst = worst.max(oracles::rel_err(analytic[k], fd, 1e-4));
            }
            if worst > 1e-4 {
                return (false, format!("network config {i}: fd error {worst:.3e}"));
            }
        }

        // Agent losses: 14 random agent configurations, every parameter of
        // the differentiated network per loss.
        let mut worst_agent = 0.0_f64;
        for i in 0..14 {
            configs += 1;
            let adaptive = i % 3 == 2;
            let hyper = DacHyper {
                alpha_mode: if adaptive {
                    AlphaMode::Adaptive
                } else {
                    AlphaMode::Fixed([0.3, 0.5, 0.8, 1.0][i % 4])
                },
                hidden_size: 6,
                minibatch: 6,
                squash: i % 2 == 0,
                gamma: [0.9, 0.99, 0.0][i % 3],
                ..DacHyper::default()
            };
            let state_dim = 1 + i % 2;
            let action_dim = 1 + i % 2;
            let agent = DacAgent::new(state_dim, action_dim, hyper.clone(), &mut rng).unwrap();
            let mut buffer = ReplayBuffer::new(256).unwrap();
            for j in 0..32 {
                buffer
                    .push(Transition {
                        state: (0..state_dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                        action: (0..action_dim)
                            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * 0.9)
                            .collect(),
                        reward: rng.random::<f64>() - 0.5,
                        next_state: (0..state_dim)
                            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                            .collect(),
                        done: j % 5 == 0,
                    })
                    .unwrap();
            }
            let batch = sample_batch(&buffer, 6, None, action_dim, &mut rng).unwrap();

            worst_agent = worst_agent.max(fd_policy(&agent, &batch));
            worst_agent = worst_agent.max(fd_ratio(&agent, &batch));
            worst_agent = worst_agent.max(fd_q(&agent, &batch, 0));
            worst_agent = worst_agent.max(fd_q(&agent, &batch, 1));
            worst_agent = worst_agent.max(fd_v(&agent, &batch));
            if worst_agent > 1e-3 {
                return (false, format!("agent config {i}: fd error {worst_agent:.3e}"));
            }
        }

        // Sixth operation: the mixture-weight gradient goes through the
        // exact-expectation route (its estimator matches the loss only in
        // expectation), checked at the tighter 1e-4.
        let worst_alpha = alpha_discrete_fd_worst(50, 10_016);
        if worst_alpha > 1e-4 {
            return (false, format!("alpha exact-route fd error {worst_alpha:.3e}"));
        }
        configs += 50;
        (
            true,
            format!(
                "{configs} configurations; net fd {worst:.3e}, loss fd {worst_agent:.3e}, alpha fd {worst_alpha:.3e}"
            ),
        )
    })
}

/// Worst finite-difference error of the ξ-gradient on single-state discrete
/// problems where the loss `H(q_mix) − α·c + reg` is computed analytically
/// and the gradient uses the exact closed-form ratio.
fn alpha_discrete_fd_worst(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (lo, hi) = (0.5, 0.99);
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let n = rng.random_range(2..=6);
        let pi = random_row(&mut rng, n);
        let q = random_row(&mut rng, n);
        let c = -2.0 * (rng.random::<f64>() * 3.0);
        let reg = 1e-3;
        let xi = rng.random::<f64>() * 4.0 - 2.0;

        let loss = |xi: f64| -> f64 {
            let a = lo + (hi - lo) * sigmoid(xi);
            let mix: Vec<f64> = pi.iter().zip(&q).map(|(&p, &qq)| a * p + (1.0 - a) * qq).collect();
            entropy(&mix) - a * c + 0.5 * reg * xi * xi
        };
        let a = lo + (hi - lo) * sigmoid(xi);
        let pair = DiscreteDistPair {
            pi_row: pi.clone(),
            q_row: q.clone(),
        };
        let ratio = ratio_closed_form(&pair, MixtureWeight::new(a).unwrap());
        let mut pi_part = 0.0;
        let mut q_part = 0.0;
        for i in 0..n {
            let inner = ratio[i].ln() - (a * pi[i]).ln();
            pi_part += pi[i] * (inner - c);
            q_part += q[i] * inner;
        }
        let dalpha = (hi - lo) * sigmoid(xi) * (1.0 - sigmoid(xi));
        let analytic = dalpha * (pi_part - q_part) + reg * xi;
        let fd = (loss(xi + 1e-6) - loss(xi - 1e-6)) / 2e-6;
        worst = worst.max(oracles::rel_err(analytic, fd, 1e-6));
    }
    worst
}

fn fd_over_params(
    params: &[f64],
    value_at: &mut dyn FnMut(&[f64]) -> f64,
    analytic: &[f64],
) -> f64 {
    let mut worst = 0.0_f64;
    let h = 1e-6;
    for k in 0..params.len() {
        let mut p = params.to_vec();
        p[k] += h;
        let plus = value_at(&p);
        p[k] -= 2.0 * h;
        let minus = value_at(&p);
        let fd = (plus - minus) / (2.0 * h);
        worst = worst.max(oracles::rel_err(analytic[k], fd, 1e-4));
    }
    worst
}

fn fd_policy(agent: &DacAgent, batch: &SampledBatch) -> f64 {
    let hyper = &agent.hyper;
    let (grads, _) = policy_objective_grad(&agent.nets, hyper, batch).unwrap();
    let analytic = flatten(&grads);
    let params = agent.nets.policy.net.flatten_params();
    fd_over_params(
        &params,
        &mut |p| {
            let mut nets = agent.nets.clone();
            nets.policy.net.set_flat_params(p).unwrap();
            policy_objective_grad(&nets, hyper, batch).unwrap().1
        },
        &analytic,
    )
}

fn fd_ratio(agent: &DacAgent, batch: &SampledBatch) -> f64 {
    let hyper = &agent.hyper;
    let (grads, _) = ratio_objective_grad(&agent.nets, hyper, batch).unwrap();
    let analytic = flatten(&grads);
    let params = agent.nets.ratio.flatten_params();
    fd_over_params(
        &params,
        &mut |p| {
            let mut nets = agent.nets.clone();
            nets.ratio.set_flat_params(p).unwrap();
            ratio_objective_grad(&nets, hyper, batch).unwrap().1
        },
        &analytic,
    )
}

fn fd_q(agent: &DacAgent, batch: &SampledBatch, i: usize) -> f64 {
    let hyper = &agent.hyper;
    let (grads, _) = q_loss_grad(&agent.nets, hyper, batch, i).unwrap();
    let analytic = flatten(&grads);
    let params = agent.nets.critics[i].flatten_params();
    fd_over_params(
        &params,
        &mut |p| {
            let mut nets = agent.nets.clone();
            nets.critics[i].set_flat_params(p).unwrap();
            q_loss_grad(&nets, hyper, batch, i).unwrap().1
        },
        &analytic,
    )
}

fn fd_v(agent: &DacAgent, batch: &SampledBatch) -> f64 {
    let hyper = &agent.hyper;
    let (targets, _) = v_target(&agent.nets, hyper, batch).unwrap();
    let (grads, _) = v_loss_grad(&agent.nets, batch, &targets).unwrap();
    let analytic = flatten(&grads);
    let params = agent.nets.value.flatten_params();
    fd_over_params(
        &params,
        &mut |p| {
            let mut nets = agent.nets.clone();
            nets.value.set_flat_params(p).unwrap();
            v_loss_grad(&nets, batch, &targets).unwrap().1
        },
        &analytic,
    )
}

/// The mixture-weight gradient formula against finite differences of the
/// analytically computed loss on single-state discrete problems, and the
/// range constraint on emitted weights.
pub fn suite_alpha_adaptation() -> SuiteResult {
    timed("alpha-adaptation", "1e-4 / [0.5,0.99]", || {
        let worst = alpha_discrete_fd_worst(50, 10_008);

        // Range constraint on network outputs.
        let hyper = DacHyper {
            alpha_mode: AlphaMode::Adaptive,
            hidden_size: 8,
            ..DacHyper::default()
        };
        let mut agent_rng = ChaCha12Rng::seed_from_u64(10_009);
        let agent = DacAgent::new(2, 1, hyper.clone(), &mut agent_rng).unwrap();
        let mut in_range = true;
        for _ in 0..200 {
            let s = [
                agent_rng.random::<f64>() * 2.0 - 1.0,
                agent_rng.random::<f64>() * 2.0 - 1.0,
            ];
            let a = agent.nets.alpha_at(&s, &hyper).unwrap();
            in_range &= (0.5..=0.99).contains(&a);
        }
        (
            worst <= 1e-4 && in_range,
            format!("worst fd error {worst:.3e}; outputs in range: {in_range}"),
        )
    })
}

/// The clipped buffer-side value term stays inside `[−d, d]` both on a
/// crafted extreme batch and across a short training run. With
/// `disable_clip` the bound is lifted, which must make this suite fail.
pub fn suite_clip_contract(disable_clip: bool) -> SuiteResult {
    let name = if disable_clip {
        "clip-contract(unclipped)"
    } else {
        "clip-contract"
    };
    timed(name, "[-d, d]", || {
        let d_default = 1.0; // one action dimension
        let mut hyper = DacHyper {
            alpha_mode: AlphaMode::Fixed(0.5),
            hidden_size: 8,
            minibatch: 16,
            warmup: 16,
            ..DacHyper::default()
        };
        if disable_clip {
            hyper.clip_bound = Some(f64::INFINITY);
        }

        // Crafted batch: buffer actions at the box edge make the log-density
        // term enormous.
        let mut rng = ChaCha12Rng::seed_from_u64(10_010);
        let agent = DacAgent::new(1, 1, hyper.clone(), &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(64).unwrap();
        for _ in 0..16 {
            buffer
                .push(Transition {
                    state: vec![0.0],
                    action: vec![1.0 - 1e-12],
                    reward: 0.0,
                    next_state: vec![0.0],
                    done: false,
                })
                .unwrap();
        }
        let batch = sample_batch(&buffer, 16, None, 1, &mut rng).unwrap();
        let (_, info) = v_target(&agent.nets, &hyper, &batch).unwrap();
        let mut min_seen = info.d_term_min;
        let mut max_seen = info.d_term_max;

        // Short real training run.
        let mut rng = ChaCha12Rng::seed_from_u64(10_011);
        let mut agent = DacAgent::new(1, 1, hyper.clone(), &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(4096).unwrap();
        let mut env = OneStepEmbedEnv::new(8).unwrap();
        let mut obs = env.reset();
        for _ in 0..800 {
            let sample = agent.nets.policy.sample(&obs, &mut rng).unwrap();
            let out = env.step(&sample.action);
            buffer
                .push(Transition {
                    state: obs,
                    action: sample.action,
                    reward: out.reward,
                    next_state: out.obs.clone(),
                    done: out.done,
                })
                .unwrap();
            obs = if out.done { env.reset() } else { out.obs };
            if buffer.len() >= hyper.warmup {
                let metrics = train_step(&mut agent, &buffer, &mut rng).unwrap();
                min_seen = min_seen.min(metrics.d_term_min);
                max_seen = max_seen.max(metrics.d_term_max);
            }
        }
        let within = min_seen >= -d_default && max_seen <= d_default;
        (
            within,
            format!("clipped term range observed: [{min_seen:.4}, {max_seen:.4}]"),
        )
    })
}

/// Removing the ±d clip must break [`suite_clip_contract`].
pub fn suite_mutation_clip_removed() -> SuiteResult {
    timed("mutation-clip-removed", "expects failure", || {
        let inner = suite_clip_contract(true);
        (!inner.passed, format!("mutated run reported: {}", inner.detail))
    })
}

/// Rerunning seeded pipelines yields byte-identical CSV artifacts.
pub fn suite_determinism() -> SuiteResult {
    timed("determinism", "byte-identical", || {
        let train_csv = || -> String {
            let hyper = DacHyper {
                alpha_mode: AlphaMode::Adaptive,
                hidden_size: 8,
                minibatch: 8,
                warmup: 16,
                eval_interval: 64,
                ..DacHyper::default()
            };
            let mut rng = ChaCha12Rng::seed_from_u64(10_012);
            let mut agent = DacAgent::new(1, 1, hyper, &mut rng).unwrap();
            let mut buffer = ReplayBuffer::new(1024).unwrap();
            let mut env =
                DelayedRewardWrapper::new(ChainEnv::new(10.0, 40), 5);
            let records = run_training(&mut env, &mut agent, &mut buffer, 300, &mut rng).unwrap();
            records_to_csv(&records)
        };
        if train_csv() != train_csv() {
            return (false, "training metrics differ between reruns".to_string());
        }

        let dpi_csv = || -> String {
            let mut rng = ChaCha12Rng::seed_from_u64(10_013);
            let mdp = FiniteMdp::random(4, 3, 0.9, &mut rng);
            let q_dist = TabularActionDistribution::uniform(4, 3);
            let cfg = DpiConfig::new(
                MixtureWeight::new(0.5).unwrap(),
                1.0,
                ImprovementMode::ExactSimplex,
                1e-8,
                100,
            )
            .unwrap();
            run_dpi(&mdp, &q_dist, &cfg, &TabularPolicy::uniform(4, 3))
                .unwrap()
                .to_csv()
        };
        if dpi_csv() != dpi_csv() {
            return (false, "policy-iteration traces differ between reruns".to_string());
        }
        (true, "training metrics and iteration traces reproduce exactly".to_string())
    })
}

/// Q evaluation endpoints: α = 1 matches an independent soft evaluator,
/// α = 0 matches an independent plain evaluator, and the linear solve
/// agrees with 500 Bellman backups.
pub fn suite_evaluation_routes() -> SuiteResult {
    timed("evaluation-routes", "1e-10 / 1e-8", || {
        let mut rng = ChaCha12Rng::seed_from_u64(10_014);
        let mut worst_soft = 0.0_f64;
        let mut worst_plain = 0.0_f64;
        let mut worst_iter = 0.0_f64;
        for _ in 0..10 {
            let mdp = FiniteMdp::random(5, 3, 0.9, &mut rng);
            let pi = TabularPolicy::random(5, 3, &mut rng);
            let q_dist = TabularActionDistribution {
                probs: TabularPolicy::random(5, 3, &mut rng).probs,
            };
            let soft = evaluate_diverse_q(&mdp, &pi, &q_dist, MixtureWeight::new(1.0).unwrap(), 0.7)
                .unwrap();
            worst_soft =
                worst_soft.max(sup_distance(&soft, &oracles::soft_q_evaluation(&mdp, &pi, 0.7)));
            let plain =
                evaluate_diverse_q(&mdp, &pi, &q_dist, MixtureWeight::new(0.0).unwrap(), 0.7)
                    .unwrap();
            worst_plain =
                worst_plain.max(sup_distance(&plain, &oracles::plain_q_evaluation(&mdp, &pi, 0.7)));

            let alpha = MixtureWeight::new(0.5).unwrap();
            let solved = evaluate_diverse_q(&mdp, &pi, &q_dist, alpha, 1.0).unwrap();
            let mut iterated = mdp.zero_q();
            for _ in 0..500 {
                iterated = bellman_backup(&iterated, &mdp, &pi, &q_dist, alpha, 1.0).unwrap();
            }
            worst_iter = worst_iter.max(sup_distance(&solved, &iterated));
        }
        (
            worst_soft <= 1e-10 && worst_plain <= 1e-10 && worst_iter <= 1e-8,
            format!("soft {worst_soft:.2e}, plain {worst_plain:.2e}, iteration {worst_iter:.2e}"),
        )
    })
}

/// The value-target formula mirrored on a discrete single-state problem
/// with the exact ratio reduces to `E_π[Q] + H(q_mix)`.
pub fn suite_value_target_identity() -> SuiteResult {
    timed("value-target-identity", "1e-12", || {
        let mut rng = ChaCha12Rng::seed_from_u64(10_015);
        let mut worst = 0.0_f64;
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let pi = random_row(&mut rng, n);
            let q = random_row(&mut rng, n);
            let alpha = rng.random::<f64>() * 0.9 + 0.05;
            let q_values: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let pair = DiscreteDistPair {
                pi_row: pi.clone(),
                q_row: q.clone(),
            };
            let ratio = ratio_closed_form(&pair, MixtureWeight::new(alpha).unwrap());
            // Discrete mirror of the value target with an inactive clip.
            let mut v_hat = 0.0;
            for i in 0..n {
                let inner = ratio[i].ln() - (alpha * pi[i]).ln();
                v_hat += pi[i] * (q_values[i] + alpha * inner);
                v_hat += (1.0 - alpha) * q[i] * inner;
            }
            let expected: f64 = pi.iter().zip(&q_values).map(|(&p, &qv)| p * qv).sum::<f64>()
                + mixture_entropy(&pair, MixtureWeight::new(alpha).unwrap());
            worst = worst.max((v_hat - expected).abs());
        }
        (worst <= 1e-12, format!("max residual {worst:.3e}"))
    })
}

/// Directional exploration on the 4-room maze: paired seeds, sample-aware
/// agent versus the plain-entropy agent, one-sided sign test.
pub fn suite_maze_directional(n_seeds: usize, steps: u64, threads: usize) -> SuiteResult {
    timed("maze-directional", "sign test 0.05", || {
        let hyper = maze_hyper_small();
        let comparison = match maze_directional_comparison(n_seeds, steps, threads, &hyper) {
            Ok(c) => c,
            Err(e) => return (false, e.to_string()),
        };
        let per_seed: Vec<String> = comparison
            .per_seed
            .iter()
            .map(|(s, d, p)| format!("seed {s}: {d} vs {p}"))
            .collect();
        (
            comparison.passes(0.05),
            format!(
                "mean unique cells {:.1} vs {:.1}, wins {}/{}, p = {:.4} [{}]",
                comparison.mean_diverse,
                comparison.mean_plain,
                comparison.wins,
                n_seeds,
                comparison.p_value,
                per_seed.join("; ")
            ),
        )
    })
}

/// Everything except the maze comparison; the full acceptance gate runs
/// [`suite_maze_directional`] separately.
pub fn quick_suites() -> Vec<SuiteResult> {
    vec![
        suite_entropy_decomposition(),
        suite_ratio_identities(),
        suite_ratio_learning(false),
        suite_mutation_ratio_sign(),
        suite_evaluation_routes(),
        suite_value_target_identity(),
        suite_tabular_dpi(),
        suite_theorem2(),
        suite_toy_example(),
        suite_sac_reduction(),
        suite_gradient_integrity(),
        suite_alpha_adaptation(),
        suite_clip_contract(false),
        suite_mutation_clip_removed(),
        suite_determinism(),
    ]
}

pub fn all_passed(results: &[SuiteResult]) -> bool {
    results.iter().all(|r| r.passed)
}

// Re-exported for the CLI's verify output.
pub use crate::experiments::MazeComparison;
