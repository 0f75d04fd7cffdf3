//! The diversity actor-critic learner.
//!
//! Six parameter groups: a squashed-Gaussian policy, a sigmoid-output ratio
//! network estimating `R = α·π/(α·π + (1−α)·q)`, twin critics, a value
//! network with an EMA-tracked target copy, and (in adaptive mode) a
//! per-state mixture-weight network constrained to `[0.5, 0.99]`.
//!
//! Per gradient step, with a minibatch of transitions and one fresh
//! reparameterized action `ã` per state:
//!
//! ```text
//! J_π  = E[min_i Q_i(s,ã) + α·ln R(s,ã) − α·ln π(ã|s)]              (ascent)
//! J_R  = E[α·ln R(s,ã) + (1−α)·ln(1 − R(s,a_D))]                    (ascent)
//! L_Q  = E[½(Q_i(s,a_D) − r/β − γ·(1−done)·V̄(s'))²]                 (descent)
//! V̂    = E[min_i Q_i(s,ã) + α·ln R(s,ã) − α·ln(α·π(ã|s))]
//!        + (1−α)·clip(ln R(s,a_D) − ln(α·π(a_D|s)); −d, d)
//! L_V  = E[½(V(s) − V̂)²]                                            (descent)
//! ```
//!
//! Values entering a logarithm are clipped to `[ε_R, 1−ε_R]`. The α
//! endpoints are handled analytically: at α = 1 the ratio terms vanish and
//! the update is exactly SAC; at α = 0 the entropy terms drop entirely.

use std::fmt::Write as _;

use rand::Rng;

use crate::checkpoint::Container;
use crate::env::ContinuousEnv;
use crate::error::{DacError, Result};
use crate::nn::{
    Adam, EmaTracker, GaussianPolicyHead, Mlp, MlpGrads, MlpTrace, OutputActivation,
};
use crate::replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    Fixed(f64),
    Adaptive,
}

/// Hyperparameters. Defaults follow the standard off-policy setup this
/// learner inherits: learning rate 3e-4, batch 256, EMA coefficient 0.005,
/// horizon 1000, two hidden layers of 256, ratio clip 1e-4, α-network range
/// [0.5, 0.99] with control coefficient −2·dim(A) and L2 coefficient 1e-3.
#[derive(Debug, Clone)]
pub struct DacHyper {
    pub alpha_mode: AlphaMode,
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub minibatch: usize,
    pub ema_tau: f64,
    pub horizon: usize,
    /// ε_R: ratio values are clipped to `[ε_R, 1−ε_R]` before any log.
    pub ratio_clip: f64,
    /// Clip bound `d` for the buffer-side value term; `None` resolves to
    /// the action dimension.
    pub clip_bound: Option<f64>,
    /// Control coefficient `c`; `None` resolves to `−2·action_dim`.
    pub control_coeff: Option<f64>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_reg: f64,
    pub hidden_size: usize,
    pub buffer_capacity: usize,
    pub squash: bool,
    /// Restrict minibatch sampling to the newest N′ transitions.
    pub q_window: Option<usize>,
    /// Gradient steps start once the buffer holds this many transitions.
    pub warmup: usize,
    pub eval_interval: usize,
    /// Use the exact unit ratio (ln R ≡ 0) instead of the learned network.
    /// This is the closed form at α = 1 and turns the update into SAC.
    pub pin_ratio_unit: bool,
}

impl Default for DacHyper {
    fn default() -> Self {
        DacHyper {
            alpha_mode: AlphaMode::Fixed(0.5),
            beta: 0.2,
            gamma: 0.99,
            learning_rate: 3e-4,
            minibatch: 256,
            ema_tau: 0.005,
            horizon: 1000,
            ratio_clip: 1e-4,
            clip_bound: None,
            control_coeff: None,
            alpha_min: 0.5,
            alpha_max: 0.99,
            alpha_reg: 1e-3,
            hidden_size: 256,
            buffer_capacity: 1_000_000,
            squash: true,
            q_window: None,
            warmup: 256,
            eval_interval: 1000,
            pin_ratio_unit: false,
        }
    }
}

impl DacHyper {
    /// Maze pure-exploration configuration: γ = 0.999, no reward shaping.
    pub fn pure_exploration_maze() -> Self {
        DacHyper {
            gamma: 0.999,
            beta: 1.0,
            ..DacHyper::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(DacError::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(DacError::Config(format!("gamma must lie in [0,1), got {}", self.gamma)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DacError::Config("learning rate must be positive".to_string()));
        }
        if !(self.ratio_clip > 0.0 && self.ratio_clip < 0.5) {
            return Err(DacError::Config(format!(
                "ratio clip must lie in (0, 0.5), got {}",
                self.ratio_clip
            )));
        }
        if let AlphaMode::Fixed(a) = self.alpha_mode {
            if !(0.0..=1.0).contains(&a) {
                return Err(DacError::Config(format!("alpha must lie in [0,1], got {a}")));
            }
        }
        if self.minibatch == 0 || self.hidden_size == 0 || self.buffer_capacity == 0 {
            return Err(DacError::Config("sizes must be positive".to_string()));
        }
        Ok(())
    }

    pub fn clip_bound_for(&self, action_dim: usize) -> f64 {
        self.clip_bound.unwrap_or(action_dim as f64)
    }

    pub fn control_coeff_for(&self, action_dim: usize) -> f64 {
        self.control_coeff.unwrap_or(-2.0 * action_dim as f64)
    }
}

/// Parameter bundle: policy, ratio, twin critics, value, target value, and
/// the optional α network.
#[derive(Debug, Clone)]
pub struct DacNetworks {
    pub policy: GaussianPolicyHead,
    pub ratio: Mlp,
    pub critics: [Mlp; 2],
    pub value: Mlp,
    pub target_value: EmaTracker,
    pub alpha_net: Option<Mlp>,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl DacNetworks {
    pub fn new(state_dim: usize, action_dim: usize, hyper: &DacHyper, rng: &mut impl Rng) -> Result<Self> {
        hyper.validate()?;
        let h = hyper.hidden_size;
        let policy_net = Mlp::new(
            &[state_dim, h, h, 2 * action_dim],
            OutputActivation::Linear,
            1e-2,
            rng,
        );
        let policy = GaussianPolicyHead::new(policy_net, action_dim, hyper.squash);
        let sa = state_dim + action_dim;
        let ratio = Mlp::new(&[sa, h, h, 1], OutputActivation::Sigmoid, 1.0, rng);
        let critics = [
            Mlp::new(&[sa, h, h, 1], OutputActivation::Linear, 1.0, rng),
            Mlp::new(&[sa, h, h, 1], OutputActivation::Linear, 1.0, rng),
        ];
        let value = Mlp::new(&[state_dim, h, h, 1], OutputActivation::Linear, 1.0, rng);
        let target_value = EmaTracker::new(&value, hyper.ema_tau)?;
        let alpha_net = match hyper.alpha_mode {
            AlphaMode::Adaptive => Some(Mlp::new(
                &[state_dim, h, h, 1],
                OutputActivation::Sigmoid,
                1.0,
                rng,
            )),
            AlphaMode::Fixed(_) => None,
        };
        Ok(DacNetworks {
            policy,
            ratio,
            critics,
            value,
            target_value,
            alpha_net,
            state_dim,
            action_dim,
        })
    }

    fn concat(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(state.len() + action.len());
        input.extend_from_slice(state);
        input.extend_from_slice(action);
        input
    }

    pub fn critic_value(&self, i: usize, state: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.critics[i].forward(&self.concat(state, action))?[0])
    }

    pub fn critic_value_traced(&self, i: usize, state: &[f64], action: &[f64]) -> Result<(f64, MlpTrace)> {
        let trace = self.critics[i].forward_traced(&self.concat(state, action))?;
        let v = self.critics[i].output_of(&trace)[0];
        Ok((v, trace))
    }

    pub fn min_critic(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let q1 = self.critic_value(0, state, action)?;
        let q2 = self.critic_value(1, state, action)?;
        Ok(if q1 <= q2 { q1 } else { q2 })
    }

    /// Raw ratio-network output in (0,1).
    pub fn ratio_raw(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.ratio.forward(&self.concat(state, action))?[0])
    }

    /// Per-state mixture weight: the fixed α, or the α-network output
    /// rescaled into `[alpha_min, alpha_max]`.
    pub fn alpha_at(&self, state: &[f64], hyper: &DacHyper) -> Result<f64> {
        match hyper.alpha_mode {
            AlphaMode::Fixed(a) => Ok(a),
            AlphaMode::Adaptive => {
                let net = self
                    .alpha_net
                    .as_ref()
                    .ok_or_else(|| DacError::Config("adaptive mode without an alpha network".to_string()))?;
                let raw = net.forward(state)?[0];
                Ok(hyper.alpha_min + (hyper.alpha_max - hyper.alpha_min) * raw)
            }
        }
    }

    pub fn save_into(&self, container: &mut Container) -> Result<()> {
        let nets: [(&str, &Mlp); 6] = [
            ("policy", &self.policy.net),
            ("ratio", &self.ratio),
            ("q1", &self.critics[0]),
            ("q2", &self.critics[1]),
            ("value", &self.value),
            ("target_value", &self.target_value.shadow),
        ];
        for (name, net) in nets {
            container.insert(name, vec![net.n_params()], net.flatten_params())?;
        }
        if let Some(a) = &self.alpha_net {
            container.insert("alpha", vec![a.n_params()], a.flatten_params())?;
        }
        Ok(())
    }

    pub fn load_from(&mut self, container: &Container) -> Result<()> {
        self.policy.net.set_flat_params(&container.get("policy")?.data)?;
        self.ratio.set_flat_params(&container.get("ratio")?.data)?;
        self.critics[0].set_flat_params(&container.get("q1")?.data)?;
        self.critics[1].set_flat_params(&container.get("q2")?.data)?;
        self.value.set_flat_params(&container.get("value")?.data)?;
        self.target_value
            .shadow
            .set_flat_params(&container.get("target_value")?.data)?;
        if let Some(a) = &mut self.alpha_net {
            a.set_flat_params(&container.get("alpha")?.data)?;
        }
        Ok(())
    }
}

/// Adam state per parameter group.
#[derive(Debug, Clone)]
pub struct DacOptimizers {
    pub policy: Adam,
    pub ratio: Adam,
    pub q1: Adam,
    pub q2: Adam,
    pub value: Adam,
    pub alpha: Option<Adam>,
}

impl DacOptimizers {
    pub fn new(nets: &DacNetworks, lr: f64) -> Self {
        DacOptimizers {
            policy: Adam::new(lr, nets.policy.net.n_params()),
            ratio: Adam::new(lr, nets.ratio.n_params()),
            q1: Adam::new(lr, nets.critics[0].n_params()),
            q2: Adam::new(lr, nets.critics[1].n_params()),
            value: Adam::new(lr, nets.value.n_params()),
            alpha: nets.alpha_net.as_ref().map(|a| Adam::new(lr, a.n_params())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DacAgent {
    pub nets: DacNetworks,
    pub hyper: DacHyper,
    pub opts: DacOptimizers,
}

impl DacAgent {
    pub fn new(state_dim: usize, action_dim: usize, hyper: DacHyper, rng: &mut impl Rng) -> Result<Self> {
        let nets = DacNetworks::new(state_dim, action_dim, &hyper, rng)?;
        let opts = DacOptimizers::new(&nets, hyper.learning_rate);
        Ok(DacAgent { nets, hyper, opts })
    }
}

/// A sampled minibatch: owned transitions plus one noise vector per sample,
/// shared by every loss in the step.
#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    pub noise: Vec<Vec<f64>>,
}

/// Draws the minibatch (optionally restricted to the newest `q_window`
/// transitions) and then the per-sample noise, in that fixed order.
pub fn sample_batch(
    buffer: &ReplayBuffer,
    m: usize,
    q_window: Option<usize>,
    action_dim: usize,
    rng: &mut impl Rng,
) -> Result<SampledBatch> {
    let refs = match q_window {
        Some(w) => buffer.sample_recent_window(m, w, rng)?,
        None => buffer.sample_minibatch(m, rng)?,
    };
    let transitions: Vec<Transition> = refs.into_iter().cloned().collect();
    let noise: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..action_dim).map(|_| crate::nn::standard_normal(rng)).collect())
        .collect();
    Ok(SampledBatch { transitions, noise })
}

fn check_finite(grads: &MlpGrads, what: &str) -> Result<()> {
    if !grads.is_finite() {
        return Err(DacError::numeric(format!("non-finite gradient in {what}")));
    }
    Ok(())
}

/// `−α·ln α − (1−α)·ln(1−α)` with the endpoint limits taken as zero.
fn binary_entropy(alpha: f64) -> f64 {
    let mut h = 0.0;
    if alpha > 0.0 {
        h -= alpha * alpha.ln();
    }
    if alpha < 1.0 {
        h -= (1.0 - alpha) * (1.0 - alpha).ln();
    }
    h
}

struct ClippedRatio {
    value: f64,
    /// False when the raw output sits outside the clip range, which zeroes
    /// the gradient through the network.
    pass_gradient: bool,
}

fn clip_ratio(raw: f64, eps: f64) -> ClippedRatio {
    if raw < eps {
        ClippedRatio { value: eps, pass_gradient: false }
    } else if raw > 1.0 - eps {
        ClippedRatio { value: 1.0 - eps, pass_gradient: false }
    } else {
        ClippedRatio { value: raw, pass_gradient: true }
    }
}

/// Ascent gradient of the policy objective
/// `E[min_i Q_i(s,ã) + α·ln R(s,ã) − α·ln π(ã|s)]` with `ã` reparameterized,
/// so the gradient flows through the action into both critics' minimum and
/// the ratio network. Returns `(gradient, objective value)`.
pub fn policy_objective_grad(
    nets: &DacNetworks,
    hyper: &DacHyper,
    batch: &SampledBatch,
) -> Result<(MlpGrads, f64)> {
    let m = batch.transitions.len();
    let mut grads = MlpGrads::zeros_like(&nets.policy.net);
    let mut objective = 0.0;
    let mut critic_sink = MlpGrads::zeros_like(&nets.critics[0]);
    let mut ratio_sink = MlpGrads::zeros_like(&nets.ratio);

    for (t, eps) in batch.transitions.iter().zip(&batch.noise) {
        let alpha = nets.alpha_at(&t.state, hyper)?;
        let sample = nets.policy.sample_with_noise(&t.state, eps.clone())?;

        let (q1, tr1) = nets.critic_value_traced(0, &t.state, &sample.action)?;
        let (q2, tr2) = nets.critic_value_traced(1, &t.state, &sample.action)?;
        let use_first = q1 <= q2;
        let min_q = if use_first { q1 } else { q2 };
        critic_sink.fill_zero();
        let input_grad = if use_first {
            nets.critics[0].backward(&tr1, &[1.0], &mut critic_sink)
        } else {
            nets.critics[1].backward(&tr2, &[1.0], &mut critic_sink)
        };
        let mut grad_action: Vec<f64> = input_grad[t.state.len()..].to_vec();

        let mut log_ratio = 0.0;
        if alpha > 0.0 && !hyper.pin_ratio_unit {
            let rt = nets.ratio.forward_traced(&nets.concat(&t.state, &sample.action))?;
            let raw = nets.ratio.output_of(&rt)[0];
            let clipped = clip_ratio(raw, hyper.ratio_clip);
            log_ratio = clipped.value.ln();
            if clipped.pass_gradient {
                ratio_sink.fill_zero();
                let rg = nets.ratio.backward(&rt, &[alpha / clipped.value], &mut ratio_sink);
                for (g, r) in grad_action.iter_mut().zip(&rg[t.state.len()..]) {
                    *g += r;
                }
            }
        }

        objective += min_q + alpha * log_ratio - alpha * sample.log_prob;
        nets.policy
            .backward_reparam(&sample, &grad_action, -alpha, &mut grads);
    }
    grads.scale(1.0 / m as f64);
    check_finite(&grads, "policy objective")?;
    Ok((grads, objective / m as f64))
}

/// Ascent gradient of the ratio objective
/// `E[α·ln R(s,ã) + (1−α)·ln(1 − R(s,a_D))]`: fresh policy actions feed the
/// first term, the stored transition's own action feeds the second.
pub fn ratio_objective_grad(
    nets: &DacNetworks,
    hyper: &DacHyper,
    batch: &SampledBatch,
) -> Result<(MlpGrads, f64)> {
    let m = batch.transitions.len();
    let mut grads = MlpGrads::zeros_like(&nets.ratio);
    let mut objective = 0.0;
    for (t, eps) in batch.transitions.iter().zip(&batch.noise) {
        let alpha = nets.alpha_at(&t.state, hyper)?;
        let sample = nets.policy.sample_with_noise(&t.state, eps.clone())?;

        if alpha > 0.0 {
            let rt = nets.ratio.forward_traced(&nets.concat(&t.state, &sample.action))?;
            let raw = nets.ratio.output_of(&rt)[0];
            let clipped = clip_ratio(raw, hyper.ratio_clip);
            objective += alpha * clipped.value.ln();
            if clipped.pass_gradient {
                nets.ratio.backward(&rt, &[alpha / clipped.value], &mut grads);
            }
        }
        if alpha < 1.0 {
            let rt = nets.ratio.forward_traced(&nets.concat(&t.state, &t.action))?;
            let raw = nets.ratio.output_of(&rt)[0];
            let clipped = clip_ratio(raw, hyper.ratio_clip);
            objective += (1.0 - alpha) * (1.0 - clipped.value).ln();
            if clipped.pass_gradient {
                nets.ratio
                    .backward(&rt, &[-(1.0 - alpha) / (1.0 - clipped.value)], &mut grads);
            }
        }
    }
    grads.scale(1.0 / m as f64);
    check_finite(&grads, "ratio objective")?;
    Ok((grads, objective / m as f64))
}

/// Descent gradient of the critic loss `E[½(Q_i(s,a_D) − Q̂)²]` with
/// `Q̂ = r/β + γ·(1−done)·V̄(s')`.
pub fn q_loss_grad(
    nets: &DacNetworks,
    hyper: &DacHyper,
    batch: &SampledBatch,
    i: usize,
) -> Result<(MlpGrads, f64)> {
    let m = batch.transitions.len();
    let mut grads = MlpGrads::zeros_like(&nets.critics[i]);
    let mut loss = 0.0;
    for t in &batch.transitions {
        let v_bar = nets.target_value.shadow.forward(&t.next_state)?[0];
        let target = t.reward / hyper.beta + hyper.gamma * if t.done { 0.0 } else { v_bar };
        let (q, trace) = nets.critic_value_traced(i, &t.state, &t.action)?;
        let residual = q - target;
        loss += 0.5 * residual * residual;
        nets.critics[i].backward(&trace, &[residual], &mut grads);
    }
    grads.scale(1.0 / m as f64);
    check_finite(&grads, "critic loss")?;
    Ok((grads, loss / m as f64))
}

/// Diagnostics from building value targets.
#[derive(Debug, Clone, Copy)]
pub struct VTargetInfo {
    /// Extremes of the clipped buffer-side term across the batch.
    pub d_term_min: f64,
    pub d_term_max: f64,
    pub mean_ratio: f64,
    pub mean_entropy_estimate: f64,
    pub mean_js_estimate: f64,
    pub mean_alpha: f64,
}

/// Per-state value targets
/// `V̂(s) = E_π[min Q + α·ln R − α·ln(α·π)] + (1−α)·clip(ln R(s,a_D) − ln(α·π(a_D|s)); −d, d)`
/// using the batch's shared noise for the π-expectation. No gradients flow
/// from here; the caller treats the targets as constants.
pub fn v_target(
    nets: &DacNetworks,
    hyper: &DacHyper,
    batch: &SampledBatch,
) -> Result<(Vec<f64>, VTargetInfo)> {
    let d = hyper.clip_bound_for(nets.action_dim);
    let mut targets = Vec::with_capacity(batch.transitions.len());
    let mut d_min = f64::INFINITY;
    let mut d_max = f64::NEG_INFINITY;
    let mut ratio_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut js_sum = 0.0;
    let mut alpha_sum = 0.0;
    for (t, eps) in batch.transitions.iter().zip(&batch.noise) {
        let alpha = nets.alpha_at(&t.state, hyper)?;
        alpha_sum += alpha;
        let sample = nets.policy.sample_with_noise(&t.state, eps.clone())?;
        let min_q = nets.min_critic(&t.state, &sample.action)?;
        entropy_sum += -sample.log_prob;

        if alpha == 0.0 {
            targets.push(min_q);
            ratio_sum += ratio_value(nets, hyper, &t.state, &sample.action)?;
            continue;
        }

        let r_pi = ratio_value(nets, hyper, &t.state, &sample.action)?;
        ratio_sum += r_pi;
        let pi_term = min_q + alpha * r_pi.ln() - alpha * (alpha.ln() + sample.log_prob);

        let mut target = pi_term;
        let mut r_buf = f64::NAN;
        if alpha < 1.0 {
            r_buf = ratio_value(nets, hyper, &t.state, &t.action)?;
            let log_pi_buf = nets.policy.log_prob_of(&t.state, &t.action)?;
            let inner = r_buf.ln() - alpha.ln() - log_pi_buf;
            let clipped = inner.clamp(-d, d);
            d_min = d_min.min(clipped);
            d_max = d_max.max(clipped);
            target += (1.0 - alpha) * clipped;
        }

        // Plug-in divergence estimate from the same quantities, floored at
        // zero since the estimated quantity is a divergence.
        let js = alpha * r_pi.ln()
            + if alpha < 1.0 { (1.0 - alpha) * (1.0 - r_buf).ln() } else { 0.0 }
            + binary_entropy(alpha);
        js_sum += js;

        targets.push(target);
    }
    let m = batch.transitions.len() as f64;
    Ok((
        targets,
        VTargetInfo {
            d_term_min: d_min,
            d_term_max: d_max,
            mean_ratio: ratio_sum / m,
            mean_entropy_estimate: entropy_sum / m,
            mean_js_estimate: (js_sum / m).max(0.0),
            mean_alpha: alpha_sum / m,
        },
    ))
}

fn ratio_value(nets: &DacNetworks, hyper: &DacHyper, state: &[f64], action: &[f64]) -> Result<f64> {
    if hyper.pin_ratio_unit {
        return Ok(1.0);
    }
    let raw = nets.ratio_raw(state, action)?;
    Ok(clip_ratio(raw, hyper.ratio_clip).value)
}

/// Descent gradient of `E[½(V(s) − V̂(s))²]` against frozen targets.
pub fn v_loss_grad(
    nets: &DacNetworks,
    batch: &SampledBatch,
    targets: &[f64],
) -> Result<(MlpGrads, f64)> {
    let m = batch.transitions.len();
    let mut grads = MlpGrads::zeros_like(&nets.value);
    let mut loss = 0.0;
    for (t, &target) in batch.transitions.iter().zip(targets) {
        let trace = nets.value.forward_traced(&t.state)?;
        let v = nets.value.output_of(&trace)[0];
        let residual = v - target;
        loss += 0.5 * residual * residual;
        nets.value.backward(&trace, &[residual], &mut grads);
    }
    grads.scale(1.0 / m as f64);
    check_finite(&grads, "value loss")?;
    Ok((grads, loss / m as f64))
}

/// Descent gradient of the mixture-weight loss
/// `L_α = E[H(q_mix) − α_ξ·c] + reg·½‖ξ‖²`, whose ξ-gradient is
///
/// ```text
/// E[(∇_ξ α_ξ)·( E_π[ln R − ln(α·π) − c] − E_q[clip(ln R − ln(α·π); −d, d)] )] + reg·ξ
/// ```
///
/// with the buffer-side term clipped exactly as in the value target.
pub fn alpha_loss_grad(
    nets: &DacNetworks,
    hyper: &DacHyper,
    batch: &SampledBatch,
) -> Result<(MlpGrads, f64)> {
    let alpha_net = match (&hyper.alpha_mode, &nets.alpha_net) {
        (AlphaMode::Adaptive, Some(net)) => net,
        _ => {
            return Err(DacError::Config(
                "alpha adaptation requested in fixed-alpha mode".to_string(),
            ))
        }
    };
    let m = batch.transitions.len();
    let d = hyper.clip_bound_for(nets.action_dim);
    let c = hyper.control_coeff_for(nets.action_dim);
    let span = hyper.alpha_max - hyper.alpha_min;
    let mut grads = MlpGrads::zeros_like(alpha_net);
    let mut loss = 0.0;

    for (t, eps) in batch.transitions.iter().zip(&batch.noise) {
        let trace = alpha_net.forward_traced(&t.state)?;
        let raw = alpha_net.output_of(&trace)[0];
        let alpha = hyper.alpha_min + span * raw;

        let sample = nets.policy.sample_with_noise(&t.state, eps.clone())?;
        let r_pi = ratio_value(nets, hyper, &t.state, &sample.action)?;
        let pi_part = r_pi.ln() - alpha.ln() - sample.log_prob - c;

        let r_buf = ratio_value(nets, hyper, &t.state, &t.action)?;
        let log_pi_buf = nets.policy.log_prob_of(&t.state, &t.action)?;
        let q_part = (r_buf.ln() - alpha.ln() - log_pi_buf).clamp(-d, d);

        let weight = pi_part - q_part;
        // Loss value tracks the same sampled form: the entropy estimate is
        // E_π[lnR − ln απ] + (1−α)·(q-side − π-side) pieces recombined.
        let entropy_est = alpha * (r_pi.ln() - alpha.ln() - sample.log_prob)
            + (1.0 - alpha) * q_part;
        loss += entropy_est - alpha * c;
        alpha_net.backward(&trace, &[weight * span], &mut grads);
    }
    grads.scale(1.0 / m as f64);
    // L2 regularization on the α parameters.
    let flat = alpha_net.flatten_params();
    let mut idx = 0;
    let mut reg_term = 0.0;
    for w in &mut grads.weights {
        for g in &mut w.data {
            *g += hyper.alpha_reg * flat[idx];
            reg_term += 0.5 * hyper.alpha_reg * flat[idx] * flat[idx];
            idx += 1;
        }
    }
    for b in &mut grads.biases {
        for g in b.iter_mut() {
            *g += hyper.alpha_reg * flat[idx];
            reg_term += 0.5 * hyper.alpha_reg * flat[idx] * flat[idx];
            idx += 1;
        }
    }
    check_finite(&grads, "alpha loss")?;
    Ok((grads, loss / m as f64 + reg_term))
}

/// Scalar diagnostics from one gradient step.
#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    pub obj_pi: f64,
    pub obj_ratio: f64,
    pub loss_q1: f64,
    pub loss_q2: f64,
    pub loss_v: f64,
    pub loss_alpha: f64,
    pub mean_alpha: f64,
    pub mean_entropy: f64,
    pub mean_js_div: f64,
    pub mean_ratio: f64,
    pub d_term_min: f64,
    pub d_term_max: f64,
}

/// One full gradient step on a freshly sampled minibatch: every gradient is
/// computed at the current parameters, then applied in order — policy and
/// ratio ascents, critic and value descents, the EMA target update, and the
/// α descent last when adaptation is on.
pub fn train_step(agent: &mut DacAgent, buffer: &ReplayBuffer, rng: &mut impl Rng) -> Result<StepMetrics> {
    let batch = sample_batch(
        buffer,
        agent.hyper.minibatch,
        agent.hyper.q_window,
        agent.nets.action_dim,
        rng,
    )?;
    train_step_on_batch(agent, &batch)
}

pub fn train_step_on_batch(agent: &mut DacAgent, batch: &SampledBatch) -> Result<StepMetrics> {
    let DacAgent { nets, hyper, opts } = agent;

    let (mut pi_grads, obj_pi) = policy_objective_grad(nets, hyper, batch)?;
    let ratio_update = if hyper.pin_ratio_unit {
        None
    } else {
        Some(ratio_objective_grad(nets, hyper, batch)?)
    };
    let (q1_grads, loss_q1) = q_loss_grad(nets, hyper, batch, 0)?;
    let (q2_grads, loss_q2) = q_loss_grad(nets, hyper, batch, 1)?;
    let (targets, info) = v_target(nets, hyper, batch)?;
    let (v_grads, loss_v) = v_loss_grad(nets, batch, &targets)?;

    pi_grads.scale(-1.0);
    opts.policy.step(&mut nets.policy.net, &pi_grads);
    let mut obj_ratio = 0.0;
    if let Some((mut r_grads, obj)) = ratio_update {
        obj_ratio = obj;
        r_grads.scale(-1.0);
        opts.ratio.step(&mut nets.ratio, &r_grads);
    }
    opts.q1.step(&mut nets.critics[0], &q1_grads);
    opts.q2.step(&mut nets.critics[1], &q2_grads);
    opts.value.step(&mut nets.value, &v_grads);
    nets.target_value.update(&nets.value)?;

    let mut loss_alpha = 0.0;
    if matches!(hyper.alpha_mode, AlphaMode::Adaptive) {
        let (a_grads, l) = alpha_loss_grad(nets, hyper, batch)?;
        loss_alpha = l;
        let alpha_net = nets.alpha_net.as_mut().unwrap();
        opts.alpha.as_mut().unwrap().step(alpha_net, &a_grads);
    }

    Ok(StepMetrics {
        obj_pi,
        obj_ratio,
        loss_q1,
        loss_q2,
        loss_v,
        loss_alpha,
        mean_alpha: info.mean_alpha,
        mean_entropy: info.mean_entropy_estimate,
        mean_js_div: info.mean_js_estimate,
        mean_ratio: info.mean_ratio,
        d_term_min: info.d_term_min,
        d_term_max: info.d_term_max,
    })
}

/// One metrics row per environment step.
#[derive(Debug, Clone, Copy)]
pub struct TrainRecord {
    pub step: u64,
    pub episode_return: f64,
    pub loss_q1: f64,
    pub loss_q2: f64,
    pub loss_v: f64,
    pub obj_pi: f64,
    pub obj_ratio: f64,
    pub mean_alpha: f64,
    pub mean_entropy: f64,
    pub mean_js_div: f64,
}

pub const TRAIN_CSV_SCHEMA: &str = "# schema dac.train-metrics v1";

pub fn records_to_csv(records: &[TrainRecord]) -> String {
    let mut out = String::new();
    out.push_str(TRAIN_CSV_SCHEMA);
    out.push('\n');
    out.push_str(
        "step,episode_return,loss_q1,loss_q2,loss_v,obj_pi,obj_ratio,mean_alpha,mean_entropy,mean_js_div\n",
    );
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.episode_return,
            r.loss_q1,
            r.loss_q2,
            r.loss_v,
            r.obj_pi,
            r.obj_ratio,
            r.mean_alpha,
            r.mean_entropy,
            r.mean_js_div
        )
        .unwrap();
    }
    out
}

/// Return of one deterministic (squashed-mean) episode on a copy of the
/// environment.
pub fn evaluate_deterministic<E: ContinuousEnv + Clone>(
    env: &E,
    nets: &DacNetworks,
    step_cap: usize,
) -> Result<f64> {
    let mut env = env.clone();
    let mut obs = env.reset();
    let mut total = 0.0;
    for _ in 0..step_cap {
        let action = nets.policy.deterministic_action(&obs)?;
        let out = env.step(&action);
        total += out.reward;
        obs = out.obs;
        if out.done {
            break;
        }
    }
    Ok(total)
}

/// Interleaves environment rollouts with one gradient step per environment
/// step (once the buffer has `warmup` transitions), refreshing the
/// deterministic evaluation return every `eval_interval` steps.
///
/// Episodes end either because the environment terminates (stored with the
/// terminal flag set, so bootstrapping stops) or because the `horizon` is
/// reached, in which case the environment is reset but the transition is
/// stored as non-terminal: a timeout is not a terminal state and the value
/// bootstrap continues through it.
pub fn run_training<E: ContinuousEnv + Clone>(
    env: &mut E,
    agent: &mut DacAgent,
    buffer: &mut ReplayBuffer,
    total_steps: u64,
    rng: &mut impl Rng,
) -> Result<Vec<TrainRecord>> {
    let mut records = Vec::new();
    if total_steps == 0 {
        return Ok(records);
    }
    let mut obs = env.reset();
    let mut eval_return = evaluate_deterministic(env, &agent.nets, agent.hyper.horizon)?;
    let mut steps_in_episode = 0usize;
    for step in 1..=total_steps {
        let sample = agent.nets.policy.sample(&obs, rng)?;
        let out = env.step(&sample.action);
        steps_in_episode += 1;
        buffer.push(Transition {
            state: obs,
            action: sample.action,
            reward: out.reward,
            next_state: out.obs.clone(),
            done: out.done,
        })?;
        let timeout = steps_in_episode >= agent.hyper.horizon;
        obs = if out.done || timeout {
            steps_in_episode = 0;
            env.reset()
        } else {
            out.obs
        };

        let metrics = if buffer.len() >= agent.hyper.warmup.max(1) {
            Some(train_step(agent, buffer, rng).map_err(|e| {
                DacError::numeric(format!("aborting at environment step {step}: {e}"))
            })?)
        } else {
            None
        };
        if step % agent.hyper.eval_interval as u64 == 0 {
            eval_return = evaluate_deterministic(env, &agent.nets, agent.hyper.horizon)?;
        }
        let m = metrics.unwrap_or(StepMetrics {
            obj_pi: 0.0,
            obj_ratio: 0.0,
            loss_q1: 0.0,
            loss_q2: 0.0,
            loss_v: 0.0,
            loss_alpha: 0.0,
            mean_alpha: 0.0,
            mean_entropy: 0.0,
            mean_js_div: 0.0,
            mean_ratio: 0.0,
            d_term_min: 0.0,
            d_term_max: 0.0,
        });
        records.push(TrainRecord {
            step,
            episode_return: eval_return,
            loss_q1: m.loss_q1,
            loss_q2: m.loss_q2,
            loss_v: m.loss_v,
            obj_pi: m.obj_pi,
            obj_ratio: m.obj_ratio,
            mean_alpha: m.mean_alpha,
            mean_entropy: m.mean_entropy,
            mean_js_div: m.mean_js_div,
        });
    }
    Ok(records)
}
