//! Gaussian policy head with reparameterized sampling.
//!
//! The trunk network maps a state to `[mean, log_std]` (both of action
//! dimension). Sampling draws spherical noise ε, forms `u = mean + std·ε`,
//! and either returns `u` directly or squashes onto `(−1,1)^d` with tanh.
//! The squashed log-density carries the change-of-variables correction
//! `−Σ ln(1 − tanh²(u_i))`, evaluated in the stable form
//! `ln(1 − tanh²(u)) = 2·(ln 2 − u − softplus(−2u))`.

use rand::Rng;

use super::{softplus, standard_normal, Mlp, MlpGrads, MlpTrace};
use crate::error::Result;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Policy head over an MLP trunk. With `squash` set, actions live strictly
/// inside `(−1,1)^d`; otherwise they are the raw Gaussian draws.
#[derive(Debug, Clone)]
pub struct GaussianPolicyHead {
    pub net: Mlp,
    pub action_dim: usize,
    pub squash: bool,
}

/// One reparameterized draw together with everything the backward pass of a
/// policy-side loss needs.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub noise: Vec<f64>,
    /// `u = mean + std·ε`, the pre-squash draw.
    pub pre_squash: Vec<f64>,
    pub mean: Vec<f64>,
    /// Clamped log-std actually used.
    pub log_std: Vec<f64>,
    /// Raw (unclamped) log-std head outputs, kept for the clamp gate.
    pub log_std_raw: Vec<f64>,
    pub trace: MlpTrace,
}

impl GaussianPolicyHead {
    pub fn new(net: Mlp, action_dim: usize, squash: bool) -> Self {
        assert_eq!(net.output_dim(), 2 * action_dim, "head needs mean and log-std per dim");
        GaussianPolicyHead {
            net,
            action_dim,
            squash,
        }
    }

    fn split_outputs<'a>(&self, out: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        out.split_at(self.action_dim)
    }

    /// Reparameterized sample: gradients flow through mean and std, not ε.
    pub fn sample(&self, state: &[f64], rng: &mut impl Rng) -> Result<PolicySample> {
        let noise: Vec<f64> = (0..self.action_dim).map(|_| standard_normal(rng)).collect();
        self.sample_with_noise(state, noise)
    }

    /// Reparameterized draw at a caller-provided noise vector.
    pub fn sample_with_noise(&self, state: &[f64], noise: Vec<f64>) -> Result<PolicySample> {
        let trace = self.net.forward_traced(state)?;
        let out = self.net.output_of(&trace).to_vec();
        let (mean, log_std_raw) = self.split_outputs(&out);
        let log_std: Vec<f64> = log_std_raw
            .iter()
            .map(|&l| l.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        let pre_squash: Vec<f64> = mean
            .iter()
            .zip(&log_std)
            .zip(&noise)
            .map(|((&m, &ls), &e)| m + ls.exp() * e)
            .collect();
        let action: Vec<f64> = if self.squash {
            pre_squash.iter().map(|&u| u.tanh()).collect()
        } else {
            pre_squash.clone()
        };
        let log_prob = self.log_prob_parts(&pre_squash, &noise, &log_std);
        Ok(PolicySample {
            action,
            log_prob,
            noise,
            pre_squash,
            mean: mean.to_vec(),
            log_std,
            log_std_raw: log_std_raw.to_vec(),
            trace,
        })
    }

    fn log_prob_parts(&self, pre_squash: &[f64], noise: &[f64], log_std: &[f64]) -> f64 {
        let mut lp = 0.0;
        for i in 0..self.action_dim {
            lp += -log_std[i] - 0.5 * noise[i] * noise[i] - HALF_LN_2PI;
            if self.squash {
                lp -= log_one_minus_tanh_sq(pre_squash[i]);
            }
        }
        lp
    }

    /// Log-density of an arbitrary action (e.g. one drawn from a replay
    /// buffer) under the current head. Squashed actions are pulled back
    /// through atanh with a clamp just inside the box.
    pub fn log_prob_of(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let out = self.net.forward(state)?;
        let (mean, log_std_raw) = self.split_outputs(&out);
        let mut lp = 0.0;
        for i in 0..self.action_dim {
            let ls = log_std_raw[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
            let std = ls.exp();
            let u = if self.squash {
                atanh_clamped(action[i])
            } else {
                action[i]
            };
            let z = (u - mean[i]) / std;
            lp += -ls - 0.5 * z * z - HALF_LN_2PI;
            if self.squash {
                lp -= log_one_minus_tanh_sq(u);
            }
        }
        Ok(lp)
    }

    /// Deterministic evaluation action: the squashed (or raw) mean.
    pub fn deterministic_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.forward(state)?;
        let (mean, _) = self.split_outputs(&out);
        Ok(if self.squash {
            mean.iter().map(|&m| m.tanh()).collect()
        } else {
            mean.to_vec()
        })
    }

    /// Backward pass for losses of the form `L = f(action) + c·log π(action)`
    /// evaluated at a reparameterized sample: `grad_action = ∂f/∂action` and
    /// `grad_log_prob = c`. Parameter gradients accumulate into `grads`.
    ///
    /// Holding ε fixed, the total derivative through `u = mean + std·ε` is
    ///
    /// ```text
    /// ∂L/∂mean_i    = dL/du_i
    /// ∂L/∂logstd_i  = dL/du_i·std_i·ε_i + c·∂log π/∂logstd_i
    /// dL/du_i       = ∂f/∂a_i·(1−tanh²u_i) + c·2·tanh(u_i)     (squashed)
    ///               = ∂f/∂a_i                                   (raw)
    /// ∂logπ/∂logstd = −1
    /// ```
    pub fn backward_reparam(
        &self,
        sample: &PolicySample,
        grad_action: &[f64],
        grad_log_prob: f64,
        grads: &mut MlpGrads,
    ) -> Vec<f64> {
        let d = self.action_dim;
        let mut out_adj = vec![0.0; 2 * d];
        for i in 0..d {
            let u = sample.pre_squash[i];
            let du = if self.squash {
                let t = u.tanh();
                grad_action[i] * (1.0 - t * t) + grad_log_prob * 2.0 * t
            } else {
                grad_action[i]
            };
            out_adj[i] = du;
            let std = sample.log_std[i].exp();
            let mut dls = du * std * sample.noise[i] + grad_log_prob * (-1.0);
            // Clamp gate: no gradient through a saturated log-std head.
            if sample.log_std_raw[i] <= LOG_STD_MIN || sample.log_std_raw[i] >= LOG_STD_MAX {
                dls = 0.0;
            }
            out_adj[d + i] = dls;
        }
        self.net.backward(&sample.trace, &out_adj, grads)
    }
}

#[inline]
fn atanh_clamped(a: f64) -> f64 {
    let c = a.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    0.5 * ((1.0 + c) / (1.0 - c)).ln()
}

/// `ln(1 − tanh²(u))`, stable for large |u|.
#[inline]
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputActivation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn head(squash: bool, seed: u64) -> GaussianPolicyHead {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let net = Mlp::new(&[2, 12, 2], OutputActivation::Linear, 1.0, &mut rng);
        GaussianPolicyHead::new(net, 1, squash)
    }

    #[test]
    fn samples_stay_strictly_inside_the_box() {
        let h = head(true, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..2000 {
            let s = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>()];
            let sample = h.sample(&s, &mut rng).unwrap();
            assert!(sample.action[0].abs() < 1.0);
            assert!(sample.log_prob.is_finite());
            assert!(sample.log_prob.exp() > 0.0);
        }
    }

    #[test]
    fn degenerate_noise_returns_squashed_mean() {
        let mut h = head(true, 4);
        // Force the log-std head to the clamp floor.
        let d = h.action_dim;
        let last = h.net.n_layers() - 1;
        for i in d..2 * d {
            let cols = h.net.weights[last].cols;
            for c in 0..cols {
                h.net.weights[last].data[i * cols + c] = 0.0;
            }
            h.net.biases[last][i] = -40.0;
        }
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let s = [0.4, -0.2];
        let det = h.deterministic_action(&s).unwrap();
        for _ in 0..50 {
            let sample = h.sample(&s, &mut rng).unwrap();
            assert!((sample.action[0] - det[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        let h = head(true, 6);
        let s = [0.1, 0.7];
        // Midpoint quadrature over the open interval (−1, 1).
        let n = 20_000;
        let mut mass = 0.0;
        for k in 0..n {
            let a = -1.0 + (2.0 * (k as f64 + 0.5)) / n as f64;
            mass += h.log_prob_of(&s, &[a]).unwrap().exp() * (2.0 / n as f64);
        }
        assert!((mass - 1.0).abs() < 1e-3, "integrated mass {mass}");
    }

    #[test]
    fn unsquashed_density_integrates_to_one() {
        let h = head(false, 8);
        let s = [0.0, 0.3];
        let (lo, hi, n) = (-8.0, 8.0, 40_000);
        let mut mass = 0.0;
        for k in 0..n {
            let a = lo + (hi - lo) * (k as f64 + 0.5) / n as f64;
            mass += h.log_prob_of(&s, &[a]).unwrap().exp() * ((hi - lo) / n as f64);
        }
        assert!((mass - 1.0).abs() < 1e-3, "integrated mass {mass}");
    }

    #[test]
    fn log_prob_of_matches_sampled_log_prob() {
        for squash in [true, false] {
            let h = head(squash, 9);
            let mut rng = ChaCha12Rng::seed_from_u64(77);
            for _ in 0..200 {
                let s = [rng.random::<f64>(), rng.random::<f64>()];
                let sample = h.sample(&s, &mut rng).unwrap();
                let lp = h.log_prob_of(&s, &sample.action).unwrap();
                assert!(
                    (lp - sample.log_prob).abs() < 1e-7,
                    "{lp} vs {}",
                    sample.log_prob
                );
            }
        }
    }

    /// E[log π] under fixed noise, differentiated through the head, against
    /// central finite differences with common random numbers.
    #[test]
    fn reparam_gradient_of_expected_log_prob_matches_fd() {
        for squash in [true, false] {
            let h = head(squash, 12);
            let mut rng = ChaCha12Rng::seed_from_u64(100);
            let states: Vec<[f64; 2]> = (0..16)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let noises: Vec<f64> = (0..16).map(|_| standard_normal(&mut rng)).collect();

            let objective = |net: &Mlp| -> f64 {
                let hh = GaussianPolicyHead::new(net.clone(), 1, squash);
                let mut total = 0.0;
                for (s, &e) in states.iter().zip(&noises) {
                    let out = hh.net.forward(s).unwrap();
                    let (mean, ls_raw) = out.split_at(1);
                    let ls = ls_raw[0].clamp(LOG_STD_MIN, LOG_STD_MAX);
                    let u = mean[0] + ls.exp() * e;
                    let mut lp = -ls - 0.5 * e * e - HALF_LN_2PI;
                    if squash {
                        lp -= log_one_minus_tanh_sq(u);
                    }
                    total += lp;
                }
                total / states.len() as f64
            };

            let mut grads = MlpGrads::zeros_like(&h.net);
            for (s, &e) in states.iter().zip(&noises) {
                let trace = h.net.forward_traced(s).unwrap();
                let out = h.net.output_of(&trace).to_vec();
                let (mean, ls_raw) = out.split_at(1);
                let ls = ls_raw[0].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let sample = PolicySample {
                    action: vec![if squash { (mean[0] + ls.exp() * e).tanh() } else { mean[0] + ls.exp() * e }],
                    log_prob: 0.0,
                    noise: vec![e],
                    pre_squash: vec![mean[0] + ls.exp() * e],
                    mean: mean.to_vec(),
                    log_std: vec![ls],
                    log_std_raw: ls_raw.to_vec(),
                    trace,
                };
                h.backward_reparam(&sample, &[0.0], 1.0, &mut grads);
            }
            grads.scale(1.0 / states.len() as f64);

            let flat = h.net.flatten_params();
            let mut analytic = Vec::new();
            for w in &grads.weights {
                analytic.extend_from_slice(&w.data);
            }
            for b in &grads.biases {
                analytic.extend_from_slice(b);
            }
            let hstep = 1e-6;
            for k in 0..flat.len() {
                let mut fp = flat.clone();
                fp[k] += hstep;
                let mut plus = h.net.clone();
                plus.set_flat_params(&fp).unwrap();
                fp[k] -= 2.0 * hstep;
                let mut minus = h.net.clone();
                minus.set_flat_params(&fp).unwrap();
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * hstep);
                let denom = analytic[k].abs().max(fd.abs()).max(1e-4);
                assert!(
                    (analytic[k] - fd).abs() / denom <= 1e-3,
                    "squash={squash} param {k}: analytic {} vs fd {fd}",
                    analytic[k]
                );
            }
        }
    }
}
