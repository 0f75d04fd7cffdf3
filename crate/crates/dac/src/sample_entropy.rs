//! Sample-aware entropy in closed form for discrete distributions.
//!
//! Everything here is per-state math on a pair of probability rows: the
//! policy row `π` and the buffer action row `q`. The central objects are the
//! mixture `q_mix = α·π + (1−α)·q`, its Shannon entropy, the α-skew
//! Jensen-Shannon divergence between `π` and `q`, and the ratio function
//!
//! ```text
//! R(a) = α·π(a) / (α·π(a) + (1−α)·q(a))
//! ```
//!
//! which lets the entropy be written without ever evaluating `q` directly.
//! All entropies are in nats.

use crate::error::{DacError, Result};

/// Floor applied to mixture components before logs or ratios so that rows
/// with exact zeros stay finite.
pub const EPS_Q: f64 = 1e-12;

/// Tolerance for "sums to one" checks on probability rows.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Mixture weight α ∈ [0, 1] between the policy row and the buffer row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureWeight(f64);

impl MixtureWeight {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(DacError::validation(format!(
                "mixture weight must lie in [0,1], got {alpha}"
            )));
        }
        Ok(MixtureWeight(alpha))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A per-state pair of probability rows (policy row, buffer row) of equal
/// length. Both rows must be elementwise nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistPair {
    pub pi_row: Vec<f64>,
    pub q_row: Vec<f64>,
}

/// Checks that `row` is a probability vector.
pub fn validate_prob_row(row: &[f64], what: &str) -> Result<()> {
    if row.is_empty() {
        return Err(DacError::validation(format!("{what}: empty row")));
    }
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(DacError::validation(format!(
                "{what}: entry {p} is negative or non-finite"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(DacError::validation(format!(
            "{what}: row sums to {sum}, expected 1 within {ROW_SUM_TOL:e}"
        )));
    }
    Ok(())
}

impl DiscreteDistPair {
    pub fn new(pi_row: Vec<f64>, q_row: Vec<f64>) -> Result<Self> {
        if pi_row.len() != q_row.len() {
            return Err(DacError::validation(format!(
                "row length mismatch: pi has {}, q has {}",
                pi_row.len(),
                q_row.len()
            )));
        }
        validate_prob_row(&pi_row, "pi row")?;
        validate_prob_row(&q_row, "q row")?;
        Ok(DiscreteDistPair { pi_row, q_row })
    }

    pub fn n_actions(&self) -> usize {
        self.pi_row.len()
    }
}

/// `x·ln(x)` with the `0·ln 0 = 0` convention.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Shannon entropy of a probability row, in nats.
pub fn entropy(row: &[f64]) -> f64 {
    -row.iter().map(|&p| xlogx(p)).sum::<f64>()
}

/// The mixture row `α·π + (1−α)·q`.
pub fn mixture(pair: &DiscreteDistPair, alpha: MixtureWeight) -> Vec<f64> {
    let a = alpha.get();
    pair.pi_row
        .iter()
        .zip(&pair.q_row)
        .map(|(&p, &q)| a * p + (1.0 - a) * q)
        .collect()
}

/// Shannon entropy of the mixture row (the sample-aware entropy of the pair).
pub fn mixture_entropy(pair: &DiscreteDistPair, alpha: MixtureWeight) -> f64 {
    entropy(&mixture(pair, alpha))
}

/// α-skew Jensen-Shannon symmetrization of KL divergence:
///
/// ```text
/// D(π‖q) = α·Σ π ln(π / q_mix) + (1−α)·Σ q ln(q / q_mix)
/// ```
///
/// Nonnegative; zero exactly when π = q or α ∈ {0, 1}. At α = 1/2 it is the
/// standard JS divergence. Together with the row entropies it reconstructs
/// the mixture entropy exactly:
/// `H(q_mix) = D(π‖q) + α·H(π) + (1−α)·H(q)` with no leftover term
/// (see [`decomposition_constant`]).
pub fn js_skew_divergence(pair: &DiscreteDistPair, alpha: MixtureWeight) -> f64 {
    let a = alpha.get();
    if a == 0.0 || a == 1.0 {
        return 0.0;
    }
    let mix = mixture(pair, alpha);
    let mut div = 0.0;
    for i in 0..pair.n_actions() {
        let (p, q, m) = (pair.pi_row[i], pair.q_row[i], mix[i]);
        if p > 0.0 {
            div += a * p * (p / m).ln();
        }
        if q > 0.0 {
            div += (1.0 - a) * q * (q / m).ln();
        }
    }
    // Rounding can push an exact zero slightly negative.
    div.max(0.0)
}

/// The constant term of the entropy decomposition, computed from a concrete
/// pair instead of assumed:
///
/// ```text
/// const = H(q_mix) − D(π‖q) − α·H(π) − (1−α)·H(q)
/// ```
///
/// Expanding the divergence shows the `α ln α` and `(1−α) ln(1−α)` pieces
/// cancel pairwise, so this is identically zero; tests assert it to 1e-12.
pub fn decomposition_constant(pair: &DiscreteDistPair, alpha: MixtureWeight) -> f64 {
    let a = alpha.get();
    mixture_entropy(pair, alpha)
        - js_skew_divergence(pair, alpha)
        - a * entropy(&pair.pi_row)
        - (1.0 - a) * entropy(&pair.q_row)
}

/// Closed-form ratio `R(a) = α·π(a) / (α·π(a) + (1−α)·q(a))`, with the
/// mixture floored at [`EPS_Q`] so the result stays finite.
///
/// For α ∈ (0,1) and strictly positive rows the output lies strictly inside
/// (0, 1); α = 1 gives 1 everywhere and α = 0 gives 0 wherever q > 0.
pub fn ratio_closed_form(pair: &DiscreteDistPair, alpha: MixtureWeight) -> Vec<f64> {
    let a = alpha.get();
    pair.pi_row
        .iter()
        .zip(&pair.q_row)
        .map(|(&p, &q)| {
            let denom = (a * p + (1.0 - a) * q).max(EPS_Q);
            a * p / denom
        })
        .collect()
}

/// Sample-aware entropy written through the ratio function:
///
/// ```text
/// H = α·Σ π (ln R − ln απ) + (1−α)·Σ q (ln R − ln απ)
/// ```
///
/// With the exact closed-form `ratio` this equals [`mixture_entropy`];
/// the identity is what lets the learner avoid evaluating `q`.
pub fn entropy_via_ratio(pair: &DiscreteDistPair, alpha: MixtureWeight, ratio: &[f64]) -> Result<f64> {
    let a = alpha.get();
    if ratio.len() != pair.n_actions() {
        return Err(DacError::validation(format!(
            "ratio length {} does not match rows of length {}",
            ratio.len(),
            pair.n_actions()
        )));
    }
    if a == 0.0 {
        // The π-weighted term carries coefficient α = 0 and the q-term
        // reduces to −Σ q ln q_mix = −Σ q ln q = H(q).
        return Ok(entropy(&pair.q_row));
    }
    let mut h = 0.0;
    for i in 0..pair.n_actions() {
        let (p, q, r) = (pair.pi_row[i], pair.q_row[i], ratio[i]);
        // ln R − ln απ = −ln q_mix; keep the subtraction form so the test
        // exercises the expression the learner actually uses.
        let log_api = (a * p).max(EPS_Q).ln();
        let log_r = r.max(EPS_Q).ln();
        let term = log_r - log_api;
        if p > 0.0 {
            h += a * p * term;
        }
        if q > 0.0 {
            h += (1.0 - a) * q * term;
        }
    }
    Ok(h)
}

/// Max-over-actions violation of the log identity
/// `ln R − ln απ = ln(1−R) − ln((1−α)q)`, both sides equal to `−ln q_mix`.
///
/// Requires α ∈ (0,1) and strictly positive rows.
pub fn lemma3_identity_check(pair: &DiscreteDistPair, alpha: MixtureWeight) -> Result<f64> {
    let a = alpha.get();
    if a <= 0.0 || a >= 1.0 {
        return Err(DacError::validation(format!(
            "identity requires alpha in (0,1), got {a}"
        )));
    }
    let ratio = ratio_closed_form(pair, alpha);
    let mut worst = 0.0_f64;
    for i in 0..pair.n_actions() {
        let (p, q, r) = (pair.pi_row[i], pair.q_row[i], ratio[i]);
        if p <= 0.0 || q <= 0.0 {
            return Err(DacError::validation(
                "identity check needs elementwise positive rows".to_string(),
            ));
        }
        let lhs = r.ln() - (a * p).ln();
        let rhs = (1.0 - r).ln() - ((1.0 - a) * q).ln();
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn pair(pi: &[f64], q: &[f64]) -> DiscreteDistPair {
        DiscreteDistPair::new(pi.to_vec(), q.to_vec()).unwrap()
    }

    fn w(alpha: f64) -> MixtureWeight {
        MixtureWeight::new(alpha).unwrap()
    }

    /// Random strictly-positive probability row.
    pub(crate) fn random_row(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn mixture_direct_arithmetic() {
        let m = mixture(&pair(&[0.6, 0.4], &[0.2, 0.8]), w(0.5));
        assert!((m[0] - 0.4).abs() < 1e-15);
        assert!((m[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn mixture_endpoints_return_inputs() {
        let p = pair(&[0.6, 0.4], &[0.2, 0.8]);
        assert_eq!(mixture(&p, w(1.0)), p.pi_row);
        assert_eq!(mixture(&p, w(0.0)), p.q_row);
    }

    #[test]
    fn mixture_rejects_length_mismatch() {
        assert!(DiscreteDistPair::new(vec![1.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn mixture_entropy_uniform_collapse() {
        let p = pair(&[0.25; 4], &[0.1, 0.2, 0.3, 0.4]);
        assert!((mixture_entropy(&p, w(1.0)) - 4.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mixture_entropy_pi_equals_q() {
        let row = [0.3, 0.15, 0.55];
        let p = pair(&row, &row);
        for &a in &[0.0, 0.3, 0.7, 1.0] {
            assert!((mixture_entropy(&p, w(a)) - entropy(&row)).abs() < 1e-14);
        }
    }

    #[test]
    fn decomposition_constant_is_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(2..=16);
            let p = DiscreteDistPair {
                pi_row: random_row(&mut rng, n),
                q_row: random_row(&mut rng, n),
            };
            let a = w(rng.random::<f64>() * 0.98 + 0.01);
            assert!(decomposition_constant(&p, a).abs() <= 1e-12);
        }
    }

    #[test]
    fn js_divergence_zero_cases() {
        let row = [0.2, 0.5, 0.3];
        assert_eq!(js_skew_divergence(&pair(&row, &row), w(0.5)), 0.0);
        let p = pair(&[0.9, 0.1], &[0.3, 0.7]);
        assert_eq!(js_skew_divergence(&p, w(0.0)), 0.0);
        assert_eq!(js_skew_divergence(&p, w(1.0)), 0.0);
    }

    #[test]
    fn js_divergence_disjoint_support_hits_ln2() {
        let p = pair(&[1.0, 0.0], &[0.0, 1.0]);
        assert!((js_skew_divergence(&p, w(0.5)) - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn js_divergence_positive_when_rows_differ() {
        let p = pair(&[0.9, 0.1], &[0.1, 0.9]);
        for &a in &[0.1, 0.5, 0.9] {
            assert!(js_skew_divergence(&p, w(a)) > 1e-4);
        }
    }

    #[test]
    fn ratio_symmetry_and_endpoints() {
        let row = [0.4, 0.6];
        let r = ratio_closed_form(&pair(&row, &row), w(0.5));
        assert!(r.iter().all(|&x| (x - 0.5).abs() < 1e-15));

        let r1 = ratio_closed_form(&pair(&[0.3, 0.7], &[0.5, 0.5]), w(1.0));
        assert!(r1.iter().all(|&x| (x - 1.0).abs() < 1e-15));

        let r = ratio_closed_form(&pair(&[0.6, 0.4], &[0.2, 0.8]), w(0.5));
        assert!((r[0] - 0.75).abs() < 1e-15);
        assert!((r[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ratio_strictly_interior_for_positive_rows() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(2..=8);
            let p = DiscreteDistPair {
                pi_row: random_row(&mut rng, n),
                q_row: random_row(&mut rng, n),
            };
            let a = w(rng.random::<f64>() * 0.8 + 0.1);
            for r in ratio_closed_form(&p, a) {
                assert!(r > 0.0 && r < 1.0);
            }
        }
    }

    #[test]
    fn entropy_via_ratio_matches_mixture_entropy() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let n = rng.random_range(2..=16);
            let p = DiscreteDistPair {
                pi_row: random_row(&mut rng, n),
                q_row: random_row(&mut rng, n),
            };
            let a = w(rng.random::<f64>() * 0.98 + 0.01);
            let r = ratio_closed_form(&p, a);
            let lhs = entropy_via_ratio(&p, a, &r).unwrap();
            let rhs = mixture_entropy(&p, a);
            assert!(
                (lhs - rhs).abs() <= 1e-12,
                "ratio-form {lhs} vs direct {rhs}"
            );
        }
    }

    #[test]
    fn entropy_via_ratio_alpha_one_is_policy_entropy() {
        let p = pair(&[0.3, 0.5, 0.2], &[0.1, 0.1, 0.8]);
        let h = entropy_via_ratio(&p, w(1.0), &[1.0, 1.0, 1.0]).unwrap();
        assert!((h - entropy(&p.pi_row)).abs() < 1e-14);
    }

    #[test]
    fn entropy_via_ratio_symmetric_pair() {
        let row = [0.25, 0.75];
        let p = pair(&row, &row);
        let h = entropy_via_ratio(&p, w(0.5), &[0.5, 0.5]).unwrap();
        assert!((h - entropy(&row)).abs() < 1e-14);
    }

    #[test]
    fn lemma3_identity_holds() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.random_range(2..=12);
            let p = DiscreteDistPair {
                pi_row: random_row(&mut rng, n),
                q_row: random_row(&mut rng, n),
            };
            let a = w(rng.random::<f64>() * 0.96 + 0.02);
            assert!(lemma3_identity_check(&p, a).unwrap() <= 1e-12);
        }
        // Mirror-image rows at a skewed weight.
        let p = pair(&[0.9, 0.1], &[0.1, 0.9]);
        assert!(lemma3_identity_check(&p, w(0.8)).unwrap() <= 1e-12);
    }

    #[test]
    fn lemma3_symmetric_pair_equals_neg_log_pi() {
        let row = [0.25, 0.75];
        let p = pair(&row, &row);
        let a = w(0.5);
        let r = ratio_closed_form(&p, a);
        for i in 0..2 {
            let lhs = r[i].ln() - (0.5 * row[i]).ln();
            assert!((lhs - (-row[i].ln())).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn decomposition_identity_proptest(
            raw_pi in proptest::collection::vec(1e-3..1.0f64, 2..10),
            raw_q in proptest::collection::vec(1e-3..1.0f64, 2..10),
            alpha in 0.01..0.99f64,
        ) {
            let n = raw_pi.len().min(raw_q.len());
            let norm = |v: &[f64]| {
                let s: f64 = v[..n].iter().sum();
                v[..n].iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let p = DiscreteDistPair { pi_row: norm(&raw_pi), q_row: norm(&raw_q) };
            let a = MixtureWeight::new(alpha).unwrap();
            let lhs = mixture_entropy(&p, a);
            let rhs = js_skew_divergence(&p, a)
                + alpha * entropy(&p.pi_row)
                + (1.0 - alpha) * entropy(&p.q_row);
            prop_assert!((lhs - rhs).abs() <= 1e-12);
            prop_assert!(js_skew_divergence(&p, a) >= 0.0);
        }

        #[test]
        fn mixture_sums_to_one(
            raw_pi in proptest::collection::vec(0.0..1.0f64, 2..10),
            raw_q in proptest::collection::vec(0.0..1.0f64, 2..10),
            alpha in 0.0..=1.0f64,
        ) {
            let n = raw_pi.len().min(raw_q.len());
            let norm = |v: &[f64]| {
                let s: f64 = v[..n].iter().sum::<f64>().max(1e-12);
                v[..n].iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let p = DiscreteDistPair { pi_row: norm(&raw_pi), q_row: norm(&raw_q) };
            let a = MixtureWeight::new(alpha).unwrap();
            let total: f64 = mixture(&p, a).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
    }
}
