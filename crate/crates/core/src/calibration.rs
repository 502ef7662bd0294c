//! Neyman-Pearson threshold selection.
//!
//! Given `n0` certainty scores from wrongly-answered calibration questions,
//! sorted as `T(1) <= ... <= T(n0)` with `T(n0+1) = +inf`, the threshold is
//! `T(k)` for the smallest `k` whose binomial tail
//!
//! ```text
//! v(k) = sum_{j=k}^{n0} C(n0, j) (1 - alpha)^j alpha^(n0 - j)
//! ```
//!
//! is at most `delta`. A question is answered only when its score is strictly
//! above the threshold. With probability at least `1 - delta` over the
//! calibration draw, the probability of answering a question the model gets
//! wrong is at most `alpha`.
//!
//! `v(k)` also equals the regularized incomplete beta `I_{1-alpha}(k, n0-k+1)`;
//! that identity is used only as a cross-check in tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::Counts;
use crate::scores::ScoreFunction;
use crate::TOOL_VERSION;

pub const DEFAULT_DELTA: f64 = 0.05;

fn check_unit_open(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {value}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInput {
    /// Scores of the uncertain (`y = 0`) calibration records.
    pub scores: Vec<f64>,
    pub alpha: f64,
    pub delta: f64,
}

impl CalibrationInput {
    pub fn new(scores: Vec<f64>, alpha: f64, delta: f64) -> Result<Self> {
        let input = CalibrationInput {
            scores,
            alpha,
            delta,
        };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_open("alpha", self.alpha)?;
        check_unit_open("delta", self.delta)?;
        if let Some(i) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!(
                "calibration score {i} is not finite ({})",
                self.scores[i]
            )));
        }
        Ok(())
    }
}

/// The calibrated predictor: answer iff `eta > tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertaintyPredictor {
    pub alpha: f64,
    pub delta: f64,
    /// Number of calibration scores the threshold was chosen from.
    pub n0: usize,
    /// 1-based order-statistic index; `n0 + 1` means abstain on everything.
    pub k_hat: usize,
    pub tau: f64,
    pub function: ScoreFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Certain,
    Uncertain,
}

impl Decision {
    pub fn is_certain(self) -> bool {
        self == Decision::Certain
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum TauField {
    Finite(f64),
    Text(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictorDoc {
    alpha: f64,
    delta: f64,
    n0: usize,
    k_hat: usize,
    tau: TauField,
    function_id: ScoreFunction,
    tool_version: String,
}

impl CertaintyPredictor {
    pub fn abstains_always(&self) -> bool {
        self.tau == f64::INFINITY
    }

    /// Checks the structural invariants, including that `k_hat` is the
    /// smallest index with `v(k_hat) <= delta`.
    pub fn validate(&self) -> Result<()> {
        check_unit_open("alpha", self.alpha)?;
        check_unit_open("delta", self.delta)?;
        if self.k_hat == 0 || self.k_hat > self.n0 + 1 {
            return Err(Error::invalid(format!(
                "k_hat {} outside [1, {}]",
                self.k_hat,
                self.n0 + 1
            )));
        }
        if self.tau.is_nan() || self.tau == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("tau is {}", self.tau)));
        }
        if (self.k_hat == self.n0 + 1) != (self.tau == f64::INFINITY) {
            return Err(Error::invalid(
                "tau must be +inf exactly when k_hat = n0 + 1",
            ));
        }
        let expected = select_k_hat(self.n0, self.alpha, self.delta)?;
        if expected != self.k_hat {
            return Err(Error::invalid(format!(
                "k_hat {} inconsistent with (n0={}, alpha={}, delta={}); expected {expected}",
                self.k_hat, self.n0, self.alpha, self.delta
            )));
        }
        Ok(())
    }

    /// Flat JSON document; `tau` is a number or the string `"inf"`.
    pub fn to_json(&self) -> String {
        let doc = PredictorDoc {
            alpha: self.alpha,
            delta: self.delta,
            n0: self.n0,
            k_hat: self.k_hat,
            tau: if self.tau.is_finite() {
                TauField::Finite(self.tau)
            } else {
                TauField::Text("inf".into())
            },
            function_id: self.function,
            tool_version: TOOL_VERSION.to_string(),
        };
        serde_json::to_string_pretty(&doc).expect("predictor serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PredictorDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let tau = match doc.tau {
            TauField::Finite(v) => v,
            TauField::Text(s) if s == "inf" => f64::INFINITY,
            TauField::Text(s) => {
                return Err(Error::invalid(format!("tau must be a number or \"inf\", got {s:?}")))
            }
        };
        let predictor = CertaintyPredictor {
            alpha: doc.alpha,
            delta: doc.delta,
            n0: doc.n0,
            k_hat: doc.k_hat,
            tau,
            function: doc.function_id,
        };
        predictor.validate()?;
        Ok(predictor)
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ln` of the Binomial(n0, 1 - alpha) point masses, index `j = 0..=n0`,
/// built by the ratio recursion downward from `j = n0`.
fn log_binomial_terms(n0: usize, alpha: f64) -> Vec<f64> {
    let ln_alpha = alpha.ln();
    let ln_q = (-alpha).ln_1p();
    let step = ln_alpha - ln_q;
    let mut terms = vec![0.0; n0 + 1];
    terms[n0] = n0 as f64 * ln_q;
    for j in (1..=n0).rev() {
        // t_{j-1} / t_j = j / (n0 - j + 1) * alpha / (1 - alpha)
        terms[j - 1] = terms[j] + (j as f64 / (n0 - j + 1) as f64).ln() + step;
    }
    terms
}

/// Upper tail `v(k) = P(Binomial(n0, 1 - alpha) >= k)` for `k` in `[1, n0+1]`.
pub fn binomial_tail_v(k: usize, n0: usize, alpha: f64) -> Result<f64> {
    check_unit_open("alpha", alpha)?;
    if k == 0 || k > n0 + 1 {
        return Err(Error::invalid(format!("k = {k} outside [1, {}]", n0 + 1)));
    }
    if k == n0 + 1 {
        return Ok(0.0);
    }
    if k == 1 {
        // 1 - alpha^n0
        return Ok(-(n0 as f64 * alpha.ln()).exp_m1());
    }
    let terms = log_binomial_terms(n0, alpha);
    let tail = &terms[k..];
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled = compensated_sum(tail.iter().map(|t| (t - max).exp()));
    Ok((max.exp() * scaled).clamp(0.0, 1.0))
}

/// Smallest `k` in `[1, n0+1]` with `v(k) <= delta`.
pub fn select_k_hat(n0: usize, alpha: f64, delta: f64) -> Result<usize> {
    check_unit_open("alpha", alpha)?;
    check_unit_open("delta", delta)?;
    // Invariant: v(lo) > delta (lo = 0 is a virtual sentinel), v(hi) <= delta.
    let (mut lo, mut hi) = (0usize, n0 + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if binomial_tail_v(mid, n0, alpha)? <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Chooses the threshold from the calibration scores.
pub fn calibrate(input: &CalibrationInput, function: ScoreFunction) -> Result<CertaintyPredictor> {
    input.validate()?;
    let n0 = input.scores.len();
    let k_hat = select_k_hat(n0, input.alpha, input.delta)?;
    let tau = if k_hat <= n0 {
        let mut sorted = input.scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted[k_hat - 1]
    } else {
        f64::INFINITY
    };
    Ok(CertaintyPredictor {
        alpha: input.alpha,
        delta: input.delta,
        n0,
        k_hat,
        tau,
        function,
    })
}

/// Answer iff `eta > tau`; ties abstain.
pub fn predict(predictor: &CertaintyPredictor, eta: f64) -> Result<Decision> {
    if !eta.is_finite() {
        return Err(Error::invalid(format!("certainty score is not finite ({eta})")));
    }
    Ok(if eta > predictor.tau {
        Decision::Certain
    } else {
        Decision::Uncertain
    })
}

/// Metrics at one candidate threshold of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    /// Fraction of answered items with `y = 1`; `None` when nothing is answered.
    pub accuracy: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub answer_rate: f64,
}

/// Evaluates every threshold at or above the calibrated one: `tau_hat` itself
/// and each distinct score value above it. Raising the threshold never costs
/// Type I error control, so any of these can be used to trade answer rate for
/// accuracy.
pub fn threshold_sweep(
    predictor: &CertaintyPredictor,
    labeled_scores: &[(f64, bool)],
) -> Result<Vec<SweepPoint>> {
    if labeled_scores.is_empty() {
        return Err(Error::invalid("threshold sweep needs at least one labeled score"));
    }
    if let Some(&(eta, _)) = labeled_scores.iter().find(|(eta, _)| !eta.is_finite()) {
        return Err(Error::invalid(format!("certainty score is not finite ({eta})")));
    }
    let mut pos: Vec<f64> = labeled_scores.iter().filter(|p| p.1).map(|p| p.0).collect();
    let mut neg: Vec<f64> = labeled_scores.iter().filter(|p| !p.1).map(|p| p.0).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);

    let mut candidates: Vec<f64> = labeled_scores
        .iter()
        .map(|p| p.0)
        .filter(|&eta| eta > predictor.tau)
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.insert(0, predictor.tau);

    let above = |sorted: &[f64], t: f64| sorted.len() - sorted.partition_point(|&v| v <= t);
    let points: Vec<SweepPoint> = candidates
        .into_iter()
        .map(|tau| {
            let tp = above(&pos, tau);
            let fp = above(&neg, tau);
            let counts = Counts {
                total: labeled_scores.len(),
                positives: pos.len(),
                negatives: neg.len(),
                answered: tp + fp,
                answered_correct: tp,
                answered_negative: fp,
                unanswered_positive: pos.len() - tp,
            };
            SweepPoint {
                tau,
                accuracy: counts.accuracy(),
                fpr: counts.fpr(),
                fnr: counts.fnr(),
                answer_rate: counts.answer_rate(),
            }
        })
        .collect();
    debug_assert!(points.windows(2).all(|w| {
        w[1].fpr.zip(w[0].fpr).is_none_or(|(b, a)| b <= a)
            && w[1].fnr.zip(w[0].fnr).is_none_or(|(b, a)| b >= a)
    }));
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::oracle_v_exact;
    use approx::assert_abs_diff_eq;
    use num_rational::BigRational;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact(k: usize, n0: usize, num: i64, den: i64) -> f64 {
        let alpha = BigRational::new(num.into(), den.into());
        oracle_v_exact(k, n0, &alpha).unwrap().to_f64().unwrap()
    }

    #[test]
    fn v_boundary_values() {
        assert_eq!(binomial_tail_v(11, 10, 0.05).unwrap(), 0.0);
        for n0 in [1usize, 5, 30, 400] {
            let expected = 1.0 - 0.05f64.powi(n0 as i32);
            assert_abs_diff_eq!(binomial_tail_v(1, n0, 0.05).unwrap(), expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn v_two_samples_half() {
        // Exact: C(2,2) (1/2)^2 = 1/4.
        assert_eq!(exact(2, 2, 1, 2), 0.25);
        assert_abs_diff_eq!(binomial_tail_v(2, 2, 0.5).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn v_out_of_range() {
        assert!(binomial_tail_v(0, 5, 0.1).is_err());
        assert!(binomial_tail_v(7, 5, 0.1).is_err());
        assert!(binomial_tail_v(1, 5, 1.0).is_err());
    }

    #[test]
    fn v_matches_regularized_incomplete_beta() {
        for &n0 in &[10usize, 57, 200, 1000] {
            for &alpha in &[0.02, 0.05, 0.1, 0.3] {
                for k in (1..=n0).step_by((n0 / 17).max(1)) {
                    let ours = binomial_tail_v(k, n0, alpha).unwrap();
                    let beta = statrs::function::beta::beta_reg(k as f64, (n0 - k + 1) as f64, 1.0 - alpha);
                    assert_abs_diff_eq!(ours, beta, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn k_hat_examples() {
        // v(10) = 0.95^10 > 0.05, so every finite index is rejected.
        assert!(exact(10, 10, 1, 20) > 0.05);
        assert_eq!(select_k_hat(10, 0.05, 0.05).unwrap(), 11);

        // Exact scan over k = 95..=101 for n0 = 100.
        let scan: Vec<f64> = (95..=101).map(|k| exact(k, 100, 1, 20)).collect();
        let first = (95..=101).zip(&scan).find(|(_, &v)| v <= 0.05).unwrap().0;
        assert_eq!(first, 99);
        assert_eq!(select_k_hat(100, 0.05, 0.05).unwrap(), 99);

        // delta at or above v(1) accepts the first index.
        // v(1) = 1 - (1/2)^2 = 3/4 for n0 = 2, alpha = 1/2.
        assert_eq!(exact(1, 2, 1, 2), 0.75);
        assert_eq!(select_k_hat(2, 0.5, 0.75).unwrap(), 1);
        assert_eq!(select_k_hat(2, 0.5, 0.8).unwrap(), 1);
        assert_eq!(select_k_hat(2, 0.5, 0.7).unwrap(), 2);
        assert_eq!(select_k_hat(0, 0.05, 0.05).unwrap(), 1);
    }

    #[test]
    fn calibrate_small_n0_abstains() {
        let input = CalibrationInput::new((0..10).map(|i| i as f64).collect(), 0.05, 0.05).unwrap();
        let p = calibrate(&input, ScoreFunction::Ve).unwrap();
        assert_eq!(p.k_hat, 11);
        assert_eq!(p.tau, f64::INFINITY);
        assert!(p.abstains_always());
        assert_eq!(predict(&p, 1e300).unwrap(), Decision::Uncertain);
    }

    #[test]
    fn calibrate_empty_abstains() {
        let p = calibrate(&CalibrationInput::new(vec![], 0.1, 0.1).unwrap(), ScoreFunction::Se).unwrap();
        assert_eq!((p.n0, p.k_hat, p.tau), (0, 1, f64::INFINITY));
        p.validate().unwrap();
    }

    #[test]
    fn calibrate_uniform_sample_picks_order_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let scores: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let input = CalibrationInput::new(scores.clone(), 0.1, 0.1).unwrap();
        let p = calibrate(&input, ScoreFunction::Ve).unwrap();

        // Exact oracle for k_hat: first k with v(k) <= 1/10.
        let alpha = BigRational::new(1.into(), 10.into());
        let delta = BigRational::new(1.into(), 10.into());
        let k_oracle = (1..=201)
            .find(|&k| oracle_v_exact(k, 200, &alpha).unwrap() <= delta)
            .unwrap();
        assert_eq!(p.k_hat, k_oracle);
        let mut sorted = scores;
        sorted.sort_by(f64::total_cmp);
        assert_eq!(p.tau, sorted[k_oracle - 1]);
        p.validate().unwrap();
    }

    #[test]
    fn calibrate_rejects_non_finite() {
        assert!(CalibrationInput::new(vec![0.1, f64::NAN], 0.1, 0.1).is_err());
        let bad = CalibrationInput {
            scores: vec![f64::INFINITY],
            alpha: 0.1,
            delta: 0.1,
        };
        assert!(calibrate(&bad, ScoreFunction::Ve).is_err());
        assert!(CalibrationInput::new(vec![], 0.0, 0.1).is_err());
        assert!(CalibrationInput::new(vec![], 0.1, 1.0).is_err());
    }

    #[test]
    fn predict_strict_inequality() {
        let p = CertaintyPredictor {
            alpha: 0.1,
            delta: 0.1,
            n0: 0,
            k_hat: 1,
            tau: 0.3,
            function: ScoreFunction::Ve,
        };
        assert_eq!(predict(&p, 0.5).unwrap(), Decision::Certain);
        assert_eq!(predict(&p, 0.3).unwrap(), Decision::Uncertain);
        assert!(predict(&p, f64::NAN).is_err());
        assert!(predict(&p, f64::INFINITY).is_err());
    }

    #[test]
    fn predictor_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..300).map(|_| -rng.random::<f64>() * 3.0).collect();
        let p = calibrate(&CalibrationInput::new(scores, 0.1, 0.05).unwrap(), ScoreFunction::Kle).unwrap();
        let back = CertaintyPredictor::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.tau.to_bits(), p.tau.to_bits());

        let inf = calibrate(&CalibrationInput::new(vec![0.0; 3], 0.05, 0.05).unwrap(), ScoreFunction::Ve).unwrap();
        let text = inf.to_json();
        assert!(text.contains("\"tau\": \"inf\""), "{text}");
        assert!(text.contains("tool_version"));
        assert_eq!(CertaintyPredictor::from_json(&text).unwrap(), inf);
    }

    #[test]
    fn predictor_json_rejects_inconsistent_k_hat() {
        let doc = r#"{"alpha":0.05,"delta":0.05,"n0":10,"k_hat":3,"tau":0.5,"function_id":"ve","tool_version":"x"}"#;
        assert!(CertaintyPredictor::from_json(doc).is_err());
        let doc = r#"{"alpha":0.05,"delta":0.05,"n0":10,"k_hat":11,"tau":"nope","function_id":"ve","tool_version":"x"}"#;
        assert!(CertaintyPredictor::from_json(doc).is_err());
    }

    fn brute_sweep(tau: f64, data: &[(f64, bool)]) -> SweepPoint {
        let answered: Vec<&(f64, bool)> = data.iter().filter(|p| p.0 > tau).collect();
        let pos = data.iter().filter(|p| p.1).count();
        let neg = data.len() - pos;
        let tp = answered.iter().filter(|p| p.1).count();
        let fp = answered.len() - tp;
        SweepPoint {
            tau,
            accuracy: (!answered.is_empty()).then(|| tp as f64 / answered.len() as f64),
            fpr: (neg > 0).then(|| fp as f64 / neg as f64),
            fnr: (pos > 0).then(|| (pos - tp) as f64 / pos as f64),
            answer_rate: answered.len() as f64 / data.len() as f64,
        }
    }

    fn finite_predictor(tau: f64) -> CertaintyPredictor {
        CertaintyPredictor {
            alpha: 0.1,
            delta: 0.1,
            n0: 0,
            k_hat: 1,
            tau,
            function: ScoreFunction::Ve,
        }
    }

    #[test]
    fn sweep_all_positive() {
        let data: Vec<(f64, bool)> = (1..=5).map(|i| (i as f64, true)).collect();
        let sweep = threshold_sweep(&finite_predictor(0.0), &data).unwrap();
        assert_eq!(sweep[0].accuracy, Some(1.0));
        assert_eq!(sweep[0].fnr, Some(0.0));
        assert!(sweep.windows(2).all(|w| w[1].fnr.unwrap() > w[0].fnr.unwrap()));
        assert_eq!(sweep.last().unwrap().fnr, Some(1.0));
    }

    #[test]
    fn sweep_separable_reaches_perfect_accuracy() {
        let data = vec![(0.1, false), (0.2, false), (0.5, true), (0.7, true), (0.3, false)];
        let sweep = threshold_sweep(&finite_predictor(0.0), &data).unwrap();
        assert!(sweep.iter().any(|p| p.accuracy == Some(1.0) && p.fnr == Some(0.0)));
    }

    #[test]
    fn sweep_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let data: Vec<(f64, bool)> = (0..200)
            .map(|_| {
                let y = rng.random_bool(0.4);
                let eta = (rng.random::<f64>() + if y { 0.3 } else { 0.0 }) * 10.0;
                (eta.round() / 10.0, y)
            })
            .collect();
        let tau = 0.35;
        let sweep = threshold_sweep(&finite_predictor(tau), &data).unwrap();
        let mut expected_taus: Vec<f64> = data.iter().map(|p| p.0).filter(|&e| e > tau).collect();
        expected_taus.sort_by(f64::total_cmp);
        expected_taus.dedup();
        assert_eq!(sweep.len(), expected_taus.len() + 1);
        for point in &sweep {
            assert_eq!(*point, brute_sweep(point.tau, &data));
        }
        assert!(sweep.windows(2).all(|w| w[1].fpr <= w[0].fpr && w[1].fnr >= w[0].fnr));
    }

    #[test]
    fn sweep_empty_is_error() {
        assert!(threshold_sweep(&finite_predictor(0.0), &[]).is_err());
    }

    proptest! {
        #[test]
        fn v_non_increasing_in_k(n0 in 1usize..300, alpha in 0.01f64..0.5) {
            let mut prev = 1.0;
            for k in 1..=n0 + 1 {
                let v = binomial_tail_v(k, n0, alpha).unwrap();
                prop_assert!(v <= prev + 1e-15);
                prev = v;
            }
        }

        #[test]
        fn k_hat_satisfies_minimality(n0 in 0usize..400, alpha in 0.01f64..0.5, delta in 0.01f64..0.5) {
            let k = select_k_hat(n0, alpha, delta).unwrap();
            prop_assert!(binomial_tail_v(k, n0, alpha).unwrap() <= delta);
            if k > 1 {
                prop_assert!(binomial_tail_v(k - 1, n0, alpha).unwrap() > delta);
            }
        }

        #[test]
        fn k_hat_non_increasing_in_delta(n0 in 0usize..300, alpha in 0.01f64..0.5, d1 in 0.01f64..0.5, d2 in 0.01f64..0.5) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(select_k_hat(n0, alpha, hi).unwrap() <= select_k_hat(n0, alpha, lo).unwrap());
        }

        #[test]
        fn calibrate_order_independent(
            scores in proptest::collection::vec(-5.0f64..5.0, 0..80),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let a = calibrate(&CalibrationInput::new(scores.clone(), 0.1, 0.1).unwrap(), ScoreFunction::Ve).unwrap();
            let mut shuffled = scores;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = calibrate(&CalibrationInput::new(shuffled, 0.1, 0.1).unwrap(), ScoreFunction::Ve).unwrap();
            prop_assert_eq!(a, b);
            a.validate().unwrap();
        }

        #[test]
        fn monotone_transform_invariance(
            scores in proptest::collection::vec(-3.0f64..3.0, 0..120),
            queries in proptest::collection::vec(-3.5f64..3.5, 1..40),
        ) {
            let h = |x: f64| x.exp() * 2.0 + 1.0;
            let base = calibrate(&CalibrationInput::new(scores.clone(), 0.1, 0.1).unwrap(), ScoreFunction::Ve).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|&s| h(s)).collect();
            let other = calibrate(&CalibrationInput::new(mapped, 0.1, 0.1).unwrap(), ScoreFunction::Ve).unwrap();
            prop_assert_eq!(base.k_hat, other.k_hat);
            if base.tau.is_finite() {
                prop_assert_eq!(other.tau, h(base.tau));
            } else {
                prop_assert!(other.tau.is_infinite());
            }
            for q in queries {
                prop_assert_eq!(predict(&base, q).unwrap(), predict(&other, h(q)).unwrap());
            }
        }
    }
}
