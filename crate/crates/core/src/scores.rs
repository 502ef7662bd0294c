//! Certainty scores computed from a model's resampled answers.
//!
//! Every score is the negation of an entropy (natural log), so larger means
//! more certain and the maximum value is `0`.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{canonicalize, QuestionRecord};
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;
const RAW_SYMMETRY_TOL: f64 = 1e-6;
const PSD_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-9;
/// Eigenvalues below this contribute nothing to the von Neumann entropy.
const EIGEN_FLOOR: f64 = 1e-12;

/// One resampled answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSample {
    pub text: String,
    /// Natural-log sequence probability, `<= 0`.
    pub log_prob: Option<f64>,
    /// Meaning-equivalence class index.
    pub cluster_id: Option<usize>,
}

impl AnswerSample {
    pub fn new(text: impl Into<String>) -> Self {
        AnswerSample {
            text: text.into(),
            log_prob: None,
            cluster_id: None,
        }
    }

    pub fn with_cluster(mut self, cluster_id: usize) -> Self {
        self.cluster_id = Some(cluster_id);
        self
    }

    pub fn with_log_prob(mut self, log_prob: f64) -> Self {
        self.log_prob = Some(log_prob);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFunction {
    /// Entropy of the empirical answer-frequency distribution.
    Ve,
    /// Entropy over semantic clusters.
    Se,
    /// Von Neumann entropy of a semantic kernel.
    Kle,
}

impl ScoreFunction {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreFunction::Ve => "ve",
            ScoreFunction::Se => "se",
            ScoreFunction::Kle => "kle",
        }
    }
}

impl fmt::Display for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ve" => Ok(ScoreFunction::Ve),
            "se" => Ok(ScoreFunction::Se),
            "kle" => Ok(ScoreFunction::Kle),
            other => Err(Error::invalid(format!(
                "unknown score function '{other}' (expected ve, se or kle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertaintyScore {
    /// Negated entropy; always `<= 0`.
    pub value: f64,
    pub function: ScoreFunction,
    pub k_samples: usize,
}

/// Symmetric PSD matrix with unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticKernel {
    matrix: DMatrix<f64>,
}

impl SemanticKernel {
    /// Validates an already-normalized kernel.
    pub fn new(entries: &[Vec<f64>]) -> Result<Self> {
        let matrix = square_matrix(entries)?;
        let dim = matrix.nrows();
        for i in 0..dim {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::invalid(format!("kernel not symmetric at ({i}, {j})")));
                }
            }
        }
        if (matrix.trace() - 1.0).abs() > TRACE_TOL {
            return Err(Error::invalid(format!(
                "kernel trace is {} (expected 1)",
                matrix.trace()
            )));
        }
        let min_eig = SymmetricEigen::new(matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(Error::invalid(format!(
                "kernel has negative eigenvalue {min_eig}"
            )));
        }
        Ok(SemanticKernel { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// `-Tr[K ln K]` from the eigenvalues, with `0 ln 0 = 0`.
    pub fn von_neumann_entropy(&self) -> Result<f64> {
        let eig = SymmetricEigen::try_new(self.matrix.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::Numeric("eigendecomposition did not converge".into()))?;
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite eigenvalue".into()));
        }
        let mut terms: Vec<f64> = eig
            .eigenvalues
            .iter()
            .filter(|&&lambda| lambda > EIGEN_FLOOR)
            .map(|&lambda| lambda * lambda.ln())
            .collect();
        terms.sort_by(f64::total_cmp);
        Ok(non_negative_entropy(-terms.iter().sum::<f64>()))
    }
}

fn square_matrix(entries: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let dim = entries.len();
    if dim == 0 {
        return Err(Error::invalid("kernel is empty"));
    }
    if let Some(row) = entries.iter().position(|r| r.len() != dim) {
        return Err(Error::invalid(format!(
            "kernel is not square: row {row} has {} entries, expected {dim}",
            entries[row].len()
        )));
    }
    if entries.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("kernel has non-finite entries".into()));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| entries[i][j]))
}

/// Entropies are non-negative; summation noise can produce `-0.0` or a few
/// ulps below zero.
fn non_negative_entropy(h: f64) -> f64 {
    if h <= 0.0 {
        0.0
    } else {
        h
    }
}

/// `-sum p ln p` with `p = count / total`. Terms are summed in ascending
/// count order so the result depends only on the multiset of counts.
fn entropy_from_counts(mut counts: Vec<usize>, total: usize) -> f64 {
    counts.sort_unstable();
    let total = total as f64;
    let sum: f64 = counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum();
    non_negative_entropy(-sum)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    sorted.sort_by(f64::total_cmp);
    max + sorted.iter().sum::<f64>().ln()
}

/// Vanilla entropy over the canonicalized answer frequencies.
pub fn vanilla_entropy<S: AsRef<str>>(answers: &[S]) -> Result<CertaintyScore> {
    if answers.is_empty() {
        return Err(Error::invalid("vanilla entropy needs at least one answer"));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for a in answers {
        *counts.entry(canonicalize(a.as_ref())).or_default() += 1;
    }
    let h = entropy_from_counts(counts.into_values().collect(), answers.len());
    Ok(CertaintyScore {
        value: -h,
        function: ScoreFunction::Ve,
        k_samples: answers.len(),
    })
}

/// Semantic entropy over precomputed clusters.
///
/// Cluster masses come from summing `exp(log_prob)` within each cluster and
/// renormalizing across the sampled answers; without log-probabilities the
/// mass is the cluster frequency. The entropy is the Monte Carlo average of
/// `-ln p(C)` over the `k` samples, each sample contributing the mass of its
/// own cluster. In frequency mode this is the plug-in entropy of the cluster
/// distribution, which coincides exactly with [`vanilla_entropy`] when
/// clusters are the distinct answers.
pub fn semantic_entropy(samples: &[AnswerSample]) -> Result<CertaintyScore> {
    if samples.is_empty() {
        return Err(Error::invalid("semantic entropy needs at least one answer"));
    }
    let k = samples.len();
    let mut clusters: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let c = s
            .cluster_id
            .ok_or_else(|| Error::invalid(format!("clusters required (sample {i} has none)")))?;
        if let Some(lp) = s.log_prob {
            if lp.is_nan() || lp > 0.0 {
                return Err(Error::invalid(format!(
                    "log_prob of sample {i} is {lp}, must be <= 0"
                )));
            }
        }
        clusters.entry(c).or_default().push(s.log_prob);
    }

    let with_lp = samples.iter().filter(|s| s.log_prob.is_some()).count();
    let h = if with_lp == 0 {
        entropy_from_counts(clusters.values().map(Vec::len).collect(), k)
    } else if with_lp == k {
        if clusters.len() == 1 {
            0.0
        } else {
            let cluster_lse: Vec<(usize, f64)> = clusters
                .iter()
                .map(|(&id, lps)| {
                    let lps: Vec<f64> = lps.iter().map(|v| v.unwrap()).collect();
                    (id, log_sum_exp(&lps))
                })
                .collect();
            let all: Vec<f64> = cluster_lse.iter().map(|&(_, l)| l).collect();
            let total = log_sum_exp(&all);
            if total == f64::NEG_INFINITY {
                return Err(Error::invalid("all clusters have zero probability mass"));
            }
            let mut terms = Vec::with_capacity(cluster_lse.len());
            for (id, lse) in cluster_lse {
                if lse == f64::NEG_INFINITY {
                    return Err(Error::invalid(format!("cluster {id} has zero probability mass")));
                }
                let weight = clusters[&id].len() as f64 / k as f64;
                terms.push(weight * (lse - total).min(0.0));
            }
            terms.sort_by(f64::total_cmp);
            non_negative_entropy(-terms.iter().sum::<f64>())
        }
    } else {
        return Err(Error::invalid(
            "log_prob must be present on all samples or on none",
        ));
    };
    Ok(CertaintyScore {
        value: -h,
        function: ScoreFunction::Se,
        k_samples: k,
    })
}

/// Clusters answers by canonicalized exact match. A fallback for records that
/// arrive without semantic cluster ids.
pub fn exact_match_clusters<S: AsRef<str>>(answers: &[S]) -> Vec<usize> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    answers
        .iter()
        .map(|a| {
            let next = ids.len();
            *ids.entry(canonicalize(a.as_ref())).or_insert(next)
        })
        .collect()
}

/// Turns a raw symmetric similarity matrix into a valid [`SemanticKernel`]:
/// symmetrize, clip negative eigenvalues to zero, rescale to unit trace.
pub fn normalize_kernel(raw: &[Vec<f64>]) -> Result<SemanticKernel> {
    let m = square_matrix(raw)?;
    let dim = m.nrows();
    for i in 0..dim {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > RAW_SYMMETRY_TOL {
                return Err(Error::invalid(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    if m.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("matrix is all zeros"));
    }
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("eigendecomposition did not converge".into()))?;
    let psd = if eig.eigenvalues.iter().any(|&v| v < 0.0) {
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let mut rebuilt = &eig.eigenvectors
            * DMatrix::from_diagonal(&clipped)
            * eig.eigenvectors.transpose();
        // Reconstruction noise can break exact symmetry.
        rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
        rebuilt
    } else {
        sym
    };
    let trace = psd.trace();
    if trace <= 0.0 || !trace.is_finite() {
        return Err(Error::invalid(format!(
            "matrix has non-positive trace {trace} after PSD projection"
        )));
    }
    Ok(SemanticKernel {
        matrix: psd / trace,
    })
}

/// Kernel language entropy: `eta = -VNE(K)`.
pub fn kernel_language_entropy(kernel: &SemanticKernel) -> Result<CertaintyScore> {
    Ok(CertaintyScore {
        value: -kernel.von_neumann_entropy()?,
        function: ScoreFunction::Kle,
        k_samples: kernel.dim(),
    })
}

/// Dispatches to the score function named by `function`.
pub fn score_record(record: &QuestionRecord, function: ScoreFunction) -> Result<CertaintyScore> {
    let missing = |field: &str| {
        Error::invalid(format!("{field} required for record '{}'", record.id))
    };
    match function {
        ScoreFunction::Ve => {
            if record.answers.is_empty() {
                return Err(missing("answers"));
            }
            vanilla_entropy(&record.answer_texts())
        }
        ScoreFunction::Se => {
            if record.answers.is_empty() || record.answers.iter().any(|a| a.cluster_id.is_none()) {
                return Err(missing("clusters"));
            }
            semantic_entropy(&record.answers)
        }
        ScoreFunction::Kle => {
            let raw = record.kernel.as_ref().ok_or_else(|| missing("kernel"))?;
            kernel_language_entropy(&normalize_kernel(raw)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(values: &[f64]) -> Vec<Vec<f64>> {
        let n = values.len();
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { values[i] } else { 0.0 }).collect())
            .collect()
    }

    fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
        m.qr().q()
    }

    /// Matrix logarithm by eigendecomposition of a strictly positive definite
    /// matrix; independent from the spectral entropy sum.
    fn dense_vne(m: &DMatrix<f64>) -> f64 {
        let eig = SymmetricEigen::new(m.clone());
        let log = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::ln))
            * eig.eigenvectors.transpose();
        -(m * log).trace()
    }

    #[test]
    fn ve_identical_answers_is_zero() {
        let s = vanilla_entropy(&["Paris", "Paris", "Paris"]).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.k_samples, 3);
    }

    #[test]
    fn ve_three_two_split() {
        // Exact-fraction evaluation: p = 3/5, 2/5.
        let expected = -(0.6f64 * (3.0f64 / 5.0).ln() + 0.4 * (2.0f64 / 5.0).ln());
        let s = vanilla_entropy(&["a", "a", "a", "b", "b"]).unwrap();
        assert_abs_diff_eq!(s.value, -expected, epsilon = 1e-12);
        assert_abs_diff_eq!(s.value, -0.67301, epsilon = 1e-5);
    }

    #[test]
    fn ve_distinct_answers_is_log_k() {
        for k in 1..12 {
            let answers: Vec<String> = (0..k).map(|i| format!("answer {i}")).collect();
            let s = vanilla_entropy(&answers).unwrap();
            assert_abs_diff_eq!(s.value, -(k as f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn ve_uses_canonical_equality() {
        let s = vanilla_entropy(&["Paris.", "paris", " The Paris "]).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn ve_empty_is_error() {
        assert!(vanilla_entropy::<&str>(&[]).is_err());
    }

    #[test]
    fn se_single_cluster_is_zero() {
        let samples: Vec<_> = [-0.2, -1.5, -3.0]
            .iter()
            .map(|&lp| AnswerSample::new("x").with_cluster(4).with_log_prob(lp))
            .collect();
        assert_eq!(semantic_entropy(&samples).unwrap().value, 0.0);
    }

    #[test]
    fn se_two_equal_clusters_is_ln2() {
        let lp = 0.25f64.ln();
        let samples = vec![
            AnswerSample::new("a").with_cluster(0).with_log_prob(lp),
            AnswerSample::new("b").with_cluster(1).with_log_prob(lp),
        ];
        let s = semantic_entropy(&samples).unwrap();
        assert_abs_diff_eq!(s.value, -std::f64::consts::LN_2, epsilon = 1e-12);

        let freq = vec![
            AnswerSample::new("a").with_cluster(0),
            AnswerSample::new("b").with_cluster(1),
        ];
        assert_abs_diff_eq!(
            semantic_entropy(&freq).unwrap().value,
            -std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn se_log_prob_mode_weights_by_sample() {
        // Cluster 0: two samples, mass 0.3 + 0.3; cluster 1: one sample, mass 0.2.
        // Renormalized masses 0.75 / 0.25; each sample contributes -ln of its cluster mass.
        let samples = vec![
            AnswerSample::new("a").with_cluster(0).with_log_prob(0.3f64.ln()),
            AnswerSample::new("a'").with_cluster(0).with_log_prob(0.3f64.ln()),
            AnswerSample::new("b").with_cluster(1).with_log_prob(0.2f64.ln()),
        ];
        let expected = -(2.0 * 0.75f64.ln() + 0.25f64.ln()) / 3.0;
        assert_abs_diff_eq!(semantic_entropy(&samples).unwrap().value, -expected, epsilon = 1e-12);
    }

    #[test]
    fn se_multiple_choice_matches_ve_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let choices = ["A", "B", "C"];
        for _ in 0..200 {
            let k = rng.random_range(1..16);
            let answers: Vec<&str> = (0..k).map(|_| choices[rng.random_range(0..3)]).collect();
            let clusters = exact_match_clusters(&answers);
            let samples: Vec<_> = answers
                .iter()
                .zip(&clusters)
                .map(|(a, &c)| AnswerSample::new(*a).with_cluster(c))
                .collect();
            let ve = vanilla_entropy(&answers).unwrap().value;
            let se = semantic_entropy(&samples).unwrap().value;
            assert_eq!(ve.to_bits(), se.to_bits(), "{answers:?}");
        }
    }

    #[test]
    fn se_errors() {
        let mixed = vec![
            AnswerSample::new("a").with_cluster(0).with_log_prob(-1.0),
            AnswerSample::new("b").with_cluster(1),
        ];
        assert!(semantic_entropy(&mixed).is_err());

        let zero_mass = vec![
            AnswerSample::new("a").with_cluster(0).with_log_prob(-1.0),
            AnswerSample::new("b").with_cluster(1).with_log_prob(f64::NEG_INFINITY),
        ];
        let err = semantic_entropy(&zero_mass).unwrap_err();
        assert!(err.to_string().contains("zero probability mass"));

        let positive = vec![AnswerSample::new("a").with_cluster(0).with_log_prob(0.5)];
        assert!(semantic_entropy(&positive).is_err());

        let unclustered = vec![AnswerSample::new("a")];
        assert!(semantic_entropy(&unclustered).is_err());
    }

    #[test]
    fn normalize_identity() {
        let k = normalize_kernel(&diag(&[1.0; 4])).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 0.25 } else { 0.0 };
                assert_abs_diff_eq!(k.matrix()[(i, j)], expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn normalize_clips_tiny_negative_eigenvalue() {
        let q = random_orthogonal(3, &mut ChaCha8Rng::seed_from_u64(3));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.6, 0.4, -1e-8]));
        let m = &q * d * q.transpose();
        let raw: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        let k = normalize_kernel(&raw).unwrap();
        SemanticKernel::new(&k.to_rows()).unwrap();
        let min = SymmetricEigen::new(k.matrix().clone())
            .eigenvalues
            .min();
        assert!(min >= -PSD_TOL);
        assert_abs_diff_eq!(k.matrix().trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_pure_rescale() {
        let raw = vec![
            vec![2.0, 0.5, 0.0],
            vec![0.5, 2.0, 0.5],
            vec![0.0, 0.5, 1.0],
        ];
        let k = normalize_kernel(&raw).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(k.matrix()[(i, j)], raw[i][j] / 5.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn normalize_errors() {
        assert!(normalize_kernel(&[vec![1.0, 0.0]]).is_err());
        assert!(normalize_kernel(&diag(&[0.0; 3])).is_err());
        assert!(normalize_kernel(&[vec![1.0, 0.5], vec![0.0, 1.0]]).is_err());
        assert!(matches!(
            normalize_kernel(&[vec![f64::NAN]]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn kernel_validation() {
        assert!(SemanticKernel::new(&diag(&[0.5, 0.5])).is_ok());
        assert!(SemanticKernel::new(&diag(&[0.5, 0.6])).is_err());
        assert!(SemanticKernel::new(&diag(&[1.5, -0.5])).is_err());
        assert!(SemanticKernel::new(&[vec![0.5, 0.1], vec![0.0, 0.5]]).is_err());
    }

    #[test]
    fn vne_maximally_mixed() {
        let k = SemanticKernel::new(&diag(&[0.125; 8])).unwrap();
        let s = kernel_language_entropy(&k).unwrap();
        assert_abs_diff_eq!(s.value, -(8.0f64).ln(), epsilon = 1e-10);
    }

    #[test]
    fn vne_pure_state() {
        let q = random_orthogonal(5, &mut ChaCha8Rng::seed_from_u64(11));
        let v = q.column(0);
        let proj = v * v.transpose();
        let rows: Vec<Vec<f64>> = proj.row_iter().map(|r| r.iter().copied().collect()).collect();
        let k = normalize_kernel(&rows).unwrap();
        assert_abs_diff_eq!(kernel_language_entropy(&k).unwrap().value, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn vne_diag_half_quarter_quarter() {
        let k = SemanticKernel::new(&diag(&[0.5, 0.25, 0.25])).unwrap();
        let hand = -(0.5 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        let oracle = dense_vne(k.matrix());
        let vne = k.von_neumann_entropy().unwrap();
        assert_abs_diff_eq!(vne, hand, epsilon = 1e-12);
        assert_abs_diff_eq!(vne, oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(vne, 1.03972, epsilon = 1e-5);
    }

    #[test]
    fn score_record_dispatch() {
        let mut record = QuestionRecord {
            id: "q".into(),
            question: String::new(),
            generated: "a".into(),
            answers: vec![AnswerSample::new("a"), AnswerSample::new("b")],
            kernel: None,
            reference: vec!["a".into()],
            label: None,
        };
        let ve = score_record(&record, ScoreFunction::Ve).unwrap();
        assert_eq!(ve, vanilla_entropy(&["a", "b"]).unwrap());

        let err = score_record(&record, ScoreFunction::Se).unwrap_err();
        assert!(err.to_string().contains("clusters required"));
        let err = score_record(&record, ScoreFunction::Kle).unwrap_err();
        assert!(err.to_string().contains("kernel required"));

        record.kernel = Some(diag(&[1.0, 1.0]));
        let kle = score_record(&record, ScoreFunction::Kle).unwrap();
        assert_abs_diff_eq!(kle.value, -std::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(kle.function, ScoreFunction::Kle);
    }

    fn random_kernel(dim: usize, seed: u64) -> SemanticKernel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(dim, dim + 2, |_, _| rng.random::<f64>() - 0.5);
        let gram = &a * a.transpose();
        let rows: Vec<Vec<f64>> = gram.row_iter().map(|r| r.iter().copied().collect()).collect();
        normalize_kernel(&rows).unwrap()
    }

    proptest! {
        #[test]
        fn ve_permutation_and_duplication_invariant(
            answers in proptest::collection::vec(0u8..5, 1..20),
            m in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let texts: Vec<String> = answers.iter().map(|a| format!("ans{a}")).collect();
            let base = vanilla_entropy(&texts).unwrap().value;
            prop_assert!(base <= 0.0);
            let mut shuffled = texts.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(vanilla_entropy(&shuffled).unwrap().value, base);
            let dup: Vec<String> = texts.iter().flat_map(|t| std::iter::repeat_n(t.clone(), m)).collect();
            prop_assert!((vanilla_entropy(&dup).unwrap().value - base).abs() < 1e-12);
        }

        #[test]
        fn se_permutation_invariant(
            raw in proptest::collection::vec((0usize..4, -6.0f64..0.0), 1..12),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let samples: Vec<_> = raw
                .iter()
                .map(|&(c, lp)| AnswerSample::new("x").with_cluster(c).with_log_prob(lp))
                .collect();
            let base = semantic_entropy(&samples).unwrap().value;
            prop_assert!(base <= 0.0);
            let distinct: std::collections::HashSet<_> = raw.iter().map(|r| r.0).collect();
            prop_assert_eq!(base == 0.0, distinct.len() == 1);
            let mut shuffled = samples.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(semantic_entropy(&shuffled).unwrap().value, base);
        }

        #[test]
        fn vne_bounded_and_conjugation_invariant(dim in 1usize..7, seed in any::<u64>()) {
            let k = random_kernel(dim, seed);
            let vne = k.von_neumann_entropy().unwrap();
            prop_assert!(vne >= 0.0);
            prop_assert!(vne <= (dim as f64).ln() + 1e-12);
            let q = random_orthogonal(dim, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
            let rotated = &q * k.matrix() * q.transpose();
            let rows: Vec<Vec<f64>> = rotated.row_iter().map(|r| r.iter().copied().collect()).collect();
            let rotated = normalize_kernel(&rows).unwrap();
            prop_assert!((rotated.von_neumann_entropy().unwrap() - vne).abs() < 1e-8);
        }
    }
}
