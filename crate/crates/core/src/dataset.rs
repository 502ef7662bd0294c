//! Record ingestion, answer canonicalization, correctness labeling and the
//! certain / uncertain split.
//!
//! Records are stored one JSON object per line:
//!
//! ```text
//! {"id": "q1", "question": "...", "generated": "Paris",
//!  "answers": ["Paris", "paris", "Lyon"], "answer_logprobs": [-0.1, -0.3, -2.0],
//!  "clusters": [0, 0, 1], "kernel": [[...]], "reference": ["Paris"], "label": 1}
//! ```
//!
//! `answer_logprobs`, `clusters`, `kernel` and `label` are optional. Unknown
//! fields are ignored.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::AnswerSample;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// One question with its evaluated answer, the resampled answers used for
/// scoring, the acceptable references and an optional correctness label.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    /// The realization being judged (greedy decode in the usual setup).
    pub generated: String,
    /// The `k` resamples the certainty score is computed from.
    pub answers: Vec<AnswerSample>,
    /// Raw similarity kernel over the `k` answers, if provided.
    pub kernel: Option<Vec<Vec<f64>>>,
    pub reference: Vec<String>,
    /// `Some(true)` when the generated answer is known correct. Overrides the
    /// derived alignment.
    pub label: Option<bool>,
}

impl QuestionRecord {
    /// Correctness indicator `y`: the explicit label if present, otherwise
    /// derived by matching `generated` against `reference`.
    pub fn correctness(&self) -> Result<bool> {
        match self.label {
            Some(y) => Ok(y),
            None => label_correctness(&self.generated, &self.reference).map_err(|_| {
                Error::invalid(format!(
                    "record '{}' has no label and an empty reference list",
                    self.id
                ))
            }),
        }
    }

    pub fn answer_texts(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitResult {
    /// Ids with `y = 1`.
    pub certain: Vec<String>,
    /// Ids with `y = 0`; the calibration side.
    pub uncertain: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    #[serde(default)]
    question: String,
    #[serde(default)]
    generated: String,
    #[serde(default)]
    answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_logprobs: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clusters: Option<Vec<Option<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    reference: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
}

impl RecordLine {
    fn into_record(self) -> std::result::Result<QuestionRecord, String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        let k = self.answers.len();
        let logprobs = self.answer_logprobs.unwrap_or_else(|| vec![None; k]);
        let clusters = self.clusters.unwrap_or_else(|| vec![None; k]);
        if logprobs.len() != k {
            return Err(format!(
                "answer_logprobs has {} entries but answers has {k}",
                logprobs.len()
            ));
        }
        if clusters.len() != k {
            return Err(format!(
                "clusters has {} entries but answers has {k}",
                clusters.len()
            ));
        }
        let label = match self.label {
            None => None,
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(other) => return Err(format!("label must be 0 or 1, got {other}")),
        };
        let answers = self
            .answers
            .into_iter()
            .zip(logprobs)
            .zip(clusters)
            .map(|((text, log_prob), cluster_id)| AnswerSample {
                text,
                log_prob,
                cluster_id,
            })
            .collect();
        Ok(QuestionRecord {
            id: self.id,
            question: self.question,
            generated: self.generated,
            answers,
            kernel: self.kernel,
            reference: self.reference,
            label,
        })
    }

    fn from_record(record: &QuestionRecord) -> Self {
        let logprobs: Vec<Option<f64>> = record.answers.iter().map(|a| a.log_prob).collect();
        let clusters: Vec<Option<usize>> = record.answers.iter().map(|a| a.cluster_id).collect();
        RecordLine {
            id: record.id.clone(),
            question: record.question.clone(),
            generated: record.generated.clone(),
            answers: record.answers.iter().map(|a| a.text.clone()).collect(),
            answer_logprobs: logprobs.iter().any(Option::is_some).then_some(logprobs),
            clusters: clusters.iter().any(Option::is_some).then_some(clusters),
            kernel: record.kernel.clone(),
            reference: record.reference.clone(),
            label: record.label.map(u8::from),
        }
    }
}

/// Normalizes an answer string for exact-match comparison.
///
/// Lowercases, collapses whitespace, strips non-alphanumeric characters at
/// both ends and drops leading English articles. Idempotent.
pub fn canonicalize(text: &str) -> String {
    let mut current = text.to_lowercase();
    loop {
        let mut next = current
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_string();
        if let Some((first, rest)) = next.split_once(' ') {
            if ARTICLES.contains(&first) {
                next = rest.to_string();
            }
        }
        next = next.to_lowercase();
        if next == current {
            return current;
        }
        current = next;
    }
}

/// `y = 1` iff the canonical form of `generated` equals that of some reference.
pub fn label_correctness<S: AsRef<str>>(generated: &str, reference: &[S]) -> Result<bool> {
    if reference.is_empty() {
        return Err(Error::invalid("reference list is empty"));
    }
    let target = canonicalize(generated);
    Ok(reference.iter().any(|r| canonicalize(r.as_ref()) == target))
}

/// Partitions records by correctness, preserving input order on each side.
pub fn split_certain_uncertain(records: &[QuestionRecord]) -> Result<SplitResult> {
    let mut split = SplitResult::default();
    for record in records {
        if record.correctness()? {
            split.certain.push(record.id.clone());
        } else {
            split.uncertain.push(record.id.clone());
        }
    }
    Ok(split)
}

/// Parses line-delimited records. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn load_records<R: BufRead>(reader: R) -> Result<Vec<QuestionRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let record = raw.into_record().map_err(|message| Error::Parse {
            line: line_no,
            message,
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::invalid(format!(
                "line {line_no}: duplicate id '{}'",
                record.id
            )));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_records_path(path: &Path) -> Result<Vec<QuestionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_records(std::io::BufReader::new(file))
}

/// Serializes records in the line-delimited format read by [`load_records`].
pub fn records_to_string(records: &[QuestionRecord]) -> String {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(&RecordLine::from_record(record))
            .expect("record serialization cannot fail");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Reads a whitespace/comma separated numeric file into rows. Blank lines and
/// lines starting with `#` are skipped.
pub fn load_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("'{t}': {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
