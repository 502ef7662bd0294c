//! Metrics for a calibrated predictor and plot-ready curve tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationInput, CertaintyPredictor};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Marker written for undefined (zero-denominator) cells in curve tables.
pub const UNDEFINED: &str = "undefined";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub eta: f64,
    /// Guarantee-bearing certainty label.
    pub y: bool,
    /// Whether the emitted answer is correct; usually equal to `y`.
    pub correct: bool,
}

impl LabeledScore {
    pub fn new(eta: f64, y: bool) -> Self {
        LabeledScore { eta, y, correct: y }
    }
}

/// Raw confusion counts shared by the report and the threshold sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct Counts {
    pub total: usize,
    pub positives: usize,
    pub negatives: usize,
    pub answered: usize,
    pub answered_correct: usize,
    pub answered_negative: usize,
    pub unanswered_positive: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Counts {
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.answered_correct, self.answered)
    }
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.answered_negative, self.negatives)
    }
    pub fn fnr(&self) -> Option<f64> {
        ratio(self.unanswered_positive, self.positives)
    }
    pub fn answer_rate(&self) -> f64 {
        ratio(self.answered, self.total).unwrap_or(0.0)
    }
}

/// Undefined metrics (zero denominators) are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_total: usize,
    pub n_answered: usize,
    /// Correct answers over answered questions.
    pub accuracy_answered: Option<f64>,
    /// Answered over `y = 0` items (Type I error).
    pub fpr: Option<f64>,
    /// Abstained over `y = 1` items (Type II error).
    pub fnr: Option<f64>,
    pub answer_rate: f64,
}

impl EvaluationReport {
    /// Flat JSON document; undefined metrics are rendered as `"undefined"`.
    pub fn to_json(&self) -> String {
        let field = |v: Option<f64>| match v {
            Some(x) => serde_json::json!(x),
            None => serde_json::json!(UNDEFINED),
        };
        let doc = serde_json::json!({
            "n_total": self.n_total,
            "n_answered": self.n_answered,
            "accuracy_answered": field(self.accuracy_answered),
            "fpr": field(self.fpr),
            "fnr": field(self.fnr),
            "answer_rate": self.answer_rate,
        });
        serde_json::to_string_pretty(&doc).expect("report serialization cannot fail")
    }
}

/// Applies the predictor to every labeled score and tallies the metrics.
pub fn evaluate(predictor: &CertaintyPredictor, labeled: &[LabeledScore]) -> Result<EvaluationReport> {
    if labeled.is_empty() {
        return Err(Error::invalid("evaluation needs at least one labeled record"));
    }
    let mut c = Counts {
        total: labeled.len(),
        ..Counts::default()
    };
    for item in labeled {
        if !item.eta.is_finite() {
            return Err(Error::invalid(format!("certainty score is not finite ({})", item.eta)));
        }
        let answered = item.eta > predictor.tau;
        if item.y {
            c.positives += 1;
            if !answered {
                c.unanswered_positive += 1;
            }
        } else {
            c.negatives += 1;
            if answered {
                c.answered_negative += 1;
            }
        }
        if answered {
            c.answered += 1;
            if item.correct {
                c.answered_correct += 1;
            }
        }
    }
    Ok(EvaluationReport {
        n_total: c.total,
        n_answered: c.answered,
        accuracy_answered: c.accuracy(),
        fpr: c.fpr(),
        fnr: c.fnr(),
        answer_rate: c.answer_rate(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub fpr: Option<f64>,
}

/// Calibrates on `cal_scores` at every `alpha` of the grid and measures the
/// empirical FPR on `test`.
pub fn fpr_alpha_curve(
    cal_scores: &[f64],
    test: &[LabeledScore],
    alphas: &[f64],
    delta: f64,
) -> Result<Vec<CurvePoint>> {
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("alpha grid must be strictly ascending"));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let input = CalibrationInput::new(cal_scores.to_vec(), alpha, delta)?;
            let predictor = calibrate(&input, crate::scores::ScoreFunction::Ve)?;
            let report = evaluate(&predictor, test)?;
            Ok(CurvePoint {
                alpha,
                fpr: report.fpr,
            })
        })
        .collect()
}

/// A delimited table: header row, one point per line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CurveTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        CurveTable {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn from_fpr_curve(points: &[CurvePoint]) -> Self {
        let mut table = CurveTable::new(["alpha", "fpr"]);
        for p in points {
            table.push(vec![Some(p.alpha), p.fpr]);
        }
        table
    }

    pub fn from_sweep(points: &[crate::calibration::SweepPoint]) -> Self {
        let mut table = CurveTable::new(["tau", "accuracy", "fpr", "fnr", "answer_rate"]);
        for p in points {
            table.push(vec![Some(p.tau), p.accuracy, p.fpr, p.fnr, Some(p.answer_rate)]);
        }
        table
    }

    /// Comma-separated text. Floats use the shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Some(v) if v.is_infinite() && *v > 0.0 => "inf".to_string(),
                    Some(v) => format!("{v:?}"),
                    None => UNDEFINED.to_string(),
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::invalid("curve table is empty"))?;
        let mut table = CurveTable::new(header.split(',').map(str::trim));
        for (idx, line) in lines {
            let row = line
                .split(',')
                .map(|cell| match cell.trim() {
                    UNDEFINED => Ok(None),
                    "inf" => Ok(Some(f64::INFINITY)),
                    other => other.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                        line: idx + 1,
                        message: format!("'{other}': {e}"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != table.columns.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} cells, found {}", table.columns.len(), row.len()),
                });
            }
            table.rows.push(row);
        }
        Ok(table)
    }
}

/// Writes the table atomically. An empty table is an error and leaves no file.
pub fn emit_curves(table: &CurveTable, path: &Path) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::invalid("refusing to write an empty curve"));
    }
    write_atomic(path, table.to_csv().as_bytes())
}
