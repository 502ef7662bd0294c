//! Command-line front end.
//!
//! Exit codes: `0` success (abstain-all included, with a warning), `2` input
//! validation or I/O failure, `3` numeric failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calibration::{calibrate, predict, threshold_sweep, CalibrationInput, CertaintyPredictor};
use crate::dataset::{load_numeric_rows, load_records_path, QuestionRecord};
use crate::error::{Error, Result};
use crate::evaluation::{emit_curves, evaluate, fpr_alpha_curve, CurveTable, LabeledScore};
use crate::fsutil::write_atomic;
use crate::scores::{score_record, ScoreFunction};
use crate::shift::{calibrate_under_shift, estimate_density_ratio, DiscriminatorConfig, ShiftConfig};
use crate::simulation::{
    analytic_ratio, parse_key_values, run_shift_trials, run_type1_trials, run_type2_study, BoundRule,
    LawSpec, SyntheticWorld,
};

/// Written in place of an answer when the predictor abstains.
pub const REFUSAL_MARKER: &str = "I-REFUSE-TO-ANSWER";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

fn unit_open(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1), got {v}"))
    }
}

fn unit_half_open(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1], got {v}"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreArg {
    Ve,
    Se,
    Kle,
}

impl From<ScoreArg> for ScoreFunction {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::Ve => ScoreFunction::Ve,
            ScoreArg::Se => ScoreFunction::Se,
            ScoreArg::Kle => ScoreFunction::Kle,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "abstain", version, about = "Calibrated abstention with Type I error control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Choose the abstention threshold from uncertain calibration records.
    Calibrate(CalibrateArgs),
    /// Apply a predictor to records and write one decision per record.
    Predict(PredictArgs),
    /// Measure accuracy, FPR, FNR and answer rate of a predictor.
    Evaluate(EvaluateArgs),
    /// Calibrate with density-ratio rejection sampling under covariate shift.
    ShiftCalibrate(ShiftCalibrateArgs),
    /// Monte Carlo certification on synthetic score laws.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Line-delimited JSON records.
    #[arg(long)]
    pub records: PathBuf,
    /// Significance level (Type I error target).
    #[arg(long, value_parser = unit_open)]
    pub alpha: f64,
    /// Allowed probability of exceeding alpha.
    #[arg(long, default_value_t = 0.05, value_parser = unit_open)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = ScoreArg::Ve)]
    pub score: ScoreArg,
    /// Expected number of resampled answers per record; checked when given.
    #[arg(long)]
    pub k: Option<usize>,
    /// Predictor output file.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub predictor: PathBuf,
    #[arg(long)]
    pub records: PathBuf,
    /// Decisions output file (one JSON object per record).
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictor: PathBuf,
    /// Labeled test records.
    #[arg(long)]
    pub records: PathBuf,
    /// Report output file.
    #[arg(long)]
    pub output: PathBuf,
    /// Optional accuracy/FPR/FNR table over thresholds at or above tau.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Optional FPR-alpha curve table; needs --calibration.
    #[arg(long, requires = "calibration")]
    pub fpr_curve: Option<PathBuf>,
    /// Calibration records for the FPR-alpha curve.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Alpha grid for the FPR-alpha curve.
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.05,0.1,0.2", value_parser = unit_open)]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ShiftCalibrateArgs {
    /// Source-domain records; uncertain ones form the calibration set.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, value_parser = unit_open)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05, value_parser = unit_open)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = ScoreArg::Ve)]
    pub score: ScoreArg,
    /// One density ratio per line, aligned with the records file.
    #[arg(long, conflicts_with_all = ["source_features", "target_features"])]
    pub ratios: Option<PathBuf>,
    /// Feature rows aligned with the records file.
    #[arg(long, requires = "target_features")]
    pub source_features: Option<PathBuf>,
    /// Feature rows sampled from the target domain.
    #[arg(long, requires = "source_features")]
    pub target_features: Option<PathBuf>,
    /// Quantile level for the ratio bound B.
    #[arg(long, default_value_t = 0.9, value_parser = unit_half_open)]
    pub gamma: f64,
    /// Explicit ratio bound; overrides --gamma.
    #[arg(long, value_parser = positive)]
    pub bound_b: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Discriminator training epochs.
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5, value_parser = positive)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimulationKind {
    Type1,
    Type2,
    Shift,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub kind: SimulationKind,
    /// `key = value` world file (p0, p1, p_y, tau_oracle, target); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Uncertain-class law, e.g. `uniform`, `beta:2,5`, `truncnormal:0,1`. Default uniform.
    #[arg(long)]
    pub p0: Option<String>,
    /// Certain-class law. Default beta:2,1.
    #[arg(long)]
    pub p1: Option<String>,
    /// Target law of the uncertain class for shift runs. Default beta:2,1.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub n0: usize,
    /// Calibration sizes for type2 runs.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub n0_grid: Vec<usize>,
    #[arg(long, default_value_t = 0.05, value_parser = unit_open)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05, value_parser = unit_open)]
    pub delta: f64,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Quantile level for B in shift runs (ignored with --bound-b).
    #[arg(long, default_value_t = 0.9, value_parser = unit_half_open)]
    pub gamma: f64,
    #[arg(long, value_parser = positive)]
    pub bound_b: Option<f64>,
    /// Shift runs: use w = 1 instead of the true ratio (negative control).
    #[arg(long)]
    pub ignore_ratio: bool,
    /// Table output file.
    #[arg(long)]
    pub output: PathBuf,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::InvalidInput(_) | Error::Parse { .. } | Error::Io { .. } => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    match execute(&cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Calibrate(a) => cmd_calibrate(a, out, err),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::ShiftCalibrate(a) => cmd_shift_calibrate(a, out, err),
        Command::Simulate(a) => cmd_simulate(a, out),
    }
}

fn score_all(records: &[QuestionRecord], function: ScoreFunction) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| score_record(r, function).map(|s| s.value))
        .collect()
}

fn check_k(records: &[QuestionRecord], k: Option<usize>) -> Result<()> {
    if let Some(k) = k {
        if let Some(r) = records.iter().find(|r| r.answers.len() != k) {
            return Err(Error::invalid(format!(
                "record '{}' has {} answers, expected {k}",
                r.id,
                r.answers.len()
            )));
        }
    }
    Ok(())
}

fn uncertain_records(records: &[QuestionRecord]) -> Result<Vec<usize>> {
    let mut idx = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if !r.correctness()? {
            idx.push(i);
        }
    }
    Ok(idx)
}

fn report_predictor(p: &CertaintyPredictor, out: &mut dyn Write, err: &mut dyn Write) {
    let tau = if p.tau.is_finite() { format!("{}", p.tau) } else { "inf".into() };
    let _ = writeln!(out, "n0 = {}", p.n0);
    let _ = writeln!(out, "k_hat = {}", p.k_hat);
    let _ = writeln!(out, "tau = {tau}");
    if p.abstains_always() {
        let _ = writeln!(
            err,
            "warning: {} calibration scores are too few for alpha = {} and delta = {}; the predictor abstains on every question",
            p.n0, p.alpha, p.delta
        );
    }
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let records = load_records_path(&a.records)?;
    check_k(&records, a.k)?;
    let uncertain: Vec<QuestionRecord> = uncertain_records(&records)?
        .into_iter()
        .map(|i| records[i].clone())
        .collect();
    let scores = score_all(&uncertain, a.score.into())?;
    let predictor = calibrate(&CalibrationInput::new(scores, a.alpha, a.delta)?, a.score.into())?;
    write_atomic(&a.output, predictor.to_json().as_bytes())?;
    report_predictor(&predictor, out, err);
    Ok(())
}

fn load_predictor(path: &Path) -> Result<CertaintyPredictor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CertaintyPredictor::from_json(&text)
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let predictor = load_predictor(&a.predictor)?;
    let records = load_records_path(&a.records)?;
    let mut body = String::new();
    let mut answered = 0usize;
    for r in &records {
        let eta = score_record(r, predictor.function)?.value;
        let decision = predict(&predictor, eta)?;
        let answer = if decision.is_certain() {
            answered += 1;
            r.generated.as_str()
        } else {
            REFUSAL_MARKER
        };
        let line = serde_json::json!({
            "id": r.id,
            "eta": eta,
            "decision": decision,
            "answer": answer,
        });
        body.push_str(&line.to_string());
        body.push('\n');
    }
    write_atomic(&a.output, body.as_bytes())?;
    let _ = writeln!(out, "{answered} of {} records answered", records.len());
    Ok(())
}

fn labeled_scores(records: &[QuestionRecord], function: ScoreFunction) -> Result<Vec<LabeledScore>> {
    records
        .iter()
        .map(|r| Ok(LabeledScore::new(score_record(r, function)?.value, r.correctness()?)))
        .collect()
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let predictor = load_predictor(&a.predictor)?;
    let records = load_records_path(&a.records)?;
    let labeled = labeled_scores(&records, predictor.function)?;
    let report = evaluate(&predictor, &labeled)?;
    write_atomic(&a.output, report.to_json().as_bytes())?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
    let _ = writeln!(
        out,
        "answered {}/{}  accuracy {}  fpr {}  fnr {}",
        report.n_answered,
        report.n_total,
        fmt(report.accuracy_answered),
        fmt(report.fpr),
        fmt(report.fnr)
    );
    if let Some(path) = &a.sweep {
        let pairs: Vec<(f64, bool)> = labeled.iter().map(|l| (l.eta, l.y)).collect();
        emit_curves(&CurveTable::from_sweep(&threshold_sweep(&predictor, &pairs)?), path)?;
    }
    if let (Some(path), Some(cal_path)) = (&a.fpr_curve, &a.calibration) {
        let cal_records = load_records_path(cal_path)?;
        let cal: Vec<QuestionRecord> = uncertain_records(&cal_records)?
            .into_iter()
            .map(|i| cal_records[i].clone())
            .collect();
        let cal_scores = score_all(&cal, predictor.function)?;
        let mut alphas = a.alphas.clone();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        let curve = fpr_alpha_curve(&cal_scores, &labeled, &alphas, predictor.delta)?;
        emit_curves(&CurveTable::from_fpr_curve(&curve), path)?;
    }
    Ok(())
}

fn cmd_shift_calibrate(a: &ShiftCalibrateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    if a.ratios.is_none() && a.source_features.is_none() {
        return Err(Error::invalid(
            "shift-calibrate needs --ratios or --source-features with --target-features",
        ));
    }
    let records = load_records_path(&a.records)?;
    let all_ratios: Vec<f64> = if let Some(path) = &a.ratios {
        let rows = load_numeric_rows(path)?;
        rows.iter()
            .enumerate()
            .map(|(i, r)| match r.as_slice() {
                [w] => Ok(*w),
                _ => Err(Error::invalid(format!(
                    "ratio row {} has {} columns, expected 1",
                    i + 1,
                    r.len()
                ))),
            })
            .collect::<Result<_>>()?
    } else {
        let src_path = a.source_features.as_ref().expect("checked above");
        let tgt_path = a.target_features.as_ref().expect("required by clap");
        let source = load_numeric_rows(src_path)?;
        let target = load_numeric_rows(tgt_path)?;
        let dim = source.first().map_or(0, Vec::len);
        let cfg = DiscriminatorConfig {
            feature_dim: dim,
            learning_rate: a.learning_rate,
            epochs: a.epochs,
            l2: a.l2,
        };
        if source.len() != records.len() {
            return Err(Error::invalid(format!(
                "{} feature rows for {} records",
                source.len(),
                records.len()
            )));
        }
        estimate_density_ratio(&source, &target, &cfg)?.ratios(&source)?
    };
    if all_ratios.len() != records.len() {
        return Err(Error::invalid(format!(
            "{} density ratios for {} records",
            all_ratios.len(),
            records.len()
        )));
    }
    let idx = uncertain_records(&records)?;
    let uncertain: Vec<QuestionRecord> = idx.iter().map(|&i| records[i].clone()).collect();
    let scores = score_all(&uncertain, a.score.into())?;
    let shift = ShiftConfig {
        ratios: idx.iter().map(|&i| all_ratios[i]).collect(),
        gamma: a.gamma,
        bound_b: a.bound_b,
        seed: a.seed,
    };
    let result = calibrate_under_shift(&scores, &shift, a.alpha, a.delta, a.score.into())?;
    write_atomic(&a.output, result.predictor.to_json().as_bytes())?;
    let _ = writeln!(out, "seed = {}", a.seed);
    let _ = writeln!(out, "bound_b = {}", result.bound_b);
    let _ = writeln!(out, "accepted = {} of {}", result.accepted.len(), scores.len());
    if result.empty_accepted {
        let _ = writeln!(err, "warning: rejection sampling accepted no calibration records");
    }
    report_predictor(&result.predictor, out, err);
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    if a.trials == 0 {
        return Err(Error::invalid("--trials must be positive"));
    }
    let mut kv = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_key_values(&text)?
        }
        None => Default::default(),
    };
    for (key, value) in [("p0", &a.p0), ("p1", &a.p1), ("target", &a.target)] {
        if let Some(v) = value {
            kv.insert(key.to_string(), v.clone());
        }
    }
    let target_spec: LawSpec = kv.remove("target").map_or(Ok(LawSpec::beta(2.0, 1.0)), |v| v.parse())?;
    let mut world = SyntheticWorld::from_key_values(&kv)?;
    let _ = writeln!(out, "seed = {}", a.seed);

    let text = match a.kind {
        SimulationKind::Type1 => {
            let report = run_type1_trials(&world, a.n0, a.alpha, a.delta, a.trials, a.seed)?;
            let _ = writeln!(out, "exceed_rate = {}", report.exceed_rate);
            report.to_table_string()
        }
        SimulationKind::Type2 => {
            if world.tau_oracle.is_none() {
                world = world.with_monotone_oracle(a.alpha)?;
            }
            let rows = run_type2_study(&world, &a.n0_grid, a.alpha, a.delta, a.trials, a.seed)?;
            let mut table = CurveTable::new(["n0", "median_excess", "q1_excess", "q3_excess", "median_tau"]);
            for r in &rows {
                table.push(vec![
                    Some(r.n0 as f64),
                    Some(r.median_excess),
                    Some(r.q1_excess),
                    Some(r.q3_excess),
                    Some(r.median_tau),
                ]);
                let _ = writeln!(out, "n0 = {}  median excess = {}", r.n0, r.median_excess);
            }
            table.to_csv()
        }
        SimulationKind::Shift => {
            let source = world.p0.build()?;
            let target = target_spec.build()?;
            let bound = a.bound_b.map_or(BoundRule::Quantile(a.gamma), BoundRule::Fixed);
            let true_ratio = analytic_ratio(&source, &target);
            let ones = |_: f64| 1.0;
            let ratio: &(dyn Fn(f64) -> f64 + Sync) = if a.ignore_ratio { &ones } else { &true_ratio };
            let report = run_shift_trials(
                &source, &target, ratio, bound, a.n0, a.alpha, a.delta, a.trials, a.seed,
            )?;
            let _ = writeln!(out, "exceed_rate = {}", report.exceed_rate);
            report.to_table_string()
        }
    };
    write_atomic(&a.output, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_defaults() {
        for sub in ["calibrate", "shift-calibrate", "simulate", "evaluate", "predict"] {
            let mut out = Vec::new();
            let mut err = Vec::new();
            let code = run(["abstain", sub, "--help"], &mut out, &mut err);
            assert_eq!(code, 0);
            let text = String::from_utf8(out).unwrap();
            assert!(text.contains("--output"), "{sub}: {text}");
            if sub == "calibrate" {
                assert!(text.contains("[default: 0.05]"));
                assert!(text.contains("[default: ve]"));
            }
            if sub == "simulate" {
                assert!(text.contains("[default: 42]"));
                assert!(text.contains("[default: 2000]"));
            }
        }
    }

    #[test]
    fn out_of_range_alpha_is_usage_error() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            ["abstain", "calibrate", "--records", "x", "--alpha", "1.5", "--output", "y"],
            &mut out,
            &mut err,
        );
        assert_eq!(code, EXIT_INPUT);
    }
}
