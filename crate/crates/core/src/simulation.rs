//! Monte Carlo certification of the calibration guarantees on synthetic
//! score laws with known CDFs.
//!
//! Each trial draws a fresh calibration sample, calibrates, and evaluates the
//! *true* Type I error `1 - F0(tau_hat)` from the analytic CDF, so the only
//! randomness left is the calibration draw itself. Trials run in parallel;
//! trial `t` uses a generator keyed by `(seed, t)`, so reports are
//! bit-reproducible regardless of scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::calibration::{calibrate, CalibrationInput};
use crate::error::{Error, Result};
use crate::scores::ScoreFunction;
use crate::shift::{calibrate_under_shift, ShiftConfig};

/// Largest `n0` accepted by [`oracle_v_exact`].
pub const MAX_EXACT_N0: usize = 1000;

/// A continuous score law with sampling, CDF, density and quantile.
pub trait ScoreLaw: Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64;
    fn cdf(&self, x: f64) -> f64;
    fn pdf(&self, x: f64) -> f64;
    fn quantile(&self, p: f64) -> f64;
}

/// Named laws available from the CLI and config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum LawSpec {
    Uniform { lo: f64, hi: f64 },
    Beta { a: f64, b: f64 },
    /// Normal(mu, sigma) conditioned on `[lo, hi]`.
    TruncNormal { mu: f64, sigma: f64, lo: f64, hi: f64 },
}

impl LawSpec {
    pub fn uniform() -> Self {
        LawSpec::Uniform { lo: 0.0, hi: 1.0 }
    }

    pub fn beta(a: f64, b: f64) -> Self {
        LawSpec::Beta { a, b }
    }

    /// Standard normal truncated to `[-3, 3]`.
    pub fn standard_trunc_normal() -> Self {
        LawSpec::TruncNormal {
            mu: 0.0,
            sigma: 1.0,
            lo: -3.0,
            hi: 3.0,
        }
    }

    pub fn build(&self) -> Result<Law> {
        match *self {
            LawSpec::Uniform { lo, hi } => {
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return Err(Error::invalid(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
                }
                Ok(Law::Uniform { lo, hi })
            }
            LawSpec::Beta { a, b } => {
                let cdf = statrs::distribution::Beta::new(a, b)
                    .map_err(|e| Error::invalid(format!("beta({a}, {b}): {e}")))?;
                let sampler = rand_distr::Beta::new(a, b)
                    .map_err(|e| Error::invalid(format!("beta({a}, {b}): {e}")))?;
                Ok(Law::Beta { cdf, sampler })
            }
            LawSpec::TruncNormal { mu, sigma, lo, hi } => {
                let normal = statrs::distribution::Normal::new(mu, sigma)
                    .map_err(|e| Error::invalid(format!("normal({mu}, {sigma}): {e}")))?;
                if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                    return Err(Error::invalid(format!("truncation needs lo < hi, got [{lo}, {hi}]")));
                }
                let (p_lo, p_hi) = (normal.cdf(lo), normal.cdf(hi));
                if p_hi - p_lo <= 0.0 {
                    return Err(Error::invalid("truncation interval has no normal mass"));
                }
                Ok(Law::TruncNormal {
                    normal,
                    lo,
                    hi,
                    p_lo,
                    p_hi,
                })
            }
        }
    }
}

impl fmt::Display for LawSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawSpec::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            LawSpec::Beta { a, b } => write!(f, "beta:{a},{b}"),
            LawSpec::TruncNormal { mu, sigma, lo, hi } => {
                write!(f, "truncnormal:{mu},{sigma},{lo},{hi}")
            }
        }
    }
}

impl FromStr for LawSpec {
    type Err = Error;

    /// `uniform`, `uniform:lo,hi`, `beta:a,b`, `truncnormal:mu,sigma[,lo,hi]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let params: Vec<f64> = args
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::invalid(format!("law parameter '{t}': {e}")))
            })
            .collect::<Result<_>>()?;
        let spec = match (name.trim().to_ascii_lowercase().as_str(), params.as_slice()) {
            ("uniform", []) => LawSpec::uniform(),
            ("uniform", &[lo, hi]) => LawSpec::Uniform { lo, hi },
            ("beta", &[a, b]) => LawSpec::Beta { a, b },
            ("truncnormal", &[mu, sigma]) => LawSpec::TruncNormal {
                mu,
                sigma,
                lo: mu - 3.0 * sigma,
                hi: mu + 3.0 * sigma,
            },
            ("truncnormal", &[mu, sigma, lo, hi]) => LawSpec::TruncNormal { mu, sigma, lo, hi },
            _ => return Err(Error::invalid(format!("unrecognized law '{s}'"))),
        };
        spec.build()?;
        Ok(spec)
    }
}

/// A validated, ready-to-sample law.
#[derive(Debug, Clone)]
pub enum Law {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Beta {
        cdf: statrs::distribution::Beta,
        sampler: rand_distr::Beta<f64>,
    },
    TruncNormal {
        normal: statrs::distribution::Normal,
        lo: f64,
        hi: f64,
        p_lo: f64,
        p_hi: f64,
    },
}

impl ScoreLaw for Law {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Law::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Law::Beta { sampler, .. } => sampler.sample(rng),
            Law::TruncNormal {
                normal,
                lo,
                hi,
                p_lo,
                p_hi,
            } => {
                let u: f64 = rng.random();
                normal.inverse_cdf(p_lo + u * (p_hi - p_lo)).clamp(*lo, *hi)
            }
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Law::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Law::Beta { cdf, .. } => cdf.cdf(x),
            Law::TruncNormal {
                normal,
                lo,
                hi,
                p_lo,
                p_hi,
            } => {
                if x <= *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else {
                    ((normal.cdf(x) - p_lo) / (p_hi - p_lo)).clamp(0.0, 1.0)
                }
            }
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            Law::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Law::Beta { cdf, .. } => {
                if (0.0..=1.0).contains(&x) {
                    cdf.pdf(x)
                } else {
                    0.0
                }
            }
            Law::TruncNormal {
                normal,
                lo,
                hi,
                p_lo,
                p_hi,
            } => {
                if (*lo..=*hi).contains(&x) {
                    normal.pdf(x) / (p_hi - p_lo)
                } else {
                    0.0
                }
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            Law::Uniform { lo, hi } => lo + (hi - lo) * p,
            Law::Beta { cdf, .. } => cdf.inverse_cdf(p),
            Law::TruncNormal {
                normal,
                lo,
                hi,
                p_lo,
                p_hi,
            } => normal.inverse_cdf(p_lo + p * (p_hi - p_lo)).clamp(*lo, *hi),
        }
    }
}

/// Score laws of the uncertain (`P0`) and certain (`P1`) classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub p0: LawSpec,
    pub p1: LawSpec,
    /// Marginal probability of the certain class.
    pub p_y: f64,
    /// Oracle Neyman-Pearson threshold in score space, when known.
    pub tau_oracle: Option<f64>,
}

impl SyntheticWorld {
    pub fn new(p0: LawSpec, p1: LawSpec) -> Self {
        SyntheticWorld {
            p0,
            p1,
            p_y: 0.5,
            tau_oracle: None,
        }
    }

    /// Sets `tau_oracle` to the `1 - alpha` quantile of `P0`. This is the
    /// oracle threshold whenever the likelihood ratio `p1 / p0` is increasing
    /// in the score.
    pub fn with_monotone_oracle(mut self, alpha: f64) -> Result<Self> {
        self.tau_oracle = Some(self.p0.build()?.quantile(1.0 - alpha));
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.p0.build()?;
        self.p1.build()?;
        if !(self.p_y > 0.0 && self.p_y < 1.0) {
            return Err(Error::invalid(format!("p_y must lie in (0, 1), got {}", self.p_y)));
        }
        Ok(())
    }

    /// Reads `key = value` lines: `p0`, `p1` (law strings), `p_y`, `tau_oracle`.
    /// Unknown keys are returned to the caller untouched.
    pub fn from_key_values(kv: &BTreeMap<String, String>) -> Result<Self> {
        let law = |key: &str, default: LawSpec| -> Result<LawSpec> {
            kv.get(key).map_or(Ok(default), |v| v.parse())
        };
        let num = |key: &str| -> Result<Option<f64>> {
            kv.get(key)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::invalid(format!("{key} = {v}: {e}")))
                })
                .transpose()
        };
        let world = SyntheticWorld {
            p0: law("p0", LawSpec::uniform())?,
            p1: law("p1", LawSpec::beta(2.0, 1.0))?,
            p_y: num("p_y")?.unwrap_or(0.5),
            tau_oracle: num("tau_oracle")?,
        };
        world.validate()?;
        Ok(world)
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trials: usize,
    pub exceed_count: usize,
    pub exceed_rate: f64,
    /// Mean of the positive part of the excess Type II error; only when the
    /// world carries an oracle threshold.
    pub mean_type2_excess: Option<f64>,
    pub seed: u64,
}

/// `delta + 3 sqrt(delta (1 - delta) / trials)`.
pub fn exceedance_margin(delta: f64, trials: usize) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

impl TrialReport {
    fn from_outcomes(outcomes: &[(bool, Option<f64>)], seed: u64) -> Self {
        let trials = outcomes.len();
        let exceed_count = outcomes.iter().filter(|o| o.0).count();
        let excesses: Vec<f64> = outcomes.iter().filter_map(|o| o.1).collect();
        TrialReport {
            trials,
            exceed_count,
            exceed_rate: exceed_count as f64 / trials as f64,
            mean_type2_excess: (!excesses.is_empty())
                .then(|| excesses.iter().sum::<f64>() / excesses.len() as f64),
            seed,
        }
    }

    pub fn within_margin(&self, delta: f64) -> bool {
        self.exceed_rate <= exceedance_margin(delta, self.trials)
    }

    /// Curve-table layout: header row and a single data row.
    pub fn to_table_string(&self) -> String {
        let excess = self
            .mean_type2_excess
            .map_or_else(|| crate::evaluation::UNDEFINED.to_string(), |v| format!("{v:?}"));
        format!(
            "trials,exceed_count,exceed_rate,mean_type2_excess,seed\n{},{},{:?},{},{}\n",
            self.trials, self.exceed_count, self.exceed_rate, excess, self.seed
        )
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn check_trial_args(alpha: f64, delta: f64, trials: usize) -> Result<()> {
    CalibrationInput::new(vec![], alpha, delta)?;
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    Ok(())
}

/// Type I certification with an explicit law; [`run_type1_trials`] is the
/// world-based entry point.
pub fn run_type1_trials_with<L: ScoreLaw + ?Sized>(
    p0: &L,
    oracle: Option<(&dyn ScoreLaw, f64)>,
    n0: usize,
    alpha: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<TrialReport> {
    check_trial_args(alpha, delta, trials)?;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(bool, Option<f64>)> {
            let mut rng = trial_rng(seed, t);
            let scores: Vec<f64> = (0..n0).map(|_| p0.sample(&mut rng)).collect();
            let predictor = calibrate(&CalibrationInput::new(scores, alpha, delta)?, ScoreFunction::Ve)?;
            let true_type1 = 1.0 - p0.cdf(predictor.tau);
            let excess = oracle.map(|(p1, tau_star)| (p1.cdf(predictor.tau) - p1.cdf(tau_star)).max(0.0));
            Ok((true_type1 > alpha, excess))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialReport::from_outcomes(&outcomes, seed))
}

/// Repeated calibration on `n0` draws from `P0`; counts the trials whose true
/// Type I error exceeds `alpha`.
pub fn run_type1_trials(
    world: &SyntheticWorld,
    n0: usize,
    alpha: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<TrialReport> {
    world.validate()?;
    let p0 = world.p0.build()?;
    let p1 = world.p1.build()?;
    let oracle = world.tau_oracle.map(|t| (&p1 as &dyn ScoreLaw, t));
    run_type1_trials_with(&p0, oracle, n0, alpha, delta, trials, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Type2Row {
    pub n0: usize,
    /// Median over trials of `max(0, F1(tau_hat) - F1(tau_oracle))`.
    pub median_excess: f64,
    pub q1_excess: f64,
    pub q3_excess: f64,
    pub median_tau: f64,
    pub min_tau: f64,
    pub max_tau: f64,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

/// Excess Type II error over the oracle threshold, per calibration size.
pub fn run_type2_study(
    world: &SyntheticWorld,
    n0_grid: &[usize],
    alpha: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<Type2Row>> {
    check_trial_args(alpha, delta, trials)?;
    world.validate()?;
    let tau_star = world
        .tau_oracle
        .ok_or_else(|| Error::invalid("type II study needs tau_oracle on the world"))?;
    let p0 = world.p0.build()?;
    let p1 = world.p1.build()?;
    let base = p1.cdf(tau_star);
    n0_grid
        .iter()
        .enumerate()
        .map(|(g, &n0)| {
            let grid_seed = seed.wrapping_add((g as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let per_trial = (0..trials)
                .into_par_iter()
                .map(|t| -> Result<(f64, f64)> {
                    let mut rng = trial_rng(grid_seed, t);
                    let scores: Vec<f64> = (0..n0).map(|_| p0.sample(&mut rng)).collect();
                    let p = calibrate(&CalibrationInput::new(scores, alpha, delta)?, ScoreFunction::Ve)?;
                    Ok(((p1.cdf(p.tau) - base).max(0.0), p.tau))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut excess: Vec<f64> = per_trial.iter().map(|r| r.0).collect();
            let mut taus: Vec<f64> = per_trial.iter().map(|r| r.1).collect();
            excess.sort_by(f64::total_cmp);
            taus.sort_by(f64::total_cmp);
            Ok(Type2Row {
                n0,
                median_excess: quantile_sorted(&excess, 0.5),
                q1_excess: quantile_sorted(&excess, 0.25),
                q3_excess: quantile_sorted(&excess, 0.75),
                median_tau: quantile_sorted(&taus, 0.5),
                min_tau: taus[0],
                max_tau: taus[taus.len() - 1],
            })
        })
        .collect()
}

/// How `B` is chosen in shift trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundRule {
    Fixed(f64),
    Quantile(f64),
}

/// Density ratio `p_target / p_source` between two laws.
pub fn analytic_ratio<'a>(source: &'a Law, target: &'a Law) -> impl Fn(f64) -> f64 + Sync + 'a {
    move |x| {
        let ps = source.pdf(x);
        if ps > 0.0 {
            target.pdf(x) / ps
        } else {
            0.0
        }
    }
}

/// Type I certification under covariate shift: calibration scores come from
/// `source`, the error is measured under `target`, and `ratio` supplies the
/// density ratio used for rejection sampling (deliberately wrong ratios make
/// a negative control).
#[allow(clippy::too_many_arguments)]
pub fn run_shift_trials<S: ScoreLaw + ?Sized, T: ScoreLaw + ?Sized>(
    source: &S,
    target: &T,
    ratio: &(dyn Fn(f64) -> f64 + Sync),
    bound: BoundRule,
    n0: usize,
    alpha: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<TrialReport> {
    check_trial_args(alpha, delta, trials)?;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(bool, Option<f64>)> {
            let mut rng = trial_rng(seed, t);
            let scores: Vec<f64> = (0..n0).map(|_| source.sample(&mut rng)).collect();
            let ratios: Vec<f64> = scores.iter().map(|&x| ratio(x)).collect();
            let mut cfg = ShiftConfig::new(ratios, rng.next_u64());
            match bound {
                BoundRule::Fixed(b) => cfg.bound_b = Some(b),
                BoundRule::Quantile(g) => cfg.gamma = g,
            }
            let out = calibrate_under_shift(&scores, &cfg, alpha, delta, ScoreFunction::Ve)?;
            let true_type1 = 1.0 - target.cdf(out.predictor.tau);
            Ok((true_type1 > alpha, None))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialReport::from_outcomes(&outcomes, seed))
}

/// `v(k)` in exact rational arithmetic; the independent reference for
/// [`crate::calibration::binomial_tail_v`].
pub fn oracle_v_exact(k: usize, n0: usize, alpha: &BigRational) -> Result<BigRational> {
    if n0 > MAX_EXACT_N0 {
        return Err(Error::invalid(format!(
            "n0 = {n0} exceeds the exact-arithmetic budget of {MAX_EXACT_N0}"
        )));
    }
    if k == 0 || k > n0 + 1 {
        return Err(Error::invalid(format!("k = {k} outside [1, {}]", n0 + 1)));
    }
    if *alpha <= BigRational::zero() || *alpha >= BigRational::one() {
        return Err(Error::invalid("alpha must lie strictly between 0 and 1"));
    }
    let q = BigRational::one() - alpha;
    let mut total = BigRational::zero();
    for j in k..=n0 {
        let coeff = BigRational::from_integer(binomial(n0, j));
        total += coeff * pow(&q, j) * pow(alpha, n0 - j);
    }
    Ok(total)
}

fn pow(base: &BigRational, exp: usize) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

fn binomial(n: usize, k: usize) -> BigInt {
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}
