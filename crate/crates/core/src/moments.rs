//! Moment indices of stopped sums: analytic predictions and estimators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{Mean, ModelError, TailModel};
use crate::ext::ExtReal;
use crate::scales::{least_squares_slope, GridSpec};
use crate::stopped_sum::EmpiricalTail;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("assumption unmet: {0}")]
    AssumptionUnmet(String),
    #[error("declared drift {declared:?} disagrees with E(X) = {mean}")]
    DriftMismatch { declared: Drift, mean: String },
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("tail vanishes at x = {x}")]
    TailVanishes { x: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drift {
    Positive,
    Zero,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictionRule {
    MinRule,
    ProductBounds,
    ZeroDriftMZ,
    NegativeDriftBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentIndexPrediction {
    pub lower: ExtReal,
    pub upper: ExtReal,
    pub rule: PredictionRule,
    pub assumptions_checked: Vec<(String, bool)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIndexEstimate {
    pub estimate: f64,
    pub k_order_statistics: usize,
    pub half_width: f64,
}

/// Records named assumptions and fails on the first one that does not hold.
#[derive(Default)]
struct Checks(Vec<(String, bool)>);

impl Checks {
    fn require(&mut self, name: &str, ok: bool) -> Result<(), MomentError> {
        self.0.push((name.to_string(), ok));
        if ok {
            Ok(())
        } else {
            Err(MomentError::AssumptionUnmet(name.to_string()))
        }
    }
}

fn check_drift(x: &TailModel, drift: Drift) -> Result<(), MomentError> {
    let mismatch = |m: String| MomentError::DriftMismatch {
        declared: drift,
        mean: m,
    };
    match x.mean() {
        Mean::Finite(m) => {
            let tol = 1e-12 * m.abs().max(1.0);
            let actual = if m > tol {
                Drift::Positive
            } else if m < -tol {
                Drift::Negative
            } else {
                Drift::Zero
            };
            if actual != drift {
                return Err(mismatch(m.to_string()));
            }
        }
        Mean::PlusInfinity => {
            if drift != Drift::Positive {
                return Err(mismatch("+inf".into()));
            }
        }
        Mean::Undefined => return Err(mismatch("undefined".into())),
    }
    Ok(())
}

/// Innermost model of a chain of shifts.
fn unshifted(model: &TailModel) -> &TailModel {
    match model {
        TailModel::BoundedBelowShift { base, .. } => unshifted(base),
        m => m,
    }
}

pub fn predict_moment_index(
    x_model: &TailModel,
    n_model: &TailModel,
    drift: Drift,
) -> Result<MomentIndexPrediction, MomentError> {
    x_model.validate()?;
    n_model.validate()?;
    let mut checks = Checks::default();
    checks.require(
        "stopping supported on {1, 2, ...}",
        n_model.is_positive_integer_valued(),
    )?;
    check_drift(x_model, drift)?;
    checks.0.push(("drift matches E(X)".into(), true));
    let ix = x_model.moment_index_analytic()?;
    let in_ = n_model.moment_index_analytic()?;

    let (lower, upper, rule) = match drift {
        Drift::Positive => {
            let finite_x = x_model.has_finite_abs_mean();
            let finite_n = n_model.has_finite_abs_mean();
            checks.0.push(("E|X| < inf".into(), finite_x));
            checks.0.push(("E(N) < inf".into(), finite_n));
            if finite_x || finite_n {
                let m = ix.min(in_);
                (m, m, PredictionRule::MinRule)
            } else {
                checks.require("X >= 0", x_model.support_lower() >= 0.0)?;
                checks.require(
                    "I(X) <= 1 and I(N) <= 1",
                    ix <= ExtReal::Finite(1.0) && in_ <= ExtReal::Finite(1.0),
                )?;
                (ix * in_, ix.min(in_), PredictionRule::ProductBounds)
            }
        }
        Drift::Zero => {
            let left = x_model.left_moment_index_analytic();
            let two_sided = ix.min(left);
            checks.require("min(I(X+), I(X-)) >= 2", two_sided >= ExtReal::Finite(2.0))?;
            checks.require("I(N) >= 1", in_ >= ExtReal::Finite(1.0))?;
            let lower = two_sided.min(in_.scale(2.0));
            // with P(N = 1) > 0 the sum inherits every infinite moment of X
            let p_one = 1.0 - n_model.tail(1.0);
            let upper = if p_one > 0.0 { two_sided } else { ExtReal::Infinite };
            (lower, upper.max(lower), PredictionRule::ZeroDriftMZ)
        }
        Drift::Negative => {
            let alpha = match unshifted(x_model) {
                TailModel::Pareto { alpha, .. } => Some(*alpha),
                TailModel::DiscretePowerLaw { eta, cap: None } => Some(*eta),
                _ => None,
            };
            checks.require("X bounded below with a power-law tail", alpha.is_some())?;
            let alpha = alpha.unwrap();
            checks.require("alpha > 1", alpha > 1.0)?;
            let eta = match n_model {
                TailModel::DiscretePowerLaw { eta, cap: None } => Some(*eta),
                _ => None,
            };
            checks.require("N power-law", eta.is_some())?;
            let eta = eta.unwrap();
            (
                ExtReal::Finite(alpha - 1.0),
                ExtReal::Finite(alpha + eta - 1.0),
                PredictionRule::NegativeDriftBand,
            )
        }
    };
    Ok(MomentIndexPrediction {
        lower,
        upper,
        rule,
        assumptions_checked: checks.0,
    })
}

/// Drift-free form of the min rule: `I(S_N) = I(X)` when `E|X| < ∞` and
/// `I(X) ≤ I(N)`.
pub fn predict_moment_index_corollary(
    x_model: &TailModel,
    n_model: &TailModel,
) -> Result<MomentIndexPrediction, MomentError> {
    x_model.validate()?;
    n_model.validate()?;
    let mut checks = Checks::default();
    checks.require(
        "stopping supported on {1, 2, ...}",
        n_model.is_positive_integer_valued(),
    )?;
    checks.require("E|X| < inf", x_model.has_finite_abs_mean())?;
    let ix = x_model.moment_index_analytic()?;
    let in_ = n_model.moment_index_analytic()?;
    checks.require("I(X) <= I(N)", ix <= in_)?;
    Ok(MomentIndexPrediction {
        lower: ix,
        upper: ix,
        rule: PredictionRule::MinRule,
        assumptions_checked: checks.0,
    })
}

/// `⌊n^0.6⌋`.
pub fn default_hill_k(n: usize) -> usize {
    // the nudge keeps exact powers such as 10^5 -> 1000 from rounding down
    ((n as f64).powf(0.6) + 1e-9).floor() as usize
}

/// Hill estimator on the top `k` order statistics of the positive samples.
pub fn hill_estimate(samples: &[f64], k: usize) -> Result<TailIndexEstimate, MomentError> {
    if k < 10 {
        return Err(MomentError::InvalidParameter(format!("k must be >= 10, got {k}")));
    }
    let mut pos: Vec<f64> = samples.iter().copied().filter(|&v| v > 0.0).collect();
    if pos.len() < k + 1 {
        return Err(MomentError::TooFewSamples(format!(
            "need {} positive samples, got {}",
            k + 1,
            pos.len()
        )));
    }
    // top k + 1 values, largest first
    let pivot = pos.len() - (k + 1);
    pos.select_nth_unstable_by(pivot, f64::total_cmp);
    let top = &pos[pivot..];
    let threshold = top.iter().copied().fold(f64::INFINITY, f64::min);
    let mut excess = 0.0;
    let mut skipped_threshold = false;
    for &v in top {
        if !skipped_threshold && v == threshold {
            skipped_threshold = true;
            continue;
        }
        excess += (v / threshold).ln();
    }
    let mean_excess = excess / k as f64;
    if !(mean_excess > 0.0) {
        return Err(MomentError::TooFewSamples(
            "zero log-excess over the top order statistics".into(),
        ));
    }
    let estimate = 1.0 / mean_excess;
    Ok(TailIndexEstimate {
        estimate,
        k_order_statistics: k,
        half_width: 1.96 * estimate / (k as f64).sqrt(),
    })
}

/// Negated least-squares slope of `log P̂(X > x)` against `log x` over the
/// tail window of `grid`.
pub fn loglog_slope_estimate(tail: &EmpiricalTail, grid: &GridSpec) -> Result<f64, MomentError> {
    grid.validate()
        .map_err(|e| MomentError::InvalidParameter(e.to_string()))?;
    let mut pts = Vec::new();
    for x in grid.points().into_iter().filter(|&x| grid.in_window(x)) {
        let t = tail.tail(x);
        if t <= 0.0 {
            return Err(MomentError::TailVanishes { x });
        }
        pts.push((x.ln(), t.ln()));
    }
    Ok(0.0 - least_squares_slope(&pts))
}
