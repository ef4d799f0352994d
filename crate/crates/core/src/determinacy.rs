//! Moment determinacy through hazard growth against `√x`.
//!
//! A ratio trace counts as having a positive liminf when its window minimum
//! exceeds [`POSITIVITY_THRESHOLD`] and it does not decay across the window:
//! the least-squares slope of `log ratio` on `log x` must be at least
//! `-`[`DECAY_SLOPE_TOLERANCE`]. A slowly vanishing trace is reported as
//! inconclusive, never as determinate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{ModelError, TailModel};
use crate::scales::{natural_scale_from_hazard, scale_index, GridSpec, RatioLiminfEstimate, ScaleError, ScaleFunction};
use crate::stopped_sum::{StoppedSumSpec, NATURAL_SCALE_TOLERANCE};

pub const POSITIVITY_THRESHOLD: f64 = 1e-6;

pub const DECAY_SLOPE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeterminacyError {
    #[error("support extends below 0 (lower end {lower})")]
    NegativeSupport { lower: f64 },
    #[error("guard failed: {0}")]
    GuardFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Determinacy {
    DeterminateByHardy,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeterminacyBranch {
    DirectHazard,
    ViaScale,
    Theorem2Condition1,
    Theorem2Condition2,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminacyVerdict {
    pub verdict: Determinacy,
    pub branch: DeterminacyBranch,
    pub ratios: Vec<RatioLiminfEstimate>,
    pub notes: Vec<String>,
    pub positivity_threshold: f64,
    pub decay_slope_tolerance: f64,
}

impl DeterminacyVerdict {
    fn new(
        verdict: Determinacy,
        branch: DeterminacyBranch,
        ratios: Vec<RatioLiminfEstimate>,
        notes: Vec<String>,
    ) -> Self {
        Self {
            verdict,
            branch,
            ratios,
            notes,
            positivity_threshold: POSITIVITY_THRESHOLD,
            decay_slope_tolerance: DECAY_SLOPE_TOLERANCE,
        }
    }

    fn inconclusive(ratios: Vec<RatioLiminfEstimate>, notes: Vec<String>) -> Self {
        Self::new(Determinacy::Inconclusive, DeterminacyBranch::None, ratios, notes)
    }
}

/// Grid stand-in for `liminf ratio ∈ (0, ∞]`.
pub fn has_positive_liminf(est: &RatioLiminfEstimate) -> bool {
    est.value > POSITIVITY_THRESHOLD && est.window_log_slope() >= -DECAY_SLOPE_TOLERANCE
}

fn sqrt_ratio(grid: &GridSpec, f: impl Fn(f64) -> f64) -> RatioLiminfEstimate {
    RatioLiminfEstimate::of_ratio(grid, f, f64::sqrt)
}

/// Sufficient test for determinacy of a law on `[0, ∞)`.
///
/// Tries `R(x) / √x` first, then `h(x) / √x` for `scale` (or, for a heavy
/// model without one, a natural scale built from the hazard on `grid`).
pub fn hardy_test(
    model: &TailModel,
    grid: &GridSpec,
    scale: Option<&ScaleFunction>,
) -> Result<DeterminacyVerdict, DeterminacyError> {
    model.validate()?;
    grid.validate()?;
    let lower = model.support_lower();
    if lower < 0.0 {
        return Err(DeterminacyError::NegativeSupport { lower });
    }
    let mut notes = Vec::new();
    let mut hazard_trace = Vec::with_capacity(grid.points);
    for x in grid.points() {
        hazard_trace.push((x, model.hazard(x)? / x.sqrt()));
    }
    let direct = RatioLiminfEstimate::from_trace(*grid, hazard_trace);
    if has_positive_liminf(&direct) {
        return Ok(DeterminacyVerdict::new(
            Determinacy::DeterminateByHardy,
            DeterminacyBranch::DirectHazard,
            vec![direct],
            notes,
        ));
    }
    notes.push("hazard / sqrt(x) has no positive grid liminf".into());

    let h = match scale {
        Some(h) => {
            h.validate()?;
            let idx = scale_index(model, h, grid)?;
            if (idx.value - 1.0).abs() > NATURAL_SCALE_TOLERANCE {
                notes.push(format!(
                    "supplied scale has grid index {}, not a natural scale",
                    idx.value
                ));
                return Ok(DeterminacyVerdict::inconclusive(vec![direct], notes));
            }
            Some(h.clone())
        }
        None if model.is_heavy_tailed() => Some(natural_scale_from_hazard(model, grid)?),
        None => None,
    };
    let Some(h) = h else {
        notes.push("no natural scale for a light-tailed model".into());
        return Ok(DeterminacyVerdict::inconclusive(vec![direct], notes));
    };
    let via = sqrt_ratio(grid, |x| h.eval(x));
    if has_positive_liminf(&via) {
        return Ok(DeterminacyVerdict::new(
            Determinacy::DeterminateByHardy,
            DeterminacyBranch::ViaScale,
            vec![via],
            notes,
        ));
    }
    notes.push("scale / sqrt(x) has no positive grid liminf".into());
    Ok(DeterminacyVerdict::inconclusive(vec![direct, via], notes))
}

/// Sufficient test for determinacy of `S_N` from scales of `X` and `N`.
pub fn stopped_sum_determinacy(
    spec: &StoppedSumSpec,
    h_x: &ScaleFunction,
    h_n: &ScaleFunction,
    grid: &GridSpec,
) -> Result<DeterminacyVerdict, DeterminacyError> {
    spec.increment.validate()?;
    spec.stopping.validate()?;
    grid.validate()?;
    h_x.validate()?;
    h_n.validate()?;
    let guard = |name: &str, ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(DeterminacyError::GuardFailed(name.to_string()))
        }
    };
    guard(
        "stopping supported on {1, 2, ...}",
        spec.stopping.is_positive_integer_valued(),
    )?;
    guard("X heavy-tailed", spec.increment.is_heavy_tailed())?;
    guard("N heavy-tailed", spec.stopping.is_heavy_tailed())?;
    guard("X >= 0", spec.increment.support_lower() >= 0.0)?;
    let mean = spec.mean().filter(|m| *m > 0.0);
    guard("E(X) finite and positive", mean.is_some())?;
    let mean = mean.unwrap();
    let c1 = spec.c1_value().unwrap();
    guard("c1 > E(X)", c1 > mean)?;
    let natural = |model: &TailModel, h: &ScaleFunction| -> Result<bool, DeterminacyError> {
        Ok((scale_index(model, h, grid)?.value - 1.0).abs() <= NATURAL_SCALE_TOLERANCE)
    };
    guard("h_x natural scale of X on grid", natural(&spec.increment, h_x)?)?;
    guard("h_n natural scale of N on grid", natural(&spec.stopping, h_n)?)?;

    let a = sqrt_ratio(grid, |x| h_x.eval(x));
    let b = RatioLiminfEstimate::of_ratio(grid, |x| h_n.eval(c1 * x), |x| h_x.eval(x));
    let c = sqrt_ratio(grid, |x| h_n.eval(mean * x));
    let d = RatioLiminfEstimate::of_ratio(grid, |x| h_x.eval(x), |x| h_n.eval(mean * x));
    let cond1 = has_positive_liminf(&a) && has_positive_liminf(&b);
    let cond2 = has_positive_liminf(&c) && has_positive_liminf(&d);
    let mut notes = Vec::new();
    Ok(match (cond1, cond2) {
        (true, also) => {
            if also {
                notes.push("condition 2 also holds".into());
            }
            DeterminacyVerdict::new(
                Determinacy::DeterminateByHardy,
                DeterminacyBranch::Theorem2Condition1,
                vec![a, b],
                notes,
            )
        }
        (false, true) => DeterminacyVerdict::new(
            Determinacy::DeterminateByHardy,
            DeterminacyBranch::Theorem2Condition2,
            vec![c, d],
            notes,
        ),
        (false, false) => {
            notes.push("neither condition has positive grid liminfs".into());
            DeterminacyVerdict::inconclusive(vec![a, b, c, d], notes)
        }
    })
}
