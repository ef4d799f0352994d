//! Parametric tail models.
//!
//! Each [`TailModel`] exposes its exact survival function `P(X > x)`, the
//! hazard `R(x) = -log P(X > x)`, an inverse-CDF sampler and its analytic
//! metadata (moment index, heaviness, mean).

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::ext::ExtReal;
use crate::rng::{uniform, SeedStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("tail vanishes at x = {x}")]
    TailVanishes { x: f64 },
    #[error("moment index unknown for {0}")]
    UnknownIndex(String),
}

fn invalid(name: &str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub location: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeavinessClass {
    HeavyTailed,
    LightTailed,
}

/// Analytic mean of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mean {
    Finite(f64),
    /// `E(X⁺) = ∞` while `E(X⁻) < ∞`.
    PlusInfinity,
    /// Both parts infinite (Cauchy).
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum TailModel {
    /// `P(X > x) = (x / xmin)^(-alpha)` for `x ≥ xmin`.
    #[serde(rename = "pareto")]
    Pareto { alpha: f64, xmin: f64 },
    /// `P(X > x) = exp(-lambda · x^beta)` for `x ≥ 0`.
    #[serde(rename = "weibull")]
    WeibullType { beta: f64, lambda: f64 },
    /// `P(N = k) = C k^(-(1 + eta))` on `{1, 2, …}`, optionally conditioned on
    /// `N ≤ cap`.
    #[serde(rename = "discrete_power_law")]
    DiscretePowerLaw {
        eta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<u64>,
    },
    /// `P(N > k) = exp(-lambda · k^beta)` on `{1, 2, …}`.
    #[serde(rename = "discrete_weibull")]
    DiscreteWeibull { beta: f64, lambda: f64 },
    /// `P(N = k) = (1 - p)^(k - 1) p` on `{1, 2, …}`.
    #[serde(rename = "geometric")]
    Geometric { p: f64 },
    /// Standard Cauchy, density `1 / (π (1 + x²))`.
    #[serde(rename = "cauchy")]
    Cauchy,
    /// `log X ~ Normal(mu, sigma²)`.
    #[serde(rename = "lognormal")]
    LognormalType { mu: f64, sigma: f64 },
    /// `base + shift`.
    #[serde(rename = "shifted")]
    BoundedBelowShift { base: Box<TailModel>, shift: f64 },
    /// Finitely many atoms. `heavy_extension` marks the atoms as a finite
    /// prefix of an infinite heavy-tailed construction (the zigzag laws), which
    /// changes the reported heaviness and makes the moment index unknown.
    #[serde(rename = "point_mass")]
    PointMass {
        atoms: Vec<Atom>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        heavy_extension: bool,
    },
}

impl fmt::Display for TailModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailModel::Pareto { alpha, xmin } => write!(f, "Pareto(alpha={alpha}, xmin={xmin})"),
            TailModel::WeibullType { beta, lambda } => {
                write!(f, "WeibullType(beta={beta}, lambda={lambda})")
            }
            TailModel::DiscretePowerLaw { eta, cap: None } => write!(f, "DiscretePowerLaw(eta={eta})"),
            TailModel::DiscretePowerLaw { eta, cap: Some(c) } => {
                write!(f, "DiscretePowerLaw(eta={eta}, cap={c})")
            }
            TailModel::DiscreteWeibull { beta, lambda } => {
                write!(f, "DiscreteWeibull(beta={beta}, lambda={lambda})")
            }
            TailModel::Geometric { p } => write!(f, "Geometric(p={p})"),
            TailModel::Cauchy => f.write_str("Cauchy"),
            TailModel::LognormalType { mu, sigma } => write!(f, "Lognormal(mu={mu}, sigma={sigma})"),
            TailModel::BoundedBelowShift { base, shift } => write!(f, "{base} + {shift}"),
            TailModel::PointMass { atoms, .. } => write!(f, "PointMass({} atoms)", atoms.len()),
        }
    }
}

// ---------------------------------------------------------------------------
// Power sums for the discrete power law.
// ---------------------------------------------------------------------------

const DIRECT_TERMS: u64 = 64;

/// Euler–Maclaurin tail functional of `f(j) = j^(-s)`: for integers
/// `a < b`, `Σ_{a<j≤b} f(j) = em_tail(s, a) - em_tail(s, b)`; for `s > 1` it
/// is the full tail `Σ_{j>n} f(j)`. Truncation error at `n ≥ 64` is below
/// `1e-16` relative.
fn em_tail(s: f64, n: f64) -> f64 {
    let integral = if (s - 1.0).abs() < 1e-15 {
        -n.ln()
    } else {
        n.powf(1.0 - s) / (s - 1.0)
    };
    let f = n.powf(-s);
    let d1 = s * f / n;
    let d3 = s * (s + 1.0) * (s + 2.0) * f / n.powi(3);
    let d5 = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * f / n.powi(5);
    integral - 0.5 * f + d1 / 12.0 - d3 / 720.0 + d5 / 30240.0
}

fn direct_sum(s: f64, from: u64, to: u64) -> f64 {
    // smallest terms first
    (from..=to).rev().map(|j| (j as f64).powf(-s)).sum()
}

/// `Σ_{j>n} j^(-s)` for `s > 1`.
pub(crate) fn zeta_tail(s: f64, n: f64) -> f64 {
    debug_assert!(s > 1.0);
    let n = n.floor().max(0.0);
    if n < DIRECT_TERMS as f64 {
        direct_sum(s, n as u64 + 1, DIRECT_TERMS) + em_tail(s, DIRECT_TERMS as f64)
    } else {
        em_tail(s, n)
    }
}

/// Riemann zeta for `s > 1`.
pub fn zeta(s: f64) -> f64 {
    zeta_tail(s, 0.0)
}

/// `Σ_{j=1}^{k} j^(-s)` for any `s > 0`.
pub(crate) fn power_sum(s: f64, k: u64) -> f64 {
    if k <= DIRECT_TERMS {
        direct_sum(s, 1, k)
    } else {
        direct_sum(s, 1, DIRECT_TERMS) + em_tail(s, DIRECT_TERMS as f64) - em_tail(s, k as f64)
    }
}

fn dpl_tail(eta: f64, cap: Option<u64>, x: f64) -> f64 {
    if x < 1.0 {
        return 1.0;
    }
    let s = 1.0 + eta;
    let k = x.floor();
    match cap {
        None => zeta_tail(s, k) / zeta(s),
        Some(cap) => {
            if k >= cap as f64 {
                0.0
            } else {
                let beyond = zeta_tail(s, cap as f64);
                (zeta_tail(s, k) - beyond) / power_sum(s, cap)
            }
        }
    }
}

// ---------------------------------------------------------------------------

impl TailModel {
    pub fn pareto(alpha: f64, xmin: f64) -> Self {
        TailModel::Pareto { alpha, xmin }
    }

    pub fn weibull(beta: f64, lambda: f64) -> Self {
        TailModel::WeibullType { beta, lambda }
    }

    pub fn discrete_power_law(eta: f64) -> Self {
        TailModel::DiscretePowerLaw { eta, cap: None }
    }

    pub fn point_mass(atoms: &[(f64, f64)]) -> Self {
        TailModel::PointMass {
            atoms: atoms
                .iter()
                .map(|&(location, probability)| Atom { location, probability })
                .collect(),
            heavy_extension: false,
        }
    }

    pub fn shifted(base: TailModel, shift: f64) -> Self {
        TailModel::BoundedBelowShift {
            base: Box::new(base),
            shift,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        match self {
            TailModel::Pareto { alpha, xmin } => {
                positive("alpha", *alpha)?;
                positive("xmin", *xmin)
            }
            TailModel::WeibullType { beta, lambda } | TailModel::DiscreteWeibull { beta, lambda } => {
                positive("lambda", *lambda)?;
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return Err(invalid("beta", format!("must lie in (0, 1], got {beta}")));
                }
                Ok(())
            }
            TailModel::DiscretePowerLaw { eta, cap } => {
                positive("eta", *eta)?;
                if *cap == Some(0) {
                    return Err(invalid("cap", "must be ≥ 1"));
                }
                Ok(())
            }
            TailModel::Geometric { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
                }
                Ok(())
            }
            TailModel::Cauchy => Ok(()),
            TailModel::LognormalType { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(invalid("mu", "must be finite"));
                }
                positive("sigma", *sigma)
            }
            TailModel::BoundedBelowShift { base, shift } => {
                if !shift.is_finite() {
                    return Err(invalid("shift", "must be finite"));
                }
                base.validate()
            }
            TailModel::PointMass { atoms, .. } => {
                if atoms.is_empty() {
                    return Err(invalid("atoms", "at least one atom required"));
                }
                let mut total = 0.0;
                for (i, a) in atoms.iter().enumerate() {
                    if !(a.location.is_finite() && a.location >= 0.0) {
                        return Err(invalid("atoms", format!("atom {i}: location must be ≥ 0")));
                    }
                    if !(a.probability > 0.0) {
                        return Err(invalid("atoms", format!("atom {i}: probability must be > 0")));
                    }
                    if i > 0 && atoms[i - 1].location >= a.location {
                        return Err(invalid("atoms", "locations must be strictly increasing"));
                    }
                    total += a.probability;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid("atoms", format!("probabilities sum to {total}, not 1")));
                }
                Ok(())
            }
        }
    }

    pub fn support_lower(&self) -> f64 {
        match self {
            TailModel::Pareto { xmin, .. } => *xmin,
            TailModel::WeibullType { .. } | TailModel::LognormalType { .. } => 0.0,
            TailModel::DiscretePowerLaw { .. } | TailModel::DiscreteWeibull { .. } | TailModel::Geometric { .. } => 1.0,
            TailModel::Cauchy => f64::NEG_INFINITY,
            TailModel::BoundedBelowShift { base, shift } => base.support_lower() + shift,
            TailModel::PointMass { atoms, .. } => atoms[0].location,
        }
    }

    /// True when the model lives on `{1, 2, …}` and can serve as a stopping time.
    pub fn is_positive_integer_valued(&self) -> bool {
        match self {
            TailModel::DiscretePowerLaw { .. } | TailModel::DiscreteWeibull { .. } | TailModel::Geometric { .. } => {
                true
            }
            TailModel::PointMass { atoms, .. } => atoms.iter().all(|a| a.location >= 1.0 && a.location.fract() == 0.0),
            _ => false,
        }
    }

    /// `P(X > x)`.
    pub fn tail(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self {
            TailModel::Pareto { alpha, xmin } => {
                if x < *xmin {
                    1.0
                } else {
                    (x / xmin).powf(-alpha)
                }
            }
            TailModel::WeibullType { beta, lambda } => {
                if x < 0.0 {
                    1.0
                } else {
                    (-lambda * x.powf(*beta)).exp()
                }
            }
            TailModel::DiscretePowerLaw { eta, cap } => dpl_tail(*eta, *cap, x),
            TailModel::DiscreteWeibull { beta, lambda } => {
                if x < 1.0 {
                    1.0
                } else {
                    (-lambda * x.floor().powf(*beta)).exp()
                }
            }
            TailModel::Geometric { p } => {
                if x < 1.0 {
                    1.0
                } else {
                    (x.floor() * (-p).ln_1p()).exp()
                }
            }
            TailModel::Cauchy => {
                if x > 0.0 {
                    (1.0 / x).atan() / PI
                } else {
                    0.5 + (-x).atan() / PI
                }
            }
            TailModel::LognormalType { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    0.5 * erfc((x.ln() - mu) / (sigma * SQRT_2))
                }
            }
            TailModel::BoundedBelowShift { base, shift } => base.tail(x - shift),
            TailModel::PointMass { atoms, .. } => {
                // largest locations first: their masses are the smallest
                atoms
                    .iter()
                    .rev()
                    .take_while(|a| a.location > x)
                    .map(|a| a.probability)
                    .sum()
            }
        }
    }

    /// `R(x) = -log P(X > x)`.
    ///
    /// Closed forms are used where they exist, so the hazard of e.g. a Weibull
    /// model stays finite even where `tail` underflows. `TailVanishes` is
    /// returned only when no closed form is available and the tail is zero.
    pub fn hazard(&self, x: f64) -> Result<f64, ModelError> {
        let h = match self {
            TailModel::Pareto { alpha, xmin } => {
                if x < *xmin {
                    0.0
                } else {
                    alpha * (x / xmin).ln()
                }
            }
            TailModel::WeibullType { beta, lambda } => {
                if x < 0.0 {
                    0.0
                } else {
                    lambda * x.powf(*beta)
                }
            }
            TailModel::DiscreteWeibull { beta, lambda } => {
                if x < 1.0 {
                    0.0
                } else {
                    lambda * x.floor().powf(*beta)
                }
            }
            TailModel::Geometric { p } => {
                if x < 1.0 {
                    0.0
                } else {
                    -x.floor() * (-p).ln_1p()
                }
            }
            TailModel::LognormalType { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = (x.ln() - mu) / (sigma * SQRT_2);
                    if z < 20.0 {
                        -(0.5 * erfc(z)).ln()
                    } else {
                        // asymptotic erfc, relative error below 1e-9 for z ≥ 20
                        let w = 1.0 / (2.0 * z * z);
                        let series = 1.0 - w + 3.0 * w * w - 15.0 * w.powi(3);
                        z * z + (z * PI.sqrt()).ln() + 2f64.ln() - series.ln()
                    }
                }
            }
            TailModel::BoundedBelowShift { base, shift } => return base.hazard(x - shift),
            _ => {
                let t = self.tail(x);
                if t <= 0.0 {
                    return Err(ModelError::TailVanishes { x });
                }
                -t.ln()
            }
        };
        Ok(h)
    }

    /// Moment index `sup{s ≥ 0 : E((X⁺)^s) < ∞}`.
    pub fn moment_index_analytic(&self) -> Result<ExtReal, ModelError> {
        Ok(match self {
            TailModel::Pareto { alpha, .. } => ExtReal::Finite(*alpha),
            TailModel::DiscretePowerLaw { eta, cap: None } => ExtReal::Finite(*eta),
            TailModel::Cauchy => ExtReal::Finite(1.0),
            TailModel::BoundedBelowShift { base, .. } => return base.moment_index_analytic(),
            TailModel::PointMass {
                heavy_extension: true, ..
            } => return Err(ModelError::UnknownIndex(self.to_string())),
            _ => ExtReal::Infinite,
        })
    }

    /// Moment index of the left part `X⁻`.
    pub fn left_moment_index_analytic(&self) -> ExtReal {
        match self {
            TailModel::Cauchy => ExtReal::Finite(1.0),
            TailModel::BoundedBelowShift { base, .. } => base.left_moment_index_analytic(),
            _ => ExtReal::Infinite,
        }
    }

    pub fn heaviness(&self) -> HeavinessClass {
        use HeavinessClass::*;
        match self {
            TailModel::Pareto { .. } | TailModel::Cauchy | TailModel::LognormalType { .. } => HeavyTailed,
            TailModel::WeibullType { beta, .. } | TailModel::DiscreteWeibull { beta, .. } => {
                if *beta < 1.0 {
                    HeavyTailed
                } else {
                    LightTailed
                }
            }
            TailModel::DiscretePowerLaw { cap, .. } => {
                if cap.is_none() {
                    HeavyTailed
                } else {
                    LightTailed
                }
            }
            TailModel::Geometric { .. } => LightTailed,
            TailModel::BoundedBelowShift { base, .. } => base.heaviness(),
            TailModel::PointMass { heavy_extension, .. } => {
                if *heavy_extension {
                    HeavyTailed
                } else {
                    LightTailed
                }
            }
        }
    }

    pub fn is_heavy_tailed(&self) -> bool {
        self.heaviness() == HeavinessClass::HeavyTailed
    }

    pub fn mean(&self) -> Mean {
        match self {
            TailModel::Pareto { alpha, xmin } => {
                if *alpha > 1.0 {
                    Mean::Finite(alpha * xmin / (alpha - 1.0))
                } else {
                    Mean::PlusInfinity
                }
            }
            TailModel::WeibullType { beta, lambda } => Mean::Finite(lambda.powf(-1.0 / beta) * gamma(1.0 + 1.0 / beta)),
            TailModel::DiscretePowerLaw { eta, cap } => match cap {
                None if *eta > 1.0 => Mean::Finite(zeta(*eta) / zeta(1.0 + eta)),
                None => Mean::PlusInfinity,
                Some(c) => Mean::Finite(power_sum(*eta, *c) / power_sum(1.0 + eta, *c)),
            },
            TailModel::DiscreteWeibull { beta, lambda } => {
                // E N = Σ_{k≥0} P(N > k)
                let mut sum = 1.0;
                let mut k = 1.0_f64;
                loop {
                    let t = (-lambda * k.powf(*beta)).exp();
                    sum += t;
                    if t < 1e-17 * sum {
                        break;
                    }
                    k += 1.0;
                }
                Mean::Finite(sum)
            }
            TailModel::Geometric { p } => Mean::Finite(1.0 / p),
            TailModel::Cauchy => Mean::Undefined,
            TailModel::LognormalType { mu, sigma } => Mean::Finite((mu + 0.5 * sigma * sigma).exp()),
            TailModel::BoundedBelowShift { base, shift } => match base.mean() {
                Mean::Finite(m) => Mean::Finite(m + shift),
                other => other,
            },
            TailModel::PointMass { atoms, .. } => Mean::Finite(atoms.iter().map(|a| a.location * a.probability).sum()),
        }
    }

    /// `E|X| < ∞`.
    pub fn has_finite_abs_mean(&self) -> bool {
        matches!(self.mean(), Mean::Finite(_))
    }

    pub fn sampler(&self) -> Result<Sampler, ModelError> {
        self.validate()?;
        Ok(Sampler::new(self.clone()))
    }

    /// Draws `count` values from `stream`.
    pub fn sample(&self, stream: SeedStream, count: usize) -> Result<Vec<f64>, ModelError> {
        let sampler = self.sampler()?;
        let mut rng = stream.rng();
        Ok((0..count).map(|_| sampler.draw(&mut rng)).collect())
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

const DPL_TABLE: usize = 4096;

/// A validated model with whatever lookup tables its inverse CDF needs.
#[derive(Debug, Clone)]
pub struct Sampler {
    model: TailModel,
    /// `tails[k] = P(X > k)` for discrete power laws, or the tail after each
    /// atom for point masses.
    tails: Vec<f64>,
}

impl Sampler {
    fn new(model: TailModel) -> Self {
        let tails = match &model {
            TailModel::DiscretePowerLaw { eta, cap } => {
                let len = cap.map_or(DPL_TABLE, |c| (c as usize).min(DPL_TABLE));
                (0..=len).map(|k| dpl_tail(*eta, *cap, k as f64)).collect()
            }
            TailModel::PointMass { atoms, .. } => {
                let mut tails = vec![0.0; atoms.len()];
                let mut acc = 0.0;
                for i in (0..atoms.len()).rev() {
                    tails[i] = acc;
                    acc += atoms[i].probability;
                }
                tails
            }
            _ => Vec::new(),
        };
        Self { model, tails }
    }

    pub fn model(&self) -> &TailModel {
        &self.model
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.from_uniform(uniform(rng))
    }

    /// Inverse CDF: the smallest `x` with `P(X ≤ x) ≥ u`, for `u ∈ [0, 1)`.
    pub fn from_uniform(&self, u: f64) -> f64 {
        // v ∈ (0, 1] is the matching tail level
        let v = 1.0 - u;
        Self::invert(&self.model, &self.tails, u, v)
    }

    fn invert(model: &TailModel, tails: &[f64], u: f64, v: f64) -> f64 {
        match model {
            TailModel::Pareto { alpha, xmin } => xmin * v.powf(-1.0 / alpha),
            TailModel::WeibullType { beta, lambda } => (-v.ln() / lambda).powf(1.0 / beta),
            TailModel::DiscreteWeibull { beta, lambda } => (-v.ln() / lambda).powf(1.0 / beta).ceil().max(1.0),
            TailModel::Geometric { p } => (v.ln() / (-p).ln_1p()).ceil().max(1.0),
            TailModel::Cauchy => (PI * (u - 0.5)).tan(),
            TailModel::LognormalType { mu, sigma } => {
                let z = -SQRT_2 * erfc_inv(2.0 * u);
                (mu + sigma * z).exp()
            }
            TailModel::BoundedBelowShift { base, shift } => Self::invert(base, tails, u, v) + shift,
            TailModel::DiscretePowerLaw { eta, cap } => Self::invert_dpl(*eta, *cap, tails, v),
            TailModel::PointMass { atoms, .. } => {
                let i = tails.partition_point(|&t| t > v).min(atoms.len() - 1);
                atoms[i].location
            }
        }
    }

    fn invert_dpl(eta: f64, cap: Option<u64>, tails: &[f64], v: f64) -> f64 {
        let last = tails.len() - 1;
        if tails[last] <= v {
            // smallest k ≥ 1 with P(N > k) ≤ v
            let k = tails[1..].partition_point(|&t| t > v) + 1;
            return k as f64;
        }
        // beyond the table: bracket from the asymptotic inverse, then bisect
        let s = 1.0 + eta;
        let z = zeta(s);
        let tail_at = |k: f64| dpl_tail(eta, cap, k);
        let mut lo = last as f64;
        let guess = (v * eta * z).powf(-1.0 / eta).floor();
        let mut hi = guess.max(lo + 1.0);
        if let Some(c) = cap {
            hi = hi.min(c as f64);
        }
        while tail_at(hi) > v {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1.0 && (hi - lo) > hi * 1e-15 {
            let mid = ((lo + hi) * 0.5).floor();
            if tail_at(mid) > v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pareto_tail_and_hazard() {
        let m = TailModel::pareto(2.0, 1.0);
        assert_abs_diff_eq!(m.tail(10.0), 0.01, epsilon = 1e-15);
        assert_eq!(m.tail(0.5), 1.0);
        assert_eq!(m.hazard(0.5).unwrap(), 0.0);
        let m = TailModel::pareto(2.5, 1.0);
        assert_abs_diff_eq!(m.hazard(std::f64::consts::E).unwrap(), 2.5, epsilon = 1e-14);
    }

    #[test]
    fn weibull_hazard_at_one() {
        let m = TailModel::weibull(0.6, 1.0);
        assert_abs_diff_eq!(m.hazard(1.0).unwrap(), 1.0, epsilon = 1e-15);
        // closed form survives tail underflow
        assert!(m.tail(1e60) == 0.0);
        assert!(m.hazard(1e60).unwrap().is_finite());
    }

    #[test]
    fn below_support_is_one() {
        let models = [
            TailModel::pareto(2.0, 3.0),
            TailModel::weibull(0.5, 1.0),
            TailModel::discrete_power_law(1.0),
            TailModel::Geometric { p: 0.3 },
            TailModel::LognormalType { mu: 0.0, sigma: 1.0 },
            TailModel::shifted(TailModel::pareto(2.0, 1.0), -2.0),
            TailModel::point_mass(&[(2.0, 0.5), (3.0, 0.5)]),
        ];
        for m in &models {
            assert_eq!(m.tail(m.support_lower() - 1e-9), 1.0, "{m}");
        }
    }

    #[test]
    fn discrete_power_law_normalizer() {
        let m = TailModel::discrete_power_law(1.0);
        assert_eq!(m.tail(0.5), 1.0);
        // P(N > 1) = 1 - P(N = 1) = 1 - 6/π²
        let oracle = 1.0 - 6.0 / (PI * PI);
        assert_abs_diff_eq!(m.tail(1.5), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle, 0.392073, epsilon = 1e-6);
        assert_abs_diff_eq!(zeta(2.0), PI * PI / 6.0, epsilon = 1e-13);
        assert_abs_diff_eq!(zeta(4.0), PI.powi(4) / 90.0, epsilon = 1e-13);
    }

    #[test]
    fn zeta_tail_matches_brute_force() {
        // brute-force partial sums plus an integral bound on the remainder
        for &s in &[1.5, 2.0, 2.5, 3.0] {
            for &n in &[0.0, 3.0, 63.0, 64.0, 100.0, 5000.0] {
                let upper = 2_000_000u64;
                let brute: f64 = ((n as u64 + 1)..=upper).rev().map(|j| (j as f64).powf(-s)).sum();
                let rest = em_tail(s, upper as f64);
                let got = zeta_tail(s, n);
                assert!((got - (brute + rest)).abs() / got < 1e-12, "s={s} n={n}");
            }
        }
        let brute: f64 = (1..=10_000u64).rev().map(|j| (j as f64).powf(-0.5)).sum();
        assert!((power_sum(0.5, 10_000) - brute).abs() < 1e-10);
    }

    #[test]
    fn capped_power_law_is_normalized() {
        let m = TailModel::DiscretePowerLaw {
            eta: 0.5,
            cap: Some(100),
        };
        assert_eq!(m.tail(100.0), 0.0);
        assert_eq!(m.tail(0.0), 1.0);
        let s = 1.5;
        let p1 = 1.0 / power_sum(s, 100);
        assert_abs_diff_eq!(m.tail(1.0), 1.0 - p1, epsilon = 1e-14);
        assert_eq!(m.heaviness(), HeavinessClass::LightTailed);
        assert_eq!(m.moment_index_analytic().unwrap(), ExtReal::Infinite);
        assert!(matches!(m.hazard(150.0), Err(ModelError::TailVanishes { .. })));
    }

    #[test]
    fn inverse_cdf_examples() {
        let s = TailModel::pareto(2.0, 1.0).sampler().unwrap();
        assert_abs_diff_eq!(s.from_uniform(0.25), 2.0 / 3f64.sqrt(), epsilon = 1e-12);
        let g = TailModel::Geometric { p: 0.5 }.sampler().unwrap();
        assert_eq!(g.from_uniform(0.6), 2.0);
        assert_eq!(g.from_uniform(0.0), 1.0);
        assert_eq!(g.from_uniform(0.4), 1.0);
    }

    #[test]
    fn dpl_inverse_is_generalized_inverse() {
        for &eta in &[0.5, 1.5] {
            let m = TailModel::discrete_power_law(eta);
            let s = m.sampler().unwrap();
            for &u in &[0.0, 0.1, 0.5, 0.9, 0.99, 0.999, 0.99999, 1.0 - 1e-12] {
                let k = s.from_uniform(u);
                let v = 1.0 - u;
                assert!(m.tail(k) <= v, "eta={eta} u={u} k={k}");
                if k > 1.0 && k < 1e15 {
                    assert!(m.tail(k - 1.0) > v, "eta={eta} u={u} k={k}");
                }
            }
        }
    }

    #[test]
    fn point_mass_steps() {
        let m = TailModel::point_mass(&[(1.0, 0.25), (2.0, 0.25), (5.0, 0.5)]);
        m.validate().unwrap();
        assert_eq!(m.tail(0.999), 1.0);
        assert_eq!(m.tail(1.0), 0.75);
        assert_eq!(m.tail(4.999), 0.5);
        assert_eq!(m.tail(5.0), 0.0);
        let s = m.sampler().unwrap();
        assert_eq!(s.from_uniform(0.1), 1.0);
        assert_eq!(s.from_uniform(0.3), 2.0);
        assert_eq!(s.from_uniform(0.75), 5.0);
        let bad = TailModel::point_mass(&[(1.0, 0.5), (1.0, 0.5)]);
        assert!(bad.validate().is_err());
        let bad = TailModel::point_mass(&[(1.0, 0.5), (2.0, 0.4)]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn shift_is_exact_translation() {
        let base = TailModel::pareto(2.5, 1.0);
        let m = TailModel::shifted(base.clone(), -2.5);
        for &x in &[-3.0, -1.5, 0.0, 1.0, 10.0, 1e4] {
            assert_eq!(m.tail(x), base.tail(x + 2.5));
        }
        assert_eq!(m.support_lower(), -1.5);
        match m.mean() {
            Mean::Finite(v) => assert_abs_diff_eq!(v, 5.0 / 3.0 - 2.5, epsilon = 1e-14),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn analytic_metadata() {
        assert_eq!(
            TailModel::pareto(2.5, 1.0).moment_index_analytic().unwrap(),
            ExtReal::Finite(2.5)
        );
        assert_eq!(
            TailModel::discrete_power_law(0.5).moment_index_analytic().unwrap(),
            ExtReal::Finite(0.5)
        );
        assert_eq!(
            TailModel::Geometric { p: 0.3 }.moment_index_analytic().unwrap(),
            ExtReal::Infinite
        );
        assert_eq!(TailModel::pareto(0.7, 1.0).heaviness(), HeavinessClass::HeavyTailed);
        assert_eq!(TailModel::Geometric { p: 0.9 }.heaviness(), HeavinessClass::LightTailed);
        assert_eq!(TailModel::weibull(0.6, 1.0).heaviness(), HeavinessClass::HeavyTailed);
        assert_eq!(TailModel::weibull(1.0, 1.0).heaviness(), HeavinessClass::LightTailed);
        let zig = TailModel::PointMass {
            atoms: vec![Atom {
                location: 1.0,
                probability: 1.0,
            }],
            heavy_extension: true,
        };
        assert!(matches!(zig.moment_index_analytic(), Err(ModelError::UnknownIndex(_))));
        match TailModel::discrete_power_law(1.5).mean() {
            Mean::Finite(v) => assert_abs_diff_eq!(v, zeta(1.5) / zeta(2.5), epsilon = 1e-12),
            other => panic!("{other:?}"),
        }
        match TailModel::weibull(1.0, 2.0).mean() {
            Mean::Finite(v) => assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn discrete_weibull_mean_by_summation() {
        let m = TailModel::DiscreteWeibull { beta: 0.7, lambda: 1.0 };
        let brute: f64 = (0..100_000).map(|k| m.tail(k as f64)).sum();
        match m.mean() {
            Mean::Finite(v) => assert_abs_diff_eq!(v, brute, epsilon = 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_form() {
        let m: TailModel = serde_json::from_str(r#"{"family":"pareto","alpha":2.0,"xmin":1.0}"#).unwrap();
        assert_eq!(m, TailModel::pareto(2.0, 1.0));
        let shifted: TailModel = serde_json::from_str(
            r#"{"family":"shifted","shift":-2.5,"base":{"family":"pareto","alpha":2.5,"xmin":1.0}}"#,
        )
        .unwrap();
        assert_eq!(shifted.support_lower(), -1.5);
        assert!(serde_json::from_str::<TailModel>(r#"{"family":"pareto","alpha":2.0,"xmin":1.0,"beta":3}"#).is_err());
        assert!(serde_json::from_str::<TailModel>(r#"{"family":"nope"}"#).is_err());
    }

    #[test]
    fn lognormal_hazard_past_underflow() {
        let m = TailModel::LognormalType { mu: 0.0, sigma: 0.5 };
        // the two branches meet at z = 20
        let x = (20.0 * 0.5 * SQRT_2).exp();
        let below = m.hazard(x * (1.0 - 1e-12)).unwrap();
        let above = m.hazard(x * (1.0 + 1e-12)).unwrap();
        assert!((below - above).abs() < 1e-8 * below, "{below} vs {above}");
        assert_eq!(m.tail(1e30), 0.0);
        let far = m.hazard(1e30).unwrap();
        let z = 1e30_f64.ln() / (0.5 * SQRT_2);
        assert!(far > z * z && far < z * z + 10.0);
    }
}
