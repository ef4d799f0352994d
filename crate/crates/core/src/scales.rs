//! Asymptotic scales and their grid indices.
//!
//! A scale is a concave, increasing, unbounded `h` with `h(0) = 0`. The index
//! of a model on a scale, `liminf R(x) / h(x)`, is approximated by the minimum
//! of the ratio over the tail window `[x_hi / 10, x_hi]` of a geometric grid.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{ModelError, TailModel};

/// The tail window of a grid is `[x_hi / WINDOW_DIVISOR, x_hi]`.
pub const WINDOW_DIVISOR: f64 = 10.0;

/// Current version tag of serialized scale records.
pub const SCALE_RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("invalid scale parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("scale is not concave: {0}")]
    NotConcave(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("tail vanishes at x = {x}")]
    TailVanishes { x: f64 },
    #[error("model is not heavy-tailed")]
    NotHeavyTailed,
    #[error("lower scale reaches the hazard at x = {x}")]
    CrossingImpossible { x: f64 },
    #[error("hazard is not sublinear over the window")]
    NotSublinear,
    #[error("no concave chord continues the scale past x = {x}")]
    NoConcaveChord { x: f64 },
    #[error("hazard is degenerate on the tail window at x = {x}")]
    DegenerateHazard { x: f64 },
    #[error("malformed scale record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(ModelError),
}

impl From<ModelError> for ScaleError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::TailVanishes { x } => ScaleError::TailVanishes { x },
            other => ScaleError::Model(other),
        }
    }
}

fn invalid(name: &str, reason: impl Into<String>) -> ScaleError {
    ScaleError::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakpoint {
    pub x: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", deny_unknown_fields)]
pub enum ScaleFunction {
    /// `a · log(1 + x)`
    #[serde(rename = "log")]
    LogScale { a: f64 },
    /// `a · x^beta`, `beta ∈ (0, 1)`
    #[serde(rename = "power")]
    PowerScale { a: f64, beta: f64 },
    /// `a · √x`
    #[serde(rename = "sqrt")]
    SqrtScale { a: f64 },
    /// Linear interpolation of `breakpoints` (the first is the origin),
    /// continued with `tail_slope` past the last one.
    #[serde(rename = "piecewise_linear")]
    PiecewiseLinear {
        breakpoints: Vec<Breakpoint>,
        tail_slope: f64,
    },
    /// `x ↦ base(factor · x)`
    #[serde(rename = "dilated")]
    Dilated { base: Box<ScaleFunction>, factor: f64 },
    /// Pointwise minimum of two scales.
    #[serde(rename = "min")]
    Min {
        first: Box<ScaleFunction>,
        second: Box<ScaleFunction>,
    },
}

impl ScaleFunction {
    pub fn log(a: f64) -> Self {
        ScaleFunction::LogScale { a }
    }

    pub fn power(a: f64, beta: f64) -> Self {
        ScaleFunction::PowerScale { a, beta }
    }

    pub fn sqrt(a: f64) -> Self {
        ScaleFunction::SqrtScale { a }
    }

    pub fn piecewise(points: &[(f64, f64)], tail_slope: f64) -> Self {
        ScaleFunction::PiecewiseLinear {
            breakpoints: points.iter().map(|&(x, h)| Breakpoint { x, h }).collect(),
            tail_slope,
        }
    }

    pub fn dilated(self, factor: f64) -> Self {
        ScaleFunction::Dilated {
            base: Box::new(self),
            factor,
        }
    }

    pub fn validate(&self) -> Result<(), ScaleError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        match self {
            ScaleFunction::LogScale { a } | ScaleFunction::SqrtScale { a } => positive("a", *a),
            ScaleFunction::PowerScale { a, beta } => {
                positive("a", *a)?;
                if !(*beta > 0.0 && *beta < 1.0) {
                    return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
                }
                Ok(())
            }
            ScaleFunction::PiecewiseLinear {
                breakpoints,
                tail_slope,
            } => validate_piecewise(breakpoints, *tail_slope),
            ScaleFunction::Dilated { base, factor } => {
                positive("factor", *factor)?;
                base.validate()
            }
            ScaleFunction::Min { first, second } => {
                first.validate()?;
                second.validate()
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScaleFunction::LogScale { a } => a * x.ln_1p(),
            ScaleFunction::PowerScale { a, beta } => a * x.powf(*beta),
            ScaleFunction::SqrtScale { a } => a * x.sqrt(),
            ScaleFunction::PiecewiseLinear {
                breakpoints,
                tail_slope,
            } => eval_piecewise(breakpoints, *tail_slope, x),
            ScaleFunction::Dilated { base, factor } => base.eval(factor * x),
            ScaleFunction::Min { first, second } => first.eval(x).min(second.eval(x)),
        }
    }

    /// The unique `x ≥ 0` with `h(x) = y`.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match self {
            ScaleFunction::LogScale { a } => (y / a).exp_m1(),
            ScaleFunction::PowerScale { a, beta } => (y / a).powf(1.0 / beta),
            ScaleFunction::SqrtScale { a } => (y / a).powi(2),
            ScaleFunction::PiecewiseLinear {
                breakpoints,
                tail_slope,
            } => {
                let last = breakpoints[breakpoints.len() - 1];
                if y >= last.h {
                    return last.x + (y - last.h) / tail_slope;
                }
                let i = breakpoints.partition_point(|b| b.h <= y);
                let (p, q) = (breakpoints[i - 1], breakpoints[i]);
                p.x + (y - p.h) * (q.x - p.x) / (q.h - p.h)
            }
            ScaleFunction::Dilated { base, factor } => base.inverse(y) / factor,
            ScaleFunction::Min { first, second } => first.inverse(y).max(second.inverse(y)),
        }
    }

    /// `c · h`.
    pub fn scaled_by(&self, c: f64) -> ScaleFunction {
        match self {
            ScaleFunction::LogScale { a } => ScaleFunction::LogScale { a: a * c },
            ScaleFunction::PowerScale { a, beta } => ScaleFunction::PowerScale { a: a * c, beta: *beta },
            ScaleFunction::SqrtScale { a } => ScaleFunction::SqrtScale { a: a * c },
            ScaleFunction::PiecewiseLinear {
                breakpoints,
                tail_slope,
            } => ScaleFunction::PiecewiseLinear {
                breakpoints: breakpoints.iter().map(|b| Breakpoint { x: b.x, h: b.h * c }).collect(),
                tail_slope: tail_slope * c,
            },
            ScaleFunction::Dilated { base, factor } => ScaleFunction::Dilated {
                base: Box::new(base.scaled_by(c)),
                factor: *factor,
            },
            ScaleFunction::Min { first, second } => ScaleFunction::Min {
                first: Box::new(first.scaled_by(c)),
                second: Box::new(second.scaled_by(c)),
            },
        }
    }

    /// Segment slopes of a piecewise-linear scale, tail slope last.
    pub fn slopes(&self) -> Option<Vec<f64>> {
        match self {
            ScaleFunction::PiecewiseLinear {
                breakpoints,
                tail_slope,
            } => {
                let mut s: Vec<f64> = breakpoints
                    .windows(2)
                    .map(|w| (w[1].h - w[0].h) / (w[1].x - w[0].x))
                    .collect();
                s.push(*tail_slope);
                Some(s)
            }
            _ => None,
        }
    }

    /// Versioned JSON record.
    pub fn to_record(&self) -> String {
        serde_json::to_string(&ScaleRecord {
            version: SCALE_RECORD_VERSION,
            scale: self.clone(),
        })
        .expect("scale serializes")
    }

    pub fn from_record(s: &str) -> Result<ScaleFunction, ScaleError> {
        let rec: ScaleRecord = serde_json::from_str(s).map_err(|e| ScaleError::Malformed(e.to_string()))?;
        if rec.version != SCALE_RECORD_VERSION {
            return Err(ScaleError::Malformed(format!("unsupported version {}", rec.version)));
        }
        rec.scale.validate()?;
        Ok(rec.scale)
    }

    /// Breakpoint table of a piecewise-linear scale: a `# tail_slope=` line,
    /// then `x,h` rows.
    pub fn to_breakpoint_csv(&self) -> Option<String> {
        let ScaleFunction::PiecewiseLinear {
            breakpoints,
            tail_slope,
        } = self
        else {
            return None;
        };
        let mut out = format!("# tail_slope={tail_slope:e}\nx,h\n");
        for b in breakpoints {
            let _ = writeln!(out, "{:e},{:e}", b.x, b.h);
        }
        Some(out)
    }

    pub fn from_breakpoint_csv(s: &str) -> Result<ScaleFunction, ScaleError> {
        let mut lines = s.lines();
        let tail_slope = lines
            .next()
            .and_then(|l| l.strip_prefix("# tail_slope="))
            .ok_or_else(|| ScaleError::Malformed("missing tail_slope line".into()))?
            .trim()
            .parse::<f64>()
            .map_err(|e| ScaleError::Malformed(e.to_string()))?;
        if lines.next().map(str::trim) != Some("x,h") {
            return Err(ScaleError::Malformed("missing x,h header".into()));
        }
        let mut breakpoints = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (x, h) = line
                .split_once(',')
                .ok_or_else(|| ScaleError::Malformed(format!("row {i}: expected two columns")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| ScaleError::Malformed(format!("row {i}: {e}")))
            };
            breakpoints.push(Breakpoint {
                x: parse(x)?,
                h: parse(h)?,
            });
        }
        let scale = ScaleFunction::PiecewiseLinear {
            breakpoints,
            tail_slope,
        };
        scale.validate()?;
        Ok(scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleRecord {
    pub version: u32,
    pub scale: ScaleFunction,
}

fn validate_piecewise(bps: &[Breakpoint], tail_slope: f64) -> Result<(), ScaleError> {
    if bps.is_empty() || bps[0].x != 0.0 || bps[0].h != 0.0 {
        return Err(invalid("breakpoints", "first breakpoint must be the origin"));
    }
    if !(tail_slope.is_finite() && tail_slope > 0.0) {
        return Err(invalid(
            "tail_slope",
            format!("must be finite and > 0, got {tail_slope}"),
        ));
    }
    let mut prev_slope = f64::INFINITY;
    for (i, w) in bps.windows(2).enumerate() {
        let (p, q) = (w[0], w[1]);
        if !(q.x > p.x) || !q.x.is_finite() {
            return Err(invalid(
                "breakpoints",
                format!("x not strictly increasing at {}", i + 1),
            ));
        }
        if !(q.h > p.h) || !q.h.is_finite() {
            return Err(invalid(
                "breakpoints",
                format!("h not strictly increasing at {}", i + 1),
            ));
        }
        let slope = (q.h - p.h) / (q.x - p.x);
        if slope > prev_slope * (1.0 + 1e-12) {
            return Err(ScaleError::NotConcave(format!(
                "slope rises from {prev_slope} to {slope} at breakpoint {}",
                i + 1
            )));
        }
        prev_slope = slope;
    }
    if tail_slope > prev_slope * (1.0 + 1e-12) {
        return Err(ScaleError::NotConcave(format!(
            "tail slope {tail_slope} exceeds last chord slope {prev_slope}"
        )));
    }
    Ok(())
}

fn eval_piecewise(bps: &[Breakpoint], tail_slope: f64, x: f64) -> f64 {
    let last = bps[bps.len() - 1];
    if x >= last.x {
        return last.h + tail_slope * (x - last.x);
    }
    if x <= 0.0 {
        return 0.0;
    }
    let i = bps.partition_point(|b| b.x <= x);
    let (p, q) = (bps[i - 1], bps[i]);
    if x == p.x {
        return p.h;
    }
    p.h + (q.h - p.h) * ((x - p.x) / (q.x - p.x))
}

// ---------------------------------------------------------------------------
// Grids and ratio traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn new(x_lo: f64, x_hi: f64, points: usize) -> Result<Self, ScaleError> {
        let g = GridSpec {
            x_lo,
            x_hi,
            points,
            spacing: Spacing::Geometric,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ScaleError> {
        if !(self.x_lo.is_finite() && self.x_lo > 0.0) {
            return Err(ScaleError::InvalidGrid(format!("x_lo must be > 0, got {}", self.x_lo)));
        }
        if !(self.x_hi.is_finite() && self.x_hi >= 100.0 * self.x_lo) {
            return Err(ScaleError::InvalidGrid(format!(
                "x_hi / x_lo must be ≥ 100, got {} / {}",
                self.x_hi, self.x_lo
            )));
        }
        if self.points < 16 {
            return Err(ScaleError::InvalidGrid(format!(
                "need ≥ 16 points, got {}",
                self.points
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.points;
        let log_lo = self.x_lo.ln();
        let step = (self.x_hi.ln() - log_lo) / (n - 1) as f64;
        let mut xs: Vec<f64> = (0..n).map(|i| (log_lo + step * i as f64).exp()).collect();
        xs[0] = self.x_lo;
        xs[n - 1] = self.x_hi;
        xs
    }

    pub fn window_lo(&self) -> f64 {
        self.x_hi / WINDOW_DIVISOR
    }

    pub fn in_window(&self, x: f64) -> bool {
        x >= self.window_lo() * (1.0 - 1e-12)
    }

    /// The same grid multiplied by `c`.
    pub fn scaled(&self, c: f64) -> GridSpec {
        GridSpec {
            x_lo: self.x_lo * c,
            x_hi: self.x_hi * c,
            ..*self
        }
    }
}

/// A ratio trace over a grid and its minimum over the tail window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioLiminfEstimate {
    pub value: f64,
    pub grid: GridSpec,
    pub window_lo: f64,
    pub trace: Vec<(f64, f64)>,
}

impl RatioLiminfEstimate {
    pub fn from_trace(grid: GridSpec, trace: Vec<(f64, f64)>) -> Self {
        let value = trace
            .iter()
            .filter(|(x, _)| grid.in_window(*x))
            .map(|&(_, r)| r)
            .fold(f64::INFINITY, f64::min);
        Self {
            value,
            grid,
            window_lo: grid.window_lo(),
            trace,
        }
    }

    /// Trace of `num(x) / den(x)` over the grid.
    pub fn of_ratio(grid: &GridSpec, num: impl Fn(f64) -> f64, den: impl Fn(f64) -> f64) -> Self {
        let trace = grid.points().into_iter().map(|x| (x, num(x) / den(x))).collect();
        Self::from_trace(*grid, trace)
    }

    pub fn window(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.trace.iter().filter(|(x, _)| self.grid.in_window(*x))
    }

    /// Largest ratio over the tail window.
    pub fn window_max(&self) -> f64 {
        self.window().map(|&(_, r)| r).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Least-squares slope of `log ratio` against `log x` over the tail window.
    pub fn window_log_slope(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .window()
            .filter(|(_, r)| *r > 0.0 && r.is_finite())
            .map(|&(x, r)| (x.ln(), r.ln()))
            .collect();
        least_squares_slope(&pts)
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Checks `h(cx) ≥ c h(x)` for `c < 1` and `h(cx) ≤ c h(x)` for `c > 1` at
/// every grid point.
pub fn check_concave_scaling(h: &ScaleFunction, c: f64, grid: &GridSpec) -> Result<bool, ScaleError> {
    h.validate()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("c", format!("must be > 0, got {c}")));
    }
    let tol = 1e-12;
    Ok(grid.points().into_iter().all(|x| {
        let lhs = h.eval(c * x);
        let rhs = c * h.eval(x);
        let slack = tol * lhs.abs().max(rhs.abs());
        if c < 1.0 {
            lhs >= rhs - slack
        } else if c > 1.0 {
            lhs <= rhs + slack
        } else {
            (lhs - rhs).abs() <= slack
        }
    }))
}

/// Grid proxy of `liminf R(x) / h(x)` for an arbitrary hazard.
pub fn scale_index_of_hazard(
    hazard: impl Fn(f64) -> Result<f64, ModelError>,
    h: &ScaleFunction,
    grid: &GridSpec,
) -> Result<RatioLiminfEstimate, ScaleError> {
    grid.validate()?;
    let mut trace = Vec::with_capacity(grid.points);
    for x in grid.points() {
        let r = hazard(x)?;
        trace.push((x, r / h.eval(x)));
    }
    Ok(RatioLiminfEstimate::from_trace(*grid, trace))
}

pub fn scale_index(model: &TailModel, h: &ScaleFunction, grid: &GridSpec) -> Result<RatioLiminfEstimate, ScaleError> {
    h.validate()?;
    scale_index_of_hazard(|x| model.hazard(x), h, grid)
}

/// Least concave majorant of `points` (sorted by `x`, starting at the
/// origin). Collinear interior points are dropped.
pub(crate) fn upper_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Piecewise-linear natural scale built from the hazard sampled on `grid`.
///
/// The least concave majorant of `{(0, 0)} ∪ {(x_i, R(x_i))}` is scaled down
/// by the minimum of `R / majorant` over the tail window, so the result is
/// concave, passes through the origin, stays below the hazard on the tail
/// window and touches it there.
pub fn natural_scale_from_hazard(model: &TailModel, grid: &GridSpec) -> Result<ScaleFunction, ScaleError> {
    grid.validate()?;
    if !model.is_heavy_tailed() {
        return Err(ScaleError::NotHeavyTailed);
    }
    let xs = grid.points();
    let mut pts = Vec::with_capacity(xs.len() + 1);
    pts.push((0.0, 0.0));
    for &x in &xs {
        pts.push((x, model.hazard(x)?));
    }
    let sampled = pts.clone();
    let mut hull = upper_hull(&pts);

    // drop a flat run at the end (step hazards): the scale must keep rising
    let mut flattened = false;
    while hull.len() > 2 {
        let (p, q) = (hull[hull.len() - 2], hull[hull.len() - 1]);
        if q.1 - p.1 <= 1e-14 * q.1.abs() {
            hull.pop();
            flattened = true;
        } else {
            break;
        }
    }
    if hull.len() < 2 || hull[1].1 <= 0.0 {
        return Err(ScaleError::DegenerateHazard { x: grid.x_hi });
    }
    let n = hull.len();
    let last_slope = (hull[n - 1].1 - hull[n - 2].1) / (hull[n - 1].0 - hull[n - 2].0);
    let tail_slope = if flattened { 1e-3 * last_slope } else { last_slope };
    let majorant = ScaleFunction::PiecewiseLinear {
        breakpoints: hull.iter().map(|&(x, h)| Breakpoint { x, h }).collect(),
        tail_slope,
    };

    let mut m = f64::INFINITY;
    for &(x, r) in sampled.iter().skip(1) {
        if grid.in_window(x) {
            m = m.min(r / majorant.eval(x));
        }
    }
    if !(m > 0.0) {
        return Err(ScaleError::DegenerateHazard { x: grid.window_lo() });
    }
    // shave a hair below the touch points so rounding keeps R / h ≥ 1
    let scale = majorant.scaled_by(m * (1.0 - 1e-12));
    scale.validate()?;
    Ok(scale)
}

/// Concave piecewise-linear scale lying strictly above `g` and below the
/// sampled hazard, with every breakpoint on the hazard.
pub fn chord_scale_above(hazard_grid: &[(f64, f64)], g: &ScaleFunction) -> Result<ScaleFunction, ScaleError> {
    g.validate()?;
    if hazard_grid.len() < 2 {
        return Err(ScaleError::InvalidGrid("need at least two hazard points".into()));
    }
    for w in hazard_grid.windows(2) {
        if !(w[1].0 > w[0].0) || w[0].0 <= 0.0 {
            return Err(ScaleError::InvalidGrid("x must be positive and increasing".into()));
        }
    }
    for &(x, r) in hazard_grid {
        if g.eval(x) >= r {
            return Err(ScaleError::CrossingImpossible { x });
        }
    }
    let (x_lo, r_lo) = hazard_grid[0];
    let (x_hi, r_hi) = hazard_grid[hazard_grid.len() - 1];
    if !(r_hi / x_hi < r_lo / x_lo) {
        return Err(ScaleError::NotSublinear);
    }

    let mut pts = Vec::with_capacity(hazard_grid.len() + 1);
    pts.push((0.0, 0.0));
    pts.extend_from_slice(hazard_grid);
    let gs: Vec<f64> = pts.iter().map(|&(x, _)| g.eval(x)).collect();

    let mut vertices: Vec<usize> = vec![0];
    let mut slopes: Vec<f64> = Vec::new();
    let mut i = 0;
    while i + 1 < pts.len() {
        let prev = slopes.last().copied().unwrap_or(f64::INFINITY);
        let mut chosen = None;
        for j in i + 1..pts.len() {
            let s = (pts[j].1 - pts[i].1) / (pts[j].0 - pts[i].0);
            if s > prev * (1.0 + 1e-12) || s <= 0.0 {
                continue;
            }
            let ok = (i + 1..j).all(|k| {
                let chord = pts[i].1 + s * (pts[k].0 - pts[i].0);
                chord > gs[k] && chord <= pts[k].1 * (1.0 + 1e-12)
            });
            if ok {
                chosen = Some((j, s));
                break;
            }
        }
        let (j, s) = chosen.ok_or(ScaleError::NoConcaveChord { x: pts[i].0 })?;
        if (s - prev).abs() <= 1e-12 * s {
            // collinear with the previous segment: extend it
            vertices.pop();
            slopes.pop();
            let start = *vertices.last().unwrap();
            slopes.push((pts[j].1 - pts[start].1) / (pts[j].0 - pts[start].0));
        } else {
            slopes.push(s);
        }
        vertices.push(j);
        i = j;
    }
    let tail_slope = *slopes.last().unwrap();
    let scale = ScaleFunction::PiecewiseLinear {
        breakpoints: vertices
            .iter()
            .map(|&k| Breakpoint {
                x: pts[k].0,
                h: pts[k].1,
            })
            .collect(),
        tail_slope,
    };
    scale.validate()?;
    Ok(scale)
}

/// Pointwise minimum `min(h, f)`. Two piecewise-linear inputs give an exact
/// piecewise-linear result on the merged breakpoints plus crossings; other
/// inputs give a [`ScaleFunction::Min`].
pub fn min_scale(h: &ScaleFunction, f: &ScaleFunction) -> Result<ScaleFunction, ScaleError> {
    h.validate()?;
    f.validate()?;
    if h == f {
        return Ok(h.clone());
    }
    match (h, f) {
        (
            ScaleFunction::PiecewiseLinear {
                breakpoints: b1,
                tail_slope: t1,
            },
            ScaleFunction::PiecewiseLinear {
                breakpoints: b2,
                tail_slope: t2,
            },
        ) => {
            let mut xs: Vec<f64> = b1.iter().chain(b2.iter()).map(|b| b.x).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            // crossings between consecutive merged nodes are exact for lines
            let mut nodes = Vec::with_capacity(xs.len() * 2);
            for w in xs.windows(2) {
                nodes.push(w[0]);
                let (a, b) = (w[0], w[1]);
                let d0 = h.eval(a) - f.eval(a);
                let d1 = h.eval(b) - f.eval(b);
                if d0 * d1 < 0.0 {
                    nodes.push(a + (b - a) * d0 / (d0 - d1));
                }
            }
            let last = *xs.last().unwrap();
            nodes.push(last);
            // crossing beyond the last node, along the tails
            let d_last = h.eval(last) - f.eval(last);
            if d_last * (t1 - t2) < 0.0 {
                nodes.push(last + d_last.abs() / (t1 - t2).abs());
            }
            let mut bps = vec![Breakpoint { x: 0.0, h: 0.0 }];
            for &x in nodes.iter().filter(|&&x| x > 0.0) {
                bps.push(Breakpoint {
                    x,
                    h: h.eval(x).min(f.eval(x)),
                });
            }
            let end = bps[bps.len() - 1].x;
            let tail = if h.eval(end * 2.0 + 1.0) <= f.eval(end * 2.0 + 1.0) {
                *t1
            } else {
                *t2
            };
            let out = ScaleFunction::PiecewiseLinear {
                breakpoints: remove_collinear(bps),
                tail_slope: tail,
            };
            out.validate()?;
            Ok(out)
        }
        _ => Ok(ScaleFunction::Min {
            first: Box::new(h.clone()),
            second: Box::new(f.clone()),
        }),
    }
}

fn remove_collinear(bps: Vec<Breakpoint>) -> Vec<Breakpoint> {
    let mut out: Vec<Breakpoint> = Vec::with_capacity(bps.len());
    for b in bps {
        if let Some(last) = out.last() {
            if b.x <= last.x {
                continue;
            }
        }
        while out.len() >= 2 {
            let (p, q) = (out[out.len() - 2], out[out.len() - 1]);
            let s1 = (q.h - p.h) / (q.x - p.x);
            let s2 = (b.h - q.h) / (b.x - q.x);
            if (s1 - s2).abs() <= 1e-13 * s1.abs().max(s2.abs()) {
                out.pop();
            } else {
                break;
            }
        }
        out.push(b);
    }
    out
}

/// Points in `[lo, hi]` where `h - f` changes sign, located by bisection to
/// relative precision `1e-12` after bracketing on `samples` geometric nodes.
pub fn crossover_points(h: &ScaleFunction, f: &ScaleFunction, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let d = |x: f64| h.eval(x) - f.eval(x);
    let step = (hi / lo).ln() / (samples.max(2) - 1) as f64;
    let nodes: Vec<f64> = (0..samples.max(2)).map(|i| lo * (step * i as f64).exp()).collect();
    let mut roots = Vec::new();
    for w in nodes.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (mut da, db) = (d(a), d(b));
        if da == 0.0 {
            roots.push(a);
            continue;
        }
        if da * db > 0.0 {
            continue;
        }
        while (b - a) > 1e-12 * b {
            let m = 0.5 * (a + b);
            let dm = d(m);
            if dm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if (dm > 0.0) == (da > 0.0) {
                a = m;
                da = dm;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}
