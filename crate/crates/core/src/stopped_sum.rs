//! Simulation of stopped sums, empirical tails, and the dominance classifier.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{Mean, ModelError, TailModel};
use crate::ext::ExtReal;
use crate::rng::StreamFactory;
use crate::scales::{scale_index, GridSpec, RatioLiminfEstimate, ScaleError, ScaleFunction};

/// Grid-liminf values within this distance below 1 still count as `≥ 1`.
pub const BOUNDARY_TOLERANCE: f64 = 1e-3;

/// Allowed distance of a grid scale index from 1 for a supplied natural scale.
pub const NATURAL_SCALE_TOLERANCE: f64 = 0.1;

pub const DEFAULT_DELTA: f64 = 0.1;

pub const DEFAULT_STOPPING_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SumError {
    #[error("invalid stopped-sum spec: {0}")]
    InvalidSpec(String),
    #[error("replicate {replicate} drew N = {drawn}, above the cap {cap}")]
    StoppingOverflow { replicate: u64, drawn: f64, cap: u64 },
    #[error("empirical tail vanishes; largest usable x = {x}")]
    TailVanishes { x: f64 },
    #[error("guard failed: {0}")]
    GuardFailed(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppedSumSpec {
    pub increment: TailModel,
    pub stopping: TailModel,
    /// `E(X)`; derived from the increment model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_increment: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Defaults to `1.5 · E(X)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
}

impl StoppedSumSpec {
    pub fn new(increment: TailModel, stopping: TailModel) -> Self {
        Self {
            increment,
            stopping,
            mean_increment: None,
            delta: DEFAULT_DELTA,
            c1: None,
        }
    }

    pub fn with_c1(mut self, c1: f64) -> Self {
        self.c1 = Some(c1);
        self
    }

    pub fn validate(&self) -> Result<(), SumError> {
        self.increment.validate()?;
        self.stopping.validate()?;
        if !self.stopping.is_positive_integer_valued() {
            return Err(SumError::InvalidSpec(
                "stopping must be supported on {1, 2, ...}".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(SumError::InvalidSpec(format!("delta must be > 0, got {}", self.delta)));
        }
        if let (Some(c1), Some(m)) = (self.c1, self.mean()) {
            if !(c1 > m) {
                return Err(SumError::InvalidSpec(format!("c1 = {c1} must exceed E(X) = {m}")));
            }
        }
        Ok(())
    }

    /// `E(X)` when finite.
    pub fn mean(&self) -> Option<f64> {
        self.mean_increment.or(match self.increment.mean() {
            Mean::Finite(m) => Some(m),
            _ => None,
        })
    }

    pub fn c1_value(&self) -> Option<f64> {
        self.c1.or_else(|| self.mean().map(|m| 1.5 * m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub stopping_cap: u64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            workers: None,
            stopping_cap: DEFAULT_STOPPING_CAP,
        }
    }
}

/// `(N, S_N)` for every replicate, in replicate order.
pub fn simulate_pairs(
    spec: &StoppedSumSpec,
    replicates: u64,
    master_seed: u64,
    options: &SimulationOptions,
) -> Result<Vec<(u64, f64)>, SumError> {
    if replicates == 0 {
        return Err(SumError::InvalidSpec("replicates must be >= 1".into()));
    }
    spec.validate()?;
    let xs = spec.increment.sampler()?;
    let ns = spec.stopping.sampler()?;
    let factory = StreamFactory::new(master_seed);
    let cap = options.stopping_cap;
    let run = || {
        (0..replicates)
            .into_par_iter()
            .map(|i| {
                let mut rn = factory.stream(2 * i);
                let n = ns.draw(&mut rn);
                if n > cap as f64 {
                    return Err(SumError::StoppingOverflow {
                        replicate: i,
                        drawn: n,
                        cap,
                    });
                }
                let n = n as u64;
                let mut rx = factory.stream(2 * i + 1);
                let mut s = 0.0;
                for _ in 0..n {
                    s += xs.draw(&mut rx);
                }
                Ok((n, s))
            })
            .collect::<Vec<_>>()
    };
    let results = match options.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| SumError::InvalidSpec(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}

/// Samples of `S_N`, sorted.
pub fn simulate(
    spec: &StoppedSumSpec,
    replicates: u64,
    master_seed: u64,
    options: &SimulationOptions,
) -> Result<EmpiricalTail, SumError> {
    let pairs = simulate_pairs(spec, replicates, master_seed, options)?;
    Ok(EmpiricalTail::new(pairs.into_iter().map(|(_, s)| s).collect()))
}

/// Sorted samples and their empirical tail `P̂(X > x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTail {
    sorted_samples: Vec<f64>,
}

impl EmpiricalTail {
    pub fn new(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self {
            sorted_samples: samples,
        }
    }

    pub fn from_file(path: &Path) -> io::Result<Self> {
        Ok(Self::new(read_sample_file(path)?))
    }

    pub fn count(&self) -> usize {
        self.sorted_samples.len()
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted_samples
    }

    /// Number of samples strictly above `x`.
    pub fn count_above(&self, x: f64) -> usize {
        self.count() - self.sorted_samples.partition_point(|&s| s <= x)
    }

    pub fn tail(&self, x: f64) -> f64 {
        if self.sorted_samples.is_empty() {
            return 0.0;
        }
        self.count_above(x) as f64 / self.count() as f64
    }

    /// `−log P̂(X > x)`, `None` once the tail is empty.
    pub fn hazard(&self, x: f64) -> Option<f64> {
        let t = self.tail(x);
        (t > 0.0).then(|| 0.0 - t.ln())
    }
}

/// `(x, R̂(x))` on every grid point; fails if the tail is empty anywhere.
pub fn empirical_hazard(tail: &EmpiricalTail, grid: &GridSpec) -> Result<Vec<(f64, f64)>, SumError> {
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.points);
    let mut last_usable = f64::NAN;
    for x in grid.points() {
        match tail.hazard(x) {
            Some(r) => {
                last_usable = x;
                out.push((x, r));
            }
            None => {
                return Err(SumError::TailVanishes {
                    x: if last_usable.is_nan() { 0.0 } else { last_usable },
                })
            }
        }
    }
    Ok(out)
}

/// `(x, R̂(x))` with `None` where the tail is empty.
pub fn empirical_hazard_partial(tail: &EmpiricalTail, grid: &GridSpec) -> Vec<(f64, Option<f64>)> {
    grid.points().into_iter().map(|x| (x, tail.hazard(x))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DominanceVerdict {
    IncrementDominant,
    StoppingDominant,
    BothConditionsHold,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub verdict: DominanceVerdict,
    pub certifying_scale: Option<ScaleFunction>,
    /// Traces of `h_n(c1 x) / h_x(x)` and `h_x(x) / h_n(E(X) x)`.
    pub condition_traces: (Option<RatioLiminfEstimate>, Option<RatioLiminfEstimate>),
    pub light_tail_shortcut: bool,
    pub guards: Vec<(String, bool)>,
    pub mean_increment: f64,
    pub c1: f64,
}

/// Grid traces of the two dominance ratios for given scales.
pub fn evaluate_dominance_conditions(
    h_x: &ScaleFunction,
    h_n: &ScaleFunction,
    mean: f64,
    c1: f64,
    grid: &GridSpec,
) -> Result<(RatioLiminfEstimate, RatioLiminfEstimate), SumError> {
    grid.validate()?;
    h_x.validate()?;
    h_n.validate()?;
    let first = RatioLiminfEstimate::of_ratio(grid, |x| h_n.eval(c1 * x), |x| h_x.eval(x));
    let second = RatioLiminfEstimate::of_ratio(grid, |x| h_x.eval(x), |x| h_n.eval(mean * x));
    Ok((first, second))
}

/// Verdict from the two condition values alone.
pub fn verdict_from_conditions(first: bool, second: bool) -> DominanceVerdict {
    match (first, second) {
        (true, true) => DominanceVerdict::BothConditionsHold,
        (true, false) => DominanceVerdict::IncrementDominant,
        (false, true) => DominanceVerdict::StoppingDominant,
        (false, false) => DominanceVerdict::Undetermined,
    }
}

struct Guards(Vec<(String, bool)>);

impl Guards {
    fn note(&mut self, name: String, ok: bool) -> bool {
        self.0.push((name, ok));
        ok
    }

    fn require(&mut self, name: &str, ok: bool) -> Result<(), SumError> {
        if self.note(name.to_string(), ok) {
            Ok(())
        } else {
            Err(SumError::GuardFailed(name.to_string()))
        }
    }

    fn first_failure(&self) -> Option<&str> {
        self.0.iter().find(|(_, ok)| !ok).map(|(n, _)| n.as_str())
    }
}

fn dominates_log(h: &ScaleFunction, delta: f64, grid: &GridSpec) -> bool {
    grid.points()
        .into_iter()
        .filter(|&x| grid.in_window(x))
        .all(|x| h.eval(x) >= (1.0 + delta) * x.ln())
}

fn is_natural(model: &TailModel, h: &ScaleFunction, grid: &GridSpec) -> Result<bool, SumError> {
    let idx = scale_index(model, h, grid)?;
    Ok((idx.value - 1.0).abs() <= NATURAL_SCALE_TOLERANCE)
}

/// Integrability guards of one side: moment index above `1 + δ` and the
/// scale above `(1 + δ) log x` on the window.
fn part_guards(
    guards: &mut Guards,
    label: &str,
    model: &TailModel,
    h: &ScaleFunction,
    delta: f64,
    grid: &GridSpec,
) -> bool {
    let index_ok = model
        .moment_index_analytic()
        .map(|i| i > ExtReal::Finite(1.0 + delta))
        .unwrap_or(false);
    let a = guards.note(format!("I({label}) > 1 + delta"), index_ok);
    let b = guards.note(
        format!("h_{} >= (1 + delta) log x on window", label.to_lowercase()),
        dominates_log(h, delta, grid),
    );
    a && b
}

/// Classifies which of `X` and `E(X)·N` carries the scale of `S_N`.
pub fn classify_dominance(
    spec: &StoppedSumSpec,
    h_x: &ScaleFunction,
    h_n: &ScaleFunction,
    grid: &GridSpec,
) -> Result<DominanceReport, SumError> {
    spec.increment.validate()?;
    spec.stopping.validate()?;
    grid.validate()?;
    h_x.validate()?;
    h_n.validate()?;
    let mut guards = Guards(Vec::new());
    guards.require(
        "stopping supported on {1, 2, ...}",
        spec.stopping.is_positive_integer_valued(),
    )?;
    let mean = spec.mean().filter(|m| *m > 0.0);
    guards.require("E(X) finite and positive", mean.is_some())?;
    let mean = mean.unwrap();
    let c1 = spec.c1_value().unwrap();
    guards.require("c1 > E(X)", c1 > mean)?;

    let x_heavy = spec.increment.is_heavy_tailed();
    let n_heavy = spec.stopping.is_heavy_tailed();
    guards.require("X or N heavy-tailed", x_heavy || n_heavy)?;
    if x_heavy {
        let ok = is_natural(&spec.increment, h_x, grid)?;
        guards.require("h_x natural scale of X on grid", ok)?;
    }
    if n_heavy {
        let ok = is_natural(&spec.stopping, h_n, grid)?;
        guards.require("h_n natural scale of N on grid", ok)?;
    }
    let stopping_scale = h_n.clone().dilated(mean);

    if x_heavy != n_heavy {
        let (verdict, scale) = if x_heavy {
            if !part_guards(&mut guards, "X", &spec.increment, h_x, spec.delta, grid) {
                return Err(SumError::GuardFailed(guards.first_failure().unwrap().to_string()));
            }
            (DominanceVerdict::IncrementDominant, h_x.clone())
        } else {
            if !part_guards(&mut guards, "N", &spec.stopping, h_n, spec.delta, grid) {
                return Err(SumError::GuardFailed(guards.first_failure().unwrap().to_string()));
            }
            (DominanceVerdict::StoppingDominant, stopping_scale)
        };
        return Ok(DominanceReport {
            verdict,
            certifying_scale: Some(scale),
            condition_traces: (None, None),
            light_tail_shortcut: true,
            guards: guards.0,
            mean_increment: mean,
            c1,
        });
    }

    let part1 = part_guards(&mut guards, "X", &spec.increment, h_x, spec.delta, grid);
    let part2 = part_guards(&mut guards, "N", &spec.stopping, h_n, spec.delta, grid);
    if !part1 && !part2 {
        return Err(SumError::GuardFailed(guards.first_failure().unwrap().to_string()));
    }
    let (first, second) = evaluate_dominance_conditions(h_x, h_n, mean, c1, grid)?;
    let holds1 = part1 && first.value >= 1.0 - BOUNDARY_TOLERANCE;
    let holds2 = part2 && second.value >= 1.0 - BOUNDARY_TOLERANCE;
    let verdict = verdict_from_conditions(holds1, holds2);
    let certifying_scale = match verdict {
        DominanceVerdict::IncrementDominant | DominanceVerdict::BothConditionsHold => Some(h_x.clone()),
        DominanceVerdict::StoppingDominant => Some(stopping_scale),
        DominanceVerdict::Undetermined => None,
    };
    Ok(DominanceReport {
        verdict,
        certifying_scale,
        condition_traces: (Some(first), Some(second)),
        light_tail_shortcut: false,
        guards: guards.0,
        mean_increment: mean,
        c1,
    })
}

/// Grid proxy of `liminf R̂(x) / h(x)` for the empirical tail.
pub fn verify_scale_membership(
    tail: &EmpiricalTail,
    h: &ScaleFunction,
    grid: &GridSpec,
) -> Result<RatioLiminfEstimate, SumError> {
    h.validate()?;
    let hazard = empirical_hazard(tail, grid)?;
    let trace = hazard.into_iter().map(|(x, r)| (x, r / h.eval(x))).collect();
    Ok(RatioLiminfEstimate::from_trace(*grid, trace))
}

/// `(max, min)` of `R̂ / h` over the tail window.
pub fn verify_corollary_limit(
    spec: &StoppedSumSpec,
    tail: &EmpiricalTail,
    h: &ScaleFunction,
    grid: &GridSpec,
) -> Result<(f64, f64), SumError> {
    if spec.increment.support_lower() < 0.0 {
        return Err(SumError::GuardFailed("X >= 0".into()));
    }
    let est = verify_scale_membership(tail, h, grid)?;
    Ok((est.window_max(), est.value))
}

/// One-sample Kolmogorov–Smirnov distance to a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance; ties are handled exactly.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Writes samples as a little-endian `u64` count followed by `f64` values.
pub fn write_sample_file(path: &Path, samples: &[f64]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for v in samples {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_sample_file(path: &Path) -> io::Result<Vec<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut word)?;
        out.push(f64::from_le_bytes(word));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "trailing bytes after samples",
        ));
    }
    Ok(out)
}
