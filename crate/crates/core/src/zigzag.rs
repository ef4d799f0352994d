//! Two discrete laws whose tails cross infinitely often while each keeps a
//! natural scale between ordered envelopes.
//!
//! With envelopes `h1 < h2 < h3 < h4`, the atoms of `X` sit at
//! `x_{n+1} = h1⁻¹(h4(x_n))` with masses `e^{-h1(x_n)} - e^{-h4(x_n)}`, so that
//! `P(X ≥ x_n) = e^{-h1(x_n)}` and `P(X > x_n) = e^{-h4(x_n)}`. `Y` is built the
//! same way from `h2` and `h3`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{Atom, TailModel};
use crate::scales::{GridSpec, ScaleError, ScaleFunction};

/// Sequences stop before any term exceeds this value.
pub const OVERFLOW_LIMIT: f64 = 1e300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ZigzagError {
    #[error("envelopes out of order at x = {x}: {detail}")]
    EnvelopeOrderViolated { x: f64, detail: String },
    #[error("atom {index} of {variable} has mass {mass} <= 0")]
    MassNotPositive { variable: char, index: usize, mass: f64 },
    #[error("invalid zigzag parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZigzagEnvelopes {
    pub h1: ScaleFunction,
    pub h2: ScaleFunction,
    pub h3: ScaleFunction,
    pub h4: ScaleFunction,
}

/// How the `y` sequence advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum YRecursion {
    /// `y_{n+1} = h2⁻¹(h3(y_n))`.
    #[default]
    SelfCoupled,
    /// `y_{n+1} = h2⁻¹(h3(x_n))`.
    CoupledToX,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZigzagOptions {
    pub x0: f64,
    pub remainder_mass_location: f64,
    pub y_recursion: YRecursion,
}

impl Default for ZigzagOptions {
    fn default() -> Self {
        Self {
            x0: 1.0,
            remainder_mass_location: 0.0,
            y_recursion: YRecursion::SelfCoupled,
        }
    }
}

impl ZigzagEnvelopes {
    pub fn new(h1: ScaleFunction, h2: ScaleFunction, h3: ScaleFunction, h4: ScaleFunction) -> Self {
        Self { h1, h2, h3, h4 }
    }

    /// `LogScale(1)`, …, `LogScale(4)`.
    pub fn log_ladder() -> Self {
        Self::new(
            ScaleFunction::log(1.0),
            ScaleFunction::log(2.0),
            ScaleFunction::log(3.0),
            ScaleFunction::log(4.0),
        )
    }

    fn all(&self) -> [&ScaleFunction; 4] {
        [&self.h1, &self.h2, &self.h3, &self.h4]
    }

    /// Each envelope is a valid scale and `h1 < h2 < h3 < h4` at every point
    /// of `grid`.
    pub fn validate(&self, grid: &GridSpec) -> Result<(), ZigzagError> {
        for h in self.all() {
            h.validate()?;
        }
        for x in grid.points() {
            let v = self.all().map(|h| h.eval(x));
            for i in 0..3 {
                if !(v[i] < v[i + 1]) {
                    return Err(ZigzagError::EnvelopeOrderViolated {
                        x,
                        detail: format!("h{} = {} is not below h{} = {}", i + 1, v[i], i + 2, v[i + 1]),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Ordering grid used by [`build_pair`].
pub fn validation_grid() -> GridSpec {
    GridSpec::new(1e-3, 1e12, 512).expect("static grid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZigzagSequences {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// True when a sequence stopped short of the requested length.
    pub x_truncated: bool,
    pub y_truncated: bool,
}

fn advance(lower: &ScaleFunction, upper: &ScaleFunction, from: f64, at: f64) -> Result<f64, ZigzagError> {
    let (lo, hi) = (lower.eval(at), upper.eval(at));
    if !(lo < hi) {
        return Err(ZigzagError::EnvelopeOrderViolated {
            x: at,
            detail: format!("lower envelope {lo} >= upper envelope {hi}"),
        });
    }
    let next = lower.inverse(upper.eval(from));
    if !(next > from) {
        return Err(ZigzagError::EnvelopeOrderViolated {
            x: from,
            detail: format!("sequence does not increase ({from} -> {next})"),
        });
    }
    Ok(next)
}

pub fn build_sequences(
    env: &ZigzagEnvelopes,
    x0: f64,
    n_terms: usize,
    recursion: YRecursion,
) -> Result<ZigzagSequences, ZigzagError> {
    if n_terms < 2 {
        return Err(ZigzagError::InvalidParameter(format!(
            "n_terms must be >= 2, got {n_terms}"
        )));
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(ZigzagError::InvalidParameter(format!("x0 must be > 0, got {x0}")));
    }
    for h in env.all() {
        h.validate()?;
    }
    let mut xs = vec![x0];
    let mut ys = vec![x0];
    let mut x_truncated = false;
    let mut y_truncated = false;
    while xs.len() < n_terms {
        let x = *xs.last().unwrap();
        let next = advance(&env.h1, &env.h4, x, x)?;
        if !(next <= OVERFLOW_LIMIT) {
            x_truncated = true;
            break;
        }
        xs.push(next);
    }
    while ys.len() < n_terms {
        let n = ys.len() - 1;
        let y = ys[n];
        let from = match recursion {
            YRecursion::SelfCoupled => y,
            YRecursion::CoupledToX => match xs.get(n) {
                Some(&x) => x,
                None => {
                    y_truncated = true;
                    break;
                }
            },
        };
        let next = env.h2.inverse(env.h3.eval(from));
        if !(env.h2.eval(y) < env.h3.eval(y)) {
            return Err(ZigzagError::EnvelopeOrderViolated {
                x: y,
                detail: "h2 >= h3".into(),
            });
        }
        if !(next <= OVERFLOW_LIMIT) {
            y_truncated = true;
            break;
        }
        if !(next > y) {
            return Err(ZigzagError::EnvelopeOrderViolated {
                x: y,
                detail: format!("y sequence does not increase ({y} -> {next})"),
            });
        }
        ys.push(next);
    }
    Ok(ZigzagSequences {
        xs,
        ys,
        x_truncated,
        y_truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZigzagPair {
    pub x_atoms: Vec<Atom>,
    pub y_atoms: Vec<Atom>,
    pub remainder_mass_location: f64,
    pub sequences: ZigzagSequences,
}

/// Atoms on `points` with envelopes `lower < upper`. The last atom carries
/// the whole remaining mass `e^{-lower(last)}`, which keeps both tail
/// identities exact at every earlier point.
fn atoms_on(
    variable: char,
    points: &[f64],
    lower: &ScaleFunction,
    upper: &ScaleFunction,
) -> Result<Vec<Atom>, ZigzagError> {
    let last = points.len() - 1;
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let a = (-lower.eval(p)).exp();
            let mass = if i == last { a } else { a - (-upper.eval(p)).exp() };
            if mass > 0.0 {
                Ok(Atom {
                    location: p,
                    probability: mass,
                })
            } else {
                Err(ZigzagError::MassNotPositive {
                    variable,
                    index: i,
                    mass,
                })
            }
        })
        .collect()
}

pub fn build_pair(env: &ZigzagEnvelopes, n_terms: usize, options: &ZigzagOptions) -> Result<ZigzagPair, ZigzagError> {
    for h in env.all() {
        h.validate()?;
    }
    let x0 = options.x0;
    for (variable, lower, upper) in [('x', &env.h1, &env.h4), ('y', &env.h2, &env.h3)] {
        let mass = (-lower.eval(x0)).exp() - (-upper.eval(x0)).exp();
        if !(mass > 0.0) {
            return Err(ZigzagError::MassNotPositive {
                variable,
                index: 0,
                mass,
            });
        }
    }
    if !(options.remainder_mass_location >= 0.0 && options.remainder_mass_location < x0) {
        return Err(ZigzagError::InvalidParameter(format!(
            "remainder location must lie in [0, x0), got {}",
            options.remainder_mass_location
        )));
    }
    env.validate(&validation_grid())?;
    let sequences = build_sequences(env, x0, n_terms, options.y_recursion)?;
    let x_atoms = atoms_on('x', &sequences.xs, &env.h1, &env.h4)?;
    let y_atoms = atoms_on('y', &sequences.ys, &env.h2, &env.h3)?;
    Ok(ZigzagPair {
        x_atoms,
        y_atoms,
        remainder_mass_location: options.remainder_mass_location,
        sequences,
    })
}

fn with_remainder(atoms: &[Atom], location: f64) -> TailModel {
    let total: f64 = atoms.iter().map(|a| a.probability).sum();
    let mut all = Vec::with_capacity(atoms.len() + 1);
    let rest = 1.0 - total;
    if rest > 0.0 {
        all.push(Atom {
            location,
            probability: rest,
        });
    }
    all.extend_from_slice(atoms);
    TailModel::PointMass {
        atoms: all,
        heavy_extension: true,
    }
}

impl ZigzagPair {
    pub fn remainder_mass(atoms: &[Atom]) -> f64 {
        1.0 - atoms.iter().map(|a| a.probability).sum::<f64>()
    }

    pub fn x_model(&self) -> TailModel {
        with_remainder(&self.x_atoms, self.remainder_mass_location)
    }

    pub fn y_model(&self) -> TailModel {
        with_remainder(&self.y_atoms, self.remainder_mass_location)
    }

    /// Columns `variable,location,mass`, remainder atoms included.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable,location,mass\n");
        for (name, model) in [("x", self.x_model()), ("y", self.y_model())] {
            if let TailModel::PointMass { atoms, .. } = model {
                for a in atoms {
                    let _ = writeln!(out, "{name},{:e},{:e}", a.location, a.probability);
                }
            }
        }
        out
    }
}

/// Sign changes of `P(X > x) - P(Y > x)` across the grid, skipping exact ties.
pub fn count_tail_crossings(pair: &ZigzagPair, grid: &GridSpec) -> usize {
    let (x, y) = (pair.x_model(), pair.y_model());
    let mut last_sign = 0.0_f64;
    let mut count = 0;
    for p in grid.points() {
        let d = x.tail(p) - y.tail(p);
        if d == 0.0 {
            continue;
        }
        let s = d.signum();
        if last_sign != 0.0 && s != last_sign {
            count += 1;
        }
        last_sign = s;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder(a1: f64, a4: f64) -> ZigzagEnvelopes {
        ZigzagEnvelopes::new(
            ScaleFunction::log(a1),
            ScaleFunction::log(a1 + (a4 - a1) / 3.0),
            ScaleFunction::log(a1 + 2.0 * (a4 - a1) / 3.0),
            ScaleFunction::log(a4),
        )
    }

    #[test]
    fn sequence_examples() {
        let s = build_sequences(&ladder(1.0, 4.0), 1.0, 3, YRecursion::SelfCoupled).unwrap();
        for (x, e) in s.xs.iter().zip([1.0, 15.0, 65535.0]) {
            assert!((x - e).abs() <= 1e-12 * e, "{x}");
        }
        let s = build_sequences(&ladder(1.0, 2.0), 1.0, 3, YRecursion::SelfCoupled).unwrap();
        assert!((s.xs[1] - 3.0).abs() < 1e-12 && (s.xs[2] - 15.0).abs() < 1e-12);
        let s = build_sequences(&ladder(1.0, 4.0), 1.0, 2, YRecursion::SelfCoupled).unwrap();
        assert_eq!(s.xs.len(), 2);
        assert_eq!(s.ys.len(), 2);
    }

    #[test]
    fn overflow_stops_early() {
        let s = build_sequences(&ladder(1.0, 4.0), 1.0, 8, YRecursion::SelfCoupled).unwrap();
        assert!(s.x_truncated);
        assert_eq!(s.xs.len(), 5);
        assert!(!s.y_truncated);
        assert_eq!(s.ys.len(), 8);
        assert!(s.xs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn pair_masses_and_tails() {
        let env = ZigzagEnvelopes::log_ladder();
        let pair = build_pair(&env, 8, &ZigzagOptions::default()).unwrap();
        assert!((pair.x_atoms[0].probability - 0.4375).abs() < 1e-15);
        let x = pair.x_model();
        assert!((x.tail(1.0) - 0.0625).abs() < 1e-15);
        let xs = &pair.sequences.xs;
        for (n, &p) in xs[..xs.len() - 1].iter().enumerate() {
            let r = -x.tail(p).ln();
            assert!((r - env.h4.eval(p)).abs() < 1e-10, "n={n}");
            // P(X ≥ x_n): tail just below the atom
            let below = x.tail(p * (1.0 - 1e-15));
            assert!((-below.ln() - env.h1.eval(p)).abs() < 1e-10);
        }
        for model in [pair.x_model(), pair.y_model()] {
            let TailModel::PointMass { atoms, .. } = model else {
                unreachable!()
            };
            let total: f64 = atoms.iter().map(|a| a.probability).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(atoms.windows(2).all(|w| w[1].location > w[0].location));
        }
    }

    #[test]
    fn degenerate_envelopes() {
        let h = ScaleFunction::log(1.0);
        let env = ZigzagEnvelopes::new(h.clone(), h.clone(), h.clone(), h);
        assert!(matches!(
            build_pair(&env, 4, &ZigzagOptions::default()),
            Err(ZigzagError::MassNotPositive { .. })
        ));
        let swapped = ZigzagEnvelopes::new(
            ScaleFunction::log(2.0),
            ScaleFunction::log(1.0),
            ScaleFunction::log(3.0),
            ScaleFunction::log(4.0),
        );
        assert!(matches!(
            build_pair(&swapped, 4, &ZigzagOptions::default()),
            Err(ZigzagError::EnvelopeOrderViolated { .. })
        ));
    }

    #[test]
    fn crossings() {
        let env = ZigzagEnvelopes::log_ladder();
        let pair = build_pair(&env, 8, &ZigzagOptions::default()).unwrap();
        let grid = GridSpec::new(1.0, 1.3e5, 4000).unwrap();
        assert!(count_tail_crossings(&pair, &grid) >= 3);
        let same = ZigzagPair {
            y_atoms: pair.x_atoms.clone(),
            ..pair.clone()
        };
        assert_eq!(count_tail_crossings(&same, &grid), 0);
    }

    #[test]
    fn literal_recursion_is_available() {
        let env = ZigzagEnvelopes::log_ladder();
        let opts = ZigzagOptions {
            y_recursion: YRecursion::CoupledToX,
            ..ZigzagOptions::default()
        };
        let pair = build_pair(&env, 6, &opts).unwrap();
        let s = &pair.sequences;
        assert!((s.ys[1] - env.h2.inverse(env.h3.eval(s.xs[0]))).abs() < 1e-12);
        assert!((s.ys[2] - env.h2.inverse(env.h3.eval(s.xs[1]))).abs() < 1e-9 * s.ys[2]);
    }

    #[test]
    fn csv_export() {
        let pair = build_pair(&ZigzagEnvelopes::log_ladder(), 4, &ZigzagOptions::default()).unwrap();
        let csv = pair.to_csv();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "variable,location,mass");
        assert_eq!(rows.len(), 1 + 5 + 5);
        assert!(rows[1].starts_with("x,0e0,"));
    }
}
