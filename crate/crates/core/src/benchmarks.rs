//! Black-box test objectives, negated to form maximization problems.
//!
//! Each function below is the usual minimization form `f`; [`Benchmark::evaluate`]
//! returns `-f(x)`. With `d` the dimension:
//!
//! * Ackley: `f = -20 exp(-0.2 sqrt(mean x_i^2)) - exp(mean cos(2 pi x_i)) + 20 + e`,
//!   domain `[-32.768, 32.768]^d`, minimum `0` at the origin.
//! * Levy: with `w_i = 1 + (x_i - 1) / 4`,
//!   `f = sin^2(pi w_1) + sum_{i<d} (w_i - 1)^2 [1 + 10 sin^2(pi w_i + 1)] + (w_d - 1)^2 [1 + sin^2(2 pi w_d)]`,
//!   domain `[-10, 10]^d`, minimum `0` at `(1, ..., 1)`.
//! * Griewank: `f = sum x_i^2 / 4000 - prod cos(x_i / sqrt(i)) + 1`,
//!   domain `[-600, 600]^d`, minimum `0` at the origin.
//! * Schwefel: `f = 418.9829 d - sum x_i sin(sqrt|x_i|)`,
//!   domain `[-500, 500]^d`, minimum `~0` at `(420.9687, ..., 420.9687)`.
//! * Eggholder (2D only):
//!   `f = -(x_2 + 47) sin(sqrt|x_2 + x_1/2 + 47|) - x_1 sin(sqrt|x_1 - (x_2 + 47)|)`,
//!   domain `[-512, 512]^2`, minimum `-959.6407` at `(512, 404.2319)`.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_k, hi_k]` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds(Vec<(f64, f64)>);

impl Bounds {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Argument("bounds need at least one dimension".into()));
        }
        for (k, &(lo, hi)) in intervals.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Argument(format!("dimension {k}: need finite lo < hi, got [{lo}, {hi}]")));
            }
        }
        Ok(Self(intervals))
    }

    /// The same interval repeated `dim` times.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn lower(&self, k: usize) -> f64 {
        self.0[k].0
    }

    pub fn upper(&self, k: usize) -> f64 {
        self.0[k].1
    }

    pub fn width(&self, k: usize) -> f64 {
        self.0[k].1 - self.0[k].0
    }

    /// Euclidean length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        self.0.iter().map(|(lo, hi)| (hi - lo).powi(2)).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.0).all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// Checks dimension and containment, naming the first offending coordinate.
    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Argument(format!("point has {} coordinates, domain has {}", x.len(), self.dim())));
        }
        for (index, (&value, &(lo, hi))) in x.iter().zip(&self.0).enumerate() {
            if !(lo <= value && value <= hi) {
                return Err(Error::Domain { index, value, lo, hi });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.0) {
            *v = v.clamp(lo, hi);
        }
    }

    /// Maps a point of the box to the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.0).map(|(v, (lo, hi))| (v - lo) / (hi - lo)).collect()
    }

    /// Maps a unit-cube point back into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.0).map(|(v, (lo, hi))| (lo + v * (hi - lo)).clamp(*lo, *hi)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Ackley,
    Levy,
    Griewank,
    Schwefel,
    Eggholder,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 5] = [
        BenchmarkKind::Ackley,
        BenchmarkKind::Levy,
        BenchmarkKind::Griewank,
        BenchmarkKind::Schwefel,
        BenchmarkKind::Eggholder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Ackley => "ackley",
            BenchmarkKind::Levy => "levy",
            BenchmarkKind::Griewank => "griewank",
            BenchmarkKind::Schwefel => "schwefel",
            BenchmarkKind::Eggholder => "eggholder",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join("|")
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark `{s}`; valid names: {}", Self::valid_names())))
    }
}

/// A test objective on its canonical domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    kind: BenchmarkKind,
    bounds: Bounds,
}

impl Benchmark {
    pub const DEFAULT_DIM: usize = 2;

    /// The benchmark in two dimensions.
    pub fn new(kind: BenchmarkKind) -> Self {
        Self::with_dim(kind, Self::DEFAULT_DIM).expect("every benchmark supports 2D")
    }

    /// Eggholder is defined only in 2D.
    pub fn with_dim(kind: BenchmarkKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        if kind == BenchmarkKind::Eggholder && dim != 2 {
            return Err(Error::Argument("eggholder is only defined in 2D".into()));
        }
        let half = match kind {
            BenchmarkKind::Ackley => 32.768,
            BenchmarkKind::Levy => 10.0,
            BenchmarkKind::Griewank => 600.0,
            BenchmarkKind::Schwefel => 500.0,
            BenchmarkKind::Eggholder => 512.0,
        };
        Ok(Self { kind, bounds: Bounds::cube(-half, half, dim)? })
    }

    pub fn kind(&self) -> BenchmarkKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn domain(&self) -> Bounds {
        self.bounds.clone()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Objective value `-f(x)`. Rejects points outside the domain.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.bounds.check(x)?;
        Ok(-self.minimization_form(x))
    }

    /// Published global maximizer of the negated objective.
    pub fn optimizer(&self) -> Vec<f64> {
        let d = self.dim();
        match self.kind {
            BenchmarkKind::Ackley | BenchmarkKind::Griewank => vec![0.0; d],
            BenchmarkKind::Levy => vec![1.0; d],
            BenchmarkKind::Schwefel => vec![420.9687; d],
            BenchmarkKind::Eggholder => vec![512.0, 404.2319],
        }
    }

    /// Objective value at [`Benchmark::optimizer`].
    pub fn optimum_value(&self) -> f64 {
        -self.minimization_form(&self.optimizer())
    }

    fn minimization_form(&self, x: &[f64]) -> f64 {
        match self.kind {
            BenchmarkKind::Ackley => ackley(x),
            BenchmarkKind::Levy => levy(x),
            BenchmarkKind::Griewank => griewank(x),
            BenchmarkKind::Schwefel => schwefel(x),
            BenchmarkKind::Eggholder => eggholder(x),
        }
    }
}

fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
}

fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let last = w[w.len() - 1];
    let head = (PI * w[0]).sin().powi(2);
    let body: f64 =
        w[..w.len() - 1].iter().map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2))).sum();
    let tail = (last - 1.0).powi(2) * (1.0 + (2.0 * PI * last).sin().powi(2));
    head + body + tail
}

fn griewank(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|v| v * v / 4000.0).sum();
    let prod: f64 = x.iter().enumerate().map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos()).product();
    sum - prod + 1.0
}

fn schwefel(x: &[f64]) -> f64 {
    418.9829 * x.len() as f64 - x.iter().map(|v| v * v.abs().sqrt().sin()).sum::<f64>()
}

fn eggholder(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    -(x2 + 47.0) * (x2 + x1 / 2.0 + 47.0).abs().sqrt().sin() - x1 * (x1 - (x2 + 47.0)).abs().sqrt().sin()
}

/// Draws `n` points uniformly from `bounds`.
pub fn sample_uniform<R: rand::Rng + ?Sized>(bounds: &Bounds, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Argument("sample_uniform needs n >= 1".into()));
    }
    Ok((0..n)
        .map(|_| bounds.intervals().iter().map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo)).collect())
        .collect())
}
