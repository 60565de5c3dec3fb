//! UCB acquisition functions `mu + beta * sigma` and their inner maximizer.
//!
//! The action set holds five weights: `0` (pure exploitation), `2.576^(i-1)`
//! for `i = 1, 2, 3` (that is `1`, `2.576` and `6.635776`), and `+inf`, which
//! scores by `sigma` alone (pure exploration).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::benchmarks::Bounds;
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::parallel;

/// Exploration weight of a UCB acquisition function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

impl Beta {
    pub fn label(&self) -> String {
        match self {
            Beta::Infinite => "inf".to_owned(),
            Beta::Finite(b) => format!("{b}"),
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The 99% normal quantile, kept as the literal constant.
pub const BASE_WEIGHT: f64 = 2.576;

/// Weights in ascending order. `2.576^2` is stored as its decimal value,
/// `6.635776`, rather than the rounded floating-point product.
pub const BETAS: [Beta; 5] =
    [Beta::Finite(0.0), Beta::Finite(1.0), Beta::Finite(BASE_WEIGHT), Beta::Finite(6.635776), Beta::Infinite];

pub const N_ACTIONS: usize = BETAS.len();

/// One member of the candidate action set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionSpec {
    index: usize,
    beta: Beta,
}

impl AcquisitionSpec {
    pub fn from_index(index: usize) -> Result<Self> {
        BETAS
            .get(index)
            .map(|&beta| Self { index, beta })
            .ok_or_else(|| Error::Argument(format!("action index {index} outside 0..{N_ACTIONS}")))
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn beta(&self) -> Beta {
        self.beta
    }

    /// Acquisition value from posterior moments. No validation; see [`ucb_value`].
    #[inline]
    pub fn score(&self, mean: f64, std: f64) -> f64 {
        match self.beta {
            Beta::Infinite => std,
            Beta::Finite(0.0) => mean,
            Beta::Finite(b) => mean + b * std,
        }
    }

    pub fn valid_labels() -> String {
        BETAS.iter().map(Beta::label).collect::<Vec<_>>().join(", ")
    }
}

impl FromStr for AcquisitionSpec {
    type Err = Error;

    /// Accepts `inf` or a number equal to one of the weights.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let found = if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            Some(N_ACTIONS - 1)
        } else {
            s.parse::<f64>()
                .ok()
                .and_then(|v| BETAS.iter().position(|b| matches!(b, Beta::Finite(w) if (w - v).abs() <= 1e-9)))
        };
        match found {
            Some(i) => Self::from_index(i),
            None => {
                Err(Error::Config(format!("beta `{s}` is not a candidate weight; valid: {}", Self::valid_labels())))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    beta: String,
    index: usize,
}

impl Serialize for AcquisitionSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpecRepr { beta: self.beta.label(), index: self.index }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for AcquisitionSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SpecRepr::deserialize(d)?;
        let spec: AcquisitionSpec = repr.beta.parse().map_err(serde::de::Error::custom)?;
        if spec.index != repr.index {
            return Err(serde::de::Error::custom(format!(
                "beta {} has index {}, not {}",
                repr.beta, spec.index, repr.index
            )));
        }
        Ok(spec)
    }
}

/// All candidate acquisition functions, in ascending weight order.
pub fn candidate_set() -> Vec<AcquisitionSpec> {
    (0..N_ACTIONS).map(|i| AcquisitionSpec { index: i, beta: BETAS[i] }).collect()
}

/// `mu + beta * sigma`; `sigma` alone for the infinite weight.
pub fn ucb_value(mean: f64, std: f64, spec: AcquisitionSpec) -> Result<f64> {
    if !(std >= 0.0) {
        return Err(Error::Argument(format!("posterior std must be nonnegative, got {std}")));
    }
    Ok(spec.score(mean, std))
}

/// Settings for the derivative-free inner maximizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptimizer {
    /// Quasi-uniform probes over the domain.
    pub n_probes: usize,
    /// Best probes refined by pattern search.
    pub n_starts: usize,
    pub iterations: usize,
    /// Initial refinement step as a fraction of each domain width.
    pub initial_step: f64,
}

impl Default for InnerOptimizer {
    fn default() -> Self {
        Self { n_probes: 1024, n_starts: 8, iterations: 20, initial_step: 0.05 }
    }
}

/// Result of an inner maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub x: Vec<f64>,
    pub value: f64,
    pub probes: usize,
}

impl InnerOptimizer {
    /// Maximizes the acquisition function over `bounds`.
    ///
    /// Probes are a randomly shifted Halton sequence, the domain corners (up to
    /// ten dimensions) and the model's training inputs; the best `n_starts` are refined by coordinate pattern
    /// search. Ties keep the earliest probe.
    pub fn maximize<R: rand::Rng + ?Sized>(
        &self,
        model: &GpModel,
        spec: AcquisitionSpec,
        bounds: &Bounds,
        rng: &mut R,
    ) -> Proposal {
        let d = bounds.dim();
        let af = |u: &[f64]| -> f64 {
            let x = bounds.from_unit(u);
            let (m, s) = model.posterior(&x);
            spec.score(m, s)
        };

        let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let mut probes = halton(self.n_probes, d, &shift);
        // extrapolating posteriors often peak at a corner, where the
        // nearest quasi-random probes can still score below an interior basin
        if d <= MAX_CORNER_DIM {
            probes.extend(corners(d));
        }
        if model.bounds() == bounds {
            probes.extend(model.train_inputs().iter().cloned());
        } else {
            probes.extend(model.train_inputs().iter().map(|u| bounds.to_unit(&model.bounds().from_unit(u))));
        }
        let values = parallel::map_slice(&probes, |u| af(u));

        let mut order: Vec<usize> = (0..probes.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let mut best_u = probes[order[0]].clone();
        let mut best_v = values[order[0]];
        let mut count = probes.len();

        let starts: Vec<usize> = order.into_iter().take(self.n_starts).collect();
        let refined = parallel::map_slice(&starts, |&i| self.refine(&af, probes[i].clone(), values[i]));
        for (u, v, n) in refined {
            count += n;
            if v > best_v {
                best_u = u;
                best_v = v;
            }
        }
        Proposal { x: bounds.from_unit(&best_u), value: best_v, probes: count }
    }

    fn refine(&self, af: &(impl Fn(&[f64]) -> f64 + Sync), mut u: Vec<f64>, mut v: f64) -> (Vec<f64>, f64, usize) {
        let d = u.len();
        let mut step = self.initial_step;
        let mut evals = 0;
        for _ in 0..self.iterations {
            let mut best: Option<(Vec<f64>, f64)> = None;
            for k in 0..d {
                for sign in [1.0, -1.0] {
                    let mut c = u.clone();
                    c[k] = (c[k] + sign * step).clamp(0.0, 1.0);
                    if c[k] == u[k] {
                        continue;
                    }
                    let cv = af(&c);
                    evals += 1;
                    if cv > best.as_ref().map_or(v, |b| b.1) {
                        best = Some((c, cv));
                    }
                }
            }
            match best {
                Some((c, cv)) => {
                    u = c;
                    v = cv;
                }
                None => step *= 0.5,
            }
        }
        (u, v, evals)
    }
}

/// Maximizes `spec` over `bounds` with the default inner optimizer.
pub fn maximize_af<R: rand::Rng + ?Sized>(
    model: &GpModel,
    spec: AcquisitionSpec,
    bounds: &Bounds,
    rng: &mut R,
) -> Vec<f64> {
    InnerOptimizer::default().maximize(model, spec, bounds, rng).x
}

const MAX_CORNER_DIM: usize = 10;

/// The `2^d` vertices of the unit cube.
fn corners(d: usize) -> Vec<Vec<f64>> {
    (0..1usize << d).map(|m| (0..d).map(|k| ((m >> k) & 1) as f64).collect()).collect()
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().all(|p| !c.is_multiple_of(*p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton points in `[0, 1)^d` with a Cranley-Patterson rotation by `shift`.
fn halton(n: usize, d: usize, shift: &[f64]) -> Vec<Vec<f64>> {
    let primes = first_primes(d);
    (1..=n as u64)
        .map(|i| primes.iter().zip(shift).map(|(&p, s)| (radical_inverse(i, p) + s).fract()).collect())
        .collect()
}
