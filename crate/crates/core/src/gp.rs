//! Gaussian-process surrogate with an isotropic Matern-3/2 kernel.
//!
//! Inputs are mapped to the unit cube through the domain bounds and outputs are
//! centred and scaled to unit standard deviation before fitting. The length
//! scale is therefore expressed in unit-cube coordinates and is refit after
//! every observation, so it tracks the data as a run progresses.
//!
//! Fitting maximizes the log marginal likelihood over the log length scale by
//! multi-start pattern search; for each candidate length scale the signal
//! variance takes its closed-form profile value `y^T K~^{-1} y / n`.

use serde::{Deserialize, Serialize};

use crate::benchmarks::Bounds;
use crate::error::{Error, Result};
use crate::linalg;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative jitter ladder: `1e-8, 1e-7, ..., 1e-2` times the signal variance.
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;
const DUPLICATE_TOL: f64 = 1e-10;
const N_STARTS: usize = 8;
const MIN_LOG_STEP: f64 = 0.02;

/// Archive of evaluated `(x, y)` pairs and the best value seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    incumbent: f64,
}

impl ObservationSet {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != values.len() {
            return Err(Error::Argument(format!(
                "need equal, nonzero numbers of points and values (got {} and {})",
                points.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("observation values must be finite".into()));
        }
        let incumbent = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { points, values, incumbent })
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        self.points.push(x);
        self.values.push(y);
        self.incumbent = self.incumbent.max(y);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn incumbent(&self) -> f64 {
        self.incumbent
    }
}

/// Matern-3/2 covariance `s2 (1 + sqrt3 r / l) exp(-sqrt3 r / l)`.
pub fn matern32(x1: &[f64], x2: &[f64], lengthscale: f64, signal_variance: f64) -> Result<f64> {
    if !(lengthscale > 0.0) || !(signal_variance > 0.0) {
        return Err(Error::Argument(format!(
            "kernel hyperparameters must be positive (lengthscale {lengthscale}, signal variance {signal_variance})"
        )));
    }
    if x1.len() != x2.len() {
        return Err(Error::Argument("kernel inputs differ in dimension".into()));
    }
    Ok(signal_variance * matern32_unit(distance(x1, x2), lengthscale))
}

/// Unit-variance Matern-3/2 correlation at distance `r`.
#[inline]
pub(crate) fn matern32_unit(r: f64, lengthscale: f64) -> f64 {
    let z = SQRT3 * r / lengthscale;
    (1.0 + z) * (-z).exp()
}

#[inline]
fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Training data after deduplication and normalization.
#[derive(Debug, Clone)]
struct Normalized {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    dist: Vec<f64>,
}

impl Normalized {
    fn new(obs: &ObservationSet, bounds: &Bounds) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::Argument("cannot fit a GP to zero observations".into()));
        }
        let mut x: Vec<Vec<f64>> = Vec::with_capacity(obs.len());
        let mut raw: Vec<f64> = Vec::with_capacity(obs.len());
        for (p, &v) in obs.points().iter().zip(obs.values()) {
            if p.len() != bounds.dim() {
                return Err(Error::Argument(format!(
                    "observation has {} coordinates, domain has {}",
                    p.len(),
                    bounds.dim()
                )));
            }
            let u = bounds.to_unit(p);
            match x.iter().position(|q| distance(q, &u) < DUPLICATE_TOL) {
                Some(i) => raw[i] = raw[i].max(v),
                None => {
                    x.push(u);
                    raw.push(v);
                }
            }
        }
        let n = raw.len() as f64;
        let y_mean = raw.iter().sum::<f64>() / n;
        let sd = (raw.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
        let y_scale = if sd < 1e-12 { 1.0 } else { sd };
        let y = raw.iter().map(|v| (v - y_mean) / y_scale).collect();
        let m = x.len();
        let mut dist = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..i {
                let d = distance(&x[i], &x[j]);
                dist[i * m + j] = d;
                dist[j * m + i] = d;
            }
        }
        Ok(Self { x, y, y_mean, y_scale, dist })
    }

    fn len(&self) -> usize {
        self.y.len()
    }
}

/// Factorization of `K~ + tau I` for one length scale.
#[derive(Debug, Clone)]
struct Factor {
    chol: Vec<f64>,
    tau: f64,
    /// `K~^{-1} y` with `K~` the unit-variance correlation matrix plus jitter.
    alpha_unit: Vec<f64>,
    quad: f64,
    log_det: f64,
}

fn factor(data: &Normalized, lengthscale: f64) -> Result<Factor> {
    let n = data.len();
    let mut tau = JITTER_START;
    let mut last = (0, 0.0);
    while tau <= JITTER_MAX * (1.0 + 1e-9) {
        let mut k: Vec<f64> = data.dist.iter().map(|&r| matern32_unit(r, lengthscale)).collect();
        for i in 0..n {
            k[i * n + i] += tau;
        }
        match linalg::cholesky_in_place(&mut k, n) {
            Ok(()) => {
                let mut alpha = data.y.clone();
                linalg::solve_lower(&k, n, &mut alpha);
                let quad = alpha.iter().map(|v| v * v).sum();
                linalg::solve_lower_transpose(&k, n, &mut alpha);
                let log_det = linalg::log_det(&k, n);
                return Ok(Factor { chol: k, tau, alpha_unit: alpha, quad, log_det });
            }
            Err(e) => last = e,
        }
        tau *= 10.0;
    }
    Err(Error::Numerical(format!(
        "kernel matrix not positive definite: n = {n}, lengthscale = {lengthscale:e}, \
         jitter up to {JITTER_MAX:e}, pivot {} = {:e}",
        last.0, last.1
    )))
}

fn profile_variance(quad: f64, n: usize) -> f64 {
    let s2 = quad / n as f64;
    // all-equal targets normalize to zeros; keep the unit prior variance
    if s2 > 1e-12 {
        s2
    } else {
        1.0
    }
}

fn lml_of(f: &Factor, signal_variance: f64, n: usize) -> f64 {
    let nf = n as f64;
    // K = s2 (K~ + tau I)
    -0.5 * f.quad / signal_variance - 0.5 * (f.log_det + nf * signal_variance.ln()) - 0.5 * nf * LN_2PI
}

/// Fitted GP: hyperparameters, normalized training data and cached factorization.
#[derive(Debug, Clone)]
pub struct GpModel {
    bounds: Bounds,
    lengthscale: f64,
    signal_variance: f64,
    data: Normalized,
    factor: Factor,
    lml: f64,
    alpha: Vec<f64>,
}

/// Outcome of one hyperparameter candidate tried during [`GpModel::fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub lengthscale: f64,
    pub log_marginal_likelihood: f64,
}

impl GpModel {
    /// Fits the length scale by maximizing the log marginal likelihood.
    pub fn fit(obs: &ObservationSet, bounds: &Bounds) -> Result<Self> {
        Self::fit_traced(obs, bounds).map(|(m, _)| m)
    }

    /// Like [`GpModel::fit`], also returning every candidate evaluated.
    pub fn fit_traced(obs: &ObservationSet, bounds: &Bounds) -> Result<(Self, Vec<Candidate>)> {
        let data = Normalized::new(obs, bounds)?;
        let n = data.len();
        let diag = (bounds.dim() as f64).sqrt();
        let (lo, hi) = ((1e-2 * diag).ln(), (10.0 * diag).ln());
        let stratum = (hi - lo) / N_STARTS as f64;

        let mut trace = Vec::new();
        let mut best: Option<(f64, f64, Factor)> = None;
        let mut last_err = None;
        let mut eval = |log_l: f64, trace: &mut Vec<Candidate>| -> Option<f64> {
            let l = log_l.exp();
            match factor(&data, l) {
                Ok(f) => {
                    let lml = lml_of(&f, profile_variance(f.quad, n), n);
                    trace.push(Candidate { lengthscale: l, log_marginal_likelihood: lml });
                    if best.as_ref().is_none_or(|(_, b, _)| lml > *b) {
                        best = Some((l, lml, f));
                    }
                    Some(lml)
                }
                Err(e) => {
                    last_err = Some(e);
                    None
                }
            }
        };

        for s in 0..N_STARTS {
            let mut x = lo + (s as f64 + 0.5) * stratum;
            let Some(mut fx) = eval(x, &mut trace) else { continue };
            let mut step = 0.5 * stratum;
            while step >= MIN_LOG_STEP {
                let mut moved = false;
                for cand in [x + step, x - step] {
                    let cand = cand.clamp(lo, hi);
                    if cand == x {
                        continue;
                    }
                    if let Some(fc) = eval(cand, &mut trace) {
                        if fc > fx {
                            x = cand;
                            fx = fc;
                            moved = true;
                            break;
                        }
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
        }

        let Some((lengthscale, lml, factor)) = best else {
            return Err(last_err.unwrap_or_else(|| Error::Numerical("no hyperparameter candidate".into())));
        };
        let signal_variance = profile_variance(factor.quad, n);
        Ok((Self::assemble(bounds.clone(), lengthscale, signal_variance, data, factor, lml), trace))
    }

    /// Builds a model at fixed hyperparameters (`lengthscale` in unit-cube
    /// coordinates, `signal_variance` in normalized output units).
    pub fn with_hyperparameters(
        obs: &ObservationSet,
        bounds: &Bounds,
        lengthscale: f64,
        signal_variance: f64,
    ) -> Result<Self> {
        if !(lengthscale > 0.0) || !(signal_variance > 0.0) {
            return Err(Error::Argument(format!(
                "kernel hyperparameters must be positive (lengthscale {lengthscale}, signal variance {signal_variance})"
            )));
        }
        let data = Normalized::new(obs, bounds)?;
        let n = data.len();
        let factor = factor(&data, lengthscale)?;
        let lml = lml_of(&factor, signal_variance, n);
        Ok(Self::assemble(bounds.clone(), lengthscale, signal_variance, data, factor, lml))
    }

    fn assemble(
        bounds: Bounds,
        lengthscale: f64,
        signal_variance: f64,
        data: Normalized,
        factor: Factor,
        lml: f64,
    ) -> Self {
        let alpha = factor.alpha_unit.iter().map(|a| a / signal_variance).collect();
        Self { bounds, lengthscale, signal_variance, data, factor, lml, alpha }
    }

    /// Length scale in unit-cube coordinates.
    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// Signal variance in normalized output units.
    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    /// Signal variance in the original output units.
    pub fn output_signal_variance(&self) -> f64 {
        self.signal_variance * self.data.y_scale * self.data.y_scale
    }

    /// Absolute diagonal jitter in normalized units (`tau * signal_variance`).
    pub fn jitter(&self) -> f64 {
        self.factor.tau * self.signal_variance
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Deduplicated training inputs in unit-cube coordinates.
    pub fn train_inputs(&self) -> &[Vec<f64>] {
        &self.data.x
    }

    /// Normalized training targets.
    pub fn train_targets(&self) -> &[f64] {
        &self.data.y
    }

    /// `(mean, scale)` with `y_normalized = (y - mean) / scale`.
    pub fn normalization(&self) -> (f64, f64) {
        (self.data.y_mean, self.data.y_scale)
    }

    pub fn n_train(&self) -> usize {
        self.data.len()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Posterior `(mean, std)` in normalized units at a unit-cube point.
    pub fn posterior_normalized(&self, u: &[f64]) -> (f64, f64) {
        let n = self.data.len();
        let mut k: Vec<f64> = self
            .data
            .x
            .iter()
            .map(|xi| self.signal_variance * matern32_unit(distance(xi, u), self.lengthscale))
            .collect();
        let mean = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        // K = s2 L L^T, so k^T K^{-1} k = |L^{-1} k|^2 / s2
        linalg::solve_lower(&self.factor.chol, n, &mut k);
        let explained = k.iter().map(|v| v * v).sum::<f64>() / self.signal_variance;
        let var = (self.signal_variance - explained).max(0.0);
        (mean, var.sqrt())
    }

    /// Posterior `(mean, std)` in output units at a unit-cube point.
    pub fn posterior_unit(&self, u: &[f64]) -> (f64, f64) {
        let (m, s) = self.posterior_normalized(u);
        (self.data.y_mean + self.data.y_scale * m, self.data.y_scale * s)
    }

    /// Posterior `(mean, std)` in output units at a point of the domain.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        self.posterior_unit(&self.bounds.to_unit(x))
    }
}
