//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use rlabo::benchmarks::{sample_uniform, Benchmark, BenchmarkKind, Bounds};
use rlabo::gp::{GpModel, ObservationSet};
use rlabo::neural::{Arch, PolicyParams};
use rlabo::ppo::Sample;
use rlabo::rng;

use rand::Rng;

/// Dense full-inverse GP at the model's hyperparameters, in normalized units.
pub struct DenseGp {
    x: Vec<Vec<f64>>,
    y: DVector<f64>,
    ls: f64,
    s2: f64,
    kinv: DMatrix<f64>,
    pub lml: f64,
    /// 2-norm condition number of the covariance matrix.
    pub cond: f64,
}

fn matern(r: f64, ls: f64) -> f64 {
    let z = 3f64.sqrt() * r / ls;
    (1.0 + z) * (-z).exp()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

impl DenseGp {
    pub fn from_model(m: &GpModel) -> Self {
        let x = m.train_inputs().to_vec();
        let n = x.len();
        let ls = m.lengthscale();
        let s2 = m.signal_variance();
        let jitter = m.jitter();
        let k = DMatrix::from_fn(n, n, |i, j| s2 * matern(dist(&x[i], &x[j]), ls) + if i == j { jitter } else { 0.0 });
        let sv = k.clone().singular_values();
        let cond = sv.max() / sv.min();
        let kinv = k.clone().try_inverse().expect("oracle inverse");
        let y = DVector::from_column_slice(m.train_targets());
        let lu = k.lu();
        let log_det: f64 = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum();
        let quad = (y.transpose() * &kinv * &y)[0];
        let lml = -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Self { x, y, ls, s2, kinv, lml, cond }
    }

    /// `(mean, std)` in normalized units at a unit-cube point.
    pub fn posterior(&self, u: &[f64]) -> (f64, f64) {
        let (mean, var) = self.posterior_var(u);
        (mean, var.max(0.0).sqrt())
    }

    /// `(mean, variance)`; the variance is not clamped at zero.
    pub fn posterior_var(&self, u: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.s2 * matern(dist(xi, u), self.ls)));
        let mean = (k.transpose() * &self.kinv * &self.y)[0];
        (mean, self.s2 - (k.transpose() * &self.kinv * &k)[0])
    }

    pub fn signal_variance(&self) -> f64 {
        self.s2
    }
}

/// `n` uniform observations of a benchmark.
pub fn observe(kind: BenchmarkKind, n: usize, r: &mut rng::Rng) -> (ObservationSet, Bounds) {
    let b = Benchmark::new(kind);
    let pts = sample_uniform(b.bounds(), n, r).unwrap();
    let ys = pts.iter().map(|p| b.evaluate(p).unwrap()).collect();
    (ObservationSet::new(pts, ys).unwrap(), b.bounds().clone())
}

/// Uniform points in the unit square with iid uniform values in `[-1, 1]`.
pub fn random_dataset(n: usize, r: &mut rng::Rng) -> (ObservationSet, Bounds) {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
    let ys = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    (ObservationSet::new(pts, ys).unwrap(), Bounds::cube(0.0, 1.0, 2).unwrap())
}

/// Maximum absolute disagreement between the model and the dense oracle over
/// the training points and `probes` random unit points.
pub fn oracle_gap(m: &GpModel, probes: usize, r: &mut rng::Rng) -> f64 {
    let dense = DenseGp::from_model(m);
    let mut gap = (m.log_marginal_likelihood() - dense.lml).abs();
    let dim = m.bounds().dim();
    let mut pts: Vec<Vec<f64>> = m.train_inputs().to_vec();
    pts.extend((0..probes).map(|_| (0..dim).map(|_| r.random::<f64>()).collect::<Vec<_>>()));
    for u in &pts {
        let (a, b) = m.posterior_normalized(u);
        let (c, d) = dense.posterior(u);
        gap = gap.max((a - c).abs()).max((b - d).abs());
    }
    gap
}

pub fn random_params(in_dim: usize, r: &mut rng::Rng) -> PolicyParams {
    let mut p = PolicyParams::init(Arch::new(in_dim), r);
    // move the heads away from their near-zero initialization
    p.scale_heads(30.0, 30.0);
    for v in p.flat_mut().iter_mut() {
        *v += 0.05 * (r.random::<f64>() - 0.5);
    }
    p
}

pub fn random_batch(p: &PolicyParams, size: usize, r: &mut rng::Rng) -> Vec<Sample> {
    let in_dim = p.arch().in_dim;
    (0..size)
        .map(|_| {
            let state: Vec<f64> = (0..in_dim).map(|_| r.random_range(-2.0..2.0)).collect();
            let probs = p.actor_forward(&state).unwrap();
            let action = r.random_range(0..probs.len());
            // old probabilities perturbed so some ratios sit outside the clip range
            let old_prob = (probs[action] * r.random_range(0.6..1.5)).clamp(1e-3, 1.0);
            Sample { state, action, old_prob, ret: r.random_range(-3.0..3.0), advantage: r.random_range(-2.0..2.0) }
        })
        .collect()
}

/// Central finite-difference check of `grad` against `f` at every coordinate.
/// Returns the worst `|g - fd| / max(|g|, |fd|, floor)`.
pub fn fd_check(theta: &[f64], grad: &[f64], h: f64, floor: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        let orig = t[i];
        t[i] = orig + h;
        let fp = f(&t);
        t[i] = orig - h;
        let fm = f(&t);
        t[i] = orig;
        let fd = (fp - fm) / (2.0 * h);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}

/// Normalized score `(af(x) - min) / (max - min)` of `maximize_af` against a
/// `side x side` grid oracle, for every candidate weight on one model.
pub fn grid_scores(model: &GpModel, side: usize, r: &mut rng::Rng) -> Vec<f64> {
    use rlabo::acquisition::{candidate_set, maximize_af};
    let bounds = model.bounds().clone();
    let grid: Vec<(f64, f64)> = (0..side * side)
        .map(|k| {
            let u = [(k / side) as f64 / (side - 1) as f64, (k % side) as f64 / (side - 1) as f64];
            model.posterior(&bounds.from_unit(&u))
        })
        .collect();
    candidate_set()
        .into_iter()
        .map(|spec| {
            let (lo, hi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(m, s)| {
                let v = spec.score(m, s);
                (lo.min(v), hi.max(v))
            });
            let x = maximize_af(model, spec, &bounds, r);
            let (m, s) = model.posterior(&x);
            let v = spec.score(m, s);
            if hi - lo <= 1e-12 * hi.abs().max(1.0) {
                // flat acquisition surface: every point is optimal
                if v >= hi - 1e-9 * hi.abs().max(1.0) {
                    1.0
                } else {
                    0.0
                }
            } else {
                (v - lo) / (hi - lo)
            }
        })
        .collect()
}

/// Model for grid-oracle fit `j` on `kind`: between 3 and 50 uniform observations.
pub fn grid_model(kind: BenchmarkKind, j: u64) -> GpModel {
    let mut r = rng::stream(41, kind.name(), &[j]);
    let n = r.random_range(3..=50);
    let (obs, bounds) = observe(kind, n, &mut r);
    GpModel::fit(&obs, &bounds).unwrap()
}
