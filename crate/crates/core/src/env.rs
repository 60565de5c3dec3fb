//! One Bayesian-optimization run seen as an MDP.
//!
//! The state holds the log of the fitted unit-cube length scale, the
//! observation count relative to the full budget, and the per-dimension
//! (population) variance of the observed inputs in unit-cube coordinates.
//! An action picks one UCB weight; the environment maximizes that acquisition
//! function, evaluates the objective there, refits the GP and pays the
//! improvement over the incumbent damped by `ln(t + 1) + 1`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionSpec, InnerOptimizer};
use crate::benchmarks::{sample_uniform, Benchmark, BenchmarkKind};
use crate::error::{Error, Result};
use crate::gp::{GpModel, ObservationSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub lengthscale_feat: f64,
    pub count_feat: f64,
    pub spread_feats: Vec<f64>,
}

impl StateVector {
    pub fn len(&self) -> usize {
        2 + self.spread_feats.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.lengthscale_feat);
        v.push(self.count_feat);
        v.extend_from_slice(&self.spread_feats);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.lengthscale_feat.is_finite()
            && self.count_feat.is_finite()
            && self.spread_feats.iter().all(|v| v.is_finite())
    }
}

/// State length for a `dim`-dimensional problem.
pub fn state_len(dim: usize) -> usize {
    2 + dim
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub benchmark: BenchmarkKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// BO iterations per episode.
    pub horizon: usize,
    pub init_design_size: usize,
    pub seed: u64,
}

fn default_dim() -> usize {
    Benchmark::DEFAULT_DIM
}

impl EnvConfig {
    pub fn new(benchmark: BenchmarkKind) -> Self {
        Self { benchmark, dim: default_dim(), horizon: 30, init_design_size: 3, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.init_design_size == 0 {
            return Err(Error::Config("init_design_size must be at least 1".into()));
        }
        self.problem().map(|_| ())
    }

    pub fn problem(&self) -> Result<Benchmark> {
        Benchmark::with_dim(self.benchmark, self.dim).map_err(|e| Error::Config(e.to_string()))
    }
}

/// One `<s_t, a_t, r_t>` record with the sampling-time action probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    pub old_action_prob: f64,
    pub episode: usize,
    pub t: usize,
}

/// What one environment step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: StateVector,
    pub reward: f64,
    pub y: f64,
    pub x: Vec<f64>,
}

/// Encodes the GP fit and observation statistics at iteration `t` of `horizon`.
pub fn encode_state(model: &GpModel, obs: &ObservationSet, t: usize, horizon: usize) -> StateVector {
    let n = obs.len();
    let init = n.saturating_sub(t);
    let count_feat = n as f64 / (init + horizon) as f64;
    let bounds = model.bounds();
    let d = bounds.dim();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let unit: Vec<Vec<f64>> = obs.points().iter().map(|p| bounds.to_unit(p)).collect();
    for u in &unit {
        for k in 0..d {
            sum[k] += u[k];
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    for u in &unit {
        for k in 0..d {
            sum_sq[k] += (u[k] - mean[k]).powi(2);
        }
    }
    let spread_feats = sum_sq.iter().map(|s| (s / n as f64).clamp(0.0, 0.25)).collect();
    StateVector { lengthscale_feat: model.lengthscale().ln(), count_feat, spread_feats }
}

/// Improvement of `y` over the incumbent of `obs_before`, divided by `ln(t + 1) + 1`.
pub fn compute_reward(y: f64, obs_before: &ObservationSet, t: usize) -> f64 {
    let gain = (y - obs_before.incumbent()).max(0.0);
    gain / ((t as f64 + 1.0).ln() + 1.0)
}

/// A live BO episode. Cloning snapshots the full episode state.
#[derive(Debug, Clone)]
pub struct BoEnv {
    cfg: EnvConfig,
    problem: Benchmark,
    obs: ObservationSet,
    model: GpModel,
    t: usize,
    state: StateVector,
    inner: InnerOptimizer,
}

impl BoEnv {
    /// Samples and evaluates the initial design, fits the GP, encodes the state.
    pub fn reset<R: rand::Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Result<(Self, StateVector)> {
        cfg.validate()?;
        let problem = cfg.problem()?;
        let points = sample_uniform(problem.bounds(), cfg.init_design_size, rng)?;
        let values = points.iter().map(|x| problem.evaluate(x)).collect::<Result<Vec<_>>>()?;
        let obs = ObservationSet::new(points, values)?;
        let model = GpModel::fit(&obs, problem.bounds())?;
        let state = encode_state(&model, &obs, 0, cfg.horizon);
        let env = Self {
            cfg: cfg.clone(),
            problem,
            obs,
            model,
            t: 0,
            state: state.clone(),
            inner: InnerOptimizer::default(),
        };
        Ok((env, state))
    }

    pub fn with_inner_optimizer(mut self, inner: InnerOptimizer) -> Self {
        self.inner = inner;
        self
    }

    /// Runs one BO iteration with the chosen acquisition function.
    pub fn step<R: rand::Rng + ?Sized>(&mut self, action: AcquisitionSpec, rng: &mut R) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::State(format!("episode already ran its {} steps", self.cfg.horizon)));
        }
        let proposal = self.inner.maximize(&self.model, action, self.problem.bounds(), rng);
        let x = proposal.x;
        let y = self.problem.evaluate(&x)?;
        let t = self.t + 1;
        let reward = compute_reward(y, &self.obs, t);
        let mut obs = self.obs.clone();
        obs.push(x.clone(), y);
        let model = GpModel::fit(&obs, self.problem.bounds())?;
        self.obs = obs;
        self.model = model;
        self.t = t;
        self.state = encode_state(&self.model, &self.obs, self.t, self.cfg.horizon);
        Ok(StepOutcome { state: self.state.clone(), reward, y, x })
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.horizon
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &Benchmark {
        &self.problem
    }

    pub fn incumbent(&self) -> f64 {
        self.obs.incumbent()
    }
}

/// One JSON-lines record of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub t: usize,
    pub state: StateVector,
    pub beta: String,
    pub x: Vec<f64>,
    pub y: f64,
    pub reward: f64,
    pub incumbent: f64,
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[StepRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
