//! Execution with a trained selector, fixed-weight baselines, and the
//! seed-paired comparison harness.
//!
//! A run with seed `s` draws its initial design from `stream(s, "design")`,
//! shared by every method, and its inner-optimizer randomness from
//! `stream(s, "inner", [method])`. Methods therefore start from identical
//! designs and differ only through their acquisition choices.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::acquisition::{candidate_set, AcquisitionSpec, N_ACTIONS};
use crate::benchmarks::BenchmarkKind;
use crate::env::{state_len, BoEnv, EnvConfig, StateVector};
use crate::error::{Error, Result};
use crate::neural::{argmax_action, PolicyParams};
use crate::ppo::fmt_float;
use crate::{parallel, rng};

/// How acquisition functions are chosen during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Policy,
    Fixed(AcquisitionSpec),
}

impl Method {
    /// The five fixed baselines followed by the policy.
    pub fn all() -> Vec<Method> {
        let mut m: Vec<Method> = candidate_set().into_iter().map(Method::Fixed).collect();
        m.push(Method::Policy);
        m
    }

    pub fn label(&self) -> String {
        match self {
            Method::Policy => "policy".into(),
            Method::Fixed(s) => format!("fixed-{}", s.beta().label()),
        }
    }

    fn stream_id(&self) -> u64 {
        match self {
            Method::Fixed(s) => s.index() as u64,
            Method::Policy => N_ACTIONS as u64,
        }
    }
}

/// One row of a run trace. Initial-design rows have `t = 0` and beta `init`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    pub beta: String,
    pub x: Vec<f64>,
    pub y: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub benchmark: BenchmarkKind,
    pub method: String,
    pub seed: u64,
    pub init_design_size: usize,
    pub records: Vec<TraceRecord>,
    pub best: f64,
}

impl RunTrace {
    /// Best-so-far after the initial design and after each BO step.
    pub fn best_curve(&self) -> Vec<f64> {
        let k = self.init_design_size;
        let mut curve = vec![self.records[k - 1].best_so_far];
        curve.extend(self.records[k..].iter().map(|r| r.best_so_far));
        curve
    }

    /// BO steps (rows after the initial design).
    pub fn steps(&self) -> &[TraceRecord] {
        &self.records[self.init_design_size..]
    }

    /// First step whose best-so-far covers 90% of the run's total improvement.
    pub fn steps_to_90pct(&self) -> usize {
        let curve = self.best_curve();
        let (start, end) = (curve[0], curve[curve.len() - 1]);
        let target = start + 0.9 * (end - start);
        curve.iter().position(|&b| b >= target).unwrap_or(curve.len() - 1)
    }
}

fn execute(
    env_cfg: &EnvConfig,
    method: Method,
    mut select: impl FnMut(&StateVector) -> Result<AcquisitionSpec>,
) -> Result<RunTrace> {
    let mut design = rng::stream(env_cfg.seed, "design", &[]);
    let mut inner = rng::stream(env_cfg.seed, "inner", &[method.stream_id()]);
    let (mut env, mut state) = BoEnv::reset(env_cfg, &mut design)?;
    let mut records = Vec::with_capacity(env_cfg.init_design_size + env_cfg.horizon);
    let mut best = f64::NEG_INFINITY;
    let obs = env.observations();
    for (x, &y) in obs.points().iter().zip(obs.values()) {
        best = best.max(y);
        records.push(TraceRecord { t: 0, beta: "init".into(), x: x.clone(), y, best_so_far: best });
    }
    while !env.is_done() {
        let spec = select(&state)?;
        let out = env.step(spec, &mut inner)?;
        best = best.max(out.y);
        records.push(TraceRecord { t: env.t(), beta: spec.beta().label(), x: out.x, y: out.y, best_so_far: best });
        state = out.state;
    }
    Ok(RunTrace {
        benchmark: env_cfg.benchmark,
        method: method.label(),
        seed: env_cfg.seed,
        init_design_size: env_cfg.init_design_size,
        records,
        best,
    })
}

fn check_arch(params: &PolicyParams, env_cfg: &EnvConfig) -> Result<()> {
    let arch = params.arch();
    let need = state_len(env_cfg.dim);
    if arch.in_dim != need || arch.actions != N_ACTIONS {
        return Err(Error::Config(format!(
            "checkpoint expects {} state entries and {} actions; this problem has {need} and {N_ACTIONS}",
            arch.in_dim, arch.actions
        )));
    }
    Ok(())
}

/// Runs BO choosing the most probable acquisition function at every step.
pub fn run_policy(params: &PolicyParams, env_cfg: &EnvConfig) -> Result<RunTrace> {
    check_arch(params, env_cfg)?;
    execute(env_cfg, Method::Policy, |s| {
        let probs = params.actor_forward(&s.to_vec())?;
        AcquisitionSpec::from_index(argmax_action(&probs))
    })
}

/// Runs BO with one acquisition function throughout.
pub fn run_fixed(spec: AcquisitionSpec, env_cfg: &EnvConfig) -> Result<RunTrace> {
    execute(env_cfg, Method::Fixed(spec), |_| Ok(spec))
}

pub fn run_method(method: Method, params: Option<&PolicyParams>, env_cfg: &EnvConfig) -> Result<RunTrace> {
    match method {
        Method::Fixed(spec) => run_fixed(spec, env_cfg),
        Method::Policy => {
            let p = params.ok_or_else(|| Error::Config(format!("no checkpoint for {}", env_cfg.benchmark)))?;
            run_policy(p, env_cfg)
        }
    }
}

/// Writes traces with columns `benchmark,method,seed,t,beta,x1..xd,y,best_so_far`.
pub fn write_trace_csv<W: Write>(w: W, traces: &[RunTrace]) -> Result<()> {
    let dim = traces.first().map_or(2, |t| t.records[0].x.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["benchmark", "method", "seed", "t", "beta"].map(String::from).to_vec();
    header.extend((1..=dim).map(|k| format!("x{k}")));
    header.extend(["y".to_owned(), "best_so_far".to_owned()]);
    out.write_record(&header)?;
    for tr in traces {
        for r in &tr.records {
            let mut row =
                vec![tr.benchmark.to_string(), tr.method.clone(), tr.seed.to_string(), r.t.to_string(), r.beta.clone()];
            row.extend(r.x.iter().map(|v| fmt_float(*v)));
            row.push(fmt_float(r.y));
            row.push(fmt_float(r.best_so_far));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Settings shared by every run in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct CompareConfig {
    pub seeds: usize,
    pub horizon: usize,
    pub init_design_size: usize,
    pub dim: usize,
    /// Root from which the paired run seeds are derived.
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { seeds: 20, horizon: 30, init_design_size: 3, dim: 2, seed: 0 }
    }
}

impl CompareConfig {
    /// Environment for paired seed `k` on `benchmark`.
    pub fn env(&self, benchmark: BenchmarkKind, k: usize) -> EnvConfig {
        EnvConfig {
            benchmark,
            dim: self.dim,
            horizon: self.horizon,
            init_design_size: self.init_design_size,
            seed: rng::derive_seed(self.seed, "pair", &[k as u64]),
        }
    }
}

/// `q`-quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_final_best: f64,
    pub iqr_final_best: f64,
    pub mean_steps_to_90pct: f64,
    /// 1 is best by mean final value.
    pub rank: usize,
}

/// Mean and quartiles of best-so-far at each step (index 0 is the initial design).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodCurve {
    pub method: String,
    pub mean: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub benchmark: BenchmarkKind,
    pub optimum: f64,
    /// Sorted by (method order, seed).
    pub traces: Vec<RunTrace>,
    pub summaries: Vec<MethodSummary>,
    pub curves: Vec<MethodCurve>,
}

impl BenchmarkReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// How often the policy picked each weight over all its runs.
    pub fn policy_action_counts(&self) -> [usize; N_ACTIONS] {
        let labels: Vec<String> = candidate_set().iter().map(|s| s.beta().label()).collect();
        let mut counts = [0; N_ACTIONS];
        for tr in self.traces.iter().filter(|t| t.method == "policy") {
            for r in tr.steps() {
                if let Some(i) = labels.iter().position(|l| *l == r.beta) {
                    counts[i] += 1;
                }
            }
        }
        counts
    }

    fn build(benchmark: BenchmarkKind, traces: Vec<RunTrace>) -> Self {
        let methods = Method::all();
        let mut summaries = Vec::with_capacity(methods.len());
        let mut curves = Vec::with_capacity(methods.len());
        for m in &methods {
            let label = m.label();
            let runs: Vec<&RunTrace> = traces.iter().filter(|t| t.method == label).collect();
            if runs.is_empty() {
                continue;
            }
            let finals: Vec<f64> = runs.iter().map(|t| t.best).collect();
            let fs = sorted(&finals);
            let steps: f64 = runs.iter().map(|t| t.steps_to_90pct() as f64).sum::<f64>() / runs.len() as f64;
            summaries.push(MethodSummary {
                method: label.clone(),
                mean_final_best: finals.iter().sum::<f64>() / finals.len() as f64,
                iqr_final_best: quantile(&fs, 0.75) - quantile(&fs, 0.25),
                mean_steps_to_90pct: steps,
                rank: 0,
            });
            let per_run: Vec<Vec<f64>> = runs.iter().map(|t| t.best_curve()).collect();
            let len = per_run[0].len();
            let mut curve = MethodCurve { method: label, mean: vec![], q25: vec![], q75: vec![] };
            for i in 0..len {
                let col: Vec<f64> = per_run.iter().map(|c| c[i]).collect();
                let s = sorted(&col);
                curve.mean.push(col.iter().sum::<f64>() / col.len() as f64);
                curve.q25.push(quantile(&s, 0.25));
                curve.q75.push(quantile(&s, 0.75));
            }
            curves.push(curve);
        }
        let mut order: Vec<usize> = (0..summaries.len()).collect();
        order.sort_by(|&a, &b| summaries[b].mean_final_best.total_cmp(&summaries[a].mean_final_best).then(a.cmp(&b)));
        for (r, &i) in order.iter().enumerate() {
            summaries[i].rank = r + 1;
        }
        let optimum = crate::benchmarks::Benchmark::new(benchmark).optimum_value();
        Self { benchmark, optimum, traces, summaries, curves }
    }

    /// Writes `method,t,mean_best,q25_best,q75_best`.
    pub fn write_curves_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["method", "t", "mean_best", "q25_best", "q75_best"])?;
        for c in &self.curves {
            for t in 0..c.mean.len() {
                out.write_record([
                    c.method.clone(),
                    t.to_string(),
                    fmt_float(c.mean[t]),
                    fmt_float(c.q25[t]),
                    fmt_float(c.q75[t]),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub config: CompareConfig,
    pub benchmarks: Vec<BenchmarkReport>,
}

impl ComparisonReport {
    pub fn total_runs(&self) -> usize {
        self.benchmarks.iter().map(|b| b.traces.len()).sum()
    }

    pub fn get(&self, benchmark: BenchmarkKind) -> Option<&BenchmarkReport> {
        self.benchmarks.iter().find(|b| b.benchmark == benchmark)
    }

    /// Writes `benchmark,method,mean_final_best,iqr_final_best,mean_steps_to_90pct,rank`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["benchmark", "method", "mean_final_best", "iqr_final_best", "mean_steps_to_90pct", "rank"])?;
        for b in &self.benchmarks {
            for s in &b.summaries {
                out.write_record([
                    b.benchmark.to_string(),
                    s.method.clone(),
                    fmt_float(s.mean_final_best),
                    fmt_float(s.iqr_final_best),
                    fmt_float(s.mean_steps_to_90pct),
                    s.rank.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs every method on every benchmark for `cfg.seeds` paired seeds.
pub fn compare(
    benchmarks: &[BenchmarkKind],
    checkpoints: &BTreeMap<BenchmarkKind, PolicyParams>,
    cfg: &CompareConfig,
) -> Result<ComparisonReport> {
    let missing: Vec<String> =
        benchmarks.iter().filter(|b| !checkpoints.contains_key(b)).map(|b| b.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing checkpoint for: {}", missing.join(", "))));
    }
    if cfg.seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    for b in benchmarks {
        check_arch(&checkpoints[b], &cfg.env(*b, 0))?;
    }
    let methods = Method::all();
    let units: Vec<(BenchmarkKind, Method, usize)> = benchmarks
        .iter()
        .flat_map(|&b| methods.iter().flat_map(move |&m| (0..cfg.seeds).map(move |k| (b, m, k))))
        .collect();
    let traces = parallel::map_slice(&units, |&(b, m, k)| run_method(m, checkpoints.get(&b), &cfg.env(b, k)));
    let mut by_bench: BTreeMap<BenchmarkKind, Vec<RunTrace>> = BTreeMap::new();
    for (unit, tr) in units.iter().zip(traces) {
        by_bench.entry(unit.0).or_default().push(tr?);
    }
    let reports =
        benchmarks.iter().map(|b| BenchmarkReport::build(*b, by_bench.remove(b).unwrap_or_default())).collect();
    Ok(ComparisonReport { config: cfg.clone(), benchmarks: reports })
}

/// Rank pattern of the two extreme baselines across problem difficulty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternCheck {
    pub explore_rank_complex: f64,
    pub explore_rank_simple: f64,
    pub exploit_rank_complex: f64,
    pub exploit_rank_simple: f64,
}

impl PatternCheck {
    /// Pure exploration ranks better (lower) on the complex problems.
    pub fn explore_holds(&self) -> bool {
        self.explore_rank_complex < self.explore_rank_simple
    }

    /// Pure exploitation ranks better on the simple problems.
    pub fn exploit_holds(&self) -> bool {
        self.exploit_rank_simple < self.exploit_rank_complex
    }
}

/// Mean ranks of `fixed-inf` and `fixed-0` on Eggholder + Schwefel versus
/// Ackley + Levy + Griewank. `None` unless all five benchmarks were compared.
pub fn pattern_check(report: &ComparisonReport) -> Option<PatternCheck> {
    use BenchmarkKind::*;
    let mean_rank = |method: &str, set: &[BenchmarkKind]| -> Option<f64> {
        let mut total = 0.0;
        for b in set {
            total += report.get(*b)?.summary(method)?.rank as f64;
        }
        Some(total / set.len() as f64)
    };
    let complex = [Eggholder, Schwefel];
    let simple = [Ackley, Levy, Griewank];
    Some(PatternCheck {
        explore_rank_complex: mean_rank("fixed-inf", &complex)?,
        explore_rank_simple: mean_rank("fixed-inf", &simple)?,
        exploit_rank_complex: mean_rank("fixed-0", &complex)?,
        exploit_rank_simple: mean_rank("fixed-0", &simple)?,
    })
}
