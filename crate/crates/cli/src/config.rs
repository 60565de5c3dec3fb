//! Training configuration: defaults, then a flat JSON file, then flags.

use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::{Map, Value};

use rlabo::benchmarks::BenchmarkKind;
use rlabo::env::EnvConfig;
use rlabo::ppo::TrainConfig;
use rlabo::Error;

const ENV_KEYS: [&str; 4] = ["benchmark", "dim", "horizon", "init_design_size"];

/// Flags that override the config file.
#[derive(Args, Debug, Default)]
pub struct ConfigOverrides {
    /// Policy updates.
    #[arg(long)]
    pub updates: Option<usize>,
    /// Episodes per update.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Optimization epochs per update.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Discount factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Ratio clipping range.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Adam step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Transitions per gradient step (default: a quarter of each update's batch).
    #[arg(long)]
    pub minibatch_size: Option<usize>,
    /// BO steps per episode.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Uniform random points evaluated before the first BO step.
    #[arg(long)]
    pub init_design_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTrain {
    pub env: EnvConfig,
    pub train: TrainConfig,
}

fn train_keys() -> Vec<String> {
    match serde_json::to_value(TrainConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn read_flat(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::Config(format!("{}: expected a JSON object", path.display())).into()),
        Err(e) => Err(Error::Config(format!("{}: {e}", path.display())).into()),
    }
}

fn field<T: serde::de::DeserializeOwned>(m: &Map<String, Value>, key: &str) -> Result<Option<T>> {
    m.get(key)
        .map(|v| serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("config key `{key}`: {e}"))))
        .transpose()
        .map_err(Into::into)
}

/// Merge defaults, the optional config file and the command-line flags.
pub fn resolve_train(
    benchmark: Option<BenchmarkKind>,
    config: Option<&Path>,
    seed: Option<u64>,
    o: &ConfigOverrides,
) -> Result<ResolvedTrain> {
    let file = config.map(read_flat).transpose()?.unwrap_or_default();
    let known = train_keys();
    let unknown: Vec<&str> =
        file.keys().map(String::as_str).filter(|k| !ENV_KEYS.contains(k) && !known.iter().any(|t| t == k)).collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))).into());
    }

    let train_part: Map<String, Value> =
        file.iter().filter(|(k, _)| !ENV_KEYS.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect();
    let mut train: TrainConfig =
        serde_json::from_value(Value::Object(train_part)).map_err(|e| Error::Config(format!("config: {e}")))?;

    let benchmark = match (benchmark, field::<BenchmarkKind>(&file, "benchmark")?) {
        (Some(b), _) | (None, Some(b)) => b,
        (None, None) => {
            return Err(Error::Config(format!("--benchmark is required ({})", BenchmarkKind::valid_names())).into())
        }
    };
    let mut env = EnvConfig::new(benchmark);
    if let Some(d) = field(&file, "dim")? {
        env.dim = d;
    }
    if let Some(h) = field(&file, "horizon")? {
        env.horizon = h;
    }
    if let Some(n) = field(&file, "init_design_size")? {
        env.init_design_size = n;
    }

    if let Some(s) = seed {
        train.seed = s;
    }
    if let Some(v) = o.updates {
        train.updates = v;
    }
    if let Some(v) = o.episodes {
        train.episodes_per_update = v;
    }
    if let Some(v) = o.epochs {
        train.epochs = v;
    }
    if let Some(v) = o.gamma {
        train.gamma = v;
    }
    if let Some(v) = o.clip {
        train.clip = v;
    }
    if let Some(v) = o.learning_rate {
        train.learning_rate = v;
    }
    if o.minibatch_size.is_some() {
        train.minibatch_size = o.minibatch_size;
    }
    if let Some(v) = o.horizon {
        env.horizon = v;
    }
    if let Some(v) = o.init_design_size {
        env.init_design_size = v;
    }
    // Training episodes draw their own seeds from the training seed.
    env.seed = train.seed;

    env.validate()?;
    train.validate()?;
    Ok(ResolvedTrain { env, train })
}
