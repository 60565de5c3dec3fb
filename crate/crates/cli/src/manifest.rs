//! Run manifests: everything needed to repeat a command.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use rlabo::benchmarks::BenchmarkKind;
use rlabo::env::EnvConfig;
use rlabo::ppo::{config_hash, TrainConfig};
use rlabo::runner::CompareConfig;
use rlabo::Error;

use crate::config::ResolvedTrain;

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn load_json<T: DeserializeOwned>(path: &Path, command: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let head: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if head.get("command").and_then(|c| c.as_str()) != Some(command) {
        return Err(Error::Config(format!("{} is not a `{command}` manifest", path.display())).into());
    }
    Ok(serde_json::from_value(head).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainManifest {
    pub command: String,
    pub version: String,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub config_hash: String,
    pub jobs: usize,
    pub out: PathBuf,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

impl TrainManifest {
    pub fn new(env: &EnvConfig, train: &TrainConfig, jobs: usize, out: &Path) -> Self {
        Self {
            command: "train".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            env: env.clone(),
            train: train.clone(),
            config_hash: config_hash(env, train),
            jobs,
            out: out.to_path_buf(),
            started_unix: unix_now(),
            finished_unix: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path, "train")
    }

    pub fn resolved(&self) -> ResolvedTrain {
        ResolvedTrain { env: self.env.clone(), train: self.train.clone() }
    }

    pub fn finish(&mut self) {
        self.finished_unix = Some(unix_now());
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(self, path)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareManifest {
    pub command: String,
    pub version: String,
    pub benchmarks: Vec<BenchmarkKind>,
    pub config: CompareConfig,
    pub checkpoints: PathBuf,
    pub jobs: usize,
    pub out: PathBuf,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

impl CompareManifest {
    pub fn new(
        benchmarks: &[BenchmarkKind],
        config: &CompareConfig,
        checkpoints: &Path,
        jobs: usize,
        out: &Path,
    ) -> Self {
        Self {
            command: "compare".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            benchmarks: benchmarks.to_vec(),
            config: config.clone(),
            checkpoints: checkpoints.to_path_buf(),
            jobs,
            out: out.to_path_buf(),
            started_unix: unix_now(),
            finished_unix: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path, "compare")
    }

    pub fn finish(&mut self) {
        self.finished_unix = Some(unix_now());
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(self, path)
    }
}
