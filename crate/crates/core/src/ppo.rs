//! Proximal policy optimization of the acquisition-function selector.
//!
//! The composite loss is
//! `L = L_clip + w1 * L_se + w2 * L_entropy` with
//!
//! * `L_clip = -sum_t min(rho_t A_t, clip(rho_t, 1 - eps, 1 + eps) A_t)`,
//!   `rho_t = p(a_t | s_t) / p_old(a_t | s_t)`,
//! * `L_se = sum_t (R_t - V(s_t))^2`,
//! * `L_entropy = -sum_t H(pi(s_t))`,
//!
//! where `R_t` is the discounted return to the end of the episode and
//! `A_t = R_t - V_old(s_t)`. Training divides each minibatch sum by the
//! minibatch size before the optimizer step.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::AcquisitionSpec;
use crate::env::{state_len, BoEnv, EnvConfig, StepRecord, Transition};
use crate::error::{Error, Result};
use crate::neural::{self, Adam, Arch, OutputGrads, PolicyParams, PROB_FLOOR};
use crate::{parallel, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Policy updates (M).
    pub updates: usize,
    /// Episodes collected per update (N).
    pub episodes_per_update: usize,
    /// Optimization epochs per update (K).
    pub epochs: usize,
    pub gamma: f64,
    pub clip: f64,
    pub w1: f64,
    pub w2: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// `None` uses a quarter of the collected transitions.
    pub minibatch_size: Option<usize>,
    pub normalize_advantages: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            updates: 40,
            episodes_per_update: 10,
            epochs: 10,
            gamma: 0.99,
            clip: 0.2,
            w1: 0.5,
            w2: 0.01,
            learning_rate: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            minibatch_size: None,
            normalize_advantages: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.updates == 0 || self.episodes_per_update == 0 || self.epochs == 0 {
            return bad("updates, episodes_per_update and epochs must be at least 1");
        }
        if self.minibatch_size == Some(0) {
            return bad("minibatch_size must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) {
            return bad("loss weights must be nonnegative");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and nonnegative");
        }
        Ok(())
    }
}

/// Hex SHA-256 of the canonical JSON of both configurations.
pub fn config_hash(env: &EnvConfig, train: &TrainConfig) -> String {
    let text = serde_json::to_string(&(env, train)).expect("configs serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// `R_t = r_t + gamma R_{t+1}` with `R_T = r_T`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

/// `A_t = R_t - V(s_t)`.
pub fn advantages(returns: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if returns.len() != values.len() {
        return Err(Error::Argument(format!("{} returns but {} values", returns.len(), values.len())));
    }
    Ok(returns.iter().zip(values).map(|(r, v)| r - v).collect())
}

/// Shifts and scales to zero mean and unit standard deviation.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if sd > 1e-12 {
            *v /= sd;
        }
    }
}

/// `-min(rho A, clip(rho, 1 - eps, 1 + eps) A)` for one transition.
pub fn clipped_term(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    -(ratio * advantage).min(clipped * advantage)
}

/// One training example for the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: Vec<f64>,
    pub action: usize,
    pub old_prob: f64,
    pub ret: f64,
    pub advantage: f64,
}

/// Values of the three loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossParts {
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Multipliers applied to each loss term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
}

impl LossWeights {
    pub fn composite(w1: f64, w2: f64) -> Self {
        Self { clip: 1.0, value: w1, entropy: w2 }
    }
}

fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().map(|&p| p * p.max(PROB_FLOOR).ln()).sum::<f64>()
}

/// Sums the loss terms over `batch` and optionally their gradient.
pub fn loss_and_grad(
    batch: &[Sample],
    p: &PolicyParams,
    eps: f64,
    weights: LossWeights,
    want_grad: bool,
) -> Result<(LossParts, Option<Vec<f64>>)> {
    let mut parts = LossParts::default();
    let mut up = OutputGrads::default();
    let states: Vec<&[f64]> = batch.iter().map(|s| s.state.as_slice()).collect();
    let (all_probs, values) = p.forward_batch(&states)?;
    for ((s, probs), &value) in batch.iter().zip(&all_probs).zip(&values) {
        let pa = probs[s.action].max(PROB_FLOOR);
        let ratio = pa / s.old_prob;
        parts.clip += clipped_term(ratio, s.advantage, eps);
        parts.value += (s.ret - value).powi(2);
        let h = entropy(probs);
        parts.entropy -= h;

        if want_grad {
            let mut d_logits = vec![0.0; probs.len()];
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
            // the unclipped branch is active when it is the smaller one
            if ratio * s.advantage <= clipped * s.advantage {
                let d_ratio = -s.advantage * weights.clip;
                for (j, d) in d_logits.iter_mut().enumerate() {
                    let delta = if j == s.action { 1.0 } else { 0.0 };
                    *d += d_ratio * ratio * (delta - probs[j]);
                }
            }
            // d(-H)/dz_j = p_j (ln p_j + H)
            for (j, d) in d_logits.iter_mut().enumerate() {
                *d += weights.entropy * probs[j] * (probs[j].max(PROB_FLOOR).ln() + h);
            }
            up.actor_logits.push(d_logits);
            up.critic_value.push(-2.0 * (s.ret - value) * weights.value);
        }
    }
    parts.total = weights.clip * parts.clip + weights.value * parts.value + weights.entropy * parts.entropy;
    let grad = if want_grad {
        let states: Vec<Vec<f64>> = batch.iter().map(|s| s.state.clone()).collect();
        Some(p.backprop(&states, &up)?)
    } else {
        None
    };
    Ok((parts, grad))
}

pub fn clip_loss(batch: &[Sample], p: &PolicyParams, eps: f64) -> Result<f64> {
    Ok(loss_and_grad(batch, p, eps, LossWeights::composite(0.0, 0.0), false)?.0.clip)
}

pub fn value_loss(batch: &[Sample], p: &PolicyParams) -> Result<f64> {
    Ok(loss_and_grad(batch, p, 0.2, LossWeights::composite(0.0, 0.0), false)?.0.value)
}

pub fn entropy_loss(batch: &[Sample], p: &PolicyParams) -> Result<f64> {
    Ok(loss_and_grad(batch, p, 0.2, LossWeights::composite(0.0, 0.0), false)?.0.entropy)
}

pub fn total_loss(batch: &[Sample], p: &PolicyParams, eps: f64, w1: f64, w2: f64) -> Result<f64> {
    Ok(loss_and_grad(batch, p, eps, LossWeights::composite(w1, w2), false)?.0.total)
}

/// Cumulative rewards per episode in collection order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningCurve {
    pub episode_returns: Vec<f64>,
}

impl LearningCurve {
    /// Averages over consecutive blocks of five episodes (last block may be short).
    pub fn five_episode_averages(&self) -> Vec<f64> {
        self.episode_returns.chunks(5).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }

    /// Writes `episode,cumulative_reward,five_episode_avg`; each row carries
    /// the average of the five-episode block it belongs to.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let blocks = self.five_episode_averages();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["episode", "cumulative_reward", "five_episode_avg"])?;
        for (i, r) in self.episode_returns.iter().enumerate() {
            out.write_record([i.to_string(), fmt_float(*r), fmt_float(blocks[i / 5])])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// 17 significant digits, locale-free.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// A completed training episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub records: Vec<StepRecord>,
}

impl Episode {
    pub fn cumulative_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Runs one episode sampling actions from `params`.
pub fn collect_episode(
    params: &PolicyParams,
    env_cfg: &EnvConfig,
    seed: u64,
    update: usize,
    slot: usize,
    episode: usize,
) -> Result<Episode> {
    let key = [update as u64, slot as u64];
    let mut design = rng::stream(seed, "design", &key);
    let mut inner = rng::stream(seed, "inner", &key);
    let mut actions = rng::stream(seed, "action", &key);
    let (mut env, mut state) = BoEnv::reset(env_cfg, &mut design)?;
    let mut transitions = Vec::with_capacity(env_cfg.horizon);
    let mut records = Vec::with_capacity(env_cfg.horizon);
    while !env.is_done() {
        let probs = params.actor_forward(&state.to_vec())?;
        let a = neural::sample_action(&probs, &mut actions);
        let spec = AcquisitionSpec::from_index(a)?;
        let out = env.step(spec, &mut inner)?;
        transitions.push(Transition {
            state: state.clone(),
            action: a,
            reward: out.reward,
            old_action_prob: probs[a].max(PROB_FLOOR),
            episode,
            t: env.t(),
        });
        records.push(StepRecord {
            episode,
            t: env.t(),
            state: state.clone(),
            beta: spec.beta().label(),
            x: out.x,
            y: out.y,
            reward: out.reward,
            incumbent: env.incumbent(),
        });
        state = out.state;
    }
    Ok(Episode { transitions, records })
}

/// Transitions of one update with returns and (frozen) advantages.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutBatch {
    /// Computes returns per episode and advantages from the critic in `params`.
    pub fn build(episodes: &[Episode], params: &PolicyParams, cfg: &TrainConfig) -> Result<Self> {
        let mut transitions = Vec::new();
        let mut returns = Vec::new();
        for ep in episodes {
            let rewards: Vec<f64> = ep.transitions.iter().map(|t| t.reward).collect();
            returns.extend(discounted_returns(&rewards, cfg.gamma));
            transitions.extend(ep.transitions.iter().cloned());
        }
        let values =
            transitions.iter().map(|t| params.critic_forward(&t.state.to_vec())).collect::<Result<Vec<_>>>()?;
        let mut adv = advantages(&returns, &values)?;
        if cfg.normalize_advantages {
            normalize(&mut adv);
        }
        Ok(Self { transitions, returns, advantages: adv })
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.transitions
            .iter()
            .zip(&self.returns)
            .zip(&self.advantages)
            .map(|((t, &ret), &advantage)| Sample {
                state: t.state.to_vec(),
                action: t.action,
                old_prob: t.old_action_prob,
                ret,
                advantage,
            })
            .collect()
    }
}

/// Runs `epochs` passes of minibatch descent on the composite loss.
/// Returns the mean per-sample loss parts of the final epoch.
pub fn optimize(
    params: &mut PolicyParams,
    adam: &mut Adam,
    samples: &[Sample],
    cfg: &TrainConfig,
    update: usize,
) -> Result<LossParts> {
    let n = samples.len();
    let mb = cfg.minibatch_size.unwrap_or((n / 4).max(1)).min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle = rng::stream(cfg.seed, "minibatch", &[update as u64]);
    let weights = LossWeights::composite(cfg.w1, cfg.w2);
    let mut last = LossParts::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch = LossParts::default();
        for chunk in order.chunks(mb) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (parts, grad) = loss_and_grad(&batch, params, cfg.clip, weights, true)?;
            let scale = 1.0 / batch.len() as f64;
            let grad: Vec<f64> = grad.expect("requested").into_iter().map(|g| g * scale).collect();
            adam.step(params.flat_mut(), &grad);
            epoch.clip += parts.clip;
            epoch.value += parts.value;
            epoch.entropy += parts.entropy;
            epoch.total += parts.total;
        }
        let nf = n as f64;
        last = LossParts {
            clip: epoch.clip / nf,
            value: epoch.value / nf,
            entropy: epoch.entropy / nf,
            total: epoch.total / nf,
        };
    }
    if params.flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("policy parameters became non-finite".into()));
    }
    Ok(last)
}

/// Per-update diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateStats {
    pub update: usize,
    pub episodes: usize,
    pub failed_episodes: usize,
    pub mean_cumulative_reward: f64,
    pub loss: LossParts,
}

/// Everything training produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub curve: LearningCurve,
    pub updates: Vec<UpdateStats>,
    pub transitions_collected: usize,
    pub failed_episodes: usize,
    /// Step records of every successful episode, when requested.
    pub records: Vec<StepRecord>,
}

/// Options that do not affect the trained parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    pub keep_records: bool,
}

/// Trains a selector policy on one benchmark.
pub fn train(env_cfg: &EnvConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(env_cfg, cfg, TrainOptions::default())
}

pub fn train_with(env_cfg: &EnvConfig, cfg: &TrainConfig, opts: TrainOptions) -> Result<TrainOutcome> {
    env_cfg.validate()?;
    cfg.validate()?;
    let arch = Arch::new(state_len(env_cfg.dim));
    let mut params = PolicyParams::init(arch, &mut rng::stream(cfg.seed, "init", &[]));
    let mut adam = Adam::new(params.len(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
    let n = cfg.episodes_per_update;
    let mut curve = LearningCurve::default();
    let mut stats = Vec::with_capacity(cfg.updates);
    let mut collected = 0;
    let mut failed_total = 0;
    let mut records = Vec::new();

    for m in 0..cfg.updates {
        let frozen = &params;
        let results =
            parallel::map_indexed(n, |slot| collect_episode(frozen, env_cfg, cfg.seed, m, slot, m * n + slot));
        let mut episodes = Vec::with_capacity(n);
        let mut failed = 0;
        for (slot, r) in results.into_iter().enumerate() {
            match r {
                Ok(ep) => episodes.push(ep),
                Err(e) if e.is_numerical() => {
                    log::warn!("update {m}: episode {slot} dropped: {e}");
                    failed += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if 2 * failed > n {
            return Err(Error::Numerical(format!("update {m}: {failed} of {n} episodes failed numerically")));
        }
        failed_total += failed;
        for ep in &episodes {
            curve.episode_returns.push(ep.cumulative_reward());
            if opts.keep_records {
                records.extend(ep.records.iter().cloned());
            }
        }
        let batch = RolloutBatch::build(&episodes, &params, cfg)?;
        collected += batch.transitions.len();
        let samples = batch.samples();
        let loss = optimize(&mut params, &mut adam, &samples, cfg, m)?;
        let mean_ret = episodes.iter().map(Episode::cumulative_reward).sum::<f64>() / episodes.len() as f64;
        log::info!(
            "update {}/{}: mean episode reward {mean_ret:.4}, loss {:.4} (clip {:.4}, value {:.4}, entropy {:.4})",
            m + 1,
            cfg.updates,
            loss.total,
            loss.clip,
            loss.value,
            loss.entropy
        );
        stats.push(UpdateStats {
            update: m,
            episodes: episodes.len(),
            failed_episodes: failed,
            mean_cumulative_reward: mean_ret,
            loss,
        });
    }

    Ok(TrainOutcome {
        params,
        curve,
        updates: stats,
        transitions_collected: collected,
        failed_episodes: failed_total,
        records,
    })
}
