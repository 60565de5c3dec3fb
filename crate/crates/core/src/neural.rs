//! Actor and critic networks with hand-derived gradients.
//!
//! Both are separate `in -> 64 -> 64 -> out` perceptrons with tanh hidden
//! units and a linear output layer. The actor's outputs are logits of a
//! softmax over the acquisition functions; the critic outputs a state value.
//! All parameters live in one flat vector (actor first, then critic), layer by
//! layer as a row-major `out x in` weight block followed by the bias.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wide::f64x4;

use crate::acquisition::N_ACTIONS;
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub in_dim: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
}

impl Arch {
    pub fn new(in_dim: usize) -> Self {
        Self { in_dim, hidden: vec![64, 64], actions: N_ACTIONS }
    }

    fn sizes(&self, out: usize) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.hidden.len() + 2);
        s.push(self.in_dim);
        s.extend_from_slice(&self.hidden);
        s.push(out);
        s
    }

    pub fn actor_sizes(&self) -> Vec<usize> {
        self.sizes(self.actions)
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        self.sizes(1)
    }

    pub fn actor_len(&self) -> usize {
        mlp_len(&self.actor_sizes())
    }

    pub fn critic_len(&self) -> usize {
        mlp_len(&self.critic_sizes())
    }
}

fn mlp_len(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Activations of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
struct Activations {
    /// `layers[0]` is the input; the last entry is the linear output.
    layers: Vec<Vec<f64>>,
}

impl Activations {
    fn output(&self) -> &[f64] {
        self.layers.last().expect("nonempty")
    }
}

/// Dot product with four independent accumulators, one per SIMD lane.
/// Multiplies and adds stay separate, so the result does not depend on FMA.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = f64x4::ZERO;
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        acc += lanes(x) * lanes(y);
    }
    finish(acc, tail)
}

#[inline]
fn lanes(x: &[f64]) -> f64x4 {
    f64x4::new([x[0], x[1], x[2], x[3]])
}

#[inline]
fn finish(acc: f64x4, tail: f64) -> f64 {
    let a = acc.to_array();
    (a[0] + a[1]) + (a[2] + a[3]) + tail
}

/// Hyperbolic tangent through `exp`, about twice as fast as `f64::tanh`.
/// Small arguments go through `exp_m1` to keep full relative accuracy.
#[inline]
fn tanh(x: f64) -> f64 {
    let a = x.abs();
    let t = if a < 0.3 {
        let e = (2.0 * a).exp_m1();
        e / (e + 2.0)
    } else {
        let e = (-2.0 * a).exp();
        (1.0 - e) / (1.0 + e)
    };
    t.copysign(x)
}

fn mlp_forward(params: &[f64], sizes: &[usize], x: &[f64]) -> Activations {
    let mut layers = Vec::with_capacity(sizes.len());
    layers.push(x.to_vec());
    let mut off = 0;
    let last = sizes.len() - 2;
    for (l, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[off..off + n_in * n_out];
        let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let input = &layers[l];
        let mut out: Vec<f64> = (0..n_out)
            .map(|o| {
                let row = &weights[o * n_in..(o + 1) * n_in];
                bias[o] + dot(row, input)
            })
            .collect();
        if l < last {
            out.iter_mut().for_each(|v| *v = tanh(*v));
        }
        layers.push(out);
    }
    Activations { layers }
}

/// Dot products of one row against four inputs at once. Each result is
/// summed in exactly the order `dot` uses, so outputs match it bitwise.
#[inline]
fn dot4(row: &[f64], x: [&[f64]; 4]) -> [f64; 4] {
    let n = row.len();
    let [a, b, c, d] = x.map(|v| &v[..n]);
    let mut acc = [f64x4::ZERO; 4];
    let inputs = a.chunks_exact(4).zip(b.chunks_exact(4)).zip(c.chunks_exact(4).zip(d.chunks_exact(4)));
    for (w, ((a, b), (c, d))) in row.chunks_exact(4).zip(inputs) {
        let w = lanes(w);
        acc[0] += w * lanes(a);
        acc[1] += w * lanes(b);
        acc[2] += w * lanes(c);
        acc[3] += w * lanes(d);
    }
    let m = n / 4 * 4;
    let mut out = [0.0; 4];
    for (s, v) in [a, b, c, d].into_iter().enumerate() {
        let tail: f64 = row[m..].iter().zip(&v[m..]).map(|(w, v)| w * v).sum();
        out[s] = finish(acc[s], tail);
    }
    out
}

/// Network outputs for many inputs; same values as `mlp_forward` per input.
fn mlp_outputs(params: &[f64], sizes: &[usize], xs: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut cur: Vec<Vec<f64>> = xs.iter().map(|x| x.to_vec()).collect();
    let mut off = 0;
    let last = sizes.len() - 2;
    for (l, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[off..off + n_in * n_out];
        let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let mut next = vec![vec![0.0; n_out]; cur.len()];
        let full = cur.len() / 4 * 4;
        for (o, b) in bias.iter().enumerate() {
            let row = &weights[o * n_in..(o + 1) * n_in];
            for i in (0..full).step_by(4) {
                let d = dot4(row, [&cur[i], &cur[i + 1], &cur[i + 2], &cur[i + 3]]);
                for k in 0..4 {
                    next[i + k][o] = b + d[k];
                }
            }
            for i in full..cur.len() {
                next[i][o] = b + dot(row, &cur[i]);
            }
        }
        if l < last {
            next.iter_mut().flatten().for_each(|v| *v = tanh(*v));
        }
        cur = next;
    }
    cur
}

/// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
fn mlp_backward(params: &[f64], sizes: &[usize], acts: &Activations, d_out: &[f64], grad: &mut [f64]) {
    let n_layers = sizes.len() - 1;
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for w in sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    let mut delta = d_out.to_vec();
    for l in (0..n_layers).rev() {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let off = offsets[l];
        let input = &acts.layers[l];
        for o in 0..n_out {
            let g = delta[o];
            if g == 0.0 {
                continue;
            }
            let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
            for (r, x) in row.iter_mut().zip(input) {
                *r += g * x;
            }
            grad[off + n_in * n_out + o] += g;
        }
        if l == 0 {
            break;
        }
        let weights = &params[off..off + n_in * n_out];
        // input of layer l is tanh output of layer l-1
        delta = (0..n_in)
            .map(|i| {
                let back: f64 = (0..n_out).map(|o| weights[o * n_in + i] * delta[o]).sum();
                back * (1.0 - input[i] * input[i])
            })
            .collect();
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Actor and critic parameters as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    arch: Arch,
    theta: Vec<f64>,
}

/// Upstream gradients with respect to the network outputs, one row per state.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads {
    pub actor_logits: Vec<Vec<f64>>,
    pub critic_value: Vec<f64>,
}

impl PolicyParams {
    /// Glorot-uniform weights, zero biases, output layers scaled by 0.01.
    pub fn init<R: rand::Rng + ?Sized>(arch: Arch, rng: &mut R) -> Self {
        let mut theta = Vec::with_capacity(arch.actor_len() + arch.critic_len());
        for sizes in [arch.actor_sizes(), arch.critic_sizes()] {
            let n = sizes.len() - 1;
            for (l, w) in sizes.windows(2).enumerate() {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let gain = if l + 1 == n { 0.01 } else { 1.0 };
                theta.extend((0..w[0] * w[1]).map(|_| gain * rng.random_range(-limit..limit)));
                theta.extend(std::iter::repeat_n(0.0, w[1]));
            }
        }
        Self { arch, theta }
    }

    pub fn from_flat(arch: Arch, theta: Vec<f64>) -> Result<Self> {
        let expected = arch.actor_len() + arch.critic_len();
        if theta.len() != expected {
            return Err(Error::Argument(format!(
                "parameter vector has {} entries, architecture needs {expected}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("parameters must be finite".into()));
        }
        Ok(Self { arch, theta })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn flat(&self) -> &[f64] {
        &self.theta
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn actor(&self) -> &[f64] {
        &self.theta[..self.arch.actor_len()]
    }

    fn critic(&self) -> &[f64] {
        &self.theta[self.arch.actor_len()..]
    }

    /// Multiplies the output-layer weights and biases of each network.
    pub fn scale_heads(&mut self, actor: f64, critic: f64) {
        let a_len = self.arch.actor_len();
        let a_sizes = self.arch.actor_sizes();
        let c_sizes = self.arch.critic_sizes();
        let a_head = head_len(&a_sizes);
        let c_head = head_len(&c_sizes);
        self.theta[a_len - a_head..a_len].iter_mut().for_each(|v| *v *= actor);
        let end = self.theta.len();
        self.theta[end - c_head..].iter_mut().for_each(|v| *v *= critic);
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.arch.in_dim {
            return Err(Error::Argument(format!(
                "state has {} entries, network expects {}",
                s.len(),
                self.arch.in_dim
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("state contains non-finite entries".into()));
        }
        Ok(())
    }

    pub fn actor_logits(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_state(s)?;
        Ok(mlp_forward(self.actor(), &self.arch.actor_sizes(), s).output().to_vec())
    }

    /// Action probabilities at state `s`.
    pub fn actor_forward(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.actor_logits(s).map(|z| softmax(&z))
    }

    /// State value at `s`.
    pub fn critic_forward(&self, s: &[f64]) -> Result<f64> {
        self.check_state(s)?;
        Ok(mlp_forward(self.critic(), &self.arch.critic_sizes(), s).output()[0])
    }

    /// Action probabilities and state values for a batch of states, equal
    /// bitwise to `actor_forward` and `critic_forward` on each state.
    pub fn forward_batch(&self, states: &[&[f64]]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        for s in states {
            self.check_state(s)?;
        }
        let probs = mlp_outputs(self.actor(), &self.arch.actor_sizes(), states).iter().map(|z| softmax(z)).collect();
        let values = mlp_outputs(self.critic(), &self.arch.critic_sizes(), states).into_iter().map(|v| v[0]).collect();
        Ok((probs, values))
    }

    /// Gradient of a loss with respect to all parameters, given its gradient
    /// with respect to each state's actor logits and critic value. An empty
    /// `actor_logits` or `critic_value` skips that network.
    pub fn backprop(&self, states: &[Vec<f64>], upstream: &OutputGrads) -> Result<Vec<f64>> {
        let use_actor = !upstream.actor_logits.is_empty();
        let use_critic = !upstream.critic_value.is_empty();
        if (use_actor && upstream.actor_logits.len() != states.len())
            || (use_critic && upstream.critic_value.len() != states.len())
        {
            return Err(Error::Argument(format!(
                "{} states but {} actor and {} critic upstream rows",
                states.len(),
                upstream.actor_logits.len(),
                upstream.critic_value.len()
            )));
        }
        let mut grad = vec![0.0; self.theta.len()];
        let a_len = self.arch.actor_len();
        let (a_sizes, c_sizes) = (self.arch.actor_sizes(), self.arch.critic_sizes());
        for (i, s) in states.iter().enumerate() {
            self.check_state(s)?;
            if use_actor {
                let d = &upstream.actor_logits[i];
                if d.len() != self.arch.actions {
                    return Err(Error::Argument(format!(
                        "actor upstream row has {} entries, expected {}",
                        d.len(),
                        self.arch.actions
                    )));
                }
                let acts = mlp_forward(self.actor(), &a_sizes, s);
                mlp_backward(self.actor(), &a_sizes, &acts, d, &mut grad[..a_len]);
            }
            if use_critic {
                let acts = mlp_forward(self.critic(), &c_sizes, s);
                mlp_backward(self.critic(), &c_sizes, &acts, &[upstream.critic_value[i]], &mut grad[a_len..]);
            }
        }
        Ok(grad)
    }
}

fn head_len(sizes: &[usize]) -> usize {
    let n = sizes.len();
    sizes[n - 2] * sizes[n - 1] + sizes[n - 1]
}

/// Draws an action index from `probs` by inverse CDF.
pub fn sample_action<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the round-off gap above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Index of the largest probability; the lowest index wins ties.
pub fn argmax_action(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// First-order adaptive-moment optimizer.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { learning_rate, beta1, beta2, epsilon, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Takes one descent step along `grad`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        assert_eq!(theta.len(), grad.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRepr {
    /// `weight[out][in]`
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub benchmark: String,
    pub seed: u64,
    pub config_hash: String,
}

/// On-disk form of [`PolicyParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: Arch,
    pub actor: Vec<LayerRepr>,
    pub critic: Vec<LayerRepr>,
    pub meta: CheckpointMeta,
}

fn to_layers(params: &[f64], sizes: &[usize]) -> Vec<LayerRepr> {
    let mut off = 0;
    sizes
        .windows(2)
        .map(|w| {
            let (n_in, n_out) = (w[0], w[1]);
            let weight = (0..n_out).map(|o| params[off + o * n_in..off + (o + 1) * n_in].to_vec()).collect();
            let bias = params[off + n_in * n_out..off + n_in * n_out + n_out].to_vec();
            off += n_in * n_out + n_out;
            LayerRepr { weight, bias }
        })
        .collect()
}

fn from_layers(layers: &[LayerRepr], sizes: &[usize], out: &mut Vec<f64>, which: &str) -> Result<()> {
    if layers.len() != sizes.len() - 1 {
        return Err(Error::Config(format!(
            "{which} has {} layers, architecture needs {}",
            layers.len(),
            sizes.len() - 1
        )));
    }
    for (l, (layer, w)) in layers.iter().zip(sizes.windows(2)).enumerate() {
        let ok = layer.weight.len() == w[1] && layer.weight.iter().all(|r| r.len() == w[0]) && layer.bias.len() == w[1];
        if !ok {
            return Err(Error::Config(format!("{which} layer {l} does not match a {}x{} shape", w[1], w[0])));
        }
        for row in &layer.weight {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&layer.bias);
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(params: &PolicyParams, meta: CheckpointMeta) -> Self {
        let arch = params.arch.clone();
        Self {
            actor: to_layers(params.actor(), &arch.actor_sizes()),
            critic: to_layers(params.critic(), &arch.critic_sizes()),
            arch,
            meta,
        }
    }

    pub fn params(&self) -> Result<PolicyParams> {
        let mut theta = Vec::with_capacity(self.arch.actor_len() + self.arch.critic_len());
        from_layers(&self.actor, &self.arch.actor_sizes(), &mut theta, "actor")?;
        from_layers(&self.critic, &self.arch.critic_sizes(), &mut theta, "critic")?;
        PolicyParams::from_flat(self.arch.clone(), theta).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("malformed checkpoint {}: {e}", path.display())))
    }
}
