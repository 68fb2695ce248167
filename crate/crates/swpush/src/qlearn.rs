//! Pushing-point selection learning: a small value network trained with
//! off-policy Q-learning over the switching-push environment.
//!
//! The network maps the 3-dimensional object state to one value per
//! candidate pushing point. Everything is hand-rolled and deterministic
//! under a fixed seed: forward/backward passes, SGD with momentum and
//! decoupled weight decay, the replay buffer, and epsilon-greedy selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

pub const STATE_DIM: usize = 3;
pub const N_ACTIONS: usize = 6;
const HIDDEN: usize = 10;
const CHECKPOINT_VERSION: u32 = 1;

/// One experience record: state, chosen point index, reward, next state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: [f64; STATE_DIM],
    pub c_idx: usize,
    pub r: f64,
    pub s_next: [f64; STATE_DIM],
    pub done: bool,
}

/// A decision-level environment the trainer can drive.
pub trait DecisionEnv {
    /// Start a new episode and return its initial state.
    fn reset(&mut self) -> [f64; STATE_DIM];
    /// Execute one decision round with the chosen point index.
    fn step(&mut self, action: usize) -> Result<Transition>;
    /// Whether the episode that just terminated reached the goal.
    fn succeeded(&self) -> bool;
}

/// Huber loss of a residual.
pub fn huber(delta: f64) -> f64 {
    if delta.abs() < 1.0 {
        0.5 * delta * delta
    } else {
        delta.abs() - 0.5
    }
}

fn huber_grad(delta: f64) -> f64 {
    if delta.abs() < 1.0 {
        delta
    } else {
        delta.signum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layer {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    fn seeded(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = 1.0 / (n_in as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| rng.random_range(-limit..limit)).collect();
        let b = (0..n_out).map(|_| rng.random_range(-limit..limit)).collect();
        Self { n_in, n_out, w, b }
    }

    fn zeros_like(&self) -> Layer {
        Layer {
            n_in: self.n_in,
            n_out: self.n_out,
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
        }
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        debug_assert_eq!(out.len(), self.n_out);
        for (o, (row, bias)) in out.iter_mut().zip(self.w.chunks(self.n_in).zip(&self.b)) {
            let mut acc = *bias;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *o = acc;
        }
    }
}

/// The 3-10-10-6 value network: two rectified hidden layers, linear output
/// (the output layer carries no rectifier so negative values are
/// representable).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QNet {
    layers: [Layer; 3],
}

impl QNet {
    /// Deterministic initialization, uniform in +-1/sqrt(fan_in) per layer.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = [
            Layer::seeded(STATE_DIM, HIDDEN, &mut rng),
            Layer::seeded(HIDDEN, HIDDEN, &mut rng),
            Layer::seeded(HIDDEN, N_ACTIONS, &mut rng),
        ];
        let net = Self { layers };
        net.assert_param_counts();
        net
    }

    fn assert_param_counts(&self) {
        assert_eq!(self.layers[0].param_count(), 40);
        assert_eq!(self.layers[1].param_count(), 110);
        assert_eq!(self.layers[2].param_count(), 66);
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Value of every candidate point at state `s`.
    pub fn forward(&self, s: &[f64; STATE_DIM]) -> [f64; N_ACTIONS] {
        let mut h1 = [0.0; HIDDEN];
        let mut h2 = [0.0; HIDDEN];
        let mut out = [0.0; N_ACTIONS];
        self.layers[0].forward(s, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        self.layers[1].forward(&h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
        self.layers[2].forward(&h2, &mut out);
        out
    }

    /// Forward pass keeping pre-activations for backprop.
    fn forward_cached(&self, s: &[f64; STATE_DIM]) -> Cache {
        let mut z1 = [0.0; HIDDEN];
        let mut z2 = [0.0; HIDDEN];
        let mut q = [0.0; N_ACTIONS];
        self.layers[0].forward(s, &mut z1);
        let mut a1 = z1;
        a1.iter_mut().for_each(|v| *v = v.max(0.0));
        self.layers[1].forward(&a1, &mut z2);
        let mut a2 = z2;
        a2.iter_mut().for_each(|v| *v = v.max(0.0));
        self.layers[2].forward(&a2, &mut q);
        Cache { s: *s, z1, a1, z2, a2, q }
    }
}

struct Cache {
    s: [f64; STATE_DIM],
    z1: [f64; HIDDEN],
    a1: [f64; HIDDEN],
    z2: [f64; HIDDEN],
    a2: [f64; HIDDEN],
    q: [f64; N_ACTIONS],
}

/// Parameter gradients, same shapes as the network.
#[derive(Clone, Debug)]
pub struct Gradients {
    layers: [Layer; 3],
}

impl Gradients {
    fn zeros_like(net: &QNet) -> Self {
        Self {
            layers: [
                net.layers[0].zeros_like(),
                net.layers[1].zeros_like(),
                net.layers[2].zeros_like(),
            ],
        }
    }
}

/// Mean Huber loss over a batch of `(state, chosen index, target value)`
/// samples and its gradients. Only the chosen output contributes; the other
/// actions receive zero gradient.
pub fn backward(
    net: &QNet,
    batch: &[([f64; STATE_DIM], usize, f64)],
) -> (Gradients, f64) {
    assert!(!batch.is_empty(), "backward requires a non-empty batch");
    let mut grads = Gradients::zeros_like(net);
    let m = batch.len() as f64;
    let mut loss = 0.0;

    for (s, c_idx, target) in batch {
        let cache = net.forward_cached(s);
        let delta = cache.q[*c_idx] - target;
        loss += huber(delta) / m;
        let g_out = huber_grad(delta) / m;

        // Output layer.
        let l2 = &net.layers[2];
        let gl2 = &mut grads.layers[2];
        for j in 0..HIDDEN {
            gl2.w[*c_idx * HIDDEN + j] += g_out * cache.a2[j];
        }
        gl2.b[*c_idx] += g_out;

        // Back through the second rectifier.
        let mut g2 = [0.0; HIDDEN];
        for j in 0..HIDDEN {
            if cache.z2[j] > 0.0 {
                g2[j] = g_out * l2.w[*c_idx * HIDDEN + j];
            }
        }
        let l1 = &net.layers[1];
        let gl1 = &mut grads.layers[1];
        for i in 0..HIDDEN {
            if g2[i] != 0.0 {
                for j in 0..HIDDEN {
                    gl1.w[i * HIDDEN + j] += g2[i] * cache.a1[j];
                }
                gl1.b[i] += g2[i];
            }
        }

        // Back through the first rectifier.
        let mut g1 = [0.0; HIDDEN];
        for j in 0..HIDDEN {
            if cache.z1[j] > 0.0 {
                let mut acc = 0.0;
                for i in 0..HIDDEN {
                    acc += g2[i] * l1.w[i * HIDDEN + j];
                }
                g1[j] = acc;
            }
        }
        let gl0 = &mut grads.layers[0];
        for i in 0..HIDDEN {
            if g1[i] != 0.0 {
                for j in 0..STATE_DIM {
                    gl0.w[i * STATE_DIM + j] += g1[i] * cache.s[j];
                }
                gl0.b[i] += g1[i];
            }
        }
    }
    (grads, loss)
}

/// SGD with momentum and decoupled multiplicative weight decay (applied to
/// weights only, not biases).
#[derive(Clone, Debug)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Option<Gradients>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self { lr, momentum, weight_decay, velocity: None }
    }

    pub fn step(&mut self, net: &mut QNet, grads: &Gradients) {
        let vel = self.velocity.get_or_insert_with(|| Gradients::zeros_like(net));
        let shrink = 1.0 - self.lr * self.weight_decay;
        for l in 0..3 {
            let layer = &mut net.layers[l];
            let g = &grads.layers[l];
            let v = &mut vel.layers[l];
            for i in 0..layer.w.len() {
                v.w[i] = self.momentum * v.w[i] + g.w[i];
                layer.w[i] = (layer.w[i] - self.lr * v.w[i]) * shrink;
            }
            for i in 0..layer.b.len() {
                v.b[i] = self.momentum * v.b[i] + g.b[i];
                layer.b[i] -= self.lr * v.b[i];
            }
        }
    }
}

/// Bootstrap target: the immediate reward, plus the discounted best value of
/// the target network at the next state for non-terminal transitions.
pub fn q_target(net_target: &QNet, t: &Transition, gamma: f64) -> f64 {
    if t.done {
        t.r
    } else {
        let q = net_target.forward(&t.s_next);
        t.r + gamma * q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Epsilon-greedy point selection; greedy ties break toward the lowest
/// index.
pub fn select_point(
    net: &QNet,
    s: &[f64; STATE_DIM],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> usize {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..N_ACTIONS)
    } else {
        argmax(&net.forward(s))
    }
}

pub(crate) fn argmax(q: &[f64; N_ACTIONS]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// FIFO experience store with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            data: Vec::with_capacity(capacity.min(4096)),
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn contains(&self, t: &Transition) -> bool {
        self.data.contains(t)
    }

    /// Uniform sample with replacement.
    pub fn sample_into(&mut self, k: usize, out: &mut Vec<Transition>) {
        out.clear();
        for _ in 0..k {
            let idx = self.rng.random_range(0..self.data.len());
            out.push(self.data[idx]);
        }
    }
}

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_episodes: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_sync_every: usize,
    /// Gradient steps taken per environment round.
    pub updates_per_round: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            momentum: 0.9,
            weight_decay: 1e-5,
            gamma: 0.9,
            eps_start: 0.5,
            eps_end: 0.1,
            eps_decay_episodes: 150,
            batch_size: 64,
            buffer_capacity: 20_000,
            target_sync_every: 200,
            updates_per_round: 8,
            episodes: 300,
            seed: 0,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub ret: f64,
    pub success: bool,
    pub rounds: usize,
    pub epsilon: f64,
    pub mean_loss: f64,
}

pub struct TrainOutput {
    pub net: QNet,
    pub log: Vec<EpisodeRecord>,
    pub gradient_steps: u64,
}

/// Linear exploration schedule over episodes.
fn epsilon_at(cfg: &TrainConfig, episode: usize) -> f64 {
    if cfg.eps_decay_episodes == 0 {
        return cfg.eps_end;
    }
    let frac = (episode as f64 / cfg.eps_decay_episodes as f64).min(1.0);
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}

/// Deep Q-learning over a decision environment: epsilon-greedy rollouts into
/// a replay buffer, one SGD step on the Huber loss per environment round,
/// and a periodically synchronized target network.
pub fn train<E: DecisionEnv>(env: &mut E, cfg: &TrainConfig) -> Result<TrainOutput> {
    let mut net = QNet::seeded(cfg.seed);
    let mut target = net.clone();
    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.seed.wrapping_add(1));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));

    let mut log = Vec::with_capacity(cfg.episodes);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut samples = Vec::with_capacity(cfg.batch_size);
    let mut grad_steps = 0u64;

    for episode in 0..cfg.episodes {
        let mut s = env.reset();
        let eps = epsilon_at(cfg, episode);
        let mut ret = 0.0;
        let mut rounds = 0usize;
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;

        loop {
            let action = select_point(&net, &s, eps, &mut rng);
            let t = env.step(action)?;
            ret += t.r;
            rounds += 1;
            buffer.push(t);

            if buffer.len() >= cfg.batch_size {
                for _ in 0..cfg.updates_per_round {
                    buffer.sample_into(cfg.batch_size, &mut batch);
                    samples.clear();
                    samples.extend(
                        batch.iter().map(|b| (b.s, b.c_idx, q_target(&target, b, cfg.gamma))),
                    );
                    let (grads, loss) = backward(&net, &samples);
                    if !loss.is_finite() {
                        return Err(Error::NonFiniteLoss { step: grad_steps });
                    }
                    opt.step(&mut net, &grads);
                    grad_steps += 1;
                    loss_sum += loss;
                    loss_count += 1;
                    if grad_steps % cfg.target_sync_every as u64 == 0 {
                        target = net.clone();
                    }
                }
            }

            s = t.s_next;
            if t.done {
                break;
            }
        }

        log.push(EpisodeRecord {
            episode,
            ret,
            success: env.succeeded(),
            rounds,
            epsilon: eps,
            mean_loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 },
        });
    }

    Ok(TrainOutput { net, log, gradient_steps: grad_steps })
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    dims: Vec<usize>,
    train_steps: u64,
    layers: Vec<CheckpointLayer>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    /// Row-major `n_out x n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Write a versioned network checkpoint.
pub fn save_checkpoint(path: &Path, net: &QNet, train_steps: u64) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        dims: vec![STATE_DIM, HIDDEN, HIDDEN, N_ACTIONS],
        train_steps,
        layers: net
            .layers
            .iter()
            .map(|l| CheckpointLayer { w: l.w.clone(), b: l.b.clone() })
            .collect(),
    };
    let text = serde_json::to_string(&file)
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Load and validate a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(QNet, u64)> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("parse {}: {e}", path.display())))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", file.version)));
    }
    if file.dims != [STATE_DIM, HIDDEN, HIDDEN, N_ACTIONS] {
        return Err(Error::Checkpoint(format!(
            "dimension mismatch: expected [3, 10, 10, 6], got {:?}",
            file.dims
        )));
    }
    if file.layers.len() != 3 {
        return Err(Error::Checkpoint("expected 3 layers".into()));
    }
    let mut net = QNet::seeded(0);
    for (layer, data) in net.layers.iter_mut().zip(file.layers) {
        if data.w.len() != layer.w.len() || data.b.len() != layer.b.len() {
            return Err(Error::Checkpoint("layer size mismatch".into()));
        }
        layer.w = data.w;
        layer.b = data.b;
    }
    Ok((net, file.train_steps))
}


#[cfg(test)]
mod tests {
    use super::test_support::MockEnv;
    use super::*;
    use approx::assert_relative_eq;

    /// Independent re-implementation of the forward arithmetic used as an
    /// oracle for the network code.
    fn forward_oracle(net: &QNet, s: &[f64; STATE_DIM]) -> Vec<f64> {
        let mut x: Vec<f64> = s.to_vec();
        for (li, layer) in net.layers.iter().enumerate() {
            let mut y = vec![0.0; layer.n_out];
            for (o, yo) in y.iter_mut().enumerate() {
                let mut acc = layer.b[o];
                for (i, xi) in x.iter().enumerate() {
                    acc += layer.w[o * layer.n_in + i] * xi;
                }
                *yo = if li < 2 { acc.max(0.0) } else { acc };
            }
            x = y;
        }
        x
    }

    #[test]
    fn parameter_counts() {
        let net = QNet::seeded(1);
        assert_eq!(net.param_count(), 216);
    }

    #[test]
    fn forward_zero_net_is_zero() {
        let mut net = QNet::seeded(1);
        for l in net.layers.iter_mut() {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        assert_eq!(net.forward(&[0.3, -0.2, 1.0]), [0.0; N_ACTIONS]);
    }

    #[test]
    fn forward_single_unit_chain() {
        let mut net = QNet::seeded(1);
        for l in net.layers.iter_mut() {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        // Wire input 0 -> hidden 2 -> hidden 5 -> output 3 with unit weights.
        net.layers[0].w[2 * STATE_DIM] = 1.0;
        net.layers[1].w[5 * HIDDEN + 2] = 1.0;
        net.layers[2].w[3 * HIDDEN + 5] = 1.0;
        let q = net.forward(&[1.0, 0.0, 0.0]);
        for (i, v) in q.iter().enumerate() {
            assert_eq!(*v, if i == 3 { 1.0 } else { 0.0 });
        }
        // Rectifier blocks the negative path.
        let q = net.forward(&[-1.0, 0.0, 0.0]);
        assert_eq!(q[3], 0.0);
    }

    #[test]
    fn forward_matches_independent_oracle() {
        let net = QNet::seeded(42);
        let states = [[0.1, -0.2, 0.5], [-0.02, 0.24, -3.0], [0.0, 0.0, 0.0]];
        for s in &states {
            let got = net.forward(s);
            let want = forward_oracle(&net, s);
            for (g, w) in got.iter().zip(&want) {
                assert_relative_eq!(g, w, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn huber_exact_values() {
        assert_eq!(huber(0.0), 0.0);
        assert_eq!(huber(0.5), 0.125);
        assert_eq!(huber(-0.5), 0.125);
        assert_eq!(huber(1.0), 0.5);
        assert_eq!(huber(-1.0), 0.5);
        assert_eq!(huber(2.0), 1.5);
        assert_eq!(huber(-2.0), 1.5);
    }

    #[test]
    fn backward_zero_residual_gives_zero_gradients() {
        let net = QNet::seeded(3);
        let s = [0.1, 0.2, -0.4];
        let q = net.forward(&s);
        let (grads, loss) = backward(&net, &[(s, 2, q[2])]);
        assert_eq!(loss, 0.0);
        for l in &grads.layers {
            assert!(l.w.iter().all(|g| *g == 0.0));
            assert!(l.b.iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn backward_quadratic_branch_loss() {
        let net = QNet::seeded(3);
        let s = [0.1, 0.2, -0.4];
        let q = net.forward(&s);
        // Residual of exactly 0.5 lands in the quadratic branch.
        let (grads, loss) = backward(&net, &[(s, 1, q[1] - 0.5)]);
        assert_relative_eq!(loss, 0.125, epsilon = 1e-15);
        // Output bias gradient equals the residual for the chosen action...
        assert_relative_eq!(grads.layers[2].b[1], 0.5, epsilon = 1e-15);
        // ...and is zero for every other action.
        for (i, g) in grads.layers[2].b.iter().enumerate() {
            if i != 1 {
                assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = QNet::seeded(9);
        let batch = [
            ([0.12, -0.08, 0.9], 0, 0.7),
            ([-0.2, 0.15, -2.0], 3, -1.4),
            ([0.03, 0.22, 0.4], 5, 2.1),
        ];
        let (grads, _) = backward(&net, &batch);
        let eps = 1e-5;
        let loss_of = |n: &QNet| -> f64 {
            batch
                .iter()
                .map(|(s, c, y)| huber(n.forward(s)[*c] - y) / batch.len() as f64)
                .sum()
        };
        let mut checked = 0;
        for l in 0..3 {
            for i in (0..net.layers[l].w.len()).step_by(2) {
                let mut plus = net.clone();
                plus.layers[l].w[i] += eps;
                let mut minus = net.clone();
                minus.layers[l].w[i] -= eps;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                let analytic = grads.layers[l].w[i];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    rel <= 1e-4,
                    "layer {l} w[{i}]: numeric {numeric} vs analytic {analytic}"
                );
                checked += 1;
            }
            for i in 0..net.layers[l].b.len() {
                let mut plus = net.clone();
                plus.layers[l].b[i] += eps;
                let mut minus = net.clone();
                minus.layers[l].b[i] -= eps;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                let analytic = grads.layers[l].b[i];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(rel <= 1e-4, "layer {l} b[{i}]");
                checked += 1;
            }
        }
        assert!(checked >= 100);
    }

    #[test]
    fn q_target_spot_values() {
        let mut net = QNet::seeded(1);
        for l in net.layers.iter_mut() {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let t = Transition { s: [0.0; 3], c_idx: 0, r: 100.0, s_next: [0.0; 3], done: true };
        assert_eq!(q_target(&net, &t, 0.9), 100.0);

        // Output biases act as the values at any state of the zeroed net.
        net.layers[2].b = vec![0.5, 2.0, -1.0, 0.0, 0.0, 0.0];
        let t = Transition { s: [0.0; 3], c_idx: 0, r: 1.0, s_next: [0.0; 3], done: false };
        assert_relative_eq!(q_target(&net, &t, 0.9), 2.8, epsilon = 1e-15);

        net.layers[2].b = vec![0.0; 6];
        let t = Transition { s: [0.0; 3], c_idx: 0, r: -1.0, s_next: [0.0; 3], done: false };
        assert_eq!(q_target(&net, &t, 0.9), -1.0);
    }

    #[test]
    fn select_point_greedy_and_ties() {
        let mut net = QNet::seeded(1);
        for l in net.layers.iter_mut() {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        net.layers[2].b = vec![0.0, 3.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(select_point(&net, &[0.0; 3], 0.0, &mut rng), 1);
        // All equal: lowest index wins.
        net.layers[2].b = vec![2.0; 6];
        assert_eq!(select_point(&net, &[0.0; 3], 0.0, &mut rng), 0);
    }

    #[test]
    fn select_point_uniform_when_fully_random() {
        let net = QNet::seeded(5);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut counts = [0usize; N_ACTIONS];
        let draws = 100_000;
        for _ in 0..draws {
            counts[select_point(&net, &[0.1, 0.2, 0.3], 1.0, &mut rng)] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn argmax_invariant_to_constant_output_shift() {
        let mut net = QNet::seeded(31);
        let states = [[0.2, -0.1, 0.4], [-0.15, 0.0, 2.0]];
        let before: Vec<usize> = states.iter().map(|s| argmax(&net.forward(s))).collect();
        for b in net.layers[2].b.iter_mut() {
            *b += 7.5;
        }
        let after: Vec<usize> = states.iter().map(|s| argmax(&net.forward(s))).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn replay_buffer_fifo_eviction_and_coverage() {
        let mut buf = ReplayBuffer::new(50, 7);
        let mk = |i: usize| Transition {
            s: [i as f64, 0.0, 0.0],
            c_idx: i % N_ACTIONS,
            r: 0.0,
            s_next: [0.0; 3],
            done: false,
        };
        for i in 0..60 {
            buf.push(mk(i));
        }
        assert_eq!(buf.len(), 50);
        // The ten oldest are gone, everything newer is present.
        for i in 0..10 {
            assert!(!buf.contains(&mk(i)));
        }
        for i in 10..60 {
            assert!(buf.contains(&mk(i)));
        }
        // Uniform sampling hits every stored slot.
        let mut seen = [false; 60];
        let mut out = Vec::new();
        for _ in 0..2000 {
            buf.sample_into(50, &mut out);
            for t in &out {
                seen[t.s[0] as usize] = true;
            }
        }
        assert!(seen[10..].iter().all(|s| *s));
    }

    #[test]
    fn weight_decay_shrinks_weights_on_zero_gradient() {
        let mut net = QNet::seeded(11);
        let before = net.clone();
        let mut opt = SgdMomentum::new(1e-4, 0.9, 1e-5);
        let grads = Gradients::zeros_like(&net);
        opt.step(&mut net, &grads);
        let shrink = 1.0 - 1e-4 * 1e-5;
        for l in 0..3 {
            for (w, w0) in net.layers[l].w.iter().zip(&before.layers[l].w) {
                assert_relative_eq!(*w, w0 * shrink, epsilon = 1e-18);
            }
            // Biases do not decay.
            assert_eq!(net.layers[l].b, before.layers[l].b);
        }
    }

    #[test]
    fn target_values_unaffected_by_online_updates() {
        let mut net = QNet::seeded(13);
        let target = net.clone();
        let t = Transition {
            s: [0.1, 0.1, 0.0],
            c_idx: 2,
            r: 1.0,
            s_next: [0.05, 0.1, 0.0],
            done: false,
        };
        let y0 = q_target(&target, &t, 0.9);
        let mut opt = SgdMomentum::new(1e-2, 0.9, 0.0);
        for _ in 0..20 {
            let (grads, _) = backward(&net, &[(t.s, t.c_idx, 5.0)]);
            opt.step(&mut net, &grads);
        }
        assert_eq!(q_target(&target, &t, 0.9), y0);
        assert_ne!(q_target(&net, &t, 0.9), y0);
    }

    #[test]
    fn train_zero_episodes_returns_initial_net() {
        let mut env = MockEnv::new();
        let cfg = TrainConfig { episodes: 0, ..TrainConfig::default() };
        let out = train(&mut env, &cfg).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.gradient_steps, 0);
        let fresh = QNet::seeded(cfg.seed);
        assert_eq!(out.net.forward(&[0.1, 0.2, 0.3]), fresh.forward(&[0.1, 0.2, 0.3]));
    }

    #[test]
    fn train_is_bit_deterministic() {
        let cfg = TrainConfig { episodes: 5, batch_size: 8, seed: 99, ..TrainConfig::default() };
        let run = || {
            let mut env = MockEnv::new();
            train(&mut env, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log, b.log);
        let qa = a.net.forward(&[0.07, 0.0, 0.0]);
        let qb = b.net.forward(&[0.07, 0.0, 0.0]);
        for (x, y) in qa.iter().zip(&qb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn train_learns_mock_env() {
        let mut env = MockEnv::new();
        let cfg = TrainConfig {
            episodes: 400,
            batch_size: 16,
            lr: 1e-2,
            eps_decay_episodes: 200,
            target_sync_every: 50,
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train(&mut env, &cfg).unwrap();
        let tail = &out.log[out.log.len() - 50..];
        let rate = tail.iter().filter(|r| r.success).count() as f64 / 50.0;
        assert!(rate >= 0.8, "mock env success rate {rate}");
    }

    #[test]
    fn checkpoint_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        let net = QNet::seeded(21);
        save_checkpoint(&path, &net, 1234).unwrap();
        let (loaded, steps) = load_checkpoint(&path).unwrap();
        assert_eq!(steps, 1234);
        let s = [0.3, -0.4, 1.1];
        assert_eq!(net.forward(&s), loaded.forward(&s));

        // Corrupt dims must be rejected.
        let text = std::fs::read_to_string(&path).unwrap();
        let bad = text.replace("[3,10,10,6]", "[4,10,10,6]");
        assert_ne!(text, bad);
        std::fs::write(&path, bad).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
