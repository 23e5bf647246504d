//! PPO training of the assignment policy as a single-step bandit.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::GuidanceConstants;
use crate::engagement::{build_engagement_tensor, run_episode, EngagementOptions, EngagementState, TensorNorms};
use crate::error::{Error, Result};
use crate::eval::{clamp_to_targets, evaluate, with_pool, Decider, EvalOptions, Policy, Summary, EXPECTED_RATES};
use crate::net::{read_manifest, write_manifest, ActionDistribution, EngagementTensor, Manifest, ManifestTensor, NetArch, Network, PolicyValueNet};
use crate::rng::{self, episode_seed, splitmix64, Purpose};
use crate::scenario::{sample_episode, ScenarioConfig};
use crate::solvers::{instance_from_state, Assignment, CdfKind};

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub episodes_per_rollout: usize,
    pub clip_epsilon: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    /// Discount factor; inert because every episode has one step.
    pub gamma: f64,
    pub entropy_bonus: f64,
    pub max_iterations: usize,
    pub reward_alpha: f64,
    pub advantage_normalization: bool,
    /// Iterations between checkpoints (0 disables periodic checkpoints).
    pub checkpoint_every: usize,
    /// Episodes used to rank seeds in best-of-seeds training.
    pub heldout_episodes: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::nominal().with_fixed_size(),
            seed: 0,
            episodes_per_rollout: 2000,
            clip_epsilon: 0.1,
            policy_lr: 1e-4,
            value_lr: 1e-3,
            epochs_per_update: 10,
            minibatch_size: 256,
            gamma: 1.0,
            entropy_bonus: 0.0,
            max_iterations: 300,
            reward_alpha: 10.0,
            advantage_normalization: true,
            checkpoint_every: 10,
            heldout_episodes: 1000,
        }
    }
}

impl TrainConfig {
    /// Small fixed-size problem for quick learning checks.
    pub fn smoke() -> Self {
        let mut scenario = ScenarioConfig::nominal();
        scenario.case_label = "Smoke 8x5".into();
        scenario.m_max = 8;
        scenario.n_max = 5;
        Self {
            scenario: scenario.with_fixed_size(),
            episodes_per_rollout: 500,
            max_iterations: 50,
            minibatch_size: 100,
            checkpoint_every: 0,
            heldout_episodes: 500,
            ..Self::default()
        }
    }

    pub fn arch(&self) -> Result<NetArch> {
        NetArch::new(self.scenario.m_max, self.scenario.n_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if self.episodes_per_rollout == 0 || self.epochs_per_update == 0 || self.minibatch_size == 0 || self.max_iterations == 0 {
            return bad("episode, epoch, minibatch and iteration counts must be at least 1");
        }
        if !(self.policy_lr > 0.0 && self.value_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Adaptive-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// Descend along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// One entry per single-step episode.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub observations: Vec<EngagementTensor>,
    pub actions: Vec<Assignment>,
    pub rewards: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub destroyed_values: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Root seed of the episodes in iteration `iteration`.
pub fn iteration_seed(train_seed: u64, iteration: usize) -> u64 {
    splitmix64(train_seed ^ splitmix64(iteration as u64 + 1))
}

fn stack(obs: &[&EngagementTensor]) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.iter().map(|o| o.as_slice().len()).sum());
    for o in obs {
        x.extend_from_slice(o.as_slice());
    }
    x
}

const FORWARD_CHUNK: usize = 256;

/// Policy logits and values of many observations, in chunks.
fn batched_outputs(net: &PolicyValueNet, obs: &[&EngagementTensor]) -> (Vec<f64>, Vec<f64>) {
    let mut logits = Vec::new();
    let mut values = Vec::new();
    for chunk in obs.chunks(FORWARD_CHUNK) {
        let x = stack(chunk);
        logits.extend_from_slice(net.policy.forward(&x, chunk.len()).output());
        values.extend_from_slice(net.value.forward(&x, chunk.len()).output());
    }
    (logits, values)
}

/// Sample episodes, act with the stochastic policy and run each engagement.
/// Episode `k` of iteration `it` is seeded by `episode_seed(iteration_seed, k)`;
/// action sampling uses a separate stream of the same seed.
pub fn collect_rollout(net: &PolicyValueNet, config: &TrainConfig, iteration: usize) -> Result<RolloutBatch> {
    let arch = net.arch();
    let k = GuidanceConstants::default();
    let norms = TensorNorms::default();
    let root = iteration_seed(config.seed, iteration);
    let episodes: Vec<(u64, crate::scenario::EpisodeInit, EngagementTensor)> = (0..config.episodes_per_rollout as u64)
        .into_par_iter()
        .map(|i| {
            let seed = episode_seed(root, i);
            let init = sample_episode(&config.scenario, seed)?;
            let e = build_engagement_tensor(&EngagementState::new(&init), arch.m_max, arch.n_max, &norms, &k)?;
            Ok((seed, init, e))
        })
        .collect::<Result<_>>()?;
    let obs: Vec<&EngagementTensor> = episodes.iter().map(|e| &e.2).collect();
    let (logits, values) = batched_outputs(net, &obs);
    let act = arch.act_dim();
    let engagement = EngagementOptions { reward_alpha: config.reward_alpha, ..Default::default() };
    let outcomes: Vec<(Assignment, f64, f64, f64)> = episodes
        .par_iter()
        .enumerate()
        .map(|(b, (seed, init, _))| {
            let dist = ActionDistribution::from_logits(arch.m_max, arch.n_max, logits[b * act..(b + 1) * act].to_vec());
            let mut rng = rng::stream(*seed, Purpose::Training, 0);
            let action = dist.sample(init.m(), &mut rng);
            let (log_prob, _) = dist.log_prob_and_entropy(&action);
            let state = EngagementState::new(init);
            let executed = if init.n() < arch.n_max {
                clamp_to_targets(&action, &instance_from_state(&state, EXPECTED_RATES, CdfKind::Printed, &k))
            } else {
                action.clone()
            };
            let result = run_episode(init, &executed, &engagement)?;
            Ok((action, log_prob, result.reward, result.destroyed_value))
        })
        .collect::<Result<_>>()?;
    let mut batch = RolloutBatch::default();
    for ((action, log_prob, reward, destroyed), ((_, _, e), value)) in outcomes.into_iter().zip(episodes.into_iter().zip(values)) {
        batch.observations.push(e);
        batch.actions.push(action);
        batch.rewards.push(reward);
        batch.old_log_probs.push(log_prob);
        batch.values.push(value);
        batch.destroyed_values.push(destroyed);
    }
    Ok(batch)
}

/// `A_k = r_k − V(o_k)`, optionally standardized over the batch.
pub fn advantages(batch: &RolloutBatch, normalize: bool) -> Vec<f64> {
    let mut adv: Vec<f64> = batch.rewards.iter().zip(&batch.values).map(|(r, v)| r - v).collect();
    if normalize && !adv.is_empty() {
        let (mean, std) = crate::eval::mean_std(&adv);
        for a in &mut adv {
            *a = if std > 1e-12 { (*a - mean) / (std + 1e-8) } else { 0.0 };
        }
    }
    adv
}

/// Clipped surrogate term `min(p A, clip(p, 1−ε, 1+ε) A)` and whether its
/// gradient flows through the unclipped branch.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub surrogate: f64,
    pub value_loss: f64,
    /// Mean `(p − 1) − ln p` over the batch after the update.
    pub kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

/// Optimizer state of both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub policy: Adam,
    pub value: Adam,
}

impl Optimizers {
    pub fn new(net: &PolicyValueNet, config: &TrainConfig) -> Self {
        Self {
            policy: Adam::new(net.policy.num_params(), config.policy_lr),
            value: Adam::new(net.value.num_params(), config.value_lr),
        }
    }
}

fn check_finite(values: &[f64], minibatch: usize, seed: u64) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { minibatch, seed })
    }
}

/// Policy loss gradient and diagnostics for one minibatch; returns
/// (surrogate sum, entropy sum, clipped count).
fn policy_minibatch(
    policy: &Network,
    batch: &RolloutBatch,
    adv: &[f64],
    idx: &[usize],
    config: &TrainConfig,
    grads: &mut [f64],
) -> (f64, f64, usize) {
    let arch = policy.arch();
    let obs: Vec<&EngagementTensor> = idx.iter().map(|&i| &batch.observations[i]).collect();
    let cache = policy.forward(&stack(&obs), idx.len());
    let act = arch.act_dim();
    let scale = 1.0 / idx.len() as f64;
    let mut d_out = vec![0.0; idx.len() * act];
    let (mut surrogate, mut entropy, mut clipped) = (0.0, 0.0, 0);
    for (b, &i) in idx.iter().enumerate() {
        let dist = ActionDistribution::from_logits(arch.m_max, arch.n_max, cache.output()[b * act..(b + 1) * act].to_vec());
        let (log_prob, ent) = dist.log_prob_and_entropy(&batch.actions[i]);
        let ratio = (log_prob - batch.old_log_probs[i]).exp();
        let (s, active) = clipped_surrogate(ratio, adv[i], config.clip_epsilon);
        surrogate += s;
        entropy += ent;
        if (ratio - 1.0).abs() > config.clip_epsilon {
            clipped += 1;
        }
        // loss = −mean(surrogate) − β mean(entropy)
        let w_logp = if active { -scale * ratio * adv[i] } else { 0.0 };
        let g = dist.logit_gradient(&batch.actions[i], w_logp, -scale * config.entropy_bonus);
        d_out[b * act..(b + 1) * act].copy_from_slice(&g);
    }
    policy.backward(&cache, &d_out, grads);
    (surrogate, entropy, clipped)
}

/// Half mean squared error of the value head on a minibatch, with gradient.
fn value_minibatch(value: &Network, batch: &RolloutBatch, idx: &[usize], grads: &mut [f64]) -> f64 {
    let obs: Vec<&EngagementTensor> = idx.iter().map(|&i| &batch.observations[i]).collect();
    let cache = value.forward(&stack(&obs), idx.len());
    let scale = 1.0 / idx.len() as f64;
    let mut loss = 0.0;
    let d_out: Vec<f64> = idx
        .iter()
        .zip(cache.output())
        .map(|(&i, v)| {
            let err = v - batch.rewards[i];
            loss += 0.5 * err * err * scale;
            err * scale
        })
        .collect();
    value.backward(&cache, &d_out, grads);
    loss
}

/// Mean `(p − 1) − ln p` between the rollout policy and `policy`.
pub fn kl_estimate(policy: &Network, batch: &RolloutBatch) -> f64 {
    let arch = policy.arch();
    let act = arch.act_dim();
    let mut total = 0.0;
    let idx: Vec<usize> = (0..batch.len()).collect();
    for chunk in idx.chunks(FORWARD_CHUNK) {
        let obs: Vec<&EngagementTensor> = chunk.iter().map(|&i| &batch.observations[i]).collect();
        let cache = policy.forward(&stack(&obs), chunk.len());
        for (b, &i) in chunk.iter().enumerate() {
            let dist = ActionDistribution::from_logits(arch.m_max, arch.n_max, cache.output()[b * act..(b + 1) * act].to_vec());
            let log_ratio = dist.log_prob_and_entropy(&batch.actions[i]).0 - batch.old_log_probs[i];
            total += log_ratio.exp() - 1.0 - log_ratio;
        }
    }
    total / batch.len().max(1) as f64
}

/// Clipped-surrogate policy ascent and value regression over shuffled
/// minibatches for `epochs_per_update` epochs.
pub fn ppo_update(
    net: &mut PolicyValueNet,
    opt: &mut Optimizers,
    batch: &RolloutBatch,
    config: &TrainConfig,
    shuffle_seed: u64,
) -> Result<UpdateMetrics> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("cannot update on an empty rollout".into()));
    }
    let adv = advantages(batch, config.advantage_normalization);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut rng = rng::stream(shuffle_seed, Purpose::Training, 1);
    let mut policy_grads = vec![0.0; net.policy.num_params()];
    let mut value_grads = vec![0.0; net.value.num_params()];
    let (mut surrogate, mut entropy, mut clipped, mut value_loss, mut samples, mut minibatches) = (0.0, 0.0, 0usize, 0.0, 0usize, 0usize);
    for _ in 0..config.epochs_per_update {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.minibatch_size) {
            policy_grads.iter_mut().for_each(|g| *g = 0.0);
            value_grads.iter_mut().for_each(|g| *g = 0.0);
            let (s, e, c) = policy_minibatch(&net.policy, batch, &adv, idx, config, &mut policy_grads);
            let vl = value_minibatch(&net.value, batch, idx, &mut value_grads);
            check_finite(&[s, e, vl], minibatches, shuffle_seed)?;
            check_finite(&policy_grads, minibatches, shuffle_seed)?;
            check_finite(&value_grads, minibatches, shuffle_seed)?;
            opt.policy.step(net.policy.params_mut(), &policy_grads);
            opt.value.step(net.value.params_mut(), &value_grads);
            surrogate += s;
            entropy += e;
            clipped += c;
            value_loss += vl;
            samples += idx.len();
            minibatches += 1;
        }
    }
    Ok(UpdateMetrics {
        surrogate: surrogate / samples as f64,
        value_loss: value_loss / minibatches as f64,
        kl: kl_estimate(&net.policy, batch),
        clip_fraction: clipped as f64 / samples as f64,
        entropy: entropy / samples as f64,
    })
}

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub episodes: usize,
    pub mean_reward: f64,
    pub min_reward: f64,
    pub max_reward: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

pub const CURVE_HEADER: &str = "iteration,episodes,mean_reward,min_reward,max_reward,value_loss,kl,clip_fraction";

impl CurveRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.8},{:.6}",
            self.iteration, self.episodes, self.mean_reward, self.min_reward, self.max_reward, self.value_loss, self.kl, self.clip_fraction
        )
    }
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for r in rows {
        writeln!(out, "{}", r.to_csv()).unwrap();
    }
    out
}

pub fn parse_curve(text: &str) -> Result<Vec<CurveRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != CURVE_HEADER {
                return Err(Error::Parse { line: 1, msg: format!("expected header `{CURVE_HEADER}`") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Parse { line: line_no, msg: format!("expected 8 fields, found {}", f.len()) });
        }
        let num = |k: usize| f[k].trim().parse::<f64>().map_err(|_| Error::Parse { line: line_no, msg: format!("bad number `{}`", f[k]) });
        let int = |k: usize| f[k].trim().parse::<usize>().map_err(|_| Error::Parse { line: line_no, msg: format!("bad integer `{}`", f[k]) });
        rows.push(CurveRow {
            iteration: int(0)?,
            episodes: int(1)?,
            mean_reward: num(2)?,
            min_reward: num(3)?,
            max_reward: num(4)?,
            value_loss: num(5)?,
            kl: num(6)?,
            clip_fraction: num(7)?,
        });
    }
    Ok(rows)
}

/// Complete training state at an iteration boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: PolicyValueNet,
    pub opt: Optimizers,
    /// Iterations completed.
    pub iteration: usize,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors = self.net.named_tensors();
        for (name, adam) in [("adam.policy", &self.opt.policy), ("adam.value", &self.opt.value)] {
            tensors.push(ManifestTensor { name: format!("{name}.m"), shape: vec![adam.m.len()], data: adam.m.clone() });
            tensors.push(ManifestTensor { name: format!("{name}.v"), shape: vec![adam.v.len()], data: adam.v.clone() });
        }
        let meta = serde_json::json!({
            "kind": "checkpoint",
            "iteration": self.iteration,
            "adam_policy_t": self.opt.policy.t,
            "adam_value_t": self.opt.value.t,
            "config": self.config,
        });
        write_manifest(path, &Manifest { arch: self.net.arch(), meta, tensors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest = read_manifest(path)?;
        let err = |msg: String| Error::Manifest { path: path.to_path_buf(), msg };
        let net = PolicyValueNet::from_tensors(manifest.arch, &manifest.tensors).map_err(err)?;
        let meta = &manifest.meta;
        let config: TrainConfig = serde_json::from_value(meta["config"].clone()).map_err(|e| err(format!("bad training config: {e}")))?;
        let iteration = meta["iteration"].as_u64().ok_or_else(|| err("checkpoint has no iteration".into()))? as usize;
        let mut opt = Optimizers::new(&net, &config);
        for (name, adam, t) in [("adam.policy", &mut opt.policy, "adam_policy_t"), ("adam.value", &mut opt.value, "adam_value_t")] {
            for (suffix, dst) in [("m", &mut adam.m), ("v", &mut adam.v)] {
                let full = format!("{name}.{suffix}");
                let t = manifest.tensors.iter().find(|t| t.name == full).ok_or_else(|| err(format!("missing optimizer tensor `{full}`")))?;
                if t.data.len() != dst.len() {
                    return Err(err(format!("optimizer tensor `{full}` has {} entries, expected {}", t.data.len(), dst.len())));
                }
                dst.copy_from_slice(&t.data);
            }
            adam.t = meta[t].as_u64().ok_or_else(|| err(format!("checkpoint has no `{t}`")))?;
        }
        Ok(Self { net, opt, iteration, config })
    }
}

/// What a training run produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: PolicyValueNet,
    pub curve: Vec<CurveRow>,
    pub weights_path: PathBuf,
}

pub const CURVE_FILE: &str = "learning_curve.csv";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Fresh training state for `config`.
pub fn initial_checkpoint(config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, Purpose::Training, 2);
    let net = PolicyValueNet::new(config.arch()?, &mut rng);
    let opt = Optimizers::new(&net, config);
    Ok(Checkpoint { net, opt, iteration: 0, config: config.clone() })
}

/// Run one collect/update iteration on `ck`, advancing its iteration count.
pub fn train_iteration(ck: &mut Checkpoint) -> Result<CurveRow> {
    let it = ck.iteration;
    let wrap = |e: Error| Error::Training { iteration: it, source: Box::new(e) };
    let batch = collect_rollout(&ck.net, &ck.config, it).map_err(wrap)?;
    let shuffle_seed = iteration_seed(ck.config.seed, it);
    let metrics = ppo_update(&mut ck.net, &mut ck.opt, &batch, &ck.config, shuffle_seed).map_err(wrap)?;
    ck.iteration += 1;
    let rewards = &batch.rewards;
    Ok(CurveRow {
        iteration: ck.iteration,
        episodes: ck.iteration * ck.config.episodes_per_rollout,
        mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
        min_reward: rewards.iter().copied().fold(f64::INFINITY, f64::min),
        max_reward: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        value_loss: metrics.value_loss,
        kl: metrics.kl,
        clip_fraction: metrics.clip_fraction,
    })
}

/// Train until `config.max_iterations`, writing the learning curve,
/// periodic checkpoints and final weights into `out_dir`. With `resume`,
/// training continues from `out_dir/checkpoint.bin` and appends to the curve.
pub fn train(config: &TrainConfig, out_dir: &Path, resume: bool, jobs: usize, mut progress: impl FnMut(&CurveRow) + Send) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let ck_path = out_dir.join(CHECKPOINT_FILE);
    let curve_path = out_dir.join(CURVE_FILE);
    let (mut ck, mut curve) = if resume {
        let mut ck = Checkpoint::load(&ck_path)?;
        ck.config.max_iterations = config.max_iterations;
        let mut curve = parse_curve(&std::fs::read_to_string(&curve_path)?)?;
        curve.truncate(ck.iteration);
        (ck, curve)
    } else {
        (initial_checkpoint(config)?, Vec::new())
    };
    std::fs::write(&curve_path, curve_csv(&curve))?;
    let io = |it: usize| move |e: std::io::Error| Error::Training { iteration: it, source: Box::new(Error::Io(e)) };
    with_pool(jobs, || -> Result<()> {
        while ck.iteration < ck.config.max_iterations {
            let row = train_iteration(&mut ck)?;
            let mut f = std::fs::OpenOptions::new().append(true).open(&curve_path).map_err(io(row.iteration))?;
            writeln!(f, "{}", row.to_csv()).map_err(io(row.iteration))?;
            progress(&row);
            curve.push(row);
            let every = ck.config.checkpoint_every;
            if (every > 0 && ck.iteration % every == 0) || ck.iteration == ck.config.max_iterations {
                ck.save(&ck_path).map_err(|e| Error::Training { iteration: ck.iteration, source: Box::new(e) })?;
            }
        }
        Ok(())
    })??;
    let weights_path = out_dir.join(WEIGHTS_FILE);
    let meta = serde_json::json!({
        "kind": "policy",
        "iterations": ck.iteration,
        "seed": ck.config.seed,
        "case": ck.config.scenario.case_label,
    });
    ck.net.save(&weights_path, meta)?;
    Ok(TrainOutcome { net: ck.net, curve, weights_path })
}

/// Median destroyed value of the greedy policy on held-out episodes of the
/// training distribution with randomized sizes.
pub fn heldout_score(net: Arc<PolicyValueNet>, config: &TrainConfig, jobs: usize) -> Result<Summary> {
    let mut scenario = config.scenario.clone();
    let defaults = ScenarioConfig::nominal();
    if scenario.m_max == defaults.m_max && scenario.n_max == defaults.n_max {
        scenario.m_range = defaults.m_range;
        scenario.n_range = defaults.n_range;
    }
    let decider = Decider::new(Policy::Rl, Some(net))?;
    let opts = EvalOptions::new(config.heldout_episodes, splitmix64(config.seed ^ 0x5eed_4e1d), jobs);
    Ok(Summary::from_records(&evaluate(&scenario, &decider, &opts)?))
}

/// Train one run per seed under `out_dir/seed-<s>` and copy the run with the
/// best held-out median destroyed value to `out_dir/weights.bin`.
pub fn train_best_of(config: &TrainConfig, seeds: &[u64], out_dir: &Path, jobs: usize, mut progress: impl FnMut(u64, &CurveRow) + Send) -> Result<(u64, Summary)> {
    let mut best: Option<(u64, Summary, PathBuf)> = None;
    for &seed in seeds {
        let run_cfg = TrainConfig { seed, ..config.clone() };
        let dir = out_dir.join(format!("seed-{seed}"));
        let outcome = train(&run_cfg, &dir, false, jobs, |row| progress(seed, row))?;
        let score = heldout_score(Arc::new(outcome.net), &run_cfg, jobs)?;
        if best.as_ref().is_none_or(|(_, s, _)| score.median > s.median) {
            best = Some((seed, score, outcome.weights_path));
        }
    }
    let (seed, score, path) = best.ok_or_else(|| Error::InvalidConfig("no training seeds given".into()))?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::copy(&path, out_dir.join(WEIGHTS_FILE))?;
    Ok((seed, score))
}
