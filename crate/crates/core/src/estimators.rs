//! Greedy and non-greedy policy-gradient estimators.
//!
//! Both estimators draw `q` parallel samples and use the mean reward of the
//! samples at the same time step as a local baseline, with the `1 / (q - 1)`
//! prefactor that keeps the estimate unbiased when the baseline includes the
//! sample itself.
//!
//! - Greedy: at every step, `q` actions are sampled from the current state and
//!   each is weighted by its immediate advantage `r_i - mean_j r_j`. One of the
//!   `q` successor states is then picked uniformly to continue.
//! - Non-greedy: `q` actions are sampled in the initial state only, giving `q`
//!   trajectories that are each continued with one sample per step. Step `t`
//!   of trajectory `i` is weighted by the discounted sum of future advantages,
//!   where the baseline at step `t'` is the mean reward over the `q`
//!   trajectories at that step.
//!
//! Non-greedy episodes store `(state, action)` transitions and recompute the
//! log-probability gradients in a second pass once the returns are known.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::datagen::DataItem;
use crate::error::{Error, Result};
use crate::kspace::{apply_mask, forward_transform, init_center_mask, ColumnMask, Image, KSpaceGrid};
use crate::metrics::{reward, ssim, SsimConfig, SsimWindow};
use crate::policynet::{
    decay_learning_rate, optimizer_step, sample_actions, GradientBuffer, LrSchedule,
    OptimizerState, PolicyNetwork,
};
use crate::recon::Reconstructor;
use crate::seeding::{child_rng, derive_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Greedy,
    NonGreedy,
}

impl Mode {
    pub fn default_schedule(self) -> LrSchedule {
        match self {
            Mode::Greedy => LrSchedule::Greedy,
            Mode::NonGreedy => LrSchedule::NonGreedy,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Greedy => "greedy",
            Mode::NonGreedy => "nongreedy",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Mode::Greedy),
            "nongreedy" => Ok(Mode::NonGreedy),
            other => Err(Error::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

/// Budgets and sampling parameters of an acquisition run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcquisitionConfig {
    pub width: usize,
    /// Number of center columns measured before the policy acts (`L`).
    pub initial_budget: usize,
    /// Total number of measured columns at the end (`M`).
    pub total_budget: usize,
    /// Parallel samples `q`.
    pub samples_per_step: usize,
    /// Discount factor; unused in greedy mode.
    pub discount: f64,
    pub mode: Mode,
}

impl AcquisitionConfig {
    /// `M == L` is accepted as a degenerate zero-horizon configuration.
    pub fn validated(self) -> Result<Self> {
        if self.initial_budget == 0 || self.initial_budget > self.total_budget {
            return Err(Error::invalid(format!(
                "need 0 < L <= M, got L = {} and M = {}",
                self.initial_budget, self.total_budget
            )));
        }
        if self.total_budget > self.width {
            return Err(Error::invalid(format!(
                "total budget {} exceeds width {}",
                self.total_budget, self.width
            )));
        }
        if self.samples_per_step < 2 {
            return Err(Error::invalid(
                "at least two samples per step are needed for the local baseline",
            ));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::invalid(format!(
                "discount {} must lie in [0, 1]",
                self.discount
            )));
        }
        Ok(self)
    }

    /// `T = M - L`.
    pub fn horizon(&self) -> usize {
        self.total_budget - self.initial_budget
    }
}

/// Where an acquisition stands: the measured columns, what the policy sees,
/// and the current quality score.
#[derive(Clone, Debug)]
pub struct AcqState {
    pub mask: ColumnMask,
    pub observation: Image,
    pub score: f64,
}

/// Something the policy can acquire columns from.
pub trait Environment: Sync {
    fn num_columns(&self) -> usize;

    fn observe(&self, mask: ColumnMask) -> Result<AcqState>;

    fn initial_state(&self, initial_budget: usize) -> Result<AcqState> {
        self.observe(init_center_mask(self.num_columns(), initial_budget)?)
    }

    /// Measures `action` on top of `state`.
    fn step(&self, state: &AcqState, action: usize) -> Result<AcqState> {
        self.observe(state.mask.add_column(action)?)
    }
}

/// Cartesian acquisition of one ground-truth image: the observation is the
/// reconstruction, the score its SSIM against the ground truth.
pub struct MriEnvironment<'a> {
    item_id: &'a str,
    truth: &'a Image,
    kspace: KSpaceGrid,
    recon: &'a Reconstructor,
    ssim: SsimConfig,
}

impl<'a> MriEnvironment<'a> {
    pub fn new(item: &'a DataItem, recon: &'a Reconstructor, window: SsimWindow) -> Result<Self> {
        let ssim = SsimConfig::new(item.dynamic_range)?.with_window(window);
        Ok(MriEnvironment {
            item_id: &item.id,
            truth: &item.image,
            kspace: forward_transform(&item.image),
            recon,
            ssim,
        })
    }

    pub fn truth(&self) -> &Image {
        self.truth
    }

    pub fn ssim_config(&self) -> &SsimConfig {
        &self.ssim
    }
}

impl Environment for MriEnvironment<'_> {
    fn num_columns(&self) -> usize {
        self.truth.width()
    }

    fn observe(&self, mask: ColumnMask) -> Result<AcqState> {
        let masked = apply_mask(&self.kspace, &mask)?;
        let observation = self.recon.reconstruct(self.item_id, &mask, &masked)?;
        let score = ssim(self.truth, &observation, &self.ssim)?;
        Ok(AcqState {
            mask,
            observation,
            score,
        })
    }
}

/// One sampled trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub id: usize,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Score after each step.
    pub scores: Vec<f64>,
}

impl TrajectoryRecord {
    fn new(id: usize) -> Self {
        TrajectoryRecord {
            id,
            actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            scores: Vec::new(),
        }
    }

    fn push(&mut self, action: usize, log_prob: f64, prev: f64, next: f64) {
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward(prev, next));
        self.scores.push(next);
    }

    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub initial_score: f64,
    pub final_masks: Vec<ColumnMask>,
    pub final_scores: Vec<f64>,
    pub trajectories: Vec<TrajectoryRecord>,
}

impl EpisodeResult {
    pub fn mean_final_score(&self) -> f64 {
        self.final_scores.iter().sum::<f64>() / self.final_scores.len() as f64
    }
}

/// `(r_i - mean_j r_j) / (q - 1)` for the `q` rewards of one step.
pub fn greedy_weights(rewards: &[f64]) -> Vec<f64> {
    let q = rewards.len();
    let baseline = rewards.iter().sum::<f64>() / q as f64;
    let scale = 1.0 / (q as f64 - 1.0);
    rewards.iter().map(|r| (r - baseline) * scale).collect()
}

/// `sum_{t' >= t} gamma^(t' - t) r_{t'}`.
pub fn discounted_return(rewards: &[f64], t: usize, gamma: f64) -> Result<f64> {
    if t >= rewards.len() {
        return Err(Error::invalid(format!(
            "step {t} is past the end of {} rewards",
            rewards.len()
        )));
    }
    Ok(rewards[t..]
        .iter()
        .rev()
        .fold(0.0, |acc, r| r + gamma * acc))
}

/// Per-step weights of the non-greedy estimator for a `q x T` reward table:
/// `w[i][t] = sum_{t' >= t} gamma^(t' - t) (r[i][t'] - mean_j r[j][t']) / (q - 1)`.
pub fn nongreedy_weights(rewards: &[Vec<f64>], gamma: f64) -> Result<Vec<Vec<f64>>> {
    let q = rewards.len();
    if q < 2 {
        return Err(Error::invalid("need at least two trajectories"));
    }
    let horizon = rewards[0].len();
    if rewards.iter().any(|r| r.len() != horizon) {
        return Err(Error::invalid("trajectories have different lengths"));
    }
    let baselines: Vec<f64> = (0..horizon)
        .map(|t| rewards.iter().map(|r| r[t]).sum::<f64>() / q as f64)
        .collect();
    let scale = 1.0 / (q as f64 - 1.0);
    Ok(rewards
        .iter()
        .map(|r| {
            let adv: Vec<f64> = r.iter().zip(&baselines).map(|(a, b)| a - b).collect();
            (0..horizon)
                .map(|t| scale * discounted_return(&adv, t, gamma).unwrap())
                .collect()
        })
        .collect())
}

/// Result of one greedy step.
#[derive(Clone, Debug)]
pub struct GreedyStep {
    pub next: AcqState,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub weights: Vec<f64>,
    /// Which of the `q` samples was continued.
    pub chosen: usize,
}

/// Samples `q` actions at `state`, accumulates the greedy gradient terms into
/// `buf` and continues from one uniformly chosen sample.
pub fn greedy_step<E: Environment + ?Sized>(
    env: &E,
    state: &AcqState,
    net: &PolicyNetwork,
    cfg: &AcquisitionConfig,
    rng: &mut Rng,
    buf: &mut GradientBuffer,
) -> Result<GreedyStep> {
    let trace = net.trace(&state.observation)?;
    let policy = trace.policy(&state.mask)?;
    let actions = sample_actions(&policy, cfg.samples_per_step, rng)?;
    let mut successors = actions
        .iter()
        .map(|&a| env.step(state, a))
        .collect::<Result<Vec<_>>>()?;
    let rewards: Vec<f64> = successors
        .iter()
        .map(|s| reward(state.score, s.score))
        .collect();
    let weights = greedy_weights(&rewards);
    let terms: Vec<(usize, f64)> = actions.iter().copied().zip(weights.iter().copied()).collect();
    net.backprop_weighted(trace, &state.mask, &terms, buf)?;
    let chosen = rng.gen_range(0..actions.len());
    Ok(GreedyStep {
        next: successors.swap_remove(chosen),
        log_probs: actions.iter().map(|&a| policy[a].ln()).collect(),
        actions,
        rewards,
        weights,
        chosen,
    })
}

/// Full greedy trajectory: `T` greedy steps from the center mask.
pub fn greedy_episode<E: Environment + ?Sized>(
    env: &E,
    net: &PolicyNetwork,
    cfg: &AcquisitionConfig,
    rng: &mut Rng,
    buf: &mut GradientBuffer,
) -> Result<EpisodeResult> {
    let mut state = env.initial_state(cfg.initial_budget)?;
    let initial_score = state.score;
    let mut record = TrajectoryRecord::new(0);
    for _ in 0..cfg.horizon() {
        let step = greedy_step(env, &state, net, cfg, rng, buf)?;
        let k = step.chosen;
        record.push(step.actions[k], step.log_probs[k], state.score, step.next.score);
        state = step.next;
    }
    Ok(EpisodeResult {
        initial_score,
        final_masks: vec![state.mask],
        final_scores: vec![state.score],
        trajectories: vec![record],
    })
}

/// A non-greedy episode whose rewards are known but whose gradient has not
/// been accumulated yet.
pub struct RecordedEpisode {
    pub initial: AcqState,
    /// `states[i][t]` is the state trajectory `i` acted from at step `t`; the
    /// step-0 state is `initial` for every trajectory and is not repeated.
    pub states: Vec<Vec<AcqState>>,
    pub result: EpisodeResult,
}

impl RecordedEpisode {
    pub fn rewards(&self) -> Vec<Vec<f64>> {
        self.result
            .trajectories
            .iter()
            .map(|t| t.rewards.clone())
            .collect()
    }

    /// Accumulates the non-greedy gradient for an arbitrary `q x T` reward
    /// table (normally [`RecordedEpisode::rewards`]).
    pub fn accumulate(
        &self,
        net: &PolicyNetwork,
        rewards: &[Vec<f64>],
        gamma: f64,
        buf: &mut GradientBuffer,
    ) -> Result<()> {
        let trajectories = &self.result.trajectories;
        if rewards.len() != trajectories.len() || rewards.iter().any(|r| r.is_empty()) {
            return Ok(());
        }
        let weights = nongreedy_weights(rewards, gamma)?;
        let first: Vec<(usize, f64)> = trajectories
            .iter()
            .zip(&weights)
            .map(|(tr, w)| (tr.actions[0], w[0]))
            .collect();
        let trace = net.trace(&self.initial.observation)?;
        net.backprop_weighted(trace, &self.initial.mask, &first, buf)?;
        for (i, tr) in trajectories.iter().enumerate() {
            for t in 1..tr.actions.len() {
                let state = &self.states[i][t - 1];
                net.accumulate_weighted_log_prob_gradient(
                    &state.observation,
                    &state.mask,
                    &[(tr.actions[t], weights[i][t])],
                    buf,
                )?;
            }
        }
        Ok(())
    }
}

/// Rolls out the `q` branched trajectories of a non-greedy episode without
/// touching any gradient.
pub fn record_nongreedy_episode<E: Environment + ?Sized>(
    env: &E,
    net: &PolicyNetwork,
    cfg: &AcquisitionConfig,
    rng: &mut Rng,
) -> Result<RecordedEpisode> {
    let initial = env.initial_state(cfg.initial_budget)?;
    let q = cfg.samples_per_step;
    let horizon = cfg.horizon();
    let mut trajectories: Vec<TrajectoryRecord> = (0..q).map(TrajectoryRecord::new).collect();
    let mut states: Vec<Vec<AcqState>> = vec![Vec::with_capacity(horizon); q];
    let mut finals = vec![initial.clone(); q];
    if horizon > 0 {
        let policy = net.forward(&initial.observation, &initial.mask)?;
        let actions = sample_actions(&policy, q, rng)?;
        for (i, &a) in actions.iter().enumerate() {
            let mut state = env.step(&initial, a)?;
            trajectories[i].push(a, policy[a].ln(), initial.score, state.score);
            for _ in 1..horizon {
                let policy = net.forward(&state.observation, &state.mask)?;
                let a = sample_actions(&policy, 1, rng)?[0];
                let next = env.step(&state, a)?;
                trajectories[i].push(a, policy[a].ln(), state.score, next.score);
                states[i].push(std::mem::replace(&mut state, next));
            }
            finals[i] = state;
        }
    }
    let result = EpisodeResult {
        initial_score: initial.score,
        final_scores: finals.iter().map(|s| s.score).collect(),
        final_masks: finals.into_iter().map(|s| s.mask).collect(),
        trajectories,
    };
    Ok(RecordedEpisode {
        initial,
        states,
        result,
    })
}

/// Samples a non-greedy episode and accumulates its gradient into `buf`.
pub fn nongreedy_episode<E: Environment + ?Sized>(
    env: &E,
    net: &PolicyNetwork,
    cfg: &AcquisitionConfig,
    rng: &mut Rng,
    buf: &mut GradientBuffer,
) -> Result<EpisodeResult> {
    if cfg.mode != Mode::NonGreedy {
        return Err(Error::invalid("nongreedy_episode needs a non-greedy configuration"));
    }
    let recorded = record_nongreedy_episode(env, net, cfg, rng)?;
    recorded.accumulate(net, &recorded.rewards(), cfg.discount, buf)?;
    Ok(recorded.result)
}

/// Runs the configured estimator on one environment.
pub fn run_episode<E: Environment + ?Sized>(
    env: &E,
    net: &PolicyNetwork,
    cfg: &AcquisitionConfig,
    rng: &mut Rng,
    buf: &mut GradientBuffer,
) -> Result<EpisodeResult> {
    match cfg.mode {
        Mode::Greedy => greedy_episode(env, net, cfg, rng, buf),
        Mode::NonGreedy => nongreedy_episode(env, net, cfg, rng, buf),
    }
}

/// Batch size, SSIM window and worker count used by training and analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSettings {
    pub batch_size: usize,
    pub window: SsimWindow,
    /// Worker threads. Each item owns its RNG stream and gradient buffer and
    /// buffers are summed in item order, so results do not depend on this.
    pub workers: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            batch_size: 16,
            window: SsimWindow::Gaussian11,
            workers: 1,
        }
    }
}

/// Applies `f` to every item, using up to `workers` threads, and returns the
/// results in item order.
pub(crate) fn map_items<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, t)| f(c * chunk + j, t))
                        .collect::<Vec<R>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

/// Mean over batch items of the estimator's gradient, plus the episodes.
pub fn batch_gradient(
    items: &[&DataItem],
    net: &PolicyNetwork,
    recon: &Reconstructor,
    cfg: &AcquisitionConfig,
    settings: &RunSettings,
    batch_seed: u64,
) -> Result<(GradientBuffer, Vec<EpisodeResult>)> {
    let outcomes = map_items(items, settings.workers, |i, item| {
        let env = MriEnvironment::new(item, recon, settings.window)?;
        let mut rng = child_rng(batch_seed, "item", i as u64);
        let mut buf = net.gradient_buffer();
        let episode = run_episode(&env, net, cfg, &mut rng, &mut buf)?;
        buf.sample_count = 1;
        Ok((buf, episode))
    });
    let mut total = net.gradient_buffer();
    let mut episodes = Vec::with_capacity(items.len());
    for outcome in outcomes {
        let (buf, episode) = outcome?;
        total.merge(&buf);
        episodes.push(episode);
    }
    if total.sample_count > 0 {
        total.scale(1.0 / total.sample_count as f64);
    }
    Ok((total, episodes))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub mean_final_score: f64,
    pub mean_return: f64,
    pub optimizer_steps: usize,
}

/// One training epoch: shuffle, then one optimizer step per batch using the
/// batch-mean gradient. The learning-rate schedule is applied first.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    items: &[&DataItem],
    net: &mut PolicyNetwork,
    opt: &mut OptimizerState,
    recon: &Reconstructor,
    cfg: &AcquisitionConfig,
    settings: &RunSettings,
    schedule: LrSchedule,
    epoch: usize,
    rng: &mut Rng,
) -> Result<EpochStats> {
    if items.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if settings.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    decay_learning_rate(opt, schedule, epoch);
    let mut order: Vec<&DataItem> = items.to_vec();
    order.shuffle(rng);
    let (mut score_sum, mut return_sum, mut steps) = (0.0, 0.0, 0);
    for (b, batch) in order.chunks(settings.batch_size).enumerate() {
        let batch_seed: u64 = rng.gen();
        let (mut grad, episodes) = batch_gradient(batch, net, recon, cfg, settings, batch_seed)?;
        for ep in &episodes {
            let mean = ep.mean_final_score();
            score_sum += mean;
            return_sum += mean - ep.initial_score;
        }
        if cfg.horizon() > 0 {
            optimizer_step(net, &mut grad, opt).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}, batch {b}: {msg}")),
                other => other,
            })?;
            steps += 1;
        }
    }
    let n = items.len() as f64;
    Ok(EpochStats {
        mean_final_score: score_sum / n,
        mean_return: return_sum / n,
        optimizer_steps: steps,
    })
}

/// Samples one trajectory to the full budget without gradients. When
/// `policies` is given, the policy at every visited state is appended to it.
pub fn rollout<E: Environment + ?Sized>(
    env: &E,
    net: &PolicyNetwork,
    cfg: &AcquisitionConfig,
    rng: &mut Rng,
    mut policies: Option<&mut Vec<Vec<f64>>>,
) -> Result<(TrajectoryRecord, AcqState)> {
    let mut state = env.initial_state(cfg.initial_budget)?;
    let mut record = TrajectoryRecord::new(0);
    for _ in 0..cfg.horizon() {
        let policy = net.forward(&state.observation, &state.mask)?;
        let a = sample_actions(&policy, 1, rng)?[0];
        let next = env.step(&state, a)?;
        record.push(a, policy[a].ln(), state.score, next.score);
        if let Some(p) = policies.as_deref_mut() {
            p.push(policy);
        }
        state = next;
    }
    Ok((record, state))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    /// Mean over images of the per-image mean final score.
    pub mean: f64,
    /// Standard deviation over images of the per-image mean final score.
    pub std_over_images: f64,
    /// Mean over images of the standard deviation across trajectories.
    pub mean_std_over_trajectories: f64,
    /// Mean final-minus-initial score.
    pub mean_return: f64,
    pub per_item: Vec<f64>,
}

impl EvalSummary {
    /// Builds the summary from the final scores of every trajectory and the
    /// initial score, per item.
    pub(crate) fn from_items(per: &[(Vec<f64>, f64)]) -> Self {
        let stats: Vec<(f64, f64)> = per.iter().map(|(f, _)| mean_std(f)).collect();
        let per_item: Vec<f64> = stats.iter().map(|s| s.0).collect();
        let (mean, std_over_images) = mean_std(&per_item);
        let n = per.len() as f64;
        EvalSummary {
            mean,
            std_over_images,
            mean_std_over_trajectories: stats.iter().map(|s| s.1).sum::<f64>() / n,
            mean_return: per_item.iter().zip(per).map(|(m, (_, init))| m - init).sum::<f64>() / n,
            per_item,
        }
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Final score averaged over `q_eval` sampled trajectories per image, then
/// over images.
pub fn evaluate(
    items: &[&DataItem],
    net: &PolicyNetwork,
    recon: &Reconstructor,
    cfg: &AcquisitionConfig,
    q_eval: usize,
    settings: &RunSettings,
    seed: u64,
) -> Result<EvalSummary> {
    if items.is_empty() || q_eval == 0 {
        return Err(Error::invalid("evaluation needs items and at least one trajectory"));
    }
    let per = map_items(items, settings.workers, |i, item| -> Result<(Vec<f64>, f64)> {
        let env = MriEnvironment::new(item, recon, settings.window)?;
        let mut rng = child_rng(derive_seed(seed, "eval", 0), "item", i as u64);
        let initial = env.initial_state(cfg.initial_budget)?.score;
        let finals = (0..q_eval)
            .map(|_| rollout(&env, net, cfg, &mut rng, None).map(|(_, s)| s.score))
            .collect::<Result<Vec<_>>>()?;
        Ok((finals, initial))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_items(&per))
}
