//! Reward-free training.
//!
//! Each episode is first collected with the current parameters (no gradients),
//! then replayed `updates_per_episode` times. Each replay walks the episode in
//! contiguous minibatches of `minibatch_steps` steps, one optimizer step each.
//! Only the first replay includes the actor term.
//! The replay feeds each step its recorded `g_prev`, so `g` is backpropagated
//! one step at a time and minibatches are independent.
//!
//! Losses, all averaged over the steps of a minibatch:
//! * `obs_pred`: squared error of the action-conditioned observation prediction.
//! * `actor`: score function on the intrinsic return, which is the negative
//!   discounted sum of future observation-prediction errors, minus 0.01·H(π).
//! * `body`: squared error of `η̂` and `b̂` against environment counterfactuals.
//! * `conative`: `KL(q ‖ π)` with a detached `q`.
//!
//! During warmup only `obs_pred` trains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    AgentError, AgentParams, AgentVars, Controller, ParamGroup, StepGraph, StepInputs,
};
use crate::config::ExperimentConfig;
use crate::environment::{Action, EnvState, GridWorld, N_ACTIONS, N_ZONES, OBS_DIM};
use crate::numcore::{
    adam_step, symmetric_eigenvalues, AdamState, NumError, NumResult, Tape, Tensor, Var,
};
use crate::perspective::{
    firewall_check, AlphaMode, FirewallViolation, PerspectiveState, RoutingSwitch,
};
use crate::rng::{RngStreams, Stream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    Full,
    NoConation,
    NoBodyToG,
}

impl Cohort {
    pub const ALL: [Cohort; 3] = [Cohort::Full, Cohort::NoConation, Cohort::NoBodyToG];

    pub fn name(self) -> &'static str {
        match self {
            Cohort::Full => "full",
            Cohort::NoConation => "no_conation",
            Cohort::NoBodyToG => "no_body_to_g",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Cohort::Full => "Full",
            Cohort::NoConation => "No conation",
            Cohort::NoBodyToG => "No body→g",
        }
    }

    pub fn parse(s: &str) -> Result<Cohort, String> {
        Cohort::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Cohort::ALL.iter().map(|c| c.name()).collect();
                format!("unknown cohort `{s}`; valid cohorts: {}", names.join(", "))
            })
    }

    pub fn routing(self) -> RoutingSwitch {
        RoutingSwitch {
            body_to_g: self != Cohort::NoBodyToG,
        }
    }

    pub fn conative_on(self) -> bool {
        self != Cohort::NoConation
    }
}

impl std::fmt::Display for Cohort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub warmup_episodes: usize,
    pub steps_per_episode: usize,
    pub lambda_body: f64,
    pub lambda_con: f64,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub updates_per_episode: usize,
    /// Steps per optimizer step within a replay; 0 means the whole episode.
    pub minibatch_steps: usize,
    /// Firewall and metric checks every this many episodes (0 disables).
    pub audit_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 180,
            warmup_episodes: 30,
            steps_per_episode: 200,
            lambda_body: 1.0,
            lambda_con: 0.5,
            gamma: 0.95,
            entropy_coef: 0.01,
            learning_rate: 3e-3,
            updates_per_episode: 4,
            minibatch_steps: 20,
            audit_interval: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.steps_per_episode == 0 || self.updates_per_episode == 0 {
            return Err(
                "train.steps_per_episode and train.updates_per_episode must be >= 1".into(),
            );
        }
        if self.minibatch_steps == 0 {
            return Err("train.minibatch_steps must be >= 1".into());
        }
        if self.warmup_episodes > self.episodes {
            return Err(format!(
                "train.warmup_episodes ({}) exceeds train.episodes ({})",
                self.warmup_episodes, self.episodes
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err("train.gamma must lie in [0, 1)".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err("train.learning_rate must be > 0".into());
        }
        if self.lambda_body < 0.0 || self.lambda_con < 0.0 || self.entropy_coef < 0.0 {
            return Err("loss weights must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite value in episode {episode}: {source}")]
    NonFinite { episode: usize, source: NumError },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("episode {episode}: {source}")]
    Firewall {
        episode: usize,
        source: FirewallViolation,
    },
    #[error("episode {episode}: metric lost positive-definiteness (min eigenvalue {min_eig:e})")]
    Metric { episode: usize, min_eig: f64 },
    #[error("{0}")]
    Contract(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub obs_pred: f64,
    pub actor: f64,
    pub body: f64,
    pub conative: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn accumulate(&mut self, other: &LossBreakdown, weight: f64) {
        self.obs_pred += weight * other.obs_pred;
        self.actor += weight * other.actor;
        self.body += weight * other.body;
        self.conative += weight * other.conative;
        self.total += weight * other.total;
    }
}

/// Which loss terms are switched on for an update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActiveLosses {
    pub obs_pred: bool,
    pub actor: bool,
    pub body: bool,
    pub conative: bool,
}

impl ActiveLosses {
    pub fn for_episode(cohort: Cohort, episode: usize, cfg: &TrainConfig) -> Self {
        let after_warmup = episode >= cfg.warmup_episodes;
        ActiveLosses {
            obs_pred: true,
            actor: after_warmup,
            body: after_warmup,
            conative: after_warmup && cohort.conative_on(),
        }
    }

    pub fn only(name: &str) -> Self {
        ActiveLosses {
            obs_pred: name == "obs_pred",
            actor: name == "actor",
            body: name == "body",
            conative: name == "conative",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub warmup: bool,
    pub losses: LossBreakdown,
    /// Fraction of post-move positions in each zone.
    pub occupancy: [f64; N_ZONES],
    pub mean_q: [f64; N_ACTIONS],
    pub mean_pi: [f64; N_ACTIONS],
    pub mean_alpha: f64,
    /// Mean absolute per-coordinate change of `g` and `z` between steps.
    pub mean_abs_dg: f64,
    pub mean_abs_dz: f64,
    pub final_u: f64,
}

/// One collected step: what the network saw, what it did, and the targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub inputs: StepInputs,
    pub action: Action,
    pub next_x: [f64; OBS_DIM],
    pub eta_target: [f64; N_ACTIONS],
    pub b_target: [f64; N_ACTIONS],
    /// Squared error of this step's observation prediction (known after the step).
    pub pred_error: f64,
}

/// Everything a (cohort, seed) run needs to continue bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub cohort: Cohort,
    pub seed: u64,
    pub master_seed: u64,
    /// Index of the next episode to train.
    pub episode: usize,
    pub params: AgentParams,
    pub adam: AdamState<f64>,
    pub perspective: PerspectiveState,
    pub env_rng: StreamRng,
    pub policy_rng: StreamRng,
    pub logs: Vec<EpisodeLog>,
}

impl RunState {
    /// Fresh run. Initialization depends only on the seeds, so all cohorts share
    /// the same starting weights for a given seed.
    pub fn new(cfg: &ExperimentConfig, cohort: Cohort, seed: u64) -> Result<Self, TrainError> {
        let streams = RngStreams::new(cfg.run.master_seed, seed);
        let mut init = streams.stream(Stream::Init);
        let params = AgentParams::init(&cfg.agent, &mut init)?;
        let adam = AdamState::new(params.named_tensors().into_iter().map(|(_, _, t)| t));
        Ok(RunState {
            cohort,
            seed,
            master_seed: cfg.run.master_seed,
            episode: 0,
            adam,
            perspective: PerspectiveState::new(cfg.agent.d_g),
            env_rng: streams.stream(Stream::EnvNoise),
            policy_rng: streams.stream(Stream::PolicySampling),
            params,
            logs: Vec::new(),
        })
    }
}

/// Squared-error mean of two equal-length slices.
fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub struct Collected {
    pub records: Vec<StepRecord>,
    pub log: EpisodeLog,
}

/// Runs one episode with frozen parameters, advancing the run's RNGs and
/// perspective state.
pub fn collect_episode(
    state: &mut RunState,
    world: &GridWorld,
    cfg: &ExperimentConfig,
) -> Result<Collected, TrainError> {
    let episode = state.episode;
    let steps = cfg.train.steps_per_episode;

    state.perspective.decay(cfg.agent.perspective.episode_decay);
    let mut env: EnvState = world.reset(state.env_rng.clone());
    let mut obs = world.observe(&mut env);
    let perspective = std::mem::replace(&mut state.perspective, PerspectiveState::new(0));
    let mut ctrl = Controller::new(
        &state.params,
        &cfg.agent,
        state.cohort.routing(),
        perspective,
    );

    let mut records: Vec<StepRecord> = Vec::with_capacity(steps);
    let mut prev_z: Option<Vec<f64>> = None;
    let mut zone_counts = [0usize; N_ZONES];
    let (mut sum_q, mut sum_pi) = ([0.0; N_ACTIONS], [0.0; N_ACTIONS]);
    let (mut sum_alpha, mut sum_dg, mut sum_dz) = (0.0, 0.0, 0.0);

    for _ in 0..steps {
        let g_before = ctrl.perspective.g.clone();
        let (eta_target, b_target) = world.body_targets(&env);
        let d = ctrl
            .decide(&obs, &mut state.policy_rng)
            .map_err(|e| nonfinite(episode, e))?;
        sum_dg += mean_abs_diff(&d.g, &g_before);
        if let Some(pz) = &prev_z {
            sum_dz += mean_abs_diff(&d.z, pz);
        }
        sum_alpha += d.alpha;
        for a in 0..N_ACTIONS {
            sum_q[a] += d.q[a];
            sum_pi[a] += d.pi[a];
        }
        let next = world.step(&mut env, d.action).observation;
        zone_counts[world.zone_of(env.row, env.col).index()] += 1;
        records.push(StepRecord {
            inputs: d.inputs,
            action: d.action,
            next_x: next.x,
            eta_target,
            b_target,
            pred_error: mse(&d.x_hat, &next.x),
        });
        prev_z = Some(d.z);
        obs = next;
    }
    state.perspective = ctrl.perspective;
    state.env_rng = env.rng.clone();

    let n = steps as f64;
    let log = EpisodeLog {
        episode,
        warmup: episode < cfg.train.warmup_episodes,
        losses: LossBreakdown::default(),
        occupancy: zone_counts.map(|c| c as f64 / n),
        mean_q: sum_q.map(|v| v / n),
        mean_pi: sum_pi.map(|v| v / n),
        mean_alpha: sum_alpha / n,
        mean_abs_dg: sum_dg / n,
        mean_abs_dz: if steps > 1 { sum_dz / (n - 1.0) } else { 0.0 },
        final_u: env.u,
    };
    Ok(Collected { records, log })
}

fn nonfinite(episode: usize, e: NumError) -> TrainError {
    match e {
        NumError::NonFinite { .. } => TrainError::NonFinite { episode, source: e },
        other => TrainError::Num(other),
    }
}

/// `G_t = −Σ_k γ^k e_{t+k}`, centred by the episode mean.
fn episode_advantages(records: &[StepRecord], cfg: &ExperimentConfig) -> Vec<f64> {
    let errors: Vec<f64> = records.iter().map(|r| r.pred_error).collect();
    intrinsic_advantages(&errors, cfg.train.gamma)
}

pub fn intrinsic_advantages(pred_errors: &[f64], gamma: f64) -> Vec<f64> {
    let mut returns = vec![0.0; pred_errors.len()];
    let mut acc = 0.0;
    for t in (0..pred_errors.len()).rev() {
        acc = -pred_errors[t] + gamma * acc;
        returns[t] = acc;
    }
    let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    returns.iter().map(|r| r - mean).collect()
}

/// Per-step actor terms `−log π(a)·Â − c·H(π)`, averaged. `steps` holds
/// `(log π, π, action)` handles.
pub fn actor_loss(
    tape: &mut Tape<f64>,
    steps: &[(Var, Var, Action)],
    advantages: &[f64],
    entropy_coef: f64,
) -> NumResult<Var> {
    if steps.is_empty() || steps.len() != advantages.len() {
        return Err(NumError::Contract(format!(
            "actor loss needs a non-empty trajectory with one advantage per step ({} steps, {} advantages)",
            steps.len(),
            advantages.len()
        )));
    }
    let mut terms = Vec::with_capacity(steps.len());
    for (&(log_pi, pi, action), &adv) in steps.iter().zip(advantages) {
        let lp = tape.slice(log_pi, action.index(), 1)?;
        let score = tape.scale(lp, -adv);
        let plogp = tape.mul(pi, log_pi)?;
        let neg_h = tape.sum(plogp);
        let bonus = tape.scale(neg_h, entropy_coef);
        let score = tape.sum(score);
        terms.push(tape.add(score, bonus)?);
    }
    mean_of(tape, &terms)
}

/// `(Σ_a (η̂−η*)² + Σ_a (b̂−b*)²) / |A|` for one step.
pub fn body_loss(
    tape: &mut Tape<f64>,
    eta_hat: Var,
    b_hat: Var,
    eta_target: &[f64],
    b_target: &[f64],
) -> NumResult<Var> {
    let n = eta_target.len() as f64;
    let et = tape.constant(Tensor::from_slice(eta_target));
    let bt = tape.constant(Tensor::from_slice(b_target));
    let de = tape.sub(eta_hat, et)?;
    let db = tape.sub(b_hat, bt)?;
    let se = tape.square(de);
    let sb = tape.square(db);
    let se = tape.sum(se);
    let sb = tape.sum(sb);
    let s = tape.add(se, sb)?;
    Ok(tape.scale(s, 1.0 / n))
}

fn mean_of(tape: &mut Tape<f64>, terms: &[Var]) -> NumResult<Var> {
    if terms.is_empty() {
        return Err(NumError::Contract("mean of no terms".into()));
    }
    let stacked = tape.concat(terms);
    Ok(tape.mean(stacked))
}

/// Loss handles for one replay of an episode.
pub struct EpisodeLosses {
    pub obs_pred: Var,
    pub actor: Var,
    pub body: Var,
    pub conative: Option<Var>,
}

/// Rebuilds the episode's graph on `tape` and returns each loss term.
pub fn episode_losses(
    tape: &mut Tape<f64>,
    vars: &AgentVars,
    records: &[StepRecord],
    adv: &[f64],
    cfg: &ExperimentConfig,
    cohort: Cohort,
) -> NumResult<EpisodeLosses> {
    let routing = cohort.routing();
    let mut obs_terms = Vec::with_capacity(records.len());
    let mut body_terms = Vec::with_capacity(records.len());
    let mut con_terms = Vec::with_capacity(records.len());
    let mut actor_steps = Vec::with_capacity(records.len());
    for r in records {
        let graph: StepGraph =
            vars.step(tape, &r.inputs, &cfg.agent, routing, AlphaMode::Learned)?;
        let x_hat = vars.predict_observation(tape, graph.z, graph.s_pred, r.action, graph.g)?;
        let target = tape.constant(Tensor::from_slice(&r.next_x));
        let d = tape.sub(x_hat, target)?;
        let sq = tape.square(d);
        obs_terms.push(tape.mean(sq));
        actor_steps.push((graph.log_pi, graph.pi, r.action));
        body_terms.push(body_loss(
            tape,
            graph.eta_hat,
            graph.b_hat,
            &r.eta_target,
            &r.b_target,
        )?);
        if cohort.conative_on() {
            let q = vars.conative_target(tape, &graph, &cfg.agent.conative)?;
            con_terms.push(vars.conative_loss(tape, &graph, q)?);
        }
    }
    Ok(EpisodeLosses {
        obs_pred: mean_of(tape, &obs_terms)?,
        actor: actor_loss(tape, &actor_steps, adv, cfg.train.entropy_coef)?,
        body: mean_of(tape, &body_terms)?,
        conative: if con_terms.is_empty() {
            None
        } else {
            Some(mean_of(tape, &con_terms)?)
        },
    })
}

/// Weighted sum of the active terms, plus the plain-value breakdown.
pub fn combine_losses(
    tape: &mut Tape<f64>,
    losses: &EpisodeLosses,
    active: ActiveLosses,
    cfg: &TrainConfig,
) -> NumResult<(Var, LossBreakdown)> {
    let val = |tape: &Tape<f64>, v: Var| tape.value(v).item();
    let mut breakdown = LossBreakdown {
        obs_pred: val(tape, losses.obs_pred),
        actor: val(tape, losses.actor),
        body: val(tape, losses.body),
        conative: losses.conative.map(|c| val(tape, c)).unwrap_or(0.0),
        total: 0.0,
    };
    let mut parts = Vec::new();
    if active.obs_pred {
        parts.push(losses.obs_pred);
    }
    if active.actor {
        parts.push(losses.actor);
    }
    if active.body {
        parts.push(tape.scale(losses.body, cfg.lambda_body));
    }
    if active.conative {
        if let Some(c) = losses.conative {
            parts.push(tape.scale(c, cfg.lambda_con));
        }
    }
    let stacked = tape.concat(&parts);
    let total = tape.sum(stacked);
    breakdown.total = val(tape, total);
    Ok((total, breakdown))
}

/// Gradients of every parameter tensor, in [`AgentParams::named_tensors`] order.
pub fn collect_grads(
    tape: &Tape<f64>,
    vars: &AgentVars,
    params: &AgentParams,
) -> Vec<(String, ParamGroup, Option<Tensor<f64>>)> {
    params
        .named_tensors()
        .into_iter()
        .zip(vars.vars())
        .map(|((name, group, _), v)| (name, group, tape.grad(v).cloned()))
        .collect()
}

/// Which parameter groups each loss reaches, from one backward pass per loss
/// on a live batch. Each policy-side loss is also put through [`firewall_check`].
pub fn gradient_presence(
    params: &AgentParams,
    records: &[StepRecord],
    cfg: &ExperimentConfig,
    cohort: Cohort,
) -> Result<BTreeMap<(String, ParamGroup), bool>, TrainError> {
    let mut out = BTreeMap::new();
    for loss in ["obs_pred", "actor", "body", "conative"] {
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape, true);
        let adv = episode_advantages(records, cfg);
        let losses = episode_losses(&mut tape, &vars, records, &adv, cfg, cohort)?;
        let target = match loss {
            "obs_pred" => Some(losses.obs_pred),
            "actor" => Some(losses.actor),
            "body" => Some(losses.body),
            _ => losses.conative,
        };
        let grads = match target {
            Some(t) => {
                tape.backward(t)?;
                collect_grads(&tape, &vars, params)
            }
            None => params
                .named_tensors()
                .into_iter()
                .map(|(n, g, _)| (n, g, None))
                .collect(),
        };
        firewall_check(loss, &grads)
            .map_err(|source| TrainError::Firewall { episode: 0, source })?;
        for group in ParamGroup::ALL {
            let reached = grads.iter().any(|(_, g, grad)| {
                *g == group
                    && grad
                        .as_ref()
                        .is_some_and(|t| t.data().iter().any(|v| *v != 0.0))
            });
            out.insert((loss.to_string(), group), reached);
        }
    }
    Ok(out)
}

fn audit(
    state: &RunState,
    records: &[StepRecord],
    cfg: &ExperimentConfig,
) -> Result<(), TrainError> {
    let episode = state.episode;
    let sample = &records[..records.len().min(20)];
    gradient_presence(&state.params, sample, cfg, state.cohort).map_err(|e| match e {
        TrainError::Firewall { source, .. } => TrainError::Firewall { episode, source },
        other => other,
    })?;
    for r in sample.iter().step_by(5) {
        let geo = crate::agent::metric_geometry(
            &state.params,
            &r.inputs.g_prev,
            cfg.agent.metric_epsilon,
        )?;
        let min_eig = symmetric_eigenvalues(&geo.m)?[0];
        // Jacobi roundoff is far below this slack
        if min_eig < cfg.agent.metric_epsilon * (1.0 - 1e-6) {
            return Err(TrainError::Metric { episode, min_eig });
        }
    }
    Ok(())
}

/// Collects one episode, applies the configured updates, and appends the log.
pub fn train_episode(
    state: &mut RunState,
    world: &GridWorld,
    cfg: &ExperimentConfig,
) -> Result<EpisodeLog, TrainError> {
    let episode = state.episode;
    let Collected { records, mut log } = collect_episode(state, world, cfg)?;
    let active = ActiveLosses::for_episode(state.cohort, episode, &cfg.train);
    let interval = cfg.train.audit_interval;
    if interval > 0 && episode % interval == 0 {
        audit(state, &records, cfg)?;
    }
    let adv = episode_advantages(&records, cfg);
    let chunk = match cfg.train.minibatch_steps {
        0 => records.len().max(1),
        n => n,
    };
    let batches: Vec<(&[StepRecord], &[f64])> =
        records.chunks(chunk).zip(adv.chunks(chunk)).collect();
    let mut first = LossBreakdown::default();
    for k in 0..cfg.train.updates_per_episode {
        for (recs, adv) in &batches {
            let mut tape = Tape::new();
            let vars = state.params.bind(&mut tape, true);
            let losses = episode_losses(&mut tape, &vars, recs, adv, cfg, state.cohort)
                .map_err(|e| nonfinite(episode, e))?;
            // The score-function term is only unbiased for the policy that
            // collected the episode, so it takes part in the first pass only.
            let active = ActiveLosses {
                actor: active.actor && k == 0,
                ..active
            };
            let (total, breakdown) = combine_losses(&mut tape, &losses, active, &cfg.train)?;
            if k == 0 {
                first.accumulate(&breakdown, recs.len() as f64 / records.len() as f64);
            }
            tape.backward(total).map_err(|e| nonfinite(episode, e))?;
            let grads: Vec<Option<Tensor<f64>>> =
                vars.vars().iter().map(|v| tape.grad(*v).cloned()).collect();
            let grad_refs: Vec<Option<&Tensor<f64>>> = grads.iter().map(|g| g.as_ref()).collect();
            let mut params = state.params.tensors_mut();
            adam_step(
                &mut params,
                &grad_refs,
                &mut state.adam,
                cfg.train.learning_rate,
            )?;
        }
    }
    log.losses = first;
    if !state.params.is_finite() {
        return Err(TrainError::NonFinite {
            episode,
            source: NumError::NonFinite {
                op: "adam_step",
                node: 0,
            },
        });
    }
    state.episode += 1;
    state.logs.push(log.clone());
    Ok(log)
}

/// Trains until `state.episode == cfg.train.episodes`, calling `on_episode`
/// after each (e.g. to checkpoint).
pub fn train_run(
    state: &mut RunState,
    world: &GridWorld,
    cfg: &ExperimentConfig,
    mut on_episode: impl FnMut(&RunState) -> Result<(), TrainError>,
) -> Result<(), TrainError> {
    while state.episode < cfg.train.episodes {
        train_episode(state, world, cfg)?;
        on_episode(state)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohort_switches() {
        assert_eq!(
            Cohort::ALL.map(|c| (c.routing().body_to_g, c.conative_on())),
            [(true, true), (true, false), (false, true)]
        );
        assert!(Cohort::parse("fulll").unwrap_err().contains("no_body_to_g"));
    }

    #[test]
    fn advantages_by_hand() {
        // errors 1, 2 at γ = 0.5: G = [−1 − 0.5·2, −2] = [−2, −2] → Â = [0, 0]
        assert_eq!(intrinsic_advantages(&[1.0, 2.0], 0.5), vec![0.0, 0.0]);
        // errors 0, 4 at γ = 0.5: G = [−2, −4], mean −3 → Â = [1, −1]
        assert_eq!(intrinsic_advantages(&[0.0, 4.0], 0.5), vec![1.0, -1.0]);
    }

    #[test]
    fn uniform_policy_entropy_only() {
        let mut tape = Tape::new();
        let logits = tape.param(Tensor::vector(vec![0.0; 5]));
        let pi = tape.softmax(logits, 1.0).unwrap();
        let lp = tape.log_softmax(logits);
        let steps = vec![(lp, pi, Action::Up), (lp, pi, Action::Stay)];
        let loss = actor_loss(&mut tape, &steps, &[0.0, 0.0], 0.01).unwrap();
        assert!((tape.value(loss).item() + 0.01 * 5f64.ln()).abs() < 1e-15);
        assert!(actor_loss(&mut tape, &[], &[], 0.01).is_err());
    }

    #[test]
    fn actor_two_step_hand_value() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::vector(vec![1.0, 0.0, 0.0, 0.0, 0.0]));
        let pi = tape.softmax(logits, 1.0).unwrap();
        let lp = tape.log_softmax(logits);
        let steps = vec![(lp, pi, Action::Up), (lp, pi, Action::Down)];
        let loss = actor_loss(&mut tape, &steps, &[1.0, -1.0], 0.01).unwrap();
        let z = 1f64.exp() + 4.0;
        let (lp_up, lp_down) = (1.0 - z.ln(), -z.ln());
        let probs = [1f64.exp() / z, 1.0 / z, 1.0 / z, 1.0 / z, 1.0 / z];
        let h: f64 = -probs.iter().map(|p| p * p.ln()).sum::<f64>();
        let expected = 0.5 * ((-lp_up * 1.0 - 0.01 * h) + (-lp_down * -1.0 - 0.01 * h));
        assert!((tape.value(loss).item() - expected).abs() < 1e-14);
    }

    #[test]
    fn body_loss_zero_decoder_stay_term() {
        let mut tape = Tape::new();
        let eta = tape.constant(Tensor::vector(vec![0.0; 5]));
        let b = tape.constant(Tensor::vector(vec![0.5; 5]));
        let mut et = [0.0; 5];
        et[4] = -0.002;
        let l = body_loss(&mut tape, eta, b, &et, &[0.5; 5]).unwrap();
        assert!((tape.value(l).item() - 0.002f64.powi(2) / 5.0).abs() < 1e-18);
    }
}
