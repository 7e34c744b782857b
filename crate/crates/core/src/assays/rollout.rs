//! Frozen-parameter rollouts and the analyses built on them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{metric_geometry, AgentParams, Controller};
use crate::config::{sha256_hex, ExperimentConfig};
use crate::environment::{Action, GridWorld, OBS_DIM, SILHOUETTE_DIM};
use crate::numcore::{logistic, pca_fit_project, symmetric_eigenvalues, NumResult, Tape, Tensor};
use crate::perspective::PerspectiveState;
use crate::rng::{RngStreams, Stream};
use crate::trainer::Cohort;

use super::stats::pearson;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Control,
    Shock,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Control => "control",
            Condition::Shock => "shock",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub t: usize,
    /// `g` after this step's update.
    pub g: Vec<f64>,
    /// Latent viability as seen at this step (after any injection).
    pub u: f64,
    pub b_tilde: f64,
    pub row: usize,
    pub col: usize,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockRollout {
    pub condition: Condition,
    pub steps: Vec<RolloutStep>,
    pub total_injected: f64,
}

/// Runs the frozen agent from the centre with `g` reset. Both conditions draw
/// from the same seed-paired streams, so they agree exactly until the first
/// injection.
pub fn shock_rollout(
    params: &AgentParams,
    cfg: &ExperimentConfig,
    cohort: Cohort,
    seed: u64,
    condition: Condition,
) -> NumResult<ShockRollout> {
    let a = &cfg.assay;
    let world = GridWorld::new(cfg.env.clone()).expect("validated config");
    let streams = RngStreams::new(cfg.run.master_seed, seed);
    let mut env = world.reset(streams.stream(Stream::AssayEnv));
    let mut policy = streams.stream(Stream::AssayPolicy);
    let mut ctrl = Controller::new(
        params,
        &cfg.agent,
        cohort.routing(),
        PerspectiveState::new(cfg.agent.d_g),
    );
    ctrl.perspective.reset_for_rollout();

    let mut obs = world.observe(&mut env);
    let mut steps = Vec::with_capacity(a.rollout_steps);
    for t in 0..a.rollout_steps {
        if condition == Condition::Shock && (a.shock_start..=a.shock_end).contains(&t) {
            world.inject_shock(&mut env, a.shock_delta);
            // the readout is noise-free, so it can be refreshed without touching the stream
            obs.b_tilde = logistic(env.u);
        }
        let d = ctrl.decide(&obs, &mut policy)?;
        steps.push(RolloutStep {
            t,
            g: d.g,
            u: env.u,
            b_tilde: obs.b_tilde,
            row: env.row,
            col: env.col,
            action: d.action,
        });
        obs = world.step(&mut env, d.action).observation;
    }
    Ok(ShockRollout {
        condition,
        steps,
        total_injected: env.total_injected(),
    })
}

/// Mean of `u_shock − u_control` over the recovery window.
pub fn shock_magnitude(
    control: &ShockRollout,
    shock: &ShockRollout,
    recovery: std::ops::Range<usize>,
) -> f64 {
    let n = recovery.len() as f64;
    recovery
        .map(|t| shock.steps[t].u - control.steps[t].u)
        .sum::<f64>()
        / n
}

/// Number of leading steps on which both rollouts are bit-identical.
pub fn identical_prefix(a: &ShockRollout, b: &ShockRollout) -> usize {
    a.steps
        .iter()
        .zip(&b.steps)
        .take_while(|(x, y)| {
            x.g.iter()
                .map(|v| v.to_bits())
                .eq(y.g.iter().map(|v| v.to_bits()))
                && x.u.to_bits() == y.u.to_bits()
                && x.b_tilde.to_bits() == y.b_tilde.to_bits()
                && (x.row, x.col, x.action) == (y.row, y.col, y.action)
        })
        .count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub value: f64,
    /// Set when the pooled `g` states have no variance at all.
    pub zero_variance: bool,
    /// Per-step distance between the conditions in PC coordinates, over every
    /// step of the rollout (the projection is the recovery-phase fit).
    pub trajectory: Vec<f64>,
}

/// Two-component PCA on the union of both conditions' recovery `g` states;
/// returns the distance between the condition means in PC coordinates.
pub fn pca_displacement(control: &[Vec<f64>], shock: &[Vec<f64>]) -> NumResult<Displacement> {
    pca_displacement_with_trajectory(control, shock, control, shock)
}

/// As [`pca_displacement`], also projecting full trajectories for the
/// time-resolved curve.
pub fn pca_displacement_with_trajectory(
    control: &[Vec<f64>],
    shock: &[Vec<f64>],
    full_control: &[Vec<f64>],
    full_shock: &[Vec<f64>],
) -> NumResult<Displacement> {
    let d = control[0].len();
    let rows: Vec<f64> = control.iter().chain(shock).flatten().copied().collect();
    let n = control.len() + shock.len();
    let data = Tensor::matrix(n, d, rows)?;
    let k = 2.min(d);
    let pca = pca_fit_project(&data, k)?;
    if pca.zero_variance {
        return Ok(Displacement {
            value: 0.0,
            zero_variance: true,
            trajectory: vec![0.0; full_control.len().min(full_shock.len())],
        });
    }
    let mean_of = |block: std::ops::Range<usize>| -> Vec<f64> {
        let mut m = vec![0.0; k];
        for i in block.clone() {
            for (j, slot) in m.iter_mut().enumerate() {
                *slot += pca.projected.get2(i, j);
            }
        }
        m.iter().map(|v| v / block.len() as f64).collect()
    };
    let mc = mean_of(0..control.len());
    let ms = mean_of(control.len()..n);
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let trajectory = full_control
        .iter()
        .zip(full_shock)
        .map(|(c, s)| dist(&pca.project(c), &pca.project(s)))
        .collect();
    Ok(Displacement {
        value: dist(&mc, &ms),
        zero_variance: false,
        trajectory,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeInput {
    pub x: [f64; OBS_DIM],
    pub b_tilde: f64,
    pub silhouette: [f64; SILHOUETTE_DIM],
    pub prev_action: Option<Action>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub inputs: Vec<ProbeInput>,
}

impl ProbeSet {
    /// Environment-only random walk on the probe stream of seed 0, keeping every
    /// other step. It involves no agent, so it is the same for every cohort.
    pub fn build(cfg: &ExperimentConfig) -> ProbeSet {
        let world = GridWorld::new(cfg.env.clone()).expect("validated config");
        let mut env = world.reset(RngStreams::new(cfg.run.master_seed, 0).stream(Stream::Probe));
        let mut obs = world.observe(&mut env);
        let mut prev: Option<Action> = None;
        let mut inputs = Vec::with_capacity(cfg.assay.probe_count);
        let mut t = 0usize;
        while inputs.len() < cfg.assay.probe_count {
            if t % 2 == 1 {
                inputs.push(ProbeInput {
                    x: obs.x,
                    b_tilde: obs.b_tilde,
                    silhouette: obs.silhouette,
                    prev_action: prev,
                });
            }
            let a = Action::ALL[env.rng.random_range(0..Action::ALL.len())];
            obs = world.step(&mut env, a).observation;
            prev = Some(a);
            t += 1;
        }
        ProbeSet { inputs }
    }

    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("probe set serializes")
                .as_bytes(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeDistances {
    pub state_distance: f64,
    pub spectrum_distance: f64,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Policy state for a probe input under an injected `g`.
pub fn probe_state(
    params: &AgentParams,
    cfg: &ExperimentConfig,
    probe: &ProbeInput,
    g: &[f64],
) -> NumResult<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, false);
    let x = tape.constant(Tensor::from_slice(&probe.x));
    let mut body_in = vec![probe.b_tilde];
    body_in.extend_from_slice(&probe.silhouette);
    let body = tape.constant(Tensor::vector(body_in));
    let p = tape.constant(Tensor::from_slice(
        &probe.prev_action.map(|a| a.one_hot()).unwrap_or([0.0; 5]),
    ));
    let gv = tape.constant(Tensor::from_slice(g));
    let z = vars.encode(&mut tape, x, body)?;
    let (_, m) = vars.metric_from_g(&mut tape, gv, cfg.agent.metric_epsilon)?;
    let phi = crate::agent::quadratic_features(&mut tape, z, m)?;
    let s = vars.policy_state(&mut tape, z, phi, p, gv)?;
    Ok(tape.value(s).data().to_vec())
}

/// Ascending eigenvalues of `M_g`.
pub fn metric_spectrum(
    params: &AgentParams,
    cfg: &ExperimentConfig,
    g: &[f64],
) -> NumResult<Vec<f64>> {
    let geo = metric_geometry(params, g, cfg.agent.metric_epsilon)?;
    symmetric_eigenvalues(&geo.m)
}

/// Injects two `g` vectors into the same inputs and compares the resulting
/// policy states and metric spectra.
pub fn same_state_probe(
    params: &AgentParams,
    cfg: &ExperimentConfig,
    g_control: &[f64],
    g_shock: &[f64],
    probes: &ProbeSet,
) -> NumResult<ProbeDistances> {
    let mut state_sum = 0.0;
    for probe in &probes.inputs {
        let sa = probe_state(params, cfg, probe, g_control)?;
        let sb = probe_state(params, cfg, probe, g_shock)?;
        state_sum += l2(&sa, &sb);
    }
    // the spectrum depends on g alone, so its per-probe mean is this one value
    let spectrum_distance = l2(
        &metric_spectrum(params, cfg, g_control)?,
        &metric_spectrum(params, cfg, g_shock)?,
    );
    Ok(ProbeDistances {
        state_distance: state_sum / probes.inputs.len() as f64,
        spectrum_distance,
    })
}

pub fn mean_g(steps: &[RolloutStep]) -> Vec<f64> {
    let d = steps[0].g.len();
    let mut m = vec![0.0; d];
    for s in steps {
        for (slot, v) in m.iter_mut().zip(&s.g) {
            *slot += v;
        }
    }
    m.iter().map(|v| v / steps.len() as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// `None` when either side has no variance.
    pub r: Option<f64>,
    pub predicted: Vec<f64>,
    pub oracle: Vec<f64>,
}

impl Calibration {
    pub fn from_pairs(predicted: Vec<f64>, oracle: Vec<f64>) -> Self {
        Calibration {
            r: pearson(&predicted, &oracle),
            predicted,
            oracle,
        }
    }
}

/// `η̂(UP) − η̂(DOWN)` against the environment's counterfactual difference on
/// states visited by the frozen agent. Episodes restart from the centre with
/// `g` carried and decayed as in training.
pub fn calibration_assay(
    params: &AgentParams,
    cfg: &ExperimentConfig,
    cohort: Cohort,
    seed: u64,
) -> NumResult<Calibration> {
    let world = GridWorld::new(cfg.env.clone()).expect("validated config");
    let streams = RngStreams::new(cfg.run.master_seed, seed);
    let mut env = world.reset(streams.stream(Stream::CalibrationEnv));
    let mut policy = streams.stream(Stream::CalibrationPolicy);
    let mut ctrl = Controller::new(
        params,
        &cfg.agent,
        cohort.routing(),
        PerspectiveState::new(cfg.agent.d_g),
    );
    let k = cfg.env.horizon;
    let n = cfg.assay.calibration_states;
    let (mut predicted, mut oracle) = (Vec::with_capacity(n), Vec::with_capacity(n));
    'episodes: loop {
        world.restart(&mut env);
        ctrl.new_episode();
        ctrl.perspective.decay(cfg.agent.perspective.episode_decay);
        let mut obs = world.observe(&mut env);
        for _ in 0..cfg.train.steps_per_episode {
            let truth = world.counterfactual_tendency(&env, Action::Up, k)
                - world.counterfactual_tendency(&env, Action::Down, k);
            let d = ctrl.decide(&obs, &mut policy)?;
            predicted.push(d.eta_hat[Action::Up.index()] - d.eta_hat[Action::Down.index()]);
            oracle.push(truth);
            if predicted.len() == n {
                break 'episodes;
            }
            obs = world.step(&mut env, d.action).observation;
        }
    }
    Ok(Calibration::from_pairs(predicted, oracle))
}
