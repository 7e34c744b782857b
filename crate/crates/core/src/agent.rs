//! The agent's network stack.
//!
//! Two encoders produce `z = [z_obs; z_body]`. The perspective latent `g` induces a
//! metric `M_g = L Lᵀ + εI` whose quadratic features `vec[z (M z)ᵀ]` join `z`, the
//! previous action and `g` in the policy state. Body decoders predict per-action
//! tendencies `η̂(a)` and next readouts `b̂(a)`; their detached values define the
//! conative target `q` the policy is pulled toward.
//!
//! The state head is evaluated twice per step. The predictive copy sees the live
//! metric and `g`; the policy copy sees detached ones, which is what keeps actor
//! gradients out of the perspective pathway while still letting them shape the
//! encoders and the state head.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Action, Observation, N_ACTIONS, OBS_DIM, SILHOUETTE_DIM};
use crate::numcore::{self, Linear, LinearVars, NumError, NumResult, Tape, Tensor, Var};
use crate::perspective::{
    AlphaMode, PerspectiveConfig, PerspectiveNet, PerspectiveState, PerspectiveVars, RoutingSwitch,
};

pub const BODY_IN_DIM: usize = 1 + SILHOUETTE_DIM;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConativeConfig {
    pub w_eta: f64,
    pub w_b: f64,
    pub temperature: f64,
}

impl Default for ConativeConfig {
    fn default() -> Self {
        ConativeConfig {
            w_eta: 1.0,
            w_b: 0.5,
            temperature: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub obs_code_dim: usize,
    pub body_code_dim: usize,
    pub state_dim: usize,
    pub d_g: usize,
    pub metric_epsilon: f64,
    pub conative: ConativeConfig,
    pub perspective: PerspectiveConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            obs_code_dim: 8,
            body_code_dim: 4,
            state_dim: 32,
            d_g: 8,
            metric_epsilon: 1e-3,
            conative: ConativeConfig::default(),
            perspective: PerspectiveConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn d_z(&self) -> usize {
        self.obs_code_dim + self.body_code_dim
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.obs_code_dim == 0 || self.body_code_dim == 0 || self.state_dim == 0 || self.d_g == 0
        {
            return Err(AgentError::Config(
                "all layer sizes must be positive".into(),
            ));
        }
        if !(self.metric_epsilon > 0.0) {
            return Err(AgentError::Config("metric_epsilon must be > 0".into()));
        }
        if !(self.conative.temperature > 0.0) {
            return Err(AgentError::Config(
                "conative temperature must be > 0".into(),
            ));
        }
        let p = &self.perspective;
        if !(0.0..=1.0).contains(&p.episode_decay) || !(0.0..1.0).contains(&p.error_ema) {
            return Err(AgentError::Config(
                "episode_decay must lie in [0,1] and error_ema in [0,1)".into(),
            ));
        }
        Ok(())
    }
}

/// Parameter groups used for gradient routing audits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamGroup {
    Encoders,
    ObsDecoder,
    BodyDecoder,
    StateHead,
    PolicyHead,
    Metric,
    Perspective,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 7] = [
        ParamGroup::Encoders,
        ParamGroup::ObsDecoder,
        ParamGroup::BodyDecoder,
        ParamGroup::StateHead,
        ParamGroup::PolicyHead,
        ParamGroup::Metric,
        ParamGroup::Perspective,
    ];

    /// Groups shielded from policy-side losses. The metric net counts: it is a
    /// pure function of `g`.
    pub fn is_perspective_pathway(self) -> bool {
        matches!(self, ParamGroup::Metric | ParamGroup::Perspective)
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Encoders => "encoders",
            ParamGroup::ObsDecoder => "obs_decoder",
            ParamGroup::BodyDecoder => "body_decoder",
            ParamGroup::StateHead => "state_head",
            ParamGroup::PolicyHead => "policy_head",
            ParamGroup::Metric => "metric_net",
            ParamGroup::Perspective => "perspective",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub encoder_obs: Linear<f64>,
    pub encoder_body: Linear<f64>,
    pub metric_net: Linear<f64>,
    pub state_head: Linear<f64>,
    pub policy_head: Linear<f64>,
    pub obs_decoder: Linear<f64>,
    pub body_decoder: Linear<f64>,
    pub perspective: PerspectiveNet,
}

struct Dims {
    d_z: usize,
    d_g: usize,
    state: usize,
}

impl Dims {
    fn of(cfg: &AgentConfig) -> Dims {
        Dims {
            d_z: cfg.d_z(),
            d_g: cfg.d_g,
            state: cfg.state_dim,
        }
    }

    fn tri(&self) -> usize {
        self.d_z * (self.d_z + 1) / 2
    }

    fn state_in(&self) -> usize {
        self.d_z + self.d_z * self.d_z + N_ACTIONS + self.d_g
    }

    /// The observation decoder also reads the predictive policy state, which is
    /// how observation-prediction gradients reach the metric and state head.
    fn obs_dec_in(&self) -> usize {
        self.d_z + self.state + N_ACTIONS + self.d_g
    }

    fn body_dec_in(&self) -> usize {
        self.d_z + self.d_g + 1
    }
}

impl AgentParams {
    pub fn init<R: Rng>(cfg: &AgentConfig, rng: &mut R) -> Result<Self, AgentError> {
        cfg.validate()?;
        let d = Dims::of(cfg);
        Ok(AgentParams {
            encoder_obs: Linear::init(cfg.obs_code_dim, OBS_DIM, rng),
            encoder_body: Linear::init(cfg.body_code_dim, BODY_IN_DIM, rng),
            metric_net: Linear::init(d.tri(), d.d_g, rng),
            state_head: Linear::init(d.state, d.state_in(), rng),
            policy_head: Linear::init(N_ACTIONS, d.state + 1, rng),
            obs_decoder: Linear::init(OBS_DIM, d.obs_dec_in(), rng),
            body_decoder: Linear::init(2 * N_ACTIONS, d.body_dec_in(), rng),
            perspective: PerspectiveNet::init(d.d_z, d.d_g, &cfg.perspective, rng),
        })
    }

    pub fn zeros(cfg: &AgentConfig) -> Self {
        let d = Dims::of(cfg);
        AgentParams {
            encoder_obs: Linear::zeros(cfg.obs_code_dim, OBS_DIM),
            encoder_body: Linear::zeros(cfg.body_code_dim, BODY_IN_DIM),
            metric_net: Linear::zeros(d.tri(), d.d_g),
            state_head: Linear::zeros(d.state, d.state_in()),
            policy_head: Linear::zeros(N_ACTIONS, d.state + 1),
            obs_decoder: Linear::zeros(OBS_DIM, d.obs_dec_in()),
            body_decoder: Linear::zeros(2 * N_ACTIONS, d.body_dec_in()),
            perspective: PerspectiveNet::zeros(d.d_z, d.d_g),
        }
    }

    fn layers(&self) -> [(&'static str, ParamGroup, &Linear<f64>); 7] {
        [
            ("encoder_obs", ParamGroup::Encoders, &self.encoder_obs),
            ("encoder_body", ParamGroup::Encoders, &self.encoder_body),
            ("metric_net", ParamGroup::Metric, &self.metric_net),
            ("state_head", ParamGroup::StateHead, &self.state_head),
            ("policy_head", ParamGroup::PolicyHead, &self.policy_head),
            ("obs_decoder", ParamGroup::ObsDecoder, &self.obs_decoder),
            ("body_decoder", ParamGroup::BodyDecoder, &self.body_decoder),
        ]
    }

    /// Every parameter tensor with its name and group, in a fixed order shared by
    /// [`AgentParams::tensors_mut`] and [`AgentVars::vars`].
    pub fn named_tensors(&self) -> Vec<(String, ParamGroup, &Tensor<f64>)> {
        let mut out = Vec::new();
        for (name, group, layer) in self.layers() {
            out.push((format!("{name}.w"), group, &layer.w));
            out.push((format!("{name}.b"), group, &layer.b));
        }
        for (name, t) in self.perspective.named_tensors() {
            out.push((name, ParamGroup::Perspective, t));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        let mut out = Vec::new();
        for layer in [
            &mut self.encoder_obs,
            &mut self.encoder_body,
            &mut self.metric_net,
            &mut self.state_head,
            &mut self.policy_head,
            &mut self.obs_decoder,
            &mut self.body_decoder,
        ] {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        out.extend(self.perspective.tensors_mut());
        out
    }

    pub fn n_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, _, t)| t.is_finite())
    }

    pub fn bind(&self, tape: &mut Tape<f64>, trainable: bool) -> AgentVars {
        let d_z = self.encoder_obs.out_dim() + self.encoder_body.out_dim();
        AgentVars {
            encoder_obs: self.encoder_obs.bind(tape, trainable),
            encoder_body: self.encoder_body.bind(tape, trainable),
            metric_net: self.metric_net.bind(tape, trainable),
            state_head: self.state_head.bind(tape, trainable),
            policy_head: self.policy_head.bind(tape, trainable),
            obs_decoder: self.obs_decoder.bind(tape, trainable),
            body_decoder: self.body_decoder.bind(tape, trainable),
            perspective: self.perspective.bind(tape, trainable),
            d_z,
        }
    }
}

/// Lower-triangular factor and assembled metric.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricGeometry {
    pub l: Tensor<f64>,
    pub m: Tensor<f64>,
    pub epsilon: f64,
}

/// Per-step inputs to the network. The error scalars are the (already
/// normalized) features fed to the perspective update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInputs {
    pub x: [f64; OBS_DIM],
    pub b_tilde: f64,
    pub silhouette: [f64; SILHOUETTE_DIM],
    pub prev_action: Option<Action>,
    pub g_prev: Vec<f64>,
    pub obs_error: f64,
    pub body_error: f64,
}

impl StepInputs {
    pub fn new(obs: &Observation, prev_action: Option<Action>, g_prev: &[f64]) -> Self {
        StepInputs {
            x: obs.x,
            b_tilde: obs.b_tilde,
            silhouette: obs.silhouette,
            prev_action,
            g_prev: g_prev.to_vec(),
            obs_error: 0.0,
            body_error: 0.0,
        }
    }

    pub fn p(&self) -> [f64; N_ACTIONS] {
        self.prev_action
            .map(|a| a.one_hot())
            .unwrap_or([0.0; N_ACTIONS])
    }

    fn body_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(BODY_IN_DIM);
        v.push(self.b_tilde);
        v.extend_from_slice(&self.silhouette);
        v
    }
}

/// Tape handles for one step's forward pass.
#[derive(Clone, Copy, Debug)]
pub struct StepGraph {
    pub z: Var,
    pub g: Var,
    pub alpha: Var,
    pub m: Var,
    pub phi: Var,
    /// Predictive state (live metric and `g`); feeds the observation decoder.
    pub s_pred: Var,
    /// Policy state (detached metric and `g`).
    pub s: Var,
    pub logits: Var,
    pub pi: Var,
    pub log_pi: Var,
    pub eta_hat: Var,
    pub b_hat: Var,
    pub b_tilde: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct AgentVars {
    pub encoder_obs: LinearVars,
    pub encoder_body: LinearVars,
    pub metric_net: LinearVars,
    pub state_head: LinearVars,
    pub policy_head: LinearVars,
    pub obs_decoder: LinearVars,
    pub body_decoder: LinearVars,
    pub perspective: PerspectiveVars,
    d_z: usize,
}

impl AgentVars {
    /// Leaf handles in [`AgentParams::named_tensors`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut v = Vec::new();
        for l in [
            self.encoder_obs,
            self.encoder_body,
            self.metric_net,
            self.state_head,
            self.policy_head,
            self.obs_decoder,
            self.body_decoder,
        ] {
            v.push(l.w);
            v.push(l.b);
        }
        v.extend(self.perspective.vars());
        v
    }

    pub fn encode(&self, tape: &mut Tape<f64>, x: Var, body: Var) -> NumResult<Var> {
        let zo = self.encoder_obs.apply(tape, x)?;
        let zo = tape.tanh(zo);
        let zb = self.encoder_body.apply(tape, body)?;
        let zb = tape.tanh(zb);
        Ok(tape.concat(&[zo, zb]))
    }

    /// Returns `(L, M)`.
    pub fn metric_from_g(
        &self,
        tape: &mut Tape<f64>,
        g: Var,
        epsilon: f64,
    ) -> NumResult<(Var, Var)> {
        let entries = self.metric_net.apply(tape, g)?;
        let l = tape.tril_from_vec(entries, self.d_z)?;
        let lt = tape.transpose(l)?;
        let llt = tape.matmul(l, lt)?;
        let ridge = tape.constant(Tensor::identity(self.d_z).map(|v| v * epsilon));
        let m = tape.add(llt, ridge)?;
        Ok((l, m))
    }

    pub fn policy_state(
        &self,
        tape: &mut Tape<f64>,
        z: Var,
        phi: Var,
        p: Var,
        g: Var,
    ) -> NumResult<Var> {
        let input = tape.concat(&[z, phi, p, g]);
        let pre = self.state_head.apply(tape, input)?;
        Ok(tape.tanh(pre))
    }

    /// Returns `(logits, π)`.
    pub fn policy(&self, tape: &mut Tape<f64>, s: Var, b_tilde: Var) -> NumResult<(Var, Var)> {
        let input = tape.concat(&[s, b_tilde]);
        let logits = self.policy_head.apply(tape, input)?;
        let pi = tape.softmax(logits, 1.0)?;
        Ok((logits, pi))
    }

    pub fn predict_observation(
        &self,
        tape: &mut Tape<f64>,
        z: Var,
        s_pred: Var,
        action: Action,
        g: Var,
    ) -> NumResult<Var> {
        let a = tape.constant(Tensor::from_slice(&action.one_hot()));
        let input = tape.concat(&[z, s_pred, a, g]);
        self.obs_decoder.apply(tape, input)
    }

    /// Returns `(η̂, b̂)`, each indexed by action.
    pub fn body_decode(
        &self,
        tape: &mut Tape<f64>,
        z: Var,
        g: Var,
        b_tilde: Var,
    ) -> NumResult<(Var, Var)> {
        let input = tape.concat(&[z, g, b_tilde]);
        let out = self.body_decoder.apply(tape, input)?;
        let eta = tape.slice(out, 0, N_ACTIONS)?;
        let b_pre = tape.slice(out, N_ACTIONS, N_ACTIONS)?;
        Ok((eta, tape.sigmoid(b_pre)))
    }

    /// Full forward pass for one step.
    pub fn step(
        &self,
        tape: &mut Tape<f64>,
        inputs: &StepInputs,
        cfg: &AgentConfig,
        routing: RoutingSwitch,
        alpha_mode: AlphaMode,
    ) -> NumResult<StepGraph> {
        let x = tape.constant(Tensor::from_slice(&inputs.x));
        let body = tape.constant(Tensor::vector(inputs.body_input()));
        let b_tilde = tape.constant(Tensor::vector(vec![inputs.b_tilde]));
        let p = tape.constant(Tensor::from_slice(&inputs.p()));
        let g_prev = tape.constant(Tensor::from_slice(&inputs.g_prev));

        let z = self.encode(tape, x, body)?;
        let up = self.perspective.update_g(
            tape,
            g_prev,
            z,
            inputs.obs_error,
            inputs.body_error,
            routing,
            alpha_mode,
        )?;
        let g = up.g;
        let (_, m) = self.metric_from_g(tape, g, cfg.metric_epsilon)?;
        let phi = quadratic_features(tape, z, m)?;
        let s_pred = self.policy_state(tape, z, phi, p, g)?;

        let g_det = tape.detach(g);
        let m_det = tape.detach(m);
        let phi_pol = quadratic_features(tape, z, m_det)?;
        let s = self.policy_state(tape, z, phi_pol, p, g_det)?;
        let (logits, pi) = self.policy(tape, s, b_tilde)?;
        let log_pi = tape.log_softmax(logits);

        let (eta_hat, b_hat) = self.body_decode(tape, z, g_det, b_tilde)?;
        Ok(StepGraph {
            z,
            g,
            alpha: up.alpha,
            m,
            phi,
            s_pred,
            s,
            logits,
            pi,
            log_pi,
            eta_hat,
            b_hat,
            b_tilde,
        })
    }

    /// Conative distribution on the tape: the decoder outputs are detached first.
    pub fn conative_target(
        &self,
        tape: &mut Tape<f64>,
        step: &StepGraph,
        cfg: &ConativeConfig,
    ) -> NumResult<Var> {
        let eta = tape.detach(step.eta_hat);
        let b = tape.detach(step.b_hat);
        let q = conative_distribution(tape.value(eta).data(), tape.value(b).data(), cfg)?;
        Ok(tape.constant(Tensor::vector(q)))
    }

    /// `KL(q ‖ π')` where `π'` is the policy head re-applied to a detached state,
    /// so the loss reaches the policy head and nothing upstream.
    pub fn conative_loss(&self, tape: &mut Tape<f64>, step: &StepGraph, q: Var) -> NumResult<Var> {
        let s = tape.detach(step.s);
        let (_, pi) = self.policy(tape, s, step.b_tilde)?;
        conative_loss(tape, q, pi)
    }
}

/// `vec[z (M z)ᵀ]`, row-major, length `d_z²`.
pub fn quadratic_features(tape: &mut Tape<f64>, z: Var, m: Var) -> NumResult<Var> {
    let mz = tape.affine(m, z, None)?;
    let outer = tape.outer(z, mz);
    let n = tape.value(outer).len();
    tape.reshape(outer, vec![n])
}

/// Plain evaluation of the metric for a given `g` (no tape kept).
pub fn metric_geometry(params: &AgentParams, g: &[f64], epsilon: f64) -> NumResult<MetricGeometry> {
    let mut tape = Tape::new();
    let mv = params.metric_net.bind(&mut tape, false);
    let d_z = params.encoder_obs.out_dim() + params.encoder_body.out_dim();
    let gv = tape.constant(Tensor::from_slice(g));
    let entries = mv.apply(&mut tape, gv)?;
    let l = tape.tril_from_vec(entries, d_z)?;
    let lt = tape.transpose(l)?;
    let llt = tape.matmul(l, lt)?;
    let mut m = tape.value(llt).clone();
    for i in 0..d_z {
        let v = m.get2(i, i) + epsilon;
        m.set2(i, i, v);
    }
    Ok(MetricGeometry {
        l: tape.value(l).clone(),
        m,
        epsilon,
    })
}

/// `q = softmax((w_η η̂ + w_b b̂) / T)`. Takes plain values, so nothing here can
/// carry a gradient back to the decoders.
pub fn conative_distribution(
    eta_hat: &[f64],
    b_hat_next: &[f64],
    cfg: &ConativeConfig,
) -> NumResult<Vec<f64>> {
    if eta_hat.len() != b_hat_next.len() {
        return Err(NumError::Dimension {
            op: "conative_distribution",
            detail: format!(
                "{} tendencies vs {} readouts",
                eta_hat.len(),
                b_hat_next.len()
            ),
        });
    }
    let v: Vec<f64> = eta_hat
        .iter()
        .zip(b_hat_next)
        .map(|(e, b)| cfg.w_eta * e + cfg.w_b * b)
        .collect();
    numcore::softmax(&v, cfg.temperature)
}

pub fn conative_loss(tape: &mut Tape<f64>, q: Var, pi: Var) -> NumResult<Var> {
    tape.kl_divergence(q, pi)
}

/// Plain-value snapshot of one step, for logs and assays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub x: [f64; OBS_DIM],
    pub b_tilde: f64,
    pub silhouette: [f64; SILHOUETTE_DIM],
    pub p: [f64; N_ACTIONS],
    pub z: Vec<f64>,
    pub g: Vec<f64>,
    pub alpha: f64,
    pub phi_g: Vec<f64>,
    pub s: Vec<f64>,
    pub policy_logits: Vec<f64>,
    pub pi: Vec<f64>,
    pub q: Vec<f64>,
    pub eta_hat: Vec<f64>,
    pub b_hat_next: Vec<f64>,
    pub predicted_x_next: Vec<f64>,
}

impl AgentStep {
    pub fn capture(
        tape: &Tape<f64>,
        inputs: &StepInputs,
        graph: &StepGraph,
        q: &[f64],
        predicted: Var,
    ) -> Self {
        let v = |x: Var| tape.value(x).data().to_vec();
        AgentStep {
            x: inputs.x,
            b_tilde: inputs.b_tilde,
            silhouette: inputs.silhouette,
            p: inputs.p(),
            z: v(graph.z),
            g: v(graph.g),
            alpha: tape.value(graph.alpha).data()[0],
            phi_g: v(graph.phi),
            s: v(graph.s),
            policy_logits: v(graph.logits),
            pi: v(graph.pi),
            q: q.to_vec(),
            eta_hat: v(graph.eta_hat),
            b_hat_next: v(graph.b_hat),
            predicted_x_next: v(predicted),
        }
    }
}

/// Drives an agent online with fixed parameters: tracks `g`, the error
/// statistics, and the predictions needed to score the next step.
pub struct Controller<'a> {
    params: &'a AgentParams,
    cfg: &'a AgentConfig,
    routing: RoutingSwitch,
    pub perspective: PerspectiveState,
    prev_action: Option<Action>,
    prev_pred: Option<(Vec<f64>, f64)>,
}

/// Everything produced by one controller step.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub inputs: StepInputs,
    pub action: Action,
    pub pi: Vec<f64>,
    pub q: Vec<f64>,
    pub eta_hat: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub z: Vec<f64>,
    pub g: Vec<f64>,
    pub s: Vec<f64>,
    pub alpha: f64,
    pub x_hat: Vec<f64>,
    /// Raw squared errors of the previous step's predictions.
    pub obs_error: f64,
    pub body_error: f64,
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

impl<'a> Controller<'a> {
    pub fn new(
        params: &'a AgentParams,
        cfg: &'a AgentConfig,
        routing: RoutingSwitch,
        perspective: PerspectiveState,
    ) -> Self {
        Controller {
            params,
            cfg,
            routing,
            perspective,
            prev_action: None,
            prev_pred: None,
        }
    }

    /// Updates `g` from `obs`, then picks an action with `choose(π)`.
    pub fn decide_with(
        &mut self,
        obs: &Observation,
        choose: impl FnOnce(&[f64]) -> Action,
    ) -> NumResult<Decision> {
        let (obs_error, body_error) = match &self.prev_pred {
            Some((x_hat, b_hat)) => (mse(x_hat, &obs.x), (b_hat - obs.b_tilde).powi(2)),
            None => (0.0, 0.0),
        };
        let (fo, fb) = self.perspective.normalizer.features(
            &self.cfg.perspective,
            obs_error,
            body_error,
            self.routing,
        );
        let mut inputs = StepInputs::new(obs, self.prev_action, &self.perspective.g);
        inputs.obs_error = fo;
        inputs.body_error = fb;

        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let graph = vars.step(
            &mut tape,
            &inputs,
            self.cfg,
            self.routing,
            AlphaMode::Learned,
        )?;
        let val = |t: &Tape<f64>, v: Var| t.value(v).data().to_vec();
        let pi = val(&tape, graph.pi);
        let action = choose(&pi);
        let x_hat = vars.predict_observation(&mut tape, graph.z, graph.s_pred, action, graph.g)?;
        let eta_hat = val(&tape, graph.eta_hat);
        let b_hat = val(&tape, graph.b_hat);
        let q = conative_distribution(&eta_hat, &b_hat, &self.cfg.conative)?;
        let g = val(&tape, graph.g);
        if !g.iter().chain(&pi).all(|v| v.is_finite()) {
            return Err(NumError::NonFinite {
                op: "controller",
                node: tape.len(),
            });
        }
        let x_hat = val(&tape, x_hat);
        self.perspective.g = g.clone();
        self.prev_pred = Some((x_hat.clone(), b_hat[action.index()]));
        self.prev_action = Some(action);
        Ok(Decision {
            inputs,
            action,
            z: val(&tape, graph.z),
            s: val(&tape, graph.s),
            alpha: tape.value(graph.alpha).data()[0],
            pi,
            q,
            eta_hat,
            b_hat,
            g,
            x_hat,
            obs_error,
            body_error,
        })
    }

    pub fn decide<R: Rng>(&mut self, obs: &Observation, rng: &mut R) -> NumResult<Decision> {
        self.decide_with(obs, |pi| sample_action(pi, rng))
    }

    /// Forgets the pending predictions (episode boundary); `g` is left alone.
    pub fn new_episode(&mut self) {
        self.prev_action = None;
        self.prev_pred = None;
    }
}

/// Samples an action index from a probability vector.
pub fn sample_action<R: Rng>(pi: &[f64], rng: &mut R) -> Action {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in pi.iter().enumerate() {
        acc += p;
        if r < acc {
            return Action::ALL[i];
        }
    }
    Action::ALL[pi.len() - 1]
}
