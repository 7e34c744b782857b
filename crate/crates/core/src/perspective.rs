//! The slow perspective latent `g`.
//!
//! `g` is a gated running blend of a GRU candidate: `g' = (1 − α) g + α ĝ`,
//! where the rate `α` comes from a tiny logistic net over the current error
//! summary. Predictive losses may train these parameters; policy-side losses
//! may not (see [`firewall_check`]).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::ParamGroup;
use crate::numcore::{
    gru_step, GruCell, GruVars, Linear, LinearVars, NumResult, Tape, Tensor, Var,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerspectiveConfig {
    /// Multiplicative decay applied to `g` at every episode boundary.
    pub episode_decay: f64,
    /// Feed errors to the update as `ln(1 + e/ē)` against a running mean `ē`
    /// instead of raw squared errors.
    pub normalize_errors: bool,
    /// Smoothing of the running error means.
    pub error_ema: f64,
    /// Initial bias of the rate net; negative values start `g` slow.
    pub alpha_bias_init: f64,
}

impl Default for PerspectiveConfig {
    fn default() -> Self {
        PerspectiveConfig {
            episode_decay: 0.99,
            normalize_errors: true,
            error_ema: 0.95,
            alpha_bias_init: -2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingSwitch {
    pub body_to_g: bool,
}

impl RoutingSwitch {
    fn gate(self, body_error: f64) -> f64 {
        if self.body_to_g {
            body_error
        } else {
            0.0
        }
    }
}

/// How the update rate is obtained. `Fixed` exists for tests and probes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    Learned,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveNet {
    pub gru: GruCell<f64>,
    pub alpha_net: Linear<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct PerspectiveVars {
    pub gru: GruVars,
    pub alpha_net: LinearVars,
}

#[derive(Clone, Copy, Debug)]
pub struct GUpdate {
    pub g: Var,
    pub alpha: Var,
    pub candidate: Var,
}

impl PerspectiveNet {
    /// GRU input is `[z; obs_error; body_error]`.
    pub fn init<R: Rng>(d_z: usize, d_g: usize, cfg: &PerspectiveConfig, rng: &mut R) -> Self {
        let gru = GruCell::init(d_z + 2, d_g, rng);
        let mut alpha_net = Linear::init(1, 2, rng);
        alpha_net.b.data_mut()[0] += cfg.alpha_bias_init;
        PerspectiveNet { gru, alpha_net }
    }

    pub fn zeros(d_z: usize, d_g: usize) -> Self {
        PerspectiveNet {
            gru: GruCell::zeros(d_z + 2, d_g),
            alpha_net: Linear::zeros(1, 2),
        }
    }

    pub fn d_g(&self) -> usize {
        self.gru.hidden_dim
    }

    pub fn bind(&self, tape: &mut Tape<f64>, trainable: bool) -> PerspectiveVars {
        PerspectiveVars {
            gru: self.gru.bind(tape, trainable),
            alpha_net: self.alpha_net.bind(tape, trainable),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<f64>)> {
        let mut out: Vec<(String, &Tensor<f64>)> = GruCell::<f64>::TENSOR_NAMES
            .iter()
            .zip(self.gru.tensors())
            .map(|(n, t)| (format!("perspective.gru.{n}"), t))
            .collect();
        out.push(("perspective.alpha_net.w".into(), &self.alpha_net.w));
        out.push(("perspective.alpha_net.b".into(), &self.alpha_net.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        let mut out: Vec<&mut Tensor<f64>> = self.gru.tensors_mut().into_iter().collect();
        out.push(&mut self.alpha_net.w);
        out.push(&mut self.alpha_net.b);
        out
    }
}

impl PerspectiveVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.gru.all().to_vec();
        v.push(self.alpha_net.w);
        v.push(self.alpha_net.b);
        v
    }

    /// One gated update of `g`. The body error is zeroed here when routing is off,
    /// so callers cannot leak it by accident.
    pub fn update_g(
        &self,
        tape: &mut Tape<f64>,
        g_prev: Var,
        z: Var,
        obs_error: f64,
        body_error: f64,
        routing: RoutingSwitch,
        alpha_mode: AlphaMode,
    ) -> NumResult<GUpdate> {
        let errors = [obs_error, routing.gate(body_error)];
        let err = tape.constant(Tensor::from_slice(&errors));
        let input = tape.concat(&[z, err]);
        let candidate = gru_step(tape, &self.gru, input, g_prev)?;
        let alpha = match alpha_mode {
            AlphaMode::Learned => {
                let pre = self.alpha_net.apply(tape, err)?;
                tape.sigmoid(pre)
            }
            AlphaMode::Fixed(a) => tape.constant(Tensor::vector(vec![a])),
        };
        // g' = g + α (ĝ − g); exact at α ∈ {0, 1}
        let alpha_s = tape.reshape(alpha, vec![])?;
        let step = tape.sub(candidate, g_prev)?;
        let scaled = tape.mul_scalar_var(step, alpha_s)?;
        let g = match alpha_mode {
            AlphaMode::Fixed(a) if a == 1.0 => candidate,
            _ => tape.add(g_prev, scaled)?,
        };
        Ok(GUpdate {
            g,
            alpha,
            candidate,
        })
    }
}

pub fn decay_across_episode(g: &mut [f64], factor: f64) {
    for v in g {
        *v *= factor;
    }
}

/// Running means that turn squared errors into scale-free update inputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorNormalizer {
    obs_mean: Option<f64>,
    body_mean: Option<f64>,
}

const MEAN_FLOOR: f64 = 1e-12;

impl ErrorNormalizer {
    fn one(mean: &mut Option<f64>, e: f64, ema: f64) -> f64 {
        if e <= 0.0 {
            return 0.0;
        }
        let m = mean.get_or_insert(e);
        let feature = (e / m.max(MEAN_FLOOR)).ln_1p();
        *m = ema * *m + (1.0 - ema) * e;
        feature
    }

    /// Feature pair for the update; the body error is gated before it can
    /// touch the running statistics.
    pub fn features(
        &mut self,
        cfg: &PerspectiveConfig,
        obs_error: f64,
        body_error: f64,
        routing: RoutingSwitch,
    ) -> (f64, f64) {
        let body_error = routing.gate(body_error);
        if !cfg.normalize_errors {
            return (obs_error, body_error);
        }
        (
            Self::one(&mut self.obs_mean, obs_error, cfg.error_ema),
            Self::one(&mut self.body_mean, body_error, cfg.error_ema),
        )
    }
}

/// Online state carried between steps: `g` and the error statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveState {
    pub g: Vec<f64>,
    pub normalizer: ErrorNormalizer,
}

impl PerspectiveState {
    pub fn new(d_g: usize) -> Self {
        PerspectiveState {
            g: vec![0.0; d_g],
            normalizer: ErrorNormalizer::default(),
        }
    }

    pub fn decay(&mut self, factor: f64) {
        decay_across_episode(&mut self.g, factor);
    }

    pub fn reset_for_rollout(&mut self) {
        *self = PerspectiveState::new(self.g.len());
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("firewall violation: loss `{loss}` reached protected parameter `{param}` (max |grad| = {max_abs:e})")]
pub struct FirewallViolation {
    pub loss: String,
    pub param: String,
    pub max_abs: f64,
}

/// Losses that must never reach the perspective pathway.
pub fn is_policy_side(loss_name: &str) -> bool {
    matches!(loss_name, "actor" | "conative")
}

/// Asserts that a policy-side loss left every perspective-pathway gradient at exactly zero.
pub fn firewall_check(
    loss_name: &str,
    grads: &[(String, ParamGroup, Option<Tensor<f64>>)],
) -> Result<(), FirewallViolation> {
    if !is_policy_side(loss_name) {
        return Ok(());
    }
    for (name, group, grad) in grads {
        if !group.is_perspective_pathway() {
            continue;
        }
        if let Some(g) = grad {
            let max_abs = g.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max_abs != 0.0 {
                return Err(FirewallViolation {
                    loss: loss_name.to_string(),
                    param: name.clone(),
                    max_abs,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (PerspectiveNet, Tape<f64>, PerspectiveVars, Var, Var) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = PerspectiveNet::init(4, 3, &PerspectiveConfig::default(), &mut rng);
        let mut tape = Tape::new();
        let vars = net.bind(&mut tape, true);
        let g = tape.constant(Tensor::vector(vec![0.3, -0.2, 0.5]));
        let z = tape.constant(Tensor::vector(vec![0.1, 0.4, -0.7, 0.2]));
        (net, tape, vars, g, z)
    }

    const ON: RoutingSwitch = RoutingSwitch { body_to_g: true };
    const OFF: RoutingSwitch = RoutingSwitch { body_to_g: false };

    #[test]
    fn alpha_zero_keeps_g() {
        let (_, mut tape, vars, g, z) = setup();
        let up = vars
            .update_g(&mut tape, g, z, 0.4, 0.9, ON, AlphaMode::Fixed(0.0))
            .unwrap();
        assert_eq!(tape.value(up.g), tape.value(g));
    }

    #[test]
    fn alpha_one_takes_candidate() {
        let (_, mut tape, vars, g, z) = setup();
        let up = vars
            .update_g(&mut tape, g, z, 0.4, 0.9, ON, AlphaMode::Fixed(1.0))
            .unwrap();
        assert_eq!(tape.value(up.g), tape.value(up.candidate));
    }

    #[test]
    fn routing_off_ignores_body_error() {
        let (_, mut tape, vars, g, z) = setup();
        let a = vars
            .update_g(&mut tape, g, z, 0.4, 0.0, OFF, AlphaMode::Learned)
            .unwrap();
        let b = vars
            .update_g(&mut tape, g, z, 0.4, 7.5, OFF, AlphaMode::Learned)
            .unwrap();
        assert_eq!(tape.value(a.g), tape.value(b.g));
        let c = vars
            .update_g(&mut tape, g, z, 0.4, 7.5, ON, AlphaMode::Learned)
            .unwrap();
        assert_ne!(tape.value(a.g), tape.value(c.g));
    }

    #[test]
    fn learned_alpha_in_open_interval_and_g_bounded() {
        let (_, mut tape, vars, mut g, z) = setup();
        for k in 0..50 {
            let up = vars
                .update_g(&mut tape, g, z, k as f64, 100.0, ON, AlphaMode::Learned)
                .unwrap();
            let a = tape.value(up.alpha).item();
            assert!(a > 0.0 && a < 1.0);
            assert!(tape.value(up.g).data().iter().all(|v| v.abs() <= 1.0));
            g = up.g;
        }
    }

    #[test]
    fn decay_compounds() {
        let mut g = vec![1.0; 8];
        decay_across_episode(&mut g, 0.99);
        assert_eq!(g, vec![0.99; 8]);
        let mut g = vec![1.0];
        for _ in 0..180 {
            decay_across_episode(&mut g, 0.99);
        }
        assert!((g[0] - 0.99f64.powi(180)).abs() < 1e-12);
        assert!((g[0] - 0.163_808).abs() < 1e-6);
    }

    #[test]
    fn reset_is_history_free() {
        let cfg = PerspectiveConfig::default();
        let mut a = PerspectiveState::new(8);
        let mut b = PerspectiveState::new(8);
        a.g = vec![0.7; 8];
        a.normalizer.features(&cfg, 0.3, 0.2, ON);
        b.g[2] = -0.1;
        a.reset_for_rollout();
        b.reset_for_rollout();
        assert_eq!(a, b);
        assert_eq!(a.g, vec![0.0; 8]);
    }

    #[test]
    fn normalizer_gates_before_statistics() {
        let cfg = PerspectiveConfig::default();
        let mut n = ErrorNormalizer::default();
        assert_eq!(n.features(&cfg, 0.2, 5.0, OFF).1, 0.0);
        assert_eq!(n.body_mean, None);
        let (o, b) = n.features(&cfg, 0.2, 0.1, ON);
        // first observation of each channel has ratio one
        assert!((b - 2f64.ln()).abs() < 1e-15);
        assert!((o - 2f64.ln()).abs() < 1e-15);
    }
}
