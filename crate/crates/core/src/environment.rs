//! The two-gradient gridworld.
//!
//! Columns carry an observation-noise gradient (noisy on the left, clean on
//! the right). Rows carry a sigmoid-shaped bodily affordance that feeds the
//! latent viability `u`:
//!
//! ```text
//! u' = ρ·u − c_met − c_move·[moved] + λ·A(row)
//! ```
//!
//! The agent never sees `u`; it gets `logistic(u)` plus a noisy silhouette of
//! the four neighbouring affordances. No reward signal exists anywhere.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::logistic;
use crate::rng::StreamRng;

pub const N_ACTIONS: usize = 5;
pub const N_ZONES: usize = 9;
pub const OBS_DIM: usize = 8;
pub const SILHOUETTE_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("row {row} outside grid of height {height}")]
    RowOutOfRange { row: usize, height: usize },
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("action index {0} out of range")]
    BadAction(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Action, EnvError> {
        Action::ALL.get(i).copied().ok_or(EnvError::BadAction(i))
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay => (0, 0),
        }
    }

    pub fn one_hot(self) -> [f64; N_ACTIONS] {
        let mut v = [0.0; N_ACTIONS];
        v[self.index()] = 1.0;
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "UP",
            Action::Down => "DOWN",
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
            Action::Stay => "STAY",
        }
    }
}

/// One of the nine 3×3 blocks of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Zone {
    /// 0 = top, 1 = middle, 2 = bottom.
    pub band: usize,
    /// 0 = left, 1 = middle, 2 = right.
    pub side: usize,
}

impl Zone {
    pub const TOP_RIGHT: Zone = Zone { band: 0, side: 2 };

    pub fn index(self) -> usize {
        self.band * 3 + self.side
    }

    pub fn from_index(i: usize) -> Zone {
        Zone {
            band: i / 3,
            side: i % 3,
        }
    }

    pub fn is_bottom(self) -> bool {
        self.band == 2
    }

    pub fn label(self) -> &'static str {
        const LABELS: [&str; N_ZONES] = [
            "top-left",
            "top-middle",
            "top-right",
            "middle-left",
            "middle-middle",
            "middle-right",
            "bottom-left",
            "bottom-middle",
            "bottom-right",
        ];
        LABELS[self.index()]
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Environment constants; every field is exposed in the run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub height: usize,
    pub width: usize,
    pub sigma_left: f64,
    pub sigma_right: f64,
    pub affordance_slope: f64,
    pub rho_aff: f64,
    pub c_met: f64,
    pub c_move: f64,
    pub lambda_aff: f64,
    pub sigma_sil: f64,
    /// Counterfactual rollout horizon `k` for the tendency target.
    pub horizon: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            height: 15,
            width: 15,
            sigma_left: 0.40,
            sigma_right: 0.05,
            affordance_slope: 1.6,
            rho_aff: 0.995,
            c_met: 0.002,
            c_move: 0.001,
            lambda_aff: 0.05,
            sigma_sil: 0.1,
            horizon: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    pub config: EnvConfig,
    texture: Vec<f64>,
    noise: bool,
}

/// Shock bookkeeping entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockEvent {
    pub t: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub row: usize,
    pub col: usize,
    pub u: f64,
    pub t: usize,
    pub rng: StreamRng,
    pub shocks: Vec<ShockEvent>,
}

impl EnvState {
    /// Hash of position, clock, viability bits, shock log and RNG position.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        (self.row, self.col, self.u.to_bits(), self.t).hash(&mut h);
        for s in &self.shocks {
            (s.t, s.delta.to_bits()).hash(&mut h);
        }
        self.rng.get_word_pos().hash(&mut h);
        self.rng.get_stream().hash(&mut h);
        h.finish()
    }

    /// Compensated (Neumaier) sum, so twenty −0.08 shocks total exactly −1.6.
    pub fn total_injected(&self) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for s in &self.shocks {
            let t = sum + s.delta;
            comp += if sum.abs() >= s.delta.abs() {
                (sum - t) + s.delta
            } else {
                (s.delta - t) + sum
            };
            sum = t;
        }
        sum + comp
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub x: [f64; OBS_DIM],
    pub b_tilde: f64,
    pub silhouette: [f64; SILHOUETTE_DIM],
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub moved: bool,
}

/// Moore neighbourhood in row-major order, centre excluded.
const MOORE: [(isize, isize); OBS_DIM] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

impl GridWorld {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        if config.height < 3 || config.width < 3 {
            return Err(EnvError::Config("grid must be at least 3x3".into()));
        }
        if config.sigma_left < config.sigma_right || config.sigma_right < 0.0 {
            return Err(EnvError::Config(
                "observation noise must be non-negative and decrease left to right".into(),
            ));
        }
        if config.horizon == 0 {
            return Err(EnvError::Config(
                "counterfactual horizon must be >= 1".into(),
            ));
        }
        if config.sigma_sil < 0.0 || config.affordance_slope <= 0.0 {
            return Err(EnvError::Config(
                "sigma_sil >= 0 and affordance_slope > 0 required".into(),
            ));
        }
        let w = config.width;
        let texture = (0..config.height * w)
            .map(|k| (k % w) as f64 / (w - 1) as f64)
            .collect();
        Ok(GridWorld {
            config,
            texture,
            noise: true,
        })
    }

    pub fn standard() -> Self {
        Self::new(EnvConfig::default()).expect("default config is valid")
    }

    /// Same world with observation and silhouette noise switched off.
    pub fn noiseless(&self) -> Self {
        GridWorld {
            noise: false,
            ..self.clone()
        }
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn center(&self) -> (usize, usize) {
        (self.config.height / 2, self.config.width / 2)
    }

    /// Base feature of a cell: its normalized column coordinate.
    pub fn texture(&self, row: usize, col: usize) -> f64 {
        self.texture[row * self.config.width + col]
    }

    /// Observation noise standard deviation at a column.
    pub fn noise_std(&self, col: usize) -> f64 {
        let c = &self.config;
        c.sigma_left + (c.sigma_right - c.sigma_left) * col as f64 / (c.width - 1) as f64
    }

    /// `A(row) = logistic(slope · ỹ) − 0.5` with `ỹ` running from +3 (top) to −3 (bottom).
    pub fn affordance(&self, row: usize) -> Result<f64, EnvError> {
        let h = self.config.height;
        if row >= h {
            return Err(EnvError::RowOutOfRange { row, height: h });
        }
        Ok(self.affordance_unchecked(row))
    }

    fn affordance_unchecked(&self, row: usize) -> f64 {
        let mid = (self.config.height - 1) as f64 / 2.0;
        let y = (mid - row as f64) * (3.0 / mid);
        logistic(self.config.affordance_slope * y) - 0.5
    }

    /// One allostatic update of the latent viability, using the post-move row.
    pub fn step_body(&self, u: f64, moved: bool, row: usize) -> f64 {
        let c = &self.config;
        let move_cost = if moved { c.c_move } else { 0.0 };
        c.rho_aff * u - c.c_met - move_cost + c.lambda_aff * self.affordance_unchecked(row)
    }

    fn target_cell(&self, row: usize, col: usize, action: Action) -> (usize, usize) {
        let (dr, dc) = action.delta();
        let r = row as isize + dr;
        let c = col as isize + dc;
        if r < 0 || c < 0 || r >= self.config.height as isize || c >= self.config.width as isize {
            (row, col)
        } else {
            (r as usize, c as usize)
        }
    }

    pub fn reset(&self, rng: StreamRng) -> EnvState {
        let (row, col) = self.center();
        EnvState {
            row,
            col,
            u: 0.0,
            t: 0,
            rng,
            shocks: Vec::new(),
        }
    }

    /// Starts a new episode at the centre with `u = 0`, keeping the noise stream.
    pub fn restart(&self, state: &mut EnvState) {
        let (row, col) = self.center();
        state.row = row;
        state.col = col;
        state.u = 0.0;
        state.t = 0;
        state.shocks.clear();
    }

    fn gaussian(&self, rng: &mut StreamRng, std: f64) -> f64 {
        // always draw so the stream position never depends on the noise switch
        let z: f64 = rng.sample(StandardNormal);
        if self.noise {
            z * std
        } else {
            0.0
        }
    }

    pub fn observe(&self, state: &mut EnvState) -> Observation {
        let (h, w) = (self.config.height as isize, self.config.width as isize);
        let std = self.noise_std(state.col);
        let mut x = [0.0; OBS_DIM];
        for (k, (dr, dc)) in MOORE.iter().enumerate() {
            let r = state.row as isize + dr;
            let c = state.col as isize + dc;
            let base = if r < 0 || c < 0 || r >= h || c >= w {
                0.0
            } else {
                self.texture(r as usize, c as usize)
            };
            x[k] = base + self.gaussian(&mut state.rng, std);
        }
        let mut silhouette = [0.0; SILHOUETTE_DIM];
        for (k, a) in [Action::Up, Action::Down, Action::Left, Action::Right]
            .iter()
            .enumerate()
        {
            let (r, _) = self.target_cell(state.row, state.col, *a);
            silhouette[k] =
                self.affordance_unchecked(r) + self.gaussian(&mut state.rng, self.config.sigma_sil);
        }
        Observation {
            x,
            b_tilde: logistic(state.u),
            silhouette,
        }
    }

    pub fn step(&self, state: &mut EnvState, action: Action) -> StepOutcome {
        let (r, c) = self.target_cell(state.row, state.col, action);
        let moved = (r, c) != (state.row, state.col);
        state.row = r;
        state.col = c;
        state.u = self.step_body(state.u, moved, r);
        state.t += 1;
        StepOutcome {
            observation: self.observe(state),
            moved,
        }
    }

    /// Latent viability after sustaining `action` for `k` noise-free steps.
    fn rollout_u(&self, state: &EnvState, action: Action, k: usize) -> f64 {
        let (mut row, mut col, mut u) = (state.row, state.col, state.u);
        for _ in 0..k {
            let (r, c) = self.target_cell(row, col, action);
            let moved = (r, c) != (row, col);
            row = r;
            col = c;
            u = self.step_body(u, moved, row);
        }
        u
    }

    /// `u_{t+k} − u_t` under `k` repetitions of `action`; `state` is untouched.
    pub fn counterfactual_tendency(&self, state: &EnvState, action: Action, k: usize) -> f64 {
        self.rollout_u(state, action, k) - state.u
    }

    /// Readout `logistic(u_{t+1})` that one step of `action` would produce.
    pub fn counterfactual_readout(&self, state: &EnvState, action: Action) -> f64 {
        logistic(self.rollout_u(state, action, 1))
    }

    /// Tendency and next-readout targets for all five actions.
    pub fn body_targets(&self, state: &EnvState) -> ([f64; N_ACTIONS], [f64; N_ACTIONS]) {
        let k = self.config.horizon;
        let mut eta = [0.0; N_ACTIONS];
        let mut b = [0.0; N_ACTIONS];
        for a in Action::ALL {
            eta[a.index()] = self.counterfactual_tendency(state, a, k);
            b[a.index()] = self.counterfactual_readout(state, a);
        }
        (eta, b)
    }

    pub fn inject_shock(&self, state: &mut EnvState, delta: f64) {
        state.u += delta;
        state.shocks.push(ShockEvent { t: state.t, delta });
    }

    pub fn zone_of(&self, row: usize, col: usize) -> Zone {
        Zone {
            band: (row * 3 / self.config.height).min(2),
            side: (col * 3 / self.config.width).min(2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStreams, Stream};

    fn fresh(world: &GridWorld) -> EnvState {
        world.reset(RngStreams::new(0, 0).stream(Stream::EnvNoise))
    }

    #[test]
    fn affordance_midpoint_and_mirror() {
        let w = GridWorld::standard();
        assert_eq!(w.affordance(7).unwrap(), 0.0);
        let top = w.affordance(0).unwrap();
        assert!((top - (logistic(4.8) - 0.5)).abs() < 1e-15);
        assert!((top - 0.4918).abs() < 1e-4);
        assert_eq!(w.affordance(14).unwrap(), -top);
        assert!(matches!(
            w.affordance(15),
            Err(EnvError::RowOutOfRange { .. })
        ));
    }

    #[test]
    fn noise_std_endpoints() {
        let w = GridWorld::standard();
        assert!((w.noise_std(0) - 0.40).abs() < 1e-15);
        assert!((w.noise_std(14) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zones() {
        let w = GridWorld::standard();
        assert_eq!(w.zone_of(0, 14).label(), "top-right");
        assert_eq!(w.zone_of(7, 7).label(), "middle-middle");
        assert_eq!(w.zone_of(14, 2).label(), "bottom-left");
    }

    #[test]
    fn stay_at_center_drains() {
        let w = GridWorld::standard();
        let mut s = fresh(&w);
        let out = w.step(&mut s, Action::Stay);
        assert!(!out.moved);
        assert_eq!((s.row, s.col), (7, 7));
        assert!((s.u + 0.002).abs() < 1e-15);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn wall_clamps_to_stay() {
        let w = GridWorld::standard();
        let mut s = fresh(&w);
        s.row = 0;
        let out = w.step(&mut s, Action::Up);
        assert!(!out.moved);
        assert_eq!(s.row, 0);
    }

    #[test]
    fn readout_is_logistic_of_u() {
        let w = GridWorld::standard();
        let mut s = fresh(&w);
        assert_eq!(w.observe(&mut s).b_tilde, 0.5);
        s.u = -1.3;
        assert_eq!(w.observe(&mut s).b_tilde, logistic(-1.3));
    }

    #[test]
    fn noiseless_observation_is_texture() {
        let w = GridWorld::standard().noiseless();
        let mut s = fresh(&w);
        s.row = 3;
        s.col = 14;
        let o = w.observe(&mut s);
        let e = 13.0 / 14.0;
        let expect_x = [e, 1.0, 0.0, e, 0.0, e, 1.0, 0.0];
        for (a, b) in o.x.iter().zip(expect_x) {
            assert!((a - b).abs() < 1e-15);
        }
        let expect_sil = [
            w.affordance(2).unwrap(),
            w.affordance(4).unwrap(),
            w.affordance(3).unwrap(),
            w.affordance(3).unwrap(),
        ];
        assert_eq!(o.silhouette, expect_sil);
    }

    #[test]
    fn shock_adds_and_logs() {
        let w = GridWorld::standard();
        let mut s = fresh(&w);
        w.inject_shock(&mut s, -0.08);
        assert!((s.u + 0.08).abs() < 1e-15);
        assert_eq!(s.shocks.len(), 1);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = EnvConfig {
            sigma_left: 0.01,
            ..EnvConfig::default()
        };
        assert!(GridWorld::new(cfg).is_err());
    }
}
