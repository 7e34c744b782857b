//! Environment oracles shared by the environment tests and the acceptance run.

use somagrid::environment::{Action, EnvState, GridWorld};
use somagrid::rng::{RngStreams, Stream};

// Independent restatement of the body dynamics with the default constants.
pub const RHO: f64 = 0.995;
pub const C_MET: f64 = 0.002;
pub const C_MOVE: f64 = 0.001;
pub const LAMBDA: f64 = 0.05;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn a_oracle(row: usize) -> f64 {
    let y = (7.0 - row as f64) * 3.0 / 7.0;
    sigmoid(1.6 * y) - 0.5
}

pub fn u_next(u: f64, moved: bool, row: usize) -> f64 {
    RHO * u - C_MET - if moved { C_MOVE } else { 0.0 } + LAMBDA * a_oracle(row)
}

pub fn world() -> GridWorld {
    GridWorld::standard()
}

pub fn fresh(seed: u64) -> EnvState {
    world().reset(RngStreams::new(0, seed).stream(Stream::EnvNoise))
}

pub fn single_step_examples() {
    let w = world();
    assert!((w.step_body(0.0, false, 7) - -0.002).abs() < 1e-12);
    assert!((w.step_body(1.0, false, 0) - (0.995 - 0.002 + 0.05 * a_oracle(0))).abs() < 1e-12);
    // the rounded value quoted for the top row
    assert!((w.step_body(1.0, false, 0) - 1.01759).abs() < 1e-5);
    for row in 0..15 {
        for &u in &[-3.0, -0.4, 0.0, 0.7, 4.0] {
            for moved in [false, true] {
                assert!((w.step_body(u, moved, row) - u_next(u, moved, row)).abs() < 1e-12);
            }
        }
        assert!((w.affordance(row).unwrap() - a_oracle(row)).abs() < 1e-12);
    }
    assert!(w.affordance(15).is_err());
}

pub fn top_row_stay_reaches_fixed_point() {
    let u_star = (-C_MET + LAMBDA * a_oracle(0)) / (1.0 - RHO);
    assert!((u_star - 4.518).abs() < 1e-3);
    let w = world();
    let mut s = fresh(3);
    s.row = 0;
    let mut prev = s.u;
    for _ in 0..2000 {
        w.step(&mut s, Action::Stay);
        assert!(s.u > prev && s.u < u_star, "monotone from below");
        prev = s.u;
    }
    assert!((s.u - u_star).abs() < 1e-3, "u after 2000 steps {}", s.u);
}

/// Empirical std of the observation residuals at one column.
pub fn residual_std(col: usize, samples: usize, seed: u64) -> f64 {
    let w = world();
    let mut s = fresh(seed);
    s.col = col;
    let mut vals = Vec::with_capacity(samples);
    while vals.len() < samples {
        let obs = w.observe(&mut s);
        let clean = w.noiseless().observe(&mut s.clone());
        vals.extend(obs.x.iter().zip(&clean.x).map(|(a, b)| a - b));
    }
    vals.truncate(samples);
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn noise_gradient_bounds() {
    let left = residual_std(0, 100_000, 4);
    let right = residual_std(14, 100_000, 5);
    assert!((0.36..=0.44).contains(&left), "column 0 std {left}");
    assert!((0.045..=0.055).contains(&right), "column 14 std {right}");
}

