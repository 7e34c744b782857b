use proptest::prelude::*;
use somagrid::environment::{Action, EnvConfig, GridWorld, Zone, OBS_DIM};

mod support;

use support::env_oracle::{self, a_oracle, fresh, residual_std, sigmoid, u_next, world};

#[test]
fn single_step_examples() {
    env_oracle::single_step_examples();
}

#[test]
fn top_row_stay_reaches_fixed_point() {
    env_oracle::top_row_stay_reaches_fixed_point();
}

#[test]
fn noise_gradient_bounds() {
    env_oracle::noise_gradient_bounds();
}

#[test]
fn stay_and_up_from_centre() {
    let w = world();
    let mut s = fresh(1);
    let out = w.step(&mut s, Action::Stay);
    assert_eq!((s.row, s.col, out.moved), (7, 7, false));
    assert!((s.u - -0.002).abs() < 1e-12);
    assert!((out.observation.b_tilde - sigmoid(-0.002)).abs() < 1e-12);

    let mut s = fresh(1);
    let out = w.step(&mut s, Action::Up);
    assert_eq!((s.row, s.col, out.moved), (6, 7, true));
    assert!((s.u - (-0.003 + 0.05 * a_oracle(6))).abs() < 1e-12);
}

#[test]
fn tendency_matches_brute_force_rollout() {
    let w = world();
    let s = fresh(2);
    assert!((w.counterfactual_tendency(&s, Action::Stay, 1) - -0.002).abs() < 1e-12);
    for a in Action::ALL {
        let (dr, dc) = a.delta();
        let (mut r, mut c, mut u) = (7isize, 7isize, 0.0);
        for _ in 0..4 {
            let (nr, nc) = (r + dr, c + dc);
            let inside = (0..15).contains(&nr) && (0..15).contains(&nc);
            let moved = inside && (nr, nc) != (r, c);
            if inside {
                (r, c) = (nr, nc);
            }
            u = u_next(u, moved, r as usize);
        }
        assert!((w.counterfactual_tendency(&s, a, 4) - u).abs() < 1e-12, "{a:?}");
    }
}

#[test]
fn noise_decreases_across_columns() {
    let stds: Vec<f64> = (0..15).map(|c| residual_std(c, 100_000 / 15, 10 + c as u64)).collect();
    assert!(stds.windows(2).all(|p| p[0] > p[1]), "{stds:?}");
    for (c, s) in stds.iter().enumerate() {
        assert!((s - world().noise_std(c)).abs() < 0.02, "col {c}: {s}");
    }
}

#[test]
fn noiseless_observation_is_texture_and_silhouette() {
    let w = world().noiseless();
    let mut s = fresh(6);
    s.row = 0;
    s.col = 3;
    let o = w.observe(&mut s);
    let moore = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    for (k, (dr, dc)) in moore.iter().enumerate() {
        let (r, c) = (0 + dr, 3 + dc);
        let want = if r < 0 { 0.0 } else { c as f64 / 14.0 };
        assert_eq!(o.x[k], want);
    }
    // up is a wall: the silhouette reports the current row
    let want = [a_oracle(0), a_oracle(1), a_oracle(0), a_oracle(0)];
    for (got, w) in o.silhouette.iter().zip(want) {
        assert!((got - w).abs() < 1e-15);
    }
}

#[test]
fn twenty_shocks_total_exactly() {
    let w = world();
    let mut s = fresh(7);
    for t in 0..80 {
        if t >= 60 {
            w.inject_shock(&mut s, -0.08);
        }
        w.step(&mut s, Action::Stay);
    }
    assert_eq!(s.shocks.len(), 20);
    assert_eq!(s.total_injected(), -1.6);
    assert!(s.shocks.iter().all(|e| (60..80).contains(&e.t)));
}

#[test]
fn zones_tile_the_grid() {
    let w = world();
    let mut counts = [0usize; 9];
    for r in 0..15 {
        for c in 0..15 {
            counts[w.zone_of(r, c).index()] += 1;
        }
    }
    assert_eq!(counts, [25; 9]);
    assert_eq!(w.zone_of(0, 14), Zone::TOP_RIGHT);
    assert_eq!(w.zone_of(4, 10), Zone::TOP_RIGHT);
    assert_ne!(w.zone_of(5, 10), Zone::TOP_RIGHT);
    assert!(w.zone_of(14, 0).is_bottom());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        EnvConfig { width: 2, ..EnvConfig::default() },
        EnvConfig { sigma_left: 0.01, ..EnvConfig::default() },
        EnvConfig { horizon: 0, ..EnvConfig::default() },
        EnvConfig { affordance_slope: 0.0, ..EnvConfig::default() },
    ];
    for c in bad {
        assert!(GridWorld::new(c).is_err());
    }
}

#[test]
fn same_stream_same_trajectory() {
    let w = world();
    let (mut a, mut b) = (fresh(8), fresh(8));
    let mut c = fresh(9);
    let mut differs = false;
    for t in 0..300 {
        let act = Action::ALL[t % 5];
        let (oa, ob, oc) = (w.step(&mut a, act), w.step(&mut b, act), w.step(&mut c, act));
        assert_eq!(oa, ob);
        differs |= oa.observation.x != oc.observation.x;
    }
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert!(differs);
}

proptest! {
    #[test]
    fn random_walks_respect_the_dynamics(actions in prop::collection::vec(0usize..5, 1..400), seed in any::<u64>()) {
        let w = world();
        let mut s = fresh(seed);
        for i in actions {
            let a = Action::from_index(i).unwrap();
            let before = s.clone();
            let tendency = w.counterfactual_tendency(&s, a, 1);
            let readout = w.counterfactual_readout(&s, a);
            prop_assert_eq!(&before, &s, "oracle must not mutate state");
            let out = w.step(&mut s, a);
            prop_assert!(s.row < 15 && s.col < 15);
            let moved = (s.row, s.col) != (before.row, before.col);
            prop_assert_eq!(out.moved, moved);
            prop_assert!(s.u == u_next(before.u, moved, s.row) || (s.u - u_next(before.u, moved, s.row)).abs() < 1e-12);
            prop_assert!((s.u - before.u - tendency).abs() < 1e-12);
            prop_assert!((out.observation.b_tilde - readout).abs() < 1e-12);
            prop_assert!(out.observation.b_tilde > 0.0 && out.observation.b_tilde < 1.0);
            prop_assert_eq!(out.observation.x.len(), OBS_DIM);
            prop_assert!(out.observation.x.iter().chain(&out.observation.silhouette).all(|v| v.is_finite()));
            prop_assert_eq!(s.t, before.t + 1);
        }
    }
}
