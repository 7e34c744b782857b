use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somagrid::agent::AgentParams;
use somagrid::assays::rollout::{identical_prefix, metric_spectrum};
use somagrid::assays::stats::PMethod;
use somagrid::assays::{
    mannwhitney, occupancy_assay, pca_displacement, readiness_assay, residue_correlation,
    same_state_probe, shock_magnitude, shock_rollout, spearman, Calibration, Condition, ProbeSet,
};
use somagrid::config::ExperimentConfig;
use somagrid::environment::{Zone, N_ACTIONS, N_ZONES};
use somagrid::trainer::{Cohort, EpisodeLog, LossBreakdown};
use somagrid::Linear;

fn log(episode: usize, occupancy: [f64; N_ZONES], mean_q: [f64; N_ACTIONS]) -> EpisodeLog {
    EpisodeLog {
        episode,
        warmup: false,
        losses: LossBreakdown::default(),
        occupancy,
        mean_q,
        mean_pi: [0.2; N_ACTIONS],
        mean_alpha: 0.1,
        mean_abs_dg: 0.0,
        mean_abs_dz: 0.0,
        final_u: 0.0,
    }
}

fn params(seed: u64) -> (ExperimentConfig, AgentParams) {
    let cfg = ExperimentConfig::default();
    let p = AgentParams::init(&cfg.agent, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (cfg, p)
}

#[test]
fn occupancy_of_a_parked_agent() {
    let mut top = [0.0; N_ZONES];
    top[Zone::TOP_RIGHT.index()] = 1.0;
    let logs: Vec<EpisodeLog> = (0..80).map(|e| log(e, top, [0.2; N_ACTIONS])).collect();
    let row = occupancy_assay(&logs, 50);
    assert_eq!(row.zones, top);
    assert_eq!(row.episodes_used, 50);
    assert!(!row.short);
    let row = occupancy_assay(&logs[..10], 50);
    assert!(row.short && row.episodes_used == 10);
}

#[test]
fn occupancy_averages_only_the_window() {
    let uniform = [1.0 / 9.0; N_ZONES];
    let mut bottom = [0.0; N_ZONES];
    bottom[8] = 1.0;
    let mut logs: Vec<EpisodeLog> = (0..30).map(|e| log(e, bottom, [0.2; N_ACTIONS])).collect();
    logs.extend((30..80).map(|e| log(e, uniform, [0.2; N_ACTIONS])));
    let row = occupancy_assay(&logs, 50);
    for z in row.zones {
        assert!((z - 1.0 / 9.0).abs() < 1e-12);
    }
    assert!((row.zones.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn readiness_of_a_uniform_target() {
    let logs: Vec<EpisodeLog> = (0..60).map(|e| log(e, [1.0 / 9.0; N_ZONES], [0.2; N_ACTIONS])).collect();
    let q = readiness_assay(&logs, 50);
    for v in q {
        assert!((v - 0.2).abs() < 1e-12);
    }
}

#[test]
fn calibration_of_the_oracle_and_of_a_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth: Vec<f64> = (0..500).map(|_| rng.random_range(-0.1..0.1)).collect();
    let c = Calibration::from_pairs(truth.clone(), truth.clone());
    assert!((c.r.unwrap() - 1.0).abs() < 1e-12);
    let c = Calibration::from_pairs(vec![0.3; truth.len()], truth);
    assert_eq!(c.r, None);
}

#[test]
fn shock_rollouts_share_a_prefix_and_inject_exactly() {
    let (cfg, p) = params(2);
    for cohort in Cohort::ALL {
        let control = shock_rollout(&p, &cfg, cohort, 3, Condition::Control).unwrap();
        let shock = shock_rollout(&p, &cfg, cohort, 3, Condition::Shock).unwrap();
        assert_eq!(control.steps.len(), 160);
        assert!(identical_prefix(&control, &shock) >= 60, "{cohort}");
        assert_eq!(control.total_injected, 0.0);
        assert_eq!(shock.total_injected, -1.6);
        // before the window the latent is untouched; inside it the gap widens
        assert_eq!(control.steps[59].u, shock.steps[59].u);
        assert!(shock.steps[60].u < control.steps[60].u);
        assert!(shock_magnitude(&control, &shock, cfg.assay.recovery()) < 0.0);
        // repeat is bit-identical
        assert_eq!(shock, shock_rollout(&p, &cfg, cohort, 3, Condition::Shock).unwrap());
    }
}

#[test]
fn displacement_null_and_unit_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cloud: Vec<Vec<f64>> = (0..40).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let d = pca_displacement(&cloud, &cloud).unwrap();
    assert!(d.value.abs() < 1e-12);

    let origin = vec![vec![0.0; 8]; 20];
    let mut e1 = vec![0.0; 8];
    e1[0] = 1.0;
    let shifted = vec![e1; 20];
    let d = pca_displacement(&origin, &shifted).unwrap();
    assert!((d.value - 1.0).abs() < 1e-12, "{}", d.value);

    let flat = pca_displacement(&origin, &origin).unwrap();
    assert!(flat.zero_variance && flat.value == 0.0);
}

#[test]
fn probe_set_is_fixed_and_cohort_free() {
    let cfg = ExperimentConfig::default();
    let a = ProbeSet::build(&cfg);
    let b = ProbeSet::build(&cfg);
    assert_eq!(a.inputs.len(), cfg.assay.probe_count);
    assert_eq!(a.hash(), b.hash());
    let mut other = cfg.clone();
    other.run.master_seed += 1;
    assert_ne!(ProbeSet::build(&other).hash(), a.hash());
}

#[test]
fn same_state_probe_cases() {
    let (cfg, p) = params(5);
    let probes = ProbeSet::build(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();

    let same = same_state_probe(&p, &cfg, &g, &g, &probes).unwrap();
    assert_eq!((same.state_distance, same.spectrum_distance), (0.0, 0.0));

    let ab = same_state_probe(&p, &cfg, &g, &h, &probes).unwrap();
    let ba = same_state_probe(&p, &cfg, &h, &g, &probes).unwrap();
    assert!(ab.state_distance > 0.0 && ab.spectrum_distance > 0.0);
    assert!((ab.state_distance - ba.state_distance).abs() < 1e-12);
    assert!((ab.spectrum_distance - ba.spectrum_distance).abs() < 1e-12);

    // a metric that ignores g has the same spectrum everywhere
    let mut flat = p.clone();
    flat.metric_net = Linear::zeros(flat.metric_net.out_dim(), flat.metric_net.in_dim());
    let d = same_state_probe(&flat, &cfg, &g, &h, &probes).unwrap();
    assert_eq!(d.spectrum_distance, 0.0);
    let spec = metric_spectrum(&flat, &cfg, &g).unwrap();
    assert!(spec.iter().all(|v| *v >= cfg.agent.metric_epsilon - 1e-12));
}

#[test]
fn spearman_on_monotone_pairs() {
    let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let up: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
    let down: Vec<f64> = x.iter().map(|v| (-v).exp()).collect();
    assert_eq!(spearman(&x, &up), Some(1.0));
    assert_eq!(spearman(&x, &down), Some(-1.0));
    let c = residue_correlation(&x, &up).unwrap();
    assert_eq!(c.method, PMethod::Normal);
    assert!(c.p < 1e-6);
    assert_eq!(spearman(&x, &vec![1.0; 30]), None);
}

#[test]
fn spearman_null_stays_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let trials = 10_000;
    let mut small = 0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        if spearman(&x, &y).unwrap().abs() < 0.5 {
            small += 1;
        }
    }
    assert!(small as f64 >= 0.99 * trials as f64, "{small}");
}

#[test]
fn rank_sum_cases() {
    let a = [0.3, 0.1, 0.7, 0.2];
    let same = mannwhitney(&a, &a);
    assert_eq!(same.p, 1.0);
    assert_eq!(same.u, 8.0);

    let low: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let high: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
    let r = mannwhitney(&low, &high);
    assert_eq!(r.u, 0.0);
    assert!(r.p < 0.001);
    let r = mannwhitney(&high, &low);
    assert_eq!(r.u, 100.0);
    assert!(r.p < 0.001);

    let r = mannwhitney(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
    assert_eq!(r.method, PMethod::Exact);
    assert_eq!(r.u, 0.0);
    assert!((r.p - 0.1).abs() < 1e-12, "{}", r.p);
}

#[test]
fn rank_sum_normal_branch_with_ties() {
    let a = [1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 5.0, 6.0];
    let b = [2.0, 3.0, 3.0, 5.0, 6.0, 7.0, 7.0, 8.0];
    let r = mannwhitney(&a, &b);
    assert_eq!(r.method, PMethod::Normal);
    // U by direct pair counting
    let mut u = 0.0;
    for x in a {
        for y in b {
            u += if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
        }
    }
    assert_eq!(r.u, u);
    assert!(r.p > 0.0 && r.p < 1.0);
}

proptest! {
    #[test]
    fn rank_sum_u_complements(a in prop::collection::vec(-10.0..10.0f64, 1..12), b in prop::collection::vec(-10.0..10.0f64, 1..12)) {
        let ab = mannwhitney(&a, &b);
        let ba = mannwhitney(&b, &a);
        prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
        prop_assert!((ab.p - ba.p).abs() < 1e-9);
        prop_assert!(ab.p > 0.0 && ab.p <= 1.0);
    }

    #[test]
    fn spearman_is_rank_invariant(x in prop::collection::vec(-5.0..5.0f64, 3..20), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = x.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let squashed: Vec<f64> = x.iter().map(|v| v.tanh() * 3.0 + 1.0).collect();
        prop_assert_eq!(spearman(&x, &y).map(|r| (r * 1e9).round()), spearman(&squashed, &y).map(|r| (r * 1e9).round()));
        if let Some(r) = spearman(&x, &y) {
            prop_assert!(r.abs() <= 1.0 + 1e-12);
        }
    }
}
