use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somagrid::agent::ParamGroup;
use somagrid::perspective::{
    decay_across_episode, firewall_check, AlphaMode, ErrorNormalizer, PerspectiveConfig,
    PerspectiveNet, PerspectiveState, RoutingSwitch,
};
use somagrid::{Tape, Tensor};

const ON: RoutingSwitch = RoutingSwitch { body_to_g: true };
const OFF: RoutingSwitch = RoutingSwitch { body_to_g: false };
const D_Z: usize = 12;
const D_G: usize = 8;

fn net(seed: u64) -> PerspectiveNet {
    PerspectiveNet::init(D_Z, D_G, &PerspectiveConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// One update with plain inputs; returns (g', α, candidate).
fn update(
    n: &PerspectiveNet,
    g: &[f64],
    z: &[f64],
    eo: f64,
    eb: f64,
    routing: RoutingSwitch,
    mode: AlphaMode,
) -> (Vec<f64>, f64, Vec<f64>) {
    let mut t = Tape::new();
    let v = n.bind(&mut t, false);
    let gv = t.constant(Tensor::from_slice(g));
    let zv = t.constant(Tensor::from_slice(z));
    let u = v.update_g(&mut t, gv, zv, eo, eb, routing, mode).unwrap();
    (
        t.value(u.g).data().to_vec(),
        t.value(u.alpha).data()[0],
        t.value(u.candidate).data().to_vec(),
    )
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn forced_rates_are_exact_limits() {
    let n = net(1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (g, z) = (rand_vec(&mut rng, D_G), rand_vec(&mut rng, D_Z));
        let (g0, _, _) = update(&n, &g, &z, 0.4, 0.9, ON, AlphaMode::Fixed(0.0));
        assert_eq!(g0, g);
        let (g1, _, cand) = update(&n, &g, &z, 0.4, 0.9, ON, AlphaMode::Fixed(1.0));
        assert_eq!(g1, cand);
    }
}

#[test]
fn alpha_starts_slow() {
    // with zero error inputs the rate is the logistic of the bias, shifted by −2
    let n = net(2);
    let b = n.alpha_net.b.data()[0];
    let (_, alpha, _) = update(&n, &[0.0; D_G], &[0.0; D_Z], 0.0, 0.0, ON, AlphaMode::Learned);
    assert!((alpha - 1.0 / (1.0 + (-b).exp())).abs() < 1e-15);
    assert!(alpha < 0.2, "{alpha}");
}

#[test]
fn routing_off_ignores_body_error() {
    let n = net(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (g, z) = (rand_vec(&mut rng, D_G), rand_vec(&mut rng, D_Z));
        let a = update(&n, &g, &z, 0.3, 0.0, OFF, AlphaMode::Learned);
        let b = update(&n, &g, &z, 0.3, rng.random_range(0.0..10.0), OFF, AlphaMode::Learned);
        assert_eq!(a, b);
        let c = update(&n, &g, &z, 0.3, 5.0, ON, AlphaMode::Learned);
        assert_ne!(a.0, c.0, "routing on must see the body error");
    }
}

#[test]
fn ablated_trajectory_is_blind_to_the_body_error_channel() {
    // whole-sequence version, including the running error statistics
    let n = net(4);
    let cfg = PerspectiveConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let zs: Vec<Vec<f64>> = (0..200).map(|_| rand_vec(&mut rng, D_Z)).collect();
    let eo: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..0.1)).collect();
    let run = |eb: &dyn Fn(usize) -> f64| {
        let mut st = PerspectiveState::new(D_G);
        let mut traj = Vec::new();
        for (t, z) in zs.iter().enumerate() {
            let (fo, fb) = st.normalizer.features(&cfg, eo[t], eb(t), OFF);
            let (g, _, _) = update(&n, &st.g, z, fo, fb, OFF, AlphaMode::Learned);
            st.g = g.clone();
            traj.push(g);
        }
        (traj, st)
    };
    let (a, sa) = run(&|_| 0.01);
    let (b, sb) = run(&|t| if (60..80).contains(&t) { 3.0 } else { 0.01 * t as f64 });
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}

#[test]
fn decay_examples() {
    let mut g = vec![0.0; 4];
    decay_across_episode(&mut g, 0.99);
    assert_eq!(g, vec![0.0; 4]);
    let mut g = vec![1.0; 4];
    decay_across_episode(&mut g, 0.99);
    assert_eq!(g, vec![0.99; 4]);
    let mut g = vec![1.0];
    for _ in 0..180 {
        decay_across_episode(&mut g, 0.99);
    }
    assert!((g[0] - 0.163_808).abs() < 1e-6, "{}", g[0]);
}

#[test]
fn reset_forgets_history() {
    let cfg = PerspectiveConfig::default();
    let mut a = PerspectiveState::new(D_G);
    a.g = vec![0.7; D_G];
    a.normalizer.features(&cfg, 0.3, 0.2, ON);
    let mut b = PerspectiveState::new(D_G);
    b.g = vec![-0.1; D_G];
    a.reset_for_rollout();
    b.reset_for_rollout();
    assert_eq!(a, b);
    assert_eq!(a.g, vec![0.0; D_G]);
}

#[test]
fn normalized_error_feature() {
    let cfg = PerspectiveConfig::default();
    let mut n = ErrorNormalizer::default();
    // the first error seeds its own running mean
    let (fo, fb) = n.features(&cfg, 0.2, 0.04, ON);
    assert!((fo - 2f64.ln()).abs() < 1e-15 && (fb - 2f64.ln()).abs() < 1e-15);
    // then ln(1 + e/ē) against the mean before this step; ē ← 0.95 ē + 0.05 e
    let (fo, _) = n.features(&cfg, 0.4, 0.04, ON);
    assert!((fo - (1.0 + 0.4 / 0.2f64).ln()).abs() < 1e-15);
    let mean: f64 = 0.95 * 0.2 + 0.05 * 0.4;
    let (fo, _) = n.features(&cfg, 0.1, 0.04, ON);
    assert!((fo - (1.0 + 0.1 / mean).ln()).abs() < 1e-15);
    // a gated body error is exactly zero
    assert_eq!(n.features(&cfg, 0.1, 9.0, OFF).1, 0.0);
    let raw = PerspectiveConfig { normalize_errors: false, ..cfg };
    assert_eq!(ErrorNormalizer::default().features(&raw, 0.3, 0.2, ON), (0.3, 0.2));
}

#[test]
fn firewall_check_contract() {
    let zero = Some(Tensor::zeros(&[3]));
    let live = Some(Tensor::vector(vec![0.0, 1e-30, 0.0]));
    let grads = |g: Option<Tensor>| {
        vec![
            ("policy_head.w".to_string(), ParamGroup::PolicyHead, live.clone()),
            ("perspective.gru.w_cand".to_string(), ParamGroup::Perspective, g),
            ("metric_net.b".to_string(), ParamGroup::Metric, None),
        ]
    };
    for loss in ["actor", "conative"] {
        assert!(firewall_check(loss, &grads(zero.clone())).is_ok());
        assert!(firewall_check(loss, &grads(None)).is_ok());
        let err = firewall_check(loss, &grads(live.clone())).unwrap_err();
        assert_eq!(err.param, "perspective.gru.w_cand");
    }
    // the predictive losses are the legitimate path
    assert!(firewall_check("obs_pred", &grads(live.clone())).is_ok());
    assert!(firewall_check("body", &grads(live.clone())).is_ok());
}

#[test]
fn observation_loss_trains_the_perspective() {
    let n = net(5);
    let mut t = Tape::new();
    let v = n.bind(&mut t, true);
    let g = t.constant(Tensor::vector(vec![0.2; D_G]));
    let z = t.constant(Tensor::vector(vec![0.3; D_Z]));
    let u = v.update_g(&mut t, g, z, 0.5, 0.5, ON, AlphaMode::Learned).unwrap();
    let sq = t.square(u.g);
    let loss = t.sum(sq);
    t.backward(loss).unwrap();
    for var in v.vars() {
        assert!(t.grad(var).is_some_and(|g| g.data().iter().any(|&x| x != 0.0)));
    }
}

proptest! {
    #[test]
    fn g_stays_bounded_and_alpha_open(seed in any::<u64>(), steps in 1usize..60, eo in 0.0..5.0f64, eb in 0.0..5.0f64) {
        let n = net(seed % 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = rand_vec(&mut rng, D_G);
        for _ in 0..steps {
            let z: Vec<f64> = (0..D_Z).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (g2, alpha, cand) = update(&n, &g, &z, eo, eb, ON, AlphaMode::Learned);
            prop_assert!(alpha > 0.0 && alpha < 1.0);
            prop_assert!(cand.iter().chain(&g2).all(|v| v.is_finite() && v.abs() <= 1.0));
            g = g2;
        }
    }
}
