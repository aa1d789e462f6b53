use mireg_agent::agent::normal_tensor;
use mireg_agent::{
    random_baseline, target_update, train, write_curve_csv, Agent, EnvKind, MarginalPolicyModel,
    MiracleConfig, PriorMode, ReplayBuffer, Transition,
};
use mireg_nn::{Graph, Mlp, SquashedGaussian, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short_config(env: EnvKind, mode: PriorMode, steps: usize) -> MiracleConfig {
    MiracleConfig {
        prior_mode: mode,
        steps,
        warmup_steps: 200,
        hidden: vec![8, 8],
        marginal_hidden: vec![8],
        minibatch: 16,
        ..MiracleConfig::desk(env)
    }
}

proptest! {
    #[test]
    fn replay_is_exact_fifo(cap in 1usize..50, extra in 0usize..80) {
        let mut b = ReplayBuffer::new(cap);
        for i in 0..cap + extra {
            b.push(i);
            prop_assert!(b.len() <= cap);
        }
        let kept: Vec<usize> = b.iter().copied().collect();
        prop_assert_eq!(kept, (extra..cap + extra).collect::<Vec<_>>());
    }
}

#[test]
fn target_update_copies_at_unit_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let src = Mlp::new(&[3, 5, 1], &mut rng).unwrap();
    let mut tgt = Mlp::new(&[3, 5, 1], &mut rng).unwrap();
    target_update(&mut tgt, &src, 1.0);
    assert_eq!(tgt, src);
}

#[test]
fn target_converges_geometrically() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let src = Mlp::new(&[2, 4, 1], &mut rng).unwrap();
    let mut tgt = Mlp::zeros(&[2, 4, 1]).unwrap();
    for k in 1..=300 {
        target_update(&mut tgt, &src, 0.01);
        let ratio = 0.99f64.powi(k);
        for (t, s) in tgt.params().iter().zip(src.params()) {
            for (x, y) in t.data().iter().zip(s.data()) {
                assert!((y - x - ratio * y).abs() < 1e-12);
            }
        }
    }
}

fn filled_agent(cfg: &MiracleConfig) -> Agent {
    let mut env = cfg.env.make(cfg.seed);
    let mut agent = Agent::new(cfg, env.state_dim(), env.action_dim()).unwrap();
    let mut s = env.reset();
    for step in 0..cfg.warmup_steps {
        let a = agent.select_action(&s, step).unwrap();
        let out = env.step(&a);
        agent.observe(Transition {
            state: std::mem::replace(&mut s, out.next_state.clone()),
            action: a,
            reward: out.reward,
            next_state: out.next_state,
            done: out.done,
        });
        if out.done {
            s = env.reset();
        }
    }
    agent
}

#[test]
fn target_stays_in_convex_hull_of_value_history() {
    let cfg = short_config(EnvKind::PointMass, PriorMode::LearnedMarginal, 1);
    let mut agent = filled_agent(&cfg);
    let flat = |m: &Mlp| -> Vec<f64> { m.params().iter().flat_map(|t| t.data().to_vec()).collect() };
    let mut lo = flat(&agent.nets.v.net);
    let mut hi = lo.clone();
    for step in 0..150 {
        agent.update(step).unwrap();
        for (i, x) in flat(&agent.nets.v.net).into_iter().enumerate() {
            lo[i] = lo[i].min(x);
            hi[i] = hi[i].max(x);
        }
        for (i, x) in flat(&agent.nets.v_target).into_iter().enumerate() {
            assert!(x >= lo[i] - 1e-12 && x <= hi[i] + 1e-12);
        }
    }
}

#[test]
fn prior_modes_agree_until_prior_is_used() {
    let mk = |mode| {
        let cfg = short_config(EnvKind::Pendulum, mode, 1);
        filled_agent(&cfg)
    };
    let (mut a, mut b) = (mk(PriorMode::LearnedMarginal), mk(PriorMode::FixedUniform));
    let ta: Vec<_> = a.replay.iter().cloned().collect();
    let tb: Vec<_> = b.replay.iter().cloned().collect();
    assert_eq!(ta, tb);
    assert_eq!(a.nets.policy.net, b.nets.policy.net);
    a.update(0).unwrap();
    b.update(0).unwrap();
    // critics only see rewards and the value target
    assert_eq!(a.nets.q1.net, b.nets.q1.net);
    assert_eq!(a.nets.q2.net, b.nets.q2.net);
    assert_ne!(a.nets.policy.net, b.nets.policy.net);
}

fn marginal(seed: u64) -> MarginalPolicyModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MarginalPolicyModel::new(1, &[16], SquashedGaussian::default(), 1000, 1e-2, &mut rng).unwrap()
}

#[test]
fn marginal_concentrates_on_constant_actions() {
    let mut m = marginal(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = 0.4;
    let actions = Tensor::full(32, 1, c);
    let probe = Tensor::scalar(c);
    let held_out = normal_tensor(&mut rng, 500, 1);
    let before = m.log_density(&probe, &held_out).unwrap()[0];
    for _ in 0..500 {
        let latent = normal_tensor(&mut rng, 20, 1);
        m.fit_step(&actions, &latent).unwrap();
    }
    let after = m.log_density(&probe, &held_out).unwrap()[0];
    assert!(after > before + 1.0, "{before} -> {after}");
}

#[test]
fn marginal_fit_of_symmetric_bimodal_set_is_symmetric() {
    let mut m = marginal(4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let actions = Tensor::from_fn(32, 1, |i, _| if i % 2 == 0 { 0.5 } else { -0.5 });
    for _ in 0..1500 {
        let latent = normal_tensor(&mut rng, 20, 1);
        m.fit_step(&actions, &latent).unwrap();
    }
    // mass on each side of zero, from samples of the fitted latent model
    let n = 20_000;
    let u = normal_tensor(&mut rng, n, 1);
    let eps = normal_tensor(&mut rng, n, 1);
    let out = m.model.net.forward_values(&u).unwrap();
    let positive = (0..n)
        .filter(|&i| out.get(i, 0) + out.get(i, 1).clamp(-20.0, 2.0).exp() * eps.get(i, 0) > 0.0)
        .count();
    let frac = positive as f64 / n as f64;
    assert!((frac - 0.5).abs() < 0.05, "positive fraction {frac}");
}

#[test]
fn zero_weight_marginal_has_finite_gradient() {
    let head = SquashedGaussian::default();
    let net = Mlp::zeros(&[1, 4, 2]).unwrap();
    let mut g = Graph::new();
    let b = net.bind(&mut g);
    let actions = Tensor::from_rows(&[vec![0.999_999], vec![-1.0], vec![0.0]]);
    let latent = Tensor::from_rows(&[vec![0.3], vec![-1.2]]);
    let loss = mireg_agent::losses::marginal_nll(&mut g, &b, &head, &actions, &latent).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(g.value(loss).item().is_finite());
    assert!(b.grads(&g, &grads).iter().all(Tensor::is_finite));
}

#[test]
fn symmetric_policy_matching_prior_has_near_zero_mean_gradient() {
    let head = SquashedGaussian::default();
    let mut policy = Mlp::zeros(&[2, 4, 2]).unwrap();
    policy.params_mut()[3] = Tensor::from_rows(&[vec![0.0, -0.5]]);
    let mut prior = Mlp::zeros(&[1, 4, 2]).unwrap();
    prior.params_mut()[3] = Tensor::from_rows(&[vec![0.0, -0.5]]);
    let q = Mlp::zeros(&[3, 4, 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 4000;
    let states = Tensor::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    let noise = normal_tensor(&mut rng, n, 1);
    let latent = normal_tensor(&mut rng, 20, 1);
    let mut g = Graph::new();
    let bp = policy.bind(&mut g);
    let (b1, b2) = (q.bind_frozen(&mut g), q.bind_frozen(&mut g));
    let bm = prior.bind_frozen(&mut g);
    let pr = mireg_agent::Prior::Marginal { net: &bm, latent: &latent };
    let loss = mireg_agent::losses::actor_loss(&mut g, &bp, &b1, &b2, pr, &head, &states, &noise, Default::default()).unwrap();
    assert!(g.value(loss).item().abs() < 1e-9);
    let grads = g.backward(loss).unwrap();
    // bias of the mean output; per-sample gradient is noise/std, so the batch mean is O(1/sqrt(n))
    let gmean = grads.get(bp.vars()[3]).unwrap().get(0, 0);
    assert!(gmean.abs() < 4.0 / (n as f64).sqrt() / (-0.5f64).exp(), "{gmean}");
}

#[test]
fn increasing_q_pushes_policy_mean_up() {
    let head = SquashedGaussian::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut policy = Mlp::new(&[2, 4, 2], &mut rng).unwrap();
    // Q(s, a) = 5 a
    let mut q = Mlp::zeros(&[3, 1, 1]).unwrap();
    q.params_mut()[0] = Tensor::from_rows(&[vec![0.0], vec![0.0], vec![1.0]]);
    q.params_mut()[1] = Tensor::scalar(1.0);
    q.params_mut()[2] = Tensor::scalar(5.0);
    let states = Tensor::from_fn(32, 2, |_, _| rng.random_range(-1.0..1.0));
    let mean_action = |p: &Mlp| p.forward_values(&states).unwrap().data().chunks(2).map(|r| r[0]).sum::<f64>() / 32.0;
    let start = mean_action(&policy);
    let mut opt = mireg_nn::Adam::new(policy.params(), 1e-2);
    for _ in 0..100 {
        let noise = normal_tensor(&mut rng, 32, 1);
        let mut g = Graph::new();
        let bp = policy.bind(&mut g);
        let (b1, b2) = (q.bind_frozen(&mut g), q.bind_frozen(&mut g));
        let loss = mireg_agent::losses::actor_loss(&mut g, &bp, &b1, &b2, mireg_agent::Prior::Uniform, &head, &states, &noise, Default::default()).unwrap();
        let grads = g.backward(loss).unwrap();
        opt.step(policy.params_mut(), &bp.grads(&g, &grads)).unwrap();
    }
    assert!(mean_action(&policy) > start + 0.5);
}

#[test]
fn training_is_deterministic_and_curve_is_well_formed() {
    let cfg = short_config(EnvKind::PointMass, PriorMode::LearnedMarginal, 1200);
    let dir = tempfile::tempdir().unwrap();
    let a = train(&cfg, Some(dir.path())).unwrap();
    let b = train(&cfg, None).unwrap();
    let csv = |rows: &[mireg_agent::CurveRow]| {
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, rows).unwrap();
        buf
    };
    assert_eq!(csv(&a.curve), csv(&b.curve));
    assert_eq!(a.curve.len(), 6);
    let text = String::from_utf8(csv(&a.curve)).unwrap();
    assert!(text.starts_with("seed,step,episode,trailing_mean_reward,best_so_far\n"));
    for w in a.curve.windows(2) {
        assert!(w[1].best_so_far >= w[0].best_so_far);
        assert_eq!(w[1].step, w[0].step + 200);
    }
    let ckpt = mireg_nn::checkpoint::load(dir.path().join("seed0_final.ckpt")).unwrap();
    assert_eq!(ckpt, a.agent.checkpoint_tensors());
}

#[test]
fn zero_learning_rate_does_not_clear_the_learning_bar() {
    let steps = 6000;
    let base = random_baseline(EnvKind::PointMass, 30, steps);
    let finals: Vec<f64> = (0..5)
        .map(|seed| {
            let cfg = MiracleConfig {
                learning_rate: 0.0,
                seed,
                ..short_config(EnvKind::PointMass, PriorMode::LearnedMarginal, steps)
            };
            train(&cfg, None).unwrap().final_trailing_mean().unwrap()
        })
        .collect();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    for f in &finals {
        assert!(*f < base.mean + 5.0 * base.std, "{f} vs {base:?}");
    }
    assert!(mean < base.mean + 2.0 * base.std, "{finals:?} vs {base:?}");
}
