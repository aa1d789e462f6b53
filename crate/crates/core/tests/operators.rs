use mireg_core::audit::{random_instance, random_policy, random_prior};
use mireg_core::oracle;
use mireg_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn kl_matches_high_precision_reference() {
    // 40-digit evaluation at the binary values of 0.55 and 0.45.
    let reference: f64 = 0.005_008_366_846_356_896;
    let kl = kl_divergence(&[0.55, 0.45], &[0.5, 0.5]).unwrap();
    assert!((kl - reference).abs() < 1e-14 * reference);
}

#[test]
fn mutual_information_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let pi = random_policy(&mut rng, 3, 3);
        let p = StateDistribution::normalized(random_prior(&mut rng, 3).probs().to_vec()).unwrap();
        let mut m = [0.0; 3];
        for s in 0..3 {
            for a in 0..3 {
                m[a] += p.get(s) * pi.get(s, a);
            }
        }
        let mut brute = 0.0;
        for s in 0..3 {
            for a in 0..3 {
                let x = pi.get(s, a);
                if x > 0.0 {
                    brute += p.get(s) * x * (x / m[a]).ln();
                }
            }
        }
        assert!((mutual_information(&pi, &p).unwrap() - brute).abs() < 1e-14);
    }
}

#[test]
fn advantage_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 2, 2);
        let adv = advantage_matrix(&inst.mdp, &inst.v).unwrap();
        let naive = oracle::naive_advantage(&inst.mdp, inst.v.values());
        for s in 0..2 {
            for a in 0..2 {
                assert!((adv.get(s, a) - naive[s][a]).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn evaluation_matches_term_by_term_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 3, 3);
        let prior = random_prior(&mut rng, 3);
        let pi = random_policy(&mut rng, 3, 3);
        let out = evaluate_operator(&inst.mdp, &inst.v, &prior, &pi, inst.beta).unwrap();
        let naive = oracle::naive_advantage(&inst.mdp, inst.v.values());
        for s in 0..3 {
            let mut total = 0.0;
            for a in 0..3 {
                let x = pi.get(s, a);
                total += x * naive[s][a] - x * (x / prior.get(a)).ln() / inst.beta;
            }
            assert!((out.get(s) - total).abs() < 1e-13);
        }
    }
}

#[test]
fn closed_form_policy_matches_grid_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 2, 2);
        let prior = random_prior(&mut rng, 2);
        let pi = optimal_policy_step(&inst.mdp, &inst.v, &prior, inst.beta).unwrap();
        let adv = oracle::naive_advantage(&inst.mdp, inst.v.values());
        for s in 0..2 {
            let (row, _) = oracle::grid_best_row(&adv[s], prior.probs(), inst.beta, 1000);
            assert!((row[0] - pi.get(s, 0)).abs() <= 1e-3, "{row:?} vs {:?}", pi.row(s));
        }
    }
}

#[test]
fn blahut_arimoto_reaches_brute_force_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 2, 2);
        let cfg = BellmanConfig {
            inner_tolerance: 1e-10,
            max_inner_iters: 200_000,
            ..BellmanConfig::with_beta(inst.beta)
        };
        let (v, _) = apply_b_star(&inst.mdp, &inst.v, &inst.p, &cfg, None).unwrap();
        let best = oracle::brute_force_b_star(&inst.mdp, inst.v.values(), inst.p.probs(), inst.beta, 1e-3);
        assert!((inst.p.expect(v.values()) - best.value).abs() < 1e-3);
    }
}

#[test]
fn averaged_gap_stays_below_rate_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 2, 2);
        let cfg = BellmanConfig {
            inner_tolerance: f64::MIN_POSITIVE,
            max_inner_iters: 50,
            ..BellmanConfig::with_beta(inst.beta)
        };
        let (_, ba) = apply_b_star(&inst.mdp, &inst.v, &inst.p, &cfg, None).unwrap();
        assert_eq!(ba.iterations, 50);
        let best = oracle::brute_force_b_star(&inst.mdp, inst.v.values(), inst.p.probs(), inst.beta, 1e-3).value;
        let init = ConditionalPolicy::uniform(2, 2);
        let mut cumulative = 0.0;
        for m in 1..=50 {
            cumulative += best - ba.objective_trace[m - 1];
            let bound = gap_bound(&init, &inst.p, inst.beta, m).unwrap();
            assert!(cumulative / m as f64 <= bound, "M = {m}");
        }
        assert!((ba.gap_bound - gap_bound(&init, &inst.p, inst.beta, 50).unwrap()).abs() < 1e-15);
    }
}

#[test]
fn grid_world_operator_is_permutation_equivariant() {
    let spec = GridWorldSpec::default();
    let mdp: Mdp = build_grid_world(&spec).unwrap();
    let n = mdp.n_states();
    // Deterministic shuffle.
    let perm: Vec<usize> = (0..n).map(|s| (s * 101 + 7) % n).collect();
    let permuted = mdp.permute_states(&perm).unwrap();
    let p = StateDistribution::uniform_over_unmasked(mdp.terminal_mask()).unwrap();
    let pp = StateDistribution::uniform_over_unmasked(permuted.terminal_mask()).unwrap();
    let cfg = BellmanConfig::with_beta(10.0);
    let (v, ba) = apply_b_star(&mdp, &ValueTable::zeros(n), &p, &cfg, None).unwrap();
    let (vp, bap) = apply_b_star(&permuted, &ValueTable::zeros(n), &pp, &cfg, None).unwrap();
    assert_eq!(ba.iterations, bap.iterations);
    assert_eq!(ba.prior, bap.prior);
    for s in 0..n {
        assert_eq!(v.get(s), vp.get(perm[s]));
        assert_eq!(ba.policy.row(s), bap.policy.row(perm[s]));
    }
}

#[test]
fn mdp_flat_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let inst = random_instance(&mut rng, 3, 2);
    let text = mdp_io::write_mdp(&inst.mdp);
    assert_eq!(mdp_io::read_mdp::<f64>(&text).unwrap(), inst.mdp);
}
