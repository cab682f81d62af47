mod common;

use common::*;
use subgan_core::data::{noise_seed, DistributionSampler, DistributionSpec};
use subgan_core::optim::OptimizerKind;
use subgan_core::trainer::{
    discriminator_step, invert_labels, max_relative_difference, regress_on_targets, regression_record,
    standard_generator_step, subproblem_generator_step, train, Regime, Schedule, SubproblemConfig, Trainer,
};
use subgan_core::{CoreError, Discrepancy, Model, Tensor, ToyDiscriminator, ToyGenerator};

const LOSSES: [Discrepancy; 4] = [Discrepancy::Bce, Discrepancy::MinimaxBce, Discrepancy::L2, Discrepancy::L1];

fn delta(before: &[f64], after: &[f64]) -> Vec<f64> {
    after.iter().zip(before).map(|(a, b)| a - b).collect()
}

/// Δθ of both regimes from the same starting point.
fn paired_updates(g: &Model, f: &Model, z: &Tensor, cfg: &SubproblemConfig) -> (Vec<f64>, Vec<f64>) {
    let before = g.flat_params();
    let mut gs = g.clone();
    standard_generator_step(&mut gs, f, z, cfg.eta_g, cfg.delta1).unwrap();
    let mut gd = g.clone();
    subproblem_generator_step(&mut gd, f, z, cfg).unwrap();
    (delta(&before, &gs.flat_params()), delta(&before, &gd.flat_params()))
}

#[test]
fn decomposed_step_equals_standard_step() {
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for seed in 0..60u64 {
        for (name, g, f) in architectures(seed) {
            let mut r = rng(seed * 31 + 1);
            let batch = 1 + (seed as usize * 7) % 64;
            let z = normal_tensor(&mut r, batch, g.input_dim());
            let lambda1 = uniform(&mut r, 0.05, 2.0);
            let lambda2 = uniform(&mut r, 1e-4, 0.1);
            let cfg = SubproblemConfig {
                delta1: LOSSES[seed as usize % 4],
                ..SubproblemConfig::equivalent(lambda1, lambda2, 1e-3)
            };
            cfg.validate_equivalence().unwrap();
            let (ds, dd) = paired_updates(&g, &f, &z, &cfg);
            let e = max_relative_difference(&ds, &dd);
            assert!(e <= 1e-9, "{name} seed {seed} batch {batch}: {e:e}");
            worst = worst.max(e);
            cases += 1;
        }
    }
    assert!(cases >= 200);
    eprintln!("worst relative difference over {cases} cases: {worst:e}");
}

#[test]
fn batch_sizes_one_through_sixty_four() {
    let (_, g, f) = architectures(3).remove(0);
    let cfg = SubproblemConfig::equivalent(0.5, 4e-4, 1e-3);
    for batch in 1..=64 {
        let z = normal_tensor(&mut rng(batch as u64), batch, g.input_dim());
        let (ds, dd) = paired_updates(&g, &f, &z, &cfg);
        assert!(max_relative_difference(&ds, &dd) <= 1e-9, "batch {batch}");
    }
}

#[test]
fn split_of_a_fixed_product_does_not_matter() {
    for seed in 0..20u64 {
        for (name, g, f) in architectures(seed) {
            let z = normal_tensor(&mut rng(seed), 8, g.input_dim());
            let updates: Vec<Vec<f64>> = [0.1, 0.25, 0.5, 1.0]
                .iter()
                .map(|&l1| {
                    let cfg = SubproblemConfig::equivalent(l1, 2e-4 / l1, 1e-3);
                    let mut g2 = g.clone();
                    subproblem_generator_step(&mut g2, &f, &z, &cfg).unwrap();
                    delta(&g.flat_params(), &g2.flat_params())
                })
                .collect();
            for u in &updates[1..] {
                assert!(max_relative_difference(&updates[0], u) <= 1e-9, "{name} seed {seed}");
            }
        }
    }
}

#[test]
fn mismatched_rates_break_equivalence() {
    let (_, g, f) = architectures(1).remove(0);
    let z = normal_tensor(&mut rng(1), 4, g.input_dim());
    let cfg = SubproblemConfig {
        eta_g: 3e-4,
        ..SubproblemConfig::equivalent(1.0, 2e-4, 1e-3)
    };
    assert!(!cfg.equivalence_violations().is_empty());
    let (ds, dd) = paired_updates(&g, &f, &z, &cfg);
    assert!(max_relative_difference(&ds, &dd) > 0.1);
}

#[test]
fn toy_discriminator_step_matches_hand_computation() {
    let w = vec![0.3, -0.8];
    let eta = 0.1;
    let real = Tensor::from_rows(&[[1.0, 2.0], [0.5, -1.0], [3.0, 0.2], [-0.7, 0.9]]).unwrap();
    let fake = Tensor::from_rows(&[[0.1, 0.1], [-1.0, 0.4], [2.0, -2.0], [0.0, 1.5]]).unwrap();
    let mut f = ToyDiscriminator::new(w.clone()).to_model();
    discriminator_step(&mut f, &real, &fake, eta).unwrap();
    let mut want = w.clone();
    for (batch, label) in [(&real, 1.0), (&fake, 0.0)] {
        for x in batch.rows() {
            let v = w[0] * x[0] + w[1] * x[1];
            for k in 0..2 {
                want[k] -= eta * (sigmoid(v) - label) * x[k] / 4.0;
            }
        }
    }
    let got = f.flat_params();
    for k in 0..2 {
        assert!((got[k] - want[k]).abs() <= 1e-15, "{got:?} vs {want:?}");
    }
}

#[test]
fn identical_real_and_fake_give_no_update_at_zero_weights() {
    let x = normal_tensor(&mut rng(4), 16, 3);
    let mut f = ToyDiscriminator::new(vec![0.0; 3]).to_model();
    discriminator_step(&mut f, &x, &x, 0.5).unwrap();
    assert!(f.flat_params().iter().all(|v| v.abs() <= 1e-16));

    let spec = DistributionSpec::standard_normal(3);
    let a = DistributionSampler::new(spec.clone(), 1).draw_batch(20000);
    let b = DistributionSampler::new(spec, 2).draw_batch(20000);
    let mut f = ToyDiscriminator::new(vec![0.0; 3]).to_model();
    discriminator_step(&mut f, &a, &b, 1.0).unwrap();
    // ½‖x̄_a − x̄_b‖ has standard deviation about 0.005 per coordinate
    assert!(f.flat_params().iter().all(|v| v.abs() < 0.03), "{:?}", f.flat_params());
}

#[test]
fn toy_standard_step_matches_chain_rule() {
    for seed in 0..50u64 {
        let mut r = rng(seed);
        let b = normals(&mut r, 6);
        let w = normals(&mut r, 2);
        let z = normals(&mut r, 2);
        let eta = 0.05;
        let mut g = ToyGenerator::new(2, b.clone()).unwrap().to_model();
        let f = ToyDiscriminator::new(w.clone()).to_model();
        standard_generator_step(&mut g, &f, &Tensor::row(&z), eta, Discrepancy::Bce).unwrap();
        // L = softplus(v) − v,  v = wᵀBz̃,  ∂L/∂B_jk = (σ(v) − 1) w_j z̃_k
        let zt = [z[0], z[1], 1.0];
        let x: Vec<f64> = (0..2).map(|j| (0..3).map(|k| b[j * 3 + k] * zt[k]).sum()).collect();
        let v = w[0] * x[0] + w[1] * x[1];
        let want: Vec<f64> = (0..6)
            .map(|i| b[i] - eta * (sigmoid(v) - 1.0) * w[i / 3] * zt[i % 3])
            .collect();
        assert!(rel_err(&g.flat_params(), &want) <= 1e-14);
    }
}

#[test]
fn saturated_discriminator_gives_zero_l2_gradient() {
    let g = ToyGenerator::identity(2).to_model();
    let f = ToyDiscriminator::new(vec![100.0, 0.0]).to_model();
    let mut g2 = g.clone();
    // σ(50) rounds to exactly 1
    standard_generator_step(&mut g2, &f, &Tensor::row(&[0.5, 0.0]), 0.1, Discrepancy::L2).unwrap();
    assert_eq!(g.flat_params(), g2.flat_params());
}

#[test]
fn discriminator_is_frozen_during_generator_steps() {
    for (name, g, f) in architectures(8) {
        let z = normal_tensor(&mut rng(8), 5, g.input_dim());
        let bits = |m: &Model| m.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        let before = bits(&f);
        let mut g1 = g.clone();
        standard_generator_step(&mut g1, &f, &z, 0.1, Discrepancy::Bce).unwrap();
        let cfg = SubproblemConfig { n1: 3, n2: 2, lambda2: 0.1, ..Default::default() };
        let mut g2 = g.clone();
        subproblem_generator_step(&mut g2, &f, &z, &cfg).unwrap();
        assert_eq!(bits(&f), before, "{name}");
    }
}

#[test]
fn inversion_steps_follow_reference_loop() {
    for seed in 0..30u64 {
        let mut r = rng(seed);
        let w = normals(&mut r, 3);
        let x0 = normal_tensor(&mut r, 4, 3);
        let f = ToyDiscriminator::new(w.clone()).to_model();
        let mut finals = Vec::new();
        for n1 in [1, 5] {
            let cfg = SubproblemConfig { lambda1: 1.5, n1, ..Default::default() };
            let inv = invert_labels(&f, &x0, &cfg).unwrap();
            let mut want = x0.data().to_vec();
            for _ in 0..n1 {
                for row in want.chunks_mut(3) {
                    let v: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
                    let c = (sigmoid(v) - 1.0) * 1.5 / n1 as f64;
                    row.iter_mut().zip(&w).for_each(|(x, wk)| *x -= c * wk);
                }
            }
            assert!(rel_err(inv.x_prime.data(), &want) <= 1e-14);
            assert_eq!(inv.x_initial, x0);
            assert_eq!(inv.delta1.len(), n1 + 1);
            finals.push(inv.x_prime);
        }
        assert_ne!(finals[0], finals[1]);
    }
}

#[test]
fn regression_steps_follow_reference_loop() {
    for seed in 0..30u64 {
        let mut r = rng(seed);
        let b0 = normals(&mut r, 6);
        let z = normal_tensor(&mut r, 3, 2);
        let target = normal_tensor(&mut r, 3, 2);
        for n2 in [1, 2] {
            let cfg = SubproblemConfig { lambda2: 0.3, n2, ..Default::default() };
            let mut g = ToyGenerator::new(2, b0.clone()).unwrap().to_model();
            regress_on_targets(&mut g, &z, &target, &cfg).unwrap();
            // ∇_B ½ mean ‖Bz̃ − x'‖² = mean (Bz̃ − x') z̃ᵀ, recomputed between steps
            let mut b = b0.clone();
            for _ in 0..n2 {
                let mut grad = [0.0; 6];
                for (zr, tr) in z.rows().zip(target.rows()) {
                    let zt = [zr[0], zr[1], 1.0];
                    for j in 0..2 {
                        let x: f64 = (0..3).map(|k| b[j * 3 + k] * zt[k]).sum();
                        for k in 0..3 {
                            grad[j * 3 + k] += (x - tr[j]) * zt[k] / 3.0;
                        }
                    }
                }
                for i in 0..6 {
                    b[i] -= 0.3 / n2 as f64 * grad[i];
                }
            }
            assert!(rel_err(&g.flat_params(), &b) <= 1e-14, "n2 {n2}");
        }
    }
}

#[test]
fn single_regression_step_is_transposed_jacobian_times_residual() {
    let mut r = rng(2);
    let b = normals(&mut r, 6);
    let z = normals(&mut r, 2);
    let xp = normals(&mut r, 2);
    let mut g = ToyGenerator::new(2, b.clone()).unwrap().to_model();
    let x = g.predict(&Tensor::row(&z)).unwrap().into_data();
    let cfg = SubproblemConfig { lambda2: 0.7, ..Default::default() };
    regress_on_targets(&mut g, &Tensor::row(&z), &Tensor::row(&xp), &cfg).unwrap();
    let j = subgan_core::jacobian(&ToyGenerator::new(2, b.clone()).unwrap().to_model(), &Tensor::row(&z), subgan_core::Wrt::Parameters).unwrap();
    let resid: Vec<f64> = x.iter().zip(&xp).map(|(a, b)| a - b).collect();
    let jt_r = j.left_mul(&resid);
    let want: Vec<f64> = b.iter().zip(&jt_r).map(|(p, q)| p - 0.7 * q).collect();
    assert!(rel_err(&g.flat_params(), &want) <= 1e-14);
}

#[test]
fn targets_met_give_no_regression_update() {
    let (_, g, _) = architectures(5).remove(1);
    let z = normal_tensor(&mut rng(5), 4, g.input_dim());
    let xp = g.predict(&z).unwrap();
    let mut g2 = g.clone();
    regress_on_targets(&mut g2, &z, &xp, &SubproblemConfig::default()).unwrap();
    assert_eq!(g.flat_params(), g2.flat_params());
}

#[test]
fn zero_inversion_rate_leaves_generator_unchanged() {
    for (name, g, f) in architectures(6) {
        let z = normal_tensor(&mut rng(6), 4, g.input_dim());
        let cfg = SubproblemConfig { lambda1: 0.0, ..Default::default() };
        let mut g2 = g.clone();
        subproblem_generator_step(&mut g2, &f, &z, &cfg).unwrap();
        assert_eq!(g.flat_params(), g2.flat_params(), "{name}");
    }
}

#[test]
fn inversion_respects_step_size_bound() {
    for seed in 0..30u64 {
        for (name, g, f) in architectures(seed) {
            let z = normal_tensor(&mut rng(seed), 6, g.input_dim());
            let x = g.predict(&z).unwrap();
            for n1 in 1..=5 {
                let cfg = SubproblemConfig { lambda1: 0.8, n1, delta1: LOSSES[n1 % 4], ..Default::default() };
                let inv = invert_labels(&f, &x, &cfg).unwrap();
                for (a, b) in inv.x_prime.rows().zip(inv.x_initial.rows()) {
                    let moved = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                    assert!(moved <= 0.8 * inv.max_grad_norm * (1.0 + 1e-12), "{name} n1 {n1}");
                }
            }
        }
    }
}

#[test]
fn no_gradient_reaches_the_targets() {
    let (_, g, _) = architectures(0).remove(0);
    let z = normal_tensor(&mut rng(0), 3, g.input_dim());
    let xp = normal_tensor(&mut rng(1), 3, g.output_dim()).with_requires_grad(true);
    let (mut rec, l, target, params) =
        regression_record(&g, &z, &xp, Discrepancy::L2, subgan_core::Reduction::Mean).unwrap();
    rec.backward_from(l, &Tensor::scalar(1.0)).unwrap();
    assert!(rec.grad(target).is_none());
    assert!(!rec.value(target).requires_grad());
    assert!(rec.grads_flat(&params).iter().any(|v| *v != 0.0));
}

fn samplers(seed: u64) -> (DistributionSampler, DistributionSampler) {
    (
        DistributionSampler::new(DistributionSpec::circle_mixture(4, 2.0, 0.2).unwrap(), seed),
        DistributionSampler::new(DistributionSpec::standard_normal(2), noise_seed(seed)),
    )
}

#[test]
fn zero_steps_leave_models_unchanged() {
    let g = mlp(&[2, 8, 2], subgan_core::Activation::Tanh, 1);
    let f = mlp(&[2, 8, 1], subgan_core::Activation::Tanh, 2);
    let t = Trainer::new(g.clone(), f.clone(), SubproblemConfig::default(), Regime::Subproblem).unwrap();
    let (mut data, mut noise) = samplers(1);
    let mut calls = Vec::new();
    let out = train(t, &mut data, &mut noise, Schedule { steps: 0, batch_size: 8, eval_every: 5 }, &mut |s, _, _| {
        calls.push(s)
    });
    assert!(out.reports.is_empty());
    assert_eq!(out.generator, g);
    assert_eq!(out.discriminator, f);
    assert_eq!(calls, vec![0]);
}

#[test]
fn trajectories_of_both_regimes_stay_together() {
    let g = mlp(&[2, 16, 2], subgan_core::Activation::Tanh, 10);
    let f = mlp(&[2, 16, 1], subgan_core::Activation::Tanh, 11);
    let cfg = SubproblemConfig::equivalent(1.0, 0.01, 0.01);
    let run = |regime| {
        let t = Trainer::new(g.clone(), f.clone(), cfg, regime).unwrap();
        let (mut data, mut noise) = samplers(3);
        let mut snaps = Vec::new();
        train(t, &mut data, &mut noise, Schedule { steps: 200, batch_size: 32, eval_every: 1 }, &mut |_, g, f| {
            snaps.push((g.flat_params(), f.flat_params()))
        });
        snaps
    };
    let (a, b) = (run(Regime::Standard), run(Regime::Subproblem));
    assert_eq!(a.len(), 201);
    for (i, (sa, sb)) in a.iter().zip(&b).enumerate() {
        assert!(max_relative_difference(&sa.0, &sb.0) <= 1e-6, "step {i}");
        assert!(max_relative_difference(&sa.1, &sb.1) <= 1e-6, "step {i}");
    }
}

#[test]
fn divergence_halts_with_last_good_models() {
    let g = mlp(&[2, 8, 2], subgan_core::Activation::Relu, 1);
    let f = mlp(&[2, 8, 1], subgan_core::Activation::Relu, 2);
    let cfg = SubproblemConfig { eta_f: 1e4, eta_g: 1e4, lambda2: 1e4, ..Default::default() };
    let t = Trainer::new(g, f, cfg, Regime::Standard).unwrap();
    let (mut data, mut noise) = samplers(1);
    let mut last = None;
    let out = train(t, &mut data, &mut noise, Schedule { steps: 100, batch_size: 16, eval_every: 1 }, &mut |s, g, f| {
        last = Some((s, g.clone(), f.clone()))
    });
    assert!(matches!(out.halted, Some(CoreError::Diverged { .. }) | Some(CoreError::NonFinite(_))), "{:?}", out.halted);
    assert!(out.reports.len() < 100);
    assert!(out.generator.flat_params().iter().all(|v| v.is_finite()));
    let (s, g, f) = last.unwrap();
    assert_eq!(s, out.reports.len());
    assert_eq!(g, out.generator);
    assert_eq!(f, out.discriminator);
}

#[test]
fn optimizers_other_than_sgd_still_train() {
    for kind in [OptimizerKind::MOMENTUM, OptimizerKind::ADAM] {
        let g = mlp(&[2, 8, 2], subgan_core::Activation::Tanh, 1);
        let f = mlp(&[2, 8, 1], subgan_core::Activation::Tanh, 2);
        let cfg = SubproblemConfig { optimizer: kind, n2: 2, lambda2: 1e-3, ..Default::default() };
        let t = Trainer::new(g.clone(), f, cfg, Regime::Subproblem).unwrap();
        let (mut data, mut noise) = samplers(1);
        let out = train(t, &mut data, &mut noise, Schedule { steps: 20, batch_size: 8, eval_every: 0 }, &mut |_, _, _| {});
        assert!(out.halted.is_none());
        assert_eq!(out.reports.len(), 20);
        assert_ne!(out.generator, g);
    }
}
