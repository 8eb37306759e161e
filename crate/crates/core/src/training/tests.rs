use super::*;
use crate::datagen::{gen_dataset, GraphFamilyConfig};
use crate::glad_model::{glad_forward, Mlp, RHO_NN_DIMS};
use crate::matcore::test_support::random_spd;
use crate::matcore::SpectralDecomposition;

fn small_config(k: usize) -> TrainConfig {
    TrainConfig { num_unrolls: k, ..Default::default() }
}

fn dataset(n: usize, seed: u64) -> Vec<ProblemInstance> {
    gen_dataset(&GraphFamilyConfig::erdos(5, 0.3, 40, n), seed).unwrap()
}

#[test]
fn loss_examples() {
    let t = random_spd(3, 1);
    let same = vec![GladState { theta: t.clone(), z: t.clone(), lambda: 0.5 }; 4];
    assert_eq!(glad_loss(&same, &t, 0.9).unwrap(), 0.0);

    let off = |e: f64| GladState { theta: t.add_scaled_identity(e.sqrt() / 3f64.sqrt()), z: t.clone(), lambda: 0.5 };
    let one = [off(4.0)];
    assert!((glad_loss(&one, &t, 0.1).unwrap() - 4.0).abs() < 1e-12);
    let two = [off(4.0), off(1.0)];
    assert!((glad_loss(&two, &t, 0.5).unwrap() - 3.0).abs() < 1e-12);

    assert!(glad_loss(&[], &t, 0.9).is_err());
    assert!(glad_loss(&one, &random_spd(4, 0), 0.9).is_err());
}

#[test]
fn gamma_limits() {
    let inst = &dataset(1, 3)[0];
    let params = GladParams::init(2);
    let states = glad_forward(&inst.sigma_hat, &params, 6).unwrap();
    let plain: f64 = states.iter().map(|s| s.theta.distance(&inst.theta_star).powi(2)).sum();
    assert!((glad_loss(&states, &inst.theta_star, 1.0).unwrap() - plain).abs() < 1e-12 * plain);
    let last = states.last().unwrap().theta.distance(&inst.theta_star).powi(2);
    let tiny = glad_loss(&states, &inst.theta_star, 1e-6).unwrap();
    assert!((tiny - last).abs() < 1e-4 * last);
}

#[test]
fn tape_loss_matches_glad_loss() {
    let inst = &dataset(1, 8)[0];
    let params = GladParams::init(4);
    let states = glad_forward(&inst.sigma_hat, &params, 7).unwrap();
    let a = glad_loss(&states, &inst.theta_star, 0.9).unwrap();
    let (b, _) = glad_backward(&inst.sigma_hat, &inst.theta_star, &params, &small_config(7)).unwrap();
    assert!((a - b).abs() < 1e-12 * a);
}

#[test]
fn zero_gradient_at_minimum() {
    // Threshold fixed at 0 (saturated bias): Z' = Θ' and every threshold
    // sensitivity vanishes; Θ* = Θ₁ puts the loss at its minimum.
    let mut rho_nn = Mlp::zeros(&RHO_NN_DIMS).unwrap();
    let mut flat = Vec::new();
    rho_nn.extend_flat(&mut flat);
    *flat.last_mut().unwrap() = -800.0;
    rho_nn.read_flat(&flat).unwrap();
    let params = GladParams { rho_nn, ..GladParams::init(5) };
    let sigma = random_spd(4, 2).scale(0.3);
    let theta_star = glad_forward(&sigma, &params, 1).unwrap()[0].theta.clone();
    let (loss, grad) = glad_backward(&sigma, &theta_star, &params, &small_config(1)).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    let report = finite_diff_check(&sigma, &theta_star, &params, &small_config(1), 10, 0).unwrap();
    assert_eq!(report.max_rel_error, 0.0);
}

#[test]
fn gradient_matches_finite_differences() {
    let cfg = small_config(5);
    for (i, inst) in dataset(3, 21).iter().enumerate() {
        let params = GladParams::init(i as u64);
        let report = finite_diff_check(&inst.sigma_hat, &inst.theta_star, &params, &cfg, 54, 7).unwrap();
        assert!(report.probes.len() >= 40, "{report:?}");
        assert!(report.max_rel_error < 1e-4, "instance {i}: {report:?}");
    }
}

fn flipped_adjoint(s: &SpectralDecomposition, g: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    Ok(sylvester_adjoint(s, g)?.scale(-1.0))
}

#[test]
fn corrupted_sqrt_adjoint_is_detected() {
    let inst = &dataset(1, 21)[0];
    let report = finite_diff_check_with(
        &inst.sigma_hat,
        &inst.theta_star,
        &GladParams::init(0),
        &small_config(5),
        20,
        7,
        flipped_adjoint,
    )
    .unwrap();
    assert!(report.max_rel_error > 0.1, "{report:?}");
}

#[test]
fn duplicated_instance_doubles_summed_gradient() {
    let data = dataset(1, 2);
    let params = GladParams::init(1);
    let cfg = small_config(4);
    let (l1, g1) = batch_gradient(&[&data[0]], &params, &cfg).unwrap();
    let (l2, g2) = batch_gradient(&[&data[0], &data[0]], &params, &cfg).unwrap();
    assert_eq!(l2, 2.0 * l1);
    for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
        assert_eq!(*b, 2.0 * a);
    }
}

#[test]
fn loss_is_permutation_invariant() {
    let inst = &dataset(1, 6)[0];
    let perm = [2, 4, 0, 1, 3];
    let params = GladParams::init(3);
    let a = instance_loss(&inst.sigma_hat, &inst.theta_star, &params, 8, 0.9).unwrap();
    let b = instance_loss(&inst.sigma_hat.permuted(&perm), &inst.theta_star.permuted(&perm), &params, 8, 0.9).unwrap();
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn lr_schedule() {
    let cfg = TrainConfig { learning_rate: 0.04, lr_milestones: vec![10, 20], ..Default::default() };
    assert_eq!(cfg.lr_at(0), 0.04);
    assert_eq!(cfg.lr_at(10), 0.02);
    assert_eq!(cfg.lr_at(25), 0.01);
}

#[test]
fn zero_epochs_returns_initial_params() {
    let data = dataset(2, 1);
    let init = GladParams::init(9);
    let cfg = TrainConfig { epochs: 0, num_unrolls: 3, ..Default::default() };
    let out = train(&data, &data, &cfg, Some(init.clone())).unwrap();
    assert_eq!(out.best_params, init);
    assert_eq!(out.final_params, init);
    assert_eq!(out.log.len(), 1);
}

#[test]
fn trivial_instances_loss_decreases() {
    let i = SymmetricMatrix::identity(4);
    let inst = ProblemInstance {
        theta_star: i.clone(),
        sigma_hat: i.clone(),
        samples: crate::datagen::Samples::new(4, vec![]).unwrap(),
        generator_tag: crate::datagen::GeneratorTag::ErdosFixed,
        seed: 0,
        index: 0,
        p: None,
    };
    let data = vec![inst; 3];
    let cfg = TrainConfig { epochs: 10, num_unrolls: 5, learning_rate: 0.01, ..Default::default() };
    let out = train(&data, &[], &cfg, None).unwrap();
    // Row 0 is the initial evaluation; row k logs the loss seen during epoch k.
    for w in out.log[1..].windows(2) {
        assert!(w[1].mean_train_loss < w[0].mean_train_loss, "{:?}", out.log);
    }
}

#[test]
fn training_is_deterministic_and_improves_validation() {
    let train_set = dataset(4, 30);
    let val_set = dataset(3, 31);
    let cfg = TrainConfig { epochs: 15, num_unrolls: 5, seed: 2, ..Default::default() };
    let a = train(&train_set, &val_set, &cfg, None).unwrap();
    let b = train(&train_set, &val_set, &cfg, None).unwrap();
    let strip = |log: &[EpochLog]| log.iter().map(|r| (r.mean_train_loss, r.val_nmse_db, r.lr)).collect::<Vec<_>>();
    assert_eq!(strip(&a.log), strip(&b.log));
    assert_eq!(a.best_params, b.best_params);
    let first = a.log[0].val_nmse_db.unwrap();
    let best = a.log[a.best_epoch].val_nmse_db.unwrap();
    assert!(best < first);
}

#[test]
fn minibatches_shuffle_deterministically() {
    let train_set = dataset(5, 40);
    let cfg = TrainConfig { epochs: 3, num_unrolls: 3, batch_size: Some(2), ..Default::default() };
    let a = train(&train_set, &[], &cfg, None).unwrap();
    let b = train(&train_set, &[], &cfg, None).unwrap();
    assert_eq!(a.final_params, b.final_params);
}

#[test]
fn config_validation() {
    assert!(TrainConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { num_unrolls: 0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { batch_size: Some(0), ..Default::default() }.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
}
