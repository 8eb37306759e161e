use std::fs;

use glad_core::datagen::{
    empirical_cov, gen_dataset, load_dataset, save_dataset, gen_erdos_precision, gen_grid_precision, gen_restricted_random_precision,
    sample_gaussian, GraphFamilyConfig,
};
use glad_core::matcore::{is_spd, spd_inverse, sym_eig, SymmetricMatrix};
use glad_core::metrics::nmse_db;
use glad_core::Error;
use proptest::prelude::*;

#[test]
fn dataset_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = GraphFamilyConfig::erdos(6, 0.3, 25, 3);
    cfg.p_range = None;
    let data = gen_dataset(&cfg, 17).unwrap();
    let manifest = save_dataset(dir.path(), &cfg, 17, &data).unwrap();
    let (loaded_manifest, loaded) = load_dataset(dir.path()).unwrap();
    assert_eq!(manifest, loaded_manifest);
    assert_eq!(loaded_manifest.config, cfg);
    assert_eq!(loaded, data);
}

#[test]
fn regeneration_is_byte_identical() {
    let cfg = GraphFamilyConfig::grid(9, (0.12, 0.25), 30, 2);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    save_dataset(a.path(), &cfg, 5, &gen_dataset(&cfg, 5).unwrap()).unwrap();
    save_dataset(b.path(), &cfg, 5, &gen_dataset(&cfg, 5).unwrap()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 9);
    for name in names {
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn truncated_payload_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GraphFamilyConfig::erdos(4, 0.5, 10, 1);
    save_dataset(dir.path(), &cfg, 1, &gen_dataset(&cfg, 1).unwrap()).unwrap();
    let path = dir.path().join("instance_0000.sigma_hat.bin");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::ShapeError(_))));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(&dir.path().join("nope")), Err(Error::Io(_))));
}

#[test]
fn different_seeds_give_different_streams() {
    let cfg = GraphFamilyConfig::erdos(8, 0.3, 20, 4);
    let a = gen_dataset(&cfg, 1).unwrap();
    let b = gen_dataset(&cfg, 2).unwrap();
    for x in &a {
        for y in &b {
            assert_ne!(x.samples, y.samples);
        }
    }
    // Instances within a dataset draw from distinct streams too.
    assert_ne!(a[0].theta_star, a[1].theta_star);
}

#[test]
fn mle_error_shrinks_with_sample_size() {
    let d = 5;
    let trials = 50;
    let mut previous = f64::INFINITY;
    for m in [100, 1_000, 10_000] {
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for t in 0..trials {
            let theta = gen_erdos_precision(d, 0.4, 1000 + t).unwrap();
            let cov = empirical_cov(&sample_gaussian(&theta, m, 2000 + t).unwrap(), false).unwrap();
            preds.push(spd_inverse(&cov).unwrap());
            truths.push(theta);
        }
        let db = nmse_db(&preds, &truths).unwrap().db;
        assert!(db < previous, "m={m}: {db} dB after {previous} dB");
        previous = db;
    }
}

#[test]
fn identity_samples_converge_to_identity() {
    let samples = sample_gaussian(&SymmetricMatrix::identity(5), 100_000, 3).unwrap();
    let cov = empirical_cov(&samples, false).unwrap();
    assert!(cov.distance(&SymmetricMatrix::identity(5)) < 0.05);
}

fn audit(theta: &SymmetricMatrix) -> std::result::Result<(), TestCaseError> {
    prop_assert!(is_spd(theta));
    let lmin = sym_eig(theta).unwrap().min_eigenvalue();
    prop_assert!((lmin - 1.0).abs() <= 1e-8, "λ_min = {}", lmin);
    let d = theta.dim();
    for i in 0..d {
        for j in 0..d {
            prop_assert_eq!(theta.get(i, j) != 0.0, theta.get(j, i) != 0.0);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn erdos_audit(d in 2usize..20, p in 0.01..0.99f64, seed in any::<u64>()) {
        audit(&gen_erdos_precision(d, p, seed).unwrap())?;
    }

    #[test]
    fn restricted_random_audit(d in 2usize..20, p in 0.01..0.99f64, seed in any::<u64>()) {
        let theta = gen_restricted_random_precision(d, p, 0.1, 0.4, seed).unwrap();
        audit(&theta)?;
        for i in 0..d {
            for j in (i + 1)..d {
                let w = theta.get(i, j).abs();
                prop_assert!(w == 0.0 || (0.1..=0.4).contains(&w));
            }
        }
    }

    #[test]
    fn grid_audit(side in 2usize..6, seed in any::<u64>()) {
        let theta = gen_grid_precision(side * side, 0.12, 0.25, seed).unwrap();
        audit(&theta)?;
        let edges = (0..side * side)
            .flat_map(|i| (i + 1..side * side).map(move |j| (i, j)))
            .filter(|&(i, j)| theta.get(i, j) != 0.0)
            .count();
        prop_assert_eq!(edges, 2 * side * (side - 1));
    }
}
