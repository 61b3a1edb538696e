use approx::assert_relative_eq;

use super::*;
use crate::linalg::singular_values;

#[test]
fn spec_validation() {
    assert!(SyntheticSpec::new(10, 5, 0.1, 0).validate().is_err()); // R = 0
    assert!(SyntheticSpec::new(10, 10, 0.1, 0).validate().is_ok());
    assert!(SyntheticSpec::new(0, 10, 0.5, 0).validate().is_err());
    assert!(SyntheticSpec::new(10, 10, 1.5, 0).validate().is_err());
    assert_eq!(SyntheticSpec::new(1, 2048, 0.5, 0).effective_rank(), 1024);
    assert_eq!(SyntheticSpec::new(1, 2048, 0.1, 0).effective_rank(), 204);
}

#[test]
fn dct_is_orthonormal() {
    for d in [1, 2, 7, 64] {
        let w = dct_matrix(d);
        let err = w.matmul(&w.transpose()).unwrap().sub(&DenseMatrix::identity(d)).unwrap().max_abs();
        assert!(err <= 1e-10, "d = {d}: {err}");
    }
    // First basis vector is constant.
    let w = dct_matrix(4);
    assert!(w.row(0).iter().all(|v| (v - 0.5).abs() < 1e-15));
}

#[test]
fn column_variances_follow_the_profile() {
    let spec = SyntheticSpec::new(100_000, 10, 0.5, 3);
    let scales = spec.column_scales();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let (a, _) = draw_rows(&mut rng, spec.n, &scales, &[0.0; 10], &noise);
    for i in 0..10 {
        let var: f64 = a.row_iter().map(|r| r[i] * r[i]).sum::<f64>() / spec.n as f64;
        let expected = (-2.0 * (i * i) as f64 / 25.0).exp();
        assert!((var / expected - 1.0).abs() < 0.05, "column {i}: {var} vs {expected}");
    }
}

#[test]
fn synthetic_data_is_deterministic_and_consistent() {
    let spec = SyntheticSpec {
        n: 300,
        d: 16,
        n_test: 40,
        rank_fraction: 0.5,
        noise_var: 0.0,
        seed: 7,
    };
    let a = gen_synthetic(&spec).unwrap();
    let b = gen_synthetic(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_train(), 300);
    assert_eq!(a.n_test(), 40);
    let x = a.x_true.as_ref().unwrap();
    assert_relative_eq!(linalg::norm(x), 1.0, epsilon = 1e-12);
    // Without noise the stored coefficients reproduce the labels exactly.
    let fitted = a.a_train.matvec(x).unwrap();
    for (f, y) in fitted.iter().zip(&a.b_train) {
        assert!((f - y).abs() < 1e-12);
    }
    let other = gen_synthetic(&SyntheticSpec { seed: 8, ..spec }).unwrap();
    assert_ne!(other.a_train, a.a_train);
}

#[test]
fn pre_rotation_coefficients_are_supported_on_the_first_r() {
    let spec = SyntheticSpec::new(10, 20, 0.25, 1);
    let data = gen_synthetic(&spec).unwrap();
    let x_rot = data.x_true.unwrap();
    let x = dct_matrix(20).transpose().matvec(&x_rot).unwrap();
    assert!(x[..5].iter().any(|v| v.abs() > 1e-3));
    assert!(x[5..].iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn rotation_preserves_the_spectrum() {
    let spec = SyntheticSpec::new(200, 24, 0.5, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let (a, _) = draw_rows(&mut rng, spec.n, &spec.column_scales(), &[0.0; 24], &noise);
    let rotated = a.matmul(&dct_matrix(24).transpose()).unwrap();
    let before = singular_values(&a).unwrap();
    let after = singular_values(&rotated).unwrap();
    for (p, q) in before.iter().zip(&after) {
        assert_relative_eq!(p, q, max_relative = 1e-8);
    }
}

#[test]
fn high_rank_profile_decays_slower() {
    let d = 64;
    let ratio = |fraction: f64| {
        let data = gen_synthetic(&SyntheticSpec::new(1024, d, fraction, 4)).unwrap();
        let s = singular_values(&data.a_train).unwrap();
        s[d / 2] / s[0]
    };
    assert!(ratio(SyntheticSpec::HIGH_RANK) > ratio(SyntheticSpec::LOW_RANK));
}

#[test]
fn shingling_examples() {
    let constant = vec![3.0; 50];
    let data = shingle_series(&constant, 4, 10, 5, 0).unwrap();
    assert!(data.a_train.as_slice().iter().all(|v| *v == 0.0));
    assert!(data.b_test.iter().all(|v| *v == 0.0));

    let ramp: Vec<f64> = (0..60).map(f64::from).collect();
    let data = shingle_series(&ramp, 5, 20, 8, 1).unwrap();
    assert_eq!(data.a_train.shape(), (20, 5));
    assert_eq!(data.a_test.shape(), (8, 5));
    assert!(data.a_train.as_slice().iter().all(|v| *v == 1.0));
    assert!(data.b_train.iter().all(|v| *v == 1.0));

    assert_eq!(shingle_series(&ramp, 5, 20, 8, 1).unwrap(), data);
}

#[test]
fn shingles_are_disjoint_and_well_formed() {
    // Squares have distinct differences, so each row identifies its start.
    let series: Vec<f64> = (0..40).map(|i| (i * i) as f64).collect();
    let (d, n, nt) = (3, 20, 10);
    let data = shingle_series(&series, d, n, nt, 5).unwrap();
    let mut starts = Vec::new();
    for (row, &label) in data.a_train.row_iter().chain(data.a_test.row_iter()).zip(
        data.b_train.iter().chain(&data.b_test),
    ) {
        // difference i is 2i + 1
        let s = ((row[0] - 1.0) / 2.0) as usize;
        for (j, v) in row.iter().enumerate() {
            assert_eq!(*v, (2 * (s + j) + 1) as f64);
        }
        assert_eq!(label, (2 * (s + d) + 1) as f64);
        starts.push(s);
    }
    starts.sort_unstable();
    starts.dedup();
    assert_eq!(starts.len(), n + nt);
}

#[test]
fn shingling_rejects_short_series() {
    let series = vec![0.0; 10];
    assert!(matches!(
        shingle_series(&series, 4, 4, 2, 0),
        Err(FdError::InvalidArgument(_))
    ));
    assert!(shingle_series(&[0.0; 11], 4, 4, 2, 0).is_ok());
}

#[test]
fn gamma_selection() {
    let spec = SyntheticSpec {
        n: 200,
        d: 10,
        n_test: 100,
        rank_fraction: 0.5,
        noise_var: 4.0,
        seed: 3,
    };
    let data = gen_synthetic(&spec).unwrap();
    assert_eq!(select_gamma(&data, &[8.0]).unwrap(), 8.0);
    assert!(matches!(select_gamma(&data, &[]), Err(FdError::InvalidArgument(_))));
    assert!(select_gamma(&data, &[1.0, -1.0]).is_err());

    // Ties resolve to the smaller value.
    assert_eq!(select_gamma(&data, &[4.0, 2.0, 4.0, 2.0]).unwrap().min(2.0), 2.0);
    let residuals = gamma_residuals(&data, &default_gamma_grid()).unwrap();
    let best = select_gamma(&data, &default_gamma_grid()).unwrap();
    let min = residuals.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    assert_eq!(residuals.iter().find(|r| r.1 == min).unwrap().0, best);
}

#[test]
fn pure_noise_selects_the_largest_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let scales = vec![1.0; 8];
    let zero = vec![0.0; 8];
    let (a_train, b_train) = draw_rows(&mut rng, 60, &scales, &zero, &noise);
    let (a_test, b_test) = draw_rows(&mut rng, 2000, &scales, &zero, &noise);
    let data = Dataset::new(a_train, b_train, a_test, b_test, None).unwrap();
    let grid = default_gamma_grid();
    assert_eq!(select_gamma(&data, &grid).unwrap(), *grid.last().unwrap());
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::new(30, 8, 0.5, 1);
    let data = gen_synthetic(&spec).unwrap();
    let manifest = save_dataset(&data, dir.path(), "synthetic", Some(&spec), 1, Some(16.0)).unwrap();
    assert_eq!(manifest.files.len(), 5);
    let (back, m2) = load_dataset(dir.path()).unwrap();
    assert_eq!(back, data);
    assert_eq!(m2, manifest);

    // Tampering with a data file is caught by the hash.
    let path = dir.path().join("b_train.fdrm");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&path, bytes).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(FdError::Format { .. })));
}

#[test]
fn shingled_dataset_has_no_coefficients_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let series: Vec<f64> = (0..100).map(|i| (i as f64 / 7.0).sin()).collect();
    let data = shingle_series(&series, 6, 40, 10, 2).unwrap();
    let manifest = save_dataset(&data, dir.path(), "shingled", None, 2, None).unwrap();
    assert_eq!(manifest.files.len(), 4);
    let (back, _) = load_dataset(dir.path()).unwrap();
    assert_eq!(back.x_true, None);
    assert_eq!(back, data);
}
