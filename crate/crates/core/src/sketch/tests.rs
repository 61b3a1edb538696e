use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::linalg::{squared_frobenius_tail, symmetric_eigen, symmetric_eigenvalues};

const SLACK: f64 = 1e-9;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn sketch_of(variant: Variant, a: &DenseMatrix, ell: usize) -> FdSketch {
    let mut s = FdSketch::with_variant(variant, ell, a.cols()).unwrap();
    for row in a.row_iter() {
        s.push(row, 0.0).unwrap();
    }
    s.flush().unwrap();
    s
}

/// Frequent Directions replayed on explicit `d x d` Gram matrices with an
/// eigendecomposition in place of the SVD of the stacked rows.
fn gram_oracle(a: &DenseMatrix, ell: usize, batch: usize) -> (DenseMatrix, f64) {
    let d = a.cols();
    let mut sketch = DenseMatrix::zeros(d, d);
    let mut alpha = 0.0;
    let mut start = 0;
    while start < a.rows() {
        let end = (start + batch).min(a.rows());
        let rows: Vec<Vec<f64>> = (start..end).map(|i| a.row(i).to_vec()).collect();
        let g = sketch.add(&DenseMatrix::from_rows(&rows).unwrap().gram()).unwrap();
        let eig = symmetric_eigen(&g).unwrap();
        let shrink = eig.values.get(ell).copied().unwrap_or(0.0).max(0.0);
        alpha += shrink / 2.0;
        let mut next = DenseMatrix::zeros(d, d);
        for i in 0..ell.min(d) {
            let w = (eig.values[i] - shrink).max(0.0);
            let u = eig.vectors.row(i);
            for r in 0..d {
                for c in 0..d {
                    next.set(r, c, next.get(r, c) + w * u[r] * u[c]);
                }
            }
        }
        sketch = next;
        start = end;
    }
    (sketch, alpha)
}

fn covariance_gap(a: &DenseMatrix, s: &FdSketch) -> DenseMatrix {
    a.gram().sub(&s.covariance().unwrap()).unwrap()
}

#[test]
fn new_validates_sizes() {
    let s = FdSketch::new(8, 16).unwrap();
    assert!(s.sigma().iter().all(|&v| v == 0.0));
    assert_eq!(s.c(), &[0.0; 16][..]);
    assert_eq!(s.n_seen(), 0);
    assert!(matches!(FdSketch::new(1, 4), Err(FdError::InvalidArgument(_))));
    assert!(matches!(FdSketch::new(4, 0), Err(FdError::InvalidArgument(_))));
    assert!(FdSketch::new(2, 1).is_ok());
}

#[test]
fn push_buffers_until_batch_is_full() {
    let mut s = FdSketch::new(4, 3).unwrap();
    for i in 0..3 {
        s.push(&[i as f64, 1.0, 0.0], 1.0).unwrap();
    }
    assert_eq!(s.pending_rows(), 3);
    assert!(s.sigma().iter().all(|&v| v == 0.0));
    s.push(&[0.0, 0.0, 1.0], 1.0).unwrap();
    assert_eq!(s.pending_rows(), 0);
    assert!(s.sigma()[0] > 0.0);
    assert_eq!(s.n_seen(), 4);
}

#[test]
fn push_accumulates_labels_into_c() {
    let mut s = FdSketch::new(3, 3).unwrap();
    s.push(&[0.0, 0.0, 0.0], 0.0).unwrap();
    assert_eq!(s.c(), &[0.0, 0.0, 0.0]);
    let mut t = FdSketch::new(3, 3).unwrap();
    t.push(&[1.0, -2.0, 0.5], 2.0).unwrap();
    assert_eq!(t.c(), &[2.0, -4.0, 1.0]);
    assert!(matches!(t.push(&[1.0], 1.0), Err(FdError::InvalidArgument(_))));
}

#[test]
fn low_rank_batch_is_captured_exactly() {
    let u = [1.0, 2.0, -1.0, 0.5];
    let a = DenseMatrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * u[j]);
    let mut s = FdSketch::new(3, 4).unwrap();
    s.reduce_step(&a).unwrap();
    let gap = covariance_gap(&a, &s);
    assert!(gap.max_abs() <= 1e-12 * a.gram().max_abs());
}

#[test]
fn standard_basis_stream_matches_gram_oracle() {
    let a = DenseMatrix::identity(3);
    let s = sketch_of(Variant::Fd, &a, 2);
    let (oracle, _) = gram_oracle(&a, 2, 2);
    let cov = s.covariance().unwrap();
    assert!(cov.sub(&oracle).unwrap().max_abs() < 1e-12);
    // trace lost equals the oracle's accounting of the removed mass
    let lost = a.gram().trace() - cov.trace();
    assert!((lost - (3.0 - oracle.trace())).abs() < 1e-12);
    let err = symmetric_eigenvalues(&covariance_gap(&a, &s)).unwrap()[0];
    let bound = squared_frobenius_tail(&a, 1).unwrap() / (2.0 - 1.0);
    assert!((bound - 2.0).abs() < 1e-12);
    assert!(err <= bound + SLACK);
}

#[test]
fn zero_batch_only_advances_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = gaussian(&mut rng, 5, 4);
    let mut s = sketch_of(Variant::Fd, &a, 3);
    let before = s.covariance().unwrap();
    let sigma = s.sigma().to_vec();
    s.reduce_step(&DenseMatrix::zeros(3, 4)).unwrap();
    assert_eq!(s.n_seen(), 8);
    for (x, y) in s.sigma().iter().zip(&sigma) {
        assert!((x - y).abs() <= 1e-12 * (1.0 + y));
    }
    assert!(s.covariance().unwrap().sub(&before).unwrap().max_abs() < 1e-10);
}

#[test]
fn matches_gram_oracle_on_random_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let n = rng.random_range(10..60);
        let d = rng.random_range(3..15);
        let ell = rng.random_range(2..8);
        let a = gaussian(&mut rng, n, d);
        for variant in [Variant::Fd, Variant::Rfd] {
            let s = sketch_of(variant, &a, ell);
            let (oracle, alpha) = gram_oracle(&a, ell, ell);
            let diff = s.covariance().unwrap().sub(&oracle).unwrap().max_abs();
            assert!(diff <= 1e-8 * oracle.max_abs().max(1.0), "diff {diff}");
            if variant == Variant::Rfd {
                assert!((s.alpha() - alpha).abs() <= 1e-8 * alpha.max(1.0));
            } else {
                assert_eq!(s.alpha(), 0.0);
            }
        }
    }
}

#[test]
fn rfd_alpha_tracks_shrinkage() {
    let mut s = FdSketch::new_robust(2, 3).unwrap();
    s.push(&[5.0, 0.0, 0.0], 0.0).unwrap();
    s.push(&[0.0, 4.0, 0.0], 0.0).unwrap();
    assert_eq!(s.alpha(), 0.0);
    s.push(&[0.0, 0.0, 2.0], 0.0).unwrap();
    s.push(&[0.0, 0.0, 0.0], 0.0).unwrap();
    assert!((s.alpha() - 2.0).abs() < 1e-12);
    assert!((s.sigma()[0] - 21f64.sqrt()).abs() < 1e-12);
    assert!((s.sigma()[1] - 12f64.sqrt()).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let low = gaussian(&mut rng, 30, 2).matmul(&gaussian(&mut rng, 2, 6)).unwrap();
    assert_eq!(sketch_of(Variant::Rfd, &low, 3).alpha(), 0.0);

    let a = gaussian(&mut rng, 80, 10);
    let s = sketch_of(Variant::Rfd, &a, 4);
    let lost = a.frobenius_norm_sq() - s.sketch_rows().frobenius_norm_sq();
    assert!(2.0 * s.alpha() <= lost + SLACK);
    // each reduce removes at least (ell + 1) times its shrink from the trace
    assert!(2.0 * s.alpha() * 5.0 <= lost * (1.0 + 1e-10));
}

#[test]
fn flush_handles_partial_batches() {
    let mut s = FdSketch::new(4, 3).unwrap();
    s.flush().unwrap();
    assert!(s.sigma().iter().all(|&v| v == 0.0));

    s.push(&[3.0, 0.0, 4.0], 1.0).unwrap();
    s.flush().unwrap();
    assert!(s.is_flushed());
    assert!((s.sigma()[0] - 5.0).abs() < 1e-12);
    let cov = s.covariance().unwrap();
    let r = [3.0, 0.0, 4.0];
    for i in 0..3 {
        for j in 0..3 {
            assert!((cov.get(i, j) - r[i] * r[j]).abs() < 1e-12);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let head = gaussian(&mut rng, 8, 6);
    let tail = gaussian(&mut rng, 3, 6);
    let mut flushed = sketch_of(Variant::Rfd, &head, 4);
    let mut padded = flushed.clone();
    for row in tail.row_iter() {
        flushed.push(row, 0.0).unwrap();
    }
    flushed.flush().unwrap();
    padded
        .reduce_step(&tail.vstack(&DenseMatrix::zeros(1, 6)).unwrap())
        .unwrap();
    let diff = flushed
        .covariance()
        .unwrap()
        .sub(&padded.covariance().unwrap())
        .unwrap()
        .max_abs();
    assert!(diff < 1e-9);
    assert!((flushed.alpha() - padded.alpha()).abs() < 1e-9);
}

#[test]
fn merge_with_empty_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = gaussian(&mut rng, 12, 5);
    let s = sketch_of(Variant::Fd, &a, 4);
    let empty = FdSketch::new(4, 5).unwrap();
    for merged in [s.merge(&empty).unwrap(), empty.merge(&s).unwrap()] {
        let diff = merged
            .covariance()
            .unwrap()
            .sub(&s.covariance().unwrap())
            .unwrap()
            .max_abs();
        assert!(diff < 1e-10);
        assert_eq!(merged.n_seen(), 12);
    }
}

#[test]
fn merged_sketches_satisfy_the_stacked_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let a1 = gaussian(&mut rng, 10, 8);
        let a2 = gaussian(&mut rng, 10, 8);
        let b1: Vec<f64> = (0..10).map(|_| rng.random()).collect();
        let b2: Vec<f64> = (0..10).map(|_| rng.random()).collect();
        let stacked = a1.vstack(&a2).unwrap();
        for variant in [Variant::Fd, Variant::Rfd] {
            let mut s1 = FdSketch::with_variant(variant, 4, 8).unwrap();
            let mut s2 = FdSketch::with_variant(variant, 4, 8).unwrap();
            for (row, &y) in a1.row_iter().zip(&b1) {
                s1.push(row, y).unwrap();
            }
            for (row, &y) in a2.row_iter().zip(&b2) {
                s2.push(row, y).unwrap();
            }
            s1.flush().unwrap();
            s2.flush().unwrap();
            let merged = s1.merge(&s2).unwrap();
            let whole = sketch_of(variant, &stacked, 4);
            for s in [&merged, &whole] {
                let gap = stacked.gram().sub(&s.covariance().unwrap()).unwrap();
                let gap = gap.add_diag(-s.alpha());
                let eig = symmetric_eigenvalues(&gap).unwrap();
                let worst = eig[0].max(-eig[eig.len() - 1]);
                let denom = if variant == Variant::Rfd { 2.0 } else { 1.0 };
                for k in 0..4 {
                    let bound = squared_frobenius_tail(&stacked, k).unwrap() / (denom * (4 - k) as f64);
                    assert!(worst <= bound + SLACK);
                }
            }
            let c = a1.t_matvec(&b1).unwrap();
            let c2 = a2.t_matvec(&b2).unwrap();
            for j in 0..8 {
                assert!((merged.c()[j] - (c[j] + c2[j])).abs() < 1e-12);
            }
            assert!(merged.alpha() >= s1.alpha() + s2.alpha());
        }
    }
}

#[test]
fn merge_rejects_mismatch_and_unflushed() {
    let a = FdSketch::new(4, 3).unwrap();
    assert!(matches!(a.merge(&FdSketch::new(5, 3).unwrap()), Err(FdError::InvalidArgument(_))));
    assert!(matches!(a.merge(&FdSketch::new_robust(4, 3).unwrap()), Err(FdError::InvalidArgument(_))));
    let mut b = FdSketch::new(4, 3).unwrap();
    b.push(&[1.0, 0.0, 0.0], 0.0).unwrap();
    assert!(matches!(a.merge(&b), Err(FdError::State(_))));
}

#[test]
fn covariance_examples() {
    let empty = FdSketch::new(3, 4).unwrap();
    assert_eq!(empty.covariance().unwrap(), DenseMatrix::zeros(4, 4));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = gaussian(&mut rng, 20, 6);
    let s = sketch_of(Variant::Fd, &a, 3);
    let cov = s.covariance().unwrap();
    assert!(cov.asymmetry() < 1e-12);
    let eig = symmetric_eigenvalues(&cov).unwrap();
    for (i, &lambda) in eig.iter().enumerate() {
        let expect = s.sigma().get(i).map_or(0.0, |x| x * x);
        assert!((lambda - expect).abs() < 1e-9 * (1.0 + expect));
    }

    let big = FdSketch::new(2, MAX_MATERIALIZED_DIM + 1).unwrap();
    assert!(matches!(big.covariance(), Err(FdError::Refused(_))));
}

#[test]
fn v_rows_stay_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for variant in [Variant::Fd, Variant::Rfd, Variant::Isvd] {
        let a = gaussian(&mut rng, 90, 12);
        let s = sketch_of(variant, &a, 6);
        let live = s.sigma().iter().filter(|&&x| x > 0.0).count();
        assert!(live <= 6);
        assert!(s.sigma().windows(2).all(|w| w[0] >= w[1]));
        for i in 0..live {
            for j in 0..live {
                let ip = crate::linalg::dot(s.v_rows().row(i), s.v_rows().row(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn covariance_bounds_hold_on_seeded_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfd);
    for _ in 0..25 {
        let n = rng.random_range(1..=200);
        let d = rng.random_range(1..=40);
        let ell = rng.random_range(2..=20);
        let a = gaussian(&mut rng, n, d);
        let tails: Vec<f64> = (0..ell)
            .map(|k| squared_frobenius_tail(&a, k.min(n.min(d))).unwrap())
            .collect();

        let fd = sketch_of(Variant::Fd, &a, ell);
        let eig = symmetric_eigenvalues(&covariance_gap(&a, &fd)).unwrap();
        let (top, bottom) = (eig[0], eig[eig.len() - 1]);
        assert!(bottom >= -SLACK * a.gram().max_abs().max(1.0));
        for (k, tail) in tails.iter().enumerate() {
            assert!(top <= tail / (ell - k) as f64 + SLACK, "FD n={n} d={d} ell={ell} k={k}");
        }

        let rfd = sketch_of(Variant::Rfd, &a, ell);
        let gap = covariance_gap(&a, &rfd).add_diag(-rfd.alpha());
        let eig = symmetric_eigenvalues(&gap).unwrap();
        let worst = eig[0].max(-eig[eig.len() - 1]);
        for (k, tail) in tails.iter().enumerate() {
            assert!(worst <= tail / (2.0 * (ell - k) as f64) + SLACK, "RFD k={k}");
        }
    }
}

#[test]
fn exact_recovery_below_sketch_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let ell = rng.random_range(2..10);
        let rank = rng.random_range(1..ell);
        let a = gaussian(&mut rng, 50, rank).matmul(&gaussian(&mut rng, rank, 15)).unwrap();
        let s = sketch_of(Variant::Fd, &a, ell);
        let g = a.gram();
        assert!(covariance_gap(&a, &s).frobenius_norm() <= 1e-6 * g.frobenius_norm().max(1.0));
    }
}

#[test]
fn batch_splits_each_satisfy_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = gaussian(&mut rng, 60, 10);
    let ell = 5;
    let bound = (0..ell)
        .map(|k| squared_frobenius_tail(&a, k).unwrap() / (ell - k) as f64)
        .fold(f64::INFINITY, f64::min);
    let streamed = sketch_of(Variant::Fd, &a, ell);
    let mut chunked = FdSketch::new(ell, 10).unwrap();
    let mut start = 0;
    for size in [1usize, 7, 3, 5, 12, 2, 30] {
        let end = (start + size).min(60);
        let rows: Vec<Vec<f64>> = (start..end).map(|i| a.row(i).to_vec()).collect();
        chunked.reduce_step(&DenseMatrix::from_rows(&rows).unwrap()).unwrap();
        start = end;
    }
    assert_eq!(chunked.n_seen(), 60);
    for s in [&streamed, &chunked] {
        let eig = symmetric_eigenvalues(&covariance_gap(&a, s)).unwrap();
        assert!(eig[0] <= bound + SLACK);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn c_equals_dense_at_b(seed in any::<u64>(), n in 1usize..40, d in 1usize..8, ell in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, d);
        let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut s = FdSketch::new_robust(ell, d).unwrap();
        for (row, &y) in a.row_iter().zip(&b) {
            s.push(row, y).unwrap();
        }
        let dense = a.t_matvec(&b).unwrap();
        let scale = crate::linalg::norm(&dense).max(1.0);
        for (x, y) in s.c().iter().zip(&dense) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
        prop_assert!(s.alpha() >= 0.0);
    }

    #[test]
    fn alpha_never_decreases(seed in any::<u64>(), ell in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = FdSketch::new_robust(ell, 4).unwrap();
        let mut last = 0.0;
        for _ in 0..30 {
            let row: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            s.push(&row, 0.0).unwrap();
            prop_assert!(s.alpha() >= last);
            last = s.alpha();
        }
    }
}
