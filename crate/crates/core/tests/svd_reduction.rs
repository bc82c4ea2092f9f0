use deepc_core::datasets::{build_hankel, partition_past_future, TrajectoryDataset};
use deepc_core::svd_reduction::{condense_by_energy, factorize_and_condense};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_partition(seed: u64) -> deepc_core::HankelPartition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = DMatrix::from_fn(2, 120, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(1, 120, |_, _| rng.random_range(-1.0..1.0));
    TrajectoryDataset::new(u, y, 1.0)
        .unwrap()
        .partition(3, 5)
        .unwrap()
}

fn least_squares_residual(basis: &DMatrix<f64>, target: &DVector<f64>) -> f64 {
    let svd = basis.clone().svd(true, true);
    let g = svd.solve(target, 1e-12).unwrap();
    (basis * g - target).norm()
}

#[test]
fn truncation_keeps_dominant_directions() {
    // The stacked Hankel of a ramp has rank two.
    let u = DMatrix::from_row_slice(1, 7, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    let hu = build_hankel(&u, 2).unwrap();
    let hy = build_hankel(&(u.clone() * 2.0), 2).unwrap();
    let part = partition_past_future(&hu, &hy, 1, 1).unwrap();
    let stacked = part.stacked();
    let project = |r: usize| {
        let c = factorize_and_condense(&part, r).unwrap();
        let pinv = c.condensed().clone().pseudo_inverse(1e-12).unwrap();
        c.condensed() * pinv * &stacked
    };
    assert!((project(2) - &stacked).norm() <= 1e-9 * stacked.norm());
    assert!((project(1) - &stacked).norm() > 1e-6);
}

#[test]
fn true_rank_one_matrix_is_reconstructed() {
    let u = DMatrix::from_row_slice(1, 8, &[3.0; 8]);
    let hu = build_hankel(&u, 4).unwrap();
    let hy = build_hankel(&(u.clone() * -0.5), 4).unwrap();
    let part = partition_past_future(&hu, &hy, 2, 2).unwrap();
    let stacked = part.stacked();
    let c = factorize_and_condense(&part, 1).unwrap();
    let pinv = c.condensed().clone().pseudo_inverse(1e-12).unwrap();
    let projected = c.condensed() * pinv * &stacked;
    assert!((projected - &stacked).norm() <= 1e-9);
    assert_eq!(c.numerical_rank(), 1);
}

#[test]
fn full_rank_spans_every_column() {
    let part = random_partition(1);
    let stacked = part.stacked();
    let probe = factorize_and_condense(&part, 1).unwrap();
    let rank = probe.numerical_rank();
    let c = factorize_and_condense(&part, rank).unwrap();
    assert_eq!(c.condensed().ncols(), rank);
    for j in 0..stacked.ncols() {
        let h = stacked.column(j).into_owned();
        assert!(least_squares_residual(c.condensed(), &h) <= 1e-8);
    }
    let (up, uf, yp, yf) = c.blocks();
    assert_eq!(
        (up.nrows(), uf.nrows(), yp.nrows(), yf.nrows()),
        (6, 10, 3, 5)
    );
}

#[test]
fn identity_spectrum() {
    // A Hankel of an impulse train is a permuted identity.
    let mut u = DMatrix::zeros(1, 7);
    u[(0, 3)] = 1.0;
    let hu = build_hankel(&u, 4).unwrap();
    let hy = build_hankel(&DMatrix::zeros(1, 7), 4).unwrap();
    let part = partition_past_future(&hu, &hy, 2, 2).unwrap();
    let c = factorize_and_condense(&part, 2).unwrap();
    let nonzero: Vec<f64> = c
        .singular_values()
        .iter()
        .copied()
        .filter(|s| *s > 0.5)
        .collect();
    assert_eq!(nonzero.len(), 4);
    assert!(nonzero.iter().all(|s| (s - 1.0).abs() <= 1e-12));
    // Repeated singular values leave the basis free up to rotation, so check
    // orthonormality and membership in the data's column space.
    let c = factorize_and_condense(&part, 4).unwrap();
    let gram = c.condensed().transpose() * c.condensed();
    assert!((gram - DMatrix::identity(4, 4)).amax() <= 1e-12);
    let stacked = part.stacked();
    for col in c.condensed().column_iter() {
        assert!(least_squares_residual(&stacked, &col.into_owned()) <= 1e-12);
    }
}

#[test]
fn eckart_young() {
    let part = random_partition(2);
    let stacked = part.stacked();
    let sv = factorize_and_condense(&part, 1)
        .unwrap()
        .singular_values()
        .clone();
    assert!(sv.as_slice().windows(2).all(|w| w[0] >= w[1]));
    let max_rank = sv.len();
    let mut previous = f64::INFINITY;
    for r in 1..=max_rank {
        let c = factorize_and_condense(&part, r).unwrap();
        // Independent reconstruction: project onto span(H̄) by least squares.
        let q = c.condensed().clone().qr().q();
        let approx = &q * (q.transpose() * &stacked);
        let err = (&stacked - approx).norm();
        let tail: f64 = sv.iter().skip(r).map(|s| s * s).sum::<f64>().sqrt();
        assert!((err - tail).abs() <= 1e-9 * stacked.norm(), "r={r}");
        assert!(err <= previous + 1e-12);
        previous = err;
    }
}

#[test]
fn energy_selection_and_range() {
    let part = random_partition(3);
    let c = condense_by_energy(&part, 0.999).unwrap();
    let sv = c.singular_values();
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let kept: f64 = sv.iter().take(c.rank_used()).map(|s| s * s).sum();
    assert!(kept / total >= 0.999);
    let fewer: f64 = sv.iter().take(c.rank_used() - 1).map(|s| s * s).sum();
    assert!(fewer / total < 0.999);
    assert!(factorize_and_condense(&part, 0).is_err());
    assert!(factorize_and_condense(&part, 10_000).is_err());
}
