use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trackreg::coords::jacobians_at;
use trackreg::{build_fim, combine_sensors, crlb_diag, FimBlock, FimProblem};

fn random_block(rng: &mut ChaCha8Rng, d: usize, target: usize, frame: usize) -> FimBlock<f64> {
    let r = rng.random_range(5000.0..25000.0);
    let th = rng.random_range(-3.0..3.0);
    let a = Matrix2::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    FimBlock::against_reference(
        target,
        frame,
        &jacobians_at(r, th),
        d,
        a * a.transpose() * 100.0 + Matrix2::identity() * 50.0,
    )
}

/// −log-likelihood of stacked observations, up to a constant.
fn neg_log_lik(blocks: &[FimBlock<f64>], ys: &[Vector2<f64>], b: &DVector<f64>) -> f64 {
    blocks
        .iter()
        .zip(ys)
        .map(|(blk, y)| {
            let gb = &blk.g * b;
            let e = y - Vector2::new(gb[0], gb[1]);
            0.5 * (e.transpose() * blk.r.try_inverse().unwrap() * e)[(0, 0)]
        })
        .sum()
}

#[test]
fn information_matches_finite_difference_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for instance in 0..50 {
        let d = if instance % 2 == 0 { 2 } else { 4 };
        let n = rng.random_range(3..8);
        let blocks: Vec<_> = (0..n).map(|i| random_block(&mut rng, d, i, 0)).collect();
        let ys: Vec<Vector2<f64>> = (0..n)
            .map(|_| Vector2::from_fn(|_, _| 30.0 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let j = build_fim(d, &blocks).unwrap().j;
        let b0 = DVector::from_column_slice(&[20.0, 1e-3, 1e-3, 1e-3][..d]);
        // steps scaled to each parameter's natural size
        let steps = DVector::from_column_slice(&[1e-1, 1e-5, 1e-5, 1e-5][..d]);
        let mut hess = DMatrix::zeros(d, d);
        for a in 0..d {
            for c in 0..d {
                let f = |sa: f64, sc: f64| {
                    let mut b = b0.clone();
                    b[a] += sa * steps[a];
                    b[c] += sc * steps[c];
                    neg_log_lik(&blocks, &ys, &b)
                };
                hess[(a, c)] = (f(1.0, 1.0) - f(1.0, -1.0) - f(-1.0, 1.0) + f(-1.0, -1.0))
                    / (4.0 * steps[a] * steps[c]);
            }
        }
        for a in 0..d {
            for c in 0..d {
                let scale = (j[(a, a)] * j[(c, c)]).sqrt();
                assert!(
                    (hess[(a, c)] - j[(a, c)]).abs() <= 1e-3 * scale,
                    "instance {instance} ({a},{c})"
                );
            }
        }
    }
}

#[test]
fn bound_never_increases_with_more_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut p = FimProblem::new(2);
    let mut last = DVector::from_element(2, f64::INFINITY);
    for k in 0..30 {
        for t in 0..4 {
            p.add(&random_block(&mut rng, 2, t, k)).unwrap();
        }
        let c = crlb_diag(&p).unwrap();
        assert!(c[0] <= last[0] * (1.0 + 1e-12) && c[1] <= last[1] * (1.0 + 1e-12));
        last = c;
    }
}

#[test]
fn accumulation_is_partition_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let blocks: Vec<_> = (0..40)
        .map(|i| random_block(&mut rng, 4, i % 4, i / 4))
        .collect();
    let whole = build_fim(4, &blocks).unwrap();
    let mut left = build_fim(4, &blocks[..17]).unwrap();
    left.merge(&build_fim(4, &blocks[17..]).unwrap()).unwrap();
    assert!((whole.j.clone() - left.j).norm() <= 1e-12 * whole.j.norm());
    assert_eq!(whole.blocks, left.blocks);
}

#[test]
fn combination_matches_generalized_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let ms: Vec<(Vector2<f64>, Matrix2<f64>)> = (0..4)
            .map(|_| {
                let a = Matrix2::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                (
                    Vector2::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)),
                    a * a.transpose() + Matrix2::identity(),
                )
            })
            .collect();
        // stacked GLS for a common mean: X = [I; I; I; I]
        let mut x = DMatrix::zeros(8, 2);
        let mut w = DMatrix::zeros(8, 8);
        let mut y = DVector::zeros(8);
        for (i, (z, r)) in ms.iter().enumerate() {
            x.view_mut((2 * i, 0), (2, 2)).fill_with_identity();
            w.view_mut((2 * i, 2 * i), (2, 2))
                .copy_from(&r.try_inverse().unwrap());
            y.rows_mut(2 * i, 2).copy_from(z);
        }
        let cov = (x.transpose() * &w * &x).try_inverse().unwrap();
        let est = &cov * x.transpose() * &w * y;
        let ri = Matrix2::identity() * 3.0;
        let (c, total) = combine_sensors(&ms, &ri).unwrap();
        assert!((c.z_comb - Vector2::new(est[0], est[1])).norm() <= 1e-10 * (1.0 + est.norm()));
        assert!((c.r_comb - Matrix2::from_fn(|i, j| cov[(i, j)])).norm() <= 1e-10 * cov.norm());
        assert!((total - c.r_comb - ri).norm() <= 1e-12);
    }
}
