//! Oracle tests for the projection operations: independent naive
//! implementations, Gram-Schmidt geometry checks, and finite differences
//! against the analytic penalty gradient.

mod common;

use common::*;
use hope_core::mat::{dot, norm, Mat};
use hope_core::ProjectionMatrix;
use proptest::prelude::*;

fn random_projection(rng: &mut rand_chacha::ChaCha8Rng, m: usize, d: usize) -> ProjectionMatrix {
    let rows: Vec<Vec<f64>> = (0..m).map(|_| rand_vec(rng, d, -1.0, 1.0)).collect();
    ProjectionMatrix::from_rows(&rows).unwrap()
}

#[test]
fn project_matches_naive_matvec() {
    let mut r = rng(0x5eed_0001);
    for _ in 0..10 {
        let p = random_projection(&mut r, 4, 8);
        let x = rand_vec(&mut r, 8, -2.0, 2.0);
        let z = p.project(&x).unwrap();
        // triple-written naive oracle: explicit index loops
        for i in 0..4 {
            let mut s = 0.0;
            for j in 0..8 {
                s += p.mat()[(i, j)] * x[j];
            }
            assert!((z[i] - s).abs() < 1e-12, "row {i}: {} vs {}", z[i], s);
        }
    }
}

#[test]
fn pythagoras_split_for_orthonormal_rows() {
    let mut r = rng(0x5eed_0002);
    for _ in 0..20 {
        let rows = random_orthonormal_rows(&mut r, 3, 6);
        let p = ProjectionMatrix::from_rows(&rows).unwrap();
        let x = rand_vec(&mut r, 6, -3.0, 3.0);
        let z = p.project(&x).unwrap();
        let res = p.residual(&x).unwrap();
        let lhs = dot(&res, &res) + dot(&z, &z);
        let rhs = dot(&x, &x);
        assert!((lhs - rhs).abs() < 1e-10, "energy split violated: {lhs} vs {rhs}");
    }
}

#[test]
fn penalty_matches_double_loop_cosine_sum() {
    let mut r = rng(0x5eed_0003);
    for _ in 0..10 {
        let p = random_projection(&mut r, 4, 8);
        let mut oracle = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let ui = p.mat().row(i);
                let uj = p.mat().row(j);
                oracle += dot(ui, uj).abs() / (norm(ui) * norm(uj));
            }
        }
        let got = p.penalty().unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs oracle {oracle}");
    }
}

#[test]
fn correlation_sum_is_twice_penalty() {
    let mut r = rng(0x5eed_0004);
    for _ in 0..10 {
        let p = random_projection(&mut r, 5, 7);
        let c = p.correlation_sum().unwrap();
        let d = p.penalty().unwrap();
        assert!((c - 2.0 * d).abs() < 1e-12, "{c} vs 2·{d}");
    }
}

fn penalty_of_flat(flat: &[f64], m: usize, d: usize) -> f64 {
    ProjectionMatrix::new(Mat::from_vec(m, d, flat.to_vec()))
        .unwrap()
        .penalty()
        .unwrap()
}

fn min_abs_pair_dot(p: &ProjectionMatrix) -> f64 {
    let m = p.latent_dim();
    let mut min = f64::INFINITY;
    for i in 0..m {
        for j in (i + 1)..m {
            min = min.min(dot(p.mat().row(i), p.mat().row(j)).abs());
        }
    }
    min
}

#[test]
fn penalty_gradient_matches_finite_differences() {
    let mut r = rng(0x5eed_0005);
    let mut tested = 0;
    while tested < 20 {
        let p = random_projection(&mut r, 4, 8);
        // |·| is non-smooth where a pair dot crosses zero; skip those points
        if min_abs_pair_dot(&p) < 1e-8 {
            continue;
        }
        let analytic = p.penalty_gradient().unwrap();
        let fd = fd_gradient(|flat| penalty_of_flat(flat, 4, 8), p.mat().data(), 1e-6);
        let err = max_rel_err(analytic.data(), &fd);
        assert!(err < 1e-5, "point {tested}: max rel err {err}");
        tested += 1;
    }
}

#[test]
fn gradient_matrix_form_agrees_with_per_row_form() {
    let mut r = rng(0x5eed_0006);
    for _ in 0..10 {
        let p = random_projection(&mut r, 5, 9);
        let a = p.penalty_gradient().unwrap();
        let b = p.penalty_gradient_per_row().unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }
}

#[test]
fn penalty_invariant_under_row_rescaling() {
    let mut r = rng(0x5eed_0007);
    let p = random_projection(&mut r, 4, 8);
    let before = p.penalty().unwrap();

    let mut scaled = p.mat().clone();
    for v in scaled.row_mut(2) {
        *v *= 7.3;
    }
    let after = ProjectionMatrix::new(scaled).unwrap().penalty().unwrap();
    assert!((before - after).abs() < 1e-10, "{before} vs {after}");

    let mut normalized = p.clone();
    normalized.normalize_rows().unwrap();
    let nval = normalized.penalty().unwrap();
    assert!((before - nval).abs() < 1e-10, "{before} vs normalized {nval}");
}

#[test]
fn residual_is_idempotent_and_orthogonal_to_row_space() {
    let mut r = rng(0x5eed_0008);
    for _ in 0..10 {
        let rows = random_orthonormal_rows(&mut r, 3, 7);
        let p = ProjectionMatrix::from_rows(&rows).unwrap();
        let x = rand_vec(&mut r, 7, -2.0, 2.0);
        let r1 = p.residual(&x).unwrap();
        let r2 = p.residual(&r1).unwrap();
        let diff: f64 = r1
            .iter()
            .zip(r2.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "idempotence violated by {diff}");
        assert!(norm(&p.project(&r1).unwrap()) < 1e-8, "residual leaked into row space");
    }
}

proptest! {
    #[test]
    fn penalty_nonnegative_and_correlation_doubles(
        rows in prop::collection::vec(
            prop::collection::vec(-2.0f64..2.0, 6),
            1..=5,
        )
    ) {
        // reject degenerate rows so the penalty is defined
        prop_assume!(rows.iter().all(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3));
        let p = ProjectionMatrix::from_rows(&rows).unwrap();
        let d = p.penalty().unwrap();
        prop_assert!(d >= 0.0);
        let c = p.correlation_sum().unwrap();
        prop_assert!((c - 2.0 * d).abs() <= 1e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn normalize_rows_yields_unit_norms(
        rows in prop::collection::vec(
            prop::collection::vec(-3.0f64..3.0, 5),
            1..=4,
        )
    ) {
        prop_assume!(rows.iter().all(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3));
        let mut p = ProjectionMatrix::from_rows(&rows).unwrap();
        p.normalize_rows().unwrap();
        for n in p.row_norms() {
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
