//! Naive-summation and finite-difference oracles for the diagonal GMM.
//!
//! The density oracle multiplies per-axis Gaussians in the linear domain,
//! sharing nothing with the library's log-domain path.

mod common;

use common::{fd_gradient, max_rel_err, rand_vec, rel_err, rng};
use hope_core::gmm::DiagonalGmm;
use hope_core::mat::Mat;
use hope_core::projection::ProjectionMatrix;
use rand_chacha::ChaCha8Rng;

fn random_gmm(r: &mut ChaCha8Rng, k: usize, m: usize) -> DiagonalGmm {
    let raw = rand_vec(r, k, 0.2, 1.0);
    let sum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
    let means = Mat::from_vec(k, m, rand_vec(r, k * m, -1.5, 1.5));
    let variances = Mat::from_vec(k, m, rand_vec(r, k * m, 0.3, 2.0));
    DiagonalGmm::new(weights, means, variances).unwrap()
}

fn random_proj(r: &mut ChaCha8Rng, m: usize, d: usize) -> ProjectionMatrix {
    ProjectionMatrix::new(Mat::from_vec(m, d, rand_vec(r, m * d, -1.0, 1.0))).unwrap()
}

/// Linear-domain mixture density at one latent point.
fn naive_density(g: &DiagonalGmm, z: &[f64]) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    (0..g.k())
        .map(|k| {
            let mut p = g.weights()[k];
            for m in 0..g.latent_dim() {
                let mu = g.means()[(k, m)];
                let s2 = g.variances()[(k, m)];
                p *= (-(z[m] - mu) * (z[m] - mu) / (2.0 * s2)).exp() / (two_pi * s2).sqrt();
            }
            p
        })
        .sum()
}

#[test]
fn log_likelihood_matches_naive_summation() {
    let (k, m, d, n) = (3, 4, 7, 6);
    let mut r = rng(101);
    let g = random_gmm(&mut r, k, m);
    let u = random_proj(&mut r, m, d);
    let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));

    let mut want = 0.0;
    for i in 0..n {
        // z = Ux by direct loops
        let mut z = vec![0.0; m];
        for a in 0..m {
            z[a] = (0..d).map(|b| u.mat()[(a, b)] * batch[(i, b)]).sum();
        }
        want += naive_density(&g, &z).ln();
    }
    let got = g.log_likelihood(&u, &batch).unwrap();
    assert!(rel_err(got, want) < 1e-10, "{got} vs {want}");
}

#[test]
fn occupancy_matches_bayes_ratios() {
    let (k, m) = (4, 3);
    let mut r = rng(111);
    let g = random_gmm(&mut r, k, m);
    let z = rand_vec(&mut r, m, -1.0, 1.0);

    let gamma = g.occupancy(&z).unwrap();
    assert!((gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let two_pi = 2.0 * std::f64::consts::PI;
    let joint: Vec<f64> = (0..k)
        .map(|c| {
            let mut p = g.weights()[c];
            for a in 0..m {
                let mu = g.means()[(c, a)];
                let s2 = g.variances()[(c, a)];
                p *= (-(z[a] - mu) * (z[a] - mu) / (2.0 * s2)).exp() / (two_pi * s2).sqrt();
            }
            p
        })
        .collect();
    let total: f64 = joint.iter().sum();
    for c in 0..k {
        assert!(rel_err(gamma[c], joint[c] / total) < 1e-10, "component {c}");
    }
}

#[test]
fn u_gradient_matches_finite_differences() {
    let (k, m, d, n) = (3, 3, 5, 6);
    for trial in 0..10u64 {
        let mut r = rng(8200 + trial);
        let g = random_gmm(&mut r, k, m);
        let flat = rand_vec(&mut r, m * d, -1.0, 1.0);
        let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));

        let u = ProjectionMatrix::new(Mat::from_vec(m, d, flat.clone())).unwrap();
        let analytic = g.gradients(&u, &batch).unwrap().d_u;
        let fd = fd_gradient(
            |x| {
                let u = ProjectionMatrix::new(Mat::from_vec(m, d, x.to_vec())).unwrap();
                g.log_likelihood(&u, &batch).unwrap()
            },
            &flat,
            1e-6,
        );
        let err = max_rel_err(analytic.data(), &fd);
        assert!(err < 1e-5, "trial {trial}: dU max rel err {err:.2e}");
    }
}

#[test]
fn mean_gradient_matches_finite_differences() {
    let (k, m, d, n) = (3, 3, 5, 6);
    for trial in 0..10u64 {
        let mut r = rng(8300 + trial);
        let g = random_gmm(&mut r, k, m);
        let u = random_proj(&mut r, m, d);
        let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));

        let analytic = g.gradients(&u, &batch).unwrap().d_mu;
        let means0: Vec<f64> = g.means().data().to_vec();
        let fd = fd_gradient(
            |x| {
                let g2 = DiagonalGmm::new(
                    g.weights().to_vec(),
                    Mat::from_vec(k, m, x.to_vec()),
                    g.variances().clone(),
                )
                .unwrap();
                g2.log_likelihood(&u, &batch).unwrap()
            },
            &means0,
            1e-6,
        );
        let err = max_rel_err(analytic.data(), &fd);
        assert!(err < 1e-5, "trial {trial}: dMu max rel err {err:.2e}");
    }
}

#[test]
fn variance_gradient_matches_finite_differences() {
    let (k, m, d, n) = (2, 3, 4, 6);
    for trial in 0..10u64 {
        let mut r = rng(8400 + trial);
        let g = random_gmm(&mut r, k, m);
        let u = random_proj(&mut r, m, d);
        let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));

        let analytic = g.gradients(&u, &batch).unwrap().d_var;
        let var0: Vec<f64> = g.variances().data().to_vec();
        let fd = fd_gradient(
            |x| {
                let g2 = DiagonalGmm::new(
                    g.weights().to_vec(),
                    g.means().clone(),
                    Mat::from_vec(k, m, x.to_vec()),
                )
                .unwrap();
                g2.log_likelihood(&u, &batch).unwrap()
            },
            &var0,
            1e-7,
        );
        let err = max_rel_err(analytic.data(), &fd);
        assert!(err < 1e-5, "trial {trial}: dVar max rel err {err:.2e}");
    }
}

#[test]
fn weight_gradient_matches_simplex_directional_derivatives() {
    // π lives on the simplex: compare v·∇π against finite differences
    // along zero-sum directions v, which keep π + hv on the simplex.
    let (k, m, d, n) = (4, 3, 5, 6);
    for trial in 0..10u64 {
        let mut r = rng(8500 + trial);
        let g = random_gmm(&mut r, k, m);
        let u = random_proj(&mut r, m, d);
        let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));

        let d_pi = g.gradients(&u, &batch).unwrap().d_pi;
        let f = |w: &[f64]| {
            let g2 =
                DiagonalGmm::new(w.to_vec(), g.means().clone(), g.variances().clone()).unwrap();
            g2.log_likelihood(&u, &batch).unwrap()
        };
        let h = 1e-7;
        for _ in 0..6 {
            let mut v = rand_vec(&mut r, k, -1.0, 1.0);
            let mean: f64 = v.iter().sum::<f64>() / k as f64;
            for vi in v.iter_mut() {
                *vi -= mean;
            }
            let wp: Vec<f64> = g.weights().iter().zip(&v).map(|(w, vi)| w + h * vi).collect();
            let wm: Vec<f64> = g.weights().iter().zip(&v).map(|(w, vi)| w - h * vi).collect();
            let fd_dir = (f(&wp) - f(&wm)) / (2.0 * h);
            let analytic_dir: f64 = d_pi.iter().zip(&v).map(|(gq, vi)| gq * vi).sum();
            assert!(
                rel_err(fd_dir, analytic_dir) < 1e-5,
                "trial {trial}: directional {analytic_dir} vs fd {fd_dir}"
            );
        }
    }
}

#[test]
fn component_permutation_leaves_likelihood_unchanged() {
    let (k, m, d, n) = (4, 3, 6, 5);
    let mut r = rng(121);
    let g = random_gmm(&mut r, k, m);
    let u = random_proj(&mut r, m, d);
    let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));
    let base = g.log_likelihood(&u, &batch).unwrap();

    let perm = [2usize, 0, 3, 1];
    let weights: Vec<f64> = perm.iter().map(|&p| g.weights()[p]).collect();
    let means = Mat::from_rows(&perm.iter().map(|&p| g.means().row(p).to_vec()).collect::<Vec<_>>());
    let vars = Mat::from_rows(
        &perm.iter().map(|&p| g.variances().row(p).to_vec()).collect::<Vec<_>>(),
    );
    let g2 = DiagonalGmm::new(weights, means, vars).unwrap();
    let permuted = g2.log_likelihood(&u, &batch).unwrap();
    assert!((base - permuted).abs() < 1e-12, "{base} vs {permuted}");
}

#[test]
fn latent_axis_permutation_is_absorbed_by_u() {
    // permuting latent axes of (U, μ, σ²) together is a no-op
    let (k, m, d, n) = (3, 4, 6, 5);
    let mut r = rng(131);
    let g = random_gmm(&mut r, k, m);
    let u = random_proj(&mut r, m, d);
    let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));
    let base = g.log_likelihood(&u, &batch).unwrap();

    let perm = [3usize, 1, 0, 2];
    let u2 = ProjectionMatrix::from_rows(
        &perm.iter().map(|&p| u.mat().row(p).to_vec()).collect::<Vec<_>>(),
    )
    .unwrap();
    let remap = |mat: &Mat| {
        let mut out = Mat::zeros(k, m);
        for c in 0..k {
            for (new_a, &old_a) in perm.iter().enumerate() {
                out[(c, new_a)] = mat[(c, old_a)];
            }
        }
        out
    };
    let g2 = DiagonalGmm::new(g.weights().to_vec(), remap(g.means()), remap(g.variances()))
        .unwrap();
    let permuted = g2.log_likelihood(&u2, &batch).unwrap();
    assert!((base - permuted).abs() < 1e-12, "{base} vs {permuted}");
}
