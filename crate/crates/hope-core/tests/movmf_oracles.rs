//! Summation, closed-form, and finite-difference oracles for the movMF
//! mixture, including the latent normalization Jacobian inside the U
//! gradient.

mod common;

use common::{fd_gradient, max_rel_err, rand_vec, rel_err, rng};
use hope_core::bessel::log_vmf_normalizer;
use hope_core::mat::Mat;
use hope_core::movmf::MovMf;
use hope_core::projection::ProjectionMatrix;
use rand_chacha::ChaCha8Rng;

fn random_movmf(r: &mut ChaCha8Rng, k: usize, m: usize) -> MovMf {
    let raw = rand_vec(r, k, 0.2, 1.0);
    let sum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
    // rows are κ_k times a direction; keep κ in a benign range
    let dirs = Mat::from_vec(k, m, rand_vec(r, k * m, -1.5, 1.5));
    MovMf::new(weights, dirs).unwrap()
}

fn random_proj(r: &mut ChaCha8Rng, m: usize, d: usize) -> ProjectionMatrix {
    ProjectionMatrix::new(Mat::from_vec(m, d, rand_vec(r, m * d, -1.0, 1.0))).unwrap()
}

fn unit_rows(r: &mut ChaCha8Rng, n: usize, m: usize) -> Mat {
    let mut z = Mat::from_vec(n, m, rand_vec(r, n * m, -1.0, 1.0));
    for i in 0..n {
        let row = z.row_mut(i);
        let nrm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in row.iter_mut() {
            *v /= nrm;
        }
    }
    z
}

#[test]
fn m3_likelihood_matches_fully_closed_form() {
    // M=3 admits C₃(κ) = κ/(4π sinh κ): the oracle shares no code at all
    let (k, m, n) = (3, 3, 4);
    let mut r = rng(201);
    let mv = random_movmf(&mut r, k, m);
    let u = ProjectionMatrix::new(Mat::identity(m)).unwrap();
    let z = unit_rows(&mut r, n, m);

    let mut want = 0.0;
    for i in 0..n {
        let mut p = 0.0;
        for c in 0..k {
            let mu: Vec<f64> = mv.mean_dirs().row(c).to_vec();
            let kappa: f64 = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            let c3 = kappa / (4.0 * std::f64::consts::PI * kappa.sinh());
            let dot: f64 = z.row(i).iter().zip(&mu).map(|(a, b)| a * b).sum();
            p += mv.weights()[c] * c3 * dot.exp();
        }
        want += p.ln();
    }
    let got = mv.log_likelihood(&u, &z, false).unwrap();
    assert!(rel_err(got, want) < 1e-9, "{got} vs {want}");
}

#[test]
fn likelihood_matches_direct_summation_m5() {
    let (k, m, n) = (3, 5, 4);
    let mut r = rng(211);
    let mv = random_movmf(&mut r, k, m);
    let u = ProjectionMatrix::new(Mat::identity(m)).unwrap();
    let z = unit_rows(&mut r, n, m);

    let mut want = 0.0;
    for i in 0..n {
        let mut p = 0.0;
        for c in 0..k {
            let mu: Vec<f64> = mv.mean_dirs().row(c).to_vec();
            let kappa: f64 = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            let lc = log_vmf_normalizer(m, kappa).unwrap();
            let dot: f64 = z.row(i).iter().zip(&mu).map(|(a, b)| a * b).sum();
            p += mv.weights()[c] * (lc + dot).exp();
        }
        want += p.ln();
    }
    let got = mv.log_likelihood(&u, &z, false).unwrap();
    assert!(rel_err(got, want) < 1e-10, "{got} vs {want}");
}

#[test]
fn normalize_flag_equals_prenormalized_input() {
    let (k, m, d, n) = (3, 4, 7, 5);
    let mut r = rng(221);
    let mv = random_movmf(&mut r, k, m);
    let u = random_proj(&mut r, m, d);
    let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));

    let auto = mv.log_likelihood(&u, &batch, true).unwrap();

    // normalize by hand, then feed through the identity with the flag off
    let mut z = u.project_batch(&batch);
    for i in 0..n {
        let row = z.row_mut(i);
        let nrm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in row.iter_mut() {
            *v /= nrm;
        }
    }
    let eye = ProjectionMatrix::new(Mat::identity(m)).unwrap();
    let manual = mv.log_likelihood(&eye, &z, false).unwrap();
    assert!((auto - manual).abs() < 1e-10, "{auto} vs {manual}");
}

#[test]
fn occupancy_matches_bayes_ratios() {
    let (k, m) = (4, 4);
    let mut r = rng(231);
    let mv = random_movmf(&mut r, k, m);
    let z = unit_rows(&mut r, 1, m);
    let zr: Vec<f64> = z.row(0).to_vec();

    let gamma = mv.occupancy(&zr).unwrap();
    assert!((gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let joint: Vec<f64> = (0..k)
        .map(|c| {
            let mu: Vec<f64> = mv.mean_dirs().row(c).to_vec();
            let kappa: f64 = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            let lc = log_vmf_normalizer(m, kappa).unwrap();
            let dot: f64 = zr.iter().zip(&mu).map(|(a, b)| a * b).sum();
            mv.weights()[c] * (lc + dot).exp()
        })
        .collect();
    let total: f64 = joint.iter().sum();
    for c in 0..k {
        assert!(rel_err(gamma[c], joint[c] / total) < 1e-10, "component {c}");
    }
}

#[test]
fn mu_gradient_matches_finite_differences() {
    let (k, m, d, n) = (3, 4, 6, 5);
    for trial in 0..10u64 {
        let mut r = rng(9300 + trial);
        let mv = random_movmf(&mut r, k, m);
        let u = random_proj(&mut r, m, d);
        let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));

        let analytic = mv.gradients(&u, &batch).unwrap().d_mu;
        let dirs0: Vec<f64> = mv.mean_dirs().data().to_vec();
        let fd = fd_gradient(
            |x| {
                let mv2 = MovMf::new(mv.weights().to_vec(), Mat::from_vec(k, m, x.to_vec()))
                    .unwrap();
                mv2.log_likelihood(&u, &batch, true).unwrap()
            },
            &dirs0,
            1e-6,
        );
        let err = max_rel_err(analytic.data(), &fd);
        assert!(err < 1e-5, "trial {trial}: dMu max rel err {err:.2e}");
    }
}

#[test]
fn u_gradient_matches_finite_differences_through_normalization() {
    // the latent normalization z = Ux/|Ux| sits inside the likelihood, so
    // this validates the projector term (I − zzᵀ)/|z̃| of the U gradient
    let (k, m, d, n) = (3, 3, 5, 5);
    for trial in 0..10u64 {
        let mut r = rng(9400 + trial);
        let mv = random_movmf(&mut r, k, m);
        let flat = rand_vec(&mut r, m * d, -1.0, 1.0);
        let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));

        let u = ProjectionMatrix::new(Mat::from_vec(m, d, flat.clone())).unwrap();
        let analytic = mv.gradients(&u, &batch).unwrap().d_u;
        let fd = fd_gradient(
            |x| {
                let u2 = ProjectionMatrix::new(Mat::from_vec(m, d, x.to_vec())).unwrap();
                mv.log_likelihood(&u2, &batch, true).unwrap()
            },
            &flat,
            1e-6,
        );
        let err = max_rel_err(analytic.data(), &fd);
        assert!(err < 1e-5, "trial {trial}: dU max rel err {err:.2e}");
    }
}

#[test]
fn weight_gradient_matches_simplex_directional_derivatives() {
    let (k, m, d, n) = (4, 3, 5, 5);
    for trial in 0..10u64 {
        let mut r = rng(9500 + trial);
        let mv = random_movmf(&mut r, k, m);
        let u = random_proj(&mut r, m, d);
        let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));

        let d_pi = mv.gradients(&u, &batch).unwrap().d_pi;
        let f = |w: &[f64]| {
            let mv2 = MovMf::new(w.to_vec(), mv.mean_dirs().clone()).unwrap();
            mv2.log_likelihood(&u, &batch, true).unwrap()
        };
        let h = 1e-7;
        for _ in 0..6 {
            let mut v = rand_vec(&mut r, k, -1.0, 1.0);
            let mean: f64 = v.iter().sum::<f64>() / k as f64;
            for vi in v.iter_mut() {
                *vi -= mean;
            }
            let wp: Vec<f64> = mv.weights().iter().zip(&v).map(|(w, vi)| w + h * vi).collect();
            let wm: Vec<f64> = mv.weights().iter().zip(&v).map(|(w, vi)| w - h * vi).collect();
            let fd_dir = (f(&wp) - f(&wm)) / (2.0 * h);
            let analytic_dir: f64 = d_pi.iter().zip(&v).map(|(g, vi)| g * vi).sum();
            assert!(
                rel_err(fd_dir, analytic_dir) < 1e-5,
                "trial {trial}: directional {analytic_dir} vs fd {fd_dir}"
            );
        }
    }
}

#[test]
fn latent_rotation_leaves_likelihood_unchanged() {
    // vMF is isotropic: (U, μ) → (RU, Rμ) for orthogonal R is a no-op
    let (k, m, d, n) = (3, 4, 6, 5);
    let mut r = rng(241);
    let mv = random_movmf(&mut r, k, m);
    let u = random_proj(&mut r, m, d);
    let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));
    let base = mv.log_likelihood(&u, &batch, true).unwrap();

    let rot = Mat::from_rows(&common::random_orthonormal_rows(&mut r, m, m));
    let u2 = ProjectionMatrix::new(rot.matmul(u.mat())).unwrap();
    let dirs2 = mv.mean_dirs().matmul_nt(&rot); // rows μ_k → R μ_k
    let mv2 = MovMf::new(mv.weights().to_vec(), dirs2).unwrap();
    let rotated = mv2.log_likelihood(&u2, &batch, true).unwrap();
    assert!((base - rotated).abs() < 1e-8, "{base} vs {rotated}");
}

#[test]
fn component_permutation_leaves_likelihood_unchanged() {
    let (k, m, d, n) = (4, 3, 5, 5);
    let mut r = rng(251);
    let mv = random_movmf(&mut r, k, m);
    let u = random_proj(&mut r, m, d);
    let batch = Mat::from_vec(n, d, rand_vec(&mut r, n * d, -1.0, 1.0));
    let base = mv.log_likelihood(&u, &batch, true).unwrap();

    let perm = [1usize, 3, 0, 2];
    let weights: Vec<f64> = perm.iter().map(|&p| mv.weights()[p]).collect();
    let dirs = Mat::from_rows(
        &perm.iter().map(|&p| mv.mean_dirs().row(p).to_vec()).collect::<Vec<_>>(),
    );
    let mv2 = MovMf::new(weights, dirs).unwrap();
    let permuted = mv2.log_likelihood(&u, &batch, true).unwrap();
    assert!((base - permuted).abs() < 1e-12, "{base} vs {permuted}");
}
