//! Modified-Bessel numerics for the von Mises-Fisher normalizer.
//!
//! The vMF density on the unit sphere in `M` dimensions is
//! `p(z) = C_M(κ) e^{z·μ}` with `κ = |μ|` and
//!
//! ```text
//! C_M(κ) = κ^{M/2−1} / ((2π)^{M/2} I_{M/2−1}(κ))
//! ```
//!
//! so everything reduces to `ln I_d(κ)`. Two regimes:
//!
//! - the ascending power series
//!   `I_d(κ) = Σ_k (κ/2)^{2k+d} / (Γ(k+d+1) k!)`, summed in log domain
//!   with adaptive truncation (relative term below 1e-16). Every term is
//!   positive, so there is no cancellation and the sum is exact to
//!   rounding; cost grows like κ/2 terms, so it is used while κ ≤ 64.
//! - the uniform asymptotic expansion in the order,
//!   `ln I_d(κ) ≈ −½ln(2πd) + d·η − ¼ln(1 + (κ/d)²)` with
//!   `η = √(1+(κ/d)²) + ln[(κ/d)/(1+√(1+(κ/d)²))]`, used for κ > 64 when
//!   d ≥ 5 (below that order the expansion degrades and the series is
//!   used regardless of κ). The correction series `u_k(t)` is omitted;
//!   `log_bessel_i_corrected` keeps its first two terms for accuracy
//!   studies of the expansion itself.
//!
//! Branching on κ alone (for orders ≥ 5) keeps adjacent-order calls such
//! as the ratio `I_{d}(κ)/I_{d−1}(κ)` on a single method.

use crate::{HopeError, Result};

/// Orders below this always use the power series; the asymptotic
/// expansion in the order is not reliable here.
pub const ASYMPTOTIC_MIN_ORDER: f64 = 5.0;

/// Arguments up to this use the power series at any order.
pub const SERIES_MAX_KAPPA: f64 = 64.0;

fn check_domain(d: f64, kappa: f64, d_min: f64) -> Result<()> {
    if !d.is_finite() || d < d_min {
        return Err(HopeError::Domain(format!("Bessel order {d} (need ≥ {d_min})")));
    }
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(HopeError::Domain(format!("Bessel argument κ={kappa} (need > 0)")));
    }
    Ok(())
}

/// `ln I_d(κ)` for `d ≥ 0.5`, `κ > 0`.
pub fn log_bessel_i(d: f64, kappa: f64) -> Result<f64> {
    check_domain(d, kappa, 0.5)?;
    Ok(log_bessel_any(d, kappa))
}

/// The asymptotic expansion with its first two `u_k(t)/d^k` correction
/// terms kept, at every argument; only for accuracy studies against
/// [`log_bessel_i`]. Requires `d ≥ 0.5`.
pub fn log_bessel_i_corrected(d: f64, kappa: f64) -> Result<f64> {
    check_domain(d, kappa, 0.5)?;
    Ok(log_bessel_asymptotic(d, kappa, 2))
}

/// `I_{half_m}(κ) / I_{half_m − 1}(κ)` ∈ (0,1); the concentration link
/// appearing in the μ-gradient. Requires `half_m ≥ 1`.
pub fn bessel_ratio(half_m: f64, kappa: f64) -> Result<f64> {
    check_domain(half_m, kappa, 1.0)?;
    // half_m − 1 may be 0 (M = 2), which the internal series handles.
    Ok((log_bessel_any(half_m, kappa) - log_bessel_any(half_m - 1.0, kappa)).exp())
}

/// `ln C_M(κ)` computed fully in log domain. Requires `M ≥ 2`, `κ > 0`.
pub fn log_vmf_normalizer(m: usize, kappa: f64) -> Result<f64> {
    if m < 2 {
        return Err(HopeError::Domain(format!("vMF dimension M={m} (need ≥ 2)")));
    }
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(HopeError::Domain(format!("vMF concentration κ={kappa} (need > 0)")));
    }
    let d = m as f64 / 2.0 - 1.0;
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(d * kappa.ln() - (d + 1.0) * two_pi.ln() - log_bessel_any(d, kappa))
}

/// Internal dispatcher; accepts any `d ≥ 0` so the normalizer works at
/// `M = 2` even though the public Bessel entry points start at 0.5.
fn log_bessel_any(d: f64, kappa: f64) -> f64 {
    if kappa <= SERIES_MAX_KAPPA || d < ASYMPTOTIC_MIN_ORDER {
        log_bessel_series(d, kappa)
    } else {
        log_bessel_asymptotic(d, kappa, 0)
    }
}

fn log_bessel_asymptotic(d: f64, kappa: f64, corrections: usize) -> f64 {
    let r = kappa / d;
    let sq = (1.0 + r * r).sqrt();
    let eta = sq + (r / (1.0 + sq)).ln();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut v = d * eta - 0.5 * (two_pi * d).ln() - 0.25 * (1.0 + r * r).ln();
    if corrections > 0 {
        let t = 1.0 / sq;
        let t2 = t * t;
        let mut corr = 1.0 + (3.0 * t - 5.0 * t * t2) / (24.0 * d);
        if corrections > 1 {
            let u2 = (81.0 * t2 - 462.0 * t2 * t2 + 385.0 * t2 * t2 * t2) / 1152.0;
            corr += u2 / (d * d);
        }
        v += corr.ln();
    }
    v
}

fn log_bessel_series(d: f64, kappa: f64) -> f64 {
    let lh = (kappa / 2.0).ln();
    // k = 0 term: d·ln(κ/2) − lnΓ(d+1)
    let mut lt = d * lh - ln_gamma(d + 1.0);
    // streaming log-sum-exp state: total = max + ln(acc)
    let mut max = lt;
    let mut acc = 1.0f64;
    let mut k = 0.0f64;
    loop {
        k += 1.0;
        // t_k / t_{k−1} = (κ/2)² / (k (d+k))
        lt += 2.0 * lh - (k.ln() + (d + k).ln());
        if lt > max {
            acc = acc * (max - lt).exp() + 1.0;
            max = lt;
        } else {
            acc += (lt - max).exp();
        }
        let decaying = kappa * kappa / (4.0 * (k + 1.0) * (d + k + 1.0)) < 1.0;
        if (decaying && lt - max < -37.0) || k > 1e6 {
            break;
        }
    }
    max + acc.ln()
}

/// Lanczos approximation (g = 7, 9 coefficients) for `ln Γ(x)`, `x > 0`.
fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma domain");
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection: Γ(x)Γ(1−x) = π/sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}
