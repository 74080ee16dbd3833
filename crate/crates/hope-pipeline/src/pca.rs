//! Principal component analysis over patch matrices.
//!
//! The covariance is a small dense symmetric matrix (patch dimension
//! squared), so eigenpairs come from a cyclic Jacobi sweep rather than an
//! external solver.

use hope_core::{HopeError, Mat, Result};

/// Orthonormal principal basis of a data matrix.
#[derive(Debug, Clone)]
pub struct PcaModel {
    basis: Mat,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn new(basis: Mat, mean: Vec<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        if basis.cols() != mean.len() {
            return Err(HopeError::DimensionMismatch(format!(
                "basis is {}x{} but mean has {} entries",
                basis.rows(),
                basis.cols(),
                mean.len()
            )));
        }
        if eigenvalues.len() < basis.rows() {
            return Err(HopeError::InvalidArgument(format!(
                "{} eigenvalues cannot cover a rank-{} basis",
                eigenvalues.len(),
                basis.rows()
            )));
        }
        Ok(PcaModel { basis, mean, eigenvalues })
    }

    /// `M×D` matrix whose rows are the leading principal directions.
    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Full spectrum in descending order, floored at zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn latent_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.basis.cols()
    }

    /// Share of the total spectrum carried by the leading `m` directions.
    pub fn energy_fraction(&self, m: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().take(m).sum::<f64>() / total
    }

    /// Smallest dimension whose leading eigenvalues reach `fraction` of the
    /// total spectrum. Returns the full dimension when the target is never
    /// reached (possible only through rounding).
    pub fn dims_for_energy(&self, fraction: f64) -> usize {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 || fraction <= 0.0 {
            return 0;
        }
        let target = fraction.min(1.0) * total;
        let mut acc = 0.0;
        for (i, ev) in self.eigenvalues.iter().enumerate() {
            acc += ev;
            if acc >= target {
                return i + 1;
            }
        }
        self.eigenvalues.len()
    }

    /// Centers `x` and projects it onto the basis.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "input has dimension {}, basis expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let centered: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(v, m)| v - m).collect();
        Ok(self.basis.matvec(&centered))
    }

    /// Row-wise [`PcaModel::project`].
    pub fn project_batch(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.input_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "batch has dimension {}, basis expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut centered = x.clone();
        for n in 0..centered.rows() {
            for (v, m) in centered.row_mut(n).iter_mut().zip(self.mean.iter()) {
                *v -= m;
            }
        }
        Ok(centered.matmul_nt(&self.basis))
    }

    /// Reconstruction `mean + Bᵀ(B(x − mean))` from the truncated basis.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.project(x)?;
        let mut out = self.basis.matvec_t(&z);
        for (o, m) in out.iter_mut().zip(self.mean.iter()) {
            *o += m;
        }
        Ok(out)
    }
}

/// Eigenvalues (descending) and matching eigenvector rows of a symmetric
/// matrix, by cyclic Jacobi rotations.
pub fn symmetric_eigen(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    let n = a.rows();
    if n == 0 || a.cols() != n {
        return Err(HopeError::InvalidArgument(format!(
            "need a nonempty square matrix, got {}x{}",
            n,
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(HopeError::Numeric("non-finite matrix entry".into()));
    }

    // work on the symmetrized copy so tiny asymmetries cannot stall the sweep
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m.row_mut(i)[j] = 0.5 * (a.row(i)[j] + a.row(j)[i]);
        }
    }
    let mut v = Mat::identity(n);

    let scale: f64 = (0..n).map(|i| m.row(i)[i].abs()).fold(f64::MIN_POSITIVE, f64::max);
    let tol = 1e-14 * scale.max(off_diagonal_norm(&m));

    for _ in 0..100 {
        if off_diagonal_norm(&m) <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m.row(p)[q];
                if apq.abs() <= tol / (n * n) as f64 {
                    continue;
                }
                let theta = (m.row(q)[q] - m.row(p)[p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    if off_diagonal_norm(&m) > tol.max(1e-10 * scale) {
        return Err(HopeError::Numeric("Jacobi eigensolver did not converge".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.row(j)[j].partial_cmp(&m.row(i)[i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m.row(i)[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (row, &i) in order.iter().enumerate() {
        // eigenvectors accumulate as columns of v
        for j in 0..n {
            vectors.row_mut(row)[j] = v.row(j)[i];
        }
    }
    Ok((eigenvalues, vectors))
}

fn off_diagonal_norm(m: &Mat) -> f64 {
    let n = m.rows();
    let mut sum = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                sum += m.row(p)[q] * m.row(p)[q];
            }
        }
    }
    sum.sqrt()
}

/// Applies the rotation `JᵀMJ` in rows/columns `(p, q)` and accumulates
/// `V ← VJ`.
fn rotate(m: &mut Mat, v: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for i in 0..n {
        let aip = m.row(i)[p];
        let aiq = m.row(i)[q];
        m.row_mut(i)[p] = c * aip - s * aiq;
        m.row_mut(i)[q] = s * aip + c * aiq;
    }
    for j in 0..n {
        let apj = m.row(p)[j];
        let aqj = m.row(q)[j];
        m.row_mut(p)[j] = c * apj - s * aqj;
        m.row_mut(q)[j] = s * apj + c * aqj;
    }
    for i in 0..n {
        let vip = v.row(i)[p];
        let viq = v.row(i)[q];
        v.row_mut(i)[p] = c * vip - s * viq;
        v.row_mut(i)[q] = s * vip + c * viq;
    }
}

/// Fits the leading `m` principal directions of `data` (rows are samples).
///
/// Requires more samples than dimensions so the covariance is estimated
/// from an overdetermined system.
pub fn fit_pca(data: &Mat, m: usize) -> Result<PcaModel> {
    let n = data.rows();
    let d = data.cols();
    if n <= d {
        return Err(HopeError::InvalidArgument(format!(
            "need more samples than dimensions, got {n} samples in {d}-D"
        )));
    }
    if m == 0 || m > d {
        return Err(HopeError::InvalidArgument(format!(
            "target dimension {m} must lie in [1, {d}]"
        )));
    }
    if !data.is_finite() {
        return Err(HopeError::Numeric("non-finite sample".into()));
    }

    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (acc, v) in mean.iter_mut().zip(data.row(i)) {
            *acc += v;
        }
    }
    for acc in mean.iter_mut() {
        *acc /= n as f64;
    }

    let mut centered = data.clone();
    for i in 0..n {
        for (v, mu) in centered.row_mut(i).iter_mut().zip(mean.iter()) {
            *v -= mu;
        }
    }
    let mut cov = centered.matmul_tn(&centered);
    cov.scale(1.0 / n as f64);

    let (raw_eigenvalues, vectors) = symmetric_eigen(&cov)?;
    let eigenvalues: Vec<f64> = raw_eigenvalues.iter().map(|&ev| ev.max(0.0)).collect();

    let mut basis = Mat::zeros(m, d);
    for r in 0..m {
        basis.row_mut(r).copy_from_slice(vectors.row(r));
    }
    PcaModel::new(basis, mean, eigenvalues)
}
