//! PCA rotation of the feature space.
//!
//! The covariance (divisor `n - 1`) is diagonalized with the cyclic Jacobi
//! method. Components come out sorted by descending eigenvalue, and each one
//! is signed so that its largest-magnitude entry is positive (first such entry
//! on ties), which makes fitted transforms reproducible bit for bit.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::matrix::Matrix;
use crate::seed::Rng;

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaTransform {
    pub(crate) mean: Vec<f64>,
    /// `[k x d]`, orthonormal rows.
    pub(crate) components: Matrix,
    pub(crate) eigenvalues: Vec<f64>,
}

impl PcaTransform {
    /// Rebuilds a transform from stored parts, checking shapes and orthonormality.
    pub fn from_parts(mean: Vec<f64>, components: Matrix, eigenvalues: Vec<f64>) -> Result<Self> {
        let t = Self {
            mean,
            components,
            eigenvalues,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &Matrix {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }

    /// `(x - mean) * components^T`.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols("PCA input columns", self.mean.len())?;
        let k = self.k();
        let mut out = Matrix::zeros(x.rows(), k);
        let mut centered = alloc::vec![0.0; self.mean.len()];
        for i in 0..x.rows() {
            for ((c, v), m) in centered.iter_mut().zip(x.row(i)).zip(&self.mean) {
                *c = v - m;
            }
            let o = out.row_mut(i);
            for (j, oj) in o.iter_mut().enumerate() {
                *oj = self
                    .components
                    .row(j)
                    .iter()
                    .zip(&centered)
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        Ok(out)
    }

    /// `z * components + mean`; exact inverse of `transform` only when `k = d`.
    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix> {
        z.expect_cols("PCA projected columns", self.k())?;
        let d = self.mean.len();
        let mut out = Matrix::zeros(z.rows(), d);
        for i in 0..z.rows() {
            let o = out.row_mut(i);
            o.copy_from_slice(&self.mean);
            for (j, &zj) in z.row(i).iter().enumerate() {
                for (oc, c) in o.iter_mut().zip(self.components.row(j)) {
                    *oc += zj * c;
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        let k = self.components.rows();
        if k == 0 || k > d || self.components.cols() != d || self.eigenvalues.len() != k {
            return Err(Error::Corrupt(format!(
                "PCA shapes inconsistent: d = {d}, components {}x{}, {} eigenvalues",
                k,
                self.components.cols(),
                self.eigenvalues.len()
            )));
        }
        if self.mean.iter().chain(self.eigenvalues.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Corrupt("non-finite PCA parameter".into()));
        }
        if max_orthonormality_error(&self.components) > 1e-8 {
            return Err(Error::Corrupt("PCA components are not orthonormal".into()));
        }
        Ok(())
    }
}

/// Largest entry of `|C C^T - I|`.
pub fn max_orthonormality_error(c: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..c.rows() {
        for b in 0..c.rows() {
            let dot: f64 = c.row(a).iter().zip(c.row(b)).map(|(x, y)| x * y).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max(libm::fabs(dot - target));
        }
    }
    worst
}

/// Sample covariance with divisor `n - 1`, plus the column means.
pub fn covariance(x: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Empty("PCA needs at least two rows"));
    }
    let d = x.cols();
    let mut mean = alloc::vec![0.0; d];
    for r in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Matrix::zeros(d, d);
    let mut c = alloc::vec![0.0; d];
    for r in x.iter_rows() {
        for ((cj, v), m) in c.iter_mut().zip(r).zip(&mean) {
            *cj = v - m;
        }
        for a in 0..d {
            let ca = c[a];
            if ca == 0.0 {
                continue;
            }
            let row = cov.row_mut(a);
            for b in a..d {
                row[b] += ca * c[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    Ok((mean, cov))
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors
/// as the rows of a matrix, signed per the module convention.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let d = a.rows();
    a.expect_cols("symmetric matrix columns", d)?;
    let mut m = a.clone();
    let mut v = Matrix::zeros(d, d);
    for i in 0..d {
        v.set(i, i, 1.0);
    }
    let frob = sqrt(m.as_slice().iter().map(|x| x * x).sum::<f64>());
    for _ in 0..MAX_SWEEPS {
        let off = sqrt(
            (0..d)
                .flat_map(|p| (0..d).filter(move |&q| q != p).map(move |q| (p, q)))
                .map(|(p, q)| m.get(p, q) * m.get(p, q))
                .sum::<f64>(),
        );
        if off <= OFF_DIAGONAL_TOL * frob.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(d, d);
    for (row, &i) in order.iter().enumerate() {
        // column i of v is the eigenvector
        let mut lead = 0;
        for r in 1..d {
            if libm::fabs(v.get(r, i)) > libm::fabs(v.get(lead, i)) {
                lead = r;
            }
        }
        let sign = if v.get(lead, i) < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            vectors.set(row, r, sign * v.get(r, i));
        }
    }
    Ok((values, vectors))
}

fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let d = m.rows();
    // M <- J^T M J with J the (p, q) rotation
    for k in 0..d {
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..d {
        let mpk = m.get(p, k);
        let mqk = m.get(q, k);
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);
    for k in 0..d {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Fits a PCA keeping the top `k` components.
pub fn fit_pca(x: &Matrix, k: usize) -> Result<PcaTransform> {
    let d = x.cols();
    if k == 0 || k > d {
        return Err(Error::InvalidConfig(format!(
            "PCA needs 1 <= k <= {d}, got k = {k}"
        )));
    }
    let (mean, cov) = covariance(x)?;
    let (values, vectors) = symmetric_eigen(&cov)?;
    let rows: Vec<usize> = (0..k).collect();
    Ok(PcaTransform {
        mean,
        components: vectors.select_rows(&rows),
        eigenvalues: values[..k].to_vec(),
    })
}

/// Uniform draw from `[ceil(d / 2), d]`.
pub fn sample_k(d: usize, rng: &mut Rng) -> usize {
    assert!(d >= 1, "sample_k needs d >= 1");
    rng.gen_range(d.div_ceil(2)..=d)
}
