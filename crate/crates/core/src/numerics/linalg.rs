//! Small dense factorizations: Cholesky solves, Jacobi eigendecomposition and
//! Haar-distributed orthonormal frames. Sized for K ≤ 64.

use super::matrix::{axpy, dot, Matrix, Vector};
use super::rng::SimRng;
use crate::error::{shape_err, Error, Result};

/// Lower-triangular Cholesky factor `L` with `a = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(shape_err(format!("Cholesky of non-square {:?}", a.shape())));
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let lj = l.row(j)[..j].to_vec();
            let pivot = a[(j, j)] - dot(&lj, &lj);
            // Pivots at rounding level of the diagonal count as zero.
            if !(pivot > 8.0 * n as f64 * f64::EPSILON * a[(j, j)].abs()) || !pivot.is_finite() {
                return Err(Error::Singular(format!("Cholesky pivot {pivot:e} at index {j}")));
            }
            let d = pivot.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let s = a[(i, j)] - dot(&l.row(i)[..j], &lj);
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn factor_matrix(&self) -> &Matrix {
        &self.l
    }

    /// Solves `a v = b` by forward then backward substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vector> {
        let n = self.l.rows();
        if b.len() != n {
            return Err(shape_err(format!("rhs length {} for {n}x{n} system", b.len())));
        }
        let mut v = b.to_vec();
        for i in 0..n {
            let s = v[i] - dot(&self.l.row(i)[..i], &v[..i]);
            v[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = v[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * v[k];
            }
            v[i] = s / self.l[(i, i)];
        }
        Ok(Vector::from(v))
    }
}

/// Solves `a v = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vector> {
    Cholesky::factor(a)?.solve(b)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the second matrix, so `a = V diag(λ) Vᵀ`.
pub fn sym_eig(a: &Matrix) -> Result<(Vector, Matrix)> {
    if !a.is_square() {
        return Err(shape_err(format!("eigendecomposition of non-square {:?}", a.shape())));
    }
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if a.asymmetry() > 1e-12 * scale.max(1.0) {
        return Err(shape_err("eigendecomposition input is not symmetric"));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let total = a.frobenius_norm();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // m <- Jᵀ m J with J the (p, q) rotation.
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values: Vector = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

/// `n × k` matrix with orthonormal columns drawn from the Haar measure.
///
/// Gram-Schmidt on an i.i.d. Gaussian matrix yields the QR factor whose `R`
/// has a positive diagonal, which is exactly the sign-corrected Haar draw.
/// Each column is orthogonalized twice.
pub fn haar_orthogonal(rng: &mut SimRng, n: usize, k: usize) -> Result<Matrix> {
    if n < k {
        return Err(shape_err(format!("cannot draw {k} orthonormal columns in dimension {n}")));
    }
    let g = rng.randn_matrix(n, k);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut c = g.column(j).into_inner();
        for _pass in 0..2 {
            for q in &cols {
                let proj = dot(q, &c);
                axpy(-proj, q, &mut c);
            }
        }
        let norm = dot(&c, &c).sqrt();
        if norm <= f64::EPSILON {
            return Err(Error::Singular("degenerate Gaussian draw".into()));
        }
        c.iter_mut().for_each(|v| *v /= norm);
        cols.push(c);
    }
    Ok(Matrix::from_fn(n, k, |i, j| cols[j][i]))
}
