//! Linear solvers: banded Cholesky for the per-slab systems and a
//! preconditioned conjugate gradient method used both for large slab systems
//! and matrix-free in the optimizer.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `y += alpha x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cholesky factor `A = L L^T` of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw..=i]
    lower: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        assert_eq!(a.rows(), a.cols(), "band Cholesky needs a square matrix");
        let n = a.rows();
        let bw = a.bandwidth();
        let width = bw + 1;
        let mut lower = vec![0.0; n * width];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    lower[i * width + j + bw - i] = v;
                }
            }
        }
        for i in 0..n {
            let first = i.saturating_sub(bw);
            for j in first..=i {
                let start = first.max(j.saturating_sub(bw));
                let mut s = lower[i * width + j + bw - i];
                for k in start..j {
                    s -= lower[i * width + k + bw - i] * lower[j * width + k + bw - j];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    lower[i * width + bw] = s.sqrt();
                } else {
                    lower[i * width + j + bw - i] = s / lower[j * width + bw];
                }
            }
        }
        Ok(Self { n, bw, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (bw, width) = (self.bw, self.bw + 1);
        for i in 0..self.n {
            let first = i.saturating_sub(bw);
            let row = &self.lower[i * width..(i + 1) * width];
            let mut s = x[i];
            for k in first..i {
                s -= row[k + bw - i] * x[k];
            }
            x[i] = s / row[bw];
        }
        for i in (0..self.n).rev() {
            x[i] /= self.lower[i * width + bw];
            let xi = x[i];
            let first = i.saturating_sub(bw);
            for k in first..i {
                x[k] -= self.lower[i * width + k + bw - i] * xi;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final preconditioner-free relative residual `|b - Ax| / |b|`.
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for `A x = b` with `A` given as an
/// operator. `precond` applies an approximation of `A^{-1}`.
pub fn pcg<A, P>(
    mut apply: A,
    mut precond: P,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    A: FnMut(&[f64], &mut [f64]) -> Result<()>,
    P: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if b_norm == 0.0 && x0.is_none() {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut res = norm2(&r) / scale;
    if res <= rel_tol {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: res });
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !rz.is_finite() {
            return Err(Error::CgBreakdown { iterations: it, residual: res });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        res = norm2(&r) / scale;
        if res <= rel_tol {
            return Ok(CgOutcome { x, iterations: it, relative_residual: res });
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::CgBreakdown { iterations: max_iter, residual: res })
}

/// Solver for a fixed symmetric positive definite sparse system.
#[derive(Debug, Clone)]
pub enum SpdSolver {
    Direct(BandCholesky),
    Iterative { matrix: SparseMatrix, inv_diag: Vec<f64>, rel_tol: f64 },
}

impl SpdSolver {
    /// Direct factorization below `direct_limit` unknowns, Jacobi-preconditioned
    /// CG above.
    pub fn new(matrix: SparseMatrix, direct_limit: usize, rel_tol: f64) -> Result<Self> {
        if matrix.rows() < direct_limit {
            Ok(Self::Direct(BandCholesky::factor(&matrix)?))
        } else {
            let inv_diag = matrix.diagonal().iter().map(|d| 1.0 / d).collect();
            Ok(Self::Iterative { matrix, inv_diag, rel_tol })
        }
    }

    /// Solves in place; `slab` is only used for error reporting.
    pub fn solve_in_place(&self, x: &mut [f64], slab: usize) -> Result<()> {
        match self {
            Self::Direct(chol) => {
                chol.solve_in_place(x);
                Ok(())
            }
            Self::Iterative { matrix, inv_diag, rel_tol } => {
                let out = pcg(
                    |v, y| {
                        matrix.mul_vec_into(v, y);
                        Ok(())
                    },
                    |r, z| {
                        for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv_diag) {
                            *zi = ri * di;
                        }
                    },
                    x,
                    None,
                    *rel_tol,
                    10 * x.len() + 100,
                )
                .map_err(|e| match e {
                    Error::CgBreakdown { residual, .. } => Error::SolverNonconvergence { slab, residual },
                    other => other,
                })?;
                x.copy_from_slice(&out.x);
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplace_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn band_cholesky_solves() {
        let a = laplace_1d(30);
        let x_true: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = BandCholesky::factor(&a).unwrap().solve(&b);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert_relative_eq!(xi, ti, epsilon = 1e-13);
        }
    }

    #[test]
    fn indefinite_rejected() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(BandCholesky::factor(&a), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn iterative_matches_direct() {
        let a = laplace_1d(50);
        let b: Vec<f64> = (0..50).map(|i| 1.0 + i as f64).collect();
        let direct = SpdSolver::new(a.clone(), 100, 1e-13).unwrap();
        let iterative = SpdSolver::new(a, 10, 1e-13).unwrap();
        assert!(matches!(iterative, SpdSolver::Iterative { .. }));
        let (mut x1, mut x2) = (b.clone(), b);
        direct.solve_in_place(&mut x1, 1).unwrap();
        iterative.solve_in_place(&mut x2, 1).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert_relative_eq!(p, q, epsilon = 1e-10);
        }
    }
}
