//! Linear solves against the boundary-identity elliptic operator. Small
//! systems (the common case for the meshes this crate targets) go through a
//! cached dense LU factorization; larger ones fall back to Jacobi-
//! preconditioned BiCGSTAB, which tolerates the operator's asymmetry.
//! Either path verifies the relative residual against the requested
//! tolerance, so a "converged" answer is always a checked answer.

use crate::sparse::Csr;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear solver diverged: relative residual {residual:.3e} exceeds {tol:.3e}")]
    Diverged { residual: f64, tol: f64 },
    #[error("singular factorization")]
    Singular,
}

/// Above this dimension the dense factorization is skipped in favor of the
/// iterative path.
const DIRECT_LIMIT: usize = 4000;

pub struct LinearSolver {
    a: Csr,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    inv_diag: Vec<f64>,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSolver")
            .field("n", &self.a.nrows())
            .field("direct", &self.lu.is_some())
            .finish()
    }
}

impl LinearSolver {
    pub fn new(a: Csr) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "solver needs a square matrix");
        let n = a.nrows();
        let lu = if n <= DIRECT_LIMIT {
            Some(DMatrix::from(a.to_dense()).lu())
        } else {
            None
        };
        let mut inv_diag = vec![1.0; n];
        for (i, d) in inv_diag.iter_mut().enumerate() {
            let aii = a.get(i, i);
            if aii != 0.0 {
                *d = 1.0 / aii;
            }
        }
        LinearSolver { a, lu, inv_diag }
    }

    pub fn matrix(&self) -> &Csr {
        &self.a
    }

    /// Solve A x = b to a relative residual of `tol`.
    pub fn solve(&self, b: &[f64], tol: f64) -> Result<Vec<f64>, SolverError> {
        let x = match &self.lu {
            Some(lu) => {
                let rhs = DVector::from_column_slice(b);
                let sol = lu.solve(&rhs).ok_or(SolverError::Singular)?;
                sol.as_slice().to_vec()
            }
            None => self.bicgstab(b, tol)?,
        };
        let bnorm = norm2(b).max(f64::MIN_POSITIVE);
        let r = residual(&self.a, &x, b);
        let rel = norm2(&r) / bnorm;
        if rel > tol {
            return Err(SolverError::Diverged { residual: rel, tol });
        }
        Ok(x)
    }

    fn bicgstab(&self, b: &[f64], tol: f64) -> Result<Vec<f64>, SolverError> {
        let n = b.len();
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let max_iter = 20 * n;
        for _ in 0..max_iter {
            let rho_new = dotv(&r0, &r);
            if rho_new.abs() < f64::MIN_POSITIVE {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            let phat: Vec<f64> = p.iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
            v = self.a.matvec(&phat);
            alpha = rho_new / dotv(&r0, &v);
            let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
            if norm2(&s) / bnorm < tol * 0.1 {
                for i in 0..n {
                    x[i] += alpha * phat[i];
                }
                return Ok(x);
            }
            let shat: Vec<f64> = s.iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
            let t = self.a.matvec(&shat);
            let tt = dotv(&t, &t);
            omega = if tt > 0.0 { dotv(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * phat[i] + omega * shat[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm2(&r) / bnorm < tol * 0.1 {
                return Ok(x);
            }
            rho = rho_new;
        }
        Ok(x) // final residual check in solve() decides pass/fail
    }
}

fn residual(a: &Csr, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.matvec(x);
    ax.iter().zip(b).map(|(axi, bi)| bi - axi).collect()
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dotv(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(n, n, &t)
    }

    #[test]
    fn direct_solve_recovers_known_solution() {
        let a = laplacian_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x_true);
        let x = LinearSolver::new(a).solve(&b, 1e-10).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-9);
        }
    }

    #[test]
    fn iterative_path_agrees_with_direct() {
        let a = laplacian_1d(120);
        let x_true: Vec<f64> = (0..120).map(|i| 1.0 + (i % 7) as f64).collect();
        let b = a.matvec(&x_true);
        let solver = LinearSolver::new(a.clone());
        let x_it = solver.bicgstab(&b, 1e-12).unwrap();
        let r = residual(&a, &x_it, &b);
        assert!(norm2(&r) / norm2(&b) < 1e-10);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplacian_1d(10);
        let x = LinearSolver::new(a).solve(&[0.0; 10], 1e-10).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
