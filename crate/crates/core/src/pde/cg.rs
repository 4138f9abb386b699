//! Jacobi-preconditioned conjugate gradients.

use serde::{Deserialize, Serialize};

use super::sparse::{CsrMatrix, SparseSystem};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Stop when `|b - A x| <= rel_tol |b|`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { rel_tol: 1e-10, max_iter: 50_000 }
    }
}

impl SolverSettings {
    pub fn new(rel_tol: f64, max_iter: usize) -> Result<Self> {
        let s = SolverSettings { rel_tol, max_iter };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one linear solve, kept for run records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub iterations: usize,
    pub relative_residual: f64,
    pub unknowns: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // sequential on purpose: fixed summation order
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solve `A x = b` for symmetric positive definite `A`.
pub fn cg_solve(system: &SparseSystem, settings: &SolverSettings) -> Result<(Vec<f64>, SolveLog)> {
    cg_solve_from(system, settings, None, false)
}

pub fn cg_solve_from(
    system: &SparseSystem,
    settings: &SolverSettings,
    initial: Option<&[f64]>,
    constant_nullspace: bool,
) -> Result<(Vec<f64>, SolveLog)> {
    cg_solve_with(&system.matrix, &system.rhs, settings, initial, constant_nullspace)
}

/// Conjugate gradients with an optional initial guess. With `constant_nullspace`
/// the matrix is assumed to annihilate constants (periodic problems): the
/// residual is kept orthogonal to constants, and the returned solution has
/// zero mean.
pub fn cg_solve_with(
    a: &CsrMatrix,
    rhs: &[f64],
    settings: &SolverSettings,
    initial: Option<&[f64]>,
    constant_nullspace: bool,
) -> Result<(Vec<f64>, SolveLog)> {
    settings.validate()?;
    let n = a.dim();
    if rhs.len() != n {
        return Err(Error::Assembly(format!("right-hand side has {} entries for {n} unknowns", rhs.len())));
    }
    let mut b = rhs.to_vec();
    if constant_nullspace {
        remove_mean(&mut b);
    }
    let b_norm = dot(&b, &b).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], SolveLog { iterations: 0, relative_residual: 0.0, unknowns: n }));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = match initial {
        Some(x0) if x0.len() == n => x0.to_vec(),
        _ => vec![0.0; n],
    };
    let mut r = b.clone();
    let mut ap = vec![0.0; n];
    if x.iter().any(|&v| v != 0.0) {
        a.mul_vec_into(&x, &mut ap);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= ai);
    }
    if constant_nullspace {
        remove_mean(&mut r);
    }
    let target = settings.rel_tol * b_norm;
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut r_norm = dot(&r, &r).sqrt();
    let mut iterations = 0;
    while r_norm > target {
        if iterations == settings.max_iter {
            return Err(Error::SolverFailure { iterations, residual: r_norm / b_norm });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure { iterations, residual: r_norm / b_norm });
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        if constant_nullspace {
            remove_mean(&mut r);
        }
        z.iter_mut().zip(r.iter().zip(&inv_diag)).for_each(|(zi, (ri, di))| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        r_norm = dot(&r, &r).sqrt();
        iterations += 1;
    }
    if constant_nullspace {
        remove_mean(&mut x);
    }
    Ok((x, SolveLog { iterations, relative_residual: r_norm / b_norm, unknowns: n }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let sys = SparseSystem::new(CsrMatrix::identity(3), vec![1.0, -2.0, 0.5]).unwrap();
        let (x, log) = cg_solve(&sys, &SolverSettings::default()).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 0.5]);
        assert!(log.iterations <= 1);
    }

    #[test]
    fn diagonal_system() {
        let sys = SparseSystem::new(CsrMatrix::from_diagonal(&[1.0, 2.0]), vec![1.0, 2.0]).unwrap();
        let (x, _) = cg_solve(&sys, &SolverSettings::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let sys = SparseSystem::new(CsrMatrix::identity(4), vec![0.0; 4]).unwrap();
        let (x, log) = cg_solve(&sys, &SolverSettings::default()).unwrap();
        assert_eq!(x, vec![0.0; 4]);
        assert_eq!(log.iterations, 0);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        // 1-d Laplacian needs more than one iteration
        let n = 20;
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![(i, 2.0)];
                if i > 0 {
                    row.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    row.push((i + 1, -1.0));
                }
                row
            })
            .collect();
        let sys = SparseSystem::new(CsrMatrix::from_rows(rows).unwrap(), vec![1.0; n]).unwrap();
        let err = cg_solve(&sys, &SolverSettings::new(1e-12, 2).unwrap()).unwrap_err();
        match err {
            Error::SolverFailure { iterations, residual } => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(SolverSettings::new(0.0, 10).is_err());
    }
}
