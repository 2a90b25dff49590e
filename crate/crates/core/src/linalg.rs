//! Cholesky factorization with jitter escalation for penalized normal equations.

use nalgebra::{DMatrix, DVector};

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct Factor {
    l: DMatrix<f64>,
    pub jitter: f64,
}

/// Index of the first column whose pivot could not be established.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularAt(pub usize);

/// Plain LLᵀ factorization. A pivot fails when it is not above `floor` or is
/// negligible relative to its diagonal entry.
fn factor(a: &DMatrix<f64>, shift: f64, floor: f64) -> Result<DMatrix<f64>, SingularAt> {
    let p = a.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let diag = a[(j, j)] + shift;
        let mut d = diag;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor && d > 1e-13 * diag.abs()) {
            return Err(SingularAt(j));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Factors a symmetric matrix, escalating a diagonal jitter from 1e-10 to
/// 1e-6 times the mean diagonal when the plain factorization fails. A pivot
/// that only the jitter itself supports (below ten times the jitter) still
/// counts as singular, so exact rank deficiency is never masked.
pub fn cholesky(a: &DMatrix<f64>) -> Result<Factor, SingularAt> {
    let p = a.nrows();
    if p == 0 {
        return Ok(Factor {
            l: DMatrix::zeros(0, 0),
            jitter: 0.0,
        });
    }
    let mut failure = match factor(a, 0.0, 0.0) {
        Ok(l) => return Ok(Factor { l, jitter: 0.0 }),
        Err(e) => e,
    };
    let mean_diag = a.diagonal().iter().map(|v| v.abs()).sum::<f64>() / p as f64;
    if !(mean_diag > 0.0) || !mean_diag.is_finite() {
        return Err(failure);
    }
    for exp in -10..=-6 {
        let jitter = mean_diag * 10f64.powi(exp);
        match factor(a, jitter, 10.0 * jitter) {
            Ok(l) => return Ok(Factor { l, jitter }),
            Err(e) => failure = e,
        }
    }
    Err(failure)
}

impl Factor {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("factor has a positive diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("factor has a positive diagonal")
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("factor has a positive diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("factor has a positive diagonal")
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }
}
