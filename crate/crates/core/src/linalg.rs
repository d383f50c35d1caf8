//! Small dense linear-algebra helpers.

use crate::error::{GmsError, Result};
use nalgebra::DMatrix;

pub type Mat = DMatrix<f64>;

/// Condition number above which a matrix is treated as singular.
pub const COND_LIMIT: f64 = 1e12;

/// 1-norm condition estimate from an explicit inverse.
fn cond1(a: &Mat, inv: &Mat) -> f64 {
    norm1(a) * norm1(inv)
}

pub fn norm1(a: &Mat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse via LU with a condition guard.
pub fn inverse(a: &Mat, context: &str) -> Result<Mat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(GmsError::Dimension(format!(
            "{context}: cannot invert a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| GmsError::IllConditioned {
            context: context.to_string(),
            cond: f64::INFINITY,
        })?;
    let cond = cond1(a, &inv);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(GmsError::IllConditioned {
            context: context.to_string(),
            cond,
        });
    }
    Ok(inv)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Mat, context: &str) -> Result<Mat> {
    let sym = symmetrize(a);
    sym.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| GmsError::IllConditioned {
            context: format!("{context}: not positive definite"),
            cond: f64::INFINITY,
        })
}

/// Solves `a x = b` for symmetric positive-definite `a`.
///
/// The system is equilibrated by `D = diag(a)^{-1/2}` before factorization and the condition
/// guard applies to `D a D`.
pub fn spd_solve(a: &Mat, b: &Mat, context: &str) -> Result<Mat> {
    let n = a.nrows();
    let mut scale = vec![0.0; n];
    for i in 0..n {
        let aii = a[(i, i)];
        if !(aii > 0.0) || !aii.is_finite() {
            return Err(GmsError::IllConditioned {
                context: format!("{context}: non-positive diagonal"),
                cond: f64::INFINITY,
            });
        }
        scale[i] = 1.0 / aii.sqrt();
    }
    let scaled = Mat::from_fn(n, n, |i, j| {
        0.5 * (a[(i, j)] + a[(j, i)]) * scale[i] * scale[j]
    });
    let chol = scaled.cholesky().ok_or_else(|| GmsError::IllConditioned {
        context: format!("{context}: not positive definite"),
        cond: f64::INFINITY,
    })?;
    let (lo, hi) = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| {
            (lo.min(x.abs()), hi.max(x.abs()))
        });
    let cond = (hi / lo).powi(2);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(GmsError::IllConditioned {
            context: context.to_string(),
            cond,
        });
    }
    let rhs = Mat::from_fn(n, b.ncols(), |i, j| b[(i, j)] * scale[i]);
    let y = chol.solve(&rhs);
    Ok(Mat::from_fn(n, b.ncols(), |i, j| y[(i, j)] * scale[i]))
}

/// Computes `x a^{-1}` for symmetric positive-definite `a`.
pub fn spd_right_solve(x: &Mat, a: &Mat, context: &str) -> Result<Mat> {
    Ok(spd_solve(a, &x.transpose(), context)?.transpose())
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Solves `l x = b` for lower-triangular `l`.
pub fn lower_solve(l: &Mat, b: &Mat) -> Result<Mat> {
    l.solve_lower_triangular(b)
        .ok_or_else(|| GmsError::IllConditioned {
            context: "triangular solve".into(),
            cond: f64::INFINITY,
        })
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}
