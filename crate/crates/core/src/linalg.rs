//! Thin helpers over `faer` shared by the numerical modules.

use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used by every least-squares solve.
pub const LSTSQ_RCOND: f64 = 1e-10;

pub fn to_complex(m: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

pub fn real_part(m: MatRef<'_, c64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

pub fn column_vec(m: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    m.col(j).iter().copied().collect()
}

pub fn matrix_from_columns(nrows: usize, cols: &[&[f64]]) -> Mat<f64> {
    Mat::from_fn(nrows, cols.len(), |i, j| cols[j][i])
}

/// Thin SVD returning `(U, sigma, V)` with sigma sorted descending.
pub fn thin_svd(m: MatRef<'_, f64>) -> Result<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("svd: {e:?}")))?;
    let sigma: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    Ok((svd.U().to_owned(), sigma, svd.V().to_owned()))
}

pub fn singular_values(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    m.singular_values()
        .map_err(|e| Error::Decomposition(format!("singular values: {e:?}")))
}

/// Eigen-decomposition of a real square matrix: eigenvalues and right eigenvectors.
pub fn eigen_real(m: MatRef<'_, f64>) -> Result<(Vec<c64>, Mat<c64>)> {
    if m.nrows() == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let evd = m
        .eigen()
        .map_err(|e| Error::Decomposition(format!("eigen: {e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

/// Minimum-norm least-squares solve `a x = b` through an SVD with relative cutoff `rcond`.
pub fn lstsq_complex(a: MatRef<'_, c64>, b: MatRef<'_, c64>, rcond: f64) -> Result<Mat<c64>> {
    let (m, n) = a.shape();
    if b.nrows() != m {
        return Err(Error::DimensionMismatch {
            what: "least-squares right-hand side",
            expected: m,
            found: b.nrows(),
        });
    }
    if m == 0 || n == 0 {
        return Ok(Mat::zeros(n, b.ncols()));
    }
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("svd: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|v| v.re).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let keep = s.iter().take_while(|&&v| v > rcond * smax && v > 0.0).count();
    let u = svd.U().subcols(0, keep);
    let v = svd.V().subcols(0, keep);
    let mut utb = u.adjoint() * b;
    for i in 0..keep {
        let inv = 1.0 / s[i];
        for j in 0..utb.ncols() {
            utb[(i, j)] *= inv;
        }
    }
    Ok(v * &utb)
}

pub fn lstsq_vec(a: MatRef<'_, c64>, b: &[c64]) -> Result<Vec<c64>> {
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    if let Some(x) = square_solve(a, rhs.as_ref()) {
        return Ok(x.col(0).iter().copied().collect());
    }
    let x = lstsq_complex(a, rhs.as_ref(), LSTSQ_RCOND)?;
    Ok(x.col(0).iter().copied().collect())
}

/// LU solve of a square system, kept only when it is as trustworthy as the SVD route:
/// tiny residual and no growth beyond what the `LSTSQ_RCOND` cutoff would allow.
/// Several times cheaper than the SVD for the `N × N` eigenvector systems.
fn square_solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Option<Mat<c64>> {
    use faer::linalg::solvers::Solve;
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return None;
    }
    let x = a.partial_piv_lu().solve(b);
    let (an, bn, xn) = (a.norm_l2(), b.norm_l2(), x.norm_l2());
    if !xn.is_finite() || an == 0.0 {
        return None;
    }
    // ‖a‖_F / √n bounds the largest singular value from below
    if xn * LSTSQ_RCOND * an > bn * (n as f64).sqrt() {
        return None;
    }
    let resid = (a * &x - b).norm_l2();
    (resid <= 1e-12 * (an * xn + bn)).then_some(x)
}

/// `max |QᵀQ − I|` over the entries.
pub fn orthonormality_error(q: MatRef<'_, f64>) -> f64 {
    let g = q.transpose() * q;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Sines of the principal angles between `span(a)` and `span(b)`, both column-orthonormal.
///
/// Computed from the residual `b − a aᵀ b`, which stays accurate for tiny angles.
pub fn principal_angle_sines(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let proj = a * (a.transpose() * b);
    let resid = b - &proj;
    singular_values(resid.as_ref())
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}

pub fn relative_frobenius(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let diff = a - b;
    let denom = b.norm_l2();
    if denom == 0.0 {
        diff.norm_l2()
    } else {
        diff.norm_l2() / denom
    }
}

/// Horizontal concatenation `[a b]`.
pub fn hcat(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.nrows() != b.nrows() && a.ncols() != 0 && b.ncols() != 0 {
        return Err(Error::DimensionMismatch {
            what: "horizontal concatenation",
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let rows = if a.ncols() == 0 { b.nrows() } else { a.nrows() };
    let ac = a.ncols();
    Ok(Mat::from_fn(rows, ac + b.ncols(), |i, j| {
        if j < ac {
            a[(i, j)]
        } else {
            b[(i, j - ac)]
        }
    }))
}

pub fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
