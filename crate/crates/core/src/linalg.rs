//! Small dense helpers that nalgebra does not ship.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
            }
        }
    }
    out
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

pub fn max_real_part(m: &Mat) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(m: &Mat, margin: f64) -> bool {
    max_real_part(m) < -margin
}

pub fn sym_eigenvalues(m: &Mat) -> Vector {
    symmetrize(m).symmetric_eigenvalues()
}

pub fn sym_min_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m).min()
}

/// Solve `aᵀ x + x a + c = 0` through the vectorised Kronecker system.
pub fn lyapunov(a: &Mat, c: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    let at = a.transpose();
    let op = kron(&eye, &at) + kron(&at, &eye);
    let rhs = Vector::from_column_slice((-c).as_slice());
    let sol = op.lu().solve(&rhs).ok_or(Error::NotStabilizable)?;
    Ok(symmetrize(&Mat::from_column_slice(n, n, sol.as_slice())))
}

/// Numerical rank from singular values relative to the largest one.
pub fn rank(m: &Mat, tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * top).count()
}

/// PBH test: every eigenvalue of `a` with non-negative real part keeps `[a − λI, b]` full row rank.
pub fn stabilizable(a: &Mat, b: &Mat, tol: f64) -> bool {
    let n = a.nrows();
    for lam in eigenvalues(a) {
        if lam.re < -tol {
            continue;
        }
        let mut m = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            m[(i, i)] -= lam;
            for j in 0..b.ncols() {
                m[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let sv = m.svd(false, false).singular_values;
        let scale = sv.max().max(1.0);
        if sv.iter().filter(|&&s| s > tol * scale).count() < n {
            return false;
        }
    }
    true
}

/// Matrix sign function by scaled Newton iteration. Fails if `m` has eigenvalues on
/// (or numerically near) the imaginary axis.
pub fn matrix_sign(m: &Mat) -> Option<Mat> {
    let n = m.nrows();
    let mut z = m.clone();
    for _ in 0..100 {
        let lu = z.clone().lu();
        let det = lu.determinant().abs();
        let inv = lu.try_inverse()?;
        let c = if det.is_finite() && det > 0.0 {
            det.powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let step = (&next - &z).norm();
        z = next;
        if !z.iter().all(|v| v.is_finite()) {
            return None;
        }
        if step <= 1e-13 * z.norm() {
            return Some(z);
        }
    }
    None
}

pub fn matvec_into(m: &Mat, x: &[f64], out: &mut [f64]) {
    let (r, c) = m.shape();
    for i in 0..r {
        let mut acc = 0.0;
        for j in 0..c {
            acc += m[(i, j)] * x[j];
        }
        out[i] = acc;
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Parse a nested-array matrix; every row must have equal length.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
