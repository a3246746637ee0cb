//! Small helpers around dense complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest entry modulus; 0 for empty matrices.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_vec(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Inverse through LU; `None` when the factorization detects singularity.
pub fn try_inverse(m: &CMatrix) -> Option<CMatrix> {
    m.clone().try_inverse()
}

/// 2-norm condition estimate from singular values; `inf` when singular.
pub fn condition_estimate(m: &CMatrix) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimum-norm least-squares solve through SVD.
pub fn lstsq(m: &CMatrix, rhs: &CVector) -> Option<CVector> {
    let svd = m.clone().svd(true, true);
    svd.solve(rhs, 1e-13 * max_abs(m).max(1.0)).ok()
}

/// Identity matrix of size `m`.
pub fn eye(m: usize) -> CMatrix {
    CMatrix::identity(m, m)
}
