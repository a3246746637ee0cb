//! Membership test for the class of coefficient tensors whose half-space
//! Poisson kernel has the full product structure ("distinguished" tensors).
//!
//! A tensor `a` is distinguished when, for every nonzero real frequency `ξ`
//! and all indices `s, s', α, γ`,
//!
//! ```text
//! Σ_β [ a[β][α][s'][s] − a[β][α][s][s']
//!       + Σ_r ξ_r a[β][α][r][s]  ∂_{ξ_{s'}}
//!       − Σ_r ξ_r a[β][α][r][s'] ∂_{ξ_s} ] S_{γβ}(ξ)  =  0,
//! ```
//!
//! where `S = Symb⁻¹` is the inverse characteristic matrix, and additionally
//! (in two dimensions) a family of circle integrals of the same algebraic
//! data vanishes.  Membership is equivalent to the gradient contraction of
//! the fundamental solution factorizing as
//! `Σ_{β,r} a[β][α][r][s] ∂_r E_{γβ}(x) = x_s k_{γα}(x)` with `k` even and
//! homogeneous of degree `-n`.
//!
//! Both conditions are checked numerically on a deterministic frequency
//! sample; derivatives of `S` are analytic (no finite differences).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::kernels::{GradEFn, SpaceKernel};
use crate::linalg::{cr, max_abs, max_abs_vec, C64, CMatrix, CVector};
use crate::optensor::CoefficientTensor;
use crate::sample;
use crate::{Error, Result};

/// Default number of random frequency samples.
pub const DEFAULT_XI_SAMPLES: usize = 64;
/// Default tolerance for the bracket condition (applied after normalizing
/// the tensor to unit max-entry).
pub const DEFAULT_TOL_A: f64 = 1e-8;
/// Default tolerance for the two-dimensional circle integrals.
pub const DEFAULT_TOL_B: f64 = 1e-10;
/// Default node count for the circle quadrature.
pub const DEFAULT_CIRCLE_NODES: usize = 512;

/// Outcome of the membership test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistinguishedReport {
    /// Largest bracket modulus over all sampled `ξ` and index tuples.
    pub condition_a_residual: f64,
    /// Largest modulus of the circle integrals (zero by convention when
    /// `n ≥ 3`).
    pub n2_integral_residual: f64,
    /// True iff both residuals are within their tolerances.
    pub verdict: bool,
    /// Number of frequency vectors examined.
    pub xi_samples: usize,
    /// Circle-quadrature nodes used (zero when `n ≥ 3`).
    pub quad_nodes: usize,
}

/// Derivative of the characteristic matrix in direction `ξ_{s'}`:
/// entry `(α,β)` is `−Σ_t ξ_t (a[α][β][s'][t] + a[α][β][t][s'])`.
fn d_symbol(a: &CoefficientTensor, xi: &[f64], sprime: usize) -> CMatrix {
    let (n, m) = (a.n(), a.m());
    CMatrix::from_fn(m, m, |al, be| {
        let mut acc = C64::ZERO;
        for t in 0..n {
            if xi[t] != 0.0 {
                acc += cr(xi[t]) * (a.get(al, be, sprime, t) + a.get(al, be, t, sprime));
            }
        }
        -acc
    })
}

/// Analytic partial derivative `∂_{ξ_{s'}} Symb⁻¹(ξ) = −S (∂_{ξ_{s'}}Symb) S`.
pub fn d_symbol_inverse(a: &CoefficientTensor, xi: &[f64], sprime: usize) -> Result<CMatrix> {
    if sprime >= a.n() {
        return Err(Error::IndexOutOfRange {
            what: "direction index",
            got: sprime,
            bound: a.n(),
        });
    }
    let s_inv = a.symbol_inverse(xi)?;
    Ok(-(&s_inv * d_symbol(a, xi, sprime) * &s_inv))
}

/// Largest modulus, over all index tuples `(s, s', α, γ)`, of the bracket
/// condition at one frequency `ξ ≠ 0`.
pub fn condition_a_residual(a: &CoefficientTensor, xi: &[f64]) -> Result<f64> {
    let (n, m) = (a.n(), a.m());
    let s_inv = a.symbol_inverse(xi)?;
    let ds: Vec<CMatrix> = (0..n)
        .map(|sp| -(&s_inv * d_symbol(a, xi, sp) * &s_inv))
        .collect();
    // W_s[β][α] = Σ_r ξ_r a[β][α][r][s]
    let w: Vec<CMatrix> = (0..n)
        .map(|s| {
            CMatrix::from_fn(m, m, |be, al| {
                let mut acc = C64::ZERO;
                for r in 0..n {
                    if xi[r] != 0.0 {
                        acc += cr(xi[r]) * a.get(be, al, r, s);
                    }
                }
                acc
            })
        })
        .collect();
    let mut worst = 0.0f64;
    for s in 0..n {
        for sp in 0..n {
            if s == sp {
                continue; // bracket is antisymmetric in (s, s')
            }
            let d = CMatrix::from_fn(m, m, |be, al| {
                a.get(be, al, sp, s) - a.get(be, al, s, sp)
            });
            let bracket = &s_inv * d + &ds[sp] * &w[s] - &ds[s] * &w[sp];
            worst = worst.max(max_abs(&bracket));
        }
    }
    Ok(worst)
}

/// Integrand of the two-dimensional circle condition at angle `θ` on the
/// unit circle, for fixed indices (zero-based).
fn n2_integrand(
    a: &CoefficientTensor,
    s: usize,
    sprime: usize,
    alpha: usize,
    gamma: usize,
    theta: f64,
) -> C64 {
    let xi = [theta.cos(), theta.sin()];
    let s_inv = a.symbol_inverse(&xi).expect("unit xi is nonzero");
    let mut acc = C64::ZERO;
    for beta in 0..a.m() {
        for r in 0..2 {
            let weight = a.get(beta, alpha, r, s) * cr(xi[sprime])
                - a.get(beta, alpha, r, sprime) * cr(xi[s]);
            acc += weight * cr(xi[r]) * s_inv[(gamma, beta)];
        }
    }
    acc
}

/// Trapezoidal quadrature of the circle condition
/// `∫_{S¹} Σ_{β,r} (a[β][α][r][s] ξ_{s'} − a[β][α][r][s'] ξ_s) ξ_r S_{γβ}(ξ) dσ(ξ)`
/// (two dimensions only; spectrally accurate in the node count).
pub fn condition_n2_integral(
    a: &CoefficientTensor,
    s: usize,
    sprime: usize,
    alpha: usize,
    gamma: usize,
    nodes: usize,
) -> Result<C64> {
    if a.n() != 2 {
        return Err(Error::InvalidParameter(format!(
            "circle condition applies only to n = 2 (got n = {})",
            a.n()
        )));
    }
    if nodes < 64 {
        return Err(Error::InvalidParameter(format!("need at least 64 circle nodes, got {nodes}")));
    }
    if s >= 2 || sprime >= 2 {
        return Err(Error::IndexOutOfRange {
            what: "direction index",
            got: s.max(sprime),
            bound: 2,
        });
    }
    if alpha >= a.m() || gamma >= a.m() {
        return Err(Error::IndexOutOfRange {
            what: "component index",
            got: alpha.max(gamma),
            bound: a.m(),
        });
    }
    Ok(crate::quad::trapezoid_circle(
        &|theta| n2_integrand(a, s, sprime, alpha, gamma, theta),
        nodes,
    ))
}

/// Runs the full membership test.
///
/// The tensor is first normalized to unit max-entry so the tolerances are
/// scale-free.  The bracket condition is evaluated on all `2n` signed axes
/// plus `xi_samples` seeded random unit frequencies; in two dimensions every
/// circle integral is added.  Rejects tensors whose sampled ellipticity
/// margin is not positive.
pub fn is_distinguished(
    a: &CoefficientTensor,
    xi_samples: usize,
    tol_a: f64,
    tol_b: f64,
) -> Result<DistinguishedReport> {
    let margin = a.lh_margin(DEFAULT_XI_SAMPLES).lh_margin;
    if margin <= 0.0 {
        return Err(Error::NotElliptic { margin });
    }
    let a_norm = a.scaled(cr(1.0 / a.max_abs()))?;
    let n = a.n();

    let mut xis: Vec<Vec<f64>> = Vec::with_capacity(2 * n + xi_samples);
    for r in 0..n {
        let mut e = vec![0.0; n];
        e[r] = 1.0;
        xis.push(e.clone());
        e[r] = -1.0;
        xis.push(e);
    }
    let mut rng = sample::rng(crate::DEFAULT_SEED);
    xis.extend((0..xi_samples).map(|_| sample::real_unit(&mut rng, n)));

    let residuals: Vec<f64> = xis
        .par_iter()
        .map(|xi| condition_a_residual(&a_norm, xi))
        .collect::<Result<_>>()?;
    let condition_a = residuals.into_iter().fold(0.0, f64::max);

    let (mut n2_res, mut quad_nodes) = (0.0f64, 0usize);
    if n == 2 {
        quad_nodes = DEFAULT_CIRCLE_NODES;
        for s in 0..2 {
            for sp in 0..2 {
                for alpha in 0..a.m() {
                    for gamma in 0..a.m() {
                        let v =
                            condition_n2_integral(&a_norm, s, sp, alpha, gamma, quad_nodes)?;
                        n2_res = n2_res.max(v.norm());
                    }
                }
            }
        }
    }

    Ok(DistinguishedReport {
        condition_a_residual: condition_a,
        n2_integral_residual: n2_res,
        verdict: condition_a <= tol_a && n2_res <= tol_b,
        xi_samples: xis.len(),
        quad_nodes,
    })
}

/// [`is_distinguished`] with the default sample count and tolerances.
pub fn is_distinguished_default(a: &CoefficientTensor) -> Result<DistinguishedReport> {
    is_distinguished(a, DEFAULT_XI_SAMPLES, DEFAULT_TOL_A, DEFAULT_TOL_B)
}

/// Extracts the factor `k(x)` from the gradient contraction
/// `T_s(x) := Σ_{β,r} a[β][α][r][s] ∂_r E_{γβ}(x) = x_s k_{γα}(x)`.
///
/// `k` is read off from the component with the largest `|x_s|` (avoiding
/// small divisors); the returned residual is
/// `max_s |T_s(x) − x_s k(x)|` and vanishes iff the factorization holds
/// at `x`.
pub fn k_factorization(
    a: &CoefficientTensor,
    grad_e: &GradEFn,
    x: &[f64],
) -> Result<(CMatrix, f64)> {
    let n = a.n();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: a.m(),
            got_n: x.len(),
            got_m: a.m(),
        });
    }
    if x.iter().all(|&c| c == 0.0) {
        return Err(Error::InvalidParameter("factorization point x = 0".into()));
    }
    let grads = grad_e(x)?;
    if grads.len() != n {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: a.m(),
            got_n: grads.len(),
            got_m: a.m(),
        });
    }
    let ts: Vec<CMatrix> = (0..n)
        .map(|s| {
            let mut t = CMatrix::zeros(a.m(), a.m());
            for r in 0..n {
                t += &grads[r] * a.block(r, s).expect("index in range");
            }
            t
        })
        .collect();
    let sstar = (0..n)
        .max_by(|&i, &j| x[i].abs().partial_cmp(&x[j].abs()).expect("finite"))
        .expect("n >= 2");
    let k = &ts[sstar] * cr(1.0 / x[sstar]);
    let residual = (0..n)
        .map(|s| max_abs(&(&ts[s] - &k * cr(x[s]))))
        .fold(0.0, f64::max);
    Ok((k, residual))
}

/// Reconstructs a fundamental-solution gradient from the factor `k` by
/// solving the factorization identity backwards: at each `x`, the linear
/// system `Σ_{r,β} a[β][α][r][s] g[(r,β)] = x_s k_{γα}(x)` (one solve per
/// output component `γ`) determines `g[(r,β)] = ∂_r E_{γβ}(x)`.
///
/// The system matrix is factored once; solve residuals above `1e-8`
/// (relative) are a hard error, as they mean the identity is unsatisfiable
/// and the tensor is likely not distinguished.
pub fn grad_e_from_k(a: &CoefficientTensor, k: &SpaceKernel) -> Result<GradEFn> {
    let (n, m) = (a.n(), a.m());
    if k.n() != n || k.m() != m {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: m,
            got_n: k.n(),
            got_m: k.m(),
        });
    }
    let dim = n * m;
    let b = CMatrix::from_fn(dim, dim, |row, col| {
        let (s, alpha) = (row / m, row % m);
        let (r, beta) = (col / m, col % m);
        a.get(beta, alpha, r, s)
    });
    let well_conditioned = crate::linalg::condition_estimate(&b) <= 1e8;
    let lu = well_conditioned.then(|| b.clone().lu());
    let svd = (!well_conditioned).then(|| b.clone().svd(true, true));
    let b = Arc::new(b);
    let k = k.clone();
    Ok(Arc::new(move |x: &[f64]| {
        let kmat = k.eval(x)?;
        let mut grads = vec![CMatrix::zeros(m, m); n];
        for gamma in 0..m {
            let rhs = CVector::from_fn(dim, |flat, _| {
                let (s, alpha) = (flat / m, flat % m);
                cr(x[s]) * kmat[(gamma, alpha)]
            });
            let g = match (&lu, &svd) {
                (Some(lu), _) => lu
                    .solve(&rhs)
                    .ok_or(Error::FactorizationResidual { residual: f64::INFINITY })?,
                (None, Some(svd)) => svd
                    .solve(&rhs, 1e-13 * max_abs(&b).max(1.0))
                    .map_err(|_| Error::FactorizationResidual { residual: f64::INFINITY })?,
                (None, None) => unreachable!("one factorization is always built"),
            };
            let residual = max_abs_vec(&(&*b * &g - &rhs));
            if residual > 1e-8 * max_abs_vec(&rhs).max(1.0) {
                return Err(Error::FactorizationResidual { residual });
            }
            for r in 0..n {
                for beta in 0..m {
                    grads[r][(gamma, beta)] = g[r * m + beta];
                }
            }
        }
        Ok(grads)
    }))
}
