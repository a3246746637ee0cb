//! Residual harness for the structural identities the kernel machinery
//! relies on: Poisson-kernel axioms, the dilation-derivative identity, the
//! auxiliary-kernel relations (factorization, curl-freeness, vertical
//! reconstruction, decay), their convolution counterparts, the
//! tangential/conormal split of the vertical derivative, and
//! fundamental-solution axioms.
//!
//! Every check is numeric, deterministic, and reported as a worst-case
//! residual over a fixed point sample; finite-difference residuals use
//! second-order central stencils whose step-halving behavior is itself
//! under test.

use serde::{Deserialize, Serialize};

use crate::datum::BoundaryData;
use crate::kernels::{AuxKernelFamily, MatrixKernel, SpaceKernel};
use crate::linalg::{cr, eye, max_abs, max_abs_vec, try_inverse, CMatrix, CVector};
use crate::optensor::CoefficientTensor;
use crate::quad::{integrate_line, integrate_plane};
use crate::sample;
use crate::solver::{convolve, KernelSet, KernelTag};
use crate::{Error, Result};

/// Which identity a [`ResidualReport`] refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityId {
    /// `|P(x')| (1+|x'|²)^{n/2}` stays bounded (log-slope of the far field).
    DecayMajorant,
    /// `∫ P = I` (adaptive quadrature).
    UnitIntegral,
    /// `L K_{·β} = 0` on the open half-space (FD Hessians).
    ExtensionAnnihilated,
    /// `K(λx) = λ^{1-n} K(x)` for `λ > 0`.
    ExtensionHomogeneity,
    /// `∂_t[P_t(x')] + Σ_{j<n} ∂_{x_j}[(x_j/t) P_t(x')] = 0`.
    DilationDerivative,
    /// `Σ_r 2 Q^{(r)}(x') A_{rs} = (x',1)_s P(x')`.
    QFactorization,
    /// `∂_t[P_t] = -2 Σ_{s<n,r} ∂_s[Q^{(r)}_t] A_{rs}` at kernel level.
    PTimeDerivative,
    /// `∂_j[Q^{(r)}_t] = ∂_r[Q^{(j)}_t]` (mixed-partial symmetry).
    QCurlFree,
    /// `Q^{(n)} = (½P - Σ_{s<n} Q^{(s)} A_{sn}) A_nn^{-1}`.
    QnReconstruction,
    /// `P(x') = 2 k(x', 1)`.
    #[serde(rename = "p_equals_2k")]
    PEquals2K,
    /// `k(λx) = λ^{-n} k(x)` and evenness `k(-x) = k(x)`.
    KHomogeneityEvenness,
    /// `|Q^{(j)}(x')| (1+|x'|)^{n-1}` stays bounded.
    QDecay,
    /// `Q^{(n)}_t ∗ f = ½ P_t ∗ A_nn^{-1} f - Σ_{s<n} Q^{(s)}_t ∗ A_{sn} A_nn^{-1} f`.
    ConvQnReduction,
    /// `∂_t[P_t ∗ f] = -2 Σ_{s<n,r} Q^{(r)}_t ∗ (A_{rs} ∂_s f)`.
    ConvPTimeDerivative,
    /// `∂_t[Q^{(r)}_t ∗ f] = Q^{(n)}_t ∗ ∂_r f`.
    ConvQTimeDerivative,
    /// `∂_t u = ∂_tan u + (A_nn^⊤)^{-1} D_{A^⊤} u`.
    NormalDerivativeSplit,
    /// `L E = 0` away from the pole.
    FundamentalAnnihilated,
    /// `E(-x) = E(x)`.
    FundamentalEvenness,
    /// `|∇E(x)| |x|^{n-1}` (and `|E| |x|^{n-2}` for `n ≥ 3`) stays bounded.
    FundamentalDecay,
}

impl std::fmt::Display for IdentityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_string(self).map_err(|_| std::fmt::Error)?;
        write!(f, "{}", s.trim_matches('"'))
    }
}

/// Acceptance threshold for each identity.  Finite-difference and
/// convolution checks are measured relative to the local field scale;
/// analytic identities and quadratures are absolute; decay checks bound the
/// far-field log₂-slope of the weighted kernel magnitude.
pub fn threshold(id: IdentityId) -> f64 {
    use IdentityId::*;
    match id {
        DecayMajorant | QDecay | FundamentalDecay => 0.1,
        UnitIntegral => 1e-6,
        ExtensionAnnihilated | FundamentalAnnihilated => 1e-4,
        ExtensionHomogeneity | PEquals2K | KHomogeneityEvenness | NormalDerivativeSplit => 1e-12,
        DilationDerivative => 1e-5,
        QFactorization | QnReconstruction | ConvQnReduction => 1e-8,
        PTimeDerivative | QCurlFree => 1e-4,
        ConvPTimeDerivative | ConvQTimeDerivative => 1e-4,
        FundamentalEvenness => 1e-13,
    }
}

/// Worst-case residual of one identity over a point sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub identity_id: IdentityId,
    pub max_residual: f64,
    pub points_tested: usize,
    /// Finite-difference step used, `0` when both sides were analytic.
    pub fd_step: f64,
}

impl ResidualReport {
    pub fn passes(&self) -> bool {
        self.max_residual <= threshold(self.identity_id)
    }
}

/// Deterministic interior sample: `(x', t)` with `|x'| ≤ 1.5`, `t ∈ [0.5, 1.5]`.
pub fn seeded_interior_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = sample::rng(seed);
    use rand::Rng;
    (0..count)
        .map(|_| {
            let mut x: Vec<f64> = sample::real_unit(&mut rng, n - 1)
                .into_iter()
                .map(|c| 1.5 * rng.gen::<f64>() * c)
                .collect();
            x.push(0.5 + rng.gen::<f64>());
            x
        })
        .collect()
}

/// Deterministic boundary sample: `|x'| ≤ 2`.
pub fn seeded_boundary_points(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = sample::rng(seed);
    use rand::Rng;
    (0..count)
        .map(|_| {
            sample::real_unit(&mut rng, d)
                .into_iter()
                .map(|c| 2.0 * rng.gen::<f64>() * c)
                .collect()
        })
        .collect()
}

fn local_step(fd_step: f64, x: &[f64]) -> f64 {
    let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    fd_step * (1.0 + norm)
}

fn shifted(x: &[f64], j: usize, delta: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[j] += delta;
    y
}

/// Second-order central first partial of a matrix-valued map.
fn fd_partial<F>(f: &F, x: &[f64], j: usize, h: f64) -> Result<CMatrix>
where
    F: Fn(&[f64]) -> Result<CMatrix>,
{
    Ok((f(&shifted(x, j, h))? - f(&shifted(x, j, -h))?) * cr(0.5 / h))
}

/// Second-order central second partial, pure or mixed.
fn fd_second<F>(f: &F, x: &[f64], r: usize, s: usize, h: f64) -> Result<CMatrix>
where
    F: Fn(&[f64]) -> Result<CMatrix>,
{
    if r == s {
        let mid = f(x)?;
        Ok((f(&shifted(x, r, h))? + f(&shifted(x, r, -h))? - mid * cr(2.0)) * cr(1.0 / (h * h)))
    } else {
        let pp = f(&shifted(&shifted(x, r, h), s, h))?;
        let pm = f(&shifted(&shifted(x, r, h), s, -h))?;
        let mp = f(&shifted(&shifted(x, r, -h), s, h))?;
        let mm = f(&shifted(&shifted(x, r, -h), s, -h))?;
        Ok((pp - pm - mp + mm) * cr(0.25 / (h * h)))
    }
}

/// `max |Σ_{r,s} A_{rs} ∂_r∂_s F|` at `x` — the operator applied to the
/// columns of a matrix-valued field by finite differences.
fn elliptic_residual<F>(
    a: &CoefficientTensor,
    f: &F,
    x: &[f64],
    h: f64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<CMatrix>,
{
    let n = a.n();
    let m = a.m();
    let mut acc = CMatrix::zeros(m, m);
    for r in 0..n {
        for s in r..n {
            let hess = fd_second(f, x, r, s, h)?;
            let block = a.block(r, s)?;
            acc += &block * &hess;
            if s != r {
                acc += a.block(s, r)? * hess;
            }
        }
    }
    Ok(max_abs(&acc))
}

/// Far-field growth rate of `magnitude(x) · weight(|x|)` along dyadic
/// shells: returns the largest positive log₂-slope over the outer shells
/// (0 for a properly decaying kernel).
fn decay_slope<F>(magnitude: &F, d: usize, weight: &dyn Fn(f64) -> f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        dirs.push(e.clone());
        e[j] = -1.0;
        dirs.push(e);
    }
    let mut rng = sample::rng(crate::DEFAULT_SEED);
    dirs.extend((0..4).map(|_| sample::real_unit(&mut rng, d)));

    let radii: Vec<f64> = (2..=9).map(|j| 2f64.powi(j)).collect();
    let mut shell_max = Vec::with_capacity(radii.len());
    for &rho in &radii {
        let mut level = 0.0f64;
        for dir in &dirs {
            let x: Vec<f64> = dir.iter().map(|c| c * rho).collect();
            level = level.max(magnitude(&x)? * weight(rho));
        }
        shell_max.push(level);
    }
    let mut slope = 0.0f64;
    for w in shell_max.windows(2).skip(2) {
        if w[0] > 1e-300 && w[1] > 1e-300 {
            slope = slope.max((w[1] / w[0]).log2());
        }
    }
    Ok(slope)
}

/// Poisson-kernel axioms: decay majorant, unit integral, annihilation of
/// the extension by the operator (FD), and positive homogeneity of the
/// extension.
pub fn check_poisson_axioms(
    a: &CoefficientTensor,
    p: &MatrixKernel,
    quad_tol: f64,
    fd_step: f64,
) -> Result<Vec<ResidualReport>> {
    let n = a.n();
    let m = a.m();
    if p.n() != n || p.m() != m {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: m,
            got_n: p.n(),
            got_m: p.m(),
        });
    }
    let mut reports = Vec::new();

    // (a) decay majorant: far-field slope of |P| (1+|x'|²)^{n/2}.
    let slope = decay_slope(
        &|x: &[f64]| Ok(max_abs(&p.eval(x)?)),
        n - 1,
        &|rho| (1.0 + rho * rho).powf(0.5 * n as f64),
    )?;
    reports.push(ResidualReport {
        identity_id: IdentityId::DecayMajorant,
        max_residual: slope,
        points_tested: (2 * (n - 1) + 4) * 8,
        fd_step: 0.0,
    });

    // (b) unit integral.
    let integral = match n {
        2 => integrate_line(&|y: f64| p.eval(&[y]).expect("kernel eval"), quad_tol, 4000)?.0,
        3 => {
            integrate_plane(
                &|y1: f64, y2: f64| p.eval(&[y1, y2]).expect("kernel eval"),
                quad_tol,
                4000,
            )?
            .0
        }
        _ => {
            return Err(Error::InvalidParameter(format!(
                "unit-integral quadrature supports n = 2, 3 (got {n})"
            )))
        }
    };
    reports.push(ResidualReport {
        identity_id: IdentityId::UnitIntegral,
        max_residual: max_abs(&(integral - eye(m))),
        points_tested: 1,
        fd_step: 0.0,
    });

    // (c) L K = 0 on interior points, second-order central differences.
    let extension = p.extend();
    let points = seeded_interior_points(n, 100, crate::DEFAULT_SEED);
    let mut worst = 0.0f64;
    let mut step_used = 0.0f64;
    for x in &points {
        let h = local_step(fd_step, x);
        step_used = step_used.max(h);
        let r = elliptic_residual(a, &|y: &[f64]| extension.eval(y), x, h)?;
        worst = worst.max(r);
    }
    reports.push(ResidualReport {
        identity_id: IdentityId::ExtensionAnnihilated,
        max_residual: worst,
        points_tested: points.len(),
        fd_step: step_used,
    });

    // Homogeneity K(λx) = λ^{1-n} K(x), analytic.
    let mut rng = sample::rng(crate::DEFAULT_SEED ^ 0x9E37);
    use rand::Rng;
    let mut worst_h = 0.0f64;
    for x in &points {
        let lambda = 0.5 + 1.5 * rng.gen::<f64>();
        let scaled: Vec<f64> = x.iter().map(|c| c * lambda).collect();
        let lhs = extension.eval(&scaled)?;
        let rhs = extension.eval(x)? * cr(lambda.powi(1 - n as i32));
        worst_h = worst_h.max(max_abs(&(lhs - rhs)));
    }
    reports.push(ResidualReport {
        identity_id: IdentityId::ExtensionHomogeneity,
        max_residual: worst_h,
        points_tested: points.len(),
        fd_step: 0.0,
    });

    Ok(reports)
}

/// Residual of `∂_t[P_t(x')] + Σ_{j<n} ∂_{x_j}[(x_j/t) P_t(x')]` at interior
/// points `(x', t)`, all derivatives by central differences.
pub fn check_dilation_identity(
    p: &MatrixKernel,
    points: &[Vec<f64>],
    fd_step: f64,
) -> Result<ResidualReport> {
    let n = p.n();
    let mut worst = 0.0f64;
    let mut step_used = 0.0f64;
    for x in points {
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected_n: n,
                expected_m: p.m(),
                got_n: x.len(),
                got_m: p.m(),
            });
        }
        let (xp, t) = x.split_at(n - 1);
        let t = t[0];
        let h = local_step(fd_step, x);
        step_used = step_used.max(h);
        let dt = (p.dilate(t + h, xp)? - p.dilate(t - h, xp)?) * cr(0.5 / h);
        let mut acc = dt;
        for j in 0..n - 1 {
            let term = |y: &[f64]| -> Result<CMatrix> {
                Ok(p.dilate(t, y)? * cr(y[j] / t))
            };
            acc += fd_partial(&term, xp, j, h)?;
        }
        worst = worst.max(max_abs(&acc));
    }
    Ok(ResidualReport {
        identity_id: IdentityId::DilationDerivative,
        max_residual: worst,
        points_tested: points.len(),
        fd_step: step_used,
    })
}

/// Tangential partial of a dilated auxiliary kernel,
/// `∂_s[Q^{(r)}_t](x') = t^{-n} (∂_s Q^{(r)})(x'/t)` with the base-kernel
/// derivative by central differences.
fn q_dilated_partial(
    q: &AuxKernelFamily,
    r: usize,
    t: f64,
    xp: &[f64],
    s: usize,
    fd_step: f64,
) -> Result<CMatrix> {
    let base: Vec<f64> = xp.iter().map(|c| c / t).collect();
    let h = local_step(fd_step, &base);
    let d = fd_partial(&|y: &[f64]| q.eval(r, y), &base, s, h)?;
    Ok(d * cr(t.powi(-(q.n() as i32))))
}

/// Auxiliary-kernel identities: factorization against the coefficient
/// blocks, the kernel-level time-derivative identity, curl-freeness,
/// vertical reconstruction, and decay.
pub fn check_q_identities(
    a: &CoefficientTensor,
    p: &MatrixKernel,
    q: &AuxKernelFamily,
    points: &[Vec<f64>],
    fd_step: f64,
) -> Result<Vec<ResidualReport>> {
    let n = a.n();
    let m = a.m();
    if q.n() != n || q.m() != m || p.n() != n {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: m,
            got_n: q.n(),
            got_m: q.m(),
        });
    }
    let mut reports = Vec::new();

    // Factorization Σ_r 2 Q^{(r)} A_{rs} = (x',1)_s P, analytic.
    let mut worst = 0.0f64;
    let boundary: Vec<&[f64]> = points
        .iter()
        .filter(|x| x.len() == n - 1)
        .map(|x| x.as_slice())
        .collect();
    if boundary.is_empty() {
        return Err(Error::EmptySample("no boundary points supplied"));
    }
    for xp in &boundary {
        let qs = q.eval_all(xp)?;
        let pm = p.eval(xp)?;
        let mut xe = xp.to_vec();
        xe.push(1.0);
        for s in 0..n {
            let mut lhs = CMatrix::zeros(m, m);
            for (r, qr) in qs.iter().enumerate() {
                lhs += qr * a.block(r, s)? * cr(2.0);
            }
            worst = worst.max(max_abs(&(lhs - &pm * cr(xe[s]))));
        }
    }
    reports.push(ResidualReport {
        identity_id: IdentityId::QFactorization,
        max_residual: worst,
        points_tested: boundary.len(),
        fd_step: 0.0,
    });

    // Kernel-level time derivative: ∂_t P_t = -2 Σ_{s<n,r} ∂_s[Q^{(r)}_t] A_{rs}.
    let interior = seeded_interior_points(n, 20, crate::DEFAULT_SEED ^ 0x51);
    let mut worst_t = 0.0f64;
    let mut step_used = 0.0f64;
    for x in &interior {
        let (xp, t) = x.split_at(n - 1);
        let t = t[0];
        let h = local_step(fd_step, x);
        step_used = step_used.max(h);
        let lhs = (p.dilate(t + h, xp)? - p.dilate(t - h, xp)?) * cr(0.5 / h);
        let mut rhs = CMatrix::zeros(m, m);
        for s in 0..n - 1 {
            for r in 0..n {
                let dq = q_dilated_partial(q, r, t, xp, s, fd_step)?;
                rhs += dq * a.block(r, s)? * cr(-2.0);
            }
        }
        worst_t = worst_t.max(max_abs(&(lhs - rhs)));
    }
    reports.push(ResidualReport {
        identity_id: IdentityId::PTimeDerivative,
        max_residual: worst_t,
        points_tested: interior.len(),
        fd_step: step_used,
    });

    // Curl-freeness over all index pairs, the vertical direction entering
    // through the t-derivative of the dilation.
    let mut worst_c = 0.0f64;
    for x in &interior {
        let (xp, t) = x.split_at(n - 1);
        let t = t[0];
        let h = local_step(fd_step, x);
        let deriv = |j: usize, r: usize| -> Result<CMatrix> {
            if j < n - 1 {
                q_dilated_partial(q, r, t, xp, j, fd_step)
            } else {
                Ok(
                    (q.eval_all_dilated(t + h, xp)?.swap_remove(r)
                        - q.eval_all_dilated(t - h, xp)?.swap_remove(r))
                        * cr(0.5 / h),
                )
            }
        };
        for j in 0..n {
            for r in (j + 1)..n {
                let diff = deriv(j, r)? - deriv(r, j)?;
                worst_c = worst_c.max(max_abs(&diff));
            }
        }
    }
    reports.push(ResidualReport {
        identity_id: IdentityId::QCurlFree,
        max_residual: worst_c,
        points_tested: interior.len(),
        fd_step: step_used,
    });

    // Vertical reconstruction Q^{(n)} = (½P - Σ_{s<n} Q^{(s)} A_{sn}) A_nn^{-1}.
    let a_nn_inv = try_inverse(&a.block(n - 1, n - 1)?).ok_or_else(|| {
        Error::InvalidParameter("vertical coefficient block is singular".into())
    })?;
    let mut worst_r = 0.0f64;
    for xp in &boundary {
        let qs = q.eval_all(xp)?;
        let mut acc = p.eval(xp)? * cr(0.5);
        for s in 0..n - 1 {
            acc -= &qs[s] * a.block(s, n - 1)?;
        }
        let recon = acc * &a_nn_inv;
        worst_r = worst_r.max(max_abs(&(recon - &qs[n - 1])));
    }
    reports.push(ResidualReport {
        identity_id: IdentityId::QnReconstruction,
        max_residual: worst_r,
        points_tested: boundary.len(),
        fd_step: 0.0,
    });

    // Decay of each Q^{(j)} against (1+|x'|)^{1-n}.
    let mut slope = 0.0f64;
    for j in 0..n {
        let s = decay_slope(
            &|x: &[f64]| Ok(max_abs(&q.eval(j, x)?)),
            n - 1,
            &|rho| (1.0 + rho).powi(n as i32 - 1),
        )?;
        slope = slope.max(s);
    }
    reports.push(ResidualReport {
        identity_id: IdentityId::QDecay,
        max_residual: slope,
        points_tested: n * (2 * (n - 1) + 4) * 8,
        fd_step: 0.0,
    });

    Ok(reports)
}

/// The factorization of the Poisson kernel through the homogeneous factor:
/// `P(x') = 2 k(x', 1)`, plus homogeneity of degree `-n` and evenness of
/// `k` in the tangential variable.
pub fn check_k_factor(
    p: &MatrixKernel,
    k: &SpaceKernel,
    points: &[Vec<f64>],
) -> Result<Vec<ResidualReport>> {
    let n = p.n();
    if k.n() != n || k.m() != p.m() {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: p.m(),
            got_n: k.n(),
            got_m: k.m(),
        });
    }
    let mut worst_eq = 0.0f64;
    let mut worst_prop = 0.0f64;
    let mut rng = sample::rng(crate::DEFAULT_SEED ^ 0x4B);
    use rand::Rng;
    for xp in points {
        let mut xe = xp.clone();
        xe.push(1.0);
        let lhs = p.eval(xp)?;
        let rhs = k.eval(&xe)? * cr(2.0);
        worst_eq = worst_eq.max(max_abs(&(lhs - rhs)));

        let lambda = 0.5 + 1.5 * rng.gen::<f64>();
        let scaled: Vec<f64> = xe.iter().map(|c| c * lambda).collect();
        let hom = k.eval(&scaled)? - k.eval(&xe)? * cr(lambda.powi(-(n as i32)));
        worst_prop = worst_prop.max(max_abs(&hom));

        let mirrored: Vec<f64> = xe.iter().map(|c| -c).collect();
        let even = k.eval(&mirrored)? - k.eval(&xe)?;
        worst_prop = worst_prop.max(max_abs(&even));
    }
    Ok(vec![
        ResidualReport {
            identity_id: IdentityId::PEquals2K,
            max_residual: worst_eq,
            points_tested: points.len(),
            fd_step: 0.0,
        },
        ResidualReport {
            identity_id: IdentityId::KHomogeneityEvenness,
            max_residual: worst_prop,
            points_tested: points.len(),
            fd_step: 0.0,
        },
    ])
}

/// Convolution-level identities at height `t` against a sampled datum with
/// first derivatives: the vertical-kernel reduction, and the two
/// time-derivative identities with the left side by central differences in
/// `t` (the oracle) and the right side by quadrature.  Residuals are
/// relative to the field scale.
pub fn check_convolution_identities(
    set: &KernelSet,
    data: &BoundaryData,
    t: f64,
    fd_step: f64,
) -> Result<Vec<ResidualReport>> {
    let n = set.n();
    let m = set.m();
    let d = n - 1;
    let grid = data.grid();
    if grid.spacing() > 0.5 * t {
        return Err(Error::InvalidGrid(format!(
            "grid spacing {} cannot resolve the kernel at height {t}",
            grid.spacing()
        )));
    }
    // Evaluation points: lattice-aligned spread inside the margin.
    let margin = 0.5 * grid.half_width;
    let mut xs = Vec::new();
    for frac in [-0.5, -0.2, 0.0, 0.3, 0.6] {
        let target = frac * margin;
        let x: Vec<f64> = (0..d)
            .map(|j| {
                let flip = if j % 2 == 0 { 1.0 } else { -1.0 };
                let i = grid
                    .snap_axis(flip * target, 0.6 * grid.spacing())
                    .unwrap_or(grid.points_per_axis / 2);
                grid.axis_coord(i)
            })
            .collect();
        xs.push(x);
    }
    let a = set.tensor();
    let a_nn_inv = try_inverse(&a.block(n - 1, n - 1)?).ok_or_else(|| {
        Error::InvalidParameter("vertical coefficient block is singular".into())
    })?;
    let gamma0 = vec![0usize; d];
    let ident = eye(m);

    let sub = |u: &[(CVector, f64)], v: &[(CVector, f64)]| -> Vec<CVector> {
        u.iter().zip(v).map(|(a, b)| &a.0 - &b.0).collect()
    };

    // All residuals are measured against the size of the base field
    // `P_t ∗ f`, so identities whose both sides vanish report ≈ 0 instead
    // of 0/0 noise.
    let base = convolve(set, KernelTag::P, data, &gamma0, &ident, t, &xs)?;
    let scale = base
        .iter()
        .map(|(v, _)| max_abs_vec(v))
        .fold(0.0, f64::max)
        .max(1e-300);

    let mut reports = Vec::new();

    // Q^{(n)}_t ∗ f = ½ P_t ∗ A_nn^{-1} f - Σ_{s<n} Q^{(s)}_t ∗ A_{sn} A_nn^{-1} f.
    {
        let lhs = convolve(set, KernelTag::Q(n - 1), data, &gamma0, &ident, t, &xs)?;
        let mut rhs = convolve(set, KernelTag::P, data, &gamma0, &(&a_nn_inv * cr(0.5)), t, &xs)?;
        for s in 0..d {
            let right = a.block(s, n - 1)? * &a_nn_inv;
            let term = convolve(set, KernelTag::Q(s), data, &gamma0, &right, t, &xs)?;
            for (acc, tv) in rhs.iter_mut().zip(term) {
                acc.0 -= tv.0;
            }
        }
        let worst = sub(&lhs, &rhs)
            .iter()
            .map(max_abs_vec)
            .fold(0.0, f64::max)
            / scale;
        reports.push(ResidualReport {
            identity_id: IdentityId::ConvQnReduction,
            max_residual: worst,
            points_tested: xs.len(),
            fd_step: 0.0,
        });
    }

    // ∂_t[P_t ∗ f] = -2 Σ_{s<n,r} Q^{(r)}_t ∗ (A_{rs} ∂_s f).
    let ht = fd_step * (1.0 + t);
    {
        let up = convolve(set, KernelTag::P, data, &gamma0, &ident, t + ht, &xs)?;
        let dn = convolve(set, KernelTag::P, data, &gamma0, &ident, t - ht, &xs)?;
        let lhs: Vec<CVector> = up
            .iter()
            .zip(&dn)
            .map(|(u, v)| (&u.0 - &v.0) * cr(0.5 / ht))
            .collect();
        let mut rhs: Vec<CVector> = vec![CVector::zeros(m); xs.len()];
        for s in 0..d {
            let mut gamma = gamma0.clone();
            gamma[s] = 1;
            for r in 0..n {
                let right = a.block(r, s)? * cr(-2.0);
                let term = convolve(set, KernelTag::Q(r), data, &gamma, &right, t, &xs)?;
                for (acc, tv) in rhs.iter_mut().zip(term) {
                    *acc += tv.0;
                }
            }
        }
        let worst = lhs
            .iter()
            .zip(&rhs)
            .map(|(a, b)| max_abs_vec(&(a - b)))
            .fold(0.0, f64::max)
            / scale;
        reports.push(ResidualReport {
            identity_id: IdentityId::ConvPTimeDerivative,
            max_residual: worst,
            points_tested: xs.len(),
            fd_step: ht,
        });
    }

    // ∂_t[Q^{(r)}_t ∗ f] = Q^{(n)}_t ∗ ∂_r f for each tangential r.
    {
        let mut worst = 0.0f64;
        for r in 0..d {
            let up = convolve(set, KernelTag::Q(r), data, &gamma0, &ident, t + ht, &xs)?;
            let dn = convolve(set, KernelTag::Q(r), data, &gamma0, &ident, t - ht, &xs)?;
            let lhs: Vec<CVector> = up
                .iter()
                .zip(&dn)
                .map(|(u, v)| (&u.0 - &v.0) * cr(0.5 / ht))
                .collect();
            let mut gamma = gamma0.clone();
            gamma[r] = 1;
            let rhs = convolve(set, KernelTag::Q(n - 1), data, &gamma, &ident, t, &xs)?;
            let res = lhs
                .iter()
                .zip(rhs.iter().map(|(v, _)| v))
                .map(|(a, b)| max_abs_vec(&(a - b)))
                .fold(0.0, f64::max)
                / scale;
            worst = worst.max(res);
        }
        reports.push(ResidualReport {
            identity_id: IdentityId::ConvQTimeDerivative,
            max_residual: worst,
            points_tested: xs.len() * d,
            fd_step: ht,
        });
    }

    Ok(reports)
}

/// A smooth test field with an analytic Jacobian: value and `m×n` Jacobian
/// `J[β][s] = ∂_s u_β` at a point.
type TestField = Box<dyn Fn(&[f64]) -> (CVector, CMatrix)>;

/// Fixed catalog of test fields: linear, quadratic, and Gaussian.
fn test_fields(n: usize, m: usize) -> Vec<TestField> {
    let mut fields: Vec<TestField> = Vec::new();
    // Linear with deterministic coefficients.
    fields.push(Box::new(move |x: &[f64]| {
        let val = CVector::from_fn(m, |b, _| {
            cr((0..n).map(|s| ((b + 2 * s + 1) as f64) * x[s]).sum::<f64>() + b as f64)
        });
        let jac = CMatrix::from_fn(m, n, |b, s| cr((b + 2 * s + 1) as f64));
        (val, jac)
    }));
    // Quadratic: u_β = x_{β mod n} · x_{(β+1) mod n} + x_1².
    fields.push(Box::new(move |x: &[f64]| {
        let val = CVector::from_fn(m, |b, _| {
            cr(x[b % n] * x[(b + 1) % n] + x[0] * x[0])
        });
        let jac = CMatrix::from_fn(m, n, |b, s| {
            let i = b % n;
            let j = (b + 1) % n;
            let mut g = 0.0;
            if s == i {
                g += x[j];
            }
            if s == j {
                g += x[i];
            }
            if s == 0 {
                g += 2.0 * x[0];
            }
            cr(g)
        });
        (val, jac)
    }));
    // Gaussian bump per component.
    fields.push(Box::new(move |x: &[f64]| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let e = (-r2).exp();
        let val = CVector::from_fn(m, |b, _| cr((b + 1) as f64 * e));
        let jac = CMatrix::from_fn(m, n, |b, s| cr((b + 1) as f64 * e * (-2.0 * x[s])));
        (val, jac)
    }));
    fields
}

/// Split of the vertical derivative into its tangential part and the
/// conormal contribution:
/// `∂_t u = ∂_tan u + (A_nn^⊤)^{-1} D_{A^⊤} u` with
/// `D_A u = (a^{αβ}_{ns} ∂_s u_β)_α`; checked with analytic Jacobians on
/// the fixed test-field catalog.
pub fn check_decomp_pt(
    a: &CoefficientTensor,
    points: &[Vec<f64>],
) -> Result<ResidualReport> {
    let n = a.n();
    let m = a.m();
    let a_nn_t_inv = try_inverse(&a.block(n - 1, n - 1)?.transpose()).ok_or_else(|| {
        Error::InvalidParameter("vertical coefficient block is singular".into())
    })?;
    let fields = test_fields(n, m);
    let mut worst = 0.0f64;
    for x in points {
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected_n: n,
                expected_m: m,
                got_n: x.len(),
                got_m: m,
            });
        }
        for field in &fields {
            let (_, jac) = field(x);
            let dt: CVector = jac.column(n - 1).into_owned();
            // D_{A^⊤} u = Σ_{s≤n} A_{sn}^⊤ ∂_s u; the tangential part drops
            // s = n and flips sign.
            let mut conormal = CVector::zeros(m);
            let mut tangential = CVector::zeros(m);
            for s in 0..n {
                let contrib = a.block(s, n - 1)?.transpose() * jac.column(s);
                conormal += &contrib;
                if s < n - 1 {
                    tangential += contrib;
                }
            }
            let d_tan = &a_nn_t_inv * tangential * cr(-1.0);
            let recomposed = d_tan + &a_nn_t_inv * conormal;
            worst = worst.max(max_abs_vec(&(recomposed - dt)));
        }
    }
    Ok(ResidualReport {
        identity_id: IdentityId::NormalDerivativeSplit,
        max_residual: worst,
        points_tested: points.len(),
        fd_step: 0.0,
    })
}

/// Fundamental-solution axioms: annihilation by the operator away from the
/// pole (FD), evenness, and decay of the FD gradient (plus of `E` itself
/// for `n ≥ 3`).
pub fn check_fundamental(
    a: &CoefficientTensor,
    e: &SpaceKernel,
    points: &[Vec<f64>],
    fd_step: f64,
) -> Result<Vec<ResidualReport>> {
    let n = a.n();
    if e.n() != n || e.m() != a.m() {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: a.m(),
            got_n: e.n(),
            got_m: e.m(),
        });
    }
    let mut worst = 0.0f64;
    let mut step_used = 0.0f64;
    for x in points {
        let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let h = local_step(fd_step, x);
        if norm < 10.0 * h {
            return Err(Error::InvalidParameter(format!(
                "point at |x| = {norm:.3e} too close to the pole for step {h:.3e}"
            )));
        }
        step_used = step_used.max(h);
        worst = worst.max(elliptic_residual(a, &|y: &[f64]| e.eval(y), x, h)?);
    }
    let mut reports = vec![ResidualReport {
        identity_id: IdentityId::FundamentalAnnihilated,
        max_residual: worst,
        points_tested: points.len(),
        fd_step: step_used,
    }];

    let mut worst_e = 0.0f64;
    for x in points {
        let mirrored: Vec<f64> = x.iter().map(|c| -c).collect();
        worst_e = worst_e.max(max_abs(&(e.eval(&mirrored)? - e.eval(x)?)));
    }
    reports.push(ResidualReport {
        identity_id: IdentityId::FundamentalEvenness,
        max_residual: worst_e,
        points_tested: points.len(),
        fd_step: 0.0,
    });

    // Gradient decay |∇E| |x|^{n-1} (FD gradient), and |E| |x|^{n-2} for n ≥ 3.
    let grad_mag = |x: &[f64]| -> Result<f64> {
        let h = local_step(fd_step, x);
        let mut g = 0.0f64;
        for j in 0..n {
            g = g.max(max_abs(&fd_partial(&|y: &[f64]| e.eval(y), x, j, h)?));
        }
        Ok(g)
    };
    let mut slope = decay_slope(&grad_mag, n, &|rho| rho.powi(n as i32 - 1))?;
    if n >= 3 {
        slope = slope.max(decay_slope(
            &|x: &[f64]| Ok(max_abs(&e.eval(x)?)),
            n,
            &|rho| rho.powi(n as i32 - 2),
        )?);
    }
    reports.push(ResidualReport {
        identity_id: IdentityId::FundamentalDecay,
        max_residual: slope,
        points_tested: (2 * n + 4) * 8,
        fd_step: step_used,
    });

    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::{ComplexSpec, DatumSpec, ProfileSpec};
    use crate::grid::GridSpec;
    use crate::kernels::{
        harmonic_poisson, lame_k, lame_poisson, scalar_fundamental, scalar_k,
    };
    use crate::optensor::{lame_distinguished_theta, lame_tensor, LameModuli};
    use crate::solver::KernelSet;

    fn lame_parts() -> (CoefficientTensor, MatrixKernel) {
        let moduli = LameModuli::new(1.0, 1.0).unwrap();
        let theta = lame_distinguished_theta(moduli);
        let a = lame_tensor(moduli, theta, 3).unwrap();
        let p = lame_poisson(moduli, 3).unwrap();
        (a, p)
    }

    fn report_for(reports: &[ResidualReport], id: IdentityId) -> &ResidualReport {
        reports
            .iter()
            .find(|r| r.identity_id == id)
            .unwrap_or_else(|| panic!("missing report for {id}"))
    }

    #[test]
    fn harmonic_extension_annihilated_at_frozen_point() {
        // Second-order FD Laplacian of the extended kernel at (0.3, 0.7).
        let a = CoefficientTensor::laplacian(2).unwrap();
        let p = harmonic_poisson(2).unwrap();
        let ext = p.extend();
        let f = |y: &[f64]| ext.eval(y);
        let r1 = elliptic_residual(&a, &f, &[0.3, 0.7], 1e-3).unwrap();
        assert!(r1 < 1e-5, "residual {r1:.3e}");
        let r2 = elliptic_residual(&a, &f, &[0.3, 0.7], 5e-4).unwrap();
        let ratio = r1 / r2;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "step halving gave ratio {ratio:.2}"
        );
    }

    #[test]
    fn harmonic_poisson_axioms_pass() {
        let a = CoefficientTensor::laplacian(2).unwrap();
        let p = harmonic_poisson(2).unwrap();
        let reports = check_poisson_axioms(&a, &p, 1e-9, 1e-4).unwrap();
        assert_eq!(reports.len(), 4);
        for r in &reports {
            assert!(
                r.passes(),
                "{} residual {:.3e} over threshold {:.1e}",
                r.identity_id,
                r.max_residual,
                threshold(r.identity_id)
            );
        }
        // Homogeneity of the closed form is exact to machine precision.
        let hom = report_for(&reports, IdentityId::ExtensionHomogeneity);
        assert!(hom.max_residual < 1e-14);
    }

    #[test]
    fn lame_poisson_axioms_pass() {
        let (a, p) = lame_parts();
        let reports = check_poisson_axioms(&a, &p, 1e-7, 1e-4).unwrap();
        let unit = report_for(&reports, IdentityId::UnitIntegral);
        assert!(unit.max_residual < 1e-6, "|∫P - I| = {:.3e}", unit.max_residual);
        for r in &reports {
            assert!(
                r.passes(),
                "{} residual {:.3e}",
                r.identity_id,
                r.max_residual
            );
        }
    }

    #[test]
    fn fd_residual_halves_like_second_order() {
        let (a, p) = lame_parts();
        let coarse = check_poisson_axioms(&a, &p, 1e-5, 1e-3).unwrap();
        let fine = check_poisson_axioms(&a, &p, 1e-5, 5e-4).unwrap();
        let rc = report_for(&coarse, IdentityId::ExtensionAnnihilated).max_residual;
        let rf = report_for(&fine, IdentityId::ExtensionAnnihilated).max_residual;
        let ratio = rc / rf;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "step halving gave ratio {ratio:.2} ({rc:.3e} / {rf:.3e})"
        );
    }

    #[test]
    fn dilation_identity_residuals() {
        let p = harmonic_poisson(2).unwrap();
        // Closed form: both sides vanish identically at (1, 1).
        let single = check_dilation_identity(&p, &[vec![1.0, 1.0]], 1e-4).unwrap();
        assert!(single.max_residual < 1e-6, "residual {:.3e}", single.max_residual);
        // Seeded interior sample.
        let pts = seeded_interior_points(2, 30, crate::DEFAULT_SEED);
        let rep = check_dilation_identity(&p, &pts, 1e-4).unwrap();
        assert!(rep.passes(), "residual {:.3e}", rep.max_residual);
        assert_eq!(rep.points_tested, 30);

        let (_, lp) = lame_parts();
        let pts3 = seeded_interior_points(3, 30, crate::DEFAULT_SEED);
        let rep3 = check_dilation_identity(&lp, &pts3, 1e-4).unwrap();
        assert!(rep3.passes(), "lame residual {:.3e}", rep3.max_residual);
    }

    #[test]
    fn dilation_terms_scale_with_homogeneity_degree() {
        // ∂_t[P_t(x')] is homogeneous of degree -n in (x', t).
        let p = harmonic_poisson(2).unwrap();
        let (x, t) = (0.7, 0.4);
        let h = 1e-5;
        let d1 = (p.dilate(t + h, &[x]).unwrap() - p.dilate(t - h, &[x]).unwrap())
            * cr(0.5 / h);
        let d2 = (p.dilate(2.0 * t + 2.0 * h, &[2.0 * x]).unwrap()
            - p.dilate(2.0 * t - 2.0 * h, &[2.0 * x]).unwrap())
            * cr(0.25 / h);
        let expected = &d1 * cr(0.25);
        assert!(max_abs(&(d2 - expected)) < 1e-6);
    }

    #[test]
    fn scalar_q_identities_exact_factorization() {
        let a = CoefficientTensor::laplacian(2).unwrap();
        let set = KernelSet::harmonic(2).unwrap();
        let pts = seeded_boundary_points(1, 25, crate::DEFAULT_SEED);
        let reports =
            check_q_identities(&a, set.poisson(), set.aux(), &pts, 1e-4).unwrap();
        let fact = report_for(&reports, IdentityId::QFactorization);
        assert!(fact.max_residual < 1e-14, "factorization {:.3e}", fact.max_residual);
        for r in &reports {
            assert!(r.passes(), "{} residual {:.3e}", r.identity_id, r.max_residual);
        }
    }

    #[test]
    fn lame_q_identities_pass() {
        let set = KernelSet::lame(LameModuli::new(1.0, 1.0).unwrap(), 3).unwrap();
        let a = set.tensor().clone();
        let pts = seeded_boundary_points(2, 15, crate::DEFAULT_SEED);
        let reports =
            check_q_identities(&a, set.poisson(), set.aux(), &pts, 1e-4).unwrap();
        let recon = report_for(&reports, IdentityId::QnReconstruction);
        assert!(recon.max_residual < 1e-8, "reconstruction {:.3e}", recon.max_residual);
        for r in &reports {
            assert!(r.passes(), "{} residual {:.3e}", r.identity_id, r.max_residual);
        }
    }

    #[test]
    fn curl_freeness_is_second_order_in_step() {
        let a = CoefficientTensor::laplacian(2).unwrap();
        let set = KernelSet::harmonic(2).unwrap();
        let pts = seeded_boundary_points(1, 10, crate::DEFAULT_SEED);
        let coarse =
            check_q_identities(&a, set.poisson(), set.aux(), &pts, 2e-3).unwrap();
        let fine = check_q_identities(&a, set.poisson(), set.aux(), &pts, 1e-3).unwrap();
        let rc = report_for(&coarse, IdentityId::QCurlFree).max_residual;
        let rf = report_for(&fine, IdentityId::QCurlFree).max_residual;
        let ratio = rc / rf;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "curl FD halving ratio {ratio:.2} ({rc:.3e} / {rf:.3e})"
        );
    }

    #[test]
    fn k_factor_checks() {
        let a = CoefficientTensor::laplacian(2).unwrap();
        let p = harmonic_poisson(2).unwrap();
        let k = scalar_k(&a).unwrap();
        let pts = seeded_boundary_points(1, 20, crate::DEFAULT_SEED);
        for r in &check_k_factor(&p, &k, &pts).unwrap() {
            assert!(r.passes(), "{} residual {:.3e}", r.identity_id, r.max_residual);
        }
        let moduli = LameModuli::new(1.0, 1.0).unwrap();
        let lp = lame_poisson(moduli, 3).unwrap();
        let lk = lame_k(moduli, 3).unwrap();
        let pts2 = seeded_boundary_points(2, 20, crate::DEFAULT_SEED);
        for r in &check_k_factor(&lp, &lk, &pts2).unwrap() {
            assert!(r.passes(), "{} residual {:.3e}", r.identity_id, r.max_residual);
        }
    }

    fn gaussian_datum(grid: &GridSpec, m: usize, decay: f64) -> BoundaryData {
        let comp = vec![ProfileSpec::Gaussian {
            decay,
            center: vec![],
            amplitude: ComplexSpec { re: 1.0, im: 0.0 },
        }];
        let spec = DatumSpec { components: vec![comp; m] };
        BoundaryData::from_spec(&spec, grid, 1, 2.0).unwrap()
    }

    #[test]
    fn convolution_identities_harmonic_gaussian() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 8.0, 257).unwrap();
        // σ = 1 Gaussian.
        let data = gaussian_datum(&grid, 1, 0.5);
        let reports = check_convolution_identities(&set, &data, 0.5, 1e-3).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(
                r.passes(),
                "{} relative residual {:.3e}",
                r.identity_id,
                r.max_residual
            );
        }
        let red = report_for(&reports, IdentityId::ConvQnReduction);
        assert!(red.max_residual < 1e-12, "reduction {:.3e}", red.max_residual);
    }

    #[test]
    fn convolution_identities_lame_gaussian() {
        let set = KernelSet::lame(LameModuli::new(1.0, 1.0).unwrap(), 3).unwrap();
        // Spacing 0.125 keeps the trapezoid aliasing error of the t = 0.5
        // kernels (~e^{-tπ/h}) a couple of decades under the thresholds.
        let grid = GridSpec::new(3, 6.0, 97).unwrap();
        let data = gaussian_datum(&grid, 3, 0.5);
        let reports = check_convolution_identities(&set, &data, 0.5, 1e-3).unwrap();
        for r in &reports {
            assert!(
                r.passes(),
                "{} relative residual {:.3e}",
                r.identity_id,
                r.max_residual
            );
        }
    }

    #[test]
    fn convolution_constant_datum_tangential_side_vanishes() {
        // For a constant datum every ∂_s f sample is exactly zero, so the
        // right side of the time-derivative identity vanishes and the
        // reported residual is exactly the truncated-tail drift of the left
        // side, which shrinks like 1/R.
        let set = KernelSet::harmonic(2).unwrap();
        let mut drifts = Vec::new();
        for half_width in [8.0, 16.0] {
            let npts = (32.0 * half_width) as usize + 1;
            let grid = GridSpec::new(2, half_width, npts).unwrap();
            let spec = DatumSpec {
                components: vec![vec![ProfileSpec::Constant {
                    value: ComplexSpec { re: 1.0, im: 0.0 },
                }]],
            };
            let data = BoundaryData::from_spec(&spec, &grid, 1, 2.0).unwrap();
            let reports = check_convolution_identities(&set, &data, 0.5, 1e-3).unwrap();
            drifts.push(report_for(&reports, IdentityId::ConvPTimeDerivative).max_residual);
        }
        let ratio = drifts[0] / drifts[1];
        assert!(
            (1.6..=2.4).contains(&ratio),
            "tail drift should halve when R doubles: {drifts:?}"
        );
    }

    #[test]
    fn convolution_rejects_coarse_grid() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 8.0, 33).unwrap(); // spacing 0.5
        let data = gaussian_datum(&grid, 1, 0.5);
        assert!(matches!(
            check_convolution_identities(&set, &data, 0.5, 1e-3),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn decomposition_is_algebraic() {
        // Scalar identity: the tangential part vanishes and the conormal
        // term is exactly ∂_t.
        let a = CoefficientTensor::laplacian(2).unwrap();
        let pts = seeded_interior_points(2, 10, crate::DEFAULT_SEED);
        let rep = check_decomp_pt(&a, &pts).unwrap();
        assert!(rep.max_residual < 1e-13, "scalar split {:.3e}", rep.max_residual);

        let (la, _) = lame_parts();
        let pts3 = seeded_interior_points(3, 10, crate::DEFAULT_SEED);
        let rep3 = check_decomp_pt(&la, &pts3).unwrap();
        assert!(rep3.max_residual < 1e-12, "lame split {:.3e}", rep3.max_residual);

        // Any tensor with invertible vertical block satisfies the split;
        // complex-scaled coefficients keep it exact.
        let scaled = la.scaled(crate::linalg::c(1.0, 0.3)).unwrap();
        let rep_c = check_decomp_pt(&scaled, &pts3).unwrap();
        assert!(rep_c.max_residual < 1e-12, "complex split {:.3e}", rep_c.max_residual);
    }

    #[test]
    fn fundamental_solution_checks() {
        // n = 3: Δ(-1/(4π|x|)) away from the pole, FD order 2.
        let a = CoefficientTensor::laplacian(3).unwrap();
        let e = scalar_fundamental(&a).unwrap();
        let pts = seeded_interior_points(3, 20, crate::DEFAULT_SEED);
        let reports = check_fundamental(&a, &e, &pts, 1e-3).unwrap();
        let ann = report_for(&reports, IdentityId::FundamentalAnnihilated);
        assert!(ann.max_residual < 1e-5, "ΔE residual {:.3e}", ann.max_residual);
        let evn = report_for(&reports, IdentityId::FundamentalEvenness);
        assert!(evn.max_residual < 1e-15);
        for r in &reports {
            assert!(r.passes(), "{} residual {:.3e}", r.identity_id, r.max_residual);
        }

        let fine = check_fundamental(&a, &e, &pts, 5e-4).unwrap();
        let ratio = ann.max_residual
            / report_for(&fine, IdentityId::FundamentalAnnihilated).max_residual;
        assert!((3.5..=4.5).contains(&ratio), "halving ratio {ratio:.2}");

        // n = 2 logarithmic branch: gradient decay governs.
        let a2 = CoefficientTensor::laplacian(2).unwrap();
        let e2 = scalar_fundamental(&a2).unwrap();
        let pts2 = seeded_interior_points(2, 20, crate::DEFAULT_SEED);
        for r in &check_fundamental(&a2, &e2, &pts2, 1e-4).unwrap() {
            assert!(r.passes(), "{} residual {:.3e}", r.identity_id, r.max_residual);
        }

        // Points near the pole are rejected.
        assert!(matches!(
            check_fundamental(&a, &e, &[vec![1e-3, 0.0, 0.0]], 1e-3),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn identity_ids_serialize_snake_case() {
        let json = serde_json::to_string(&IdentityId::ConvPTimeDerivative).unwrap();
        assert_eq!(json, "\"conv_p_time_derivative\"");
        assert_eq!(format!("{}", IdentityId::QnReconstruction), "qn_reconstruction");
        let report = ResidualReport {
            identity_id: IdentityId::UnitIntegral,
            max_residual: 1e-9,
            points_tested: 1,
            fd_step: 0.0,
        };
        let round: ResidualReport =
            serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
        assert_eq!(round.identity_id, IdentityId::UnitIntegral);
        assert!(round.passes());
    }

    #[test]
    fn deterministic_reports() {
        let a = CoefficientTensor::laplacian(2).unwrap();
        let p = harmonic_poisson(2).unwrap();
        let r1 = check_poisson_axioms(&a, &p, 1e-9, 1e-4).unwrap();
        let r2 = check_poisson_axioms(&a, &p, 1e-9, 1e-4).unwrap();
        let s1 = serde_json::to_string(&r1).unwrap();
        let s2 = serde_json::to_string(&r2).unwrap();
        assert_eq!(s1, s2);
    }
}
