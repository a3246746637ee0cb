//! Closed-form kernels for half-space boundary problems: the harmonic,
//! scalar, and elastostatic Poisson kernels, scalar fundamental solutions and
//! their gradients, the homogeneous factor `k`, dilations `P_t`, the extended
//! kernel `K(x', t) = t^{1-n} P(x'/t)`, and the auxiliary gradient family
//! `Q^(j)`.
//!
//! Conventions.  Kernels are matrix-valued: the row index is the output
//! component and the column index is the datum component, so a solution reads
//! `u_γ = Σ_α (P_{γα})_t ∗ f_α`.  Boundary kernels live on `ℝ^{n-1}`; space
//! kernels live on `ℝ^n ∖ {0}` (or on the open upper half-space for extended
//! kernels).  Complex powers and logarithms use the principal branch, with an
//! explicit guard against the cut.

use std::sync::Arc;

use nalgebra::linalg::{LU, SVD};
use nalgebra::Dyn;

use crate::linalg::{cr, max_abs, max_abs_vec, try_inverse, C64, CMatrix, CVector};
use crate::optensor::{CoefficientTensor, LameModuli};
use crate::sample;
use crate::{Error, Result};

type KernelFn = Arc<dyn Fn(&[f64]) -> Result<CMatrix> + Send + Sync>;

/// Gradient of a fundamental solution: `x ↦ [∂_1 E(x), …, ∂_n E(x)]`, each
/// partial an `M×M` matrix.
pub type GradEFn = Arc<dyn Fn(&[f64]) -> Result<Vec<CMatrix>> + Send + Sync>;

/// Surface area `ω_m` of the unit sphere in `ℝ^{m+1}`:
/// `ω_m = 2 π^{(m+1)/2} / Γ((m+1)/2)`.
///
/// Evaluated exactly through integer and half-integer Gamma values, so
/// `ω_0 = 2`, `ω_1 = 2π`, `ω_2 = 4π`, `ω_3 = 2π²`, …
pub fn sphere_area(m: usize) -> f64 {
    use std::f64::consts::PI;
    let k = m + 1;
    if k.is_multiple_of(2) {
        // Γ(k/2) = (k/2 - 1)!
        let p = k / 2;
        2.0 * PI.powi(p as i32) / factorial(p - 1)
    } else {
        // Γ(j + 1/2) = (2j)! √π / (4^j j!) with j = (k-1)/2 = m/2.
        let j = m / 2;
        2.0 * PI.powi(j as i32) * 4f64.powi(j as i32) * factorial(j) / factorial(2 * j)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// A matrix-valued kernel on the boundary `ℝ^{n-1}`.
#[derive(Clone)]
pub struct MatrixKernel {
    n: usize,
    m: usize,
    eval: KernelFn,
    /// Fitted constant `C` with `|P(x')| ≤ C (1+|x'|²)^{-n/2}` over the
    /// probed radial sample.
    pub decay_constant: f64,
}

impl MatrixKernel {
    /// Wraps an evaluation closure, probing a radial sample to fit the decay
    /// constant (and to surface evaluation errors early).
    pub fn new(
        n: usize,
        m: usize,
        eval: impl Fn(&[f64]) -> Result<CMatrix> + Send + Sync + 'static,
    ) -> Result<Self> {
        let eval: KernelFn = Arc::new(eval);
        let mut decay = 0.0f64;
        for x in probe_points(n - 1) {
            let v = eval(&x)?;
            if v.nrows() != m || v.ncols() != m {
                return Err(Error::DimensionMismatch {
                    expected_n: m,
                    expected_m: m,
                    got_n: v.nrows(),
                    got_m: v.ncols(),
                });
            }
            let rho2: f64 = x.iter().map(|t| t * t).sum();
            decay = decay.max(max_abs(&v) * (1.0 + rho2).powf(0.5 * n as f64));
        }
        Ok(Self { n, m, eval, decay_constant: decay })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Kernel value at a boundary point.
    pub fn eval(&self, xprime: &[f64]) -> Result<CMatrix> {
        if xprime.len() != self.n - 1 {
            return Err(Error::DimensionMismatch {
                expected_n: self.n - 1,
                expected_m: self.m,
                got_n: xprime.len(),
                got_m: self.m,
            });
        }
        (self.eval)(xprime)
    }

    /// Dilated kernel `P_t(x') = t^{1-n} P(x'/t)` for `t > 0`.
    pub fn dilate(&self, t: f64, xprime: &[f64]) -> Result<CMatrix> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NonPositiveT { t });
        }
        let scaled: Vec<f64> = xprime.iter().map(|x| x / t).collect();
        Ok(self.eval(&scaled)? * cr(t.powi(1 - self.n as i32)))
    }

    /// The extended kernel `K(x', t) = P_t(x')` on the open upper half-space,
    /// positively homogeneous of degree `1-n`.
    pub fn extend(&self) -> SpaceKernel {
        let inner = self.clone();
        let n = self.n;
        SpaceKernel {
            n,
            m: self.m,
            eval: Arc::new(move |x: &[f64]| {
                let (xp, t) = split_last(x);
                inner.dilate(t, xp)
            }),
            homogeneity_degree: 1.0 - n as f64,
            log_coefficient: None,
        }
    }
}

fn split_last(x: &[f64]) -> (&[f64], f64) {
    let (last, rest) = x.split_last().expect("nonempty point");
    (rest, *last)
}

/// Deterministic probe set used when fitting decay constants: the origin plus
/// log-spaced radii along coordinate axes and a few seeded directions.
fn probe_points(d: usize) -> Vec<Vec<f64>> {
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
    let mut pts = vec![vec![0.0; d]];
    for k in 0..=12 {
        let rho = 10f64.powf(-1.0 + k as f64 / 3.0);
        for dir in &dirs {
            pts.push(dir.iter().map(|c| c * rho).collect());
        }
    }
    pts
}

/// A matrix-valued kernel on `ℝ^n ∖ {0}` (or on the open upper half-space
/// when produced by [`MatrixKernel::extend`]).
#[derive(Clone)]
pub struct SpaceKernel {
    n: usize,
    m: usize,
    eval: KernelFn,
    /// Degree `d` with `K(λx) = λ^d K(x)` for `λ > 0` (modulo the log term
    /// when `log_coefficient` is set).
    pub homogeneity_degree: f64,
    /// Two-dimensional fundamental solutions carry a term
    /// `log_coefficient · log|x|`; `None` otherwise.
    pub log_coefficient: Option<CMatrix>,
}

impl SpaceKernel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn eval(&self, x: &[f64]) -> Result<CMatrix> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected_n: self.n,
                expected_m: self.m,
                got_n: x.len(),
                got_m: self.m,
            });
        }
        if x.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidParameter(
                "space kernel evaluated at x = 0".into(),
            ));
        }
        (self.eval)(x)
    }
}

/// Symmetric part, inverse, and principal square-rooted determinant of a
/// scalar coefficient matrix.
struct ScalarData {
    n: usize,
    a_inv: CMatrix,
    sqrt_det: C64,
}

fn scalar_data(a: &CoefficientTensor) -> Result<ScalarData> {
    if a.m() != 1 {
        return Err(Error::DimensionMismatch {
            expected_n: a.n(),
            expected_m: 1,
            got_n: a.n(),
            got_m: a.m(),
        });
    }
    let n = a.n();
    let sym = a.symmetrize();
    let mat = CMatrix::from_fn(n, n, |r, s| sym.get(0, 0, r, s));
    let det = mat.determinant();
    let a_inv = try_inverse(&mat).ok_or(Error::InvalidParameter(
        "symmetrized scalar coefficient matrix is singular".into(),
    ))?;
    Ok(ScalarData { n, a_inv, sqrt_det: det.sqrt() })
}

/// Complex bilinear form `⟨A⁻¹x, x⟩` at a real point (no conjugation).
fn quad_form(a_inv: &CMatrix, x: &[f64]) -> C64 {
    let xv = CVector::from_iterator(x.len(), x.iter().map(|&t| cr(t)));
    let y = a_inv * &xv;
    y.iter().zip(x.iter()).map(|(yi, &xi)| yi * xi).sum()
}

/// Rejects arguments on the principal branch cut `(-∞, 0]`.
fn branch_checked(w: C64, x: &[f64]) -> Result<C64> {
    if w.re <= 0.0 && w.im.abs() < 1e-14 {
        return Err(Error::BranchCut { x: x.to_vec(), w });
    }
    Ok(w)
}

/// The classical harmonic Poisson kernel
/// `P^Δ(x') = (2/ω_{n-1}) (1+|x'|²)^{-n/2}` (a `1×1` kernel).
pub fn harmonic_poisson(n: usize) -> Result<MatrixKernel> {
    if n < 2 {
        return Err(Error::InvalidDimensions { n, m: 1 });
    }
    let c = 2.0 / sphere_area(n - 1);
    MatrixKernel::new(n, 1, move |xp: &[f64]| {
        let rho2: f64 = xp.iter().map(|t| t * t).sum();
        Ok(CMatrix::from_element(1, 1, cr(c * (1.0 + rho2).powf(-0.5 * n as f64))))
    })
}

/// Poisson kernel of a scalar elliptic operator with coefficient matrix `A`:
///
/// `P(x') = (2/(ω_{n-1} √det A_sym)) ⟨A_sym⁻¹(x',1), (x',1)⟩^{-n/2}`.
pub fn scalar_poisson(a: &CoefficientTensor) -> Result<MatrixKernel> {
    let data = scalar_data(a)?;
    let n = data.n;
    let omega = sphere_area(n - 1);
    MatrixKernel::new(n, 1, move |xp: &[f64]| {
        let mut x = xp.to_vec();
        x.push(1.0);
        let w = branch_checked(quad_form(&data.a_inv, &x), &x)?;
        let val = cr(2.0 / omega) / data.sqrt_det * w.powf(-0.5 * n as f64);
        Ok(CMatrix::from_element(1, 1, val))
    })
}

/// Fundamental solution of a scalar elliptic operator:
///
/// * `n ≥ 3`: `E(x) = -(1/((n-2) ω_{n-1} √det A_sym)) ⟨A_sym⁻¹x, x⟩^{(2-n)/2}`,
/// * `n = 2`: `E(x) = (1/(4π √det A_sym)) log ⟨A_sym⁻¹x, x⟩`,
///
/// with the principal branch throughout.  In two dimensions the kernel is
/// `log_coefficient · log|x|` plus a degree-0 part; the reported coefficient
/// is `1/(2π √det A_sym)`.
pub fn scalar_fundamental(a: &CoefficientTensor) -> Result<SpaceKernel> {
    let data = scalar_data(a)?;
    let n = data.n;
    let omega = sphere_area(n - 1);
    let log_coefficient = (n == 2).then(|| {
        CMatrix::from_element(1, 1, cr(1.0 / (2.0 * std::f64::consts::PI)) / data.sqrt_det)
    });
    let eval = move |x: &[f64]| {
        let w = branch_checked(quad_form(&data.a_inv, x), x)?;
        let val = if n == 2 {
            w.ln() / (cr(4.0 * std::f64::consts::PI) * data.sqrt_det)
        } else {
            -w.powf(0.5 * (2.0 - n as f64))
                / (cr((n as f64 - 2.0) * omega) * data.sqrt_det)
        };
        Ok(CMatrix::from_element(1, 1, val))
    };
    Ok(SpaceKernel {
        n,
        m: 1,
        eval: Arc::new(eval),
        homogeneity_degree: 2.0 - n as f64,
        log_coefficient,
    })
}

/// Analytic gradient of the scalar fundamental solution.  One formula covers
/// every `n ≥ 2`:
///
/// `∂_s E(x) = (A_sym⁻¹x)_s · ⟨A_sym⁻¹x, x⟩^{-n/2} / (ω_{n-1} √det A_sym)`.
pub fn scalar_grad_fundamental(a: &CoefficientTensor) -> Result<GradEFn> {
    let data = scalar_data(a)?;
    let n = data.n;
    let omega = sphere_area(n - 1);
    Ok(Arc::new(move |x: &[f64]| {
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected_n: n,
                expected_m: 1,
                got_n: x.len(),
                got_m: 1,
            });
        }
        let w = branch_checked(quad_form(&data.a_inv, x), x)?;
        let xv = CVector::from_iterator(n, x.iter().map(|&t| cr(t)));
        let ax = &data.a_inv * &xv;
        let scale = w.powf(-0.5 * n as f64) / (cr(omega) * data.sqrt_det);
        Ok((0..n).map(|s| CMatrix::from_element(1, 1, ax[s] * scale)).collect())
    }))
}

/// The homogeneous factor of the scalar gradient contraction:
/// `k(x) = ⟨A_sym⁻¹x, x⟩^{-n/2} / (ω_{n-1} √det A_sym)`, even and
/// homogeneous of degree `-n`, with `P(x') = 2 k(x', 1)`.
pub fn scalar_k(a: &CoefficientTensor) -> Result<SpaceKernel> {
    let data = scalar_data(a)?;
    let n = data.n;
    let omega = sphere_area(n - 1);
    Ok(SpaceKernel {
        n,
        m: 1,
        eval: Arc::new(move |x: &[f64]| {
            let w = branch_checked(quad_form(&data.a_inv, x), x)?;
            Ok(CMatrix::from_element(
                1,
                1,
                w.powf(-0.5 * n as f64) / (cr(omega) * data.sqrt_det),
            ))
        }),
        homogeneity_degree: -(n as f64),
        log_coefficient: None,
    })
}

/// Poisson kernel of the elastostatic system with the distinguished tensor:
///
/// `P_{αβ}(x') = (4μ/(3μ+λ)) δ_{αβ} / (ω_{n-1} (|x'|²+1)^{n/2})
///  + ((μ+λ)/(3μ+λ)) (2n/ω_{n-1}) (x',1)_α (x',1)_β / (|x'|²+1)^{(n+2)/2}`.
pub fn lame_poisson(moduli: LameModuli, n: usize) -> Result<MatrixKernel> {
    if n < 2 {
        return Err(Error::InvalidDimensions { n, m: n });
    }
    let LameModuli { mu, lambda } = moduli;
    let omega = sphere_area(n - 1);
    let c1 = 4.0 * mu / (3.0 * mu + lambda) / omega;
    let c2 = (mu + lambda) / (3.0 * mu + lambda) * 2.0 * n as f64 / omega;
    MatrixKernel::new(n, n, move |xp: &[f64]| {
        let mut x = xp.to_vec();
        x.push(1.0);
        let r2 = 1.0 + xp.iter().map(|t| t * t).sum::<f64>();
        let diag = c1 * r2.powf(-0.5 * n as f64);
        let dyad = c2 * r2.powf(-0.5 * (n as f64 + 2.0));
        Ok(CMatrix::from_fn(n, n, |al, be| {
            let mut v = dyad * x[al] * x[be];
            if al == be {
                v += diag;
            }
            cr(v)
        }))
    })
}

/// The elastostatic factor `k`:
///
/// `k_{αβ}(x) = (2μ/(3μ+λ)) δ_{αβ} / (ω_{n-1} |x|^n)
///  + ((μ+λ)/(3μ+λ)) (n/ω_{n-1}) x_α x_β / |x|^{n+2}`,
///
/// even, homogeneous of degree `-n`, with `lame_poisson = 2 k(·, 1)`.
pub fn lame_k(moduli: LameModuli, n: usize) -> Result<SpaceKernel> {
    if n < 2 {
        return Err(Error::InvalidDimensions { n, m: n });
    }
    let LameModuli { mu, lambda } = moduli;
    let omega = sphere_area(n - 1);
    let c1 = 2.0 * mu / (3.0 * mu + lambda) / omega;
    let c2 = (mu + lambda) / (3.0 * mu + lambda) * n as f64 / omega;
    Ok(SpaceKernel {
        n,
        m: n,
        eval: Arc::new(move |x: &[f64]| {
            let r2: f64 = x.iter().map(|t| t * t).sum();
            let diag = c1 * r2.powf(-0.5 * n as f64);
            let dyad = c2 * r2.powf(-0.5 * (n as f64 + 2.0));
            Ok(CMatrix::from_fn(n, n, |al, be| {
                let mut v = dyad * x[al] * x[be];
                if al == be {
                    v += diag;
                }
                cr(v)
            }))
        }),
        homogeneity_degree: -(n as f64),
        log_coefficient: None,
    })
}

/// How an auxiliary family was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QProvenance {
    /// `Q^(j)(x') = ∂_j E(x', 1)` from an analytic gradient.
    AnalyticGradient,
    /// Componentwise linear solve of `Σ_{r,β} 2 a[β][α][r][s] Q^(r)_{γβ}(x')
    /// = (x',1)_s P_{γα}(x')`.
    LinearSolve,
}

enum Factor {
    Lu(LU<C64, Dyn, Dyn>),
    Svd(SVD<C64, Dyn, Dyn>),
}

struct SolveData {
    b: CMatrix,
    factor: Factor,
    p: MatrixKernel,
    n: usize,
    m: usize,
}

impl SolveData {
    fn solve(&self, rhs: &CVector) -> Result<CVector> {
        let q = match &self.factor {
            Factor::Lu(lu) => lu
                .solve(rhs)
                .ok_or(Error::FactorizationResidual { residual: f64::INFINITY })?,
            Factor::Svd(svd) => svd
                .solve(rhs, 1e-13 * max_abs(&self.b).max(1.0))
                .map_err(|_| Error::FactorizationResidual { residual: f64::INFINITY })?,
        };
        let residual = max_abs_vec(&(&self.b * &q - rhs));
        if residual > 1e-8 * max_abs_vec(rhs).max(1.0) {
            return Err(Error::FactorizationResidual { residual });
        }
        Ok(q)
    }
}

enum QInner {
    Analytic { grad: GradEFn },
    Solve(Arc<SolveData>),
}

/// The auxiliary kernel family `Q^(j)`, `j = 1..n` (index `n` is the vertical
/// direction), tied to a Poisson kernel by the component identity
/// `Σ_r 2 Q^(r)(x') A_{rs} = (x',1)_s P(x')`.
pub struct AuxKernelFamily {
    n: usize,
    m: usize,
    inner: QInner,
    pub provenance: QProvenance,
    /// Largest linear-solve residual over the construction probe sample
    /// (zero for the analytic route).
    pub solve_residual: f64,
    /// Fitted constants `C_j` with `|Q^(j)(x')| ≤ C_j (1+|x'|)^{1-n}` over
    /// the probe sample.
    pub decay_constants: Vec<f64>,
}

impl AuxKernelFamily {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// All `n` kernels at one boundary point (one linear solve per output
    /// component).  Index `j` in the result is `Q^(j+1)`.
    pub fn eval_all(&self, xprime: &[f64]) -> Result<Vec<CMatrix>> {
        if xprime.len() != self.n - 1 {
            return Err(Error::DimensionMismatch {
                expected_n: self.n - 1,
                expected_m: self.m,
                got_n: xprime.len(),
                got_m: self.m,
            });
        }
        match &self.inner {
            QInner::Analytic { grad } => {
                let mut x = xprime.to_vec();
                x.push(1.0);
                grad(&x)
            }
            QInner::Solve(data) => {
                let (n, m) = (data.n, data.m);
                let pmat = data.p.eval(xprime)?;
                let mut x = xprime.to_vec();
                x.push(1.0);
                let mut out = vec![CMatrix::zeros(m, m); n];
                for gamma in 0..m {
                    let rhs = CVector::from_fn(n * m, |flat, _| {
                        let (s, alpha) = (flat / m, flat % m);
                        cr(x[s]) * pmat[(gamma, alpha)]
                    });
                    let q = data.solve(&rhs)?;
                    for r in 0..n {
                        for beta in 0..m {
                            out[r][(gamma, beta)] = q[r * m + beta];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Single kernel `Q^(j)` (zero-based `j`) at a boundary point.
    pub fn eval(&self, j: usize, xprime: &[f64]) -> Result<CMatrix> {
        if j >= self.n {
            return Err(Error::IndexOutOfRange { what: "aux kernel index", got: j, bound: self.n });
        }
        Ok(self.eval_all(xprime)?.swap_remove(j))
    }

    /// Dilated family `(Q^(j))_t(x') = t^{1-n} Q^(j)(x'/t)`.
    pub fn eval_all_dilated(&self, t: f64, xprime: &[f64]) -> Result<Vec<CMatrix>> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NonPositiveT { t });
        }
        let scaled: Vec<f64> = xprime.iter().map(|x| x / t).collect();
        let factor = cr(t.powi(1 - self.n as i32));
        Ok(self
            .eval_all(&scaled)?
            .into_iter()
            .map(|q| q * factor)
            .collect())
    }
}

/// Builds the auxiliary family for a coefficient tensor and its Poisson
/// kernel.
///
/// With an analytic fundamental-solution gradient (scalar operators),
/// `Q^(j)(x') = ∂_j E(x', 1)` directly.  Otherwise each boundary point is
/// resolved through the `nM×nM` linear system
/// `B[(s,α),(r,β)] = 2 a[β][α][r][s]`, `rhs[(s,α)] = (x',1)_s P_{γα}(x')`,
/// factored once and reused.  Systems with condition estimate above `1e8`
/// fall back to a least-squares solve; solve residuals above `1e-8`
/// (relative) are a hard error, since they mean the defining identity has no
/// solution and the tensor is likely not distinguished.
pub fn q_family(
    a: &CoefficientTensor,
    p: &MatrixKernel,
    grad_e: Option<GradEFn>,
) -> Result<AuxKernelFamily> {
    let (n, m) = (a.n(), a.m());
    if p.n() != n || p.m() != m {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: m,
            got_n: p.n(),
            got_m: p.m(),
        });
    }
    let mut family = match grad_e {
        Some(grad) => AuxKernelFamily {
            n,
            m,
            inner: QInner::Analytic { grad },
            provenance: QProvenance::AnalyticGradient,
            solve_residual: 0.0,
            decay_constants: vec![0.0; n],
        },
        None => {
            let dim = n * m;
            let b = CMatrix::from_fn(dim, dim, |row, col| {
                let (s, alpha) = (row / m, row % m);
                let (r, beta) = (col / m, col % m);
                cr(2.0) * a.get(beta, alpha, r, s)
            });
            let factor = if crate::linalg::condition_estimate(&b) <= 1e8 {
                Factor::Lu(b.clone().lu())
            } else {
                Factor::Svd(b.clone().svd(true, true))
            };
            AuxKernelFamily {
                n,
                m,
                inner: QInner::Solve(Arc::new(SolveData { b, factor, p: p.clone(), n, m })),
                provenance: QProvenance::LinearSolve,
                solve_residual: 0.0,
                decay_constants: vec![0.0; n],
            }
        }
    };

    // Probe: fit decay constants, record worst solve residual, surface errors.
    let mut worst = 0.0f64;
    let mut decay = vec![0.0f64; n];
    for x in probe_points(n - 1) {
        let qs = family.eval_all(&x)?;
        if let QInner::Solve(data) = &family.inner {
            // Recompute the residual of the already-validated solve to store it.
            let pmat = data.p.eval(&x)?;
            let mut xe = x.clone();
            xe.push(1.0);
            for gamma in 0..m {
                let rhs = CVector::from_fn(n * m, |flat, _| {
                    let (s, alpha) = (flat / m, flat % m);
                    cr(xe[s]) * pmat[(gamma, alpha)]
                });
                let mut q = CVector::zeros(n * m);
                for r in 0..n {
                    for beta in 0..m {
                        q[r * m + beta] = qs[r][(gamma, beta)];
                    }
                }
                worst = worst.max(max_abs_vec(&(&data.b * &q - &rhs)));
            }
        }
        let rho: f64 = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        let weight = (1.0 + rho).powi(n as i32 - 1);
        for (j, q) in qs.iter().enumerate() {
            decay[j] = decay[j].max(max_abs(q) * weight);
        }
    }
    family.solve_residual = worst;
    family.decay_constants = decay;
    Ok(family)
}

/// CSV dump of kernel samples: header `x1,…,x{n-1},alpha,beta,re,im`, one row
/// per (point, α, β) in row-major order, indices 1-based, doubles with 17
/// significant digits.
pub fn kernel_csv(kernel: &MatrixKernel, points: &[Vec<f64>]) -> Result<String> {
    use std::fmt::Write as _;
    let d = kernel.n() - 1;
    let mut out = String::new();
    for j in 1..=d {
        let _ = write!(out, "x{j},");
    }
    out.push_str("alpha,beta,re,im\n");
    for p in points {
        let v = kernel.eval(p)?;
        for alpha in 0..kernel.m() {
            for beta in 0..kernel.m() {
                for c in p {
                    let _ = write!(out, "{c:.16e},");
                }
                let z = v[(alpha, beta)];
                let _ = writeln!(out, "{},{},{:.16e},{:.16e}", alpha + 1, beta + 1, z.re, z.im);
            }
        }
    }
    Ok(out)
}
