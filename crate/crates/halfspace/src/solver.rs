//! Dirichlet solver for the upper half-space: boundary convolution with the
//! Poisson kernel, independent closed-form reference routes, and exact
//! expansion of time derivatives into tangential-derivative convolutions.
//!
//! Convolutions are trapezoid sums over the datum grid.  Every returned value
//! carries a truncation bound: a certified estimate of the mass of the
//! integral outside the sampled box, derived from the kernel decay majorant
//! and/or the datum tail envelope.  Evaluation points on the grid lattice
//! share precomputed kernel offset tables; off-lattice points fall back to
//! direct evaluation.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::datum::{BoundaryData, MAX_ELL};
use crate::distinguished::grad_e_from_k;
use crate::grid::GridSpec;
use crate::kernels::{
    lame_k, lame_poisson, q_family, scalar_grad_fundamental, scalar_poisson, sphere_area,
    AuxKernelFamily, MatrixKernel,
};
use crate::linalg::{cr, eye, max_abs, try_inverse, C64, CMatrix, CVector};
use crate::optensor::{lame_distinguished_theta, lame_tensor, CoefficientTensor, LameModuli};
use crate::{Error, Result};

/// Which kernel a convolution term uses: the Poisson kernel itself or one of
/// the tangential auxiliary kernels.  The normal-direction auxiliary kernel
/// never appears; it is systematically eliminated through the boundary
/// reconstruction identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelTag {
    /// Poisson kernel `P_t`.
    P,
    /// Tangential auxiliary kernel `(Q^{(r+1)})_t`, `r` zero-based with
    /// `r < n-1`.
    Q(usize),
}

impl fmt::Display for KernelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelTag::P => write!(f, "P"),
            KernelTag::Q(r) => write!(f, "Q{}", r + 1),
        }
    }
}

/// Operator data bundled for solving: coefficient tensor, Poisson kernel,
/// auxiliary kernel family, and the coefficient blocks the expansion
/// recursion needs.
pub struct KernelSet {
    a: CoefficientTensor,
    p: MatrixKernel,
    q: AuxKernelFamily,
    blocks: Vec<Vec<CMatrix>>,
    a_nn_inv: CMatrix,
}

impl KernelSet {
    pub fn new(a: CoefficientTensor, p: MatrixKernel, q: AuxKernelFamily) -> Result<Self> {
        let (n, m) = (a.n(), a.m());
        if p.n() != n || p.m() != m || q.n() != n || q.m() != m {
            return Err(Error::DimensionMismatch {
                expected_n: n,
                expected_m: m,
                got_n: p.n(),
                got_m: p.m(),
            });
        }
        let mut blocks = Vec::with_capacity(n);
        for r in 0..n {
            let mut row = Vec::with_capacity(n);
            for s in 0..n {
                row.push(a.block(r, s)?);
            }
            blocks.push(row);
        }
        let a_nn_inv = try_inverse(&blocks[n - 1][n - 1]).ok_or_else(|| {
            Error::InvalidParameter("normal-normal coefficient block is singular".into())
        })?;
        Ok(Self { a, p, q, blocks, a_nn_inv })
    }

    /// Scalar operator (`M = 1`): closed-form Poisson kernel and analytic
    /// fundamental-solution gradient.
    pub fn scalar(a: &CoefficientTensor) -> Result<Self> {
        let p = scalar_poisson(a)?;
        let grad = scalar_grad_fundamental(a)?;
        let q = q_family(a, &p, Some(grad))?;
        Self::new(a.clone(), p, q)
    }

    /// Laplacian in dimension `n`.
    pub fn harmonic(n: usize) -> Result<Self> {
        Self::scalar(&CoefficientTensor::laplacian(n)?)
    }

    /// Lamé system in its distinguished form: closed-form Poisson kernel,
    /// gradient recovered from the closed-form interior kernel.
    pub fn lame(moduli: LameModuli, n: usize) -> Result<Self> {
        let a = lame_tensor(moduli, lame_distinguished_theta(moduli), n)?;
        let p = lame_poisson(moduli, n)?;
        let k = lame_k(moduli, n)?;
        let grad = grad_e_from_k(&a, &k)?;
        let q = q_family(&a, &p, Some(grad))?;
        Self::new(a, p, q)
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn m(&self) -> usize {
        self.a.m()
    }

    pub fn tensor(&self) -> &CoefficientTensor {
        &self.a
    }

    pub fn poisson(&self) -> &MatrixKernel {
        &self.p
    }

    pub fn aux(&self) -> &AuxKernelFamily {
        &self.q
    }
}

/// One convolution term `left · K_t ∗ (right · ∂^γ f)`.
///
/// Every replacement identity in the derivative recursion composes on the
/// datum side, so `left` is the identity for all generated terms; the field
/// is kept so evaluation covers externally assembled terms too.
#[derive(Clone, Debug)]
pub struct ExpansionTerm {
    pub tag: KernelTag,
    pub left: CMatrix,
    pub right: CMatrix,
    pub gamma: Vec<usize>,
}

/// Exact rewriting of `∂_t^k [P_t ∗ f]` as a sum of convolution terms whose
/// kernels are `P` and tangential `Q`'s and whose datum factors are
/// tangential derivatives `∂^γ f` with `|γ| = k`.
#[derive(Clone, Debug)]
pub struct TermExpansion {
    pub order: usize,
    pub terms: Vec<ExpansionTerm>,
}

fn is_identity(mat: &CMatrix) -> bool {
    mat.is_square() && max_abs(&(mat - eye(mat.nrows()))) < 1e-13
}

fn row_sum_norm(mat: &CMatrix) -> f64 {
    (0..mat.nrows())
        .map(|r| (0..mat.ncols()).map(|c| mat[(r, c)].norm()).sum())
        .fold(0.0, f64::max)
}

/// Rewrites one time derivative of every term, eliminating the normal
/// auxiliary kernel as it appears.
fn differentiate_terms(set: &KernelSet, terms: &[ExpansionTerm]) -> Vec<ExpansionTerm> {
    let n = set.n();
    let d = n - 1;
    let blocks = &set.blocks;
    let inv = &set.a_nn_inv;
    // Coefficients of the replacement identities.
    let p_from_p: Vec<CMatrix> = (0..d).map(|s| -(inv * &blocks[n - 1][s])).collect();
    let q_from_p: Vec<Vec<CMatrix>> = (0..d)
        .map(|sp| (0..d).map(|s| &blocks[sp][n - 1] * &p_from_p[s] * cr(-2.0)).collect())
        .collect();
    let half_inv = inv * cr(0.5);
    let q_from_q: Vec<CMatrix> = (0..d).map(|sp| -(&blocks[sp][n - 1] * inv)).collect();

    let mut out = Vec::new();
    for term in terms {
        match term.tag {
            KernelTag::P => {
                for s in 0..d {
                    let mut gs = term.gamma.clone();
                    gs[s] += 1;
                    for r in 0..d {
                        out.push(ExpansionTerm {
                            tag: KernelTag::Q(r),
                            left: term.left.clone(),
                            right: &blocks[r][s] * &term.right * cr(-2.0),
                            gamma: gs.clone(),
                        });
                    }
                    out.push(ExpansionTerm {
                        tag: KernelTag::P,
                        left: term.left.clone(),
                        right: &p_from_p[s] * &term.right,
                        gamma: gs.clone(),
                    });
                    for sp in 0..d {
                        out.push(ExpansionTerm {
                            tag: KernelTag::Q(sp),
                            left: term.left.clone(),
                            right: &q_from_p[sp][s] * &term.right,
                            gamma: gs.clone(),
                        });
                    }
                }
            }
            KernelTag::Q(r) => {
                let mut gr = term.gamma.clone();
                gr[r] += 1;
                out.push(ExpansionTerm {
                    tag: KernelTag::P,
                    left: term.left.clone(),
                    right: &half_inv * &term.right,
                    gamma: gr.clone(),
                });
                for sp in 0..d {
                    out.push(ExpansionTerm {
                        tag: KernelTag::Q(sp),
                        left: term.left.clone(),
                        right: &q_from_q[sp] * &term.right,
                        gamma: gr.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Merges terms sharing `(tag, γ)` and prunes the numerically vanished ones.
fn merge_terms(terms: Vec<ExpansionTerm>, m: usize) -> Vec<ExpansionTerm> {
    let mut merged: BTreeMap<(KernelTag, Vec<usize>), CMatrix> = BTreeMap::new();
    for term in terms {
        debug_assert!(is_identity(&term.left));
        let entry = merged
            .entry((term.tag, term.gamma))
            .or_insert_with(|| CMatrix::zeros(m, m));
        *entry += term.right;
    }
    let scale = merged.values().map(max_abs).fold(0.0, f64::max);
    merged
        .into_iter()
        .filter(|(_, right)| max_abs(right) > 1e-14 * scale)
        .map(|((tag, gamma), right)| ExpansionTerm { tag, left: eye(m), right, gamma })
        .collect()
}

/// Expands `∂_t^order [P_t ∗ f]` into pure tangential-derivative
/// convolutions.  Every term has `|γ| = order` exactly, and only `P` and the
/// tangential auxiliary kernels appear.
pub fn expand_derivative(set: &KernelSet, order: usize) -> Result<TermExpansion> {
    if order > MAX_ELL {
        return Err(Error::InvalidParameter(format!(
            "derivative order {order} exceeds the supported maximum {MAX_ELL}"
        )));
    }
    let m = set.m();
    let mut terms = vec![ExpansionTerm {
        tag: KernelTag::P,
        left: eye(m),
        right: eye(m),
        gamma: vec![0; set.n() - 1],
    }];
    for _ in 0..order {
        terms = merge_terms(differentiate_terms(set, &terms), m);
    }
    Ok(TermExpansion { order, terms })
}

// ---------------------------------------------------------------------------
// Truncation bounds.

/// `∫_{|y|_∞ ≥ R} G e^{-ν(|y|_∞ - R)} dy` over `ℝ^d`, computed through the
/// recursion `I_0 = 1/ν`, `I_k = (R^k + k I_{k-1})/ν` for
/// `I_k = ∫_R^∞ ρ^k e^{-ν(ρ-R)} dρ`.
fn envelope_integral(g: f64, nu: f64, edge: f64, d: usize) -> f64 {
    if g == 0.0 {
        return 0.0;
    }
    if !(nu > 0.0) {
        return f64::INFINITY;
    }
    let mut ik = 1.0 / nu;
    for k in 1..d {
        ik = (edge.powi(k as i32) + k as f64 * ik) / nu;
    }
    g * d as f64 * 2f64.powi(d as i32) * ik
}

/// Certified bound for the convolution mass outside the sampled box, for one
/// term, at margin distance `dist` from the box edge.
///
/// Poisson-type kernels admit two routes: kernel decay against the global
/// datum bound (`m · sup · C_P · σ_{n-2} · t / dist`), and kernel sup against
/// the datum tail envelope.  The auxiliary kernels decay one order slower, so
/// only the envelope route converges for them; data without a decaying
/// envelope honestly reports an infinite bound.
fn term_truncation_bound(
    set: &KernelSet,
    data: &BoundaryData,
    tag: KernelTag,
    gamma: &[usize],
    right_norm: f64,
    t: f64,
    dist: f64,
) -> Result<f64> {
    if !(dist > 0.0) {
        return Ok(f64::INFINITY);
    }
    let n = set.n();
    let mf = set.m() as f64;
    let sup = data.sup_bound(gamma)? * right_norm;
    let (g_env, nu) = data.tail_envelope(gamma)?;
    let env_int = envelope_integral(g_env * right_norm, nu, data.grid().half_width, n - 1);
    Ok(match tag {
        KernelTag::P => {
            let cp = set.p.decay_constant;
            let via_kernel = mf * sup * cp * sphere_area(n - 2) * t / dist;
            let via_envelope = mf * cp * t * (t * t + dist * dist).powf(-(n as f64) / 2.0) * env_int;
            via_kernel.min(via_envelope)
        }
        KernelTag::Q(r) => {
            let cq = set.q.decay_constants[r];
            mf * cq * (t + dist).powi(1 - n as i32) * env_int
        }
    })
}

// ---------------------------------------------------------------------------
// Evaluation engine.

struct PreparedTerm {
    g: Vec<CVector>,
    right_norm: f64,
    left: Option<CMatrix>,
}

fn prepare_terms(
    data: &BoundaryData,
    terms: &[ExpansionTerm],
    total: usize,
) -> Result<Vec<PreparedTerm>> {
    terms
        .iter()
        .map(|term| {
            data.samples(&term.gamma)?;
            let ident = is_identity(&term.right);
            let mut g = Vec::with_capacity(total);
            for flat in 0..total {
                let v = data.value_at(&term.gamma, flat)?;
                g.push(if ident { v } else { &term.right * v });
            }
            Ok(PreparedTerm {
                g,
                right_norm: row_sum_norm(&term.right),
                left: if is_identity(&term.left) { None } else { Some(term.left.clone()) },
            })
        })
        .collect()
}

fn accumulate(acc: &mut CVector, kmat: &CMatrix, g: &CVector, w: f64) {
    let m = acc.len();
    for al in 0..m {
        let mut s = C64::ZERO;
        for be in 0..m {
            s += kmat[(al, be)] * g[be];
        }
        acc[al] += s * w;
    }
}

/// Evaluates a sum of convolution terms at points `xs` sharing one height
/// `t`; returns per-point values and accumulated truncation bounds.
fn evaluate_terms(
    set: &KernelSet,
    terms: &[ExpansionTerm],
    data: &BoundaryData,
    t: f64,
    xs: &[Vec<f64>],
) -> Result<Vec<(CVector, f64)>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::NonPositiveT { t });
    }
    let grid = data.grid();
    if grid.n != set.n() || data.m() != set.m() {
        return Err(Error::DimensionMismatch {
            expected_n: set.n(),
            expected_m: set.m(),
            got_n: grid.n,
            got_m: data.m(),
        });
    }
    let d = grid.dim();
    for x in xs {
        if x.len() != d {
            return Err(Error::InvalidParameter(format!(
                "evaluation point has {} coordinates, expected {d}",
                x.len()
            )));
        }
        if !grid.within_margin(x) {
            return Err(Error::OutsideMargin {
                xprime: x.clone(),
                margin: 0.5 * grid.half_width,
            });
        }
    }

    let total = grid.total_points();
    let m = set.m();
    let preps = prepare_terms(data, terms, total)?;
    let weights: Vec<f64> = (0..total)
        .map(|fl| grid.trapezoid_weight(fl) * grid.cell_volume())
        .collect();

    let bounds: Vec<f64> = xs
        .iter()
        .map(|x| {
            let dist = grid.margin_distance(x);
            let mut b = 0.0f64;
            for (term, prep) in terms.iter().zip(&preps) {
                b += term_truncation_bound(
                    set, data, term.tag, &term.gamma, prep.right_norm, t, dist,
                )?;
            }
            Ok(b)
        })
        .collect::<Result<_>>()?;

    let snapped: Option<Vec<Vec<usize>>> = xs
        .iter()
        .map(|x| {
            x.iter()
                .map(|&xi| grid.snap_axis(xi, 1e-9))
                .collect::<Option<Vec<usize>>>()
        })
        .collect();

    let values: Vec<CVector> = if let Some(ixs) = snapped {
        // Lattice route: kernel offset tables over the difference set.
        let need_p = terms.iter().any(|term| term.tag == KernelTag::P);
        let need_q = terms.iter().any(|term| matches!(term.tag, KernelTag::Q(_)));
        let npts = grid.points_per_axis;
        let dsize = 2 * npts - 1;
        let total_diffs = dsize.pow(d as u32);
        let h = grid.spacing();
        let tables: Vec<(Option<CMatrix>, Option<Vec<CMatrix>>)> = (0..total_diffs)
            .into_par_iter()
            .map(|flat| {
                let mut z = vec![0.0; d];
                let mut f = flat;
                for j in (0..d).rev() {
                    let idx = (f % dsize) as i64;
                    f /= dsize;
                    z[j] = (idx - (npts as i64 - 1)) as f64 * h;
                }
                let p = if need_p { Some(set.p.dilate(t, &z)?) } else { None };
                let q = if need_q { Some(set.q.eval_all_dilated(t, &z)?) } else { None };
                Ok((p, q))
            })
            .collect::<Result<_>>()?;
        let iys: Vec<Vec<usize>> = (0..total).map(|fl| grid.unflatten(fl)).collect();
        ixs.par_iter()
            .map(|ix| {
                let mut out = CVector::zeros(m);
                for (term, prep) in terms.iter().zip(&preps) {
                    let mut acc = CVector::zeros(m);
                    for fl in 0..total {
                        let diff = ix
                            .iter()
                            .zip(&iys[fl])
                            .fold(0usize, |a, (&i, &j)| a * dsize + (i + npts - 1 - j));
                        let kmat = match term.tag {
                            KernelTag::P => tables[diff].0.as_ref().expect("P table built"),
                            KernelTag::Q(r) => &tables[diff].1.as_ref().expect("Q table built")[r],
                        };
                        accumulate(&mut acc, kmat, &prep.g[fl], weights[fl]);
                    }
                    if let Some(left) = &prep.left {
                        acc = left * acc;
                    }
                    out += acc;
                }
                out
            })
            .collect()
    } else {
        // Off-lattice points: direct kernel evaluation per pair.
        let ys: Vec<Vec<f64>> = (0..total).map(|fl| grid.point(fl)).collect();
        xs.par_iter()
            .map(|x| {
                let mut out = CVector::zeros(m);
                for (term, prep) in terms.iter().zip(&preps) {
                    let mut acc = CVector::zeros(m);
                    for fl in 0..total {
                        let z: Vec<f64> =
                            x.iter().zip(&ys[fl]).map(|(a, b)| a - b).collect();
                        let kmat = match term.tag {
                            KernelTag::P => set.p.dilate(t, &z)?,
                            KernelTag::Q(r) => {
                                let mut qs = set.q.eval_all_dilated(t, &z)?;
                                qs.swap_remove(r)
                            }
                        };
                        accumulate(&mut acc, &kmat, &prep.g[fl], weights[fl]);
                    }
                    if let Some(left) = &prep.left {
                        acc = left * acc;
                    }
                    out += acc;
                }
                Ok(out)
            })
            .collect::<Result<_>>()?
    };

    Ok(values.into_iter().zip(bounds).collect())
}

/// Single-kernel convolution `K_t ∗ (right · ∂^γ f)` at points `xs`.
pub fn convolve(
    set: &KernelSet,
    tag: KernelTag,
    data: &BoundaryData,
    gamma: &[usize],
    right: &CMatrix,
    t: f64,
    xs: &[Vec<f64>],
) -> Result<Vec<(CVector, f64)>> {
    if let KernelTag::Q(r) = tag {
        if r >= set.n() {
            return Err(Error::IndexOutOfRange {
                what: "aux kernel index",
                got: r,
                bound: set.n(),
            });
        }
    }
    let term = ExpansionTerm {
        tag,
        left: eye(set.m()),
        right: right.clone(),
        gamma: gamma.to_vec(),
    };
    evaluate_terms(set, &[term], data, t, xs)
}

/// Evaluates a derivative expansion at points `xs` sharing height `t`.
pub fn evaluate_expansion(
    set: &KernelSet,
    expansion: &TermExpansion,
    data: &BoundaryData,
    t: f64,
    xs: &[Vec<f64>],
) -> Result<Vec<(CVector, f64)>> {
    evaluate_terms(set, &expansion.terms, data, t, xs)
}

/// Mixed derivative `∂^{tangential} ∂_t^{time_order} u`: tangential
/// derivatives commute onto the datum, time derivatives go through the
/// expansion.
pub fn evaluate_mixed(
    set: &KernelSet,
    data: &BoundaryData,
    tangential: &[usize],
    time_order: usize,
    t: f64,
    xs: &[Vec<f64>],
) -> Result<Vec<(CVector, f64)>> {
    let d = set.n() - 1;
    if tangential.len() != d {
        return Err(Error::InvalidParameter(format!(
            "tangential multi-index has {} entries, expected {d}",
            tangential.len()
        )));
    }
    let expansion = expand_derivative(set, time_order)?;
    let terms: Vec<ExpansionTerm> = expansion
        .terms
        .iter()
        .map(|term| {
            let mut gamma = term.gamma.clone();
            for (g, &extra) in gamma.iter_mut().zip(tangential) {
                *g += extra;
            }
            ExpansionTerm {
                tag: term.tag,
                left: term.left.clone(),
                right: term.right.clone(),
                gamma,
            }
        })
        .collect();
    evaluate_terms(set, &terms, data, t, xs)
}

// ---------------------------------------------------------------------------
// Solution fields and CSV export.

/// One sampled value of the solution (or a derivative of it).
#[derive(Clone, Debug)]
pub struct FieldSample {
    pub xprime: Vec<f64>,
    pub t: f64,
    pub value: CVector,
    pub trunc_bound: f64,
}

/// Solution samples over a set of boundary points and heights.
#[derive(Clone, Debug)]
pub struct GridField {
    pub n: usize,
    pub m: usize,
    pub samples: Vec<FieldSample>,
}

impl GridField {
    /// CSV rows `x1,…,x{n-1},t,component,re,im,trunc_bound`, one per
    /// component, 1-based component index, 17 significant digits.
    pub fn csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for j in 1..self.n {
            let _ = write!(out, "x{j},");
        }
        out.push_str("t,component,re,im,trunc_bound\n");
        for sample in &self.samples {
            for comp in 0..self.m {
                let mut row = String::new();
                for x in &sample.xprime {
                    let _ = write!(row, "{:.16e},", x);
                }
                let v = sample.value[comp];
                let _ = write!(
                    row,
                    "{:.16e},{},{:.16e},{:.16e},{:.16e}",
                    sample.t,
                    comp + 1,
                    v.re,
                    v.im,
                    sample.trunc_bound
                );
                out.push_str(&row);
                out.push('\n');
            }
        }
        out
    }
}

/// Solves the Dirichlet problem `u(x', t) = (P_t ∗ f)(x')` on the product of
/// `xs` and heights `ts`.
pub fn solve_dirichlet(
    set: &KernelSet,
    data: &BoundaryData,
    ts: &[f64],
    xs: &[Vec<f64>],
) -> Result<GridField> {
    if ts.is_empty() || xs.is_empty() {
        return Err(Error::EmptySample("need at least one height and one point"));
    }
    let gamma0 = vec![0usize; set.n() - 1];
    let id = eye(set.m());
    let mut samples = Vec::with_capacity(ts.len() * xs.len());
    for &t in ts {
        let vals = convolve(set, KernelTag::P, data, &gamma0, &id, t, xs)?;
        for (x, (value, trunc_bound)) in xs.iter().zip(vals) {
            samples.push(FieldSample { xprime: x.clone(), t, value, trunc_bound });
        }
    }
    Ok(GridField { n: set.n(), m: set.m(), samples })
}

// ---------------------------------------------------------------------------
// Closed-form reference routes.

fn validate_eval_points(grid: &GridSpec, xs: &[Vec<f64>], t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::NonPositiveT { t });
    }
    for x in xs {
        if x.len() != grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "evaluation point has {} coordinates, expected {}",
                x.len(),
                grid.dim()
            )));
        }
        if !grid.within_margin(x) {
            return Err(Error::OutsideMargin {
                xprime: x.clone(),
                margin: 0.5 * grid.half_width,
            });
        }
    }
    Ok(())
}

/// Scalar solution through the explicit formula
/// `u(x',t) = (2t/(ω_{n-1} √det A_sym)) ∫ ⟨A_sym^{-1}(x'-y', t), (x'-y', t)⟩^{-n/2} f(y') dy'`,
/// evaluated by the same grid trapezoid rule as the kernel route but with an
/// independent implementation.
pub fn closed_form_scalar(
    a: &CoefficientTensor,
    data: &BoundaryData,
    t: f64,
    xs: &[Vec<f64>],
) -> Result<Vec<(C64, f64)>> {
    if a.m() != 1 {
        return Err(Error::InvalidParameter(
            "closed scalar route needs a single-component operator".into(),
        ));
    }
    let n = a.n();
    let grid = data.grid();
    if grid.n != n || data.m() != 1 {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: 1,
            got_n: grid.n,
            got_m: data.m(),
        });
    }
    validate_eval_points(grid, xs, t)?;
    let sym = a.symmetrize();
    let amat = CMatrix::from_fn(n, n, |r, s| sym.get(0, 0, r, s));
    let ainv = try_inverse(&amat).ok_or_else(|| {
        Error::InvalidParameter("symmetrized coefficient matrix is singular".into())
    })?;
    let sqrt_det = amat.determinant().sqrt();
    let coef = cr(2.0 * t) / (cr(sphere_area(n - 1)) * sqrt_det);
    let cp = scalar_poisson(a)?.decay_constant;

    let d = grid.dim();
    let gamma0 = vec![0usize; d];
    let f0 = data.samples(&gamma0)?;
    let total = grid.total_points();
    let ys: Vec<Vec<f64>> = (0..total).map(|fl| grid.point(fl)).collect();
    let weights: Vec<f64> = (0..total)
        .map(|fl| grid.trapezoid_weight(fl) * grid.cell_volume())
        .collect();

    let exponent = -(n as f64) / 2.0;
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let mut acc = C64::ZERO;
        for fl in 0..total {
            let mut z = Vec::with_capacity(n);
            for j in 0..d {
                z.push(x[j] - ys[fl][j]);
            }
            z.push(t);
            let mut w = C64::ZERO;
            for i in 0..n {
                let mut row = C64::ZERO;
                for j in 0..n {
                    row += ainv[(i, j)] * z[j];
                }
                w += row * z[i];
            }
            if w.re <= 0.0 && w.im.abs() < 1e-14 {
                return Err(Error::BranchCut { x: z, w });
            }
            acc += coef * w.powf(exponent) * f0[0][fl] * weights[fl];
        }
        let dist = grid.margin_distance(x);
        let sup = data.sup_bound(&gamma0)?;
        let (g_env, nu) = data.tail_envelope(&gamma0)?;
        let env_int = envelope_integral(g_env, nu, grid.half_width, n - 1);
        let via_kernel = sup * cp * sphere_area(n - 2) * t / dist;
        let via_envelope = cp * t * (t * t + dist * dist).powf(exponent) * env_int;
        out.push((acc, via_kernel.min(via_envelope)));
    }
    Ok(out)
}

/// Lamé solution through the explicit two-part kernel
/// `c₁ t δ_{αβ} (|z|²+t²)^{-n/2} + c₂ t (z,t)_α (z,t)_β (|z|²+t²)^{-(n+2)/2}`
/// with `c₁ = 4μ/((3μ+λ)ω_{n-1})`, `c₂ = 2n(μ+λ)/((3μ+λ)ω_{n-1})`.
pub fn closed_form_lame(
    moduli: LameModuli,
    n: usize,
    data: &BoundaryData,
    t: f64,
    xs: &[Vec<f64>],
) -> Result<Vec<(CVector, f64)>> {
    let grid = data.grid();
    if grid.n != n || data.m() != n {
        return Err(Error::DimensionMismatch {
            expected_n: n,
            expected_m: n,
            got_n: grid.n,
            got_m: data.m(),
        });
    }
    validate_eval_points(grid, xs, t)?;
    let (mu, lambda) = (moduli.mu, moduli.lambda);
    let omega = sphere_area(n - 1);
    let w3 = 3.0 * mu + lambda;
    let c1 = 4.0 * mu / (w3 * omega);
    let c2 = 2.0 * n as f64 * (mu + lambda) / (w3 * omega);
    let cp = lame_poisson(moduli, n)?.decay_constant;

    let d = grid.dim();
    let gamma0 = vec![0usize; d];
    let total = grid.total_points();
    let ys: Vec<Vec<f64>> = (0..total).map(|fl| grid.point(fl)).collect();
    let weights: Vec<f64> = (0..total)
        .map(|fl| grid.trapezoid_weight(fl) * grid.cell_volume())
        .collect();

    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let mut acc = CVector::zeros(n);
        for fl in 0..total {
            let f = data.value_at(&gamma0, fl)?;
            let mut zeta = Vec::with_capacity(n);
            for j in 0..d {
                zeta.push(x[j] - ys[fl][j]);
            }
            zeta.push(t);
            let rho2: f64 = zeta.iter().map(|v| v * v).sum();
            let diag = c1 * t * rho2.powf(-(n as f64) / 2.0);
            let dyad = c2 * t * rho2.powf(-(n as f64 + 2.0) / 2.0);
            let w = weights[fl];
            for al in 0..n {
                let mut s = f[al] * diag;
                for be in 0..n {
                    s += f[be] * (dyad * zeta[al] * zeta[be]);
                }
                acc[al] += s * w;
            }
        }
        let dist = grid.margin_distance(x);
        let sup = data.sup_bound(&gamma0)?;
        let (g_env, nu) = data.tail_envelope(&gamma0)?;
        let env_int = envelope_integral(g_env, nu, grid.half_width, n - 1);
        let mf = n as f64;
        let via_kernel = mf * sup * cp * sphere_area(n - 2) * t / dist;
        let via_envelope =
            mf * cp * t * (t * t + dist * dist).powf(-(n as f64) / 2.0) * env_int;
        out.push((acc, via_kernel.min(via_envelope)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::{ComplexSpec, DatumSpec, ProfileSpec};
    use crate::linalg::c;

    fn amp(re: f64) -> ComplexSpec {
        ComplexSpec { re, im: 0.0 }
    }

    fn gaussian_datum(decay: f64, amp_re: f64, grid: &GridSpec, ell: usize) -> BoundaryData {
        let spec = DatumSpec {
            components: vec![vec![ProfileSpec::Gaussian {
                decay,
                center: vec![],
                amplitude: amp(amp_re),
            }]],
        };
        BoundaryData::from_spec(&spec, grid, ell, 2.0).unwrap()
    }

    fn lame_gaussian_datum(grid: &GridSpec, ell: usize) -> BoundaryData {
        let comp = |a: f64, cx: f64| {
            vec![ProfileSpec::Gaussian {
                decay: 0.8,
                center: vec![cx, -0.1],
                amplitude: amp(a),
            }]
        };
        let spec = DatumSpec {
            components: vec![comp(1.0, 0.0), comp(-0.7, 0.3), comp(0.4, -0.2)],
        };
        BoundaryData::from_spec(&spec, grid, ell, 2.0).unwrap()
    }

    #[test]
    fn constant_datum_recovered() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 40.0, 2001).unwrap();
        let datum = DatumSpec {
            components: vec![vec![ProfileSpec::Constant { value: amp(2.5) }]],
        };
        let data = BoundaryData::from_spec(&datum, &grid, 0, 2.0).unwrap();
        let field = solve_dirichlet(&set, &data, &[1.0], &[vec![0.0]]).unwrap();
        let u = field.samples[0].value[0];
        assert!((u.re - 2.5).abs() < 2e-2 * 2.5, "u = {u}");
        assert!(u.im.abs() < 1e-12);
        // Truncation-bound honesty: doubling the box moves the value by less
        // than the reported bound.
        let grid2 = GridSpec::new(2, 80.0, 4001).unwrap();
        let data2 = BoundaryData::from_spec(&datum, &grid2, 0, 2.0).unwrap();
        let field2 = solve_dirichlet(&set, &data2, &[1.0], &[vec![0.0]]).unwrap();
        let diff = (field.samples[0].value[0] - field2.samples[0].value[0]).norm();
        assert!(diff <= field.samples[0].trunc_bound, "diff {diff:e} vs bound {:e}",
            field.samples[0].trunc_bound);
        // The bound for the harmonic kernel at the origin is (2/π)(t/R)·|c|.
        let expected = 2.0 / std::f64::consts::PI / 40.0 * 2.5;
        assert!((field.samples[0].trunc_bound - expected).abs() < 0.3 * expected);
    }

    #[test]
    fn half_line_datum_value_one_half() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 40.0, 2001).unwrap();
        let datum = DatumSpec {
            components: vec![vec![ProfileSpec::Indicator {
                left: vec![Some(0.0)],
                right: vec![None],
                amplitude: amp(1.0),
            }]],
        };
        let data = BoundaryData::from_spec(&datum, &grid, 0, 2.0).unwrap();
        for &t in &[1.0, 0.5] {
            let field = solve_dirichlet(&set, &data, &[t], &[vec![0.0]]).unwrap();
            let u = field.samples[0].value[0].re;
            assert!((u - 0.5).abs() < 2e-2, "u(0,{t}) = {u}");
        }
    }

    #[test]
    fn semigroup_property_at_origin() {
        // Boundary datum π P_1 evolves to π P_2 at height 1, value 1/2 at 0.
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 60.0, 3001).unwrap();
        let vals: Vec<C64> = (0..grid.total_points())
            .map(|fl| {
                let y = grid.point(fl)[0];
                cr(1.0 / (1.0 + y * y))
            })
            .collect();
        let data = BoundaryData::from_samples(&grid, vec![vals], 0, 2.0).unwrap();
        let field = solve_dirichlet(&set, &data, &[1.0], &[vec![0.0]]).unwrap();
        let u = field.samples[0].value[0].re;
        assert!((u - 0.5).abs() < 1e-3, "u(0,1) = {u}");
    }

    #[test]
    fn route_equivalence_scalar() {
        let tensors = vec![
            CoefficientTensor::scalar_real(2, &[vec![4.0, 1.0], vec![1.0, 2.0]]).unwrap(),
            CoefficientTensor::scalar(
                2,
                &[
                    vec![c(4.0, 0.5), c(0.2, 0.1)],
                    vec![c(0.2, 0.1), c(2.0, -0.3)],
                ],
            )
            .unwrap(),
        ];
        let grid = GridSpec::new(2, 10.0, 201).unwrap();
        let xs = vec![vec![0.0], vec![1.3], vec![-2.2]];
        for a in tensors {
            let set = KernelSet::scalar(&a).unwrap();
            let data = gaussian_datum(1.0, 1.0, &grid, 0);
            let kernel_route = solve_dirichlet(&set, &data, &[0.7], &xs).unwrap();
            let closed = closed_form_scalar(&a, &data, 0.7, &xs).unwrap();
            for (idx, (cv, _)) in closed.iter().enumerate() {
                let kv = kernel_route.samples[idx].value[0];
                let rel = (kv - cv).norm() / cv.norm().max(1e-30);
                assert!(rel < 1e-10, "point {idx}: kernel {kv} vs closed {cv}");
            }
        }
    }

    #[test]
    fn route_equivalence_lame() {
        let moduli = LameModuli::new(1.0, 1.0).unwrap();
        let set = KernelSet::lame(moduli, 3).unwrap();
        let grid = GridSpec::new(3, 6.0, 31).unwrap();
        let data = lame_gaussian_datum(&grid, 0);
        let xs = vec![vec![0.0, 0.0], vec![1.0, -0.8]];
        let kernel_route = solve_dirichlet(&set, &data, &[0.9], &xs).unwrap();
        let closed = closed_form_lame(moduli, 3, &data, 0.9, &xs).unwrap();
        for (idx, (cv, _)) in closed.iter().enumerate() {
            let kv = &kernel_route.samples[idx].value;
            let scale = cv.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for al in 0..3 {
                assert!(
                    (kv[al] - cv[al]).norm() < 1e-10 * scale.max(1e-30),
                    "component {al} at point {idx}: {} vs {}",
                    kv[al],
                    cv[al]
                );
            }
        }
    }

    #[test]
    fn first_order_expansion_for_laplacian() {
        let set = KernelSet::harmonic(2).unwrap();
        let exp = expand_derivative(&set, 1).unwrap();
        assert_eq!(exp.terms.len(), 1);
        let term = &exp.terms[0];
        assert_eq!(term.tag, KernelTag::Q(0));
        assert_eq!(term.gamma, vec![1]);
        assert!((term.right[(0, 0)] - cr(-2.0)).norm() < 1e-14);
        assert!(is_identity(&term.left));
    }

    #[test]
    fn expansion_structure() {
        let moduli = LameModuli::new(1.0, 0.5).unwrap();
        let set = KernelSet::lame(moduli, 3).unwrap();
        for order in 0..=3usize {
            let exp = expand_derivative(&set, order).unwrap();
            assert!(!exp.terms.is_empty());
            for term in &exp.terms {
                let total: usize = term.gamma.iter().sum();
                assert_eq!(total, order, "term order mismatch at k={order}");
                match term.tag {
                    KernelTag::P => {}
                    KernelTag::Q(r) => assert!(r < 2, "normal kernel not eliminated"),
                }
                assert!(is_identity(&term.left));
            }
        }
        assert!(expand_derivative(&set, 5).is_err());
    }

    #[test]
    fn time_derivative_matches_finite_difference() {
        let a = CoefficientTensor::scalar_real(2, &[vec![2.0, 0.5], vec![0.5, 1.5]]).unwrap();
        let set = KernelSet::scalar(&a).unwrap();
        let grid = GridSpec::new(2, 12.0, 241).unwrap();
        let data = gaussian_datum(1.0, 1.0, &grid, 1);
        let xs = vec![vec![0.3]];
        let t = 0.8;
        let h = 1e-2;
        let dt = evaluate_expansion(&set, &expand_derivative(&set, 1).unwrap(), &data, t, &xs)
            .unwrap()[0]
            .0[0];
        let up = solve_dirichlet(&set, &data, &[t + h], &xs).unwrap().samples[0].value[0];
        let dn = solve_dirichlet(&set, &data, &[t - h], &xs).unwrap().samples[0].value[0];
        let fd = (up - dn) / (2.0 * h);
        let rel = (dt - fd).norm() / fd.norm();
        assert!(rel < 1e-4, "∂_t u: expansion {dt} vs fd {fd}, rel {rel:e}");
    }

    #[test]
    fn second_time_derivative_matches_finite_difference() {
        let a = CoefficientTensor::scalar_real(2, &[vec![2.0, 0.5], vec![0.5, 1.5]]).unwrap();
        let set = KernelSet::scalar(&a).unwrap();
        let grid = GridSpec::new(2, 12.0, 241).unwrap();
        let data = gaussian_datum(1.0, 1.0, &grid, 2);
        let xs = vec![vec![0.3]];
        let t = 0.8;
        let h = 2e-2;
        let dtt = evaluate_expansion(&set, &expand_derivative(&set, 2).unwrap(), &data, t, &xs)
            .unwrap()[0]
            .0[0];
        let mid = solve_dirichlet(&set, &data, &[t], &xs).unwrap().samples[0].value[0];
        let up = solve_dirichlet(&set, &data, &[t + h], &xs).unwrap().samples[0].value[0];
        let dn = solve_dirichlet(&set, &data, &[t - h], &xs).unwrap().samples[0].value[0];
        let fd = (up - mid * 2.0 + dn) / (h * h);
        let rel = (dtt - fd).norm() / fd.norm();
        assert!(rel < 1e-3, "∂_t² u: expansion {dtt} vs fd {fd}, rel {rel:e}");
    }

    #[test]
    fn lame_mixed_derivative_matches_finite_difference() {
        let moduli = LameModuli::new(1.0, 0.5).unwrap();
        let set = KernelSet::lame(moduli, 3).unwrap();
        let grid = GridSpec::new(3, 6.0, 49).unwrap();
        let data = lame_gaussian_datum(&grid, 2);
        let xs = vec![vec![0.4, -0.2]];
        let t = 1.0;
        let h = 1e-2;
        let mixed = evaluate_mixed(&set, &data, &[1, 0], 1, t, &xs).unwrap()[0].0.clone();
        let up = evaluate_mixed(&set, &data, &[1, 0], 0, t + h, &xs).unwrap()[0].0.clone();
        let dn = evaluate_mixed(&set, &data, &[1, 0], 0, t - h, &xs).unwrap()[0].0.clone();
        let fd = (up - dn) * cr(1.0 / (2.0 * h));
        let scale = fd.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for al in 0..3 {
            assert!(
                (mixed[al] - fd[al]).norm() < 1e-3 * scale,
                "component {al}: {} vs {}",
                mixed[al],
                fd[al]
            );
        }
    }

    #[test]
    fn tangential_derivative_commutes() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 12.0, 241).unwrap();
        let data = gaussian_datum(1.0, 1.0, &grid, 1);
        let t = 0.6;
        let x = 0.7;
        let via_datum = evaluate_mixed(&set, &data, &[1], 0, t, &[vec![x]]).unwrap()[0].0[0];
        let h = 1e-3;
        // Off-lattice points exercise the direct route.
        let up = solve_dirichlet(&set, &data, &[t], &[vec![x + h]]).unwrap().samples[0].value[0];
        let dn = solve_dirichlet(&set, &data, &[t], &[vec![x - h]]).unwrap().samples[0].value[0];
        let fd = (up - dn) / (2.0 * h);
        let rel = (via_datum - fd).norm() / fd.norm();
        assert!(rel < 1e-4, "∂₁u: datum route {via_datum} vs fd {fd}");
    }

    #[test]
    fn lattice_and_direct_routes_agree() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 8.0, 161).unwrap();
        let data = gaussian_datum(1.0, 1.0, &grid, 0);
        let t = 0.5;
        let on_lattice = solve_dirichlet(&set, &data, &[t], &[vec![0.0]]).unwrap();
        // A second, off-lattice point forces every point through the direct
        // route, including the shared lattice point.
        let mixed = solve_dirichlet(&set, &data, &[t], &[vec![0.0], vec![0.513]]).unwrap();
        let a = on_lattice.samples[0].value[0];
        let b = mixed.samples[0].value[0];
        assert!((a - b).norm() < 1e-13 * a.norm());
    }

    #[test]
    fn truncation_bound_honest_for_wide_gaussian() {
        let set = KernelSet::harmonic(2).unwrap();
        let narrow = GridSpec::new(2, 6.0, 61).unwrap();
        let wide = GridSpec::new(2, 12.0, 121).unwrap();
        let d1 = gaussian_datum(0.05, 1.0, &narrow, 0);
        let d2 = gaussian_datum(0.05, 1.0, &wide, 0);
        let t = 0.5;
        let f1 = solve_dirichlet(&set, &d1, &[t], &[vec![0.0]]).unwrap();
        let f2 = solve_dirichlet(&set, &d2, &[t], &[vec![0.0]]).unwrap();
        let diff = (f1.samples[0].value[0] - f2.samples[0].value[0]).norm();
        let bound = f1.samples[0].trunc_bound;
        assert!(diff > 1e-5, "test should exercise a non-trivial tail, diff {diff:e}");
        assert!(diff <= bound, "tail {diff:e} exceeds reported bound {bound:e}");
    }

    #[test]
    fn auxiliary_route_bounds() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 8.0, 161).unwrap();
        let gauss = gaussian_datum(1.0, 1.0, &grid, 1);
        let id = eye(1);
        let vals = convolve(&set, KernelTag::Q(0), &gauss, &[1], &id, 0.5, &[vec![0.0]]).unwrap();
        assert!(vals[0].1.is_finite() && vals[0].1 > 0.0);
        // A constant datum has no decaying envelope: the auxiliary tail is
        // genuinely divergent and the bound must say so.
        let constant = DatumSpec {
            components: vec![vec![ProfileSpec::Constant { value: amp(1.0) }]],
        };
        let cdata = BoundaryData::from_spec(&constant, &grid, 0, 2.0).unwrap();
        let cvals = convolve(&set, KernelTag::Q(0), &cdata, &[0], &id, 0.5, &[vec![0.0]]).unwrap();
        assert!(cvals[0].1.is_infinite());
        // The vertical kernel convolves too (n = 2 makes Q(1) vertical).
        let vvals = convolve(&set, KernelTag::Q(1), &gauss, &[0], &id, 0.5, &[vec![0.0]]).unwrap();
        assert!(vvals[0].0[0].norm() > 0.0 && vvals[0].1.is_finite());
        // Out-of-range index.
        assert!(convolve(&set, KernelTag::Q(2), &gauss, &[0], &id, 0.5, &[vec![0.0]]).is_err());
    }

    #[test]
    fn trace_recovery_is_first_order() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 12.0, 961).unwrap();
        let data = gaussian_datum(1.0, 1.0, &grid, 0);
        let x = 0.5;
        let exact = data.eval_exact(&[0], &[x]).unwrap().unwrap()[0];
        let mut errors = Vec::new();
        for &t in &[0.2, 0.1, 0.05] {
            let u = solve_dirichlet(&set, &data, &[t], &[vec![x]]).unwrap().samples[0].value[0];
            errors.push((u - exact).norm());
        }
        assert!(errors[0] < 0.15, "error at t=0.2: {}", errors[0]);
        for w in errors.windows(2) {
            let ratio = w[1] / w[0];
            assert!(
                (0.3..0.7).contains(&ratio),
                "halving t should roughly halve the trace error, got ratio {ratio}"
            );
        }
    }

    #[test]
    fn margin_and_height_validation() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 8.0, 33).unwrap();
        let data = gaussian_datum(1.0, 1.0, &grid, 0);
        assert!(matches!(
            solve_dirichlet(&set, &data, &[1.0], &[vec![6.0]]),
            Err(Error::OutsideMargin { .. })
        ));
        assert!(matches!(
            solve_dirichlet(&set, &data, &[-1.0], &[vec![0.0]]),
            Err(Error::NonPositiveT { .. })
        ));
        assert!(matches!(
            solve_dirichlet(&set, &data, &[1.0], &[vec![0.0, 0.0]]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn csv_field_format() {
        let set = KernelSet::harmonic(2).unwrap();
        let grid = GridSpec::new(2, 8.0, 33).unwrap();
        let data = gaussian_datum(1.0, 1.0, &grid, 0);
        let field = solve_dirichlet(&set, &data, &[1.0], &[vec![0.0]]).unwrap();
        let csv = field.csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x1,t,component,re,im,trunc_bound");
        let row = lines.next().unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[2], "1");
        assert!(fields[1].starts_with("1.0000000000000000e0"));
    }

    #[test]
    fn expansion_term_count_is_stable() {
        // Merging by (tag, γ) keeps the term count bounded as the order grows.
        let a = CoefficientTensor::scalar_real(2, &[vec![2.0, 0.5], vec![0.5, 1.5]]).unwrap();
        let set = KernelSet::scalar(&a).unwrap();
        for order in 0..=4usize {
            let exp = expand_derivative(&set, order).unwrap();
            assert!(
                exp.terms.len() <= 2,
                "1-d boundary admits P and Q1 only, got {} terms",
                exp.terms.len()
            );
        }
    }
}
