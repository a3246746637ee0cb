//! Boundary data on the hyperplane: a catalog of analytic profiles
//! (Gaussians, polynomial-weighted Gaussians, smoothed and sharp box
//! indicators, constants), sampled on a uniform grid together with their
//! tangential derivatives.
//!
//! Catalog profiles are separable: each is `amplitude · Π_j φ_j(y_j)` with
//! one-dimensional factors whose derivatives stay inside a small closed
//! algebra (polynomial × Gaussian, polynomial in tanh).  Derivatives up to
//! order four are therefore exact, and every profile carries a certified
//! tail envelope `|∂^γ f(y)| ≤ G e^{-ν(|y|_∞ - R)}` for `|y|_∞ ≥ R`, which
//! downstream convolution code turns into rigorous truncation bounds.

use serde::{Deserialize, Serialize};

use crate::grid::{multi_indices_up_to, GridSpec};
use crate::linalg::{c, C64, CVector};
use crate::{Error, Result};

/// Largest supported smoothness order for boundary data.
pub const MAX_ELL: usize = 4;

/// A complex number in serialized form.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexSpec {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl ComplexSpec {
    pub fn value(self) -> C64 {
        c(self.re, self.im)
    }
}

fn default_amplitude() -> ComplexSpec {
    ComplexSpec { re: 1.0, im: 0.0 }
}

/// One catalog profile on `ℝ^d` (`d` = boundary dimension).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `amplitude` everywhere.
    Constant { value: ComplexSpec },
    /// `amplitude · e^{-decay·|y-center|²}` (`decay > 0`; empty center means
    /// the origin).
    Gaussian {
        decay: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "default_amplitude")]
        amplitude: ComplexSpec,
    },
    /// `amplitude · Π_j (y_j-c_j)^{powers_j} · e^{-decay·|y-center|²}`.
    PolyGaussian {
        decay: f64,
        #[serde(default)]
        center: Vec<f64>,
        powers: Vec<usize>,
        #[serde(default = "default_amplitude")]
        amplitude: ComplexSpec,
    },
    /// Smoothed box indicator
    /// `amplitude · Π_j ½[tanh((y_j-left_j)/width) − tanh((y_j-right_j)/width)]`.
    SmoothIndicator {
        left: Vec<f64>,
        right: Vec<f64>,
        width: f64,
        #[serde(default = "default_amplitude")]
        amplitude: ComplexSpec,
    },
    /// Sharp box indicator of `Π_j [left_j, right_j]` (`null` bounds are
    /// unbounded).  Carries no derivatives: usable only with `ell = 0`.
    Indicator {
        left: Vec<Option<f64>>,
        right: Vec<Option<f64>>,
        #[serde(default = "default_amplitude")]
        amplitude: ComplexSpec,
    },
}

/// Full datum specification: one profile sum per component.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumSpec {
    pub components: Vec<Vec<ProfileSpec>>,
}

// ---------------------------------------------------------------------------
// Dense polynomial helpers (coefficient vectors, lowest degree first).

fn p_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

fn p_deriv(p: &[f64]) -> Vec<f64> {
    if p.len() <= 1 {
        return vec![];
    }
    p.iter().enumerate().skip(1).map(|(k, &ck)| k as f64 * ck).collect()
}

/// Multiplies by `x^s`.
fn p_shift(p: &[f64], s: usize) -> Vec<f64> {
    let mut out = vec![0.0; s];
    out.extend_from_slice(p);
    out
}

fn p_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len().max(b.len());
    (0..len)
        .map(|k| a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0))
        .collect()
}

fn p_scale(p: &[f64], s: f64) -> Vec<f64> {
    p.iter().map(|&ck| s * ck).collect()
}

fn p_norm1(p: &[f64]) -> f64 {
    p.iter().map(|ck| ck.abs()).sum()
}

// ---------------------------------------------------------------------------
// One-dimensional factor algebra.

/// A summand of a one-dimensional factor, closed under differentiation.
#[derive(Clone, Debug)]
enum FTerm {
    /// Constant `c`.
    Const(f64),
    /// `poly(x-c) · e^{-q (x-c)²}`.
    PolyGauss { c: f64, q: f64, poly: Vec<f64> },
    /// `poly(T)` with `T = tanh((x-a)/w)`.
    TanhPoly { a: f64, w: f64, poly: Vec<f64> },
}

impl FTerm {
    fn eval(&self, x: f64) -> f64 {
        match self {
            FTerm::Const(v) => *v,
            FTerm::PolyGauss { c, q, poly } => {
                let z = x - c;
                p_eval(poly, z) * (-q * z * z).exp()
            }
            FTerm::TanhPoly { a, w, poly } => p_eval(poly, ((x - a) / w).tanh()),
        }
    }

    fn derivative(&self) -> Option<FTerm> {
        match self {
            FTerm::Const(_) => None,
            FTerm::PolyGauss { c, q, poly } => {
                // (p e^{-qz²})' = (p' − 2q z p) e^{-qz²}
                let poly = p_sub(&p_deriv(poly), &p_scale(&p_shift(poly, 1), 2.0 * q));
                Some(FTerm::PolyGauss { c: *c, q: *q, poly })
            }
            FTerm::TanhPoly { a, w, poly } => {
                // Q(T)' = Q'(T)(1−T²)/w
                let dq = p_deriv(poly);
                let poly = p_scale(&p_sub(&dq, &p_shift(&dq, 2)), 1.0 / w);
                Some(FTerm::TanhPoly { a: *a, w: *w, poly })
            }
        }
    }

    /// Upper bound for `|term|` over all of `ℝ`.
    fn global_bound(&self) -> f64 {
        match self {
            FTerm::Const(v) => v.abs(),
            FTerm::PolyGauss { q, poly, .. } => poly
                .iter()
                .enumerate()
                .map(|(k, ck)| {
                    // max of |z|^k e^{-qz²} is (k/(2q))^{k/2} e^{-k/2}
                    let peak = if k == 0 {
                        1.0
                    } else {
                        (k as f64 / (2.0 * q)).powf(k as f64 / 2.0) * (-(k as f64) / 2.0).exp()
                    };
                    ck.abs() * peak
                })
                .sum(),
            FTerm::TanhPoly { poly, .. } => p_norm1(poly),
        }
    }

    /// `(G, ν)` with `|term(x)| ≤ G e^{-ν(|x| - edge)}` for `|x| ≥ edge`.
    fn tail_envelope(&self, edge: f64) -> (f64, f64) {
        match self {
            FTerm::Const(v) => (v.abs(), 0.0),
            FTerm::PolyGauss { c, q, poly } => {
                let z0 = edge - c.abs();
                let mut g_sum = 0.0f64;
                let mut nu_min = f64::INFINITY;
                for (k, ck) in poly.iter().enumerate() {
                    if *ck == 0.0 {
                        continue;
                    }
                    // |z|^k e^{-qz²} ≤ z0^k e^{-q z0²} e^{-(2q z0 - k/z0)(z-z0)}
                    // for z ≥ z0, provided z0 is past the monomial's peak.
                    let nu_k = if z0 > 0.0 { 2.0 * q * z0 - k as f64 / z0 } else { -1.0 };
                    if nu_k > 0.0 {
                        g_sum += ck.abs() * z0.powi(k as i32) * (-q * z0 * z0).exp();
                        nu_min = nu_min.min(nu_k);
                    } else {
                        g_sum += FTerm::PolyGauss { c: 0.0, q: *q, poly: p_shift(&[ck.abs()], k) }
                            .global_bound();
                        nu_min = 0.0;
                    }
                }
                if g_sum == 0.0 {
                    (0.0, 1.0)
                } else {
                    (g_sum, if nu_min.is_finite() { nu_min } else { 0.0 })
                }
            }
            FTerm::TanhPoly { a, w, poly } => {
                // Derivative terms carry a (1−T²) factor, so the polynomial
                // vanishes at T = ±1 and |Q(T)| ≤ ‖Q'‖₁ |T ∓ 1| ≤ 2‖Q'‖₁ e^{-2|x-a|/w}.
                let at_one = p_eval(poly, 1.0).abs().max(p_eval(poly, -1.0).abs());
                if at_one <= 1e-12 * p_norm1(poly).max(1.0) && edge > a.abs() {
                    (2.0 * p_norm1(&p_deriv(poly)) * (-2.0 * (edge - a.abs()) / w).exp(), 2.0 / w)
                } else {
                    (p_norm1(poly), 0.0)
                }
            }
        }
    }
}

/// A one-dimensional factor (sum of terms) with its derivatives to `MAX_ELL`.
#[derive(Clone, Debug)]
struct FactorTower {
    /// `orders[m]` is the list of terms of the m-th derivative.
    orders: Vec<Vec<FTerm>>,
    /// Present for the smoothed-step factor, whose 0-th order needs the
    /// paired tail cancellation: `(max(|left|,|right|), width)`.
    step_pair: Option<(f64, f64)>,
}

impl FactorTower {
    fn new(base: Vec<FTerm>, step_pair: Option<(f64, f64)>) -> Self {
        let mut orders = vec![base];
        for m in 0..MAX_ELL {
            let next = orders[m].iter().filter_map(FTerm::derivative).collect();
            orders.push(next);
        }
        Self { orders, step_pair }
    }

    fn eval(&self, m: usize, x: f64) -> f64 {
        self.orders[m].iter().map(|t| t.eval(x)).sum()
    }

    fn global_bound(&self, m: usize) -> f64 {
        self.orders[m].iter().map(FTerm::global_bound).sum()
    }

    fn tail_envelope(&self, m: usize, edge: f64) -> (f64, f64) {
        if m == 0 {
            if let Some((anchor, w)) = self.step_pair {
                // |½(tanh((x-l)/w) − tanh((x-r)/w))| ≤ 2 e^{-2(|x|-anchor)/w}
                // once |x| clears both anchors.
                if edge > anchor {
                    return ((-2.0 * (edge - anchor) / w).exp() * 2.0, 2.0 / w);
                }
                return (1.0, 0.0);
            }
        }
        let mut g = 0.0f64;
        let mut nu = f64::INFINITY;
        for t in &self.orders[m] {
            let (tg, tnu) = t.tail_envelope(edge);
            if tg > 0.0 {
                g += tg;
                nu = nu.min(tnu);
            }
        }
        if g == 0.0 {
            (0.0, 1.0)
        } else {
            (g, if nu.is_finite() { nu } else { 0.0 })
        }
    }
}

/// Sharp box support (no derivatives).
#[derive(Clone, Debug)]
struct SharpBox {
    left: Vec<Option<f64>>,
    right: Vec<Option<f64>>,
}

impl SharpBox {
    /// Indicator weight at `y`: 1 strictly inside, 0 strictly outside, and
    /// a factor ½ per coordinate sitting exactly on a box face.  The
    /// midpoint convention keeps trapezoid quadrature second-order when a
    /// jump lands on a lattice node.
    fn weight(&self, y: &[f64]) -> f64 {
        let mut w = 1.0;
        for (j, &yj) in y.iter().enumerate() {
            let tol = 1e-12 * (1.0 + yj.abs());
            for bound in [self.left[j].map(|l| yj - l), self.right[j].map(|r| r - yj)] {
                match bound {
                    Some(s) if s < -tol => return 0.0,
                    Some(s) if s <= tol => w *= 0.5,
                    _ => {}
                }
            }
        }
        w
    }

    /// Largest `|·|_∞` over the support, `None` if unbounded.
    fn radius(&self) -> Option<f64> {
        let mut rad = 0.0f64;
        for j in 0..self.left.len() {
            match (self.left[j], self.right[j]) {
                (Some(l), Some(r)) => rad = rad.max(l.abs().max(r.abs())),
                _ => return None,
            }
        }
        Some(rad)
    }
}

/// A compiled profile: separable smooth product or sharp indicator.
#[derive(Clone, Debug)]
enum Body {
    Smooth(Vec<FactorTower>),
    Sharp(SharpBox),
}

#[derive(Clone, Debug)]
struct CompiledProfile {
    amp: C64,
    body: Body,
}

impl CompiledProfile {
    fn compile(spec: &ProfileSpec, d: usize) -> Result<Self> {
        let check_len = |v: usize, what: &str| {
            if v != d {
                Err(Error::InvalidParameter(format!(
                    "profile field `{what}` has length {v}, boundary dimension is {d}"
                )))
            } else {
                Ok(())
            }
        };
        let center_or_zero = |center: &Vec<f64>| -> Result<Vec<f64>> {
            if center.is_empty() {
                Ok(vec![0.0; d])
            } else {
                check_len(center.len(), "center")?;
                Ok(center.clone())
            }
        };
        match spec {
            ProfileSpec::Constant { value } => Ok(Self {
                amp: value.value(),
                body: Body::Smooth(vec![FactorTower::new(vec![FTerm::Const(1.0)], None); d]),
            }),
            ProfileSpec::Gaussian { decay, center, amplitude } => {
                if !(*decay > 0.0) || !decay.is_finite() {
                    return Err(Error::InvalidParameter(format!("gaussian decay {decay}")));
                }
                let center = center_or_zero(center)?;
                let towers = center
                    .iter()
                    .map(|&cj| {
                        FactorTower::new(
                            vec![FTerm::PolyGauss { c: cj, q: *decay, poly: vec![1.0] }],
                            None,
                        )
                    })
                    .collect();
                Ok(Self { amp: amplitude.value(), body: Body::Smooth(towers) })
            }
            ProfileSpec::PolyGaussian { decay, center, powers, amplitude } => {
                if !(*decay > 0.0) || !decay.is_finite() {
                    return Err(Error::InvalidParameter(format!("gaussian decay {decay}")));
                }
                let center = center_or_zero(center)?;
                check_len(powers.len(), "powers")?;
                let towers = center
                    .iter()
                    .zip(powers)
                    .map(|(&cj, &pj)| {
                        FactorTower::new(
                            vec![FTerm::PolyGauss {
                                c: cj,
                                q: *decay,
                                poly: p_shift(&[1.0], pj),
                            }],
                            None,
                        )
                    })
                    .collect();
                Ok(Self { amp: amplitude.value(), body: Body::Smooth(towers) })
            }
            ProfileSpec::SmoothIndicator { left, right, width, amplitude } => {
                check_len(left.len(), "left")?;
                check_len(right.len(), "right")?;
                if !(*width > 0.0) || !width.is_finite() {
                    return Err(Error::InvalidParameter(format!("indicator width {width}")));
                }
                let towers = left
                    .iter()
                    .zip(right)
                    .map(|(&l, &r)| {
                        if l >= r {
                            return Err(Error::InvalidParameter(format!(
                                "smooth indicator needs left < right, got [{l}, {r}]"
                            )));
                        }
                        Ok(FactorTower::new(
                            vec![
                                FTerm::TanhPoly { a: l, w: *width, poly: vec![0.0, 0.5] },
                                FTerm::TanhPoly { a: r, w: *width, poly: vec![0.0, -0.5] },
                            ],
                            Some((l.abs().max(r.abs()), *width)),
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self { amp: amplitude.value(), body: Body::Smooth(towers) })
            }
            ProfileSpec::Indicator { left, right, amplitude } => {
                check_len(left.len(), "left")?;
                check_len(right.len(), "right")?;
                Ok(Self {
                    amp: amplitude.value(),
                    body: Body::Sharp(SharpBox { left: left.clone(), right: right.clone() }),
                })
            }
        }
    }

    fn smooth(&self) -> bool {
        matches!(self.body, Body::Smooth(_))
    }

    fn eval_deriv(&self, gamma: &[usize], y: &[f64]) -> Result<C64> {
        match &self.body {
            Body::Smooth(towers) => {
                let mut prod = 1.0;
                for (j, tower) in towers.iter().enumerate() {
                    prod *= tower.eval(gamma[j], y[j]);
                }
                Ok(self.amp * prod)
            }
            Body::Sharp(bx) => {
                if gamma.iter().any(|&g| g > 0) {
                    return Err(Error::MissingDerivatives {
                        available: 0,
                        requested: gamma.iter().sum(),
                    });
                }
                Ok(self.amp * bx.weight(y))
            }
        }
    }

    fn global_bound(&self, gamma: &[usize]) -> f64 {
        match &self.body {
            Body::Smooth(towers) => {
                self.amp.norm()
                    * towers
                        .iter()
                        .enumerate()
                        .map(|(j, t)| t.global_bound(gamma[j]))
                        .product::<f64>()
            }
            Body::Sharp(_) => self.amp.norm(),
        }
    }

    /// `(G, ν)` with `|∂^γ(profile)(y)| ≤ G e^{-ν(|y|_∞ - edge)}` for
    /// `|y|_∞ ≥ edge`.
    fn tail_envelope(&self, gamma: &[usize], edge: f64) -> (f64, f64) {
        match &self.body {
            Body::Smooth(towers) => {
                let bounds: Vec<f64> = towers
                    .iter()
                    .enumerate()
                    .map(|(j, t)| t.global_bound(gamma[j]))
                    .collect();
                let mut g = 0.0f64;
                let mut nu = f64::INFINITY;
                // |y|_∞ ≥ ρ means some coordinate J reaches ρ; bound that
                // factor by its tail and the rest by their global bounds.
                for (jj, tower) in towers.iter().enumerate() {
                    let (tg, tnu) = tower.tail_envelope(gamma[jj], edge);
                    let others: f64 = bounds
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != jj)
                        .map(|(_, b)| b)
                        .product();
                    g = g.max(tg * others);
                    nu = nu.min(tnu);
                }
                if g == 0.0 {
                    (0.0, 1.0)
                } else {
                    (self.amp.norm() * g, if nu.is_finite() { nu } else { 0.0 })
                }
            }
            Body::Sharp(bx) => match bx.radius() {
                Some(rad) if rad <= edge => (0.0, 1.0),
                _ => (self.amp.norm(), 0.0),
            },
        }
    }
}

/// Boundary datum sampled on a grid, with tangential derivatives through
/// order `ell`, global sup bounds, and certified tail envelopes.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    grid: GridSpec,
    m: usize,
    ell: usize,
    p: f64,
    /// All multi-indices with `|γ| ≤ ell`, in the fixed enumeration order.
    multiindices: Vec<Vec<usize>>,
    /// `values[mi][component][flat_grid_index]`.
    values: Vec<Vec<Vec<C64>>>,
    /// Per multi-index: sup over components of a global bound for `|∂^γ f_α|`.
    sup_bounds: Vec<f64>,
    /// Per multi-index: `(G, ν)` tail envelope beyond the grid edge.
    envelopes: Vec<(f64, f64)>,
    /// Compiled catalog profiles when available (enables exact off-grid
    /// evaluation).
    profiles: Option<Vec<Vec<CompiledProfile>>>,
}

impl BoundaryData {
    /// Samples a catalog datum on `grid` with derivatives to order `ell`.
    pub fn from_spec(spec: &DatumSpec, grid: &GridSpec, ell: usize, p: f64) -> Result<Self> {
        grid.validate()?;
        validate_p(p)?;
        if ell > MAX_ELL {
            return Err(Error::InvalidParameter(format!(
                "smoothness order {ell} exceeds the supported maximum {MAX_ELL}"
            )));
        }
        if spec.components.is_empty() {
            return Err(Error::EmptySample("datum needs at least one component"));
        }
        let d = grid.dim();
        let m = spec.components.len();
        let profiles: Vec<Vec<CompiledProfile>> = spec
            .components
            .iter()
            .map(|ps| ps.iter().map(|p| CompiledProfile::compile(p, d)).collect())
            .collect::<Result<_>>()?;
        if ell > 0 {
            for comp in &profiles {
                if comp.iter().any(|p| !p.smooth()) {
                    return Err(Error::MissingDerivatives { available: 0, requested: ell });
                }
            }
        }

        let multiindices = multi_indices_up_to(d, ell);
        let total = grid.total_points();
        let mut values = Vec::with_capacity(multiindices.len());
        let mut sup_bounds = Vec::with_capacity(multiindices.len());
        let mut envelopes = Vec::with_capacity(multiindices.len());
        let edge = grid.half_width;
        for gamma in &multiindices {
            let mut per_comp = Vec::with_capacity(m);
            for comp in &profiles {
                let mut arr = Vec::with_capacity(total);
                for flat in 0..total {
                    let y = grid.point(flat);
                    let mut acc = C64::ZERO;
                    for p in comp {
                        acc += p.eval_deriv(gamma, &y)?;
                    }
                    arr.push(acc);
                }
                per_comp.push(arr);
            }
            values.push(per_comp);

            let mut sup = 0.0f64;
            let mut g_env = 0.0f64;
            let mut nu_env = f64::INFINITY;
            for comp in &profiles {
                let comp_sup: f64 = comp.iter().map(|p| p.global_bound(gamma)).sum();
                sup = sup.max(comp_sup);
                let mut cg = 0.0f64;
                let mut cnu = f64::INFINITY;
                for p in comp {
                    let (pg, pnu) = p.tail_envelope(gamma, edge);
                    if pg > 0.0 {
                        cg += pg;
                        cnu = cnu.min(pnu);
                    }
                }
                if cg > 0.0 {
                    g_env = g_env.max(cg);
                    nu_env = nu_env.min(cnu);
                }
            }
            sup_bounds.push(sup);
            envelopes.push(if g_env == 0.0 {
                (0.0, 1.0)
            } else {
                (g_env, if nu_env.is_finite() { nu_env } else { 0.0 })
            });
        }

        Ok(Self {
            grid: *grid,
            m,
            ell,
            p,
            multiindices,
            values,
            sup_bounds,
            envelopes,
            profiles: Some(profiles),
        })
    }

    /// Wraps raw per-component samples; tangential derivatives are produced
    /// by second-order finite differences on the grid.
    ///
    /// Sup bounds and envelopes are inferred from the samples (largest
    /// modulus, no decay rate), so truncation bounds for data built this way
    /// are only as trustworthy as the samples themselves.
    pub fn from_samples(
        grid: &GridSpec,
        samples: Vec<Vec<C64>>,
        ell: usize,
        p: f64,
    ) -> Result<Self> {
        grid.validate()?;
        validate_p(p)?;
        if ell > MAX_ELL {
            return Err(Error::InvalidParameter(format!(
                "smoothness order {ell} exceeds the supported maximum {MAX_ELL}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::EmptySample("datum needs at least one component"));
        }
        let total = grid.total_points();
        for comp in &samples {
            if comp.len() != total {
                return Err(Error::InvalidGrid(format!(
                    "component has {} samples, grid has {total} points",
                    comp.len()
                )));
            }
            if comp.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidParameter("non-finite datum sample".into()));
            }
        }
        let m = samples.len();
        let d = grid.dim();
        let multiindices = multi_indices_up_to(d, ell);
        let mut values: Vec<Vec<Vec<C64>>> = Vec::with_capacity(multiindices.len());
        let mut sup_bounds = Vec::with_capacity(multiindices.len());
        let mut envelopes = Vec::with_capacity(multiindices.len());
        for gamma in &multiindices {
            let mut per_comp = Vec::with_capacity(m);
            for comp in &samples {
                let mut arr = comp.clone();
                for (axis, &order) in gamma.iter().enumerate() {
                    for _ in 0..order {
                        arr = fd_axis(&arr, grid, axis);
                    }
                }
                per_comp.push(arr);
            }
            let sup = per_comp
                .iter()
                .flat_map(|arr| arr.iter())
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            values.push(per_comp);
            sup_bounds.push(sup);
            envelopes.push((sup, 0.0));
        }
        Ok(Self {
            grid: *grid,
            m,
            ell,
            p,
            multiindices,
            values,
            sup_bounds,
            envelopes,
            profiles: None,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// All stored multi-indices (`|γ| ≤ ell`), in storage order.
    pub fn multiindices(&self) -> &[Vec<usize>] {
        &self.multiindices
    }

    fn index_of(&self, gamma: &[usize]) -> Result<usize> {
        self.multiindices
            .iter()
            .position(|g| g == gamma)
            .ok_or(Error::MissingDerivatives {
                available: self.ell,
                requested: gamma.iter().sum(),
            })
    }

    /// Sampled `∂^γ f` as `[component][flat_grid_index]`.
    pub fn samples(&self, gamma: &[usize]) -> Result<&[Vec<C64>]> {
        Ok(&self.values[self.index_of(gamma)?])
    }

    /// Global sup bound for `max_α |∂^γ f_α|`.
    pub fn sup_bound(&self, gamma: &[usize]) -> Result<f64> {
        Ok(self.sup_bounds[self.index_of(gamma)?])
    }

    /// Tail envelope `(G, ν)`: `max_α |∂^γ f_α(y)| ≤ G e^{-ν(|y|_∞ - R)}`
    /// for `|y|_∞ ≥ R` (grid half-width `R`).
    pub fn tail_envelope(&self, gamma: &[usize]) -> Result<(f64, f64)> {
        Ok(self.envelopes[self.index_of(gamma)?])
    }

    /// Exact off-grid evaluation of `∂^γ f` for catalog data.
    pub fn eval_exact(&self, gamma: &[usize], y: &[f64]) -> Option<Result<CVector>> {
        let profiles = self.profiles.as_ref()?;
        Some((|| {
            let mut out = CVector::zeros(self.m);
            for (alpha, comp) in profiles.iter().enumerate() {
                for p in comp {
                    out[alpha] += p.eval_deriv(gamma, y)?;
                }
            }
            Ok(out)
        })())
    }

    /// Datum sample at one grid point as a component vector.
    pub fn value_at(&self, gamma: &[usize], flat: usize) -> Result<CVector> {
        let arrs = self.samples(gamma)?;
        Ok(CVector::from_iterator(self.m, arrs.iter().map(|arr| arr[flat])))
    }
}

fn validate_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent { p });
    }
    Ok(())
}

/// Second-order finite-difference derivative along one grid axis.
fn fd_axis(arr: &[C64], grid: &GridSpec, axis: usize) -> Vec<C64> {
    let h = grid.spacing();
    let npts = grid.points_per_axis;
    let mut out = vec![C64::ZERO; arr.len()];
    for flat in 0..arr.len() {
        let idx = grid.unflatten(flat);
        let i = idx[axis];
        let at = |k: usize| {
            let mut j = idx.clone();
            j[axis] = k;
            arr[grid.flatten(&j)]
        };
        out[flat] = if i == 0 {
            (at(0) * -3.0 + at(1) * 4.0 - at(2)) / (2.0 * h)
        } else if i == npts - 1 {
            (at(npts - 1) * 3.0 - at(npts - 2) * 4.0 + at(npts - 3)) / (2.0 * h)
        } else {
            (at(i + 1) - at(i - 1)) / (2.0 * h)
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid1(r: f64, npts: usize) -> GridSpec {
        GridSpec::new(2, r, npts).unwrap()
    }

    fn gaussian_spec() -> DatumSpec {
        DatumSpec {
            components: vec![vec![ProfileSpec::Gaussian {
                decay: 1.0,
                center: vec![],
                amplitude: default_amplitude(),
            }]],
        }
    }

    #[test]
    fn gaussian_derivatives_are_exact() {
        let grid = grid1(6.0, 61);
        let f = BoundaryData::from_spec(&gaussian_spec(), &grid, 4, 2.0).unwrap();
        for &y in &[-1.3f64, 0.0, 0.4, 2.2] {
            let e = (-y * y).exp();
            let d0 = f.eval_exact(&[0], &[y]).unwrap().unwrap()[0];
            let d1 = f.eval_exact(&[1], &[y]).unwrap().unwrap()[0];
            let d2 = f.eval_exact(&[2], &[y]).unwrap().unwrap()[0];
            let d4 = f.eval_exact(&[4], &[y]).unwrap().unwrap()[0];
            assert_relative_eq!(d0.re, e, max_relative = 1e-14);
            assert_relative_eq!(d1.re, -2.0 * y * e, epsilon = 1e-14);
            assert_relative_eq!(d2.re, (4.0 * y * y - 2.0) * e, epsilon = 1e-13);
            assert_relative_eq!(
                d4.re,
                (16.0 * y.powi(4) - 48.0 * y * y + 12.0) * e,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn catalog_derivatives_match_finite_differences() {
        let grid = grid1(8.0, 33);
        let specs = vec![
            ProfileSpec::PolyGaussian {
                decay: 0.7,
                center: vec![0.3],
                powers: vec![2],
                amplitude: ComplexSpec { re: 1.5, im: -0.4 },
            },
            ProfileSpec::SmoothIndicator {
                left: vec![-1.0],
                right: vec![1.0],
                width: 0.35,
                amplitude: ComplexSpec { re: 2.0, im: 0.0 },
            },
        ];
        for spec in specs {
            let f = BoundaryData::from_spec(
                &DatumSpec { components: vec![vec![spec]] },
                &grid,
                3,
                2.0,
            )
            .unwrap();
            for &y in &[-1.4, -0.9, 0.1, 0.8, 1.7] {
                for m in 1..=3usize {
                    let h = 1e-4;
                    let up = f.eval_exact(&[m - 1], &[y + h]).unwrap().unwrap()[0];
                    let dn = f.eval_exact(&[m - 1], &[y - h]).unwrap().unwrap()[0];
                    let fd = (up - dn) / (2.0 * h);
                    let an = f.eval_exact(&[m], &[y]).unwrap().unwrap()[0];
                    assert!(
                        (fd - an).norm() < 1e-6 * an.norm().max(1.0),
                        "order {m} at y={y}: fd {fd} vs analytic {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn two_dimensional_mixed_derivatives() {
        let grid = GridSpec::new(3, 5.0, 21).unwrap();
        let spec = DatumSpec {
            components: vec![vec![ProfileSpec::PolyGaussian {
                decay: 0.5,
                center: vec![0.2, -0.4],
                powers: vec![1, 0],
                amplitude: ComplexSpec { re: 1.0, im: 0.5 },
            }]],
        };
        let f = BoundaryData::from_spec(&spec, &grid, 2, 2.0).unwrap();
        let y = [0.7, 0.9];
        let h = 1e-4;
        // Mixed ∂₁∂₂ via FD of the analytic ∂₂.
        let up = f.eval_exact(&[0, 1], &[y[0] + h, y[1]]).unwrap().unwrap()[0];
        let dn = f.eval_exact(&[0, 1], &[y[0] - h, y[1]]).unwrap().unwrap()[0];
        let fd = (up - dn) / (2.0 * h);
        let an = f.eval_exact(&[1, 1], &y).unwrap().unwrap()[0];
        assert!((fd - an).norm() < 1e-7 * an.norm().max(1.0));
    }

    #[test]
    fn grid_samples_agree_with_exact_eval() {
        let grid = grid1(6.0, 41);
        let f = BoundaryData::from_spec(&gaussian_spec(), &grid, 2, 2.0).unwrap();
        let arr = f.samples(&[1]).unwrap();
        for flat in [0usize, 7, 20, 40] {
            let y = grid.point(flat);
            let exact = f.eval_exact(&[1], &y).unwrap().unwrap()[0];
            assert!((arr[0][flat] - exact).norm() < 1e-15);
        }
    }

    #[test]
    fn envelopes_majorize_tails() {
        let grid = grid1(6.0, 33);
        let spec = DatumSpec {
            components: vec![vec![
                ProfileSpec::PolyGaussian {
                    decay: 0.8,
                    center: vec![0.5],
                    powers: vec![3],
                    amplitude: ComplexSpec { re: 2.0, im: 1.0 },
                },
                ProfileSpec::SmoothIndicator {
                    left: vec![-2.0],
                    right: vec![2.0],
                    width: 0.5,
                    amplitude: ComplexSpec { re: 1.0, im: 0.0 },
                },
            ]],
        };
        let f = BoundaryData::from_spec(&spec, &grid, 2, 2.0).unwrap();
        for gamma in [[0usize], [1], [2]] {
            let (g, nu) = f.tail_envelope(&gamma).unwrap();
            assert!(nu > 0.0, "catalog data should decay, gamma {gamma:?}");
            let sup = f.sup_bound(&gamma).unwrap();
            for &rho in &[6.0, 6.5, 8.0, 12.0] {
                for &y in &[rho, -rho] {
                    let v = f.eval_exact(&gamma, &[y]).unwrap().unwrap()[0].norm();
                    let bound = g * (-nu * (rho - 6.0)).exp();
                    assert!(v <= bound * (1.0 + 1e-12), "envelope fails: |f|={v}, bound={bound} at {y}, gamma {gamma:?}");
                    assert!(v <= sup * (1.0 + 1e-12));
                }
            }
            // Sup bound also holds on-grid.
            let arrs = f.samples(&gamma).unwrap();
            let grid_max = arrs[0].iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(grid_max <= sup * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sharp_indicator_rules() {
        let grid = grid1(4.0, 17);
        let spec = DatumSpec {
            components: vec![vec![ProfileSpec::Indicator {
                left: vec![Some(0.0)],
                right: vec![None],
                amplitude: default_amplitude(),
            }]],
        };
        let f = BoundaryData::from_spec(&spec, &grid, 0, 2.0).unwrap();
        assert_eq!(f.eval_exact(&[0], &[1.0]).unwrap().unwrap()[0], crate::linalg::cr(1.0));
        assert_eq!(f.eval_exact(&[0], &[-1.0]).unwrap().unwrap()[0], C64::ZERO);
        // Midpoint convention on the jump face.
        assert_eq!(f.eval_exact(&[0], &[0.0]).unwrap().unwrap()[0], crate::linalg::cr(0.5));
        // Half-line support is unbounded: no decaying envelope.
        let (g, nu) = f.tail_envelope(&[0]).unwrap();
        assert_eq!((g, nu), (1.0, 0.0));
        // Derivatives unavailable.
        assert!(BoundaryData::from_spec(&spec, &grid, 1, 2.0).is_err());

        // Compactly supported indicator inside the grid has a zero tail.
        let boxed = DatumSpec {
            components: vec![vec![ProfileSpec::Indicator {
                left: vec![Some(-1.0)],
                right: vec![Some(1.0)],
                amplitude: default_amplitude(),
            }]],
        };
        let fb = BoundaryData::from_spec(&boxed, &grid, 0, 2.0).unwrap();
        assert_eq!(fb.tail_envelope(&[0]).unwrap().0, 0.0);
    }

    #[test]
    fn fd_samples_route() {
        let grid = grid1(3.0, 121);
        let vals: Vec<C64> = (0..grid.total_points())
            .map(|flat| crate::linalg::cr(grid.point(flat)[0].sin()))
            .collect();
        let f = BoundaryData::from_samples(&grid, vec![vals], 1, 2.0).unwrap();
        let d1 = f.samples(&[1]).unwrap();
        for flat in 10..110 {
            let y = grid.point(flat)[0];
            assert!(
                (d1[0][flat].re - y.cos()).abs() < 1e-3,
                "fd derivative at {y}: {} vs {}",
                d1[0][flat].re,
                y.cos()
            );
        }
        assert!(f.eval_exact(&[0], &[0.1]).is_none());
    }

    #[test]
    fn validation_rules() {
        let grid = grid1(4.0, 17);
        assert!(matches!(
            BoundaryData::from_spec(&gaussian_spec(), &grid, 0, 1.0),
            Err(Error::InvalidExponent { .. })
        ));
        assert!(BoundaryData::from_spec(&gaussian_spec(), &grid, 5, 2.0).is_err());
        let empty = DatumSpec { components: vec![] };
        assert!(BoundaryData::from_spec(&empty, &grid, 0, 2.0).is_err());
        let bad_center = DatumSpec {
            components: vec![vec![ProfileSpec::Gaussian {
                decay: 1.0,
                center: vec![0.0, 0.0],
                amplitude: default_amplitude(),
            }]],
        };
        assert!(BoundaryData::from_spec(&bad_center, &grid, 0, 2.0).is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let json = r#"{"components":[[{"kind":"gaussian","decay":1.0},
            {"kind":"smooth_indicator","left":[-1.0],"right":[1.0],"width":0.3}],
            [{"kind":"constant","value":{"re":0.5,"im":-0.25}}]]}"#;
        let spec: DatumSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.components.len(), 2);
        let back = serde_json::to_string(&spec).unwrap();
        let again: DatumSpec = serde_json::from_str(&back).unwrap();
        assert_eq!(again.components.len(), 2);
        assert!(serde_json::from_str::<DatumSpec>(
            r#"{"components":[],"extra":1}"#
        )
        .is_err());
    }
}
