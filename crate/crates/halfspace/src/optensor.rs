//! Coefficient tensors of constant-coefficient second-order elliptic systems.
//!
//! An operator acting on `ℂ^M`-valued functions on `ℝ^n` is described by a
//! rank-4 tensor `a[α][β][r][s]` of complex numbers: component `α` of the
//! operator applied to `u` is `Σ_{β,r,s} a[α][β][r][s] ∂_r ∂_s u_β`.  This
//! module provides the tensor type, the strong-ellipticity margin estimate,
//! the characteristic matrix (symbol) and its inverse, index-symmetrization,
//! and the elastostatic (Lamé) family of tensors.

use crate::linalg::{c, cr, try_inverse, C64, CMatrix, CVector};
use crate::sample;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest supported value for either the spatial dimension `n` or the
/// system size `M`.
pub const MAX_DIM: usize = 8;

/// Coefficient tensor `a[α][β][r][s]` with `α,β < M` and `r,s < n`.
///
/// All indices in this API are zero-based.  Entries are stored densely; a
/// tensor with every entry finite is the only kind that can be constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTensor {
    n: usize,
    m: usize,
    entries: Vec<C64>,
}

impl CoefficientTensor {
    /// Zero tensor for an `M`-component system in `ℝ^n`.
    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) || !(1..=MAX_DIM).contains(&m) {
            return Err(Error::InvalidDimensions { n, m });
        }
        Ok(Self { n, m, entries: vec![C64::ZERO; m * m * n * n] })
    }

    /// Scalar operator (`M = 1`) with second-order coefficient matrix `a`.
    pub fn scalar(n: usize, coeffs: &[Vec<C64>]) -> Result<Self> {
        let mut t = Self::zeros(n, 1)?;
        if coeffs.len() != n || coeffs.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch {
                expected_n: n,
                expected_m: 1,
                got_n: coeffs.len(),
                got_m: 1,
            });
        }
        for r in 0..n {
            for s in 0..n {
                t.set(0, 0, r, s, coeffs[r][s])?;
            }
        }
        Ok(t)
    }

    /// Scalar operator with a real coefficient matrix.
    pub fn scalar_real(n: usize, coeffs: &[Vec<f64>]) -> Result<Self> {
        let complex: Vec<Vec<C64>> =
            coeffs.iter().map(|row| row.iter().map(|&x| cr(x)).collect()).collect();
        Self::scalar(n, &complex)
    }

    /// The Laplacian on `ℝ^n` (scalar identity coefficients).
    pub fn laplacian(n: usize) -> Result<Self> {
        let mut rows = vec![vec![0.0; n]; n];
        for (r, row) in rows.iter_mut().enumerate() {
            row[r] = 1.0;
        }
        Self::scalar_real(n, &rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    fn idx(&self, alpha: usize, beta: usize, r: usize, s: usize) -> usize {
        ((alpha * self.m + beta) * self.n + r) * self.n + s
    }

    /// Entry `a[α][β][r][s]`.  Panics on out-of-range indices.
    #[inline]
    pub fn get(&self, alpha: usize, beta: usize, r: usize, s: usize) -> C64 {
        assert!(alpha < self.m && beta < self.m && r < self.n && s < self.n);
        self.entries[self.idx(alpha, beta, r, s)]
    }

    /// Sets entry `a[α][β][r][s]`; rejects non-finite values.
    pub fn set(&mut self, alpha: usize, beta: usize, r: usize, s: usize, v: C64) -> Result<()> {
        if alpha >= self.m || beta >= self.m {
            return Err(Error::IndexOutOfRange {
                what: "component index",
                got: alpha.max(beta),
                bound: self.m,
            });
        }
        if r >= self.n || s >= self.n {
            return Err(Error::IndexOutOfRange {
                what: "direction index",
                got: r.max(s),
                bound: self.n,
            });
        }
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NonFiniteEntry { alpha, beta, r, s });
        }
        let i = self.idx(alpha, beta, r, s);
        self.entries[i] = v;
        Ok(())
    }

    /// Tensor with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: C64) -> Result<Self> {
        if !factor.re.is_finite() || !factor.im.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite scale factor {factor}")));
        }
        let mut out = self.clone();
        for e in &mut out.entries {
            *e *= factor;
        }
        Ok(out)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Index-symmetrized tensor: `ã[α][β][r][s] = (a[α][β][r][s] + a[α][β][s][r])/2`.
    ///
    /// The symmetrized tensor defines the same differential operator because
    /// mixed partial derivatives commute.
    pub fn symmetrize(&self) -> Self {
        let mut out = self.clone();
        for alpha in 0..self.m {
            for beta in 0..self.m {
                for r in 0..self.n {
                    for s in 0..self.n {
                        let v = (self.get(alpha, beta, r, s) + self.get(alpha, beta, s, r)) * 0.5;
                        let i = out.idx(alpha, beta, r, s);
                        out.entries[i] = v;
                    }
                }
            }
        }
        out
    }

    /// Tensor of the formally transposed operator: `aᵀ[α][β][r][s] = a[β][α][s][r]`.
    pub fn transpose_tensor(&self) -> Self {
        let mut out = self.clone();
        for alpha in 0..self.m {
            for beta in 0..self.m {
                for r in 0..self.n {
                    for s in 0..self.n {
                        let i = out.idx(alpha, beta, r, s);
                        out.entries[i] = self.get(beta, alpha, s, r);
                    }
                }
            }
        }
        out
    }

    /// `M×M` block `A_{rs}` with entries `(A_{rs})[α][β] = a[α][β][r][s]`.
    pub fn block(&self, r: usize, s: usize) -> Result<CMatrix> {
        if r >= self.n || s >= self.n {
            return Err(Error::IndexOutOfRange {
                what: "direction index",
                got: r.max(s),
                bound: self.n,
            });
        }
        Ok(CMatrix::from_fn(self.m, self.m, |a, b| self.get(a, b, r, s)))
    }

    /// Characteristic matrix `−(Σ_{r,s} ξ_r ξ_s a[α][β][r][s])_{α,β}`.
    ///
    /// Rejects `ξ = 0`; for elliptic tensors the result is invertible for
    /// every nonzero real `ξ`.
    pub fn symbol(&self, xi: &[f64]) -> Result<CMatrix> {
        if xi.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected_n: self.n,
                expected_m: self.m,
                got_n: xi.len(),
                got_m: self.m,
            });
        }
        if xi.iter().map(|x| x * x).sum::<f64>() == 0.0 {
            return Err(Error::ZeroXi);
        }
        let mut out = CMatrix::zeros(self.m, self.m);
        for r in 0..self.n {
            for s in 0..self.n {
                let w = xi[r] * xi[s];
                if w == 0.0 {
                    continue;
                }
                for alpha in 0..self.m {
                    for beta in 0..self.m {
                        out[(alpha, beta)] -= self.get(alpha, beta, r, s) * w;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inverse of the characteristic matrix at `ξ`.
    pub fn symbol_inverse(&self, xi: &[f64]) -> Result<CMatrix> {
        let sym = self.symbol(xi)?;
        try_inverse(&sym).ok_or_else(|| Error::SingularSymbol { xi: xi.to_vec() })
    }

    /// Real part of the ellipticity form `Σ a[α][β][r][s] ξ_r ξ_s η̄_α η_β`
    /// at real `ξ` and complex `η`.
    pub fn ellipticity_form(&self, xi: &[f64], eta: &[C64]) -> f64 {
        debug_assert_eq!(xi.len(), self.n);
        debug_assert_eq!(eta.len(), self.m);
        let mut acc = C64::ZERO;
        for alpha in 0..self.m {
            for beta in 0..self.m {
                let pair = eta[alpha].conj() * eta[beta];
                if pair == C64::ZERO {
                    continue;
                }
                for r in 0..self.n {
                    let xr = xi[r];
                    if xr == 0.0 {
                        continue;
                    }
                    for s in 0..self.n {
                        acc += self.get(alpha, beta, r, s) * (xr * xi[s]) * pair;
                    }
                }
            }
        }
        acc.re
    }

    /// Estimates the strong-ellipticity margin
    /// `inf { Re Σ a[α][β][r][s] ξ_r ξ_s η̄_α η_β : |ξ| = |η| = 1 }` by
    /// minimizing over all coordinate axes plus `num_samples` seeded random
    /// directions on each sphere.  Deterministic for a fixed seed.
    pub fn lh_margin_seeded(&self, num_samples: usize, seed: u64) -> EllipticityReport {
        let mut rng = sample::rng(seed);
        let mut xis: Vec<Vec<f64>> = (0..self.n)
            .map(|r| {
                let mut e = vec![0.0; self.n];
                e[r] = 1.0;
                e
            })
            .collect();
        xis.extend((0..num_samples).map(|_| sample::real_unit(&mut rng, self.n)));

        let mut etas: Vec<Vec<C64>> = Vec::with_capacity(2 * self.m + num_samples);
        for alpha in 0..self.m {
            let mut e = vec![C64::ZERO; self.m];
            e[alpha] = cr(1.0);
            etas.push(e.clone());
            e[alpha] = c(0.0, 1.0);
            etas.push(e);
        }
        etas.extend((0..num_samples).map(|_| sample::complex_unit(&mut rng, self.m)));

        let mut best = f64::INFINITY;
        let mut best_xi = xis[0].clone();
        let mut best_eta = etas[0].clone();
        for xi in &xis {
            for eta in &etas {
                let v = self.ellipticity_form(xi, eta);
                if v < best {
                    best = v;
                    best_xi = xi.clone();
                    best_eta = eta.clone();
                }
            }
        }
        EllipticityReport {
            lh_margin: best,
            argmin_xi: best_xi,
            argmin_eta: best_eta,
            pairs_tested: xis.len() * etas.len(),
        }
    }

    /// [`Self::lh_margin_seeded`] with the crate default seed.
    pub fn lh_margin(&self, num_samples: usize) -> EllipticityReport {
        self.lh_margin_seeded(num_samples, crate::DEFAULT_SEED)
    }

    /// Applies the characteristic matrix at `ξ` to a vector.
    pub fn symbol_apply(&self, xi: &[f64], v: &CVector) -> Result<CVector> {
        Ok(self.symbol(xi)? * v)
    }
}

/// Outcome of a sampled strong-ellipticity estimate.
#[derive(Clone, Debug)]
pub struct EllipticityReport {
    /// Smallest sampled value of the real ellipticity form; an upper bound
    /// for the true margin.
    pub lh_margin: f64,
    /// Real direction attaining the minimum.
    pub argmin_xi: Vec<f64>,
    /// Complex component vector attaining the minimum.
    pub argmin_eta: Vec<C64>,
    /// Number of `(ξ, η)` pairs evaluated.
    pub pairs_tested: usize,
}

/// Tests whether two tensors define the same differential operator, i.e.
/// whether their index-symmetrizations agree entrywise within `tol`.
pub fn same_operator(a1: &CoefficientTensor, a2: &CoefficientTensor, tol: f64) -> Result<bool> {
    if a1.n != a2.n || a1.m != a2.m {
        return Err(Error::DimensionMismatch {
            expected_n: a1.n,
            expected_m: a1.m,
            got_n: a2.n,
            got_m: a2.m,
        });
    }
    let s1 = a1.symmetrize();
    let s2 = a2.symmetrize();
    let diff = s1
        .entries
        .iter()
        .zip(&s2.entries)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    Ok(diff <= tol)
}

/// Default tolerance for [`same_operator`]: `1e-12` relative to the larger
/// entry scale of the two tensors (absolute `1e-12` for small tensors).
pub fn same_operator_tol(a1: &CoefficientTensor, a2: &CoefficientTensor) -> f64 {
    1e-12 * a1.max_abs().max(a2.max_abs()).max(1.0)
}

/// Shear and compression moduli of an elastostatic operator.
///
/// Admissible moduli satisfy `μ > 0` and `2μ + λ > 0`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LameModuli {
    pub mu: f64,
    pub lambda: f64,
}

impl LameModuli {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !mu.is_finite() || !lambda.is_finite() || mu <= 0.0 || 2.0 * mu + lambda <= 0.0 {
            return Err(Error::InvalidModuli { mu, lambda });
        }
        Ok(Self { mu, lambda })
    }
}

/// One-parameter family of coefficient tensors for the elastostatic system
/// `μΔu + (λ+μ)∇ div u` on `ℝ^n` (system size `M = n`):
///
/// `a[α][β][r][s] = μ δ_{rs} δ_{αβ} + (λ+μ−θ) δ_{rα} δ_{sβ} + θ δ_{rβ} δ_{sα}`.
///
/// Every `θ` yields the same operator; they differ by a divergence-free
/// rearrangement of the first-order structure.
pub fn lame_tensor(moduli: LameModuli, theta: f64, n: usize) -> Result<CoefficientTensor> {
    if !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite theta {theta}")));
    }
    let mut t = CoefficientTensor::zeros(n, n)?;
    let LameModuli { mu, lambda } = moduli;
    for alpha in 0..n {
        for beta in 0..n {
            for r in 0..n {
                for s in 0..n {
                    let mut v = 0.0;
                    if r == s && alpha == beta {
                        v += mu;
                    }
                    if r == alpha && s == beta {
                        v += lambda + mu - theta;
                    }
                    if r == beta && s == alpha {
                        v += theta;
                    }
                    if v != 0.0 {
                        t.set(alpha, beta, r, s, cr(v))?;
                    }
                }
            }
        }
    }
    Ok(t)
}

/// The unique `θ` for which [`lame_tensor`] admits the full half-space
/// Poisson-kernel structure: `θ* = μ(λ+μ)/(3μ+λ)`.
pub fn lame_distinguished_theta(moduli: LameModuli) -> f64 {
    let LameModuli { mu, lambda } = moduli;
    mu * (lambda + mu) / (3.0 * mu + lambda)
}

/// External (serialized) form of a single tensor entry; indices are 1-based.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub alpha: usize,
    pub beta: usize,
    pub r: usize,
    pub s: usize,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// External (serialized) form of a coefficient tensor: dimensions plus a
/// sparse list of entries.  Omitted entries are zero; duplicate index
/// quadruples are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorLiteral {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub entries: Vec<TensorEntry>,
}

impl TensorLiteral {
    /// Builds the dense tensor, validating dimensions, index ranges (1-based
    /// in the literal), finiteness, and absence of duplicates.
    pub fn build(&self) -> Result<CoefficientTensor> {
        let mut t = CoefficientTensor::zeros(self.n, self.m)?;
        let mut seen = vec![false; self.m * self.m * self.n * self.n];
        for e in &self.entries {
            if e.alpha == 0 || e.alpha > self.m || e.beta == 0 || e.beta > self.m {
                return Err(Error::IndexOutOfRange {
                    what: "component index (1-based)",
                    got: e.alpha.max(e.beta),
                    bound: self.m,
                });
            }
            if e.r == 0 || e.r > self.n || e.s == 0 || e.s > self.n {
                return Err(Error::IndexOutOfRange {
                    what: "direction index (1-based)",
                    got: e.r.max(e.s),
                    bound: self.n,
                });
            }
            let (alpha, beta, r, s) = (e.alpha - 1, e.beta - 1, e.r - 1, e.s - 1);
            let flat = t.idx(alpha, beta, r, s);
            if seen[flat] {
                return Err(Error::InvalidParameter(format!(
                    "duplicate tensor entry at alpha={}, beta={}, r={}, s={}",
                    e.alpha, e.beta, e.r, e.s
                )));
            }
            seen[flat] = true;
            t.set(alpha, beta, r, s, c(e.re, e.im))?;
        }
        Ok(t)
    }

    /// Dense literal for an existing tensor (all entries listed, 1-based).
    pub fn from_tensor(t: &CoefficientTensor) -> Self {
        let mut entries = Vec::new();
        for alpha in 0..t.m {
            for beta in 0..t.m {
                for r in 0..t.n {
                    for s in 0..t.n {
                        let v = t.get(alpha, beta, r, s);
                        if v != C64::ZERO {
                            entries.push(TensorEntry {
                                alpha: alpha + 1,
                                beta: beta + 1,
                                r: r + 1,
                                s: s + 1,
                                re: v.re,
                                im: v.im,
                            });
                        }
                    }
                }
            }
        }
        TensorLiteral { n: t.n, m: t.m, entries }
    }
}
