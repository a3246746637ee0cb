//! Nontangential geometry and norms: sampled approach cones, nontangential
//! maximal functions and boundary traces, the Hardy–Littlewood maximal
//! operator on grids, `L^p`/Sobolev norms, and the empirical well-posedness
//! constant relating them.
//!
//! The nontangential maximal function is computed as a maximum over a finite
//! cone sample, so it is a certified *lower* bound of the true supremum;
//! every quantitative statement about it is therefore phrased as stability
//! under refinement rather than as an exact supremum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datum::BoundaryData;
use crate::grid::{multi_indices_exact, multi_indices_up_to, multinomial, GridSpec};
use crate::linalg::{C64, CVector};
use crate::solver::{evaluate_mixed, KernelSet};
use crate::{Error, Result};

/// Sampled approach cone `Γ_κ(x') = {(y', t) : |y' - x'| < κt}`.
///
/// Sampling is by height levels with per-level angular lattices: at height
/// `t` the tangential offsets are multiples of `spacing` within the open
/// ball of radius `κt`, strictly.
#[derive(Clone, Debug, Serialize)]
pub struct ConeSpec {
    /// Aperture `κ > 0`.
    pub kappa: f64,
    /// Ascending geometric height levels.
    pub t_levels: Vec<f64>,
    /// Per-level points per tangential axis (odd, centered).
    pub angular_samples: Vec<usize>,
    /// Tangential lattice step for the angular grids.
    pub spacing: f64,
}

impl ConeSpec {
    pub fn new(
        kappa: f64,
        t_levels: Vec<f64>,
        angular_samples: Vec<usize>,
        spacing: f64,
    ) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("cone aperture {kappa}")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidParameter(format!("cone spacing {spacing}")));
        }
        if t_levels.is_empty() || t_levels.len() != angular_samples.len() {
            return Err(Error::InvalidParameter(
                "cone needs matching, nonempty level and angular lists".into(),
            ));
        }
        for w in t_levels.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidParameter("cone levels must ascend".into()));
            }
        }
        if t_levels.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParameter("cone levels must be positive".into()));
        }
        if angular_samples.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::InvalidParameter(
                "angular sample counts must be odd and positive".into(),
            ));
        }
        Ok(Self { kappa, t_levels, angular_samples, spacing })
    }

    /// Standard sampling for a datum grid: heights geometric with ratio
    /// `2^{1/4}` from the grid spacing up to a quarter of the half-width,
    /// angular lattices at grid spacing spanning the cone width.
    pub fn standard(kappa: f64, grid: &GridSpec) -> Result<Self> {
        let h = grid.spacing();
        let t_max = grid.half_width / 4.0;
        if h > t_max {
            return Err(Error::InvalidGrid(format!(
                "grid too coarse for cone sampling: spacing {h} exceeds t_max {t_max}"
            )));
        }
        let ratio = 2f64.powf(0.25);
        let mut t_levels = Vec::new();
        let mut t = h;
        while t <= t_max * (1.0 + 1e-12) {
            t_levels.push(t);
            t *= ratio;
        }
        let angular_samples = t_levels
            .iter()
            .map(|&ti| 2 * (kappa * ti / h).ceil() as usize + 1)
            .collect();
        Self::new(kappa, t_levels, angular_samples, h)
    }

    /// All cone samples `(y', t)` anchored at `xprime`.
    pub fn samples(&self, xprime: &[f64]) -> Vec<(Vec<f64>, f64)> {
        self.samples_within(xprime, f64::INFINITY)
    }

    /// Cone samples restricted to the box `|y'_j| ≤ box_halfwidth`; used to
    /// keep evaluations inside the region where truncation bounds are
    /// trustworthy.  The restriction is independent of the aperture, so
    /// sample sets stay nested across `κ`.
    pub fn samples_within(&self, xprime: &[f64], box_halfwidth: f64) -> Vec<(Vec<f64>, f64)> {
        let d = xprime.len();
        let mut out = Vec::new();
        for (li, &t) in self.t_levels.iter().enumerate() {
            let half = (self.angular_samples[li] - 1) / 2;
            let side = 2 * half + 1;
            let total = side.pow(d as u32);
            let radius2 = (self.kappa * t) * (self.kappa * t);
            for flat in 0..total {
                let mut f = flat;
                let mut y = Vec::with_capacity(d);
                let mut r2 = 0.0;
                for j in (0..d).rev() {
                    let off = (f % side) as i64 - half as i64;
                    f /= side;
                    let dy = off as f64 * self.spacing;
                    r2 += dy * dy;
                    y.push(xprime[j] + dy);
                }
                y.reverse();
                if r2 < radius2 && y.iter().all(|&yj| yj.abs() <= box_halfwidth + 1e-12) {
                    out.push((y, t));
                }
            }
        }
        out
    }
}

/// Sampled nontangential maximal function: the maximum of `|field|`
/// (Euclidean norm over components) over the cone sample anchored at
/// `xprime`.  Monotone in the aperture and in sample density by
/// construction.
pub fn ntmax<F>(field: &F, cone: &ConeSpec, xprime: &[f64]) -> Result<f64>
where
    F: Fn(&[f64], f64) -> Result<CVector>,
{
    let samples = cone.samples(xprime);
    if samples.is_empty() {
        return Err(Error::EmptySample("cone sample set is empty"));
    }
    let mut best = 0.0f64;
    for (y, t) in &samples {
        let v = field(y, *t)?;
        best = best.max(v.norm());
    }
    Ok(best)
}

/// Boundary-trace estimate along the cone axis.
#[derive(Clone, Debug)]
pub struct TraceEstimate {
    /// Richardson-extrapolated limit from the two lowest height levels.
    pub value: CVector,
    /// Largest pairwise distance of the field over the lowest three levels.
    pub oscillation: f64,
    /// Whether the oscillation stayed within the requested tolerance.
    pub converged: bool,
}

/// Estimates the boundary trace `lim_{t→0} u(x', t)` from the lowest
/// `levels` cone heights: first-order Richardson extrapolation of the two
/// smallest levels, with the oscillation over the lowest three reported and
/// checked against `tol`.
pub fn nt_trace<F>(
    field: &F,
    cone: &ConeSpec,
    xprime: &[f64],
    levels: usize,
    tol: f64,
) -> Result<TraceEstimate>
where
    F: Fn(&[f64], f64) -> Result<CVector>,
{
    if levels < 2 {
        return Err(Error::InvalidParameter(
            "trace estimation needs at least two height levels".into(),
        ));
    }
    let use_levels = levels.min(cone.t_levels.len());
    if use_levels < 2 {
        return Err(Error::InvalidParameter(
            "cone carries fewer than two height levels".into(),
        ));
    }
    let ts = &cone.t_levels[..use_levels];
    let vals: Vec<CVector> = ts
        .iter()
        .map(|&t| field(xprime, t))
        .collect::<Result<_>>()?;
    // value(t) = L + c·t + O(t²): eliminate the linear term with the two
    // smallest heights.
    let rho = ts[1] / ts[0];
    let value = (&vals[0] * crate::linalg::cr(rho) - &vals[1]) * crate::linalg::cr(1.0 / (rho - 1.0));
    let probe = use_levels.min(3);
    let mut oscillation = 0.0f64;
    for i in 0..probe {
        for j in (i + 1)..probe {
            oscillation = oscillation.max((&vals[i] - &vals[j]).norm());
        }
    }
    Ok(TraceEstimate { value, oscillation, converged: oscillation <= tol })
}

/// Hardy–Littlewood maximal function on the grid: maximum over centered,
/// grid-aligned cubes of dyadic radii of the average of `|f|`.  Cube-face
/// lattice points carry half weight, so constants average exactly and the
/// smallest radius reproduces `|f(x)|`.
pub fn hl_maximal(grid: &GridSpec, values: &[C64], xprime: &[f64]) -> Result<f64> {
    grid.validate()?;
    let total = grid.total_points();
    if values.len() != total {
        return Err(Error::InvalidGrid(format!(
            "value array has {} entries, grid has {total} points",
            values.len()
        )));
    }
    let d = grid.dim();
    if xprime.len() != d {
        return Err(Error::InvalidParameter(format!(
            "point has {} coordinates, expected {d}",
            xprime.len()
        )));
    }
    let ix: Vec<usize> = xprime
        .iter()
        .map(|&x| grid.snap_axis(x, 1e-9))
        .collect::<Option<_>>()
        .ok_or_else(|| {
            Error::InvalidParameter(format!("point {xprime:?} is not a grid point"))
        })?;
    let h = grid.spacing();
    let npts = grid.points_per_axis as i64;

    // Dyadic radii h·2^j plus the half-cell radius; stop once the cube
    // covers the whole grid (larger cubes only dilute the average).
    let mut radii = vec![0.5 * h];
    let mut r = h;
    let cover = 4.0 * grid.half_width;
    while r <= cover {
        radii.push(r);
        r *= 2.0;
    }
    radii.push(r);

    let mut best = 0.0f64;
    for &r in &radii {
        let k = (r / h + 1e-9).floor() as i64; // lattice half-width of the cube
        let mut mass = 0.0f64;
        // Iterate the cube lattice around ix in up to two axes generically.
        let side = 2 * k + 1;
        let cube_total = (side as usize).pow(d as u32);
        for flat in 0..cube_total {
            let mut f = flat;
            let mut idx = Vec::with_capacity(d);
            let mut weight = 1.0f64;
            let mut inside = true;
            for j in (0..d).rev() {
                let off = (f % side as usize) as i64 - k;
                f /= side as usize;
                let i = ix[j] as i64 + off;
                if i < 0 || i >= npts {
                    inside = false;
                    break;
                }
                if off.abs() == k && (k as f64 * h - r).abs() < 1e-9 * h {
                    weight *= 0.5; // lattice point exactly on the cube face
                }
                idx.push(i as usize);
            }
            if !inside {
                continue;
            }
            idx.reverse();
            mass += weight * values[grid.flatten(&idx)].norm();
        }
        let avg = mass * grid.cell_volume() / (2.0 * r).powi(d as i32);
        best = best.max(avg);
    }
    Ok(best)
}

/// `L^p` norm of grid samples by trapezoid quadrature, `p ∈ (1, ∞)`.
pub fn lp_norm(grid: &GridSpec, values: &[C64], p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent { p });
    }
    grid.validate()?;
    let total = grid.total_points();
    if values.len() != total {
        return Err(Error::InvalidGrid(format!(
            "value array has {} entries, grid has {total} points",
            values.len()
        )));
    }
    let mut acc = 0.0f64;
    for (fl, v) in values.iter().enumerate() {
        acc += grid.trapezoid_weight(fl) * v.norm().powf(p);
    }
    Ok((acc * grid.cell_volume()).powf(1.0 / p))
}

/// Boundary Sobolev norm: sum over tangential multi-indices `|α| ≤ ell` and
/// components of the `L^p` norms of `∂^α f`.
pub fn sobolev_norm(data: &BoundaryData, p: f64, ell: usize) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent { p });
    }
    if ell > data.ell() {
        return Err(Error::MissingDerivatives { available: data.ell(), requested: ell });
    }
    let grid = data.grid();
    let mut acc = 0.0f64;
    for gamma in multi_indices_up_to(grid.dim(), ell) {
        let arrs = data.samples(&gamma)?;
        for comp in arrs {
            acc += lp_norm(grid, comp, p)?;
        }
    }
    Ok(acc)
}

/// Norms of the sampled nontangential maximal functions of `∇^k u` for
/// `k = 0..ℓ`, the datum Sobolev norm, and their ratio.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormReport {
    pub p: f64,
    /// `‖𝓝(∇^k u)‖_p` for `k = 0, …, ℓ`.
    pub values: Vec<f64>,
    /// `‖f‖` in the order-ℓ Sobolev sense.
    pub datum_norm: f64,
    /// `Σ_k values[k] / datum_norm`.
    pub empirical_c: f64,
}

/// Full well-posedness data: the report plus the per-point maximal values
/// it was built from.
#[derive(Clone, Debug)]
pub struct WellposednessData {
    pub report: NormReport,
    /// Boundary evaluation points.
    pub xprimes: Vec<Vec<f64>>,
    /// `ntmax_values[k][i]` = sampled `𝓝(∇^k u)(xprimes[i])`.
    pub ntmax_values: Vec<Vec<f64>>,
}

impl WellposednessData {
    /// CSV rows `x1,…,x{n-1},k,ntmax`.
    pub fn csv(&self) -> String {
        use std::fmt::Write as _;
        let d = self.xprimes.first().map_or(0, |x| x.len());
        let mut out = String::new();
        for j in 1..=d {
            let _ = write!(out, "x{j},");
        }
        out.push_str("k,ntmax\n");
        for (k, row) in self.ntmax_values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                for x in &self.xprimes[i] {
                    let _ = write!(out, "{:.16e},", x);
                }
                let _ = writeln!(out, "{k},{:.16e}", v);
            }
        }
        out
    }
}

/// Computes the empirical constant of the nontangential well-posedness
/// estimate: solves for `u`, forms `|∇^k u|` through the derivative
/// expansions (`|∇^k u|² = Σ_{|α|=k} (k!/α!) |∂^α u|²` over all `n`
/// coordinates), samples `𝓝(∇^k u)` on a strided boundary grid, and takes
/// `L^p` norms against the datum Sobolev norm.
///
/// Cone samples are clipped to the evaluation margin of the datum grid, so
/// everything stays where truncation bounds are valid; the clipped sets
/// remain nested across apertures.
pub fn wellposedness_report(
    set: &KernelSet,
    data: &BoundaryData,
    p: f64,
    ell: usize,
    cone: &ConeSpec,
    report_stride: usize,
) -> Result<WellposednessData> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent { p });
    }
    if ell > data.ell() {
        return Err(Error::MissingDerivatives { available: data.ell(), requested: ell });
    }
    if report_stride == 0 {
        return Err(Error::InvalidParameter("report stride must be positive".into()));
    }
    let grid = data.grid();
    let n = set.n();
    let d = grid.dim();
    let margin = 0.5 * grid.half_width;

    // Strided boundary indices within the margin, one shared axis list.
    let axis: Vec<usize> = (0..grid.points_per_axis)
        .filter(|&i| grid.axis_coord(i).abs() <= margin + 1e-12)
        .collect();
    let axis: Vec<usize> = axis.iter().copied().step_by(report_stride).collect();
    if axis.len() < 2 {
        return Err(Error::InvalidGrid(
            "report grid has fewer than two points per axis".into(),
        ));
    }
    let mut xprimes = Vec::new();
    let mut report_weights = Vec::new();
    let side = axis.len();
    let report_total = side.pow(d as u32);
    let report_spacing = grid.spacing() * report_stride as f64;
    for flat in 0..report_total {
        let mut f = flat;
        let mut x = Vec::with_capacity(d);
        let mut w = 1.0f64;
        for _ in 0..d {
            let pos = f % side;
            f /= side;
            x.push(grid.axis_coord(axis[pos]));
            if pos == 0 || pos + 1 == side {
                w *= 0.5;
            }
        }
        x.reverse();
        xprimes.push(x);
        report_weights.push(w * report_spacing.powi(d as i32));
    }

    // Cone membership: per level, deduplicated evaluation points; per
    // report point, the (level, slot) pairs it sees.
    let levels = cone.t_levels.len();
    let mut level_slots: Vec<BTreeMap<Vec<i64>, usize>> = vec![BTreeMap::new(); levels];
    let mut membership: Vec<Vec<(usize, usize)>> = vec![Vec::new(); xprimes.len()];
    let h = grid.spacing();
    for (xi, x) in xprimes.iter().enumerate() {
        for (li, &t) in cone.t_levels.iter().enumerate() {
            let half = ((cone.angular_samples[li] - 1) / 2) as i64;
            let sidec = (2 * half + 1) as usize;
            let totalc = sidec.pow(d as u32);
            let radius2 = (cone.kappa * t) * (cone.kappa * t);
            for flat in 0..totalc {
                let mut f = flat;
                let mut key = Vec::with_capacity(d);
                let mut r2 = 0.0;
                let mut ok = true;
                for j in (0..d).rev() {
                    let off = (f % sidec) as i64 - half;
                    f /= sidec;
                    let dy = off as f64 * cone.spacing;
                    r2 += dy * dy;
                    let y = x[j] + dy;
                    if y.abs() > margin + 1e-12 {
                        ok = false;
                        break;
                    }
                    key.push(((y + grid.half_width) / h).round() as i64);
                }
                if !ok || r2 >= radius2 {
                    continue;
                }
                key.reverse();
                let next = level_slots[li].len();
                let slot = *level_slots[li].entry(key).or_insert(next);
                membership[xi].push((li, slot));
            }
        }
    }

    // Evaluate |∇^k u|² per level and slot.
    let mut grad_sq: Vec<Vec<Vec<f64>>> = (0..=ell)
        .map(|_| (0..levels).map(|li| vec![0.0; level_slots[li].len()]).collect())
        .collect();
    for li in 0..levels {
        if level_slots[li].is_empty() {
            continue;
        }
        let mut ys: Vec<(usize, Vec<f64>)> = level_slots[li]
            .iter()
            .map(|(key, &slot)| {
                let y: Vec<f64> = key
                    .iter()
                    .map(|&i| -grid.half_width + i as f64 * h)
                    .collect();
                (slot, y)
            })
            .collect();
        ys.sort_by_key(|(slot, _)| *slot);
        let points: Vec<Vec<f64>> = ys.iter().map(|(_, y)| y.clone()).collect();
        let t = cone.t_levels[li];
        for k in 0..=ell {
            for alpha in multi_indices_exact(n, k) {
                let weight = multinomial(&alpha);
                let tang = &alpha[..d];
                let time = alpha[d];
                let vals = evaluate_mixed(set, data, tang, time, t, &points)?;
                for (slot, (v, _)) in vals.iter().enumerate() {
                    grad_sq[k][li][slot] += weight * v.norm_squared();
                }
            }
        }
    }

    // Per-point maxima and norms.
    let mut ntmax_values: Vec<Vec<f64>> = vec![vec![0.0; xprimes.len()]; ell + 1];
    for (xi, members) in membership.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptySample("cone sample set is empty"));
        }
        for k in 0..=ell {
            let best = members
                .iter()
                .map(|&(li, slot)| grad_sq[k][li][slot])
                .fold(0.0, f64::max);
            ntmax_values[k][xi] = best.sqrt();
        }
    }

    let mut values = Vec::with_capacity(ell + 1);
    for row in &ntmax_values {
        let mut acc = 0.0f64;
        for (i, v) in row.iter().enumerate() {
            acc += report_weights[i] * v.powf(p);
        }
        values.push(acc.powf(1.0 / p));
    }
    let datum_norm = sobolev_norm(data, p, ell)?;
    let empirical_c = values.iter().sum::<f64>() / datum_norm;
    Ok(WellposednessData {
        report: NormReport { p, values, datum_norm, empirical_c },
        xprimes,
        ntmax_values,
    })
}
