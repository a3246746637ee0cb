//! Uniform tensor grids on the boundary hyperplane and multi-index helpers.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform tensor grid on `[-R, R]^{n-1}`, the truncated boundary of the upper
/// half-space in ambient dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Ambient dimension `n >= 2`; the grid itself lives in `n-1` variables.
    pub n: usize,
    /// Half-width `R` of the sampled box.
    pub half_width: f64,
    /// Points per axis (both endpoints included).
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        let g = GridSpec {
            n,
            half_width,
            points_per_axis,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidGrid(format!("ambient dimension {} < 2", self.n)));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "half_width {} must be positive and finite",
                self.half_width
            )));
        }
        if self.points_per_axis < 16 {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis {} < 16",
                self.points_per_axis
            )));
        }
        Ok(())
    }

    /// Number of grid axes, `n - 1`.
    pub fn dim(&self) -> usize {
        self.n - 1
    }

    /// Grid spacing `h' = 2R/(points_per_axis - 1)`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points_per_axis - 1) as f64
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.dim() as u32)
    }

    /// Multi-dimensional index of a flat index; axis 0 varies slowest.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = vec![0usize; d];
        for j in (0..d).rev() {
            idx[j] = flat % self.points_per_axis;
            flat /= self.points_per_axis;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .iter()
            .map(|&i| self.axis_coord(i))
            .collect()
    }

    /// Product trapezoid weight: 1/2 per axis endpoint.
    pub fn trapezoid_weight(&self, flat: usize) -> f64 {
        self.unflatten(flat)
            .iter()
            .map(|&i| {
                if i == 0 || i + 1 == self.points_per_axis {
                    0.5
                } else {
                    1.0
                }
            })
            .product()
    }

    /// Cell volume `h'^{n-1}`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    /// Nearest lattice index of a coordinate, or `None` when off-lattice
    /// beyond `tol` relative to the spacing.
    pub fn snap_axis(&self, x: f64, tol: f64) -> Option<usize> {
        let h = self.spacing();
        let raw = (x + self.half_width) / h;
        let i = raw.round();
        if (raw - i).abs() > tol || i < 0.0 || i as usize >= self.points_per_axis {
            None
        } else {
            Some(i as usize)
        }
    }

    /// Evaluation-margin test: truncation bounds are honest only well inside
    /// the sampled box, enforced as `|x'_j| <= R/2`.
    pub fn within_margin(&self, xprime: &[f64]) -> bool {
        xprime.iter().all(|&x| x.abs() <= 0.5 * self.half_width + 1e-12)
    }

    /// Distance from `x'` to the boundary of the sampled box, the `d` in the
    /// truncation tail bounds.
    pub fn margin_distance(&self, xprime: &[f64]) -> f64 {
        let worst = xprime.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        self.half_width - worst
    }
}

/// All multi-indices over `d` variables with total order exactly `k`,
/// lexicographic, deterministic.
pub fn multi_indices_exact(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if d == 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=k).rev() {
            prefix.push(first);
            rec(d - 1, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        if k == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(d, k, &mut Vec::new(), &mut out);
    out
}

/// All multi-indices with total order `<= k`, ordered by total order then
/// lexicographic.
pub fn multi_indices_up_to(d: usize, k: usize) -> Vec<Vec<usize>> {
    (0..=k).flat_map(|j| multi_indices_exact(d, j)).collect()
}

/// Multinomial weight `k!/γ!` of a multi-index; the number of ordered
/// derivative tuples collapsing to `γ`.
pub fn multinomial(gamma: &[usize]) -> f64 {
    let k: usize = gamma.iter().sum();
    let mut val = 1.0;
    let mut rem = k;
    for &g in gamma {
        // C(rem, g) accumulated as a product of integer-valued ratios.
        let mut choose = 1.0;
        for i in 0..g {
            choose *= (rem - i) as f64 / (i + 1) as f64;
        }
        val *= choose;
        rem -= g;
    }
    val.round()
}
