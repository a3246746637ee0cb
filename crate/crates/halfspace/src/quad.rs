//! Adaptive Gauss–Kronrod quadrature for scalar-, complex-, and matrix-valued
//! integrands, plus whole-line and whole-plane transforms for kernels that
//! decay algebraically.

use crate::linalg::{CMatrix, C64};
use crate::{Error, Result};

/// Values that can be accumulated by the quadrature driver.
pub trait QuadValue: Clone {
    fn scaled(&self, a: f64) -> Self;
    /// `self += a * other`
    fn add_scaled(&mut self, a: f64, other: &Self);
    fn sub_ref(&self, other: &Self) -> Self;
    /// Max-modulus norm, used for error estimates.
    fn norm_inf(&self) -> f64;
}

impl QuadValue for f64 {
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }
    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }
    fn norm_inf(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for C64 {
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }
    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }
    fn norm_inf(&self) -> f64 {
        self.norm()
    }
}

impl QuadValue for CMatrix {
    fn scaled(&self, a: f64) -> Self {
        self * C64::new(a, 0.0)
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        *self += other * C64::new(a, 0.0);
    }
    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }
    fn norm_inf(&self) -> f64 {
        crate::linalg::max_abs(self)
    }
}

// 15-point Kronrod abscissae (positive half) with the embedded 7-point Gauss
// rule on the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7-15 panel on `[a, b]`; returns the Kronrod value and a
/// rescaled error estimate in the style of the classic QUADPACK kernels.
pub fn gk15<V: QuadValue>(f: &dyn Fn(f64) -> V, a: f64, b: f64) -> (V, f64) {
    let centre = 0.5 * (a + b);
    let h = 0.5 * (b - a);

    let fc = f(centre);
    let mut resk = fc.scaled(WGK[7]);
    let mut resg = fc.scaled(WG[3]);
    let mut resabs = WGK[7] * fc.norm_inf();
    let mut pairs: Vec<(V, V)> = Vec::with_capacity(7);
    for i in 0..7 {
        let dx = h * XGK[i];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        resk.add_scaled(WGK[i], &f1);
        resk.add_scaled(WGK[i], &f2);
        resabs += WGK[i] * (f1.norm_inf() + f2.norm_inf());
        if i % 2 == 1 {
            let wg = WG[(i - 1) / 2];
            resg.add_scaled(wg, &f1);
            resg.add_scaled(wg, &f2);
        }
        pairs.push((f1, f2));
    }

    let reskh = resk.scaled(0.5);
    let mut resasc = WGK[7] * fc.sub_ref(&reskh).norm_inf();
    for (i, (f1, f2)) in pairs.iter().enumerate() {
        resasc += WGK[i] * (f1.sub_ref(&reskh).norm_inf() + f2.sub_ref(&reskh).norm_inf());
    }

    let value = resk.scaled(h);
    let habs = h.abs();
    resabs *= habs;
    resasc *= habs;
    let mut err = resk.sub_ref(&resg).norm_inf() * habs;
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON;
    if resabs > f64::MIN_POSITIVE / floor {
        err = err.max(floor * resabs);
    }
    (value, err)
}

struct Segment<V> {
    a: f64,
    b: f64,
    value: V,
    err: f64,
}

/// Adaptive bisection driven by the per-panel error estimates until the summed
/// estimate drops below `abs_tol`.
pub fn adaptive_gk<V: QuadValue>(
    f: &dyn Fn(f64) -> V,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<(V, f64)> {
    let (value, err) = gk15(f, a, b);
    let mut segs = vec![Segment { a, b, value, err }];
    let mut total_err = segs[0].err;

    while total_err > abs_tol {
        if segs.len() >= max_panels {
            return Err(Error::QuadratureNonConvergence {
                error: total_err,
                tol: abs_tol,
            });
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i)
            .expect("nonempty segment list");
        let Segment { a, b, err, .. } = segs[worst];
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // Interval at floating-point resolution; accept the estimate.
            break;
        }
        let (v1, e1) = gk15(f, a, mid);
        let (v2, e2) = gk15(f, mid, b);
        segs[worst] = Segment {
            a,
            b: mid,
            value: v1,
            err: e1,
        };
        segs.push(Segment {
            a: mid,
            b,
            value: v2,
            err: e2,
        });
        total_err += e1 + e2 - err;
    }

    let mut iter = segs.iter();
    let first = iter.next().expect("nonempty segment list");
    let mut sum = first.value.clone();
    for s in iter {
        sum.add_scaled(1.0, &s.value);
    }
    Ok((sum, total_err))
}

/// `∫_{-∞}^{∞} f(y) dy` through the substitution `y = tan(u)`: the image
/// integrand `f(tan u) sec²(u)` lives on `(-π/2, π/2)` and stays smooth for
/// integrands decaying at least like `|y|^{-2}`.
pub fn integrate_line<V: QuadValue>(
    f: &dyn Fn(f64) -> V,
    abs_tol: f64,
    max_panels: usize,
) -> Result<(V, f64)> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let g = move |u: f64| {
        let sec2 = 1.0 / (u.cos() * u.cos());
        f(u.tan()).scaled(sec2)
    };
    adaptive_gk(&g, -half_pi, half_pi, abs_tol, max_panels)
}

/// `∫_{ℝ²} f(y₁, y₂) dy` by iterating [`integrate_line`]; inner tolerances are
/// scaled down by the outer Jacobian so the accumulated inner error stays
/// below `abs_tol`.
pub fn integrate_plane<V: QuadValue>(
    f: &dyn Fn(f64, f64) -> V,
    abs_tol: f64,
    max_panels: usize,
) -> Result<(V, f64)> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let inner_budget = 0.5 * abs_tol / std::f64::consts::PI;
    let outer = move |u: f64| -> V {
        let sec2 = 1.0 / (u.cos() * u.cos());
        let y1 = u.tan();
        let inner_tol = inner_budget / sec2;
        let (row, _) = integrate_line(&|y2: f64| f(y1, y2), inner_tol, max_panels)
            .unwrap_or_else(|_| {
                // Fall back to the best fixed-depth estimate; the outer error
                // estimate still sees the roughness.
                let g = |v: f64| {
                    let s2 = 1.0 / (v.cos() * v.cos());
                    f(y1, v.tan()).scaled(s2)
                };
                gk15(&g, -half_pi, half_pi)
            });
        row.scaled(sec2)
    };
    adaptive_gk(&outer, -half_pi, half_pi, 0.5 * abs_tol, max_panels)
}

/// Uniform trapezoid rule over the unit circle: spectrally accurate for smooth
/// periodic integrands.
pub fn trapezoid_circle<V: QuadValue>(f: &dyn Fn(f64) -> V, nodes: usize) -> V {
    assert!(nodes >= 4, "need at least 4 circle nodes");
    let step = std::f64::consts::TAU / nodes as f64;
    let mut sum = f(0.0);
    for k in 1..nodes {
        sum.add_scaled(1.0, &f(k as f64 * step));
    }
    sum.scaled(step)
}
