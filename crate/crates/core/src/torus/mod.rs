//! A Riemannian submersion `f : T → R/Z` on the torus `T = R²/Z²` with the
//! surface-of-revolution metric `dx² + r(x)² dy²`, `r(x) = 2 − cos 4πx`.
//!
//! The level sets of `f` are the unit-speed curves `γ_a` with
//! `dx/dt = 1/r` and `dy/dt = s(x)·(1/r)·√(1 − 1/r²)`, where `s = +1` on
//! `[0, 1/2]` and `s = −1` on `[1/2, 1]`. Along `γ_a` the slope is
//! `dy/dx = s(x)√(1 − 1/r²)`, so `f(x, y) = (y − Φ(x)) mod 1` with
//! `Φ(x) = ∫₀ˣ s(u)√(1 − 1/r(u)²) du`. Since `r(x + 1/2) = r(x)`, `Φ(1) = 0`
//! and `f` is well defined. Its partials are `∂f/∂y = 1` and
//! `∂f/∂x = −s(x)√(1 − 1/r²)`, giving `|∇f|_g = 1` everywhere.
//!
//! Using `r − 1 = 2 sin² 2πx` and `r + 1 = 3 − cos 4πx`,
//! `s(x)√(1 − 1/r²) = √2 sin(2πx) √(3 − cos 4πx) / r(x)`, which is smooth
//! through the branch points `x ∈ {0, 1/2}` where `r = 1`.
//!
//! The projection `(x, y) ↦ y` is homotopic to `f`, also 1-Lipschitz, and
//! has local dilation `1/r(x)`, reaching 1 only on the circles `x ∈ {0, 1/2}`.

pub mod figure;

use std::f64::consts::{SQRT_2, TAU};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Point of `R²/Z²`, stored with representatives in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: wrap(x),
            y: wrap(y),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// Flat chart distance between the nearest representatives.
    pub fn chart_dist(&self, other: &TorusPoint) -> f64 {
        wrap_dist(self.x, other.x).hypot(wrap_dist(self.y, other.y))
    }
}

/// Representative in `[0, 1)`.
pub fn wrap(v: f64) -> f64 {
    let w = v.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1 for tiny negative inputs
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Signed difference `b − a` reduced to `[−1/2, 1/2)`.
pub fn wrap_delta(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(1.0);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// `min(|Δ|, 1 − |Δ|)` for coordinates mod 1.
pub fn wrap_dist(a: f64, b: f64) -> f64 {
    wrap_delta(a, b).abs()
}

/// The metric `dx² + r(x)² dy²` with `r(x) = 2 − cos 4πx`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RevolutionMetric;

impl RevolutionMetric {
    pub fn r(&self, x: f64) -> f64 {
        2.0 - (2.0 * TAU * x).cos()
    }

    /// `s(x)`: `+1` on `[0, 1/2)`, `−1` on `[1/2, 1)`, extended with period 1.
    pub fn branch_sign(&self, x: f64) -> f64 {
        if wrap(x) < 0.5 {
            1.0
        } else {
            -1.0
        }
    }

    /// `s(x)√(1 − 1/r²)` in the form written with the branch sign.
    pub fn slope_branch(&self, x: f64) -> f64 {
        let r = self.r(x);
        self.branch_sign(x) * (1.0 - 1.0 / (r * r)).max(0.0).sqrt()
    }

    /// `s(x)√(1 − 1/r²)` in its smooth form.
    pub fn slope(&self, x: f64) -> f64 {
        let c = (2.0 * TAU * x).cos();
        SQRT_2 * (TAU * x).sin() * (3.0 - c).sqrt() / (2.0 - c)
    }

    /// `g`-length of the chart vector `(vx, vy)` at abscissa `x`.
    pub fn norm(&self, x: f64, v: [f64; 2]) -> f64 {
        v[0].hypot(self.r(x) * v[1])
    }

    /// `g(u, v)` at abscissa `x`.
    pub fn inner(&self, x: f64, u: [f64; 2], v: [f64; 2]) -> f64 {
        let r = self.r(x);
        u[0] * v[0] + r * r * u[1] * v[1]
    }

    /// Cosine of the `g`-angle between two chart vectors.
    pub fn cosine(&self, x: f64, u: [f64; 2], v: [f64; 2]) -> f64 {
        self.inner(x, u, v) / (self.norm(x, u) * self.norm(x, v))
    }
}

const METRIC: RevolutionMetric = RevolutionMetric;

/// Velocity of the level curves `γ_a`.
pub fn level_field(p: [f64; 2]) -> [f64; 2] {
    let r = METRIC.r(p[0]);
    [1.0 / r, METRIC.slope(p[0]) / r]
}

/// Metric gradient `(∂f/∂x, r⁻² ∂f/∂y)` of `f`.
pub fn gradient_field(p: [f64; 2]) -> [f64; 2] {
    let r = METRIC.r(p[0]);
    [-METRIC.slope(p[0]), 1.0 / (r * r)]
}

pub const PHI_TOL: f64 = 1e-10;

/// `Φ(x) = ∫₀ˣ s(u)√(1 − 1/r(u)²) du` by adaptive Simpson quadrature.
pub fn phi(x: f64) -> f64 {
    phi_between(0.0, x)
}

/// `Φ(b) − Φ(a)`, integrated directly over `[a, b]`.
pub fn phi_between(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    // knots at the branch points, where the integrand changes sign
    let mut knots = vec![lo];
    let mut k = (2.0 * lo).floor() + 1.0;
    while k / 2.0 < hi {
        knots.push(k / 2.0);
        k += 1.0;
    }
    knots.push(hi);
    let f = |u: f64| METRIC.slope(u);
    let tol = PHI_TOL / (knots.len() - 1) as f64;
    let total: f64 = knots
        .windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], tol))
        .sum();
    if a < b {
        total
    } else {
        -total
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `f(x, y) = (y − Φ(x)) mod 1`.
pub fn f_eval(p: &TorusPoint) -> f64 {
    wrap(p.y - phi(p.x))
}

/// Analytic partials `(∂f/∂x, ∂f/∂y)`.
pub fn f_partials(x: f64) -> [f64; 2] {
    [-METRIC.slope(x), 1.0]
}

/// `|∇f|_g = √((∂f/∂x)² + r⁻²(∂f/∂y)²)`.
pub fn gradient_norm(p: &TorusPoint) -> f64 {
    let [fx, fy] = f_partials(p.x);
    let r = METRIC.r(p.x);
    (fx * fx + fy * fy / (r * r)).sqrt()
}

/// Local dilation `1/r(x)` of the projection `(x, y) ↦ y`.
pub fn projection_dilation(x: f64) -> f64 {
    1.0 / METRIC.r(x)
}

/// Local dilation of `f_s = (y − sΦ(x)) mod 1`, the straight-line homotopy
/// from the projection (`s = 0`) to `f` (`s = 1`).
pub fn homotopy_dilation(s: f64, x: f64) -> f64 {
    let r = METRIC.r(x);
    let fx = s * METRIC.slope(x);
    (fx * fx + 1.0 / (r * r)).sqrt()
}

/// Sample of a trace: parameter and point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceSample {
    pub t: f64,
    pub point: TorusPoint,
}

/// Integrated curve on the torus.
#[derive(Clone, Debug)]
pub struct CurveTrace {
    pub samples: Vec<TraceSample>,
    /// Chart coordinates without reduction mod 1.
    pub unwrapped: Vec<[f64; 2]>,
    /// Sum of `g`-lengths of the chords between consecutive samples.
    pub arc_length: f64,
    /// Wrap-aware chart distance between the first and last samples.
    pub closure_defect: f64,
}

impl CurveTrace {
    fn from_states(ts: Vec<f64>, states: Vec<[f64; 2]>) -> Self {
        let samples: Vec<TraceSample> = ts
            .iter()
            .zip(&states)
            .map(|(&t, s)| TraceSample {
                t,
                point: TorusPoint::new(s[0], s[1]),
            })
            .collect();
        let arc_length = states
            .windows(2)
            .map(|w| {
                let xm = 0.5 * (w[0][0] + w[1][0]);
                METRIC.norm(xm, [w[1][0] - w[0][0], w[1][1] - w[0][1]])
            })
            .sum();
        let closure_defect = samples[0]
            .point
            .chart_dist(&samples[samples.len() - 1].point);
        Self {
            samples,
            unwrapped: states,
            arc_length,
            closure_defect,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &TraceSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TraceSample {
        &self.samples[self.samples.len() - 1]
    }

    /// Largest `g`-length of a chord between consecutive samples.
    pub fn max_chord(&self) -> f64 {
        self.unwrapped
            .windows(2)
            .map(|w| {
                let xm = 0.5 * (w[0][0] + w[1][0]);
                METRIC.norm(xm, [w[1][0] - w[0][0], w[1][1] - w[0][1]])
            })
            .fold(0.0, f64::max)
    }
}

/// Classical fourth-order Runge–Kutta for an autonomous planar field.
fn rk4<F: Fn([f64; 2]) -> [f64; 2]>(
    field: F,
    start: [f64; 2],
    h: f64,
    steps: usize,
) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut p = start;
    out.push(p);
    let add = |p: [f64; 2], k: [f64; 2], c: f64| [p[0] + c * k[0], p[1] + c * k[1]];
    for _ in 0..steps {
        let k1 = field(p);
        let k2 = field(add(p, k1, 0.5 * h));
        let k3 = field(add(p, k2, 0.5 * h));
        let k4 = field(add(p, k3, h));
        p = [
            p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        out.push(p);
    }
    out
}

pub const MAX_STEP: f64 = 1e-2;

/// Parameter length of one loop of `γ_a`: `∫₀¹ r(x) dx = 2`.
pub const GAMMA_PERIOD: f64 = 2.0;

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step <= MAX_STEP) {
        return Err(Error::InvalidArgument(format!(
            "integrator step {step} outside (0, {MAX_STEP}]"
        )));
    }
    Ok(())
}

/// `γ_a` from `(0, a)` over one loop in `x`. The step is shortened to
/// `2/⌈2/step⌉` so the final sample lands on `t = 2`, where `x = 1`.
pub fn gamma_integrate(a: f64, step: f64) -> Result<CurveTrace> {
    check_step(step)?;
    let steps = (GAMMA_PERIOD / step).ceil() as usize;
    let h = GAMMA_PERIOD / steps as f64;
    let states = rk4(level_field, [0.0, a], h, steps);
    let ts = (0..=steps).map(|k| k as f64 * h).collect();
    Ok(CurveTrace::from_states(ts, states))
}

/// Integral curves of `∇f` from each seed over `t ∈ [0, t_max]`.
pub fn integral_curves_gradient(
    seeds: &[TorusPoint],
    step: f64,
    t_max: f64,
) -> Result<Vec<CurveTrace>> {
    if !(step > 0.0 && t_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gradient flow needs positive step and time, got {step} and {t_max}"
        )));
    }
    let steps = (t_max / step).ceil() as usize;
    let h = t_max / steps as f64;
    Ok(seeds
        .par_iter()
        .map(|s| {
            let states = rk4(gradient_field, [s.x, s.y], h, steps);
            let ts = (0..=steps).map(|k| k as f64 * h).collect();
            CurveTrace::from_states(ts, states)
        })
        .collect())
}

/// Uniform `n × n` grid of cell corners `(i/n, j/n)`.
pub fn grid(n: usize) -> Vec<TorusPoint> {
    (0..n)
        .flat_map(|i| {
            (0..n).map(move |j| TorusPoint::new(i as f64 / n as f64, j as f64 / n as f64))
        })
        .collect()
}

/// `max |∇f|_g − 1|` over an `n × n` grid.
pub fn gradient_norm_deviation(n: usize) -> f64 {
    grid(n)
        .par_iter()
        .map(|p| (gradient_norm(p) - 1.0).abs())
        .reduce(|| 0.0, f64::max)
}

/// Supremum of the projection's dilation over `n` abscissae `k/n`, with
/// the abscissae where it is attained to within `tol`.
pub fn projection_dilation_sup(n: usize, tol: f64) -> (f64, Vec<f64>) {
    let xs: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
    let sup = xs
        .iter()
        .map(|&x| projection_dilation(x))
        .fold(0.0, f64::max);
    let attained = xs
        .into_iter()
        .filter(|&x| (projection_dilation(x) - sup).abs() <= tol)
        .collect();
    (sup, attained)
}

/// Central finite differences of `f` at `p`, wrap-aware in the value.
pub fn f_partials_fd(p: &TorusPoint, h: f64) -> [f64; 2] {
    let df = |a: TorusPoint, b: TorusPoint| wrap_delta(f_eval(&a), f_eval(&b)) / (2.0 * h);
    let (x, y) = (p.x, p.y);
    [
        df(TorusPoint::new(x - h, y), TorusPoint::new(x + h, y)),
        df(TorusPoint::new(x, y - h), TorusPoint::new(x, y + h)),
    ]
}

/// Second-order one-sided differences of `∂f/∂x` from the left and from
/// the right of `x`, for checking `C¹` matching across a branch point.
pub fn one_sided_dfdx(x: f64, h: f64) -> (f64, f64) {
    // f(x ± kh) − f(x) = −(Φ(x ± kh) − Φ(x))
    let d = |k: f64| -phi_between(x, x + k * h);
    let right = (4.0 * d(1.0) - d(2.0)) / (2.0 * h);
    let left = -(4.0 * d(-1.0) - d(-2.0)) / (2.0 * h);
    (left, right)
}

/// `(min r, max r)`, attained at `x = 0` and `x = 1/4`.
pub fn profile_bounds() -> (f64, f64) {
    (METRIC.r(0.0), METRIC.r(0.25))
}
