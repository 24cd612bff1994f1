//! Level sets of `f` and their orthogonal trajectories on the flattened
//! chart `[0, 1]²`, written as SVG or CSV.

use std::fmt::Write as _;

use serde::Serialize;

use super::{
    f_eval, gamma_integrate, integral_curves_gradient, wrap, wrap_delta, CurveTrace,
    RevolutionMetric, TorusPoint,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveStyle {
    Level,
    Gradient,
}

impl CurveStyle {
    pub fn name(self) -> &'static str {
        match self {
            CurveStyle::Level => "level",
            CurveStyle::Gradient => "gradient",
        }
    }

    fn stroke(self) -> &'static str {
        match self {
            CurveStyle::Level => "#d62728",
            CurveStyle::Gradient => "#1f77b4",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureFormat {
    Svg,
    Csv,
}

#[derive(Clone, Debug)]
pub struct FigureCurve {
    pub id: usize,
    pub style: CurveStyle,
    /// Level value `a` for level curves, seed for gradient curves.
    pub seed: TorusPoint,
    pub trace: CurveTrace,
}

#[derive(Clone, Copy, Debug)]
pub struct FigureSpec {
    pub n_level: usize,
    pub n_grad: usize,
    pub step: f64,
    pub t_max: f64,
}

impl FigureSpec {
    pub fn new(n_level: usize, n_grad: usize) -> Self {
        Self {
            n_level,
            n_grad,
            step: 1e-3,
            t_max: 4.0,
        }
    }
}

/// Point where a gradient curve crosses a level curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Crossing {
    pub level_id: usize,
    pub gradient_id: usize,
    pub point: TorusPoint,
    /// Cosine of the `g`-angle between the two tangents.
    pub cosine: f64,
}

#[derive(Clone, Debug)]
pub struct Figure {
    pub curves: Vec<FigureCurve>,
}

/// Level curves `γ_{k/n_level}` and gradient curves seeded at
/// `(k/n_grad, 0)`.
pub fn build_figure(spec: &FigureSpec) -> Result<Figure> {
    if spec.n_level == 0 || spec.n_grad == 0 {
        return Err(Error::InvalidArgument(
            "figure needs at least one curve of each kind".into(),
        ));
    }
    let mut curves = Vec::with_capacity(spec.n_level + spec.n_grad);
    for k in 0..spec.n_level {
        let a = k as f64 / spec.n_level as f64;
        curves.push(FigureCurve {
            id: k,
            style: CurveStyle::Level,
            seed: TorusPoint::new(0.0, a),
            trace: gamma_integrate(a, spec.step)?,
        });
    }
    let seeds: Vec<TorusPoint> = (0..spec.n_grad)
        .map(|k| TorusPoint::new(k as f64 / spec.n_grad as f64, 0.0))
        .collect();
    for (k, trace) in integral_curves_gradient(&seeds, spec.step, spec.t_max)?
        .into_iter()
        .enumerate()
    {
        curves.push(FigureCurve {
            id: spec.n_level + k,
            style: CurveStyle::Gradient,
            seed: seeds[k],
            trace,
        });
    }
    Ok(Figure { curves })
}

pub fn emit_figure(n_level: usize, n_grad: usize, format: FigureFormat) -> Result<String> {
    let fig = build_figure(&FigureSpec::new(n_level, n_grad))?;
    Ok(fig.render(format))
}

/// Quadratic interpolation through three equally spaced samples at
/// parameter offset `u ∈ [0, 2]` from the first; returns value and
/// derivative with respect to `u`.
fn quadratic(p: [[f64; 2]; 3], u: f64) -> ([f64; 2], [f64; 2]) {
    let mut v = [0.0; 2];
    let mut d = [0.0; 2];
    for c in 0..2 {
        let (a, b, e) = (p[0][c], p[1][c], p[2][c]);
        let l1 = b - a;
        let l2 = 0.5 * (e - 2.0 * b + a);
        v[c] = a + l1 * u + l2 * u * (u - 1.0);
        d[c] = l1 + l2 * (2.0 * u - 1.0);
    }
    (v, d)
}

fn window(states: &[[f64; 2]], i: usize) -> (usize, [[f64; 2]; 3]) {
    let start = i.min(states.len() - 3);
    (start, [states[start], states[start + 1], states[start + 2]])
}

impl Figure {
    pub fn level_curves(&self) -> impl Iterator<Item = &FigureCurve> {
        self.curves.iter().filter(|c| c.style == CurveStyle::Level)
    }

    pub fn gradient_curves(&self) -> impl Iterator<Item = &FigureCurve> {
        self.curves
            .iter()
            .filter(|c| c.style == CurveStyle::Gradient)
    }

    pub fn render(&self, format: FigureFormat) -> String {
        match format {
            FigureFormat::Svg => self.to_svg(),
            FigureFormat::Csv => self.to_csv(),
        }
    }

    /// Rows `curve_id,style,t,x,y` with 10 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("curve_id,style,t,x,y\n");
        for c in &self.curves {
            for s in &c.trace.samples {
                let _ = writeln!(
                    out,
                    "{},{},{:.9e},{:.9e},{:.9e}",
                    c.id,
                    c.style.name(),
                    s.t,
                    s.point.x(),
                    s.point.y()
                );
            }
        }
        out
    }

    /// One `<g>` per curve; paths break where a coordinate wraps.
    pub fn to_svg(&self) -> String {
        const SIZE: f64 = 500.0;
        const MARGIN: f64 = 10.0;
        let mut out = String::new();
        let total = SIZE + 2.0 * MARGIN;
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
        );
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" style="fill:none;stroke:#000000;stroke-width:1"/>"#
        );
        for c in &self.curves {
            let _ = writeln!(
                out,
                r#"<g id="curve-{}" class="{}" style="fill:none;stroke:{};stroke-width:1.2">"#,
                c.id,
                c.style.name(),
                c.style.stroke()
            );
            let mut d = String::new();
            let mut prev: Option<TorusPoint> = None;
            for s in &c.trace.samples {
                let p = s.point;
                let (px, py) = (MARGIN + SIZE * p.x(), MARGIN + SIZE * (1.0 - p.y()));
                let jump =
                    prev.is_none_or(|q| (q.x() - p.x()).abs() > 0.5 || (q.y() - p.y()).abs() > 0.5);
                let _ = write!(d, "{}{px:.2},{py:.2} ", if jump { "M" } else { "L" });
                prev = Some(p);
            }
            let _ = writeln!(out, r#"  <path d="{}"/>"#, d.trim_end());
            out.push_str("</g>\n");
        }
        out.push_str("</svg>\n");
        out
    }

    /// All crossings of gradient curves with level curves. Along a
    /// gradient curve `f` grows at unit rate, so a crossing of `γ_a` is a
    /// sample interval where `f − a` passes through 0 mod 1.
    pub fn crossings(&self) -> Vec<Crossing> {
        let metric = RevolutionMetric;
        let levels: Vec<&FigureCurve> = self.level_curves().collect();
        let mut out = Vec::new();
        for g in self.gradient_curves() {
            let states = &g.trace.unwrapped;
            if states.len() < 3 {
                continue;
            }
            let values: Vec<f64> = g.trace.samples.iter().map(|s| f_eval(&s.point)).collect();
            for l in &levels {
                let a = l.seed.y();
                for i in 0..states.len() - 1 {
                    let d0 = wrap_delta(a, values[i]);
                    let d1 = wrap_delta(a, values[i + 1]);
                    if !(d0 < 0.0 && d1 >= 0.0 && d1 - d0 < 0.5) {
                        continue;
                    }
                    let (start, pts) = window(states, i);
                    // f is affine in t along the flow
                    let u = (i - start) as f64 + (-d0) / (d1 - d0);
                    let (pos, dg) = quadratic(pts, u);
                    let tl = level_tangent(&l.trace, pos[0]);
                    let point = TorusPoint::new(pos[0], pos[1]);
                    out.push(Crossing {
                        level_id: l.id,
                        gradient_id: g.id,
                        point,
                        cosine: metric.cosine(point.x(), dg, tl),
                    });
                }
            }
        }
        out
    }

    /// Smallest wrap-aware vertical gap between two level curves over a
    /// common grid of abscissae; positive iff no two level curves meet.
    pub fn level_separation(&self, n: usize) -> f64 {
        let levels: Vec<&FigureCurve> = self.level_curves().collect();
        let mut min = f64::INFINITY;
        for k in 0..n {
            let x = k as f64 / n as f64;
            let ys: Vec<f64> = levels.iter().map(|l| level_height(&l.trace, x)).collect();
            for i in 0..ys.len() {
                for j in i + 1..ys.len() {
                    min = min.min(super::wrap_dist(ys[i], ys[j]));
                }
            }
        }
        min
    }
}

/// Index `i` with `x_i ≤ x < x_{i+1}` on a trace whose `x` increases.
fn bracket(trace: &CurveTrace, x: f64) -> usize {
    let states = &trace.unwrapped;
    let i = states.partition_point(|p| p[0] <= x);
    i.saturating_sub(1).min(states.len() - 2)
}

/// Height of a level trace at abscissa `x ∈ [0, 1)`.
fn level_height(trace: &CurveTrace, x: f64) -> f64 {
    let i = bracket(trace, x);
    let (p, q) = (trace.unwrapped[i], trace.unwrapped[i + 1]);
    let w = (x - p[0]) / (q[0] - p[0]);
    wrap(p[1] + w * (q[1] - p[1]))
}

/// Tangent `dγ/dt` of a level trace at abscissa `x`.
fn level_tangent(trace: &CurveTrace, x: f64) -> [f64; 2] {
    let x = wrap(x);
    let i = bracket(trace, x);
    let (start, pts) = window(&trace.unwrapped, i);
    // solve x(u) = x on the quadratic by Newton from the linear guess
    let mut u =
        (i - start) as f64 + (x - pts[i - start][0]) / (pts[i - start + 1][0] - pts[i - start][0]);
    for _ in 0..4 {
        let (v, d) = quadratic(pts, u);
        u -= (v[0] - x) / d[0];
    }
    quadratic(pts, u).1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_shape() {
        let csv = emit_figure(8, 8, FigureFormat::Csv).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("curve_id,style,t,x,y"));
        let mut ids = std::collections::BTreeSet::new();
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 5);
            ids.insert(fields[0].parse::<usize>().unwrap());
            assert!(fields[1] == "level" || fields[1] == "gradient");
        }
        assert_eq!(ids.len(), 16);
    }

    #[test]
    fn svg_groups() {
        let svg = emit_figure(3, 2, FigureFormat::Svg).unwrap();
        assert_eq!(svg.matches("<g ").count(), 5);
        assert_eq!(svg.matches(r#"class="level""#).count(), 3);
        assert_eq!(svg.matches(r#"class="gradient""#).count(), 2);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn crossings_are_orthogonal() {
        let fig = build_figure(&FigureSpec::new(8, 8)).unwrap();
        let cr = fig.crossings();
        // each gradient curve gains 4 in f over t ∈ [0, 4]
        assert!(cr.len() >= 8 * 8 * 3, "{}", cr.len());
        let worst = cr.iter().map(|c| c.cosine.abs()).fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst:e}");
        assert!(fig.level_separation(200) > 0.1);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(emit_figure(0, 3, FigureFormat::Csv).is_err());
    }
}
