//! Maps between spheres and products of spheres, their differentials, local
//! dilations, sampled Lipschitz bounds and topological degree.
//!
//! Points are passed as ambient coordinate slices. A point of `Sⁿ × Sⁿ` is the
//! concatenation `(x, y) ∈ R²ⁿ⁺²`; a point of the sphere of radius `R` has
//! Euclidean norm `R`. Differentials are expressed as matrices whose columns
//! are images of an orthonormal tangent frame of the domain (in its own
//! metric) and whose rows are codomain ambient coordinates.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{mul_into, Level, MAX_DIM};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm, Matrix};
use crate::sphere::{angle, exp_unit, orthonormal_complement, random_point, rng_for};

/// Relative tolerance for domain membership.
pub const DOMAIN_TOL: f64 = 1e-9;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Chunk size used to split Monte Carlo work into independent RNG streams.
const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Space {
    /// Round sphere of dimension `dim` and radius `radius` in `R^(dim+1)`.
    Sphere { dim: usize, radius: f64 },
    /// `Sⁿ × Sⁿ` of unit spheres with the product metric.
    Product { dim: usize },
}

impl Space {
    pub fn unit_sphere(dim: usize) -> Self {
        Space::Sphere { dim, radius: 1.0 }
    }

    pub fn ambient_dim(&self) -> usize {
        match *self {
            Space::Sphere { dim, .. } => dim + 1,
            Space::Product { dim } => 2 * dim + 2,
        }
    }

    pub fn manifold_dim(&self) -> usize {
        match *self {
            Space::Sphere { dim, .. } => dim,
            Space::Product { dim } => 2 * dim,
        }
    }

    pub fn contains(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.ambient_dim() {
            return Err(Error::Domain(format!(
                "expected {} coordinates, got {}",
                self.ambient_dim(),
                p.len()
            )));
        }
        let check = |v: &[f64], radius: f64| {
            let r = norm(v);
            if (r - radius).abs() > DOMAIN_TOL * radius {
                Err(Error::OffSphere { norm: r, radius })
            } else {
                Ok(())
            }
        };
        match *self {
            Space::Sphere { radius, .. } => check(p, radius),
            Space::Product { dim } => {
                check(&p[..dim + 1], 1.0)?;
                check(&p[dim + 1..], 1.0)
            }
        }
    }

    /// Intrinsic distance.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Space::Sphere { radius, .. } => {
                let ua: Vec<f64> = a.iter().map(|c| c / radius).collect();
                let ub: Vec<f64> = b.iter().map(|c| c / radius).collect();
                radius * angle(&ua, &ub)
            }
            Space::Product { dim } => {
                let h = dim + 1;
                angle(&a[..h], &b[..h]).hypot(angle(&a[h..], &b[h..]))
            }
        }
    }

    /// Orthonormal tangent frame at `p`.
    pub fn tangent_frame(&self, p: &[f64]) -> Vec<Vec<f64>> {
        match *self {
            Space::Sphere { radius, .. } => {
                let u: Vec<f64> = p.iter().map(|c| c / radius).collect();
                orthonormal_complement(&u)
            }
            Space::Product { dim } => {
                let h = dim + 1;
                let mut frame = Vec::with_capacity(2 * dim);
                for v in orthonormal_complement(&p[..h]) {
                    let mut w = v;
                    w.resize(2 * h, 0.0);
                    frame.push(w);
                }
                for v in orthonormal_complement(&p[h..]) {
                    let mut w = vec![0.0; h];
                    w.extend(v);
                    frame.push(w);
                }
                frame
            }
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_p`.
    pub fn project_tangent(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        let mut remove = |range: std::ops::Range<usize>| {
            let base = &p[range.clone()];
            let r2 = dot(base, base);
            let ip = dot(&out[range.clone()], base) / r2;
            for (o, b) in out[range].iter_mut().zip(base) {
                *o -= ip * b;
            }
        };
        match *self {
            Space::Sphere { dim, .. } => remove(0..dim + 1),
            Space::Product { dim } => {
                remove(0..dim + 1);
                remove(dim + 1..2 * dim + 2);
            }
        }
        out
    }

    /// Moves from `p` a distance `h` along the geodesic with unit initial
    /// velocity `dir` (unit in the metric of this space).
    pub fn step(&self, p: &[f64], dir: &[f64], h: f64) -> Vec<f64> {
        match *self {
            Space::Sphere { radius, .. } => {
                let u: Vec<f64> = p.iter().map(|c| c / radius).collect();
                let q = exp_unit(&u, dir, h / radius);
                q.into_iter().map(|c| c * radius).collect()
            }
            Space::Product { dim } => {
                let n = dim + 1;
                let mut out = Vec::with_capacity(2 * n);
                for range in [0..n, n..2 * n] {
                    let part = &dir[range.clone()];
                    let speed = norm(part);
                    if speed == 0.0 {
                        out.extend_from_slice(&p[range]);
                    } else {
                        let unit: Vec<f64> = part.iter().map(|c| c / speed).collect();
                        out.extend(exp_unit(&p[range], &unit, h * speed));
                    }
                }
                out
            }
        }
    }

    /// Uniform random point.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match *self {
            Space::Sphere { dim, radius } => random_point(dim, rng)
                .into_coords()
                .into_iter()
                .map(|c| c * radius)
                .collect(),
            Space::Product { dim } => {
                let mut v = random_point(dim, rng).into_coords();
                v.extend(random_point(dim, rng).into_coords());
                v
            }
        }
    }

    /// `count` seeded uniform points, split into fixed-size RNG streams
    /// starting at `stream`.
    pub fn sample_many(&self, count: usize, seed: u64, stream: u64) -> Vec<Vec<f64>> {
        let chunks = count.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = rng_for(seed, stream + c as u64);
                let len = CHUNK.min(count - c * CHUNK);
                (0..len)
                    .map(move |_| self.sample(&mut rng))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

type PointFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
pub enum MapKind {
    /// `(x, y) ↦ x y` on `Sⁿ × Sⁿ`.
    Multiplication(Level),
    /// `z ↦ (z / radius)²` on the sphere of the given radius. Radius `√2`
    /// models the diagonal `{(x, x)}` of `Sⁿ × Sⁿ`.
    DiagonalSquare { level: Level, radius: f64 },
    /// `(z₁, z₂) ↦ (z₁ z₂, (|z₁|² − |z₂|²)/2)` on `√2·S²ⁿ⁺¹`.
    Hopf(Level),
    /// Projection of `Sⁿ × Sⁿ` onto factor 0 or 1.
    Projection(usize),
    /// Linear orthogonal map of a unit sphere.
    Isometry(Matrix),
    /// Maps applied left to right.
    Composition(Vec<SphereMap>),
    /// Arbitrary closure; only finite-difference differentials.
    Pointwise(Arc<PointFn>),
}

impl fmt::Debug for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::Multiplication(l) => write!(f, "Multiplication({l})"),
            MapKind::DiagonalSquare { level, radius } => {
                write!(f, "DiagonalSquare({level}, radius {radius})")
            }
            MapKind::Hopf(l) => write!(f, "Hopf({l})"),
            MapKind::Projection(a) => write!(f, "Projection({a})"),
            MapKind::Isometry(m) => write!(f, "Isometry({}x{})", m.rows(), m.cols()),
            MapKind::Composition(maps) => f
                .debug_list()
                .entries(maps.iter().map(|m| &m.kind))
                .finish(),
            MapKind::Pointwise(_) => f.write_str("Pointwise(..)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiffMode {
    Exact,
    FiniteDifference { step: f64 },
}

#[derive(Clone, Debug)]
pub struct SphereMap {
    kind: MapKind,
    domain: Space,
    codomain: Space,
}

impl SphereMap {
    pub fn multiplication(level: Level) -> Self {
        let n = level.sphere_dim();
        Self {
            kind: MapKind::Multiplication(level),
            domain: Space::Product { dim: n },
            codomain: Space::unit_sphere(n),
        }
    }

    pub fn diagonal_square(level: Level, radius: f64) -> Self {
        let n = level.sphere_dim();
        Self {
            kind: MapKind::DiagonalSquare { level, radius },
            domain: Space::Sphere { dim: n, radius },
            codomain: Space::unit_sphere(n),
        }
    }

    /// `x ↦ x²` on the unit sphere.
    pub fn square(level: Level) -> Self {
        Self::diagonal_square(level, 1.0)
    }

    /// Restriction of the multiplication map to the diagonal, which is
    /// isometric to `√2·Sⁿ`.
    pub fn diagonal(level: Level) -> Self {
        Self::diagonal_square(level, std::f64::consts::SQRT_2)
    }

    pub fn hopf(level: Level) -> Self {
        let n = level.sphere_dim();
        Self {
            kind: MapKind::Hopf(level),
            domain: Space::Sphere {
                dim: 2 * n + 1,
                radius: std::f64::consts::SQRT_2,
            },
            codomain: Space::unit_sphere(n + 1),
        }
    }

    pub fn projection(dim: usize, axis: usize) -> Result<Self> {
        if axis > 1 {
            return Err(Error::InvalidArgument(format!("projection axis {axis}")));
        }
        Ok(Self {
            kind: MapKind::Projection(axis),
            domain: Space::Product { dim },
            codomain: Space::unit_sphere(dim),
        })
    }

    /// Linear isometry `x ↦ Q x` of `Sⁿ`; `Q` must be orthogonal.
    pub fn isometry(q: Matrix) -> Result<Self> {
        if q.rows() != q.cols() || q.rows() == 0 {
            return Err(Error::InvalidArgument(
                "isometry matrix must be square".into(),
            ));
        }
        let defect = q.orthogonality_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "matrix is not orthogonal (defect {defect:e})"
            )));
        }
        let n = q.rows() - 1;
        Ok(Self {
            kind: MapKind::Isometry(q),
            domain: Space::unit_sphere(n),
            codomain: Space::unit_sphere(n),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::isometry(Matrix::identity(dim + 1)).expect("identity is orthogonal")
    }

    /// `x ↦ x̄`.
    pub fn conjugation(level: Level) -> Self {
        let mut q = Matrix::identity(level.dim());
        for i in 1..level.dim() {
            q[(i, i)] = -1.0;
        }
        Self::isometry(q).expect("conjugation is orthogonal")
    }

    pub fn pointwise<F>(domain: Space, codomain: Space, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            kind: MapKind::Pointwise(Arc::new(f)),
            domain,
            codomain,
        }
    }

    /// `self` followed by `next`.
    pub fn then(self, next: SphereMap) -> Result<Self> {
        if self.codomain != next.domain {
            return Err(Error::Domain(format!(
                "cannot compose: codomain {:?} vs domain {:?}",
                self.codomain, next.domain
            )));
        }
        let (domain, codomain) = (self.domain, next.codomain);
        let mut maps = match self.kind {
            MapKind::Composition(maps) => maps,
            kind => vec![SphereMap { kind, ..self }],
        };
        maps.push(next);
        Ok(Self {
            kind: MapKind::Composition(maps),
            domain,
            codomain,
        })
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn domain(&self) -> Space {
        self.domain
    }

    pub fn codomain(&self) -> Space {
        self.codomain
    }

    pub fn has_exact_differential(&self) -> bool {
        match &self.kind {
            MapKind::Pointwise(_) => false,
            MapKind::Composition(maps) => maps.iter().all(SphereMap::has_exact_differential),
            _ => true,
        }
    }

    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.domain.contains(p)?;
        Ok(self.eval_unchecked(p))
    }

    pub(crate) fn eval_unchecked(&self, p: &[f64]) -> Vec<f64> {
        match &self.kind {
            MapKind::Multiplication(level) => {
                let d = level.dim();
                let mut out = vec![0.0; d];
                mul_into(&p[..d], &p[d..], &mut out);
                out
            }
            MapKind::DiagonalSquare { radius, .. } => {
                let x: Vec<f64> = p.iter().map(|c| c / radius).collect();
                let mut out = vec![0.0; x.len()];
                mul_into(&x, &x, &mut out);
                out
            }
            MapKind::Hopf(level) => {
                let d = level.dim();
                let (z1, z2) = p.split_at(d);
                let mut out = vec![0.0; d + 1];
                mul_into(z1, z2, &mut out[..d]);
                out[d] = 0.5 * (dot(z1, z1) - dot(z2, z2));
                out
            }
            MapKind::Projection(axis) => {
                let h = p.len() / 2;
                if *axis == 0 {
                    p[..h].to_vec()
                } else {
                    p[h..].to_vec()
                }
            }
            MapKind::Isometry(q) => q.mul_vec(p),
            MapKind::Composition(maps) => {
                let mut cur = p.to_vec();
                for m in maps {
                    cur = m.eval_unchecked(&cur);
                }
                cur
            }
            MapKind::Pointwise(f) => f(p),
        }
    }

    /// Exact directional derivative `df_p(v)`; `None` for closures.
    pub fn push_forward(&self, p: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let out = match &self.kind {
            MapKind::Multiplication(level) => {
                // d(xy)(X, Y) = X y + x Y
                let d = level.dim();
                let (x, y) = p.split_at(d);
                let (dx, dy) = v.split_at(d);
                let mut a = [0.0; MAX_DIM];
                let mut b = [0.0; MAX_DIM];
                mul_into(dx, y, &mut a[..d]);
                mul_into(x, dy, &mut b[..d]);
                (0..d).map(|i| a[i] + b[i]).collect()
            }
            MapKind::DiagonalSquare { radius, .. } => {
                let d = p.len();
                let x: Vec<f64> = p.iter().map(|c| c / radius).collect();
                let dx: Vec<f64> = v.iter().map(|c| c / radius).collect();
                let mut a = [0.0; MAX_DIM];
                let mut b = [0.0; MAX_DIM];
                mul_into(&dx, &x, &mut a[..d]);
                mul_into(&x, &dx, &mut b[..d]);
                (0..d).map(|i| a[i] + b[i]).collect()
            }
            MapKind::Hopf(level) => {
                let d = level.dim();
                let (z1, z2) = p.split_at(d);
                let (v1, v2) = v.split_at(d);
                let mut a = [0.0; MAX_DIM];
                let mut b = [0.0; MAX_DIM];
                mul_into(v1, z2, &mut a[..d]);
                mul_into(z1, v2, &mut b[..d]);
                let mut out: Vec<f64> = (0..d).map(|i| a[i] + b[i]).collect();
                out.push(dot(z1, v1) - dot(z2, v2));
                out
            }
            MapKind::Projection(axis) => {
                let h = v.len() / 2;
                if *axis == 0 {
                    v[..h].to_vec()
                } else {
                    v[h..].to_vec()
                }
            }
            MapKind::Isometry(q) => q.mul_vec(v),
            MapKind::Composition(maps) => {
                let mut point = p.to_vec();
                let mut vec = v.to_vec();
                for m in maps {
                    vec = m.push_forward(&point, &vec)?;
                    point = m.eval_unchecked(&point);
                }
                vec
            }
            MapKind::Pointwise(_) => return None,
        };
        Some(out)
    }

    /// Differential at `p` on the domain's orthonormal tangent frame.
    pub fn differential(&self, p: &[f64], mode: DiffMode) -> Result<Matrix> {
        self.domain.contains(p)?;
        let frame = self.domain.tangent_frame(p);
        self.differential_on(p, &frame, mode)
    }

    pub(crate) fn differential_on(
        &self,
        p: &[f64],
        frame: &[Vec<f64>],
        mode: DiffMode,
    ) -> Result<Matrix> {
        let cols: Vec<Vec<f64>> = match mode {
            DiffMode::Exact => frame
                .iter()
                .map(|v| self.push_forward(p, v).ok_or(Error::ExactUnavailable))
                .collect::<Result<_>>()?,
            DiffMode::FiniteDifference { step } => {
                if !(step > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "finite-difference step {step}"
                    )));
                }
                let image = self.eval_unchecked(p);
                frame
                    .iter()
                    .map(|v| {
                        let plus = self.eval_unchecked(&self.domain.step(p, v, step));
                        let minus = self.eval_unchecked(&self.domain.step(p, v, -step));
                        let diff: Vec<f64> = plus
                            .iter()
                            .zip(&minus)
                            .map(|(a, b)| (a - b) / (2.0 * step))
                            .collect();
                        self.codomain.project_tangent(&image, &diff)
                    })
                    .collect()
            }
        };
        Ok(Matrix::from_columns(&cols))
    }

    /// Exact differential when available, finite differences otherwise.
    pub fn best_differential(&self, p: &[f64]) -> Result<Matrix> {
        let mode = if self.has_exact_differential() {
            DiffMode::Exact
        } else {
            DiffMode::FiniteDifference {
                step: DEFAULT_FD_STEP,
            }
        };
        self.differential(p, mode)
    }
}

/// Operator norm of the differential at `p`.
pub fn local_dilation(map: &SphereMap, p: &[f64]) -> Result<f64> {
    let d = map.best_differential(p)?;
    Ok(linalg::singular_values(&d).first().copied().unwrap_or(0.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct DilationReport {
    pub points: Vec<Vec<f64>>,
    pub dilations: Vec<f64>,
    pub sup: f64,
    pub argmax: Vec<f64>,
}

impl DilationReport {
    pub fn min(&self) -> f64 {
        self.dilations.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzEstimate {
    pub local: DilationReport,
    /// Largest sampled `d(f(a), f(b)) / d(a, b)`.
    pub pairwise: f64,
    /// True when the exact differential was used and its operator norm was
    /// the same at every sample, so `local.sup` is the exact dilation.
    pub exact: bool,
}

pub fn lipschitz_estimate(
    map: &SphereMap,
    n_local: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if n_local == 0 || n_pairs == 0 {
        return Err(Error::InvalidArgument(
            "sample counts must be at least 1".into(),
        ));
    }
    let points = map.domain.sample_many(n_local, seed, 0);
    let dilations: Vec<f64> = points
        .par_iter()
        .map(|p| local_dilation(map, p))
        .collect::<Result<_>>()?;
    let (imax, sup) =
        dilations
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, d)| if d > acc.1 { (i, d) } else { acc },
            );
    let local = DilationReport {
        argmax: points[imax].clone(),
        points,
        dilations,
        sup,
    };

    let a = map.domain.sample_many(n_pairs, seed, 1 << 32);
    let b = map.domain.sample_many(n_pairs, seed, 2 << 32);
    let pairwise = a
        .par_iter()
        .zip(&b)
        .map(|(a, b)| {
            let dom = map.domain.distance(a, b);
            if dom <= 0.0 {
                return 0.0;
            }
            map.codomain
                .distance(&map.eval_unchecked(a), &map.eval_unchecked(b))
                / dom
        })
        .reduce(|| 0.0, f64::max);

    let exact = map.has_exact_differential() && sup - local.min() <= 1e-9;
    Ok(LipschitzEstimate {
        local,
        pairwise,
        exact,
    })
}

fn require_circle_map(map: &SphereMap) -> Result<(f64, f64)> {
    match (map.domain, map.codomain) {
        (Space::Sphere { dim: 1, radius: r }, Space::Sphere { dim: 1, radius: s }) => Ok((r, s)),
        _ => Err(Error::Domain("winding number needs a map S¹ → S¹".into())),
    }
}

/// Largest accepted angular increment between successive samples. True
/// increments of `π` or more alias, so a safety margin is kept.
pub const WINDING_MAX_STEP: f64 = std::f64::consts::FRAC_PI_2;

/// Degree of a circle map from the total winding of the image angle.
pub fn degree_winding(map: &SphereMap, resolution: usize) -> Result<i64> {
    let (r, _) = require_circle_map(map)?;
    if resolution < 3 {
        return Err(Error::InvalidArgument(format!(
            "winding resolution {resolution}"
        )));
    }
    let tau = std::f64::consts::TAU;
    let image_angle = |k: usize| {
        let th = tau * k as f64 / resolution as f64;
        let w = map.eval_unchecked(&[r * th.cos(), r * th.sin()]);
        w[1].atan2(w[0])
    };
    let mut prev = image_angle(0);
    let mut total = 0.0;
    for k in 1..=resolution {
        let cur = image_angle(k);
        let mut step = cur - prev;
        step -= tau * (step / tau).round();
        if step.abs() > WINDING_MAX_STEP {
            return Err(Error::Resolution { step: step.abs() });
        }
        total += step;
        prev = cur;
    }
    Ok((total / tau).round() as i64)
}

/// Monte Carlo degree estimate with its standard error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DegreeEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl DegreeEstimate {
    pub fn rounded(&self) -> i64 {
        self.mean.round() as i64
    }

    /// `|mean − d|` in units of the standard error.
    pub fn z_score(&self, degree: f64) -> f64 {
        let dev = (self.mean - degree).abs();
        if self.std_err == 0.0 {
            if dev == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            dev / self.std_err
        }
    }
}

/// Signed Jacobian of an equidimensional sphere map at `z`, relative to
/// oriented orthonormal frames.
pub fn signed_jacobian(map: &SphereMap, z: &[f64]) -> Result<f64> {
    let (Space::Sphere { dim: n, radius: r }, Space::Sphere { dim: m, radius: s }) =
        (map.domain, map.codomain)
    else {
        return Err(Error::Domain("degree needs a map between spheres".into()));
    };
    if n != m {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m,
        });
    }
    let frame = map.domain.tangent_frame(z);
    let d = map.differential_on(
        z,
        &frame,
        if map.has_exact_differential() {
            DiffMode::Exact
        } else {
            DiffMode::FiniteDifference {
                step: DEFAULT_FD_STEP,
            }
        },
    )?;
    let image = map.eval_unchecked(z);

    let mut dom_cols = vec![z.iter().map(|c| c / r).collect::<Vec<_>>()];
    dom_cols.extend(frame.iter().cloned());
    let orientation = Matrix::from_columns(&dom_cols).det().signum();

    let mut cod_cols = vec![image.iter().map(|c| c / s).collect::<Vec<_>>()];
    cod_cols.extend((0..n).map(|j| d.column(j)));
    Ok(Matrix::from_columns(&cod_cols).det() * orientation)
}

/// Mean signed Jacobian over uniform samples, scaled by the volume ratio of
/// domain and codomain. Converges to the degree as `O(n^{-1/2})`.
pub fn degree_jacobian(map: &SphereMap, n_samples: usize, seed: u64) -> Result<DegreeEstimate> {
    let (Space::Sphere { dim: n, radius: r }, Space::Sphere { radius: s, .. }) =
        (map.domain, map.codomain)
    else {
        return Err(Error::Domain("degree needs a map between spheres".into()));
    };
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(seed, c as u64);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..len {
                let z = map.domain.sample(&mut rng);
                let j = signed_jacobian(map, &z)?;
                sum += j;
                sum_sq += j * j;
            }
            Ok((sum, sum_sq))
        })
        .collect::<Result<_>>()?;
    let (sum, sum_sq) = partial
        .iter()
        .fold((0.0, 0.0), |acc, &(a, b)| (acc.0 + a, acc.1 + b));
    let count = n_samples as f64;
    let volume_ratio = (r / s).powi(n as i32);
    let mean = sum / count;
    let var = ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0);
    Ok(DegreeEstimate {
        mean: mean * volume_ratio,
        std_err: volume_ratio * (var / count).sqrt(),
        samples: n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Element, Level};
    use crate::sphere::{random_unit_tangent, sample_sphere, SpherePoint};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::SQRT_2;

    fn product_point(level: Level, rng: &mut ChaCha8Rng) -> Vec<f64> {
        Space::Product {
            dim: level.sphere_dim(),
        }
        .sample(rng)
    }

    #[test]
    fn multiplication_eval() {
        let q = Level::Quaternion;
        let m = SphereMap::multiplication(q);
        let i = Element::basis(q, 1);
        let mut p = i.coords().to_vec();
        p.extend_from_slice(i.coords());
        assert_eq!(m.eval(&p).unwrap(), vec![-1.0, 0.0, 0.0, 0.0]);

        let x = sample_sphere(3, 1, 4).pop().unwrap();
        let mut p = Element::one(q).coords().to_vec();
        p.extend_from_slice(x.coords());
        assert_eq!(m.eval(&p).unwrap(), x.coords());

        assert!(matches!(
            m.eval(&[1.0, 0.0, 0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            m.eval(&[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
            Err(Error::OffSphere { .. })
        ));
    }

    #[test]
    fn differential_is_isometric_on_each_factor_at_identity() {
        let level = Level::Octonion;
        let m = SphereMap::multiplication(level);
        let mut p = vec![0.0; 16];
        p[0] = 1.0;
        p[8] = 1.0;
        let x = SpherePoint::basis(7, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let t = random_unit_tangent(&x, &mut rng);
            let mut v = t.vec().to_vec();
            v.extend(vec![0.0; 8]);
            let image = m.push_forward(&p, &v).unwrap();
            assert!((norm(&image) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn aligned_tangents_add_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for level in Level::SPHERES {
            let m = SphereMap::multiplication(level);
            let d = level.dim();
            for _ in 0..50 {
                let p = product_point(level, &mut rng);
                let x = Element::from_coords(&p[..d]).unwrap();
                let y = Element::from_coords(&p[d..]).unwrap();
                let xs = SpherePoint::new(p[..d].to_vec()).unwrap();
                let big_x = Element::from_coords(random_unit_tangent(&xs, &mut rng).vec())
                    .unwrap()
                    .scale(0.7);
                // Y = x⁻¹ (X y) so that x Y = X y
                let big_y = x.inv().unwrap() * (big_x * y);
                assert!(big_y.dot(&y).abs() < 1e-12);
                let mut v = big_x.coords().to_vec();
                v.extend_from_slice(big_y.coords());
                let image = m.push_forward(&p, &v).unwrap();
                assert!((norm(&image) - (big_x.norm() + big_y.norm())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn finite_differences_match_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for level in Level::SPHERES {
            let m = SphereMap::multiplication(level);
            let mut worst = 0.0_f64;
            for _ in 0..100 {
                let p = product_point(level, &mut rng);
                let exact = m.differential(&p, DiffMode::Exact).unwrap();
                let fd = m
                    .differential(&p, DiffMode::FiniteDifference { step: 1e-5 })
                    .unwrap();
                worst = worst.max(exact.max_abs_diff(&fd));
            }
            assert!(worst < 1e-8, "{level}: {worst:e}");
        }
    }

    #[test]
    fn pointwise_has_no_exact_differential() {
        let f = SphereMap::pointwise(Space::unit_sphere(1), Space::unit_sphere(1), |p| p.to_vec());
        assert_eq!(
            f.differential(&[1.0, 0.0], DiffMode::Exact),
            Err(Error::ExactUnavailable)
        );
        let fd = f
            .differential(&[1.0, 0.0], DiffMode::FiniteDifference { step: 1e-5 })
            .unwrap();
        assert!((fd[(1, 0)].abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dilation_of_simple_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for level in Level::SPHERES {
            let m = SphereMap::multiplication(level);
            for _ in 0..200 {
                let p = product_point(level, &mut rng);
                assert!((local_dilation(&m, &p).unwrap() - SQRT_2).abs() < 1e-9);
            }
            let proj = SphereMap::projection(level.sphere_dim(), 1).unwrap();
            let p = product_point(level, &mut rng);
            assert!((local_dilation(&proj, &p).unwrap() - 1.0).abs() < 1e-12);
        }
        let diag = SphereMap::diagonal(Level::Complex);
        for th in [0.0_f64, 0.3, 2.0, 4.5] {
            let z = [SQRT_2 * th.cos(), SQRT_2 * th.sin()];
            assert!((local_dilation(&diag, &z).unwrap() - SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_estimates() {
        let est = lipschitz_estimate(&SphereMap::identity(3), 500, 500, 1).unwrap();
        assert!((est.local.sup - 1.0).abs() < 1e-12);
        assert!(est.pairwise <= 1.0 + 1e-12);
        assert!(est.exact);

        let sq = lipschitz_estimate(&SphereMap::square(Level::Complex), 500, 2000, 2).unwrap();
        assert!((sq.local.sup - 2.0).abs() < 1e-9);
        assert!(sq.pairwise <= 2.0 + 1e-9);

        assert!(lipschitz_estimate(&SphereMap::identity(1), 0, 1, 0).is_err());
    }

    #[test]
    fn estimates_are_deterministic() {
        let m = SphereMap::multiplication(Level::Quaternion);
        let a = lipschitz_estimate(&m, 300, 300, 5).unwrap();
        let b = lipschitz_estimate(&m, 300, 300, 5).unwrap();
        assert_eq!(a.local.dilations, b.local.dilations);
        assert_eq!(a.pairwise, b.pairwise);
    }

    #[test]
    fn winding_numbers() {
        assert_eq!(
            degree_winding(&SphereMap::square(Level::Complex), 64).unwrap(),
            2
        );
        assert_eq!(
            degree_winding(&SphereMap::diagonal(Level::Complex), 64).unwrap(),
            2
        );
        assert_eq!(degree_winding(&SphereMap::identity(1), 16).unwrap(), 1);
        assert_eq!(
            degree_winding(&SphereMap::conjugation(Level::Complex), 16).unwrap(),
            -1
        );
        let constant = SphereMap::pointwise(Space::unit_sphere(1), Space::unit_sphere(1), |_| {
            vec![0.0, 1.0]
        });
        assert_eq!(degree_winding(&constant, 16).unwrap(), 0);
        assert!(matches!(
            degree_winding(&SphereMap::square(Level::Complex), 4),
            Err(Error::Resolution { .. })
        ));
        assert!(degree_winding(&SphereMap::identity(3), 16).is_err());
    }

    #[test]
    fn jacobian_degrees() {
        let id = degree_jacobian(&SphereMap::identity(7), 2000, 1).unwrap();
        assert!((id.mean - 1.0).abs() < 0.05);
        let conj = degree_jacobian(&SphereMap::conjugation(Level::Complex), 2000, 1).unwrap();
        assert!((conj.mean + 1.0).abs() < 0.05);
        let sq = degree_jacobian(&SphereMap::square(Level::Quaternion), 50_000, 2).unwrap();
        assert!(sq.z_score(2.0) < 4.0, "{sq:?}");
        assert_eq!(sq.rounded(), 2);
    }

    #[test]
    fn composition_chains_differentials() {
        let level = Level::Quaternion;
        let f = SphereMap::multiplication(level)
            .then(SphereMap::conjugation(level))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let p = product_point(level, &mut rng);
        let exact = f.differential(&p, DiffMode::Exact).unwrap();
        let fd = f
            .differential(&p, DiffMode::FiniteDifference { step: 1e-5 })
            .unwrap();
        assert!(exact.max_abs_diff(&fd) < 1e-8);
        assert!(SphereMap::identity(1).then(SphereMap::identity(3)).is_err());
    }
}
