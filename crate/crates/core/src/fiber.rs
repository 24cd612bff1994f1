//! Fibers `f⁻¹(p)` of maps `Sⁿ × Sⁿ → Sⁿ` and the geometry around them:
//! the pair inequalities every fiber of a √2-Lipschitz map homotopic to the
//! multiplication map must satisfy, isometry-graph fitting, fiber
//! parallelism, the Hopf extension of the multiplication map, and the sphere
//! of arcs `γ_X(t) = (β(t), α_X(t))` swept between two fiber points.

use std::f64::consts::{PI, SQRT_2, TAU};

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{Element, Level};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm, Matrix};
use crate::lipmap::{DiffMode, Space, SphereMap, DEFAULT_FD_STEP};
use crate::sphere::{
    angle, geo_dist, geodesic, product_dist, random_unit_tangent, rng_for, tangent_basis,
    ProductPoint, SpherePoint, TangentVector, TANGENT_TOL,
};

/// Finite sample of a fiber `f⁻¹(p)` with per-point residuals `d(f(q), p)`.
#[derive(Clone, Debug)]
pub struct FiberSample {
    pub base: SpherePoint,
    pub points: Vec<ProductPoint>,
    pub residuals: Vec<f64>,
}

impl FiberSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    /// The same fiber with factors swapped, `{(y, x)}`.
    pub fn transposed(&self) -> FiberSample {
        FiberSample {
            base: self.base.clone(),
            points: self
                .points
                .iter()
                .map(|q| ProductPoint {
                    first: q.second.clone(),
                    second: q.first.clone(),
                })
                .collect(),
            residuals: self.residuals.clone(),
        }
    }
}

fn level_of(p: &SpherePoint) -> Result<Level> {
    Level::from_dim(p.coords().len())
}

/// Exact fiber of the multiplication map: `(x, x⁻¹ p)` for each `x`.
pub fn fiber_exact_mult(p: &SpherePoint, xs: &[SpherePoint]) -> Result<FiberSample> {
    let level = level_of(p)?;
    let pe = p.to_element()?;
    let mut points = Vec::with_capacity(xs.len());
    let mut residuals = Vec::with_capacity(xs.len());
    for x in xs {
        let xe = Element::from_slice(level, x.coords())?;
        let ye = xe.inv()? * pe;
        let image = xe * ye;
        residuals.push(angle(image.coords(), pe.coords()));
        points.push(ProductPoint::new(
            x.clone(),
            SpherePoint::normalize(ye.coords().to_vec())?,
        )?);
    }
    Ok(FiberSample {
        base: p.clone(),
        points,
        residuals,
    })
}

/// Outcome of numerical fiber extraction.
#[derive(Clone, Debug)]
pub enum Extraction {
    Found {
        fiber: FiberSample,
        dropped: usize,
    },
    Failed {
        attempted: usize,
        best_residual: f64,
    },
}

impl Extraction {
    pub fn fiber(&self) -> Option<&FiberSample> {
        match self {
            Extraction::Found { fiber, .. } => Some(fiber),
            Extraction::Failed { .. } => None,
        }
    }
}

const DESCENT_MAX_ITER: usize = 500;

/// Projected gradient descent of `d(f(q), p)²` from each seed, with
/// Armijo backtracking. Seeds that do not reach `tol` are dropped.
pub fn fiber_numeric(
    map: &SphereMap,
    p: &SpherePoint,
    seeds: &[ProductPoint],
    tol: f64,
) -> Result<Extraction> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("fiber tolerance {tol}")));
    }
    let Space::Product { dim } = map.domain() else {
        return Err(Error::Domain(
            "fiber extraction needs a map on Sⁿ × Sⁿ".into(),
        ));
    };
    if map.codomain() != Space::unit_sphere(p.dim()) || dim != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.dim(),
        });
    }
    let results: Vec<(Option<Vec<f64>>, f64)> = seeds
        .par_iter()
        .map(|s| descend_to_fiber(map, p.coords(), s.to_ambient(), tol))
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut residuals = Vec::new();
    let mut best = f64::INFINITY;
    for (q, r) in &results {
        best = best.min(*r);
        if let Some(q) = q {
            points.push(ProductPoint::from_ambient(q)?);
            residuals.push(*r);
        }
    }
    if points.is_empty() {
        return Ok(Extraction::Failed {
            attempted: seeds.len(),
            best_residual: best,
        });
    }
    Ok(Extraction::Found {
        dropped: seeds.len() - points.len(),
        fiber: FiberSample {
            base: p.clone(),
            points,
            residuals,
        },
    })
}

fn descend_to_fiber(
    map: &SphereMap,
    target: &[f64],
    mut q: Vec<f64>,
    tol: f64,
) -> Result<(Option<Vec<f64>>, f64)> {
    let domain = map.domain();
    let codomain = map.codomain();
    let mode = if map.has_exact_differential() {
        DiffMode::Exact
    } else {
        DiffMode::FiniteDifference {
            step: DEFAULT_FD_STEP,
        }
    };
    let objective = |q: &[f64]| angle(&map.eval_unchecked(q), target);
    let mut theta = objective(&q);
    let mut alpha = 1.0;
    for _ in 0..DESCENT_MAX_ITER {
        if theta < tol {
            return Ok((Some(q), theta));
        }
        let u = map.eval_unchecked(&q);
        // gradient of θ² at u is -2·log_u(target)
        let dir_cod = codomain.project_tangent(&u, target);
        let r = norm(&dir_cod);
        if r == 0.0 {
            break;
        }
        let g_cod: Vec<f64> = dir_cod.iter().map(|c| -2.0 * theta * c / r).collect();
        let frame = domain.tangent_frame(&q);
        let d = map.differential_on(&q, &frame, mode)?;
        let coeffs: Vec<f64> = (0..frame.len())
            .map(|j| dot(&d.column(j), &g_cod))
            .collect();
        let gnorm = norm(&coeffs);
        if gnorm == 0.0 {
            break;
        }
        let mut grad_dir = vec![0.0; q.len()];
        for (c, v) in coeffs.iter().zip(&frame) {
            linalg::axpy(c / gnorm, v, &mut grad_dir);
        }
        let f0 = theta * theta;
        alpha *= 2.0;
        let mut accepted = false;
        while alpha * gnorm > 1e-300 && alpha > 1e-20 {
            let trial = domain.step(&q, &grad_dir, -alpha * gnorm);
            let t = objective(&trial);
            if t * t <= f0 - 1e-4 * alpha * gnorm * gnorm {
                q = trial;
                theta = t;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(if theta < tol {
        (Some(q), theta)
    } else {
        (None, theta)
    })
}

/// Residuals of the two pair inequalities for points of a common fiber:
/// `r₁ = (2π − d(x₁,x₂))² + d(y₁,y₂)² − 2π²` and
/// `r₂ = d(x₁,x₂)² + (2π − d(y₁,y₂))² − 2π²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairResiduals {
    pub r1: f64,
    pub r2: f64,
}

impl PairResiduals {
    pub fn passes(&self, tol: f64) -> bool {
        self.r1 >= -tol && self.r2 >= -tol
    }

    pub fn min(&self) -> f64 {
        self.r1.min(self.r2)
    }
}

pub fn check_pair_inequalities(q1: &ProductPoint, q2: &ProductPoint) -> Result<PairResiduals> {
    let a = geo_dist(&q1.first, &q2.first)?;
    let b = geo_dist(&q1.second, &q2.second)?;
    let two_pi_sq = 2.0 * PI * PI;
    Ok(PairResiduals {
        r1: (TAU - a).powi(2) + b * b - two_pi_sq,
        r2: a * a + (TAU - b).powi(2) - two_pi_sq,
    })
}

/// Orthogonal matrix whose graph best fits a fiber.
#[derive(Clone, Debug)]
pub struct FittedIsometry {
    pub matrix: Matrix,
    /// `max |A x − y|` over the fitted points.
    pub residual: f64,
}

impl FittedIsometry {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    pub fn inverse(&self) -> Matrix {
        self.matrix.transpose()
    }

    pub fn accepts(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// Relative singular-value floor below which the cross-covariance is
/// considered rank deficient.
const PROCRUSTES_RANK_TOL: f64 = 1e-10;

/// Orthogonal Procrustes: minimizes `Σ |A xᵢ − yᵢ|²` over orthogonal `A`
/// (no determinant constraint) through the SVD of `Σ yᵢ xᵢᵀ`.
pub fn fit_isometry(fiber: &FiberSample) -> Result<FittedIsometry> {
    let Some(first) = fiber.points.first() else {
        return Err(Error::Degenerate("empty fiber".into()));
    };
    let dim = first.first.coords().len();
    if fiber.points.len() < dim {
        return Err(Error::Degenerate(format!(
            "{} points cannot determine an isometry of R^{dim}",
            fiber.points.len()
        )));
    }
    let mut cov = Matrix::zeros(dim, dim);
    for q in &fiber.points {
        let (x, y) = (q.first.coords(), q.second.coords());
        for i in 0..dim {
            for j in 0..dim {
                cov[(i, j)] += y[i] * x[j];
            }
        }
    }
    let svd = linalg::svd(&cov);
    let smax = svd.sigma[0];
    let smin = *svd.sigma.last().unwrap();
    if !(smax > 0.0) || smin <= PROCRUSTES_RANK_TOL * smax {
        return Err(Error::Degenerate(format!(
            "cross-covariance is rank deficient (σ_min/σ_max = {:e})",
            smin / smax
        )));
    }
    let matrix = svd.u.matmul(&svd.v.transpose());
    let residual = fiber
        .points
        .iter()
        .map(|q| {
            norm(&linalg::sub(
                &matrix.mul_vec(q.first.coords()),
                q.second.coords(),
            ))
        })
        .fold(0.0, f64::max);
    Ok(FittedIsometry { matrix, residual })
}

/// Point-to-fiber distances between two fibers.
#[derive(Clone, Debug, Serialize)]
pub struct ParallelReport {
    /// `d(p_A, p_B) / √2`.
    pub expected: f64,
    pub distances: Vec<f64>,
    /// `max |distance − expected|`.
    pub deviation: f64,
    /// Tolerance appropriate for the density of the target fiber.
    pub tolerance: f64,
    pub warning: Option<String>,
}

impl ParallelReport {
    pub fn passes(&self) -> bool {
        self.deviation <= self.tolerance
    }
}

/// Density at which the parallelism check runs at its nominal tolerance.
pub const PARALLEL_MIN_DENSITY: usize = 1000;
pub const PARALLEL_TOL: f64 = 1e-4;

/// Distance from each point of `fiber_a` to the set `fiber_b`, by grid
/// minimum over the samples followed by local descent along the isometry
/// graph fitted to `fiber_b`.
pub fn check_parallel(
    fiber_a: &FiberSample,
    fiber_b: &FiberSample,
    p_a: &SpherePoint,
    p_b: &SpherePoint,
) -> Result<ParallelReport> {
    if fiber_b.is_empty() {
        return Err(Error::Degenerate("target fiber is empty".into()));
    }
    let expected = geo_dist(p_a, p_b)? / SQRT_2;
    let mut warning = None;
    let mut tolerance = PARALLEL_TOL;
    if fiber_b.len() < PARALLEL_MIN_DENSITY {
        tolerance = PARALLEL_TOL * PARALLEL_MIN_DENSITY as f64 / fiber_b.len() as f64;
        warning = Some(format!(
            "sparse target fiber ({} < {PARALLEL_MIN_DENSITY} points); tolerance widened to {tolerance:e}",
            fiber_b.len()
        ));
    }
    let graph = fit_isometry(fiber_b).ok().filter(|g| g.accepts(1e-8));
    if graph.is_none() {
        warning = Some("target fiber is not an isometry graph; no local refinement".into());
    }
    let distances: Vec<f64> = fiber_a
        .points
        .par_iter()
        .map(|a| point_to_fiber(a, fiber_b, graph.as_ref()))
        .collect::<Result<_>>()?;
    let deviation = distances
        .iter()
        .map(|d| (d - expected).abs())
        .fold(0.0, f64::max);
    Ok(ParallelReport {
        expected,
        distances,
        deviation,
        tolerance,
        warning,
    })
}

/// `d(a, F)` for a sampled fiber `F`, refined along its isometry graph.
pub fn point_to_fiber(
    a: &ProductPoint,
    fiber: &FiberSample,
    graph: Option<&FittedIsometry>,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut best_x = &fiber.points[0].first;
    for q in &fiber.points {
        let d = product_dist(a, q)?;
        if d < best {
            best = d;
            best_x = &q.first;
        }
    }
    let Some(graph) = graph else {
        return Ok(best);
    };
    Ok(best.min(refine_on_graph(a, best_x.coords(), &graph.matrix)))
}

/// Minimizes `d(a₁, x)² + d(a₂, A x)²` over `x ∈ Sⁿ` by Riemannian gradient
/// descent from `x0`; returns the square root of the minimum.
fn refine_on_graph(a: &ProductPoint, x0: &[f64], graph: &Matrix) -> f64 {
    let (a1, a2) = (a.first.coords(), a.second.coords());
    let objective = |x: &[f64]| {
        let d1 = angle(a1, x);
        let d2 = angle(a2, &graph.mul_vec(x));
        d1 * d1 + d2 * d2
    };
    let at = graph.transpose();
    let mut x = x0.to_vec();
    let mut f = objective(&x);
    let mut alpha: f64 = 0.5;
    for _ in 0..200 {
        let hx = graph.mul_vec(&x);
        let g1 = log_or_zero(&x, a1);
        let g2 = at.mul_vec(&log_or_zero(&hx, a2));
        // Riemannian gradient −2(log_x a₁ + Aᵀ log_{Ax} a₂), projected
        let mut g: Vec<f64> = g1.iter().zip(&g2).map(|(u, v)| -2.0 * (u + v)).collect();
        let ip = dot(&g, &x);
        g.iter_mut().zip(&x).for_each(|(gi, xi)| *gi -= ip * xi);
        let gnorm = norm(&g);
        if gnorm < 1e-14 {
            break;
        }
        let dir: Vec<f64> = g.iter().map(|c| -c / gnorm).collect();
        alpha = (alpha * 2.0).min(1.0);
        let mut moved = false;
        while alpha > 1e-16 {
            let trial = crate::sphere::exp_unit(&x, &dir, alpha * gnorm);
            let ft = objective(&trial);
            if ft <= f - 1e-4 * alpha * gnorm * gnorm {
                let r = norm(&trial);
                x = trial.into_iter().map(|c| c / r).collect();
                f = ft;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    f.max(0.0).sqrt()
}

fn log_or_zero(x: &[f64], y: &[f64]) -> Vec<f64> {
    let theta = angle(x, y);
    let ip = dot(x, y);
    let w: Vec<f64> = y.iter().zip(x).map(|(b, a)| b - ip * a).collect();
    let r = norm(&w);
    if theta == 0.0 || r < 1e-15 {
        return vec![0.0; x.len()];
    }
    w.into_iter().map(|c| c * theta / r).collect()
}

/// Smallest product distance over all pairs of sampled points.
pub fn min_pair_distance(a: &FiberSample, b: &FiberSample) -> Result<f64> {
    a.points
        .par_iter()
        .map(|p| {
            b.points
                .iter()
                .map(|q| product_dist(p, q))
                .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))
        })
        .try_reduce(|| f64::INFINITY, |x, y| Ok(x.min(y)))
}

/// Tolerance on `|z₁|² + |z₂|² = 2` for Hopf inputs.
pub const HOPF_INPUT_TOL: f64 = 1e-10;

fn hopf_point(z1: &Element, z2: &Element) -> Result<(Level, Vec<f64>)> {
    if z1.level() != z2.level() {
        return Err(Error::LevelMismatch {
            left: z1.level().index(),
            right: z2.level().index(),
        });
    }
    let r2 = z1.norm_sqr() + z2.norm_sqr();
    if (r2 - 2.0).abs() > HOPF_INPUT_TOL {
        return Err(Error::OffSphere {
            norm: r2.sqrt(),
            radius: SQRT_2,
        });
    }
    let mut p = z1.coords().to_vec();
    p.extend_from_slice(z2.coords());
    Ok((z1.level(), p))
}

/// Scaled Hopf map `√2·S²ⁿ⁺¹ → Sⁿ⁺¹`, `(z₁, z₂) ↦ (z₁ z₂, (|z₁|² − |z₂|²)/2)`.
pub fn hopf_eval(z1: &Element, z2: &Element) -> Result<SpherePoint> {
    let (level, p) = hopf_point(z1, z2)?;
    SpherePoint::normalize(SphereMap::hopf(level).eval_unchecked(&p))
}

/// Unnormalized Hopf image, for checking `|m̃| = 1` directly.
pub fn hopf_raw(z1: &Element, z2: &Element) -> Result<Vec<f64>> {
    let (level, p) = hopf_point(z1, z2)?;
    Ok(SphereMap::hopf(level).eval_unchecked(&p))
}

/// Singular values of the finite-difference differential of the Hopf map on
/// the orthonormal tangent frame of `√2·S²ⁿ⁺¹`; one value per domain
/// direction (`2n + 1` of them), in decreasing order.
pub fn hopf_singular_values(z1: &Element, z2: &Element) -> Result<Vec<f64>> {
    let (level, p) = hopf_point(z1, z2)?;
    let d = SphereMap::hopf(level).differential(
        &p,
        DiffMode::FiniteDifference {
            step: DEFAULT_FD_STEP,
        },
    )?;
    Ok(linalg::singular_values(&d))
}

/// Arc of the circle through `y₁` and `y₂` that leaves `y₁` with unit
/// velocity direction `X`. The circle is the intersection of `Sⁿ` with the
/// affine plane through `y₁` spanned by `X` and `y₂ − y₁`.
#[derive(Clone, Debug)]
pub struct CircleArc {
    center: Vec<f64>,
    radius: f64,
    /// Unit vector from `y₁` toward the circle's center.
    inward: Vec<f64>,
    tangent: Vec<f64>,
    /// Angle swept around the center, in `(0, 2π]`.
    sweep: f64,
}

impl CircleArc {
    /// Builds the arc; `y₂ = y₁` yields the full great circle in
    /// `span{y₁, X}`.
    pub fn new(y1: &SpherePoint, y2: &SpherePoint, x: &TangentVector) -> Result<Self> {
        let (p, q, t) = (y1.coords(), y2.coords(), x.vec());
        if p.len() != q.len() || p.len() != t.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: q.len().max(t.len()),
            });
        }
        let ip = dot(p, t);
        if ip.abs() > TANGENT_TOL || (norm(t) - 1.0).abs() > TANGENT_TOL {
            return Err(Error::NotTangent(ip));
        }
        let qt = dot(q, t);
        let w: Vec<f64> = q
            .iter()
            .zip(t)
            .zip(p)
            .map(|((qi, ti), pi)| qi - qt * ti - pi)
            .collect();
        let wn = norm(&w);
        let (inward, radius) = if wn < 1e-14 {
            (p.iter().map(|c| -c).collect::<Vec<_>>(), 1.0)
        } else {
            let u: Vec<f64> = w.iter().map(|c| c / wn).collect();
            let rho = -dot(p, &u);
            (u, rho)
        };
        let center: Vec<f64> = p
            .iter()
            .zip(&inward)
            .map(|(pi, ui)| pi + radius * ui)
            .collect();
        let sweep = if wn < 1e-14 {
            TAU
        } else {
            let rel = linalg::sub(q, &center);
            let phi = dot(&rel, t).atan2(-dot(&rel, &inward)).rem_euclid(TAU);
            if phi == 0.0 {
                TAU
            } else {
                phi
            }
        };
        Ok(Self {
            center,
            radius,
            inward,
            tangent: t.to_vec(),
            sweep,
        })
    }

    /// Constant-speed parametrization over `s ∈ [0, 1]`.
    pub fn at(&self, s: f64) -> Vec<f64> {
        let phi = s * self.sweep;
        let (c, sn) = (phi.cos(), phi.sin());
        let v: Vec<f64> = self
            .center
            .iter()
            .zip(&self.inward)
            .zip(&self.tangent)
            .map(|((ci, ui), ti)| ci + self.radius * (-ui * c + ti * sn))
            .collect();
        let r = norm(&v);
        v.into_iter().map(|x| x / r).collect()
    }

    pub fn length(&self) -> f64 {
        self.radius * self.sweep
    }

    /// Length of the other arc of the same circle (direction `−X`).
    pub fn complement_length(&self) -> f64 {
        self.radius * (TAU - self.sweep)
    }

    pub fn circle_radius(&self) -> f64 {
        self.radius
    }
}

/// Sampled arc `α_X` from `y₁` to `y₂`.
#[derive(Clone, Debug)]
pub struct ArcTrace {
    pub arc: CircleArc,
    pub points: Vec<SpherePoint>,
}

impl ArcTrace {
    pub fn length(&self) -> f64 {
        self.arc.length()
    }

    /// Sum of geodesic distances between consecutive samples.
    pub fn polyline_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| angle(w[0].coords(), w[1].coords()))
            .sum()
    }
}

pub fn arc_alpha(
    y1: &SpherePoint,
    y2: &SpherePoint,
    x: &TangentVector,
    samples: usize,
) -> Result<ArcTrace> {
    if samples < 2 {
        return Err(Error::InvalidArgument(
            "an arc needs at least two samples".into(),
        ));
    }
    let arc = CircleArc::new(y1, y2, x)?;
    let points = (0..samples)
        .map(|k| SpherePoint::normalize(arc.at(k as f64 / (samples - 1) as f64)))
        .collect::<Result<_>>()?;
    Ok(ArcTrace { arc, points })
}

/// One curve `γ_X(t) = (β(t), α_X(t))` of the cycle.
#[derive(Clone, Debug)]
pub struct CycleCurve {
    pub direction: TangentVector,
    pub alpha: CircleArc,
    /// Samples on the common `t` grid.
    pub points: Vec<ProductPoint>,
    pub alpha_length: f64,
    pub beta_length: f64,
    /// Numerically integrated length of `γ_X`.
    pub gamma_length: f64,
}

/// Sampled surface `S = {γ_X(t)}` over directions `X ∈ U_{y₁}Sⁿ`.
#[derive(Clone, Debug)]
pub struct CycleSurface {
    pub start: ProductPoint,
    pub end: ProductPoint,
    pub t_grid: Vec<f64>,
    pub curves: Vec<CycleCurve>,
    /// Covering radius of the direction set on `U_{y₁}Sⁿ` (estimated).
    pub direction_mesh: f64,
    /// Largest spacing between consecutive samples along a curve.
    pub arc_mesh: f64,
}

impl CycleSurface {
    /// Mesh size of the sampled surface.
    pub fn mesh(&self) -> f64 {
        self.direction_mesh.max(self.arc_mesh)
    }

    /// Bound `√((2π − d(y₁,y₂))² + d(x₁,x₂)²)` on every `ℓ(γ_X)`.
    pub fn length_bound(&self) -> f64 {
        let dx = angle(self.start.first.coords(), self.end.first.coords());
        let dy = angle(self.start.second.coords(), self.end.second.coords());
        (TAU - dy).hypot(dx)
    }

    pub fn points(&self) -> impl Iterator<Item = &ProductPoint> {
        self.curves.iter().flat_map(|c| c.points.iter())
    }
}

/// Subdivisions used for the numerical length of each `γ_X`.
const LENGTH_SUBDIVISIONS: usize = 2048;

/// Builds the cycle between two points. For `n = 1`, `U_{y₁}S¹ = {±X}` and
/// both directions are used; for larger `n`, `grid_u` seeded uniform unit
/// tangent directions are drawn.
pub fn build_cycle(
    start: &ProductPoint,
    end: &ProductPoint,
    grid_u: usize,
    grid_t: usize,
    seed: u64,
) -> Result<CycleSurface> {
    if grid_u < 2 || grid_t < 2 {
        return Err(Error::InvalidArgument(
            "cycle grid sizes must be at least 2".into(),
        ));
    }
    let (x1, y1) = (&start.first, &start.second);
    let (x2, y2) = (&end.first, &end.second);
    if x1.dim() != x2.dim() || y1.dim() != y2.dim() || x1.dim() != y1.dim() {
        return Err(Error::DimensionMismatch {
            expected: x1.dim(),
            got: x2.dim(),
        });
    }
    // fail early on antipodal x's
    geodesic(x1, x2, 0.5)?;
    let n = y1.dim();
    let directions: Vec<TangentVector> = if n == 1 {
        let t = tangent_basis(y1).remove(0);
        let neg = t.vec().iter().map(|c| -c).collect();
        vec![t.clone(), TangentVector::new(y1.clone(), neg)?]
    } else {
        let mut rng = rng_for(seed, 0);
        (0..grid_u)
            .map(|_| random_unit_tangent(y1, &mut rng))
            .collect()
    };
    let direction_mesh = if n == 1 {
        0.0
    } else {
        direction_covering_radius(&directions, seed)
    };
    let t_grid: Vec<f64> = (0..grid_t)
        .map(|k| k as f64 / (grid_t - 1) as f64)
        .collect();
    let beta_length = geo_dist(x1, x2)?;

    let curves: Vec<CycleCurve> = directions
        .par_iter()
        .map(|dir| {
            let alpha = CircleArc::new(y1, y2, dir)?;
            let gamma = |t: f64| -> Result<ProductPoint> {
                ProductPoint::new(geodesic(x1, x2, t)?, SpherePoint::normalize(alpha.at(t))?)
            };
            let points = t_grid
                .iter()
                .map(|&t| gamma(t))
                .collect::<Result<Vec<_>>>()?;
            let gamma_length = richardson_length(&gamma)?;
            Ok(CycleCurve {
                direction: dir.clone(),
                alpha_length: alpha.length(),
                alpha,
                points,
                beta_length,
                gamma_length,
            })
        })
        .collect::<Result<_>>()?;

    let arc_mesh = curves
        .iter()
        .flat_map(|c| c.points.windows(2).map(|w| product_dist(&w[0], &w[1])))
        .try_fold(0.0_f64, |acc, d| d.map(|d| acc.max(d)))?;

    Ok(CycleSurface {
        start: start.clone(),
        end: end.clone(),
        t_grid,
        curves,
        direction_mesh,
        arc_mesh,
    })
}

/// Polyline length of a curve on `Sⁿ × Sⁿ` with one Richardson step, so the
/// `O(h²)` chord error of the polyline cancels.
fn richardson_length<F>(gamma: &F) -> Result<f64>
where
    F: Fn(f64) -> Result<ProductPoint>,
{
    let polyline = |k: usize| -> Result<f64> {
        let mut prev = gamma(0.0)?;
        let mut total = 0.0;
        for i in 1..=k {
            let cur = gamma(i as f64 / k as f64)?;
            total += product_dist(&prev, &cur)?;
            prev = cur;
        }
        Ok(total)
    };
    let coarse = polyline(LENGTH_SUBDIVISIONS / 2)?;
    let fine = polyline(LENGTH_SUBDIVISIONS)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Largest angle from a probe direction to the nearest sampled direction,
/// over seeded uniform probes of the unit tangent sphere.
fn direction_covering_radius(directions: &[TangentVector], seed: u64) -> f64 {
    let base = directions[0].base();
    let probes = 200 * directions.len();
    let mut rng = rng_for(seed, 1);
    (0..probes)
        .map(|_| {
            let probe = random_unit_tangent(base, &mut rng);
            directions
                .iter()
                .map(|d| angle(d.vec(), probe.vec()))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct ProbeResult {
    pub min_residual: f64,
    pub argmin: ProductPoint,
}

/// Minimum of `d(f(q), p′)` over the sampled cycle.
pub fn cycle_intersection_probe(
    cycle: &CycleSurface,
    map: &SphereMap,
    target: &SpherePoint,
) -> Result<ProbeResult> {
    let mut best: Option<(f64, &ProductPoint)> = None;
    for q in cycle.points() {
        let image = map.eval(&q.to_ambient())?;
        let r = angle(&image, target.coords());
        if best.is_none_or(|(b, _)| r < b) {
            best = Some((r, q));
        }
    }
    let (min_residual, q) = best.ok_or_else(|| Error::Degenerate("empty cycle".into()))?;
    Ok(ProbeResult {
        min_residual,
        argmin: q.clone(),
    })
}
