//! Round spheres `Sⁿ ⊂ Rⁿ⁺¹`, their products, and scaled copies.
//!
//! Distances are intrinsic (great-circle) distances. The angle between two
//! unit vectors is computed as `2·atan2(|a - b|, |a + b|)`, which keeps full
//! relative precision both for nearly equal and nearly antipodal points where
//! `acos` of a clamped inner product loses half the significant digits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::algebra::{Element, Level};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Tolerance for accepting a vector as a unit vector.
pub const UNIT_TOL: f64 = 1e-10;

/// Tolerance for accepting a vector as tangent.
pub const TANGENT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    /// Accepts coordinates within [`UNIT_TOL`] of the unit sphere and
    /// renormalizes them.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let r = norm(&coords);
        if coords.is_empty() || (r - 1.0).abs() > UNIT_TOL {
            return Err(Error::OffSphere {
                norm: r,
                radius: 1.0,
            });
        }
        Ok(Self::normalized_unchecked(coords, r))
    }

    /// Projects a nonzero vector radially onto the sphere.
    pub fn normalize(coords: Vec<f64>) -> Result<Self> {
        let r = norm(&coords);
        if coords.is_empty() || r == 0.0 || !r.is_finite() {
            return Err(Error::OffSphere {
                norm: r,
                radius: 1.0,
            });
        }
        Ok(Self::normalized_unchecked(coords, r))
    }

    fn normalized_unchecked(mut coords: Vec<f64>, r: f64) -> Self {
        if r != 1.0 {
            coords.iter_mut().for_each(|c| *c /= r);
        }
        Self { coords }
    }

    /// Coordinate unit vector `e_i` of `Sⁿ` (zero-based index).
    pub fn basis(n: usize, i: usize) -> Self {
        let mut coords = vec![0.0; n + 1];
        coords[i] = 1.0;
        Self { coords }
    }

    pub fn from_element(e: &Element) -> Result<Self> {
        Self::new(e.coords().to_vec())
    }

    pub fn to_element(&self) -> Result<Element> {
        Element::from_coords(&self.coords)
    }

    /// Sphere dimension `n`.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn antipode(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: SpherePoint,
    vec: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: SpherePoint, vec: Vec<f64>) -> Result<Self> {
        if vec.len() != base.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: base.coords.len(),
                got: vec.len(),
            });
        }
        let ip = dot(base.coords(), &vec);
        if ip.abs() > TANGENT_TOL * norm(&vec).max(1.0) {
            return Err(Error::NotTangent(ip));
        }
        Ok(Self { base, vec })
    }

    pub fn base(&self) -> &SpherePoint {
        &self.base
    }

    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    pub fn norm(&self) -> f64 {
        norm(&self.vec)
    }
}

/// A point of `Sⁿ × Sⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductPoint {
    pub first: SpherePoint,
    pub second: SpherePoint,
}

impl ProductPoint {
    pub fn new(first: SpherePoint, second: SpherePoint) -> Result<Self> {
        if first.dim() != second.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                got: second.dim(),
            });
        }
        Ok(Self { first, second })
    }

    pub fn dim(&self) -> usize {
        self.first.dim()
    }

    /// Concatenated coordinates `(x, y) ∈ R²ⁿ⁺²`; a point of `√2·S²ⁿ⁺¹`.
    pub fn to_ambient(&self) -> Vec<f64> {
        let mut v = self.first.coords.clone();
        v.extend_from_slice(&self.second.coords);
        v
    }

    pub fn from_ambient(v: &[f64]) -> Result<Self> {
        if !v.len().is_multiple_of(2) || v.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: v.len() + 1,
                got: v.len(),
            });
        }
        let h = v.len() / 2;
        Self::new(
            SpherePoint::new(v[..h].to_vec())?,
            SpherePoint::new(v[h..].to_vec())?,
        )
    }
}

/// Angle between two unit vectors, in `[0, π]`.
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

pub fn geo_dist(a: &SpherePoint, b: &SpherePoint) -> Result<f64> {
    check_dims(a, b)?;
    Ok(angle(&a.coords, &b.coords))
}

pub fn product_dist(p: &ProductPoint, q: &ProductPoint) -> Result<f64> {
    let d1 = geo_dist(&p.first, &q.first)?;
    let d2 = geo_dist(&p.second, &q.second)?;
    Ok(d1.hypot(d2))
}

fn check_dims(a: &SpherePoint, b: &SpherePoint) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Seeded generator for stream `stream` of `seed`. Streams are independent,
/// which lets parallel estimators split work by counter without changing the
/// result.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform point of `Sⁿ` from a normalized standard Gaussian vector.
pub fn random_point<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> SpherePoint {
    loop {
        let v: Vec<f64> = (0..=n).map(|_| StandardNormal.sample(rng)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return SpherePoint::normalized_unchecked(v, r);
        }
    }
}

/// Uniform unit tangent vector at `x`.
pub fn random_unit_tangent<R: rand::Rng + ?Sized>(x: &SpherePoint, rng: &mut R) -> TangentVector {
    loop {
        let mut v: Vec<f64> = (0..x.coords.len())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let ip = dot(&v, &x.coords);
        v.iter_mut()
            .zip(&x.coords)
            .for_each(|(vi, xi)| *vi -= ip * xi);
        let r = norm(&v);
        if r > 1e-9 {
            v.iter_mut().for_each(|c| *c /= r);
            // re-project once more to push the inner product to rounding level
            let ip = dot(&v, &x.coords);
            v.iter_mut()
                .zip(&x.coords)
                .for_each(|(vi, xi)| *vi -= ip * xi);
            return TangentVector {
                base: x.clone(),
                vec: v,
            };
        }
    }
}

/// `count` i.i.d. uniform points of `Sⁿ`, reproducible for a fixed seed.
pub fn sample_sphere(n: usize, count: usize, seed: u64) -> Vec<SpherePoint> {
    sample_sphere_stream(n, count, seed, 0)
}

pub fn sample_sphere_stream(n: usize, count: usize, seed: u64, stream: u64) -> Vec<SpherePoint> {
    let mut rng = rng_for(seed, stream);
    (0..count).map(|_| random_point(n, &mut rng)).collect()
}

/// Seeded uniform unit elements of the algebra at `level`.
pub fn sample_units(level: Level, count: usize, seed: u64) -> Vec<Element> {
    sample_sphere(level.sphere_dim(), count, seed)
        .iter()
        .map(|p| p.to_element().expect("sphere dimension matches level"))
        .collect()
}

/// Orthonormal basis of `T_x Sⁿ` by Gram–Schmidt over the coordinate
/// vectors, skipping the one most parallel to `x`.
pub fn tangent_basis(x: &SpherePoint) -> Vec<TangentVector> {
    orthonormal_complement(&x.coords)
        .into_iter()
        .map(|vec| TangentVector {
            base: x.clone(),
            vec,
        })
        .collect()
}

/// Orthonormal basis (as raw vectors) of the complement of a unit vector.
pub(crate) fn orthonormal_complement(x: &[f64]) -> Vec<Vec<f64>> {
    let dim = x.len();
    let skip = (0..dim)
        .max_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs()))
        .unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim.saturating_sub(1));
    for j in (0..dim).filter(|&j| j != skip) {
        let mut v = vec![0.0; dim];
        v[j] = 1.0;
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            let ip = dot(&v, x);
            v.iter_mut().zip(x).for_each(|(vi, xi)| *vi -= ip * xi);
            for b in &basis {
                let ip = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= ip * bi);
            }
        }
        let r = norm(&v);
        v.iter_mut().for_each(|c| *c /= r);
        basis.push(v);
    }
    basis
}

/// Point reached from `x` after arc length `t` along the great circle with
/// unit initial direction `dir`.
pub(crate) fn exp_unit(x: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    let (c, s) = (t.cos(), t.sin());
    x.iter().zip(dir).map(|(a, b)| c * a + s * b).collect()
}

/// Riemannian logarithm: tangent vector at `x` of length `d(x, y)` pointing
/// along the shortest geodesic to `y`. Zero when `x == y`.
pub fn log_map(x: &SpherePoint, y: &SpherePoint) -> Result<Vec<f64>> {
    check_dims(x, y)?;
    let theta = angle(&x.coords, &y.coords);
    let ip = dot(&x.coords, &y.coords);
    let mut w: Vec<f64> = y
        .coords
        .iter()
        .zip(&x.coords)
        .map(|(b, a)| b - ip * a)
        .collect();
    if std::f64::consts::PI - theta < 1e-12 {
        return Err(Error::Antipodal);
    }
    let r = norm(&w);
    if theta == 0.0 || r == 0.0 {
        return Ok(vec![0.0; w.len()]);
    }
    w.iter_mut().for_each(|c| *c *= theta / r);
    Ok(w)
}

/// Constant-speed shortest geodesic (slerp) from `a` to `b`.
pub fn geodesic(a: &SpherePoint, b: &SpherePoint, t: f64) -> Result<SpherePoint> {
    let v = log_map(a, b)?;
    let theta = norm(&v);
    if theta == 0.0 {
        return Ok(a.clone());
    }
    let dir: Vec<f64> = v.iter().map(|c| c / theta).collect();
    SpherePoint::normalize(exp_unit(&a.coords, &dir, t * theta))
}
