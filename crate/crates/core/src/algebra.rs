//! Cayley–Dickson doubling of the reals up to the octonions.
//!
//! An element at level `k` carries `2^k` real coordinates. The product is
//! defined recursively on halves by
//!
//! ```text
//! (p, q)(r, s) = (p r - conj(s) q,  s p + q conj(r))
//! ```
//!
//! bottoming out in real multiplication at level 0. With this convention the
//! quaternion units satisfy `i j = k`, and every level up to 3 is a normed
//! division algebra: `|a b| = |a| |b|`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest coordinate count (octonions).
pub const MAX_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Real,
    Complex,
    Quaternion,
    Octonion,
}

impl Level {
    /// The three levels whose unit spheres are S¹, S³, S⁷.
    pub const SPHERES: [Level; 3] = [Level::Complex, Level::Quaternion, Level::Octonion];

    pub fn new(k: usize) -> Result<Self> {
        match k {
            0 => Ok(Level::Real),
            1 => Ok(Level::Complex),
            2 => Ok(Level::Quaternion),
            3 => Ok(Level::Octonion),
            _ => Err(Error::InvalidLevel(k)),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of real coordinates, `2^level`.
    pub fn dim(self) -> usize {
        1 << self.index()
    }

    /// Dimension `n` of the unit sphere `Sⁿ` inside the algebra.
    pub fn sphere_dim(self) -> usize {
        self.dim() - 1
    }

    /// Inverse of [`Level::dim`].
    pub fn from_dim(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(Level::Real),
            2 => Ok(Level::Complex),
            4 => Ok(Level::Quaternion),
            8 => Ok(Level::Octonion),
            _ => Err(Error::DimensionMismatch {
                expected: 8,
                got: dim,
            }),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Level::Real => "real",
            Level::Complex => "complex",
            Level::Quaternion => "quaternion",
            Level::Octonion => "octonion",
        };
        f.write_str(name)
    }
}

/// A value in the level-`k` Cayley–Dickson algebra.
#[derive(Clone, Copy, PartialEq)]
pub struct Element {
    level: Level,
    coords: [f64; MAX_DIM],
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Element")
            .field("level", &self.level)
            .field("coords", &self.coords())
            .finish()
    }
}

impl Element {
    pub fn from_slice(level: Level, coords: &[f64]) -> Result<Self> {
        if coords.len() != level.dim() {
            return Err(Error::CoordCount {
                expected: level.dim(),
                got: coords.len(),
            });
        }
        let mut buf = [0.0; MAX_DIM];
        buf[..coords.len()].copy_from_slice(coords);
        Ok(Self { level, coords: buf })
    }

    /// Infers the level from the coordinate count.
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        Self::from_slice(Level::from_dim(coords.len())?, coords)
    }

    pub fn zero(level: Level) -> Self {
        Self {
            level,
            coords: [0.0; MAX_DIM],
        }
    }

    pub fn one(level: Level) -> Self {
        Self::basis(level, 0)
    }

    /// The `i`-th basis unit `e_i` (`e_0 = 1`).
    pub fn basis(level: Level, i: usize) -> Self {
        assert!(i < level.dim(), "basis index {i} out of range for {level}");
        let mut e = Self::zero(level);
        e.coords[i] = 1.0;
        e
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.level.dim()]
    }

    pub fn real(&self) -> f64 {
        self.coords[0]
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.coords.iter_mut().for_each(|c| *c *= s);
        out
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        norm(self.coords())
    }

    pub fn conj(&self) -> Self {
        let mut out = *self;
        conj_in_place(&mut out.coords[..self.level.dim()]);
        out
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self> {
        if self.level != rhs.level {
            return Err(Error::LevelMismatch {
                left: self.level.index(),
                right: rhs.level.index(),
            });
        }
        let mut out = Self::zero(self.level);
        mul_into(
            self.coords(),
            rhs.coords(),
            &mut out.coords[..self.level.dim()],
        );
        Ok(out)
    }

    pub fn inv(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return Err(Error::ZeroInverse);
        }
        Ok(self.conj().scale(1.0 / n2))
    }

    /// `(a b) c - a (b c)`; identically zero below the octonions.
    pub fn associator(a: &Self, b: &Self, c: &Self) -> Result<Self> {
        let left = a.try_mul(b)?.try_mul(c)?;
        let right = a.try_mul(&b.try_mul(c)?)?;
        Ok(left - right)
    }
}

impl Add for Element {
    type Output = Element;
    fn add(mut self, rhs: Element) -> Element {
        assert_eq!(self.level, rhs.level, "level mismatch in addition");
        for (a, b) in self.coords.iter_mut().zip(rhs.coords) {
            *a += b;
        }
        self
    }
}

impl Sub for Element {
    type Output = Element;
    fn sub(mut self, rhs: Element) -> Element {
        assert_eq!(self.level, rhs.level, "level mismatch in subtraction");
        for (a, b) in self.coords.iter_mut().zip(rhs.coords) {
            *a -= b;
        }
        self
    }
}

impl Neg for Element {
    type Output = Element;
    fn neg(self) -> Element {
        self.scale(-1.0)
    }
}

/// Panics on level mismatch; use [`Element::try_mul`] for a checked product.
impl Mul for Element {
    type Output = Element;
    fn mul(self, rhs: Element) -> Element {
        self.try_mul(&rhs)
            .expect("level mismatch in multiplication")
    }
}

pub fn cd_mul(a: &Element, b: &Element) -> Result<Element> {
    a.try_mul(b)
}

pub fn cd_conj(a: &Element) -> Element {
    a.conj()
}

pub fn cd_norm(a: &Element) -> f64 {
    a.norm()
}

pub fn cd_inv(a: &Element) -> Result<Element> {
    a.inv()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn conj_in_place(v: &mut [f64]) {
    v.iter_mut().skip(1).for_each(|c| *c = -*c);
}

/// Cayley–Dickson product on raw coordinate slices of equal power-of-two
/// length (at most 8). Allocation free.
pub fn mul_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    let n = a.len();
    debug_assert!(n == b.len() && n == out.len() && n.is_power_of_two() && n <= MAX_DIM);
    if n == 1 {
        out[0] = a[0] * b[0];
        return;
    }
    let h = n / 2;
    let (p, q) = a.split_at(h);
    let (r, s) = b.split_at(h);

    let mut s_bar = [0.0; MAX_DIM / 2];
    let mut r_bar = [0.0; MAX_DIM / 2];
    s_bar[..h].copy_from_slice(s);
    r_bar[..h].copy_from_slice(r);
    conj_in_place(&mut s_bar[..h]);
    conj_in_place(&mut r_bar[..h]);

    let mut t1 = [0.0; MAX_DIM / 2];
    let mut t2 = [0.0; MAX_DIM / 2];

    // p r - conj(s) q
    mul_into(p, r, &mut t1[..h]);
    mul_into(&s_bar[..h], q, &mut t2[..h]);
    for i in 0..h {
        out[i] = t1[i] - t2[i];
    }

    // s p + q conj(r)
    mul_into(s, p, &mut t1[..h]);
    mul_into(q, &r_bar[..h], &mut t2[..h]);
    for i in 0..h {
        out[h + i] = t1[i] + t2[i];
    }
}

/// Product of two coordinate slices, returned as a vector.
pub fn mul_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    mul_into(a, b, &mut out);
    out
}

/// Conjugate of a coordinate slice.
pub fn conj_vec(a: &[f64]) -> Vec<f64> {
    let mut out = a.to_vec();
    conj_in_place(&mut out);
    out
}
