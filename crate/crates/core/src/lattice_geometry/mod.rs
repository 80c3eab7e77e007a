//! Integer-lattice geometry: exact vectors, unimodular maps, lattice
//! tetrahedra, orientation predicates, characteristic functions and the
//! splitting of a simplex into signed truncated prisms.

mod chi;
mod prism;

pub use chi::{
    angle_between_exact, chi_convex, chi_point, edge_angle_in_pulled_back_frame,
    segment_chi_average, Halfspace, TetClipper,
};
pub use prism::{chi_signed_prism, split_simplex_into_prisms, PlaneCoeffs, SignedPrism};

use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{LatvolError, Result};
use crate::exact_sums::extended_gcd;

/// A point or direction of `Z³` with arbitrary-precision components.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntVec3(pub [BigInt; 3]);

pub type RatVec3 = [BigRational; 3];

impl IntVec3 {
    pub fn new(x: impl Into<BigInt>, y: impl Into<BigInt>, z: impl Into<BigInt>) -> Self {
        IntVec3([x.into(), y.into(), z.into()])
    }

    pub fn zero() -> Self {
        IntVec3([BigInt::zero(), BigInt::zero(), BigInt::zero()])
    }

    pub fn e3() -> Self {
        IntVec3::new(0, 0, 1)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }

    pub fn dot(&self, other: &IntVec3) -> BigInt {
        &self.0[0] * &other.0[0] + &self.0[1] * &other.0[1] + &self.0[2] * &other.0[2]
    }

    pub fn cross(&self, other: &IntVec3) -> IntVec3 {
        let [a0, a1, a2] = &self.0;
        let [b0, b1, b2] = &other.0;
        IntVec3([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn scale(&self, k: &BigInt) -> IntVec3 {
        IntVec3(self.0.clone().map(|c| c * k))
    }

    /// gcd of the absolute values of the components (0 for the zero vector).
    pub fn content(&self) -> BigInt {
        self.0.iter().fold(BigInt::zero(), |g, c| g.gcd(c))
    }

    pub fn to_f64(&self) -> [f64; 3] {
        self.0.clone().map(|c| c.to_f64().unwrap_or(f64::NAN))
    }

    /// Components as `i64`, if they fit.
    pub fn to_i64(&self) -> Option<[i64; 3]> {
        Some([
            self.0[0].to_i64()?,
            self.0[1].to_i64()?,
            self.0[2].to_i64()?,
        ])
    }

    pub fn to_rational(&self) -> RatVec3 {
        self.0.clone().map(BigRational::from_integer)
    }

    /// `true` when the first nonzero component is negative.
    pub fn is_lex_negative(&self) -> bool {
        self.0
            .iter()
            .find(|c| !c.is_zero())
            .is_some_and(|c| c.is_negative())
    }
}

impl From<[i64; 3]> for IntVec3 {
    fn from(v: [i64; 3]) -> Self {
        IntVec3(v.map(BigInt::from))
    }
}

impl fmt::Display for IntVec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

impl Add for &IntVec3 {
    type Output = IntVec3;
    fn add(self, rhs: &IntVec3) -> IntVec3 {
        IntVec3([
            &self.0[0] + &rhs.0[0],
            &self.0[1] + &rhs.0[1],
            &self.0[2] + &rhs.0[2],
        ])
    }
}

impl Sub for &IntVec3 {
    type Output = IntVec3;
    fn sub(self, rhs: &IntVec3) -> IntVec3 {
        IntVec3([
            &self.0[0] - &rhs.0[0],
            &self.0[1] - &rhs.0[1],
            &self.0[2] - &rhs.0[2],
        ])
    }
}

impl Neg for &IntVec3 {
    type Output = IntVec3;
    fn neg(self) -> IntVec3 {
        IntVec3(self.0.clone().map(|c| -c))
    }
}

/// Integer 3×3 matrix with determinant 1, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnimodularMap {
    rows: [[BigInt; 3]; 3],
}

impl UnimodularMap {
    pub fn identity() -> Self {
        let o = BigInt::one;
        let z = BigInt::zero;
        UnimodularMap {
            rows: [[o(), z(), z()], [z(), o(), z()], [z(), z(), o()]],
        }
    }

    /// Wraps `rows` after checking that the determinant is exactly 1.
    pub fn from_rows(rows: [[BigInt; 3]; 3]) -> Result<Self> {
        let m = UnimodularMap { rows };
        if m.det() != BigInt::one() {
            return Err(LatvolError::InvalidInput(format!(
                "matrix determinant is {}, expected 1",
                m.det()
            )));
        }
        Ok(m)
    }

    pub fn rows(&self) -> &[[BigInt; 3]; 3] {
        &self.rows
    }

    pub fn det(&self) -> BigInt {
        let m = &self.rows;
        &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1])
            - &m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])
            + &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0])
    }

    pub fn apply(&self, v: &IntVec3) -> IntVec3 {
        IntVec3(std::array::from_fn(|i| {
            &self.rows[i][0] * &v.0[0] + &self.rows[i][1] * &v.0[1] + &self.rows[i][2] * &v.0[2]
        }))
    }

    pub fn column(&self, j: usize) -> IntVec3 {
        IntVec3(std::array::from_fn(|i| self.rows[i][j].clone()))
    }

    pub fn compose(&self, rhs: &UnimodularMap) -> UnimodularMap {
        UnimodularMap {
            rows: std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    (0..3).fold(BigInt::zero(), |acc, k| acc + &self.rows[i][k] * &rhs.rows[k][j])
                })
            }),
        }
    }

    /// Exact inverse; the adjugate, since the determinant is 1.
    pub fn inverse(&self) -> UnimodularMap {
        let m = &self.rows;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            &m[r0][c0] * &m[r1][c1] - &m[r0][c1] * &m[r1][c0]
        };
        UnimodularMap {
            rows: [
                [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
                [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
                [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
            ],
        }
    }

    /// Largest absolute entry.
    pub fn max_abs_entry(&self) -> BigInt {
        self.rows
            .iter()
            .flatten()
            .map(|e| e.abs())
            .max()
            .unwrap_or_default()
    }
}

/// Builds an integer map `M` with `det M = 1` and `M·r = e₃`.
///
/// `M = [[r₃, 0, −g₁₂], [0, 1, 0], [c₃, 0, d₃]] · [[c₁₂, d₁₂, 0], [−r₂/g₁₂, r₁/g₁₂, 0], [0, 0, 1]]`
/// with `r₁c₁₂ + r₂d₁₂ = g₁₂ = gcd(r₁, r₂)` and `g₁₂c₃ + r₃d₃ = 1`.
pub fn unimodular_to_e3(r: &IntVec3) -> Result<UnimodularMap> {
    if r.is_zero() {
        return Err(LatvolError::ZeroDirection);
    }
    if !r.content().is_one() {
        return Err(LatvolError::NonPrimitiveDirection(r.to_string()));
    }
    let [r1, r2, r3] = &r.0;
    let z = BigInt::zero;
    let o = BigInt::one;
    if r1.is_zero() && r2.is_zero() {
        // r = ±e₃
        let s = r3.signum();
        return UnimodularMap::from_rows([[o(), z(), z()], [z(), s.clone(), z()], [z(), z(), s]]);
    }
    let b12 = extended_gcd(r1, r2);
    let b3 = extended_gcd(&b12.g, r3);
    debug_assert!(b3.g.is_one());
    let g12 = &b12.g;
    let outer = UnimodularMap {
        rows: [
            [r3.clone(), z(), -g12],
            [z(), o(), z()],
            [b3.c.clone(), z(), b3.d.clone()],
        ],
    };
    let inner = UnimodularMap {
        rows: [
            [b12.c.clone(), b12.d.clone(), z()],
            [-(r2 / g12), r1 / g12, z()],
            [z(), z(), o()],
        ],
    };
    let m = outer.compose(&inner);
    debug_assert!(m.det().is_one());
    debug_assert_eq!(m.apply(r), IntVec3::e3());
    Ok(m)
}

/// Tetrahedron with integer vertices. Any orientation, possibly degenerate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeTet(pub [IntVec3; 4]);

impl LatticeTet {
    pub fn from_i64(v: [[i64; 3]; 4]) -> Self {
        LatticeTet(v.map(IntVec3::from))
    }

    pub fn vertices(&self) -> &[IntVec3; 4] {
        &self.0
    }

    /// `det(B − A, C − A, D − A)`, i.e. six times the signed volume.
    pub fn det6(&self) -> BigInt {
        let [a, b, c, d] = &self.0;
        let (u, v, w) = (b - a, c - a, d - a);
        u.dot(&v.cross(&w))
    }

    pub fn orientation(&self) -> i8 {
        sign_of(&self.det6())
    }

    pub fn is_degenerate(&self) -> bool {
        self.det6().is_zero()
    }

    pub fn volume(&self) -> f64 {
        self.det6().abs().to_f64().unwrap_or(f64::INFINITY) / 6.0
    }

    /// Same tetrahedron with vertices reordered to positive orientation.
    pub fn positively_oriented(&self) -> LatticeTet {
        if self.orientation() < 0 {
            let [a, b, c, d] = self.0.clone();
            LatticeTet([b, a, c, d])
        } else {
            self.clone()
        }
    }

    pub fn translate(&self, z: &IntVec3) -> LatticeTet {
        LatticeTet(self.0.clone().map(|v| &v + z))
    }

    pub fn map(&self, m: &UnimodularMap) -> LatticeTet {
        LatticeTet(self.0.clone().map(|v| m.apply(&v)))
    }

    pub fn scale(&self, s: &BigInt) -> LatticeTet {
        LatticeTet(self.0.clone().map(|v| v.scale(s)))
    }

    /// Largest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..4 {
            for j in i + 1..4 {
                let d = (&self.0[i] - &self.0[j]).to_f64();
                best = best.max((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
            }
        }
        best
    }
}

/// Segment with exact rational endpoints, parameterized by `λ ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment3 {
    pub start: RatVec3,
    pub end: RatVec3,
}

impl Segment3 {
    pub fn new(start: RatVec3, end: RatVec3) -> Self {
        Segment3 { start, end }
    }

    /// The lattice bond `(x, x + r)`.
    pub fn bond(x: &IntVec3, r: &IntVec3) -> Self {
        Segment3 {
            start: x.to_rational(),
            end: (x + r).to_rational(),
        }
    }

    pub fn direction(&self) -> RatVec3 {
        std::array::from_fn(|i| &self.end[i] - &self.start[i])
    }

    pub fn point_at(&self, lambda: &BigRational) -> RatVec3 {
        std::array::from_fn(|i| &self.start[i] + lambda * (&self.end[i] - &self.start[i]))
    }

    pub fn translate(&self, z: &IntVec3) -> Segment3 {
        let zr = z.to_rational();
        Segment3 {
            start: std::array::from_fn(|i| &self.start[i] + &zr[i]),
            end: std::array::from_fn(|i| &self.end[i] + &zr[i]),
        }
    }
}

pub(crate) fn sign_of(v: &BigInt) -> i8 {
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

fn rat_sign(v: &BigRational) -> i8 {
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

/// Orientation of `d + 1` points of `Q^d`, `d ∈ {1, 2, 3}`: the sign of
/// `det(X₂ − X₁, …, X_{d+1} − X₁)`.
pub fn orientation(points: &[Vec<BigRational>]) -> Result<i8> {
    let d = points.len().checked_sub(1).unwrap_or(0);
    if !(1..=3).contains(&d) || points.iter().any(|p| p.len() != d) {
        return Err(LatvolError::InvalidInput(format!(
            "orientation needs d+1 points of dimension d in 1..=3, got {} points",
            points.len()
        )));
    }
    let rows: Vec<Vec<BigRational>> = points[1..]
        .iter()
        .map(|p| p.iter().zip(&points[0]).map(|(a, b)| a - b).collect())
        .collect();
    let det = match d {
        1 => rows[0][0].clone(),
        2 => &rows[0][0] * &rows[1][1] - &rows[0][1] * &rows[1][0],
        _ => {
            let m = &rows;
            &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1])
                - &m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])
                + &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0])
        }
    };
    Ok(rat_sign(&det))
}

/// Exact 2D orientation of three integer points.
pub fn orient2(a: &[BigInt; 2], b: &[BigInt; 2], c: &[BigInt; 2]) -> i8 {
    sign_of(&((&b[0] - &a[0]) * (&c[1] - &a[1]) - (&b[1] - &a[1]) * (&c[0] - &a[0])))
}
