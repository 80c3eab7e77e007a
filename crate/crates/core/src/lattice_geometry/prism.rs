//! Oriented splitting of a tetrahedron into four truncated prisms, the
//! solids between each face and its vertical projection onto `z = 0`.
//!
//! For a positively oriented tetrahedron and outward-ordered faces
//! `(X, Y, Z)`, `χ_T = Σ o(X'Y'Z')·χ_{P(XYZ)}` pointwise, where `o` is the
//! orientation of the projected triangle. When a face plane dips below
//! `z = 0` the prism is taken signed: the part above the xy-plane counts
//! positively, the part below negatively.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::chi::{chi_convex, Halfspace};
use super::{orient2, IntVec3, LatticeTet, RatVec3};

/// Plane `z = c₁x + c₂y + c₃`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneCoeffs {
    pub c1: BigRational,
    pub c2: BigRational,
    pub c3: BigRational,
}

impl PlaneCoeffs {
    pub fn new(c1: BigRational, c2: BigRational, c3: BigRational) -> Self {
        PlaneCoeffs { c1, c2, c3 }
    }

    pub fn from_integers(c1: i64, c2: i64, c3: i64) -> Self {
        let q = |v: i64| BigRational::from_integer(BigInt::from(v));
        PlaneCoeffs::new(q(c1), q(c2), q(c3))
    }

    /// Plane through three points; `None` if it contains the z-direction.
    pub fn through(x: &IntVec3, y: &IntVec3, z: &IntVec3) -> Option<Self> {
        let n = (y - x).cross(&(z - x));
        let [nx, ny, nz] = &n.0;
        if nz.is_zero() {
            return None;
        }
        let den = BigRational::from_integer(nz.clone());
        let [px, py, pz] = &x.0;
        let c1 = BigRational::from_integer(-nx) / &den;
        let c2 = BigRational::from_integer(-ny) / &den;
        let c3 = BigRational::from_integer(pz.clone())
            + BigRational::from_integer(nx * px + ny * py) / &den;
        Some(PlaneCoeffs { c1, c2, c3 })
    }

    pub fn eval(&self, x: &BigRational, y: &BigRational) -> BigRational {
        &self.c1 * x + &self.c2 * y + &self.c3
    }
}

/// One term `sign·χ_{P(base)}` of the splitting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedPrism {
    /// `o(T)·o(X'Y'Z')`; zero when the prism is flat.
    pub sign: i8,
    pub base: [IntVec3; 3],
    /// Top plane; `None` exactly when the face is vertical.
    pub plane: Option<PlaneCoeffs>,
}

/// Faces of a positively oriented `(A, B, C, D)` listed with outward
/// normal `(Y − X) × (Z − X)`.
const OUTWARD_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

/// The four signed prisms of `T`. For a degenerate `T` the same face
/// ordering is used and the signed sum vanishes almost everywhere.
pub fn split_simplex_into_prisms(tet: &LatticeTet) -> [SignedPrism; 4] {
    let v = tet.vertices();
    let o = match tet.orientation() {
        0 => 1,
        s => s,
    };
    OUTWARD_FACES.map(|[i, j, k]| {
        let base = [v[i].clone(), v[j].clone(), v[k].clone()];
        let proj = |p: &IntVec3| [p.0[0].clone(), p.0[1].clone()];
        let o2 = orient2(&proj(&base[0]), &proj(&base[1]), &proj(&base[2]));
        let plane = PlaneCoeffs::through(&base[0], &base[1], &base[2]);
        SignedPrism { sign: o * o2, base, plane }
    })
}

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Vertical side halfspaces of the prism over a nondegenerate triangle.
fn side_halfspaces(base: &[IntVec3; 3]) -> Vec<Halfspace> {
    let p: Vec<[BigInt; 2]> = base.iter().map(|q| [q.0[0].clone(), q.0[1].clone()]).collect();
    let ccw = orient2(&p[0], &p[1], &p[2]) > 0;
    (0..3)
        .map(|e| {
            let (a, b) = if ccw {
                (&p[e], &p[(e + 1) % 3])
            } else {
                (&p[(e + 1) % 3], &p[e])
            };
            let dx = &b[0] - &a[0];
            let dy = &b[1] - &a[1];
            let offset = &dy * &a[0] - &dx * &a[1];
            Halfspace::new(
                [
                    BigRational::from_integer(dy),
                    BigRational::from_integer(-dx),
                    BigRational::zero(),
                ],
                BigRational::from_integer(offset),
            )
        })
        .collect()
}

/// `sign·(χ(P⁺) − χ(P⁻))` at `x`, where `P⁺` is the part of the prism
/// between `z = 0` and the plane lying above `z = 0` and `P⁻` the part
/// lying below.
pub fn chi_signed_prism(prism: &SignedPrism, x: &RatVec3) -> f64 {
    let Some(plane) = &prism.plane else {
        return 0.0;
    };
    if prism.sign == 0 {
        return 0.0;
    }
    let sides = side_halfspaces(&prism.base);
    // z ≤ c₁x + c₂y + c₃  ⇔  (−c₁, −c₂, 1)·x ≤ c₃
    let below_plane = Halfspace::new(
        [-plane.c1.clone(), -plane.c2.clone(), BigRational::one()],
        plane.c3.clone(),
    );
    let above_plane = Halfspace::new(
        [plane.c1.clone(), plane.c2.clone(), -BigRational::one()],
        -plane.c3.clone(),
    );
    let up = Halfspace::new([rat(0), rat(0), rat(-1)], rat(0));
    let down = Halfspace::new([rat(0), rat(0), rat(1)], rat(0));

    let mut pos = sides.clone();
    pos.push(up);
    pos.push(below_plane);
    let mut neg = sides;
    neg.push(down);
    neg.push(above_plane);
    f64::from(prism.sign) * (chi_convex(&pos, x) - chi_convex(&neg, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_geometry::chi_point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tet(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> LatticeTet {
        let mut v = [[0i64; 3]; 4];
        for p in &mut v {
            for c in p.iter_mut() {
                *c = rng.gen_range(lo..=hi);
            }
        }
        LatticeTet::from_i64(v)
    }

    /// Random rational point near the tetrahedron, sometimes forced onto
    /// a face, an edge or a vertex.
    fn probe(rng: &mut ChaCha8Rng, tet: &LatticeTet) -> RatVec3 {
        let kind = rng.gen_range(0..5);
        let den = rng.gen_range(1..=12i64);
        let mut w: Vec<i64> = (0..4).map(|_| rng.gen_range(0..=den)).collect();
        match kind {
            0 => {}
            1 => w[rng.gen_range(0..4)] = 0,
            2 => {
                let keep = rng.gen_range(0..4);
                let keep2 = (keep + rng.gen_range(1..4)) % 4;
                for (i, wi) in w.iter_mut().enumerate() {
                    if i != keep && i != keep2 {
                        *wi = 0;
                    }
                }
            }
            3 => {
                return tet.vertices()[rng.gen_range(0..4)].to_rational();
            }
            _ => {
                return std::array::from_fn(|_| {
                    BigRational::new(BigInt::from(rng.gen_range(-8 * den..=8 * den)), BigInt::from(den))
                });
            }
        }
        let total: i64 = w.iter().sum::<i64>().max(1);
        std::array::from_fn(|c| {
            let num: BigInt = tet
                .vertices()
                .iter()
                .zip(&w)
                .map(|(p, &wi)| &p.0[c] * BigInt::from(wi))
                .sum();
            BigRational::new(num, BigInt::from(total))
        })
    }

    fn split_sum(tet: &LatticeTet, x: &RatVec3) -> f64 {
        split_simplex_into_prisms(tet)
            .iter()
            .map(|p| chi_signed_prism(p, x))
            .sum()
    }

    #[test]
    fn splitting_reproduces_chi_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 120 {
            let tet = random_tet(&mut rng, -5, 5);
            if tet.is_degenerate() {
                continue;
            }
            for _ in 0..100 {
                let x = probe(&mut rng, &tet);
                let lhs = chi_point(&tet, &x);
                let rhs = split_sum(&tet, &x);
                assert!((lhs - rhs).abs() < 1e-12, "{tet:?} at {x:?}: {lhs} vs {rhs}");
            }
            checked += 1;
        }
    }

    #[test]
    fn tet_below_xy_plane() {
        let tet = LatticeTet::from_i64([[0, 0, -7], [3, 0, -5], [0, 4, -6], [1, 1, -1]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = probe(&mut rng, &tet);
            assert!((chi_point(&tet, &x) - split_sum(&tet, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_tet_splits_to_zero() {
        let tet = LatticeTet::from_i64([[0, 0, 1], [4, 0, 2], [0, 4, 3], [4, 4, 4]]);
        assert!(tet.is_degenerate());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = probe(&mut rng, &tet);
            assert!(split_sum(&tet, &x).abs() < 1e-12, "{x:?} {}", split_sum(&tet, &x));
        }
    }

    #[test]
    fn horizontal_face_gives_flat_prism() {
        let tet = LatticeTet::from_i64([[0, 0, 1], [2, 0, 1], [0, 2, 1], [0, 0, 3]]);
        let prisms = split_simplex_into_prisms(&tet);
        let vertical = prisms.iter().filter(|p| p.plane.is_none()).count();
        assert_eq!(vertical, 2);
        assert!(prisms.iter().all(|p| p.plane.is_some() || p.sign == 0));
    }

    #[test]
    fn plane_through_points() {
        let p = PlaneCoeffs::through(
            &IntVec3::from([0, 0, 1]),
            &IntVec3::from([1, 0, 3]),
            &IntVec3::from([0, 1, 4]),
        )
        .unwrap();
        assert_eq!(p, PlaneCoeffs::from_integers(2, 3, 1));
        assert!(PlaneCoeffs::through(
            &IntVec3::from([0, 0, 0]),
            &IntVec3::from([1, 0, 0]),
            &IntVec3::from([0, 0, 1]),
        )
        .is_none());
    }
}
