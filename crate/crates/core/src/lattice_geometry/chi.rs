//! Characteristic functions of convex polytopes (interior 1, face 1/2,
//! edge angle/2π, vertex solid angle/4π) and their averages over segments.
//!
//! Containment is decided in exact arithmetic; only angles are floats.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use super::{IntVec3, LatticeTet, RatVec3, Segment3, UnimodularMap};
use crate::error::{LatvolError, Result};

/// Closed halfspace `normal · x ≤ offset`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Halfspace {
    pub normal: RatVec3,
    pub offset: BigRational,
}

impl Halfspace {
    pub fn new(normal: RatVec3, offset: BigRational) -> Self {
        Halfspace { normal, offset }
    }

    /// `normal · x − offset`: negative inside, zero on the boundary plane.
    pub fn eval(&self, x: &RatVec3) -> BigRational {
        rdot(&self.normal, x) - &self.offset
    }
}

fn rdot(a: &RatVec3, b: &RatVec3) -> BigRational {
    &a[0] * &b[0] + &a[1] * &b[1] + &a[2] * &b[2]
}

fn rcross(a: &RatVec3, b: &RatVec3) -> RatVec3 {
    [
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

fn rzero(a: &RatVec3) -> bool {
    a.iter().all(Zero::is_zero)
}

fn rf64(a: &RatVec3) -> [f64; 3] {
    a.clone().map(|c| c.to_f64().unwrap_or(f64::NAN))
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn angle_f64(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3(cross3(a, b)).atan2(dot3(a, b))
}

fn angle_rat(a: &RatVec3, b: &RatVec3) -> f64 {
    let c = rcross(a, b);
    let s2 = rdot(&c, &c).to_f64().unwrap_or(f64::NAN);
    s2.sqrt().atan2(rdot(a, b).to_f64().unwrap_or(f64::NAN))
}

/// Angle in `[0, π]` between two integer vectors.
///
/// Cross and dot products are formed exactly and only then rounded, so
/// small angles keep full relative precision.
pub fn angle_between_exact(u: &IntVec3, v: &IntVec3) -> f64 {
    let c = u.cross(v);
    let s2 = c.dot(&c).to_f64().unwrap_or(f64::NAN);
    s2.sqrt().atan2(u.dot(v).to_f64().unwrap_or(f64::NAN))
}

/// Angle between `M⁻¹v × M⁻¹e₃` and `M⁻¹w × M⁻¹e₃`, i.e. the angle of the
/// wedge spanned by `v` and `w` measured across planes containing the
/// pulled-back bond direction.
pub fn edge_angle_in_pulled_back_frame(
    v: &IntVec3,
    w: &IntVec3,
    minv: &UnimodularMap,
) -> Result<f64> {
    let axis = minv.column(2);
    let a = minv.apply(v).cross(&axis);
    let b = minv.apply(w).cross(&axis);
    if a.is_zero() || b.is_zero() {
        return Err(LatvolError::ParallelToDirection);
    }
    Ok(angle_between_exact(&a, &b))
}

/// Fraction of a small ball around the apex that lies in the cone
/// `{d : nᵢ·d ≤ 0}`.
fn cone_fraction(normals: &[RatVec3]) -> f64 {
    let mut uniq: Vec<&RatVec3> = Vec::new();
    for n in normals {
        if rzero(n) {
            continue;
        }
        let mut duplicate = false;
        for u in &uniq {
            if rzero(&rcross(n, u)) {
                if rdot(n, u).is_negative() {
                    // opposite halfspaces: the cone is flat
                    return 0.0;
                }
                duplicate = true;
                break;
            }
        }
        if !duplicate {
            uniq.push(n);
        }
    }
    match uniq.len() {
        0 => 1.0,
        1 => 0.5,
        2 => (PI - angle_rat(uniq[0], uniq[1])) / (2.0 * PI),
        _ => polyhedral_cone_fraction(&uniq),
    }
}

fn polyhedral_cone_fraction(normals: &[&RatVec3]) -> f64 {
    let k = normals.len();
    let mut full_rank = false;
    'outer: for i in 0..k {
        for j in i + 1..k {
            for l in j + 1..k {
                if !rdot(normals[i], &rcross(normals[j], normals[l])).is_zero() {
                    full_rank = true;
                    break 'outer;
                }
            }
        }
    }
    if !full_rank {
        return wedge_fraction(normals);
    }

    // Pointed cone: extreme rays are feasible intersections of two planes.
    let mut rays: Vec<RatVec3> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let d = rcross(normals[i], normals[j]);
            if rzero(&d) {
                continue;
            }
            for cand in [d.clone(), d.clone().map(|c| -c)] {
                if normals.iter().all(|n| !rdot(n, &cand).is_positive())
                    && !rays
                        .iter()
                        .any(|r| rzero(&rcross(r, &cand)) && rdot(r, &cand).is_positive())
                {
                    rays.push(cand);
                }
            }
        }
    }
    if rays.len() < 3 {
        return 0.0;
    }
    let sum: RatVec3 = std::array::from_fn(|c| {
        rays.iter()
            .fold(BigRational::zero(), |acc, r| acc + &r[c])
    });
    if normals.iter().any(|n| !rdot(n, &sum).is_negative()) {
        return 0.0;
    }

    let units: Vec<[f64; 3]> = rays
        .iter()
        .map(|r| {
            let v = rf64(r);
            let l = norm3(v);
            [v[0] / l, v[1] / l, v[2] / l]
        })
        .collect();
    let axis = {
        let s = units
            .iter()
            .fold([0.0; 3], |a, u| [a[0] + u[0], a[1] + u[1], a[2] + u[2]]);
        let l = norm3(s);
        [s[0] / l, s[1] / l, s[2] / l]
    };
    let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = {
        let c = cross3(axis, helper);
        let l = norm3(c);
        [c[0] / l, c[1] / l, c[2] / l]
    };
    let e2 = cross3(axis, e1);
    let mut order: Vec<(f64, [f64; 3])> = units
        .iter()
        .map(|&u| (dot3(u, e2).atan2(dot3(u, e1)), u))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = order.len();
    let mut angle_sum = 0.0;
    for i in 0..m {
        let v = order[i].1;
        let prev = order[(i + m - 1) % m].1;
        let next = order[(i + 1) % m].1;
        let tangent = |w: [f64; 3]| {
            let d = dot3(w, v);
            [w[0] - d * v[0], w[1] - d * v[1], w[2] - d * v[2]]
        };
        angle_sum += angle_f64(tangent(prev), tangent(next));
    }
    let area = angle_sum - (m as f64 - 2.0) * PI;
    area / (4.0 * PI)
}

/// All normals perpendicular to one common line: the cone is a wedge times
/// that line.
fn wedge_fraction(normals: &[&RatVec3]) -> f64 {
    let base = rf64(normals[0]);
    let line = normals[1..]
        .iter()
        .map(|n| rcross(normals[0], n))
        .find(|c| !rzero(c))
        .map(|c| rf64(&c))
        .expect("at least two independent normals");
    let e1 = {
        let l = norm3(base);
        [base[0] / l, base[1] / l, base[2] / l]
    };
    let e2 = {
        let c = cross3(line, e1);
        let l = norm3(c);
        [c[0] / l, c[1] / l, c[2] / l]
    };
    let mut thetas: Vec<f64> = normals
        .iter()
        .map(|n| {
            let v = rf64(n);
            dot3(v, e2).atan2(dot3(v, e1))
        })
        .collect();
    thetas.sort_by(f64::total_cmp);
    let mut gap = thetas[0] + 2.0 * PI - thetas[thetas.len() - 1];
    for w in thetas.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    let wedge = PI - (2.0 * PI - gap);
    if wedge <= 1e-12 {
        0.0
    } else {
        wedge / (2.0 * PI)
    }
}

/// Characteristic function of the convex polytope `∩ halfspaces` at `x`.
pub fn chi_convex(halfspaces: &[Halfspace], x: &RatVec3) -> f64 {
    let mut active = Vec::new();
    for h in halfspaces {
        let f = h.eval(x);
        if f.is_positive() {
            return 0.0;
        }
        if f.is_zero() {
            active.push(h.normal.clone());
        }
    }
    cone_fraction(&active)
}

/// Outward face halfspaces of a nondegenerate tetrahedron; face `k` is
/// the one opposite vertex `k`.
pub(crate) fn tet_halfspaces(tet: &LatticeTet) -> Option<[Halfspace; 4]> {
    if tet.is_degenerate() {
        return None;
    }
    let v = tet.vertices();
    Some(std::array::from_fn(|k| {
        let others: Vec<&IntVec3> = (0..4).filter(|&i| i != k).map(|i| &v[i]).collect();
        let mut n = (others[1] - others[0]).cross(&(others[2] - others[0]));
        if (&v[k] - others[0]).dot(&n).is_positive() {
            n = -&n;
        }
        let offset = n.dot(others[0]);
        Halfspace::new(n.to_rational(), BigRational::from_integer(offset))
    }))
}

/// `χ_T(x)` for a lattice tetrahedron; zero for degenerate `T`.
pub fn chi_point(tet: &LatticeTet, x: &RatVec3) -> f64 {
    match tet_halfspaces(tet) {
        Some(hs) => chi_convex(&hs, x),
        None => 0.0,
    }
}

/// `∫₀¹ χ_T(start + λ(end − start)) dλ`.
///
/// The clipped parameter interval is exact; inside it `χ_T` is constant
/// except at its ends, so the weight is read off at the midpoint.
pub fn segment_chi_average(tet: &LatticeTet, seg: &Segment3) -> f64 {
    let Some(hs) = tet_halfspaces(tet) else {
        return 0.0;
    };
    let dir = seg.direction();
    if rzero(&dir) {
        return 0.0;
    }
    let mut lo = BigRational::zero();
    let mut hi = BigRational::from_integer(BigInt::from(1));
    for h in &hs {
        let f0 = h.eval(&seg.start);
        let f1 = rdot(&h.normal, &dir);
        if f1.is_zero() {
            if f0.is_positive() {
                return 0.0;
            }
        } else {
            let cut = -&f0 / &f1;
            if f1.is_positive() {
                if cut < hi {
                    hi = cut;
                }
            } else if cut > lo {
                lo = cut;
            }
        }
    }
    if hi <= lo {
        return 0.0;
    }
    let mid = (&lo + &hi) / BigRational::from_integer(BigInt::from(2));
    let weight = chi_convex(&hs, &seg.point_at(&mid));
    (&hi - &lo).to_f64().unwrap_or(f64::NAN) * weight
}

/// Precomputed face data of a small lattice tetrahedron for fast bond
/// averages in 128-bit integer arithmetic.
#[derive(Clone, Debug)]
pub struct TetClipper {
    normals: [[i128; 3]; 4],
    offsets: [i128; 4],
    dihedral: [[f64; 4]; 4],
    lo: [i64; 3],
    hi: [i64; 3],
}

impl TetClipper {
    /// `None` for degenerate tetrahedra.
    pub fn new(v: &[[i64; 3]; 4]) -> Option<Self> {
        let tet = LatticeTet::from_i64(*v);
        let hs = tet_halfspaces(&tet)?;
        let to_i128 = |q: &BigRational| q.to_integer().to_i128().expect("small lattice tet");
        let normals = std::array::from_fn(|k| std::array::from_fn(|c| to_i128(&hs[k].normal[c])));
        let offsets = std::array::from_fn(|k| to_i128(&hs[k].offset));
        let mut dihedral = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    dihedral[i][j] = PI - angle_rat(&hs[i].normal, &hs[j].normal);
                }
            }
        }
        let lo = std::array::from_fn(|c| v.iter().map(|p| p[c]).min().unwrap());
        let hi = std::array::from_fn(|c| v.iter().map(|p| p[c]).max().unwrap());
        Some(TetClipper { normals, offsets, dihedral, lo, hi })
    }

    /// Bounding box of the tetrahedron.
    pub fn bbox(&self) -> ([i64; 3], [i64; 3]) {
        (self.lo, self.hi)
    }

    /// Range of base points `x` whose bond `(x, x + r)` can meet the
    /// closed tetrahedron.
    pub fn base_point_range(&self, r: [i64; 3]) -> ([i64; 3], [i64; 3]) {
        (
            std::array::from_fn(|c| self.lo[c] - r[c].max(0)),
            std::array::from_fn(|c| self.hi[c] - r[c].min(0)),
        )
    }

    /// Dihedral angle along the edge shared by faces `i` and `j`.
    pub fn dihedral(&self, i: usize, j: usize) -> f64 {
        self.dihedral[i][j]
    }

    /// `∫₀¹ χ_T(x + λr) dλ` for integer `x`, `r`.
    pub fn bond_average(&self, x: [i64; 3], r: [i64; 3]) -> f64 {
        // fractions num/den with den > 0
        let (mut ln, mut ld): (i128, i128) = (0, 1);
        let (mut hn, mut hd): (i128, i128) = (1, 1);
        let mut in_plane = 0u8;
        for k in 0..4 {
            let n = &self.normals[k];
            let f0 = n[0] * x[0] as i128 + n[1] * x[1] as i128 + n[2] * x[2] as i128
                - self.offsets[k];
            let f1 = n[0] * r[0] as i128 + n[1] * r[1] as i128 + n[2] * r[2] as i128;
            if f1 == 0 {
                if f0 > 0 {
                    return 0.0;
                }
                if f0 == 0 {
                    in_plane |= 1 << k;
                }
            } else if f1 > 0 {
                // cut = -f0 / f1
                if -f0 * hd < hn * f1 {
                    hn = -f0;
                    hd = f1;
                }
            } else if f0 * ld > ln * -f1 {
                ln = f0;
                ld = -f1;
            }
        }
        let num = hn * ld - ln * hd;
        if num <= 0 {
            return 0.0;
        }
        let length = num as f64 / (hd * ld) as f64;
        let weight = match in_plane.count_ones() {
            0 => 1.0,
            1 => 0.5,
            2 => {
                let i = in_plane.trailing_zeros() as usize;
                let j = 3 - (in_plane.leading_zeros() as usize - 4);
                self.dihedral[i][j] / (2.0 * PI)
            }
            _ => 0.0,
        };
        length * weight
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn qv(v: [(i64, i64); 3]) -> RatVec3 {
        v.map(|(n, d)| q(n, d))
    }

    /// Kuhn split of the unit cube into six tetrahedra.
    fn unit_cube_tets() -> Vec<LatticeTet> {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        perms
            .iter()
            .map(|p| {
                let mut v = [[0i64; 3]; 4];
                for s in 0..3 {
                    v[s + 1] = v[s];
                    v[s + 1][p[s]] += 1;
                }
                LatticeTet::from_i64(v)
            })
            .collect()
    }

    fn cube_chi(x: &RatVec3) -> f64 {
        unit_cube_tets().iter().map(|t| chi_point(t, x)).sum()
    }

    #[test]
    fn cube_face_edge_corner_values() {
        assert!((cube_chi(&qv([(1, 2), (1, 2), (0, 1)])) - 0.5).abs() < 1e-12);
        assert!((cube_chi(&qv([(1, 2), (0, 1), (0, 1)])) - 0.25).abs() < 1e-12);
        assert!((cube_chi(&qv([(0, 1), (0, 1), (0, 1)])) - 0.125).abs() < 1e-12);
        assert!((cube_chi(&qv([(1, 1), (1, 1), (1, 1)])) - 0.125).abs() < 1e-12);
        assert!((cube_chi(&qv([(1, 3), (1, 2), (2, 3)])) - 1.0).abs() < 1e-12);
        assert_eq!(cube_chi(&qv([(3, 2), (1, 2), (1, 2)])), 0.0);
    }

    #[test]
    fn regular_corner_solid_angle() {
        // corner of the unit right tetrahedron: octant, 1/8
        let t = LatticeTet::from_i64([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        let v = chi_point(&t, &qv([(0, 1), (0, 1), (0, 1)]));
        assert!((v - 0.125).abs() < 1e-12);
        // the three other corners add up with the origin to the angle sum
        let total: f64 = t
            .vertices()
            .iter()
            .map(|p| chi_point(&t, &p.to_rational()))
            .sum();
        assert!(total > 0.0 && total < 0.5);
    }

    #[test]
    fn segment_examples() {
        let t = LatticeTet::from_i64([[0, 0, 0], [4, 0, 0], [0, 4, 0], [0, 0, 4]]);
        let inside = Segment3::new(qv([(1, 2), (1, 2), (1, 2)]), qv([(1, 1), (1, 2), (1, 2)]));
        assert!((segment_chi_average(&t, &inside) - 1.0).abs() < 1e-15);
        let outside = Segment3::new(qv([(5, 1), (5, 1), (5, 1)]), qv([(6, 1), (5, 1), (5, 1)]));
        assert_eq!(segment_chi_average(&t, &outside), 0.0);
        let in_face = Segment3::new(qv([(1, 1), (1, 1), (0, 1)]), qv([(2, 1), (1, 1), (0, 1)]));
        assert!((segment_chi_average(&t, &in_face) - 0.5).abs() < 1e-15);
        let on_edge = Segment3::new(qv([(1, 1), (0, 1), (0, 1)]), qv([(2, 1), (0, 1), (0, 1)]));
        assert!((segment_chi_average(&t, &on_edge) - 0.25).abs() < 1e-15);
        // half in, half out
        let half = Segment3::new(qv([(1, 2), (1, 2), (1, 2)]), qv([(1, 2), (1, 2), (-1, 2)]));
        assert!((segment_chi_average(&t, &half) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clipper_agrees_with_exact_average() {
        let t = [[0, 0, 0], [3, 1, 0], [1, 3, 1], [0, 1, 4]];
        let tet = LatticeTet::from_i64(t);
        let clip = TetClipper::new(&t).unwrap();
        for r in [[1, 0, 0], [0, 1, 1], [1, 2, -1], [3, 1, 0], [0, 1, 4]] {
            let (lo, hi) = clip.base_point_range(r);
            for x in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for z in lo[2]..=hi[2] {
                        let fast = clip.bond_average([x, y, z], r);
                        let slow = segment_chi_average(
                            &tet,
                            &Segment3::bond(&IntVec3::from([x, y, z]), &IntVec3::from(r)),
                        );
                        assert!((fast - slow).abs() < 1e-13, "{x} {y} {z} {r:?}: {fast} {slow}");
                    }
                }
            }
        }
    }

    #[test]
    fn pulled_back_angles() {
        let id = UnimodularMap::identity();
        let a = edge_angle_in_pulled_back_frame(
            &IntVec3::from([1, 0, 0]),
            &IntVec3::from([0, 1, 0]),
            &id,
        )
        .unwrap();
        assert!((a - PI / 2.0).abs() < 1e-15);
        let v = IntVec3::from([2, 1, 0]);
        assert_eq!(edge_angle_in_pulled_back_frame(&v, &v, &id).unwrap(), 0.0);
        let a = edge_angle_in_pulled_back_frame(
            &IntVec3::from([1, 0, 0]),
            &IntVec3::from([1, 1, 0]),
            &id,
        )
        .unwrap();
        assert!((a - PI / 4.0).abs() < 1e-15);
        assert!(matches!(
            edge_angle_in_pulled_back_frame(&IntVec3::from([0, 0, 3]), &v, &id),
            Err(LatvolError::ParallelToDirection)
        ));
    }
}
