//! Effective bond volumes `Len(T, r) = Σ_{x∈Z³} ⨍_{(x,x+r)} χ_T`.
//!
//! [`len_tetra`] runs in time logarithmic in the size of `T` and `r`:
//! the direction is reduced and rotated onto `e₃` by a unimodular map,
//! the tetrahedron is split into four signed truncated prisms, each prism
//! becomes a weighted lattice-point sum over a triangle, each triangle
//! splits into three right triangles and a rectangle, and the right
//! triangles reduce to the floor-sum recurrence in [`crate::exact_sums`].
//!
//! Everything except the vertex angles is exact. [`len_bruteforce`]
//! evaluates the definition literally and serves as the oracle.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{LatvolError, Result};
use crate::exact_sums::s_ab;
use crate::lattice_geometry::{
    edge_angle_in_pulled_back_frame, orient2, segment_chi_average, split_simplex_into_prisms,
    unimodular_to_e3, IntVec3, LatticeTet, PlaneCoeffs, Segment3, TetClipper, UnimodularMap,
};

/// Default cap on the number of base points visited by [`len_bruteforce`].
pub const DEFAULT_BRUTEFORCE_BUDGET: u64 = 2_000_000;

/// A value split into an exact rational part and a floating angle part.
#[derive(Clone, Debug, PartialEq)]
pub struct LenValue {
    pub exact: BigRational,
    pub angular: f64,
}

impl LenValue {
    pub fn zero() -> Self {
        LenValue { exact: BigRational::zero(), angular: 0.0 }
    }

    pub fn exact(q: BigRational) -> Self {
        LenValue { exact: q, angular: 0.0 }
    }

    pub fn total(&self) -> f64 {
        self.exact.to_f64().unwrap_or(f64::NAN) + self.angular
    }

    fn add(&mut self, other: &LenValue, sign: i8) {
        match sign {
            1 => {
                self.exact += &other.exact;
                self.angular += other.angular;
            }
            -1 => {
                self.exact -= &other.exact;
                self.angular -= other.angular;
            }
            _ => {}
        }
    }
}

/// Right triangle `P, P + b·e₁, P + b·e₁ + a·e₂` with the plane already
/// rebased so that `P` is the origin.
#[derive(Clone, Debug)]
pub struct RightTriangleSpec {
    /// Vertical leg (signed).
    pub a: BigInt,
    /// Horizontal leg (signed).
    pub b: BigInt,
    pub coeffs: PlaneCoeffs,
    pub minv: UnimodularMap,
}

/// `(r / g, g)` with `g` the gcd of the components.
pub fn reduce_direction(r: &IntVec3) -> Result<(IntVec3, BigInt)> {
    if r.is_zero() {
        return Err(LatvolError::ZeroDirection);
    }
    let g = r.content();
    let reduced = IntVec3([&r.0[0] / &g, &r.0[1] / &g, &r.0[2] / &g]);
    Ok((reduced, g))
}

fn int(v: i64) -> BigInt {
    BigInt::from(v)
}

fn q(n: BigInt) -> BigRational {
    BigRational::from_integer(n)
}

/// Angle at a vertex of the wedge spanned by the in-plane edge vectors
/// `v`, `w`, measured in the original lattice frame.
fn pulled_back_angle(v: [&BigInt; 2], w: [&BigInt; 2], minv: &UnimodularMap) -> f64 {
    let v3 = IntVec3([v[0].clone(), v[1].clone(), BigInt::zero()]);
    let w3 = IntVec3([w[0].clone(), w[1].clone(), BigInt::zero()]);
    edge_angle_in_pulled_back_frame(&v3, &w3, minv)
        .expect("horizontal edge vectors are never parallel to the pulled-back axis")
}

/// Signed `Σ χ̃(i,j)·(c₁i + c₂j + c₃)` over the right triangle, where `χ̃`
/// is 1 inside, 1/2 on edges and the pulled-back vertex angle over `2π` at
/// vertices; the sign is the orientation `sign(a·b)`.
pub fn right_triangle_sum(spec: &RightTriangleSpec) -> LenValue {
    let (a0, b0) = (&spec.a, &spec.b);
    if a0.is_zero() || b0.is_zero() {
        return LenValue::zero();
    }
    let sign: i8 = if a0.is_positive() == b0.is_positive() { 1 } else { -1 };
    // reflect into a, b > 0
    let c1 = if b0.is_negative() { -&spec.coeffs.c1 } else { spec.coeffs.c1.clone() };
    let c2 = if a0.is_negative() { -&spec.coeffs.c2 } else { spec.coeffs.c2.clone() };
    let c4 = &spec.coeffs.c3;
    let a = a0.abs();
    let b = b0.abs();
    let g = a.gcd(&b);
    let s = s_ab(&a, &b);
    let (qa, qb, qg) = (q(a.clone()), q(b.clone()), q(g.clone()));
    let one = BigRational::one();
    let two = q(int(2));
    let four = q(int(4));
    let six = q(int(6));
    let twelve = q(int(12));

    let constant = &qa * &qb * c4 / &two;
    let lin_i = &qa * (&qb - &one) * (&two * &qb - &one) / &six - &s;
    let lin_j = (&qa - &one) * (&qb - &one) / &four
        + (&qg - &one) / &four
        + &qa * &qa * (&qb - &one) * (&two * &qb - &one) / (&twelve * &qb)
        + (&qb - &qg) * (&two * &qb - &qg) / (&twelve * &qb)
        - &qa / &qb * &s;
    let right_edge = (&qa - &one) * (&c1 * &qb + &c2 * &qa / &two) / &two;
    let bottom_edge = (&qb - &one) * (&c1 * &qb / &two) / &two;
    let hypotenuse = (&qg - &one) * (&c1 * &qb / &two + &c2 * &qa / &two) / &two;
    let mut exact = constant + &c1 * lin_i + &c2 * lin_j + right_edge + bottom_edge - hypotenuse;

    // Vertex terms from the unreflected legs; A carries zero weight.
    let nb = -b0;
    let na = -a0;
    let zero = BigInt::zero();
    let beta = pulled_back_angle([&nb, &zero], [&zero, a0], &spec.minv);
    let gamma = pulled_back_angle([&nb, &na], [&zero, &na], &spec.minv);
    let at_b = (&spec.coeffs.c1 * q(b0.clone())).to_f64().unwrap_or(f64::NAN);
    let at_c = (&spec.coeffs.c1 * q(b0.clone()) + &spec.coeffs.c2 * q(a0.clone()))
        .to_f64()
        .unwrap_or(f64::NAN);
    let mut angular = (beta * at_b + gamma * at_c) / (2.0 * PI);

    if sign < 0 {
        exact = -exact;
        angular = -angular;
    }
    LenValue { exact, angular }
}

/// Signed area of the axis-parallel rectangle with opposite corners `p`,
/// `q` times the plane height at its centre. Point symmetry about the
/// centre makes this exact, including the corner weights.
pub fn rectangle_sum(p: [&BigInt; 2], qc: [&BigInt; 2], coeffs: &PlaneCoeffs) -> BigRational {
    let area = q((qc[0] - p[0]) * (qc[1] - p[1]));
    if area.is_zero() {
        return area;
    }
    let two = q(int(2));
    let cx = q(p[0] + qc[0]) / &two;
    let cy = q(p[1] + qc[1]) / &two;
    area * coeffs.eval(&cx, &cy)
}

fn rt(p: [&BigInt; 2], b: BigInt, a: BigInt, coeffs: &PlaneCoeffs, minv: &UnimodularMap) -> LenValue {
    let c4 = coeffs.eval(&q(p[0].clone()), &q(p[1].clone()));
    right_triangle_sum(&RightTriangleSpec {
        a,
        b,
        coeffs: PlaneCoeffs::new(coeffs.c1.clone(), coeffs.c2.clone(), c4),
        minv: minv.clone(),
    })
}

/// Oriented `o(ABC)·Σ χ̃·(c₁i + c₂j + c₃)` over the lattice triangle `ABC`.
///
/// With `D = (B₁, A₂)`, `E = (C₁, A₂)`, `F = (C₁, B₂)`:
/// `ABC = AEC − ADB − BFC + rect(E, B)` as oriented chains; the three
/// triangles are right-angled at `E`, `D` and `F`.
pub fn triangle_sum(
    a: &[BigInt; 2],
    b: &[BigInt; 2],
    c: &[BigInt; 2],
    coeffs: &PlaneCoeffs,
    minv: &UnimodularMap,
) -> LenValue {
    if orient2(a, b, c) == 0 {
        return LenValue::zero();
    }
    let mut total = LenValue::zero();
    total.add(&rt([&a[0], &a[1]], &c[0] - &a[0], &c[1] - &a[1], coeffs, minv), 1);
    total.add(&rt([&a[0], &a[1]], &b[0] - &a[0], &b[1] - &a[1], coeffs, minv), -1);
    total.add(&rt([&b[0], &b[1]], &c[0] - &b[0], &c[1] - &b[1], coeffs, minv), -1);
    let rect = rectangle_sum([&c[0], &a[1]], [&b[0], &b[1]], coeffs);
    total.exact += rect;
    total
}

/// Oriented contribution `o(X'Y'Z')·Σ_{(i,j)} ∫ χ^M_P(i,j,z) dz` of the
/// truncated prism over the face `XYZ`, all of whose vertices must lie
/// strictly above `z = 0`.
pub fn len_prism(base: &[IntVec3; 3], minv: &UnimodularMap) -> LenValue {
    let Some(plane) = PlaneCoeffs::through(&base[0], &base[1], &base[2]) else {
        return LenValue::zero();
    };
    let p = |v: &IntVec3| [v.0[0].clone(), v.0[1].clone()];
    triangle_sum(&p(&base[0]), &p(&base[1]), &p(&base[2]), &plane, minv)
}

/// `Len(T, r)` split into its exact and angular parts.
pub fn len_tetra_parts(tet: &LatticeTet, r: &IntVec3) -> Result<LenValue> {
    let (mut dir, _) = reduce_direction(r)?;
    let o = tet.orientation();
    if o == 0 {
        return Ok(LenValue::zero());
    }
    if dir.is_lex_negative() {
        dir = -&dir;
    }
    let m = unimodular_to_e3(&dir)?;
    let minv = m.inverse();
    let mapped = tet.map(&m);
    let min_z = mapped.vertices().iter().map(|v| v.0[2].clone()).min().unwrap();
    let shifted = mapped.translate(&IntVec3([BigInt::zero(), BigInt::zero(), BigInt::one() - min_z]));
    let mut total = LenValue::zero();
    // orientation is preserved by M (det 1) and by translation
    for prism in split_simplex_into_prisms(&shifted) {
        if prism.plane.is_none() {
            continue;
        }
        total.add(&len_prism(&prism.base, &minv), o);
    }
    Ok(total)
}

/// `Len(T, r)`; zero for degenerate `T`.
pub fn len_tetra(tet: &LatticeTet, r: &IntVec3) -> Result<f64> {
    Ok(len_tetra_parts(tet, r)?.total())
}

fn fits_fast_path(tet: &LatticeTet, r: &IntVec3) -> Option<([[i64; 3]; 4], [i64; 3])> {
    const LIMIT: i64 = 1 << 20;
    let mut v = [[0i64; 3]; 4];
    for (k, p) in tet.vertices().iter().enumerate() {
        v[k] = p.to_i64()?;
    }
    let r = r.to_i64()?;
    let small = |x: &i64| x.abs() < LIMIT;
    (v.iter().flatten().all(small) && r.iter().all(small)).then_some((v, r))
}

/// `Len(T, r)` by literal summation of bond averages over every base
/// point whose bond can meet `T`.
pub fn len_bruteforce(tet: &LatticeTet, r: &IntVec3, budget: u64) -> Result<f64> {
    if r.is_zero() {
        return Err(LatvolError::ZeroDirection);
    }
    if tet.is_degenerate() {
        return Ok(0.0);
    }
    let lo: Vec<BigInt> = (0..3)
        .map(|c| {
            let m = tet.vertices().iter().map(|v| v.0[c].clone()).min().unwrap();
            m - r.0[c].clone().max(BigInt::zero())
        })
        .collect();
    let hi: Vec<BigInt> = (0..3)
        .map(|c| {
            let m = tet.vertices().iter().map(|v| v.0[c].clone()).max().unwrap();
            m - r.0[c].clone().min(BigInt::zero())
        })
        .collect();
    let needed = (0..3).fold(BigInt::one(), |acc, c| acc * (&hi[c] - &lo[c] + 1u32));
    let needed = needed.to_u64().unwrap_or(u64::MAX);
    if needed > budget {
        return Err(LatvolError::BudgetExceeded { needed, budget });
    }

    if let Some((v, rr)) = fits_fast_path(tet, r) {
        let clip = TetClipper::new(&v).expect("nondegenerate");
        let (lo, hi) = clip.base_point_range(rr);
        let mut total = 0.0;
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    total += clip.bond_average([x, y, z], rr);
                }
            }
        }
        return Ok(total);
    }

    let mut total = 0.0;
    let mut x = lo[0].clone();
    while x <= hi[0] {
        let mut y = lo[1].clone();
        while y <= hi[1] {
            let mut z = lo[2].clone();
            while z <= hi[2] {
                let base = IntVec3([x.clone(), y.clone(), z.clone()]);
                total += segment_chi_average(tet, &Segment3::bond(&base, r));
                z += 1;
            }
            y += 1;
        }
        x += 1;
    }
    Ok(total)
}
