//! Exact integer and rational kernels: Bézout coefficients, closed-form
//! power sums, residue sums and the Euclidean-like recurrence for
//! `S(a, b) = Σ_{i=0}^{b-1} (i/b)·(a·i mod b)`.
//!
//! Nothing in this module rounds. Intermediate terms grow like `a²b`, so
//! every quantity is carried as a [`BigInt`] or [`BigRational`].

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Solution of `a·c + b·d = g` with `g = gcd(|a|, |b|)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BezoutTriple {
    pub g: BigInt,
    pub c: BigInt,
    pub d: BigInt,
}

/// Which power of the summand a closed-form sum refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Power {
    Linear,
    Square,
}

/// Extended Euclid with normalized coefficients.
///
/// When `b ≠ 0` the coefficient `c` is reduced into `[0, |b|/g)`, which in
/// particular gives `0 ≤ c < |b|`; this keeps the entries of the unimodular
/// maps built from these coefficients of order `|r|²`.
pub fn extended_gcd(a: &BigInt, b: &BigInt) -> BezoutTriple {
    if b.is_zero() {
        return BezoutTriple {
            g: a.abs(),
            c: a.signum(),
            d: BigInt::zero(),
        };
    }
    let ext = a.extended_gcd(b);
    // num-integer may hand back a negative gcd for negative inputs.
    let (g, mut c) = if ext.gcd.is_negative() {
        (-ext.gcd, -ext.x)
    } else {
        (ext.gcd, ext.x)
    };
    let period = (b / &g).abs();
    c = c.mod_floor(&period);
    let d = (&g - a * &c) / b;
    debug_assert_eq!(a * &c + b * &d, g);
    BezoutTriple { g, c, d }
}

/// `Σ_{i=0}^{n-1} i^p` for `p ∈ {1, 2}`.
pub fn sum_powers(n: &BigInt, p: Power) -> BigRational {
    assert!(!n.is_negative(), "sum_powers needs n >= 0");
    let one = BigInt::one();
    let value = match p {
        Power::Linear => n * (n - &one) / 2,
        Power::Square => n * (n - &one) * (BigInt::from(2) * n - &one) / 6,
    };
    BigRational::from_integer(value)
}

/// `Σ_{i=0}^{b-1} (a·i mod b)^p` in closed form.
///
/// The residues `a·i mod b` run through `0, g, 2g, …, b - g` exactly `g`
/// times each, where `g = gcd(a, b)`.
pub fn sum_ai_mod_b(a: &BigInt, b: &BigInt, p: Power) -> BigRational {
    assert!(b.is_positive(), "sum_ai_mod_b needs b >= 1");
    let g = a.gcd(b);
    let value = match p {
        Power::Linear => b * (b - &g) / 2,
        Power::Square => b * (b - &g) * (BigInt::from(2) * b - &g) / 6,
    };
    BigRational::from_integer(value)
}

/// `S(a, b)` via the Euclidean-like recurrence.
pub fn s_ab(a: &BigInt, b: &BigInt) -> BigRational {
    s_ab_with_depth(a, b).0
}

/// `S(a, b)` together with the number of recurrence steps taken.
///
/// `S(a, b) = P(a, b, g)/(12a) − (b/a)·S(b mod a, a)`, where `g = gcd(a, b)`
/// is invariant along the recursion. `S(a, 0) = S(0, b) = 0`.
pub fn s_ab_with_depth(a: &BigInt, b: &BigInt) -> (BigRational, usize) {
    assert!(
        !a.is_negative() && !b.is_negative(),
        "s_ab needs nonnegative arguments"
    );
    if b.is_zero() || a.is_zero() {
        return (BigRational::zero(), 0);
    }
    let g = a.gcd(b);
    let g2 = &g * &g;
    let mut acc = BigRational::zero();
    let mut multiplier = BigRational::one();
    let (mut a, mut b) = (a.clone(), b.clone());
    let mut depth = 0;
    while !a.is_zero() {
        let ab = &a * &b;
        let numer = BigInt::from(3) * &a * &ab + BigInt::from(3) * &ab * &b + &a * &a
            - BigInt::from(3) * &ab
            + &b * &b
            - BigInt::from(6) * &ab * &g
            + &g2;
        acc += &multiplier * BigRational::new(numer, BigInt::from(12) * &a);
        multiplier *= BigRational::new(-b.clone(), a.clone());
        let next_a = b.mod_floor(&a);
        b = std::mem::replace(&mut a, next_a);
        depth += 1;
    }
    (acc, depth)
}
