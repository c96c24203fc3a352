//! Error-free transformations and directed rounding without touching the
//! FPU rounding mode.
//!
//! Every helper returns a bound that is valid for the exact real result of
//! the operation on its (exact) floating-point operands.

/// Smallest positive subnormal.
pub(crate) const ETA: f64 = f64::from_bits(1);

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1

/// `s + e == a + b` exactly (Knuth).
#[inline]
pub(crate) fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let c = SPLITTER * a;
    let hi = c - (c - a);
    (hi, a - hi)
}

/// Product and its rounding error. The error is exact when neither overflow
/// nor underflow can interfere; otherwise `None` is returned for it.
#[inline]
pub(crate) fn two_prod(a: f64, b: f64) -> (f64, Option<f64>) {
    let p = a * b;
    if p == 0.0 {
        // exact iff one operand is zero
        if a == 0.0 || b == 0.0 {
            return (p, Some(0.0));
        }
        return (p, None);
    }
    let ap = p.abs();
    if !(2.0e-292..=1.0e300).contains(&ap) || a.abs() > 1.0e300 || b.abs() > 1.0e300 {
        return (p, None);
    }
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let e = al * bl - (((p - ah * bh) - al * bh) - ah * bl);
    (p, Some(e))
}

/// Upper bound on `|fl(a*b) - a*b|`.
#[inline]
pub(crate) fn prod_err(a: f64, b: f64) -> (f64, f64) {
    let (p, e) = two_prod(a, b);
    match e {
        Some(e) => (p, e.abs()),
        None => (p, next_up_abs(p.abs() * f64::EPSILON) + ETA),
    }
}

#[inline]
fn next_up_abs(x: f64) -> f64 {
    x.next_up()
}

#[inline]
pub(crate) fn add_up(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if e > 0.0 {
        s.next_up()
    } else {
        s
    }
}

#[inline]
pub(crate) fn add_down(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if e < 0.0 {
        s.next_down()
    } else {
        s
    }
}

#[inline]
pub(crate) fn sub_up(a: f64, b: f64) -> f64 {
    add_up(a, -b)
}

#[inline]
pub(crate) fn sub_down(a: f64, b: f64) -> f64 {
    add_down(a, -b)
}

#[inline]
pub(crate) fn mul_up(a: f64, b: f64) -> f64 {
    let (p, e) = two_prod(a, b);
    match e {
        Some(e) if e > 0.0 => p.next_up(),
        Some(_) => p,
        None => p.next_up(),
    }
}

#[inline]
pub(crate) fn mul_down(a: f64, b: f64) -> f64 {
    let (p, e) = two_prod(a, b);
    match e {
        Some(e) if e < 0.0 => p.next_down(),
        Some(_) => p,
        None => p.next_down(),
    }
}

#[inline]
pub(crate) fn div_up(a: f64, b: f64) -> f64 {
    let q = a / b;
    // exact when q*b reproduces a
    match two_prod(q, b) {
        (p, Some(e)) if p == a && e == 0.0 => q,
        _ => q.next_up(),
    }
}

#[inline]
pub(crate) fn div_down(a: f64, b: f64) -> f64 {
    let q = a / b;
    match two_prod(q, b) {
        (p, Some(e)) if p == a && e == 0.0 => q,
        _ => q.next_down(),
    }
}

#[inline]
pub(crate) fn sqrt_up(a: f64) -> f64 {
    let r = libm::sqrt(a);
    match two_prod(r, r) {
        (p, Some(e)) if p == a && e == 0.0 => r,
        _ => r.next_up(),
    }
}

#[inline]
pub(crate) fn sqrt_down(a: f64) -> f64 {
    let r = libm::sqrt(a);
    match two_prod(r, r) {
        (p, Some(e)) if p == a && e == 0.0 => r,
        _ => r.next_down().max(0.0),
    }
}

/// Sum of nonnegative terms, rounded up.
#[inline]
pub(crate) fn sum_up<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, add_up)
}

/// Widen a libm result by a fixed number of ulps in each direction.
#[inline]
pub(crate) fn ulps_down(x: f64, n: u32) -> f64 {
    (0..n).fold(x, |v, _| v.next_down())
}

#[inline]
pub(crate) fn ulps_up(x: f64, n: u32) -> f64 {
    (0..n).fold(x, |v, _| v.next_up())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sum_is_exact() {
        let (s, e) = two_sum(1.0, 1e-20);
        assert_eq!(s, 1.0);
        assert_eq!(e, 1e-20);
    }

    #[test]
    fn two_prod_is_exact_for_representable_products() {
        assert_eq!(two_prod(3.0, 0.5), (1.5, Some(0.0)));
        let (p, e) = two_prod(0.1, 0.1);
        assert!(e.unwrap() != 0.0);
        assert!((p - 0.01).abs() < 1e-17);
    }

    #[test]
    fn directed_division_brackets_third() {
        let lo = div_down(1.0, 3.0);
        let hi = div_up(1.0, 3.0);
        assert!(lo < hi);
        assert_eq!(div_up(1.0, 4.0), 0.25);
        assert_eq!(div_down(1.0, 4.0), 0.25);
    }

    #[test]
    fn sqrt_exact_squares_stay_exact() {
        assert_eq!(sqrt_up(4.0), 2.0);
        assert_eq!(sqrt_down(4.0), 2.0);
        assert!(sqrt_down(2.0) < sqrt_up(2.0));
    }

    #[test]
    fn add_up_bounds_exact_sum() {
        let a = 0.1;
        let b = 0.2;
        let (s, e) = two_sum(a, b);
        let up = add_up(a, b);
        let down = add_down(a, b);
        assert!(down <= s && s <= up);
        if e != 0.0 {
            assert!(down < up);
        }
    }
}
