//! Closed real intervals with outward-rounded arithmetic.

use core::f64::consts::{FRAC_PI_2, PI, TAU};
use core::fmt;

use crate::error::{Error, Result};
use crate::rounding::*;

/// Ulps of slack granted to libm results for transcendental functions.
const LIBM_ULPS: u32 = 2;

/// A closed interval `[lo, hi]` with finite bounds.
#[derive(Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            Ok(Interval { lo, hi })
        } else {
            Err(Error::InvalidInterval { lo, hi })
        }
    }

    pub fn point(x: f64) -> Self {
        debug_assert!(x.is_finite());
        Interval { lo: x, hi: x }
    }

    pub(crate) fn raw(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "raw interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    /// Checked construction from bounds computed by the library itself.
    pub(crate) fn checked(lo: f64, hi: f64, what: &'static str) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() {
            Ok(Interval::raw(lo, hi))
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        sub_up(self.hi, self.lo)
    }

    pub fn mid(&self) -> f64 {
        let m = 0.5 * self.lo + 0.5 * self.hi;
        m.clamp(self.lo, self.hi)
    }

    /// Upper bound on the radius around `mid()`.
    pub fn rad(&self) -> f64 {
        let m = self.mid();
        sub_up(self.hi, m).max(sub_up(m, self.lo))
    }

    /// Largest absolute value.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest absolute value.
    pub fn mig(&self) -> f64 {
        if self.contains(0.0) {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::raw(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then(|| Interval::raw(lo, hi))
    }

    /// Grow by `abs + rel * mag` on each side.
    pub fn inflate(&self, rel: f64, abs: f64) -> Interval {
        let d = add_up(mul_up(self.mag(), rel), abs);
        Interval::raw(sub_down(self.lo, d), add_up(self.hi, d))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Interval::raw(add_down(self.lo, o.lo), add_up(self.hi, o.hi))
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Interval::raw(sub_down(self.lo, o.hi), sub_up(self.hi, o.lo))
    }

    pub fn neg(&self) -> Interval {
        Interval::raw(-self.hi, -self.lo)
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let (a, b, c, d) = (self.lo, self.hi, o.lo, o.hi);
        let lo = mul_down(a, c).min(mul_down(a, d)).min(mul_down(b, c)).min(mul_down(b, d));
        let hi = mul_up(a, c).max(mul_up(a, d)).max(mul_up(b, c)).max(mul_up(b, d));
        Interval::raw(lo, hi)
    }

    pub fn scale(&self, k: f64) -> Interval {
        self.mul(&Interval::point(k))
    }

    pub fn recip(&self) -> Result<Interval> {
        if self.contains(0.0) {
            return Err(Error::DivisionByZero { lo: self.lo, hi: self.hi });
        }
        Interval::checked(div_down(1.0, self.hi), div_up(1.0, self.lo), "recip")
    }

    pub fn div(&self, o: &Interval) -> Result<Interval> {
        if o.contains(0.0) {
            return Err(Error::DivisionByZero { lo: o.lo, hi: o.hi });
        }
        let (a, b, c, d) = (self.lo, self.hi, o.lo, o.hi);
        let lo = div_down(a, c).min(div_down(a, d)).min(div_down(b, c)).min(div_down(b, d));
        let hi = div_up(a, c).max(div_up(a, d)).max(div_up(b, c)).max(div_up(b, d));
        Interval::checked(lo, hi, "division")
    }

    pub fn sqr(&self) -> Interval {
        let lo_abs = self.mig();
        let hi_abs = self.mag();
        Interval::raw(mul_down(lo_abs, lo_abs), mul_up(hi_abs, hi_abs))
    }

    pub fn powi(&self, n: i32) -> Result<Interval> {
        if n == 0 {
            return Ok(Interval::point(1.0));
        }
        if n < 0 {
            return self.powi(-n)?.recip();
        }
        let n = n as u32;
        let pow_up = |x: f64| (1..n).fold(x, |acc, _| mul_up(acc, x));
        let pow_down = |x: f64| (1..n).fold(x, |acc, _| mul_down(acc, x));
        let r = if n % 2 == 0 {
            let (m, g) = (self.mig(), self.mag());
            Interval::raw(pow_down(m), pow_up(g))
        } else if self.lo >= 0.0 {
            Interval::raw(pow_down(self.lo), pow_up(self.hi))
        } else if self.hi <= 0.0 {
            Interval::raw(-pow_up(-self.lo), -pow_down(-self.hi))
        } else {
            Interval::raw(-pow_up(-self.lo), pow_up(self.hi))
        };
        Interval::checked(r.lo, r.hi, "integer power")
    }

    pub fn sqrt(&self) -> Result<Interval> {
        if self.lo < 0.0 {
            return Err(Error::Domain { func: "sqrt", lo: self.lo, hi: self.hi });
        }
        Ok(Interval::raw(sqrt_down(self.lo), sqrt_up(self.hi)))
    }

    pub fn exp(&self) -> Result<Interval> {
        let lo = if self.lo == 0.0 { 1.0 } else { ulps_down(libm::exp(self.lo), LIBM_ULPS).max(0.0) };
        let hi = if self.hi == 0.0 { 1.0 } else { ulps_up(libm::exp(self.hi), LIBM_ULPS) };
        Interval::checked(lo, hi, "exp")
    }

    pub fn ln(&self) -> Result<Interval> {
        if self.lo <= 0.0 {
            return Err(Error::Domain { func: "log", lo: self.lo, hi: self.hi });
        }
        let lo = if self.lo == 1.0 { 0.0 } else { ulps_down(libm::log(self.lo), LIBM_ULPS) };
        let hi = if self.hi == 1.0 { 0.0 } else { ulps_up(libm::log(self.hi), LIBM_ULPS) };
        Interval::checked(lo, hi, "log")
    }

    pub fn abs(&self) -> Interval {
        if self.lo >= 0.0 {
            *self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Interval::raw(0.0, self.mag())
        }
    }

    pub fn sin(&self) -> Interval {
        trig(self, false)
    }

    pub fn cos(&self) -> Interval {
        trig(self, true)
    }
}

/// Enclosure of sin or cos over an interval. Extrema are included whenever
/// they may lie in the argument range; a spurious inclusion only widens.
fn trig(x: &Interval, cosine: bool) -> Interval {
    if x.width() >= TAU || x.mag() > 1.0e6 {
        return Interval::raw(-1.0, 1.0);
    }
    let f = |v: f64| if cosine { libm::cos(v) } else { libm::sin(v) };
    let point = |v: f64| -> Interval {
        if v == 0.0 {
            let c = if cosine { 1.0 } else { 0.0 };
            return Interval::point(c);
        }
        let y = f(v);
        Interval::raw(ulps_down(y, LIBM_ULPS).max(-1.0), ulps_up(y, LIBM_ULPS).min(1.0))
    };
    let mut r = point(x.lo).hull(&point(x.hi));
    // maxima at phase_max + 2k pi, minima at phase_max + pi + 2k pi
    let phase_max = if cosine { 0.0 } else { FRAC_PI_2 };
    let slop = 1e-9;
    let hits = |phase: f64| -> bool {
        let a = (x.lo - phase) / TAU;
        let b = (x.hi - phase) / TAU;
        libm::floor(b + slop) >= libm::ceil(a - slop)
    };
    if hits(phase_max) {
        r = Interval::raw(r.lo, 1.0);
    }
    if hits(phase_max + PI) {
        r = Interval::raw(-1.0, r.hi);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(f64::NAN, 0.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn sin_over_peak_reaches_one() {
        let s = iv(1.0, 2.0).sin();
        assert_eq!(s.hi(), 1.0);
        assert!(s.lo() <= libm::sin(1.0));
    }

    #[test]
    fn cos_over_zero_reaches_one() {
        let c = iv(-0.1, 0.1).cos();
        assert_eq!(c.hi(), 1.0);
        assert!(c.lo() <= libm::cos(0.1));
    }

    #[test]
    fn exp_contains_endpoints() {
        let e = iv(0.0, 0.1).exp().unwrap();
        assert_eq!(e.lo(), 1.0);
        assert!(e.hi() >= libm::exp(0.1));
    }

    #[test]
    fn powi_even_straddling_zero() {
        let p = iv(-2.0, 1.0).powi(2).unwrap();
        assert_eq!(p.lo(), 0.0);
        assert_eq!(p.hi(), 4.0);
        let q = iv(-2.0, 1.0).powi(3).unwrap();
        assert_eq!((q.lo(), q.hi()), (-8.0, 1.0));
    }

    #[test]
    fn division_by_zero_interval_fails() {
        assert!(iv(1.0, 2.0).div(&iv(-1.0, 1.0)).is_err());
        assert!(iv(-1.0, 1.0).sqrt().is_err());
        assert!(iv(0.0, 1.0).ln().is_err());
    }
}
