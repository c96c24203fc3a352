//! Affine arithmetic with rigorous floating-point error accounting.
//!
//! An [`AffineForm`] `x0 + sum_i x_i e_i + s * d` denotes the set of values
//! obtained when every noise symbol `e_i` and the anonymous slack symbol `d`
//! range over `[-1, 1]`. Symbols are identified by [`NoiseId`]s; forms that
//! mention the same id are correlated through it. The slack term is never
//! shared: two forms with slack are treated as independent in that part.
//!
//! Every coefficient is computed in floating point and the rounding error of
//! each operation is bounded (via error-free transformations) and added to
//! the slack, so the concretization of a result always contains the exact
//! real result for every valuation of the symbols.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::rounding::*;
use crate::trivalent::Trivalent;

/// Coefficients smaller than this are folded into the slack.
pub const PRUNE_THRESHOLD: f64 = 1e-300;

/// Identifier of a noise symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NoiseId(pub u64);

/// Provider of fresh noise symbols for nonlinear operations.
///
/// Returning `None` asks the operation to put the new deviation into the
/// slack instead, which keeps forms short when correlations are not needed.
pub trait NoiseSource {
    fn fresh(&mut self) -> Option<NoiseId>;
}

/// Sequential noise-symbol allocator over a private id range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseAlloc {
    next: u64,
    end: u64,
}

impl NoiseAlloc {
    /// Size of the id range owned by one simulation branch.
    pub const BRANCH_STRIDE: u64 = 1 << 40;

    pub fn new() -> Self {
        Self::for_branch(0)
    }

    /// Allocator for branch number `index`. Ranges of distinct branches are
    /// disjoint, and a branch created later only issues ids above every id
    /// of the branches created before it.
    pub fn for_branch(index: u64) -> Self {
        NoiseAlloc { next: index * Self::BRANCH_STRIDE, end: (index + 1) * Self::BRANCH_STRIDE }
    }

    /// The id the next call to `fresh` will return.
    pub fn peek(&self) -> NoiseId {
        NoiseId(self.next)
    }

    pub fn issue(&mut self) -> NoiseId {
        assert!(self.next < self.end, "noise symbol range exhausted");
        let id = NoiseId(self.next);
        self.next += 1;
        id
    }
}

impl Default for NoiseAlloc {
    fn default() -> Self {
        Self::new()
    }
}

impl NoiseSource for NoiseAlloc {
    fn fresh(&mut self) -> Option<NoiseId> {
        Some(self.issue())
    }
}

/// Noise source that never creates symbols (all new deviations become slack).
#[derive(Clone, Copy, Debug, Default)]
pub struct SlackOnly;

impl NoiseSource for SlackOnly {
    fn fresh(&mut self) -> Option<NoiseId> {
        None
    }
}

/// Comparison of an affine quantity against zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Rel {
    pub fn is_strict(self) -> bool {
        matches!(self, Rel::Lt | Rel::Gt)
    }

    pub fn strict(self) -> Rel {
        match self {
            Rel::Le => Rel::Lt,
            Rel::Ge => Rel::Gt,
            r => r,
        }
    }

    /// Relation obtained when both sides are swapped (`a < b` iff `b > a`).
    pub fn flip(self) -> Rel {
        match self {
            Rel::Lt => Rel::Gt,
            Rel::Le => Rel::Ge,
            Rel::Gt => Rel::Lt,
            Rel::Ge => Rel::Le,
        }
    }

    pub fn holds(self, v: f64) -> bool {
        match self {
            Rel::Lt => v < 0.0,
            Rel::Le => v <= 0.0,
            Rel::Gt => v > 0.0,
            Rel::Ge => v >= 0.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }
}

/// Upward-rounded accumulator for rounding errors.
#[derive(Clone, Copy, Default)]
struct ErrAcc(f64);

impl ErrAcc {
    #[inline]
    fn add(&mut self, e: f64) {
        if e != 0.0 {
            self.0 = add_up(self.0, e);
        }
    }
}

/// `a*x + b*y` rounded to nearest, with the rounding error added to `err`.
#[inline]
fn lin2(a: f64, x: f64, b: f64, y: f64, err: &mut ErrAcc) -> f64 {
    let (p1, e1) = prod_err(a, x);
    let (p2, e2) = prod_err(b, y);
    let (s, e3) = two_sum(p1, p2);
    err.add(e1);
    err.add(e2);
    err.add(e3.abs());
    s
}

/// An affine form over noise symbols, see the module documentation.
#[derive(Clone, PartialEq)]
pub struct AffineForm {
    center: f64,
    /// Sorted by id, no zero coefficients.
    terms: Vec<(NoiseId, f64)>,
    slack: f64,
}

impl fmt::Debug for AffineForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.center)?;
        for (id, c) in &self.terms {
            write!(f, " + {:?}*e{}", c, id.0)?;
        }
        if self.slack > 0.0 {
            write!(f, " +- {:?}", self.slack)?;
        }
        Ok(())
    }
}

impl AffineForm {
    pub fn constant(c: f64) -> Self {
        AffineForm { center: c, terms: Vec::new(), slack: 0.0 }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Build from raw parts. Terms are sorted and merged, zero coefficients
    /// dropped. Intended for tests and deserialization.
    pub fn from_parts(center: f64, mut terms: Vec<(NoiseId, f64)>, slack: f64) -> Self {
        assert!(slack >= 0.0);
        terms.sort_by_key(|t| t.0);
        let mut out: Vec<(NoiseId, f64)> = Vec::with_capacity(terms.len());
        let mut err = ErrAcc::default();
        for (id, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == id => {
                    let (s, e) = two_sum(last.1, c);
                    err.add(e.abs());
                    last.1 = s;
                }
                _ => out.push((id, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        AffineForm { center, terms: out, slack: add_up(slack, err.0) }
    }

    /// Interval `[lo, hi]` as `mid + rad * e_new`; the rounding of the
    /// midpoint is absorbed in the radius so the result contains `iv`.
    pub fn from_interval<S: NoiseSource + ?Sized>(iv: Interval, src: &mut S) -> Self {
        if iv.is_point() {
            return Self::constant(iv.lo());
        }
        let m = iv.mid();
        let r = iv.rad();
        let mut f = Self::constant(m);
        f.push_deviation(r, src);
        f
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn terms(&self) -> &[(NoiseId, f64)] {
        &self.terms
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    /// Move the terms with ids at or above `first` into the slack.
    pub fn fold_from(&self, first: NoiseId) -> AffineForm {
        let cut = self.terms.partition_point(|t| t.0 < first);
        if cut == self.terms.len() {
            return self.clone();
        }
        let moved = sum_up(self.terms[cut..].iter().map(|t| t.1.abs()));
        let mut out = AffineForm { center: self.center, terms: self.terms[..cut].to_vec(), slack: add_up(self.slack, moved) };
        out.cover(self.to_interval());
        out
    }

    pub fn coeff(&self, id: NoiseId) -> f64 {
        self.terms.binary_search_by_key(&id, |t| t.0).map(|i| self.terms[i].1).unwrap_or(0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty() && self.slack == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.center.is_finite() && self.slack.is_finite() && self.terms.iter().all(|t| t.1.is_finite())
    }

    /// Upper bound of `sum |x_i| + slack`.
    pub fn radius(&self) -> f64 {
        add_up(sum_up(self.terms.iter().map(|t| t.1.abs())), self.slack)
    }

    /// Outward-rounded concretization.
    pub fn to_interval(&self) -> Interval {
        let r = self.radius();
        Interval::raw(sub_down(self.center, r), add_up(self.center, r))
    }

    /// Value of the form for a valuation of the symbols (`eps(id)` in
    /// `[-1, 1]`) and of the slack symbol (`slack_eps` in `[-1, 1]`),
    /// evaluated in plain floating point. Used by sampling oracles.
    pub fn eval_at(&self, eps: impl Fn(NoiseId) -> f64, slack_eps: f64) -> f64 {
        self.center + self.terms.iter().map(|(id, c)| c * eps(*id)).sum::<f64>() + self.slack * slack_eps
    }

    fn push_deviation<S: NoiseSource + ?Sized>(&mut self, mag: f64, src: &mut S) {
        if mag == 0.0 {
            return;
        }
        match src.fresh() {
            Some(id) if mag >= PRUNE_THRESHOLD => {
                debug_assert!(self.terms.last().map_or(true, |t| t.0 < id));
                self.terms.push((id, mag));
            }
            _ => self.slack = add_up(self.slack, mag),
        }
    }

    /// Widen the slack until the concretization covers `need`. Recombining
    /// terms rounds differently from the operands' own concretizations, so
    /// the two can disagree in the last place.
    fn cover(&mut self, need: Interval) {
        let have = self.to_interval();
        let short = sub_up(have.lo(), need.lo()).max(sub_up(need.hi(), have.hi()));
        if short > 0.0 {
            self.slack = add_up(self.slack, short);
        }
    }

    /// `a*x + b*y + c`, exact per symbol up to rounding which goes to slack.
    pub fn combine(a: f64, x: &AffineForm, b: f64, y: &AffineForm, c: f64) -> AffineForm {
        let mut err = ErrAcc::default();
        let c0 = lin2(a, x.center, b, y.center, &mut err);
        let (center, e) = two_sum(c0, c);
        err.add(e.abs());
        let mut terms = Vec::with_capacity(x.terms.len().max(y.terms.len()));
        let (mut i, mut j) = (0, 0);
        let mut push = |id: NoiseId, v: f64, err: &mut ErrAcc| {
            if v.abs() < PRUNE_THRESHOLD {
                err.add(v.abs());
            } else {
                terms.push((id, v));
            }
        };
        while i < x.terms.len() || j < y.terms.len() {
            let ord = match (x.terms.get(i), y.terms.get(j)) {
                (Some(p), Some(q)) => p.0.cmp(&q.0),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    let (id, v) = x.terms[i];
                    let (p, e) = prod_err(a, v);
                    err.add(e);
                    push(id, p, &mut err);
                    i += 1;
                }
                Ordering::Greater => {
                    let (id, v) = y.terms[j];
                    let (p, e) = prod_err(b, v);
                    err.add(e);
                    push(id, p, &mut err);
                    j += 1;
                }
                Ordering::Equal => {
                    let id = x.terms[i].0;
                    let v = lin2(a, x.terms[i].1, b, y.terms[j].1, &mut err);
                    push(id, v, &mut err);
                    i += 1;
                    j += 1;
                }
            }
        }
        let slack = add_up(add_up(mul_up(a.abs(), x.slack), mul_up(b.abs(), y.slack)), err.0);
        AffineForm { center, terms, slack }
    }

    pub fn add(&self, other: &AffineForm) -> AffineForm {
        Self::combine(1.0, self, 1.0, other, 0.0)
    }

    pub fn sub(&self, other: &AffineForm) -> AffineForm {
        Self::combine(1.0, self, -1.0, other, 0.0)
    }

    pub fn neg(&self) -> AffineForm {
        AffineForm {
            center: -self.center,
            terms: self.terms.iter().map(|&(id, c)| (id, -c)).collect(),
            slack: self.slack,
        }
    }

    pub fn scale(&self, k: f64) -> AffineForm {
        Self::combine(k, self, 0.0, &AffineForm::zero(), 0.0)
    }

    pub fn add_const(&self, c: f64) -> AffineForm {
        Self::combine(1.0, self, 0.0, &AffineForm::zero(), c)
    }

    /// Multiply by the exact rational `num / den`.
    pub fn scale_ratio(&self, num: f64, den: f64) -> AffineForm {
        let scaled = if num == 1.0 { self.clone() } else { self.scale(num) };
        if den == 1.0 {
            return scaled;
        }
        scaled.div_const(den)
    }

    /// Division by a nonzero float constant.
    pub fn div_const(&self, d: f64) -> AffineForm {
        debug_assert!(d != 0.0);
        let q = 1.0 / d;
        if q * d == 1.0 && two_prod(q, d).1 == Some(0.0) {
            // power of two: exact
            return self.scale(q);
        }
        let mut err = ErrAcc::default();
        let div = |v: f64, err: &mut ErrAcc| -> f64 {
            let r = v / d;
            let lo = div_down(v, d);
            let hi = div_up(v, d);
            err.add((hi - r).max(r - lo));
            r
        };
        let center = div(self.center, &mut err);
        let mut terms = Vec::with_capacity(self.terms.len());
        for &(id, c) in &self.terms {
            let v = div(c, &mut err);
            if v.abs() < PRUNE_THRESHOLD {
                err.add(v.abs());
            } else {
                terms.push((id, v));
            }
        }
        let slack = add_up(div_up(self.slack, d.abs()), err.0);
        AffineForm { center, terms, slack }
    }

    /// Product: center `x0*y0`, linear part `x0*y_i + y0*x_i`, and a fresh
    /// symbol of magnitude `rad(x)*rad(y)` for the quadratic remainder.
    pub fn mul<S: NoiseSource + ?Sized>(&self, other: &AffineForm, src: &mut S) -> AffineForm {
        if other.is_constant() {
            return self.scale(other.center);
        }
        if self.is_constant() {
            return other.scale(self.center);
        }
        let lin = Self::combine(other.center, self, self.center, other, 0.0);
        // combine computed x0*y0 twice; undo one copy
        let mut err = ErrAcc::default();
        let (p, e) = prod_err(self.center, other.center);
        err.add(e);
        let (center, e2) = two_sum(lin.center, -p);
        err.add(e2.abs());
        // x0*y0 in lin is inexact by at most the bound already in lin.slack
        // plus the error of subtracting p, which is accounted above.
        let rx = Self::radius_of(&self.terms, self.slack);
        let ry = Self::radius_of(&other.terms, other.slack);
        let nu = mul_up(rx, ry);
        let mut out = AffineForm { center, terms: lin.terms, slack: add_up(lin.slack, err.0) };
        // combine already folded |y0|*sx + |x0|*sy into the slack
        out.push_deviation(nu, src);
        out
    }

    fn radius_of(terms: &[(NoiseId, f64)], slack: f64) -> f64 {
        add_up(sum_up(terms.iter().map(|t| t.1.abs())), slack)
    }

    /// First-order Taylor expansion about the center with a Lagrange
    /// remainder enclosed by `f2` (the second derivative over the whole
    /// range). `f0` and `d1` enclose `f(c)` and `f'(c)`; `range` encloses
    /// `f` over the whole input and replaces the expansion when the
    /// remainder alone exceeds it.
    fn taylor<S: NoiseSource + ?Sized>(
        &self,
        f0: Interval,
        d1: Interval,
        f2: Interval,
        range: Interval,
        src: &mut S,
    ) -> AffineForm {
        let r = self.radius();
        let half_r2 = mul_up(mul_up(r, r), 0.5);
        let rem = f2.mul(&Interval::raw(0.0, half_r2));
        let d = d1.mid();
        let mut err = ErrAcc::default();
        let (center, e) = two_sum(f0.mid(), rem.mid());
        err.add(e.abs());
        err.add(f0.rad());
        // (f'(c) - d) * (x - c)
        let dd = sub_up(d1.hi(), d).max(sub_up(d, d1.lo()));
        err.add(mul_up(dd, r));
        err.add(mul_up(d.abs(), self.slack));
        let mut terms = Vec::with_capacity(self.terms.len() + 1);
        for &(id, c) in &self.terms {
            let (p, e) = prod_err(d, c);
            err.add(e);
            if p.abs() < PRUNE_THRESHOLD {
                err.add(p.abs());
            } else {
                terms.push((id, p));
            }
        }
        // The interval range only wins when the uncorrelated part of the
        // expansion alone is already wider; otherwise correlation is lost.
        if add_up(err.0, rem.rad()) > range.rad() {
            return Self::from_interval(range, src);
        }
        let mut out = AffineForm { center, terms, slack: err.0 };
        out.push_deviation(rem.rad(), src);
        out
    }

    /// Result for a degenerate (single point) argument.
    fn at_point(f0: Interval) -> AffineForm {
        let m = f0.mid();
        AffineForm { center: m, terms: Vec::new(), slack: f0.rad() }
    }

    pub fn sqr<S: NoiseSource + ?Sized>(&self, src: &mut S) -> AffineForm {
        self.powi(2, src).expect("square is total")
    }

    pub fn powi<S: NoiseSource + ?Sized>(&self, n: i32, src: &mut S) -> Result<AffineForm> {
        match n {
            0 => return Ok(Self::constant(1.0)),
            1 => return Ok(self.clone()),
            _ => {}
        }
        let x = self.to_interval();
        let range = x.powi(n)?;
        let c = Interval::point(self.center);
        let f0 = c.powi(n)?;
        if self.radius() == 0.0 {
            return Ok(Self::at_point(f0));
        }
        let nf = Interval::point(n as f64);
        let d1 = c.powi(n - 1)?.mul(&nf);
        let f2 = if n == 2 {
            Interval::point(2.0)
        } else {
            x.powi(n - 2)?.mul(&nf).mul(&Interval::point((n - 1) as f64))
        };
        Ok(self.taylor(f0, d1, f2, range, src))
    }

    pub fn recip<S: NoiseSource + ?Sized>(&self, src: &mut S) -> Result<AffineForm> {
        let x = self.to_interval();
        let range = x.recip()?;
        let c = Interval::point(self.center);
        let f0 = c.recip()?;
        if self.radius() == 0.0 {
            return Ok(Self::at_point(f0));
        }
        let d1 = c.sqr().recip()?.neg();
        let f2 = x.powi(3)?.recip()?.scale(2.0);
        Ok(self.taylor(f0, d1, f2, range, src))
    }

    pub fn div<S: NoiseSource + ?Sized>(&self, other: &AffineForm, src: &mut S) -> Result<AffineForm> {
        if other.is_constant() {
            if other.center == 0.0 {
                return Err(Error::DivisionByZero { lo: 0.0, hi: 0.0 });
            }
            return Ok(self.div_const(other.center));
        }
        let r = other.recip(src)?;
        Ok(self.mul(&r, src))
    }

    pub fn sqrt<S: NoiseSource + ?Sized>(&self, src: &mut S) -> Result<AffineForm> {
        let x = self.to_interval();
        let range = x.sqrt()?;
        let c = Interval::point(self.center);
        let f0 = c.sqrt()?;
        if self.radius() == 0.0 {
            return Ok(Self::at_point(f0));
        }
        if x.lo() <= 0.0 {
            return Ok(Self::from_interval(range, src));
        }
        let d1 = f0.scale(2.0).recip()?;
        let f2 = x.mul(&range).recip()?.scale(-0.25);
        Ok(self.taylor(f0, d1, f2, range, src))
    }

    pub fn exp<S: NoiseSource + ?Sized>(&self, src: &mut S) -> Result<AffineForm> {
        let x = self.to_interval();
        let range = x.exp()?;
        let f0 = Interval::point(self.center).exp()?;
        if self.radius() == 0.0 {
            return Ok(Self::at_point(f0));
        }
        Ok(self.taylor(f0, f0, range, range, src))
    }

    pub fn ln<S: NoiseSource + ?Sized>(&self, src: &mut S) -> Result<AffineForm> {
        let x = self.to_interval();
        let range = x.ln()?;
        let c = Interval::point(self.center);
        let f0 = c.ln()?;
        if self.radius() == 0.0 {
            return Ok(Self::at_point(f0));
        }
        let d1 = c.recip()?;
        let f2 = x.sqr().recip()?.neg();
        Ok(self.taylor(f0, d1, f2, range, src))
    }

    pub fn sin<S: NoiseSource + ?Sized>(&self, src: &mut S) -> AffineForm {
        let x = self.to_interval();
        let c = Interval::point(self.center);
        let f0 = c.sin();
        if self.radius() == 0.0 {
            return Self::at_point(f0);
        }
        let range = x.sin();
        self.taylor(f0, c.cos(), range.neg(), range, src)
    }

    pub fn cos<S: NoiseSource + ?Sized>(&self, src: &mut S) -> AffineForm {
        let x = self.to_interval();
        let c = Interval::point(self.center);
        let f0 = c.cos();
        if self.radius() == 0.0 {
            return Self::at_point(f0);
        }
        let range = x.cos();
        self.taylor(f0, c.sin().neg(), range.neg(), range, src)
    }

    pub fn abs<S: NoiseSource + ?Sized>(&self, src: &mut S) -> AffineForm {
        let x = self.to_interval();
        if x.lo() >= 0.0 {
            self.clone()
        } else if x.hi() <= 0.0 {
            self.neg()
        } else {
            Self::from_interval(x.abs(), src)
        }
    }

    /// Join of two forms: for every valuation of the symbols the result
    /// contains both operands. Shared symbols keep the coefficient of
    /// smaller magnitude when the signs agree; everything else, together
    /// with the spread of the centers, goes into one fresh symbol.
    pub fn hull<S: NoiseSource + ?Sized>(&self, other: &AffineForm, src: &mut S) -> AffineForm {
        let mut kept: Vec<(NoiseId, f64)> = Vec::new();
        let mut dx = ErrAcc(self.slack);
        let mut dy = ErrAcc(other.slack);
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let ord = match (self.terms.get(i), other.terms.get(j)) {
                (Some(p), Some(q)) => p.0.cmp(&q.0),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    dx.add(self.terms[i].1.abs());
                    i += 1;
                }
                Ordering::Greater => {
                    dy.add(other.terms[j].1.abs());
                    j += 1;
                }
                Ordering::Equal => {
                    let (id, a) = self.terms[i];
                    let b = other.terms[j].1;
                    if (a > 0.0) == (b > 0.0) {
                        let g = if a.abs() <= b.abs() { a } else { b };
                        kept.push((id, g));
                        dx.add(sub_up(a.abs(), g.abs()));
                        dy.add(sub_up(b.abs(), g.abs()));
                    } else {
                        dx.add(a.abs());
                        dy.add(b.abs());
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        let ix = Interval::raw(sub_down(self.center, dx.0), add_up(self.center, dx.0));
        let iy = Interval::raw(sub_down(other.center, dy.0), add_up(other.center, dy.0));
        let h = ix.hull(&iy);
        let mut out = AffineForm { center: h.mid(), terms: kept, slack: 0.0 };
        out.push_deviation(h.rad(), src);
        out.cover(self.to_interval().hull(&other.to_interval()));
        out
    }

    /// Sign test against zero in three-valued logic.
    pub fn compare(&self, rel: Rel) -> Trivalent {
        let iv = self.to_interval();
        let (lo, hi) = (iv.lo(), iv.hi());
        let (t, f) = match rel {
            Rel::Lt => (hi < 0.0, lo >= 0.0),
            Rel::Le => (hi <= 0.0, lo > 0.0),
            Rel::Gt => (lo > 0.0, hi <= 0.0),
            Rel::Ge => (lo >= 0.0, hi < 0.0),
        };
        if t {
            Trivalent::True
        } else if f {
            Trivalent::False
        } else {
            Trivalent::Unknown
        }
    }

    /// Keep at most `budget` symbols: the `budget - 1` largest survive and
    /// the rest is folded into one fresh symbol.
    pub fn condense<S: NoiseSource + ?Sized>(&self, budget: usize, src: &mut S) -> AffineForm {
        assert!(budget >= 1);
        if self.terms.len() <= budget {
            return self.clone();
        }
        let mut order: Vec<usize> = (0..self.terms.len()).collect();
        order.sort_by(|&a, &b| {
            self.terms[b].1.abs().partial_cmp(&self.terms[a].1.abs()).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        });
        let keep = budget - 1;
        let mut kept: Vec<(NoiseId, f64)> = order[..keep].iter().map(|&k| self.terms[k]).collect();
        kept.sort_by_key(|t| t.0);
        let folded = sum_up(order[keep..].iter().map(|&k| self.terms[k].1.abs()));
        let mut out = AffineForm { center: self.center, terms: kept, slack: self.slack };
        out.push_deviation(folded, src);
        out.cover(self.to_interval());
        out
    }

    /// Drop every symbol not in `keep` (sorted), folding its magnitude into
    /// one fresh symbol.
    pub fn restrict<S: NoiseSource + ?Sized>(&self, keep: &[NoiseId], src: &mut S) -> AffineForm {
        let mut kept = Vec::with_capacity(keep.len().min(self.terms.len()));
        let mut folded = ErrAcc::default();
        for &(id, c) in &self.terms {
            if keep.binary_search(&id).is_ok() {
                kept.push((id, c));
            } else {
                folded.add(c.abs());
            }
        }
        let mut out = AffineForm { center: self.center, terms: kept, slack: self.slack };
        out.push_deviation(folded.0, src);
        out.cover(self.to_interval());
        out
    }

    /// Replace the symbol `id` by the form `by`.
    pub fn substitute(&self, id: NoiseId, by: &AffineForm) -> AffineForm {
        let c = self.coeff(id);
        if c == 0.0 {
            return self.clone();
        }
        let mut rest = self.clone();
        rest.terms.retain(|t| t.0 != id);
        AffineForm::combine(1.0, &rest, c, by, 0.0)
    }

    /// Solve `self = 0` for the symbol `id`. The result is `base + rho e`
    /// with `e` fresh, where `base` only involves symbols numbered below
    /// `id` and `rho` collects every other deviation. Returns `None` when
    /// `id` is absent or when `rho >= 1`, i.e. the constraint says nothing
    /// beyond `id` lying in `[-1, 1]`.
    pub fn solve_for<S: NoiseSource + ?Sized>(&self, id: NoiseId, src: &mut S) -> Option<AffineForm> {
        let b = self.coeff(id);
        if b == 0.0 || !b.is_finite() {
            return None;
        }
        let mut other = ErrAcc(self.slack);
        let mut below = Vec::new();
        for &(k, c) in &self.terms {
            if k < id {
                below.push((k, c));
            } else if k > id {
                other.add(c.abs());
            }
        }
        let rho = div_up(other.0, b.abs());
        if !(rho < 1.0) {
            return None;
        }
        let base = AffineForm { center: self.center, terms: below, slack: 0.0 }.scale_ratio(-1.0, b);
        let mut out = base;
        out.push_deviation(rho, src);
        Some(out)
    }

    /// Turn the slack into a regular symbol so later operations can cancel it.
    pub fn absorb_slack<S: NoiseSource + ?Sized>(&self, src: &mut S) -> AffineForm {
        if self.slack == 0.0 {
            return self.clone();
        }
        let mut out = AffineForm { center: self.center, terms: self.terms.clone(), slack: 0.0 };
        out.push_deviation(self.slack, src);
        out
    }
}

/// Joint condensation of several forms sharing one symbol space: the kept
/// symbols are those with the largest total magnitude across all forms.
pub fn condense_joint<S: NoiseSource + ?Sized>(forms: &[AffineForm], budget: usize, src: &mut S) -> Vec<AffineForm> {
    assert!(budget >= 1);
    if forms.iter().all(|f| f.terms.len() <= budget) {
        return forms.to_vec();
    }
    let mut score: Vec<(NoiseId, f64)> = Vec::new();
    for f in forms {
        score.extend(f.terms.iter().map(|&(id, c)| (id, c.abs())));
    }
    score.sort_by_key(|t| t.0);
    let mut merged: Vec<(NoiseId, f64)> = Vec::new();
    for (id, m) in score {
        match merged.last_mut() {
            Some(l) if l.0 == id => l.1 += m,
            _ => merged.push((id, m)),
        }
    }
    merged.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    merged.truncate(budget - 1);
    let mut keep: Vec<NoiseId> = merged.into_iter().map(|t| t.0).collect();
    keep.sort();
    forms.iter().map(|f| f.restrict(&keep, src)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn from_interval_examples() {
        let mut al = NoiseAlloc::new();
        let x = AffineForm::from_interval(iv(1.0, 3.0), &mut al);
        assert_eq!(x.center(), 2.0);
        assert_eq!(x.terms(), &[(NoiseId(0), 1.0)]);
        assert_eq!(x.slack(), 0.0);
        let p = AffineForm::from_interval(iv(5.0, 5.0), &mut al);
        assert!(p.is_constant());
        assert_eq!(p.center(), 5.0);
        let u = AffineForm::from_interval(iv(0.0, 1.0), &mut al);
        assert_eq!((u.center(), u.terms()[0].1), (0.5, 0.5));
        assert_eq!(x.to_interval(), iv(1.0, 3.0));
    }

    #[test]
    fn combine_examples() {
        let mut al = NoiseAlloc::new();
        let x = AffineForm::from_interval(iv(0.0, 1.0), &mut al);
        let d = x.sub(&x);
        assert_eq!(d.to_interval(), iv(0.0, 0.0));
        let e1 = AffineForm::from_parts(2.0, vec![(NoiseId(0), 1.0)], 0.0);
        let r = AffineForm::combine(2.0, &e1, 0.0, &AffineForm::zero(), 1.0);
        assert_eq!(r, AffineForm::from_parts(5.0, vec![(NoiseId(0), 2.0)], 0.0));
        let a = AffineForm::from_parts(1.0, vec![(NoiseId(1), 1.0)], 0.0);
        let b = AffineForm::from_parts(1.0, vec![(NoiseId(2), 1.0)], 0.0);
        assert_eq!(a.add(&b), AffineForm::from_parts(2.0, vec![(NoiseId(1), 1.0), (NoiseId(2), 1.0)], 0.0));
    }

    #[test]
    fn mul_example_from_formula() {
        let mut al = NoiseAlloc::new();
        let x = AffineForm::from_interval(iv(0.0, 1.0), &mut al);
        let p = x.mul(&x, &mut al);
        assert_eq!(p.center(), 0.25);
        assert_eq!(p.coeff(NoiseId(0)), 0.5);
        assert_eq!(p.coeff(NoiseId(1)), 0.25);
        assert_eq!(p.to_interval(), iv(-0.5, 1.0));
        let z = x.mul(&AffineForm::zero(), &mut al);
        assert_eq!(z.to_interval(), iv(0.0, 0.0));
        let y = AffineForm::from_parts(2.0, vec![(NoiseId(0), 1.0)], 0.0);
        let s = y.mul(&AffineForm::constant(3.0), &mut al);
        assert_eq!(s, AffineForm::from_parts(6.0, vec![(NoiseId(0), 3.0)], 0.0));
    }

    #[test]
    fn nonlinear_examples() {
        let mut al = NoiseAlloc::new();
        let zero = AffineForm::zero();
        assert_eq!(zero.sin(&mut al).to_interval(), iv(0.0, 0.0));
        let x = AffineForm::from_interval(iv(0.0, 0.1), &mut al);
        let e = x.exp(&mut al).unwrap().to_interval();
        assert!(e.lo() <= 1.0 && e.hi() >= libm::exp(0.1));
        let w = AffineForm::from_interval(iv(-1.0, 1.0), &mut al);
        assert!(matches!(w.sqrt(&mut al), Err(Error::Domain { .. })));
        assert!(w.recip(&mut al).is_err());
    }

    #[test]
    fn to_interval_sums_magnitudes() {
        let f = AffineForm::from_parts(0.25, vec![(NoiseId(0), 0.5), (NoiseId(1), 0.25)], 0.0);
        assert_eq!(f.to_interval(), iv(-0.5, 1.0));
        assert_eq!(AffineForm::constant(5.0).to_interval(), iv(5.0, 5.0));
    }

    #[test]
    fn hull_examples() {
        let mut al = NoiseAlloc::for_branch(1);
        let x = AffineForm::from_parts(1.0, vec![(NoiseId(0), 1.0)], 0.0);
        let y = AffineForm::from_parts(3.0, vec![(NoiseId(0), 1.0)], 0.0);
        let h = x.hull(&y, &mut al);
        assert!(h.to_interval().contains_interval(&iv(0.0, 4.0)));
        // the shared symbol survives
        assert_eq!(h.coeff(NoiseId(0)), 1.0);
        let hh = x.hull(&x, &mut al);
        assert_eq!(hh.to_interval(), x.to_interval());
        let a = AffineForm::constant(0.0).hull(&AffineForm::constant(2.0), &mut al);
        assert!(a.to_interval().contains_interval(&iv(0.0, 2.0)));
    }

    #[test]
    fn compare_examples() {
        let mut al = NoiseAlloc::new();
        let f = |a, b, al: &mut NoiseAlloc| AffineForm::from_interval(iv(a, b), al);
        assert_eq!(f(-2.0, -1.0, &mut al).compare(Rel::Le), Trivalent::True);
        assert_eq!(f(-1.0, 1.0, &mut al).compare(Rel::Le), Trivalent::Unknown);
        assert_eq!(f(1.0, 2.0, &mut al).compare(Rel::Le), Trivalent::False);
        assert_eq!(AffineForm::zero().compare(Rel::Lt), Trivalent::False);
        assert_eq!(AffineForm::zero().compare(Rel::Le), Trivalent::True);
    }

    #[test]
    fn condense_examples() {
        let mut al = NoiseAlloc::for_branch(1);
        let x = AffineForm::from_parts(1.0, vec![(NoiseId(1), 1.0), (NoiseId(2), 1.0), (NoiseId(3), 1.0)], 0.0);
        let c = x.condense(1, &mut al);
        assert_eq!(c.terms().len(), 1);
        assert_eq!(c.terms()[0].1, 3.0);
        assert_eq!(c.to_interval(), iv(-2.0, 4.0));
        assert_eq!(x.condense(3, &mut al), x);
        assert_eq!(AffineForm::constant(5.0).condense(1, &mut al), AffineForm::constant(5.0));
    }

    #[test]
    fn slack_only_source_keeps_forms_short() {
        let x = AffineForm::from_parts(0.5, vec![(NoiseId(0), 0.5)], 0.0);
        let p = x.mul(&x, &mut SlackOnly);
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.slack(), 0.25);
    }
}
