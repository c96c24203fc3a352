//! Guaranteed Hermite interpolation between integration nodes.
//!
//! Between nodes `t_0 < ... < t_n` with values `x_i` and derivatives `x_i'`,
//! the Hermite polynomial `p` of degree `N = 2n + 1` satisfies
//! `x(t) = p(t) + x^(N+1)(xi) / (N+1)! * prod (t - t_i)^2`, and
//! `x^(N+1) = f^(N)` along the flow. Enclosing `f^(N)` over the step hull
//! gives a remainder interval, so `p + remainder` encloses every trajectory.

use alloc::vec::Vec;

use crate::affine::{AffineForm, NoiseSource, SlackOnly};
use crate::error::{Error, Result};
use crate::integrator::{eval_tape_box, FlowModel};
use crate::interval::Interval;

/// Cubic Hermite basis in the scaled variable `tau = (t - t0) / h`:
/// `(H00, H10, H01, H11)` with `p = x0 H00 + h x0' H10 + x1 H01 + h x1' H11`.
pub fn cubic_basis(tau: f64) -> [f64; 4] {
    let t2 = tau * tau;
    [1.0 + t2 * (2.0 * tau - 3.0), tau * (tau - 1.0) * (tau - 1.0), t2 * (3.0 - 2.0 * tau), t2 * (tau - 1.0)]
}

/// Scalar cubic Hermite interpolant on `[t0, t0 + h]`.
pub fn cubic_hermite_f64(x0: f64, d0: f64, x1: f64, d1: f64, h: f64, tau: f64) -> f64 {
    let [a, b, c, d] = cubic_basis(tau);
    x0 * a + h * d0 * b + x1 * c + h * d1 * d
}

/// Basis functions `A_i(t) = (1 - 2 (t - t_i) l_i'(t_i)) l_i(t)^2` and
/// `B_i(t) = (t - t_i) l_i(t)^2` built on the Lagrange polynomials `l_i`.
pub fn hermite_birkhoff_basis(ts: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let n = ts.len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let mut l = 1.0;
        let mut dl = 0.0;
        for j in 0..n {
            if j != i {
                l *= (t - ts[j]) / (ts[i] - ts[j]);
                dl += 1.0 / (ts[i] - ts[j]);
            }
        }
        let l2 = l * l;
        a.push((1.0 - 2.0 * (t - ts[i]) * dl) * l2);
        b.push((t - ts[i]) * l2);
    }
    (a, b)
}

/// Scalar Hermite-Birkhoff interpolant through values and first derivatives.
pub fn hermite_birkhoff_f64(ts: &[f64], xs: &[f64], ds: &[f64], t: f64) -> f64 {
    let (a, b) = hermite_birkhoff_basis(ts, t);
    (0..ts.len()).map(|i| xs[i] * a[i] + ds[i] * b[i]).sum()
}

/// Interpolation data over one span, with its remainder bound.
#[derive(Clone, Debug)]
pub struct GPoly {
    times: Vec<f64>,
    states: Vec<Vec<AffineForm>>,
    derivs: Vec<Vec<AffineForm>>,
    /// `f^(N)(span, hull) / (N+1)!` per component.
    rem_coef: Vec<Interval>,
    hull: Vec<Interval>,
}

impl GPoly {
    /// Build from node times and states; derivatives are re-evaluated as
    /// `f(t_i, x_i)`. `hull` must enclose every trajectory over the span.
    pub fn build<S: NoiseSource + ?Sized>(
        flow: &FlowModel,
        times: &[f64],
        states: &[Vec<AffineForm>],
        hull: &[Interval],
        src: &mut S,
    ) -> Result<GPoly> {
        if times.len() < 2 || times.len() != states.len() {
            return Err(Error::InvalidInput("interpolation needs at least two nodes with states".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("interpolation node times must be strictly increasing".into()));
        }
        let order = 2 * times.len() - 1;
        let tape = flow
            .derivative_tape(order)
            .ok_or_else(|| Error::Model(alloc::format!("derivative of order {} was not prepared", order)))?;
        let span = Interval::new(times[0], *times.last().unwrap())?;
        let fnn = eval_tape_box(tape, hull, span)?;
        let fact: f64 = (1..=order + 1).map(|k| k as f64).product();
        let rem_coef = fnn.iter().map(|iv| iv.div(&Interval::point(fact))).collect::<Result<_>>()?;
        let mut derivs = Vec::with_capacity(times.len());
        for (t, x) in times.iter().zip(states) {
            derivs.push(flow.eval(x, &AffineForm::constant(*t), src)?);
        }
        Ok(GPoly { times: times.to_vec(), states: states.to_vec(), derivs, rem_coef, hull: hull.to_vec() })
    }

    /// One cubic over consecutive spans, from the first start state to the
    /// last end state, with the union of their hulls.
    pub fn merge<S: NoiseSource + ?Sized>(flow: &FlowModel, parts: &[GPoly], src: &mut S) -> Result<GPoly> {
        let first = parts.first().ok_or_else(|| Error::InvalidInput("nothing to merge".into()))?;
        let last = parts.last().unwrap();
        let mut hull = first.hull.clone();
        for p in &parts[1..] {
            for (h, q) in hull.iter_mut().zip(&p.hull) {
                *h = h.hull(q);
            }
        }
        let times = [first.times[0], *last.times.last().unwrap()];
        let states = [first.states[0].clone(), last.states.last().unwrap().clone()];
        GPoly::build(flow, &times, &states, &hull, src)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn hull(&self) -> &[Interval] {
        &self.hull
    }

    /// Remainder enclosure factor `f^(N) / (N+1)!` per component.
    pub fn remainder_coefficients(&self) -> &[Interval] {
        &self.rem_coef
    }

    /// Map a time interval inside the span to the scaled variable.
    pub fn tau_of(&self, t: Interval) -> Result<Interval> {
        let (t0, t1) = self.span();
        let slack = 1e-12 * (t1 - t0).abs().max(t1.abs());
        if t.lo() < t0 - slack || t.hi() > t1 + slack {
            return Err(Error::InvalidInput(alloc::format!("time {} lies outside the interpolation span [{}, {}]", t, t0, t1)));
        }
        let h = Interval::point(t1).sub(&Interval::point(t0));
        let tau = t.sub(&Interval::point(t0)).div(&h)?;
        let lo = tau.lo().clamp(0.0, 1.0);
        let hi = tau.hi().clamp(lo, 1.0);
        Interval::new(lo, hi)
    }

    /// Enclosure of every trajectory at the times `t0 + tau h`, `tau ⊆ [0, 1]`.
    pub fn eval_tau<S: NoiseSource + ?Sized>(&self, tau: Interval, src: &mut S) -> Result<Vec<AffineForm>> {
        if self.times.len() == 2 {
            self.eval_cubic(tau, src)
        } else {
            let (t0, t1) = self.span();
            let t = Interval::point(t0).add(&tau.mul(&Interval::point(t1).sub(&Interval::point(t0))));
            self.eval_general(t, src)
        }
    }

    pub fn eval<S: NoiseSource + ?Sized>(&self, t: Interval, src: &mut S) -> Result<Vec<AffineForm>> {
        let tau = self.tau_of(t)?;
        self.eval_tau(tau, src)
    }

    /// Cubic case in Horner form: `p = a0 + tau (a1 + tau (a2 + tau a3))`.
    fn eval_cubic<S: NoiseSource + ?Sized>(&self, tau: Interval, src: &mut S) -> Result<Vec<AffineForm>> {
        let tf = AffineForm::from_interval(tau, src);
        self.eval_cubic_form(&tf, src)
    }

    /// Evaluate at a scaled time given as an affine form, so the result
    /// stays correlated with it. The form's range must lie in `[0, 1]` up to
    /// the outward rounding of building the form; the values it takes
    /// outside are never used as crossing times.
    pub fn eval_tau_form<S: NoiseSource + ?Sized>(&self, tf: &AffineForm, src: &mut S) -> Result<Vec<AffineForm>> {
        let r = tf.to_interval();
        let tau = Interval::new(r.lo().max(0.0), r.hi().min(1.0))?;
        if r.lo() < -1e-12 || r.hi() > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(alloc::format!("scaled time {} leaves [0, 1]", r)));
        }
        if self.times.len() == 2 {
            self.eval_cubic_form(tf, src)
        } else {
            self.eval_tau(tau, src)
        }
    }

    fn eval_cubic_form<S: NoiseSource + ?Sized>(&self, tf: &AffineForm, src: &mut S) -> Result<Vec<AffineForm>> {
        let (t0, t1) = self.span();
        // the step length as computed may be inexact; carry the error as slack
        let hi = Interval::point(t1).sub(&Interval::point(t0));
        let herr = AffineForm::from_interval(hi, &mut SlackOnly);
        let tau = tf.to_interval();
        let g = tau_kernel(tau);
        let h2 = hi.sqr();
        let h4 = h2.mul(&h2).mul(&g);
        let mut out = Vec::with_capacity(self.states[0].len());
        for j in 0..self.states[0].len() {
            let x0 = &self.states[0][j];
            let x1 = &self.states[1][j];
            let d0 = self.derivs[0][j].mul(&herr, &mut SlackOnly);
            let d1 = self.derivs[1][j].mul(&herr, &mut SlackOnly);
            let a1 = d0.clone();
            // a2 = 3 (x1 - x0) - 2 d0 - d1, a3 = 2 (x0 - x1) + d0 + d1
            let dx = x1.sub(x0);
            let a2 = AffineForm::combine(3.0, &dx, -2.0, &d0, 0.0).sub(&d1);
            let a3 = AffineForm::combine(-2.0, &dx, 1.0, &d0, 0.0).add(&d1);
            let mut p = a3.mul(tf, src).add(&a2);
            p = p.mul(tf, src).add(&a1);
            p = p.mul(tf, src).add(x0);
            let rem = self.rem_coef[j].mul(&h4);
            p = p.add(&AffineForm::from_interval(rem, &mut SlackOnly));
            out.push(p);
        }
        Ok(out)
    }

    fn eval_general<S: NoiseSource + ?Sized>(&self, t: Interval, src: &mut S) -> Result<Vec<AffineForm>> {
        let n = self.times.len();
        let tf = AffineForm::from_interval(t, src);
        let mut prod = Interval::point(1.0);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for i in 0..n {
            let ti = AffineForm::constant(self.times[i]);
            let mut l = AffineForm::constant(1.0);
            let mut dl = Interval::point(0.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let diff = Interval::point(self.times[i]).sub(&Interval::point(self.times[j]));
                let tj = AffineForm::constant(self.times[j]);
                let num = tf.sub(&tj);
                l = l.mul(&num, src).mul(&AffineForm::from_interval(diff.recip()?, &mut SlackOnly), src);
                dl = dl.add(&diff.recip()?);
            }
            let l2 = l.sqr(src);
            let dt = tf.sub(&ti);
            let dlf = AffineForm::from_interval(dl, &mut SlackOnly);
            let fac = AffineForm::constant(1.0).sub(&dt.mul(&dlf, src).scale(2.0));
            a.push(fac.mul(&l2, src));
            b.push(dt.mul(&l2, src));
            let d = t.sub(&Interval::point(self.times[i]));
            prod = prod.mul(&d.sqr());
        }
        let mut out = Vec::with_capacity(self.states[0].len());
        for j in 0..self.states[0].len() {
            let mut p = AffineForm::zero();
            for i in 0..n {
                p = p.add(&self.states[i][j].mul(&a[i], src));
                p = p.add(&self.derivs[i][j].mul(&b[i], src));
            }
            let rem = self.rem_coef[j].mul(&prod);
            out.push(p.add(&AffineForm::from_interval(rem, &mut SlackOnly)));
        }
        Ok(out)
    }
}

/// Range of `tau^2 (1 - tau)^2` over `tau ⊆ [0, 1]`; the function rises on
/// `[0, 1/2]` and falls on `[1/2, 1]`.
fn tau_kernel(tau: Interval) -> Interval {
    let g = |v: f64| {
        let p = Interval::point(v);
        let q = Interval::point(1.0).sub(&p);
        p.mul(&q).sqr()
    };
    let mut r = g(tau.lo()).hull(&g(tau.hi()));
    if tau.contains(0.5) {
        r = r.hull(&Interval::point(0.0625));
    }
    Interval::new(r.lo().max(0.0), r.hi()).expect("finite kernel")
}
