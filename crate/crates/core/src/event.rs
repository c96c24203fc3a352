//! Zero-crossing detection over guaranteed interpolants.
//!
//! Guards are evaluated in three-valued logic. A step is classified per
//! edge from the guard values at its start, its end and over its hull, and
//! crossing times are enclosed by bisecting the interpolant of each step.

use alloc::vec::Vec;

use crate::affine::{AffineForm, NoiseAlloc, Rel};
use crate::error::Result;
use crate::expr::{EnvAff, Guard};
use crate::interp::GPoly;
use crate::interval::Interval;
use crate::trivalent::Trivalent;

/// Activation of one edge during one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeStatus {
    /// The guard is false over the whole step hull.
    Inactive,
    /// False at the start, true at the end.
    Sure,
    /// False at the start, undecided at the end.
    Maybe,
    /// False at both ends but undecided over the hull.
    HullOnly,
}

/// Event-handling parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ZcCfg {
    /// Target width of crossing-time enclosures.
    pub precision: f64,
    /// Longest chain of immediate transitions before Zeno is suspected.
    pub max_chain: usize,
    /// Global cap on the number of branches.
    pub branch_cap: usize,
    /// Smallest step used to separate simultaneous events.
    pub min_separation_step: f64,
    /// Steps taken to make an undecided guard sure before branching.
    pub max_extensions: usize,
    /// Guard evaluations allowed per bisection pass.
    pub max_bisections: usize,
}

impl Default for ZcCfg {
    fn default() -> Self {
        ZcCfg { precision: 1e-6, max_chain: 16, branch_cap: 64, min_separation_step: 1e-6, max_extensions: 200, max_bisections: 20_000 }
    }
}

/// Guard value on a set of states given as intervals (decorrelated).
pub fn guard_on_box(guard: &Guard, x: &[Interval], t: Interval) -> Result<Trivalent> {
    let mut scratch = NoiseAlloc::new();
    let vars: Vec<AffineForm> = x.iter().map(|iv| AffineForm::from_interval(*iv, &mut scratch)).collect();
    let time = AffineForm::from_interval(t, &mut scratch);
    guard.eval_aff(&EnvAff::new(vars, time), &mut scratch)
}

/// Guard value on affine states. `alloc` is only used to draw fresh ids;
/// a clone is consumed so the caller's allocator is untouched.
pub fn guard_on_forms(guard: &Guard, x: &[AffineForm], t: &AffineForm, alloc: &NoiseAlloc) -> Result<Trivalent> {
    let mut scratch = alloc.clone();
    guard.eval_aff(&EnvAff::new(x.to_vec(), t.clone()), &mut scratch)
}

/// Classify an edge for one step.
pub fn classify(at_start: Trivalent, at_end: Trivalent, on_hull: Trivalent) -> EdgeStatus {
    debug_assert!(at_start.is_false());
    match at_end {
        Trivalent::True => EdgeStatus::Sure,
        Trivalent::Unknown => EdgeStatus::Maybe,
        Trivalent::False if on_hull.is_false() => EdgeStatus::Inactive,
        Trivalent::False => EdgeStatus::HullOnly,
    }
}

/// Map a scaled sub-span of a step to time.
pub fn time_of(g: &GPoly, tau: Interval) -> Interval {
    let (t0, t1) = g.span();
    let h = Interval::point(t1).sub(&Interval::point(t0));
    Interval::point(t0).add(&tau.mul(&h)).intersect(&Interval::new(t0, t1).expect("ordered span")).unwrap_or(tau)
}

/// Guard value over the interpolant on a scaled sub-span.
pub fn guard_on_span(g: &GPoly, guard: &Guard, tau: Interval, alloc: &NoiseAlloc) -> Result<Trivalent> {
    let mut scratch = alloc.clone();
    let xs = g.eval_tau(tau, &mut scratch)?;
    let t = AffineForm::from_interval(time_of(g, tau), &mut scratch);
    guard.eval_aff(&EnvAff::new(xs, t), &mut scratch)
}

fn split(tau: Interval) -> (Interval, Interval) {
    let m = tau.mid();
    (Interval::new(tau.lo(), m).expect("ordered"), Interval::new(m, tau.hi()).expect("ordered"))
}

fn span_width(g: &GPoly, tau: Interval) -> f64 {
    let (t0, t1) = g.span();
    tau.width() * (t1 - t0)
}

/// Earliest time not proven guard-false, scanning the steps in time order.
/// Sub-spans evaluating false are discarded; the scan stops at the first
/// sub-span that is true, or undecided and narrower than `precision`.
pub fn lower_limit(polys: &[GPoly], guard: &Guard, precision: f64, max_evals: usize, alloc: &NoiseAlloc) -> Result<Option<f64>> {
    let mut evals = 0;
    for g in polys {
        let mut stack = alloc::vec![Interval::new(0.0, 1.0).unwrap()];
        while let Some(tau) = stack.pop() {
            evals += 1;
            let v = guard_on_span(g, guard, tau, alloc)?;
            match v {
                Trivalent::False => continue,
                Trivalent::True => return Ok(Some(time_of(g, tau).lo())),
                Trivalent::Unknown => {
                    if span_width(g, tau) <= precision || evals >= max_evals {
                        return Ok(Some(time_of(g, tau).lo()));
                    }
                    let (a, b) = split(tau);
                    stack.push(b);
                    stack.push(a);
                }
            }
        }
    }
    Ok(None)
}

/// Latest time not proven guard-true, scanning backwards. Sub-spans
/// evaluating true are discarded.
pub fn upper_limit(polys: &[GPoly], guard: &Guard, precision: f64, max_evals: usize, alloc: &NoiseAlloc) -> Result<Option<f64>> {
    let mut evals = 0;
    for g in polys.iter().rev() {
        let mut stack = alloc::vec![Interval::new(0.0, 1.0).unwrap()];
        while let Some(tau) = stack.pop() {
            evals += 1;
            let v = guard_on_span(g, guard, tau, alloc)?;
            match v {
                Trivalent::True => continue,
                Trivalent::False => return Ok(Some(time_of(g, tau).hi())),
                Trivalent::Unknown => {
                    if span_width(g, tau) <= precision || evals >= max_evals {
                        return Ok(Some(time_of(g, tau).hi()));
                    }
                    let (a, b) = split(tau);
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
    }
    Ok(None)
}

/// Enclosure of the first crossing time of `guard` over consecutive steps
/// whose first start is guard-false and whose last end is guard-true.
pub fn tight_interval(polys: &[GPoly], guard: &Guard, precision: f64, max_evals: usize, alloc: &NoiseAlloc) -> Result<Interval> {
    let first = polys.first().expect("at least one step").span().0;
    let last = polys.last().expect("at least one step").span().1;
    let lo = lower_limit(polys, guard, precision, max_evals, alloc)?.unwrap_or(last);
    let hi = upper_limit(polys, guard, precision, max_evals, alloc)?.unwrap_or(first);
    Ok(Interval::new(lo.min(hi), hi.max(lo))?)
}

/// Interpolated states over a time interval that may cover several steps.
pub fn states_over(polys: &[GPoly], t: Interval, alloc: &mut NoiseAlloc) -> Result<Vec<AffineForm>> {
    let mut acc: Option<Vec<AffineForm>> = None;
    for g in polys {
        let (t0, t1) = g.span();
        let Some(part) = t.intersect(&Interval::new(t0, t1)?) else { continue };
        let tau = g.tau_of(part)?;
        let xs = g.eval_tau(tau, alloc)?;
        acc = Some(match acc {
            None => xs,
            Some(prev) => prev.iter().zip(&xs).map(|(a, b)| a.hull(b, alloc)).collect(),
        });
    }
    Ok(acc.expect("time interval overlaps the steps"))
}

/// Result of refining a step whose hull, but neither end, meets a guard.
#[derive(Clone, Debug, PartialEq)]
pub enum HullOutcome {
    /// Every sub-span of the interpolant is guard-false.
    NoCrossing,
    /// Some trajectories may cross in `window`; follow both futures.
    Branch { window: Interval },
}

/// Bisect the interpolant of one step to refute or confirm a crossing.
pub fn resolve_hull_only(g: &GPoly, guard: &Guard, precision: f64, max_evals: usize, alloc: &NoiseAlloc) -> Result<HullOutcome> {
    let mut stack = alloc::vec![Interval::new(0.0, 1.0).unwrap()];
    let mut evals = 0;
    let mut window: Option<Interval> = None;
    while let Some(tau) = stack.pop() {
        evals += 1;
        match guard_on_span(g, guard, tau, alloc)? {
            Trivalent::False => continue,
            v => {
                if v.is_true() || span_width(g, tau) <= precision || evals >= max_evals {
                    let t = time_of(g, tau);
                    window = Some(window.map_or(t, |w| w.hull(&t)));
                    if evals >= max_evals {
                        // give up refining: everything left is suspect
                        for rest in stack.drain(..) {
                            let tr = time_of(g, rest);
                            window = Some(window.map_or(tr, |w| w.hull(&tr)));
                        }
                    }
                    continue;
                }
                let (a, b) = split(tau);
                stack.push(b);
                stack.push(a);
            }
        }
    }
    Ok(match window {
        None => HullOutcome::NoCrossing,
        Some(w) => HullOutcome::Branch { window: w },
    })
}

/// Sign condition for leaving a strict guard `e < 0` (`e > 0`): the
/// derivative of `e` along the flow must be positive (negative).
pub fn exits(lie: Interval, rel: Rel) -> bool {
    match rel {
        Rel::Lt | Rel::Le => lie.lo() > 0.0,
        Rel::Gt | Rel::Ge => lie.hi() < 0.0,
    }
}
