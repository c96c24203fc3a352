//! Monte-Carlo containment check against a non-validated reference.
//!
//! Sampled initial points are integrated with fixed-step RK4. Events are
//! located by bisection on the step in which a guard becomes true. Every
//! reference state is then looked up in the flowpipe: step hulls for all
//! sampled times and tight enclosures at segment end times.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::automaton::HybridAutomaton;
use crate::engine::Flowpipe;
use crate::graph::{ExprGraph, Tape};

/// Settings of the reference simulation and of the containment test.
#[derive(Clone, Debug, PartialEq)]
pub struct RefCfg {
    /// RK4 step.
    pub h: f64,
    /// Uniformly spaced check times in addition to segment end times.
    pub grid_points: usize,
    /// Allowed distance outside an enclosure, relative to `1 + |x|`.
    pub tol: f64,
    /// Immediate transitions allowed in a row.
    pub max_chain: usize,
}

impl Default for RefCfg {
    fn default() -> Self {
        RefCfg { h: 1e-3, grid_points: 500, tol: 1e-8, max_chain: 16 }
    }
}

/// A reference trajectory sampled at requested times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub locations: Vec<usize>,
    /// `(time, edge)` of every transition taken.
    pub jumps: Vec<(f64, usize)>,
}

/// Scalar right-hand sides, one tape per location.
pub struct RefModel<'a> {
    ha: &'a HybridAutomaton,
    tapes: Vec<Tape>,
}

impl<'a> RefModel<'a> {
    pub fn new(ha: &'a HybridAutomaton) -> Self {
        let tapes = ha
            .locations
            .iter()
            .map(|l| {
                let mut g = ExprGraph::new();
                let roots: Vec<_> = l.flow.iter().map(|e| g.from_expr(e)).collect();
                g.tape(&roots)
            })
            .collect();
        RefModel { ha, tapes }
    }

    fn rk4(&self, loc: usize, x: &[f64], t: f64, h: f64) -> Vec<f64> {
        let f = |x: &[f64], t: f64| self.tapes[loc].eval_f64(x, t);
        let axpy = |a: f64, k: &[f64]| x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect::<Vec<_>>();
        let k1 = f(x, t);
        let k2 = f(&axpy(h / 2.0, &k1), t + h / 2.0);
        let k3 = f(&axpy(h / 2.0, &k2), t + h / 2.0);
        let k4 = f(&axpy(h, &k3), t + h);
        (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
    }

    fn firing(&self, loc: usize, x: &[f64], t: f64) -> Option<usize> {
        self.ha.outgoing(loc).into_iter().find(|&j| self.ha.edges[j].guard.eval_f64(x, t))
    }

    /// Take transitions while a guard holds.
    fn settle(&self, loc: &mut usize, x: &mut Vec<f64>, t: f64, cfg: &RefCfg, out: &mut RefTrajectory) -> Result<(), String> {
        let mut chain = 0;
        while let Some(j) = self.firing(*loc, x, t) {
            chain += 1;
            if chain > cfg.max_chain {
                return Err(format!("more than {} immediate transitions at t = {}", cfg.max_chain, t));
            }
            *x = self.ha.edges[j].reset.apply_f64(x, t);
            *loc = self.ha.edges[j].to;
            out.jumps.push((t, j));
        }
        Ok(())
    }

    /// Integrate from `x0` at `t0` and record the state at each time of
    /// `checks` (sorted, inside `[t0, t_f]`).
    pub fn run(&self, x0: &[f64], t0: f64, t_f: f64, checks: &[f64], cfg: &RefCfg) -> Result<RefTrajectory, String> {
        let mut out = RefTrajectory::default();
        let mut loc = self.ha.init_location;
        let mut x = x0.to_vec();
        let mut t = t0;
        let mut next = 0;
        while next < checks.len() && checks[next] <= t {
            out.times.push(checks[next]);
            out.states.push(x.clone());
            out.locations.push(loc);
            next += 1;
        }
        while t < t_f {
            let target = if next < checks.len() { checks[next].min(t_f) } else { t_f };
            let h = cfg.h.min(target - t);
            let x1 = self.rk4(loc, &x, t, h);
            if x1.iter().any(|v| !v.is_finite()) {
                return Err(format!("reference diverged at t = {}", t));
            }
            let t1 = if h == target - t { target } else { t + h };
            if self.firing(loc, &x1, t1).is_some() {
                // smallest sub-step after which a guard holds
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.firing(loc, &self.rk4(loc, &x, t, mid), t + mid).is_some() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                // jump from the last state before the guard became true
                let xs = if lo > 0.0 { self.rk4(loc, &x, t, lo) } else { x.clone() };
                let tc = t + hi;
                let j = self.firing(loc, &self.rk4(loc, &x, t, hi), tc).expect("bracketed");
                x = self.ha.edges[j].reset.apply_f64(&xs, tc);
                loc = self.ha.edges[j].to;
                out.jumps.push((tc, j));
                t = tc;
                self.settle(&mut loc, &mut x, t, cfg, &mut out)?;
                continue;
            }
            x = x1;
            t = t1;
            while next < checks.len() && checks[next] <= t {
                out.times.push(checks[next]);
                out.states.push(x.clone());
                out.locations.push(loc);
                next += 1;
            }
        }
        Ok(out)
    }
}

/// A reference state not found in the flowpipe.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub sample: usize,
    pub t: f64,
    pub state: Vec<f64>,
    /// `"hull"` or `"tight"`.
    pub kind: &'static str,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub samples: usize,
    /// Samples whose reference simulation failed.
    pub skipped: Vec<(usize, String)>,
    /// Samples with every checked state contained.
    pub contained: usize,
    pub points_checked: usize,
    pub violations: Vec<Violation>,
}

impl Report {
    /// Fraction of non-skipped samples fully contained (1 when none ran).
    pub fn rate(&self) -> f64 {
        let ran = self.samples - self.skipped.len();
        if ran == 0 {
            1.0
        } else {
            self.contained as f64 / ran as f64
        }
    }
}

/// Segments indexed by time for fast coverage queries.
struct Index<'a> {
    fp: &'a Flowpipe,
    /// `(branch, segment)` per time bin.
    bins: Vec<Vec<(usize, usize)>>,
    t0: f64,
    width: f64,
    /// Segments ending at a given time, keyed by the bits of the time.
    ends: BTreeMap<u64, Vec<(usize, usize)>>,
}

fn key(t: f64) -> u64 {
    // order-preserving map of doubles to integers
    let b = t.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

impl<'a> Index<'a> {
    fn new(fp: &'a Flowpipe) -> Self {
        let n_bins = 4096;
        let t0 = fp.t0;
        let t_end = fp.segments().map(|(_, s)| s.t_hi).fold(fp.t_f, f64::max);
        let width = ((t_end - t0) / n_bins as f64).max(f64::MIN_POSITIVE);
        let mut bins = alloc::vec![Vec::new(); n_bins + 1];
        let mut ends: BTreeMap<u64, Vec<(usize, usize)>> = BTreeMap::new();
        for (bi, b) in fp.branches.iter().enumerate() {
            for (si, s) in b.segments.iter().enumerate() {
                let lo = (libm::floor((s.t_lo - t0) / width).max(0.0) as usize).min(n_bins);
                let hi = (libm::floor((s.t_hi - t0) / width).max(0.0) as usize).min(n_bins);
                for bin in &mut bins[lo..=hi] {
                    bin.push((bi, si));
                }
                ends.entry(key(s.t_hi)).or_default().push((bi, si));
            }
        }
        Index { fp, bins, t0, width, ends }
    }

    fn covering(&self, t: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
        let bin = (libm::floor((t - self.t0) / self.width).max(0.0) as usize).min(self.bins.len() - 1);
        self.bins[bin].iter().copied().filter(move |&(b, s)| {
            let seg = &self.fp.branches[b].segments[s];
            seg.t_lo <= t && t <= seg.t_hi
        })
    }
}

fn inside(x: &[f64], boxes: &[crate::interval::Interval], tol: f64) -> bool {
    x.iter().zip(boxes).all(|(v, iv)| {
        let slack = tol * (1.0 + v.abs());
        iv.lo() - slack <= *v && *v <= iv.hi() + slack
    })
}

/// Check that the flowpipe contains the reference trajectories of
/// `samples` random initial points drawn uniformly from the initial box.
pub fn validate_monte_carlo(ha: &HybridAutomaton, fp: &Flowpipe, samples: usize, seed: u64, cfg: &RefCfg) -> Report {
    let mut report = Report { samples, ..Report::default() };
    if samples == 0 {
        return report;
    }
    let model = RefModel::new(ha);
    let idx = Index::new(fp);
    // time from which some aborted branch no longer accounts for its share
    // of the trajectories
    let cut = fp
        .branches
        .iter()
        .filter(|b| !b.is_complete())
        .map(|b| b.segments.last().map_or(b.fork_time, |s| s.t_hi))
        .fold(f64::INFINITY, f64::min);
    let mut checks: Vec<f64> = (0..=cfg.grid_points).map(|i| fp.t0 + (fp.t_f - fp.t0) * i as f64 / cfg.grid_points as f64).collect();
    checks.extend(fp.segments().map(|(_, s)| s.t_hi).filter(|&t| t >= fp.t0 && t <= fp.t_f));
    checks.sort_by(f64::total_cmp);
    checks.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..samples {
        let x0: Vec<f64> = ha
            .init_box
            .iter()
            .map(|iv| if iv.is_point() { iv.lo() } else { rng.gen_range(iv.lo()..=iv.hi()) })
            .collect();
        let traj = match model.run(&x0, fp.t0, fp.t_f, &checks, cfg) {
            Ok(t) => t,
            Err(msg) => {
                report.skipped.push((k, msg));
                continue;
            }
        };
        let mut ok = true;
        for (t, x) in traj.times.iter().zip(&traj.states) {
            // an aborted run says nothing past the end of its segments
            if !fp.complete && idx.covering(*t).next().is_none() {
                break;
            }
            report.points_checked += 1;
            let in_hull = idx.covering(*t).any(|(b, s)| inside(x, &fp.branches[b].segments[s].hull, cfg.tol));
            if !in_hull {
                if *t >= cut {
                    break;
                }
                ok = false;
                report.violations.push(Violation { sample: k, t: *t, state: x.clone(), kind: "hull" });
                continue;
            }
            let Some(ending) = idx.ends.get(&key(*t)) else { continue };
            let in_tight = ending.iter().any(|&(b, s)| inside(x, &fp.branches[b].segments[s].tight, cfg.tol));
            // branches without a segment ending at `t` are checked through
            // their hulls
            let excused = idx.covering(*t).any(|(b, s)| {
                    !ending.iter().any(|&(eb, _)| eb == b) && inside(x, &fp.branches[b].segments[s].hull, cfg.tol)
                });
            if !in_tight && !excused {
                ok = false;
                report.violations.push(Violation { sample: k, t: *t, state: x.clone(), kind: "tight" });
            }
        }
        if ok {
            report.contained += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate, SimConfig};
    use crate::expr::{Expr, Guard, Reset};
    use crate::affine::Rel;
    use crate::automaton::{Edge, Location};
    use crate::interval::Interval;
    use alloc::vec;

    fn decay() -> HybridAutomaton {
        HybridAutomaton {
            vars: vec!["x".into()],
            locations: vec![Location { name: "l".into(), flow: vec![-Expr::var(0)] }],
            edges: vec![],
            init_location: 0,
            init_box: vec![Interval::new(0.9, 1.1).unwrap()],
        }
    }

    #[test]
    fn zero_samples_give_empty_report() {
        let ha = decay();
        let fp = simulate(&ha, &SimConfig::default()).unwrap();
        let r = validate_monte_carlo(&ha, &fp, 0, 1, &RefCfg::default());
        assert_eq!(r.points_checked, 0);
        assert_eq!(r.rate(), 1.0);
    }

    #[test]
    fn detects_shrunken_flowpipe() {
        let ha = decay();
        let fp = simulate(&ha, &SimConfig::default()).unwrap();
        let r = validate_monte_carlo(&ha, &fp, 20, 3, &RefCfg::default());
        assert_eq!(r.rate(), 1.0, "{:?}", r.violations.first());
        let mut bad = fp.clone();
        for s in &mut bad.branches[0].segments {
            let m = s.tight[0].mid();
            s.tight[0] = Interval::point(m);
            s.hull[0] = Interval::point(m);
        }
        let r = validate_monte_carlo(&ha, &bad, 20, 3, &RefCfg::default());
        assert!(r.rate() < 1.0);
    }

    #[test]
    fn reference_bounce_time() {
        let g = Guard::cmp(Expr::var(0), Rel::Lt, Expr::c(0.0));
        let ha = HybridAutomaton {
            vars: vec!["y".into(), "v".into()],
            locations: vec![Location { name: "fall".into(), flow: vec![Expr::var(1), Expr::c(-9.81)] }],
            edges: vec![Edge::new(0, 0, g, Reset::new(vec![(0, Expr::c(0.0)), (1, -0.8 * Expr::var(1))]))],
            init_location: 0,
            init_box: vec![Interval::point(10.0), Interval::point(0.0)],
        };
        let r = RefModel::new(&ha).run(&[10.0, 0.0], 0.0, 4.0, &[], &RefCfg::default()).unwrap();
        let t1 = libm::sqrt(20.0 / 9.81);
        assert!((r.jumps[0].0 - t1).abs() < 1e-9);
        // second bounce after a flight of 2 * 0.8 * g t1 / g
        assert!((r.jumps[1].0 - 2.6 * t1).abs() < 1e-8);
    }
}
