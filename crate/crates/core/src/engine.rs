//! The guaranteed simulation loop.
//!
//! Each branch alternates validated integration steps with event handling.
//! Time stays on an exact grid of doubles: a crossing enclosed in `[a, b]`
//! produces a jump segment covering `[a, b]`, and the target location resumes
//! at the point time `b` from an enclosure of every post-jump trajectory at
//! `b`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::affine::{condense_joint, AffineForm, NoiseAlloc, Rel};
use crate::automaton::{reset_exit, HybridAutomaton, ResetExit};
use crate::error::{Error, Result};
use crate::event::{
    exits, guard_on_box, guard_on_forms, resolve_hull_only, states_over, tight_interval, HullOutcome, ZcCfg,
};
use crate::expr::{EnvAff, Expr, Guard};
use crate::graph::{ExprGraph, Tape};
use crate::integrator::{eval_tape_box, guaranteed_step, picard_enclosure, ButcherTable, FlowModel, IntegCfg};
use crate::interp::GPoly;
use crate::interval::Interval;
use crate::trivalent::Trivalent;

/// Simulation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub t0: f64,
    pub t_f: f64,
    /// Initial step size, also the step used right after a jump.
    pub dt: f64,
    pub integ: IntegCfg,
    pub zc: ZcCfg,
    pub scheme: ButcherTable,
    /// Noise-symbol budget for the state after each step.
    pub condense_budget: usize,
    /// Take every step with size `dt`, without error control.
    pub fixed_step: bool,
    /// Accepted steps per branch before giving up.
    pub max_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t0: 0.0,
            t_f: 1.0,
            dt: 0.01,
            integ: IntegCfg::default(),
            zc: ZcCfg::default(),
            scheme: ButcherTable::ode23(),
            condense_budget: 100,
            fixed_step: false,
            max_steps: 1_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if !(self.t0.is_finite() && self.t_f.is_finite() && self.t0 < self.t_f) {
            return bad("the final time must be finite and after the start time");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("the initial step must be positive");
        }
        if !(self.zc.precision > 0.0) {
            return bad("the crossing precision must be positive");
        }
        if self.condense_budget < 2 {
            return bad("the condensation budget must be at least 2");
        }
        self.scheme.validate()?;
        if !self.fixed_step {
            self.integ.validate()?;
        }
        Ok(())
    }

    /// Integration parameters actually used by the loop.
    pub fn effective_integ(&self) -> IntegCfg {
        if self.fixed_step {
            IntegCfg { tol: f64::INFINITY, h_min: self.dt, h_max: self.dt, ..self.integ.clone() }
        } else {
            self.integ.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SegmentKind {
    Initial,
    Step,
    /// A transition through `edge`; the segment time covers the crossing.
    Jump { edge: usize },
}

/// One piece of a flowpipe: `tight` encloses every trajectory at `t_hi`,
/// `hull` every trajectory over `[t_lo, t_hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub t_lo: f64,
    pub t_hi: f64,
    pub tight: Vec<Interval>,
    pub hull: Vec<Interval>,
    pub location: usize,
    pub kind: SegmentKind,
    pub events: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BranchStatus {
    Complete,
    Aborted(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub id: usize,
    pub parent: Option<usize>,
    /// Time at which the branch split from its parent.
    pub fork_time: f64,
    pub segments: Vec<Segment>,
    pub status: BranchStatus,
}

impl Branch {
    pub fn is_complete(&self) -> bool {
        self.status == BranchStatus::Complete
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stats {
    pub steps: usize,
    pub rejections: usize,
    pub crossings: usize,
    pub branches: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Flowpipe {
    pub vars: Vec<String>,
    pub locations: Vec<String>,
    pub t0: f64,
    pub t_f: f64,
    /// Ordered by id; a branch's parent always precedes it.
    pub branches: Vec<Branch>,
    pub complete: bool,
    pub stats: Stats,
    pub warnings: Vec<String>,
}

impl Flowpipe {
    pub fn segments(&self) -> impl Iterator<Item = (&Branch, &Segment)> {
        self.branches.iter().flat_map(|b| b.segments.iter().map(move |s| (b, s)))
    }

    /// Tight enclosure at the latest time reached by the first branch.
    pub fn final_enclosure(&self) -> Option<&[Interval]> {
        self.branches.first()?.segments.last().map(|s| s.tight.as_slice())
    }

    /// Times of the jump segments of a branch.
    pub fn crossings(&self, branch: usize) -> Vec<Interval> {
        self.branches[branch]
            .segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Jump { .. }))
            .map(|s| Interval::new(s.t_lo, s.t_hi).expect("ordered segment"))
            .collect()
    }
}

/// Single strict comparison `e rel 0` of a guard, if it has that shape.
fn atom(g: &Guard) -> Option<(Expr, Rel)> {
    match g {
        Guard::Cmp(l, rel, r) => {
            let e = match r {
                Expr::Const(c) if *c == 0.0 => l.clone(),
                _ => l.clone() - r.clone(),
            };
            Some((e, *rel))
        }
        _ => None,
    }
}

struct Compiled<'a> {
    ha: &'a HybridAutomaton,
    flows: Vec<FlowModel>,
    /// Derivative of each edge's guard atom along the flow of its source.
    lie: Vec<Option<(Tape, Rel)>>,
    /// `(taken, next)` pairs where `next`'s guard is provably false right
    /// after jumping through `taken`.
    exit_ok: BTreeSet<(usize, usize)>,
}

impl<'a> Compiled<'a> {
    fn new(ha: &'a HybridAutomaton, scheme: &ButcherTable) -> Result<Self> {
        let flows = ha
            .locations
            .iter()
            .map(|l| FlowModel::new(&l.flow, scheme.clone())?.with_derivative(3)?.with_derivative(1))
            .collect::<Result<Vec<_>>>()?;
        let mut lie = Vec::with_capacity(ha.edges.len());
        for e in &ha.edges {
            lie.push(match atom(&e.guard) {
                Some((ex, rel)) => {
                    let mut g = ExprGraph::new();
                    let root = g.from_expr(&ex);
                    let fl: Vec<_> = ha.locations[e.from].flow.iter().map(|f| g.from_expr(f)).collect();
                    let d = g.total_derivative(root, &fl)?;
                    Some((g.tape(&[d]), rel))
                }
                None => None,
            });
        }
        let mut exit_ok = BTreeSet::new();
        for (k, taken) in ha.edges.iter().enumerate() {
            for (j, next) in ha.edges.iter().enumerate() {
                if next.from != taken.to {
                    continue;
                }
                let Some((e, rel)) = atom(&next.guard) else { continue };
                if !rel.is_strict() {
                    continue;
                }
                let ok = match reset_exit(&e, rel, &taken.reset, ha.dim()) {
                    ResetExit::Outside => true,
                    ResetExit::OnBoundary => atom(&taken.guard) == Some((e, rel)),
                    ResetExit::Unknown => false,
                };
                if ok {
                    exit_ok.insert((k, j));
                }
            }
        }
        Ok(Compiled { ha, flows, lie, exit_ok })
    }

    fn lie_exits(&self, edge: usize, z: &[Interval], t: Interval) -> bool {
        match &self.lie[edge] {
            Some((tape, rel)) => eval_tape_box(tape, z, t).map(|v| exits(v[0], *rel)).unwrap_or(false),
            None => false,
        }
    }
}

/// State of a branch waiting to be explored.
struct Pending {
    id: usize,
    parent: Option<usize>,
    fork_time: f64,
    loc: usize,
    t: f64,
    x: Vec<AffineForm>,
    alloc: NoiseAlloc,
    h: f64,
    /// Edges just left by a jump; they stay disabled while the flow provably
    /// moves away from their guard.
    watch: Vec<usize>,
    /// Edges handled by sibling branches until this branch leaves `loc`.
    ignore: Vec<usize>,
    segments: Vec<Segment>,
    error: Option<String>,
}

/// Outcome of a jump: the branch resumes at `t` in `loc`.
struct Future {
    loc: usize,
    t: f64,
    x: Vec<AffineForm>,
    watch: Vec<usize>,
    segments: Vec<Segment>,
}

/// One integration step kept for event localization.
struct StepRec {
    t0: f64,
    t1: f64,
    x0: Vec<AffineForm>,
    x1: Vec<AffineForm>,
    hull: Vec<Interval>,
}

fn boxed(x: &[AffineForm]) -> Vec<Interval> {
    x.iter().map(AffineForm::to_interval).collect()
}

fn hull_boxes(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    a.iter().zip(b).map(|(p, q)| p.hull(q)).collect()
}

fn step_segment(r: &StepRec, loc: usize) -> Segment {
    Segment {
        t_lo: r.t0,
        t_hi: r.t1,
        tight: boxed(&r.x1),
        hull: hull_boxes(&r.hull, &boxed(&r.x1)),
        location: loc,
        kind: SegmentKind::Step,
        events: Vec::new(),
    }
}

/// Segments of the steps before a crossing window starting at `a`. A step
/// straddling `a` is cut there: every trajectory is still pre-jump at `a`,
/// later states are covered by the jump segment.
fn segments_before(recs: &[StepRec], polys: &[GPoly], a: f64, loc: usize, alloc: &mut NoiseAlloc) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (r, g) in recs.iter().zip(polys) {
        if r.t1 <= a {
            out.push(step_segment(r, loc));
        } else if r.t0 < a {
            let xa = g.eval(Interval::point(a), alloc)?;
            let tight = boxed(&xa);
            out.push(Segment {
                t_lo: r.t0,
                t_hi: a,
                hull: hull_boxes(&r.hull, &tight),
                tight,
                location: loc,
                kind: SegmentKind::Step,
                events: Vec::new(),
            });
        }
    }
    Ok(out)
}

struct Sim<'a> {
    c: Compiled<'a>,
    cfg: SimConfig,
    integ: IntegCfg,
    stack: Vec<Pending>,
    done: Vec<Branch>,
    next_id: usize,
    stats: Stats,
}

enum Flow {
    /// Keep looping with the updated branch state.
    Continue,
    /// Redo the step from the same state with a smaller size.
    Retry(f64),
}

impl<'a> Sim<'a> {
    /// A copy of `parent` as a new branch with its own symbol range.
    fn child(&mut self, parent: &Pending, fork_time: f64) -> Pending {
        let id = self.next_id;
        self.next_id += 1;
        self.stats.branches += 1;
        let error = (id >= self.cfg.zc.branch_cap).then(|| format!("branch cap of {} exceeded", self.cfg.zc.branch_cap));
        Pending {
            id,
            parent: Some(parent.id),
            fork_time,
            loc: parent.loc,
            t: parent.t,
            x: parent.x.clone(),
            alloc: NoiseAlloc::for_branch(id as u64),
            h: parent.h,
            watch: parent.watch.clone(),
            ignore: parent.ignore.clone(),
            segments: Vec::new(),
            error,
        }
    }

    /// Start a branch that resumes after a jump.
    fn spawn(&mut self, parent: &Pending, fork_time: f64, f: core::result::Result<Future, String>) {
        let mut p = self.child(parent, fork_time);
        match f {
            Ok(fu) => {
                p.loc = fu.loc;
                p.t = fu.t;
                p.x = fu.x;
                p.watch = fu.watch;
                p.ignore.clear();
                p.segments = fu.segments;
                p.h = self.cfg.dt;
            }
            Err(msg) => {
                p.error.get_or_insert(msg);
            }
        }
        self.stack.push(p);
    }

    fn run(&mut self) {
        while let Some(mut p) = self.stack.pop() {
            let status = match p.error.take() {
                Some(msg) => BranchStatus::Aborted(msg),
                None => match self.run_branch(&mut p) {
                    Ok(()) => BranchStatus::Complete,
                    Err(msg) => BranchStatus::Aborted(msg),
                },
            };
            self.done.push(Branch { id: p.id, parent: p.parent, fork_time: p.fork_time, segments: p.segments, status });
        }
        self.done.sort_by_key(|b| b.id);
    }

    fn run_branch(&mut self, p: &mut Pending) -> core::result::Result<(), String> {
        let mut steps = 0usize;
        while p.t < self.cfg.t_f {
            steps += 1;
            if steps > self.cfg.max_steps {
                return Err(format!("step limit of {} reached at t = {}", self.cfg.max_steps, p.t));
            }
            let mut h = p.h.min(self.cfg.t_f - p.t);
            loop {
                match self.step(p, h).map_err(|e| e.to_string())? {
                    Flow::Continue => break,
                    Flow::Retry(h2) => h = h2,
                }
            }
        }
        Ok(())
    }

    fn name_edge(&self, k: usize) -> String {
        let e = &self.c.ha.edges[k];
        format!("edge {} ({} -> {})", k, self.c.ha.locations[e.from].name, self.c.ha.locations[e.to].name)
    }

    fn step(&mut self, p: &mut Pending, h: f64) -> Result<Flow> {
        let ha = self.c.ha;
        let loc = p.loc;
        let out = ha.outgoing(loc);
        let tpoint = AffineForm::constant(p.t);
        for &j in &out {
            if p.watch.contains(&j) || p.ignore.contains(&j) {
                continue;
            }
            if !guard_on_forms(&ha.edges[j].guard, &p.x, &tpoint, &p.alloc)?.is_false() {
                return Err(Error::Model(format!(
                    "the guard of {} is not false at the start of a step (t = {}); reformulate the guard or reset",
                    self.name_edge(j),
                    p.t
                )));
            }
        }
        let flow = &self.c.flows[loc];
        let st = guaranteed_step(flow, &p.x, Interval::point(p.t), h, &self.integ, &mut p.alloc)?;
        self.stats.rejections += st.rejections;
        let t1 = st.t_next.hi();
        let span = Interval::new(p.t, t1)?;

        // recently left guards must keep receding over the whole step
        for &j in &p.watch {
            if !self.c.lie_exits(j, &st.hull, span) {
                if above_floor(st.h_used, self.integ.h_min) {
                    return Ok(Flow::Retry((st.h_used / 2.0).max(self.integ.h_min)));
                }
                return Err(Error::Model(format!("could not certify leaving the guard of {} at t = {}", self.name_edge(j), p.t)));
            }
        }

        let t1form = AffineForm::constant(t1);
        let mut active = Vec::new();
        let mut hull_only = Vec::new();
        for &j in &out {
            if p.watch.contains(&j) || p.ignore.contains(&j) {
                continue;
            }
            let g = &ha.edges[j].guard;
            let end = guard_on_forms(g, &st.x_next, &t1form, &p.alloc)?;
            let on_hull = guard_on_box(g, &st.hull, span)?;
            match crate::event::classify(Trivalent::False, end, on_hull) {
                crate::event::EdgeStatus::Inactive => {}
                crate::event::EdgeStatus::Sure | crate::event::EdgeStatus::Maybe => active.push(j),
                crate::event::EdgeStatus::HullOnly => hull_only.push(j),
            }
        }

        let rec = StepRec { t0: p.t, t1, x0: p.x.clone(), x1: st.x_next.clone(), hull: st.hull.clone() };

        if active.len() >= 2 {
            if above_floor(st.h_used, self.cfg.zc.min_separation_step) {
                return Ok(Flow::Retry((st.h_used / 2.0).max(self.cfg.zc.min_separation_step)));
            }
            // inseparable: one branch per edge, each ignoring the others
            for &k in active.iter().skip(1) {
                let mut sib = self.child(p, p.t);
                sib.ignore.extend(active.iter().copied().filter(|&j| j != k));
                sib.h = st.h_used;
                self.stack.push(sib);
            }
            p.ignore.extend(active.iter().skip(1).copied());
            p.h = st.h_used;
            return Ok(Flow::Retry(st.h_used));
        }

        if let [k] = active[..] {
            self.handle_crossing(p, k, rec, st.h_next)?;
            return Ok(Flow::Continue);
        }

        if !hull_only.is_empty() {
            let g = GPoly::build(flow, &[rec.t0, rec.t1], &[rec.x0.clone(), rec.x1.clone()], &rec.hull, &mut p.alloc)?;
            for &j in &hull_only {
                let outcome = resolve_hull_only(&g, &ha.edges[j].guard, self.cfg.zc.precision, self.cfg.zc.max_bisections, &p.alloc)?;
                if let HullOutcome::Branch { window } = outcome {
                    let mut alloc = p.alloc.clone();
                    let fut = self.jump(j, core::slice::from_ref(&g), window, &mut alloc);
                    self.stats.crossings += 1;
                    let mut futs = match fut {
                        Ok(v) => v,
                        Err(e) => vec![Err(e.to_string())],
                    };
                    let before = segments_before(core::slice::from_ref(&rec), core::slice::from_ref(&g), window.lo(), loc, &mut alloc)?;
                    if let Some(Ok(f)) = futs.first_mut() {
                        f.segments.splice(0..0, before);
                    }
                    for f in futs {
                        self.spawn(p, window.lo(), f);
                    }
                }
            }
        }

        self.accept(p, &rec, st.h_next);
        Ok(Flow::Continue)
    }

    fn accept(&mut self, p: &mut Pending, rec: &StepRec, h_next: f64) {
        p.segments.push(step_segment(rec, p.loc));
        self.stats.steps += 1;
        let t1form = AffineForm::constant(rec.t1);
        let ha = self.c.ha;
        p.watch.retain(|&j| !matches!(guard_on_forms(&ha.edges[j].guard, &rec.x1, &t1form, &p.alloc), Ok(Trivalent::False)));
        // slack propagates like an interval; as symbols it can cancel
        let absorbed: Vec<AffineForm> = rec.x1.iter().map(|f| f.absorb_slack(&mut p.alloc)).collect();
        p.x = condense_joint(&absorbed, self.cfg.condense_budget, &mut p.alloc);
        p.t = rec.t1;
        p.h = h_next;
    }

    /// Localize the crossing of edge `k`, whose guard is not false at the end
    /// of the step `first`, and continue in the target location.
    fn handle_crossing(&mut self, p: &mut Pending, k: usize, first: StepRec, h_next: f64) -> Result<()> {
        let ha = self.c.ha;
        let loc = p.loc;
        let guard = &ha.edges[k].guard;
        let flow = &self.c.flows[loc];
        let mut recs = vec![first];
        let mut h = h_next;
        let mut status = {
            let r = recs.last().unwrap();
            guard_on_forms(guard, &r.x1, &AffineForm::constant(r.t1), &p.alloc)?
        };
        let mut extensions = 0;
        while !status.is_true() && !status.is_false() && extensions < self.cfg.zc.max_extensions {
            extensions += 1;
            let last = recs.last().unwrap();
            let (st, t1, span) = loop {
                let st = guaranteed_step(flow, &last.x1, Interval::point(last.t1), h, &self.integ, &mut p.alloc)?;
                self.stats.rejections += st.rejections;
                let t1 = st.t_next.hi();
                let span = Interval::new(last.t1, t1)?;
                let mut clash = None;
                for &j in &ha.outgoing(loc) {
                    if j == k || p.watch.contains(&j) || p.ignore.contains(&j) {
                        continue;
                    }
                    if !guard_on_box(&ha.edges[j].guard, &st.hull, span)?.is_false() {
                        clash = Some(j);
                        break;
                    }
                }
                match clash {
                    None => break (st, t1, span),
                    Some(_) if st.h_used > self.cfg.zc.min_separation_step => {
                        h = (st.h_used / 2.0).max(self.cfg.zc.min_separation_step);
                    }
                    Some(j) => {
                        return Err(Error::Model(format!(
                            "the guard of {} became active while locating the crossing of {} at t = {}",
                            self.name_edge(j),
                            self.name_edge(k),
                            last.t1
                        )))
                    }
                }
            };
            for &j in &p.watch {
                if !self.c.lie_exits(j, &st.hull, span) {
                    return Err(Error::Model(format!("could not certify leaving the guard of {} at t = {}", self.name_edge(j), last.t1)));
                }
            }
            h = st.h_next;
            recs.push(StepRec { t0: last.t1, t1, x0: last.x1.clone(), x1: st.x_next, hull: st.hull });
            let r = recs.last().unwrap();
            status = guard_on_forms(guard, &r.x1, &AffineForm::constant(r.t1), &p.alloc)?;
        }
        let sure = status.is_true();

        let mut polys = Vec::with_capacity(recs.len());
        for r in &recs {
            polys.push(GPoly::build(flow, &[r.t0, r.t1], &[r.x0.clone(), r.x1.clone()], &r.hull, &mut p.alloc)?);
        }
        let end = recs.last().unwrap().t1;
        let mut tzc = tight_interval(&polys, guard, self.cfg.zc.precision, self.cfg.zc.max_bisections, &p.alloc)?;
        if !sure {
            tzc = Interval::new(tzc.lo(), end)?;
        }
        self.stats.crossings += 1;
        self.stats.steps += recs.len();

        let futures = self.jump(k, &polys, tzc, &mut p.alloc);

        if !sure {
            // trajectories that have not crossed keep flowing in this location
            let mut alt = self.child(p, tzc.lo());
            alt.t = end;
            alt.x = recs.last().unwrap().x1.clone();
            alt.h = h;
            alt.segments = recs.iter().map(|r| step_segment(r, loc)).collect();
            self.stack.push(alt);
        }

        p.segments.extend(segments_before(&recs, &polys, tzc.lo(), loc, &mut p.alloc)?);
        let mut futures = match futures {
            Ok(v) => v.into_iter(),
            Err(e) => return Err(e),
        };
        let first = futures.next().expect("a jump has at least one future");
        for f in futures {
            self.spawn(p, tzc.lo(), f);
        }
        match first {
            Ok(f) => {
                p.loc = f.loc;
                p.t = f.t;
                p.x = condense_joint(&f.x, self.cfg.condense_budget, &mut p.alloc);
                p.watch = f.watch;
                p.ignore.clear();
                p.segments.extend(f.segments);
                p.h = self.cfg.dt.min(recs.last().map_or(self.cfg.dt, |r| r.t1 - r.t0));
                Ok(())
            }
            Err(msg) => Err(Error::Aborted(msg)),
        }
    }

    /// Apply the reset of edge `k` to the pre-jump states over the crossing
    /// window and follow immediate transitions. When the window lies in one
    /// step, the states and the crossing time share one symbol.
    fn jump(&self, k: usize, polys: &[GPoly], tzc: Interval, alloc: &mut NoiseAlloc) -> Result<Vec<core::result::Result<Future, String>>> {
        let ha = self.c.ha;
        let covering: Vec<GPoly> = polys
            .iter()
            .filter(|g| {
                let (t0, t1) = g.span();
                t0 <= tzc.hi() && tzc.lo() <= t1
            })
            .cloned()
            .collect();
        let merged = match covering.len() {
            0 => None,
            1 => covering.into_iter().next(),
            _ => GPoly::merge(&self.c.flows[ha.edges[k].from], &covering, alloc).ok(),
        };
        let inside = merged.as_ref().filter(|g| {
            let (t0, t1) = g.span();
            t0 <= tzc.lo() && tzc.hi() <= t1
        });
        let (xzc, time) = match inside {
            Some(g) => {
                let (t0, t1) = g.span();
                let tau = AffineForm::from_interval(g.tau_of(tzc)?, alloc);
                let h = AffineForm::from_interval(Interval::point(t1).sub(&Interval::point(t0)), &mut crate::affine::SlackOnly);
                let time = tau.mul(&h, alloc).add_const(t0);
                let xzc = g.eval_tau_form(&tau, alloc)?;
                // every trajectory has e(x(t*)) = 0 at its crossing: express
                // the crossing-time symbol through the state symbols
                if let (Some(&(sigma, _)), Some((e, _))) = (tau.terms().first(), atom(&ha.edges[k].guard)) {
                    let ev = e.eval_aff(&EnvAff::new(xzc.clone(), time.clone()), alloc);
                    if let Some(r) = ev.ok().and_then(|ev| ev.solve_for(sigma, alloc)) {
                        let xs = xzc.iter().map(|f| f.substitute(sigma, &r)).collect();
                        (xs, time.substitute(sigma, &r))
                    } else {
                        (xzc, time)
                    }
                } else {
                    (xzc, time)
                }
            }
            None => (states_over(polys, tzc, alloc)?, AffineForm::from_interval(tzc, alloc)),
        };
        let x_plus = ha.edges[k].reset.apply_aff(&EnvAff::new(xzc.clone(), time.clone()), alloc)?;
        // trajectories that have not crossed yet still occupy the window
        let pre_box = hull_boxes(&boxed(&states_over(polys, tzc, alloc)?), &boxed(&xzc));
        Ok(self.post_jump(k, tzc, &time, x_plus, pre_box, alloc, 0))
    }

    fn post_jump(
        &self,
        k: usize,
        tzc: Interval,
        time: &AffineForm,
        x_plus: Vec<AffineForm>,
        pre_box: Vec<Interval>,
        alloc: &mut NoiseAlloc,
        depth: usize,
    ) -> Vec<core::result::Result<Future, String>> {
        match self.post_jump_inner(k, tzc, time, x_plus, pre_box, alloc, depth) {
            Ok(v) => v,
            Err(e) => vec![Err(e.to_string())],
        }
    }

    fn post_jump_inner(
        &self,
        k: usize,
        tzc: Interval,
        time: &AffineForm,
        x_plus: Vec<AffineForm>,
        pre_box: Vec<Interval>,
        alloc: &mut NoiseAlloc,
        depth: usize,
    ) -> Result<Vec<core::result::Result<Future, String>>> {
        let ha = self.c.ha;
        let loc = ha.edges[k].to;
        if depth > self.cfg.zc.max_chain {
            return Err(Error::Model(format!(
                "more than {} immediate transitions ending with {}; the model looks Zeno",
                self.cfg.zc.max_chain,
                self.name_edge(k)
            )));
        }
        let zero_seg = |x: &[AffineForm], pre: &[Interval]| Segment {
            t_lo: tzc.lo(),
            t_hi: tzc.hi(),
            tight: boxed(x),
            hull: hull_boxes(pre, &boxed(x)),
            location: loc,
            kind: SegmentKind::Jump { edge: k },
            events: ha.edges[k].annotations.clone(),
        };
        let mut certified = Vec::new();
        let mut unknown = Vec::new();
        for j in ha.outgoing(loc) {
            if self.c.exit_ok.contains(&(k, j)) {
                certified.push(j);
                continue;
            }
            match guard_on_forms(&ha.edges[j].guard, &x_plus, time, alloc)? {
                Trivalent::False => {}
                Trivalent::True => {
                    // immediate transition
                    let x2 = ha.edges[j].reset.apply_aff(&EnvAff::new(x_plus.clone(), time.clone()), alloc)?;
                    let seg = zero_seg(&x_plus, &pre_box);
                    let mut futs = self.post_jump(j, tzc, time, x2, boxed(&x_plus), alloc, depth + 1);
                    for f in futs.iter_mut().flatten() {
                        f.segments.insert(0, seg.clone());
                    }
                    return Ok(futs);
                }
                Trivalent::Unknown => unknown.push(j),
            }
        }
        let mut futs = Vec::new();
        for &j in &unknown {
            let x2 = ha.edges[j].reset.apply_aff(&EnvAff::new(x_plus.clone(), time.clone()), alloc)?;
            let seg = zero_seg(&x_plus, &pre_box);
            let mut taken = self.post_jump(j, tzc, time, x2, boxed(&x_plus), alloc, depth + 1);
            for f in taken.iter_mut().flatten() {
                f.segments.insert(0, seg.clone());
            }
            futs.extend(taken);
        }

        // flow from the jump to the resume time sup(tzc)
        let flow = &self.c.flows[loc];
        let w = tzc.hi() - tzc.lo();
        let (z, x_b) = if w > 0.0 {
            let Some(z) = picard_enclosure(flow, &x_plus, tzc, w, &self.integ)? else {
                return Err(Error::StepFailure { t: tzc.lo(), h: w, reason: "no enclosure across the crossing window" });
            };
            // x(b) = x(t*) + d f(t*, x(t*)) + d^2/2 x''(xi), d = b - t*, xi in z
            let d2 = flow.derivative_tape(1).expect("first derivative prepared");
            let acc = crate::integrator::eval_tape_box(d2, &z, tzc)?;
            let rest = time.neg().add_const(tzc.hi());
            let f0 = flow.eval(&x_plus, time, alloc)?;
            let half_sq = rest.sqr(alloc).scale(0.5);
            let x_b: Vec<AffineForm> = x_plus
                .iter()
                .zip(&f0)
                .zip(&acc)
                .map(|((x, f), a)| {
                    let lin = rest.mul(f, alloc);
                    let quad = half_sq.mul(&AffineForm::from_interval(*a, alloc), alloc);
                    x.add(&lin).add(&quad)
                })
                .collect();
            (z, x_b)
        } else {
            (boxed(&x_plus), x_plus.clone())
        };
        let mut watch = Vec::new();
        for j in ha.outgoing(loc) {
            if unknown.contains(&j) {
                if !guard_on_box(&ha.edges[j].guard, &z, tzc)?.is_false() {
                    // the branch that does not take j is only valid if j stays false
                    futs.push(Err(format!("the guard of {} may hold right after a jump at t = {}", self.name_edge(j), tzc.lo())));
                    return Ok(futs);
                }
                continue;
            }
            if certified.contains(&j) && self.c.lie_exits(j, &z, tzc) {
                watch.push(j);
                continue;
            }
            if !guard_on_box(&ha.edges[j].guard, &z, tzc)?.is_false() {
                return Err(Error::Model(format!(
                    "the guard of {} may hold within the crossing window [{}, {}]; events are closer than the time precision",
                    self.name_edge(j),
                    tzc.lo(),
                    tzc.hi()
                )));
            }
        }
        let tight = boxed(&x_b);
        let hull = hull_boxes(&hull_boxes(&pre_box, &z), &tight);
        let seg = Segment {
            t_lo: tzc.lo(),
            t_hi: tzc.hi(),
            tight,
            hull: hull_boxes(&hull, &boxed(&x_plus)),
            location: loc,
            kind: SegmentKind::Jump { edge: k },
            events: ha.edges[k].annotations.clone(),
        };
        futs.insert(0, Ok(Future { loc, t: tzc.hi(), x: x_b, watch, segments: vec![seg] }));
        Ok(futs)
    }
}

/// Compute a flowpipe of `ha` over `[cfg.t0, cfg.t_f]`. Failures are
/// recorded per branch; the partial flowpipe is always returned.
/// Whether halving `h` still makes progress towards `floor`. Steps snapped to
/// the time grid may sit a few ulps above the floor.
fn above_floor(h: f64, floor: f64) -> bool {
    h > floor * (1.0 + 1e-9)
}

pub fn simulate(ha: &HybridAutomaton, cfg: &SimConfig) -> Result<Flowpipe> {
    ha.validate()?;
    cfg.validate()?;
    let c = Compiled::new(ha, &cfg.scheme)?;
    let mut alloc = NoiseAlloc::for_branch(0);
    let x0: Vec<AffineForm> = ha.init_box.iter().map(|iv| AffineForm::from_interval(*iv, &mut alloc)).collect();
    let init = Segment {
        t_lo: cfg.t0,
        t_hi: cfg.t0,
        tight: ha.init_box.clone(),
        hull: ha.init_box.clone(),
        location: ha.init_location,
        kind: SegmentKind::Initial,
        events: Vec::new(),
    };
    let mut first = Pending {
        id: 0,
        parent: None,
        fork_time: cfg.t0,
        loc: ha.init_location,
        t: cfg.t0,
        x: x0,
        alloc,
        h: cfg.dt,
        watch: Vec::new(),
        ignore: Vec::new(),
        segments: vec![init],
        error: None,
    };
    let t0 = AffineForm::constant(cfg.t0);
    for j in ha.outgoing(ha.init_location) {
        if !guard_on_forms(&ha.edges[j].guard, &first.x, &t0, &first.alloc)?.is_false() {
            first.error = Some(format!("the guard of edge {} is not false on the initial set", j));
        }
    }
    let integ = cfg.effective_integ();
    let mut sim = Sim { c, cfg: cfg.clone(), integ, stack: vec![first], done: Vec::new(), next_id: 1, stats: Stats { branches: 1, ..Stats::default() } };
    sim.run();
    let complete = sim.done.iter().all(Branch::is_complete);
    Ok(Flowpipe {
        vars: ha.vars.clone(),
        locations: ha.locations.iter().map(|l| l.name.clone()).collect(),
        t0: cfg.t0,
        t_f: cfg.t_f,
        branches: sim.done,
        complete,
        stats: sim.stats,
        warnings: Vec::new(),
    })
}
