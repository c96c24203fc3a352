//! Validated explicit Runge-Kutta steps.
//!
//! One step from a set `x_n` at time `t_n` with size `h` produces
//!
//! * an a priori box `Z` containing every solution over `[t_n, t_n + h]`,
//!   verified by the Picard operator `x_n + [0, h] f([t_n, t_n + h], Z) ⊆ Z`;
//! * the Runge-Kutta image `x'` evaluated in affine arithmetic;
//! * a truncation bound `e = h^(p+1)/(p+1)! (f^(p)(Z) - phi^(p+1)([0, h]))`
//!   where `phi` is the method viewed as a function of the step length;
//! * the enclosure `x_{n+1} = x' + e` of every solution at `t_n + h`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::affine::{AffineForm, NoiseAlloc, NoiseId, NoiseSource, SlackOnly};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::graph::{ExprGraph, NodeId, Tape, Wrt};
use crate::interval::Interval;
use crate::rounding::{add_down, add_up, mul_up};

/// Exact rational coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio(pub i64, pub i64);

impl Ratio {
    pub const ZERO: Ratio = Ratio(0, 1);

    pub fn value(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    fn reduce(self) -> Ratio {
        fn gcd(a: i64, b: i64) -> i64 {
            if b == 0 {
                a.abs()
            } else {
                gcd(b, a % b)
            }
        }
        let g = gcd(self.0, self.1).max(1);
        let s = if self.1 < 0 { -1 } else { 1 };
        Ratio(s * self.0 / g, s * self.1 / g)
    }

    pub fn sub(self, o: Ratio) -> Ratio {
        Ratio(self.0 * o.1 - o.0 * self.1, self.1 * o.1).reduce()
    }

    fn scale(self, x: &AffineForm) -> AffineForm {
        x.scale_ratio(self.0 as f64, self.1 as f64)
    }
}

/// Explicit Butcher tableau with exact coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTable {
    pub name: &'static str,
    /// Strictly lower triangular, `a[i][j]` for `j < i`.
    pub a: Vec<Vec<Ratio>>,
    pub b: Vec<Ratio>,
    pub c: Vec<Ratio>,
    /// Order used for the truncation bound.
    pub order: usize,
    /// Weights of the comparison solution. When one longer than `b`, the
    /// extra stage is `f(t_n + h, x')`.
    pub embedded: Option<Vec<Ratio>>,
}

impl ButcherTable {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Bogacki-Shampine pair: `x' = x + h/9 (2k1 + 3k2 + 4k3)` and the
    /// comparison `z = x + h/24 (7k1 + 6k2 + 8k3 + 3k4)`.
    pub fn ode23() -> Self {
        ButcherTable {
            name: "ode23",
            a: vec![vec![], vec![Ratio(1, 2)], vec![Ratio::ZERO, Ratio(3, 4)]],
            b: vec![Ratio(2, 9), Ratio(3, 9), Ratio(4, 9)],
            c: vec![Ratio::ZERO, Ratio(1, 2), Ratio(3, 4)],
            order: 2,
            embedded: Some(vec![Ratio(7, 24), Ratio(6, 24), Ratio(8, 24), Ratio(3, 24)]),
        }
    }

    /// Classical fourth-order method (no embedded estimate).
    pub fn rk4() -> Self {
        ButcherTable {
            name: "rk4",
            a: vec![vec![], vec![Ratio(1, 2)], vec![Ratio::ZERO, Ratio(1, 2)], vec![Ratio::ZERO, Ratio::ZERO, Ratio(1, 1)]],
            b: vec![Ratio(1, 6), Ratio(1, 3), Ratio(1, 3), Ratio(1, 6)],
            c: vec![Ratio::ZERO, Ratio(1, 2), Ratio(1, 2), Ratio(1, 1)],
            order: 4,
            embedded: None,
        }
    }

    /// Forward Euler.
    pub fn euler() -> Self {
        ButcherTable { name: "euler", a: vec![vec![]], b: vec![Ratio(1, 1)], c: vec![Ratio::ZERO], order: 1, embedded: None }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "ode23" => Some(Self::ode23()),
            "rk4" => Some(Self::rk4()),
            "euler" => Some(Self::euler()),
            _ => None,
        }
    }

    /// Structural checks: explicit, consistent weights.
    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        let bad = |m: &str| Err(Error::Model(alloc::format!("{} table: {}", self.name, m)));
        if self.a.len() != s || self.c.len() != s {
            return bad("dimension mismatch");
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() > i {
                return bad("not explicit");
            }
        }
        let sum = self.b.iter().fold(Ratio::ZERO, |acc, r| acc.sub(Ratio(-r.0, r.1)));
        if sum != Ratio(1, 1) {
            return bad("weights do not sum to one");
        }
        if let Some(e) = &self.embedded {
            if e.len() != s && e.len() != s + 1 {
                return bad("embedded weights have the wrong length");
            }
        }
        Ok(())
    }
}

/// Compiled vector field with the derivative evaluators a step needs.
#[derive(Clone, Debug)]
pub struct FlowModel {
    dim: usize,
    graph: ExprGraph,
    flow: Vec<NodeId>,
    f: Tape,
    table: ButcherTable,
    /// `f^(p)` for the truncation bound.
    fp: Tape,
    /// `phi^(p+1)` over variables `(x_n, H, t_n)`.
    phi: Tape,
    /// `f^(k)` for interpolation remainders, keyed by `k`.
    extra: BTreeMap<usize, Tape>,
}

impl FlowModel {
    pub fn new(flow: &[Expr], table: ButcherTable) -> Result<Self> {
        table.validate()?;
        let dim = flow.len();
        let mut graph = ExprGraph::new();
        let fl: Vec<NodeId> = flow.iter().map(|e| graph.from_expr(e)).collect();
        let f = graph.tape(&fl);
        let mut d = fl.clone();
        for _ in 0..table.order {
            d = d.iter().map(|&n| graph.total_derivative(n, &fl)).collect::<Result<_>>()?;
        }
        let fp = graph.tape(&d);
        let phi_roots = build_phi(&mut graph, &fl, &table)?;
        let phi = graph.tape(&phi_roots);
        Ok(FlowModel { dim, graph, flow: fl, f, table, fp, phi, extra: BTreeMap::new() })
    }

    /// Precompute `f^(k)` (so `x^(k+1)`), used by interpolation remainders.
    pub fn with_derivative(mut self, k: usize) -> Result<Self> {
        if self.extra.contains_key(&k) {
            return Ok(self);
        }
        let mut d = self.flow.clone();
        for _ in 0..k {
            d = d.iter().map(|&n| self.graph.total_derivative(n, &self.flow)).collect::<Result<_>>()?;
        }
        let t = self.graph.tape(&d);
        self.extra.insert(k, t);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn table(&self) -> &ButcherTable {
        &self.table
    }

    pub fn derivative_tape(&self, k: usize) -> Option<&Tape> {
        if k == 0 {
            Some(&self.f)
        } else if k == self.table.order {
            Some(&self.fp)
        } else {
            self.extra.get(&k)
        }
    }

    pub fn eval<S: NoiseSource + ?Sized>(&self, x: &[AffineForm], t: &AffineForm, src: &mut S) -> Result<Vec<AffineForm>> {
        self.f.eval_aff(x, t, src)
    }

    pub fn eval_f64(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.f.eval_f64(x, t)
    }

    /// Evaluate `f` over a box and time interval without correlations.
    pub fn eval_box(&self, z: &[Interval], t: Interval) -> Result<Vec<Interval>> {
        eval_tape_box(&self.f, z, t)
    }
}

/// Interval evaluation of a tape over a box, with a private symbol space.
pub fn eval_tape_box(tape: &Tape, z: &[Interval], t: Interval) -> Result<Vec<Interval>> {
    let mut scratch = NoiseAlloc::new();
    let forms: Vec<AffineForm> = z.iter().map(|iv| AffineForm::from_interval(*iv, &mut scratch)).collect();
    let tf = AffineForm::from_interval(t, &mut scratch);
    Ok(tape.eval_aff(&forms, &tf, &mut scratch)?.iter().map(AffineForm::to_interval).collect())
}

/// Exact node for a rational coefficient.
fn ratio_node(g: &mut ExprGraph, r: Ratio) -> NodeId {
    let n = g.constant(r.0 as f64);
    let d = g.constant(r.1 as f64);
    g.div(n, d)
}

/// `phi^(p+1)(H)` where `phi(H) = x + H sum b_i k_i(H)`, with the state at
/// the start of the step as variables `0..n`, `H` as variable `n` and the
/// start time as variable `n + 1`.
fn build_phi(g: &mut ExprGraph, flow: &[NodeId], table: &ButcherTable) -> Result<Vec<NodeId>> {
    let n = flow.len();
    let h = g.var(n);
    let t0 = g.var(n + 1);
    let xs: Vec<NodeId> = (0..n).map(|i| g.var(i)).collect();
    let mut ks: Vec<Vec<NodeId>> = Vec::new();
    for i in 0..table.stages() {
        let mut stage_x = Vec::with_capacity(n);
        for j in 0..n {
            let mut acc = g.constant(0.0);
            for (l, &a) in table.a[i].iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                let r = ratio_node(g, a);
                let term = g.mul(r, ks[l][j]);
                acc = g.add(acc, term);
            }
            let step = g.mul(h, acc);
            stage_x.push(g.add(xs[j], step));
        }
        let cr = ratio_node(g, table.c[i]);
        let ch = g.mul(cr, h);
        let ti = g.add(t0, ch);
        let mut k = Vec::with_capacity(n);
        for &fj in flow {
            k.push(g.substitute(fj, &|v| stage_x.get(v as usize).copied(), Some(ti))?);
        }
        ks.push(k);
    }
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = g.constant(0.0);
        for (i, &b) in table.b.iter().enumerate() {
            if b.is_zero() {
                continue;
            }
            let r = ratio_node(g, b);
            let term = g.mul(r, ks[i][j]);
            acc = g.add(acc, term);
        }
        let step = g.mul(h, acc);
        let mut phi = g.add(xs[j], step);
        for _ in 0..=table.order {
            phi = g.partial(phi, Wrt::Var(n as u32))?;
        }
        out.push(phi);
    }
    Ok(out)
}

/// Integration parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegCfg {
    pub tol: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub picard_max_iters: usize,
    pub inflation: f64,
    pub safety: f64,
}

impl Default for IntegCfg {
    fn default() -> Self {
        IntegCfg { tol: 1e-6, h_min: 1e-6, h_max: 0.1, picard_max_iters: 20, inflation: 0.1, safety: 0.9 }
    }
}

impl IntegCfg {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.h_min > 0.0 && self.h_min <= self.h_max && self.h_max.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!(
                "integration settings need tol > 0 and 0 < h_min <= h_max (tol {}, h_min {}, h_max {})",
                self.tol,
                self.h_min,
                self.h_max
            )));
        }
        Ok(())
    }
}

/// Interval time span `[t.lo, t.hi + h]`.
pub fn step_span(t: Interval, h: f64) -> Interval {
    Interval::new(t.lo(), add_up(t.hi(), h)).expect("finite time")
}

fn picard_image(flow: &FlowModel, x: &[Interval], z: &[Interval], span: Interval, h: f64) -> Result<Vec<Interval>> {
    let f = flow.eval_box(z, span)?;
    let hh = Interval::new(0.0, h).expect("finite step");
    Ok(x.iter().zip(&f).map(|(xi, fi)| xi.add(&hh.mul(fi))).collect())
}

fn contained(inner: &[Interval], outer: &[Interval]) -> bool {
    inner.iter().zip(outer).all(|(a, b)| b.contains_interval(a))
}

/// A priori enclosure of all solutions from `x_n` over `[t, t + h]`.
/// Returns `None` when no verified box is found; the caller shrinks `h`.
pub fn picard_enclosure(flow: &FlowModel, x_n: &[AffineForm], t: Interval, h: f64, cfg: &IntegCfg) -> Result<Option<Vec<Interval>>> {
    let x: Vec<Interval> = x_n.iter().map(AffineForm::to_interval).collect();
    let span = step_span(t, h);
    let f0 = flow.eval_box(&x, t)?;
    let mut z: Vec<Interval> = x
        .iter()
        .zip(&f0)
        .map(|(xi, fi)| {
            let d = mul_up(mul_up(fi.mag(), h), 1.0 + cfg.inflation);
            xi.inflate(0.0, d)
        })
        .collect();
    let mut eps = cfg.inflation;
    let mut last_excess = f64::INFINITY;
    for _ in 0..cfg.picard_max_iters {
        let img = match picard_image(flow, &x, &z, span, h) {
            Ok(img) => img,
            Err(Error::DivisionByZero { .. } | Error::Domain { .. } | Error::NonSmooth { .. } | Error::NonFinite(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if contained(&img, &z) {
            // the image is itself mapped into z, so it is a fixpoint box too;
            // narrow further only while the result stays one
            let mut best = z;
            let mut cand = img;
            for _ in 0..3 {
                let Ok(next) = picard_image(flow, &x, &cand, span, h) else { break };
                if !contained(&next, &cand) {
                    break;
                }
                best = cand;
                let narrowed: Option<Vec<Interval>> = next.iter().zip(&best).map(|(a, b)| a.intersect(b)).collect();
                match narrowed {
                    Some(nz) => cand = nz,
                    None => break,
                }
            }
            return Ok(Some(best));
        }
        let excess: f64 = img.iter().zip(&z).map(|(a, b)| (b.lo() - a.lo()).max(a.hi() - b.hi()).max(0.0)).fold(0.0, f64::max);
        if excess >= last_excess {
            eps *= 2.0;
        }
        last_excess = excess;
        z = img
            .iter()
            .zip(&z)
            .map(|(a, b)| a.hull(b).inflate(0.0, add_up(mul_up(a.width(), eps), 1e-300)))
            .collect();
        if z.iter().any(|iv| !iv.width().is_finite() || iv.mag() > 1e100) {
            return Ok(None);
        }
    }
    Ok(None)
}

/// Runge-Kutta image and stage values, in affine arithmetic.
pub fn rk_stages<S: NoiseSource + ?Sized>(
    flow: &FlowModel,
    x_n: &[AffineForm],
    t: &AffineForm,
    h: f64,
    src: &mut S,
) -> Result<(Vec<AffineForm>, Vec<Vec<AffineForm>>)> {
    let table = &flow.table;
    let hf = AffineForm::constant(h);
    let mut ks: Vec<Vec<AffineForm>> = Vec::with_capacity(table.stages());
    for i in 0..table.stages() {
        let xi: Vec<AffineForm> = (0..flow.dim)
            .map(|j| {
                let mut acc = AffineForm::zero();
                for (l, &a) in table.a[i].iter().enumerate() {
                    if !a.is_zero() {
                        acc = acc.add(&a.scale(&ks[l][j]));
                    }
                }
                x_n[j].add(&acc.scale(h))
            })
            .collect();
        let ti = if table.c[i].is_zero() { t.clone() } else { t.add(&table.c[i].scale(&hf)) };
        ks.push(flow.eval(&xi, &ti, src)?);
    }
    let next = (0..flow.dim)
        .map(|j| {
            let mut acc = AffineForm::zero();
            for (i, &b) in table.b.iter().enumerate() {
                acc = acc.add(&b.scale(&ks[i][j]));
            }
            x_n[j].add(&acc.scale(h))
        })
        .collect();
    Ok((next, ks))
}

/// Largest magnitude of `x' - z` over the components, where `z` is the
/// embedded comparison solution. Zero when the table has none.
pub fn embedded_error<S: NoiseSource + ?Sized>(
    flow: &FlowModel,
    x_next: &[AffineForm],
    ks: &[Vec<AffineForm>],
    t: &AffineForm,
    h: f64,
    src: &mut S,
) -> Result<f64> {
    embedded_error_before(flow, x_next, ks, t, h, None, src)
}

/// Like [`embedded_error`], counting only the center and the symbols
/// issued before `fresh_from`. Symbols created while evaluating the stages
/// carry the nonlinearity of the set rather than the method error, and
/// they do not cancel between the two formulas; steering the step with
/// them would shrink it with the set width.
pub fn embedded_error_before<S: NoiseSource + ?Sized>(
    flow: &FlowModel,
    x_next: &[AffineForm],
    ks: &[Vec<AffineForm>],
    t: &AffineForm,
    h: f64,
    fresh_from: Option<NoiseId>,
    src: &mut S,
) -> Result<f64> {
    let table = &flow.table;
    let Some(e) = &table.embedded else { return Ok(0.0) };
    let mut ks = ks.to_vec();
    if e.len() > table.stages() {
        let t1 = t.add(&AffineForm::constant(h));
        ks.push(flow.eval(x_next, &t1, src)?);
    }
    let mut err: f64 = 0.0;
    for j in 0..flow.dim {
        let mut acc = AffineForm::zero();
        for (i, k) in ks.iter().enumerate() {
            let b = table.b.get(i).copied().unwrap_or(Ratio::ZERO);
            let w = b.sub(e[i]);
            if !w.is_zero() {
                acc = acc.add(&w.scale(&k[j]));
            }
        }
        let d = acc.scale(h);
        let d = match fresh_from {
            None => d,
            Some(mark) => {
                let kept = d.terms().iter().copied().filter(|(id, _)| *id < mark).collect();
                AffineForm::from_parts(d.center(), kept, 0.0)
            }
        };
        err = err.max(d.to_interval().mag());
    }
    Ok(err)
}

/// Sub-intervals of the step used to evaluate the remainders.
const TRUNC_SPLITS: usize = 8;

/// Issues increasing ids above every id of some forms; the resulting terms
/// are private and must be folded away before leaving the caller.
struct Above(u64);

impl NoiseSource for Above {
    fn fresh(&mut self) -> Option<NoiseId> {
        let id = NoiseId(self.0);
        self.0 += 1;
        Some(id)
    }
}

/// Rigorous bound on the local truncation error, as one affine form per
/// component (correlated with `x_n` through its linear part).
///
/// The solution part is enclosed on pieces of the step: on `[a, b]` every
/// solution stays in `x_n + [a, b] f(Z)`, intersected with `Z`. The method
/// part tracks the step variable `H` as a private symbol, one piece at a
/// time. Both reduce to the plain formula with a single piece.
pub fn truncation_bound(flow: &FlowModel, x_n: &[AffineForm], t: &AffineForm, z: &[Interval], h: f64) -> Result<Vec<AffineForm>> {
    let n = flow.dim;
    let tiv = t.to_interval();
    let span = step_span(tiv, h);
    let xbox: Vec<Interval> = x_n.iter().map(AffineForm::to_interval).collect();
    let speed = flow.eval_box(z, span)?;
    let cuts: Vec<f64> = (0..=TRUNC_SPLITS).map(|k| if k == TRUNC_SPLITS { h } else { h * k as f64 / TRUNC_SPLITS as f64 }).collect();
    let mut fp: Option<Vec<Interval>> = None;
    for w in cuts.windows(2) {
        let piece = Interval::new(w[0], w[1]).expect("ordered cuts");
        let zk: Vec<Interval> = (0..n)
            .map(|j| {
                let reach = xbox[j].add(&piece.mul(&speed[j]));
                reach.intersect(&z[j]).unwrap_or(z[j])
            })
            .collect();
        let tk = Interval::new(add_down(tiv.lo(), w[0]), add_up(tiv.hi(), w[1])).expect("finite time");
        let vals = eval_tape_box(&flow.fp, &zk, tk)?;
        fp = Some(match fp {
            None => vals,
            Some(acc) => acc.iter().zip(&vals).map(|(a, b)| a.hull(b)).collect(),
        });
    }
    let fp = fp.expect("at least one piece");

    let first_private = x_n.iter().chain(core::iter::once(t)).filter_map(|f| f.terms().last()).map(|t| t.0 .0 + 1).max().unwrap_or(0);
    let mut pieces: Vec<Vec<AffineForm>> = Vec::with_capacity(TRUNC_SPLITS);
    for w in cuts.windows(2) {
        let mut src = Above(first_private);
        let mut vars = x_n.to_vec();
        vars.push(AffineForm::from_interval(Interval::new(w[0], w[1]).expect("ordered cuts"), &mut src));
        vars.push(t.clone());
        let vals = flow.phi.eval_aff(&vars, &AffineForm::zero(), &mut SlackOnly)?;
        pieces.push(vals.iter().map(|f| f.fold_from(NoiseId(first_private))).collect());
    }
    let p1 = flow.table.order + 1;
    let fact: i64 = (1..=p1 as i64).product();
    let base = &pieces[TRUNC_SPLITS / 2];
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        // one piece keeps the correlation with x_n; the slack covers how far
        // the other pieces deviate from it
        let spread = pieces.iter().map(|pc| pc[j].sub(&base[j]).to_interval().mag()).fold(0.0, f64::max);
        let phi_j = base[j].add(&AffineForm::from_parts(0.0, Vec::new(), spread));
        let fj = AffineForm::from_interval(fp[j], &mut SlackOnly);
        let mut d = fj.sub(&phi_j);
        for _ in 0..p1 {
            d = d.scale(h);
        }
        out.push(d.scale_ratio(1.0, fact as f64));
    }
    Ok(out)
}

/// Adjust `h` so that a point start time plus `h` is a double; keeps the
/// time grid exact.
pub fn exact_step(t: Interval, h: f64) -> f64 {
    if !t.is_point() {
        return h;
    }
    let s = t.lo() + h;
    let h2 = s - t.lo();
    let (s2, e) = crate::rounding::two_sum(t.lo(), h2);
    if h2 > 0.0 && s2 == s && e == 0.0 {
        h2
    } else {
        h
    }
}

/// Step-size control: accept when `err <= tol` and propose the next size.
pub fn step_control(err: f64, tol: f64, h: f64, cfg: &IntegCfg) -> (bool, f64) {
    if err <= tol {
        let next = if err == 0.0 { cfg.h_max } else { cfg.safety * h * libm::cbrt(tol / err) };
        (true, next.clamp(cfg.h_min, cfg.h_max))
    } else {
        (false, (h / 2.0).max(cfg.h_min))
    }
}

/// Result of one accepted step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub x_next: Vec<AffineForm>,
    /// Enclosure of every solution over the whole step.
    pub hull: Vec<Interval>,
    pub stages: Vec<Vec<AffineForm>>,
    pub err_est: f64,
    pub trunc: Vec<AffineForm>,
    pub h_used: f64,
    pub h_next: f64,
    pub t_next: Interval,
    pub rejections: usize,
}

/// One validated step starting from `x_n` at time `t` (an enclosure of the
/// current time). The step size is halved on failure down to `h_min`.
/// `fixed` disables rejection on the error estimate.
pub fn guaranteed_step(
    flow: &FlowModel,
    x_n: &[AffineForm],
    t: Interval,
    h0: f64,
    cfg: &IntegCfg,
    alloc: &mut NoiseAlloc,
) -> Result<StepOutcome> {
    // a step clipped to land on the final time may be shorter than h_min
    let mut h = exact_step(t, h0.min(cfg.h_max));
    let mut rejections = 0;
    let tform = AffineForm::from_interval(t, alloc);
    loop {
        let at_min = h <= cfg.h_min;
        let fail = |reason| Error::StepFailure { t: t.lo(), h, reason };
        let Some(z) = picard_enclosure(flow, x_n, t, h, cfg)? else {
            let next = exact_step(t, (h / 2.0).max(cfg.h_min));
            // rounding to the time grid can keep `h` just above `h_min`
            if at_min || next >= h {
                return Err(fail("no verified a priori enclosure"));
            }
            h = next;
            rejections += 1;
            continue;
        };
        let mark = alloc.peek();
        let (xp, ks) = rk_stages(flow, x_n, &tform, h, alloc)?;
        let err = embedded_error_before(flow, &xp, &ks, &tform, h, Some(mark), &mut SlackOnly)?;
        let trunc = truncation_bound(flow, x_n, &tform, &z, h)?;
        let twidth = trunc.iter().map(|e| e.to_interval().width()).fold(0.0, f64::max);
        let est = if flow.table.embedded.is_some() { err } else { twidth };
        let (ok, h_next) = step_control(est, cfg.tol, h, cfg);
        let ok = ok && twidth <= 10.0 * cfg.tol;
        if !ok {
            let next = exact_step(t, h_next.min(h / 2.0).max(cfg.h_min));
            if at_min || next >= h {
                return Err(fail("error tolerance not met at the minimum step"));
            }
            h = next;
            rejections += 1;
            continue;
        }
        let x_next: Vec<AffineForm> = xp.iter().zip(&trunc).map(|(a, e)| a.add(e)).collect();
        if x_next.iter().any(|x| !x.is_finite()) {
            return Err(fail("non-finite enclosure"));
        }
        let hull = z.iter().zip(&x_next).map(|(zi, xi)| zi.hull(&xi.to_interval())).collect();
        let t_next = Interval::new(crate::rounding::add_down(t.lo(), h), add_up(t.hi(), h)).expect("finite time");
        return Ok(StepOutcome { x_next, hull, stages: ks, err_est: err, trunc, h_used: h, h_next, t_next, rejections });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var(0)
    }

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn tables_are_consistent() {
        for t in [ButcherTable::ode23(), ButcherTable::rk4(), ButcherTable::euler()] {
            t.validate().unwrap();
        }
    }

    #[test]
    fn picard_examples() {
        let cfg = IntegCfg::default();
        let zero = FlowModel::new(&[Expr::c(0.0)], ButcherTable::ode23()).unwrap();
        let z = picard_enclosure(&zero, &[AffineForm::constant(1.0)], Interval::point(0.0), 0.1, &cfg).unwrap().unwrap();
        assert_eq!(z[0], Interval::point(1.0));
        let one = FlowModel::new(&[Expr::c(1.0)], ButcherTable::ode23()).unwrap();
        let z = picard_enclosure(&one, &[AffineForm::constant(0.0)], Interval::point(0.0), 0.1, &cfg).unwrap().unwrap();
        assert!(z[0].contains_interval(&iv(0.0, 0.1)));
        let decay = FlowModel::new(&[-x()], ButcherTable::ode23()).unwrap();
        let mut al = NoiseAlloc::new();
        let x0 = AffineForm::from_interval(iv(0.9, 1.1), &mut al);
        let z = picard_enclosure(&decay, &[x0], Interval::point(0.0), 0.1, &cfg).unwrap().unwrap();
        assert!(z[0].contains_interval(&iv(0.9 * libm::exp(-0.1), 1.1)));
    }

    #[test]
    fn constant_flow_stages() {
        let one = FlowModel::new(&[Expr::c(1.0)], ButcherTable::ode23()).unwrap();
        let mut al = NoiseAlloc::new();
        let (xn, ks) = rk_stages(&one, &[AffineForm::constant(2.0)], &AffineForm::zero(), 0.3, &mut al).unwrap();
        for k in &ks {
            assert_eq!(k[0].to_interval(), Interval::point(1.0));
        }
        assert!(xn[0].to_interval().contains(2.3));
        assert!(xn[0].to_interval().width() < 1e-15);
        let err = embedded_error(&one, &xn, &ks, &AffineForm::zero(), 0.3, &mut al).unwrap();
        assert!(err < 1e-15);
        let tb = truncation_bound(&one, &[AffineForm::constant(2.0)], &AffineForm::zero(), &[iv(2.0, 2.3)], 0.3).unwrap();
        assert_eq!(tb[0].to_interval(), Interval::point(0.0));
    }

    #[test]
    fn stages_match_scalar_reference() {
        let decay = FlowModel::new(&[-x()], ButcherTable::ode23()).unwrap();
        let mut al = NoiseAlloc::new();
        let (xn, _) = rk_stages(&decay, &[AffineForm::constant(1.0)], &AffineForm::zero(), 0.1, &mut al).unwrap();
        let h = 0.1;
        let k1 = -1.0;
        let k2 = -(1.0 + 0.5 * h * k1);
        let k3 = -(1.0 + 0.75 * h * k2);
        let reference = 1.0 + h / 9.0 * (2.0 * k1 + 3.0 * k2 + 4.0 * k3);
        let r = xn[0].to_interval();
        assert!(r.contains(reference) || (r.mid() - reference).abs() < 1e-15);
        assert!(r.width() < 1e-14);
    }

    #[test]
    fn euler_phi_second_derivative_vanishes_for_linear_growth() {
        let g = FlowModel::new(&[x()], ButcherTable::euler()).unwrap();
        let mut al = NoiseAlloc::new();
        let tb = truncation_bound(&g, &[AffineForm::constant(1.0)], &AffineForm::zero(), &[iv(1.0, 1.2)], 0.1).unwrap();
        // f^(1) = x over [1, 1.2], phi'' = 0
        let r = tb[0].to_interval();
        assert!(r.lo() >= 0.005 - 1e-12 && r.hi() <= 0.006 + 1e-12, "{:?}", r);
        let _ = &mut al;
    }

    #[test]
    fn step_control_examples() {
        let cfg = IntegCfg { h_max: 10.0, ..IntegCfg::default() };
        let (ok, h) = step_control(1e-6, 1e-6, 0.1, &cfg);
        assert!(ok && (h - 0.09).abs() < 1e-12);
        let (ok, h) = step_control(1e-6 / 8.0, 1e-6, 0.1, &cfg);
        assert!(ok && (h - 0.18).abs() < 1e-12);
        let (ok, h) = step_control(2e-6, 1e-6, 0.1, &cfg);
        assert!(!ok && h == 0.05);
        let (ok, h) = step_control(0.0, 1e-6, 0.1, &cfg);
        assert!(ok && h == 10.0);
    }

    #[test]
    fn decay_to_one_contains_exact_value() {
        let decay = FlowModel::new(&[-x()], ButcherTable::ode23()).unwrap();
        let cfg = IntegCfg { tol: 1e-3, h_max: 0.5, ..IntegCfg::default() };
        let mut al = NoiseAlloc::new();
        let mut state = vec![AffineForm::constant(1.0)];
        let mut t = Interval::point(0.0);
        for _ in 0..8 {
            let out = guaranteed_step(&decay, &state, t, 0.125, &cfg, &mut al).unwrap();
            assert_eq!(out.h_used, 0.125);
            state = out.x_next;
            t = out.t_next;
        }
        assert_eq!(t, Interval::point(1.0));
        assert!(state[0].to_interval().contains(libm::exp(-1.0)));
    }
}
