//! Hybrid automata: locations with flows, guarded edges with resets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::affine::Rel;
use crate::error::{Error, Result};
use crate::expr::{Expr, Guard, Reset};
use crate::graph::ExprGraph;
use crate::interval::Interval;

#[derive(Clone, Debug, PartialEq)]
pub struct Location {
    pub name: String,
    /// One right-hand side per state variable.
    pub flow: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub guard: Guard,
    pub reset: Reset,
    /// Messages attached to the transition (for example `print` output).
    pub annotations: Vec<String>,
}

impl Edge {
    pub fn new(from: usize, to: usize, guard: Guard, reset: Reset) -> Edge {
        Edge { from, to, guard, reset, annotations: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridAutomaton {
    pub vars: Vec<String>,
    pub locations: Vec<Location>,
    pub edges: Vec<Edge>,
    pub init_location: usize,
    pub init_box: Vec<Interval>,
}

impl HybridAutomaton {
    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.name == name)
    }

    /// Indices of the edges leaving location `loc`, in declaration order.
    pub fn outgoing(&self, loc: usize) -> Vec<usize> {
        self.edges.iter().enumerate().filter(|(_, e)| e.from == loc).map(|(i, _)| i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let bad = |msg: String| Err(Error::Model(msg));
        if self.locations.is_empty() {
            return bad("automaton has no locations".into());
        }
        if self.init_location >= self.locations.len() {
            return bad(format!("initial location {} does not exist", self.init_location));
        }
        if self.init_box.len() != n {
            return bad(format!("initial box has {} components for {} variables", self.init_box.len(), n));
        }
        for loc in &self.locations {
            if loc.flow.len() != n {
                return bad(format!("location '{}' defines {} flows for {} variables", loc.name, loc.flow.len(), n));
            }
            for f in &loc.flow {
                if f.max_var().is_some_and(|m| m >= n) {
                    return bad(format!("flow in location '{}' references an undeclared variable", loc.name));
                }
            }
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.from >= self.locations.len() || e.to >= self.locations.len() {
                return bad(format!("edge {} references a missing location", k));
            }
            if e.guard.max_var().is_some_and(|m| m >= n) {
                return bad(format!("guard of edge {} references an undeclared variable", k));
            }
            for (v, rhs) in &e.reset.assignments {
                if *v >= n || rhs.max_var().is_some_and(|m| m >= n) {
                    return bad(format!("reset of edge {} references an undeclared variable", k));
                }
            }
        }
        Ok(())
    }

    /// Run the guard strictness transform on every edge. Returns one
    /// warning per edge that could not be put in exiting form.
    pub fn make_guards_strict(&mut self) -> Vec<String> {
        let mut warnings = Vec::new();
        for k in 0..self.edges.len() {
            let (edge, warn) = guard_strictness_transform(&self.edges[k]);
            self.edges[k] = edge;
            if let Some(w) = warn {
                warnings.push(format!("edge {} ({} -> {}): {}", k, self.locations[self.edges[k].from].name, self.locations[self.edges[k].to].name, w));
            }
        }
        warnings
    }
}

/// Guard of the form `var rel c` (either orientation), normalized so the
/// variable is on the left.
fn simple_var_guard(g: &Guard) -> Option<(usize, Rel, f64)> {
    match g {
        Guard::Cmp(Expr::Var(v), rel, Expr::Const(c)) => Some((*v, *rel, *c)),
        Guard::Cmp(Expr::Const(c), rel, Expr::Var(v)) => Some((*v, rel.flip(), *c)),
        _ => None,
    }
}

/// How the post-reset state relates to a strict comparison `e rel 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResetExit {
    /// The reset maps into a region where the guard is false.
    Outside,
    /// The guard expression is unchanged by the reset; at the crossing it is
    /// exactly zero, so the strict guard is false there.
    OnBoundary,
    /// Nothing could be proven.
    Unknown,
}

/// Compose the guard atom `e rel 0` with the reset symbolically and decide
/// whether the strict guard is false right after the jump.
pub fn reset_exit(e: &Expr, rel: Rel, reset: &Reset, dim: usize) -> ResetExit {
    let mut g = ExprGraph::new();
    let before = g.from_expr(e);
    let targets: Vec<_> = (0..dim).map(|v| g.from_expr(&reset.target(v))).collect();
    let after = match g.substitute(before, &|i| targets.get(i as usize).copied(), None) {
        Ok(a) => a,
        Err(_) => return ResetExit::Unknown,
    };
    if let Some(k) = g.as_const(after) {
        let falsified = match rel.strict() {
            Rel::Lt => k >= 0.0,
            Rel::Gt => k <= 0.0,
            _ => unreachable!(),
        };
        return if falsified { ResetExit::Outside } else { ResetExit::Unknown };
    }
    if after == before {
        ResetExit::OnBoundary
    } else {
        ResetExit::Unknown
    }
}

/// Make a guard strict and check that its reset exits it.
///
/// A closed comparison `e <= 0` becomes `e < 0`. For a guard `v rel c` whose
/// reset leaves `v` alone, the assignment `v := c` is added so the jump lands
/// exactly on the boundary. Guards that are not a single comparison, or
/// whose reset cannot be shown to leave the guard, are returned unchanged
/// (apart from strictness) together with a warning.
pub fn guard_strictness_transform(edge: &Edge) -> (Edge, Option<String>) {
    let mut out = edge.clone();
    let (lhs, rel, rhs) = match &edge.guard {
        Guard::Cmp(l, r, h) => (l.clone(), *r, h.clone()),
        _ => return (out, Some("guard is not a single comparison; a manual reformulation is required".into())),
    };
    out.guard = Guard::Cmp(lhs.clone(), rel.strict(), rhs.clone());
    if let Some((v, _, c)) = simple_var_guard(&edge.guard) {
        if !edge.reset.assigns(v) {
            out.reset.assignments.insert(0, (v, Expr::Const(c)));
        }
    }
    let dim = [lhs.max_var(), rhs.max_var()]
        .into_iter()
        .chain(out.reset.assignments.iter().flat_map(|(v, e)| [Some(*v), e.max_var()]))
        .flatten()
        .max()
        .map_or(0, |m| m + 1);
    let e = match &rhs {
        Expr::Const(c) if *c == 0.0 => lhs,
        _ => lhs - rhs,
    };
    match reset_exit(&e, rel, &out.reset, dim) {
        ResetExit::Outside | ResetExit::OnBoundary => (out, None),
        ResetExit::Unknown => (out, Some("cannot show that the reset leaves the guard; the transition may repeat immediately".into())),
    }
}
