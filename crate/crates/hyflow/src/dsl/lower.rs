//! Turning a parsed model into a single-location hybrid automaton.

use std::collections::{HashMap, HashSet};

use hyflow_core::automaton::{Edge, HybridAutomaton, Location};
use hyflow_core::integrator::ButcherTable;
use hyflow_core::{Expr, Guard, Interval, Reset};

use super::ast::*;
use crate::diag::{FrontResult, FrontendError, Span};
use crate::model::{default_config, Model, PlotHint};

/// Name of the clock variable added when `t` is used without a declaration.
pub const CLOCK: &str = "t";

pub(crate) fn lower_expr(e: &AstExpr, resolve: &mut dyn FnMut(&Ident) -> FrontResult<Expr>) -> FrontResult<Expr> {
    Ok(match e {
        AstExpr::Num(n) => Expr::c(n.value),
        AstExpr::Name(id) => resolve(id)?,
        AstExpr::Neg(a, _) => -lower_expr(a, resolve)?,
        AstExpr::Bin(op, a, b, _) => Expr::binary(*op, lower_expr(a, resolve)?, lower_expr(b, resolve)?),
        AstExpr::Pow(a, k, _) => lower_expr(a, resolve)?.powi(*k),
        AstExpr::Call(f, a, _) => Expr::unary(*f, lower_expr(a, resolve)?),
    })
}

pub(crate) fn lower_guard(g: &AstGuard, resolve: &mut dyn FnMut(&Ident) -> FrontResult<Expr>) -> FrontResult<Guard> {
    Ok(match g {
        AstGuard::Bool(b, _) => Guard::Const(*b),
        AstGuard::Cmp(a, r, b, _) => Guard::cmp(lower_expr(a, resolve)?, *r, lower_expr(b, resolve)?),
        AstGuard::And(a, b, _) => lower_guard(a, resolve)?.and(lower_guard(b, resolve)?),
        AstGuard::Or(a, b, _) => lower_guard(a, resolve)?.or(lower_guard(b, resolve)?),
        AstGuard::Not(a, _) => lower_guard(a, resolve)?.not(),
    })
}

/// Whether the decimal literal `text` denotes exactly the double `value`.
/// Answers `false` when unsure.
pub fn literal_is_exact(text: &str, value: f64) -> bool {
    if !value.is_finite() {
        return false;
    }
    let body = text.trim_start_matches(['-', '+']);
    let (mant, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i64>().unwrap_or(i64::MAX)),
        None => (body, 0),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits: String = format!("{int}{frac}");
    let digits = digits.trim_start_matches('0');
    let mut e10 = exp.saturating_sub(frac.len() as i64);
    let mut digits = digits.to_string();
    while digits.ends_with('0') {
        digits.pop();
        e10 += 1;
    }
    if digits.is_empty() {
        return value == 0.0;
    }
    let Ok(mut m) = digits.parse::<u128>() else { return false };
    // odd part of m * 10^e10 must fit in 53 bits
    if e10 >= 0 {
        for _ in 0..e10 {
            match m.checked_mul(5) {
                Some(v) => m = v,
                None => return false,
            }
        }
    } else {
        for _ in 0..(-e10) {
            if m % 5 != 0 {
                return false;
            }
            m /= 5;
        }
    }
    while m % 2 == 0 {
        m /= 2;
    }
    m < (1u128 << 53)
}

/// Interval guaranteed to contain the real number written as `n`.
pub fn literal_interval(n: &NumLit) -> Interval {
    if literal_is_exact(&n.text, n.value) {
        Interval::point(n.value)
    } else {
        Interval::new(n.value.next_down(), n.value.next_up()).expect("ordered bounds")
    }
}

fn model_err<T>(span: Span, message: impl Into<String>) -> FrontResult<T> {
    Err(FrontendError::Model { span, message: message.into() })
}

/// Build the automaton and run configuration of a parsed model.
pub fn lower_to_automaton(m: &DslModel) -> FrontResult<Model> {
    let constants: HashMap<&str, &Constant> = m.constants.iter().map(|c| (c.name.name.as_str(), c)).collect();
    let flows: HashMap<&str, &FlowEq> = m.flows.iter().map(|f| (f.var.name.as_str(), f)).collect();

    let mut vars: Vec<String> = Vec::new();
    let mut init_box = Vec::new();
    for i in &m.inits {
        if !flows.contains_key(i.var.name.as_str()) {
            return model_err(i.var.span, format!("{} has an initial value but neither an equation nor a constant definition", i.var.name));
        }
        vars.push(i.var.name.clone());
        init_box.push(match &i.value {
            InitValue::Scalar(n) => literal_interval(n),
            InitValue::Range(a, b) => Interval::new(literal_interval(a).lo(), literal_interval(b).hi())
                .map_err(|_| FrontendError::Model { span: i.span, message: "empty initial range".into() })?,
        });
    }
    for f in &m.flows {
        if !vars.contains(&f.var.name) {
            return model_err(f.var.span, format!("{} has an equation but no initial value", f.var.name));
        }
    }

    // implicit clock
    let mut used = Vec::new();
    for c in &m.constants {
        c.expr.names(&mut used);
    }
    for f in &m.flows {
        f.expr.names(&mut used);
    }
    for e in &m.events {
        e.guard.names(&mut used);
        for st in &e.body {
            if let Stmt::Assign(_, x, _) = st {
                x.names(&mut used);
            }
        }
    }
    let clock = used.iter().any(|id| id.name == CLOCK) && !vars.iter().any(|v| v == CLOCK) && !constants.contains_key(CLOCK);
    if clock {
        vars.push(CLOCK.to_string());
        init_box.push(Interval::point(0.0));
    }
    let index: HashMap<String, usize> = vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();

    let mut cache: HashMap<String, Expr> = HashMap::new();
    let mut resolve = |id: &Ident| resolve_name(id, &index, &constants, &mut cache, &mut HashSet::new());

    let mut flow = vec![Expr::c(0.0); vars.len()];
    for f in &m.flows {
        flow[index[&f.var.name]] = lower_expr(&f.expr, &mut resolve)?;
    }
    if clock {
        flow[index[CLOCK]] = Expr::c(1.0);
    }

    let mut edges = Vec::new();
    for ev in &m.events {
        let guard = lower_guard(&ev.guard, &mut resolve)?;
        let mut assigned: HashMap<usize, Span> = HashMap::new();
        let mut assigns = Vec::new();
        let mut notes = Vec::new();
        for st in &ev.body {
            match st {
                Stmt::Print(s, _) => notes.push(s.clone()),
                Stmt::Assign(v, x, _) => {
                    let Some(&k) = index.get(&v.name) else {
                        return model_err(v.span, format!("{} is not a state variable and cannot be assigned", v.name));
                    };
                    if let Some(prev) = assigned.insert(k, v.span) {
                        return Err(FrontendError::Duplicate { span: v.span, name: v.name.clone(), previous: prev });
                    }
                    assigns.push((k, lower_expr(x, &mut resolve)?));
                }
            }
        }
        let mut edge = Edge::new(0, 0, guard, Reset::new(assigns));
        edge.annotations = notes;
        edges.push(edge);
    }

    let mut cfg = default_config();
    let mut plot = PlotHint::default();
    for s in &m.settings {
        let num = match &s.value {
            Literal::Number(n) => n.value,
            _ => f64::NAN,
        };
        match s.name.name.as_str() {
            "duration" => cfg.t_f = cfg.t0 + num,
            "dt" => cfg.dt = num,
            "max_dt" => cfg.integ.h_max = num,
            "tol" => cfg.integ.tol = num,
            "zc_precision" => cfg.zc.precision = num,
            "scope_xy" => plot.xy = matches!(s.value, Literal::Bool(true, _)),
            "scheme" => {
                let name = match &s.value {
                    Literal::Name(i) => i.name.clone(),
                    Literal::Str(x, _) => x.clone(),
                    _ => String::new(),
                };
                cfg.scheme = ButcherTable::by_name(&name)
                    .ok_or_else(|| FrontendError::Model { span: s.value.span(), message: format!("unknown scheme {name} (known: ode23, rk4, euler)") })?;
            }
            _ => unreachable!("settings are checked while parsing"),
        }
    }
    if cfg.dt > cfg.integ.h_max {
        cfg.dt = cfg.integ.h_max;
    }
    if let Some(o) = &m.output {
        for v in &o.vars {
            match index.get(&v.name) {
                Some(&k) => plot.outputs.push(k),
                None => return model_err(v.span, format!("output {} is not a state variable", v.name)),
            }
        }
    } else {
        plot.outputs = (0..vars.len()).collect();
    }

    let mut ha = HybridAutomaton {
        vars,
        locations: vec![Location { name: "main".into(), flow }],
        edges,
        init_location: 0,
        init_box,
    };
    let whole = m.events.first().map(|e| e.span).unwrap_or_default();
    ha.validate().map_err(|e| FrontendError::Model { span: whole, message: e.to_string() })?;
    let warnings = ha.make_guards_strict();
    Ok(Model { ha, cfg, plot, warnings })
}

fn resolve_name(
    id: &Ident,
    index: &HashMap<String, usize>,
    constants: &HashMap<&str, &Constant>,
    cache: &mut HashMap<String, Expr>,
    visiting: &mut HashSet<String>,
) -> FrontResult<Expr> {
    if let Some(&k) = index.get(&id.name) {
        return Ok(Expr::var(k));
    }
    if let Some(e) = cache.get(&id.name) {
        return Ok(e.clone());
    }
    let Some(c) = constants.get(id.name.as_str()) else {
        return model_err(id.span, format!("unknown name {}", id.name));
    };
    if !visiting.insert(id.name.clone()) {
        return model_err(id.span, format!("constant {} is defined in terms of itself", id.name));
    }
    let e = lower_expr(&c.expr, &mut |inner: &Ident| resolve_name(inner, index, constants, cache, visiting))?;
    visiting.remove(&id.name);
    cache.insert(id.name.clone(), e.clone());
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_dsl;
    use super::*;

    fn lower(src: &str) -> FrontResult<Model> {
        lower_to_automaton(&parse_dsl(src).unwrap())
    }

    #[test]
    fn exact_literals() {
        for (t, exact) in [("1.", true), ("0.5", true), ("0.05", false), ("1.05", false), ("3.8", false), ("1e3", true), ("1e-3", false), ("0.125", true), ("-2.25", true), ("0", true), ("9007199254740993", false)] {
            let v: f64 = t.parse().unwrap();
            assert_eq!(literal_is_exact(t, v), exact, "{t}");
        }
    }

    #[test]
    fn inexact_initial_values_are_widened() {
        let m = lower("init x = [0.9, 1]; x' = 0;").unwrap();
        let iv = m.ha.init_box[0];
        assert!(iv.lo() < 0.9 && iv.hi() == 1.0);
    }

    #[test]
    fn no_events_no_edges() {
        let m = lower("init x = 1; x' = -x;").unwrap();
        assert!(m.ha.edges.is_empty());
        assert_eq!(m.ha.vars, vec!["x"]);
    }

    #[test]
    fn clock_added_when_t_is_free() {
        let m = lower("init x = 0; x' = sin(t);").unwrap();
        assert_eq!(m.ha.vars, vec!["x", "t"]);
        assert_eq!(m.ha.locations[0].flow[1], Expr::c(1.0));
    }

    #[test]
    fn model_errors() {
        assert!(lower("init x = 1;").is_err());
        assert!(lower("x' = 1;").is_err());
        assert!(lower("init x = 1; x' = y;").is_err());
        assert!(lower("init x = 1; a = b; b = a; x' = a;").is_err());
        assert!(lower("init x = 1; x' = 1; on x > 2 do { y = 1 };").is_err());
        assert!(lower("init x = 1; x' = 1; on x > 2 do { x = 1; x = 2 };").is_err());
        assert!(lower("set scheme = heun; init x = 1; x' = 1;").is_err());
    }

    #[test]
    fn constants_are_inlined() {
        let m = lower("init x = 1; k = 2 * c; c = 3; x' = -k * x;").unwrap();
        let f = &m.ha.locations[0].flow[0];
        assert_eq!(f.eval_f64(&[1.0], 0.0), -6.0);
    }
}
