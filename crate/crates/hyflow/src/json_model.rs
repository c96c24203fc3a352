//! Multi-location automata in JSON.
//!
//! ```json
//! { "variables": ["x"],
//!   "locations": [{ "name": "on", "flow": { "x": "-x + 30" } }],
//!   "edges": [{ "from": "on", "to": "on", "guard": "x >= 22", "reset": { "x": "x" } }],
//!   "init": { "location": "on", "box": { "x": [18, 19] } },
//!   "config": { "duration": 10, "dt": 0.01 } }
//! ```
//!
//! Expressions use the equation-language syntax. A free `t` denotes time.

use std::collections::HashMap;

use serde_json::{Map, Value};

use hyflow_core::automaton::{Edge, HybridAutomaton, Location};
use hyflow_core::integrator::ButcherTable;
use hyflow_core::{Expr, Interval, Reset};

use crate::diag::{FrontResult, FrontendError};
use crate::dsl::ast::{Ident, NumLit};
use crate::dsl::lower::{literal_interval, lower_expr, lower_guard};
use crate::dsl::{parse_expr, parse_guard};
use crate::model::{default_config, Model, PlotHint};

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

#[derive(Clone)]
struct Ptr(String);

impl Ptr {
    fn key(&self, k: &str) -> Ptr {
        Ptr(format!("{}/{}", self.0, escape(k)))
    }

    fn idx(&self, i: usize) -> Ptr {
        Ptr(format!("{}/{}", self.0, i))
    }

    fn err<T>(&self, message: impl Into<String>) -> FrontResult<T> {
        Err(FrontendError::Json { pointer: if self.0.is_empty() { "/".into() } else { self.0.clone() }, message: message.into() })
    }
}

fn object<'v>(v: &'v Value, p: &Ptr) -> FrontResult<&'v Map<String, Value>> {
    v.as_object().map_or_else(|| p.err("expected an object"), Ok)
}

fn array<'v>(v: &'v Value, p: &Ptr) -> FrontResult<&'v Vec<Value>> {
    v.as_array().map_or_else(|| p.err("expected an array"), Ok)
}

fn string<'v>(v: &'v Value, p: &Ptr) -> FrontResult<&'v str> {
    v.as_str().map_or_else(|| p.err("expected a string"), Ok)
}

fn number(v: &Value, p: &Ptr) -> FrontResult<NumLit> {
    match v {
        Value::Number(n) => {
            let text = n.to_string();
            let value = n.as_f64().filter(|x| x.is_finite());
            match value {
                Some(value) => Ok(NumLit { text, value, span: Default::default() }),
                None => p.err("number out of range"),
            }
        }
        _ => p.err("expected a number"),
    }
}

fn field<'v>(obj: &'v Map<String, Value>, key: &str, p: &Ptr) -> FrontResult<&'v Value> {
    obj.get(key).map_or_else(|| p.err(format!("missing field \"{key}\"")), Ok)
}

fn only_keys(obj: &Map<String, Value>, allowed: &[&str], p: &Ptr) -> FrontResult<()> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return p.key(k).err(format!("unknown field (allowed: {})", allowed.join(", ")));
        }
    }
    Ok(())
}

struct Names<'a> {
    vars: &'a HashMap<String, usize>,
}

impl Names<'_> {
    fn resolve(&self, id: &Ident) -> FrontResult<Expr> {
        if let Some(&k) = self.vars.get(&id.name) {
            Ok(Expr::var(k))
        } else if id.name == "t" {
            Ok(Expr::Time)
        } else {
            Err(FrontendError::Model { span: id.span, message: format!("unknown variable {}", id.name) })
        }
    }

    fn wrap(&self, e: FrontendError, p: &Ptr) -> FrontendError {
        match e.span() {
            Some(span) => {
                let msg = match &e {
                    FrontendError::Model { message, .. } => message.clone(),
                    other => other.to_string().split_once(": ").map_or(other.to_string(), |(_, m)| m.to_string()),
                };
                FrontendError::Json { pointer: p.0.clone(), message: format!("column {}: {msg}", span.col_start) }
            }
            None => e,
        }
    }

    fn expr(&self, v: &Value, p: &Ptr) -> FrontResult<Expr> {
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return p.err("expected an expression string"),
        };
        let ast = parse_expr(&text).map_err(|e| self.wrap(e, p))?;
        lower_expr(&ast, &mut |id| self.resolve(id)).map_err(|e| self.wrap(e, p))
    }

    fn guard(&self, v: &Value, p: &Ptr) -> FrontResult<hyflow_core::Guard> {
        let text = string(v, p)?;
        let ast = parse_guard(text).map_err(|e| self.wrap(e, p))?;
        lower_guard(&ast, &mut |id| self.resolve(id)).map_err(|e| self.wrap(e, p))
    }
}

/// Read an automaton and its configuration from JSON text.
pub fn parse_json_automaton(text: &str) -> FrontResult<Model> {
    let root: Value = serde_json::from_str(text).map_err(|e| FrontendError::Json {
        pointer: "/".into(),
        message: format!("invalid JSON at line {} column {}: {e}", e.line(), e.column()),
    })?;
    let p = Ptr(String::new());
    let top = object(&root, &p)?;
    only_keys(top, &["description", "variables", "locations", "edges", "init", "config"], &p)?;

    let pv = p.key("variables");
    let mut vars = Vec::new();
    let mut index = HashMap::new();
    for (i, v) in array(field(top, "variables", &p)?, &pv)?.iter().enumerate() {
        let name = string(v, &pv.idx(i))?;
        if !is_identifier(name) {
            return pv.idx(i).err(format!("\"{name}\" is not a valid variable name"));
        }
        if index.insert(name.to_string(), i).is_some() {
            return pv.idx(i).err(format!("variable {name} is listed twice"));
        }
        vars.push(name.to_string());
    }
    if vars.is_empty() {
        return pv.err("at least one variable is required");
    }
    let names = Names { vars: &index };

    let pl = p.key("locations");
    let mut locations = Vec::new();
    let mut loc_index = HashMap::new();
    for (i, l) in array(field(top, "locations", &p)?, &pl)?.iter().enumerate() {
        let pi = pl.idx(i);
        let lo = object(l, &pi)?;
        only_keys(lo, &["name", "flow"], &pi)?;
        let name = string(field(lo, "name", &pi)?, &pi.key("name"))?.to_string();
        if loc_index.insert(name.clone(), i).is_some() {
            return pi.key("name").err(format!("location {name} is defined twice"));
        }
        let pf = pi.key("flow");
        let fo = object(field(lo, "flow", &pi)?, &pf)?;
        let mut flow = vec![None; vars.len()];
        for (k, v) in fo {
            let Some(&vi) = index.get(k) else {
                return pf.key(k).err(format!("{k} is not a declared variable"));
            };
            flow[vi] = Some(names.expr(v, &pf.key(k))?);
        }
        let flow = flow
            .into_iter()
            .zip(&vars)
            .map(|(f, v)| f.map_or_else(|| pf.err(format!("missing equation for {v}")), Ok))
            .collect::<FrontResult<Vec<Expr>>>()?;
        locations.push(Location { name, flow });
    }
    if locations.is_empty() {
        return pl.err("at least one location is required");
    }

    let pe = p.key("edges");
    let mut edges = Vec::new();
    if let Some(ev) = top.get("edges") {
        for (i, e) in array(ev, &pe)?.iter().enumerate() {
            let pi = pe.idx(i);
            let eo = object(e, &pi)?;
            only_keys(eo, &["from", "to", "guard", "reset", "annotations"], &pi)?;
            let loc = |key: &str| -> FrontResult<usize> {
                let n = string(field(eo, key, &pi)?, &pi.key(key))?;
                loc_index.get(n).copied().map_or_else(|| pi.key(key).err(format!("unknown location {n}")), Ok)
            };
            let (from, to) = (loc("from")?, loc("to")?);
            let guard = names.guard(field(eo, "guard", &pi)?, &pi.key("guard"))?;
            let mut assigns = Vec::new();
            if let Some(r) = eo.get("reset") {
                let pr = pi.key("reset");
                for (k, v) in object(r, &pr)? {
                    let Some(&vi) = index.get(k) else {
                        return pr.key(k).err(format!("{k} is not a declared variable"));
                    };
                    assigns.push((vi, names.expr(v, &pr.key(k))?));
                }
            }
            let mut edge = Edge::new(from, to, guard, Reset::new(assigns));
            if let Some(a) = eo.get("annotations") {
                let pa = pi.key("annotations");
                for (j, s) in array(a, &pa)?.iter().enumerate() {
                    edge.annotations.push(string(s, &pa.idx(j))?.to_string());
                }
            }
            edges.push(edge);
        }
    }

    let pin = p.key("init");
    let io = object(field(top, "init", &p)?, &pin)?;
    only_keys(io, &["location", "box"], &pin)?;
    let lname = string(field(io, "location", &pin)?, &pin.key("location"))?;
    let Some(&init_location) = loc_index.get(lname) else {
        return pin.key("location").err(format!("unknown location {lname}"));
    };
    let pb = pin.key("box");
    let bo = object(field(io, "box", &pin)?, &pb)?;
    let mut init_box = vec![None; vars.len()];
    for (k, v) in bo {
        let pk = pb.key(k);
        let Some(&vi) = index.get(k) else {
            return pk.err(format!("{k} is not a declared variable"));
        };
        let iv = match v {
            Value::Array(a) if a.len() == 2 => {
                let lo = literal_interval(&number(&a[0], &pk.idx(0))?);
                let hi = literal_interval(&number(&a[1], &pk.idx(1))?);
                Interval::new(lo.lo(), hi.hi()).map_or_else(|_| pk.err("lower bound exceeds upper bound"), Ok)?
            }
            Value::Number(_) => literal_interval(&number(v, &pk)?),
            _ => return pk.err("expected [lo, hi] or a number"),
        };
        init_box[vi] = Some(iv);
    }
    let init_box = init_box
        .into_iter()
        .zip(&vars)
        .map(|(b, v)| b.map_or_else(|| pb.err(format!("missing initial range for {v}")), Ok))
        .collect::<FrontResult<Vec<Interval>>>()?;

    let mut cfg = default_config();
    if let Some(c) = top.get("config") {
        let pc = p.key("config");
        let co = object(c, &pc)?;
        only_keys(co, &["duration", "dt", "max_dt", "tol", "zc_precision", "scheme"], &pc)?;
        for (k, v) in co {
            let pk = pc.key(k);
            if k == "scheme" {
                let s = string(v, &pk)?;
                cfg.scheme = ButcherTable::by_name(s).map_or_else(|| pk.err(format!("unknown scheme {s} (known: ode23, rk4, euler)")), Ok)?;
                continue;
            }
            let x = number(v, &pk)?.value;
            if !(x > 0.0) {
                return pk.err("expected a positive number");
            }
            match k.as_str() {
                "duration" => cfg.t_f = cfg.t0 + x,
                "dt" => cfg.dt = x,
                "max_dt" => cfg.integ.h_max = x,
                "tol" => cfg.integ.tol = x,
                "zc_precision" => cfg.zc.precision = x,
                _ => unreachable!(),
            }
        }
        if cfg.dt > cfg.integ.h_max {
            cfg.dt = cfg.integ.h_max;
        }
    }

    let mut ha = HybridAutomaton { vars, locations, edges, init_location, init_box };
    ha.validate().map_err(|e| FrontendError::Json { pointer: "/".into(), message: e.to_string() })?;
    let warnings = ha.make_guards_strict();
    let plot = PlotHint { outputs: (0..ha.dim()).collect(), xy: false };
    Ok(Model { ha, cfg, plot, warnings })
}

fn is_identifier(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_') && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}
