//! Pretty-printer producing text that parses back to the same tree.

use std::fmt::Write;

use hyflow_core::{BinOp, Rel};

use super::ast::*;

fn prec(e: &AstExpr) -> u8 {
    match e {
        AstExpr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        AstExpr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        AstExpr::Neg(..) => 3,
        AstExpr::Pow(..) => 4,
        AstExpr::Num(n) if n.text.starts_with('-') => 3,
        AstExpr::Num(_) | AstExpr::Name(_) | AstExpr::Call(..) => 5,
    }
}

fn child(out: &mut String, e: &AstExpr, min: u8) {
    if prec(e) < min {
        out.push('(');
        expr_into(out, e);
        out.push(')');
    } else {
        expr_into(out, e);
    }
}

fn expr_into(out: &mut String, e: &AstExpr) {
    match e {
        AstExpr::Num(n) => out.push_str(&n.text),
        AstExpr::Name(i) => out.push_str(&i.name),
        AstExpr::Neg(a, _) => {
            out.push('-');
            child(out, a, 3);
        }
        AstExpr::Pow(a, k, _) => {
            child(out, a, 5);
            if *k < 0 {
                let _ = write!(out, "^({k})");
            } else {
                let _ = write!(out, "^{k}");
            }
        }
        AstExpr::Call(f, a, _) => {
            out.push_str(f.name());
            out.push('(');
            expr_into(out, a);
            out.push(')');
        }
        AstExpr::Bin(op, a, b, _) => {
            let p = prec(e);
            child(out, a, p);
            let _ = write!(out, " {} ", op.symbol());
            // operators are left-associative
            child(out, b, p + 1);
        }
    }
}

pub fn expr_to_string(e: &AstExpr) -> String {
    let mut s = String::new();
    expr_into(&mut s, e);
    s
}

fn rel_symbol(r: Rel) -> &'static str {
    match r {
        Rel::Lt => "<",
        Rel::Le => "<=",
        Rel::Gt => ">",
        Rel::Ge => ">=",
    }
}

fn gprec(g: &AstGuard) -> u8 {
    match g {
        AstGuard::Or(..) => 1,
        AstGuard::And(..) => 2,
        _ => 3,
    }
}

fn guard_into(out: &mut String, g: &AstGuard, min: u8) {
    let paren = gprec(g) < min;
    if paren {
        out.push('(');
    }
    match g {
        AstGuard::Bool(b, _) => out.push_str(if *b { "true" } else { "false" }),
        AstGuard::Cmp(a, r, b, _) => {
            expr_into(out, a);
            let _ = write!(out, " {} ", rel_symbol(*r));
            expr_into(out, b);
        }
        AstGuard::And(a, b, _) => {
            guard_into(out, a, 2);
            out.push_str(" && ");
            guard_into(out, b, 3);
        }
        AstGuard::Or(a, b, _) => {
            guard_into(out, a, 1);
            out.push_str(" || ");
            guard_into(out, b, 2);
        }
        AstGuard::Not(a, _) => {
            out.push('!');
            // a comparison after `!` must be bracketed to stay a guard
            out.push('(');
            guard_into(out, a, 0);
            out.push(')');
        }
    }
    if paren {
        out.push(')');
    }
}

pub fn guard_to_string(g: &AstGuard) -> String {
    let mut s = String::new();
    guard_into(&mut s, g, 0);
    s
}

fn quote(s: &str) -> String {
    let mut q = String::from("\"");
    for c in s.chars() {
        match c {
            '\n' => q.push_str("\\n"),
            '\t' => q.push_str("\\t"),
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

/// Canonical text of a model: settings, initial values, constants,
/// equations, events, output.
pub fn pretty(m: &DslModel) -> String {
    let mut out = String::new();
    for s in &m.settings {
        let v = match &s.value {
            Literal::Number(n) => n.text.clone(),
            Literal::Bool(b, _) => b.to_string(),
            Literal::Name(i) => i.name.clone(),
            Literal::Str(s, _) => quote(s),
        };
        let _ = writeln!(out, "set {} = {};", s.name.name, v);
    }
    for i in &m.inits {
        let v = match &i.value {
            InitValue::Scalar(n) => n.text.clone(),
            InitValue::Range(a, b) => format!("[{}, {}]", a.text, b.text),
        };
        let _ = writeln!(out, "init {} = {};", i.var.name, v);
    }
    for c in &m.constants {
        let _ = writeln!(out, "{} = {};", c.name.name, expr_to_string(&c.expr));
    }
    for f in &m.flows {
        let _ = writeln!(out, "{}' = {};", f.var.name, expr_to_string(&f.expr));
    }
    for e in &m.events {
        let body: Vec<String> = e
            .body
            .iter()
            .map(|st| match st {
                Stmt::Print(s, _) => format!("print({})", quote(s)),
                Stmt::Assign(v, x, _) => format!("{} = {}", v.name, expr_to_string(x)),
            })
            .collect();
        let _ = writeln!(out, "on {} do {{ {} }};", guard_to_string(&e.guard), body.join("; "));
    }
    if let Some(o) = &m.output {
        let names: Vec<&str> = o.vars.iter().map(|v| v.name.as_str()).collect();
        let _ = writeln!(out, "output({});", names.join(", "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse::{parse_dsl, parse_expr};
    use super::*;

    fn round(src: &str) {
        let mut a = parse_expr(src).unwrap();
        let printed = expr_to_string(&a);
        let mut b = parse_expr(&printed).unwrap();
        a.strip_spans();
        b.strip_spans();
        assert_eq!(a, b, "{src} printed as {printed}");
    }

    #[test]
    fn expressions_round_trip() {
        for s in ["a - (b - c)", "a / (b * c)", "-(x + 1)^2", "(-x)^2", "-x^2", "x^(-3)", "2 * -y", "sin(x) * -(3 - y)", "a - -3"] {
            round(s);
        }
    }

    #[test]
    fn model_round_trip() {
        let src = "set scheme = rk4; init x = [-1, 2.5]; k = 3; x' = -k*x; on x < 0 || !(x > 1) do { print(\"a\\\"b\\n\"); x = 1 }; output(x, x);";
        let mut a = parse_dsl(src).unwrap();
        let mut b = parse_dsl(&pretty(&a)).unwrap();
        a.strip_spans();
        b.strip_spans();
        assert_eq!(a, b);
    }
}
