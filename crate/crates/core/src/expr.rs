//! Expression trees, guards and resets over state variables and time.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::affine::{AffineForm, NoiseSource, Rel};
use crate::error::{Error, Result};
use crate::trivalent::Trivalent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryFn {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
    Abs,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Neg => "-",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Log => "log",
            UnaryFn::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<UnaryFn> {
        Some(match name {
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "exp" => UnaryFn::Exp,
            "sqrt" => UnaryFn::Sqrt,
            "log" => UnaryFn::Log,
            "abs" => UnaryFn::Abs,
            _ => return None,
        })
    }

    pub fn eval_f64(self, x: f64) -> f64 {
        match self {
            UnaryFn::Neg => -x,
            UnaryFn::Sin => libm::sin(x),
            UnaryFn::Cos => libm::cos(x),
            UnaryFn::Exp => libm::exp(x),
            UnaryFn::Sqrt => libm::sqrt(x),
            UnaryFn::Log => libm::log(x),
            UnaryFn::Abs => x.abs(),
        }
    }

    pub fn eval_aff<S: NoiseSource + ?Sized>(self, x: &AffineForm, src: &mut S) -> Result<AffineForm> {
        Ok(match self {
            UnaryFn::Neg => x.neg(),
            UnaryFn::Sin => x.sin(src),
            UnaryFn::Cos => x.cos(src),
            UnaryFn::Exp => x.exp(src)?,
            UnaryFn::Sqrt => x.sqrt(src)?,
            UnaryFn::Log => x.ln(src)?,
            UnaryFn::Abs => x.abs(src),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn eval_f64(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }

    pub fn eval_aff<S: NoiseSource + ?Sized>(self, a: &AffineForm, b: &AffineForm, src: &mut S) -> Result<AffineForm> {
        Ok(match self {
            BinOp::Add => a.add(b),
            BinOp::Sub => a.sub(b),
            BinOp::Mul => a.mul(b, src),
            BinOp::Div => a.div(b, src)?,
        })
    }
}

/// Arithmetic expression over state variables (by index) and time.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Time,
    Unary(UnaryFn, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    PowI(Box<Expr>, i32),
}

impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn unary(f: UnaryFn, e: Expr) -> Expr {
        Expr::Unary(f, Box::new(e))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn powi(self, n: i32) -> Expr {
        Expr::PowI(Box::new(self), n)
    }

    pub fn sin(self) -> Expr {
        Expr::unary(UnaryFn::Sin, self)
    }

    pub fn cos(self) -> Expr {
        Expr::unary(UnaryFn::Cos, self)
    }

    pub fn exp(self) -> Expr {
        Expr::unary(UnaryFn::Exp, self)
    }

    pub fn sqrt(self) -> Expr {
        Expr::unary(UnaryFn::Sqrt, self)
    }

    pub fn log(self) -> Expr {
        Expr::unary(UnaryFn::Log, self)
    }

    pub fn abs(self) -> Expr {
        Expr::unary(UnaryFn::Abs, self)
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) | Expr::Time => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, a) | Expr::PowI(a, _) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Unary(_, a) | Expr::PowI(a, _) => a.uses_time(),
            Expr::Binary(_, a, b) => a.uses_time() || b.uses_time(),
        }
    }

    pub fn uses_var(&self, v: usize) -> bool {
        match self {
            Expr::Var(i) => *i == v,
            Expr::Const(_) | Expr::Time => false,
            Expr::Unary(_, a) | Expr::PowI(a, _) => a.uses_var(v),
            Expr::Binary(_, a, b) => a.uses_var(v) || b.uses_var(v),
        }
    }

    /// True when the expression contains a division or a negative power.
    pub fn may_be_singular(&self) -> bool {
        match self {
            Expr::Binary(BinOp::Div, _, _) => true,
            Expr::PowI(_, n) if *n < 0 => true,
            Expr::Const(_) | Expr::Var(_) | Expr::Time => false,
            Expr::Unary(_, a) | Expr::PowI(a, _) => a.may_be_singular(),
            Expr::Binary(_, a, b) => a.may_be_singular() || b.may_be_singular(),
        }
    }

    /// Replace variables and time by expressions.
    pub fn substitute(&self, var: &dyn Fn(usize) -> Expr, time: &Expr) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => var(*i),
            Expr::Time => time.clone(),
            Expr::Unary(f, a) => Expr::unary(*f, a.substitute(var, time)),
            Expr::PowI(a, n) => a.substitute(var, time).powi(*n),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(var, time), b.substitute(var, time)),
        }
    }

    pub fn eval_f64(&self, vars: &[f64], t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => vars[*i],
            Expr::Time => t,
            Expr::Unary(f, a) => f.eval_f64(a.eval_f64(vars, t)),
            Expr::PowI(a, n) => libm::pow(a.eval_f64(vars, t), *n as f64),
            Expr::Binary(op, a, b) => op.eval_f64(a.eval_f64(vars, t), b.eval_f64(vars, t)),
        }
    }

    /// Sound affine evaluation; every finite result encloses the real value.
    pub fn eval_aff<S: NoiseSource + ?Sized>(&self, env: &EnvAff, src: &mut S) -> Result<AffineForm> {
        let r = match self {
            Expr::Const(c) => AffineForm::constant(*c),
            Expr::Var(i) => env.vars.get(*i).cloned().ok_or(Error::UnboundVariable(*i))?,
            Expr::Time => env.time.clone(),
            Expr::Unary(f, a) => f.eval_aff(&a.eval_aff(env, src)?, src)?,
            Expr::PowI(a, n) => a.eval_aff(env, src)?.powi(*n, src)?,
            Expr::Binary(op, a, b) => {
                let x = a.eval_aff(env, src)?;
                let y = b.eval_aff(env, src)?;
                op.eval_aff(&x, &y, src)?
            }
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::NonFinite("expression evaluation"))
        }
    }

    /// Display helper that prints variable names.
    pub fn display<'a>(&'a self, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, names }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, _, _) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, _, _) => 2,
            Expr::Unary(UnaryFn::Neg, _) => 3,
            Expr::PowI(_, _) => 4,
            Expr::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

macro_rules! expr_binop {
    ($tr:ident, $m:ident, $op:expr) => {
        impl core::ops::$tr for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl core::ops::$tr<f64> for Expr {
            type Output = Expr;
            fn $m(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::Const(rhs))
            }
        }
        impl core::ops::$tr<Expr> for f64 {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::Const(self), rhs)
            }
        }
    };
}

expr_binop!(Add, add, BinOp::Add);
expr_binop!(Sub, sub, BinOp::Sub);
expr_binop!(Mul, mul, BinOp::Mul);
expr_binop!(Div, div, BinOp::Div);

impl core::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryFn::Neg, self)
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

/// Shortest decimal that reads back to the same double.
pub(crate) struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v == libm::trunc(v) && v.abs() < 1e15 {
            write!(f, "{}", v as i64)
        } else {
            write!(f, "{:?}", v)
        }
    }
}

impl ExprDisplay<'_> {
    fn child(&self, e: &Expr, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let d = ExprDisplay { expr: e, names: self.names };
        if e.precedence() < min_prec {
            write!(f, "({})", d)
        } else {
            write!(f, "{}", d)
        }
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr {
            Expr::Const(c) => write!(f, "{}", Num(*c)),
            Expr::Var(i) => match self.names.get(*i) {
                Some(n) => f.write_str(n),
                None => write!(f, "x{}", i),
            },
            Expr::Time => f.write_str("t"),
            Expr::Unary(UnaryFn::Neg, a) => {
                f.write_str("-")?;
                self.child(a, f, 4)
            }
            Expr::Unary(u, a) => write!(f, "{}({})", u.name(), ExprDisplay { expr: a, names: self.names }),
            Expr::PowI(a, n) => {
                self.child(a, f, 5)?;
                if *n < 0 {
                    write!(f, "^({})", n)
                } else {
                    write!(f, "^{}", n)
                }
            }
            Expr::Binary(op, a, b) => {
                let p = self.expr.precedence();
                self.child(a, f, p)?;
                write!(f, " {} ", op.symbol())?;
                // right operand of - and / needs strictly higher precedence
                self.child(b, f, p + 1)
            }
        }
    }
}

/// Environment binding every state variable and time to an affine form.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvAff {
    pub vars: Vec<AffineForm>,
    pub time: AffineForm,
}

impl EnvAff {
    pub fn new(vars: Vec<AffineForm>, time: AffineForm) -> Self {
        EnvAff { vars, time }
    }
}

/// Boolean predicate over the state, evaluated in three-valued logic.
#[derive(Clone, Debug, PartialEq)]
pub enum Guard {
    Const(bool),
    /// `lhs rel rhs`
    Cmp(Expr, Rel, Expr),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
    Not(Box<Guard>),
}

impl Guard {
    pub fn cmp(lhs: Expr, rel: Rel, rhs: Expr) -> Guard {
        Guard::Cmp(lhs, rel, rhs)
    }

    pub fn and(self, other: Guard) -> Guard {
        Guard::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Guard) -> Guard {
        Guard::Or(Box::new(self), Box::new(other))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Guard {
        Guard::Not(Box::new(self))
    }

    pub fn eval_aff<S: NoiseSource + ?Sized>(&self, env: &EnvAff, src: &mut S) -> Result<Trivalent> {
        Ok(match self {
            Guard::Const(b) => Trivalent::from_bool(*b),
            Guard::Cmp(l, rel, r) => {
                let d = match r {
                    Expr::Const(c) if *c == 0.0 => l.eval_aff(env, src)?,
                    _ => l.eval_aff(env, src)?.sub(&r.eval_aff(env, src)?),
                };
                d.compare(*rel)
            }
            Guard::And(a, b) => {
                let x = a.eval_aff(env, src)?;
                if x.is_false() {
                    return Ok(x);
                }
                x.and(b.eval_aff(env, src)?)
            }
            Guard::Or(a, b) => {
                let x = a.eval_aff(env, src)?;
                if x.is_true() {
                    return Ok(x);
                }
                x.or(b.eval_aff(env, src)?)
            }
            Guard::Not(a) => a.eval_aff(env, src)?.not(),
        })
    }

    pub fn eval_f64(&self, vars: &[f64], t: f64) -> bool {
        match self {
            Guard::Const(b) => *b,
            Guard::Cmp(l, rel, r) => rel.holds(l.eval_f64(vars, t) - r.eval_f64(vars, t)),
            Guard::And(a, b) => a.eval_f64(vars, t) && b.eval_f64(vars, t),
            Guard::Or(a, b) => a.eval_f64(vars, t) || b.eval_f64(vars, t),
            Guard::Not(a) => !a.eval_f64(vars, t),
        }
    }

    /// Signed distance-like function for root finding: negative iff the
    /// guard is false (for a single comparison; composite guards use
    /// min/max combinations).
    pub fn margin_f64(&self, vars: &[f64], t: f64) -> f64 {
        match self {
            Guard::Const(true) => 1.0,
            Guard::Const(false) => -1.0,
            Guard::Cmp(l, rel, r) => {
                let d = l.eval_f64(vars, t) - r.eval_f64(vars, t);
                match rel {
                    Rel::Lt | Rel::Le => -d,
                    Rel::Gt | Rel::Ge => d,
                }
            }
            Guard::And(a, b) => a.margin_f64(vars, t).min(b.margin_f64(vars, t)),
            Guard::Or(a, b) => a.margin_f64(vars, t).max(b.margin_f64(vars, t)),
            Guard::Not(a) => -a.margin_f64(vars, t),
        }
    }

    /// Comparisons in the guard, each as `lhs - rhs` against zero.
    pub fn atoms(&self) -> Vec<(Expr, Rel)> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<(Expr, Rel)>) {
        match self {
            Guard::Const(_) => {}
            Guard::Cmp(l, rel, r) => {
                let e = match r {
                    Expr::Const(c) if *c == 0.0 => l.clone(),
                    _ => l.clone() - r.clone(),
                };
                out.push((e, *rel));
            }
            Guard::And(a, b) | Guard::Or(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            Guard::Not(a) => a.collect_atoms(out),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Guard::Const(_) => None,
            Guard::Cmp(l, _, r) => l.max_var().max(r.max_var()),
            Guard::And(a, b) | Guard::Or(a, b) => a.max_var().max(b.max_var()),
            Guard::Not(a) => a.max_var(),
        }
    }

    pub fn substitute(&self, var: &dyn Fn(usize) -> Expr, time: &Expr) -> Guard {
        match self {
            Guard::Const(b) => Guard::Const(*b),
            Guard::Cmp(l, rel, r) => Guard::Cmp(l.substitute(var, time), *rel, r.substitute(var, time)),
            Guard::And(a, b) => a.substitute(var, time).and(b.substitute(var, time)),
            Guard::Or(a, b) => a.substitute(var, time).or(b.substitute(var, time)),
            Guard::Not(a) => a.substitute(var, time).not(),
        }
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> GuardDisplay<'a> {
        GuardDisplay { guard: self, names }
    }
}

pub struct GuardDisplay<'a> {
    guard: &'a Guard,
    names: &'a [String],
}

impl<'a> fmt::Display for GuardDisplay<'a> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.names;
        let sub = |g: &'a Guard| GuardDisplay { guard: g, names };
        match self.guard {
            Guard::Const(b) => write!(f, "{}", b),
            Guard::Cmp(l, rel, r) => write!(f, "{} {} {}", l.display(self.names), rel.symbol(), r.display(self.names)),
            Guard::And(a, b) => write!(f, "({} && {})", sub(a), sub(b)),
            Guard::Or(a, b) => write!(f, "({} || {})", sub(a), sub(b)),
            Guard::Not(a) => write!(f, "!({})", sub(a)),
        }
    }
}

/// Simultaneous assignment; unassigned variables keep their value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Reset {
    pub assignments: Vec<(usize, Expr)>,
}

impl Reset {
    pub fn identity() -> Reset {
        Reset::default()
    }

    pub fn new(assignments: Vec<(usize, Expr)>) -> Reset {
        Reset { assignments }
    }

    pub fn is_identity(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn assigns(&self, v: usize) -> bool {
        self.assignments.iter().any(|(i, _)| *i == v)
    }

    /// Expression giving the post value of variable `v`.
    pub fn target(&self, v: usize) -> Expr {
        self.assignments.iter().rev().find(|(i, _)| *i == v).map(|(_, e)| e.clone()).unwrap_or(Expr::Var(v))
    }

    pub fn apply_f64(&self, vars: &[f64], t: f64) -> Vec<f64> {
        let mut out = vars.to_vec();
        for (i, e) in &self.assignments {
            out[*i] = e.eval_f64(vars, t);
        }
        out
    }

    pub fn apply_aff<S: NoiseSource + ?Sized>(&self, env: &EnvAff, src: &mut S) -> Result<Vec<AffineForm>> {
        let mut out = env.vars.clone();
        for (i, e) in &self.assignments {
            if *i >= out.len() {
                return Err(Error::UnboundVariable(*i));
            }
            out[*i] = e.eval_aff(env, src)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::NoiseAlloc;
    use crate::interval::Interval;
    use alloc::string::ToString;
    use alloc::vec;

    fn env(al: &mut NoiseAlloc, boxes: &[(f64, f64)], t: f64) -> EnvAff {
        let vars = boxes.iter().map(|&(a, b)| AffineForm::from_interval(Interval::new(a, b).unwrap(), al)).collect();
        EnvAff::new(vars, AffineForm::constant(t))
    }

    #[test]
    fn brusselator_product_bounds() {
        let mut al = NoiseAlloc::new();
        let e = env(&mut al, &[(0.9, 1.0), (0.0, 0.1)], 0.0);
        let x2y = Expr::var(0).powi(2) * Expr::var(1);
        let r = x2y.eval_aff(&e, &mut al).unwrap().to_interval();
        assert!(r.lo() <= 0.0 && r.hi() >= 0.081);
        // affine products can overshoot the true range; require it stays modest
        assert!(r.lo() >= -0.02 && r.hi() <= 0.12, "{:?}", r);
    }

    #[test]
    fn time_evaluation() {
        let mut al = NoiseAlloc::new();
        let e = env(&mut al, &[], 0.0);
        assert_eq!(Expr::Time.eval_aff(&e, &mut al).unwrap().to_interval(), Interval::point(0.0));
        let s = (10.0 * Expr::Time).sin();
        assert_eq!(s.eval_aff(&e, &mut al).unwrap().to_interval(), Interval::point(0.0));
    }

    #[test]
    fn guard_examples() {
        let mut al = NoiseAlloc::new();
        let g = Guard::cmp(Expr::var(0), Rel::Le, Expr::c(0.0));
        let e = env(&mut al, &[(1.0, 2.0)], 0.0);
        assert_eq!(g.eval_aff(&e, &mut al).unwrap(), Trivalent::False);
        let e = env(&mut al, &[(-1.0, 1.0)], 0.0);
        assert_eq!(g.eval_aff(&e, &mut al).unwrap(), Trivalent::Unknown);
        let w = Guard::cmp((Expr::var(0) + 3.0 / 20.0).powi(2) + (Expr::Time + 1.0 / 20.0).powi(2), Rel::Lt, Expr::c(1.0));
        let mut e = env(&mut al, &[(0.3, 0.3)], 0.0);
        e.time = AffineForm::constant(0.0);
        assert_eq!(w.eval_aff(&e, &mut al).unwrap(), Trivalent::True);
    }

    #[test]
    fn simultaneous_reset() {
        let r = Reset::new(vec![(0, Expr::var(1)), (1, Expr::var(0))]);
        assert_eq!(r.apply_f64(&[1.0, 2.0], 0.0), vec![2.0, 1.0]);
    }

    #[test]
    fn display_parenthesizes() {
        let names = vec!["x".to_string(), "y".to_string()];
        let e = Expr::var(0) - (Expr::var(1) - Expr::c(1.0));
        assert_eq!(e.display(&names).to_string(), "x - (y - 1)");
        let p = (-Expr::var(0)).powi(2);
        assert_eq!(p.display(&names).to_string(), "(-x)^2");
        let q = Expr::c(0.1) * Expr::var(0).sin();
        assert_eq!(q.display(&names).to_string(), "0.1 * sin(x)");
    }
}
