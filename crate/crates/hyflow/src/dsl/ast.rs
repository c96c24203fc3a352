//! Syntax tree of the equation language. Every node carries its span.

use crate::diag::Span;
use hyflow_core::{BinOp, Rel, UnaryFn};

#[derive(Clone, Debug, PartialEq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

/// A numeric literal as written, with its nearest double.
#[derive(Clone, Debug, PartialEq)]
pub struct NumLit {
    pub text: String,
    pub value: f64,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Number(NumLit),
    Bool(bool, Span),
    Name(Ident),
    Str(String, Span),
}

impl Literal {
    pub fn span(&self) -> Span {
        match self {
            Literal::Number(n) => n.span,
            Literal::Bool(_, s) | Literal::Str(_, s) => *s,
            Literal::Name(i) => i.span,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Setting {
    pub name: Ident,
    pub value: Literal,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitValue {
    Scalar(NumLit),
    Range(NumLit, NumLit),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Init {
    pub var: Ident,
    pub value: InitValue,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AstExpr {
    Num(NumLit),
    Name(Ident),
    Neg(Box<AstExpr>, Span),
    Bin(BinOp, Box<AstExpr>, Box<AstExpr>, Span),
    Pow(Box<AstExpr>, i32, Span),
    Call(UnaryFn, Box<AstExpr>, Span),
}

impl AstExpr {
    pub fn span(&self) -> Span {
        match self {
            AstExpr::Num(n) => n.span,
            AstExpr::Name(i) => i.span,
            AstExpr::Neg(_, s) | AstExpr::Bin(_, _, _, s) | AstExpr::Pow(_, _, s) | AstExpr::Call(_, _, s) => *s,
        }
    }

    /// Names referenced, in order of appearance.
    pub fn names(&self, out: &mut Vec<Ident>) {
        match self {
            AstExpr::Num(_) => {}
            AstExpr::Name(i) => out.push(i.clone()),
            AstExpr::Neg(a, _) | AstExpr::Pow(a, _, _) | AstExpr::Call(_, a, _) => a.names(out),
            AstExpr::Bin(_, a, b, _) => {
                a.names(out);
                b.names(out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AstGuard {
    Bool(bool, Span),
    Cmp(AstExpr, Rel, AstExpr, Span),
    And(Box<AstGuard>, Box<AstGuard>, Span),
    Or(Box<AstGuard>, Box<AstGuard>, Span),
    Not(Box<AstGuard>, Span),
}

impl AstGuard {
    pub fn span(&self) -> Span {
        match self {
            AstGuard::Bool(_, s) | AstGuard::Cmp(_, _, _, s) | AstGuard::And(_, _, s) | AstGuard::Or(_, _, s) | AstGuard::Not(_, s) => *s,
        }
    }

    pub fn names(&self, out: &mut Vec<Ident>) {
        match self {
            AstGuard::Bool(..) => {}
            AstGuard::Cmp(a, _, b, _) => {
                a.names(out);
                b.names(out);
            }
            AstGuard::And(a, b, _) | AstGuard::Or(a, b, _) => {
                a.names(out);
                b.names(out);
            }
            AstGuard::Not(a, _) => a.names(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Print(String, Span),
    Assign(Ident, AstExpr, Span),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub guard: AstGuard,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constant {
    pub name: Ident,
    pub expr: AstExpr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowEq {
    pub var: Ident,
    pub expr: AstExpr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputDecl {
    pub vars: Vec<Ident>,
    pub span: Span,
}

/// A parsed model file. Each list keeps declaration order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DslModel {
    pub settings: Vec<Setting>,
    pub inits: Vec<Init>,
    pub constants: Vec<Constant>,
    pub flows: Vec<FlowEq>,
    pub events: Vec<Event>,
    pub output: Option<OutputDecl>,
}

/// Reset every span to the default, for structural comparison.
pub trait StripSpans {
    fn strip_spans(&mut self);
}

impl StripSpans for Span {
    fn strip_spans(&mut self) {
        *self = Span::default();
    }
}

impl StripSpans for Ident {
    fn strip_spans(&mut self) {
        self.span.strip_spans();
    }
}

impl StripSpans for NumLit {
    fn strip_spans(&mut self) {
        self.span.strip_spans();
    }
}

impl StripSpans for Literal {
    fn strip_spans(&mut self) {
        match self {
            Literal::Number(n) => n.strip_spans(),
            Literal::Bool(_, s) | Literal::Str(_, s) => s.strip_spans(),
            Literal::Name(i) => i.strip_spans(),
        }
    }
}

impl StripSpans for AstExpr {
    fn strip_spans(&mut self) {
        match self {
            AstExpr::Num(n) => n.strip_spans(),
            AstExpr::Name(i) => i.strip_spans(),
            AstExpr::Neg(a, s) | AstExpr::Pow(a, _, s) | AstExpr::Call(_, a, s) => {
                a.strip_spans();
                s.strip_spans();
            }
            AstExpr::Bin(_, a, b, s) => {
                a.strip_spans();
                b.strip_spans();
                s.strip_spans();
            }
        }
    }
}

impl StripSpans for AstGuard {
    fn strip_spans(&mut self) {
        match self {
            AstGuard::Bool(_, s) => s.strip_spans(),
            AstGuard::Cmp(a, _, b, s) => {
                a.strip_spans();
                b.strip_spans();
                s.strip_spans();
            }
            AstGuard::And(a, b, s) | AstGuard::Or(a, b, s) => {
                a.strip_spans();
                b.strip_spans();
                s.strip_spans();
            }
            AstGuard::Not(a, s) => {
                a.strip_spans();
                s.strip_spans();
            }
        }
    }
}

impl StripSpans for DslModel {
    fn strip_spans(&mut self) {
        for s in &mut self.settings {
            s.name.strip_spans();
            s.value.strip_spans();
            s.span.strip_spans();
        }
        for i in &mut self.inits {
            i.var.strip_spans();
            match &mut i.value {
                InitValue::Scalar(n) => n.strip_spans(),
                InitValue::Range(a, b) => {
                    a.strip_spans();
                    b.strip_spans();
                }
            }
            i.span.strip_spans();
        }
        for c in &mut self.constants {
            c.name.strip_spans();
            c.expr.strip_spans();
            c.span.strip_spans();
        }
        for f in &mut self.flows {
            f.var.strip_spans();
            f.expr.strip_spans();
            f.span.strip_spans();
        }
        for e in &mut self.events {
            e.guard.strip_spans();
            for st in &mut e.body {
                match st {
                    Stmt::Print(_, s) => s.strip_spans(),
                    Stmt::Assign(i, x, s) => {
                        i.strip_spans();
                        x.strip_spans();
                        s.strip_spans();
                    }
                }
            }
            e.span.strip_spans();
        }
        if let Some(o) = &mut self.output {
            o.vars.iter_mut().for_each(Ident::strip_spans);
            o.span.strip_spans();
        }
    }
}
