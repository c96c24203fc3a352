//! Recursive-descent parser for the equation language.

use std::collections::HashMap;

use hyflow_core::{BinOp, Rel, UnaryFn};

use super::ast::*;
use super::lex::{lex, Tok, Token};
use crate::diag::{FrontResult, FrontendError, Span};

const SETTINGS: [&str; 7] = ["duration", "dt", "max_dt", "tol", "zc_precision", "scheme", "scope_xy"];
const OPERATORS: [&str; 5] = ["`+`", "`-`", "`*`", "`/`", "`^`"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> FrontResult<Self> {
        Ok(Parser { toks: lex(text)?, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, expected: &[&str]) -> FrontResult<T> {
        Err(FrontendError::Syntax {
            span: self.span(),
            found: self.peek().describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expect(&mut self, tok: Tok) -> FrontResult<Span> {
        if self.peek() == &tok {
            Ok(self.bump().span)
        } else if tok == Tok::Semi {
            self.missing_semi(&["`;`"])
        } else {
            self.error(&[&format!("`{}`", tok.text())])
        }
    }

    /// A forgotten `;` before a line break is reported right after the
    /// statement it should end rather than at the next line.
    fn missing_semi<T>(&self, expected: &[&str]) -> FrontResult<T> {
        let here = self.span();
        match self.pos.checked_sub(1).map(|i| self.toks[i].span) {
            Some(prev) if prev.line < here.line && self.peek() != &Tok::Eof => Err(FrontendError::Syntax {
                span: Span { start: prev.end, end: prev.end, line: prev.line, col_start: prev.col_end, col_end: prev.col_end },
                found: format!("{} on line {}", self.peek().describe(), here.line),
                expected: expected.iter().map(|s| s.to_string()).collect(),
            }),
            _ => self.error(expected),
        }
    }

    /// End of a statement whose last part was an expression.
    fn expect_semi_after_expr(&mut self) -> FrontResult<Span> {
        if self.peek() == &Tok::Semi {
            return Ok(self.bump().span);
        }
        let mut exp = vec!["`;`"];
        exp.extend(OPERATORS);
        self.missing_semi(&exp)
    }

    fn ident(&mut self) -> FrontResult<Ident> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().span;
                Ok(Ident { name, span })
            }
            _ => self.error(&["a name"]),
        }
    }

    fn number(&mut self) -> FrontResult<NumLit> {
        let start = self.span();
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Number(text) => {
                let end = self.bump().span;
                let text = if neg { format!("-{text}") } else { text };
                let value = parse_number(&text);
                Ok(NumLit { text, value, span: start.join(end) })
            }
            _ => self.error(&["a number"]),
        }
    }

    fn model(&mut self) -> FrontResult<DslModel> {
        let mut m = DslModel::default();
        let mut defined: HashMap<String, (Span, &'static str)> = HashMap::new();
        let mut flows: HashMap<String, Span> = HashMap::new();
        let mut settings: HashMap<String, Span> = HashMap::new();
        while self.peek() != &Tok::Eof {
            let start = self.span();
            match self.peek().clone() {
                Tok::Set => {
                    self.bump();
                    let name = self.ident()?;
                    if !SETTINGS.contains(&name.name.as_str()) {
                        return Err(FrontendError::UnknownSetting { span: name.span, name: name.name });
                    }
                    if let Some(prev) = settings.insert(name.name.clone(), name.span) {
                        return Err(FrontendError::Duplicate { span: name.span, name: name.name, previous: prev });
                    }
                    self.expect(Tok::Assign)?;
                    let value = self.literal()?;
                    check_setting(&name, &value)?;
                    let end = self.expect(Tok::Semi)?;
                    m.settings.push(Setting { name, value, span: start.join(end) });
                }
                Tok::Init => {
                    self.bump();
                    let var = self.ident()?;
                    note_def(&mut defined, &var, "state")?;
                    self.expect(Tok::Assign)?;
                    let value = if self.eat(&Tok::LBracket) {
                        let lo = self.number()?;
                        self.expect(Tok::Comma)?;
                        let hi = self.number()?;
                        self.expect(Tok::RBracket)?;
                        if !(lo.value <= hi.value) {
                            return Err(FrontendError::Model {
                                span: lo.span.join(hi.span),
                                message: format!("empty initial range for {}", var.name),
                            });
                        }
                        InitValue::Range(lo, hi)
                    } else if matches!(self.peek(), Tok::Number(_) | Tok::Minus) {
                        InitValue::Scalar(self.number()?)
                    } else {
                        return self.error(&["a number", "`[`"]);
                    };
                    let end = self.expect(Tok::Semi)?;
                    m.inits.push(Init { var, value, span: start.join(end) });
                }
                Tok::On => {
                    self.bump();
                    let guard = self.guard()?;
                    self.expect(Tok::Do)?;
                    self.expect(Tok::LBrace)?;
                    let mut body = Vec::new();
                    while self.peek() != &Tok::RBrace {
                        body.push(self.stmt()?);
                        if !self.eat(&Tok::Semi) {
                            if self.peek() != &Tok::RBrace {
                                let mut exp = vec!["`;`", "`}`"];
                                if matches!(body.last(), Some(Stmt::Assign(..))) {
                                    exp.extend(OPERATORS);
                                }
                                return self.error(&exp);
                            }
                        }
                    }
                    self.bump();
                    let end = self.expect(Tok::Semi)?;
                    m.events.push(Event { guard, body, span: start.join(end) });
                }
                Tok::Output => {
                    self.bump();
                    if let Some(prev) = &m.output {
                        return Err(FrontendError::Duplicate { span: start, name: "output".into(), previous: prev.span });
                    }
                    self.expect(Tok::LParen)?;
                    let mut vars = vec![self.ident()?];
                    while self.eat(&Tok::Comma) {
                        vars.push(self.ident()?);
                    }
                    self.expect(Tok::RParen)?;
                    let end = self.expect(Tok::Semi)?;
                    m.output = Some(OutputDecl { vars, span: start.join(end) });
                }
                Tok::Ident(_) => {
                    let name = self.ident()?;
                    if self.eat(&Tok::Prime) {
                        if let Some(prev) = flows.insert(name.name.clone(), name.span) {
                            return Err(FrontendError::Duplicate { span: name.span, name: name.name, previous: prev });
                        }
                        if let Some((prev, "constant")) = defined.get(&name.name) {
                            return Err(FrontendError::Duplicate { span: name.span, name: name.name, previous: *prev });
                        }
                        self.expect(Tok::Assign)?;
                        let expr = self.expr()?;
                        let end = self.expect_semi_after_expr()?;
                        m.flows.push(FlowEq { var: name, expr, span: start.join(end) });
                    } else if self.peek() == &Tok::Assign {
                        self.bump();
                        note_def(&mut defined, &name, "constant")?;
                        if let Some(prev) = flows.get(&name.name) {
                            return Err(FrontendError::Duplicate { span: name.span, name: name.name, previous: *prev });
                        }
                        let expr = self.expr()?;
                        let end = self.expect_semi_after_expr()?;
                        m.constants.push(Constant { name, expr, span: start.join(end) });
                    } else {
                        return self.error(&["`'`", "`=`"]);
                    }
                }
                _ => return self.error(&["`set`", "`init`", "`on`", "`output`", "a name"]),
            }
        }
        Ok(m)
    }

    fn literal(&mut self) -> FrontResult<Literal> {
        Ok(match self.peek().clone() {
            Tok::Number(_) | Tok::Minus => Literal::Number(self.number()?),
            Tok::True => Literal::Bool(true, self.bump().span),
            Tok::False => Literal::Bool(false, self.bump().span),
            Tok::Ident(_) => Literal::Name(self.ident()?),
            Tok::Str(s) => Literal::Str(s, self.bump().span),
            _ => return self.error(&["a number", "`true`", "`false`", "a name", "string"]),
        })
    }

    fn stmt(&mut self) -> FrontResult<Stmt> {
        let start = self.span();
        let name = self.ident()?;
        if name.name == "print" && self.peek() == &Tok::LParen {
            self.bump();
            let msg = match self.peek().clone() {
                Tok::Str(s) => {
                    self.bump();
                    s
                }
                _ => return self.error(&["string"]),
            };
            let end = self.expect(Tok::RParen)?;
            return Ok(Stmt::Print(msg, start.join(end)));
        }
        self.expect(Tok::Assign)?;
        let e = self.expr()?;
        let span = start.join(e.span());
        Ok(Stmt::Assign(name, e, span))
    }

    pub fn guard(&mut self) -> FrontResult<AstGuard> {
        let mut g = self.guard_and()?;
        while self.eat(&Tok::OrOr) {
            let r = self.guard_and()?;
            let span = g.span().join(r.span());
            g = AstGuard::Or(Box::new(g), Box::new(r), span);
        }
        Ok(g)
    }

    fn guard_and(&mut self) -> FrontResult<AstGuard> {
        let mut g = self.guard_not()?;
        while self.eat(&Tok::AndAnd) {
            let r = self.guard_not()?;
            let span = g.span().join(r.span());
            g = AstGuard::And(Box::new(g), Box::new(r), span);
        }
        Ok(g)
    }

    fn guard_not(&mut self) -> FrontResult<AstGuard> {
        let start = self.span();
        if self.eat(&Tok::Bang) {
            let g = self.guard_not()?;
            let span = start.join(g.span());
            return Ok(AstGuard::Not(Box::new(g), span));
        }
        match self.peek() {
            Tok::True => return Ok(AstGuard::Bool(true, self.bump().span)),
            Tok::False => return Ok(AstGuard::Bool(false, self.bump().span)),
            _ => {}
        }
        if self.peek() == &Tok::LParen {
            // either a parenthesised guard or a comparison whose left side
            // starts with a parenthesis
            let save = self.pos;
            if let Ok(cmp) = self.comparison() {
                return Ok(cmp);
            }
            self.pos = save;
            self.bump();
            let g = self.guard()?;
            self.expect(Tok::RParen)?;
            return Ok(g);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> FrontResult<AstGuard> {
        let lhs = self.expr()?;
        let rel = match self.peek() {
            Tok::Lt => Rel::Lt,
            Tok::Le => Rel::Le,
            Tok::Gt => Rel::Gt,
            Tok::Ge => Rel::Ge,
            _ => {
                let mut exp = vec!["`<`", "`<=`", "`>`", "`>=`"];
                exp.extend(OPERATORS);
                return self.error(&exp);
            }
        };
        self.bump();
        let rhs = self.expr()?;
        let span = lhs.span().join(rhs.span());
        Ok(AstGuard::Cmp(lhs, rel, rhs, span))
    }

    pub fn expr(&mut self) -> FrontResult<AstExpr> {
        let mut e = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(e),
            };
            self.bump();
            let r = self.term()?;
            let span = e.span().join(r.span());
            e = AstExpr::Bin(op, Box::new(e), Box::new(r), span);
        }
    }

    fn term(&mut self) -> FrontResult<AstExpr> {
        let mut e = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(e),
            };
            self.bump();
            let r = self.unary()?;
            let span = e.span().join(r.span());
            e = AstExpr::Bin(op, Box::new(e), Box::new(r), span);
        }
    }

    fn unary(&mut self) -> FrontResult<AstExpr> {
        let start = self.span();
        if self.eat(&Tok::Minus) {
            let e = self.unary()?;
            let span = start.join(e.span());
            return Ok(AstExpr::Neg(Box::new(e), span));
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> FrontResult<AstExpr> {
        let base = self.primary()?;
        if !self.eat(&Tok::Caret) {
            return Ok(base);
        }
        let paren = self.eat(&Tok::LParen);
        let n = self.number()?;
        let end = if paren { self.expect(Tok::RParen)? } else { n.span };
        let exp = match n.text.parse::<i32>() {
            Ok(k) => k,
            Err(_) => return Err(FrontendError::Model { span: n.span, message: "exponents must be integer literals".into() }),
        };
        let span = base.span().join(end);
        Ok(AstExpr::Pow(Box::new(base), exp, span))
    }

    fn primary(&mut self) -> FrontResult<AstExpr> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Number(_) => Ok(AstExpr::Num(self.number()?)),
            Tok::Ident(name) => {
                let id = self.ident()?;
                if self.peek() == &Tok::LParen && !matches!(self.peek_at(1), Tok::RParen) {
                    if let Some(f) = UnaryFn::from_name(&name) {
                        self.bump();
                        let arg = self.expr()?;
                        let end = self.expect(Tok::RParen)?;
                        return Ok(AstExpr::Call(f, Box::new(arg), start.join(end)));
                    }
                    return Err(FrontendError::Model {
                        span: id.span,
                        message: format!("unknown function {name} (known: sin, cos, exp, sqrt, log, abs)"),
                    });
                }
                Ok(AstExpr::Name(id))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => self.error(&["a number", "a name", "`(`", "`-`"]),
        }
    }

    fn finish(&mut self) -> FrontResult<()> {
        if self.peek() == &Tok::Eof {
            Ok(())
        } else {
            self.error(&["end of input"])
        }
    }
}

fn note_def(defined: &mut HashMap<String, (Span, &'static str)>, id: &Ident, kind: &'static str) -> FrontResult<()> {
    if let Some((prev, _)) = defined.get(&id.name) {
        return Err(FrontendError::Duplicate { span: id.span, name: id.name.clone(), previous: *prev });
    }
    defined.insert(id.name.clone(), (id.span, kind));
    Ok(())
}

fn check_setting(name: &Ident, value: &Literal) -> FrontResult<()> {
    let ok = match name.name.as_str() {
        "scope_xy" => matches!(value, Literal::Bool(..)),
        "scheme" => matches!(value, Literal::Name(_) | Literal::Str(..)),
        _ => matches!(value, Literal::Number(n) if n.value > 0.0 && n.value.is_finite()),
    };
    if ok {
        Ok(())
    } else {
        let want = match name.name.as_str() {
            "scope_xy" => "`true` or `false`",
            "scheme" => "a scheme name (ode23, rk4, euler)",
            _ => "a positive number",
        };
        Err(FrontendError::Model { span: value.span(), message: format!("{} expects {want}", name.name) })
    }
}

/// Nearest double of a decimal literal.
pub fn parse_number(text: &str) -> f64 {
    text.parse::<f64>().expect("lexer only produces well-formed numbers")
}

/// Parse a whole model file.
pub fn parse_dsl(text: &str) -> FrontResult<DslModel> {
    let mut p = Parser::new(text)?;
    p.model()
}

/// Parse a standalone expression such as `x^2 - 2*y`.
pub fn parse_expr(text: &str) -> FrontResult<AstExpr> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

/// Parse a standalone guard such as `y <= 0 && v < 0`.
pub fn parse_guard(text: &str) -> FrontResult<AstGuard> {
    let mut p = Parser::new(text)?;
    let g = p.guard()?;
    p.finish()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stripped(e: FrontResult<AstExpr>) -> AstExpr {
        let mut e = e.unwrap();
        e.strip_spans();
        e
    }

    #[test]
    fn precedence() {
        let a = stripped(parse_expr("-x^2 + 3*y/2 - z"));
        let b = stripped(parse_expr("((-(x^2)) + ((3*y)/2)) - z"));
        assert_eq!(a, b);
    }

    #[test]
    fn negative_exponent() {
        assert_eq!(stripped(parse_expr("x^(-2)")), stripped(parse_expr("x^-2")));
    }

    #[test]
    fn parenthesised_comparison_and_guard() {
        let g = parse_guard("(x + 1) < 2 && (y > 0 || !(z <= 1))").unwrap();
        assert!(matches!(g, AstGuard::And(..)));
        let AstGuard::And(l, r, _) = g else { unreachable!() };
        assert!(matches!(*l, AstGuard::Cmp(..)));
        assert!(matches!(*r, AstGuard::Or(..)));
    }

    #[test]
    fn missing_semicolon_is_reported_at_statement_end() {
        let text = "theta' = dtheta";
        let err = parse_dsl(text).unwrap_err();
        match &err {
            FrontendError::Syntax { span, expected, .. } => {
                assert_eq!(span.start, text.len());
                assert!(expected.contains(&"`;`".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn interval_initializer() {
        let m = parse_dsl("init x = [0.9,1];").unwrap();
        match &m.inits[0].value {
            InitValue::Range(lo, hi) => assert_eq!((lo.value, hi.value), (0.9, 1.0)),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn unknown_setting_and_duplicates() {
        assert!(matches!(parse_dsl("set speed = 2;"), Err(FrontendError::UnknownSetting { .. })));
        assert!(matches!(parse_dsl("set dt = 1; set dt = 2;"), Err(FrontendError::Duplicate { .. })));
        assert!(matches!(parse_dsl("init x = 1; init x = 2;"), Err(FrontendError::Duplicate { .. })));
        assert!(matches!(parse_dsl("x' = 1; x' = 2;"), Err(FrontendError::Duplicate { .. })));
        assert!(matches!(parse_dsl("g = 1; g' = 2;"), Err(FrontendError::Duplicate { .. })));
    }
}
