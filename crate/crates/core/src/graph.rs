//! Hash-consed expression DAG with memoized symbolic differentiation and
//! compiled evaluation tapes.
//!
//! Nodes are interned so structurally equal subexpressions share one id.
//! Ids are handed out in creation order, which is also a topological order
//! (children are always created before their parents).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::affine::{AffineForm, NoiseSource};
use crate::error::{Error, Result};
use crate::expr::{BinOp, Expr, UnaryFn};
use crate::rounding::{prod_err, two_sum};

/// Default cap on the number of interned nodes.
pub const NODE_CAP: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    /// Bit pattern of a finite double (never `-0.0`).
    Const(u64),
    Var(u32),
    Time,
    Unary(UnaryFn, NodeId),
    Binary(BinOp, NodeId, NodeId),
    PowI(NodeId, i32),
    /// Derivative of `abs(u)`: the sign of `u`, or `[-1, 1]` where unknown.
    Sign(NodeId),
    /// Derivative of `Sign(u)`: zero away from the kink, undefined on it.
    Kink(NodeId),
}

/// Differentiation variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Wrt {
    Var(u32),
    Time,
}

#[derive(Clone, Debug)]
pub struct ExprGraph {
    nodes: Vec<Node>,
    index: BTreeMap<Node, NodeId>,
    partials: BTreeMap<(NodeId, Wrt), NodeId>,
    cap: usize,
}

impl Default for ExprGraph {
    fn default() -> Self {
        Self::new()
    }
}

fn exact_sum(a: f64, b: f64) -> Option<f64> {
    let (s, e) = two_sum(a, b);
    (e == 0.0 && s.is_finite()).then_some(s)
}

fn exact_prod(a: f64, b: f64) -> Option<f64> {
    let (p, e) = prod_err(a, b);
    (e == 0.0 && p.is_finite()).then_some(p)
}

impl ExprGraph {
    pub fn new() -> Self {
        Self::with_cap(NODE_CAP)
    }

    pub fn with_cap(cap: usize) -> Self {
        ExprGraph { nodes: Vec::new(), index: BTreeMap::new(), partials: BTreeMap::new(), cap }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Node {
        self.nodes[id.index()]
    }

    fn check_cap(&self) -> Result<()> {
        if self.nodes.len() > self.cap {
            Err(Error::ExpressionTooLarge { nodes: self.nodes.len(), cap: self.cap })
        } else {
            Ok(())
        }
    }

    fn intern(&mut self, n: Node) -> NodeId {
        if let Some(&id) = self.index.get(&n) {
            return id;
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(n);
        self.index.insert(n, id);
        id
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        debug_assert!(v.is_finite());
        let v = if v == 0.0 { 0.0 } else { v };
        self.intern(Node::Const(v.to_bits()))
    }

    pub fn var(&mut self, i: usize) -> NodeId {
        self.intern(Node::Var(i as u32))
    }

    pub fn time(&mut self) -> NodeId {
        self.intern(Node::Time)
    }

    pub fn as_const(&self, id: NodeId) -> Option<f64> {
        match self.node(id) {
            Node::Const(b) => Some(f64::from_bits(b)),
            _ => None,
        }
    }

    fn is_const(&self, id: NodeId, v: f64) -> bool {
        self.as_const(id) == Some(v)
    }

    /// Split `id` into `coef * base` with an exact constant coefficient.
    fn coef_base(&self, id: NodeId) -> (f64, NodeId) {
        match self.node(id) {
            Node::Binary(BinOp::Mul, a, b) => match self.as_const(a) {
                Some(c) => (c, b),
                None => (1.0, id),
            },
            Node::Unary(UnaryFn::Neg, a) => {
                let (c, b) = self.coef_base(a);
                (-c, b)
            }
            _ => (1.0, id),
        }
    }

    fn scaled(&mut self, c: f64, base: NodeId) -> NodeId {
        if c == 1.0 {
            base
        } else if c == -1.0 {
            self.neg(base)
        } else {
            let k = self.constant(c);
            self.mul(k, base)
        }
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        match self.node(a) {
            Node::Const(b) => self.constant(-f64::from_bits(b)),
            Node::Unary(UnaryFn::Neg, x) => x,
            Node::Binary(BinOp::Sub, x, y) => self.sub(y, x),
            Node::Binary(BinOp::Mul, x, y) if self.as_const(x).is_some() => {
                let c = self.as_const(x).unwrap();
                let k = self.constant(-c);
                self.mul(k, y)
            }
            _ => self.intern(Node::Unary(UnaryFn::Neg, a)),
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.is_const(a, 0.0) {
            return b;
        }
        if self.is_const(b, 0.0) {
            return a;
        }
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            if let Some(s) = exact_sum(x, y) {
                return self.constant(s);
            }
        }
        if let Node::Unary(UnaryFn::Neg, y) = self.node(b) {
            return self.sub(a, y);
        }
        if let Node::Unary(UnaryFn::Neg, x) = self.node(a) {
            return self.sub(b, x);
        }
        let (ca, ba) = self.coef_base(a);
        let (cb, bb) = self.coef_base(b);
        if ba == bb {
            if let Some(s) = exact_sum(ca, cb) {
                if s == 0.0 {
                    return self.constant(0.0);
                }
                return self.scaled(s, ba);
            }
        }
        // constants first, then fold nested constants
        if self.as_const(b).is_some() && self.as_const(a).is_none() {
            return self.add(b, a);
        }
        if let (Some(x), Node::Binary(BinOp::Add, p, q)) = (self.as_const(a), self.node(b)) {
            if let Some(y) = self.as_const(p) {
                if let Some(s) = exact_sum(x, y) {
                    let k = self.constant(s);
                    return self.add(k, q);
                }
            }
        }
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.intern(Node::Binary(BinOp::Add, a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if a == b {
            return self.constant(0.0);
        }
        if self.is_const(b, 0.0) {
            return a;
        }
        if self.is_const(a, 0.0) {
            return self.neg(b);
        }
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            if let Some(s) = exact_sum(x, -y) {
                return self.constant(s);
            }
        }
        if let Node::Unary(UnaryFn::Neg, y) = self.node(b) {
            return self.add(a, y);
        }
        let (ca, ba) = self.coef_base(a);
        let (cb, bb) = self.coef_base(b);
        if ba == bb {
            if let Some(s) = exact_sum(ca, -cb) {
                if s == 0.0 {
                    return self.constant(0.0);
                }
                return self.scaled(s, ba);
            }
        }
        self.intern(Node::Binary(BinOp::Sub, a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.is_const(a, 0.0) || self.is_const(b, 0.0) {
            return self.constant(0.0);
        }
        if self.is_const(a, 1.0) {
            return b;
        }
        if self.is_const(b, 1.0) {
            return a;
        }
        if self.is_const(a, -1.0) {
            return self.neg(b);
        }
        if self.is_const(b, -1.0) {
            return self.neg(a);
        }
        match (self.as_const(a), self.as_const(b)) {
            (Some(x), Some(y)) => {
                if let Some(p) = exact_prod(x, y) {
                    return self.constant(p);
                }
            }
            (None, Some(_)) => return self.mul(b, a),
            _ => {}
        }
        if let Node::Unary(UnaryFn::Neg, x) = self.node(a) {
            let m = self.mul(x, b);
            return self.neg(m);
        }
        if let Node::Unary(UnaryFn::Neg, y) = self.node(b) {
            let m = self.mul(a, y);
            return self.neg(m);
        }
        if let Some(x) = self.as_const(a) {
            if let Node::Binary(BinOp::Mul, p, q) = self.node(b) {
                if let Some(y) = self.as_const(p) {
                    if let Some(s) = exact_prod(x, y) {
                        let k = self.constant(s);
                        return self.mul(k, q);
                    }
                }
            }
        }
        if a == b {
            return self.powi(a, 2);
        }
        let (a, b) = if self.as_const(a).is_some() || a <= b { (a, b) } else { (b, a) };
        self.intern(Node::Binary(BinOp::Mul, a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.is_const(a, 0.0) {
            return a;
        }
        if self.is_const(b, 1.0) {
            return a;
        }
        if self.is_const(b, -1.0) {
            return self.neg(a);
        }
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            let q = x / y;
            if q.is_finite() && exact_prod(q, y) == Some(x) {
                return self.constant(q);
            }
        }
        if a == b && self.as_const(a).is_some() {
            return self.constant(1.0);
        }
        self.intern(Node::Binary(BinOp::Div, a, b))
    }

    pub fn binary(&mut self, op: BinOp, a: NodeId, b: NodeId) -> NodeId {
        match op {
            BinOp::Add => self.add(a, b),
            BinOp::Sub => self.sub(a, b),
            BinOp::Mul => self.mul(a, b),
            BinOp::Div => self.div(a, b),
        }
    }

    pub fn unary(&mut self, f: UnaryFn, a: NodeId) -> NodeId {
        if f == UnaryFn::Neg {
            return self.neg(a);
        }
        if let Some(c) = self.as_const(a) {
            let exact = match (f, c) {
                (UnaryFn::Sin, 0.0) => Some(0.0),
                (UnaryFn::Cos, 0.0) | (UnaryFn::Exp, 0.0) => Some(1.0),
                (UnaryFn::Log, 1.0) => Some(0.0),
                (UnaryFn::Abs, _) => Some(c.abs()),
                (UnaryFn::Sqrt, _) if c >= 0.0 => {
                    let r = libm::sqrt(c);
                    (exact_prod(r, r) == Some(c)).then_some(r)
                }
                _ => None,
            };
            if let Some(v) = exact {
                return self.constant(v);
            }
        }
        self.intern(Node::Unary(f, a))
    }

    pub fn powi(&mut self, a: NodeId, n: i32) -> NodeId {
        match n {
            0 => return self.constant(1.0),
            1 => return a,
            _ => {}
        }
        if let Some(c) = self.as_const(a) {
            let mut acc = Some(1.0);
            for _ in 0..n.unsigned_abs() {
                acc = acc.and_then(|v| exact_prod(v, c));
            }
            if let Some(v) = acc {
                if n > 0 {
                    return self.constant(v);
                }
                let q = 1.0 / v;
                if q.is_finite() && exact_prod(q, v) == Some(1.0) {
                    return self.constant(q);
                }
            }
        }
        match self.node(a) {
            Node::Unary(UnaryFn::Sqrt, u) if n == 2 => return u,
            Node::PowI(u, m) => {
                if let Some(k) = m.checked_mul(n) {
                    return self.powi(u, k);
                }
            }
            _ => {}
        }
        self.intern(Node::PowI(a, n))
    }

    pub fn sign(&mut self, a: NodeId) -> NodeId {
        if let Some(c) = self.as_const(a) {
            if c != 0.0 {
                return self.constant(c.signum());
            }
        }
        self.intern(Node::Sign(a))
    }

    fn kink(&mut self, a: NodeId) -> NodeId {
        if let Some(c) = self.as_const(a) {
            if c != 0.0 {
                return self.constant(0.0);
            }
        }
        self.intern(Node::Kink(a))
    }

    /// Intern an expression tree.
    pub fn from_expr(&mut self, e: &Expr) -> NodeId {
        match e {
            Expr::Const(c) => self.constant(*c),
            Expr::Var(i) => self.var(*i),
            Expr::Time => self.time(),
            Expr::Unary(f, a) => {
                let x = self.from_expr(a);
                self.unary(*f, x)
            }
            Expr::Binary(op, a, b) => {
                let x = self.from_expr(a);
                let y = self.from_expr(b);
                self.binary(*op, x, y)
            }
            Expr::PowI(a, n) => {
                let x = self.from_expr(a);
                self.powi(x, *n)
            }
        }
    }

    /// Expand a node back into a tree. Shared subexpressions are duplicated.
    /// Fails if the node uses a derivative-only construct whose value is
    /// not an ordinary expression.
    pub fn to_expr(&self, id: NodeId) -> Result<Expr> {
        Ok(match self.node(id) {
            Node::Const(b) => Expr::Const(f64::from_bits(b)),
            Node::Var(i) => Expr::Var(i as usize),
            Node::Time => Expr::Time,
            Node::Unary(f, a) => Expr::unary(f, self.to_expr(a)?),
            Node::Binary(op, a, b) => Expr::binary(op, self.to_expr(a)?, self.to_expr(b)?),
            Node::PowI(a, n) => self.to_expr(a)?.powi(n),
            Node::Sign(a) => {
                // |u| / u, valid wherever the derivative of abs exists
                let u = self.to_expr(a)?;
                u.clone().abs() / u
            }
            Node::Kink(_) => Expr::Const(0.0),
        })
    }

    /// Partial derivative, memoized per (node, variable).
    pub fn partial(&mut self, id: NodeId, wrt: Wrt) -> Result<NodeId> {
        let r = self.partial_rec(id, wrt);
        self.check_cap()?;
        Ok(r)
    }

    fn partial_rec(&mut self, id: NodeId, wrt: Wrt) -> NodeId {
        if let Some(&d) = self.partials.get(&(id, wrt)) {
            return d;
        }
        let d = match self.node(id) {
            Node::Const(_) => self.constant(0.0),
            Node::Var(i) => self.constant(if wrt == Wrt::Var(i) { 1.0 } else { 0.0 }),
            Node::Time => self.constant(if wrt == Wrt::Time { 1.0 } else { 0.0 }),
            Node::Unary(f, a) => {
                let da = self.partial_rec(a, wrt);
                if self.is_const(da, 0.0) {
                    da
                } else {
                    let outer = match f {
                        UnaryFn::Neg => self.constant(-1.0),
                        UnaryFn::Sin => self.unary(UnaryFn::Cos, a),
                        UnaryFn::Cos => {
                            let s = self.unary(UnaryFn::Sin, a);
                            self.neg(s)
                        }
                        UnaryFn::Exp => id,
                        UnaryFn::Sqrt => {
                            let two = self.constant(2.0);
                            let den = self.mul(two, id);
                            let one = self.constant(1.0);
                            self.div(one, den)
                        }
                        UnaryFn::Log => {
                            let one = self.constant(1.0);
                            self.div(one, a)
                        }
                        UnaryFn::Abs => self.sign(a),
                    };
                    self.mul(outer, da)
                }
            }
            Node::Binary(op, a, b) => {
                let da = self.partial_rec(a, wrt);
                let db = self.partial_rec(b, wrt);
                match op {
                    BinOp::Add => self.add(da, db),
                    BinOp::Sub => self.sub(da, db),
                    BinOp::Mul => {
                        let l = self.mul(da, b);
                        let r = self.mul(a, db);
                        self.add(l, r)
                    }
                    BinOp::Div => {
                        // (da - (a/b) db) / b
                        let w = self.mul(id, db);
                        let num = self.sub(da, w);
                        self.div(num, b)
                    }
                }
            }
            Node::PowI(a, n) => {
                let da = self.partial_rec(a, wrt);
                if self.is_const(da, 0.0) {
                    da
                } else {
                    let k = self.constant(n as f64);
                    let p = self.powi(a, n - 1);
                    let kp = self.mul(k, p);
                    self.mul(kp, da)
                }
            }
            Node::Sign(a) => {
                let da = self.partial_rec(a, wrt);
                if self.is_const(da, 0.0) {
                    da
                } else {
                    let k = self.kink(a);
                    self.mul(k, da)
                }
            }
            Node::Kink(a) => {
                let da = self.partial_rec(a, wrt);
                if self.is_const(da, 0.0) {
                    da
                } else {
                    let k = self.kink(a);
                    self.mul(k, da)
                }
            }
        };
        self.partials.insert((id, wrt), d);
        d
    }

    /// Derivative along the flow `x_i' = flow[i]`: `de/dt + sum de/dx_i * flow_i`.
    pub fn total_derivative(&mut self, id: NodeId, flow: &[NodeId]) -> Result<NodeId> {
        let mut acc = self.partial_rec(id, Wrt::Time);
        for (i, &fi) in flow.iter().enumerate() {
            let d = self.partial_rec(id, Wrt::Var(i as u32));
            if self.is_const(d, 0.0) {
                continue;
            }
            let term = self.mul(d, fi);
            acc = self.add(acc, term);
        }
        self.check_cap()?;
        Ok(acc)
    }

    /// Replace leaves: `var(i)` returns the replacement of variable `i`
    /// (or `None` to keep it) and `time` the replacement of time.
    pub fn substitute(
        &mut self,
        root: NodeId,
        var: &dyn Fn(u32) -> Option<NodeId>,
        time: Option<NodeId>,
    ) -> Result<NodeId> {
        let mut memo: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let r = self.subst_rec(root, var, time, &mut memo);
        self.check_cap()?;
        Ok(r)
    }

    fn subst_rec(
        &mut self,
        id: NodeId,
        var: &dyn Fn(u32) -> Option<NodeId>,
        time: Option<NodeId>,
        memo: &mut BTreeMap<NodeId, NodeId>,
    ) -> NodeId {
        if let Some(&r) = memo.get(&id) {
            return r;
        }
        let r = match self.node(id) {
            Node::Const(_) => id,
            Node::Var(i) => var(i).unwrap_or(id),
            Node::Time => time.unwrap_or(id),
            Node::Unary(f, a) => {
                let x = self.subst_rec(a, var, time, memo);
                self.unary(f, x)
            }
            Node::Binary(op, a, b) => {
                let x = self.subst_rec(a, var, time, memo);
                let y = self.subst_rec(b, var, time, memo);
                self.binary(op, x, y)
            }
            Node::PowI(a, n) => {
                let x = self.subst_rec(a, var, time, memo);
                self.powi(x, n)
            }
            Node::Sign(a) => {
                let x = self.subst_rec(a, var, time, memo);
                self.sign(x)
            }
            Node::Kink(a) => {
                let x = self.subst_rec(a, var, time, memo);
                self.kink(x)
            }
        };
        memo.insert(id, r);
        r
    }

    /// Whether the subgraph under `id` mentions the given leaf.
    pub fn depends_on(&self, id: NodeId, wrt: Wrt) -> bool {
        let mut seen = alloc::vec![false; id.index() + 1];
        let mut stack = alloc::vec![id];
        while let Some(n) = stack.pop() {
            if seen[n.index()] {
                continue;
            }
            seen[n.index()] = true;
            match self.node(n) {
                Node::Var(i) if wrt == Wrt::Var(i) => return true,
                Node::Time if wrt == Wrt::Time => return true,
                Node::Unary(_, a) | Node::PowI(a, _) | Node::Sign(a) | Node::Kink(a) => stack.push(a),
                Node::Binary(_, a, b) => {
                    stack.push(a);
                    stack.push(b);
                }
                _ => {}
            }
        }
        false
    }

    /// Compile the subgraphs reachable from `roots` into a straight-line tape.
    pub fn tape(&self, roots: &[NodeId]) -> Tape {
        let top = roots.iter().map(|r| r.index()).max().map_or(0, |m| m + 1);
        let mut live = alloc::vec![false; top];
        let mut stack: Vec<NodeId> = roots.to_vec();
        while let Some(n) = stack.pop() {
            if live[n.index()] {
                continue;
            }
            live[n.index()] = true;
            match self.node(n) {
                Node::Unary(_, a) | Node::PowI(a, _) | Node::Sign(a) | Node::Kink(a) => stack.push(a),
                Node::Binary(_, a, b) => {
                    stack.push(a);
                    stack.push(b);
                }
                _ => {}
            }
        }
        let mut slot = alloc::vec![usize::MAX; top];
        let mut ops = Vec::new();
        let mut num_vars = 0;
        for (i, &l) in live.iter().enumerate() {
            if !l {
                continue;
            }
            slot[i] = ops.len();
            let s = |n: NodeId| slot[n.index()];
            let op = match self.nodes[i] {
                Node::Const(b) => Op::Const(f64::from_bits(b)),
                Node::Var(v) => {
                    num_vars = num_vars.max(v as usize + 1);
                    Op::Var(v as usize)
                }
                Node::Time => Op::Time,
                Node::Unary(f, a) => Op::Unary(f, s(a)),
                Node::Binary(op, a, b) => Op::Binary(op, s(a), s(b)),
                Node::PowI(a, n) => Op::PowI(s(a), n),
                Node::Sign(a) => Op::Sign(s(a)),
                Node::Kink(a) => Op::Kink(s(a)),
            };
            ops.push(op);
        }
        let outputs = roots.iter().map(|r| slot[r.index()]).collect();
        Tape { ops, outputs, num_vars }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Time,
    Unary(UnaryFn, usize),
    Binary(BinOp, usize, usize),
    PowI(usize, i32),
    Sign(usize),
    Kink(usize),
}

/// Straight-line evaluator for a set of graph roots.
#[derive(Clone, Debug, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
    num_vars: usize,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Number of variables the tape reads (one past the largest index).
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn eval_f64(&self, vars: &[f64], t: f64) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let x = match *op {
                Op::Const(c) => c,
                Op::Var(i) => vars[i],
                Op::Time => t,
                Op::Unary(f, a) => f.eval_f64(v[a]),
                Op::Binary(op, a, b) => op.eval_f64(v[a], v[b]),
                Op::PowI(a, n) => libm::pow(v[a], n as f64),
                Op::Sign(a) => {
                    if v[a] > 0.0 {
                        1.0
                    } else if v[a] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Op::Kink(_) => 0.0,
            };
            v.push(x);
        }
        self.outputs.iter().map(|&o| v[o]).collect()
    }

    pub fn eval_aff<S: NoiseSource + ?Sized>(&self, vars: &[AffineForm], t: &AffineForm, src: &mut S) -> Result<Vec<AffineForm>> {
        let mut v: Vec<AffineForm> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let x = match *op {
                Op::Const(c) => AffineForm::constant(c),
                Op::Var(i) => vars.get(i).cloned().ok_or(Error::UnboundVariable(i))?,
                Op::Time => t.clone(),
                Op::Unary(f, a) => f.eval_aff(&v[a], src)?,
                Op::Binary(op, a, b) => op.eval_aff(&v[a], &v[b], src)?,
                Op::PowI(a, n) => v[a].powi(n, src)?,
                Op::Sign(a) => {
                    let iv = v[a].to_interval();
                    if iv.lo() > 0.0 {
                        AffineForm::constant(1.0)
                    } else if iv.hi() < 0.0 {
                        AffineForm::constant(-1.0)
                    } else {
                        AffineForm::from_interval(crate::Interval::new(-1.0, 1.0)?, src)
                    }
                }
                Op::Kink(a) => {
                    let iv = v[a].to_interval();
                    if iv.contains(0.0) {
                        return Err(Error::NonSmooth { lo: iv.lo(), hi: iv.hi() });
                    }
                    AffineForm::zero()
                }
            };
            if !x.is_finite() {
                return Err(Error::NonFinite("expression evaluation"));
            }
            v.push(x);
        }
        Ok(self.outputs.iter().map(|&o| v[o].clone()).collect())
    }
}

/// Symbolic total derivative of an expression along a vector field.
pub fn total_derivative(e: &Expr, flow: &[Expr]) -> Result<Expr> {
    let mut g = ExprGraph::new();
    let id = g.from_expr(e);
    let f: Vec<NodeId> = flow.iter().map(|fi| g.from_expr(fi)).collect();
    let d = g.total_derivative(id, &f)?;
    g.to_expr(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::NoiseAlloc;
    use alloc::vec;

    fn x() -> Expr {
        Expr::var(0)
    }

    fn y() -> Expr {
        Expr::var(1)
    }

    #[test]
    fn derivative_base_cases() {
        let d = total_derivative(&x(), &[-x()]).unwrap();
        assert_eq!(d.eval_f64(&[3.0], 0.0), -3.0);
        let t2 = total_derivative(&Expr::Time.powi(2), &[]).unwrap();
        assert_eq!(t2.eval_f64(&[], 1.5), 3.0);
    }

    #[test]
    fn brusselator_first_derivative_matches_formula() {
        let f = 1.0 + x().powi(2) * y() - 2.5 * x();
        let g = 1.5 * x() - x().powi(2) * y();
        let d = total_derivative(&f, &[f.clone(), g.clone()]).unwrap();
        let (px, py) = (0.95, 0.05);
        let fx = f.eval_f64(&[px, py], 0.0);
        let gy = g.eval_f64(&[px, py], 0.0);
        let want = (2.0 * px * py - 2.5) * fx + px * px * gy;
        assert!((d.eval_f64(&[px, py], 0.0) - want).abs() < 1e-14);
    }

    #[test]
    fn simplifier_cancels_and_folds() {
        let mut g = ExprGraph::new();
        let a = g.var(0);
        let z = g.sub(a, a);
        assert_eq!(g.as_const(z), Some(0.0));
        let two = g.constant(2.0);
        let ta = g.mul(two, a);
        let s = g.add(ta, a);
        let three = g.constant(3.0);
        assert_eq!(s, g.mul(three, a));
        let r = g.unary(UnaryFn::Sqrt, a);
        assert_eq!(g.powi(r, 2), a);
        let n = g.neg(a);
        assert_eq!(g.neg(n), a);
    }

    #[test]
    fn abs_derivative_is_sign() {
        let mut g = ExprGraph::new();
        let a = g.var(0);
        let ab = g.unary(UnaryFn::Abs, a);
        let d = g.partial(ab, Wrt::Var(0)).unwrap();
        let tape = g.tape(&[d]);
        let mut al = NoiseAlloc::new();
        let pos = [AffineForm::constant(2.0)];
        assert_eq!(tape.eval_aff(&pos, &AffineForm::zero(), &mut al).unwrap()[0].to_interval().lo(), 1.0);
        let straddle = [AffineForm::from_interval(crate::Interval::new(-1.0, 1.0).unwrap(), &mut al)];
        let v = tape.eval_aff(&straddle, &AffineForm::zero(), &mut al).unwrap()[0].to_interval();
        assert!(v.lo() <= -1.0 && v.hi() >= 1.0);
        let dd = g.partial(d, Wrt::Var(0)).unwrap();
        let tape2 = g.tape(&[dd]);
        assert!(matches!(tape2.eval_aff(&straddle, &AffineForm::zero(), &mut al), Err(Error::NonSmooth { .. })));
    }

    #[test]
    fn tape_matches_tree() {
        let e = (x() * y()).sin() + (x() / (1.0 + y().powi(2))).exp() - Expr::Time * x().sqrt();
        let mut g = ExprGraph::new();
        let id = g.from_expr(&e);
        let tape = g.tape(&[id]);
        let v = [0.7, -0.3];
        let a = tape.eval_f64(&v, 0.4)[0];
        let b = e.eval_f64(&v, 0.4);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn node_cap_is_enforced() {
        let mut g = ExprGraph::with_cap(50);
        let e = (x() * y()).sin().exp();
        let id = g.from_expr(&e);
        let f = vec![g.from_expr(&(x() * y()).cos()), g.from_expr(&x().exp())];
        let mut d = id;
        let mut res = Ok(id);
        for _ in 0..6 {
            res = g.total_derivative(d, &f);
            match res {
                Ok(n) => d = n,
                Err(_) => break,
            }
        }
        assert!(matches!(res, Err(Error::ExpressionTooLarge { .. })));
    }
}
