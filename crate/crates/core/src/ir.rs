//! Expression trees over affine array references inside one loop nest.
//!
//! Loop levels are numbered from 1 (outermost) to `m`. Level 0 marks a
//! subscript that does not depend on any loop index.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::ast::{self, Access, BinOp, Decl, Subscript};
use crate::error::{Error, ErrorKind, Result};
use crate::frontend::{LoopHeader, SourceProgram};

pub type NodeId = u32;

/// One subscript `coef * i_level + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sub {
    pub level: usize,
    pub coef: i64,
    pub offset: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArrayRef {
    pub name: String,
    pub subs: Vec<Sub>,
}

impl ArrayRef {
    /// True when no subscript depends on a loop index.
    pub fn is_invariant(&self) -> bool {
        self.subs.iter().all(|s| s.coef == 0)
    }

    pub fn levels(&self) -> BTreeSet<usize> {
        self.subs.iter().filter(|s| s.coef != 0).map(|s| s.level).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Leaf {
    Ref(ArrayRef),
    Const(f64),
    /// The function operand of a normalized call node.
    Func(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    /// Function application, `Binary(Call, Leaf(Func f), x)` means `f(x)`.
    Call,
}

impl Op {
    pub fn commutative(self) -> bool {
        matches!(self, Op::Add | Op::Mul)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Call => "@",
        }
    }

    pub fn from_bin(op: BinOp) -> Op {
        match op {
            BinOp::Add => Op::Add,
            BinOp::Sub => Op::Sub,
            BinOp::Mul => Op::Mul,
            BinOp::Div => Op::Div,
        }
    }

    fn to_bin(self) -> BinOp {
        match self {
            Op::Add => BinOp::Add,
            Op::Sub => BinOp::Sub,
            Op::Mul => BinOp::Mul,
            Op::Div => BinOp::Div,
            Op::Call => unreachable!("calls are not binary operators"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub id: NodeId,
    pub kind: Kind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Leaf(Leaf),
    Neg(Box<Expr>),
    /// A call before [`normalize_calls`] has run.
    Call(String, Box<Expr>),
    Binary {
        op: Op,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        /// Parenthesized in the source.
        paren: bool,
        /// Product created by distributing a scalar over a sum.
        scaled: bool,
    },
    Nary {
        op: Op,
        terms: Vec<Term>,
        paren: bool,
    },
}

/// Operand of an n-ary node. An inverted term is subtracted under `+` and
/// divided under `*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub inverted: bool,
    pub expr: Expr,
}

impl Expr {
    pub fn leaf(&self) -> Option<&Leaf> {
        match &self.kind {
            Kind::Leaf(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, Kind::Leaf(_))
    }

    /// Structural equality that ignores node ids.
    pub fn same(&self, o: &Expr) -> bool {
        match (&self.kind, &o.kind) {
            (Kind::Leaf(a), Kind::Leaf(b)) => match (a, b) {
                (Leaf::Const(x), Leaf::Const(y)) => x.to_bits() == y.to_bits(),
                _ => a == b,
            },
            (Kind::Neg(a), Kind::Neg(b)) => a.same(b),
            (Kind::Call(f, a), Kind::Call(g, b)) => f == g && a.same(b),
            (Kind::Binary { op: p, lhs: a, rhs: b, .. }, Kind::Binary { op: q, lhs: c, rhs: d, .. }) => {
                p == q && a.same(c) && b.same(d)
            }
            (Kind::Nary { op: p, terms: a, .. }, Kind::Nary { op: q, terms: b, .. }) => {
                p == q && a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.inverted == y.inverted && x.expr.same(&y.expr))
            }
            _ => false,
        }
    }

    pub fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match &self.kind {
            Kind::Leaf(_) => f(self),
            Kind::Neg(a) | Kind::Call(_, a) => a.visit_leaves(f),
            Kind::Binary { lhs, rhs, .. } => {
                lhs.visit_leaves(f);
                rhs.visit_leaves(f);
            }
            Kind::Nary { terms, .. } => terms.iter().for_each(|t| t.expr.visit_leaves(f)),
        }
    }

    pub fn visit_refs<'a>(&'a self, f: &mut impl FnMut(&'a ArrayRef)) {
        self.visit_leaves(&mut |e| {
            if let Kind::Leaf(Leaf::Ref(r)) = &e.kind {
                f(r)
            }
        });
    }

    pub fn map_refs(&mut self, f: &mut impl FnMut(&mut ArrayRef)) {
        match &mut self.kind {
            Kind::Leaf(Leaf::Ref(r)) => f(r),
            Kind::Leaf(_) => {}
            Kind::Neg(a) | Kind::Call(_, a) => a.map_refs(f),
            Kind::Binary { lhs, rhs, .. } => {
                lhs.map_refs(f);
                rhs.map_refs(f);
            }
            Kind::Nary { terms, .. } => terms.iter_mut().for_each(|t| t.expr.map_refs(f)),
        }
    }

    /// Loop levels referenced anywhere in the tree.
    pub fn levels(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit_refs(&mut |r| out.extend(r.levels()));
        out
    }

    /// Counts of `(add, sub, mul, div, call)` operations in the tree.
    pub fn op_counts(&self) -> OpCounts {
        let mut c = OpCounts::default();
        self.count_into(&mut c);
        c
    }

    fn count_into(&self, c: &mut OpCounts) {
        match &self.kind {
            Kind::Leaf(_) => {}
            Kind::Neg(a) => {
                c.sub += 1;
                a.count_into(c);
            }
            Kind::Call(_, a) => {
                c.call += 1;
                a.count_into(c);
            }
            Kind::Binary { op, lhs, rhs, .. } => {
                c.bump(*op, 1);
                lhs.count_into(c);
                rhs.count_into(c);
            }
            Kind::Nary { op, terms, .. } => {
                for (k, t) in terms.iter().enumerate() {
                    if k == 0 {
                        if t.inverted {
                            match op {
                                Op::Add => c.sub += 1,
                                _ => c.div += 1,
                            }
                        }
                    } else if t.inverted {
                        c.bump(if *op == Op::Add { Op::Sub } else { Op::Div }, 1);
                    } else {
                        c.bump(*op, 1);
                    }
                    t.expr.count_into(c);
                }
            }
        }
    }
}

/// Static operation counts by operator class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub add: u64,
    pub sub: u64,
    pub mul: u64,
    pub div: u64,
    pub call: u64,
}

impl OpCounts {
    pub fn bump(&mut self, op: Op, n: u64) {
        match op {
            Op::Add => self.add += n,
            Op::Sub => self.sub += n,
            Op::Mul => self.mul += n,
            Op::Div => self.div += n,
            Op::Call => self.call += n,
        }
    }

    pub fn plus(self, o: OpCounts) -> OpCounts {
        OpCounts {
            add: self.add + o.add,
            sub: self.sub + o.sub,
            mul: self.mul + o.mul,
            div: self.div + o.div,
            call: self.call + o.call,
        }
    }

    pub fn total(&self) -> u64 {
        self.add + self.sub + self.mul + self.div + self.call
    }

    pub fn entries(&self) -> [(&'static str, u64); 5] {
        [("add", self.add), ("sub", self.sub), ("mul", self.mul), ("div", self.div), ("call", self.call)]
    }
}

impl fmt::Display for OpCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "add {} sub {} mul {} div {} call {}", self.add, self.sub, self.mul, self.div, self.call)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub target: ArrayRef,
    pub expr: Expr,
}

/// A perfect nest in tree form, the unit the detectors work on.
#[derive(Debug, Clone, PartialEq)]
pub struct Nest {
    /// Declarations of the source, minus the scalar temporaries that were
    /// substituted away.
    pub decls: Vec<Decl>,
    pub loops: Vec<LoopHeader>,
    pub statements: Vec<Statement>,
    /// Arrays assigned by the nest. Their references never take part in a
    /// redundancy.
    pub written: BTreeSet<String>,
    /// Prefix of auxiliary array names, chosen not to clash with any
    /// declared name.
    pub aux_prefix: String,
    next_id: NodeId,
}

impl Nest {
    pub fn depth(&self) -> usize {
        self.loops.len()
    }

    pub fn fresh_id(&mut self) -> NodeId {
        self.next_id += 1;
        self.next_id
    }

    pub fn mk(&mut self, kind: Kind) -> Expr {
        Expr { id: self.fresh_id(), kind }
    }

    pub fn var(&self, level: usize) -> &str {
        &self.loops[level - 1].var
    }

    /// Gives every node in `e` a fresh id.
    pub fn renumber(&mut self, e: &mut Expr) {
        e.id = self.fresh_id();
        match &mut e.kind {
            Kind::Leaf(_) => {}
            Kind::Neg(a) | Kind::Call(_, a) => self.renumber(a),
            Kind::Binary { lhs, rhs, .. } => {
                self.renumber(lhs);
                self.renumber(rhs);
            }
            Kind::Nary { terms, .. } => {
                for t in terms {
                    self.renumber(&mut t.expr);
                }
            }
        }
    }
}

fn lower_access(acc: &Access, loops: &[LoopHeader]) -> ArrayRef {
    let subs = acc
        .subscripts
        .iter()
        .map(|s| match s {
            Subscript::Affine { coef, var: Some(v), offset } if *coef != 0 => {
                let level = loops.iter().position(|l| &l.var == v).expect("validated subscript") + 1;
                Sub { level, coef: *coef, offset: *offset }
            }
            Subscript::Affine { offset, .. } => Sub { level: 0, coef: 0, offset: *offset },
            Subscript::Rotate { .. } => unreachable!("validated input has no rotating subscripts"),
        })
        .collect();
    ArrayRef { name: acc.name.clone(), subs }
}

/// Converts a validated source nest into tree form, substituting scalar
/// temporaries into the statements that read them.
pub fn lower(src: &SourceProgram) -> Result<Nest> {
    let mut nest = Nest {
        decls: src.decls.iter().filter(|d| !src.is_temporary(d.name())).cloned().collect(),
        loops: src.loops.clone(),
        statements: Vec::new(),
        written: BTreeSet::new(),
        aux_prefix: String::from("aa"),
        next_id: 0,
    };
    while src.decls.iter().any(|d| d.name().starts_with(&format!("{}_", nest.aux_prefix))) {
        nest.aux_prefix.push('a');
    }
    let mut temps: Vec<(String, Expr)> = Vec::new();
    for a in &src.body {
        let e = lower_expr(&a.value, src, &temps, &mut nest)?;
        if a.target.subscripts.is_empty() {
            temps.retain(|(n, _)| n != &a.target.name);
            temps.push((a.target.name.clone(), e));
        } else {
            let target = lower_access(&a.target, &src.loops);
            nest.written.insert(target.name.clone());
            nest.statements.push(Statement { target, expr: e });
        }
    }
    Ok(nest)
}

fn lower_expr(e: &ast::Expr, src: &SourceProgram, temps: &[(String, Expr)], nest: &mut Nest) -> Result<Expr> {
    let kind = match e {
        ast::Expr::Num(v) => Kind::Leaf(Leaf::Const(*v)),
        ast::Expr::Ref(acc) => {
            if acc.subscripts.is_empty() && src.is_temporary(&acc.name) {
                let (_, t) = temps.iter().find(|(n, _)| n == &acc.name).ok_or_else(|| {
                    Error::new(ErrorKind::UseBeforeDefinition, format!("scalar `{}` read before assignment", acc.name))
                })?;
                let mut t = t.clone();
                nest.renumber(&mut t);
                return Ok(t);
            }
            Kind::Leaf(Leaf::Ref(lower_access(acc, &src.loops)))
        }
        ast::Expr::Neg(a) => Kind::Neg(Box::new(lower_expr(a, src, temps, nest)?)),
        ast::Expr::Call(f, a) => Kind::Call(f.clone(), Box::new(lower_expr(a, src, temps, nest)?)),
        ast::Expr::Binary(op, l, r) => Kind::Binary {
            op: Op::from_bin(*op),
            lhs: Box::new(lower_expr(l, src, temps, nest)?),
            rhs: Box::new(lower_expr(r, src, temps, nest)?),
            paren: false,
            scaled: false,
        },
        ast::Expr::Paren(a) => {
            let mut inner = lower_expr(a, src, temps, nest)?;
            match &mut inner.kind {
                Kind::Binary { paren, .. } | Kind::Nary { paren, .. } => *paren = true,
                _ => {}
            }
            return Ok(inner);
        }
    };
    Ok(nest.mk(kind))
}

/// Rewrites every call `f(x)` as `Binary(Call, Leaf(Func f), x)` so that
/// calls take part in binary redundancy detection.
pub fn normalize_calls(e: Expr, nest: &mut Nest) -> Expr {
    let id = e.id;
    let kind = match e.kind {
        Kind::Call(f, a) => {
            let arg = normalize_calls(*a, nest);
            let func = nest.mk(Kind::Leaf(Leaf::Func(f)));
            Kind::Binary { op: Op::Call, lhs: Box::new(func), rhs: Box::new(arg), paren: false, scaled: false }
        }
        Kind::Neg(a) => Kind::Neg(Box::new(normalize_calls(*a, nest))),
        Kind::Binary { op, lhs, rhs, paren, scaled } => Kind::Binary {
            op,
            lhs: Box::new(normalize_calls(*lhs, nest)),
            rhs: Box::new(normalize_calls(*rhs, nest)),
            paren,
            scaled,
        },
        Kind::Nary { op, terms, paren } => Kind::Nary {
            op,
            terms: terms.into_iter().map(|t| Term { inverted: t.inverted, expr: normalize_calls(t.expr, nest) }).collect(),
            paren,
        },
        k => k,
    };
    Expr { id, kind }
}

/// Applies [`normalize_calls`] to every statement.
pub fn normalize_nest_calls(nest: &mut Nest) {
    let stmts = core::mem::take(&mut nest.statements);
    nest.statements = stmts
        .into_iter()
        .map(|s| Statement { target: s.target, expr: normalize_calls(s.expr, nest) })
        .collect();
}

/// Renders an IR tree as a syntax tree. `render` decides how each array
/// reference is printed.
pub fn to_ast(e: &Expr, render: &mut impl FnMut(&ArrayRef) -> ast::Expr) -> ast::Expr {
    fn paren(e: ast::Expr, p: bool) -> ast::Expr {
        if p {
            ast::Expr::Paren(Box::new(e))
        } else {
            e
        }
    }
    match &e.kind {
        Kind::Leaf(Leaf::Ref(r)) => render(r),
        Kind::Leaf(Leaf::Const(v)) => {
            if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                ast::Expr::Neg(Box::new(ast::Expr::Num(-*v)))
            } else {
                ast::Expr::Num(*v)
            }
        }
        Kind::Leaf(Leaf::Func(f)) => ast::Expr::Ref(Access::scalar(f)),
        Kind::Neg(a) => ast::Expr::Neg(Box::new(to_ast(a, render))),
        Kind::Call(f, a) => ast::Expr::Call(f.clone(), Box::new(to_ast(a, render))),
        Kind::Binary { op: Op::Call, lhs, rhs, .. } => {
            let f = match &lhs.kind {
                Kind::Leaf(Leaf::Func(f)) => f.clone(),
                _ => unreachable!("call node without function leaf"),
            };
            ast::Expr::Call(f, Box::new(to_ast(rhs, render)))
        }
        Kind::Binary { op, lhs, rhs, paren: p, .. } => {
            paren(ast::Expr::binary(op.to_bin(), to_ast(lhs, render), to_ast(rhs, render)), *p)
        }
        Kind::Nary { op, terms, paren: p } => {
            let (fwd, inv) = if *op == Op::Add { (BinOp::Add, BinOp::Sub) } else { (BinOp::Mul, BinOp::Div) };
            let mut acc: Option<ast::Expr> = None;
            for t in terms {
                let x = to_ast(&t.expr, render);
                acc = Some(match acc {
                    None if t.inverted => {
                        if *op == Op::Add {
                            ast::Expr::Neg(Box::new(x))
                        } else {
                            ast::Expr::binary(BinOp::Div, ast::Expr::Num(1.0), x)
                        }
                    }
                    None => x,
                    Some(a) => ast::Expr::binary(if t.inverted { inv } else { fwd }, a, x),
                });
            }
            paren(acc.unwrap_or(ast::Expr::Num(if *op == Op::Add { 0.0 } else { 1.0 })), *p && terms.len() > 1)
        }
    }
}

/// Prints an array reference with the nest's loop variables.
pub fn ref_to_access(r: &ArrayRef, loops: &[LoopHeader]) -> Access {
    Access {
        name: r.name.clone(),
        subscripts: r
            .subs
            .iter()
            .map(|s| {
                if s.coef == 0 {
                    Subscript::Affine { coef: 0, var: None, offset: s.offset }
                } else {
                    Subscript::Affine { coef: s.coef, var: Some(loops[s.level - 1].var.clone()), offset: s.offset }
                }
            })
            .collect(),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Leaf(Leaf::Ref(r)) => {
                write!(f, "{}", r.name)?;
                if !r.subs.is_empty() {
                    write!(f, "[")?;
                    for (k, s) in r.subs.iter().enumerate() {
                        if k > 0 {
                            write!(f, ",")?;
                        }
                        if s.coef == 0 {
                            write!(f, "{}", s.offset)?;
                        } else {
                            write!(f, "{}*L{}{:+}", s.coef, s.level, s.offset)?;
                        }
                    }
                    write!(f, "]")?;
                }
                Ok(())
            }
            Kind::Leaf(Leaf::Const(v)) => write!(f, "{}", v),
            Kind::Leaf(Leaf::Func(n)) => write!(f, "{}", n),
            Kind::Neg(a) => write!(f, "-({})", a),
            Kind::Call(n, a) => write!(f, "{}({})", n, a),
            Kind::Binary { op, lhs, rhs, .. } => write!(f, "({} {} {})", lhs, op.symbol(), rhs),
            Kind::Nary { op, terms, .. } => {
                write!(f, "{}(", op.symbol())?;
                for (k, t) in terms.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    if t.inverted {
                        write!(f, "~")?;
                    }
                    write!(f, "{}", t.expr)?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    #[test]
    fn temporaries_are_substituted_in_order() {
        let src = "REAL a(n), b(n), t\nDO i=1,n\nt = a(i)\nb(i) = t*2.0\nt = a(i+1)\nb(i) = b(i) + t\nENDDO\n";
        let nest = lower(&parse_source(src).unwrap()).unwrap();
        assert_eq!(nest.statements.len(), 2);
        assert_eq!(alloc::format!("{}", nest.statements[0].expr), "(a[1*L1+0] * 2)");
        assert_eq!(alloc::format!("{}", nest.statements[1].expr), "(b[1*L1+0] + a[1*L1+1])");
        assert!(nest.decls.iter().all(|d| d.name() != "t"));
    }

    #[test]
    fn calls_become_binary_nodes() {
        let src = "REAL a(n), b(n)\nDO i=1,n\nb(i) = -sin(a(i))\nENDDO\n";
        let mut nest = lower(&parse_source(src).unwrap()).unwrap();
        normalize_nest_calls(&mut nest);
        let e = &nest.statements[0].expr;
        assert_eq!(alloc::format!("{}", e), "-((sin @ a[1*L1+0]))");
        assert_eq!(e.op_counts(), OpCounts { sub: 1, call: 1, ..Default::default() });
    }

    #[test]
    fn aux_prefix_avoids_declared_names() {
        let src = "REAL aa_x(n), b(n)\nDO i=1,n\nb(i) = aa_x(i)\nENDDO\n";
        let nest = lower(&parse_source(src).unwrap()).unwrap();
        assert_eq!(nest.aux_prefix, "aaa");
    }
}
