//! Syntax tree of the loop language, shared by the input and output programs.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Integer linear combination of symbolic size parameters, used for loop
/// bounds and declared extents.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinExpr {
    pub terms: BTreeMap<String, i64>,
    pub constant: i64,
}

impl LinExpr {
    pub fn constant(c: i64) -> LinExpr {
        LinExpr { terms: BTreeMap::new(), constant: c }
    }

    pub fn var(name: &str) -> LinExpr {
        let mut terms = BTreeMap::new();
        terms.insert(String::from(name), 1);
        LinExpr { terms, constant: 0 }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, o: &LinExpr) -> LinExpr {
        let mut r = self.clone();
        for (k, v) in &o.terms {
            *r.terms.entry(k.clone()).or_insert(0) += v;
        }
        r.terms.retain(|_, v| *v != 0);
        r.constant += o.constant;
        r
    }

    pub fn scale(&self, f: i64) -> LinExpr {
        let mut r = LinExpr::constant(self.constant * f);
        if f != 0 {
            for (k, v) in &self.terms {
                r.terms.insert(k.clone(), v * f);
            }
        }
        r
    }

    pub fn sub(&self, o: &LinExpr) -> LinExpr {
        self.add(&o.scale(-1))
    }

    pub fn offset(&self, c: i64) -> LinExpr {
        let mut r = self.clone();
        r.constant += c;
        r
    }

    /// `self - o` when both share the same symbolic part.
    pub fn const_diff(&self, o: &LinExpr) -> Option<i64> {
        if self.terms == o.terms {
            Some(self.constant - o.constant)
        } else {
            None
        }
    }

    pub fn eval(&self, sizes: &BTreeMap<String, i64>) -> Option<i64> {
        let mut v = self.constant;
        for (k, c) in &self.terms {
            v += c * sizes.get(k)?;
        }
        Some(v)
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in &self.terms {
            let (neg, mag) = (*c < 0, c.abs());
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { "-" } else { "+" })?;
            }
            if mag != 1 {
                write!(f, "{}*", mag)?;
            }
            write!(f, "{}", k)?;
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, "+{}", self.constant)
        } else if self.constant < 0 {
            write!(f, "-{}", -self.constant)
        } else {
            Ok(())
        }
    }
}

/// One array subscript.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subscript {
    /// `coef*var + offset`, or just `offset` when `var` is absent.
    Affine { coef: i64, var: Option<String>, offset: i64 },
    /// `MODULO(var + offset, extent)`, the index of a rotating buffer.
    Rotate { var: String, offset: i64, extent: i64 },
}

impl Subscript {
    pub fn var(name: &str, offset: i64) -> Subscript {
        Subscript::Affine { coef: 1, var: Some(String::from(name)), offset }
    }
}

impl fmt::Display for Subscript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn term(f: &mut fmt::Formatter<'_>, coef: i64, var: &str, offset: i64) -> fmt::Result {
            match coef {
                1 => write!(f, "{}", var)?,
                -1 => write!(f, "-{}", var)?,
                c => write!(f, "{}*{}", c, var)?,
            }
            if offset > 0 {
                write!(f, "+{}", offset)
            } else if offset < 0 {
                write!(f, "-{}", -offset)
            } else {
                Ok(())
            }
        }
        match self {
            Subscript::Affine { coef, var: Some(v), offset } if *coef != 0 => term(f, *coef, v, *offset),
            Subscript::Affine { offset, .. } => write!(f, "{}", offset),
            Subscript::Rotate { var, offset, extent } => {
                write!(f, "MODULO(")?;
                term(f, 1, var, *offset)?;
                write!(f, ",{})", extent)
            }
        }
    }
}

/// A scalar (no subscripts) or array element reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Access {
    pub name: String,
    pub subscripts: Vec<Subscript>,
}

impl Access {
    pub fn scalar(name: &str) -> Access {
        Access { name: String::from(name), subscripts: Vec::new() }
    }
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.subscripts.is_empty() {
            write!(f, "(")?;
            for (k, s) in self.subscripts.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", s)?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ref(Access),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Box<Expr>),
    /// Parentheses written in the source, or inserted by [`Expr::parenthesize`].
    Paren(Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }

    /// Inserts the parentheses that the emitted text needs in order to parse
    /// back into the same tree.
    pub fn parenthesize(self) -> Expr {
        fn wrap(e: Expr, need: bool) -> Expr {
            if need {
                Expr::Paren(Box::new(e))
            } else {
                e
            }
        }
        match self {
            Expr::Binary(op, l, r) => {
                let l = l.parenthesize();
                let r = r.parenthesize();
                let lp = l.precedence() < op.precedence();
                let rp = r.precedence() <= op.precedence() || matches!(r, Expr::Neg(_));
                Expr::binary(op, wrap(l, lp), wrap(r, rp))
            }
            Expr::Neg(a) => {
                let a = a.parenthesize();
                let p = a.precedence() < 4;
                Expr::Neg(Box::new(wrap(a, p)))
            }
            Expr::Call(f, a) => Expr::Call(f, Box::new(a.parenthesize())),
            Expr::Paren(a) => Expr::Paren(Box::new(a.parenthesize())),
            e => e,
        }
    }

    /// Removes every `Paren` node.
    pub fn strip_parens(self) -> Expr {
        match self {
            Expr::Paren(a) => a.strip_parens(),
            Expr::Binary(op, l, r) => Expr::binary(op, l.strip_parens(), r.strip_parens()),
            Expr::Neg(a) => Expr::Neg(Box::new(a.strip_parens())),
            Expr::Call(f, a) => Expr::Call(f, Box::new(a.strip_parens())),
            e => e,
        }
    }

    pub fn visit_refs<'a>(&'a self, f: &mut impl FnMut(&'a Access)) {
        match self {
            Expr::Num(_) => {}
            Expr::Ref(a) => f(a),
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Paren(a) => a.visit_refs(f),
            Expr::Binary(_, l, r) => {
                l.visit_refs(f);
                r.visit_refs(f);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{}", v),
            Expr::Ref(a) => write!(f, "{}", a),
            Expr::Neg(a) => write!(f, "-{}", a),
            Expr::Binary(op, l, r) => write!(f, "{}{}{}", l, op.symbol(), r),
            Expr::Call(n, a) => write!(f, "{}({})", n, a),
            Expr::Paren(a) => write!(f, "({})", a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dim {
    pub lo: LinExpr,
    pub hi: LinExpr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decl {
    /// `REAL name(lo:hi, ...)`; a scalar when `dims` is empty.
    Real { name: String, dims: Vec<Dim> },
    /// `PARAM name`, a loop-invariant scalar input.
    Param { name: String },
}

impl Decl {
    pub fn name(&self) -> &str {
        match self {
            Decl::Real { name, .. } | Decl::Param { name } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    pub var: String,
    pub lo: LinExpr,
    pub hi: LinExpr,
    /// Marks loops that only fill rotating buffers ahead of the main sweep.
    pub prefetch: bool,
    pub body: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assign {
    pub target: Access,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Loop(Loop),
    Assign(Assign),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub body: Vec<Item>,
}

impl Program {
    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.decls.iter().find(|d| d.name() == name)
    }

    /// Visits every assignment together with the enclosing loops.
    pub fn visit_assigns<'a>(&'a self, f: &mut impl FnMut(&[&'a Loop], &'a Assign)) {
        fn walk<'a>(items: &'a [Item], stack: &mut Vec<&'a Loop>, f: &mut impl FnMut(&[&'a Loop], &'a Assign)) {
            for it in items {
                match it {
                    Item::Assign(a) => f(stack, a),
                    Item::Loop(l) => {
                        stack.push(l);
                        walk(&l.body, stack, f);
                        stack.pop();
                    }
                }
            }
        }
        walk(&self.body, &mut Vec::new(), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linexpr_display() {
        let e = LinExpr::var("nx").scale(2).offset(-3);
        assert_eq!(alloc::format!("{}", e), "2*nx-3");
        assert_eq!(alloc::format!("{}", LinExpr::constant(-4)), "-4");
        assert_eq!(e.const_diff(&LinExpr::var("nx").scale(2)), Some(-3));
        assert_eq!(e.const_diff(&LinExpr::var("ny")), None);
    }

    #[test]
    fn parenthesize_keeps_right_nesting() {
        let a = || Expr::Ref(Access::scalar("a"));
        let e = Expr::binary(BinOp::Sub, a(), Expr::binary(BinOp::Add, a(), a())).parenthesize();
        assert_eq!(alloc::format!("{}", e), "a-(a+a)");
        let e = Expr::binary(BinOp::Mul, Expr::binary(BinOp::Add, a(), a()), Expr::Neg(Box::new(a())));
        assert_eq!(alloc::format!("{}", e.parenthesize()), "(a+a)*(-a)");
    }
}
