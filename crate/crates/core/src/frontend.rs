//! Parser and printer for the loop language.
//!
//! The language is line based. Each line holds one declaration, loop header,
//! loop end or assignment, and `!` starts a comment:
//!
//! ```text
//! PARAM c
//! REAL a(0:n+1), b(n)
//! DO i = 1, n
//!   b(i) = c*(a(i-1)+a(i+1))
//! ENDDO
//! ```
//!
//! [`parse_program`] accepts any structure the optimizer can print (several
//! loops, rotating `MODULO` subscripts, scalar temporaries). [`parse_source`]
//! additionally checks that the text is a single perfect nest with affine,
//! uncoupled subscripts over declared arrays.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::ast::{Access, Assign, BinOp, Decl, Dim, Expr, Item, LinExpr, Loop, Program, Subscript};
use crate::error::{Error, ErrorKind, Result};

/// Unary intrinsics accepted in expressions.
pub const INTRINSICS: &[&str] = &["sin", "cos", "tan", "exp", "log", "sqrt", "abs"];

pub fn is_intrinsic(name: &str) -> bool {
    INTRINSICS.contains(&name)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
}

fn lex(text: &str, line: usize) -> Result<Vec<Tok>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut k = 0;
    while k < b.len() {
        let c = b[k] as char;
        if c.is_ascii_whitespace() {
            k += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let s = k;
            while k < b.len() && ((b[k] as char).is_ascii_alphanumeric() || b[k] == b'_') {
                k += 1;
            }
            out.push(Tok::Ident(text[s..k].to_string()));
        } else if c.is_ascii_digit() || (c == '.' && k + 1 < b.len() && b[k + 1].is_ascii_digit()) {
            let s = k;
            while k < b.len() && b[k].is_ascii_digit() {
                k += 1;
            }
            if k < b.len() && b[k] == b'.' {
                k += 1;
                while k < b.len() && b[k].is_ascii_digit() {
                    k += 1;
                }
            }
            if k < b.len() && (b[k] == b'e' || b[k] == b'E') {
                let mut j = k + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    k = j;
                    while k < b.len() && b[k].is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let v: f64 = text[s..k]
                .parse()
                .map_err(|_| Error::at(ErrorKind::Syntax, line, format!("bad number `{}`", &text[s..k])))?;
            out.push(Tok::Num(v));
        } else if "+-*/(),=:".contains(c) {
            out.push(Tok::Sym(c));
            k += 1;
        } else {
            return Err(Error::at(ErrorKind::Syntax, line, format!("unexpected character `{}`", c)));
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c)))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.err("expected identifier".into())),
        }
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn err(&self, msg: String) -> Error {
        let near = match self.peek() {
            Some(Tok::Ident(s)) => format!(" near `{}`", s),
            Some(Tok::Num(v)) => format!(" near `{}`", v),
            Some(Tok::Sym(c)) => format!(" near `{}`", c),
            None => String::from(" at end of line"),
        };
        Error::at(ErrorKind::Syntax, self.line, msg + &near)
    }

    fn finish(&self) -> Result<()> {
        if self.done() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing input".into()))
        }
    }
}

/// Raw expression grammar; subscripts are converted afterwards.
#[derive(Debug, Clone)]
enum Raw {
    Num(f64),
    Name(String),
    Apply(String, Vec<Raw>),
    Neg(Box<Raw>),
    Bin(BinOp, Box<Raw>, Box<Raw>),
    Paren(Box<Raw>),
}

fn raw_expr(c: &mut Cursor) -> Result<Raw> {
    let mut l = raw_term(c)?;
    loop {
        let op = if c.eat('+') {
            BinOp::Add
        } else if c.eat('-') {
            BinOp::Sub
        } else {
            return Ok(l);
        };
        let r = raw_term(c)?;
        l = Raw::Bin(op, Box::new(l), Box::new(r));
    }
}

fn raw_term(c: &mut Cursor) -> Result<Raw> {
    let mut l = raw_factor(c)?;
    loop {
        let op = if c.eat('*') {
            BinOp::Mul
        } else if c.eat('/') {
            BinOp::Div
        } else {
            return Ok(l);
        };
        let r = raw_factor(c)?;
        l = Raw::Bin(op, Box::new(l), Box::new(r));
    }
}

fn raw_factor(c: &mut Cursor) -> Result<Raw> {
    if c.eat('-') {
        return Ok(Raw::Neg(Box::new(raw_factor(c)?)));
    }
    match c.peek() {
        Some(Tok::Num(v)) => {
            c.pos += 1;
            Ok(Raw::Num(*v))
        }
        Some(Tok::Ident(_)) => {
            let name = c.ident()?;
            if c.eat('(') {
                let mut args = Vec::new();
                loop {
                    args.push(raw_expr(c)?);
                    if !c.eat(',') {
                        break;
                    }
                }
                c.expect(')')?;
                Ok(Raw::Apply(name, args))
            } else {
                Ok(Raw::Name(name))
            }
        }
        Some(Tok::Sym('(')) => {
            c.pos += 1;
            let e = raw_expr(c)?;
            c.expect(')')?;
            Ok(Raw::Paren(Box::new(e)))
        }
        _ => Err(c.err("expected expression".into())),
    }
}

fn integer(v: f64, line: usize) -> Result<i64> {
    if v.abs() < 1e15 && (v as i64) as f64 == v {
        Ok(v as i64)
    } else {
        Err(Error::at(ErrorKind::NonAffineSubscript, line, format!("`{}` is not an integer", v)))
    }
}

fn raw_linexpr(r: &Raw, line: usize) -> Result<LinExpr> {
    let bad = || Error::at(ErrorKind::NonAffineSubscript, line, "expression is not affine".to_string());
    Ok(match r {
        Raw::Num(v) => LinExpr::constant(integer(*v, line)?),
        Raw::Name(n) => LinExpr::var(n),
        Raw::Paren(a) => raw_linexpr(a, line)?,
        Raw::Neg(a) => raw_linexpr(a, line)?.scale(-1),
        Raw::Bin(BinOp::Add, a, b) => raw_linexpr(a, line)?.add(&raw_linexpr(b, line)?),
        Raw::Bin(BinOp::Sub, a, b) => raw_linexpr(a, line)?.sub(&raw_linexpr(b, line)?),
        Raw::Bin(BinOp::Mul, a, b) => {
            let (a, b) = (raw_linexpr(a, line)?, raw_linexpr(b, line)?);
            if a.is_constant() {
                b.scale(a.constant)
            } else if b.is_constant() {
                a.scale(b.constant)
            } else {
                return Err(bad());
            }
        }
        _ => return Err(bad()),
    })
}

fn raw_subscript(r: &Raw, line: usize) -> Result<Subscript> {
    if let Raw::Apply(f, args) = r {
        if f.eq_ignore_ascii_case("modulo") && args.len() == 2 {
            let inner = raw_linexpr(&args[0], line)?;
            let extent = raw_linexpr(&args[1], line)?;
            if inner.terms.len() == 1 && extent.is_constant() && extent.constant > 0 {
                let (v, c) = inner.terms.iter().next().unwrap();
                if *c == 1 {
                    return Ok(Subscript::Rotate { var: v.clone(), offset: inner.constant, extent: extent.constant });
                }
            }
            return Err(Error::at(ErrorKind::NonAffineSubscript, line, "unsupported MODULO subscript".to_string()));
        }
    }
    let e = raw_linexpr(r, line)?;
    match e.terms.len() {
        0 => Ok(Subscript::Affine { coef: 0, var: None, offset: e.constant }),
        1 => {
            let (v, c) = e.terms.iter().next().unwrap();
            Ok(Subscript::Affine { coef: *c, var: Some(v.clone()), offset: e.constant })
        }
        _ => Err(Error::at(
            ErrorKind::NonAffineSubscript,
            line,
            format!("subscript `{}` couples several indices", e),
        )),
    }
}

/// What kind of object a name denotes, decided from the declarations.
fn raw_to_expr(r: &Raw, arrays: &BTreeSet<String>, line: usize) -> Result<Expr> {
    Ok(match r {
        Raw::Num(v) => Expr::Num(*v),
        Raw::Name(n) => Expr::Ref(Access::scalar(n)),
        Raw::Paren(a) => Expr::Paren(Box::new(raw_to_expr(a, arrays, line)?)),
        Raw::Neg(a) => Expr::Neg(Box::new(raw_to_expr(a, arrays, line)?)),
        Raw::Bin(op, a, b) => Expr::binary(*op, raw_to_expr(a, arrays, line)?, raw_to_expr(b, arrays, line)?),
        Raw::Apply(name, args) => {
            if arrays.contains(name) {
                let subscripts = args.iter().map(|a| raw_subscript(a, line)).collect::<Result<Vec<_>>>()?;
                Expr::Ref(Access { name: name.clone(), subscripts })
            } else {
                let lower = name.to_ascii_lowercase();
                if is_intrinsic(&lower) {
                    if args.len() != 1 {
                        return Err(Error::at(ErrorKind::Syntax, line, format!("`{}` takes one argument", lower)));
                    }
                    Expr::Call(lower, Box::new(raw_to_expr(&args[0], arrays, line)?))
                } else {
                    return Err(Error::at(ErrorKind::UndeclaredArray, line, format!("`{}` is not declared", name)));
                }
            }
        }
    })
}

fn keyword(t: Option<&Tok>, kw: &str) -> bool {
    matches!(t, Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
}

/// Line numbers recorded while parsing, used for later diagnostics.
#[derive(Debug, Default)]
struct Lines {
    assigns: Vec<usize>,
    loops: Vec<usize>,
}

/// Splits the text into statements. A line whose code ends in `&` continues
/// on the next line. Yields the first line number, the code and the comment.
fn logical_lines(src: &str) -> Vec<(usize, String, String)> {
    let mut out = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    for (idx, raw) in src.lines().enumerate() {
        let (code, comment) = match raw.find('!') {
            Some(p) => (&raw[..p], raw[p + 1..].trim()),
            None => (raw, ""),
        };
        let trimmed = code.trim_end();
        let (body, more) = match trimmed.strip_suffix('&') {
            Some(b) => (b, true),
            None => (trimmed, false),
        };
        let (start, mut text) = pending.take().unwrap_or((idx + 1, String::new()));
        text.push(' ');
        text.push_str(body.trim_start().trim_start_matches('&'));
        if more {
            pending = Some((start, text));
        } else {
            out.push((start, text, String::from(comment)));
        }
    }
    if let Some((start, text)) = pending {
        out.push((start, text, String::new()));
    }
    out
}

fn parse_with_lines(src: &str) -> Result<(Program, Lines)> {
    let mut prog = Program::default();
    let mut lines = Lines::default();
    let mut arrays = BTreeSet::new();
    let mut names = BTreeSet::new();
    // Stack of open loops, each with the items gathered so far.
    let mut stack: Vec<(Loop, usize)> = Vec::new();
    let mut body: Vec<Item> = Vec::new();
    let mut seen_exec = false;
    for (line, code, comment) in logical_lines(src) {
        let code = code.as_str();
        let comment = comment.as_str();
        let toks = lex(code, line)?;
        if toks.is_empty() {
            continue;
        }
        let mut c = Cursor { toks: &toks, pos: 0, line };
        let first = c.peek();
        let second = toks.get(1);
        let is_assign = |t: Option<&Tok>| matches!(t, Some(Tok::Sym('=')) | Some(Tok::Sym('(')));
        if (keyword(first, "real") || keyword(first, "param")) && !is_assign(second) {
            if seen_exec {
                return Err(Error::at(ErrorKind::Syntax, line, "declaration after executable statement".to_string()));
            }
            let is_param = keyword(first, "param");
            c.pos += 1;
            loop {
                let name = c.ident()?;
                if !names.insert(name.clone()) {
                    return Err(Error::at(ErrorKind::Redeclared, line, format!("`{}` declared twice", name)));
                }
                if is_param {
                    prog.decls.push(Decl::Param { name });
                } else {
                    let mut dims = Vec::new();
                    if c.eat('(') {
                        loop {
                            let a = raw_expr(&mut c)?;
                            let dim = if c.eat(':') {
                                let b = raw_expr(&mut c)?;
                                Dim { lo: raw_linexpr(&a, line)?, hi: raw_linexpr(&b, line)? }
                            } else {
                                Dim { lo: LinExpr::constant(1), hi: raw_linexpr(&a, line)? }
                            };
                            dims.push(dim);
                            if !c.eat(',') {
                                break;
                            }
                        }
                        c.expect(')')?;
                        arrays.insert(name.clone());
                    }
                    prog.decls.push(Decl::Real { name, dims });
                }
                if !c.eat(',') {
                    break;
                }
            }
            c.finish()?;
            continue;
        }
        seen_exec = true;
        if keyword(first, "do") && matches!(second, Some(Tok::Ident(_))) && toks.get(2) == Some(&Tok::Sym('=')) {
            c.pos += 1;
            let var = c.ident()?;
            c.expect('=')?;
            let lo = raw_linexpr(&raw_expr(&mut c)?, line)?;
            c.expect(',')?;
            let hi = raw_linexpr(&raw_expr(&mut c)?, line)?;
            c.finish()?;
            let prefetch = comment.eq_ignore_ascii_case("prefetch");
            lines.loops.push(line);
            stack.push((Loop { var, lo, hi, prefetch, body: core::mem::take(&mut body) }, line));
            continue;
        }
        let is_end = (keyword(first, "enddo") && toks.len() == 1)
            || (keyword(first, "end") && keyword(second, "do") && toks.len() == 2);
        if is_end {
            let (mut l, _) = stack
                .pop()
                .ok_or_else(|| Error::at(ErrorKind::Syntax, line, "ENDDO without DO".to_string()))?;
            let outer = core::mem::replace(&mut l.body, core::mem::take(&mut body));
            body = outer;
            body.push(Item::Loop(l));
            continue;
        }
        // Assignment.
        let target = match raw_factor(&mut c)? {
            Raw::Name(n) => Access::scalar(&n),
            Raw::Apply(n, args) => {
                if !arrays.contains(&n) {
                    return Err(Error::at(ErrorKind::UndeclaredArray, line, format!("`{}` is not declared", n)));
                }
                let subscripts = args.iter().map(|a| raw_subscript(a, line)).collect::<Result<Vec<_>>>()?;
                Access { name: n, subscripts }
            }
            _ => return Err(c.err("expected assignment target".into())),
        };
        c.expect('=')?;
        let value = raw_to_expr(&raw_expr(&mut c)?, &arrays, line)?;
        c.finish()?;
        lines.assigns.push(line);
        body.push(Item::Assign(Assign { target, value }));
    }
    if let Some((_, line)) = stack.last() {
        return Err(Error::at(ErrorKind::Syntax, *line, "DO without ENDDO".to_string()));
    }
    prog.body = body;
    Ok((prog, lines))
}

/// Parses any program in the loop language.
pub fn parse_program(src: &str) -> Result<Program> {
    parse_with_lines(src).map(|(p, _)| p)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopHeader {
    pub var: String,
    pub lo: LinExpr,
    pub hi: LinExpr,
}

/// A validated input: one perfect nest whose innermost body is a list of
/// assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceProgram {
    pub decls: Vec<Decl>,
    pub loops: Vec<LoopHeader>,
    pub body: Vec<Assign>,
}

impl SourceProgram {
    pub fn to_program(&self) -> Program {
        let mut items: Vec<Item> = self.body.iter().cloned().map(Item::Assign).collect();
        for h in self.loops.iter().rev() {
            items = alloc::vec![Item::Loop(Loop {
                var: h.var.clone(),
                lo: h.lo.clone(),
                hi: h.hi.clone(),
                prefetch: false,
                body: items,
            })];
        }
        Program { decls: self.decls.clone(), body: items }
    }

    pub fn params(&self) -> impl Iterator<Item = &str> {
        self.decls.iter().filter_map(|d| match d {
            Decl::Param { name } => Some(name.as_str()),
            _ => None,
        })
    }

    pub fn array_dims(&self, name: &str) -> Option<&[Dim]> {
        self.decls.iter().find_map(|d| match d {
            Decl::Real { name: n, dims } if n == name && !dims.is_empty() => Some(dims.as_slice()),
            _ => None,
        })
    }

    /// Scalars declared with `REAL` and no extent; these are temporaries.
    pub fn is_temporary(&self, name: &str) -> bool {
        self.decls.iter().any(|d| matches!(d, Decl::Real { name: n, dims } if n == name && dims.is_empty()))
    }
}

/// Parses and validates a single perfect nest.
pub fn parse_source(src: &str) -> Result<SourceProgram> {
    let (prog, lines) = parse_with_lines(src)?;
    let mut loops = Vec::new();
    let mut items = &prog.body;
    loop {
        match items.as_slice() {
            [Item::Loop(l)] => {
                loops.push(LoopHeader { var: l.var.clone(), lo: l.lo.clone(), hi: l.hi.clone() });
                items = &l.body;
            }
            _ => break,
        }
    }
    if loops.is_empty() {
        let line = lines.loops.first().or(lines.assigns.first()).copied().unwrap_or(1);
        return Err(Error::at(ErrorKind::ImperfectNest, line, "expected exactly one loop nest".to_string()));
    }
    let mut body = Vec::new();
    for (k, it) in items.iter().enumerate() {
        match it {
            Item::Assign(a) => body.push(a.clone()),
            Item::Loop(_) => {
                let line = lines.loops.get(loops.len() + k).copied().unwrap_or(1);
                return Err(Error::at(ErrorKind::ImperfectNest, line, "statements and loops are mixed".to_string()));
            }
        }
    }
    if body.is_empty() || body.len() != lines.assigns.len() {
        let line = lines.assigns.first().copied().unwrap_or(1);
        return Err(Error::at(ErrorKind::ImperfectNest, line, "statements outside the innermost loop".to_string()));
    }
    let src = SourceProgram { decls: prog.decls, loops, body };
    validate(&src, &lines.assigns)?;
    Ok(src)
}

fn validate(src: &SourceProgram, lines: &[usize]) -> Result<()> {
    let vars: Vec<&str> = src.loops.iter().map(|l| l.var.as_str()).collect();
    let mut seen = BTreeSet::new();
    for (k, v) in vars.iter().enumerate() {
        if !seen.insert(*v) || src.decls.iter().any(|d| d.name() == *v) {
            return Err(Error::new(ErrorKind::Redeclared, format!("loop index `{}` reused", v)))
                .map_err(|mut e| {
                    e.line = None;
                    let _ = k;
                    e
                });
        }
    }
    for h in &src.loops {
        for b in [&h.lo, &h.hi] {
            for name in b.terms.keys() {
                if src.decls.iter().any(|d| d.name() == name) || vars.contains(&name.as_str()) {
                    return Err(Error::new(
                        ErrorKind::Unsupported,
                        format!("loop bound uses `{}`, which is not a size parameter", name),
                    ));
                }
            }
        }
    }
    let mut defined: BTreeSet<&str> = BTreeSet::new();
    for (a, &line) in src.body.iter().zip(lines) {
        let check_access = |acc: &Access, line: usize| -> Result<()> {
            if acc.subscripts.is_empty() {
                if vars.contains(&acc.name.as_str()) {
                    return Err(Error::at(
                        ErrorKind::Unsupported,
                        line,
                        format!("loop index `{}` used as a value", acc.name),
                    ));
                }
                return match src.decls.iter().find(|d| d.name() == acc.name) {
                    Some(Decl::Param { .. }) => Ok(()),
                    Some(Decl::Real { dims, .. }) if dims.is_empty() => Ok(()),
                    Some(_) => Err(Error::at(ErrorKind::Syntax, line, format!("array `{}` used without subscripts", acc.name))),
                    None => Err(Error::at(ErrorKind::UndeclaredSymbol, line, format!("`{}` is not declared", acc.name))),
                };
            }
            let dims = src
                .array_dims(&acc.name)
                .ok_or_else(|| Error::at(ErrorKind::UndeclaredArray, line, format!("`{}` is not declared", acc.name)))?;
            if dims.len() != acc.subscripts.len() {
                return Err(Error::at(
                    ErrorKind::Syntax,
                    line,
                    format!("`{}` has {} dimensions, {} subscripts given", acc.name, dims.len(), acc.subscripts.len()),
                ));
            }
            for s in &acc.subscripts {
                match s {
                    Subscript::Affine { coef, var: Some(v), .. } if *coef != 0 => {
                        if !vars.contains(&v.as_str()) {
                            return Err(Error::at(
                                ErrorKind::NonAffineSubscript,
                                line,
                                format!("subscript of `{}` uses `{}`, which is not a loop index", acc.name, v),
                            ));
                        }
                    }
                    Subscript::Affine { .. } => {}
                    Subscript::Rotate { .. } => {
                        return Err(Error::at(ErrorKind::NonAffineSubscript, line, "MODULO subscript in input".to_string()))
                    }
                }
            }
            Ok(())
        };
        let mut err = None;
        a.value.visit_refs(&mut |acc| {
            if err.is_none() {
                if let Err(e) = check_access(acc, line) {
                    err = Some(e);
                } else if src.is_temporary(&acc.name) && !defined.contains(acc.name.as_str()) {
                    err = Some(Error::at(
                        ErrorKind::UseBeforeDefinition,
                        line,
                        format!("scalar `{}` read before it is assigned", acc.name),
                    ));
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        check_access(&a.target, line)?;
        if a.target.subscripts.is_empty() {
            if !src.is_temporary(&a.target.name) {
                return Err(Error::at(
                    ErrorKind::Unsupported,
                    line,
                    format!("`{}` is not a REAL scalar and cannot be assigned", a.target.name),
                ));
            }
            defined.insert(a.target.name.as_str());
        }
    }
    Ok(())
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn emit_items(out: &mut String, items: &[Item], depth: usize) {
    for it in items {
        match it {
            Item::Assign(a) => {
                indent(out, depth);
                let _ = writeln!(out, "{} = {}", a.target, a.value);
            }
            Item::Loop(l) => {
                indent(out, depth);
                let _ = write!(out, "DO {} = {}, {}", l.var, l.lo, l.hi);
                if l.prefetch {
                    out.push_str(" ! prefetch");
                }
                out.push('\n');
                emit_items(out, &l.body, depth + 1);
                indent(out, depth);
                out.push_str("ENDDO\n");
            }
        }
    }
}

/// Prints a program in the loop language.
pub fn emit(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.decls {
        match d {
            Decl::Param { name } => {
                let _ = writeln!(out, "PARAM {}", name);
            }
            Decl::Real { name, dims } => {
                let _ = write!(out, "REAL {}", name);
                if !dims.is_empty() {
                    out.push('(');
                    for (k, d) in dims.iter().enumerate() {
                        if k > 0 {
                            out.push_str(", ");
                        }
                        let _ = write!(out, "{}:{}", d.lo, d.hi);
                    }
                    out.push(')');
                }
                out.push('\n');
            }
        }
    }
    emit_items(&mut out, &p.body, 0);
    out
}

pub fn emit_source(p: &SourceProgram) -> String {
    emit(&p.to_program())
}

/// Size parameters of a program: names used in bounds or extents that are
/// not declared.
pub fn size_params(p: &Program) -> BTreeMap<String, ()> {
    let mut out = BTreeMap::new();
    let mut add = |e: &LinExpr| {
        for k in e.terms.keys() {
            if p.decl(k).is_none() {
                out.insert(k.clone(), ());
            }
        }
    };
    for d in &p.decls {
        if let Decl::Real { dims, .. } = d {
            for dim in dims {
                add(&dim.lo);
                add(&dim.hi);
            }
        }
    }
    fn walk(items: &[Item], add: &mut impl FnMut(&LinExpr)) {
        for it in items {
            if let Item::Loop(l) = it {
                add(&l.lo);
                add(&l.hi);
                walk(&l.body, add);
            }
        }
    }
    walk(&p.body, &mut add);
    out
}
