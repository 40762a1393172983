//! Profit model and static operation counts.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ast::{self, Item, Program};
use crate::binary_detect::{AuxArray, TransformResult};
use crate::codegen::DependencyGraph;
use crate::error::{Error, ErrorKind, Result};
use crate::ir::{Expr, Op, OpCounts};

/// Profit terms of one auxiliary array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxProfit {
    pub name: String,
    /// References in the final statements.
    pub cnt: u64,
    /// Operations of the fully expanded expression.
    pub ops: u64,
    /// Operations of the stored expression, evaluated once per element.
    pub own_ops: u64,
    /// Number of elements computed.
    pub range_product: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfitReport {
    pub aux: Vec<AuxProfit>,
    /// Operations the replaced subtrees cost in the original nest.
    pub ori: i64,
    /// Operations spent computing the auxiliary arrays.
    pub aft: i64,
    pub profit: i64,
}

fn aux_refs<'a>(e: &'a Expr, aux: &'a [AuxArray], f: &mut impl FnMut(&'a AuxArray)) {
    e.visit_refs(&mut |r| {
        if let Some(a) = aux.iter().find(|a| a.name == r.name) {
            f(a)
        }
    });
}

/// Operation count of an auxiliary expression with every auxiliary operand
/// replaced by its own expanded expression.
pub fn expand_ops(a: &AuxArray, all: &[AuxArray]) -> u64 {
    let mut n = a.expr.op_counts().total();
    aux_refs(&a.expr, all, &mut |c| n += expand_ops(c, all));
    n
}

/// Operations saved by a detection result for the given sizes. A loop
/// range counts its trip count.
pub fn profit(result: &TransformResult, sizes: &BTreeMap<String, i64>) -> Result<ProfitReport> {
    let g = DependencyGraph::build(result)?;
    let eval = |e: &ast::LinExpr| {
        e.eval(sizes).ok_or_else(|| Error::new(ErrorKind::UndeclaredSymbol, format!("no value bound for a symbol of `{}`", e)))
    };
    let mut iterations = 1i64;
    for l in &g.loops {
        iterations *= (eval(&l.hi)? - eval(&l.lo)? + 1).max(0);
    }
    let mut cnt: BTreeMap<&str, u64> = BTreeMap::new();
    for s in &result.nest.statements {
        aux_refs(&s.expr, &result.aux, &mut |a| *cnt.entry(a.name.as_str()).or_default() += 1);
    }
    let mut report = ProfitReport { aux: Vec::new(), ori: 0, aft: 0, profit: 0 };
    for (k, a) in result.aux.iter().enumerate() {
        let mut range_product = 1;
        for (lo, hi) in g.ranges[&k].values() {
            range_product *= (eval(hi)? - eval(lo)? + 1).max(0);
        }
        let p = AuxProfit {
            name: a.name.clone(),
            cnt: cnt.get(a.name.as_str()).copied().unwrap_or(0),
            ops: expand_ops(a, &result.aux),
            own_ops: a.expr.op_counts().total(),
            range_product,
        };
        report.ori += iterations * (p.ops * p.cnt) as i64;
        report.aft += range_product * p.own_ops as i64;
        report.aux.push(p);
    }
    report.profit = report.ori - report.aft;
    Ok(report)
}

/// Operation counts of a syntax tree. Negation counts as a subtraction.
pub fn count_ast(e: &ast::Expr) -> OpCounts {
    let mut c = OpCounts::default();
    fn walk(e: &ast::Expr, c: &mut OpCounts) {
        match e {
            ast::Expr::Num(_) | ast::Expr::Ref(_) => {}
            ast::Expr::Neg(a) => {
                c.sub += 1;
                walk(a, c);
            }
            ast::Expr::Call(_, a) => {
                c.call += 1;
                walk(a, c);
            }
            ast::Expr::Paren(a) => walk(a, c),
            ast::Expr::Binary(op, l, r) => {
                c.bump(Op::from_bin(*op), 1);
                walk(l, c);
                walk(r, c);
            }
        }
    }
    walk(e, &mut c);
    c
}

/// Static counts of a program, each assignment counted once. Prefetch loops
/// are skipped. Assignments to names accepted by `is_aux` are precompute
/// statements; the others are the nest's own statements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StaticOps {
    pub main: OpCounts,
    pub precompute: OpCounts,
}

impl StaticOps {
    pub fn total(&self) -> OpCounts {
        self.main.plus(self.precompute)
    }
}

pub fn count_static_ops(p: &Program, is_aux: impl Fn(&str) -> bool) -> StaticOps {
    fn walk(items: &[Item], is_aux: &impl Fn(&str) -> bool, out: &mut StaticOps) {
        for it in items {
            match it {
                Item::Loop(l) if l.prefetch => {}
                Item::Loop(l) => walk(&l.body, is_aux, out),
                Item::Assign(a) => {
                    let c = count_ast(&a.value);
                    if is_aux(&a.target.name) {
                        out.precompute = out.precompute.plus(c);
                    } else {
                        out.main = out.main.plus(c);
                    }
                }
            }
        }
    }
    let mut out = StaticOps::default();
    walk(&p.body, &is_aux, &mut out);
    out
}
