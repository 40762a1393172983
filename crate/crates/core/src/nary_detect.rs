//! Detection on n-ary trees, where the operands of chains of `+` or `*` may
//! be regrouped freely.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::binary_detect::{
    aux_name, center, coordinate_offsets, expr_levels, shift_expr, span_of, AuxArray, Occurrence, TransformResult,
};
use crate::identification::{compute_eri, leaf_operand, EriKey, Operand, OperandKey};
use crate::ir::{Expr, Kind, Leaf, Nest, NodeId, Op, Term};
use crate::mis::{select_dimension_first, select_exact, ConflictGraph};
use crate::error::{Error, ErrorKind, Result};
use crate::rational::Rational;

/// How the extraction set is chosen in each pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Maximum independent set on the auxiliary graph. Fails when the graph
    /// exceeds the node budget.
    Exact,
    /// Dimension-first greedy selection.
    Heuristic,
    /// Exact when the graph fits the budget, otherwise the heuristic.
    Auto,
}

/// Rewrites `x - y` as `+(x, ~y)`, `x / y` as `*(x, ~y)` and `-x` as `+(~x)`.
pub fn normalize_sub_div(e: Expr, nest: &mut Nest) -> Expr {
    let id = e.id;
    let kind = match e.kind {
        Kind::Binary { op: op @ (Op::Sub | Op::Div), lhs, rhs, paren, .. } => {
            let l = normalize_sub_div(*lhs, nest);
            let r = normalize_sub_div(*rhs, nest);
            let op = if op == Op::Sub { Op::Add } else { Op::Mul };
            Kind::Nary {
                op,
                terms: alloc::vec![Term { inverted: false, expr: l }, Term { inverted: true, expr: r }],
                paren,
            }
        }
        Kind::Neg(a) => {
            let a = normalize_sub_div(*a, nest);
            Kind::Nary { op: Op::Add, terms: alloc::vec![Term { inverted: true, expr: a }], paren: false }
        }
        Kind::Binary { op, lhs, rhs, paren, scaled } => Kind::Binary {
            op,
            lhs: Box::new(normalize_sub_div(*lhs, nest)),
            rhs: Box::new(normalize_sub_div(*rhs, nest)),
            paren,
            scaled,
        },
        Kind::Call(f, a) => Kind::Call(f, Box::new(normalize_sub_div(*a, nest))),
        Kind::Nary { op, terms, paren } => Kind::Nary {
            op,
            terms: terms
                .into_iter()
                .map(|t| Term { inverted: t.inverted, expr: normalize_sub_div(t.expr, nest) })
                .collect(),
            paren,
        },
        k => k,
    };
    Expr { id, kind }
}

fn absorb(terms: &mut Vec<Term>, op: Op, x: Expr, inverted: bool, level: u8) {
    match x.kind {
        Kind::Nary { op: o, terms: inner, paren } if o == op && (!paren || level >= 2) => {
            for t in inner {
                terms.push(Term { inverted: t.inverted ^ inverted, expr: t.expr });
            }
        }
        kind => terms.push(Term { inverted, expr: Expr { id: x.id, kind } }),
    }
}

/// Merges chains of one commutative operator into n-ary nodes. Level 1
/// stops at source parentheses, level 2 and above merges through them.
/// Products built by distribution stay binary.
pub fn flatten(e: Expr, level: u8) -> Expr {
    if level == 0 {
        return e;
    }
    let id = e.id;
    let kind = match e.kind {
        Kind::Binary { op: op @ (Op::Add | Op::Mul), lhs, rhs, paren, scaled: false } => {
            let mut terms = Vec::new();
            absorb(&mut terms, op, flatten(*lhs, level), false, level);
            absorb(&mut terms, op, flatten(*rhs, level), false, level);
            Kind::Nary { op, terms, paren }
        }
        Kind::Nary { op, terms, paren } => {
            let mut out = Vec::new();
            for t in terms {
                absorb(&mut out, op, flatten(t.expr, level), t.inverted, level);
            }
            Kind::Nary { op, terms: out, paren }
        }
        Kind::Binary { op, lhs, rhs, paren, scaled } => Kind::Binary {
            op,
            lhs: Box::new(flatten(*lhs, level)),
            rhs: Box::new(flatten(*rhs, level)),
            paren,
            scaled,
        },
        Kind::Neg(a) => Kind::Neg(Box::new(flatten(*a, level))),
        Kind::Call(f, a) => Kind::Call(f, Box::new(flatten(*a, level))),
        k => k,
    };
    Expr { id, kind }
}

fn invariant_leaf(e: &Expr, written: &BTreeSet<alloc::string::String>) -> bool {
    match &e.kind {
        Kind::Leaf(Leaf::Const(_)) => true,
        Kind::Leaf(Leaf::Ref(r)) => r.is_invariant() && !written.contains(&r.name),
        _ => false,
    }
}

/// Distributes a constant or loop-invariant scalar factor over a sum:
/// `w*(a+b)` becomes `+(w*a, w*b)`.
pub fn distribute(e: Expr, nest: &mut Nest) -> Expr {
    let id = e.id;
    let kind = match e.kind {
        Kind::Nary { op, terms, paren } => {
            let terms: Vec<Term> = terms
                .into_iter()
                .map(|t| Term { inverted: t.inverted, expr: distribute(t.expr, nest) })
                .collect();
            let scalable = op == Op::Mul
                && terms.len() == 2
                && terms.iter().all(|t| !t.inverted)
                && invariant_leaf(&terms[0].expr, &nest.written)
                && matches!(terms[1].expr.kind, Kind::Nary { op: Op::Add, .. });
            if scalable {
                let mut it = terms.into_iter();
                let scale = it.next().unwrap().expr;
                let Kind::Nary { terms: sum, .. } = it.next().unwrap().expr.kind else { unreachable!() };
                let mut out = Vec::new();
                for t in sum {
                    let mut s = scale.clone();
                    nest.renumber(&mut s);
                    let expr = nest.mk(Kind::Binary {
                        op: Op::Mul,
                        lhs: Box::new(s),
                        rhs: Box::new(t.expr),
                        paren: false,
                        scaled: true,
                    });
                    out.push(Term { inverted: t.inverted, expr });
                }
                Kind::Nary { op: Op::Add, terms: out, paren }
            } else {
                Kind::Nary { op, terms, paren }
            }
        }
        Kind::Binary { op, lhs, rhs, paren, scaled } => Kind::Binary {
            op,
            lhs: Box::new(distribute(*lhs, nest)),
            rhs: Box::new(distribute(*rhs, nest)),
            paren,
            scaled,
        },
        Kind::Neg(a) => Kind::Neg(Box::new(distribute(*a, nest))),
        Kind::Call(f, a) => Kind::Call(f, Box::new(distribute(*a, nest))),
        k => k,
    };
    Expr { id, kind }
}

/// Regroups distributed products that share a factor: `+(w*a, w*b, c)`
/// becomes `+(w*(a+b), c)`.
pub fn refactor(e: Expr, nest: &mut Nest) -> Expr {
    let id = e.id;
    let kind = match e.kind {
        Kind::Nary { op, terms, paren } => {
            let mut terms: Vec<Term> = terms
                .into_iter()
                .map(|t| Term { inverted: t.inverted, expr: refactor(t.expr, nest) })
                .collect();
            if op == Op::Add {
                let scale_of = |t: &Term| match &t.expr.kind {
                    Kind::Binary { op: Op::Mul, scaled: true, lhs, .. } => Some((**lhs).clone()),
                    _ => None,
                };
                let mut k = 0;
                while k < terms.len() {
                    let Some(scale) = scale_of(&terms[k]) else {
                        k += 1;
                        continue;
                    };
                    let group: Vec<usize> = (k..terms.len())
                        .filter(|&j| scale_of(&terms[j]).is_some_and(|s| s.same(&scale)))
                        .collect();
                    if group.len() >= 2 {
                        let mut inner = Vec::new();
                        for &j in group.iter().rev() {
                            let t = terms.remove(j);
                            let Kind::Binary { rhs, .. } = t.expr.kind else { unreachable!() };
                            inner.push(Term { inverted: t.inverted, expr: *rhs });
                        }
                        inner.reverse();
                        let sum = nest.mk(Kind::Nary { op: Op::Add, terms: inner, paren: true });
                        let prod = nest.mk(Kind::Binary {
                            op: Op::Mul,
                            lhs: Box::new(scale),
                            rhs: Box::new(sum),
                            paren: false,
                            scaled: false,
                        });
                        terms.insert(k, Term { inverted: false, expr: prod });
                    }
                    k += 1;
                }
            }
            Kind::Nary { op, terms, paren }
        }
        Kind::Binary { op, lhs, rhs, paren, scaled } => Kind::Binary {
            op,
            lhs: Box::new(refactor(*lhs, nest)),
            rhs: Box::new(refactor(*rhs, nest)),
            paren,
            scaled,
        },
        Kind::Neg(a) => Kind::Neg(Box::new(refactor(*a, nest))),
        Kind::Call(f, a) => Kind::Call(f, Box::new(refactor(*a, nest))),
        k => k,
    };
    Expr { id, kind }
}

/// Operand for a term that can take part in a candidate: a leaf, or a
/// distributed product of an invariant factor and a leaf.
fn term_operand(e: &Expr, inverted: bool, written: &BTreeSet<alloc::string::String>) -> Option<Operand> {
    match &e.kind {
        Kind::Leaf(l) => {
            let mut o = leaf_operand(l, e.id, written);
            o.inverted = inverted;
            Some(o)
        }
        Kind::Binary { op: Op::Mul, scaled: true, lhs, rhs, .. } => {
            let (Some(a), Some(b)) = (lhs.leaf(), rhs.leaf()) else { return None };
            let s = leaf_operand(a, lhs.id, written);
            let x = leaf_operand(b, rhs.id, written);
            Some(Operand { key: OperandKey::Scaled(Box::new(s.key), Box::new(x.key)), fio: x.fio, inverted })
        }
        _ => None,
    }
}

/// Identity of a candidate: the parent node and the two operand nodes.
type CandId = (NodeId, NodeId, NodeId);

#[derive(Debug, Clone)]
struct Candidate {
    id: CandId,
    occ: Occurrence,
    /// The parent is an n-ary node (otherwise a binary node).
    pair: bool,
}

struct Found<'a> {
    id: CandId,
    op: Op,
    pair: bool,
    left: (&'a Expr, bool),
    right: (&'a Expr, bool),
}

fn enumerate<'a>(e: &'a Expr, out: &mut Vec<Found<'a>>) {
    match &e.kind {
        Kind::Leaf(_) => {}
        Kind::Neg(a) | Kind::Call(_, a) => enumerate(a, out),
        Kind::Binary { op, lhs, rhs, scaled, .. } => {
            enumerate(lhs, out);
            enumerate(rhs, out);
            if !scaled && lhs.is_leaf() && rhs.is_leaf() {
                out.push(Found { id: (e.id, lhs.id, rhs.id), op: *op, pair: false, left: (lhs, false), right: (rhs, false) });
            }
        }
        Kind::Nary { op, terms, .. } => {
            for t in terms {
                enumerate(&t.expr, out);
            }
            let usable: Vec<&Term> = terms
                .iter()
                .filter(|t| t.expr.is_leaf() || matches!(t.expr.kind, Kind::Binary { scaled: true, .. }))
                .collect();
            for a in 0..usable.len() {
                for b in a + 1..usable.len() {
                    let (x, y) = (usable[a], usable[b]);
                    out.push(Found {
                        id: (e.id, x.expr.id, y.expr.id),
                        op: *op,
                        pair: true,
                        left: (&x.expr, x.inverted),
                        right: (&y.expr, y.inverted),
                    });
                }
            }
        }
    }
}

/// Builds the two-operand expression a candidate stands for, in canonical
/// operand order and with the sign of the canonical form.
fn canonical_expr(c: &Candidate, f: &Found, nest: &mut Nest) -> Expr {
    if !c.pair {
        let (l, r) = (f.left.0.clone(), f.right.0.clone());
        let mut e = nest.mk(Kind::Binary { op: f.op, lhs: Box::new(l), rhs: Box::new(r), paren: false, scaled: false });
        nest.renumber(&mut e);
        return e;
    }
    let (mut a, mut b) = (f.left, f.right);
    if c.occ.eri.swapped {
        core::mem::swap(&mut a, &mut b);
    }
    let op = match (f.op, c.occ.eri.key.right_inverted) {
        (Op::Add, false) => Op::Add,
        (Op::Add, true) => Op::Sub,
        (_, false) => Op::Mul,
        (_, true) => Op::Div,
    };
    let mut e = nest.mk(Kind::Binary {
        op,
        lhs: Box::new(a.0.clone()),
        rhs: Box::new(b.0.clone()),
        paren: false,
        scaled: false,
    });
    nest.renumber(&mut e);
    e
}

fn collapse(e: &mut Expr, nest: &mut Nest) {
    match &mut e.kind {
        Kind::Leaf(_) => {}
        Kind::Neg(a) | Kind::Call(_, a) => collapse(a, nest),
        Kind::Binary { lhs, rhs, .. } => {
            collapse(lhs, nest);
            collapse(rhs, nest);
        }
        Kind::Nary { op, terms, .. } => {
            for t in terms.iter_mut() {
                collapse(&mut t.expr, nest);
            }
            if terms.len() == 1 {
                let t = terms.pop().unwrap();
                *e = if !t.inverted {
                    t.expr
                } else if *op == Op::Add {
                    nest.mk(Kind::Neg(Box::new(t.expr)))
                } else {
                    let one = nest.mk(Kind::Leaf(Leaf::Const(1.0)));
                    nest.mk(Kind::Binary { op: Op::Div, lhs: Box::new(one), rhs: Box::new(t.expr), paren: false, scaled: false })
                };
            }
        }
    }
}

/// Replacement of one candidate: pairs inside an n-ary parent, or a whole
/// binary node.
enum Edit {
    Pair { a: NodeId, b: NodeId, term: Term },
    Whole(Expr),
}

fn apply(e: &mut Expr, edits: &mut BTreeMap<NodeId, Vec<Edit>>) {
    if let Some(list) = edits.get_mut(&e.id) {
        if let Some(pos) = list.iter().position(|x| matches!(x, Edit::Whole(_))) {
            if let Edit::Whole(r) = list.remove(pos) {
                *e = r;
                return;
            }
        }
    }
    let id = e.id;
    match &mut e.kind {
        Kind::Leaf(_) => {}
        Kind::Neg(a) | Kind::Call(_, a) => apply(a, edits),
        Kind::Binary { lhs, rhs, .. } => {
            apply(lhs, edits);
            apply(rhs, edits);
        }
        Kind::Nary { terms, .. } => {
            for t in terms.iter_mut() {
                apply(&mut t.expr, edits);
            }
            if let Some(list) = edits.remove(&id) {
                for edit in list {
                    let Edit::Pair { a, b, term } = edit else { continue };
                    let ia = terms.iter().position(|t| t.expr.id == a).expect("operand present");
                    let ib = terms.iter().position(|t| t.expr.id == b).expect("operand present");
                    let (lo, hi) = (ia.min(ib), ia.max(ib));
                    terms.remove(hi);
                    terms[lo] = term;
                }
            }
        }
    }
}

fn select(g: &ConflictGraph<EriKey>, depth: usize, strategy: Strategy, budget: usize) -> Result<Vec<usize>> {
    match strategy {
        Strategy::Exact | Strategy::Auto if strategy == Strategy::Exact || g.auxiliary_size() <= budget.min(64) => {
            select_exact(g, budget).map_err(|e| {
                Error::new(
                    ErrorKind::BudgetExceeded,
                    format!("auxiliary graph has {} nodes, over the exact-search budget of {}", e.nodes, e.budget),
                )
            })
        }
        _ => Ok(select_dimension_first(g, depth).0),
    }
}

/// Parameters of [`detect_nary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NaryOptions {
    /// Reassociation level, 1 to 3.
    pub level: u8,
    pub strategy: Strategy,
    pub budget: usize,
    pub normalize_sub_div: bool,
}

/// Iterative detection on flattened trees. At level 3, scalar factors are
/// distributed once the undistributed trees yield nothing more, and the
/// distributed products left over are regrouped at the end.
pub fn detect_nary(mut nest: Nest, opts: NaryOptions) -> Result<TransformResult> {
    let level = opts.level.clamp(1, 3);
    let stmts = core::mem::take(&mut nest.statements);
    nest.statements = stmts
        .into_iter()
        .map(|mut s| {
            if opts.normalize_sub_div {
                s.expr = normalize_sub_div(s.expr, &mut nest);
            }
            s.expr = flatten(s.expr, level.min(2));
            s
        })
        .collect();
    let depth = nest.depth();
    let mut known: BTreeMap<CandId, Candidate> = BTreeMap::new();
    let mut removed: BTreeSet<CandId> = BTreeSet::new();
    let mut aux: Vec<AuxArray> = Vec::new();
    let mut evaluations = 0u64;
    let mut iteration = 0;
    let mut distributed = false;
    loop {
        let snapshot = nest.statements.clone();
        let mut found = Vec::new();
        for s in &snapshot {
            enumerate(&s.expr, &mut found);
        }
        found.retain(|f| !removed.contains(&f.id));
        let mut cands: Vec<Candidate> = Vec::new();
        let mut finds: Vec<&Found> = Vec::new();
        for f in &found {
            let c = match known.get(&f.id) {
                Some(c) => c.clone(),
                None => {
                    let written = &nest.written;
                    let (Some(x), Some(y)) =
                        (term_operand(f.left.0, f.left.1, written), term_operand(f.right.0, f.right.1, written))
                    else {
                        continue;
                    };
                    let eri = compute_eri(f.op, &x, &y);
                    evaluations += 1;
                    let (first, second) = if eri.swapped { (y, x) } else { (x, y) };
                    let c = Candidate { id: f.id, occ: Occurrence { eri, first, second }, pair: f.pair };
                    known.insert(f.id, c.clone());
                    c
                }
            };
            if c.occ.eri.key.never_extracted(&c.occ.first, &c.occ.second) {
                continue;
            }
            cands.push(c);
            finds.push(f);
        }
        let live: BTreeSet<CandId> = cands.iter().map(|c| c.id).collect();
        known.retain(|k, _| live.contains(k) || found.iter().any(|f| f.id == *k));
        let occurrences: Vec<Vec<NodeId>> = cands.iter().map(|c| alloc::vec![c.id.1, c.id.2]).collect();
        let zero: Vec<BTreeSet<usize>> = cands
            .iter()
            .map(|c| c.occ.eri.key.delta.iter().filter(|(_, d)| *d == Rational::ZERO).map(|(l, _)| *l).collect())
            .collect();
        let g = ConflictGraph::from_occurrences(cands.iter().map(|c| c.occ.eri.key.clone()).collect(), &occurrences, zero);
        let chosen = select(&g, depth, opts.strategy, opts.budget)?;
        if chosen.is_empty() {
            if level == 3 && !distributed {
                distributed = true;
                known.clear();
                removed.clear();
                let stmts = core::mem::take(&mut nest.statements);
                nest.statements = stmts
                    .into_iter()
                    .map(|mut s| {
                        s.expr = flatten(distribute(s.expr, &mut nest), 2);
                        s
                    })
                    .collect();
                continue;
            }
            break;
        }
        for &v in &chosen {
            removed.insert(cands[v].id);
            for &u in &g.adj[v] {
                removed.insert(cands[u].id);
            }
        }
        // Classes in order of their first member.
        let mut classes: Vec<(EriKey, Vec<usize>)> = Vec::new();
        for &v in &chosen {
            let k = &cands[v].occ.eri.key;
            match classes.iter_mut().find(|(c, _)| c == k) {
                Some((_, m)) => m.push(v),
                None => classes.push((k.clone(), alloc::vec![v])),
            }
        }
        let mut edits: BTreeMap<NodeId, Vec<Edit>> = BTreeMap::new();
        let mut new_aux = Vec::new();
        for (ordinal, (_, members)) in classes.iter().enumerate() {
            let exprs: Vec<Expr> = members.iter().map(|&v| canonical_expr(&cands[v], finds[v], &mut nest)).collect();
            let levels = expr_levels(&exprs[0]);
            let centers: Vec<Vec<i64>> = exprs.iter().map(|e| center(&span_of(e, &aux), &levels)).collect();
            let occs: Vec<&Occurrence> = members.iter().map(|&v| &cands[v].occ).collect();
            let (rep, d, offsets) = coordinate_offsets(&occs, &centers, &levels);
            let mut expr = exprs[rep].clone();
            shift_expr(&mut expr, &levels, &d);
            let span = span_of(&expr, &aux);
            let a = AuxArray {
                name: aux_name(&nest, iteration, ordinal),
                iteration,
                ordinal,
                levels,
                expr,
                member_offsets: offsets.clone(),
                span,
            };
            for (&v, off) in members.iter().zip(&offsets) {
                let c = &cands[v];
                let leaf = nest.mk(Kind::Leaf(Leaf::Ref(a.reference(off))));
                let edit = if c.pair {
                    Edit::Pair { a: c.id.1, b: c.id.2, term: Term { inverted: c.occ.eri.negated, expr: leaf } }
                } else {
                    Edit::Whole(leaf)
                };
                edits.entry(c.id.0).or_default().push(edit);
            }
            new_aux.push(a);
        }
        drop(finds);
        drop(found);
        aux.extend(new_aux);
        for s in &mut nest.statements {
            apply(&mut s.expr, &mut edits);
        }
        let mut stmts = core::mem::take(&mut nest.statements);
        for s in &mut stmts {
            collapse(&mut s.expr, &mut nest);
        }
        nest.statements = stmts;
        iteration += 1;
    }
    if distributed {
        let stmts = core::mem::take(&mut nest.statements);
        nest.statements = stmts
            .into_iter()
            .map(|mut s| {
                s.expr = refactor(s.expr, &mut nest);
                s
            })
            .collect();
    }
    Ok(TransformResult { nest, aux, iterations: iteration.max(1), eri_evaluations: evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use crate::ir::{lower, normalize_nest_calls};
    use alloc::format;

    fn nest(src: &str) -> Nest {
        let mut n = lower(&parse_source(src).unwrap()).unwrap();
        normalize_nest_calls(&mut n);
        n
    }

    fn opts(level: u8) -> NaryOptions {
        NaryOptions { level, strategy: Strategy::Auto, budget: 40, normalize_sub_div: false }
    }

    const DECL: &str = "PARAM w\nREAL a(0:n+2), b(0:n+2), c(0:n+2), d(0:n+2), x(0:n+2), y(0:n+2), z(0:n+2), o(n)\nDO i=1,n\n";

    fn one(expr: &str) -> Expr {
        nest(&format!("{}o(i) = {}\nENDDO\n", DECL, expr)).statements.remove(0).expr
    }

    #[test]
    fn flatten_levels() {
        assert_eq!(format!("{}", flatten(one("x(i)+y(i)+z(i)"), 1)), "+(x[1*L1+0], y[1*L1+0], z[1*L1+0])");
        assert_eq!(format!("{}", flatten(one("x(i)+(y(i)+z(i))"), 1)), "+(x[1*L1+0], +(y[1*L1+0], z[1*L1+0]))");
        assert_eq!(format!("{}", flatten(one("x(i)+(y(i)+z(i))"), 2)), "+(x[1*L1+0], y[1*L1+0], z[1*L1+0])");
        assert_eq!(format!("{}", flatten(one("x(i)+y(i)"), 0)), "(x[1*L1+0] + y[1*L1+0])");
    }

    #[test]
    fn sums_of_sums_are_not_distributed() {
        let mut n = nest(&format!("{}o(i) = (a(i)+b(i))*(c(i)+d(i))\nENDDO\n", DECL));
        let e = flatten(n.statements.remove(0).expr, 2);
        let before = format!("{}", e);
        assert_eq!(format!("{}", flatten(distribute(e, &mut n), 2)), before);
    }

    #[test]
    fn scalar_factor_is_distributed_and_regrouped() {
        let mut n = nest(&format!("{}o(i) = a(i)+w*(b(i)+c(i))\nENDDO\n", DECL));
        let e = flatten(n.statements.remove(0).expr, 2);
        let e = flatten(distribute(e, &mut n), 2);
        assert_eq!(format!("{}", e), "+(a[1*L1+0], (w * b[1*L1+0]), (w * c[1*L1+0]))");
        assert_eq!(format!("{}", refactor(e, &mut n)), "+(a[1*L1+0], (w * +(b[1*L1+0], c[1*L1+0])))");
    }

    #[test]
    fn subtraction_normalization() {
        let mut n = nest(&format!("{}o(i) = x(i)-y(i)-z(i)\nENDDO\n", DECL));
        let e = normalize_sub_div(n.statements.remove(0).expr, &mut n);
        assert_eq!(format!("{}", flatten(e, 1)), "+(x[1*L1+0], ~y[1*L1+0], ~z[1*L1+0])");
        let e = one("x(i)+y(i)");
        assert_eq!(format!("{}", flatten(normalize_sub_div(e.clone(), &mut n), 1)), format!("{}", flatten(e, 1)));
    }

    #[test]
    fn negated_sum_matches_sum() {
        let src = format!("{}o(i) = (y(i)+z(i))*(-y(i+1)-z(i+1))\nENDDO\n", DECL);
        let r = detect_nary(nest(&src), NaryOptions { normalize_sub_div: true, ..opts(2) }).unwrap();
        assert_eq!(r.aux.len(), 1);
        assert_eq!(format!("{}", r.nest.statements[0].expr), "*(aa_0_0[1*L1+0], -(aa_0_0[1*L1+1]))");
    }

    #[test]
    fn regrouping_finds_hidden_pair() {
        // x+y+z and x+z share x+z only after reordering.
        let src = format!("{}o(i) = (x(i)+y(i)+z(i))*(x(i+1)+z(i+1))\nENDDO\n", DECL);
        assert!(crate::binary_detect::detect_binary(nest(&src)).aux.is_empty());
        let r = detect_nary(nest(&src), opts(1)).unwrap();
        assert_eq!(r.aux.len(), 1);
        assert_eq!(format!("{}", r.aux[0].expr), "(x[1*L1+0] + z[1*L1+0])");
    }

    #[test]
    fn no_redundancy_leaves_program_alone() {
        let src = format!("{}o(i) = a(i)+b(i)*c(i)\nENDDO\n", DECL);
        let r = detect_nary(nest(&src), opts(3)).unwrap();
        assert!(r.aux.is_empty());
        assert_eq!(r.iterations, 1);
        assert_eq!(format!("{}", r.nest.statements[0].expr), "+(a[1*L1+0], *(b[1*L1+0], c[1*L1+0]))");
    }

    #[test]
    fn candidate_count_of_six_term_sum() {
        let src = format!("{}o(i) = a(i)+b(i)+c(i)+d(i)+x(i)+y(i)\nENDDO\n", DECL);
        let n = nest(&src);
        let e = flatten(n.statements[0].expr.clone(), 1);
        let mut found = Vec::new();
        enumerate(&e, &mut found);
        assert_eq!(found.len(), 15);
    }
}
