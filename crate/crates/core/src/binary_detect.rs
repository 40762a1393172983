//! Detection of redundant binary expressions with fixed operand grouping.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::identification::{compute_eri, leaf_operand, Eri, EriKey, Operand};
use crate::ir::{ArrayRef, Expr, Kind, Leaf, Nest, NodeId, Sub};

/// Per-level `(min, max)` position of the array leaves an expression reads,
/// in iteration units relative to the current iteration.
pub type Span = BTreeMap<usize, (i64, i64)>;

/// An auxiliary array holding the value of a redundant expression for every
/// iteration it is needed at.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxArray {
    pub name: String,
    /// Detection pass that created the array, counted from 0.
    pub iteration: usize,
    pub ordinal: usize,
    /// Loop levels the array is indexed by, ascending.
    pub levels: Vec<usize>,
    /// Value of element `(i_1, ..)`: the representative expression at that
    /// iteration.
    pub expr: Expr,
    /// Offset vector (over `levels`) of every replaced occurrence.
    pub member_offsets: Vec<Vec<i64>>,
    /// Positions read by `expr` once auxiliary leaves are expanded.
    pub span: Span,
}

impl AuxArray {
    /// Reference to the element at the given offsets from the current
    /// iteration.
    pub fn reference(&self, offsets: &[i64]) -> ArrayRef {
        ArrayRef {
            name: self.name.clone(),
            subs: self.levels.iter().zip(offsets).map(|(&level, &offset)| Sub { level, coef: 1, offset }).collect(),
        }
    }
}

/// Result of a detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformResult {
    pub nest: Nest,
    pub aux: Vec<AuxArray>,
    /// Detection passes that extracted something, at least 1.
    pub iterations: usize,
    /// Number of expression keys computed. Each tree node is keyed at most
    /// once, so this is linear in the size of the input.
    pub eri_evaluations: u64,
}

impl TransformResult {
    pub fn aux_by_name(&self, name: &str) -> Option<&AuxArray> {
        self.aux.iter().find(|a| a.name == name)
    }
}

/// A candidate occurrence: two operands with their computed key.
#[derive(Debug, Clone)]
pub struct Occurrence {
    pub eri: Eri,
    /// Operands in canonical order.
    pub first: Operand,
    pub second: Operand,
}

/// Positions read by `e`, expanding auxiliary leaves through `aux`.
pub fn span_of(e: &Expr, aux: &[AuxArray]) -> Span {
    let mut out: Span = BTreeMap::new();
    let mut put = |level: usize, lo: i64, hi: i64| {
        let v = out.entry(level).or_insert((lo, hi));
        v.0 = v.0.min(lo);
        v.1 = v.1.max(hi);
    };
    e.visit_refs(&mut |r| {
        if let Some(a) = aux.iter().find(|a| a.name == r.name) {
            for s in &r.subs {
                if let Some(&(lo, hi)) = a.span.get(&s.level) {
                    put(s.level, lo + s.offset, hi + s.offset);
                }
            }
        } else {
            for s in r.subs.iter().filter(|s| s.coef != 0) {
                let f = crate::rational::Rational::new(s.offset, s.coef);
                let fl = f.num().div_euclid(f.den());
                put(s.level, fl, fl);
            }
        }
    });
    out
}

/// Centre of a span per level, rounded up, over `levels`.
pub fn center(span: &Span, levels: &[usize]) -> Vec<i64> {
    levels
        .iter()
        .map(|l| span.get(l).map(|&(lo, hi)| (lo + hi).div_euclid(2) + (lo + hi).rem_euclid(2)).unwrap_or(0))
        .collect()
}

/// Shifts every reference in `e` by `-d[level]` iterations.
pub fn shift_expr(e: &mut Expr, levels: &[usize], d: &[i64]) {
    if d.iter().all(|x| *x == 0) {
        return;
    }
    e.map_refs(&mut |r| {
        for s in r.subs.iter_mut().filter(|s| s.coef != 0) {
            if let Some(k) = levels.iter().position(|l| *l == s.level) {
                s.offset -= s.coef * d[k];
            }
        }
    });
}

/// Chooses the representative of a class and the offset of every member.
///
/// Members are shifts of one another. The representative is a member whose
/// reads are centred on the current iteration, or else the member with the
/// lexicographically largest shift. The returned `d` is the shift that
/// centres the representative; the auxiliary element `p` holds the
/// representative evaluated at iteration `p - d`, and every member reads the
/// element at its returned offset.
pub fn coordinate_offsets(members: &[&Occurrence], centers: &[Vec<i64>], levels: &[usize]) -> (usize, Vec<i64>, Vec<Vec<i64>>) {
    let shift = |m: &Occurrence, base: &Occurrence, level: usize| -> i64 {
        let (fm, fb) = if let (Some(a), Some(b)) = (m.first.fio.get(&level), base.first.fio.get(&level)) {
            (*a, *b)
        } else {
            (m.second.fio[&level], base.second.fio[&level])
        };
        (fm - fb).to_integer().expect("matching keys differ by whole iterations")
    };
    let raw: Vec<Vec<i64>> =
        members.iter().map(|m| levels.iter().map(|&l| shift(m, members[0], l)).collect()).collect();
    let rep = match centers.iter().position(|c| c.iter().all(|x| *x == 0)) {
        Some(k) => k,
        None => {
            let best = raw.iter().max().unwrap();
            raw.iter().position(|v| v == best).unwrap()
        }
    };
    let d = centers[rep].clone();
    let offsets = raw
        .iter()
        .map(|v| v.iter().zip(&raw[rep]).zip(&d).map(|((a, b), c)| a - b + c).collect())
        .collect();
    (rep, d, offsets)
}

/// Levels indexed by any reference inside `e`, ascending.
pub fn expr_levels(e: &Expr) -> Vec<usize> {
    e.levels().into_iter().collect()
}

/// Replaces every node whose id is a key of `map` with the mapped tree.
pub fn replace_nodes(e: &mut Expr, map: &mut BTreeMap<NodeId, Expr>) {
    if let Some(r) = map.remove(&e.id) {
        *e = r;
        return;
    }
    match &mut e.kind {
        Kind::Leaf(_) => {}
        Kind::Neg(a) | Kind::Call(_, a) => replace_nodes(a, map),
        Kind::Binary { lhs, rhs, .. } => {
            replace_nodes(lhs, map);
            replace_nodes(rhs, map);
        }
        Kind::Nary { terms, .. } => terms.iter_mut().for_each(|t| replace_nodes(&mut t.expr, map)),
    }
}

/// Binary nodes whose two children are leaves, in left-to-right post-order.
fn eligible<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match &e.kind {
        Kind::Leaf(_) => {}
        Kind::Neg(a) | Kind::Call(_, a) => eligible(a, out),
        Kind::Binary { lhs, rhs, .. } => {
            eligible(lhs, out);
            eligible(rhs, out);
            if lhs.is_leaf() && rhs.is_leaf() {
                out.push(e);
            }
        }
        Kind::Nary { terms, .. } => terms.iter().for_each(|t| eligible(&t.expr, out)),
    }
}

pub fn aux_name(nest: &Nest, iteration: usize, ordinal: usize) -> String {
    format!("{}_{}_{}", nest.aux_prefix, iteration, ordinal)
}

/// Repeatedly extracts binary expressions that recompute another
/// occurrence's value at a shifted iteration, until none are left.
pub fn detect_binary(mut nest: Nest) -> TransformResult {
    let mut cache: BTreeMap<NodeId, Occurrence> = BTreeMap::new();
    let mut aux = Vec::new();
    let mut evaluations = 0u64;
    let mut iteration = 0;
    loop {
        let mut order: Vec<NodeId> = Vec::new();
        let mut reps: BTreeMap<NodeId, Expr> = BTreeMap::new();
        for s in &nest.statements {
            let mut nodes = Vec::new();
            eligible(&s.expr, &mut nodes);
            for n in nodes {
                order.push(n.id);
                if let alloc::collections::btree_map::Entry::Vacant(e) = cache.entry(n.id) {
                    let Kind::Binary { op, lhs, rhs, .. } = &n.kind else { unreachable!() };
                    let x = leaf_operand(lhs.leaf().unwrap(), lhs.id, &nest.written);
                    let y = leaf_operand(rhs.leaf().unwrap(), rhs.id, &nest.written);
                    let eri = compute_eri(*op, &x, &y);
                    evaluations += 1;
                    let (first, second) = if eri.swapped { (y, x) } else { (x, y) };
                    e.insert(Occurrence { eri, first, second });
                }
                reps.insert(n.id, n.clone());
            }
        }
        let mut classes: Vec<(EriKey, Vec<NodeId>)> = Vec::new();
        let mut index: BTreeMap<&EriKey, usize> = BTreeMap::new();
        for id in &order {
            let occ = &cache[id];
            if occ.eri.key.never_extracted(&occ.first, &occ.second) {
                continue;
            }
            match index.get(&occ.eri.key) {
                Some(&k) => classes[k].1.push(*id),
                None => {
                    index.insert(&occ.eri.key, classes.len());
                    classes.push((occ.eri.key.clone(), alloc::vec![*id]));
                }
            }
        }
        drop(index);
        classes.retain(|(_, m)| m.len() >= 2);
        if classes.is_empty() {
            break;
        }
        let mut replace: BTreeMap<NodeId, Expr> = BTreeMap::new();
        for (ordinal, (_, members)) in classes.iter().enumerate() {
            let occs: Vec<&Occurrence> = members.iter().map(|id| &cache[id]).collect();
            let levels = expr_levels(&reps[&members[0]]);
            let centers: Vec<Vec<i64>> =
                members.iter().map(|id| center(&span_of(&reps[id], &aux), &levels)).collect();
            let (rep, d, offsets) = coordinate_offsets(&occs, &centers, &levels);
            let mut expr = reps[&members[rep]].clone();
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
            for (id, off) in members.iter().zip(&offsets) {
                let leaf = nest.mk(Kind::Leaf(Leaf::Ref(a.reference(off))));
                replace.insert(*id, leaf);
            }
            aux.push(a);
        }
        for s in &mut nest.statements {
            replace_nodes(&mut s.expr, &mut replace);
        }
        for (_, members) in &classes {
            for id in members {
                cache.remove(id);
            }
        }
        iteration += 1;
    }
    TransformResult { nest, aux, iterations: iteration.max(1), eri_evaluations: evaluations }
}

/// Levels of the operand leaves, used by callers that build representatives
/// from operands rather than trees.
pub fn operand_levels(a: &Operand, b: &Operand) -> Vec<usize> {
    let mut s: BTreeSet<usize> = a.fio.keys().copied().collect();
    s.extend(b.fio.keys().copied());
    s.into_iter().collect()
}
