//! Code generation for the auxiliary arrays: the dependency graph, range
//! propagation, range circles, precompute loops, and array contraction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::ast::{self, Access, Assign, Decl, Dim, Item, LinExpr, Loop, Program, Subscript};
use crate::binary_detect::{shift_expr, AuxArray, TransformResult};
use crate::error::{Error, ErrorKind, Result};
use crate::frontend::LoopHeader;
use crate::ir::{ref_to_access, to_ast, ArrayRef, Expr, Statement};

/// Inclusive bounds of a loop range.
pub type Range = (LinExpr, LinExpr);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Node {
    /// An assignment of the original nest.
    Statement(usize),
    /// An auxiliary array, by index into the auxiliary list.
    Aux(usize),
}

/// One use of `child` inside the expression of `parent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub parent: Node,
    pub child: usize,
    /// Offsets over the child's levels.
    pub offsets: Vec<i64>,
}

/// Which auxiliary arrays are computed from which, with the iteration
/// ranges every array is needed over.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGraph {
    pub loops: Vec<LoopHeader>,
    pub statements: Vec<Statement>,
    pub aux: Vec<AuxArray>,
    /// Auxiliary arrays still present. Inlined arrays are dropped.
    pub live: BTreeSet<usize>,
    pub edges: Vec<Edge>,
    /// Range per level of every live auxiliary array.
    pub ranges: BTreeMap<usize, BTreeMap<usize, Range>>,
}

fn aux_index(aux: &[AuxArray], name: &str) -> Option<usize> {
    aux.iter().position(|a| a.name == name)
}

fn uses(e: &Expr, aux: &[AuxArray], parent: Node, out: &mut Vec<Edge>) {
    e.visit_refs(&mut |r| {
        if let Some(k) = aux_index(aux, &r.name) {
            out.push(Edge { parent, child: k, offsets: r.subs.iter().map(|s| s.offset).collect() });
        }
    });
}

fn union(a: &Range, b: &Range) -> Result<Range> {
    let incomparable = || Error::new(ErrorKind::IncomparableBounds, format!("cannot order bounds {} and {}", a.0, b.0));
    let lo = if a.0.const_diff(&b.0).ok_or_else(incomparable)? <= 0 { a.0.clone() } else { b.0.clone() };
    let hi = if a.1.const_diff(&b.1).ok_or_else(incomparable)? >= 0 { a.1.clone() } else { b.1.clone() };
    Ok((lo, hi))
}

impl DependencyGraph {
    /// Builds the graph of a detection result and propagates the loop
    /// ranges from the statements down to every auxiliary array.
    pub fn build(result: &TransformResult) -> Result<DependencyGraph> {
        let mut g = DependencyGraph {
            loops: result.nest.loops.clone(),
            statements: result.nest.statements.clone(),
            aux: result.aux.clone(),
            live: (0..result.aux.len()).collect(),
            edges: Vec::new(),
            ranges: BTreeMap::new(),
        };
        g.rebuild()?;
        Ok(g)
    }

    fn rebuild(&mut self) -> Result<()> {
        self.edges.clear();
        for (k, s) in self.statements.iter().enumerate() {
            uses(&s.expr, &self.aux, Node::Statement(k), &mut self.edges);
        }
        for &k in &self.live {
            uses(&self.aux[k].expr, &self.aux, Node::Aux(k), &mut self.edges);
        }
        self.propagate_ranges()
    }

    pub fn node_range(&self, n: Node) -> BTreeMap<usize, Range> {
        match n {
            Node::Statement(_) => self.top_range(),
            Node::Aux(k) => self.ranges[&k].clone(),
        }
    }

    pub fn top_range(&self) -> BTreeMap<usize, Range> {
        self.loops.iter().enumerate().map(|(l, h)| (l + 1, (h.lo.clone(), h.hi.clone()))).collect()
    }

    /// Each child's range is the union of its parents' ranges shifted by
    /// the offsets of the uses. An array is only used by arrays created
    /// after it, so reverse creation order visits parents first.
    pub fn propagate_ranges(&mut self) -> Result<()> {
        self.ranges.clear();
        for &k in self.live.iter().rev() {
            let levels = &self.aux[k].levels;
            let mut range: BTreeMap<usize, Range> = BTreeMap::new();
            for e in self.edges.iter().filter(|e| e.child == k) {
                if let Node::Aux(p) = e.parent {
                    if p <= k {
                        return Err(Error::new(ErrorKind::CyclicDependency, format!("{} is used by an older array", self.aux[k].name)));
                    }
                }
                let pr = self.node_range(e.parent);
                for (&level, &o) in levels.iter().zip(&e.offsets) {
                    let (lo, hi) = &pr[&level];
                    let shifted = (lo.offset(o), hi.offset(o));
                    let merged = match range.get(&level) {
                        Some(r) => union(r, &shifted)?,
                        None => shifted,
                    };
                    range.insert(level, merged);
                }
            }
            self.ranges.insert(k, range);
        }
        Ok(())
    }

    pub fn parents(&self, k: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.child == k)
    }

    /// Replaces every array used exactly once by its expression at the
    /// point of use.
    pub fn inline_single_uses(&mut self) -> Result<Vec<usize>> {
        let mut inlined = Vec::new();
        loop {
            let Some(k) = self.live.iter().copied().find(|&k| self.parents(k).count() == 1) else { break };
            let edge = self.parents(k).next().unwrap().clone();
            let child = self.aux[k].clone();
            let replace = |e: &mut Expr| {
                substitute(e, &child, &edge.offsets);
            };
            match edge.parent {
                Node::Statement(s) => replace(&mut self.statements[s].expr),
                Node::Aux(p) => replace(&mut self.aux[p].expr),
            }
            self.live.remove(&k);
            inlined.push(k);
            self.rebuild()?;
        }
        Ok(inlined)
    }
}

/// Replaces references to `child` at `offsets` by its expression.
fn substitute(e: &mut Expr, child: &AuxArray, offsets: &[i64]) {
    use crate::ir::{Kind, Leaf};
    if let Kind::Leaf(Leaf::Ref(r)) = &e.kind {
        if r.name == child.name && r.subs.iter().map(|s| s.offset).eq(offsets.iter().copied()) {
            let mut x = child.expr.clone();
            let d: Vec<i64> = offsets.iter().map(|o| -o).collect();
            shift_expr(&mut x, &child.levels, &d);
            *e = x;
        }
        return;
    }
    match &mut e.kind {
        Kind::Leaf(_) => {}
        Kind::Neg(a) | Kind::Call(_, a) => substitute(a, child, offsets),
        Kind::Binary { lhs, rhs, .. } => {
            substitute(lhs, child, offsets);
            substitute(rhs, child, offsets);
        }
        Kind::Nary { terms, .. } => terms.iter_mut().for_each(|t| substitute(&mut t.expr, child, offsets)),
    }
}

/// Nodes sharing one range, computed in the same loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Circle {
    /// Members in dependency order, used arrays first.
    pub members: Vec<Node>,
    pub range: BTreeMap<usize, Range>,
    /// The circle of the original statements.
    pub top: bool,
}

impl Circle {
    pub fn aux(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().filter_map(|n| match n {
            Node::Aux(k) => Some(*k),
            Node::Statement(_) => None,
        })
    }
}

/// Groups nodes into range circles and orders the circles so that every
/// circle comes after the circles it uses. With `join_top`, arrays whose
/// uses all lie in the statements' circle join it. Circles that would use
/// each other are split into single nodes.
pub fn range_circles(g: &DependencyGraph, join_top: bool) -> Result<Vec<Circle>> {
    let top = g.top_range();
    let mut circle_of: BTreeMap<Node, usize> = BTreeMap::new();
    let mut circles: Vec<Circle> = vec![Circle {
        members: (0..g.statements.len()).map(Node::Statement).collect(),
        range: top.clone(),
        top: true,
    }];
    for k in 0..g.statements.len() {
        circle_of.insert(Node::Statement(k), 0);
    }
    for &k in g.live.iter().rev() {
        let range = &g.ranges[&k];
        let in_top = join_top && *range == top && g.parents(k).all(|e| circle_of[&e.parent] == 0);
        let c = if in_top {
            0
        } else if let Some(c) = circles.iter().position(|c| !c.top && c.range == *range) {
            c
        } else {
            circles.push(Circle { members: Vec::new(), range: range.clone(), top: false });
            circles.len() - 1
        };
        circles[c].members.insert(0, Node::Aux(k));
        circle_of.insert(Node::Aux(k), c);
    }
    loop {
        match order_circles(g, &circles, &circle_of) {
            Ok(order) => return Ok(order.into_iter().map(|c| circles[c].clone()).collect()),
            Err(stuck) => {
                for c in stuck {
                    let members = core::mem::take(&mut circles[c].members);
                    let range = circles[c].range.clone();
                    let mut first = true;
                    for m in members {
                        if first {
                            circles[c].members.push(m);
                            first = false;
                        } else {
                            circles.push(Circle { members: vec![m], range: range.clone(), top: false });
                            circle_of.insert(m, circles.len() - 1);
                        }
                    }
                }
            }
        }
    }
}

/// Topological order, used circles first. On a cycle, returns the circles
/// left unordered that hold more than one node.
fn order_circles(g: &DependencyGraph, circles: &[Circle], circle_of: &BTreeMap<Node, usize>) -> core::result::Result<Vec<usize>, Vec<usize>> {
    let n = circles.len();
    let mut needs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for e in &g.edges {
        let (p, c) = (circle_of[&e.parent], circle_of[&Node::Aux(e.child)]);
        if p != c {
            needs[p].insert(c);
        }
    }
    let mut done = vec![false; n];
    let mut order = Vec::new();
    while order.len() < n {
        let Some(c) = (0..n).rev().find(|&c| !done[c] && needs[c].iter().all(|&d| done[d])) else {
            let stuck: Vec<usize> = (0..n).filter(|&c| !done[c] && circles[c].members.len() > 1).collect();
            if stuck.is_empty() {
                unreachable!("single nodes follow the acyclic dependency graph");
            }
            return Err(stuck);
        };
        done[c] = true;
        order.push(c);
    }
    Ok(order)
}

/// Where a circle's loops are inserted. Position `p` lies inside the
/// outermost `p` loops of the nest, before loop `p + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Computed in the innermost body next to the statements.
    Main,
    /// Full loops over the circle's remaining levels at a position.
    Dump(usize),
    /// A prefetch loop at `p` and a body at `p + 1` running ahead of the
    /// nest's loop `p + 1` by `lead` iterations, storing `extent` rows.
    Pipeline { at: usize, lead: i64, extent: i64 },
}

impl Placement {
    /// Deepest position at which the circle is computed.
    fn last(self, depth: usize) -> usize {
        match self {
            Placement::Main => depth,
            Placement::Dump(p) => p,
            Placement::Pipeline { at, .. } => at + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DimKind {
    Full(Range),
    /// A rotating buffer of `extent` rows indexed modulo `extent`.
    Rotate(i64),
}

/// How an auxiliary array is stored in the generated code.
#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// Replaced by its expression at its only use.
    Inlined,
    Scalar(String),
    /// Dimensions by level, innermost level first.
    Array(Vec<(usize, DimKind)>),
}

/// Generated program and the decisions behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub program: Program,
    pub graph: DependencyGraph,
    /// Circles in computation order, the statements' circle last.
    pub circles: Vec<Circle>,
    pub placements: Vec<Placement>,
    pub storage: BTreeMap<String, Storage>,
}

impl Generated {
    /// Total number of auxiliary elements stored, for the given sizes.
    pub fn aux_elements(&self, sizes: &BTreeMap<String, i64>) -> Option<i64> {
        let mut total = 0;
        for s in self.storage.values() {
            total += match s {
                Storage::Inlined => 0,
                Storage::Scalar(_) => 1,
                Storage::Array(dims) => {
                    let mut n = 1;
                    for (_, d) in dims {
                        n *= match d {
                            DimKind::Full((lo, hi)) => (hi.eval(sizes)? - lo.eval(sizes)? + 1).max(0),
                            DimKind::Rotate(e) => *e,
                        };
                    }
                    n
                }
            };
        }
        Some(total)
    }
}

fn diff(a: &LinExpr, b: &LinExpr) -> Result<i64> {
    a.const_diff(b)
        .ok_or_else(|| Error::new(ErrorKind::IncomparableBounds, format!("cannot compare bounds {} and {}", a, b)))
}

/// Chooses the insert position of every circle, users before used circles.
fn place(g: &DependencyGraph, circles: &[Circle]) -> Result<Vec<Placement>> {
    let depth = g.loops.len();
    let circle_of: BTreeMap<usize, usize> =
        circles.iter().enumerate().flat_map(|(c, x)| x.aux().map(move |k| (k, c))).collect();
    let node_circle = |n: Node| match n {
        Node::Statement(_) => circles.iter().position(|c| c.top).unwrap(),
        Node::Aux(k) => circle_of[&k],
    };
    let mut placement: Vec<Option<Placement>> = vec![None; circles.len()];
    for c in (0..circles.len()).rev() {
        if circles[c].top {
            placement[c] = Some(Placement::Main);
            continue;
        }
        let edges: Vec<&Edge> = circles[c]
            .aux()
            .flat_map(|k| g.parents(k))
            .filter(|e| node_circle(e.parent) != c)
            .collect();
        let users: Vec<Placement> = edges.iter().map(|e| placement[node_circle(e.parent)].expect("users placed first")).collect();
        let range = &circles[c].range;
        let mut p = 0;
        let chosen = loop {
            if p + 1 >= depth || !range.contains_key(&(p + 1)) || !users.iter().all(|u| u.last(depth) > p) {
                break Placement::Dump(p);
            }
            let level = p + 1;
            let header = &g.loops[p];
            let (lo, hi) = &range[&level];
            let same = *lo == header.lo && *hi == header.hi;
            let zero = edges.iter().all(|e| {
                let levels = &g.aux[e.child].levels;
                levels.iter().zip(&e.offsets).all(|(l, o)| *l != level || *o == 0)
            });
            let user_pipelined = users.iter().any(|u| matches!(u, Placement::Pipeline { at, .. } if *at == p));
            if same && zero && !user_pipelined {
                p += 1;
                continue;
            }
            let lead = diff(hi, &header.hi)?;
            let omin = diff(lo, &header.lo)?;
            break Placement::Pipeline { at: p, lead, extent: lead - omin + 1 };
        };
        placement[c] = Some(chosen);
    }
    Ok(placement.into_iter().map(|p| p.unwrap()).collect())
}

struct Emitter<'a> {
    g: &'a DependencyGraph,
    storage: &'a BTreeMap<String, Storage>,
}

impl Emitter<'_> {
    fn render(&self, r: &ArrayRef) -> Access {
        match self.storage.get(&r.name) {
            Some(Storage::Scalar(n)) => Access::scalar(n),
            Some(Storage::Array(dims)) => Access {
                name: r.name.clone(),
                subscripts: dims
                    .iter()
                    .map(|(level, kind)| {
                        let offset = r.subs.iter().find(|s| s.level == *level).map_or(0, |s| s.offset);
                        let var = self.g.loops[level - 1].var.clone();
                        match kind {
                            DimKind::Full(_) => Subscript::Affine { coef: 1, var: Some(var), offset },
                            DimKind::Rotate(extent) => Subscript::Rotate { var, offset, extent: *extent },
                        }
                    })
                    .collect(),
            },
            _ => ref_to_access(r, &self.g.loops),
        }
    }

    fn value(&self, e: &Expr) -> ast::Expr {
        match to_ast(e, &mut |r| ast::Expr::Ref(self.render(r))).parenthesize() {
            ast::Expr::Paren(x) => *x,
            x => x,
        }
    }

    /// Assignment of auxiliary array `k`, computing the element `lead`
    /// iterations ahead at `level` when shifted.
    fn aux_assign(&self, k: usize, shift: Option<(usize, i64)>) -> Item {
        let a = &self.g.aux[k];
        let mut e = a.expr.clone();
        let mut offsets = vec![0; a.levels.len()];
        if let Some((level, lead)) = shift {
            if let Some(pos) = a.levels.iter().position(|l| *l == level) {
                offsets[pos] = lead;
            }
            shift_expr(&mut e, &[level], &[-lead]);
        }
        Item::Assign(Assign { target: self.render(&a.reference(&offsets)), value: self.value(&e) })
    }

    /// Wraps `body` in loops over the levels of `range` deeper than `from`.
    fn loops(&self, range: &BTreeMap<usize, Range>, from: usize, body: Vec<Item>) -> Vec<Item> {
        let mut items = body;
        for (&level, (lo, hi)) in range.iter().rev() {
            if level <= from {
                break;
            }
            items = vec![Item::Loop(Loop {
                var: self.g.loops[level - 1].var.clone(),
                lo: lo.clone(),
                hi: hi.clone(),
                prefetch: false,
                body: items,
            })];
        }
        items
    }
}

fn mentions(s: &Subscript, var: &str) -> bool {
    match s {
        Subscript::Affine { var: Some(v), coef, .. } => *coef != 0 && v == var,
        Subscript::Rotate { var: v, .. } => v == var,
        _ => false,
    }
}

fn collect_assigns<'a>(items: &'a [Item], out: &mut Vec<&'a Assign>) {
    for it in items {
        match it {
            Item::Assign(a) => out.push(a),
            Item::Loop(l) => collect_assigns(&l.body, out),
        }
    }
}

/// Two sibling loops over `var` can run as one when every value the second
/// reads from the first is produced in the same iteration.
fn fusable(first: &[Item], second: &[Item], var: &str) -> bool {
    let (mut w, mut r) = (Vec::new(), Vec::new());
    collect_assigns(first, &mut w);
    collect_assigns(second, &mut r);
    r.iter().all(|a| {
        let mut ok = true;
        a.value.visit_refs(&mut |x| {
            for t in w.iter().filter(|t| t.target.name == x.name) {
                let same = t.target.subscripts.iter().zip(&x.subscripts).all(|(ws, rs)| {
                    !(mentions(ws, var) || mentions(rs, var)) || ws == rs
                });
                ok &= same;
            }
        });
        ok
    })
}

/// Fuses adjacent precompute loops with identical headers.
pub fn fuse(items: Vec<Item>) -> Vec<Item> {
    let mut out: Vec<Item> = Vec::new();
    for it in items {
        if let (Some(Item::Loop(prev)), Item::Loop(next)) = (out.last_mut(), &it) {
            if !prev.prefetch
                && !next.prefetch
                && prev.var == next.var
                && prev.lo == next.lo
                && prev.hi == next.hi
                && fusable(&prev.body, &next.body, &prev.var)
            {
                let Item::Loop(next) = it else { unreachable!() };
                let mut body = core::mem::take(&mut prev.body);
                body.extend(next.body);
                prev.body = fuse(body);
                continue;
            }
        }
        out.push(it);
    }
    out
}

/// Emits the optimized program. Without `contract`, every auxiliary array
/// is stored in full and computed before the nest.
pub fn generate(result: &TransformResult, contract: bool) -> Result<Generated> {
    let mut g = DependencyGraph::build(result)?;
    let inlined = if contract { g.inline_single_uses()? } else { Vec::new() };
    let circles = range_circles(&g, contract)?;
    let depth = g.loops.len();
    let placements = if contract {
        place(&g, &circles)?
    } else {
        circles.iter().map(|c| if c.top { Placement::Main } else { Placement::Dump(0) }).collect()
    };

    let mut storage: BTreeMap<String, Storage> = BTreeMap::new();
    for k in inlined {
        storage.insert(g.aux[k].name.clone(), Storage::Inlined);
    }
    for (c, circle) in circles.iter().enumerate() {
        for k in circle.aux() {
            let a = &g.aux[k];
            let own = contract && g.parents(k).all(|e| circles.iter().position(|x| x.members.contains(&e.parent)) == Some(c));
            let s = if own {
                let mut name = a.name.clone();
                for &l in a.levels.iter().rev() {
                    name.push('_');
                    name.push_str(&g.loops[l - 1].var);
                }
                Storage::Scalar(name)
            } else {
                let dims = a
                    .levels
                    .iter()
                    .rev()
                    .filter_map(|&l| {
                        let full = DimKind::Full(circle.range[&l].clone());
                        match placements[c] {
                            Placement::Dump(p) if l <= p => None,
                            Placement::Pipeline { at, extent, .. } if l == at + 1 => Some((l, DimKind::Rotate(extent))),
                            Placement::Pipeline { at, .. } if l <= at => None,
                            _ => Some((l, full)),
                        }
                    })
                    .collect();
                Storage::Array(dims)
            };
            storage.insert(a.name.clone(), s);
        }
    }

    let em = Emitter { g: &g, storage: &storage };
    let mut positions: Vec<Vec<Item>> = vec![Vec::new(); depth + 1];
    for (c, circle) in circles.iter().enumerate() {
        match placements[c] {
            Placement::Main => {
                for k in circle.aux() {
                    positions[depth].push(em.aux_assign(k, None));
                }
            }
            Placement::Dump(p) => {
                let body = circle.aux().map(|k| em.aux_assign(k, None)).collect();
                positions[p].extend(em.loops(&circle.range, p, body));
            }
            Placement::Pipeline { at, lead, .. } => {
                let level = at + 1;
                let header = &g.loops[at];
                let body = circle.aux().map(|k| em.aux_assign(k, None)).collect();
                positions[at].push(Item::Loop(Loop {
                    var: header.var.clone(),
                    lo: circle.range[&level].0.clone(),
                    hi: header.lo.offset(lead - 1),
                    prefetch: true,
                    body: em.loops(&circle.range, level, body),
                }));
                let body = circle.aux().map(|k| em.aux_assign(k, Some((level, lead)))).collect();
                positions[level].extend(em.loops(&circle.range, level, body));
            }
        }
    }
    for s in &g.statements {
        positions[depth].push(Item::Assign(Assign { target: ref_to_access(&s.target, &g.loops), value: em.value(&s.expr) }));
    }
    let mut body: Vec<Item> = Vec::new();
    for p in (0..=depth).rev() {
        let mut items = if contract { fuse(core::mem::take(&mut positions[p])) } else { core::mem::take(&mut positions[p]) };
        if p < depth {
            let h = &g.loops[p];
            items.push(Item::Loop(Loop { var: h.var.clone(), lo: h.lo.clone(), hi: h.hi.clone(), prefetch: false, body }));
        } else {
            items.extend(body);
        }
        body = items;
    }

    let mut decls: Vec<Decl> = result.nest.decls.clone();
    for a in &g.aux {
        match &storage[&a.name] {
            Storage::Inlined => {}
            Storage::Scalar(n) => decls.push(Decl::Real { name: n.clone(), dims: Vec::new() }),
            Storage::Array(dims) => decls.push(Decl::Real {
                name: a.name.clone(),
                dims: dims
                    .iter()
                    .map(|(_, d)| match d {
                        DimKind::Full((lo, hi)) => Dim { lo: lo.clone(), hi: hi.clone() },
                        DimKind::Rotate(e) => Dim { lo: LinExpr::constant(0), hi: LinExpr::constant(e - 1) },
                    })
                    .collect(),
            }),
        }
    }
    Ok(Generated { program: Program { decls, body }, graph: g, circles, placements, storage })
}
