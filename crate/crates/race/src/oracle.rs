//! Reference interpreter and randomized equivalence checking.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use race_core::ast::{BinOp, Decl, Expr, Item, LinExpr, Program, Subscript};
use serde::Serialize;
use thiserror::Error;

/// A run-time error of the interpreter. `at` lists the loop indices of the
/// failing iteration, outermost first.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Fault {
    #[error("no value bound for `{0}`")]
    Unbound(String),
    #[error("`{0}` is not declared")]
    Undeclared(String),
    #[error("{array}{index:?} is outside the declared bounds at {at:?}")]
    OutOfBounds { array: String, index: Vec<i64>, at: Vec<(String, i64)> },
    #[error("{array}{index:?} is read before it is written at {at:?}")]
    ReadBeforeWrite { array: String, index: Vec<i64>, at: Vec<(String, i64)> },
    #[error("division by zero at {at:?}")]
    DivisionByZero { at: Vec<(String, i64)> },
}

/// Storage of one declared name. Scalars have no dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub bounds: Vec<(i64, i64)>,
    pub data: Vec<f64>,
    pub written: Vec<bool>,
}

impl Grid {
    fn new(bounds: Vec<(i64, i64)>) -> Grid {
        let n = bounds.iter().map(|(lo, hi)| (hi - lo + 1).max(0) as usize).product();
        Grid { bounds, data: vec![f64::NAN; n], written: vec![false; n] }
    }

    fn offset(&self, index: &[i64]) -> Option<usize> {
        let mut off = 0usize;
        for (&i, &(lo, hi)) in index.iter().zip(&self.bounds) {
            if i < lo || i > hi {
                return None;
            }
            off = off * (hi - lo + 1) as usize + (i - lo) as usize;
        }
        Some(off)
    }

    pub fn get(&self, index: &[i64]) -> Option<f64> {
        self.offset(index).map(|o| self.data[o])
    }

    /// Every index of the grid in storage order.
    pub fn indices(&self) -> Vec<Vec<i64>> {
        let mut out = vec![Vec::new()];
        for &(lo, hi) in &self.bounds {
            out = out.into_iter().flat_map(|p| (lo..=hi).map(move |i| [p.clone(), vec![i]].concat())).collect();
        }
        out
    }
}

/// Values of sizes and of every declared name.
#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    pub sizes: BTreeMap<String, i64>,
    pub grids: BTreeMap<String, Grid>,
}

impl Env {
    /// Allocates every declaration of `p`, filled with NaN.
    pub fn new(p: &Program, sizes: &BTreeMap<String, i64>) -> Result<Env, Fault> {
        let mut grids = BTreeMap::new();
        for d in &p.decls {
            let bounds = match d {
                Decl::Param { .. } => Vec::new(),
                Decl::Real { dims, .. } => {
                    let mut b = Vec::new();
                    for dim in dims {
                        b.push((eval_size(&dim.lo, sizes)?, eval_size(&dim.hi, sizes)?));
                    }
                    b
                }
            };
            grids.insert(d.name().to_string(), Grid::new(bounds));
        }
        Ok(Env { sizes: sizes.clone(), grids })
    }

    /// Sets every element of `name` to a uniform value in [-1, 1].
    pub fn randomize(&mut self, name: &str, rng: &mut impl Rng) {
        if let Some(g) = self.grids.get_mut(name) {
            for v in g.data.iter_mut() {
                *v = rng.gen_range(-1.0..=1.0);
            }
        }
    }
}

fn eval_size(e: &LinExpr, sizes: &BTreeMap<String, i64>) -> Result<i64, Fault> {
    let mut v = e.constant;
    for (k, c) in &e.terms {
        v += c * sizes.get(k).ok_or_else(|| Fault::Unbound(k.clone()))?;
    }
    Ok(v)
}

// Programs are compiled to a slot-indexed form once per run so that the
// inner loops do no name lookups.

#[derive(Debug)]
enum CSub {
    Affine { coef: i64, slot: Option<usize>, offset: i64 },
    Rotate { slot: usize, offset: i64, extent: i64 },
}

#[derive(Debug)]
struct CAccess {
    grid: usize,
    subs: Vec<CSub>,
}

#[derive(Debug)]
enum CExpr {
    Num(f64),
    Load(CAccess),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Call(fn(f64) -> f64, Box<CExpr>),
}

#[derive(Debug)]
struct CLin {
    constant: i64,
    terms: Vec<(usize, i64)>,
}

#[derive(Debug)]
enum CItem {
    Loop { slot: usize, lo: CLin, hi: CLin, body: Vec<CItem> },
    Assign { target: CAccess, value: CExpr },
}

struct Compiler<'a> {
    names: &'a [String],
    sizes: &'a BTreeMap<String, i64>,
    vars: Vec<String>,
}

fn intrinsic(name: &str) -> Option<fn(f64) -> f64> {
    Some(match name.to_ascii_lowercase().as_str() {
        "sin" => f64::sin,
        "cos" => f64::cos,
        "tan" => f64::tan,
        "exp" => f64::exp,
        "log" => f64::ln,
        "sqrt" => f64::sqrt,
        "abs" => f64::abs,
        _ => return None,
    })
}

impl Compiler<'_> {
    fn slot(&self, var: &str) -> Option<usize> {
        self.vars.iter().rposition(|v| v == var)
    }

    fn lin(&self, e: &LinExpr) -> Result<CLin, Fault> {
        let mut out = CLin { constant: e.constant, terms: Vec::new() };
        for (k, c) in &e.terms {
            match self.slot(k) {
                Some(s) => out.terms.push((s, *c)),
                None => out.constant += c * self.sizes.get(k).ok_or_else(|| Fault::Unbound(k.clone()))?,
            }
        }
        Ok(out)
    }

    fn access(&self, a: &race_core::ast::Access) -> Result<CAccess, Fault> {
        let grid = self.names.iter().position(|n| *n == a.name).ok_or_else(|| Fault::Undeclared(a.name.clone()))?;
        let mut subs = Vec::new();
        for s in &a.subscripts {
            subs.push(match s {
                Subscript::Affine { coef, var, offset } => match var.as_deref().filter(|_| *coef != 0) {
                    None => CSub::Affine { coef: 0, slot: None, offset: *offset },
                    Some(v) => match self.slot(v) {
                        Some(slot) => CSub::Affine { coef: *coef, slot: Some(slot), offset: *offset },
                        None => {
                            let size = self.sizes.get(v).ok_or_else(|| Fault::Unbound(v.to_string()))?;
                            CSub::Affine { coef: 0, slot: None, offset: coef * size + offset }
                        }
                    },
                },
                Subscript::Rotate { var, offset, extent } => CSub::Rotate {
                    slot: self.slot(var).ok_or_else(|| Fault::Unbound(var.clone()))?,
                    offset: *offset,
                    extent: *extent,
                },
            });
        }
        Ok(CAccess { grid, subs })
    }

    fn expr(&self, e: &Expr) -> Result<CExpr, Fault> {
        Ok(match e {
            Expr::Num(v) => CExpr::Num(*v),
            Expr::Ref(a) => CExpr::Load(self.access(a)?),
            Expr::Neg(a) => CExpr::Neg(Box::new(self.expr(a)?)),
            Expr::Paren(a) => self.expr(a)?,
            Expr::Binary(op, l, r) => CExpr::Bin(*op, Box::new(self.expr(l)?), Box::new(self.expr(r)?)),
            Expr::Call(f, a) => CExpr::Call(intrinsic(f).ok_or_else(|| Fault::Undeclared(f.clone()))?, Box::new(self.expr(a)?)),
        })
    }

    fn items(&mut self, items: &[Item]) -> Result<Vec<CItem>, Fault> {
        let mut out = Vec::new();
        for it in items {
            out.push(match it {
                Item::Assign(a) => CItem::Assign { target: self.access(&a.target)?, value: self.expr(&a.value)? },
                Item::Loop(l) => {
                    let (lo, hi) = (self.lin(&l.lo)?, self.lin(&l.hi)?);
                    self.vars.push(l.var.clone());
                    let slot = self.vars.len() - 1;
                    let body = self.items(&l.body)?;
                    self.vars.pop();
                    CItem::Loop { slot, lo, hi, body }
                }
            });
        }
        Ok(out)
    }
}

struct Machine<'a> {
    names: &'a [String],
    grids: Vec<Grid>,
    tracked: Vec<bool>,
    vars: Vec<i64>,
    var_names: Vec<String>,
}

impl Machine<'_> {
    fn at(&self) -> Vec<(String, i64)> {
        self.var_names.iter().cloned().zip(self.vars.iter().copied()).collect()
    }

    fn index(&self, a: &CAccess) -> Vec<i64> {
        a.subs
            .iter()
            .map(|s| match *s {
                CSub::Affine { coef, slot: Some(slot), offset } => coef * self.vars[slot] + offset,
                CSub::Affine { offset, .. } => offset,
                CSub::Rotate { slot, offset, extent } => (self.vars[slot] + offset).rem_euclid(extent),
            })
            .collect()
    }

    fn locate(&self, a: &CAccess) -> Result<usize, Fault> {
        let index = self.index(a);
        self.grids[a.grid].offset(&index).ok_or_else(|| Fault::OutOfBounds {
            array: self.names[a.grid].clone(),
            index,
            at: self.at(),
        })
    }

    fn eval(&self, e: &CExpr) -> Result<f64, Fault> {
        Ok(match e {
            CExpr::Num(v) => *v,
            CExpr::Load(a) => {
                let o = self.locate(a)?;
                let g = &self.grids[a.grid];
                if self.tracked[a.grid] && !g.written[o] {
                    return Err(Fault::ReadBeforeWrite { array: self.names[a.grid].clone(), index: self.index(a), at: self.at() });
                }
                g.data[o]
            }
            CExpr::Neg(a) => -self.eval(a)?,
            CExpr::Call(f, a) => f(self.eval(a)?),
            CExpr::Bin(op, l, r) => {
                let (x, y) = (self.eval(l)?, self.eval(r)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(Fault::DivisionByZero { at: self.at() });
                        }
                        x / y
                    }
                }
            }
        })
    }

    fn lin(&self, l: &CLin) -> i64 {
        l.constant + l.terms.iter().map(|(s, c)| c * self.vars[*s]).sum::<i64>()
    }

    fn run(&mut self, items: &[CItem]) -> Result<(), Fault> {
        for it in items {
            match it {
                CItem::Assign { target, value } => {
                    let v = self.eval(value)?;
                    let o = self.locate(target)?;
                    let g = &mut self.grids[target.grid];
                    g.data[o] = v;
                    g.written[o] = true;
                }
                CItem::Loop { slot, lo, hi, body } => {
                    let (lo, hi) = (self.lin(lo), self.lin(hi));
                    debug_assert_eq!(*slot, self.vars.len());
                    self.vars.push(lo);
                    for v in lo..=hi {
                        self.vars[*slot] = v;
                        self.run(body)?;
                    }
                    self.vars.pop();
                }
            }
        }
        Ok(())
    }
}

fn loop_names(items: &[Item], depth: usize, out: &mut Vec<String>) {
    for it in items {
        if let Item::Loop(l) = it {
            if out.len() <= depth {
                out.push(l.var.clone());
            }
            loop_names(&l.body, depth + 1, out);
        }
    }
}

/// Runs `p` on `env`. Reading an element of a name in `tracked` before
/// the program wrote it is a fault.
pub fn interpret(p: &Program, env: &mut Env, tracked: &BTreeSet<String>) -> Result<(), Fault> {
    let names: Vec<String> = env.grids.keys().cloned().collect();
    let mut c = Compiler { names: &names, sizes: &env.sizes, vars: Vec::new() };
    let code = c.items(&p.body)?;
    let grids: Vec<Grid> = names.iter().map(|n| env.grids.remove(n).unwrap()).collect();
    let tracked = names.iter().map(|n| tracked.contains(n)).collect();
    let mut var_names = Vec::new();
    loop_names(&p.body, 0, &mut var_names);
    let mut m = Machine { names: &names, grids, tracked, vars: Vec::new(), var_names };
    let result = m.run(&code);
    for (n, g) in names.iter().zip(m.grids) {
        let n = n.clone();
        env.grids.insert(n, g);
    }
    result
}

/// One differing element.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub trial: usize,
    pub array: String,
    pub index: Vec<i64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// A trial in which a program faulted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultRecord {
    pub trial: usize,
    /// `original` or `transformed`.
    pub program: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckReport {
    pub trials: usize,
    pub max_rel_error: f64,
    /// At most one entry per trial: the first differing element.
    pub failures: Vec<Failure>,
    pub faults: Vec<FaultRecord>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.faults.is_empty()
    }
}

/// Settings of [`check_equivalence`].
#[derive(Debug, Clone, PartialEq)]
pub struct CheckConfig {
    pub trials: usize,
    /// 0 asks for bit-identical results.
    pub tol: f64,
    pub seed: u64,
    /// Fixed sizes. Unbound sizes cycle through `cycle`.
    pub sizes: BTreeMap<String, i64>,
    pub cycle: Vec<i64>,
}

impl CheckConfig {
    pub fn new(trials: usize, tol: f64, seed: u64) -> CheckConfig {
        CheckConfig { trials, tol, seed, sizes: BTreeMap::new(), cycle: vec![5, 8, 13] }
    }
}

/// `|a - b| / max(|a|, |b|, 1)`, 0 when both are NaN.
pub fn rel_error(a: f64, b: f64) -> f64 {
    if a.is_nan() && b.is_nan() {
        return 0.0;
    }
    let e = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

/// Sizes for one trial: fixed bindings plus the cycled values, shifted per
/// size name so that extents differ within a trial.
pub fn trial_sizes(p: &Program, cfg: &CheckConfig, trial: usize) -> BTreeMap<String, i64> {
    let mut sizes = cfg.sizes.clone();
    for (q, name) in race_core::frontend::size_params(p).into_keys().enumerate() {
        sizes.entry(name).or_insert(cfg.cycle[(trial + q) % cfg.cycle.len()]);
    }
    sizes
}

/// Runs both programs on the same random inputs and compares every name
/// both declare with the same bounds. Names only `transformed` declares are its auxiliary
/// storage; reading them before writing is a fault.
pub fn check_equivalence(original: &Program, transformed: &Program, cfg: &CheckConfig) -> CheckReport {
    let mut report = CheckReport { trials: cfg.trials, max_rel_error: 0.0, failures: Vec::new(), faults: Vec::new() };
    let own: BTreeSet<String> = original.decls.iter().map(|d| d.name().to_string()).collect();
    let aux: BTreeSet<String> =
        transformed.decls.iter().map(|d| d.name().to_string()).filter(|n| !own.contains(n)).collect();
    for trial in 0..cfg.trials {
        let sizes = trial_sizes(original, cfg, trial);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(trial as u64));
        let fault = |program: &str, f: Fault| FaultRecord { trial, program: program.into(), message: f.to_string() };
        let mut a = match Env::new(original, &sizes) {
            Ok(e) => e,
            Err(f) => {
                report.faults.push(fault("original", f));
                continue;
            }
        };
        for d in &original.decls {
            a.randomize(d.name(), &mut rng);
        }
        let mut b = match Env::new(transformed, &sizes) {
            Ok(e) => e,
            Err(f) => {
                report.faults.push(fault("transformed", f));
                continue;
            }
        };
        for (name, g) in &a.grids {
            if let Some(h) = b.grids.get_mut(name) {
                if h.bounds == g.bounds {
                    h.data.clone_from(&g.data);
                }
            }
        }
        if let Err(f) = interpret(original, &mut a, &BTreeSet::new()) {
            report.faults.push(fault("original", f));
            continue;
        }
        if let Err(f) = interpret(transformed, &mut b, &aux) {
            report.faults.push(fault("transformed", f));
            continue;
        }
        let mut first: Option<Failure> = None;
        for (name, g) in &a.grids {
            let Some(h) = b.grids.get(name).filter(|h| h.bounds == g.bounds) else { continue };
            for (k, (&x, &y)) in g.data.iter().zip(&h.data).enumerate() {
                let err = rel_error(x, y);
                report.max_rel_error = report.max_rel_error.max(err);
                let bad = if cfg.tol == 0.0 { x.to_bits() != y.to_bits() } else { err > cfg.tol };
                if bad && first.is_none() {
                    first = Some(Failure { trial, array: name.clone(), index: g.indices()[k].clone(), lhs: x, rhs: y });
                }
            }
        }
        report.failures.extend(first);
    }
    report
}
