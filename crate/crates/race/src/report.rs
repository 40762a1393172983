//! Run reports in JSON and text form.

use std::collections::BTreeMap;
use std::fmt::Write;

use race_core::analysis::profit;
use race_core::codegen::{DimKind, Storage};
use race_core::{Options, Outcome, Strategy};
use serde::Serialize;

use crate::oracle::CheckReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxEntry {
    pub id: String,
    pub cnt: u64,
    pub ops: u64,
    /// Bounds per level, outermost first, as written in the output.
    pub range: Vec<[String; 2]>,
    /// `inlined`, `scalar`, or the stored extents such as `1:nx x 0:1`.
    pub storage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub input: String,
    pub reassoc: u8,
    pub strategy: String,
    pub contract: bool,
    pub iterations: usize,
    pub eri_evaluations: u64,
    pub aux: Vec<AuxEntry>,
    /// Profit terms, present when every size is bound.
    pub ori: Option<i64>,
    pub aft: Option<i64>,
    pub profit: Option<i64>,
    /// Operator to `[before, after]` static counts.
    pub static_ops: BTreeMap<String, [u64; 2]>,
    /// Operator to `[main, precompute]` split of the after counts.
    pub static_ops_after: BTreeMap<String, [u64; 2]>,
    pub aux_elements: Option<i64>,
    pub check: Option<CheckReport>,
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Exact => "exact",
        Strategy::Heuristic => "heuristic",
        Strategy::Auto => "auto",
    }
}

fn storage_text(s: Option<&Storage>) -> String {
    match s {
        None => "none".into(),
        Some(Storage::Inlined) => "inlined".into(),
        Some(Storage::Scalar(n)) => format!("scalar {}", n),
        Some(Storage::Array(dims)) if dims.is_empty() => "scalar".into(),
        Some(Storage::Array(dims)) => dims
            .iter()
            .map(|(_, d)| match d {
                DimKind::Full((lo, hi)) => format!("{}:{}", lo, hi),
                DimKind::Rotate(e) => format!("0:{}", e - 1),
            })
            .collect::<Vec<_>>()
            .join(" x "),
    }
}

pub fn build(input: &str, out: &Outcome, opts: &Options, sizes: &BTreeMap<String, i64>, check: Option<CheckReport>) -> Report {
    let full = race_core::codegen::DependencyGraph::build(&out.result).ok();
    let p = profit(&out.result, sizes).ok();
    let aux = out
        .result
        .aux
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let range = full
                .as_ref()
                .and_then(|g| g.ranges.get(&k))
                .map(|r| r.values().map(|(lo, hi)| [lo.to_string(), hi.to_string()]).collect())
                .unwrap_or_default();
            let (cnt, ops) = match &p {
                Some(p) => (p.aux[k].cnt, p.aux[k].ops),
                None => {
                    let mut cnt = 0;
                    for s in &out.result.nest.statements {
                        s.expr.visit_refs(&mut |r| cnt += u64::from(r.name == a.name));
                    }
                    (cnt, race_core::analysis::expand_ops(a, &out.result.aux))
                }
            };
            AuxEntry { id: a.name.clone(), cnt, ops, range, storage: storage_text(out.generated.storage.get(&a.name)) }
        })
        .collect();
    let (b, a) = (out.before.total(), out.after.total());
    let static_ops = b.entries().iter().zip(a.entries()).map(|((k, x), (_, y))| (k.to_string(), [*x, y])).collect();
    let static_ops_after = out
        .after
        .main
        .entries()
        .iter()
        .zip(out.after.precompute.entries())
        .map(|((k, x), (_, y))| (k.to_string(), [*x, y]))
        .collect();
    Report {
        input: input.to_string(),
        reassoc: opts.reassoc,
        strategy: strategy_name(opts.strategy).into(),
        contract: opts.contract,
        iterations: out.result.iterations,
        eri_evaluations: out.result.eri_evaluations,
        aux,
        ori: p.as_ref().map(|p| p.ori),
        aft: p.as_ref().map(|p| p.aft),
        profit: p.as_ref().map(|p| p.profit),
        static_ops,
        static_ops_after,
        aux_elements: out.generated.aux_elements(sizes),
        check,
    }
}

pub fn text(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "input: {}", r.input);
    let _ = writeln!(s, "reassoc {} strategy {} contract {}", r.reassoc, r.strategy, if r.contract { "on" } else { "off" });
    let _ = writeln!(s, "iterations: {}", r.iterations);
    let _ = writeln!(s, "eri evaluations: {}", r.eri_evaluations);
    let _ = writeln!(s, "auxiliary arrays: {}", r.aux.len());
    for a in &r.aux {
        let range: Vec<String> = a.range.iter().map(|[lo, hi]| format!("[{},{}]", lo, hi)).collect();
        let _ = writeln!(s, "  {} cnt {} ops {} range {} storage {}", a.id, a.cnt, a.ops, range.concat(), a.storage);
    }
    let _ = writeln!(s, "static ops (before -> after):");
    for (k, [b, a]) in &r.static_ops {
        match r.static_ops_after.get(k) {
            Some([m, p]) if *p > 0 => {
                let _ = writeln!(s, "  {} {} -> {} (main {}, precompute {})", k, b, a, m, p);
            }
            _ => {
                let _ = writeln!(s, "  {} {} -> {}", k, b, a);
            }
        }
    }
    match (r.ori, r.aft, r.profit) {
        (Some(o), Some(a), Some(p)) => {
            let _ = writeln!(s, "profit: ori {} aft {} profit {}", o, a, p);
        }
        _ => {
            let _ = writeln!(s, "profit: sizes not bound");
        }
    }
    if let Some(n) = r.aux_elements {
        let _ = writeln!(s, "auxiliary elements: {}", n);
    }
    if let Some(c) = &r.check {
        let _ = writeln!(
            s,
            "check: {} over {} trials, max relative error {:e}",
            if c.passed() { "pass" } else { "FAIL" },
            c.trials,
            c.max_rel_error
        );
        for f in c.failures.iter().take(5) {
            let _ = writeln!(s, "  trial {}: {}{:?} {} vs {}", f.trial, f.array, f.index, f.lhs, f.rhs);
        }
        for f in c.faults.iter().take(5) {
            let _ = writeln!(s, "  trial {}: {} program: {}", f.trial, f.program, f.message);
        }
    }
    s
}
