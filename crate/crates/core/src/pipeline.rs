//! The whole optimization: parse, detect, generate, count.

use alloc::string::String;

use crate::analysis::{count_static_ops, StaticOps};
use crate::ast::Program;
use crate::binary_detect::{detect_binary, TransformResult};
use crate::codegen::{generate, Generated, Storage};
use crate::error::Result;
use crate::frontend::{emit, parse_source, SourceProgram};
use crate::ir::{lower, normalize_nest_calls};
use crate::nary_detect::{detect_nary, NaryOptions};

pub use crate::nary_detect::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    /// 0 keeps the evaluation order of every expression. 1 to 3 regroup
    /// sums and products, each level more freely.
    pub reassoc: u8,
    pub strategy: Strategy,
    /// Largest auxiliary graph searched exactly.
    pub mis_budget: usize,
    pub contract: bool,
    /// Turns subtraction and division into inverted operands of sums and
    /// products before regrouping.
    pub normalize_sub_div: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { reassoc: 3, strategy: Strategy::Auto, mis_budget: 40, contract: true, normalize_sub_div: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub source: SourceProgram,
    pub original: Program,
    pub result: TransformResult,
    pub generated: Generated,
    pub before: StaticOps,
    pub after: StaticOps,
}

impl Outcome {
    pub fn text(&self) -> String {
        emit(&self.generated.program)
    }
}

pub fn optimize(src: &str, opts: &Options) -> Result<Outcome> {
    let source = parse_source(src)?;
    let original = source.to_program();
    let mut nest = lower(&source)?;
    normalize_nest_calls(&mut nest);
    let result = if opts.reassoc == 0 {
        detect_binary(nest)
    } else {
        detect_nary(
            nest,
            NaryOptions {
                level: opts.reassoc.min(3),
                strategy: opts.strategy,
                budget: opts.mis_budget,
                normalize_sub_div: opts.normalize_sub_div,
            },
        )?
    };
    let generated = generate(&result, opts.contract)?;
    let before = count_static_ops(&original, |_| false);
    let storage = &generated.storage;
    let after = count_static_ops(&generated.program, |name| {
        storage.contains_key(name) || storage.values().any(|s| matches!(s, Storage::Scalar(n) if n == name))
    });
    Ok(Outcome { source, original, result, generated, before, after })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    #[test]
    fn output_parses_back() {
        let src = "REAL a(0:n), b(0:n), o(n)\nDO i=1,n\no(i) = (a(i)+b(i))*(a(i-1)+b(i-1))\nENDDO\n";
        for reassoc in 0..=3 {
            let out = optimize(src, &Options { reassoc, ..Options::default() }).unwrap();
            assert_eq!(out.result.aux.len(), 1);
            assert_eq!(parse_program(&out.text()).unwrap(), out.generated.program);
            assert_eq!(out.before.total().add, 2);
            assert_eq!(out.after.total().add, 1);
        }
    }

    #[test]
    fn exact_strategy_reports_budget() {
        let src = "REAL a(0:n+9), o(n)\nDO i=1,n\no(i) = a(i)+a(i+1)+a(i+2)+a(i+3)+a(i+4)+a(i+5)+a(i+6)+a(i+7)+a(i+8)\nENDDO\n";
        let opts = Options { strategy: Strategy::Exact, mis_budget: 4, ..Options::default() };
        assert_eq!(optimize(src, &opts).unwrap_err().kind, crate::ErrorKind::BudgetExceeded);
        assert!(optimize(src, &Options { mis_budget: 4, ..Options::default() }).is_ok());
    }
}
