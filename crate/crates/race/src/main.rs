use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use race::oracle::{check_equivalence, CheckConfig};
use race::report;
use race_core::{optimize, Options, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Exact,
    Heuristic,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

/// Eliminates redundant array computations across the iterations of a
/// loop nest.
#[derive(Debug, Parser)]
#[command(name = "race", version)]
struct Cli {
    /// Input program in the loop language.
    input: PathBuf,
    /// Reassociation level: 0 keeps evaluation order, 3 regroups most.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(0..=3))]
    reassoc: u8,
    /// How redundancies are chosen when regrouping.
    #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
    strategy: StrategyArg,
    /// Largest graph searched exactly.
    #[arg(long, default_value_t = 40)]
    mis_budget: usize,
    /// Keep every auxiliary array in full.
    #[arg(long)]
    no_contract: bool,
    /// Treat subtraction and division as inverted operands when regrouping.
    #[arg(long)]
    normalize_subdiv: bool,
    /// Compare input and output on random data: TRIALS,TOL. TOL 0 asks for
    /// identical bits.
    #[arg(long, value_parser = parse_check)]
    check: Option<(usize, f64)>,
    /// Seed of the random inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bind a size: name=value. Repeatable.
    #[arg(long, value_parser = parse_size)]
    size: Vec<(String, i64)>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
}

fn parse_check(s: &str) -> Result<(usize, f64), String> {
    let (t, tol) = s.split_once(',').ok_or("expected TRIALS,TOL")?;
    let t = t.trim().parse().map_err(|e| format!("trials: {}", e))?;
    let tol: f64 = tol.trim().parse().map_err(|e| format!("tolerance: {}", e))?;
    if tol < 0.0 || tol.is_nan() {
        return Err("tolerance must be at least 0".into());
    }
    Ok((t, tol))
}

fn parse_size(s: &str) -> Result<(String, i64), String> {
    let (n, v) = s.split_once('=').ok_or("expected name=value")?;
    let v: i64 = v.trim().parse().map_err(|e| format!("{}: {}", n, e))?;
    if v < 1 {
        return Err(format!("{} must be positive", n));
    }
    Ok((n.trim().to_string(), v))
}

/// `dir/stem.<middle>.<ext>` next to the input.
fn sibling(input: &Path, middle: &str, ext: &str) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    input.with_file_name(format!("{}.{}.{}", stem, middle, ext))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let src = match std::fs::read_to_string(&cli.input) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {}", cli.input.display(), e);
            return ExitCode::from(1);
        }
    };
    let opts = Options {
        reassoc: cli.reassoc,
        strategy: match cli.strategy {
            StrategyArg::Exact => Strategy::Exact,
            StrategyArg::Heuristic => Strategy::Heuristic,
            StrategyArg::Auto => Strategy::Auto,
        },
        mis_budget: cli.mis_budget,
        contract: !cli.no_contract,
        normalize_sub_div: cli.normalize_subdiv,
    };
    let out = match optimize(&src, &opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: {}", cli.input.display(), e);
            return ExitCode::from(1);
        }
    };
    let sizes: BTreeMap<String, i64> = cli.size.iter().cloned().collect();
    let check = cli.check.map(|(trials, tol)| {
        let mut cfg = CheckConfig::new(trials, tol, cli.seed);
        cfg.sizes = sizes.clone();
        check_equivalence(&out.original, &out.generated.program, &cfg)
    });
    let failed = check.as_ref().is_some_and(|c| !c.passed());
    let rep = report::build(&cli.input.display().to_string(), &out, &opts, &sizes, check);

    let ext = cli.input.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "loop".into());
    let code_path = sibling(&cli.input, "race", &ext);
    let (report_path, report_text) = match cli.report {
        ReportFormat::Json => (
            sibling(&cli.input, "report", "json"),
            serde_json::to_string_pretty(&rep).expect("report serializes") + "\n",
        ),
        ReportFormat::Text => (sibling(&cli.input, "report", "txt"), report::text(&rep)),
    };
    for (path, body) in [(&code_path, out.text()), (&report_path, report_text.clone())] {
        if let Err(e) = std::fs::write(path, body) {
            eprintln!("{}: {}", path.display(), e);
            return ExitCode::from(1);
        }
    }
    print!("{}", report::text(&rep));
    if failed {
        eprintln!("equivalence check failed");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
