use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use morrey_cli::config::{CheckId, Overrides, RunConfig, TruncationOverride, OUT_DIR_ENV};
use morrey_cli::{exit, oracle, report, suite};

/// Empirical verification of Morrey-space inequalities on dyadic step functions.
///
/// Configuration precedence: flags > config file > defaults.
#[derive(Parser)]
#[command(name = "morrey", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured checks and write report.csv / summary.json.
    Verify(RunArgs),
    /// Run the parameter checks over the Cartesian grid in the config's `sweep` field.
    Sweep(RunArgs),
    /// Compare production values with closed forms, refined grids and exhaustive suprema.
    Oracle(RunArgs),
    /// Summarize the runs found in a directory.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    j0: Option<i32>,
    #[arg(long)]
    j_max: Option<i32>,
    #[arg(long)]
    dimension: Option<usize>,
    /// Comma-separated check ids.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Output directory (default: the config's out_dir, then $MORREY_OUT_DIR, then ./morrey-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lowest generation of the majorant sums.
    #[arg(long, requires = "j_max_sum")]
    j_min: Option<i32>,
    /// Highest generation of the majorant sums.
    #[arg(long, requires = "j_min")]
    j_max_sum: Option<i32>,
    /// Skip the resolution and truncation stability reruns.
    #[arg(long)]
    no_stability: bool,
}

enum Failure {
    Config(String),
    Invariant,
}

fn load(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
    let checks = match &args.checks {
        None => None,
        Some(list) => Some(
            list.iter()
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<CheckId>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Config(e.to_string()))?,
        ),
    };
    let truncation = match (args.j_min, args.j_max_sum) {
        (Some(j_min), Some(j_max_sum)) => Some(TruncationOverride { j_min, j_max_sum }),
        _ => None,
    };
    cfg.apply(&Overrides {
        seed: args.seed,
        j0: args.j0,
        j_max: args.j_max,
        dimension: args.dimension,
        checks,
        out_dir: args.out.clone(),
        truncation,
        no_stability: args.no_stability,
    });
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn emit(cfg: &RunConfig, stem: &str, command: &str, outcome: &suite::Outcome) -> Result<(), Failure> {
    let dir = cfg.resolved_out_dir();
    let (csv, json) = report::write_outcome(&dir, stem, command, cfg.seed, outcome)
        .map_err(|e| Failure::Config(format!("cannot write to {}: {e}", dir.display())))?;
    eprintln!("wrote {} and {}", csv.display(), json.display());
    for s in &outcome.summaries {
        let k = &s.constant;
        eprintln!("{:<64} max {:.6e}  median {:.6e}", k.check_id, k.max, k.median);
    }
    if outcome.passed() {
        Ok(())
    } else {
        for f in &outcome.failures {
            eprintln!("invariant violated: {f}");
        }
        Err(Failure::Invariant)
    }
}

fn verify(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(args)?;
    let outcome = suite::run_suite(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
    emit(&cfg, "report", "verify", &outcome)
}

fn sweep(args: &RunArgs) -> Result<(), Failure> {
    let mut cfg = load(args)?;
    let grid = cfg.sweep.clone().ok_or_else(|| Failure::Config("sweep needs a `sweep` field in the config".into()))?;
    cfg.params = grid.tuples(cfg.dimension);
    if cfg.params.is_empty() {
        return Err(Failure::Config("the sweep grid contains no admissible parameter tuple".into()));
    }
    let parametric = [
        CheckId::Thm12,
        CheckId::Thm13,
        CheckId::Thm14,
        CheckId::Lem25,
        CheckId::Lem26,
        CheckId::Hedberg,
        CheckId::Scaling,
    ];
    cfg.checks.retain(|c| parametric.contains(c));
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    // a grid point need not fall into every regime; only report what applies
    let mut outcome = suite::Outcome::default();
    for c in cfg.checks.clone() {
        let one = RunConfig { checks: vec![c], ..cfg.clone() };
        let part = suite::run_suite(&one).map_err(|e| Failure::Config(e.to_string()))?;
        if part.reports.is_empty() && !part.failures.is_empty() {
            eprintln!("{c}: no grid point in this regime");
            continue;
        }
        outcome.reports.extend(part.reports);
        outcome.summaries.extend(part.summaries);
        outcome.failures.extend(part.failures);
    }
    outcome.sort();
    emit(&cfg, "sweep", "sweep", &outcome)
}

fn run_oracle(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(args)?;
    let dir = cfg.resolved_out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    let outcome = oracle::run_oracle(&cfg, Some(&dir)).map_err(|e| Failure::Config(e.to_string()))?;
    emit(&cfg, "oracle", "oracle", &outcome)
}

fn summarize(dir: &Path) -> Result<(), Failure> {
    let found = report::collect_summaries(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    if found.is_empty() {
        return Err(Failure::Config(format!("no summaries under {}", dir.display())));
    }
    for (path, s) in &found {
        print!("{}", report::render(path, s));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => verify(a),
        Command::Sweep(a) => sweep(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Report { dir } => summarize(dir),
    };
    let code = match result {
        Ok(()) => exit::SUCCESS,
        Err(Failure::Invariant) => exit::INVARIANT_VIOLATION,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            if msg.contains("out_dir") || msg.contains("cannot write") {
                eprintln!("hint: set --out or {OUT_DIR_ENV}");
            }
            exit::CONFIG_ERROR
        }
    };
    ExitCode::from(code as u8)
}
