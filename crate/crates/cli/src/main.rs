use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use spml_core::oracle::{reproduce_table, verify_theorem, TheoremId};
use spml_core::sim::{self, OutputFormat, ScenarioFile};
use spml_core::{Distribution, Outcome, Protocol, RuleKind, ScoringRuleSpec};

#[derive(Parser)]
#[command(
    name = "spml",
    version,
    about = "Scoring-rule prediction market simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regenerate a worked-example table and compare it with the reference values.
    Reproduce {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        example: u8,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Play a scenario file, settle it and write ledger, settlement and report.
    Run(RunArgs),
    /// Worst-case loss of the market maker for a list of epsilons.
    Wcl(WclArgs),
    /// Run the desk-scale check of a truthfulness or manipulability claim.
    Verify {
        #[arg(value_parser = parse_theorem)]
        theorem: TheoremId,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Realized outcome, 1-based; overrides the scenario.
    #[arg(long)]
    outcome: Option<usize>,
    /// Re-settle this ledger instead of playing the scenario.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Replaces the file's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct WclArgs {
    #[arg(long, value_enum, default_value_t = Rule::Log)]
    rule: Rule,
    /// Scale of the scoring rule.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 2)]
    outcomes: usize,
    /// Initial estimate as comma-separated probabilities; uniform by default.
    #[arg(long, value_delimiter = ',')]
    initial: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_protocol, default_value = "SRM")]
    protocol: Protocol,
    /// Number of paid reports for the per-agent bound.
    #[arg(long, default_value_t = 1)]
    agents: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    epsilon: Vec<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write `wcl.csv` or `wcl.json` here instead of standard output.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Log,
    Quadratic,
}

fn parse_theorem(s: &str) -> Result<TheoremId, String> {
    s.parse().map_err(|e: spml_core::Error| e.to_string())
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: spml_core::Error| e.to_string())
}

fn reproduce(example: u8, format: Option<Format>) -> Result<bool> {
    let table = reproduce_table(example)?;
    match format {
        Some(Format::Json) => println!("{}", serde_json::to_string_pretty(&table)?),
        _ => print!("{table}"),
    }
    let mismatches = table.mismatches();
    for m in &mismatches {
        eprintln!(
            "mismatch in {}: expected {:.4}, got {:.4}",
            m.what,
            m.expected as f64 / 1e4,
            m.actual as f64 / 1e4
        );
    }
    Ok(mismatches.is_empty())
}

fn run(args: RunArgs) -> Result<()> {
    let mut file = ScenarioFile::load(&args.scenario)
        .with_context(|| format!("loading {}", args.scenario.display()))?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    let format = args
        .format
        .map(OutputFormat::from)
        .unwrap_or(file.output.format);
    let outcome = args.outcome.map(Outcome::from_label).transpose()?;
    if let Some(ledger_path) = &args.ledger {
        let ledger = sim::read_ledger(ledger_path)
            .with_context(|| format!("reading {}", ledger_path.display()))?;
        let settlement = sim::resettle(&file, &ledger, outcome)?;
        let path = sim::write_settlement(&settlement, &args.out_dir, format)?;
        println!("maker loss {}", sim::fmt_float(settlement.maker_loss));
        println!("wrote {}", path.display());
        return Ok(());
    }
    let report = sim::run(&file, outcome)?;
    for line in &report.settlement.lines {
        println!(
            "agent {} seq {} payment {:.4}",
            line.basis.agent_id, line.basis.report_seq, line.payment
        );
    }
    println!(
        "outcome {} ({:?}); maker loss {:.4}",
        report.realized_outcome.label(),
        report.outcome_source,
        report.maker_loss
    );
    if let Some(v) = &report.verification {
        println!(
            "truthful payoff {:.4}; best deviation {:.4}; truthful is best: {}",
            v.truthful_payoff, v.best_deviation_payoff, v.truthful_is_best
        );
    }
    for path in sim::write_run(&report, &args.out_dir, format)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn wcl(args: WclArgs) -> Result<()> {
    let kind = match args.rule {
        Rule::Log => RuleKind::Logarithmic,
        Rule::Quadratic => RuleKind::Quadratic,
    };
    let rule = ScoringRuleSpec::new(kind, vec![0.0; args.outcomes], args.b)?;
    let initial = match args.initial {
        Some(p) => Distribution::new(p)?,
        None => Distribution::uniform(args.outcomes)?,
    };
    let rows = sim::wcl_curve(&rule, &initial, args.protocol, args.agents, &args.epsilon)?;
    let format = args.format.unwrap_or(Format::Csv);
    let mut body = Vec::new();
    match format {
        Format::Csv => sim::write_wcl_csv(&rows, &mut body)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut body, &rows)?;
            body.push(b'\n');
        }
    }
    match args.out_dir {
        Some(dir) => {
            let name = match format {
                Format::Csv => "wcl.csv",
                Format::Json => "wcl.json",
            };
            write_file(&dir, name, &body)?;
        }
        None => io::stdout().write_all(&body)?,
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn verify(theorem: TheoremId, trials: usize, seed: u64, out_dir: Option<PathBuf>) -> Result<bool> {
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    let summary = verify_theorem(theorem, trials, seed)?;
    let json = serde_json::to_string_pretty(&summary)?;
    println!("{json}");
    if let Some(dir) = out_dir {
        write_file(
            &dir,
            &format!("verify_{theorem}.json"),
            format!("{json}\n").as_bytes(),
        )?;
    }
    if !summary.passed {
        eprintln!("{theorem}: check failed");
    }
    Ok(summary.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPML_LOG_LEVEL", "warn"))
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reproduce { example, format } => reproduce(example, format),
        Command::Run(args) => run(args).map(|()| true),
        Command::Wcl(args) => wcl(args).map(|()| true),
        Command::Verify {
            theorem,
            trials,
            seed,
            out_dir,
        } => verify(theorem, trials, seed, out_dir),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
