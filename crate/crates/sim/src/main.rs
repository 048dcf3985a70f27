use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use airan_core::engine;
use airan_core::scenario::Scenario;
use airan_sim::config::{parse_scenario, parse_table, ConfigError};
use airan_sim::records::{write_report, ReportFormat};
use airan_sim::sweep::{parse_axis, run_sweep, SweepError};
use clap::{Parser, Subcommand};

/// Discrete-event simulator for AI-RAN edge sites.
#[derive(Debug, Parser)]
#[command(name = "airan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write its report.
    Run {
        scenario: PathBuf,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `sim.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the SUMMARY report instead of RECORDS.
        #[arg(long)]
        summary: bool,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
    /// Run every combination of the given parameter values.
    Sweep {
        scenario: PathBuf,
        /// `path=v1,v2,...`, repeatable. Array entries are addressed by index.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        /// Directory for the per-point reports.
        #[arg(long, default_value = "sweep-out")]
        out_dir: PathBuf,
        /// Overrides `sim.seed` as the base seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Parse(_) | ConfigError::Schema(_) => 2,
            ConfigError::Semantic(_) => 3,
        };
        let message = match &e {
            ConfigError::Parse(m) => format!("parse error: {m}"),
            ConfigError::Schema(list) => format!("schema error:\n  {}", list.join("\n  ")),
            ConfigError::Semantic(list) => format!("semantic error:\n  {}", list.join("\n  ")),
        };
        Failure { code, message }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Ok(parse_scenario(&read(path)?)?)
}

fn run(scenario: &Path, out: Option<&Path>, seed: Option<u64>, summary: bool) -> Result<(), Failure> {
    let mut scenario = load(scenario)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let report = engine::run(&scenario).map_err(|e| Failure::runtime(e.to_string()))?;
    let format = if summary { ReportFormat::Summary } else { ReportFormat::Records };
    let text = write_report(&report, format);
    match out {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validate(path: &Path) -> Result<(), Failure> {
    let s = load(path)?;
    println!(
        "{}: ok ({} servers, {} gpus, {} cells, {} ai workloads)",
        path.display(),
        s.servers.len(),
        s.gpu_ids().len(),
        s.cells.len(),
        s.ai_workloads.len()
    );
    Ok(())
}

fn sweep(path: &Path, params: &[String], out_dir: &Path, seed: Option<u64>, threads: usize) -> Result<(), Failure> {
    let base = parse_table(&read(path)?)?;
    let axes = params
        .iter()
        .map(|p| parse_axis(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::usage(e.to_string()))?;
    let runs = run_sweep(&base, &axes, seed, threads).map_err(|e| match e {
        SweepError::Param(..) => Failure::usage(e.to_string()),
        SweepError::Config { index, source } => {
            let f = Failure::from(source);
            Failure { code: f.code, message: format!("run {index}: {}", f.message) }
        }
        SweepError::Sim { .. } => Failure::runtime(e.to_string()),
    })?;
    fs::create_dir_all(out_dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    let names: Vec<String> = axes.iter().map(|a| a.name()).collect();
    println!("point\t{}\tseed\tmean_ran\tmean_ai\tmean_total\tdeadline_misses\treport", names.join("\t"));
    for run in &runs {
        let file = out_dir.join(format!("point-{:03}.records", run.index));
        write(&file, &write_report(&run.report, ReportFormat::Records))?;
        let summaries = run.report.summaries().map_err(|e| Failure::runtime(e.to_string()))?;
        let n = summaries.len().max(1) as f64;
        let mean = |f: fn(&airan_core::metrics::GpuSummary) -> f64| summaries.iter().map(f).sum::<f64>() / n;
        let values: Vec<&str> = run.params.iter().map(|(_, v)| v.as_str()).collect();
        println!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            run.index,
            values.join("\t"),
            run.seed,
            mean(|g| g.ran.mean),
            mean(|g| g.ai.mean),
            mean(|g| g.total.mean),
            run.report.deadline_misses.len(),
            file.display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run { scenario, out, seed, summary } => run(scenario, out.as_deref(), *seed, *summary),
        Command::Validate { scenario } => validate(scenario),
        Command::Sweep { scenario, params, out_dir, seed, threads } => sweep(scenario, params, out_dir, *seed, *threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("airan: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
