use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use levy_bsde::experiments::{
    run_apriori_check, run_bihari, run_comparison, run_convergence, run_counterexample,
    run_truncation_study, simulate, solve_lattice, solve_monte_carlo, BihariConfig, ExperimentConfig,
    Report,
};

#[derive(Parser)]
#[command(name = "levy-bsde", version, about = "BSDEs with jumps on scenario trees and by Monte-Carlo regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV tables and the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate increments and write them as CSV.
    Simulate(Io),
    /// Solve one generator/terminal pair exactly on the scenario tree.
    SolveLattice(Io),
    /// Solve one generator/terminal pair by least-squares Monte-Carlo.
    SolveMc(Io),
    /// Node-wise comparison of two solutions (or the built-in suite).
    Compare(Io),
    /// Comparison failure under a generator violating (Aγ).
    Counterexample(Io),
    /// Distances of jump-truncated solutions to the full solution.
    TruncateStudy(Io),
    /// Solution norms against the explicit a-priori and stability bounds.
    Apriori(Io),
    /// Step refinement and Monte-Carlo against tree.
    Convergence(Io),
    /// Evaluate the Bihari-LaSalle bound for a piecewise-constant K.
    Bihari(Io),
}

fn load(io: &Io) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(&io.config).with_context(|| format!("reading config {}", io.config.display()))
}

fn out_dir(io: &Io, cfg: Option<&ExperimentConfig>) -> PathBuf {
    io.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn csv_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

/// Writes the report and the verdict table; returns whether every verdict passed.
fn finish(report: &Report, dir: &Path) -> Result<bool> {
    fs::create_dir_all(dir)?;
    let stem = report.experiment.replace(['/', ' '], "_");
    report.write_verdicts_csv(csv_file(dir, &format!("{stem}_verdicts.csv"))?)?;
    let path = report.write(dir)?;
    print!("{}", report.summary());
    println!("report: {}", path.display());
    Ok(report.all_passed())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(io) => {
            let cfg = load(&io)?;
            let dir = out_dir(&io, Some(&cfg));
            let (bundle, report) = simulate(&cfg)?;
            fs::create_dir_all(&dir)?;
            bundle.write_csv(csv_file(&dir, "paths.csv")?)?;
            finish(&report, &dir)
        }
        Command::SolveLattice(io) => {
            let cfg = load(&io)?;
            let dir = out_dir(&io, Some(&cfg));
            let (sol, report) = solve_lattice(&cfg)?;
            fs::create_dir_all(&dir)?;
            sol.write_csv(csv_file(&dir, "lattice_solution.csv")?)?;
            finish(&report, &dir)
        }
        Command::SolveMc(io) => {
            let cfg = load(&io)?;
            let dir = out_dir(&io, Some(&cfg));
            let (sol, report) = solve_monte_carlo(&cfg)?;
            fs::create_dir_all(&dir)?;
            sol.write_csv(csv_file(&dir, "mc_solution.csv")?)?;
            finish(&report, &dir)
        }
        Command::Compare(io) => experiment(&io, run_comparison),
        Command::Counterexample(io) => experiment(&io, run_counterexample),
        Command::TruncateStudy(io) => experiment(&io, run_truncation_study),
        Command::Apriori(io) => experiment(&io, run_apriori_check),
        Command::Convergence(io) => experiment(&io, run_convergence),
        Command::Bihari(io) => {
            let text = fs::read_to_string(&io.config).with_context(|| format!("reading {}", io.config.display()))?;
            let cfg = BihariConfig::from_json(&text)?;
            let report = run_bihari(&cfg)?;
            if let Some(bound) = report.cases[0].records.get("bound") {
                println!("bound: {bound}");
            }
            finish(&report, &out_dir(&io, None))
        }
    }
}

fn experiment(io: &Io, runner: fn(&ExperimentConfig) -> levy_bsde::Result<Report>) -> Result<bool> {
    let cfg = load(io)?;
    let report = runner(&cfg)?;
    finish(&report, &out_dir(io, Some(&cfg)))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
