//! `fkips` command-line driver.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fkips::bounds::BoundReport;
use fkips::harness::config::AlgorithmConfig;
use fkips::harness::{
    exact_context, load_config, oracle_table, run_experiment, tune_reports, verify_output, CheckStatus, ExperimentConfig,
    ExperimentOutput, Table,
};

#[derive(Parser)]
#[command(name = "fkips", version, about = "Feynman-Kac particle experiments, exact oracles and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured particle experiment and write replicate CSVs.
    Run(Common),
    /// Evaluate the exact flow only.
    Oracle(Common),
    /// Evaluate every bound constant that applies to the configuration.
    Tune(Common),
    /// Run the experiment and compare empirical quantities with the bounds.
    VerifyBounds(Common),
    /// Run an adaptive annealing configuration and report its increments.
    Adaptive(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed; replicate r uses the stream (seed, r).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Number of particles N.
    #[arg(long, value_name = "N")]
    particles: Option<usize>,
    /// Number of independent replicates R.
    #[arg(long, value_name = "R")]
    replicates: Option<usize>,
    /// Output directory for CSV files.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads. Changes speed only, never output.
    #[arg(long, value_name = "T", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = load_config(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.particles {
            cfg.n_particles = n;
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of a subcommand that completed without a usage or configuration error.
enum Outcome {
    Pass,
    BoundFailed,
}

fn write_table(dir: Option<&Path>, name: &str, table: &Table) -> Result<()> {
    if let Some(dir) = dir {
        table.write_path(&dir.join(name))?;
    }
    Ok(())
}

/// Writes to stdout; a closed reader (for example `| head`) is not an error.
fn print_bytes(bytes: &[u8]) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(bytes).and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_table(table: &Table) -> Result<()> {
    print_bytes(&table.to_bytes()?)
}

fn write_experiment(out: &ExperimentOutput) -> Result<()> {
    if let Some(dir) = &out.config.output {
        out.write_all(dir)?;
    }
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let out = run_experiment(cfg)?;
    write_experiment(&out)?;
    print_table(&out.summary_table())?;
    Ok(Outcome::Pass)
}

fn oracle(cfg: &ExperimentConfig) -> Result<Outcome> {
    let table = oracle_table(&exact_context(cfg)?)?;
    write_table(cfg.output.as_deref(), "oracle.csv", &table)?;
    print_table(&table)?;
    Ok(Outcome::Pass)
}

fn reports_table(reports: &[BoundReport]) -> Table {
    let mut t = Table::new(&["name", "index", "kind", "key", "value"]);
    for (i, r) in reports.iter().enumerate() {
        for (kind, list) in [("input", &r.inputs), ("value", &r.values)] {
            for (k, v) in list {
                t.push(vec![r.name.as_str().into(), i.into(), kind.into(), k.as_str().into(), (*v).into()]);
            }
        }
    }
    t
}

fn tune(cfg: &ExperimentConfig) -> Result<Outcome> {
    let reports = tune_reports(cfg)?;
    write_table(cfg.output.as_deref(), "tune.csv", &reports_table(&reports))?;
    let text: Vec<String> = reports.iter().map(BoundReport::to_key_value).collect();
    print_bytes(text.join("\n").as_bytes())?;
    Ok(Outcome::Pass)
}

fn verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let out = run_experiment(cfg)?;
    write_experiment(&out)?;
    let report = verify_output(&out)?;
    write_table(cfg.output.as_deref(), "verify.csv", &report.table())?;
    let count = |s: CheckStatus| report.rows.iter().filter(|r| r.status == s).count();
    let mut text = format!(
        "checks: {} pass, {} fail, {} hypothesis-unmet\n",
        count(CheckStatus::Pass),
        count(CheckStatus::Fail),
        count(CheckStatus::HypothesisUnmet)
    );
    for r in report.rows.iter().filter(|r| r.status != CheckStatus::Pass) {
        let param = r.parameter.map(|p| format!(" parameter={p}")).unwrap_or_default();
        text += &format!("{} {} step={}{param} lhs={:e} rhs={:e} {}\n", r.status.label(), r.check, r.step, r.lhs, r.rhs, r.detail);
    }
    print_bytes(text.as_bytes())?;
    Ok(if report.passed() { Outcome::Pass } else { Outcome::BoundFailed })
}

fn adaptive(cfg: &ExperimentConfig) -> Result<Outcome> {
    if !matches!(cfg.algorithm, AlgorithmConfig::Adaptive { .. }) {
        bail!(fkips::Error::Config("algorithm.kind must be \"adaptive\" for this subcommand".into()));
    }
    let out = run_experiment(cfg)?;
    write_experiment(&out)?;
    let mut t = Table::new(&["step", "delta_n", "beta_n", "c_n", "kept_fraction", "saturated_fraction"]);
    for n in 1..=out.horizon() {
        let mean = |name: &str| out.stats.get(n, name).map(|r| r.mean);
        t.push(vec![
            n.into(),
            mean("delta_n").into(),
            mean("beta_n").into(),
            mean("c_n").into(),
            mean("kept_fraction").into(),
            mean("saturated_flag").into(),
        ]);
    }
    write_table(cfg.output.as_deref(), "adaptive.csv", &t)?;
    print_table(&t)?;
    Ok(Outcome::Pass)
}

fn dispatch(command: &Command) -> Result<Outcome> {
    let (common, f): (&Common, fn(&ExperimentConfig) -> Result<Outcome>) = match command {
        Command::Run(c) => (c, run),
        Command::Oracle(c) => (c, oracle),
        Command::Tune(c) => (c, tune),
        Command::VerifyBounds(c) => (c, verify),
        Command::Adaptive(c) => (c, adaptive),
    };
    let cfg = common.load()?;
    match common.threads {
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t.into()).build()?.install(|| f(&cfg)),
        None => f(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::BoundFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
