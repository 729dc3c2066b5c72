//! Command-line front end of the valuation-adjustment engine.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ccva_core::experiments::{
    quantile_grid, rows_to_csv, run_cell, run_table, sweep_quantile, sweep_to_csv, write_text, Scenario, TableId,
};
use ccva_core::xva_engine::Setup;
use ccva_core::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ccva", version, about = "Clearing and bilateral XVA Monte Carlo engine")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price one scenario and write a one-row CSV.
    Run {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        setup: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Reference member index (overrides the scenario).
        #[arg(long)]
        reference: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Regenerate one of the result tables into a directory.
    Table {
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Sweep the initial-margin quantile level.
    Sweep {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0.55)]
        a_min: f64,
        #[arg(long, default_value_t = 0.995)]
        a_max: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long)]
        setup: Option<String>,
        #[arg(long)]
        reference: Option<usize>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario's invariants without simulating.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn load(path: Option<&Path>) -> Result<Scenario, Error> {
    match path {
        // an unreadable or malformed scenario is a configuration problem
        Some(p) => Scenario::load(p).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        }),
        None => Ok(Scenario::base()),
    }
}

fn overrides(
    mut s: Scenario,
    setup: Option<&str>,
    paths: Option<usize>,
    seed: Option<u64>,
    reference: Option<usize>,
) -> Result<Scenario, Error> {
    if let Some(setup) = setup {
        s.setup = setup.parse::<Setup>().map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Some(n) = paths {
        s.n_paths = n;
    }
    if let Some(k) = seed {
        s.seed = k;
    }
    if let Some(r) = reference {
        s.reference = r;
    }
    s.validate()?;
    Ok(s)
}

fn execute(cli: Cli) -> Result<(), Error> {
    let workers = cli.workers;
    match cli.command {
        Command::Run {
            scenario,
            setup,
            paths,
            seed,
            reference,
            out,
            json,
        } => {
            let s = overrides(load(scenario.as_deref())?, setup.as_deref(), paths, seed, reference)?;
            let start = Instant::now();
            let row = run_cell(&s, s.setup, workers)?;
            write_text(&out, &rows_to_csv(std::slice::from_ref(&row))?)?;
            if let Some(j) = json {
                write_text(&j, &serde_json::to_string_pretty(&row)?)?;
            }
            let r = &row.report;
            eprintln!(
                "{} ref={} cva={:.2} dva={:.2} mva={:.2} mla={} kva={:.2} total={:.2} ({} paths, {:.1}s)",
                row.setup,
                row.reference,
                r.cva.mean,
                r.dva.mean,
                r.mva.mean,
                r.mla.map(|e| format!("{:.2}", e.mean)).unwrap_or_else(|| "-".into()),
                r.kva.mean,
                r.total.mean,
                r.n_paths,
                start.elapsed().as_secs_f64()
            );
        }
        Command::Table {
            id,
            out,
            scenario,
            paths,
        } => {
            let id: TableId = id.parse()?;
            let s = overrides(load(scenario.as_deref())?, None, paths, None, None)?;
            let rows = run_table(id, &s, &out, workers)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.join(format!("{}.csv", id.name())).display());
        }
        Command::Sweep {
            scenario,
            a_min,
            a_max,
            steps,
            setup,
            reference,
            paths,
            out,
        } => {
            let s = overrides(load(scenario.as_deref())?, setup.as_deref(), paths, None, reference)?;
            let grid = quantile_grid(a_min, a_max, steps)?;
            let points = sweep_quantile(&s, &grid, workers)?;
            write_text(&out, &sweep_to_csv(&points)?)?;
        }
        Command::Validate { scenario } => {
            let s = load(Some(&scenario))?;
            let (_, nu0) = s.positions()?;
            println!("ok: {} ({} members, compression factor {nu0:.2})", s.name, s.members.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
