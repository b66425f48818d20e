use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::{defaults, parse_config, RunConfig};
use super::output::RunWriter;
use crate::engine::{self, cumulative_balance_defect};
use crate::verify::{self, CheckResult, SUITES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "reftrack", version, about = "Eulerian return-map simulator for solids immersed in fluid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation and write energy.csv plus field dumps.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the verification suites and print a pass/fail table.
    Verify {
        #[arg(long)]
        suite: Option<String>,
    },
    /// Print the annotated default configuration.
    DumpDefaults {
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
        dim: u8,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("REFTRACK_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("REFTRACK_THREADS must be a positive integer, got `{value}`"))?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parse `args` (program name first) and execute; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_USAGE;
    }
    match cli.command {
        Command::Run { config, steps, out } => {
            let mut cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(errs) => {
                    eprintln!("error: invalid configuration {}", config.display());
                    for e in &errs.0 {
                        eprintln!("  {e}");
                    }
                    return EXIT_FAILURE;
                }
            };
            if let Some(n) = steps {
                cfg.n_steps = n;
            }
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            match cfg.dim {
                2 => simulate::<2>(&cfg),
                _ => simulate::<3>(&cfg),
            }
        }
        Command::Verify { suite } => run_verify(suite.as_deref()),
        Command::DumpDefaults { dim } => {
            print!("{}", defaults(dim as usize).to_text());
            EXIT_OK
        }
    }
}

fn simulate<const D: usize>(cfg: &RunConfig) -> i32 {
    let sim = cfg.to_sim::<D>();
    let mut writer = match RunWriter::create(&cfg.out_dir, sim.dump_every) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", cfg.out_dir.display());
            return EXIT_FAILURE;
        }
    };
    log::info!(
        "{} nodes, {} steps of dt = {}, output in {}",
        sim.grid.num_nodes(),
        sim.n_steps,
        sim.dt,
        cfg.out_dir.display()
    );
    match engine::run(&sim, &mut writer) {
        Ok(summary) => {
            let pi_min = summary.reports.iter().map(|r| r.pi_min).fold(1.0, f64::min);
            let det_min = summary
                .reports
                .iter()
                .map(|r| r.detgrad_min)
                .fold(f64::INFINITY, f64::min);
            println!("steps              {}", summary.reports.len());
            println!("final time         {}", summary.final_state.field.t);
            println!("min pi_eps         {pi_min}");
            println!("min det grad xi    {det_min}");
            println!(
                "balance defect     {:e}",
                cumulative_balance_defect(&summary.reports, sim.dt)
            );
            println!("cut-off warnings   {}", summary.cutoff_warnings);
            println!("energy log         {}", writer.csv_path().display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn run_verify(suite: Option<&str>) -> i32 {
    let names: Vec<&str> = match suite {
        Some(s) if SUITES.contains(&s) => vec![s],
        Some(s) => {
            eprintln!("error: unknown suite `{s}` (known: {})", SUITES.join(", "));
            return EXIT_USAGE;
        }
        None => SUITES.to_vec(),
    };
    println!(
        "{:<5} {:<13} {:<58} {:>12} {:>11}",
        "", "suite", "check", "value", "limit"
    );
    let mut all: Vec<CheckResult> = Vec::new();
    for name in names {
        let checks = verify::run_suite(name).expect("listed suite");
        for c in &checks {
            println!("{}", c.table_row());
        }
        all.extend(checks);
    }
    let passed = all.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", all.len());
    if passed == all.len() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}
