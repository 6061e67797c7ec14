//! `toroidal` command-line runner.
//!
//! Exit codes: 0 all verdicts passed, 1 usage or configuration error,
//! 2 at least one verdict failed, 3 numerical abort.

mod config;
mod report;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use config::{parse_config, ExperimentConfig, KEYS};
use report::RunReport;

#[derive(Parser, Debug)]
#[command(name = "toroidal", version, about = "Experiments with pseudo-differential operators on the torus")]
struct Cli {
    /// Output directory (overrides the `out` key).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write SVG plots next to the CSV reports.
    #[arg(long, global = true)]
    plot: bool,
    /// Seed for randomized data (overrides the `seed` key).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one or more experiment configurations in parallel.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// List scenarios, their CSV columns and the configuration keys.
    List,
}

const EXIT_USAGE: u8 = 1;
const EXIT_VERDICT: u8 = 2;
const EXIT_ABORT: u8 = 3;

fn list() {
    println!("scenarios:");
    for (sc, desc, tag, columns) in scenarios::CATALOG {
        println!("  {:<18} {desc}", sc.id());
        println!("  {:<18} exercises: {tag}", "");
        for c in columns {
            println!("  {:<18} csv {c}", "");
        }
    }
    println!("\nconfiguration keys (flat `key = value`, `#` comments):");
    for (key, default, doc) in KEYS {
        let d = default.map(|d| format!(" [default {d}]")).unwrap_or_default();
        println!("  {key:<12} {doc}{d}");
    }
}

fn load(paths: &[PathBuf], cli: &Cli) -> Result<Vec<ExperimentConfig>, String> {
    let mut configs = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = parse_config(&text, path).map_err(|e| e.to_string())?;
        cfg.override_with(cli.out.as_deref(), cli.plot, cli.seed);
        configs.push(cfg);
    }
    let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(format!("two configurations share the name `{}`", w[0]));
    }
    Ok(configs)
}

fn print_report(r: &RunReport) {
    println!(
        "{} [{}]: {} ({:.2}s)",
        r.name,
        r.scenario,
        if r.passed() { "PASS" } else { "FAIL" },
        r.wall_clock
    );
    for v in &r.verdicts {
        println!(
            "  {:<5} {} = {:.4e} ({})",
            if v.passed { "ok" } else { "FAIL" },
            v.name,
            v.value,
            v.rule
        );
    }
}

fn run(paths: &[PathBuf], cli: &Cli) -> u8 {
    let configs = match load(paths, cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    let mut results: Vec<(String, Result<RunReport, String>)> = configs
        .par_iter()
        .map(|cfg| {
            let outcome = scenarios::run(cfg).map_err(|e| e.to_string()).and_then(|report| {
                report
                    .write(&cfg.out, cfg.plot)
                    .map(|_| report)
                    .map_err(|e| format!("writing reports to {}: {e}", cfg.out.display()))
            });
            (cfg.name.clone(), outcome)
        })
        .collect();
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let mut code = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(report) => {
                print_report(report);
                if !report.passed() {
                    code = code.max(EXIT_VERDICT);
                }
            }
            Err(msg) => {
                eprintln!("{name}: numerical abort: {msg}");
                code = EXIT_ABORT;
            }
        }
    }
    code
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match &cli.command {
        Command::List => {
            list();
            0
        }
        Command::Run { configs } => run(configs, &cli),
    };
    ExitCode::from(code)
}
