//! Experiment runner for the command-following library: feasibility checks,
//! single closed-loop runs, and Monte Carlo sweeps, all driven by JSON
//! configs and emitting CSV.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cir_core::error::Error;
use cir_core::sim::{monte_carlo, mse_summary_lines};
use cir_core::{FeasibilityReport, StateSpaceModel};

use config::{ExperimentConfig, NonSquareMode};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "cir",
    about = "Command following by input reconstruction: experiment runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print ranks, trackability, eigenvalues and zeros for the configured model
    Check(CommonArgs),
    /// Run one closed loop and write the trace CSV
    Run(CommonArgs),
    /// Average many seeded runs and write the mean/std CSV
    Montecarlo(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the experiment JSON config
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path (overrides the config's "out")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides the config's noise seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo runs (overrides the config)
    #[arg(long)]
    runs: Option<usize>,
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Run(args) => cmd_run(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// CIR_THREADS caps Monte Carlo parallelism; default is machine parallelism.
fn configure_threads() {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("CIR_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring CIR_THREADS={v:?} (want a positive integer)"),
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e.root() {
        Error::Infeasible(_) | Error::UnsupportedShape(_) => EXIT_INFEASIBLE,
        Error::NumericalFailure(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn load(args: &CommonArgs) -> cir_core::Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let dir = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, dir))
}

fn print_report(header: &str, model: &StateSpaceModel, report: &FeasibilityReport) {
    println!("{header}");
    println!(
        "  dimensions: n = {}, p = {}, l = {}, dt = {}",
        model.state_dim(),
        model.input_dim(),
        model.output_dim(),
        model.dt()
    );
    println!("  rank(B) = {}", report.rank_b);
    println!("  rank(CB) = {}", report.rank_cb);
    println!("  controllability rank = {}", report.ctrb_rank);
    println!("  observability rank = {}", report.obsv_rank);
    println!("  square: {}", yes_no(report.is_square));
    println!("  trackable: {}", yes_no(report.is_trackable));
    println!("  eigenvalues: {}", spectrum_line(&report.eigenvalues));
    match &report.zeros {
        Some(z) if z.is_empty() => println!("  invariant zeros: none"),
        Some(z) => println!("  invariant zeros: {}", spectrum_line(z)),
        None => println!("  invariant zeros: not computed (non-square)"),
    }
    match report.min_phase {
        Some(true) => println!("  minimum phase: yes"),
        Some(false) => println!("  minimum phase: no"),
        None => println!("  minimum phase: unknown"),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn spectrum_line(s: &cir_core::matcore::Spectrum) -> String {
    s.sorted()
        .iter()
        .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_check(args: &CommonArgs) -> cir_core::Result<u8> {
    let (cfg, dir) = load(args)?;
    let raw = cfg.raw_model(&dir)?;
    let raw_report = raw.check_feasibility();
    print_report("model", &raw, &raw_report);

    let mode = cfg.mode()?;
    let mut resolved_trackable = raw_report.is_trackable;
    if mode != NonSquareMode::None {
        let resolved = cfg.resolve(&dir, args.seed, args.runs)?;
        let label = match &mode {
            NonSquareMode::InputTransform => "resolved model (input-transform, controller side)",
            NonSquareMode::Project => "resolved model (project: reference projected)",
            NonSquareMode::DropOutputs(_) => "resolved model (drop-outputs)",
            NonSquareMode::None => unreachable!(),
        };
        // for the input transform the controller-side model is the squared one
        if let cir_core::ControllerSpec::CirLifted(t) = &resolved.scenario.controller {
            let squared = t.squared_model();
            print_report(label, squared, &squared.check_feasibility());
        } else {
            let model = &resolved.scenario.model;
            print_report(label, model, &model.check_feasibility());
        }
        resolved_trackable = true; // explicit non-square handling requested
        for w in &resolved.warnings {
            eprintln!("warning: {w}");
        }
    } else if raw_report.min_phase == Some(false) {
        eprintln!(
            "warning: system is not minimum phase: bounded control inputs are not guaranteed"
        );
    }

    Ok(if resolved_trackable {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    })
}

fn cmd_run(args: &CommonArgs) -> cir_core::Result<u8> {
    let (cfg, dir) = load(args)?;
    let resolved = cfg.resolve(&dir, args.seed, args.runs)?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    let trace = resolved.scenario.run(resolved.base_seed)?;
    let out = args
        .out
        .clone()
        .or(resolved.out.clone())
        .unwrap_or_else(|| PathBuf::from("trace.csv"));
    let file = std::fs::File::create(&out)?;
    trace.write_csv(std::io::BufWriter::new(file))?;
    eprintln!("trace written to {}", out.display());
    print!("{}", mse_summary_lines(&trace.mse_per_channel()));
    Ok(EXIT_OK)
}

fn cmd_montecarlo(args: &CommonArgs) -> cir_core::Result<u8> {
    let (cfg, dir) = load(args)?;
    let resolved = cfg.resolve(&dir, args.seed, args.runs)?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    let summary = monte_carlo(&resolved.scenario, resolved.runs, resolved.base_seed)?;
    let out = args
        .out
        .clone()
        .or(resolved.out.clone())
        .unwrap_or_else(|| PathBuf::from("montecarlo.csv"));
    let file = std::fs::File::create(&out)?;
    summary.write_csv(std::io::BufWriter::new(file))?;
    eprintln!(
        "monte carlo summary over {} runs written to {}",
        summary.runs,
        out.display()
    );
    print!("{}", summary.summary_lines());
    Ok(EXIT_OK)
}
