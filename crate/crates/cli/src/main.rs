use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hcb_core::analysis::{fit_line, fit_sqrt_time, DEFAULT_FIT_WINDOW};
use hcb_core::observables::read_csv;
use hcb_core::scenario::run::{FIT_FILE, SERIES_FILE};
use hcb_core::scenario::sweep::SWEEP_REPORT_FILE;
use hcb_core::scenario::{run_sweep, RunOutcome, Runner, ScenarioConfig, ScenarioKind};
use hcb_core::{Error, Result};

/// Relative output directories are placed under this directory when set.
const OUTPUT_ROOT_VAR: &str = "HCB_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "hcb", version, about = "Sudden-expansion simulations of hard-core bosons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single mi-expansion or gs-quench scenario.
    Run { config: PathBuf },
    /// Run every point of a sweep scenario and fit across points.
    Sweep { config: PathBuf },
    /// Fit the radius column of a series CSV.
    Fit {
        csv: PathBuf,
        /// Fit window as `t_min,t_max`.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
    },
    /// Continue an interrupted run from its checkpoint.
    Resume { checkpoint: PathBuf },
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `t_min,t_max`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("t_min: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("t_max: {e}"))?;
    if a < b {
        Ok((a, b))
    } else {
        Err(format!("empty window [{a}, {b}]"))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Integrity(_) | Error::QuenchImpossible { .. } | Error::NonMonotoneTime { .. } | Error::Checkpoint(_) => 2,
        Error::NonConvergence { .. } | Error::SweepNonConvergence { .. } | Error::Linalg(_) => 3,
        _ => 1,
    }
}

fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_VAR).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn summarize(o: &RunOutcome) {
    let dir = o.output_dir.as_deref().unwrap_or(Path::new("."));
    println!("engine = {}", o.engine.as_str());
    match o.fit {
        Some(f) => println!("velocity = {} (r_squared = {})", f.slope, f.r_squared),
        None => println!("velocity = none"),
    }
    if let Some(t) = o.melt_time {
        println!("melt_time = {t}");
    }
    if let Some(w) = o.preparation.pair_weight {
        println!("pair_weight = {w}");
    }
    println!("series = {}", dir.join(SERIES_FILE).display());
    println!("report = {}", dir.join(FIT_FILE).display());
}

fn finish(runner: Runner) -> Result<()> {
    let outcome = runner.finish()?;
    summarize(&outcome);
    outcome.check()
}

fn run(path: &Path) -> Result<()> {
    let cfg = ScenarioConfig::load(path)?;
    if cfg.scenario == ScenarioKind::Sweep {
        return Err(Error::Config("this is a sweep config; use `hcb sweep`".into()));
    }
    let dir = cfg.output_path(output_root().as_deref());
    finish(Runner::new(&cfg, Some(&dir))?)
}

fn sweep(path: &Path) -> Result<()> {
    let cfg = ScenarioConfig::load(path)?;
    if cfg.scenario != ScenarioKind::Sweep {
        return Err(Error::Config("`hcb sweep` needs scenario = \"sweep\"".into()));
    }
    let dir = cfg.output_path(output_root().as_deref());
    let out = run_sweep(&cfg, Some(&dir))?;
    for p in &out.points {
        match &p.outcome {
            Ok(o) => println!("{} velocity = {}", p.point.dir_name(), o.fit.map_or(f64::NAN, |f| f.slope)),
            Err(e) => println!("{} error = {e}", p.point.dir_name()),
        }
    }
    for (label, r) in &out.extrapolations {
        match r {
            Ok(e) => println!("{label}: limit = {} ± {}", e.limit_value, e.limit_stderr),
            Err(e) => println!("{label}: {e}"),
        }
    }
    for (label, r) in &out.peaks {
        match r {
            Ok((w, v)) => println!("peak at {label}: w = {w}, v = {v}"),
            Err(e) => println!("peak at {label}: {e}"),
        }
    }
    println!("report = {}", dir.join(SWEEP_REPORT_FILE).display());
    if out.partial {
        return Err(Error::Integrity("some sweep points failed; the aggregate is partial".into()));
    }
    Ok(())
}

fn fit(path: &Path, window: Option<(f64, f64)>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let cols = read_csv(BufReader::new(file))?;
    let window = window.unwrap_or(DEFAULT_FIT_WINDOW);
    let f = fit_line(&cols.times, &cols.radius, window)?;
    let g = fit_sqrt_time(&cols.times, &cols.radius, window)?;
    println!("window = {}, {}", window.0, window.1);
    println!("velocity = {}", f.slope);
    println!("intercept = {}", f.intercept);
    println!("r_squared = {}", f.r_squared);
    println!("n_points = {}", f.n_points);
    println!("sqrt_slope = {}", g.slope);
    println!("sqrt_r_squared = {}", g.r_squared);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run { config } => run(config),
        Command::Sweep { config } => sweep(config),
        Command::Fit { csv, window } => fit(csv, *window),
        Command::Resume { checkpoint } => Runner::resume(checkpoint).and_then(finish),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
