//! Closed-loop simulator driver. `run` executes one configuration and writes
//! the step log plus plots; `compare` executes a preconditioned and an
//! unpreconditioned run and tabulates the iteration ratios.

use std::path::{Path, PathBuf};

use clap::Parser;

use cgmres::sim::{
    build_model, check_comparable, compare_logs, run_simulation, run_simulation_with,
    write_comparison_csv, CsvSink, RunConfig, SimulationLog,
};
use cgmres::{Error, PrecondMode};

#[derive(Parser)]
#[command(name = "cgmres-sim", version, about = "Nonlinear MPC benchmark simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write CSV + plots.
    Run(RunArgs),
    /// Run the same configuration with and without preconditioning and
    /// tabulate per-step GMRES iteration ratios.
    Compare(CompareArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(clap::Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Config file for the second run; must match the first except for
    /// `precond`. Without it the second run is the first with the
    /// preconditioner mode flipped.
    #[arg(long, value_name = "FILE")]
    config_b: Option<PathBuf>,
}

#[derive(clap::Args, Clone)]
struct CommonArgs {
    /// Config file with flat `key = value` lines; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Horizon gridpoints.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Plant sampling interval.
    #[arg(long)]
    dt: Option<f64>,
    /// Directional-difference step.
    #[arg(long)]
    h: Option<f64>,
    /// GMRES relative tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// GMRES iteration cap.
    #[arg(long)]
    kmax: Option<usize>,
    /// Preconditioner mode: sparse or none.
    #[arg(long)]
    precond: Option<String>,
    /// Continuation steps to simulate.
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory for CSV and plots.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model name.
    #[arg(long)]
    model: Option<String>,
    /// Write the timing columns as zero, for byte-exact file comparison.
    #[arg(long)]
    no_timings: bool,
}

fn parse_precond(raw: &str) -> Result<PrecondMode, Error> {
    match raw {
        "sparse" => Ok(PrecondMode::Sparse),
        "none" => Ok(PrecondMode::None),
        other => Err(Error::Config {
            what: format!("precond must be \"sparse\" or \"none\", got {other:?}"),
        }),
    }
}

fn parse_key<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value.parse().map_err(|_| Error::Config {
        what: format!("config value for {key} is unparseable: {value:?}"),
    })
}

/// Apply a flat `key = value` file on top of `config`. Blank lines and
/// `#` comments are skipped; unknown keys are errors.
fn apply_config_file(config: &mut RunConfig, path: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        what: format!("cannot read config file {}: {e}", path.display()),
    })?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            what: format!(
                "config line {} is not key = value: {line:?}",
                lineno + 1
            ),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "model" => config.model = value.to_string(),
            "N" => config.gridpoints = parse_key(key, value)?,
            "dt" => config.dt = parse_key(key, value)?,
            "h" => config.fd_step = parse_key(key, value)?,
            "tol" => config.tolerance = parse_key(key, value)?,
            "kmax" => config.max_iterations = parse_key(key, value)?,
            "precond" => config.precond = parse_precond(value)?,
            "steps" => config.steps = parse_key(key, value)?,
            "out" => config.out_dir = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Config {
                    what: format!("unknown config key {other:?} on line {}", lineno + 1),
                })
            }
        }
    }
    Ok(())
}

/// Defaults, then the config file, then explicit flags.
fn resolve(args: &CommonArgs) -> Result<RunConfig, Error> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        apply_config_file(&mut config, path)?;
    }
    if let Some(n) = args.n {
        config.gridpoints = n;
    }
    if let Some(dt) = args.dt {
        config.dt = dt;
    }
    if let Some(h) = args.h {
        config.fd_step = h;
    }
    if let Some(tol) = args.tol {
        config.tolerance = tol;
    }
    if let Some(kmax) = args.kmax {
        config.max_iterations = kmax;
    }
    if let Some(raw) = &args.precond {
        config.precond = parse_precond(raw)?;
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    if let Some(model) = &args.model {
        config.model = model.clone();
    }
    config.validate()?;
    Ok(config)
}

fn mode_name(mode: PrecondMode) -> &'static str {
    match mode {
        PrecondMode::Sparse => "sparse",
        PrecondMode::None => "none",
    }
}

fn summary(config: &RunConfig, out: &Path) -> String {
    format!(
        "model={} N={} dt={} h={} tol={} kmax={} precond={} steps={} out={}",
        config.model,
        config.gridpoints,
        config.dt,
        config.fd_step,
        config.tolerance,
        config.max_iterations,
        mode_name(config.precond),
        config.steps,
        out.display()
    )
}

fn out_dir(config: &RunConfig) -> PathBuf {
    config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let config = resolve(&args.common)?;
    let out = out_dir(&config);
    std::fs::create_dir_all(&out)?;
    println!("{}", summary(&config, &out));

    let model = build_model(&config.model, config.gridpoints)?;
    let labels = SimulationLog {
        state_labels: model.state_labels(),
        control_labels: model.control_labels(),
        records: Vec::new(),
    };
    let csv_path = out.join("run.csv");
    let mut sink = CsvSink::create(&csv_path, &labels, args.common.no_timings)?;
    let log = run_simulation_with(&config, &mut |record| sink.write(record))?;

    if log.records.is_empty() {
        println!("0 steps completed; {} holds the header only", csv_path.display());
        return Ok(());
    }
    cgmres::sim::emit_plots(&log, model.as_ref(), &out)?;
    let last = log.records.last().unwrap();
    let mean_iters = log
        .records
        .iter()
        .map(|r| r.gmres_iters as f64)
        .sum::<f64>()
        / log.records.len() as f64;
    println!(
        "{} steps completed: final state ({}, {}), final normF {:.3e}, mean gmres iterations {:.2}",
        log.records.len(),
        last.state[0],
        last.state.get(1).copied().unwrap_or(0.0),
        last.norm_f,
        mean_iters
    );
    println!("wrote {}, trajectory.svg, control.svg, iterations.svg", csv_path.display());
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<(), Error> {
    let config_a = resolve(&args.common)?;
    let config_b = match &args.config_b {
        Some(path) => {
            let mut b = RunConfig::default();
            apply_config_file(&mut b, path)?;
            b.validate()?;
            b
        }
        None => RunConfig {
            precond: match config_a.precond {
                PrecondMode::Sparse => PrecondMode::None,
                PrecondMode::None => PrecondMode::Sparse,
            },
            ..config_a.clone()
        },
    };
    check_comparable(&config_a, &config_b)?;
    let out = out_dir(&config_a);
    std::fs::create_dir_all(&out)?;
    println!("A: {}", summary(&config_a, &out));
    println!("B: {}", summary(&config_b, &out));

    // The two runs share nothing, so let them race.
    let (log_a, log_b) = std::thread::scope(|scope| {
        let a = scope.spawn(|| run_simulation(&config_a));
        let b = scope.spawn(|| run_simulation(&config_b));
        (
            a.join().expect("simulation thread panicked"),
            b.join().expect("simulation thread panicked"),
        )
    });
    let comparison = compare_logs(&log_a?, &log_b?)?;

    let path = out.join("comparison.csv");
    write_comparison_csv(&comparison, &path)?;
    println!(
        "iteration ratio B/A over {} steps: min {} median {} max {}",
        comparison.rows.len(),
        comparison.min_ratio,
        comparison.median_ratio,
        comparison.max_ratio
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config { .. } | Error::UnknownModel { .. } => 1,
        Error::Initialization { .. } => 2,
        _ => 3,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                std::process::exit(0);
            }
            eprint!("{err}");
            std::process::exit(1);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
    };
    if let Err(error) = result {
        eprintln!("error: {error}");
        std::process::exit(exit_code(&error));
    }
}
