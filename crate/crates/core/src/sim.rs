//! Closed-loop simulation: warm start once, then alternate one continuation
//! update with one plant step, logging per-step metrics.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::continuation::{
    continuation_step, initialize, propagate_state, ContinuationConfig, PrecondMode,
};
use crate::error::{Error, Result};
use crate::model::{MinTimeModel, OcpModel};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: String,
    /// Horizon gridpoints N.
    pub gridpoints: usize,
    /// Sampling interval of the plant.
    pub dt: f64,
    /// Directional-difference step h.
    pub fd_step: f64,
    /// GMRES relative tolerance.
    pub tolerance: f64,
    /// GMRES iteration cap.
    pub max_iterations: usize,
    pub precond: PrecondMode,
    /// Continuation steps to run.
    pub steps: usize,
    /// Where CSV and plots go; in-memory only when absent.
    pub out_dir: Option<PathBuf>,
    /// Reserved for test harnesses; the simulation itself draws nothing.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "mintime".to_string(),
            gridpoints: 100,
            dt: 1.0 / 500.0,
            fd_step: 1e-8,
            tolerance: 1e-5,
            max_iterations: 100,
            precond: PrecondMode::Sparse,
            steps: 1000,
            out_dir: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model.is_empty() {
            return Err(Error::Config {
                what: "model name is empty".into(),
            });
        }
        if self.gridpoints == 0 {
            return Err(Error::Config {
                what: "N must be at least 1".into(),
            });
        }
        for (name, value) in [
            ("dt", self.dt),
            ("h", self.fd_step),
            ("tol", self.tolerance),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config {
                    what: format!("{name} must be positive and finite, got {value}"),
                });
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Config {
                what: "kmax must be at least 1".into(),
            });
        }
        Ok(())
    }

    fn continuation(&self) -> ContinuationConfig {
        ContinuationConfig {
            fd_step: self.fd_step,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            mode: self.precond,
        }
    }
}

/// Instantiate a registered model by name.
pub fn build_model(name: &str, gridpoints: usize) -> Result<Box<dyn OcpModel>> {
    match name {
        "mintime" => Ok(Box::new(MinTimeModel::new(gridpoints))),
        other => Err(Error::UnknownModel {
            name: other.to_string(),
        }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    /// Wall-clock time at which the control was computed.
    pub t: f64,
    /// Plant state the step started from.
    pub state: Vec<f64>,
    /// Applied control, the first block of the updated unknowns.
    pub control: Vec<f64>,
    /// `||F||_2` after the update.
    pub norm_f: f64,
    pub gmres_iters: usize,
    pub precond_seconds: f64,
    pub solve_seconds: f64,
    pub regularized: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimulationLog {
    pub state_labels: Vec<String>,
    pub control_labels: Vec<String>,
    pub records: Vec<LogRecord>,
}

/// Run the closed loop, handing each record to `sink` as soon as the step
/// finishes so a partial log survives a mid-run failure.
pub fn run_simulation_with(
    config: &RunConfig,
    sink: &mut dyn FnMut(&LogRecord) -> Result<()>,
) -> Result<SimulationLog> {
    config.validate()?;
    let model = build_model(&config.model, config.gridpoints)?;
    let mut log = SimulationLog {
        state_labels: model.state_labels(),
        control_labels: model.control_labels(),
        records: Vec::with_capacity(config.steps),
    };

    let mut x = model.initial_state();
    let mut u = initialize(model.as_ref(), &x, 0.0)?;
    let step_config = config.continuation();

    for step in 0..config.steps {
        let t = step as f64 * config.dt;
        let outcome = continuation_step(model.as_ref(), &u, &x, t, &step_config)?;
        let record = LogRecord {
            step,
            t,
            state: x.clone(),
            control: outcome.u.control(0).to_vec(),
            norm_f: outcome.residual_norm,
            gmres_iters: outcome.gmres_iterations,
            precond_seconds: outcome.precond_seconds,
            solve_seconds: outcome.solve_seconds,
            regularized: outcome.regularized,
        };
        sink(&record)?;
        log.records.push(record);
        x = propagate_state(model.as_ref(), &x, &outcome.u, t, config.dt)?;
        u = outcome.u;
    }
    Ok(log)
}

pub fn run_simulation(config: &RunConfig) -> Result<SimulationLog> {
    run_simulation_with(config, &mut |_| Ok(()))
}

fn csv_header(log: &SimulationLog) -> String {
    let mut fields = vec!["step".to_string(), "t".to_string()];
    fields.extend(log.state_labels.iter().cloned());
    fields.extend(log.control_labels.iter().cloned());
    for tail in [
        "normF",
        "gmres_iters",
        "precond_seconds",
        "solve_seconds",
        "regularized",
    ] {
        fields.push(tail.to_string());
    }
    fields.join(",")
}

fn format_record(record: &LogRecord) -> String {
    let mut fields = vec![record.step.to_string(), format!("{}", record.t)];
    for v in &record.state {
        fields.push(format!("{v}"));
    }
    for v in &record.control {
        fields.push(format!("{v}"));
    }
    fields.push(format!("{}", record.norm_f));
    fields.push(record.gmres_iters.to_string());
    fields.push(format!("{:.6}", record.precond_seconds));
    fields.push(format!("{:.6}", record.solve_seconds));
    fields.push(if record.regularized { "1" } else { "0" }.to_string());
    fields.join(",")
}

/// Incremental CSV writer matching [`write_csv`] byte for byte.
pub struct CsvSink {
    out: std::io::BufWriter<std::fs::File>,
    /// Replace both timing columns with zero, for golden-file comparisons.
    pub zero_timings: bool,
}

impl CsvSink {
    pub fn create(path: &Path, log: &SimulationLog, zero_timings: bool) -> Result<Self> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", csv_header(log))?;
        Ok(CsvSink { out, zero_timings })
    }

    pub fn write(&mut self, record: &LogRecord) -> Result<()> {
        let record = if self.zero_timings {
            let mut r = record.clone();
            r.precond_seconds = 0.0;
            r.solve_seconds = 0.0;
            std::borrow::Cow::Owned(r)
        } else {
            std::borrow::Cow::Borrowed(record)
        };
        writeln!(self.out, "{}", format_record(&record))?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_csv(log: &SimulationLog, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", csv_header(log))?;
    for record in &log.records {
        writeln!(out, "{}", format_record(record))?;
    }
    out.flush()?;
    Ok(())
}

/// Parse a log produced by [`write_csv`]. Labels come from the header; the
/// caller says how many columns are state and how many are control.
pub fn parse_csv(text: &str, state_len: usize, control_len: usize) -> Result<SimulationLog> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config {
        what: "csv is empty".into(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    let expected = 2 + state_len + control_len + 5;
    if columns.len() != expected {
        return Err(Error::Dimension {
            what: "csv header arity",
            expected,
            actual: columns.len(),
        });
    }
    let mut log = SimulationLog {
        state_labels: columns[2..2 + state_len].iter().map(|s| s.to_string()).collect(),
        control_labels: columns[2 + state_len..2 + state_len + control_len]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        records: Vec::new(),
    };

    fn field<T: std::str::FromStr>(raw: &str, line: usize) -> Result<T> {
        raw.parse().map_err(|_| Error::Config {
            what: format!("unparseable field {raw:?} on csv line {line}"),
        })
    }

    for (offset, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let lineno = offset + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(Error::Dimension {
                what: "csv row arity",
                expected,
                actual: fields.len(),
            });
        }
        let mut at = 0usize;
        let mut next = || {
            let f = fields[at];
            at += 1;
            f
        };
        let record = LogRecord {
            step: field(next(), lineno)?,
            t: field(next(), lineno)?,
            state: (0..state_len)
                .map(|_| field(next(), lineno))
                .collect::<Result<_>>()?,
            control: (0..control_len)
                .map(|_| field(next(), lineno))
                .collect::<Result<_>>()?,
            norm_f: field(next(), lineno)?,
            gmres_iters: field(next(), lineno)?,
            precond_seconds: field(next(), lineno)?,
            solve_seconds: field(next(), lineno)?,
            regularized: match next() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Config {
                        what: format!("regularized flag {other:?} on csv line {lineno}"),
                    })
                }
            },
        };
        log.records.push(record);
    }
    Ok(log)
}

/// Per-step iteration comparison of two runs.
#[derive(Clone, Debug)]
pub struct Comparison {
    /// `(step, iterations_a, iterations_b, ratio)` with `ratio = b / a`.
    pub rows: Vec<(usize, usize, usize, f64)>,
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub max_ratio: f64,
}

fn iteration_ratio(a: usize, b: usize) -> f64 {
    if a == 0 {
        if b == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        b as f64 / a as f64
    }
}

/// Check that two configs differ in the preconditioner mode at most. The
/// output directory is plumbing rather than simulation input, so it is
/// allowed to differ as well.
pub fn check_comparable(a: &RunConfig, b: &RunConfig) -> Result<()> {
    let strip = |c: &RunConfig| RunConfig {
        precond: PrecondMode::Sparse,
        out_dir: None,
        ..c.clone()
    };
    if strip(a) != strip(b) {
        return Err(Error::Config {
            what: "comparison runs must differ only in the preconditioner".into(),
        });
    }
    Ok(())
}

pub fn compare_logs(a: &SimulationLog, b: &SimulationLog) -> Result<Comparison> {
    if a.records.len() != b.records.len() {
        return Err(Error::Dimension {
            what: "comparison log length",
            expected: a.records.len(),
            actual: b.records.len(),
        });
    }
    let mut rows = Vec::with_capacity(a.records.len());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        rows.push((
            ra.step,
            ra.gmres_iters,
            rb.gmres_iters,
            iteration_ratio(ra.gmres_iters, rb.gmres_iters),
        ));
    }
    let mut ratios: Vec<f64> = rows.iter().map(|r| r.3).collect();
    ratios.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let median = if ratios.is_empty() {
        f64::NAN
    } else if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };
    Ok(Comparison {
        min_ratio: ratios.first().copied().unwrap_or(f64::NAN),
        median_ratio: median,
        max_ratio: ratios.last().copied().unwrap_or(f64::NAN),
        rows,
    })
}

/// Run both configurations and tabulate per-step iteration ratios.
pub fn compare_runs(a: &RunConfig, b: &RunConfig) -> Result<(SimulationLog, SimulationLog, Comparison)> {
    check_comparable(a, b)?;
    let log_a = run_simulation(a)?;
    let log_b = run_simulation(b)?;
    let comparison = compare_logs(&log_a, &log_b)?;
    Ok((log_a, log_b, comparison))
}

pub fn write_comparison_csv(comparison: &Comparison, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,iters_a,iters_b,ratio")?;
    for (step, ia, ib, ratio) in &comparison.rows {
        writeln!(out, "{step},{ia},{ib},{ratio}")?;
    }
    writeln!(out, "min,,,{}", comparison.min_ratio)?;
    writeln!(out, "median,,,{}", comparison.median_ratio)?;
    writeln!(out, "max,,,{}", comparison.max_ratio)?;
    out.flush()?;
    Ok(())
}

/// Render the three run charts into `outdir`: the state path, the first
/// control against its admissible band, and the iteration counts.
pub fn emit_plots(log: &SimulationLog, model: &dyn OcpModel, outdir: &Path) -> Result<()> {
    if log.records.is_empty() {
        return Err(Error::Config {
            what: "cannot plot an empty log".into(),
        });
    }
    std::fs::create_dir_all(outdir)?;

    let path: Vec<(f64, f64)> = log
        .records
        .iter()
        .map(|r| (r.state[0], *r.state.get(1).unwrap_or(&0.0)))
        .collect();
    let trajectory = crate::plot::Chart {
        title: "Closed-loop trajectory".into(),
        x_label: log.state_labels.first().cloned().unwrap_or_else(|| "x".into()),
        y_label: log.state_labels.get(1).cloned().unwrap_or_else(|| "".into()),
        series: vec![crate::plot::Series {
            label: "state".into(),
            color: "#1f6fb2",
            points: path,
        }],
        band: None,
    };
    std::fs::write(outdir.join("trajectory.svg"), trajectory.render())?;

    let control_points: Vec<(f64, f64)> =
        log.records.iter().map(|r| (r.t, r.control[0])).collect();
    let band: Vec<(f64, f64, f64)> = log
        .records
        .iter()
        .filter_map(|r| model.control_band(r.t).map(|(lo, hi)| (r.t, lo, hi)))
        .collect();
    let control = crate::plot::Chart {
        title: "Applied control".into(),
        x_label: "t".into(),
        y_label: log.control_labels.first().cloned().unwrap_or_else(|| "u".into()),
        series: vec![crate::plot::Series {
            label: log.control_labels.first().cloned().unwrap_or_else(|| "u".into()),
            color: "#b23c1f",
            points: control_points,
        }],
        band: (!band.is_empty()).then_some(band),
    };
    std::fs::write(outdir.join("control.svg"), control.render())?;

    let iteration_points: Vec<(f64, f64)> = log
        .records
        .iter()
        .map(|r| (r.step as f64, r.gmres_iters as f64))
        .collect();
    let iterations = crate::plot::Chart {
        title: "GMRES iterations per step".into(),
        x_label: "step".into(),
        y_label: "iterations".into(),
        series: vec![crate::plot::Series {
            label: "iterations".into(),
            color: "#2a7f3f",
            points: iteration_points,
        }],
        band: None,
    };
    std::fs::write(outdir.join("iterations.svg"), iterations.render())?;
    Ok(())
}
