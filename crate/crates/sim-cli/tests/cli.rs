use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgmres-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

const HEADER: &str = "step,t,x,y,u,u_d,normF,gmres_iters,precond_seconds,solve_seconds,regularized";

#[test]
fn short_run_writes_log_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = sim(&[
        "run", "--N", "10", "--steps", "3", "--out", out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    let text = stdout(&result);
    assert!(text.contains("model=mintime N=10"), "{text}");
    assert!(text.contains("3 steps completed"), "{text}");

    let csv = read(&out.join("run.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 4);
    for name in ["trajectory.svg", "control.svg", "iterations.svg"] {
        let body = read(&out.join(name));
        assert!(body.starts_with("<svg"), "{name}");
    }
}

#[test]
fn zero_steps_exits_cleanly_with_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    let result = sim(&[
        "run", "--N", "10", "--steps", "0", "--out", out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    assert_eq!(read(&out.join("run.csv")), format!("{HEADER}\n"));
    assert!(!out.join("trajectory.svg").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let result = sim(&["run", "--bogus"]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn unknown_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = sim(&[
        "run", "--model", "rocket", "--steps", "1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("rocket"));
}

#[test]
fn invalid_numerics_are_usage_errors() {
    for args in [
        ["run", "--dt", "0"],
        ["run", "--tol", "-1"],
        ["run", "--precond", "magic"],
    ] {
        let result = sim(&args);
        assert_eq!(result.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.conf");
    let out = dir.path().join("out");
    std::fs::write(
        &config,
        "# benchmark, shrunk\nN = 10\nsteps = 2\ndt = 0.002\n",
    )
    .unwrap();

    let result = sim(&[
        "run", "--config", config.to_str().unwrap(),
        "--steps", "3", "--out", out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    // steps from the flag, N from the file.
    assert!(stdout(&result).contains("N=10"));
    let csv = read(&out.join("run.csv"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "N = 10\nwarp = 9\n").unwrap();
    let result = sim(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("warp"));
}

#[test]
fn no_timings_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = sim(&[
            "run", "--N", "10", "--steps", "3", "--no-timings",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "stderr: {}", stderr(&result));
    }
    let a = read(&out_a.join("run.csv"));
    let b = read(&out_b.join("run.csv"));
    assert_eq!(a, b);
    assert!(a.lines().skip(1).all(|l| l.contains(",0.000000,0.000000,")));
}

#[test]
fn compare_tabulates_both_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let result = sim(&[
        "compare", "--N", "10", "--steps", "2", "--out", out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    let text = stdout(&result);
    assert!(text.contains("precond=sparse"));
    assert!(text.contains("precond=none"));
    assert!(text.contains("median"), "{text}");

    let csv = read(&out.join("comparison.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,iters_a,iters_b,ratio");
    assert_eq!(lines.len(), 1 + 2 + 3);
    assert!(lines[4].starts_with("median,,,"));
}

#[test]
fn compare_rejects_second_config_that_differs_beyond_precond() {
    let dir = tempfile::tempdir().unwrap();
    let config_b = dir.path().join("b.conf");
    std::fs::write(&config_b, "N = 11\nsteps = 2\nprecond = none\n").unwrap();
    let result = sim(&[
        "compare", "--N", "10", "--steps", "2",
        "--out", dir.path().to_str().unwrap(),
        "--config-b", config_b.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("differ"));
}
