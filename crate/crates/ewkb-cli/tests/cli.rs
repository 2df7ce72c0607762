//! End-to-end tests of the `ewkb` binary: exit codes, artifact layout,
//! manifest echo, and the determinism contract, all through real process
//! spawns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ewkb(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ewkb"));
    cmd.args(args);
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary spawns")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

/// Data rows of a CSV artifact (header dropped), split on commas.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).expect("CSV artifact exists");
    text.lines()
        .skip(1)
        .map(|line| line.split(',').map(str::to_string).collect())
        .collect()
}

fn report_probability(dir: &Path) -> f64 {
    let text = std::fs::read_to_string(dir.join("transition.toml")).expect("report exists");
    let table: toml::Table = toml::from_str(&text).expect("report parses");
    table["probability"].as_float().expect("probability is a float")
}

fn manifest(dir: &Path) -> toml::Table {
    let text = std::fs::read_to_string(dir.join("run_manifest.toml")).expect("manifest exists");
    toml::from_str(&text).expect("manifest parses")
}

#[test]
fn turning_points_for_one_pair_sit_at_plus_minus_i() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewkb(
        &["turning-points", "--builtin", "nlzsm", "--out-dir", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    // stdout is exactly one summary line
    assert_eq!(stdout(&out).trim_end().lines().count(), 1);

    let rows = csv_rows(&dir.path().join("turning_points.csv"));
    assert_eq!(rows.len(), 2);
    let mut signs = Vec::new();
    for row in &rows {
        assert_eq!((row[0].as_str(), row[1].as_str()), ("0", "1"));
        let re: f64 = row[2].parse().unwrap();
        let im: f64 = row[3].parse().unwrap();
        assert!(re.abs() < 1e-9 && (im.abs() - 1.0).abs() < 1e-9, "row {row:?}");
        assert_eq!(row[4], "1");
        signs.push(im.signum());
    }
    signs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(signs, [-1.0, 1.0]);
}

#[test]
fn turning_points_for_three_pairs_sit_on_the_unit_circle() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewkb(
        &[
            "turning-points",
            "--builtin",
            "nlzsm",
            "--param",
            "n=3",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let rows = csv_rows(&dir.path().join("turning_points.csv"));
    assert_eq!(rows.len(), 6);
    for row in &rows {
        let re: f64 = row[2].parse().unwrap();
        let im: f64 = row[3].parse().unwrap();
        assert!((re.hypot(im) - 1.0).abs() < 1e-6, "|t| != 1 in {row:?}");
    }
}

#[test]
fn malformed_model_files_fail_validation_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "entries = [not toml").unwrap();
    let out_dir = dir.path().join("out");
    let out = ewkb(
        &[
            "turning-points",
            "--model",
            bad.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(!out_dir.join("turning_points.csv").exists());
    assert!(!out_dir.join("run_manifest.toml").exists());

    // Well-formed TOML that violates the schema fails the same way.
    std::fs::write(&bad, "dimension = 2\n").unwrap();
    let out = ewkb(
        &[
            "turning-points",
            "--model",
            bad.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(!out_dir.join("run_manifest.toml").exists());
}

#[test]
fn degenerate_graphs_exit_4_unless_escalation_is_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_str().unwrap().to_string();
    let base = ["stokes-graph", "--builtin", "nlzsm", "--param", "n=3", "--out-dir", &path];

    let out = ewkb(&base, &[]);
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("degenerate Stokes graph"));
    assert!(!dir.path().join("stokes_graph.csv").exists());

    let mut escalated = base.to_vec();
    escalated.push("--auto-epsilon");
    let out = ewkb(&escalated, &[]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("6 crossings"));
    assert!(dir.path().join("stokes_graph.csv").exists());
    assert!(dir.path().join("stokes_graph.svg").exists());
}

#[test]
fn an_explicit_epsilon_resolves_the_three_pair_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewkb(
        &[
            "stokes-graph",
            "--builtin",
            "nlzsm",
            "--param",
            "n=3",
            "--epsilon",
            "0.05",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("6 crossings"), "summary: {}", stdout(&out));
    let m = manifest(dir.path());
    let params = m["parameters"].as_table().unwrap();
    assert_eq!(params["epsilon_used"].as_float(), Some(0.05));
}

#[test]
fn the_shipped_three_level_model_crosses_six_times() {
    let dir = tempfile::tempdir().unwrap();
    let model = models_dir().join("lzsm3.toml");
    let out = ewkb(
        &[
            "stokes-graph",
            "--model",
            model.to_str().unwrap(),
            "--auto-epsilon",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("6 crossings"), "summary: {}", stdout(&out));

    let graph_csv = std::fs::read_to_string(dir.path().join("stokes_graph.csv")).unwrap();
    assert!(graph_csv.starts_with("line_id,re_t,im_t,dominant_level\n"));
    let svg = std::fs::read_to_string(dir.path().join("stokes_graph.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn ddp_reproduces_the_reference_probability() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewkb(
        &[
            "transition",
            "--builtin",
            "nlzsm",
            "--method",
            "ddp",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let p = report_probability(dir.path());
    // At these defaults the exact transition probability is e^{-pi}.
    assert!((p - (-std::f64::consts::PI).exp()).abs() < 1e-9, "P = {p}");
}

#[test]
fn survival_is_unity_on_a_crossing_free_window() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewkb(
        &[
            "transition",
            "--builtin",
            "lzsm3",
            "--method",
            "ewkb",
            "--from",
            "1",
            "--to",
            "1",
            "--t0",
            "2",
            "--t1",
            "8",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let p = report_probability(dir.path());
    assert!((p - 1.0).abs() < 1e-12, "P = {p}");
}

#[test]
fn ewkb_and_numeric_agree_on_the_three_level_model() {
    let model = models_dir().join("lzsm3.toml");
    let window = ["--from", "2", "--to", "1", "--t0", "-14", "--t1", "8"];
    let mut probabilities = Vec::new();
    for method in ["ewkb", "numeric"] {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec!["transition", "--model", model.to_str().unwrap(), "--method", method];
        args.extend_from_slice(&window);
        args.extend_from_slice(&["--rel-tol", "1e-8", "--abs-tol", "1e-10"]);
        args.extend_from_slice(&["--out-dir", dir.path().to_str().unwrap()]);
        let out = ewkb(&args, &[]);
        assert_eq!(code(&out), 0, "{method} stderr: {}", stderr(&out));
        probabilities.push(report_probability(dir.path()));
    }
    let (ewkb_p, numeric_p) = (probabilities[0], probabilities[1]);
    assert!(ewkb_p > 0.0 && ewkb_p < 1.0 && numeric_p > 0.0 && numeric_p < 1.0);
    assert!(
        (ewkb_p - numeric_p).abs() < 0.05,
        "ewkb {ewkb_p} vs numeric {numeric_p} disagree beyond the leading-order budget"
    );
}

#[test]
fn sweep_reruns_are_byte_identical() {
    let model = models_dir().join("lzsm3.toml");
    let mut artifacts: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let out = ewkb(
            &[
                "sweep",
                "--model",
                model.to_str().unwrap(),
                "--vary",
                "d23=0.45:0.55:2",
                "--methods",
                "ewkb",
                "--from",
                "2",
                "--to",
                "1",
                "--out-dir",
                dir.path().to_str().unwrap(),
            ],
            &[("EWKB_WORKERS", "2")],
        );
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        artifacts.push((
            std::fs::read(dir.path().join("sweep.csv")).unwrap(),
            std::fs::read(dir.path().join("run_manifest.toml")).unwrap(),
        ));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "sweep.csv differs between reruns");
    assert_eq!(artifacts[0].1, artifacts[1].1, "run_manifest.toml differs between reruns");
}

#[test]
fn sweep_rows_carry_per_point_errors_without_aborting() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewkb(
        &[
            "sweep",
            "--builtin",
            "lzsm3",
            "--vary",
            "d23=0.4:0.6:2",
            "--methods",
            "ewkb,ddp",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("2 failed points"));

    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    for row in &rows {
        assert_eq!(row.len(), 5, "row {row:?}");
        match row[2].as_str() {
            "ewkb" => {
                let p: f64 = row[3].parse().unwrap();
                assert!(p.is_finite() && row[4].is_empty(), "row {row:?}");
            }
            "ddp" => {
                assert_eq!(row[3], "nan");
                assert!(row[4].contains("two-level"), "row {row:?}");
            }
            other => panic!("unexpected method {other}"),
        }
    }
}

#[test]
fn zero_step_sweeps_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewkb(
        &[
            "sweep",
            "--builtin",
            "lzsm3",
            "--vary",
            "d23=0.1:1.0:0",
            "--methods",
            "ewkb",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("step count"));
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn manifests_echo_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewkb(
        &[
            "transition",
            "--builtin",
            "nlzsm",
            "--method",
            "gddp",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let m = manifest(dir.path());
    assert_eq!(m["command"].as_str(), Some("transition"));
    assert_eq!(m["model"].as_str(), Some("builtin:nlzsm"));
    assert_eq!(m["seedless"].as_bool(), Some(true));
    let outputs: Vec<&str> =
        m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["transition.toml"]);

    // Defaults are echoed as resolved values, not left implicit.
    let params = m["parameters"].as_table().unwrap();
    assert_eq!(params["method"].as_str(), Some("gddp"));
    assert_eq!(params["eta"].as_float(), Some(1.0));
    assert_eq!(params["epsilon"].as_float(), Some(0.0));
    assert_eq!(params["from"].as_integer(), Some(0));
    assert_eq!(params["to"].as_integer(), Some(1));
    assert_eq!(params["t0"].as_float(), Some(-20.0));
    assert_eq!(params["t1"].as_float(), Some(20.0));
    assert_eq!(params["rel_tol"].as_float(), Some(1e-10));
}

#[test]
fn invalid_worker_counts_warn_and_proceed() {
    let dir = tempfile::tempdir().unwrap();
    let out = ewkb(
        &["turning-points", "--builtin", "nlzsm", "--out-dir", dir.path().to_str().unwrap()],
        &[("EWKB_WORKERS", "many")],
    );
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("ignoring EWKB_WORKERS"));
}

#[test]
fn usage_errors_exit_1() {
    // No model source at all.
    let out = ewkb(&["turning-points"], &[]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));

    // Conflicting model sources.
    let out = ewkb(
        &["turning-points", "--model", "x.toml", "--builtin", "nlzsm"],
        &[],
    );
    assert_eq!(code(&out), 1);

    // Unknown method value.
    let out = ewkb(&["transition", "--builtin", "nlzsm", "--method", "magic"], &[]);
    assert_eq!(code(&out), 1);

    // Malformed --param.
    let out = ewkb(&["turning-points", "--builtin", "nlzsm", "--param", "n"], &[]);
    assert_eq!(code(&out), 1);
}
