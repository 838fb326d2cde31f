//! Black-box tests of the command-line interface: output schemas, provenance
//! headers, configuration handling, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmf-link"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Provenance header lines preceding any table or summary.
fn assert_provenance(text: &str, seed: u64) {
    assert!(text.starts_with("# fmf-link v"), "missing version line:\n{text}");
    assert!(text.contains("# config_hash=0x"), "missing config hash:\n{text}");
    assert!(text.contains(&format!("# seed={seed}")), "missing seed line:\n{text}");
    assert!(text.contains("# quadrature:"), "missing quadrature line:\n{text}");
}

fn summary_value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no '{key}=' line in:\n{text}"))
}

#[test]
fn efficiency_prints_summary_to_stdout() {
    let out = run(&["efficiency", "--tx", "0,0", "--fiber-mode", "0,0", "--beta", "1.01"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert_provenance(&text, 0);
    assert_eq!(summary_value(&text, "status"), "ok");
    let eta: f64 = summary_value(&text, "efficiency").parse().unwrap();
    assert!(eta > 0.0 && eta <= 1.0, "efficiency {eta} out of range");
    for key in ["h_re", "h_im", "coupled_power", "aperture_power", "quadrature_error"] {
        summary_value(&text, key).parse::<f64>().unwrap();
    }
}

#[test]
fn sweep_beta_writes_csv_with_schema_and_notes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep-beta",
        "--tx",
        "0,0",
        "--beta",
        "0.8:1.2:0.1",
        "--seed",
        "7",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let text = fs::read_to_string(&csv).unwrap();
    assert_provenance(&text, 7);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "beta,eta_LP01,eta_LP02,eta_LP11,eta_LP21"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5, "expected 5 grid points:\n{text}");
    for row in rows {
        let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 5);
        assert!(fields[1] > 0.0, "self-coupling must be positive: {row}");
    }

    // argmax notes accompany the table on the other stream
    let notes = stdout(&out);
    for label in ["LP01", "LP02", "LP11", "LP21"] {
        assert!(
            notes.contains(&format!("argmax_eta_{label}=beta=")),
            "missing argmax note for {label}:\n{notes}"
        );
    }
}

#[test]
fn sweep_beta_to_stdout_keeps_notes_on_stderr() {
    let out = run(&["sweep-beta", "--tx", "0,1", "--beta", "1.0:1.2:0.1"]);
    assert!(out.status.success());
    let table = stdout(&out);
    assert_provenance(&table, 0);
    assert!(table.contains("\nbeta,eta_"), "no CSV header on stdout:\n{table}");
    assert!(!table.contains("argmax_eta_"), "notes leaked into the CSV stream");
    assert!(stderr(&out).contains("argmax_eta_"), "notes missing from stderr");
}

fn write_quadrature_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("test.cfg");
    fs::write(
        &path,
        "capacity.estimator = rayleigh_quadrature\ncapacity.quadrature_order = 4\n",
    )
    .unwrap();
    path
}

#[test]
fn capacity_summary_honors_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_quadrature_config(dir.path());
    let outfile = dir.path().join("capacity.txt");
    let out = run(&[
        "capacity",
        "--modes",
        "0,1",
        "--d-mm",
        "12",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outfile.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = fs::read_to_string(&outfile).unwrap();
    assert_provenance(&text, 0);
    assert_eq!(summary_value(&text, "status"), "ok");
    assert_eq!(summary_value(&text, "mode_set"), "0|1");
    assert_eq!(summary_value(&text, "scheme"), "zfbf");
    let cap: f64 = summary_value(&text, "capacity_bps").parse().unwrap();
    assert!(cap > 1e10 && cap < 1e13, "capacity {cap} implausible");
    // the deterministic estimator reports no sampling error
    assert_eq!(summary_value(&text, "std_error"), "0");
    assert_eq!(summary_value(&text, "singular"), "0");
    assert_eq!(summary_value(&text, "total"), "16");
}

#[test]
fn search_modeset_reports_table_and_best_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_quadrature_config(dir.path());
    let table_file = dir.path().join("search.csv");
    let out = run(&[
        "search-modeset",
        "--n",
        "2",
        "--scheme",
        "zfbf",
        "--d-mm",
        "8:12:1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        table_file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let text = fs::read_to_string(&table_file).unwrap();
    assert_provenance(&text, 0);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), "mode_set,d_mm,capacity_bps,std_error");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 15, "expected C(6,2) subsets:\n{text}");
    assert!(rows[0].starts_with("0|1,"), "combination order:\n{text}");

    let notes = stdout(&out);
    assert_eq!(summary_value(&notes, "status"), "ok");
    assert_eq!(summary_value(&notes, "best_set"), "0|1");
    summary_value(&notes, "best_d_mm").parse::<f64>().unwrap();
    summary_value(&notes, "best_capacity_bps").parse::<f64>().unwrap();
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("seeded.cfg");
    fs::write(&cfg, "run.seed = 3\n").unwrap();
    let out = run(&[
        "efficiency",
        "--tx",
        "0,0",
        "--fiber-mode",
        "0,0",
        "--beta",
        "1.0",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(out.status.success());
    assert_provenance(&stdout(&out), 11);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();

    let unknown = dir.path().join("unknown.cfg");
    fs::write(&unknown, "nonsense.key = 1\n").unwrap();
    let out = run(&[
        "--config",
        unknown.to_str().unwrap(),
        "selftest",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nonsense.key"), "stderr: {}", stderr(&out));

    let invalid = dir.path().join("invalid.cfg");
    fs::write(&invalid, "link.distance_m = -1\n").unwrap();
    let out = run(&["--config", invalid.to_str().unwrap(), "selftest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("link.distance_m"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn usage_errors_exit_with_code_two() {
    // inverted range
    let out = run(&["sweep-beta", "--tx", "0,0", "--beta", "2:1:0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!stderr(&out).is_empty());

    // duplicate azimuthal order
    let out = run(&["capacity", "--modes", "0,0", "--d-mm", "12"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("twice"), "stderr: {}", stderr(&out));

    // malformed mode index
    let out = run(&["efficiency", "--tx", "zero", "--fiber-mode", "0,0", "--beta", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compute_errors_exit_one_and_flush_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_quadrature_config(dir.path());
    let outfile = dir.path().join("failed.txt");
    // azimuthal order 9 exceeds the supported projection bank
    let out = run(&[
        "capacity",
        "--modes",
        "0,9",
        "--d-mm",
        "12",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outfile.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr(&out).is_empty());
    let text = fs::read_to_string(&outfile).unwrap();
    assert_provenance(&text, 0);
    assert!(
        summary_value(&text, "status").starts_with("error"),
        "status line should carry the error:\n{text}"
    );
}
