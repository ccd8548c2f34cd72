use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sector-homog"));
    c.env_remove("SECTOR_HOMOG_THREADS");
    c
}

fn run_with(dir: &Path, experiment: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    bin()
        .arg(experiment)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("runs"))
        .args(extra)
        .output()
        .unwrap()
}

fn run_dir(out: &Output) -> std::path::PathBuf {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap().trim().into()
}

const CELL_IDENTITY: &str = r#"{
  "domain": {"omega_over_pi": 1.0},
  "coeff": {"kind": "identity"},
  "experiment": {"kind": "cell", "cell_grid": 32}
}"#;

#[test]
fn cell_identity_gives_identity_abar() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(&run_with(
        tmp.path(),
        "cell",
        CELL_IDENTITY,
        &["--threads", "1"],
    ));
    let csv = fs::read_to_string(dir.join("abar.csv")).unwrap();
    let mut lines = csv.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# config_hash="));
    assert!(dir.ends_with(first.trim_start_matches("# config_hash=")));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "row,col,value");
    assert_eq!(&rows[1..], &["1,1,1.0", "1,2,0.0", "2,1,0.0", "2,2,1.0"]);
    let snapshot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(snapshot["experiment"]["cell_grid"], 32);
    assert_eq!(snapshot["solver"]["tol"], 1e-10);
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "domain": {"omega_over_pi": 1.5},
      "coeff": {"kind": "checkerboard", "contrast": 4.0},
      "experiment": {"kind": "cell", "cell_grid": 32}
    }"#;
    let a = run_dir(&run_with(tmp.path(), "cell", cfg, &["--threads", "1"]));
    let first: Vec<(String, Vec<u8>)> = ["abar.csv", "phi_1.csv", "cell.json"]
        .iter()
        .map(|f| (f.to_string(), fs::read(a.join(f)).unwrap()))
        .collect();
    let b = run_dir(&run_with(tmp.path(), "cell", cfg, &["--threads", "1"]));
    assert_eq!(a, b);
    for (f, bytes) in first {
        assert_eq!(fs::read(b.join(&f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn extend_check_flux_is_small_on_half_plane() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "domain": {"omega_over_pi": 1.0},
      "coeff": {"kind": "identity"},
      "experiment": {"kind": "extend-check"}
    }"#;
    let dir = run_dir(&run_with(tmp.path(), "extend-check", cfg, &[]));
    for field in ["vortex", "stream"] {
        let csv = fs::read_to_string(dir.join(format!("flux_{field}.csv"))).unwrap();
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "r,flux");
        for row in &rows[1..] {
            let flux: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
            assert!(flux.abs() <= 1e-6, "{field}: {row}");
        }
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let radial = report
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "radial")
        .unwrap();
    assert_eq!(radial["detector_fires"], true);
}

#[test]
fn gamma_recovery_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "domain": {"omega_over_pi": 1.5},
      "mesh": {"h": 0.04, "refinements": 1},
      "coeff": {"kind": "identity"},
      "experiment": {"kind": "gamma-recovery", "coefficients": [1.0, 0.5]}
    }"#;
    let dir = run_dir(&run_with(tmp.path(), "gamma-recovery", cfg, &[]));
    let csv = fs::read_to_string(dir.join("gamma.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "level,num_vertices,n,gamma,exact,error");
    assert_eq!(rows.len(), 1 + 2 * 2);
}

#[test]
fn bad_configs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = r#"{"domain": {"omega_over_pi": 1.0}, "coeff": {"kind": "identity"},
                      "experiment": {"kind": "cell"}, "colour": "red"}"#;
    let out = run_with(tmp.path(), "cell", unknown, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[config]"));
    let out = run_with(tmp.path(), "gain", CELL_IDENTITY, &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_with(tmp.path(), "plots", CELL_IDENTITY, &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_with(tmp.path(), "cell", CELL_IDENTITY, &["--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("config.json");
    fs::write(&path, CELL_IDENTITY).unwrap();
    let out = bin()
        .env("SECTOR_HOMOG_THREADS", "0")
        .args(["cell", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .env("SECTOR_HOMOG_THREADS", "2")
        .args(["cell", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
}
