use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use compact_wave::output::{decode_field, parse_table_csv, SnapshotManifest};

fn cwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwave")).args(args).output().expect("spawn cwave")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn converge_prints_the_example1_table() {
    let o = cwave(&["converge", "--problem", "example1", "--levels", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("N,M,e_C,r_C,p_C,e_C10,r_C10,p_C10,e_C1,r_C1,p_C1"));
    let rows = parse_table_csv(&text).unwrap();
    assert_eq!(rows.iter().map(|r| (r.n, r.m)).collect::<Vec<_>>(), vec![(5, 20), (10, 40), (20, 80)]);
    let reference = [9.499e-6, 2.211e-5, 2.786e-5];
    for (c, expect) in reference.iter().enumerate() {
        let got = rows[1].values[3 * c].unwrap();
        assert!((got - expect).abs() <= 0.02 * expect, "column {c}: {got}");
    }
    assert!(rows[0].values[1].is_none());
}

#[test]
fn converge_text_table_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.txt");
    let o = cwave(&["converge", "--problem", "example1", "--version", "B", "--levels", "2", "--format", "text", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(path).unwrap();
    assert!(text.contains("e_C"));
    assert!(text.lines().count() >= 3);
}

#[test]
fn info_reports_courant_numbers() {
    for (problem, nu_c, nu_cs) in [("example1", "1.0607", "7.8373"), ("example2", "0.8485", "1.6971")] {
        let o = cwave(&["info", "--problem", problem]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        assert!(text.lines().any(|l| l.starts_with("nu(c) ") && l.ends_with(nu_c)), "{text}");
        assert!(text.lines().any(|l| l.starts_with("nu(c,sigma)") && l.ends_with(nu_cs)), "{text}");
    }
}

#[test]
fn strict_courant_turns_the_warning_into_an_error() {
    let o = cwave(&["--strict-courant", "info", "--problem", "example1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("exceeds"), "{}", stderr(&o));
}

#[test]
fn run_writes_fields_images_sections_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = cwave(&[
        "run", "--problem", "example1", "--n", "10", "--m", "40",
        "--snapshots", "0,0.6,1.2", "--images", "--image-levels", "8",
        "--sections", "x1=1.0", "--outdir", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("e_C = "));

    let manifest = SnapshotManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.snapshots.iter().map(|s| s.level).collect::<Vec<_>>(), vec![0, 20, 40]);
    for s in &manifest.snapshots {
        let (nodes, values) = decode_field(&fs::read(out.join(&s.field)).unwrap()).unwrap();
        assert_eq!(nodes, vec![11, 11]);
        assert!(values.iter().all(|v| v.is_finite()));
        let pgm = fs::read(out.join(s.image.as_ref().unwrap())).unwrap();
        assert!(pgm.starts_with(b"P5\n11 11\n255\n"));
        let section = fs::read_to_string(out.join(&s.sections[0])).unwrap();
        assert_eq!(section.lines().next(), Some("x2,v"));
        assert_eq!(section.lines().count(), 12);
    }
}

#[test]
fn run_reads_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"problem": "example2", "N": 20, "M": 40, "version": "B", "output": {"snapshots": [1.2]}}"#).unwrap();
    let outdir = dir.path().join("out");
    let o = cwave(&["run", "--config", cfg.to_str().unwrap(), "--field-format", "csv-grid", "--outdir", outdir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(Path::new(&outdir.join("snapshot_m00040.csv")).exists());
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"problem": "example1", "N": 10, "gama": 3}"#).unwrap();
    let o = cwave(&["info", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("gama"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(cwave(&["converge"]).status.code(), Some(2));
    assert_eq!(cwave(&["info", "--problem", "example9"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let o = cwave(&["run", "--problem", "example1", "--snapshots", "5", "--outdir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(cwave(&["--help"]).status.code(), Some(0));
}

#[test]
fn divergence_exits_with_4_and_keeps_the_last_stable_level() {
    let dir = tempfile::tempdir().unwrap();
    let o = cwave(&["run", "--problem", "example1", "--n", "40", "--m", "20", "--outdir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("divergence"));
    assert!(dir.path().join("last_stable_m00004.bin").exists());
}

#[test]
fn check_runs_every_probe() {
    let o = cwave(&["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    for probe in ["samarskii", "trunc1", "trunc2", "tridiag", "coefficients"] {
        assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains(probe)), "{probe}: {text}");
    }
}
