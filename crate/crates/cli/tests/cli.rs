use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use evac_cli::read_pgm;

fn evac(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evac"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("EVAC_OUT_DIR")
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn seed_flag_reaches_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evac(&["--preset", "paper-sec5", "--seed", "7", "--horizon", "0.5"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(tmp.path());
    assert_eq!(s["seed"], 7);
    assert!(tmp.path().join("metrics.csv").exists());
}

#[test]
fn invalid_dt_is_a_config_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"dt": -0.01}"#).unwrap();
    let o = evac(&["--preset", "paper-sec5", "--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt"));
}

#[test]
fn unknown_mode_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evac(&["--preset", "paper-sec5", "--mode", "teleport"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mode"));
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evac(
        &["--preset", "paper-sec5", "--horizon", "0.5", "--sweep", "robots=1,4,16", "--jobs", "3"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for n in [1, 4, 16] {
        let dir = tmp.path().join(format!("robots={n}"));
        assert_eq!(summary(&dir)["config"]["robots"], n);
    }
    let mut rdr = csv::Reader::from_path(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(rdr.records().count(), 3);
}

#[test]
fn seed_sweep_keeps_the_listed_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evac(&["--preset", "paper-sec5", "--horizon", "0.1", "--sweep", "seed=3,5"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(&tmp.path().join("seed=3"))["seed"], 3);
    assert_eq!(summary(&tmp.path().join("seed=5"))["seed"], 5);
}

#[test]
fn empty_sweep_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evac(&["--preset", "paper-sec5", "--sweep", "robots="], tmp.path());
    assert!(!o.status.success());
}

#[test]
fn heatmaps_parse_back_as_pgm() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evac(
        &["--preset", "paper-sec5", "--horizon", "0.2", "--snapshot-every", "10", "--emit-heatmaps"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let snaps = tmp.path().join("snapshots");
    let pgm: Vec<_> = fs::read_dir(&snaps)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    assert_eq!(pgm.len(), 2);
    for p in pgm {
        let (w, h, maxval, px) = read_pgm(&p).unwrap();
        assert_eq!((w, h, maxval), (30, 30, 255));
        assert_eq!(px.len(), 900);
        assert!(px.contains(&255) && px.contains(&0));
        let side = fs::read_to_string(p.with_extension("pgm.txt")).unwrap();
        assert!(side.starts_with("min ") && side.contains("\nmax "));
    }
}

#[test]
fn repeated_invocations_write_identical_trees() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--preset", "paper-sec5", "--horizon", "0.3", "--snapshot-every", "10", "--emit-heatmaps"];
    assert!(evac(&args, a.path()).status.success());
    assert!(evac(&args, b.path()).status.success());
    let mut files = Vec::new();
    collect(a.path(), a.path(), &mut files);
    assert!(files.len() > 5);
    for rel in files {
        assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap(), "{rel}");
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            collect(root, &p, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().into_owned());
        }
    }
}
