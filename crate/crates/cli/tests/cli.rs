use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/test_network")
}

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbmc-sim"))
        .args(args)
        .env_remove("FBMC_SIM_THREADS")
        .output()
        .expect("binary runs")
}

fn run(grid: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--grid", grid.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    sim(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_study_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&bundled(), dir.path(), &["--study", "--seed", "42", "--hours", "168"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["hours"], 168);
    for f in ["fig_results.csv", "fig_fuaf_dev.csv", "prices.csv", "artifacts/d2.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
}

#[test]
fn missing_grid_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("no_such_grid");
    let o = run(&grid, &dir.path().join("out"), &["--study"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no_such_grid"), "{}", stderr(&o));
}

#[test]
fn d1_without_capacity_names_the_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&bundled(), dir.path(), &["--stage", "d1-ahc", "--hours", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("capacity.json") && msg.contains("--stage capacity"), "{msg}");
}

#[test]
fn stages_reuse_cached_artifacts_and_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let hours = ["--hours", "3", "--first-hour", "10"];
    for stage in ["d2", "capacity", "d1-shc", "d1-ahc", "d0"] {
        let mut extra = vec!["--stage", stage];
        extra.extend_from_slice(&hours);
        let o = run(&bundled(), dir.path(), &extra);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let art = dir.path().join("artifacts");
    let d2 = std::fs::read(art.join("d2.json")).unwrap();
    let d1 = std::fs::read(art.join("d1_ahc.json")).unwrap();
    let costs = std::fs::read(art.join("costs_ahc.json")).unwrap();

    let mut extra = vec!["--stage", "d1-ahc"];
    extra.extend_from_slice(&hours);
    assert!(run(&bundled(), dir.path(), &extra).status.success());
    let mut extra = vec!["--stage", "d0", "--setup", "ahc"];
    extra.extend_from_slice(&hours);
    assert!(run(&bundled(), dir.path(), &extra).status.success());

    assert_eq!(d2, std::fs::read(art.join("d2.json")).unwrap());
    assert_eq!(d1, std::fs::read(art.join("d1_ahc.json")).unwrap());
    assert_eq!(costs, std::fs::read(art.join("costs_ahc.json")).unwrap());
}

#[test]
fn artifacts_for_other_hours_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&bundled(), dir.path(), &["--stage", "d2", "--hours", "2"]).status.success());
    let o = run(&bundled(), dir.path(), &["--stage", "capacity", "--hours", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d2.json"), "{}", stderr(&o));
}

#[test]
fn identical_manifests_give_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let manifest = dir.path().join(format!("{name}.json"));
        let body = serde_json::json!({
            "grid": bundled(),
            "out": out,
            "seed": 42,
            "hours": 12,
            "stage": "full-study",
        });
        std::fs::write(&manifest, body.to_string()).unwrap();
        let o = sim(&["run", "--manifest", manifest.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(std::fs::read(out.join("summary.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn manifest_with_unknown_field_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    std::fs::write(&manifest, r#"{"grid": "x", "out": "y", "horizon": 3}"#).unwrap();
    let o = sim(&["run", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("horizon"), "{}", stderr(&o));
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fbmc-sim"))
        .args(["run", "--grid", bundled().to_str().unwrap(), "--out"])
        .arg(dir.path())
        .env("FBMC_SIM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("FBMC_SIM_THREADS"));
}

#[test]
fn out_of_range_threshold_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&bundled(), dir.path(), &["--stage", "d2", "--threshold", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn generator_reproduces_the_bundled_network() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["generate-network", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<_> = std::fs::read_dir(bundled())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for name in names {
        let expected = std::fs::read(bundled().join(&name)).unwrap();
        let actual = std::fs::read(dir.path().join(&name)).unwrap();
        assert!(expected == actual, "{name:?} differs from the bundled copy");
    }
}
