use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uhpsot"))
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .expect("fixtures/ ships with the repository")
}

#[test]
fn rejects_unknown_arguments_with_usage_error() {
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["track"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "missing sequence dir");
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "unknown subcommand");
}

#[test]
fn track_is_deterministic_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = bin()
            .args(["track", fixtures().join("static").to_str().unwrap(), "--out"])
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let boxes_a = std::fs::read(a.join("static.txt")).unwrap();
    let boxes_b = std::fs::read(b.join("static.txt")).unwrap();
    assert_eq!(boxes_a, boxes_b, "box files must be byte-identical");
    assert!(!boxes_a.is_empty());
}

#[test]
fn bench_runs_all_sequences_and_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["bench", fixtures().to_str().unwrap(), "--jobs", "2", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("3 sequences"), "stdout: {stdout}");
    for name in ["static", "linear", "occlusion"] {
        assert!(tmp.path().join(format!("{name}.txt")).is_file());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["sequences"].as_array().unwrap().len(), 3);
    assert!(summary["mean_auc"].as_f64().unwrap() > 0.5);
}

#[test]
fn bench_results_do_not_depend_on_job_count() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let out = bin()
            .args(["bench", fixtures().to_str().unwrap(), "--jobs", jobs, "--out"])
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["static", "linear", "occlusion"] {
        let fa = std::fs::read(a.join(format!("{name}.txt"))).unwrap();
        let fb = std::fs::read(b.join(format!("{name}.txt"))).unwrap();
        assert_eq!(fa, fb, "{name} differs between job counts");
    }
}

#[test]
fn plot_renders_curves_from_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let bench_dir = tmp.path().join("bench");
    let out = bin()
        .args(["bench", fixtures().to_str().unwrap(), "--seq", "static", "--out"])
        .arg(&bench_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let plot_dir = tmp.path().join("plots");
    let out = bin()
        .args(["plot", bench_dir.join("summary.json").to_str().unwrap(), "--out"])
        .arg(&plot_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["success.svg", "precision.svg", "success.csv", "precision.csv"] {
        let body = std::fs::read_to_string(plot_dir.join(file)).unwrap();
        assert!(!body.is_empty());
        if file.ends_with(".svg") {
            assert!(body.starts_with("<svg"), "{file} is not an svg");
            assert!(body.contains("polyline"), "{file} has no curves");
        }
    }
}
