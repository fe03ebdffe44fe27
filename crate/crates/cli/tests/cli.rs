use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use weakpovm_cli::bundle::ResultBundle;
use weakpovm_cli::Status;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakpovm"))
        .args(args)
        .env("WEAKPOVM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bundle(dir: &Path) -> ResultBundle {
    let text = std::fs::read_to_string(dir.join("bundle.json")).unwrap();
    ResultBundle::from_json(&text).unwrap()
}

#[test]
fn validate_trine() {
    let out = run(&["validate", s(&data("trine.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("valid POVM with 3 elements"));
    assert!(stdout.contains("linearly independent"));
}

#[test]
fn non_hermitian_file_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"elements": [[[[1,0],[0,0]],[[0,0],[0,0]]], [[[0,0],[0.2,0.1]],[[0,0],[1,0]]]]}"#,
    )
    .unwrap();
    let out = run(&["validate", s(&path)]);
    assert_eq!(out.status.code(), Some(Status::ValidationFailed.code()));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("element 1"), "{stderr}");
    assert!(stderr.contains("(0, 1)"), "{stderr}");

    let missing = run(&["validate", "/nonexistent/povm.json"]);
    assert_eq!(missing.status.code(), Some(1));
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(run(&["validate", s(&path)]).status.code(), Some(1));
}

#[test]
fn decompose_z_basis_is_one_leaf() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["decompose", s(&data("z_basis.json")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let b = bundle(dir.path());
    let d = b.decomposition.unwrap();
    assert_eq!(d.leaves.len(), 1);
    assert_eq!(d.leaves[0].probability, 1.0);
    let c = &d.plans[0].conditional;
    for (i, row) in c.iter().enumerate() {
        for (k, &p) in row.iter().enumerate() {
            assert!((p - if i == k { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
    assert!(b.invariants_pass);
}

#[test]
fn decompose_half_identity_gives_two_even_leaves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["decompose", s(&data("half_identity.json")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let d = bundle(dir.path()).decomposition.unwrap();
    assert_eq!(d.leaves.len(), 2);
    for leaf in &d.leaves {
        assert!((leaf.probability - 0.5).abs() < 1e-12);
    }
}

#[test]
fn decompose_split_sic_has_small_leaves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["decompose", s(&data("split_sic.json")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let d = bundle(dir.path()).decomposition.unwrap();
    assert!(d.leaves.len() >= 2);
    assert!(d.leaves.iter().all(|l| l.labels.len() <= 4));
}

#[test]
fn simulate_z_on_zero_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        s(&data("z_basis.json")),
        "--state",
        s(&data("zero.json")),
        "--traj",
        "200",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let sim = bundle(dir.path()).simulation.unwrap();
    assert_eq!(sim.statistics.frequencies, vec![1.0, 0.0]);
    assert_eq!(sim.statistics.counts, vec![200, 0]);
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |dir: &Path| {
        vec![
            "simulate".to_string(),
            s(&data("sic.json")).to_string(),
            "--state".into(),
            "haar".into(),
            "--phi".into(),
            "0.3".into(),
            "--traj".into(),
            "300".into(),
            "--seed".into(),
            "11".into(),
            "--csv".into(),
            "--out".into(),
            s(dir).to_string(),
        ]
    };
    let run_in = |dir: &Path, threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_weakpovm"))
            .args(args(dir))
            .env("WEAKPOVM_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(run_in(a.path(), "1").status.code(), Some(0));
    assert_eq!(run_in(b.path(), "3").status.code(), Some(0));
    for name in ["bundle.json", "trajectories.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    let csv = std::fs::read_to_string(a.path().join("trajectories.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("trajectory,leaf,steps,vertex,output,final_infidelity")
    );
    assert_eq!(lines.count(), 300);
}

#[test]
fn other_seed_changes_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, seed) in [(a.path(), "1"), (b.path(), "2")] {
        let out = run(&[
            "simulate",
            s(&data("trine.json")),
            "--state",
            "haar",
            "--phi",
            "0.4",
            "--traj",
            "200",
            "--seed",
            seed,
            "--csv",
            "--out",
            s(dir),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let x = std::fs::read(a.path().join("trajectories.csv")).unwrap();
    let y = std::fs::read(b.path().join("trajectories.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn bundles_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        s(&data("split_sic.json")),
        "--state",
        s(&data("mixed.json")),
        "--phi",
        "0.4",
        "--traj",
        "200",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(dir.path().join("bundle.json")).unwrap();
    let b = ResultBundle::from_json(&text).unwrap();
    assert_eq!(b.to_json(), text);
    assert_eq!(ResultBundle::from_json(&b.to_json()).unwrap(), b);
    assert_eq!(b.config.trajectories, 200);
    assert_eq!(b.config.seed, 0);
    assert_eq!(b.config.walk.phi, 0.4);
    assert_eq!(b.config.walk.epsilon_vertex, 1e-3);
}

#[test]
fn statistical_failure_exit_code() {
    let out = run(&[
        "simulate",
        s(&data("trine.json")),
        "--state",
        s(&data("plus_x.json")),
        "--phi",
        "0.5",
        "--traj",
        "300",
        "--z-limit",
        "1e-6",
    ]);
    assert_eq!(out.status.code(), Some(Status::StatisticalFailed.code()));
    assert!(String::from_utf8(out.stdout).unwrap().contains("statistics: FAIL"));
}

#[test]
fn bad_walk_settings_are_validation_failures() {
    let trine = data("trine.json");
    for extra in [["--phi", "0.9"], ["--eps", "0.5"], ["--traj", "0"], ["--max-steps", "0"]] {
        let mut args = vec!["simulate", s(&trine), "--state", "haar"];
        args.extend(extra);
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{extra:?}");
    }
}

#[test]
fn oracle_depth_zero_and_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "oracle",
        s(&data("trine.json")),
        "--state",
        s(&data("plus_x.json")),
        "--phi",
        "0.3",
        "--depth",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let b = bundle(dir.path());
    assert_eq!(b.oracle.len(), 2);
    let d0 = &b.oracle[0];
    assert_eq!(d0.total_probability, 1.0);
    assert_eq!(d0.components[0].report.string_count, 1);

    // One step from the center on |+x>: each outcome moves toward its own
    // vertex, with probabilities (1 + s)/3 and (1 - s/2)/3, s = sin(phi).
    let d1 = &b.oracle[1];
    assert_eq!(d1.components[0].report.string_count, 3);
    assert!((d1.total_probability - 1.0).abs() < 1e-12);
    let m = &d1.components[0].report.vertex_masses;
    let sin = 0.3f64.sin();
    assert!((m[0] - (1.0 + sin) / 3.0).abs() < 1e-12);
    assert!((m[1] - (1.0 - sin / 2.0) / 3.0).abs() < 1e-12);
    assert!((m[2] - (1.0 - sin / 2.0) / 3.0).abs() < 1e-12);

    let csv = std::fs::read_to_string(dir.path().join("tv_by_depth.csv")).unwrap();
    assert!(csv.starts_with("depth,strings,total_probability,absorbed_mass,total_variation\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn oracle_rejects_haar_and_deep_guard() {
    let out = run(&["oracle", s(&data("trine.json")), "--state", "haar", "--depth", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&[
        "oracle",
        s(&data("sic.json")),
        "--state",
        s(&data("zero.json")),
        "--depth",
        "11",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("strings"));
}

#[test]
fn help_states_defaults() {
    let out = run(&["simulate", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["0.1", "0.001", "20000", "[default: 0]", "eigen-ensemble", "haar"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
    let top = String::from_utf8(run(&["--help"]).stdout).unwrap();
    assert!(top.contains("WEAKPOVM_THREADS"));
}
