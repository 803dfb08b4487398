use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn confspec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confspec"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run confspec")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn spectrum_of_sphere_has_first_cluster_of_three_near_8pi() {
    let dir = tempfile::tempdir().unwrap();
    let out = confspec(
        &[
            "spectrum",
            "--gen",
            "icosphere:3",
            "--density",
            "uniform",
            "-k",
            "10",
            "--out",
            "sp",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = json(&dir.path().join("sp/spectrum.json"));
    let l1 = summary["lambda1_area"].as_f64().unwrap();
    assert!(
        (l1 / (8.0 * std::f64::consts::PI) - 1.0).abs() < 0.01,
        "{l1}"
    );
    assert_eq!(summary["first_cluster_size"], 3);
    let csv = fs::read_to_string(dir.path().join("sp/spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn spectrum_of_square_torus_has_multiplicity_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = confspec(
        &[
            "spectrum",
            "--gen",
            "flat-torus:square:24",
            "-k",
            "6",
            "--density",
            "uniform",
            "--out",
            ".",
            "--dump-matrices",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let summary = json(&dir.path().join("spectrum.json"));
    let l1 = summary["lambda1_area"].as_f64().unwrap();
    assert!(
        (l1 / (4.0 * std::f64::consts::PI.powi(2)) - 1.0).abs() < 0.01,
        "{l1}"
    );
    assert_eq!(summary["first_cluster_size"], 4);
    let mtx = fs::read_to_string(dir.path().join("mass.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real"));
    assert!(dir.path().join("stiffness.mtx").exists());
}

#[test]
fn non_manifold_mesh_exits_with_input_error_naming_the_edge() {
    let dir = tempfile::tempdir().unwrap();
    let off = "OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 1\n3 0 1 2\n3 1 0 3\n3 0 1 4\n";
    fs::write(dir.path().join("bad.off"), off).unwrap();
    let out = confspec(&["spectrum", "--mesh", "bad.off"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("edge (0, 1)"), "{err}");
}

#[test]
fn bad_flags_exit_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(confspec(&["spectrum"], dir.path()).status.code(), Some(2));
    assert_eq!(
        confspec(&["spectrum", "--gen", "icosphere:x"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        confspec(
            &["maximize", "--gen", "icosphere:1", "--floor", "0.3"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        confspec(
            &["maximize", "--gen", "icosphere:1", "--damping", "2"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(confspec(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn gen_then_stats_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        confspec(
            &["gen", "--gen", "icosphere:2", "--out", "s.off"],
            dir.path()
        )
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        confspec(
            &[
                "gen",
                "--gen",
                "flat-torus:equilateral:6",
                "--out",
                "t.json"
            ],
            dir.path()
        )
        .status
        .code(),
        Some(0)
    );
    let out = confspec(&["stats", "--mesh", "s.off"], dir.path());
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["stats"]["vertices"], 162);
    assert_eq!(stats["stats"]["genus"], 0);
    let out = confspec(&["stats", "--mesh", "t.json"], dir.path());
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["stats"]["genus"], 1);
    assert_eq!(
        confspec(
            &["gen", "--gen", "flat-torus:square:6", "--out", "t.off"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn maximize_writes_all_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "maximize",
            "--gen",
            "icosphere:2",
            "--density",
            "random:11",
            "--seed",
            "5",
            "--out",
            out,
        ]
    };
    assert_eq!(confspec(&args("a"), dir.path()).status.code(), Some(0));
    assert_eq!(confspec(&args("b"), dir.path()).status.code(), Some(0));
    for name in [
        "trace.csv",
        "density.json",
        "certificate.json",
        "result.json",
        "frame.json",
    ] {
        assert!(dir.path().join("a").join(name).exists(), "{name}");
    }
    for name in ["density.json", "certificate.json", "frame.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    let cert = json(&dir.path().join("a/certificate.json"));
    assert_eq!(cert["schema"], "confspec-cert-1");
    let l1 = cert["lambda1_area"].as_f64().unwrap();
    assert!(
        (l1 / (8.0 * std::f64::consts::PI) - 1.0).abs() < 0.02,
        "{l1}"
    );
    let result = json(&dir.path().join("a/result.json"));
    assert!(
        ["converged", "collapse", "iteration_cap"].contains(&result["status"].as_str().unwrap())
    );
    let trace = fs::read_to_string(dir.path().join("a/trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "iter,N,lambda1_area,EN_measure,ENeg_measure,step,frame_obj,wall_ms"
    );

    // The density sidecar feeds back into certify on the same mesh.
    let out = confspec(
        &[
            "certify",
            "--gen",
            "icosphere:2",
            "--density",
            "a/density.json",
            "--out",
            "c",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let again = json(&dir.path().join("c/certificate.json"));
    assert!((again["lambda1_area"].as_f64().unwrap() - l1).abs() < 1e-6 * l1);

    let out = confspec(
        &[
            "certify",
            "--gen",
            "icosphere:3",
            "--density",
            "a/density.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn negative_floor_run_keeps_negative_set_small() {
    let dir = tempfile::tempdir().unwrap();
    let out = confspec(
        &[
            "maximize",
            "--gen",
            "icosphere:2",
            "--density",
            "random:3",
            "--floor",
            "-0.5",
            "--out",
            "m",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let cert = json(&dir.path().join("m/certificate.json"));
    assert!(cert["neg_set_measure"].as_f64().unwrap() < 0.01);
    let result = json(&dir.path().join("m/result.json"));
    assert_eq!(result["config"]["floor"], "NegativeHalf");
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "gen = \"icosphere:1\"\nn_schedule = [4.0, 8.0]\nmax_iters = 3\ndamping = 0.25\nout = \"fromfile\"\n",
    )
    .unwrap();
    let out = confspec(
        &["--config", "run.toml", "maximize", "--damping", "0.75"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let result = json(&dir.path().join("fromfile/result.json"));
    assert_eq!(result["config"]["damping"], 0.75);
    assert_eq!(result["config"]["max_iters"], 3);
    assert_eq!(
        result["config"]["n_schedule"],
        serde_json::json!([4.0, 8.0])
    );

    fs::write(dir.path().join("bad.toml"), "colour = 3\n").unwrap();
    let out = confspec(
        &["--config", "bad.toml", "stats", "--gen", "icosphere:1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
