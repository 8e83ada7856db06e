use std::fs;
use std::path::Path;

use graddiag::cli::{run_with, EXIT_ASSERT, EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK};

fn run(args: &[&str], out: &Path) -> i32 {
    let mut argv = vec!["graddiag".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(out.display().to_string());
    run_with(argv, None)
}

#[test]
fn unknown_flag_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["parity", "--bogus", "1"], dir.path()), EXIT_CONFIG);
    assert_eq!(run(&["nonsense"], dir.path()), EXIT_CONFIG);
    assert_eq!(run(&["pwl", "--variant", "cubic"], dir.path()), EXIT_CONFIG);
}

#[test]
fn parity_sweep_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["parity", "--dims", "3,4", "--iters", "60", "--seed", "7"];
    assert_eq!(run(&args, a.path()), EXIT_OK);
    assert_eq!(run(&args, b.path()), EXIT_OK);
    for d in ["d3", "d4"] {
        let rel = format!("parity/{d}/metrics.csv");
        let x = fs::read(a.path().join(&rel)).unwrap();
        assert_eq!(x, fs::read(b.path().join(&rel)).unwrap());
        assert!(a.path().join(format!("parity/{d}/summary.json")).exists());
    }
    let manifest = a.path().join("parity/manifest.json");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("\"seed\": 7"));

    let c = tempfile::tempdir().unwrap();
    let m = manifest.display().to_string();
    assert_eq!(run(&["--from-manifest", &m, "parity"], c.path()), EXIT_OK);
    assert_eq!(
        fs::read(a.path().join("parity/d3/metrics.csv")).unwrap(),
        fs::read(c.path().join("parity/d3/metrics.csv")).unwrap()
    );
}

#[test]
fn seed_changes_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(
        &["parity", "--dims", "4", "--iters", "40", "--seed", "1"],
        a.path(),
    );
    run(
        &["parity", "--dims", "4", "--iters", "40", "--seed", "2"],
        b.path(),
    );
    assert_ne!(
        fs::read(a.path().join("parity/d4/summary.json")).unwrap(),
        fs::read(b.path().join("parity/d4/summary.json")).unwrap()
    );
}

#[test]
fn exit_codes_for_divergence_and_assert() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(
        &[
            "flat",
            "--variant",
            "end_to_end",
            "--lr",
            "10",
            "--iters",
            "300",
        ],
        dir.path(),
    );
    assert_eq!(code, EXIT_DIVERGED);
    let code = run(
        &["parity", "--dims", "5", "--iters", "1", "--assert"],
        dir.path(),
    );
    assert_eq!(code, EXIT_ASSERT);
    let code = run(
        &["closedform", "inverse", "--n", "5,9", "--assert"],
        dir.path(),
    );
    assert_eq!(code, EXIT_OK);
}

#[test]
fn underscore_flag_aliases() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(
        &[
            "pwl",
            "--variant",
            "conv_cond",
            "--batch_size",
            "10",
            "--number_of_iterations",
            "50",
            "--learning_rate",
            "0.99",
        ],
        dir.path(),
    );
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(dir.path().join("pwl/manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["spec"]["conv_cond"]["batch_size"], 10);
    assert_eq!(v["spec"]["conv_cond"]["iterations"], 50);
    assert_eq!(v["spec"]["conv_cond"]["learning_rate"], 0.99);
}

#[test]
fn cond_writes_csv_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["closedform", "cond", "--n", "10,20,40"], dir.path()),
        EXIT_OK
    );
    let csv = fs::read_to_string(dir.path().join("closedform/cond/kappa.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("n,kappa"));
    assert_eq!(csv.lines().count(), 4);
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("closedform/cond/summary.json")).unwrap(),
    )
    .unwrap();
    assert!(summary["loglog_slope"].as_f64().unwrap() > 3.0);
}

#[test]
fn out_env_takes_precedence() {
    let flag = tempfile::tempdir().unwrap();
    let env = tempfile::tempdir().unwrap();
    let argv = [
        "graddiag",
        "closedform",
        "inverse",
        "--n",
        "4",
        "--out",
        flag.path().to_str().unwrap(),
    ];
    assert_eq!(run_with(argv, Some(env.path().to_path_buf())), EXIT_OK);
    assert!(env.path().join("closedform/inverse/manifest.json").exists());
    assert!(!flag.path().join("closedform").exists());
}

#[test]
fn render_is_deterministic_and_labelled() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [
        (
            "alpha",
            "iteration,train_loss,eval_metric\n1,0.5,0.25\n2,0.4,0.5\n",
        ),
        (
            "beta",
            "iteration,train_loss,eval_metric\n1,0.5,0.75\n2,0.4,1\n",
        ),
        ("empty", "iteration,train_loss,eval_metric\n"),
    ] {
        fs::create_dir_all(dir.path().join(name)).unwrap();
        fs::write(dir.path().join(name).join("metrics.csv"), body).unwrap();
    }
    let p = |n: &str| dir.path().join(n).join("metrics.csv").display().to_string();
    let out1 = dir.path().join("a.svg").display().to_string();
    let out2 = dir.path().join("b.svg").display().to_string();
    let (pa, pb) = (p("alpha"), p("beta"));
    assert_eq!(
        run(&["render", &pa, &pb, "--output", &out1], dir.path()),
        EXIT_OK
    );
    assert_eq!(
        run(&["render", &pa, &pb, "--output", &out2], dir.path()),
        EXIT_OK
    );
    let svg = fs::read_to_string(&out1).unwrap();
    assert_eq!(svg, fs::read_to_string(&out2).unwrap());
    assert_eq!(svg.matches("stroke-width=\"1.5\"").count(), 2);
    assert!(svg.contains(">alpha<") && svg.contains(">beta<"));

    let empty = dir.path().join("c.svg").display().to_string();
    assert_eq!(
        run(&["render", &p("empty"), "--output", &empty], dir.path()),
        EXIT_OK
    );
    let svg = fs::read_to_string(&empty).unwrap();
    assert!(!svg.contains("stroke-width=\"1.5\"") && svg.contains("stroke=\"black\""));

    let missing = dir.path().join("nope.csv").display().to_string();
    assert_eq!(run(&["render", &missing], dir.path()), EXIT_CONFIG);
}
