use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn smoothctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    smoothctl(args).status.code().unwrap_or(-1)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn groups(svg: &str, class: &str) -> usize {
    let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
    doc.descendants()
        .filter(|n| n.has_tag_name("g") && n.attribute("class") == Some(class))
        .count()
}

#[test]
fn verify_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    assert_eq!(code(&["verify", "--seed", "2", "--out", p(&out), "--jobs", "2"]), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(
        report["properties"].as_array().unwrap().len(),
        smoothctl::properties::property_names().len()
    );

    let run = smoothctl(&[
        "verify",
        "--seed",
        "2",
        "--out",
        p(&out),
        "--inject-fault",
        "control.leaky_range",
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("control.leaky_range"));

    assert_eq!(
        code(&["verify", "--seed", "2", "--out", p(&out), "--inject-fault", "no.such"]),
        2
    );
    assert_eq!(code(&["verify", "--out", p(&out)]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn sweep_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    assert_eq!(code(&["sweep", "--seed", "4", "--out", p(out)]), 0);
    for f in ["sweep_relu.csv", "sweep_leaky.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert_eq!(text.lines().next(), Some("alpha,s,dist"));
        assert_eq!(text.lines().count(), 602);
    }
    for f in ["sweep_a.svg", "sweep_b.svg"] {
        assert_eq!(groups(&fs::read_to_string(out.join(f)).unwrap(), "series"), 3);
    }
}

#[test]
fn trajectory_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    assert_eq!(code(&["trajectory", "--alpha", "-0.5", "--out", p(out)]), 0);
    let csv = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 20 * 51);
    // 20 trajectories plus the eigenspace line.
    assert_eq!(
        groups(&fs::read_to_string(out.join("trajectory.svg")).unwrap(), "series"),
        21
    );
    assert_eq!(code(&["trajectory", "--alpha", "nan", "--out", p(out)]), 2);
}

#[test]
fn ttest_lists() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("a.txt"), "0.81\n0.79\n0.80\n").unwrap();
    fs::write(dir.join("b.txt"), "0.70, 0.74, 0.72").unwrap();
    fs::write(dir.join("short.txt"), "0.7").unwrap();
    let a = dir.join("a.txt");
    let out = dir.join("same");
    assert_eq!(code(&["ttest", "--a", p(&a), "--b", p(&a), "--out", p(&out)]), 0);
    let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ttest.json")).unwrap()).unwrap();
    assert_eq!(t["t"].as_f64(), Some(0.0));
    assert_eq!(t["n"].as_u64(), Some(3));
    assert!((t["mean_a"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    assert!((t["std_a"].as_f64().unwrap() - 0.01).abs() < 1e-12);

    let out = dir.join("diff");
    assert_eq!(
        code(&["ttest", "--a", p(&a), "--b", p(&dir.join("b.txt")), "--out", p(&out)]),
        0
    );
    let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ttest.json")).unwrap()).unwrap();
    let expected = (0.80 - 0.72) / (0.01f64.powi(2) / 3.0 + 0.02f64.powi(2) / 3.0).sqrt();
    assert!((t["t"].as_f64().unwrap() - expected).abs() < 1e-9);

    assert_eq!(
        code(&[
            "ttest",
            "--a",
            p(&a),
            "--b",
            p(&dir.join("short.txt")),
            "--out",
            p(&out)
        ]),
        2
    );
    assert_eq!(
        code(&[
            "ttest",
            "--a",
            p(&a),
            "--b",
            p(&dir.join("missing.txt")),
            "--out",
            p(&out)
        ]),
        2
    );
}

/// A 6-cycle with identical features on every node: the features lie in the
/// eigenspace and stay there through every layer.
fn write_cycle_dataset(dir: &Path) {
    let mut g = String::from("6 6\n");
    for i in 0..6 {
        g.push_str(&format!("{i} {}\n", (i + 1) % 6));
    }
    fs::write(dir.join("graph.txt"), g).unwrap();
    fs::write(dir.join("features.csv"), "1.0,-2.0\n".repeat(6)).unwrap();
    fs::write(dir.join("labels.txt"), "0\n1\n0\n1\n0\n1\n").unwrap();
    fs::write(
        dir.join("splits.json"),
        r#"{"train": [0, 1], "val": [2, 3], "test": [4, 5]}"#,
    )
    .unwrap();
}

#[test]
fn train_and_heatmap_from_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_cycle_dataset(dir);
    fs::write(
        dir.join("config.json"),
        r#"{"model": {"kind": "gcnii-sct", "layers": 3, "hidden_dim": 5}, "train": {"max_epochs": 20, "patience": 5}}"#,
    )
    .unwrap();
    let run = dir.join("run");
    let files: Vec<String> = ["graph.txt", "features.csv", "labels.txt", "splits.json", "config.json"]
        .iter()
        .map(|f| p(&dir.join(f)).to_string())
        .collect();
    let data = [
        "--graph",
        files[0].as_str(),
        "--features",
        &files[1],
        "--labels",
        &files[2],
        "--splits",
        &files[3],
    ];
    let mut args = vec!["train", "--seed", "1", "--config", &files[4], "--out", p(&run)];
    args.extend_from_slice(&data);
    assert_eq!(code(&args), 0);
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert!(result["test_accuracy"].is_number());
    assert!(result["epochs_run"].as_u64().unwrap() <= 20);

    let map = dir.join("map");
    let model = run.join("model.json");
    let mut args = vec!["heatmap", "--model", p(&model), "--out", p(&map)];
    args.extend_from_slice(&data[..4]);
    assert_eq!(code(&args), 0);
    let csv = fs::read_to_string(map.join("heatmap.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.len() == 5));
    assert!(rows.iter().flatten().all(|s| (s - 1.0).abs() < 1e-9), "{rows:?}");
    assert_eq!(groups(&fs::read_to_string(map.join("heatmap.svg")).unwrap(), "row"), 4);
}

#[test]
fn input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = dir.join("o");
    assert_eq!(code(&["heatmap", "--synthetic", "--seed", "0", "--out", p(&out)]), 2);
    assert_eq!(
        code(&[
            "heatmap",
            "--synthetic",
            "--seed",
            "0",
            "--model",
            p(&dir.join("nope.json")),
            "--out",
            p(&out)
        ]),
        2
    );
    assert_eq!(code(&["train", "--out", p(&out)]), 2);
    assert_eq!(code(&["train", "--synthetic", "--out", p(&out)]), 2);
    assert_eq!(
        code(&["train", "--synthetic", "--seed", "0", "--kind", "mlp", "--out", p(&out)]),
        2
    );
    fs::write(dir.join("bad.json"), r#"{"modle": {}}"#).unwrap();
    assert_eq!(
        code(&[
            "train",
            "--synthetic",
            "--seed",
            "0",
            "--config",
            p(&dir.join("bad.json")),
            "--out",
            p(&out)
        ]),
        2
    );
    fs::write(dir.join("file"), "").unwrap();
    assert_eq!(code(&["sweep", "--seed", "0", "--out", p(&dir.join("file"))]), 2);
}

#[test]
fn synthetic_training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let run = |name: &str, jobs: &str| {
        let out = dir.join(name);
        let args = [
            "train",
            "--synthetic",
            "--seed",
            "5",
            "--kind",
            "gcn-sct",
            "--layers",
            "4",
            "--dropout",
            "0.3",
            "--runs",
            "3",
            "--jobs",
            jobs,
            "--out",
            p(&out),
        ];
        assert_eq!(code(&args), 0);
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for f in ["model.json", "run.json", "accuracies.txt", "runs.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let accs = fs::read_to_string(a.join("accuracies.txt")).unwrap();
    assert_eq!(accs.lines().count(), 3);
}
