//! Runs the `equirank` binary end to end.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn equirank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equirank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = equirank(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str]) -> i32 {
    equirank(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--users", "4", "--items", "12", "--per-user", "60", "--seed", "3", "-o", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn simulate_writes_four_csvs_and_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    simulate(&a, &[]);
    simulate(&b, &[]);
    for name in ["comparisons.csv", "features.csv", "truth_theta.csv", "truth_users.csv"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
    assert!(a.join("simulate.manifest.json").exists());
    assert!(read(&a.join("comparisons.csv")).starts_with("user_id,criterion,left_item,right_item,score\n"));
    assert!(read(&a.join("truth_users.csv")).starts_with("user_id,group,archetype\n"));
    let ma: serde_json::Value = serde_json::from_str(&read(&a.join("simulate.manifest.json"))).unwrap();
    let mb: serde_json::Value = serde_json::from_str(&read(&b.join("simulate.manifest.json"))).unwrap();
    assert_ne!(ma["config_hash"], serde_json::Value::Null);
    assert_eq!(ma["seed"], 3);
    assert_eq!(ma["output_paths"].as_array().unwrap().len(), 4);
    // Same flags except the output directory.
    assert_ne!(ma["config_hash"], mb["config_hash"]);
}

#[test]
fn simulate_rejects_bad_flags() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&["simulate", "--users", "0", "-o", p(t.path())]), 2);
    assert_eq!(code(&["simulate", "--users", "2", "--malicious", "3", "-o", p(t.path())]), 2);
    assert_eq!(code(&["simulate", "--noise", "-1", "-o", p(t.path())]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

fn scores_by_user(csv: &str) -> std::collections::BTreeMap<String, Vec<f64>> {
    let mut out = std::collections::BTreeMap::<String, Vec<f64>>::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        out.entry(f[0].to_string()).or_default().push(f[4].parse().unwrap());
    }
    out
}

#[test]
fn scale_minmax_hits_both_ends() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), &["--conservative", "2"]);
    let out = t.path().join("mm");
    ok(&["scale", "-i", p(&t.path().join("comparisons.csv")), "--scaler", "minmax", "-o", p(&out)]);
    let text = read(&out.join("scaled.csv"));
    assert!(text.starts_with("user_id,criterion,left_item,right_item,score,scaler\n"));
    for (user, scores) in scores_by_user(&text) {
        let max = scores.iter().cloned().fold(f64::MIN, f64::max);
        let min = scores.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!((min, max), (-1.0, 1.0), "{user}");
    }
    assert!(text.lines().skip(1).all(|l| l.ends_with(",minmax")));
}

#[test]
fn scale_mehestan_writes_affine_rows_per_user() {
    let t = tempfile::tempdir().unwrap();
    ok(&["simulate", "--users", "2", "--items", "10", "--per-user", "80", "-o", p(t.path())]);
    let out = t.path().join("meh");
    ok(&["scale", "-i", p(&t.path().join("comparisons.csv")), "--scaler", "mehestan", "-o", p(&out)]);
    let affine = read(&out.join("affine.csv"));
    let lines: Vec<&str> = affine.lines().collect();
    assert_eq!(lines[0], "user_id,s,tau");
    assert_eq!(lines.len(), 3);
    assert!(read(&out.join("theta.csv")).starts_with("user_id,item_id,theta\n"));
}

#[test]
fn scale_usage_errors() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), &[]);
    let input = t.path().join("comparisons.csv");
    let out = t.path().join("x");
    assert_eq!(code(&["scale", "-i", p(&input), "--scaler", "bogus", "-o", p(&out)]), 2);

    let two = t.path().join("two.csv");
    fs::write(
        &two,
        "user_id,criterion,left_item,right_item,score\nu1,green,a,b,0.5\nu2,green,b,a,-0.3\nu1,safety,a,b,-0.5\n",
    )
    .unwrap();
    assert_eq!(code(&["scale", "-i", p(&two), "--scaler", "mehestan", "-o", p(&out)]), 2);
    ok(&["scale", "-i", p(&two), "--scaler", "mehestan", "--criterion", "green", "-o", p(&out)]);
    assert_eq!(
        code(&["scale", "-i", p(&two), "--scaler", "minmax", "--criterion", "beauty", "-o", p(&out)]),
        1
    );
}

#[test]
fn malformed_input_exits_one_with_line_number() {
    let t = tempfile::tempdir().unwrap();
    let bad = t.path().join("bad.csv");
    fs::write(&bad, "user_id,criterion,left_item,right_item,score\nu1,g,a,b,0.1\nu1,g,a,b,1.5\n").unwrap();
    let out = equirank(&["scale", "-i", p(&bad), "--scaler", "minmax", "-o", p(t.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":3:"));
}

#[test]
fn train_is_deterministic_and_zero_epochs_gives_zero_model() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), &[]);
    let c = t.path().join("comparisons.csv");
    let f = t.path().join("features.csv");
    let run = |dir: &str, extra: &[&str]| {
        let out = t.path().join(dir);
        let mut args = vec!["train", "--comparisons", p(&c), "--features", p(&f), "--user-embeddings", "-o", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let a = run("a", &["--seed", "5"]);
    let b = run("b", &["--seed", "5"]);
    assert_eq!(read(&a.join("model.json")), read(&b.join("model.json")));
    assert_eq!(read(&a.join("loss_trace.csv")).lines().count(), 1 + 51);

    let z = run("z", &["--epochs", "0"]);
    let model: serde_json::Value = serde_json::from_str(&read(&z.join("model.json"))).unwrap();
    assert!(model["w"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));
    assert_eq!(read(&z.join("loss_trace.csv")).lines().count(), 2);
}

#[test]
fn audit_reports_every_field() {
    let t = tempfile::tempdir().unwrap();
    let features = t.path().join("features.csv");
    fs::write(&features, "item_id,f0\na,0\nb,1\nc,2\n").unwrap();
    let comparisons = t.path().join("test.csv");
    fs::write(
        &comparisons,
        "user_id,criterion,left_item,right_item,score\nu1,q,a,b,0.5\nu1,q,c,b,-0.2\nu2,q,c,a,-0.7\n",
    )
    .unwrap();
    let model = t.path().join("model.json");
    fs::write(&model, "{\"dim\": 1, \"w\": [1.0], \"user_offsets\": {}}").unwrap();
    let out = t.path().join("audit");
    ok(&[
        "audit", "--model", p(&model), "--comparisons", p(&comparisons), "--features", p(&features), "-o", p(&out),
    ]);
    let report: serde_json::Value = serde_json::from_str(&read(&out.join("report.json"))).unwrap();
    let keys: BTreeSet<&str> = report.as_object().unwrap().keys().map(String::as_str).collect();
    let expected: BTreeSet<&str> = [
        "per_user_accuracy",
        "per_user_recall",
        "overall_accuracy",
        "overall_recall",
        "acc_max_gap",
        "acc_std",
        "recall_max_gap",
        "recall_std",
        "gini_accuracy",
        "mean_accuracy",
        "n_users",
        "lorenz",
    ]
    .into_iter()
    .collect();
    assert_eq!(keys, expected);
    assert_eq!(report["overall_accuracy"], 1.0);
    assert_eq!(report["gini_accuracy"], 0.0);
    assert_eq!(report["acc_max_gap"], 0.0);
    assert_eq!(
        read(&out.join("lorenz.csv")),
        "population_fraction,cumulative_share\n0,0\n0.5,0.5\n1,1\n"
    );

    let missing = t.path().join("nope.json");
    assert_eq!(
        code(&[
            "audit", "--model", p(&missing), "--comparisons", p(&comparisons), "--features", p(&features), "-o", p(&out),
        ]),
        1
    );
}

#[test]
fn pipeline_config_errors_name_the_key() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nlearning_rate = 0.1\n").unwrap();
    let out = equirank(&["pipeline", "-c", p(&cfg), "-o", p(t.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    fs::write(&cfg, "experiments = [\"minmax+mehestan\"]\n").unwrap();
    assert_eq!(code(&["pipeline", "-c", p(&cfg), "-o", p(t.path())]), 2);
    assert_eq!(code(&["pipeline", "-c", p(&t.path().join("absent.toml")), "-o", p(t.path())]), 1);
}

#[test]
fn pipeline_empty_grid_writes_header_only() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("empty.toml");
    fs::write(&cfg, "experiments = []\n").unwrap();
    let out = t.path().join("out");
    ok(&["pipeline", "-c", p(&cfg), "-o", p(&out)]);
    assert_eq!(
        read(&out.join("summary.csv")),
        "Name of Experiment,Accuracy,Maximal Per-User Accuracy,Standard Deviation of Per-User Accuracy,\
         Recall,Maximal Per-User Recall,Standard Deviation of Per-User Recall\n"
    );
}

#[test]
fn pipeline_replicates_are_averaged() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("rep.toml");
    fs::write(
        &cfg,
        "users = 4\nper_user = 40\nepochs = 5\nreplicates = 2\nexperiments = [\"baseline\", \"embeddings+contrastive\"]\n",
    )
    .unwrap();
    let out = t.path().join("out");
    ok(&["pipeline", "-c", p(&cfg), "-o", p(&out)]);
    let reports = out.join("reports");
    let names: BTreeSet<String> = fs::read_dir(&reports)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let expected: BTreeSet<String> = [
        "baseline.rep0.json",
        "baseline.rep1.json",
        "embeddings-contrastive.rep0.json",
        "embeddings-contrastive.rep1.json",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert_eq!(names, expected);
    let acc = |name: &str| -> f64 {
        let v: serde_json::Value = serde_json::from_str(&read(&reports.join(name))).unwrap();
        v["overall_accuracy"].as_f64().unwrap()
    };
    let summary = read(&out.join("summary.csv"));
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "baseline");
    let mean = (acc("baseline.rep0.json") + acc("baseline.rep1.json")) / 2.0;
    assert_eq!(row[1].parse::<f64>().unwrap(), mean);
}
