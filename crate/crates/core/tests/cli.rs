use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dktlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dktlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("DKTLAB_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = dktlab(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn simulate(dir: &Path) {
    ok(
        &["simulate", "-k", "2", "--students", "60", "--test-students", "40", "--seed", "11", "--out-dir", "sim"],
        dir,
    );
}

fn train_small(dir: &Path) {
    ok(
        &["train", "--data", "sim/train.csv", "--hidden", "8", "--epochs", "2", "--seed", "1", "--out", "m.model"],
        dir,
    );
}

#[test]
fn simulate_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(
        &["simulate", "-k", "2", "--students", "60", "--test-students", "40", "--seed", "11", "--out-dir", "sim"],
        tmp.path(),
    );
    assert!(out.contains("60 / 50 / 3 K"), "{out}");
    for f in ["train.csv", "train_truth.csv", "test.csv", "test_truth.csv", "labels.csv", "world.json"] {
        assert!(tmp.path().join("sim").join(f).exists(), "{f} missing");
    }
    let train = fs::read_to_string(tmp.path().join("sim/train.csv")).unwrap();
    assert_eq!(train.lines().count(), 1 + 60 * 50);
}

#[test]
fn simulate_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path());
    simulate(b.path());
    let read = |d: &Path| fs::read(d.join("sim/train.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str, dir: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_dktlab"))
            .args(["simulate", "--students", "5", "--out-dir", dir])
            .current_dir(tmp.path())
            .env("DKTLAB_SEED", seed)
            .output()
            .unwrap();
        assert!(out.status.success());
        fs::read(tmp.path().join(dir).join("train.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "c"), run("6", "d"));
}

#[test]
fn train_predict_and_inspect_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    train_small(dir);
    let loss = fs::read_to_string(dir.join("m.model.loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);
    assert!(dir.join("m.model.run.json").exists());

    fs::write(dir.join("h.csv"), "student_id,exercise_tag,correct\nq,ex004,1\nq,ex009,0\nz,ex001,1\n").unwrap();
    let pred = ok(&["predict", "--model", "m.model", "--history", "h.csv"], dir);
    let lines: Vec<&str> = pred.lines().collect();
    assert_eq!(lines.len(), 4, "{pred}");
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(&header[..4], &["student_id", "step", "exercise_tag", "correct"]);
    assert_eq!(header.len(), 4 + 50);
    for row in &lines[1..] {
        let cells: Vec<&str> = row.split(',').collect();
        for v in &cells[4..] {
            let p: f64 = v.parse().unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    let info = ok(&["inspect", "--model", "m.model", "--data", "sim/train.csv"], dir);
    assert!(info.contains("kind: lstm"));
    assert!(info.contains("hidden: 8"));
    assert!(info.contains("input: 100"));
    assert!(info.contains("bias_marginal_correlation"));
}

#[test]
fn unknown_tag_is_a_structured_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    train_small(dir);
    fs::write(dir.join("bad.csv"), "student_id,exercise_tag,correct\nq,not-a-tag,1\n").unwrap();
    let out = dktlab(&["predict", "--model", "m.model", "--history", "bad.csv"], dir);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let last = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(v["error"], "unknown_tag");
}

#[test]
fn missing_column_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("d.csv"), "student,exercise_tag,correct\na,x,1\na,y,0\n").unwrap();
    let out = dktlab(&["eval", "--data", "d.csv", "--predictor", "marginal", "--out", "r.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(v["error"], "missing_column");
}

#[test]
fn eval_reports_folds_and_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    ok(&["eval", "--data", "sim/train.csv", "--predictor", "marginal", "--folds", "3", "--out", "r.csv"], dir);
    let report = fs::read_to_string(dir.join("r.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3 + 1);
    assert!(report.lines().last().unwrap().contains(",mean,"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("r.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 4);

    ok(
        &["eval", "--data", "sim/train.csv", "--test", "sim/test.csv", "--predictor", "oracle", "--out", "o.csv"],
        dir,
    );
    let oracle = fs::read_to_string(dir.join("o.csv")).unwrap();
    let auc: f64 = oracle.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(auc > 0.75, "oracle auc {auc}");
}

#[test]
fn influence_and_curriculum_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    train_small(dir);
    ok(&["influence", "--model", "m.model", "--data", "sim/train.csv", "--tau", "0.0", "--out", "g"], dir);
    let dot = fs::read_to_string(dir.join("g.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(dir.join("g.csv").exists());
    assert!(dir.join("g.labels.csv").exists());

    ok(&["influence", "--variant", "transition", "--data", "sim/train.csv", "--out", "t"], dir);
    assert!(dir.join("t.dot").exists());

    let stdout = ok(
        &[
            "curriculum", "--model", "m.model", "--labels", "sim/labels.csv", "--per-concept", "2", "--particles", "5",
            "--horizon", "4", "--policy", "blocking", "mixing", "mdp", "--depth", "1", "2", "--planning-particles",
            "2", "--out", "c.csv",
        ],
        dir,
    );
    assert_eq!(stdout.lines().count(), 4, "{stdout}");
    let curves = fs::read_to_string(dir.join("c.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 4 * 4);
}

#[test]
fn invalid_configuration_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir);
    let out = dktlab(
        &["train", "--data", "sim/train.csv", "--keep", "0", "--epochs", "1", "--out", "m.model"],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value =
        serde_json::from_str(String::from_utf8(out.stderr).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(v["error"], "invalid_config");
}
