use std::path::Path;
use std::process::{Command, Output};

fn dynchain(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynchain"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn synth_train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = dynchain(&["synth", "--n", "120", "--d", "5", "--l", "3", "--dependence", "0.7", "--noise", "0.05", "--seed", "4", "--out", "data.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 121);
    assert_eq!(csv.lines().next().unwrap(), "x0,x1,x2,x3,x4,y0,y1,y2");

    let o = dynchain(&["train", "data.csv", "--labels", "3", "--k", "5", "--beta", "2", "--seed", "1", "--out", "model"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("model/manifest.txt").exists());

    let o = dynchain(&["predict", "--model", "model", "data.csv", "--out", "pred.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pred = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().count(), 121);
    assert_eq!(pred.lines().next().unwrap(), "y0,y1,y2");

    let o = dynchain(&["predict", "--model", "model", "data.csv", "--scores"], d);
    assert_eq!(code(&o), 0);
    let scores = String::from_utf8(o.stdout).unwrap();
    for line in scores.lines().skip(1) {
        for v in line.split(',') {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    let o = dynchain(&["evaluate", "data.csv", "pred.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let obj = report.as_object().unwrap();
    assert_eq!(obj.len(), 11);
    assert!(obj["hamming"].as_f64().unwrap() < 0.5);
}

#[test]
fn benchmark_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (name, seed) in [("a.csv", "1"), ("b.csv", "2"), ("c.csv", "3"), ("e.csv", "5"), ("f.csv", "6")] {
        let o = dynchain(&["synth", "--n", "60", "--d", "3", "--l", "2", "--seed", seed, "--out", name], d);
        assert_eq!(code(&o), 0);
    }
    std::fs::write(
        d.join("spec.txt"),
        "dataset = a.csv 2\ndataset = b.csv 2\ndataset = c.csv 2\ndataset = e.csv 2\ndataset = f.csv 2\n\
         algorithm = nb dynamic\nalgorithm = nb random\nalgorithm = knn fixed\n\
         folds = 3\nk = 3\nbeta = 2\nr = 3\nseed = 9\nout = results\n",
    )
    .unwrap();
    let o = dynchain(&["benchmark", "spec.txt"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["folds.csv", "summary.csv", "comparison.csv", "ranks.csv"] {
        assert!(d.join("results").join(f).exists(), "{f}");
    }
    let folds = std::fs::read_to_string(d.join("results/folds.csv")).unwrap();
    assert_eq!(folds.lines().count(), 1 + 5 * 3 * 3);

    let o = dynchain(&["compare", "results/summary.csv", "--criterion", "hamming"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("3 algorithms x 5 datasets"));
    assert!(text.contains("critical distance"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&dynchain(&[], d)), 1);
    assert_eq!(code(&dynchain(&["train"], d)), 1);
    assert_eq!(code(&dynchain(&["--help"], d)), 0);
    assert_eq!(code(&dynchain(&["frobnicate"], d)), 1);

    std::fs::write(d.join("bad.csv"), "x0,y0\n1.0,2\n").unwrap();
    let o = dynchain(&["train", "bad.csv", "--labels", "1", "--out", "m"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));

    assert_eq!(code(&dynchain(&["train", "missing.csv", "--labels", "1", "--out", "m"], d)), 2);
    std::fs::write(d.join("ok.csv"), "x0,y0\n1.0,1\n2.0,0\n").unwrap();
    let o = dynchain(&["train", "ok.csv", "--labels", "1", "--base", "tree", "--out", "m"], d);
    assert_eq!(code(&o), 1);
    let o = dynchain(&["train", "ok.csv", "--labels", "1", "--k", "0", "--out", "m"], d);
    assert_eq!(code(&o), 1);
    let o = dynchain(&["synth", "--n", "5", "--d", "1", "--l", "1", "--noise", "2", "--out", "s.csv"], d);
    assert_eq!(code(&o), 1);
}
