use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn msdn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msdn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, name: &str, n: usize, m: usize, d: usize, noise: f64) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    let o = msdn(&[
        "synth", "--n", &n.to_string(), "--m", &m.to_string(), "--d", &d.to_string(),
        "--noise", &noise.to_string(), "--seed", "3", "--out", &p,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    p
}

#[test]
fn params_prints_reference_counts() {
    let o = msdn(&["params", "--m", "103", "--d", "14"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("total: 23,502"), "{}", stdout(&o));
    let o = msdn(&["params", "--m", "294", "--d", "6"]);
    assert!(stdout(&o).contains("total: 46,918"));
    let o = msdn(&["params", "--m", "1", "--d", "1", "--h", "1", "--K", "1"]);
    let out = stdout(&o);
    assert!(out.contains("total: 6"));
    assert!(out.contains("dense encoder (1 -> 1): 2"));
    let o = msdn(&["params", "--m", "4", "--d", "2", "--h", "8", "--K", "9"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("kernel count"));
}

#[test]
fn train_predict_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "xor.mlc", 200, 4, 3, 0.0);
    let model = dir.path().join("a.model");
    let args = |out: &str| {
        vec![
            "train".to_string(), "--data".into(), data.clone(), "--model".into(), "msdn".into(),
            "--out".into(), out.to_string(), "--hidden".into(), "8".into(), "--kernels".into(), "4".into(),
            "--epochs".into(), "30".into(), "--lr".into(), "0.01".into(), "--seed".into(), "5".into(),
        ]
    };
    let a: Vec<String> = args(model.to_str().unwrap());
    let o = msdn(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(model.exists());
    let report = fs::read_to_string(dir.path().join("a.model.report.txt")).unwrap();
    let epochs_line = report.lines().find(|l| l.starts_with("epochs: ")).unwrap();
    let run: usize = epochs_line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(run <= 30, "{epochs_line}");
    assert!(report.contains("parameters: "));

    let again = dir.path().join("b.model");
    let b: Vec<String> = args(again.to_str().unwrap());
    assert!(msdn(&b.iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());

    let preds = dir.path().join("preds.csv");
    let o = msdn(&[
        "predict", "--data", &data, "--model", model.to_str().unwrap(), "--out", preds.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&preds).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert_eq!(csv.lines().next().unwrap(), "pred_y1,pred_y2,pred_y3,prob_y1,prob_y2,prob_y3");
}

#[test]
fn baselines_train_from_arff() {
    let dir = tempfile::tempdir().unwrap();
    let arff = dir.path().join("toy.arff");
    let mut text = String::from("@relation toy\n@attribute a numeric\n@attribute b numeric\n@attribute l1 {0,1}\n@attribute l2 {0,1}\n@data\n");
    for i in 0..40 {
        let a = i as f64 / 40.0;
        text.push_str(&format!("{a},{},{},{}\n", 1.0 - a, (a > 0.5) as u8, (a > 0.25) as u8));
    }
    fs::write(&arff, text).unwrap();
    for kind in ["br", "cc", "pcc", "sta"] {
        let out = dir.path().join(format!("{kind}.model"));
        let o = msdn(&[
            "train", "--data", arff.to_str().unwrap(), "--labels", "2", "--model", kind,
            "--out", out.to_str().unwrap(), "--epochs", "50", "--lr", "0.1",
        ]);
        assert!(o.status.success(), "{kind}: {}", stderr(&o));
        let head = fs::read_to_string(&out).unwrap();
        assert!(head.starts_with(&format!("#mlc-model v1 kind={kind}\n")));
    }
    let o = msdn(&["train", "--data", arff.to_str().unwrap(), "--model", "br", "--out", "x.model"]);
    assert!(!o.status.success(), "ARFF without a label count must fail");
}

#[test]
fn user_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "wide.mlc", 30, 22, 22, 0.1);
    let out = dir.path().join("pcc.model");
    let o = msdn(&["train", "--data", &data, "--model", "pcc", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("d_max = 20"), "{}", stderr(&o));
    assert!(!out.exists());

    let o = msdn(&["train", "--data", &data, "--model", "rnn", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown model"));

    let o = msdn(&["train", "--data", "/nonexistent/file.mlc", "--model", "br", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn benchmark_outputs_and_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "xor.mlc", 120, 4, 3, 0.05);
    let out = dir.path().join("results");
    let config = write_config(
        dir.path(),
        &format!(
            "models = [\"br\", \"cc\"]\nrepeats = 5\noutput_dir = {:?}\n\
             [[datasets]]\npath = \"xor.mlc\"\n\
             [baseline]\nlearning_rate = [0.05]\nweight_decay = [0.0]\nepochs = 20\n",
            out.to_str().unwrap()
        ),
    );
    let o = msdn(&["benchmark", "--config", &config]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 10);
    assert!(out.join("report.md").exists());
    assert!(out.join("ttests.csv").exists());
    assert_eq!(fs::read_dir(out.join("models")).unwrap().count(), 10);

    // a refused cell is recorded, the rest still runs, and the exit status is non-zero
    let o = msdn(&["benchmark", "--config", &config, "--models", "br,pcc", "--d-max", "2", "--repeats", "2"]);
    assert!(!o.status.success());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2);
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("## Failures"));
}

#[test]
fn benchmark_rejects_empty_model_list_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let config = write_config(
        dir.path(),
        &format!("models = []\noutput_dir = {:?}\n[[datasets]]\nsynth = {{ n = 50, m = 4, d = 2 }}\n", out.to_str().unwrap()),
    );
    let o = msdn(&["benchmark", "--config", &config]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no models"), "{}", stderr(&o));
    assert!(!out.exists());
}

fn mean_ema(metrics: &str, model: &str) -> Vec<f64> {
    metrics
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some(model))
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn chain_and_msdn_dominate_br_on_clean_parity_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let config = write_config(
        dir.path(),
        &format!(
            "models = [\"msdn\", \"br\", \"cc\"]\nrepeats = 3\nseed = 11\njobs = 3\nsave_models = false\noutput_dir = {:?}\n\
             [[datasets]]\nsynth = {{ n = 800, m = 4, d = 3, noise = 0.0, seed = 2 }}\n\
             [msdn]\nlearning_rate = [0.01]\ndropout = [0.0]\nweight_decay = [0.0]\nhidden_dim = 16\nkernel_count = 16\nmax_epochs = 1500\n\
             [baseline]\nlearning_rate = [0.05]\nweight_decay = [0.0]\n",
            out.to_str().unwrap()
        ),
    );
    let o = msdn(&["benchmark", "--config", &config]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let (m, b, c) = (mean_ema(&metrics, "msdn"), mean_ema(&metrics, "br"), mean_ema(&metrics, "cc"));
    assert_eq!((m.len(), b.len(), c.len()), (3, 3, 3));
    for r in 0..3 {
        assert!(m[r] > b[r], "repeat {r}: msdn {} vs br {}", m[r], b[r]);
    }
    for r in 0..3 {
        assert!(c[r] > b[r], "repeat {r}: cc {} vs br {}", c[r], b[r]);
    }
}
