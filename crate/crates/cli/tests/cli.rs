use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn epkr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epkr"))
        .args(args)
        .env("EPKR_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn metric(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no {key} in {text:?}"))
        .trim()
        .parse()
        .unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn write_training_csv(p: &Path) {
    let mut s = String::from("x1,x2,y\n");
    for i in 0..80 {
        let a = (i as f64 * 0.37).sin() * 3.0 + 5.0;
        let b = (i as f64 * 0.11).cos() * 2.0 - 1.0;
        s.push_str(&format!("{a},{b},{}\n", 0.5 * a - b * b + 0.01 * (i % 7) as f64));
    }
    fs::write(p, s).unwrap();
}

#[test]
fn fit_smoke_and_determinism() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    let o = epkr(&["fit", "--toy", "100", "0.0", "--method", "epkr", "--s", "5", "--seed", "1", "-o", &a]);
    assert!(o.status.success(), "{}", stderr(&o));
    let train = metric(&stdout(&o), "TrainRMSE:");
    assert!(train >= 0.0 && train.is_finite());
    let o = epkr(&["fit", "--toy", "100", "0.0", "--method", "epkr", "--s", "5", "--seed", "1", "-o", &b]);
    assert!(o.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(model["variant"], "epkr");
    assert_eq!(model["coefficients"].as_array().unwrap().len(), 6);
    assert!(model["clip_bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn degree_guards() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.json");
    let o = epkr(&["fit", "--toy", "100", "0.0", "--method", "epkr", "--s", "60", "-o", &out]);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).trim().lines().count(), 1);
    let o = epkr(&["fit", "--toy", "100", "0.0", "--method", "epkr", "--s", "150", "-o", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n = 151 > m = 100"), "{}", stderr(&o));
    assert!(!Path::new(&out).exists());
}

#[test]
fn usage_and_data_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.json");
    assert_eq!(epkr(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(epkr(&["fit", "--toy", "50", "0.1", "--method", "nope", "--s", "2", "-o", &out]).status.code(), Some(1));
    assert_eq!(epkr(&["fit", "--toy", "50", "0.1", "--method", "gkr", "-o", &out]).status.code(), Some(1));
    let missing = path(&dir, "missing.csv");
    let o = epkr(&["fit", "--data", &missing, "--method", "epkr", "--s", "2", "-o", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not found"));
    let bad = path(&dir, "bad.csv");
    fs::write(&bad, "1,2\n3,abc\n").unwrap();
    let o = epkr(&["fit", "--data", &bad, "--method", "epkr", "--s", "1", "-o", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 2, column 2"));
    assert_eq!(epkr(&["--help"]).status.code(), Some(0));
}

#[test]
fn predict_round_trip_matches_fit() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("train.csv");
    write_training_csv(&data);
    let model = path(&dir, "m.json");
    let o = epkr(&["fit", "--data", data.to_str().unwrap(), "--header", "--method", "epkr", "--s", "3", "-o", &model]);
    assert!(o.status.success(), "{}", stderr(&o));
    let train = metric(&stdout(&o), "TrainRMSE:");

    let preds = path(&dir, "p.csv");
    let o = epkr(&["predict", "--model", &model, "--data", data.to_str().unwrap(), "--header", "-o", &preds]);
    assert!(o.status.success(), "{}", stderr(&o));
    let test = metric(&stdout(&o), "TestRMSE:");
    assert!((train - test).abs() <= 1e-10, "{train} vs {test}");

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    let bound = json["clip_bound"].as_f64().unwrap();
    assert!(json["normalization"]["shift"].is_array());
    let text = fs::read_to_string(&preds).unwrap();
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 80);
    assert!(values.iter().all(|v| v.abs() <= bound));
}

#[test]
fn predict_inputs_only_and_errors() {
    let dir = TempDir::new().unwrap();
    let model = path(&dir, "m.json");
    assert!(epkr(&["fit", "--toy", "60", "0.1", "--method", "epkr", "--s", "3", "--seed", "4", "-o", &model]).status.success());
    let xs = path(&dir, "x.csv");
    fs::write(&xs, "0.1\n0.5\n0.9\n").unwrap();
    let o = epkr(&["predict", "--model", &model, "--data", &xs]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
    assert!(!stderr(&o).contains("TestRMSE"));

    let wide = path(&dir, "w.csv");
    fs::write(&wide, "0.1,0.2,0.3\n").unwrap();
    assert_eq!(epkr(&["predict", "--model", &model, "--data", &wide]).status.code(), Some(2));
    let corrupt = path(&dir, "c.json");
    fs::write(&corrupt, "{\"variant\": ").unwrap();
    let o = epkr(&["predict", "--model", &corrupt, "--data", &xs]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corrupt model"));
}

#[test]
fn zero_coefficients_predict_zero() {
    let dir = TempDir::new().unwrap();
    let model = path(&dir, "m.json");
    assert!(epkr(&["fit", "--toy", "40", "0.1", "--method", "epkr", "--s", "2", "-o", &model]).status.success());
    let mut json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    for c in json["coefficients"].as_array_mut().unwrap() {
        *c = serde_json::json!(0.0);
    }
    fs::write(&model, json.to_string()).unwrap();
    let xs = path(&dir, "x.csv");
    fs::write(&xs, "0.2,1.0\n0.7,-1.0\n").unwrap();
    let o = epkr(&["predict", "--model", &model, "--data", &xs, "--no-clip"]);
    assert!(o.status.success());
    let values: Vec<f64> = stdout(&o).lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(values, vec![0.0, 0.0]);
}

#[test]
fn selection_modes_and_variants() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.json");
    for args in [
        vec!["--method", "epkr", "--select", "cv"],
        vec!["--method", "epkr", "--select", "holdout", "--centers", "first"],
        vec!["--method", "cbr-epkr", "--s", "4", "--lambda", "0.01"],
        vec!["--method", "pkr", "--s", "4", "--lambda", "0.001"],
        vec!["--method", "gkr", "--delta", "0.3", "--lambda", "0.001"],
    ] {
        let mut full = vec!["fit", "--toy", "120", "0.1", "--seed", "2", "-o", &out];
        full.extend(args.iter().copied());
        let o = epkr(&full);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        assert!(metric(&stdout(&o), "TrainRMSE:") < 1.0);
    }
}

#[test]
fn toy_table_schema() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    let args = ["toy-table", "--replicates", "1", "--m", "80", "--test-m", "50", "--seed", "3"];
    let o = epkr(&[&args[..], &["-o", &a]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,param_s,param_lambda,param_delta,train_rmse,test_rmse,train_seconds,test_seconds,sparsity,replicates,seed"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), ["GKR", "PKR", "EPKR", "EPKR1"]);
    for r in &rows {
        assert_eq!(r.len(), 11);
        for col in [4, 5, 6, 7, 8] {
            assert!(r[col].parse::<f64>().unwrap() >= 0.0);
        }
        assert!(r[8].parse::<f64>().unwrap() >= 1.0);
    }

    assert!(epkr(&[&args[..], &["-o", &b]].concat()).status.success());
    let strip = |p: &str| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                [&c[..6], &c[8..]].concat().join(",")
            })
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(epkr(&["toy-table", "--replicates", "0"]).status.code(), Some(1));
}

#[test]
fn sweeps_write_one_row_per_grid_point() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s.csv");
    let base = ["--replicates", "2", "--m", "100", "--test-m", "50", "-o", &out];
    let o = epkr(&[&["sweep", "lambda", "--s", "3", "--count", "7"][..], &base[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 8);
    let o = epkr(&[&["sweep", "lambda", "--method", "pkr", "--s", "3", "--values", "0.001,0.1"][..], &base[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 3);
    let o = epkr(&[&["sweep", "s", "--max-s", "6"][..], &base[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 7);
    let o = epkr(&[&["sweep", "m", "--values", "60,120,240"][..], &base[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("mse_slope="));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 4);
}

#[test]
fn diagnostics_report_and_exit_status_agree() {
    let o = epkr(&["diagnostics", "--eig", "d=2", "s=2", "seeds=100"]);
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let trials = json["eig"][0]["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 100);
    assert!(trials.iter().all(|t| t["pass"].is_boolean()));
    let pass = json["pass"].as_bool().unwrap();
    assert_eq!(o.status.success(), pass);
    if !pass {
        assert_eq!(o.status.code(), Some(3));
        assert!(stderr(&o).contains("eig d=2 s=2"));
    }

    let o = epkr(&["diagnostics", "--norm-equiv", "s=2", "m=600"]);
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let b = &json["norm_equiv"][0];
    assert_eq!(b["m"], 600);
    assert!(b["mean_ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(o.status.success(), json["pass"].as_bool().unwrap());

    assert_eq!(epkr(&["diagnostics", "--eig", "d=2"]).status.code(), Some(1));
    assert_eq!(epkr(&["diagnostics", "--eig", "q=2"]).status.code(), Some(1));
}
