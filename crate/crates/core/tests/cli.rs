mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fatigue_core::config::RunConfig;
use fatigue_core::dataset;
use fatigue_core::model::Model;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace { dir: tempfile::tempdir().unwrap() };
        let file = std::fs::File::create(ws.path("data.csv")).unwrap();
        dataset::write_csv(file, &common::raw_corpus(17)).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        let text = format!(
            "dataset = {:?}\nseed = 11\nworkers = 2\n{body}",
            self.path("data.csv").to_str().unwrap()
        );
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_fatigue"))
            .args(args)
            .output()
            .unwrap()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const SMALL: &str = "[network]\nhidden_layers = 1\nneurons = 8\n[train]\nepochs = 5\n";

#[test]
fn prepare_writes_filtered_tables() {
    let ws = Workspace::new();
    let cfg = ws.config("c.toml", "");
    let out = ws.path("prep");
    let o = ws.run(&["prepare", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let retained = dataset::load_csv(out.join("retained.csv")).unwrap();
    assert!(retained.iter().all(|x| (2e3..=2e6).contains(&x.fatigue_life)));
    let rejected = read(&out.join("rejected.csv"));
    assert!(rejected.lines().next().unwrap().ends_with(",reason"));
    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("filter_summary.json"))).unwrap();
    assert_eq!(summary["n_retained"], retained.len());
    assert_eq!(
        summary["n_retained"].as_u64().unwrap() + summary["n_rejected"].as_u64().unwrap(),
        246
    );
    let resolved = RunConfig::load(&out.join("resolved_config.toml")).unwrap();
    assert_eq!(resolved.seed, 11);
    assert_eq!(resolved.output_dir, out);
}

#[test]
fn config_errors_exit_with_code_two() {
    let ws = Workspace::new();
    let cfg = ws.config("bad.toml", "[train]\nepoch = 3\n");
    let o = ws.run(&["prepare", "--config", s(&cfg), "--out", s(&ws.path("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = ws.run(&["prepare", "--dataset", s(&ws.path("missing.csv")), "--out", s(&ws.path("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = ws.run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_data_exits_with_code_three() {
    let ws = Workspace::new();
    let bad = ws.path("bad.csv");
    std::fs::write(
        &bad,
        format!("{}\n5.0,4.0,400,20,10,-3,x\n", dataset::CSV_HEADER.join(",")),
    )
    .unwrap();
    let o = ws.run(&["prepare", "--dataset", s(&bad), "--out", s(&ws.path("o"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 1"));
}

#[test]
fn train_smoke_run_and_determinism() {
    let ws = Workspace::new();
    let cfg = ws.config("t.toml", "[train]\nepochs = 1\n");
    let (a, b) = (ws.path("a"), ws.path("b"));
    for out in [&a, &b] {
        let o = ws.run(&["train", "--config", s(&cfg), "--out", s(out)]);
        assert!(
            matches!(o.status.code(), Some(0) | Some(4)),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let model = Model::load(a.join("model.json")).unwrap();
    let p = &model.provenance;
    assert_eq!(model.network_config.n_hidden_layers, 2);
    assert_eq!(model.network_config.neurons_per_hidden, 200);
    let tc = p.train_config.as_ref().unwrap();
    assert_eq!(tc.loss.to_string(), "msle");
    assert_eq!(tc.optimizer.algorithm.to_string(), "rmsprop");
    assert_eq!(p.seed, 11);
    assert_eq!(p.fold, Some(0));
    assert!(p.dataset_hash.is_some());
    let history = read(&a.join("history.csv"));
    assert_eq!(history.lines().count(), 2);
    assert_eq!(history, read(&b.join("history.csv")));
    assert_eq!(read(&a.join("model.json")), read(&b.join("model.json")));
}

#[test]
fn non_convergence_exits_with_code_four() {
    let ws = Workspace::new();
    let cfg = ws.config("d.toml", "[train]\nepochs = 200\nlearning_rate = 1000.0\n");
    let o = ws.run(&["train", "--config", s(&cfg), "--out", s(&ws.path("d"))]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let model = Model::load(ws.path("d").join("model.json")).unwrap();
    assert!(!model.provenance.converged);
    assert!(model.provenance.failure.is_some());
}

#[test]
fn cv_writes_fold_records_and_pooled_pairs() {
    let ws = Workspace::new();
    let cfg = ws.config("cv.toml", SMALL);
    let out = ws.path("cv");
    let o = ws.run(&["cv", "--config", s(&cfg), "--out", s(&out)]);
    assert!(matches!(o.status.code(), Some(0) | Some(4)));
    let report: serde_json::Value = serde_json::from_str(&read(&out.join("cv_report.json"))).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 4);
    assert_eq!(report["seed"], 11);
    let pairs = read(&out.join("true_vs_pred.csv"));
    assert_eq!(pairs.lines().next().unwrap(), "fold,true_nf,pred_nf");
    assert_eq!(pairs.lines().count() - 1, report["n_samples"].as_u64().unwrap() as usize);
    for k in 0..4 {
        Model::load(out.join(format!("fold_{k}")).join("model.json")).unwrap();
    }
}

#[test]
fn pdp_and_predict_from_a_trained_model() {
    let ws = Workspace::new();
    let cfg = ws.config("p.toml", SMALL);
    let train_out = ws.path("tr");
    ws.run(&["train", "--config", s(&cfg), "--out", s(&train_out)]);
    let model = train_out.join("model.json");

    let out = ws.path("pdp");
    let o = ws.run(&[
        "pdp", "--config", s(&cfg), "--out", s(&out), "--model", s(&model),
        "--strain", "200", "--strain", "400", "--resolution", "10",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for tag in ["200", "400"] {
        let surface = read(&out.join(format!("surface_{tag}.csv")));
        assert_eq!(surface.lines().count(), 101);
        let header: serde_json::Value =
            serde_json::from_str(&read(&out.join(format!("surface_{tag}.json")))).unwrap();
        assert_eq!(header["resolution"], 10);
    }
    assert!(out.join("points.csv").exists());
    let o = ws.run(&["pdp", "--out", s(&out), "--model", s(&model), "--strain", "5000"]);
    assert_eq!(o.status.code(), Some(3));

    let empty = ws.path("empty.csv");
    std::fs::write(&empty, "binder_content,air_voids,strain_microstrain\n").unwrap();
    let pred = ws.path("pred.csv");
    let o = ws.run(&["predict", "--out", s(&ws.path("po")), "--model", s(&model), "--input", s(&empty), "--output", s(&pred)]);
    assert!(o.status.success());
    assert_eq!(read(&pred).lines().count(), 1);

    let input = ws.path("in.csv");
    std::fs::write(&input, "air_voids,binder_content,strain_microstrain\n5,5,400\n5,12,400\n").unwrap();
    let o = ws.run(&["predict", "--out", s(&ws.path("po")), "--model", s(&model), "--input", s(&input)]);
    assert!(o.status.success());
    let rows: Vec<String> = read(&ws.path("po").join("predictions.csv")).lines().map(String::from).collect();
    assert_eq!(rows[0], "binder_content,air_voids,strain_microstrain,pred_fatigue_life,extrapolated");
    assert!(rows[1].starts_with("5,5,400,") && rows[1].ends_with(",false"));
    assert!(rows[2].starts_with("12,5,400,") && rows[2].ends_with(",true"));
}

#[test]
fn grid_writes_ranking_and_slices() {
    let ws = Workspace::new();
    let body = "[network]\nhidden_layers = 1\nneurons = 4\n[grid]\nlosses = [\"mse\"]\noptimizers = [\"rmsprop\"]\nactivations = [\"relu\", \"linear\"]\nhidden_layers = [1]\nneurons = [4, 8]\nepochs = 3\nslices = []\n[train]\nloss = \"mse\"\n";
    let cfg = ws.config("g.toml", body);
    let out = ws.path("grid");
    let o = ws.run(&["grid", "--config", s(&cfg), "--out", s(&out), "--vary", "neurons"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out.join("grid_results.jsonl")).lines().count(), 4);
    assert_eq!(read(&out.join("grid_ranking.csv")).lines().count(), 5);
    let slice = read(&out.join("slices").join("neurons__mse_rmsprop_relu_h1.csv"));
    assert_eq!(slice.lines().count(), 3);
}
