mod common;

use std::fs;

use common::{assert_valid, nnsens, p, read_json, workspace_root, write_sequence_csv, write_sequence_schema};
use nn_sensitivity::explain::{FeatureSubset, ImportanceReport, Scope};

fn simulate_and_train(dir: &std::path::Path, seed: &str) -> std::path::PathBuf {
    let data = dir.join("sim.csv");
    assert_eq!(
        nnsens(&["simulate", "--n", "1500", "--seed", "3", "--out", p(&data)]),
        0
    );
    let model = dir.join("sim.nns");
    let status = nnsens(&[
        "train",
        "--data",
        p(&data),
        "--preset",
        "sim-regression",
        "--epochs",
        "15",
        "--seed",
        seed,
        "--out-model",
        p(&model),
    ]);
    assert_eq!(status, 0);
    model
}

#[test]
fn train_explain_select_retrain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let model = simulate_and_train(d, "1");
    let data = d.join("sim.csv");
    assert_valid("run_manifest", &d.join("sim.manifest.json"));
    assert_valid("train_report", &d.join("sim.train.json"));

    let out = d.join("explain");
    let status = nnsens(&[
        "explain",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--rows",
        "test",
        "--format",
        "json,csv,svg,text",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(status, 0);
    for ext in ["json", "csv", "svg", "txt"] {
        assert!(out.join(format!("global_importance.{ext}")).exists(), "{ext}");
    }
    assert_valid("importance_report", &out.join("global_importance.json"));
    assert_valid("run_manifest", &out.join("global_importance.manifest.json"));
    let report = ImportanceReport::from_json(&fs::read_to_string(out.join("global_importance.json")).unwrap()).unwrap();
    assert_eq!(report.entries[0].name, "X3");
    let svg = fs::read_to_string(out.join("global_importance.svg")).unwrap();
    assert!(svg.contains(r#"width="800" height="150""#));

    let status = nnsens(&[
        "explain",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--scope",
        "local",
        "--sample-id",
        "4",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(status, 0);
    assert_valid("importance_report", &out.join("local_importance.json"));
    let local = read_json(&out.join("local_importance.json"));
    assert_eq!(local["scope"]["kind"], "local");
    assert_eq!(local["scope"]["sample"], 4);

    let subset = d.join("subset.json");
    assert_eq!(
        nnsens(&[
            "select",
            "--model",
            p(&model),
            "--data",
            p(&data),
            "--out-subset",
            p(&subset)
        ]),
        0
    );
    assert_valid("feature_subset", &subset);
    let chosen = FeatureSubset::from_json(&fs::read_to_string(&subset).unwrap()).unwrap();
    assert!(chosen.cumulative >= 90.0 - 1e-9);
    assert!(!chosen.names.contains(&"X5".to_string()));

    // Selecting from the saved report gives the same answer as recomputing it.
    let from_report = d.join("subset_from_report.json");
    let train_report = d.join("train_report");
    assert_eq!(
        nnsens(&[
            "explain",
            "--model",
            p(&model),
            "--data",
            p(&data),
            "--rows",
            "train",
            "--group",
            "--out-dir",
            p(&train_report),
        ]),
        0
    );
    assert_eq!(
        nnsens(&[
            "select",
            "--report",
            p(&train_report.join("global_importance.json")),
            "--out-subset",
            p(&from_report),
        ]),
        0
    );
    assert_eq!(read_json(&from_report)["names"], read_json(&subset)["names"]);

    let retrained = d.join("subset.nns");
    let status = nnsens(&[
        "train",
        "--data",
        p(&data),
        "--preset",
        "sim-regression",
        "--epochs",
        "10",
        "--feature-subset",
        p(&subset),
        "--out-model",
        p(&retrained),
    ]);
    assert_eq!(status, 0);
    let out2 = d.join("explain2");
    assert_eq!(
        nnsens(&[
            "explain",
            "--model",
            p(&retrained),
            "--data",
            p(&data),
            "--out-dir",
            p(&out2)
        ]),
        0
    );
    let r2 = read_json(&out2.join("global_importance.json"));
    let mut names: Vec<String> = r2["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap().to_string())
        .collect();
    names.sort();
    let mut expected = chosen.names.clone();
    expected.sort();
    assert_eq!(names, expected);
}

#[test]
fn threshold_one_hundred_keeps_every_feature() {
    let dir = tempfile::tempdir().unwrap();
    let model = simulate_and_train(dir.path(), "2");
    let subset = dir.path().join("all.json");
    let status = nnsens(&[
        "select",
        "--model",
        p(&model),
        "--data",
        p(&dir.path().join("sim.csv")),
        "--threshold",
        "100",
        "--out-subset",
        p(&subset),
    ]);
    assert_eq!(status, 0);
    assert_eq!(read_json(&subset)["names"].as_array().unwrap().len(), 5);
}

#[test]
fn identical_seeds_give_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = simulate_and_train(a.path(), "5");
    let mb = simulate_and_train(b.path(), "5");
    assert_eq!(fs::read(&ma).unwrap(), fs::read(&mb).unwrap());
    assert_eq!(
        fs::read(a.path().join("sim.csv")).unwrap(),
        fs::read(b.path().join("sim.csv")).unwrap()
    );
    for (m, d) in [(&ma, a.path()), (&mb, b.path())] {
        assert_eq!(
            nnsens(&[
                "explain",
                "--model",
                p(m),
                "--data",
                p(&d.join("sim.csv")),
                "--out-dir",
                p(&d.join("x"))
            ]),
            0
        );
    }
    assert_eq!(
        fs::read(a.path().join("x/global_importance.json")).unwrap(),
        fs::read(b.path().join("x/global_importance.json")).unwrap()
    );
    assert_eq!(
        fs::read(a.path().join("sim.train.json")).unwrap(),
        fs::read(b.path().join("sim.train.json")).unwrap()
    );
}

#[test]
fn recurrent_lag_report_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (data, schema, model) = (d.join("seq.csv"), d.join("seq.json"), d.join("rnn.nns"));
    write_sequence_csv(&data, 400);
    write_sequence_schema(&schema);
    let status = nnsens(&[
        "train",
        "--data",
        p(&data),
        "--schema",
        p(&schema),
        "--arch",
        "rnn:8",
        "--seq-len",
        "4",
        "--activation",
        "tanh",
        "--learning-rate",
        "0.01",
        "--epochs",
        "80",
        "--batch-size",
        "16",
        "--out-model",
        p(&model),
    ]);
    assert_eq!(status, 0);
    let out = d.join("lag");
    assert_eq!(
        nnsens(&[
            "explain",
            "--model",
            p(&model),
            "--data",
            p(&data),
            "--scope",
            "lag",
            "--out-dir",
            p(&out)
        ]),
        0
    );
    assert_valid("importance_report", &out.join("lag_importance.json"));
    let lag = ImportanceReport::from_json(&fs::read_to_string(out.join("lag_importance.json")).unwrap()).unwrap();
    assert_eq!(lag.scope, Scope::LagGlobal);
    assert_eq!(lag.len(), 4);
    let v = lag.values_by_id();
    assert!(v[0] > v[1] && v[1] > v[2].max(v[3]), "{v:?}");

    assert_eq!(
        nnsens(&[
            "explain",
            "--model",
            p(&model),
            "--data",
            p(&data),
            "--out-dir",
            p(&out)
        ]),
        0
    );
    let global = ImportanceReport::from_json(&fs::read_to_string(out.join("global_importance.json")).unwrap()).unwrap();
    assert_eq!(global.entries[0].name, "a");

    assert_eq!(nnsens(&["gradcheck", "--model", p(&model), "--trials", "5"]), 0);
}

#[test]
fn gradcheck_writes_a_valid_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gc.json");
    assert_eq!(
        nnsens(&["gradcheck", "--trials", "10", "--seed", "9", "--out", p(&out)]),
        0
    );
    assert_valid("gradcheck_summary", &out);
    assert_eq!(read_json(&out)["passed"], 10);
}

#[test]
fn credit_fixture_reproduce_completes() {
    let dir = tempfile::tempdir().unwrap();
    let root = workspace_root();
    let out = dir.path().join("credit");
    let status = nnsens(&[
        "reproduce",
        "--experiment",
        "credit",
        "--data",
        p(&root.join("data/credit_fixture.csv")),
        "--schema",
        p(&root.join("data/credit_schema.json")),
        "--runs",
        "2",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(status, 0);
    assert_valid("reproduce_summary", &out.join("summary.json"));
    assert_valid("run_manifest", &out.join("manifest.json"));
    assert_valid("importance_report", &out.join("baseline_importance.json"));
    for run in ["run-001", "run-002"] {
        assert_valid("importance_report", &out.join(run).join("global_importance.json"));
        assert_valid("feature_subset", &out.join(run).join("subset.json"));
        assert_valid("train_report", &out.join(run).join("model.train.json"));
    }
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["features"].as_array().unwrap().len(), 23);
    assert_eq!(summary["metric"], "error_rate");
}
