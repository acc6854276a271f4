//! End-to-end tests of the `sigmdn` binary: the full generate/train/price/
//! evaluate loop at toy scale, reproducibility of every output file, and the
//! documented exit codes.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sigmdn"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn sigmdn");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "regime": "tv",
  "seed": 4242,
  "level": 5,
  "dataset": { "n1": 6, "n2": 4, "m_paths": 4 },
  "mdn": { "hidden_sizes": [16, 12], "components": 3 },
  "train": {
    "learning_rate": 0.01, "batch_size": 16, "weight_decay": 0.0001,
    "beta1": 0.9, "beta2": 0.999, "adam_eps": 1e-8,
    "patience": 3, "decay_factor": 0.5, "min_delta": 0.0001,
    "min_learning_rate": 1e-5, "epochs": 3, "validation_fraction": 0.2,
    "seed": 9, "shuffle": true, "standardize": true
  }
}"#,
    )
    .unwrap();
    path
}

fn write_scenario(dir: &Path) -> PathBuf {
    let mut csv = String::from("day,r,q_1,q_2,sigma_1,sigma_2\n");
    for d in 0..=265 {
        let t = d as f64 / 252.0;
        csv.push_str(&format!(
            "{d},{},{},{},{},{}\n",
            0.05 + 0.01 * (t * 3.0).sin(),
            0.02,
            0.03,
            0.15 + 0.02 * (t * 2.0).cos(),
            0.2
        ));
    }
    std::fs::write(dir.join("rates.csv"), csv).unwrap();
    let path = dir.join("scenario.json");
    std::fs::write(
        &path,
        r#"{
  "id": "itest",
  "rates_csv": "rates.csv",
  "maturity": 1.0,
  "correlation": { "matrix": [[1.0, -0.7131], [-0.7131, 1.0]] },
  "weights": [0.5, 0.5]
}"#,
    )
    .unwrap();
    path
}

#[test]
fn full_pipeline_with_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let scenario = write_scenario(dir.path());

    // gen-data twice: identical bytes, manifest written.
    let data_a = dir.path().join("a.mdnset");
    let data_b = dir.path().join("b.mdnset");
    let out = run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&data_a));
    assert!(String::from_utf8_lossy(&out.stdout).contains("records: 24"));
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&data_b));
    assert_eq!(
        std::fs::read(&data_a).unwrap(),
        std::fs::read(&data_b).unwrap(),
        "datasets differ between identical invocations"
    );
    let manifest: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("a.mdnset.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seed"], 4242);
    assert_eq!(manifest["record_count"], 24);

    // train twice: identical model and history bytes.
    let model_a = dir.path().join("a.smdn");
    let model_b = dir.path().join("b.smdn");
    run_ok(bin().args(["train"]).arg("--config").arg(&config).arg("--data").arg(&data_a).arg("--out").arg(&model_a));
    run_ok(bin().args(["train"]).arg("--config").arg(&config).arg("--data").arg(&data_a).arg("--out").arg(&model_b));
    assert_eq!(std::fs::read(&model_a).unwrap(), std::fs::read(&model_b).unwrap());
    let history = std::fs::read_to_string(dir.path().join("a.smdn.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4, "header + 3 epochs:\n{history}");
    assert!(history.starts_with("epoch,train_nll,val_nll,eta\n"));

    // price: CSV table on stdout.
    let out = run_ok(
        bin()
            .args(["price"])
            .arg("--model")
            .arg(&model_a)
            .arg("--scenario")
            .arg(&scenario)
            .args(["--strikes", "0.9:1.1:5", "--kind", "call"]),
    );
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(table.starts_with("scenario_id,maturity,strike,kind,method,price,stderr,relative_error"));
    assert_eq!(table.lines().count(), 6);
    assert!(table.contains("itest,1,0.9,call,mixture-closed-form,"));

    // evaluate twice with one seed: identical reports; low path count warns.
    let prefix_a = dir.path().join("eval_a");
    let prefix_b = dir.path().join("eval_b");
    for prefix in [&prefix_a, &prefix_b] {
        run_ok(
            bin()
                .args(["evaluate"])
                .arg("--model")
                .arg(&model_a)
                .arg("--scenario")
                .arg(&scenario)
                .args(["--mc-paths", "800", "--seed", "11", "--out-prefix"])
                .arg(prefix),
        );
    }
    let report_a = std::fs::read(format!("{}.report.json", prefix_a.display())).unwrap();
    let report_b = std::fs::read(format!("{}.report.json", prefix_b.display())).unwrap();
    assert_eq!(report_a, report_b);
    let prices_a = std::fs::read(format!("{}.prices.csv", prefix_a.display())).unwrap();
    let prices_b = std::fs::read(format!("{}.prices.csv", prefix_b.display())).unwrap();
    assert_eq!(prices_a, prices_b);
    let report: serde_json::Value = serde_json::from_slice(&report_a).unwrap();
    assert!(report["warnings"][0].as_str().unwrap().contains("below 1000"));
    assert_eq!(report["maturities"].as_array().unwrap().len(), 4);
    assert!(report["median_kl"].as_f64().unwrap().is_finite());
}

#[test]
fn resumed_training_matches_monolithic_run() {
    let dir = tempfile::tempdir().unwrap();
    let config3 = write_tiny_config(dir.path());
    let config2 = dir.path().join("config2.json");
    let text = std::fs::read_to_string(&config3).unwrap();
    std::fs::write(&config2, text.replace("\"epochs\": 3", "\"epochs\": 2")).unwrap();

    let data = dir.path().join("data.mdnset");
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config3).arg("--out").arg(&data));

    let model_full = dir.path().join("full.smdn");
    run_ok(bin().args(["train"]).arg("--config").arg(&config3).arg("--data").arg(&data).arg("--out").arg(&model_full));

    let model_part = dir.path().join("part.smdn");
    let ckpt = dir.path().join("part.ckpt.json");
    run_ok(
        bin().args(["train"]).arg("--config").arg(&config2).arg("--data").arg(&data)
            .arg("--out").arg(&model_part).arg("--checkpoint").arg(&ckpt),
    );
    let model_resumed = dir.path().join("resumed.smdn");
    run_ok(
        bin().args(["train"]).arg("--config").arg(&config3).arg("--data").arg(&data)
            .arg("--out").arg(&model_resumed).arg("--resume").arg(&ckpt),
    );

    let full_history = std::fs::read_to_string(dir.path().join("full.smdn.history.csv")).unwrap();
    let resumed_history =
        std::fs::read_to_string(dir.path().join("resumed.smdn.history.csv")).unwrap();
    assert_eq!(full_history, resumed_history);
    assert_eq!(
        std::fs::read(&model_full).unwrap(),
        std::fs::read(&model_resumed).unwrap()
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    // Missing required config field -> 2, message names the field.
    let bad_config = dir.path().join("bad.json");
    std::fs::write(&bad_config, r#"{"seed": 1}"#).unwrap();
    let out = bin()
        .args(["gen-data"])
        .arg("--config")
        .arg(&bad_config)
        .arg("--out")
        .arg(dir.path().join("x.mdnset"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("regime"));

    // Corrupt dataset -> 3.
    let config = write_tiny_config(dir.path());
    let junk = dir.path().join("junk.mdnset");
    let mut f = std::fs::File::create(&junk).unwrap();
    f.write_all(b"NOTADATASET").unwrap();
    drop(f);
    let out = bin()
        .args(["train"])
        .arg("--config")
        .arg(&config)
        .arg("--data")
        .arg(&junk)
        .arg("--out")
        .arg(dir.path().join("m.smdn"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // Zero strike -> 2.
    let scenario = write_scenario(dir.path());
    let data = dir.path().join("data.mdnset");
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&data));
    let model = dir.path().join("model.smdn");
    run_ok(bin().args(["train"]).arg("--config").arg(&config).arg("--data").arg(&data).arg("--out").arg(&model));
    let out = bin()
        .args(["price"])
        .arg("--model")
        .arg(&model)
        .arg("--scenario")
        .arg(&scenario)
        .args(["--strikes", "0.0,1.0", "--kind", "call"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_env_var_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let with_env = dir.path().join("env.mdnset");
    let with_flag = dir.path().join("flag.mdnset");
    run_ok(
        bin()
            .env("SIGMDN_SEED", "777")
            .args(["gen-data"])
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&with_env),
    );
    run_ok(
        bin()
            .args(["gen-data", "--seed", "777"])
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&with_flag),
    );
    assert_eq!(std::fs::read(&with_env).unwrap(), std::fs::read(&with_flag).unwrap());
    // And both differ from the config-seed run.
    let default_run = dir.path().join("default.mdnset");
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&default_run));
    assert_ne!(std::fs::read(&with_env).unwrap(), std::fs::read(&default_run).unwrap());
}
