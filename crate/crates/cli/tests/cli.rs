use std::path::Path;
use std::process::{Command, Output};

fn subact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subact"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_gen_config(dir: &Path) -> String {
    let path = dir.join("gen.json");
    let cfg = serde_json::json!({
        "holistic_classes": 3,
        "sub_action_classes": 6,
        "train_samples": 9,
        "test_samples": 6,
        "joints": 4,
        "segment_frames_min": 5,
        "segment_frames_max": 8,
        "grammar_len_min": 2,
        "grammar_len_max": 3,
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().into()
}

fn write_run_config(dir: &Path, data: &Path, fusion: &str) -> String {
    let path = dir.join(format!("run-{fusion}.json"));
    let cfg = serde_json::json!({
        "train_data": data.join("train.jsonl"),
        "test_data": data.join("test.jsonl"),
        "labels": data.join("labels.json"),
        "model": {
            "feature_dim": 8,
            "d_k": 8,
            "gcn_blocks": 2,
            "stride_blocks": [2],
            "frames": 6,
            "l_max": 3,
            "text_layers": 1,
            "text_heads": 2,
            "context_length": 16,
            "dropout": 0.0,
            "fusion": fusion,
        },
        "optimizer": { "epochs": 1, "batch_size": 4, "learning_rate": 0.01 },
        "observation_ratios": [0.5, 1.0],
        "seed": 11,
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().into()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn pipeline_runs_end_to_end_and_artifacts_embed_one_hash() {
    let dir = tempfile::tempdir().unwrap();
    let gen = write_gen_config(dir.path());
    let data = dir.path().join("data");
    assert_ok(&subact(&["gen-data", "--config", &gen, "--seed", "31", "--out", data.to_str().unwrap()]));
    for file in ["train.jsonl", "test.jsonl", "labels.json", "run.log"] {
        assert!(data.join(file).exists(), "{file} missing");
    }

    let run = write_run_config(dir.path(), &data, "cross_attention");
    let trained = dir.path().join("trained");
    assert_ok(&subact(&["train", "--config", &run, "--out", trained.to_str().unwrap()]));
    for file in ["checkpoint.bin", "manifest.json", "metrics.csv", "run.log"] {
        assert!(trained.join(file).exists(), "{file} missing");
    }
    let hash_line = first_line(&trained.join("metrics.csv"));
    assert!(hash_line.starts_with("# config "), "{hash_line}");

    let evald = dir.path().join("evald");
    assert_ok(&subact(&[
        "eval",
        "--config", &run,
        "--checkpoint", trained.to_str().unwrap(),
        "--ratio", "0.5",
        "--out", evald.to_str().unwrap(),
    ]));
    assert_eq!(first_line(&evald.join("metrics.csv")), hash_line, "hash differs across artifacts");
    let metrics = std::fs::read_to_string(evald.join("metrics.csv")).unwrap();
    assert!(metrics.contains("top1,or_50,"), "{metrics}");

    let proto = dir.path().join("proto");
    assert_ok(&subact(&["or-protocol", "--config", &run, "--out", proto.to_str().unwrap()]));
    let table = std::fs::read_to_string(proto.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2 + 3, "2 regime-A + 1 regime-B rows plus headers");
    assert!(table.contains("A,1,"), "{table}");
    assert!(table.contains("B,0.5,"), "{table}");
    let trained_bytes = std::fs::read(trained.join("checkpoint.bin")).unwrap();
    let proto_bytes = std::fs::read(proto.join("checkpoint.bin")).unwrap();
    assert_eq!(trained_bytes, proto_bytes, "full-observation cell diverged from standalone training");

    let att = dir.path().join("att");
    assert_ok(&subact(&[
        "export-attention",
        "--config", &run,
        "--checkpoint", trained.to_str().unwrap(),
        "--sample", "test-0000",
        "--out", att.to_str().unwrap(),
    ]));
    assert!(att.join("attention/test-0000.csv").exists());
    assert!(att.join("attention/test-0000.json").exists());
    assert_eq!(first_line(&att.join("attention/test-0000.csv")), hash_line);

    let bench = dir.path().join("bench");
    assert_ok(&subact(&[
        "bench",
        "--config", &run,
        "--checkpoint", trained.to_str().unwrap(),
        "--length", "60",
        "--reps", "3",
        "--out", bench.to_str().unwrap(),
    ]));
    let metrics = std::fs::read_to_string(bench.join("metrics.csv")).unwrap();
    assert!(metrics.contains("sequences_per_second,"), "{metrics}");
    assert!(metrics.contains("parameter_count,"), "{metrics}");

    let prep = dir.path().join("prep");
    assert_ok(&subact(&["preprocess", "--config", &run, "--out", prep.to_str().unwrap()]));
    for file in ["train.jsonl", "test.jsonl", "labels.json", "merge_report.csv", "run.log"] {
        assert!(prep.join(file).exists(), "{file} missing");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let gen = write_gen_config(dir.path());
    let data = dir.path().join("data");
    assert_ok(&subact(&["gen-data", "--config", &gen, "--seed", "31", "--out", data.to_str().unwrap()]));
    let run = write_run_config(dir.path(), &data, "cross_attention");

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_ok(&subact(&["train", "--config", &run, "--out", out.to_str().unwrap()]));
    }
    for file in ["checkpoint.bin", "manifest.json", "metrics.csv", "run.log"] {
        let left = std::fs::read(a.join(file)).unwrap();
        let right = std::fs::read(b.join(file)).unwrap();
        assert_eq!(left, right, "{file} differs between identical runs");
    }
}

#[test]
fn failures_exit_nonzero_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let gen = write_gen_config(dir.path());
    let data = dir.path().join("data");
    assert_ok(&subact(&["gen-data", "--config", &gen, "--seed", "31", "--out", data.to_str().unwrap()]));
    let run = write_run_config(dir.path(), &data, "add");
    let trained = dir.path().join("trained");
    assert_ok(&subact(&["train", "--config", &run, "--out", trained.to_str().unwrap()]));

    let att = dir.path().join("att");
    let out = subact(&[
        "export-attention",
        "--config", &run,
        "--checkpoint", trained.to_str().unwrap(),
        "--sample", "test-0000",
        "--out", att.to_str().unwrap(),
    ]);
    assert!(!out.status.success(), "non-attention export should fail");
    assert!(stderr_of(&out).contains("add"), "{}", stderr_of(&out));

    let out = subact(&[
        "eval",
        "--config", &run,
        "--seed", "99",
        "--checkpoint", trained.to_str().unwrap(),
        "--out", dir.path().join("evald").to_str().unwrap(),
    ]);
    assert!(!out.status.success(), "hash mismatch should fail");
    assert!(stderr_of(&out).contains("incompatible"), "{}", stderr_of(&out));

    let out = subact(&["ablate", "--config", &run, "--which", "attention", "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("seg_accuracy"), "{}", stderr_of(&out));

    let out = subact(&["train", "--config", dir.path().join("missing.json").to_str().unwrap(), "--out", dir.path().join("y").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("error:"), "{}", stderr_of(&out));
}
