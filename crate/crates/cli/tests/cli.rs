//! End-to-end checks of the command-line surface, driving the real binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmcer_core::aggregation::{
    majority_vote, read_predictions, sliding_window_ensemble, EnsembleInput,
};
use mmcer_core::model::{ModelConfig, ModelParams};
use mmcer_core::trainer::save_checkpoint;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmcer"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path, videos: usize, frames: usize, k: usize, separation: f32, seed: u64) -> PathBuf {
    let out = run(&[
        "synth",
        "--out-dir",
        dir.to_str().unwrap(),
        "--videos",
        &videos.to_string(),
        "--frames",
        &frames.to_string(),
        "--k",
        &k.to_string(),
        "--separation",
        &separation.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_ok(&out);
    dir.join("manifest.tsv")
}

/// Small-but-real training setup shared by the workflow tests.
fn quick_train(dir: &Path, manifest: &Path, seed: u64, lr: &str, epochs: usize) -> PathBuf {
    let out_dir = dir.join(format!("run_{seed}_{lr}"));
    let out = run(&[
        "train",
        "--train-manifest",
        manifest.to_str().unwrap(),
        "--val-manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--epochs",
        &epochs.to_string(),
        "--lr",
        lr,
        "--seed",
        &seed.to_string(),
        "--k",
        "4",
        "--d-model",
        "16",
        "--window",
        "2",
    ]);
    assert_ok(&out);
    out_dir
}

#[test]
fn synth_is_deterministic_and_writes_four_files_per_video() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    synth(&a, 4, 3, 4, 2.0, 77);
    synth(&b, 4, 3, 4, 2.0, 77);
    assert_eq!(
        fs::read(a.join("manifest.tsv")).unwrap(),
        fs::read(b.join("manifest.tsv")).unwrap()
    );
    let feature_files: Vec<_> = fs::read_dir(a.join("features")).unwrap().collect();
    assert_eq!(feature_files.len(), 4 * 4);
    assert_eq!(
        fs::read(a.join("features/synth_0000.vit.mmfe")).unwrap(),
        fs::read(b.join("features/synth_0000.vit.mmfe")).unwrap()
    );
}

#[test]
fn train_writes_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("data"), 6, 3, 4, 4.0, 1);
    let run_dir = quick_train(dir.path(), &manifest, 3, "0.001", 2);
    assert!(run_dir.join("checkpoint.mmck").exists());
    let log = fs::read_to_string(run_dir.join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 2, "header plus one line per epoch:\n{log}");
}

#[test]
fn train_with_missing_manifest_exits_3_and_names_the_path() {
    let out = run(&[
        "train",
        "--train-manifest",
        "/nonexistent/m.tsv",
        "--val-manifest",
        "/nonexistent/m.tsv",
        "--out-dir",
        "/tmp/never_created_mmcer",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/m.tsv"), "{stderr}");
    assert!(!Path::new("/tmp/never_created_mmcer").exists());
}

#[test]
fn zero_learning_rate_checkpoint_equals_fresh_init_dump() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("data"), 6, 3, 4, 4.0, 2);
    let run_dir = quick_train(dir.path(), &manifest, 5, "0", 2);

    let config = ModelConfig {
        classes: 4,
        d_model: 16,
        window: 2,
        ..ModelConfig::default()
    };
    let init = ModelParams::<f32>::init(&config, 5).unwrap();
    let dump = dir.path().join("init.mmck");
    save_checkpoint(&init, &config, &dump).unwrap();
    assert_eq!(
        fs::read(run_dir.join("checkpoint.mmck")).unwrap(),
        fs::read(&dump).unwrap()
    );
}

#[test]
fn predict_covers_every_frame_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("data"), 5, 4, 4, 4.0, 3);
    let run_dir = quick_train(dir.path(), &manifest, 7, "0.001", 2);
    let ckpt = run_dir.join("checkpoint.mmck");

    let p1 = dir.path().join("p1.tsv");
    let p2 = dir.path().join("p2.tsv");
    for p in [&p1, &p2] {
        let out = run(&[
            "predict",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());

    let body = fs::read_to_string(&p1).unwrap();
    assert_eq!(body.lines().count(), 5 * 4);
    // probability columns sum to 1 per row
    for line in body.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        let k = (cols.len() - 3) / 2;
        let sum: f32 = cols[2 + k..2 + 2 * k].iter().map(|s| s.parse::<f32>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-5, "{line}");
    }
}

#[test]
fn aggregate_matches_library_and_methods_agree_on_constant_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("data"), 5, 4, 4, 6.0, 4);
    let run_dir = quick_train(dir.path(), &manifest, 9, "0.001", 3);
    let preds_path = dir.path().join("preds.tsv");
    let out = run(&[
        "predict",
        "--checkpoint",
        run_dir.join("checkpoint.mmck").to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        preds_path.to_str().unwrap(),
    ]);
    assert_ok(&out);

    let mut outputs = Vec::new();
    for method in ["vote", "logits", "probs"] {
        let label_path = dir.path().join(format!("labels_{method}.tsv"));
        let out = run(&[
            "aggregate",
            "--predictions",
            preds_path.to_str().unwrap(),
            "--method",
            method,
            "--out",
            label_path.to_str().unwrap(),
        ]);
        assert_ok(&out);
        outputs.push(fs::read_to_string(&label_path).unwrap());
    }

    // vote output equals the aggregation module applied to the parsed file
    let parsed = read_predictions(&preds_path).unwrap();
    let expected: Vec<String> = parsed
        .iter()
        .map(|p| format!("{}\t{}", p.video_id, majority_vote(&p.labels).unwrap()))
        .collect();
    let got: Vec<String> = outputs[0].lines().map(str::to_string).collect();
    assert_eq!(got, expected);

    // On a fixture where every frame predicts the same class, all three
    // methods emit identical label files.
    let agree_path = dir.path().join("agree.tsv");
    let mut body = String::new();
    for (vid, class) in [("a", 1usize), ("b", 0)] {
        for t in 0..5 {
            let logits = if class == 0 { "3\t0" } else { "0\t3" };
            let probs = if class == 0 { "0.95\t0.05" } else { "0.05\t0.95" };
            body.push_str(&format!("{vid}\t{t}\t{logits}\t{probs}\t{class}\n"));
        }
    }
    fs::write(&agree_path, body).unwrap();
    let mut agree_outputs = Vec::new();
    for method in ["vote", "logits", "probs"] {
        let label_path = dir.path().join(format!("agree_{method}.tsv"));
        assert_ok(&run(&[
            "aggregate",
            "--predictions",
            agree_path.to_str().unwrap(),
            "--method",
            method,
            "--out",
            label_path.to_str().unwrap(),
        ]));
        agree_outputs.push(fs::read_to_string(&label_path).unwrap());
    }
    assert_eq!(agree_outputs[0], agree_outputs[1]);
    assert_eq!(agree_outputs[1], agree_outputs[2]);
    assert_eq!(agree_outputs[0], "a\t1\nb\t0\n");
}

#[test]
fn aggregate_rejects_unknown_method_as_usage_error() {
    let out = run(&[
        "aggregate",
        "--predictions",
        "whatever.tsv",
        "--method",
        "blend",
        "--out",
        "out.tsv",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ensemble_single_file_window_one_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("data"), 4, 5, 4, 4.0, 5);
    let run_dir = quick_train(dir.path(), &manifest, 11, "0.001", 2);
    let preds_path = dir.path().join("preds.tsv");
    assert_ok(&run(&[
        "predict",
        "--checkpoint",
        run_dir.join("checkpoint.mmck").to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        preds_path.to_str().unwrap(),
    ]));

    let fused_path = dir.path().join("fused.tsv");
    assert_ok(&run(&[
        "ensemble",
        "--predictions",
        preds_path.to_str().unwrap(),
        "--window",
        "1",
        "--out",
        fused_path.to_str().unwrap(),
    ]));

    let parsed = read_predictions(&preds_path).unwrap();
    let mut expected = Vec::new();
    let mut sorted = parsed.clone();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    for p in &sorted {
        for (t, l) in p.labels.iter().enumerate() {
            expected.push(format!("{}\t{}\t{}", p.video_id, t, l));
        }
    }
    let got: Vec<String> = fs::read_to_string(&fused_path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn ensemble_rejects_mismatched_frame_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    // Same video id, different frame counts.
    fs::write(&a, "v\t0\t1\t0\t0.7\t0.3\t0\nv\t1\t1\t0\t0.7\t0.3\t0\n").unwrap();
    fs::write(&b, "v\t0\t1\t0\t0.7\t0.3\t0\n").unwrap();
    let out = run(&[
        "ensemble",
        "--predictions",
        a.to_str().unwrap(),
        "--predictions",
        b.to_str().unwrap(),
        "--out",
        dir.path().join("fused.tsv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn three_model_ensemble_matches_module_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("data"), 3, 6, 4, 4.0, 6);
    let mut pred_paths = Vec::new();
    for seed in [21u64, 22, 23] {
        let run_dir = quick_train(dir.path(), &manifest, seed, "0.002", 2);
        let p = dir.path().join(format!("preds_{seed}.tsv"));
        assert_ok(&run(&[
            "predict",
            "--checkpoint",
            run_dir.join("checkpoint.mmck").to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            p.to_str().unwrap(),
        ]));
        pred_paths.push(p);
    }

    let fused_path = dir.path().join("fused.tsv");
    let mut args = vec!["ensemble".to_string()];
    for p in &pred_paths {
        args.push("--predictions".into());
        args.push(p.to_str().unwrap().into());
    }
    args.extend(["--window".into(), "4".into(), "--out".into(), fused_path.to_str().unwrap().into()]);
    let out = bin().args(&args).output().unwrap();
    assert_ok(&out);

    // Oracle through the library on the parsed files.
    let models: Vec<Vec<_>> = pred_paths.iter().map(|p| read_predictions(p).unwrap()).collect();
    let video_ids: Vec<String> = {
        let mut ids: Vec<String> = models[0].iter().map(|p| p.video_id.clone()).collect();
        ids.sort();
        ids
    };
    let mut expected = Vec::new();
    for id in &video_ids {
        let per_video: Vec<_> = models
            .iter()
            .map(|m| m.iter().find(|p| &p.video_id == id).unwrap().clone())
            .collect();
        let input = EnsembleInput::new(per_video).unwrap();
        let labels = sliding_window_ensemble(&input, 4).unwrap();
        for (t, l) in labels.iter().enumerate() {
            expected.push(format!("{id}\t{t}\t{l}"));
        }
    }
    let got: Vec<String> = fs::read_to_string(&fused_path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn evaluate_perfect_fixture_scores_one_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    // Hand-built predictions exactly matching a hand-built gold manifest.
    let preds_path = dir.path().join("preds.tsv");
    let mut body = String::new();
    for (vid, class) in [("a", 0usize), ("b", 1)] {
        for t in 0..3 {
            let logits = if class == 0 { "2\t0" } else { "0\t2" };
            let probs = if class == 0 { "0.88\t0.12" } else { "0.12\t0.88" };
            body.push_str(&format!("{vid}\t{t}\t{logits}\t{probs}\t{class}\n"));
        }
    }
    fs::write(&preds_path, body).unwrap();

    let manifest_path = dir.path().join("gold.tsv");
    fs::write(&manifest_path, "a\tx\tx\tx\tx\t0\ttest\nb\tx\tx\tx\tx\t1\ttest\n").unwrap();

    let report_path = dir.path().join("report.kv");
    let out = run(&[
        "evaluate",
        "--predictions",
        preds_path.to_str().unwrap(),
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--level",
        "video",
        "--method",
        "vote",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let kv = fs::read_to_string(&report_path).unwrap();
    assert!(kv.contains("macro_f1\t1"), "{kv}");
    assert!(kv.contains("weighted_f1\t1"), "{kv}");
}

#[test]
fn evaluate_method_all_emits_exactly_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let preds_path = dir.path().join("preds.tsv");
    fs::write(&preds_path, "a\t0\t2\t0\t0.88\t0.12\t0\na\t1\t0\t2\t0.12\t0.88\t1\n").unwrap();
    let manifest_path = dir.path().join("gold.tsv");
    fs::write(&manifest_path, "a\tx\tx\tx\tx\t0\ttest\n").unwrap();

    let report_path = dir.path().join("report.kv");
    let out = run(&[
        "evaluate",
        "--predictions",
        preds_path.to_str().unwrap(),
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--level",
        "video",
        "--method",
        "all",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = stdout
        .lines()
        .filter(|l| {
            l.starts_with("Majority voting")
                || l.starts_with("Average logits")
                || l.starts_with("Average probabilities")
        })
        .collect();
    assert_eq!(rows.len(), 3, "{stdout}");
    let kv = fs::read_to_string(&report_path).unwrap();
    assert_eq!(kv.matches("method\t").count(), 3);
}

#[test]
fn frame_level_evaluation_matches_metrics_module() {
    let dir = tempfile::tempdir().unwrap();
    // Frame-labelled gold: one video, 4 frames, labels from a file.
    let labels_path = dir.path().join("v.labels");
    fs::write(&labels_path, "0\n1\n1\n0\n").unwrap();
    let manifest_path = dir.path().join("gold.tsv");
    fs::write(&manifest_path, "v\tx\tx\tx\tx\tv.labels\ttest\n").unwrap();

    let preds_path = dir.path().join("preds.tsv");
    let mut body = String::new();
    for (t, pred) in [0usize, 1, 0, 0].iter().enumerate() {
        let logits = if *pred == 0 { "2\t0" } else { "0\t2" };
        let probs = if *pred == 0 { "0.88\t0.12" } else { "0.12\t0.88" };
        body.push_str(&format!("v\t{t}\t{logits}\t{probs}\t{pred}\n"));
    }
    fs::write(&preds_path, body).unwrap();

    let report_path = dir.path().join("report.kv");
    let out = run(&[
        "evaluate",
        "--predictions",
        preds_path.to_str().unwrap(),
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--level",
        "frame",
        "--method",
        "vote",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_ok(&out);

    // Oracle: preds [0,1,0,0] vs golds [0,1,1,0].
    let cm = mmcer_core::metrics::confusion(&[0, 1, 0, 0], &[0, 1, 1, 0], 2).unwrap();
    let expected_macro = mmcer_core::metrics::macro_f1(&cm);
    let kv = fs::read_to_string(&report_path).unwrap();
    let macro_line = kv.lines().find(|l| l.starts_with("macro_f1\t")).unwrap();
    let got: f64 = macro_line.split('\t').nth(1).unwrap().parse().unwrap();
    assert!((got - expected_macro).abs() < 1e-12);
}
