//! Subcommand implementations. Every command finishes all loading and
//! validation before it writes its first output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mmcer_core::aggregation::{
    read_predictions, sliding_window_ensemble, write_predictions, EnsembleInput, FramePredictions,
};
use mmcer_core::dataio::{load_manifest, synth_dataset, DimRegistry, Manifest, SynthConfig};
use mmcer_core::metrics::{
    comparison_table, evaluate as evaluate_metrics, evaluate_all_methods, AggregationMethod,
    EvalLevel, GoldLabel, MetricsReport,
};
use mmcer_core::model::{forward, Mode, ModelConfig};
use mmcer_core::trainer::{load_checkpoint, save_checkpoint, train as run_training, TrainConfig};
use mmcer_core::{Error, Result};

use crate::{AggregateArgs, EnsembleArgs, EvaluateArgs, LevelArg, MethodArg, MethodOrAllArg, PredictArgs, SynthArgs, TrainArgs};

impl From<MethodArg> for AggregationMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Vote => AggregationMethod::Vote,
            MethodArg::Logits => AggregationMethod::Logits,
            MethodArg::Probs => AggregationMethod::Probs,
        }
    }
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn train(args: TrainArgs) -> Result<()> {
    let model_config = ModelConfig {
        classes: args.k,
        d_model: args.d_model,
        window: args.window,
        ..ModelConfig::default()
    };
    let registry = model_config.registry();
    let train_set = load_manifest(&args.train_manifest, &registry, Some("train"))?;
    if train_set.is_empty() {
        return Err(Error::Manifest(format!(
            "{}: no videos tagged split=train",
            args.train_manifest.display()
        )));
    }
    let val_set = load_manifest(&args.val_manifest, &registry, Some("val"))?;

    let train_config = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let outcome = run_training(&train_set, &val_set, &model_config, &train_config)?;

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let ckpt_path = args.out_dir.join("checkpoint.mmck");
    save_checkpoint(&outcome.params, &model_config, &ckpt_path)?;
    let log_path = args.out_dir.join("train_log.tsv");
    write_text(&log_path, &outcome.log.to_table())?;

    let wall: f64 = outcome.log.epochs.iter().map(|e| e.wall_time_s).sum();
    println!(
        "trained {} epochs in {:.1}s; best epoch {} (val macro F1 {:.4})",
        outcome.log.epochs.len(),
        wall,
        outcome.best_epoch,
        outcome.best_val_f1
    );
    println!("checkpoint: {}", ckpt_path.display());
    println!("train log:  {}", log_path.display());
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let (params, config) = load_checkpoint(&args.checkpoint)?;
    let registry = config.registry();
    let bundles = load_manifest(&args.manifest, &registry, None)?;
    let predictions: Vec<FramePredictions> = bundles
        .iter()
        .map(|b| forward(b, &params, &config, Mode::Eval))
        .collect::<Result<_>>()?;
    write_predictions(&predictions, &args.out)?;
    let rows: usize = predictions.iter().map(|p| p.frames()).sum();
    println!("wrote {rows} prediction rows for {} videos to {}", predictions.len(), args.out.display());
    Ok(())
}

pub fn aggregate(args: AggregateArgs) -> Result<()> {
    let predictions = read_predictions(&args.predictions)?;
    let method: AggregationMethod = args.method.into();
    let mut body = String::new();
    for p in &predictions {
        let label = method.apply(p)?;
        body.push_str(&format!("{}\t{}\n", p.video_id, label));
    }
    write_text(&args.out, &body)?;
    println!("wrote {} video labels to {}", predictions.len(), args.out.display());
    Ok(())
}

pub fn ensemble(args: EnsembleArgs) -> Result<()> {
    let mut per_model: Vec<Vec<FramePredictions>> = Vec::with_capacity(args.predictions.len());
    for path in &args.predictions {
        per_model.push(read_predictions(path)?);
    }

    // Group by video id; every model must cover every video with equal T.
    let mut by_video: BTreeMap<String, Vec<&FramePredictions>> = BTreeMap::new();
    for preds in &per_model {
        for p in preds {
            by_video.entry(p.video_id.clone()).or_default().push(p);
        }
    }
    let n_models = per_model.len();
    let incomplete: Vec<String> = by_video
        .iter()
        .filter(|(_, v)| v.len() != n_models)
        .map(|(id, _)| id.clone())
        .collect();
    if !incomplete.is_empty() {
        return Err(Error::Coverage { missing: incomplete });
    }
    for (id, models) in &by_video {
        let frames = models[0].frames();
        if models.iter().any(|m| m.frames() != frames) {
            return Err(Error::Contract(format!(
                "video '{id}': models disagree on frame count"
            )));
        }
    }

    let mut body = String::new();
    for (id, models) in &by_video {
        let input = EnsembleInput::new(models.iter().map(|&m| m.clone()).collect())?;
        let labels = sliding_window_ensemble(&input, args.window)?;
        for (t, l) in labels.iter().enumerate() {
            body.push_str(&format!("{id}\t{t}\t{l}\n"));
        }
    }
    write_text(&args.out, &body)?;
    println!("wrote fused labels for {} videos to {}", by_video.len(), args.out.display());
    Ok(())
}

fn gold_labels_from_manifest(path: &Path) -> Result<Vec<(String, GoldLabel)>> {
    let manifest = Manifest::parse(path)?;
    manifest
        .entries
        .iter()
        .map(|entry| {
            let (video, frames) = Manifest::gold_label(entry)?;
            let gold = match (video, frames) {
                (Some(l), _) => GoldLabel::Video(l),
                (None, Some(f)) => GoldLabel::Frames(f),
                (None, None) => {
                    return Err(Error::Data {
                        video_id: entry.video_id.clone(),
                        reason: "gold manifest entry has no label".into(),
                    })
                }
            };
            Ok((entry.video_id.clone(), gold))
        })
        .collect()
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let predictions = read_predictions(&args.predictions)?;
    let golds = gold_labels_from_manifest(&args.manifest)?;
    let classes = predictions
        .first()
        .map(|p| p.classes)
        .ok_or_else(|| Error::Contract(format!("{}: no predictions", args.predictions.display())))?;

    let level = match args.level {
        LevelArg::Frame => EvalLevel::Frame,
        LevelArg::Video => EvalLevel::Video,
    };
    let reports: Vec<MetricsReport> = match (args.method, level) {
        (MethodOrAllArg::All, EvalLevel::Video) => evaluate_all_methods(&predictions, &golds, classes)?,
        (MethodOrAllArg::All, EvalLevel::Frame) => {
            return Err(Error::Parameter(
                "--method all is a video-level comparison; frame level takes a single method".into(),
            ))
        }
        (m, level) => {
            let method = match m {
                MethodOrAllArg::Vote => AggregationMethod::Vote,
                MethodOrAllArg::Logits => AggregationMethod::Logits,
                MethodOrAllArg::Probs => AggregationMethod::Probs,
                MethodOrAllArg::All => unreachable!(),
            };
            vec![evaluate_metrics(&predictions, &golds, classes, level, method)?]
        }
    };

    let kv: Vec<String> = reports.iter().map(|r| r.to_kv()).collect();
    write_text(&args.out, &kv.join("\n"))?;
    print!("{}", comparison_table(&reports));
    println!("report: {}", args.out.display());
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        seed: args.seed,
        videos: args.videos,
        frames: args.frames,
        classes: args.k,
        separation: args.separation,
        registry: DimRegistry::default(),
    };
    let (bundles, manifest_path) = synth_dataset(&config, &args.out_dir)?;
    println!(
        "wrote {} videos ({} feature files) under {}",
        bundles.len(),
        4 * bundles.len(),
        args.out_dir.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}
