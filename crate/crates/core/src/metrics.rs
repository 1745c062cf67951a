//! Confusion matrices, per-class/macro/weighted F1 and report emission.
//! All metric arithmetic runs in 64-bit.

use std::fmt::Write as _;

use crate::aggregation::{average_logits, average_probs, majority_vote, FramePredictions};
use crate::error::{Error, Result};

/// Video-level aggregation strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMethod {
    Vote,
    Logits,
    Probs,
}

impl AggregationMethod {
    pub const ALL: [AggregationMethod; 3] = [
        AggregationMethod::Vote,
        AggregationMethod::Logits,
        AggregationMethod::Probs,
    ];

    pub fn key(self) -> &'static str {
        match self {
            AggregationMethod::Vote => "vote",
            AggregationMethod::Logits => "logits",
            AggregationMethod::Probs => "probs",
        }
    }

    /// Row label used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            AggregationMethod::Vote => "Majority voting",
            AggregationMethod::Logits => "Average logits",
            AggregationMethod::Probs => "Average probabilities",
        }
    }

    pub fn apply(self, p: &FramePredictions) -> Result<usize> {
        match self {
            AggregationMethod::Vote => majority_vote(&p.labels),
            AggregationMethod::Logits => average_logits(&p.logits, p.classes),
            AggregationMethod::Probs => average_probs(&p.probs, p.classes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalLevel {
    Frame,
    Video,
}

impl EvalLevel {
    pub fn key(self) -> &'static str {
        match self {
            EvalLevel::Frame => "frame",
            EvalLevel::Video => "video",
        }
    }
}

/// K×K counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn at(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.classes + pred]
    }

    pub fn record(&mut self, gold: usize, pred: usize) {
        self.counts[gold * self.classes + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// True-class counts.
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class * self.classes..(class + 1) * self.classes]
            .iter()
            .sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.classes).map(|g| self.at(g, class)).sum()
    }
}

/// Tallies predictions against gold labels.
pub fn confusion(preds: &[usize], golds: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (i, (&p, &g)) in preds.iter().zip(golds).enumerate() {
        for v in [p, g] {
            if v >= classes {
                return Err(Error::Label {
                    index: i,
                    value: v,
                    classes,
                });
            }
        }
        cm.record(g, p);
    }
    Ok(cm)
}

/// Per-class F1 = 2·TP / (2·TP + FP + FN); 0 when the denominator is 0.
pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<f64> {
    (0..cm.classes())
        .map(|c| {
            let tp = cm.at(c, c);
            let fp = cm.predicted(c) - tp;
            let fn_ = cm.support(c) - tp;
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                (2 * tp) as f64 / denom as f64
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1 over all K classes, absent classes included.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let f1 = per_class_f1(cm);
    f1.iter().sum::<f64>() / cm.classes() as f64
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Contract("weighted F1 over zero items".into()));
    }
    let f1 = per_class_f1(cm);
    let mut acc = 0.0f64;
    for (c, f) in f1.iter().enumerate() {
        acc += f * cm.support(c) as f64;
    }
    Ok(acc / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub support: Vec<u64>,
    pub level: EvalLevel,
    pub method: Option<AggregationMethod>,
}

impl MetricsReport {
    pub fn from_confusion(
        cm: &ConfusionMatrix,
        level: EvalLevel,
        method: Option<AggregationMethod>,
    ) -> Result<Self> {
        Ok(MetricsReport {
            per_class_f1: per_class_f1(cm),
            macro_f1: macro_f1(cm),
            weighted_f1: weighted_f1(cm)?,
            support: (0..cm.classes()).map(|c| cm.support(c)).collect(),
            level,
            method,
        })
    }

    /// Machine-readable key-value form. Keys: `per_class_f1.<c>`, `macro_f1`,
    /// `weighted_f1`, `level`, `method`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (c, f) in self.per_class_f1.iter().enumerate() {
            let _ = writeln!(s, "per_class_f1.{c}\t{f}");
        }
        let _ = writeln!(s, "macro_f1\t{}", self.macro_f1);
        let _ = writeln!(s, "weighted_f1\t{}", self.weighted_f1);
        let _ = writeln!(s, "level\t{}", self.level.key());
        let _ = writeln!(
            s,
            "method\t{}",
            self.method.map_or("-", AggregationMethod::key)
        );
        s
    }
}

/// Gold annotation for one video.
#[derive(Debug, Clone, PartialEq)]
pub enum GoldLabel {
    Video(usize),
    Frames(Vec<usize>),
}

/// Scores predictions against gold labels.
///
/// Frame level compares per-frame labels directly (a video-level gold label
/// is broadcast to every frame). Video level first reduces each video's
/// predictions with `method`, then scores one item per video (a frame-level
/// gold becomes its modal class).
pub fn evaluate(
    predictions: &[FramePredictions],
    golds: &[(String, GoldLabel)],
    classes: usize,
    level: EvalLevel,
    method: AggregationMethod,
) -> Result<MetricsReport> {
    let by_id: std::collections::HashMap<&str, &FramePredictions> =
        predictions.iter().map(|p| (p.video_id.as_str(), p)).collect();
    let missing: Vec<String> = golds
        .iter()
        .filter(|(id, _)| !by_id.contains_key(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }

    let mut pred_labels = Vec::new();
    let mut gold_labels = Vec::new();
    for (id, gold) in golds {
        let p = by_id[id.as_str()];
        match level {
            EvalLevel::Frame => {
                let gl: Vec<usize> = match gold {
                    GoldLabel::Video(l) => vec![*l; p.frames()],
                    GoldLabel::Frames(v) => {
                        if v.len() != p.frames() {
                            return Err(Error::Data {
                                video_id: id.clone(),
                                reason: format!(
                                    "{} gold frame labels vs {} predicted frames",
                                    v.len(),
                                    p.frames()
                                ),
                            });
                        }
                        v.clone()
                    }
                };
                pred_labels.extend_from_slice(&p.labels);
                gold_labels.extend(gl);
            }
            EvalLevel::Video => {
                pred_labels.push(method.apply(p)?);
                gold_labels.push(match gold {
                    GoldLabel::Video(l) => *l,
                    GoldLabel::Frames(v) => majority_vote(v)?,
                });
            }
        }
    }
    let cm = confusion(&pred_labels, &gold_labels, classes)?;
    let method = match level {
        EvalLevel::Video => Some(method),
        EvalLevel::Frame => None,
    };
    MetricsReport::from_confusion(&cm, level, method)
}

/// Three-row comparison (one row per aggregation method) at video level.
pub fn evaluate_all_methods(
    predictions: &[FramePredictions],
    golds: &[(String, GoldLabel)],
    classes: usize,
) -> Result<Vec<MetricsReport>> {
    AggregationMethod::ALL
        .iter()
        .map(|&m| evaluate(predictions, golds, classes, EvalLevel::Video, m))
        .collect()
}

/// Plain-text comparison table, one row per report.
pub fn comparison_table(reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<24}{:>12}{:>12}", "Prediction Method", "Weighted F1", "Macro F1");
    for r in reports {
        let name = r.method.map_or("-", AggregationMethod::display_name);
        let _ = writeln!(s, "{:<24}{:>12.4}{:>12.4}", name, r.weighted_f1, r.macro_f1);
    }
    s
}
