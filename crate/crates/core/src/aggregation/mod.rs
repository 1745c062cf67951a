//! Post-processing: three video-level aggregation strategies over frame
//! predictions, plus the trailing-window cross-model frame ensemble.
//! Ties always resolve to the lowest class index.

mod io;

pub use io::{read_predictions, write_predictions};

use crate::error::{Error, Result};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn stable_softmax(row: &[f32], out: &mut [f32]) {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0f32;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Per-frame logits, probabilities and argmax labels for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePredictions {
    pub video_id: String,
    pub classes: usize,
    /// T×K row-major.
    pub logits: Vec<f32>,
    /// T×K row-major; each row sums to 1 within 1e-5.
    pub probs: Vec<f32>,
    /// labels[t] == argmax(logits[t]), lowest-index ties.
    pub labels: Vec<usize>,
}

impl FramePredictions {
    /// Derives probabilities (stable softmax) and labels from raw logits.
    pub fn from_logits(video_id: impl Into<String>, classes: usize, logits: Vec<f32>) -> Result<Self> {
        if classes == 0 || logits.is_empty() || !logits.len().is_multiple_of(classes) {
            return Err(Error::Contract(format!(
                "logits length {} is not a positive multiple of {classes} classes",
                logits.len()
            )));
        }
        let frames = logits.len() / classes;
        let mut probs = vec![0.0f32; logits.len()];
        let mut labels = Vec::with_capacity(frames);
        for t in 0..frames {
            let row = &logits[t * classes..(t + 1) * classes];
            stable_softmax(row, &mut probs[t * classes..(t + 1) * classes]);
            labels.push(argmax(row));
        }
        Ok(FramePredictions {
            video_id: video_id.into(),
            classes,
            logits,
            probs,
            labels,
        })
    }

    /// Validating constructor for externally supplied rows (file parsing).
    pub fn from_parts(
        video_id: impl Into<String>,
        classes: usize,
        logits: Vec<f32>,
        probs: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let video_id = video_id.into();
        let frames = labels.len();
        if logits.len() != frames * classes || probs.len() != frames * classes {
            return Err(Error::Contract(format!(
                "video '{video_id}': {frames} labels vs {} logits / {} probs for {classes} classes",
                logits.len(),
                probs.len()
            )));
        }
        for t in 0..frames {
            let row = &logits[t * classes..(t + 1) * classes];
            if labels[t] != argmax(row) {
                return Err(Error::Contract(format!(
                    "video '{video_id}' frame {t}: label {} is not the logit argmax {}",
                    labels[t],
                    argmax(row)
                )));
            }
            let sum: f32 = probs[t * classes..(t + 1) * classes].iter().sum();
            if (sum - 1.0).abs() > 1e-5 {
                return Err(Error::Contract(format!(
                    "video '{video_id}' frame {t}: probabilities sum to {sum}"
                )));
            }
        }
        Ok(FramePredictions {
            video_id,
            classes,
            logits,
            probs,
            labels,
        })
    }

    pub fn frames(&self) -> usize {
        self.labels.len()
    }

    pub fn logit_row(&self, t: usize) -> &[f32] {
        &self.logits[t * self.classes..(t + 1) * self.classes]
    }

    pub fn prob_row(&self, t: usize) -> &[f32] {
        &self.probs[t * self.classes..(t + 1) * self.classes]
    }
}

/// Several models' predictions for the same video, with equal frame counts.
#[derive(Debug, Clone)]
pub struct EnsembleInput {
    models: Vec<FramePredictions>,
}

impl EnsembleInput {
    pub fn new(models: Vec<FramePredictions>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::Contract("ensemble needs at least one model".into()))?;
        let frames = first.frames();
        for m in &models[1..] {
            if m.frames() != frames {
                return Err(Error::Contract(format!(
                    "ensemble frame counts disagree: {} vs {}",
                    frames,
                    m.frames()
                )));
            }
        }
        Ok(EnsembleInput { models })
    }

    pub fn models(&self) -> &[FramePredictions] {
        &self.models
    }

    pub fn frames(&self) -> usize {
        self.models[0].frames()
    }
}

fn modal_class(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate().skip(1) {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Video label = most frequent frame label.
pub fn majority_vote(labels: &[usize]) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::Contract("majority_vote over zero frames".into()));
    }
    let k = labels.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    Ok(modal_class(&counts))
}

/// Video label = argmax of the per-class mean of frame logits.
pub fn average_logits(logits: &[f32], classes: usize) -> Result<usize> {
    if logits.is_empty() || classes == 0 || !logits.len().is_multiple_of(classes) {
        return Err(Error::Contract(format!(
            "average_logits needs a nonempty T x {classes} matrix, got {} values",
            logits.len()
        )));
    }
    let frames = logits.len() / classes;
    let mut means = vec![0.0f32; classes];
    for t in 0..frames {
        for (m, &v) in means.iter_mut().zip(&logits[t * classes..(t + 1) * classes]) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= frames as f32;
    }
    Ok(argmax(&means))
}

/// Video label = argmax of the per-class mean probability. Rows must already
/// be normalized (sum to 1 within 1e-5).
pub fn average_probs(probs: &[f32], classes: usize) -> Result<usize> {
    if probs.is_empty() || classes == 0 || !probs.len().is_multiple_of(classes) {
        return Err(Error::Contract(format!(
            "average_probs needs a nonempty T x {classes} matrix, got {} values",
            probs.len()
        )));
    }
    let frames = probs.len() / classes;
    for t in 0..frames {
        let sum: f32 = probs[t * classes..(t + 1) * classes].iter().sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(Error::Contract(format!(
                "average_probs frame {t}: row sums to {sum}, not 1"
            )));
        }
    }
    let mut means = vec![0.0f32; classes];
    for t in 0..frames {
        for (m, &v) in means.iter_mut().zip(&probs[t * classes..(t + 1) * classes]) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= frames as f32;
    }
    Ok(argmax(&means))
}

/// Cross-model frame ensemble: the label of frame `t` is the modal class of
/// every model's labels over the trailing window
/// `[max(0, t - window + 1), t]` (early frames use the truncated window).
pub fn sliding_window_ensemble(inputs: &EnsembleInput, window: usize) -> Result<Vec<usize>> {
    if window < 1 {
        return Err(Error::Parameter("ensemble window must be >= 1".into()));
    }
    let frames = inputs.frames();
    let classes = inputs
        .models()
        .iter()
        .flat_map(|m| m.labels.iter())
        .max()
        .map_or(1, |&m| m + 1);
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let lo = (t + 1).saturating_sub(window);
        let mut counts = vec![0usize; classes];
        for model in inputs.models() {
            for &l in &model.labels[lo..=t] {
                counts[l] += 1;
            }
        }
        out.push(modal_class(&counts));
    }
    Ok(out)
}
