//! Plain-text prediction files.
//!
//! One row per frame, tab-separated:
//! `video_id  frame_idx  logit_0..K-1  prob_0..K-1  label`.
//! Floats are written in Rust's shortest round-trip form, so re-parsing a
//! file reproduces the in-memory values exactly. Rows of one video are
//! contiguous with frame indices counting up from 0.

use std::fs;
use std::path::Path;

use super::FramePredictions;
use crate::error::{Error, Result};

pub fn write_predictions(predictions: &[FramePredictions], path: &Path) -> Result<()> {
    let mut body = String::new();
    for p in predictions {
        for t in 0..p.frames() {
            body.push_str(&p.video_id);
            body.push('\t');
            body.push_str(&t.to_string());
            for v in p.logit_row(t) {
                body.push('\t');
                body.push_str(&format!("{v}"));
            }
            for v in p.prob_row(t) {
                body.push('\t');
                body.push_str(&format!("{v}"));
            }
            body.push('\t');
            body.push_str(&p.labels[t].to_string());
            body.push('\n');
        }
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Rows of one video while its block is being accumulated.
type PendingVideo = (String, usize, Vec<f32>, Vec<f32>, Vec<usize>);

pub fn read_predictions(path: &Path) -> Result<Vec<FramePredictions>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<FramePredictions> = Vec::new();
    let mut current: Option<PendingVideo> = None;

    let flush = |cur: &mut Option<PendingVideo>, out: &mut Vec<FramePredictions>| -> Result<()> {
        if let Some((id, k, logits, probs, labels)) = cur.take() {
            out.push(FramePredictions::from_parts(id, k, logits, probs, labels)?);
        }
        Ok(())
    };

    for (lineno, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 || !(cols.len() - 3).is_multiple_of(2) {
            return Err(Error::Corrupt(format!(
                "{}:{}: row has {} columns, expected video_id, frame_idx, K logits, K probs, label",
                path.display(),
                lineno + 1,
                cols.len()
            )));
        }
        let k = (cols.len() - 3) / 2;
        let video_id = cols[0];
        let frame_idx: usize = cols[1].parse().map_err(|_| {
            Error::Corrupt(format!("{}:{}: bad frame index '{}'", path.display(), lineno + 1, cols[1]))
        })?;
        let parse_f = |s: &str| -> Result<f32> {
            s.parse::<f32>().map_err(|_| {
                Error::Corrupt(format!("{}:{}: bad float '{}'", path.display(), lineno + 1, s))
            })
        };
        let logits: Vec<f32> = cols[2..2 + k].iter().map(|s| parse_f(s)).collect::<Result<_>>()?;
        let probs: Vec<f32> = cols[2 + k..2 + 2 * k].iter().map(|s| parse_f(s)).collect::<Result<_>>()?;
        let label: usize = cols[2 + 2 * k].parse().map_err(|_| {
            Error::Corrupt(format!(
                "{}:{}: bad label '{}'",
                path.display(),
                lineno + 1,
                cols[2 + 2 * k]
            ))
        })?;

        let start_new = match &current {
            None => true,
            Some((id, ck, _, _, _)) => id != video_id || *ck != k,
        };
        if start_new {
            flush(&mut current, &mut out)?;
            current = Some((video_id.to_string(), k, Vec::new(), Vec::new(), Vec::new()));
        }
        let (_, _, cl, cp, clab) = current.as_mut().unwrap();
        if frame_idx != clab.len() {
            return Err(Error::Corrupt(format!(
                "{}:{}: frame index {} out of order (expected {})",
                path.display(),
                lineno + 1,
                frame_idx,
                clab.len()
            )));
        }
        cl.extend_from_slice(&logits);
        cp.extend_from_slice(&probs);
        clab.push(label);
    }
    flush(&mut current, &mut out)?;
    Ok(out)
}
