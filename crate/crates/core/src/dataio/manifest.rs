//! Tab-separated dataset manifests.
//!
//! One line per video, columns:
//! `video_id  vit_path  resnet_path  audio_path  text_path  label  split`.
//! The label column is `-` (unlabeled), a class index, or a path to a
//! frame-label file. Relative paths resolve against the manifest's directory.
//! Lines starting with `#` are comments.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{align_modalities, read_feature_file, read_frame_labels, DimRegistry, ModalityBundle};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LabelSpec {
    None,
    Video(usize),
    FrameFile(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub video_id: String,
    pub vit_path: PathBuf,
    pub resnet_path: PathBuf,
    pub audio_path: PathBuf,
    pub text_path: PathBuf,
    pub label: LabelSpec,
    pub split: String,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(path: &Path) -> Result<Manifest> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in body.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(Error::Manifest(format!(
                    "{}:{}: expected 7 tab-separated columns, got {}",
                    path.display(),
                    lineno + 1,
                    cols.len()
                )));
            }
            let video_id = cols[0].to_string();
            if !seen.insert(video_id.clone()) {
                return Err(Error::Manifest(format!(
                    "{}:{}: duplicate video id '{}'",
                    path.display(),
                    lineno + 1,
                    video_id
                )));
            }
            let resolve = |p: &str| -> PathBuf {
                let pb = PathBuf::from(p);
                if pb.is_absolute() {
                    pb
                } else {
                    base.join(pb)
                }
            };
            let label = match cols[5] {
                "-" => LabelSpec::None,
                s => match s.parse::<usize>() {
                    Ok(v) => LabelSpec::Video(v),
                    Err(_) => LabelSpec::FrameFile(resolve(s)),
                },
            };
            entries.push(ManifestEntry {
                video_id,
                vit_path: resolve(cols[1]),
                resnet_path: resolve(cols[2]),
                audio_path: resolve(cols[3]),
                text_path: resolve(cols[4]),
                label,
                split: cols[6].to_string(),
            });
        }
        Ok(Manifest { entries })
    }

    /// Entries whose split tag equals `split`; `None` keeps everything.
    pub fn filtered(&self, split: Option<&str>) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| split.is_none_or(|s| e.split == s))
            .collect()
    }

    /// Gold labels per entry without touching feature files. Frame-label
    /// files are read; a plain video label is reported as-is.
    pub fn gold_label(entry: &ManifestEntry) -> Result<(Option<usize>, Option<Vec<usize>>)> {
        match &entry.label {
            LabelSpec::None => Ok((None, None)),
            LabelSpec::Video(v) => Ok((Some(*v), None)),
            LabelSpec::FrameFile(p) => {
                let frames = read_frame_labels(p)?;
                Ok((None, Some(frames)))
            }
        }
    }
}

fn load_entry(entry: &ManifestEntry, registry: &DimRegistry) -> Result<ModalityBundle> {
    for p in [
        &entry.vit_path,
        &entry.resnet_path,
        &entry.audio_path,
        &entry.text_path,
    ] {
        if !p.exists() {
            return Err(Error::Data {
                video_id: entry.video_id.clone(),
                reason: format!("missing feature file {}", p.display()),
            });
        }
    }
    let vit = read_feature_file(&entry.vit_path, registry)?;
    let resnet = read_feature_file(&entry.resnet_path, registry)?;
    let audio = read_feature_file(&entry.audio_path, registry)?;
    let text = read_feature_file(&entry.text_path, registry)?;
    let (label, frame_labels) = Manifest::gold_label(entry)?;
    let bundle = ModalityBundle {
        video_id: entry.video_id.clone(),
        vit,
        resnet,
        audio,
        text,
        label,
        frame_labels,
    };
    let aligned = align_modalities(bundle)?;
    if let Some(fl) = &aligned.frame_labels {
        if fl.len() != aligned.frames() {
            return Err(Error::Data {
                video_id: entry.video_id.clone(),
                reason: format!(
                    "{} frame labels for {} frames",
                    fl.len(),
                    aligned.frames()
                ),
            });
        }
    }
    Ok(aligned)
}

/// Loads, aligns and validates every (split-filtered) manifest entry.
pub fn load_manifest(
    path: &Path,
    registry: &DimRegistry,
    split: Option<&str>,
) -> Result<Vec<ModalityBundle>> {
    let manifest = Manifest::parse(path)?;
    manifest
        .filtered(split)
        .into_iter()
        .map(|e| load_entry(e, registry))
        .collect()
}
