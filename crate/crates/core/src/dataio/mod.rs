//! Feature-file format, dataset manifests, modality alignment and the
//! synthetic-data generator used for desk-scale testing.

mod files;
mod manifest;
mod synth;

pub use files::{read_feature_file, read_frame_labels, write_feature_file, write_frame_labels};
pub use manifest::{load_manifest, LabelSpec, Manifest, ManifestEntry};
pub use synth::{synth_dataset, SynthConfig};

use crate::error::{Error, Result};

/// Input modalities, in the order of their on-disk codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Vit,
    Resnet,
    Audio,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Vit, Modality::Resnet, Modality::Audio, Modality::Text];

    pub fn code(self) -> u8 {
        match self {
            Modality::Vit => 0,
            Modality::Resnet => 1,
            Modality::Audio => 2,
            Modality::Text => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Modality::Vit),
            1 => Ok(Modality::Resnet),
            2 => Ok(Modality::Audio),
            3 => Ok(Modality::Text),
            other => Err(Error::Format(format!("unknown modality code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Vit => "vit",
            Modality::Resnet => "resnet",
            Modality::Audio => "audio",
            Modality::Text => "text",
        }
    }
}

/// Expected feature width per modality. Defaults are the extractor output
/// widths (ViT-Base 768, ResNet50 512, VGGish 128, BERT-base 768); tests may
/// register smaller widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimRegistry {
    pub vit: usize,
    pub resnet: usize,
    pub audio: usize,
    pub text: usize,
}

impl Default for DimRegistry {
    fn default() -> Self {
        DimRegistry {
            vit: 768,
            resnet: 512,
            audio: 128,
            text: 768,
        }
    }
}

impl DimRegistry {
    pub fn dim_of(&self, m: Modality) -> usize {
        match m {
            Modality::Vit => self.vit,
            Modality::Resnet => self.resnet,
            Modality::Audio => self.audio,
            Modality::Text => self.text,
        }
    }
}

/// One modality's per-frame feature matrix (T×D, row-major f32).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub modality: Modality,
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(modality: Modality, frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::Contract(format!(
                "feature sequence needs frames >= 1 and dim >= 1, got {frames}x{dim}"
            )));
        }
        if data.len() != frames * dim {
            return Err(Error::shape(
                "feature_sequence",
                format!("{frames}x{dim} implies {} values, got {}", frames * dim, data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "feature_sequence" });
        }
        Ok(FeatureSequence {
            modality,
            frames,
            dim,
            data,
        })
    }

    pub fn check_registry(&self, registry: &DimRegistry) -> Result<()> {
        let expected = registry.dim_of(self.modality);
        if self.dim != expected {
            return Err(Error::shape(
                "modality_registry",
                format!(
                    "{} features have dim {}, registry expects {}",
                    self.modality.name(),
                    self.dim,
                    expected
                ),
            ));
        }
        Ok(())
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// One video's aligned feature sequences plus its labels, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityBundle {
    pub video_id: String,
    pub vit: FeatureSequence,
    pub resnet: FeatureSequence,
    pub audio: FeatureSequence,
    pub text: FeatureSequence,
    pub label: Option<usize>,
    pub frame_labels: Option<Vec<usize>>,
}

impl ModalityBundle {
    /// Frame count shared by all modalities after alignment.
    pub fn frames(&self) -> usize {
        self.vit.frames
    }

    /// Per-frame training targets: explicit frame labels when present,
    /// otherwise the video label broadcast to every frame.
    pub fn frame_targets(&self) -> Result<Vec<usize>> {
        if let Some(fl) = &self.frame_labels {
            return Ok(fl.clone());
        }
        match self.label {
            Some(l) => Ok(vec![l; self.frames()]),
            None => Err(Error::Data {
                video_id: self.video_id.clone(),
                reason: "no label available".into(),
            }),
        }
    }
}

/// Nearest source frame for target frame `t` when resampling a sequence of
/// `src_len` frames onto `dst_len` frames. Exact-half fractions round down,
/// and the result is clamped to the last source frame.
pub fn nearest_frame(t: usize, src_len: usize, dst_len: usize) -> usize {
    let num = t * src_len;
    let q = num / dst_len;
    let rem2 = 2 * (num % dst_len);
    let idx = if rem2 > dst_len { q + 1 } else { q };
    idx.min(src_len - 1)
}

fn resample(seq: &FeatureSequence, target: usize) -> FeatureSequence {
    if seq.frames == target {
        return seq.clone();
    }
    let mut data = Vec::with_capacity(target * seq.dim);
    for t in 0..target {
        data.extend_from_slice(seq.row(nearest_frame(t, seq.frames, target)));
    }
    FeatureSequence {
        modality: seq.modality,
        frames: target,
        dim: seq.dim,
        data,
    }
}

/// Brings every modality onto the visual frame axis: audio is resampled by
/// nearest-neighbor frame mapping, a single-frame text sequence is broadcast,
/// longer text sequences are resampled like audio. ViT and ResNet must agree
/// on T already.
pub fn align_modalities(bundle: ModalityBundle) -> Result<ModalityBundle> {
    if bundle.vit.frames != bundle.resnet.frames {
        return Err(Error::Alignment(format!(
            "video '{}': vit has {} frames, resnet has {}",
            bundle.video_id, bundle.vit.frames, bundle.resnet.frames
        )));
    }
    let target = bundle.vit.frames;
    let audio = resample(&bundle.audio, target);
    let text = if bundle.text.frames == 1 {
        FeatureSequence {
            modality: Modality::Text,
            frames: target,
            dim: bundle.text.dim,
            data: bundle.text.row(0).repeat(target),
        }
    } else {
        resample(&bundle.text, target)
    };
    Ok(ModalityBundle {
        audio,
        text,
        ..bundle
    })
}
