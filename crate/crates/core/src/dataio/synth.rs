//! Synthetic dataset generator: a desk-scale stand-in for the real corpora.
//!
//! Every video gets a uniformly drawn class; each modality's features are a
//! class-dependent mean vector (norm = `separation`) plus unit Gaussian
//! noise. Generation is a pure function of the config, so equal seeds give
//! bit-identical datasets.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DimRegistry, FeatureSequence, Modality, ModalityBundle};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub videos: usize,
    pub frames: usize,
    pub classes: usize,
    pub separation: f32,
    pub registry: DimRegistry,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Parameter(format!(
                "synthetic dataset needs >= 2 classes, got {}",
                self.classes
            )));
        }
        if self.videos == 0 || self.frames == 0 {
            return Err(Error::Parameter("synthetic dataset needs videos >= 1 and frames >= 1".into()));
        }
        Ok(())
    }

    /// In-memory generation; one fixed rng stream covers means, class draws
    /// and noise in a fixed order.
    pub fn generate(&self) -> Result<Vec<ModalityBundle>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        // Per-(modality, class) mean directions, drawn up front.
        let mut means: Vec<Vec<Vec<f32>>> = Vec::with_capacity(Modality::ALL.len());
        for m in Modality::ALL {
            let dim = self.registry.dim_of(m);
            let mut per_class = Vec::with_capacity(self.classes);
            for _ in 0..self.classes {
                let g: Vec<f32> = (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
                let norm = g.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-12);
                per_class.push(g.iter().map(|v| v / norm * self.separation).collect());
            }
            means.push(per_class);
        }

        let mut bundles = Vec::with_capacity(self.videos);
        for v in 0..self.videos {
            let class = rng.random_range(0..self.classes);
            let mut seqs = Vec::with_capacity(4);
            for (mi, m) in Modality::ALL.into_iter().enumerate() {
                let dim = self.registry.dim_of(m);
                let mean = &means[mi][class];
                let mut data = Vec::with_capacity(self.frames * dim);
                for _ in 0..self.frames {
                    for &mu in mean.iter() {
                        data.push(mu + rng.sample::<f32, _>(StandardNormal));
                    }
                }
                seqs.push(FeatureSequence::new(m, self.frames, dim, data)?);
            }
            let mut it = seqs.into_iter();
            bundles.push(ModalityBundle {
                video_id: format!("synth_{v:04}"),
                vit: it.next().unwrap(),
                resnet: it.next().unwrap(),
                audio: it.next().unwrap(),
                text: it.next().unwrap(),
                label: Some(class),
                frame_labels: None,
            });
        }
        Ok(bundles)
    }

    /// Split tag per video index: every fifth video is validation.
    pub fn split_of(index: usize) -> &'static str {
        if (index + 1).is_multiple_of(5) {
            "val"
        } else {
            "train"
        }
    }
}

/// Generates the dataset and writes feature files plus a manifest under
/// `out_dir`. Returns the bundles and the manifest path.
pub fn synth_dataset(config: &SynthConfig, out_dir: &Path) -> Result<(Vec<ModalityBundle>, PathBuf)> {
    let bundles = config.generate()?;
    let feat_dir = out_dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;

    let mut manifest_body = String::new();
    for (i, b) in bundles.iter().enumerate() {
        for (m, seq) in [
            (Modality::Vit, &b.vit),
            (Modality::Resnet, &b.resnet),
            (Modality::Audio, &b.audio),
            (Modality::Text, &b.text),
        ] {
            let rel = format!("features/{}.{}.mmfe", b.video_id, m.name());
            super::write_feature_file(seq, &out_dir.join(&rel))?;
        }
        manifest_body.push_str(&format!(
            "{}\tfeatures/{id}.vit.mmfe\tfeatures/{id}.resnet.mmfe\tfeatures/{id}.audio.mmfe\tfeatures/{id}.text.mmfe\t{}\t{}\n",
            b.video_id,
            b.label.unwrap(),
            SynthConfig::split_of(i),
            id = b.video_id,
        ));
    }
    let manifest_path = out_dir.join("manifest.tsv");
    fs::write(&manifest_path, manifest_body).map_err(|e| Error::io(&manifest_path, e))?;
    Ok((bundles, manifest_path))
}
