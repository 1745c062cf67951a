//! The fusion architecture: visual dual-feature fusion, per-modality
//! temporal convolution stacks, windowed co-attention, classifier head.

pub mod coattn;
pub mod params;
mod tcn;

pub use coattn::{coattention_fuse, CoAttnOut};
pub use params::{ModelParams, ModelParamsT, ParamVars};
pub use tcn::tcn_forward;

use rand_chacha::ChaCha8Rng;

use crate::aggregation::FramePredictions;
use crate::dataio::{DimRegistry, ModalityBundle};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Number of output classes K.
    pub classes: usize,
    /// Common embedding width after the TCNs.
    pub d_model: usize,
    pub tcn_blocks: usize,
    pub kernel: usize,
    /// One dilation per block.
    pub dilations: Vec<usize>,
    /// Co-attention context radius W: each frame may look W frames back and
    /// forward.
    pub window: usize,
    /// Dropout rate between TCN blocks, active in train mode only.
    pub dropout: f32,
    pub vit_dim: usize,
    pub resnet_dim: usize,
    pub audio_dim: usize,
    pub text_dim: usize,
    /// Width of the projected visual feature (concat of ViT and ResNet is
    /// reduced to this).
    pub fused_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            classes: 7,
            d_model: 256,
            tcn_blocks: 2,
            kernel: 3,
            dilations: vec![1, 2],
            window: 3,
            dropout: 0.1,
            vit_dim: 768,
            resnet_dim: 512,
            audio_dim: 128,
            text_dim: 768,
            fused_dim: 512,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Parameter(format!("need >= 2 classes, got {}", self.classes)));
        }
        if self.dilations.len() != self.tcn_blocks {
            return Err(Error::Parameter(format!(
                "{} dilations for {} TCN blocks",
                self.dilations.len(),
                self.tcn_blocks
            )));
        }
        if self.tcn_blocks == 0 || self.kernel == 0 {
            return Err(Error::Parameter("TCN needs >= 1 block and kernel >= 1".into()));
        }
        if self.dilations.iter().any(|&d| d < 1) {
            return Err(Error::Parameter("dilations must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        for (name, d) in [
            ("d_model", self.d_model),
            ("vit_dim", self.vit_dim),
            ("resnet_dim", self.resnet_dim),
            ("audio_dim", self.audio_dim),
            ("text_dim", self.text_dim),
            ("fused_dim", self.fused_dim),
        ] {
            if d == 0 {
                return Err(Error::Parameter(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> DimRegistry {
        DimRegistry {
            vit: self.vit_dim,
            resnet: self.resnet_dim,
            audio: self.audio_dim,
            text: self.text_dim,
        }
    }
}

/// Train mode draws dropout masks from the given stream; eval is pure.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

/// Feature leaves for one video on a tape.
pub struct BundleVars {
    pub vit: Var,
    pub resnet: Var,
    pub audio: Var,
    pub text: Var,
}

/// Registers a bundle's features as constant leaves, widening f32 storage to
/// the tape's element type.
pub fn register_bundle<T: Scalar>(g: &mut Graph<T>, bundle: &ModalityBundle) -> Result<BundleVars> {
    let mut leaf = |frames: usize, dim: usize, data: &[f32]| -> Result<Var> {
        let cast: Vec<T> = data.iter().map(|&v| T::from_f64(v as f64)).collect();
        g.leaf_raw(vec![frames, dim], cast, false)
    };
    Ok(BundleVars {
        vit: leaf(bundle.vit.frames, bundle.vit.dim, &bundle.vit.data)?,
        resnet: leaf(bundle.resnet.frames, bundle.resnet.dim, &bundle.resnet.data)?,
        audio: leaf(bundle.audio.frames, bundle.audio.dim, &bundle.audio.data)?,
        text: leaf(bundle.text.frames, bundle.text.dim, &bundle.text.data)?,
    })
}

/// Concatenates the two visual feature streams and projects the widened
/// vector down to `fused_dim`. Returns (concat, fused) handles.
pub fn fuse_visual<T: Scalar>(
    g: &mut Graph<T>,
    f_vit: Var,
    f_resnet: Var,
    proj: &params::LinearP<Var>,
) -> Result<(Var, Var)> {
    if g.shape_of(f_vit)[0] != g.shape_of(f_resnet)[0] {
        return Err(Error::Alignment(format!(
            "visual streams disagree on frames: {:?} vs {:?}",
            g.shape_of(f_vit),
            g.shape_of(f_resnet)
        )));
    }
    let concat = g.concat_cols(f_vit, f_resnet)?;
    let projected = g.matmul(concat, proj.weight)?;
    let fused = g.add_bias(projected, proj.bias)?;
    Ok((concat, fused))
}

/// Tape handles for the interesting intermediate values of one forward pass.
pub struct ForwardTrace {
    /// T×(vit_dim+resnet_dim) concatenated visual features.
    pub concat_visual: Var,
    /// T×fused_dim projected visual features.
    pub fused_visual: Var,
    pub tcn_visual: Var,
    pub tcn_audio: Var,
    pub tcn_text: Var,
    /// Per-frame co-attention weight rows.
    pub frame_attention: Vec<Var>,
    /// T×d_model fused embedding.
    pub embedding: Var,
    /// T×K classifier output.
    pub logits: Var,
}

/// Builds the whole model on the tape and returns the trace. Callers attach
/// a loss (training) or read the logits (inference).
pub fn forward_graph<T: Scalar>(
    g: &mut Graph<T>,
    bundle: &BundleVars,
    params: &ParamVars,
    config: &ModelConfig,
    mode: &mut Mode<'_>,
) -> Result<ForwardTrace> {
    let (concat_visual, fused_visual) = fuse_visual(g, bundle.vit, bundle.resnet, &params.visual_proj)?;

    let tcn_visual = tcn_forward(
        g,
        fused_visual,
        &params.tcn[params::TCN_VISUAL],
        &config.dilations,
        config.dropout,
        mode,
    )?;
    let tcn_audio = tcn_forward(
        g,
        bundle.audio,
        &params.tcn[params::TCN_AUDIO],
        &config.dilations,
        config.dropout,
        mode,
    )?;
    let tcn_text = tcn_forward(
        g,
        bundle.text,
        &params.tcn[params::TCN_TEXT],
        &config.dilations,
        config.dropout,
        mode,
    )?;

    let attn = coattention_fuse(g, tcn_visual, tcn_audio, tcn_text, &params.coattn, config.window)?;
    let scores = g.matmul(attn.output, params.classifier.weight)?;
    let logits = g.add_bias(scores, params.classifier.bias)?;

    Ok(ForwardTrace {
        concat_visual,
        fused_visual,
        tcn_visual,
        tcn_audio,
        tcn_text,
        frame_attention: attn.frame_attention,
        embedding: attn.output,
        logits,
    })
}

/// End-to-end inference for one aligned bundle: logits, softmax
/// probabilities and argmax labels (ties to the lowest class index).
pub fn forward(
    bundle: &ModalityBundle,
    model_params: &ModelParams<f32>,
    config: &ModelConfig,
    mut mode: Mode<'_>,
) -> Result<FramePredictions> {
    let mut g = Graph::<f32>::new();
    let vars = model_params.register(&mut g)?;
    let feats = register_bundle(&mut g, bundle)?;
    let trace = forward_graph(&mut g, &feats, &vars, config, &mut mode)?;
    FramePredictions::from_logits(bundle.video_id.clone(), config.classes, g.value(trace.logits).to_vec())
}
