//! Feature-level multimodal compound-expression recognition.
//!
//! The crate ingests pre-extracted per-frame feature sequences (ViT, ResNet,
//! audio, text), trains a fusion model (visual concat→projection, per-modality
//! temporal convolutions, windowed co-attention, classifier) with a built-in
//! reverse-mode autodiff engine, and provides the video-level aggregation,
//! frame-level ensembling and F1 evaluation used around it.

pub mod aggregation;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
