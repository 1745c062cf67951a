//! Windowed cross-modal co-attention.
//!
//! For each frame t the token set is the three modality embeddings over
//! frames [t−W, t+W] clamped to the sequence. The query is the mean of the
//! three modality embeddings at frame t passed through the query map;
//! single-head scaled dot-product attention over key/value-mapped tokens
//! followed by the output map yields one fused embedding per frame.

use super::params::CoAttnP;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Var};

pub struct CoAttnOut {
    /// T×D fused embeddings.
    pub output: Var,
    /// Per-frame attention weights (1×N rows, N the frame's token count).
    pub frame_attention: Vec<Var>,
}

pub fn coattention_fuse<T: Scalar>(
    g: &mut Graph<T>,
    visual: Var,
    audio: Var,
    text: Var,
    params: &CoAttnP<Var>,
    window: usize,
) -> Result<CoAttnOut> {
    let t_len = g.shape_of(visual)[0];
    let d = g.shape_of(visual)[1];
    for (name, v) in [("audio", audio), ("text", text)] {
        let s = g.shape_of(v);
        if s != [t_len, d] {
            return Err(Error::Alignment(format!(
                "co-attention inputs disagree: visual is [{t_len}, {d}], {name} is {:?}",
                s
            )));
        }
    }
    let scale = T::from_f64(1.0 / (d as f64).sqrt());

    let mut rows = Vec::with_capacity(t_len);
    let mut frame_attention = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(t_len - 1);
        let n = hi - lo + 1;

        let vis_w = g.slice_rows(visual, lo, n)?;
        let aud_w = g.slice_rows(audio, lo, n)?;
        let txt_w = g.slice_rows(text, lo, n)?;
        let tokens = g.concat_rows(&[vis_w, aud_w, txt_w])?;

        let vis_t = g.slice_rows(visual, t, 1)?;
        let aud_t = g.slice_rows(audio, t, 1)?;
        let txt_t = g.slice_rows(text, t, 1)?;
        let at_t = g.concat_rows(&[vis_t, aud_t, txt_t])?;
        let q_in = g.mean_rows(at_t)?;

        let q = g.matmul(q_in, params.query)?;
        let keys = g.matmul(tokens, params.key)?;
        let values = g.matmul(tokens, params.value)?;

        let scores = g.matmul_nt(q, keys)?;
        let scaled = g.scale(scores, scale)?;
        let attn = g.softmax(scaled, 1)?;
        let context = g.matmul(attn, values)?;
        let fused = g.matmul(context, params.output)?;

        rows.push(fused);
        frame_attention.push(attn);
    }
    let output = g.concat_rows(&rows)?;
    Ok(CoAttnOut {
        output,
        frame_attention,
    })
}
