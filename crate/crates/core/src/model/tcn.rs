//! Temporal convolution stack: residual blocks of dilated causal
//! convolutions, one stack per modality.

use super::params::TcnBlockP;
use super::Mode;
use crate::error::Result;
use crate::tensor::{Graph, Scalar, Var};

/// One block: causal conv → ReLU → causal conv → ReLU, plus the 1×1-projected
/// skip path. Dropout sits between blocks (train mode only), never after the
/// last one.
pub fn tcn_forward<T: Scalar>(
    g: &mut Graph<T>,
    input: Var,
    blocks: &[TcnBlockP<Var>],
    dilations: &[usize],
    dropout: f32,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let mut h = input;
    for (i, (block, &dilation)) in blocks.iter().zip(dilations).enumerate() {
        let c1 = g.conv1d_causal(h, block.conv1.kernel, dilation)?;
        let c1 = g.add_bias(c1, block.conv1.bias)?;
        let a1 = g.relu(c1)?;
        let c2 = g.conv1d_causal(a1, block.conv2.kernel, dilation)?;
        let c2 = g.add_bias(c2, block.conv2.bias)?;
        let a2 = g.relu(c2)?;
        let skip = g.matmul(h, block.residual)?;
        h = g.add(a2, skip)?;
        if i + 1 < blocks.len() {
            if let Mode::Train(rng) = mode {
                h = g.dropout(h, dropout as f64, *rng)?;
            }
        }
    }
    Ok(h)
}
