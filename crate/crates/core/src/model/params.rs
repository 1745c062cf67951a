//! Learnable parameters: structure, initialization and canonical ordering.
//!
//! The parameter tree is generic over its slot type so the same structure
//! holds owned tensors (`ModelParams<T>`) and tape handles (`ParamVars`).
//! [`ModelParamsT::flat`] defines the one canonical traversal order used by
//! the optimizer, the checkpoint format and gradient write-back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ModelConfig;
use crate::error::Result;
use crate::tensor::{Graph, Scalar, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearP<S> {
    /// in×out.
    pub weight: S,
    pub bias: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvP<S> {
    /// k×C_in×C_out.
    pub kernel: S,
    pub bias: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcnBlockP<S> {
    pub conv1: ConvP<S>,
    pub conv2: ConvP<S>,
    /// 1×1 projection on the skip path, C_in×C_out.
    pub residual: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoAttnP<S> {
    pub query: S,
    pub key: S,
    pub value: S,
    pub output: S,
}

/// Index of a modality's TCN stack inside [`ModelParamsT::tcn`].
pub const TCN_VISUAL: usize = 0;
pub const TCN_AUDIO: usize = 1;
pub const TCN_TEXT: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParamsT<S> {
    pub visual_proj: LinearP<S>,
    /// Visual, audio, text stacks in that order.
    pub tcn: [Vec<TcnBlockP<S>>; 3],
    pub coattn: CoAttnP<S>,
    pub classifier: LinearP<S>,
}

pub type ModelParams<T = f32> = ModelParamsT<Tensor<T>>;
pub type ParamVars = ModelParamsT<Var>;

impl<S> ModelParamsT<S> {
    /// Canonical order: visual projection, TCN stacks (visual, audio, text;
    /// per block conv1 kernel/bias, conv2 kernel/bias, residual), co-attention
    /// query/key/value/output, classifier weight/bias.
    pub fn flat(&self) -> Vec<&S> {
        let mut out = vec![&self.visual_proj.weight, &self.visual_proj.bias];
        for stack in &self.tcn {
            for block in stack {
                out.push(&block.conv1.kernel);
                out.push(&block.conv1.bias);
                out.push(&block.conv2.kernel);
                out.push(&block.conv2.bias);
                out.push(&block.residual);
            }
        }
        out.extend([
            &self.coattn.query,
            &self.coattn.key,
            &self.coattn.value,
            &self.coattn.output,
            &self.classifier.weight,
            &self.classifier.bias,
        ]);
        out
    }

    pub fn flat_mut(&mut self) -> Vec<&mut S> {
        let mut out: Vec<&mut S> = vec![&mut self.visual_proj.weight, &mut self.visual_proj.bias];
        for stack in &mut self.tcn {
            for block in stack {
                out.push(&mut block.conv1.kernel);
                out.push(&mut block.conv1.bias);
                out.push(&mut block.conv2.kernel);
                out.push(&mut block.conv2.bias);
                out.push(&mut block.residual);
            }
        }
        out.extend([
            &mut self.coattn.query,
            &mut self.coattn.key,
            &mut self.coattn.value,
            &mut self.coattn.output,
            &mut self.classifier.weight,
            &mut self.classifier.bias,
        ]);
        out
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(&S) -> Result<U>) -> Result<ModelParamsT<U>> {
        let map_linear = |l: &LinearP<S>, f: &mut dyn FnMut(&S) -> Result<U>| -> Result<LinearP<U>> {
            Ok(LinearP {
                weight: f(&l.weight)?,
                bias: f(&l.bias)?,
            })
        };
        let mut tcn: [Vec<TcnBlockP<U>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let visual_proj = map_linear(&self.visual_proj, &mut f)?;
        for (dst, src) in tcn.iter_mut().zip(&self.tcn) {
            for block in src {
                dst.push(TcnBlockP {
                    conv1: ConvP {
                        kernel: f(&block.conv1.kernel)?,
                        bias: f(&block.conv1.bias)?,
                    },
                    conv2: ConvP {
                        kernel: f(&block.conv2.kernel)?,
                        bias: f(&block.conv2.bias)?,
                    },
                    residual: f(&block.residual)?,
                });
            }
        }
        let coattn = CoAttnP {
            query: f(&self.coattn.query)?,
            key: f(&self.coattn.key)?,
            value: f(&self.coattn.value)?,
            output: f(&self.coattn.output)?,
        };
        let classifier = map_linear(&self.classifier, &mut f)?;
        Ok(ModelParamsT {
            visual_proj,
            tcn,
            coattn,
            classifier,
        })
    }
}

fn normal_tensor<T: Scalar>(rng: &mut ChaCha8Rng, shape: Vec<usize>, std: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64(z * std)
        })
        .collect();
    Tensor::new(shape, data).expect("shape/data constructed together").with_grad()
}

fn zeros_param<T: Scalar>(shape: Vec<usize>) -> Tensor<T> {
    Tensor::zeros(shape).with_grad()
}

impl<T: Scalar> ModelParams<T> {
    /// Zero-filled parameters with the exact structure implied by `config`;
    /// the shape template for checkpoint loading.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let concat_dim = config.vit_dim + config.resnet_dim;
        let mut tcn: [Vec<TcnBlockP<Tensor<T>>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (stack, &input_dim) in tcn.iter_mut().zip(&[config.fused_dim, config.audio_dim, config.text_dim]) {
            let mut c_in = input_dim;
            for _ in 0..config.tcn_blocks {
                stack.push(TcnBlockP {
                    conv1: ConvP {
                        kernel: zeros_param(vec![config.kernel, c_in, d]),
                        bias: zeros_param(vec![d]),
                    },
                    conv2: ConvP {
                        kernel: zeros_param(vec![config.kernel, d, d]),
                        bias: zeros_param(vec![d]),
                    },
                    residual: zeros_param(vec![c_in, d]),
                });
                c_in = d;
            }
        }
        Ok(ModelParamsT {
            visual_proj: LinearP {
                weight: zeros_param(vec![concat_dim, config.fused_dim]),
                bias: zeros_param(vec![config.fused_dim]),
            },
            tcn,
            coattn: CoAttnP {
                query: zeros_param(vec![d, d]),
                key: zeros_param(vec![d, d]),
                value: zeros_param(vec![d, d]),
                output: zeros_param(vec![d, d]),
            },
            classifier: LinearP {
                weight: zeros_param(vec![d, config.classes]),
                bias: zeros_param(vec![config.classes]),
            },
        })
    }

    /// He fan-in initialization for convolutions and projections, 1/√D for
    /// the attention maps, and a deliberately small classifier scale so the
    /// initial logits are near-uniform.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let concat_dim = config.vit_dim + config.resnet_dim;

        let visual_proj = LinearP {
            weight: normal_tensor(&mut rng, vec![concat_dim, config.fused_dim], (2.0 / concat_dim as f64).sqrt()),
            bias: zeros_param(vec![config.fused_dim]),
        };

        let mut tcn: [Vec<TcnBlockP<Tensor<T>>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (stack, &input_dim) in tcn.iter_mut().zip(&[config.fused_dim, config.audio_dim, config.text_dim]) {
            let mut c_in = input_dim;
            for _ in 0..config.tcn_blocks {
                let k = config.kernel;
                stack.push(TcnBlockP {
                    conv1: ConvP {
                        kernel: normal_tensor(&mut rng, vec![k, c_in, d], (2.0 / (k * c_in) as f64).sqrt()),
                        bias: zeros_param(vec![d]),
                    },
                    conv2: ConvP {
                        kernel: normal_tensor(&mut rng, vec![k, d, d], (2.0 / (k * d) as f64).sqrt()),
                        bias: zeros_param(vec![d]),
                    },
                    residual: normal_tensor(&mut rng, vec![c_in, d], (2.0 / c_in as f64).sqrt()),
                });
                c_in = d;
            }
        }

        let attn_std = 1.0 / (d as f64).sqrt();
        let coattn = CoAttnP {
            query: normal_tensor(&mut rng, vec![d, d], attn_std),
            key: normal_tensor(&mut rng, vec![d, d], attn_std),
            value: normal_tensor(&mut rng, vec![d, d], attn_std),
            output: normal_tensor(&mut rng, vec![d, d], attn_std),
        };

        let classifier = LinearP {
            weight: normal_tensor(&mut rng, vec![d, config.classes], 0.01),
            bias: zeros_param(vec![config.classes]),
        };

        Ok(ModelParamsT {
            visual_proj,
            tcn,
            coattn,
            classifier,
        })
    }

    pub fn count(&self) -> usize {
        self.flat().iter().map(|t| t.len()).sum()
    }

    /// Registers every tensor as a gradient-tracked leaf on the tape.
    pub fn register(&self, g: &mut Graph<T>) -> Result<ParamVars> {
        self.try_map(|t| g.leaf(t))
    }

    /// Copies gradients off the tape into each tensor's own grad buffer
    /// (zeros where no gradient flowed).
    pub fn pull_grads(&mut self, g: &Graph<T>, vars: &ParamVars) {
        let var_list: Vec<Var> = vars.flat().into_iter().copied().collect();
        for (tensor, var) in self.flat_mut().into_iter().zip(var_list) {
            let grad = g.grad_or_zeros(var);
            tensor.set_grad(&grad);
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        self.try_map(|t| Ok(t.cast::<U>())).expect("cast is infallible")
    }
}
