use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256StarStar;

use super::config::ViTConfig;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Weight `[out×in]` and bias `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T = f32> {
    pub norm1: LayerNormParams<T>,
    pub qkv: LinearParams<T>,
    pub proj: LinearParams<T>,
    pub norm2: LayerNormParams<T>,
    pub fc1: LinearParams<T>,
    pub fc2: LinearParams<T>,
}

/// Every learnable tensor of the model. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct ViTParams<T = f32> {
    pub patch_embed: LinearParams<T>,
    pub cls_token: Tensor<T>,
    /// `[seq_len×embed_dim]`.
    pub pos_embed: Tensor<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub norm: LayerNormParams<T>,
    pub head: LinearParams<T>,
}

impl<T: Element> LayerNormParams<T> {
    fn filled(d: usize, gamma: T) -> Self {
        Self {
            gamma: Tensor::full(&[d], gamma),
            beta: Tensor::zeros(&[d]),
        }
    }
}

impl<T: Element> LinearParams<T> {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[out, inp]),
            bias: Tensor::zeros(&[out]),
        }
    }
}

macro_rules! named_tensors {
    ($self:ident, $iter:ident, $($m:tt)*) => {{
        let p = $self;
        let mut out = Vec::with_capacity(8 + 12 * p.blocks.len());
        out.push(("patch_embed.proj.weight".to_string(), & $($m)* p.patch_embed.weight));
        out.push(("patch_embed.proj.bias".to_string(), & $($m)* p.patch_embed.bias));
        out.push(("cls_token".to_string(), & $($m)* p.cls_token));
        out.push(("pos_embed".to_string(), & $($m)* p.pos_embed));
        for (i, b) in p.blocks.$iter().enumerate() {
            out.push((format!("blocks.{i}.norm1.weight"), & $($m)* b.norm1.gamma));
            out.push((format!("blocks.{i}.norm1.bias"), & $($m)* b.norm1.beta));
            out.push((format!("blocks.{i}.attn.qkv.weight"), & $($m)* b.qkv.weight));
            out.push((format!("blocks.{i}.attn.qkv.bias"), & $($m)* b.qkv.bias));
            out.push((format!("blocks.{i}.attn.proj.weight"), & $($m)* b.proj.weight));
            out.push((format!("blocks.{i}.attn.proj.bias"), & $($m)* b.proj.bias));
            out.push((format!("blocks.{i}.norm2.weight"), & $($m)* b.norm2.gamma));
            out.push((format!("blocks.{i}.norm2.bias"), & $($m)* b.norm2.beta));
            out.push((format!("blocks.{i}.mlp.fc1.weight"), & $($m)* b.fc1.weight));
            out.push((format!("blocks.{i}.mlp.fc1.bias"), & $($m)* b.fc1.bias));
            out.push((format!("blocks.{i}.mlp.fc2.weight"), & $($m)* b.fc2.weight));
            out.push((format!("blocks.{i}.mlp.fc2.bias"), & $($m)* b.fc2.bias));
        }
        out.push(("norm.weight".to_string(), & $($m)* p.norm.gamma));
        out.push(("norm.bias".to_string(), & $($m)* p.norm.beta));
        out.push(("head.weight".to_string(), & $($m)* p.head.weight));
        out.push(("head.bias".to_string(), & $($m)* p.head.bias));
        out
    }};
}

/// How a tensor is initialized, derived from its name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    TruncNormal,
    Zeros,
    Ones,
}

pub fn init_kind(name: &str) -> InitKind {
    let is_norm = name.starts_with("norm.") || name.contains(".norm1.") || name.contains(".norm2.");
    if name == "cls_token" || name == "pos_embed" {
        InitKind::TruncNormal
    } else if name.ends_with(".bias") {
        InitKind::Zeros
    } else if is_norm {
        InitKind::Ones
    } else {
        InitKind::TruncNormal
    }
}

/// Standard deviation of the truncated-normal initializer; samples are
/// rejected outside two standard deviations.
pub const INIT_STD: f64 = 0.02;

impl<T: Element> ViTParams<T> {
    /// All-zero parameters (layer-norm gammas included).
    pub fn zeros(config: &ViTConfig) -> Self {
        let d = config.embed_dim;
        let block = || BlockParams {
            norm1: LayerNormParams::filled(d, T::zero()),
            qkv: LinearParams::zeros(3 * d, d),
            proj: LinearParams::zeros(d, d),
            norm2: LayerNormParams::filled(d, T::zero()),
            fc1: LinearParams::zeros(config.mlp_dim(), d),
            fc2: LinearParams::zeros(d, config.mlp_dim()),
        };
        Self {
            patch_embed: LinearParams::zeros(d, config.patch_dim()),
            cls_token: Tensor::zeros(&[d]),
            pos_embed: Tensor::zeros(&[config.seq_len(), d]),
            blocks: (0..config.depth).map(|_| block()).collect(),
            norm: LayerNormParams::filled(d, T::zero()),
            head: LinearParams::zeros(config.num_classes, d),
        }
    }

    /// Seeded initialization: truncated normal for weights and embeddings,
    /// zero biases, unit layer-norm scales.
    pub fn init(config: &ViTConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for (name, t) in params.named_mut() {
            match init_kind(&name) {
                InitKind::Zeros => t.fill(T::zero()),
                InitKind::Ones => t.fill(T::one()),
                InitKind::TruncNormal => {
                    for v in t.data_mut() {
                        *v = loop {
                            let s: f64 = normal.sample(&mut rng);
                            if s.abs() <= 2.0 * INIT_STD {
                                break T::lit(s);
                            }
                        };
                    }
                }
            }
        }
        Ok(params)
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        named_tensors!(self, iter,)
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        named_tensors!(self, iter_mut, mut)
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Element>(&self) -> ViTParams<U> {
        let mut out = ViTParams::<U>::zeros_like_shapes(self);
        for ((_, dst), (_, src)) in out.named_mut().into_iter().zip(self.named()) {
            *dst = src.cast();
        }
        out
    }

    fn zeros_like_shapes<S: Element>(other: &ViTParams<S>) -> Self {
        let lin = |l: &LinearParams<S>| LinearParams {
            weight: Tensor::zeros(l.weight.shape()),
            bias: Tensor::zeros(l.bias.shape()),
        };
        let ln = |l: &LayerNormParams<S>| LayerNormParams {
            gamma: Tensor::zeros(l.gamma.shape()),
            beta: Tensor::zeros(l.beta.shape()),
        };
        Self {
            patch_embed: lin(&other.patch_embed),
            cls_token: Tensor::zeros(other.cls_token.shape()),
            pos_embed: Tensor::zeros(other.pos_embed.shape()),
            blocks: other
                .blocks
                .iter()
                .map(|b| BlockParams {
                    norm1: ln(&b.norm1),
                    qkv: lin(&b.qkv),
                    proj: lin(&b.proj),
                    norm2: ln(&b.norm2),
                    fc1: lin(&b.fc1),
                    fc2: lin(&b.fc2),
                })
                .collect(),
            norm: ln(&other.norm),
            head: lin(&other.head),
        }
    }

    /// Zeroed tensors with this parameter set's shapes.
    pub fn zeros_like(&self) -> Self {
        Self::zeros_like_shapes(self)
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        for ((_, a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// Checks every tensor shape against `config`.
    pub fn check_shapes(&self, config: &ViTConfig) -> Result<()> {
        let expected = Self::zeros(config);
        let (a, b) = (self.named(), expected.named());
        if a.len() != b.len() {
            return Err(Error::dim(
                "params",
                format!("{} tensors, config expects {}", a.len(), b.len()),
            ));
        }
        for ((name, t), (_, e)) in a.iter().zip(&b) {
            if t.shape() != e.shape() {
                return Err(Error::dim(
                    "params",
                    format!("{name}: {:?}, config expects {:?}", t.shape(), e.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Exact parameter count from shape arithmetic.
pub fn param_count(config: &ViTConfig) -> usize {
    let d = config.embed_dim;
    let linear = |out: usize, inp: usize| out * inp + out;
    let block = 2 * d
        + linear(3 * d, d)
        + linear(d, d)
        + 2 * d
        + linear(config.mlp_dim(), d)
        + linear(d, config.mlp_dim());
    linear(d, config.patch_dim())
        + d
        + config.seq_len() * d
        + config.depth * block
        + 2 * d
        + linear(config.num_classes, d)
}
