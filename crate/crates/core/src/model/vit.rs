//! Forward and backward passes of the Vision Transformer.
//!
//! Samples in a batch are processed independently: each produces its own
//! activation cache, and parameter gradients are summed over samples in
//! batch order.

use super::config::ViTConfig;
use super::params::{BlockParams, LinearParams, ViTParams};
use crate::error::{Error, Result};
use crate::kernels::{
    gelu, gelu_backward, layer_norm, layer_norm_backward, linear, linear_backward, matmul,
    matmul_at, matmul_bt, softmax, softmax_backward,
};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Activations are dropped as soon as they are consumed.
    Inference,
    /// Activations are kept for [`ViT::backward`].
    Train,
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    x: Tensor<T>,
    h1: Tensor<T>,
    qkv: Tensor<T>,
    probs: Vec<Tensor<T>>,
    ctx: Tensor<T>,
    x_mid: Tensor<T>,
    h2: Tensor<T>,
    f1: Tensor<T>,
    g: Tensor<T>,
}

impl<T: Element> BlockCache<T> {
    fn num_floats(&self) -> usize {
        [
            &self.x,
            &self.h1,
            &self.qkv,
            &self.ctx,
            &self.x_mid,
            &self.h2,
            &self.f1,
            &self.g,
        ]
        .iter()
        .map(|t| t.len())
        .sum::<usize>()
            + self.probs.iter().map(Tensor::len).sum::<usize>()
    }
}

#[derive(Clone, Debug)]
struct SampleCache<T> {
    patches: Tensor<T>,
    blocks: Vec<BlockCache<T>>,
    cls_in: Tensor<T>,
    cls_norm: Tensor<T>,
}

/// Activations recorded by a forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache<T = f32> {
    samples: Vec<SampleCache<T>>,
    recorded: bool,
}

impl<T: Element> ForwardCache<T> {
    pub fn is_recorded(&self) -> bool {
        self.recorded
    }

    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }

    /// Number of cached scalars, the activation term of the memory account.
    pub fn num_floats(&self) -> usize {
        self.samples
            .iter()
            .map(|s| {
                s.patches.len()
                    + s.cls_in.len()
                    + s.cls_norm.len()
                    + s.blocks.iter().map(BlockCache::num_floats).sum::<usize>()
            })
            .sum()
    }

    /// Attention probabilities `[S×S]` of one head.
    pub fn attention_probs(&self, sample: usize, block: usize, head: usize) -> Option<&Tensor<T>> {
        self.samples.get(sample)?.blocks.get(block)?.probs.get(head)
    }
}

/// Activation scalars cached per sample in training mode.
pub fn activation_floats_per_sample(config: &ViTConfig) -> usize {
    let (s, d) = (config.seq_len(), config.embed_dim);
    let block = 5 * s * d + 3 * s * d + config.num_heads * s * s + 2 * s * config.mlp_dim();
    config.num_patches() * config.patch_dim() + config.depth * block + 2 * d
}

fn take_cols<T: Element>(t: &Tensor<T>, start: usize, width: usize) -> Tensor<T> {
    let cols = t.last_dim();
    let rows = t.rows();
    let mut out = Vec::with_capacity(rows * width);
    for r in t.data().chunks_exact(cols) {
        out.extend_from_slice(&r[start..start + width]);
    }
    Tensor::new(vec![rows, width], out).expect("column slice shape")
}

fn put_cols<T: Element>(dst: &mut Tensor<T>, start: usize, src: &Tensor<T>) {
    let cols = dst.last_dim();
    let width = src.last_dim();
    for (d, s) in dst
        .data_mut()
        .chunks_exact_mut(cols)
        .zip(src.data().chunks_exact(width))
    {
        d[start..start + width].copy_from_slice(s);
    }
}

fn check_finite<T: Element>(t: &Tensor<T>, what: impl FnOnce() -> String) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric { what: what() })
    }
}

/// Cuts a `[C×H×W]` image into row-major `P×P` patches, each flattened in
/// `(channel, row, column)` order, giving `[N×C·P·P]`.
pub fn extract_patches<T: Element>(image: &[T], config: &ViTConfig) -> Result<Tensor<T>> {
    let [c, h, w] = config.image_shape();
    if image.len() != c * h * w {
        return Err(Error::dim(
            "patch_embed",
            format!("image has {} values, expected {c}x{h}x{w}", image.len()),
        ));
    }
    let p = config.patch_size;
    let grid = config.grid();
    let mut out = Vec::with_capacity(config.num_patches() * config.patch_dim());
    for gy in 0..grid {
        for gx in 0..grid {
            for ch in 0..c {
                for py in 0..p {
                    let start = ch * h * w + (gy * p + py) * w + gx * p;
                    out.extend_from_slice(&image[start..start + p]);
                }
            }
        }
    }
    Tensor::new(vec![config.num_patches(), config.patch_dim()], out)
}

/// Linear projection of every patch, `[N×D]`.
pub fn patch_embed<T: Element>(
    image: &Tensor<T>,
    params: &ViTParams<T>,
    config: &ViTConfig,
) -> Result<Tensor<T>> {
    if image.shape() != config.image_shape() {
        return Err(Error::dim(
            "patch_embed",
            format!(
                "image {:?}, expected {:?}",
                image.shape(),
                config.image_shape()
            ),
        ));
    }
    let patches = extract_patches(image.data(), config)?;
    linear(
        &patches,
        &params.patch_embed.weight,
        &params.patch_embed.bias,
    )
}

struct AttentionOut<T> {
    out: Tensor<T>,
    qkv: Tensor<T>,
    probs: Vec<Tensor<T>>,
    ctx: Tensor<T>,
}

fn attention_forward<T: Element>(
    x: &Tensor<T>,
    qkv_p: &LinearParams<T>,
    proj: &LinearParams<T>,
    num_heads: usize,
) -> Result<AttentionOut<T>> {
    let (s, d) = x.dims2("attention")?;
    if num_heads == 0 || d % num_heads != 0 {
        return Err(Error::dim(
            "attention",
            format!("embed dim {d} not divisible by {num_heads} heads"),
        ));
    }
    let hd = d / num_heads;
    let scale = T::lit(1.0 / (hd as f64).sqrt());
    let qkv = linear(x, &qkv_p.weight, &qkv_p.bias)?;
    let mut ctx = Tensor::zeros(&[s, d]);
    let mut probs = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let q = take_cols(&qkv, h * hd, hd);
        let k = take_cols(&qkv, d + h * hd, hd);
        let v = take_cols(&qkv, 2 * d + h * hd, hd);
        let scores = matmul_bt(&q, &k)?.scale(scale);
        let p = softmax(&scores)?;
        put_cols(&mut ctx, h * hd, &matmul(&p, &v)?);
        probs.push(p);
    }
    let out = linear(&ctx, &proj.weight, &proj.bias)?;
    Ok(AttentionOut {
        out,
        qkv,
        probs,
        ctx,
    })
}

/// Multi-head self-attention over `x[S×D]` without masking.
pub fn attention<T: Element>(
    x: &Tensor<T>,
    block: &BlockParams<T>,
    num_heads: usize,
) -> Result<Tensor<T>> {
    Ok(attention_forward(x, &block.qkv, &block.proj, num_heads)?.out)
}

fn block_forward<T: Element>(
    x: Tensor<T>,
    bp: &BlockParams<T>,
    config: &ViTConfig,
) -> Result<(Tensor<T>, BlockCache<T>)> {
    let eps = T::lit(config.layer_norm_eps);
    let h1 = layer_norm(&x, &bp.norm1.gamma, &bp.norm1.beta, eps)?;
    let att = attention_forward(&h1, &bp.qkv, &bp.proj, config.num_heads)?;
    let x_mid = x.add(&att.out)?;
    let h2 = layer_norm(&x_mid, &bp.norm2.gamma, &bp.norm2.beta, eps)?;
    let f1 = linear(&h2, &bp.fc1.weight, &bp.fc1.bias)?;
    let g = gelu(&f1);
    let out = x_mid.add(&linear(&g, &bp.fc2.weight, &bp.fc2.bias)?)?;
    let cache = BlockCache {
        x,
        h1,
        qkv: att.qkv,
        probs: att.probs,
        ctx: att.ctx,
        x_mid,
        h2,
        f1,
        g,
    };
    Ok((out, cache))
}

/// Pre-norm encoder block: `x + attn(ln1(x))`, then `+ mlp(ln2(·))`.
pub fn encoder_block<T: Element>(
    x: &Tensor<T>,
    block: &BlockParams<T>,
    config: &ViTConfig,
) -> Result<Tensor<T>> {
    let (_, d) = x.dims2("encoder_block")?;
    if d != config.embed_dim {
        return Err(Error::dim(
            "encoder_block",
            format!("token width {d}, expected {}", config.embed_dim),
        ));
    }
    Ok(block_forward(x.clone(), block, config)?.0)
}

fn linear_grad_into<T: Element>(
    g: &mut LinearParams<T>,
    dw: &Tensor<T>,
    db: &Tensor<T>,
) -> Result<()> {
    g.weight.add_assign(dw)?;
    g.bias.add_assign(db)
}

fn block_backward<T: Element>(
    bp: &BlockParams<T>,
    c: &BlockCache<T>,
    dout: &Tensor<T>,
    config: &ViTConfig,
    grads: &mut BlockParams<T>,
) -> Result<Tensor<T>> {
    let eps = T::lit(config.layer_norm_eps);
    let d = config.embed_dim;
    let hd = config.head_dim();
    let scale = T::lit(1.0 / (hd as f64).sqrt());

    // MLP branch.
    let (dg, dw, db) = linear_backward(&c.g, &bp.fc2.weight, dout)?;
    linear_grad_into(&mut grads.fc2, &dw, &db)?;
    let df1 = gelu_backward(&c.f1, &dg)?;
    let (dh2, dw, db) = linear_backward(&c.h2, &bp.fc1.weight, &df1)?;
    linear_grad_into(&mut grads.fc1, &dw, &db)?;
    let (dxm, dgamma, dbeta) = layer_norm_backward(&c.x_mid, &bp.norm2.gamma, eps, &dh2)?;
    grads.norm2.gamma.add_assign(&dgamma)?;
    grads.norm2.beta.add_assign(&dbeta)?;
    let dx_mid = dout.add(&dxm)?;

    // Attention branch.
    let (dctx, dw, db) = linear_backward(&c.ctx, &bp.proj.weight, &dx_mid)?;
    linear_grad_into(&mut grads.proj, &dw, &db)?;
    let mut dqkv = Tensor::zeros(c.qkv.shape());
    for (h, p) in c.probs.iter().enumerate() {
        let q = take_cols(&c.qkv, h * hd, hd);
        let k = take_cols(&c.qkv, d + h * hd, hd);
        let v = take_cols(&c.qkv, 2 * d + h * hd, hd);
        let dctx_h = take_cols(&dctx, h * hd, hd);
        let dp = matmul_bt(&dctx_h, &v)?;
        let dv = matmul_at(p, &dctx_h)?;
        let ds = softmax_backward(p, &dp)?.scale(scale);
        let dq = matmul(&ds, &k)?;
        let dk = matmul_at(&ds, &q)?;
        put_cols(&mut dqkv, h * hd, &dq);
        put_cols(&mut dqkv, d + h * hd, &dk);
        put_cols(&mut dqkv, 2 * d + h * hd, &dv);
    }
    let (dh1, dw, mut db) = linear_backward(&c.h1, &bp.qkv.weight, &dqkv)?;
    // A key bias shifts every score in a row equally, which softmax cancels,
    // so its gradient is exactly zero; summing `ds` would only leave roundoff.
    db.data_mut()[d..2 * d].fill(T::zero());
    linear_grad_into(&mut grads.qkv, &dw, &db)?;
    let (dx, dgamma, dbeta) = layer_norm_backward(&c.x, &bp.norm1.gamma, eps, &dh1)?;
    grads.norm1.gamma.add_assign(&dgamma)?;
    grads.norm1.beta.add_assign(&dbeta)?;
    dx_mid.add(&dx)
}

/// Model configuration together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ViT<T = f32> {
    pub config: ViTConfig,
    pub params: ViTParams<T>,
}

impl<T: Element> ViT<T> {
    pub fn new(config: ViTConfig, params: ViTParams<T>) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    pub fn init(config: ViTConfig, seed: u64) -> Result<Self> {
        let params = ViTParams::init(&config, seed)?;
        Ok(Self { config, params })
    }

    fn forward_sample(
        &self,
        image: &[T],
        keep: bool,
    ) -> Result<(Tensor<T>, Option<SampleCache<T>>)> {
        let cfg = &self.config;
        let p = &self.params;
        let d = cfg.embed_dim;
        let patches = extract_patches(image, cfg)?;
        let emb = linear(&patches, &p.patch_embed.weight, &p.patch_embed.bias)?;
        check_finite(&emb, || "in patch embedding".into())?;

        let mut tokens = p.pos_embed.clone();
        for (t, &c) in tokens.row_mut(0).iter_mut().zip(p.cls_token.data()) {
            *t = *t + c;
        }
        for (i, e) in emb.data().chunks_exact(d).enumerate() {
            for (t, &v) in tokens.row_mut(i + 1).iter_mut().zip(e) {
                *t = *t + v;
            }
        }

        let mut blocks = Vec::with_capacity(if keep { cfg.depth } else { 0 });
        for (i, bp) in p.blocks.iter().enumerate() {
            let (out, cache) = block_forward(tokens, bp, cfg)?;
            check_finite(&out, || format!("after encoder block {i}"))?;
            if keep {
                blocks.push(cache);
            }
            tokens = out;
        }

        let cls_in = Tensor::new(vec![1, d], tokens.row(0).to_vec())?;
        let eps = T::lit(cfg.layer_norm_eps);
        let cls_norm = layer_norm(&cls_in, &p.norm.gamma, &p.norm.beta, eps)?;
        let logits = linear(&cls_norm, &p.head.weight, &p.head.bias)?;
        check_finite(&logits, || "in classification head".into())?;
        let cache = keep.then_some(SampleCache {
            patches,
            blocks,
            cls_in,
            cls_norm,
        });
        Ok((logits, cache))
    }

    fn check_batch(&self, images: &Tensor<T>) -> Result<usize> {
        let shape = images.shape();
        if shape.len() != 4 || shape[1..] != self.config.image_shape() {
            return Err(Error::dim(
                "forward",
                format!(
                    "batch {:?}, expected [B, {:?}]",
                    shape,
                    self.config.image_shape()
                ),
            ));
        }
        Ok(shape[0])
    }

    /// Logits `[B×num_classes]` for a `[B×C×H×W]` batch.
    pub fn forward(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_with(images, Mode::Inference)?.0)
    }

    pub fn forward_with(
        &self,
        images: &Tensor<T>,
        mode: Mode,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let b = self.check_batch(images)?;
        let per = images.len() / b;
        let keep = mode == Mode::Train;
        let c = self.config.num_classes;
        let mut logits = Vec::with_capacity(b * c);
        let mut samples = Vec::with_capacity(if keep { b } else { 0 });
        for img in images.data().chunks_exact(per) {
            let (l, cache) = self.forward_sample(img, keep)?;
            logits.extend_from_slice(l.data());
            samples.extend(cache);
        }
        let cache = ForwardCache {
            samples,
            recorded: keep,
        };
        Ok((Tensor::new(vec![b, c], logits)?, cache))
    }

    /// Parameter gradients for upstream logit gradients `[B×num_classes]`.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Tensor<T>) -> Result<ViTParams<T>> {
        if !cache.recorded {
            return Err(Error::State(
                "backward needs a cache recorded by a training-mode forward pass".into(),
            ));
        }
        let c = self.config.num_classes;
        if dlogits.shape() != [cache.batch_size(), c] {
            return Err(Error::State(format!(
                "upstream gradient {:?} does not match cached batch of {} samples",
                dlogits.shape(),
                cache.batch_size()
            )));
        }
        let cfg = &self.config;
        let p = &self.params;
        let eps = T::lit(cfg.layer_norm_eps);
        let d = cfg.embed_dim;
        let mut grads = p.zeros_like();

        for (s, sc) in cache.samples.iter().enumerate() {
            let dl = Tensor::new(vec![1, c], dlogits.row(s).to_vec())?;
            let (dnorm, dw, db) = linear_backward(&sc.cls_norm, &p.head.weight, &dl)?;
            linear_grad_into(&mut grads.head, &dw, &db)?;
            let (dcls, dgamma, dbeta) =
                layer_norm_backward(&sc.cls_in, &p.norm.gamma, eps, &dnorm)?;
            grads.norm.gamma.add_assign(&dgamma)?;
            grads.norm.beta.add_assign(&dbeta)?;

            let mut dx = Tensor::zeros(&[cfg.seq_len(), d]);
            dx.row_mut(0).copy_from_slice(dcls.data());
            for (i, (bp, bc)) in p.blocks.iter().zip(&sc.blocks).enumerate().rev() {
                dx = block_backward(bp, bc, &dx, cfg, &mut grads.blocks[i])?;
            }

            grads.pos_embed.add_assign(&dx)?;
            for (g, &v) in grads.cls_token.data_mut().iter_mut().zip(dx.row(0)) {
                *g = *g + v;
            }
            let demb = Tensor::new(vec![cfg.num_patches(), d], dx.data()[d..].to_vec())?;
            grads
                .patch_embed
                .weight
                .add_assign(&matmul_at(&demb, &sc.patches)?)?;
            grads.patch_embed.bias.add_assign(&demb.sum_rows())?;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ViT<f64> {
        ViT::init(ViTConfig::tiny(2), 1).unwrap()
    }

    fn image_batch(cfg: &ViTConfig, b: usize, seed: u64) -> Tensor<f64> {
        let n = b * cfg.image_shape().iter().product::<usize>();
        let vals: Vec<f64> = (0..n)
            .map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0)
            .collect();
        let mut shape = vec![b];
        shape.extend(cfg.image_shape());
        Tensor::from_f64(&shape, &vals).unwrap()
    }

    #[test]
    fn patch_counts_and_zero_image() {
        let m = tiny();
        let zero = Tensor::zeros(&m.config.image_shape());
        let emb = patch_embed(&zero, &m.params, &m.config).unwrap();
        assert_eq!(emb.shape(), &[16, 16]);
        assert!(emb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_token_attention_is_projected_value() {
        let mut m = tiny();
        let bp = &mut m.params.blocks[0];
        bp.qkv.bias =
            Tensor::from_f64(&[48], &(0..48).map(|i| i as f64 * 0.01).collect::<Vec<_>>()).unwrap();
        let x = Tensor::from_f64(&[1, 16], &[0.3; 16]).unwrap();
        let out = attention(&x, bp, 2).unwrap();
        let qkv = linear(&x, &bp.qkv.weight, &bp.qkv.bias).unwrap();
        let v = take_cols(&qkv, 32, 16);
        let expect = linear(&v, &bp.proj.weight, &bp.proj.bias).unwrap();
        assert!(out.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn zero_branches_make_block_identity() {
        let mut m = tiny();
        let bp = &mut m.params.blocks[0];
        for lin in [&mut bp.qkv, &mut bp.proj, &mut bp.fc1, &mut bp.fc2] {
            lin.weight.fill(0.0);
            lin.bias.fill(0.0);
        }
        let x = image_batch(&m.config, 1, 3).reshape(&[192, 16]).unwrap();
        let x = Tensor::new(vec![12, 16], x.data()[..192].to_vec()).unwrap();
        assert_eq!(
            encoder_block(&x, &m.params.blocks[0], &m.config).unwrap(),
            x
        );
    }

    #[test]
    fn batch_rows_are_independent() {
        let m = tiny();
        let one = image_batch(&m.config, 1, 5);
        let mut both = one.data().to_vec();
        both.extend_from_slice(one.data());
        let two = Tensor::new(vec![2, 3, 32, 32], both).unwrap();
        let logits = m.forward(&two).unwrap();
        assert_eq!(logits.shape(), &[2, 2]);
        assert_eq!(logits.row(0), logits.row(1));
    }

    #[test]
    fn backward_requires_training_cache() {
        let m = tiny();
        let x = image_batch(&m.config, 2, 1);
        let (_, cache) = m.forward_with(&x, Mode::Inference).unwrap();
        assert!(matches!(
            m.backward(&cache, &Tensor::zeros(&[2, 2])),
            Err(Error::State(_))
        ));
        let (_, cache) = m.forward_with(&x, Mode::Train).unwrap();
        assert!(m.backward(&cache, &Tensor::zeros(&[3, 2])).is_err());
        let g = m.backward(&cache, &Tensor::zeros(&[2, 2])).unwrap();
        assert!(g
            .named()
            .iter()
            .all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn cache_size_matches_account() {
        let m = tiny();
        let (_, cache) = m
            .forward_with(&image_batch(&m.config, 3, 2), Mode::Train)
            .unwrap();
        assert_eq!(
            cache.num_floats(),
            3 * activation_floats_per_sample(&m.config)
        );
    }

    #[test]
    fn non_finite_activation_reports_block() {
        let mut m = tiny();
        m.params.blocks[1].fc2.bias.data_mut()[0] = f64::INFINITY;
        let err = m.forward(&image_batch(&m.config, 1, 0)).unwrap_err();
        assert!(err.to_string().contains("block 1"), "{err}");
    }
}
