//! Forward and backward kernels used by the transformer.
//!
//! Every reduction runs in a fixed order, so results are bit-identical across
//! runs and across worker counts. Parallel execution (feature `parallel`) only
//! splits work by output row; each output element is still produced by the
//! same sequential loop.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Below this many multiply-adds the row split is not worth the scheduling.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 1 << 16;

fn for_each_row<T: Element>(
    out: &mut [T],
    cols: usize,
    work: usize,
    f: impl Fn(usize, &mut [T]) + Sync + Send,
) {
    #[cfg(feature = "parallel")]
    if work >= PAR_THRESHOLD {
        use rayon::prelude::*;
        out.par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = work;
    out.chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// `a[m×k] · b[k×n]`.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, n) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::dim(
            "matmul",
            format!("{:?} · {:?}", a.shape(), b.shape()),
        ));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for_each_row(&mut out, n, m * n * k, |i, row| {
        let arow = &ad[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + aip * bv;
            }
        }
    });
    Tensor::new(vec![m, n], out)
}

/// `a[m×k] · b[n×k]ᵀ`, the linear-layer product with `[out×in]` weights.
pub fn matmul_bt<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = a.dims2("matmul_bt")?;
    let (_, k2) = b.dims2("matmul_bt")?;
    if k != k2 {
        return Err(Error::dim(
            "matmul_bt",
            format!("{:?} · {:?}ᵀ", a.shape(), b.shape()),
        ));
    }
    matmul(a, &b.transpose()?)
}

/// `a[k×m]ᵀ · b[k×n]`, used for weight gradients.
pub fn matmul_at<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, m) = a.dims2("matmul_at")?;
    let (k2, n) = b.dims2("matmul_at")?;
    if k != k2 {
        return Err(Error::dim(
            "matmul_at",
            format!("{:?}ᵀ · {:?}", a.shape(), b.shape()),
        ));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for_each_row(&mut out, n, m * n * k, |i, row| {
        for p in 0..k {
            let api = ad[p * m + i];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + api * bv;
            }
        }
    });
    Tensor::new(vec![m, n], out)
}

/// Gradients of `a · b` given the upstream gradient: `(dy·bᵀ, aᵀ·dy)`.
pub fn matmul_backward<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, _) = a.dims2("matmul_backward")?;
    let (_, n) = b.dims2("matmul_backward")?;
    if dy.shape() != [m, n] {
        return Err(Error::dim(
            "matmul_backward",
            format!("upstream {:?}, expected [{m}, {n}]", dy.shape()),
        ));
    }
    Ok((matmul_bt(dy, b)?, matmul_at(a, dy)?))
}

/// Adds `bias` to every row in place.
pub fn add_bias<T: Element>(x: &mut Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    if bias.len() != x.last_dim() {
        return Err(Error::dim(
            "add_bias",
            format!("bias {:?} for input {:?}", bias.shape(), x.shape()),
        ));
    }
    let c = x.last_dim();
    for row in x.data_mut().chunks_exact_mut(c) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v = *v + b;
        }
    }
    Ok(())
}

/// `x[m×in] · w[out×in]ᵀ + b`.
pub fn linear<T: Element>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut y = matmul_bt(x, w)?;
    add_bias(&mut y, b)?;
    Ok(y)
}

/// Returns `(dx, dw, db)` for [`linear`].
pub fn linear_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let dx = matmul(dy, w)?;
    let dw = matmul_at(dy, x)?;
    Ok((dx, dw, dy.sum_rows()))
}

fn softmax_slice<T: Element>(x: &[T], out: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

/// Softmax along the last axis with max subtraction.
pub fn softmax<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric {
            what: "NaN in softmax input".into(),
        });
    }
    let c = x.last_dim();
    let mut out = x.clone();
    for (o, row) in out
        .data_mut()
        .chunks_exact_mut(c)
        .zip(x.data().chunks_exact(c))
    {
        softmax_slice(row, o);
    }
    Ok(out)
}

/// Gradient of softmax from its output `y`: `y ⊙ (dy − ⟨dy, y⟩)` per row.
pub fn softmax_backward<T: Element>(y: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape() != dy.shape() {
        return Err(Error::dim(
            "softmax_backward",
            format!("{:?} vs {:?}", y.shape(), dy.shape()),
        ));
    }
    let c = y.last_dim();
    let mut dx = dy.clone();
    for (dxr, yr) in dx
        .data_mut()
        .chunks_exact_mut(c)
        .zip(y.data().chunks_exact(c))
    {
        let dot = dxr
            .iter()
            .zip(yr)
            .fold(T::zero(), |acc, (&g, &p)| acc + g * p);
        for (g, &p) in dxr.iter_mut().zip(yr) {
            *g = p * (*g - dot);
        }
    }
    Ok(dx)
}

fn check_ln_params<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: Option<&Tensor<T>>,
) -> Result<usize> {
    let d = x.last_dim();
    if gamma.len() != d || beta.is_some_and(|b| b.len() != d) {
        return Err(Error::dim(
            "layer_norm",
            format!(
                "gamma/beta {:?}/{:?} for rows of {d}",
                gamma.shape(),
                beta.map(|b| b.shape().to_vec())
            ),
        ));
    }
    Ok(d)
}

/// Per-row `(mean, 1/sqrt(var + eps))` with population variance.
fn row_stats<T: Element>(row: &[T], eps: T) -> (T, T) {
    let n = T::lit(row.len() as f64);
    let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
    let var = row
        .iter()
        .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
        / n;
    (mean, T::one() / (var + eps).sqrt())
}

/// Layer normalization over the last axis.
pub fn layer_norm<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    let d = check_ln_params(x, gamma, Some(beta))?;
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(d) {
        let (mean, rstd) = row_stats(row, eps);
        for ((v, &g), &b) in row.iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = (*v - mean) * rstd * g + b;
        }
    }
    Ok(out)
}

/// Returns `(dx, dgamma, dbeta)`; statistics are recomputed from `x`.
pub fn layer_norm_backward<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    eps: T,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let d = check_ln_params(x, gamma, None)?;
    if x.shape() != dy.shape() {
        return Err(Error::dim(
            "layer_norm_backward",
            format!("{:?} vs {:?}", x.shape(), dy.shape()),
        ));
    }
    let n = T::lit(d as f64);
    let mut dx = x.clone();
    let mut dgamma = vec![T::zero(); d];
    let mut dbeta = vec![T::zero(); d];
    let mut xhat = vec![T::zero(); d];
    let mut gxhat = vec![T::zero(); d];
    for (xr, (dyr, dxr)) in x.data().chunks_exact(d).zip(
        dy.data()
            .chunks_exact(d)
            .zip(dx.data_mut().chunks_exact_mut(d)),
    ) {
        let (mean, rstd) = row_stats(xr, eps);
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for j in 0..d {
            xhat[j] = (xr[j] - mean) * rstd;
            gxhat[j] = dyr[j] * gamma.data()[j];
            dgamma[j] = dgamma[j] + dyr[j] * xhat[j];
            dbeta[j] = dbeta[j] + dyr[j];
            sum_g = sum_g + gxhat[j];
            sum_gx = sum_gx + gxhat[j] * xhat[j];
        }
        for j in 0..d {
            dxr[j] = rstd * (gxhat[j] - sum_g / n - xhat[j] * sum_gx / n);
        }
    }
    Ok((
        dx,
        Tensor::new(vec![d], dgamma)?,
        Tensor::new(vec![d], dbeta)?,
    ))
}

fn std_normal_cdf<T: Element>(x: T) -> T {
    let half = T::lit(0.5);
    half * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * std_normal_cdf(v))
}

/// `dy ⊙ (Φ(x) + x·φ(x))`.
pub fn gelu_backward<T: Element>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != dy.shape() {
        return Err(Error::dim(
            "gelu_backward",
            format!("{:?} vs {:?}", x.shape(), dy.shape()),
        ));
    }
    let inv_sqrt_2pi = T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    let mut dx = dy.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        let pdf = inv_sqrt_2pi * (-half * v * v).exp();
        *g = *g * (std_normal_cdf(v) + v * pdf);
    }
    Ok(dx)
}
