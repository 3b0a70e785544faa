use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Batch-mean cross-entropy of `logits[B×C]` against integer labels, with its
/// gradient `(softmax(logits) − onehot)/B`.
///
/// Each sample's loss is `logsumexp(row) − row[label]`, evaluated in `f64`.
pub fn cross_entropy_loss<T: Element>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    let (b, c) = logits.dims2("cross_entropy_loss")?;
    if labels.len() != b {
        return Err(Error::dim(
            "cross_entropy_loss",
            format!("{b} logit rows, {} labels", labels.len()),
        ));
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= c) {
        return Err(Error::Label {
            index,
            label,
            num_classes: c,
        });
    }
    let inv_b = 1.0 / b as f64;
    let mut total = 0.0;
    let mut grad = logits.clone();
    for (i, &label) in labels.iter().enumerate() {
        let row: Vec<f64> = logits.row(i).iter().map(|v| v.as_f64()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total += lse - row[label];
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            let p = (row[j] - lse).exp();
            let onehot = if j == label { 1.0 } else { 0.0 };
            *g = T::lit((p - onehot) * inv_b);
        }
    }
    Ok((total * inv_b, grad))
}
