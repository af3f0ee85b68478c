//! Classification losses. Each returns the mean loss and its gradient with
//! respect to the logits.

use crate::error::{Error, Result};
use crate::nn::ops::{sigmoid, softmax_in_place, softplus};
use crate::tensor::Tensor;

/// Class-weighted binary cross-entropy on sigmoid outputs, averaged over
/// every `(sample, class)` entry:
///
/// `-[cw_k * y * ln s(z) + (1 - y) * ln(1 - s(z))]`
///
/// The weight scales only the positive term, so rare classes are pulled up
/// harder when they are present.
pub fn weighted_bce_loss(
    logits: &Tensor,
    labels: &Tensor,
    class_weights: &Tensor,
) -> Result<(f64, Tensor)> {
    let (b, k) = logits.as_matrix()?;
    if labels.as_matrix()? != (b, k) || class_weights.numel() != k {
        return Err(Error::dim(format!(
            "bce: logits {:?}, labels {:?}, weights {:?}",
            logits.shape(),
            labels.shape(),
            class_weights.shape()
        )));
    }
    if let Some(w) = class_weights
        .data()
        .iter()
        .find(|w| w.is_nan() || **w <= 0.0)
    {
        return Err(Error::Validation(format!(
            "class weight {w} is not positive"
        )));
    }
    if let Some(y) = labels.data().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Validation(format!("label {y} outside {{0, 1}}")));
    }
    let n = (b * k) as f64;
    let cw = class_weights.data();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(b * k);
    for (idx, (&z, &y)) in logits.data().iter().zip(labels.data()).enumerate() {
        let w = cw[idx % k];
        // -ln s(z) = softplus(-z); -ln(1 - s(z)) = softplus(z)
        loss += w * y * softplus(-z) + (1.0 - y) * softplus(z);
        let s = sigmoid(z);
        grad.push((w * y * (s - 1.0) + (1.0 - y) * s) / n);
    }
    Ok((loss / n, Tensor::new(vec![b, k], grad)?))
}

/// Softmax cross-entropy with one class index per row, averaged over rows.
pub fn softmax_ce_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = logits.as_matrix()?;
    if labels.len() != b {
        return Err(Error::dim(format!("{} labels for {b} rows", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Validation(format!("label index {l} >= {k} classes")));
    }
    let mut loss = 0.0;
    let mut grad = logits.clone();
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        let g = grad.row_mut(i);
        softmax_in_place(g);
        g[label] -= 1.0;
        g.iter_mut().for_each(|v| *v /= b as f64);
    }
    Ok((loss / b as f64, grad))
}

/// Per-class positive weights `N / (K * N_pos_k)`, clipped to `[0.1, 10]`.
/// A class with no positives gets the upper clip.
pub fn class_weights(labels: &Tensor) -> Result<Tensor> {
    let (n, k) = labels.as_matrix()?;
    let mut pos = vec![0usize; k];
    for i in 0..n {
        for (j, &y) in labels.row(i).iter().enumerate() {
            if y > 0.5 {
                pos[j] += 1;
            }
        }
    }
    let w = pos
        .iter()
        .map(|&p| {
            if p == 0 {
                10.0
            } else {
                (n as f64 / (k as f64 * p as f64)).clamp(0.1, 10.0)
            }
        })
        .collect();
    Tensor::vector(w)
}
