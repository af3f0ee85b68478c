//! Forward and backward kernels for the feed-forward layers.
//!
//! Sequences are `[T x D]` matrices; a pooled vector is a `[1 x D]` matrix
//! or a rank-1 `[D]` tensor.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradients of an affine layer.
#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

/// `out[i,k] = sum_d x[i,d] * w[d,k] + b[k]`.
pub fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (rows, d_in) = x.as_matrix()?;
    let (w_in, d_out) = w.as_matrix()?;
    if w.rank() != 2 || w_in != d_in || b.numel() != d_out {
        return Err(Error::dim(format!(
            "affine: x {:?}, w {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let wd = w.data();
    let mut out = Vec::with_capacity(rows * d_out);
    for i in 0..rows {
        let mut acc = b.data().to_vec();
        for (d, &xv) in x.row(i).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &wd[d * d_out..(d + 1) * d_out];
            acc.iter_mut().zip(wrow).for_each(|(a, &wv)| *a += xv * wv);
        }
        out.extend(acc);
    }
    Tensor::new(vec![rows, d_out], out)
}

pub fn affine_backward(x: &Tensor, w: &Tensor, dout: &Tensor) -> Result<AffineGrads> {
    let (rows, d_in) = x.as_matrix()?;
    let (_, d_out) = w.as_matrix()?;
    if dout.as_matrix()? != (rows, d_out) {
        return Err(Error::dim(format!(
            "affine backward: dout {:?} vs ({rows}, {d_out})",
            dout.shape()
        )));
    }
    let wd = w.data();
    let mut dx = vec![0.0; rows * d_in];
    let mut dw = vec![0.0; d_in * d_out];
    let mut db = vec![0.0; d_out];
    for i in 0..rows {
        let g = dout.row(i);
        db.iter_mut().zip(g).for_each(|(a, &gv)| *a += gv);
        let xr = x.row(i);
        for d in 0..d_in {
            let wrow = &wd[d * d_out..(d + 1) * d_out];
            dx[i * d_in + d] = wrow.iter().zip(g).map(|(a, b)| a * b).sum();
            let xv = xr[d];
            if xv != 0.0 {
                dw[d * d_out..(d + 1) * d_out]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, &gv)| *a += xv * gv);
            }
        }
    }
    Ok(AffineGrads {
        dx: Tensor::new(vec![rows, d_in], dx)?,
        dw: Tensor::new(vec![d_in, d_out], dw)?,
        db: Tensor::new(vec![d_out], db)?,
    })
}

/// Global average over the time axis: `[T x D] -> [1 x D]`.
pub fn mean_pool_forward(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::dim(format!(
            "mean pool expects [T x D], got {:?}",
            x.shape()
        )));
    }
    let (t, d) = (x.shape()[0], x.shape()[1]);
    if t == 0 {
        return Err(Error::EmptySequence(None));
    }
    // Each column is summed in sorted order so the result does not depend
    // on the order of the time steps, down to the last bit.
    let inv = 1.0 / t as f64;
    let mut col = vec![0.0; t];
    let out = (0..d)
        .map(|j| {
            for (i, c) in col.iter_mut().enumerate() {
                *c = x.data()[i * d + j];
            }
            col.sort_unstable_by(f64::total_cmp);
            col.iter().sum::<f64>() * inv
        })
        .collect();
    Tensor::new(vec![1, d], out)
}

/// Spreads `dout / T` back onto every time step.
pub fn mean_pool_backward(t: usize, dout: &Tensor) -> Result<Tensor> {
    let d = dout.numel();
    let inv = 1.0 / t as f64;
    let row: Vec<f64> = dout.data().iter().map(|g| g * inv).collect();
    let mut data = Vec::with_capacity(t * d);
    for _ in 0..t {
        data.extend_from_slice(&row);
    }
    Tensor::new(vec![t, d], data)
}

/// Max over the time axis; returns the pooled row and the winning time index
/// per column (first occurrence on ties).
pub fn max_pool_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (t, d) = x.as_matrix()?;
    let mut out = x.row(0).to_vec();
    let mut arg = vec![0usize; d];
    for i in 1..t {
        for (j, &v) in x.row(i).iter().enumerate() {
            if v > out[j] {
                out[j] = v;
                arg[j] = i;
            }
        }
    }
    Ok((Tensor::new(vec![1, d], out)?, arg))
}

pub fn max_pool_backward(t: usize, argmax: &[usize], dout: &Tensor) -> Result<Tensor> {
    let d = argmax.len();
    let mut dx = Tensor::zeros(&[t, d]);
    for (j, (&i, &g)) in argmax.iter().zip(dout.data()).enumerate() {
        dx.data_mut()[i * d + j] = g;
    }
    Ok(dx)
}

/// Output length of a valid (unpadded) temporal convolution.
pub fn conv_output_len(t: usize, width: usize, stride: usize) -> Result<usize> {
    if t < width {
        return Err(Error::SequenceTooShort {
            len: t,
            required: width,
        });
    }
    Ok((t - width) / stride + 1)
}

fn check_kernel(kernel: &Tensor, bias: &Tensor, d_in: usize) -> Result<(usize, usize)> {
    if kernel.rank() != 3 || kernel.shape()[1] != d_in || bias.numel() != kernel.shape()[2] {
        return Err(Error::dim(format!(
            "temporal conv: kernel {:?}, bias {:?}, input width {d_in}",
            kernel.shape(),
            bias.shape()
        )));
    }
    Ok((kernel.shape()[0], kernel.shape()[2]))
}

/// `out[s,:] = sum_{j<n} x[s*stride + j,:] . kernel[j] + bias` over a
/// `[n x D x D']` kernel, no padding.
pub fn temporal_conv_forward(
    x: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::Validation("stride must be positive".into()));
    }
    let (t, d_in) = x.as_matrix()?;
    let (width, d_out) = check_kernel(kernel, bias, d_in)?;
    let t_out = conv_output_len(t, width, stride)?;
    let kd = kernel.data();
    let mut out = Vec::with_capacity(t_out * d_out);
    for s in 0..t_out {
        let mut acc = bias.data().to_vec();
        for j in 0..width {
            let xr = x.row(s * stride + j);
            let tap = &kd[j * d_in * d_out..(j + 1) * d_in * d_out];
            for (d, &xv) in xr.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let krow = &tap[d * d_out..(d + 1) * d_out];
                acc.iter_mut().zip(krow).for_each(|(a, &k)| *a += xv * k);
            }
        }
        out.extend(acc);
    }
    Tensor::new(vec![t_out, d_out], out)
}

/// Returns `(dx, dkernel, dbias)`.
pub fn temporal_conv_backward(
    x: &Tensor,
    kernel: &Tensor,
    stride: usize,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t, d_in) = x.as_matrix()?;
    let (width, d_out) = (kernel.shape()[0], kernel.shape()[2]);
    let t_out = conv_output_len(t, width, stride)?;
    if dout.as_matrix()? != (t_out, d_out) {
        return Err(Error::dim("temporal conv backward: dout shape"));
    }
    let kd = kernel.data();
    let mut dx = vec![0.0; t * d_in];
    let mut dk = vec![0.0; width * d_in * d_out];
    let mut db = vec![0.0; d_out];
    for s in 0..t_out {
        let g = dout.row(s);
        db.iter_mut().zip(g).for_each(|(a, &gv)| *a += gv);
        for j in 0..width {
            let ti = s * stride + j;
            let xr = x.row(ti);
            let base = j * d_in * d_out;
            for d in 0..d_in {
                let off = base + d * d_out;
                let krow = &kd[off..off + d_out];
                dx[ti * d_in + d] += krow.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                let xv = xr[d];
                if xv != 0.0 {
                    dk[off..off + d_out]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(a, &gv)| *a += xv * gv);
                }
            }
        }
    }
    Ok((
        Tensor::new(vec![t, d_in], dx)?,
        Tensor::new(kernel.shape().to_vec(), dk)?,
        Tensor::new(vec![d_out], db)?,
    ))
}

/// Inverted dropout. Returns the output and the multiplicative mask, which
/// is `None` when nothing was dropped (evaluation mode or rate 0).
pub fn dropout_forward<R: Rng + ?Sized>(
    x: &Tensor,
    rate: f64,
    rng: Option<&mut R>,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Validation(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    let Some(rng) = rng.filter(|_| rate > 0.0) else {
        return Ok((x.clone(), None));
    };
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.numel())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut out = x.clone();
    out.data_mut()
        .iter_mut()
        .zip(&mask)
        .for_each(|(v, m)| *v *= m);
    Ok((out, Some(mask)))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (rows, _) = x.as_matrix()?;
    let mut out = x.clone();
    for i in 0..rows {
        softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Backward of a row-wise softmax given its output `y`.
pub fn softmax_backward(y: &Tensor, dout: &Tensor) -> Result<Tensor> {
    let (rows, _) = y.as_matrix()?;
    let mut dx = dout.clone();
    for i in 0..rows {
        let yr = y.row(i);
        let gr = dout.row(i);
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        dx.row_mut(i)
            .iter_mut()
            .zip(yr.iter().zip(gr))
            .for_each(|(d, (&yv, &gv))| *d = yv * (gv - dot));
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_affine() {
        let x = m(&[&[1.0, 2.0]]);
        let w = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = Tensor::vector(vec![0.0, 0.0]).unwrap();
        assert_eq!(affine_forward(&x, &w, &b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn hand_computed_affine() {
        let x = m(&[&[1.0, 1.0]]);
        let w = m(&[&[2.0], &[3.0]]);
        let b = Tensor::vector(vec![1.0]).unwrap();
        assert_eq!(affine_forward(&x, &w, &b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn affine_shape_mismatch() {
        let x = m(&[&[1.0, 1.0, 1.0]]);
        let w = m(&[&[2.0], &[3.0]]);
        let b = Tensor::vector(vec![1.0]).unwrap();
        assert!(matches!(
            affine_forward(&x, &w, &b),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mean_pool_examples() {
        let v = [0.5, -2.0, 7.0];
        let x = m(&[&v, &v, &v]);
        assert_eq!(mean_pool_forward(&x).unwrap().data(), &v);
        let x = m(&[&[1.0, 3.0], &[3.0, 1.0]]);
        assert_eq!(mean_pool_forward(&x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn averaging_bigram_kernel() {
        let x = m(&[&[2.0], &[4.0], &[6.0], &[8.0]]);
        let k = Tensor::new(vec![2, 1, 1], vec![0.5, 0.5]).unwrap();
        let b = Tensor::vector(vec![0.0]).unwrap();
        let out = temporal_conv_forward(&x, &k, &b, 2).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    #[test]
    fn conv_shape_rule_and_short_input() {
        let x = Tensor::zeros(&[5, 2]);
        let k = Tensor::zeros(&[3, 2, 4]);
        let b = Tensor::zeros(&[4]);
        assert_eq!(
            temporal_conv_forward(&x, &k, &b, 1).unwrap().shape(),
            &[3, 4]
        );
        let short = Tensor::zeros(&[2, 2]);
        assert!(matches!(
            temporal_conv_forward(&short, &k, &b, 1),
            Err(Error::SequenceTooShort {
                len: 2,
                required: 3
            })
        ));
    }

    #[test]
    fn dropout_eval_is_identity() {
        let x = m(&[&[1.0, 2.0, 3.0]]);
        let (y, mask) = dropout_forward::<ChaCha8Rng>(&x, 0.5, None).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let x = Tensor::new(vec![1, 8], vec![1.0; 8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut total = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let (y, _) = dropout_forward(&x, 0.5, Some(&mut rng)).unwrap();
            total += y.data().iter().sum::<f64>() / 8.0;
        }
        let mean = total / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn stable_activations() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(1000.0).is_finite());
        let mut row = [1000.0, 1000.0];
        softmax_in_place(&mut row);
        assert_eq!(row, [0.5, 0.5]);
    }
}
