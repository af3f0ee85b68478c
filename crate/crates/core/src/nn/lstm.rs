//! Single-layer LSTM returning the final hidden state.
//!
//! Gate pre-activations are packed as `[input | forget | cell | output]`
//! along the `4H` axis.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::sigmoid;
use crate::tensor::{xavier_init_with, Parameter, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmParams {
    /// `[D x 4H]`
    pub w_input: Parameter,
    /// `[H x 4H]`
    pub w_hidden: Parameter,
    /// `[4H]`
    pub bias: Parameter,
}

impl LstmParams {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        // forget gate starts open
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        Ok(Self {
            w_input: Parameter::new(xavier_init_with(&[input, 4 * hidden], rng)?),
            w_hidden: Parameter::new(xavier_init_with(&[hidden, 4 * hidden], rng)?),
            bias: Parameter::new(bias),
        })
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Parameter::zeros(&[input, 4 * hidden]),
            w_hidden: Parameter::zeros(&[hidden, 4 * hidden]),
            bias: Parameter::zeros(&[4 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 3] {
        [&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }

    pub fn params(&self) -> [&Parameter; 3] {
        [&self.w_input, &self.w_hidden, &self.bias]
    }
}

/// Activations retained for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    x: Tensor,
    /// Post-activation gates per step, `[T x 4H]`.
    gates: Vec<f64>,
    /// Cell states per step, `[T x H]`.
    cells: Vec<f64>,
    /// Hidden states per step, `[T x H]`.
    hiddens: Vec<f64>,
}

/// Runs the recurrence over `x: [T x D]` from zero state and returns the
/// final hidden state as `[1 x H]`.
pub fn lstm_forward(x: &Tensor, p: &LstmParams) -> Result<(Tensor, LstmTrace)> {
    let (t_len, d) = x.as_matrix()?;
    if x.rank() != 2 || t_len == 0 {
        return Err(Error::EmptySequence(None));
    }
    if d != p.input_dim() {
        return Err(Error::dim(format!(
            "lstm input width {d}, expected {}",
            p.input_dim()
        )));
    }
    let h = p.hidden();
    let g4 = 4 * h;
    let wx = p.w_input.value.data();
    let wh = p.w_hidden.value.data();
    let mut gates = vec![0.0; t_len * g4];
    let mut cells = vec![0.0; t_len * h];
    let mut hiddens = vec![0.0; t_len * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for t in 0..t_len {
        let z = &mut gates[t * g4..(t + 1) * g4];
        z.copy_from_slice(p.bias.value.data());
        for (di, &xv) in x.row(t).iter().enumerate() {
            if xv != 0.0 {
                z.iter_mut()
                    .zip(&wx[di * g4..(di + 1) * g4])
                    .for_each(|(a, &w)| *a += xv * w);
            }
        }
        for (hi, &hv) in h_prev.iter().enumerate() {
            if hv != 0.0 {
                z.iter_mut()
                    .zip(&wh[hi * g4..(hi + 1) * g4])
                    .for_each(|(a, &w)| *a += hv * w);
            }
        }
        for k in 0..h {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[h + k]);
            let g = z[2 * h + k].tanh();
            let o = sigmoid(z[3 * h + k]);
            z[k] = i;
            z[h + k] = f;
            z[2 * h + k] = g;
            z[3 * h + k] = o;
            let c = f * c_prev[k] + i * g;
            cells[t * h + k] = c;
            hiddens[t * h + k] = o * c.tanh();
        }
        h_prev.copy_from_slice(&hiddens[t * h..(t + 1) * h]);
        c_prev.copy_from_slice(&cells[t * h..(t + 1) * h]);
    }
    let out = Tensor::new(vec![1, h], h_prev)?;
    Ok((
        out,
        LstmTrace {
            x: x.clone(),
            gates,
            cells,
            hiddens,
        },
    ))
}

/// Backpropagates a gradient on the final hidden state. Parameter
/// gradients are accumulated into `p`; returns the gradient on the input.
pub fn lstm_backward(trace: &LstmTrace, p: &mut LstmParams, dout: &Tensor) -> Result<Tensor> {
    let h = p.hidden();
    let g4 = 4 * h;
    if dout.numel() != h {
        return Err(Error::dim(format!(
            "lstm backward: dout has {} values, hidden {h}",
            dout.numel()
        )));
    }
    let (t_len, d) = trace.x.as_matrix()?;
    let mut dx = vec![0.0; t_len * d];
    let mut dwx = vec![0.0; d * g4];
    let mut dwh = vec![0.0; h * g4];
    let mut db = vec![0.0; g4];
    let mut dh = dout.data().to_vec();
    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; g4];
    let wx = p.w_input.value.data();
    let wh = p.w_hidden.value.data();
    for t in (0..t_len).rev() {
        let gate = &trace.gates[t * g4..(t + 1) * g4];
        for k in 0..h {
            let (i, f, g, o) = (gate[k], gate[h + k], gate[2 * h + k], gate[3 * h + k]);
            let c = trace.cells[t * h + k];
            let c_prev = if t > 0 {
                trace.cells[(t - 1) * h + k]
            } else {
                0.0
            };
            let tc = c.tanh();
            let d_o = dh[k] * tc;
            dc[k] += dh[k] * o * (1.0 - tc * tc);
            let d_i = dc[k] * g;
            let d_g = dc[k] * i;
            let d_f = dc[k] * c_prev;
            dz[k] = d_i * i * (1.0 - i);
            dz[h + k] = d_f * f * (1.0 - f);
            dz[2 * h + k] = d_g * (1.0 - g * g);
            dz[3 * h + k] = d_o * o * (1.0 - o);
            dc[k] *= f;
        }
        db.iter_mut().zip(&dz).for_each(|(a, &v)| *a += v);
        let xr = trace.x.row(t);
        for di in 0..d {
            let wrow = &wx[di * g4..(di + 1) * g4];
            dx[t * d + di] = wrow.iter().zip(&dz).map(|(a, b)| a * b).sum();
            let xv = xr[di];
            if xv != 0.0 {
                dwx[di * g4..(di + 1) * g4]
                    .iter_mut()
                    .zip(&dz)
                    .for_each(|(a, &v)| *a += xv * v);
            }
        }
        let mut dh_prev = vec![0.0; h];
        if t > 0 {
            let hp = &trace.hiddens[(t - 1) * h..t * h];
            for hi in 0..h {
                let wrow = &wh[hi * g4..(hi + 1) * g4];
                dh_prev[hi] = wrow.iter().zip(&dz).map(|(a, b)| a * b).sum();
                let hv = hp[hi];
                if hv != 0.0 {
                    dwh[hi * g4..(hi + 1) * g4]
                        .iter_mut()
                        .zip(&dz)
                        .for_each(|(a, &v)| *a += hv * v);
                }
            }
        }
        dh = dh_prev;
    }
    p.w_input.grad.add_assign(&Tensor::new(vec![d, g4], dwx)?)?;
    p.w_hidden
        .grad
        .add_assign(&Tensor::new(vec![h, g4], dwh)?)?;
    p.bias.grad.add_assign(&Tensor::new(vec![g4], db)?)?;
    Tensor::new(vec![t_len, d], dx)
}

/// Reverses the row order of a sequence.
pub fn reverse_rows(x: &Tensor) -> Result<Tensor> {
    let (t, _) = x.as_matrix()?;
    let idx: Vec<usize> = (0..t).rev().collect();
    x.select_rows(&idx)
}
