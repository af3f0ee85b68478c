use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::lstm::{lstm_backward, lstm_forward, reverse_rows, LstmParams, LstmTrace};
use crate::nn::ops;
use crate::tensor::{xavier_init_with, Parameter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Layer {
    Affine {
        weight: Parameter,
        bias: Parameter,
    },
    TemporalConv {
        kernel: Parameter,
        bias: Parameter,
        stride: usize,
    },
    MeanPool,
    MaxPool,
    Lstm(LstmParams),
    BiLstm {
        forward: LstmParams,
        backward: LstmParams,
    },
    Dropout {
        rate: f64,
    },
    Sigmoid,
    Softmax,
}

impl Layer {
    pub fn affine<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Result<Self> {
        Ok(Layer::Affine {
            weight: Parameter::new(xavier_init_with(&[input, output], rng)?),
            bias: Parameter::zeros(&[output]),
        })
    }

    pub fn temporal_conv<R: Rng + ?Sized>(
        width: usize,
        input: usize,
        output: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if width == 0 || stride == 0 {
            return Err(Error::Validation(
                "conv width and stride must be positive".into(),
            ));
        }
        Ok(Layer::TemporalConv {
            kernel: Parameter::new(xavier_init_with(&[width, input, output], rng)?),
            bias: Parameter::zeros(&[output]),
            stride,
        })
    }

    pub fn lstm<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Layer::Lstm(LstmParams::init(input, hidden, rng)?))
    }

    pub fn bilstm<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Layer::BiLstm {
            forward: LstmParams::init(input, hidden, rng)?,
            backward: LstmParams::init(input, hidden, rng)?,
        })
    }

    /// Feature width produced from an input of width `input`, or `None` if
    /// the layer cannot accept that width.
    pub fn output_width(&self, input: usize) -> Option<usize> {
        match self {
            Layer::Affine { weight, .. } => (weight.shape()[0] == input).then(|| weight.shape()[1]),
            Layer::TemporalConv { kernel, .. } => {
                (kernel.shape()[1] == input).then(|| kernel.shape()[2])
            }
            Layer::Lstm(p) => (p.input_dim() == input).then(|| p.hidden()),
            Layer::BiLstm { forward, .. } => {
                (forward.input_dim() == input).then(|| 2 * forward.hidden())
            }
            Layer::MeanPool
            | Layer::MaxPool
            | Layer::Dropout { .. }
            | Layer::Sigmoid
            | Layer::Softmax => Some(input),
        }
    }

    /// Whether the layer collapses the time axis to a single row.
    pub fn reduces_time(&self) -> bool {
        matches!(
            self,
            Layer::MeanPool | Layer::MaxPool | Layer::Lstm(_) | Layer::BiLstm { .. }
        )
    }

    pub fn params(&self) -> Vec<&Parameter> {
        match self {
            Layer::Affine { weight, bias } => vec![weight, bias],
            Layer::TemporalConv { kernel, bias, .. } => vec![kernel, bias],
            Layer::Lstm(p) => p.params().to_vec(),
            Layer::BiLstm { forward, backward } => {
                let mut v = forward.params().to_vec();
                v.extend(backward.params());
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Layer::Affine { weight, bias } => vec![weight, bias],
            Layer::TemporalConv { kernel, bias, .. } => vec![kernel, bias],
            Layer::Lstm(p) => p.params_mut().into_iter().collect(),
            Layer::BiLstm { forward, backward } => {
                let mut v: Vec<_> = forward.params_mut().into_iter().collect();
                v.extend(backward.params_mut());
                v
            }
            _ => Vec::new(),
        }
    }

    fn forward(&self, x: &Tensor, rng: Option<&mut dyn RngCore>) -> Result<(Tensor, LayerTrace)> {
        Ok(match self {
            Layer::Affine { weight, bias } => (
                ops::affine_forward(x, &weight.value, &bias.value)?,
                LayerTrace::Input(x.clone()),
            ),
            Layer::TemporalConv {
                kernel,
                bias,
                stride,
            } => (
                ops::temporal_conv_forward(x, &kernel.value, &bias.value, *stride)?,
                LayerTrace::Input(x.clone()),
            ),
            Layer::MeanPool => (ops::mean_pool_forward(x)?, LayerTrace::Rows(x.rows())),
            Layer::MaxPool => {
                let (out, arg) = ops::max_pool_forward(x)?;
                (out, LayerTrace::ArgMax(x.rows(), arg))
            }
            Layer::Lstm(p) => {
                let (h, tr) = lstm_forward(x, p)?;
                (h, LayerTrace::Lstm(tr))
            }
            Layer::BiLstm { forward, backward } => {
                let (hf, tf) = lstm_forward(x, forward)?;
                let (hb, tb) = lstm_forward(&reverse_rows(x)?, backward)?;
                let mut data = hf.into_data();
                data.extend(hb.into_data());
                let width = data.len();
                (
                    Tensor::new(vec![1, width], data)?,
                    LayerTrace::BiLstm(Box::new((tf, tb))),
                )
            }
            Layer::Dropout { rate } => {
                let (y, mask) = ops::dropout_forward(x, *rate, rng)?;
                (y, LayerTrace::Mask(mask))
            }
            Layer::Sigmoid => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = ops::sigmoid(*v));
                (y.clone(), LayerTrace::Output(y))
            }
            Layer::Softmax => {
                let y = ops::softmax_rows(x)?;
                (y.clone(), LayerTrace::Output(y))
            }
        })
    }

    fn backward(&mut self, trace: &LayerTrace, dout: &Tensor) -> Result<Tensor> {
        match (self, trace) {
            (Layer::Affine { weight, bias }, LayerTrace::Input(x)) => {
                let g = ops::affine_backward(x, &weight.value, dout)?;
                weight.grad.add_assign(&g.dw)?;
                bias.grad.add_assign(&g.db)?;
                Ok(g.dx)
            }
            (
                Layer::TemporalConv {
                    kernel,
                    bias,
                    stride,
                },
                LayerTrace::Input(x),
            ) => {
                let (dx, dk, db) = ops::temporal_conv_backward(x, &kernel.value, *stride, dout)?;
                kernel.grad.add_assign(&dk)?;
                bias.grad.add_assign(&db)?;
                Ok(dx)
            }
            (Layer::MeanPool, LayerTrace::Rows(t)) => ops::mean_pool_backward(*t, dout),
            (Layer::MaxPool, LayerTrace::ArgMax(t, arg)) => ops::max_pool_backward(*t, arg, dout),
            (Layer::Lstm(p), LayerTrace::Lstm(tr)) => lstm_backward(tr, p, dout),
            (Layer::BiLstm { forward, backward }, LayerTrace::BiLstm(tr)) => {
                let h = forward.hidden();
                let df = Tensor::new(vec![1, h], dout.data()[..h].to_vec())?;
                let db = Tensor::new(vec![1, h], dout.data()[h..].to_vec())?;
                let mut dx = lstm_backward(&tr.0, forward, &df)?;
                let dx_rev = reverse_rows(&lstm_backward(&tr.1, backward, &db)?)?;
                dx.add_assign(&dx_rev)?;
                Ok(dx)
            }
            (Layer::Dropout { .. }, LayerTrace::Mask(mask)) => {
                let mut dx = dout.clone();
                if let Some(mask) = mask {
                    dx.data_mut()
                        .iter_mut()
                        .zip(mask)
                        .for_each(|(g, m)| *g *= m);
                }
                Ok(dx)
            }
            (Layer::Sigmoid, LayerTrace::Output(y)) => {
                let mut dx = dout.clone();
                dx.data_mut()
                    .iter_mut()
                    .zip(y.data())
                    .for_each(|(g, &s)| *g *= s * (1.0 - s));
                Ok(dx)
            }
            (Layer::Softmax, LayerTrace::Output(y)) => ops::softmax_backward(y, dout),
            _ => Err(Error::Validation(
                "trace does not belong to this layer".into(),
            )),
        }
    }
}

#[derive(Debug, Clone)]
enum LayerTrace {
    Input(Tensor),
    Rows(usize),
    ArgMax(usize, Vec<usize>),
    Lstm(LstmTrace),
    BiLstm(Box<(LstmTrace, LstmTrace)>),
    Mask(Option<Vec<f64>>),
    Output(Tensor),
}

/// Per-layer activations from one training-mode forward pass.
#[derive(Debug, Clone)]
pub struct StackTrace(Vec<LayerTrace>);

/// An ordered pipeline of layers with dimension checking at construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerStack {
    input_width: usize,
    layers: Vec<Layer>,
}

impl LayerStack {
    pub fn new(input_width: usize, layers: Vec<Layer>) -> Result<Self> {
        let stack = Self {
            input_width,
            layers,
        };
        stack.output_width()?;
        Ok(stack)
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> Result<usize> {
        let mut width = self.input_width;
        for (i, layer) in self.layers.iter().enumerate() {
            width = layer.output_width(width).ok_or_else(|| {
                Error::dim(format!("layer {i} cannot accept feature width {width}"))
            })?;
        }
        Ok(width)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Evaluation-mode forward pass. Takes `&self`, so a frozen stack can be
    /// shared across threads.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur, None)?.0;
        }
        cur.ensure_finite("forward output")?;
        Ok(cur)
    }

    /// Forward pass in `mode`, keeping the activations needed by
    /// [`LayerStack::backward`].
    pub fn forward_traced(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(Tensor, StackTrace)> {
        let mut cur = x.clone();
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let r: Option<&mut dyn RngCore> = match mode {
                Mode::Train => Some(&mut *rng),
                Mode::Eval => None,
            };
            let (out, tr) = layer.forward(&cur, r)?;
            traces.push(tr);
            cur = out;
        }
        cur.ensure_finite("forward output")?;
        Ok((cur, StackTrace(traces)))
    }

    /// Accumulates parameter gradients for `dout` and returns the gradient
    /// on the stack input.
    pub fn backward(&mut self, trace: &StackTrace, dout: &Tensor) -> Result<Tensor> {
        if trace.0.len() != self.layers.len() {
            return Err(Error::Validation(
                "trace length does not match stack".into(),
            ));
        }
        let mut grad = dout.clone();
        for (layer, tr) in self.layers.iter_mut().zip(&trace.0).rev() {
            grad = layer.backward(tr, &grad)?;
        }
        grad.ensure_finite("input gradient")?;
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn incompatible_widths_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layers = vec![
            Layer::affine(4, 3, &mut rng).unwrap(),
            Layer::affine(2, 1, &mut rng).unwrap(),
        ];
        assert!(matches!(
            LayerStack::new(4, layers),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn eval_mode_skips_dropout() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stack = LayerStack::new(
            3,
            vec![
                Layer::MeanPool,
                Layer::Dropout { rate: 0.5 },
                Layer::affine(3, 2, &mut rng).unwrap(),
            ],
        )
        .unwrap();
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]]).unwrap();
        let a = stack.forward(&x).unwrap();
        let (b, _) = stack.forward_traced(&x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bilstm_concatenates_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = LayerStack::new(3, vec![Layer::bilstm(3, 4, &mut rng).unwrap()]).unwrap();
        assert_eq!(stack.output_width().unwrap(), 8);
        let x = Tensor::from_rows(&[[1.0, 0.0, 2.0], [0.5, 0.5, -1.0]]).unwrap();
        let out = stack.forward(&x).unwrap();
        let Layer::BiLstm { forward, backward } = &stack.layers()[0] else {
            unreachable!()
        };
        let (hf, _) = lstm_forward(&x, forward).unwrap();
        let (hb, _) = lstm_forward(&reverse_rows(&x).unwrap(), backward).unwrap();
        assert_eq!(&out.data()[..4], hf.data());
        assert_eq!(&out.data()[4..], hb.data());
    }
}
