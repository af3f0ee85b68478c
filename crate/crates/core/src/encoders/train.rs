use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::model::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::nn::{class_weights, lr_schedule, softmax_ce_loss, weighted_bce_loss, Adam, Mode};
use crate::tensor::Tensor;

/// Training targets, one entry per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Binary `[N x K]` matrix, trained with class-weighted BCE.
    MultiLabel(Tensor),
    /// One class index per sample, trained with softmax cross-entropy.
    SingleLabel(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::MultiLabel(t) => t.rows(),
            Targets::SingleLabel(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Binary `[N x K]` view (one-hot for single-label targets).
    pub fn to_matrix(&self, k: usize) -> Result<Tensor> {
        match self {
            Targets::MultiLabel(t) => Ok(t.clone()),
            Targets::SingleLabel(v) => {
                let mut m = Tensor::zeros(&[v.len().max(1), k]);
                for (i, &c) in v.iter().enumerate() {
                    if c >= k {
                        return Err(Error::Validation(format!("class {c} >= {k}")));
                    }
                    m.row_mut(i)[c] = 1.0;
                }
                Ok(m)
            }
        }
    }

    fn all_identical(&self) -> bool {
        match self {
            Targets::MultiLabel(t) => (1..t.rows()).all(|i| t.row(i) == t.row(0)),
            Targets::SingleLabel(v) => v.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

/// Inputs and targets for one split.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub inputs: &'a [Tensor],
    pub targets: &'a Targets,
}

impl<'a> Dataset<'a> {
    pub fn new(inputs: &'a [Tensor], targets: &'a Targets) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::dim(format!(
                "{} inputs for {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Self { inputs, targets })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub seed: u64,
    /// Random contiguous crop lengths drawn per sample and epoch when
    /// training a recurrent aggregator; empty means whole sequences.
    pub clip_lengths: Vec<usize>,
    /// Samples are sorted by length within windows of
    /// `batch_size * bucket_factor` before batching.
    pub bucket_factor: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr0: 0.001,
            seed: 0,
            clip_lengths: Vec::new(),
            bucket_factor: 8,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.bucket_factor == 0 {
            return Err(Error::Config(
                "epochs, batch_size and bucket_factor must be >= 1".into(),
            ));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.lr0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<Option<f64>>,
}

/// Groups sample indices into batches of similar length: a seeded shuffle,
/// a stable sort by length inside each window of `batch * factor` samples,
/// then a shuffle of the batch order. No padding is ever introduced.
pub fn bucket_batches<R: Rng + ?Sized>(
    lengths: &[usize],
    batch: usize,
    factor: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::new();
    for window in order.chunks_mut(batch * factor) {
        window.sort_by_key(|&i| lengths[i]);
        batches.extend(window.chunks(batch).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

enum LossKind {
    Bce(Tensor),
    Ce,
}

impl LossKind {
    /// Loss of one sample and its logit gradient.
    fn sample(&self, logits: &Tensor, targets: &Targets, i: usize) -> Result<(f64, Tensor)> {
        match (self, targets) {
            (LossKind::Bce(cw), Targets::MultiLabel(y)) => {
                let yi = y.slice_rows(i, i + 1)?;
                weighted_bce_loss(logits, &yi, cw)
            }
            (LossKind::Ce, Targets::SingleLabel(v)) => softmax_ce_loss(logits, &v[i..i + 1]),
            _ => unreachable!("loss kind follows target kind"),
        }
    }
}

fn as_row(v: Tensor) -> Result<Tensor> {
    let k = v.numel();
    v.reshape(vec![1, k])
}

fn crop<R: Rng + ?Sized>(x: &Tensor, lengths: &[usize], rng: &mut R) -> Result<Tensor> {
    let Some(&len) = lengths.choose(rng) else {
        return Ok(x.clone());
    };
    let t = x.rows();
    if t <= len {
        return Ok(x.clone());
    }
    let start = rng.gen_range(0..=t - len);
    x.slice_rows(start, start + len)
}

/// Mean per-sample loss in evaluation mode.
pub fn dataset_loss(model: &Encoder, data: Dataset<'_>, cw: Option<&Tensor>) -> Result<f64> {
    let kind = match (data.targets, cw) {
        (Targets::MultiLabel(_), Some(cw)) => LossKind::Bce(cw.clone()),
        (Targets::MultiLabel(_), None) => {
            LossKind::Bce(Tensor::vector(vec![1.0; model.num_classes()])?)
        }
        (Targets::SingleLabel(_), _) => LossKind::Ce,
    };
    let mut total = 0.0;
    for (i, x) in data.inputs.iter().enumerate() {
        let logits = as_row(Tensor::vector(model.logits(x)?)?)?;
        total += kind.sample(&logits, data.targets, i)?.0;
    }
    Ok(total / data.inputs.len().max(1) as f64)
}

/// Trains a freshly initialized encoder with Adam under an inverse-time
/// learning-rate decay. Multi-label targets use class-weighted BCE with
/// weights from the training labels; single-label targets use softmax
/// cross-entropy. Bit-reproducible for a fixed `params.seed`.
pub fn train_encoder(
    config: EncoderConfig,
    train: Dataset<'_>,
    val: Option<Dataset<'_>>,
    params: &TrainParams,
) -> Result<(Encoder, TrainHistory)> {
    params.validate()?;
    if train.inputs.is_empty() {
        return Err(Error::Validation("no training samples".into()));
    }
    let mut model = Encoder::new(config, params.seed)?;
    let k = model.num_classes();
    let kind = match train.targets {
        Targets::MultiLabel(y) => {
            if y.cols() != k {
                return Err(Error::dim(format!(
                    "{} label columns for {k} classes",
                    y.cols()
                )));
            }
            LossKind::Bce(class_weights(y)?)
        }
        Targets::SingleLabel(v) => {
            if let Some(c) = v.iter().find(|&&c| c >= k) {
                return Err(Error::Validation(format!("class {c} >= {k}")));
            }
            LossKind::Ce
        }
    };
    if train.targets.all_identical() {
        log::warn!("all training samples share the same label; training anyway");
    }
    let cw = match &kind {
        LossKind::Bce(cw) => Some(cw.clone()),
        LossKind::Ce => None,
    };
    let min_len = model.config.min_len();
    if let Some(x) = train.inputs.iter().find(|x| x.rows() < min_len) {
        return Err(Error::SequenceTooShort {
            len: x.rows(),
            required: min_len,
        });
    }
    let clip_lengths: Vec<usize> = if model.is_recurrent() {
        params.clip_lengths.clone()
    } else {
        Vec::new()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(1);
    let lengths: Vec<usize> = train.inputs.iter().map(Tensor::rows).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..params.epochs {
        let adam = Adam::with_lr(lr_schedule(params.lr0, epoch));
        let mut epoch_loss = 0.0;
        for batch in bucket_batches(&lengths, params.batch_size, params.bucket_factor, &mut rng) {
            model.stack.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in &batch {
                let x = crop(&train.inputs[i], &clip_lengths, &mut rng)?;
                let (out, trace) = model.stack.forward_traced(&x, Mode::Train, &mut rng)?;
                let logits = as_row(out)?;
                let (loss, mut grad) = kind.sample(&logits, train.targets, i)?;
                grad.data_mut().iter_mut().for_each(|g| *g *= scale);
                model.stack.backward(&trace, &grad)?;
                epoch_loss += loss;
            }
            for p in model.stack.params_mut() {
                adam.step(p)?;
            }
        }
        let train_loss = epoch_loss / train.inputs.len() as f64;
        let val_loss = match val {
            Some(v) if !v.inputs.is_empty() => Some(dataset_loss(&model, v, cw.as_ref())?),
            _ => None,
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}{}",
            val_loss
                .map(|v| format!(", val loss {v:.6}"))
                .unwrap_or_default()
        );
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
    }
    Ok((model, history))
}
