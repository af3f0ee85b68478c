use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{write_atomic, Modality, ModalityScores};
use crate::error::{Error, Result};
use crate::nn::{Layer, LayerStack};
use crate::tensor::Tensor;

pub const TEXT_DIM: usize = 300;
pub const TEXT_MAX_LEN: usize = 3000;
pub const FRAME_DIM: usize = 4096;
pub const VIDEO_MAX_FRAMES: usize = 200;
pub const MEL_DIM: usize = 128;

/// A `[T x D]` sequence of feature vectors for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub modality: Modality,
    pub data: Tensor,
    pub source_id: String,
}

impl FeatureSequence {
    /// Checks the per-modality shape limits: text `T <= 3000, D = 300`,
    /// video `T <= 200, D = 4096`, poster `T = 1, D = 4096`, audio frames
    /// `D = 128`. A rank-1 input is read as a single row.
    pub fn new(modality: Modality, data: Tensor, source_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        let data = if data.rank() == 1 {
            let d = data.numel();
            data.reshape(vec![1, d])?
        } else {
            data
        };
        if data.rank() != 2 {
            return Err(Error::dim(format!(
                "sample '{source_id}': expected a [T x D] sequence, got {:?}",
                data.shape()
            )));
        }
        let (t, d) = (data.shape()[0], data.shape()[1]);
        let (max_t, want_d) = match modality {
            Modality::Text => (TEXT_MAX_LEN, TEXT_DIM),
            Modality::Video => (VIDEO_MAX_FRAMES, FRAME_DIM),
            Modality::Poster => (1, FRAME_DIM),
            Modality::Audio => (usize::MAX, MEL_DIM),
            Modality::Metadata => {
                return Err(Error::Validation(
                    "metadata is not a feature sequence".into(),
                ))
            }
        };
        if t > max_t || d != want_d {
            return Err(Error::dim(format!(
                "sample '{source_id}': {modality} sequence {t}x{d} outside limits T<={max_t}, D={want_d}"
            )));
        }
        data.ensure_finite(&format!("{modality} features of '{source_id}'"))?;
        Ok(Self {
            modality,
            data,
            source_id,
        })
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ngram {
    Unigram,
    Bigram,
    Trigram,
}

impl Ngram {
    pub fn width(self) -> usize {
        match self {
            Ngram::Unigram => 1,
            Ngram::Bigram => 2,
            Ngram::Trigram => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    MeanPool,
    Lstm,
    Bilstm,
    /// Width-3 temporal convolution, max over time.
    Conv1dPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub ngram: Ngram,
    pub aggregator: Aggregator,
    /// LSTM state size or Conv1D channel count.
    pub hidden: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    /// Output channels of the n-gram convolution; defaults to `input_dim`.
    pub ngram_channels: Option<usize>,
    /// Stride of the n-gram convolution; defaults to 1.
    pub ngram_stride: Option<usize>,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            ngram: Ngram::Unigram,
            aggregator: Aggregator::MeanPool,
            hidden: 128,
            num_classes: 13,
            input_dim: TEXT_DIM,
            ngram_channels: None,
            ngram_stride: None,
            dropout: 0.5,
        }
    }
}

impl EncoderConfig {
    /// fastText over 300-d word vectors.
    pub fn text(ngram: Ngram, num_classes: usize) -> Self {
        Self {
            ngram,
            num_classes,
            input_dim: TEXT_DIM,
            ..Self::default()
        }
    }

    /// fastVideo over 4096-d frame features. Bigrams use stride 2.
    pub fn video(ngram: Ngram, num_classes: usize) -> Self {
        Self {
            ngram,
            num_classes,
            input_dim: FRAME_DIM,
            ngram_stride: (ngram == Ngram::Bigram).then_some(2),
            ..Self::default()
        }
    }

    pub fn poster(num_classes: usize) -> Self {
        Self {
            num_classes,
            input_dim: FRAME_DIM,
            ..Self::default()
        }
    }

    /// Mel-frame sequences (128-d) with a mean-pool or recurrent head.
    pub fn audio(aggregator: Aggregator, num_classes: usize) -> Self {
        Self {
            aggregator,
            num_classes,
            input_dim: MEL_DIM,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.input_dim == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "num_classes, input_dim and hidden must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Shortest sequence the configured stack accepts.
    pub fn min_len(&self) -> usize {
        let mut need = 1;
        if self.aggregator == Aggregator::Conv1dPool {
            need = 3;
        }
        if self.ngram != Ngram::Unigram {
            let stride = self.ngram_stride.unwrap_or(1);
            need = self.ngram.width() + (need - 1) * stride;
        }
        need
    }
}

/// A sequence classifier: optional n-gram convolution, temporal
/// aggregation, dropout, then an affine head producing logits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub stack: LayerStack,
}

impl Encoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut width = config.input_dim;
        if config.ngram != Ngram::Unigram {
            let out = config.ngram_channels.unwrap_or(width);
            let stride = config.ngram_stride.unwrap_or(1);
            layers.push(Layer::temporal_conv(
                config.ngram.width(),
                width,
                out,
                stride,
                &mut rng,
            )?);
            width = out;
        }
        match config.aggregator {
            Aggregator::MeanPool => layers.push(Layer::MeanPool),
            Aggregator::Lstm => {
                layers.push(Layer::lstm(width, config.hidden, &mut rng)?);
                width = config.hidden;
            }
            Aggregator::Bilstm => {
                layers.push(Layer::bilstm(width, config.hidden, &mut rng)?);
                width = 2 * config.hidden;
            }
            Aggregator::Conv1dPool => {
                layers.push(Layer::temporal_conv(3, width, config.hidden, 1, &mut rng)?);
                layers.push(Layer::MaxPool);
                width = config.hidden;
            }
        }
        if config.dropout > 0.0 {
            layers.push(Layer::Dropout {
                rate: config.dropout,
            });
        }
        layers.push(Layer::affine(width, config.num_classes, &mut rng)?);
        let stack = LayerStack::new(config.input_dim, layers)?;
        Ok(Self { config, stack })
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn param_count(&self) -> usize {
        self.stack.param_count()
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(
            self.config.aggregator,
            Aggregator::Lstm | Aggregator::Bilstm
        )
    }

    /// The final affine layer's `(weight, bias)` values.
    pub fn head(&self) -> (&Tensor, &Tensor) {
        match self.stack.layers().last() {
            Some(Layer::Affine { weight, bias }) => (&weight.value, &bias.value),
            _ => unreachable!("encoder stacks end in an affine head"),
        }
    }

    /// Evaluation-mode logits for one `[T x D]` sequence.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        if x.rows() < self.config.min_len() {
            return Err(Error::SequenceTooShort {
                len: x.rows(),
                required: self.config.min_len(),
            });
        }
        Ok(self.stack.forward(x)?.into_data())
    }

    /// Scores many sequences in parallel; row order follows `inputs`.
    pub fn score(
        &self,
        modality: &str,
        class_names: Vec<String>,
        ids: Vec<String>,
        inputs: &[Tensor],
    ) -> Result<ModalityScores> {
        let rows: Vec<Vec<f64>> = inputs
            .par_iter()
            .zip(ids.par_iter())
            .map(|(x, id)| {
                self.logits(x).map_err(|e| match e {
                    Error::EmptySequence(None) => Error::EmptySequence(Some(id.clone())),
                    e => e,
                })
            })
            .collect::<Result<_>>()?;
        let scores = Tensor::from_rows(&rows)?;
        ModalityScores::new(modality, class_names, ids, scores)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading model {}", path.display()), e))?;
        let enc: Encoder = serde_json::from_str(&text)?;
        enc.config.validate()?;
        Ok(enc)
    }
}

fn expect(seq: &FeatureSequence, modality: Modality) -> Result<()> {
    if seq.modality != modality {
        return Err(Error::Validation(format!(
            "expected a {modality} sequence, got {}",
            seq.modality
        )));
    }
    if seq.is_empty() {
        return Err(Error::EmptySequence(Some(seq.source_id.clone())));
    }
    Ok(())
}

/// Word vectors averaged over the plot (optionally after an n-gram
/// convolution), then the affine head.
pub fn encode_fasttext(seq: &FeatureSequence, model: &Encoder) -> Result<Vec<f64>> {
    expect(seq, Modality::Text)?;
    model.logits(&seq.data)
}

/// Frame features averaged over time, then the affine head.
pub fn encode_fastvideo(seq: &FeatureSequence, model: &Encoder) -> Result<Vec<f64>> {
    expect(seq, Modality::Video)?;
    model.logits(&seq.data)
}

pub fn encode_poster(seq: &FeatureSequence, model: &Encoder) -> Result<Vec<f64>> {
    expect(seq, Modality::Poster)?;
    model.logits(&seq.data)
}
