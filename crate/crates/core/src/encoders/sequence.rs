//! Sequence preparation: frame subsampling, clip layouts for recurrent
//! evaluation, and plot-to-word-vector conversion.

use crate::data::glove::tokenize;
use crate::data::{Embeddings, Modality};
use crate::encoders::model::{Encoder, FeatureSequence, TEXT_MAX_LEN, VIDEO_MAX_FRAMES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frame indices kept from a video with `frames` frames: every 10th frame
/// from 0, then (if fewer than 200 were found) every 6th frame from frame
/// 200, stopping at 200 indices or the end of the video.
pub fn subsample_indices(frames: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..frames).step_by(10).take(VIDEO_MAX_FRAMES).collect();
    let mut extra = 200;
    while idx.len() < VIDEO_MAX_FRAMES && extra < frames {
        idx.push(extra);
        extra += 6;
    }
    idx
}

pub fn subsample_frames(raw: &Tensor) -> Result<Tensor> {
    let (f, _) = raw.as_matrix()?;
    raw.select_rows(&subsample_indices(f))
}

/// `(start, len)` clips scored by [`clip_eval_lstm`] for a sequence of
/// length `t`: twelve 16-frame and four 49-frame contiguous clips, keeping
/// those that fit. Shorter than 49 frames means whole-sequence scoring,
/// reported as an empty list.
pub fn clip_layout(t: usize) -> Vec<(usize, usize)> {
    if t < 49 {
        return Vec::new();
    }
    (0..12)
        .map(|i| (16 * i, 16))
        .chain((0..4).map(|i| (49 * i, 49)))
        .filter(|&(s, l)| s + l <= t)
        .collect()
}

/// Averages a recurrent model's logits over the clip layout.
pub fn clip_eval_lstm(seq: &FeatureSequence, model: &Encoder) -> Result<Vec<f64>> {
    if !model.is_recurrent() {
        return Err(Error::Config(
            "clip evaluation needs an LSTM aggregator".into(),
        ));
    }
    if seq.is_empty() {
        return Err(Error::EmptySequence(Some(seq.source_id.clone())));
    }
    let clips = clip_layout(seq.len());
    if clips.is_empty() {
        return model.logits(&seq.data);
    }
    let mut acc = vec![0.0; model.num_classes()];
    for &(start, len) in &clips {
        let clip = seq.data.slice_rows(start, start + len)?;
        for (a, v) in acc.iter_mut().zip(model.logits(&clip)?) {
            *a += v;
        }
    }
    let n = clips.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotStats {
    pub tokens: usize,
    pub kept: usize,
    pub oov: usize,
}

impl PlotStats {
    pub fn oov_rate(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.oov as f64 / self.tokens as f64
        }
    }
}

/// Tokenizes a plot, truncates it to the first 3000 words, and looks each
/// word up in `glove`. Out-of-vocabulary words are dropped, so the sequence
/// length counts only words that have vectors.
pub fn prepare_plot(
    id: &str,
    text: &str,
    glove: &Embeddings,
) -> Result<(FeatureSequence, PlotStats)> {
    let tokens = tokenize(text);
    let considered = &tokens[..tokens.len().min(TEXT_MAX_LEN)];
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(considered.len());
    for tok in considered {
        if let Some(v) = glove.get(tok) {
            rows.push(v.iter().map(|&x| x as f64).collect());
        }
    }
    let stats = PlotStats {
        tokens: considered.len(),
        kept: rows.len(),
        oov: considered.len() - rows.len(),
    };
    log::debug!(
        "plot '{id}': {} tokens, OOV rate {:.3}",
        stats.tokens,
        stats.oov_rate()
    );
    if rows.is_empty() {
        return Err(Error::EmptySequence(Some(id.to_string())));
    }
    let data = Tensor::from_rows(&rows)?;
    Ok((FeatureSequence::new(Modality::Text, data, id)?, stats))
}
