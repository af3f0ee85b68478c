//! Log-mel spectrogram extraction for trailer audio and the audio
//! classifier head over mel-frame sequences.

mod clip;
pub mod fft;
pub mod mel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use clip::{clip_offsets, resample, select_clips, AudioClip, CLIPS_PER_TRAILER, CLIP_SECONDS};
pub use mel::{
    hz_to_mel, log_mel_spectrogram, mel_to_hz, MelFilterbank, MelSpectrogram, SpectrogramParams,
    HOP, N_FFT, N_MELS, POWER_FLOOR, SAMPLE_RATE,
};

use crate::encoders::Encoder;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Resamples to 12 kHz, selects four 30 s clips and stacks their log-mel
/// spectrograms into a `[4 x 128 x T]` tensor (`T = 1407`).
pub fn trailer_spectrogram(audio: &AudioClip, seed: u64) -> Result<Tensor> {
    let audio = resample(audio, SAMPLE_RATE)?;
    let clips = select_clips(&audio, seed)?;
    let extractor = MelSpectrogram::new(SpectrogramParams::default())?;
    let specs: Vec<Tensor> = clips
        .par_iter()
        .map(|c| extractor.compute(&c.samples))
        .collect::<Result<_>>()?;
    let t = specs[0].cols();
    let data = specs.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(vec![CLIPS_PER_TRAILER, N_MELS, t], data)
}

/// How the clips of a spectrogram are presented to the encoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioAggregation {
    /// All clips concatenated into one `[C*T x 128]` frame sequence.
    #[default]
    Stacked,
    /// Each clip encoded on its own, logits averaged.
    PerClip,
}

fn check_spectrogram(spec: &Tensor) -> Result<(usize, usize, usize)> {
    match *spec.shape() {
        [c, m, t] if m == N_MELS => {
            spec.ensure_finite("spectrogram")?;
            Ok((c, m, t))
        }
        _ => Err(Error::dim(format!(
            "expected a [clips x {N_MELS} x frames] spectrogram, got {:?}",
            spec.shape()
        ))),
    }
}

/// Per-clip `[T x 128]` frame sequences (the transpose of each clip).
pub fn clip_frames(spec: &Tensor) -> Result<Vec<Tensor>> {
    let (c, m, t) = check_spectrogram(spec)?;
    (0..c)
        .map(|ci| {
            let base = &spec.data()[ci * m * t..(ci + 1) * m * t];
            let mut out = vec![0.0; t * m];
            for b in 0..m {
                for j in 0..t {
                    out[j * m + b] = base[b * t + j];
                }
            }
            Tensor::new(vec![t, m], out)
        })
        .collect()
}

/// All clips' frames in clip order as one `[C*T x 128]` sequence.
pub fn stacked_frames(spec: &Tensor) -> Result<Tensor> {
    let clips = clip_frames(spec)?;
    let rows = clips.iter().map(Tensor::rows).sum();
    let data = clips.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(vec![rows, N_MELS], data)
}

/// Audio logits for one spectrogram.
pub fn encode_audio(spec: &Tensor, model: &Encoder, agg: AudioAggregation) -> Result<Vec<f64>> {
    match agg {
        AudioAggregation::Stacked => model.logits(&stacked_frames(spec)?),
        AudioAggregation::PerClip => {
            let clips = clip_frames(spec)?;
            let mut acc = vec![0.0; model.num_classes()];
            for clip in &clips {
                for (a, v) in acc.iter_mut().zip(model.logits(clip)?) {
                    *a += v;
                }
            }
            Ok(acc.into_iter().map(|a| a / clips.len() as f64).collect())
        }
    }
}
