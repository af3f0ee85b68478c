use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::fft::Fft;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SAMPLE_RATE: u32 = 12_000;
pub const N_FFT: usize = 2048;
pub const HOP: usize = 256;
pub const N_MELS: usize = 128;
pub const POWER_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the HTK mel scale, evaluated at
/// the FFT bin frequencies. Rows are unnormalized (peak 1).
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_bins: usize,
    centers_hz: Vec<f64>,
    /// Per filter: first nonzero bin and the weights from there on.
    rows: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Self {
        let n_bins = n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let rows = (0..n_mels)
            .map(|m| {
                let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
                let w: Vec<f64> = (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let up = (f - l) / (c - l);
                        let down = (r - f) / (r - c);
                        up.min(down).max(0.0)
                    })
                    .collect();
                let first = w.iter().position(|&v| v > 0.0).unwrap_or(0);
                let last = w.iter().rposition(|&v| v > 0.0).map_or(first, |i| i + 1);
                (first, w[first..last].to_vec())
            })
            .collect();
        Self {
            n_bins,
            centers_hz: edges[1..=n_mels].to_vec(),
            rows,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.rows.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.centers_hz[m]
    }

    /// Dense weights of filter `m` over all FFT bins.
    pub fn row(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bins];
        let (first, w) = &self.rows[m];
        out[*first..first + w.len()].copy_from_slice(w);
        out
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for ((first, w), o) in self.rows.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrogramParams {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            n_fft: N_FFT,
            hop: HOP,
            n_mels: N_MELS,
            fmin: 0.0,
            fmax: SAMPLE_RATE as f64 / 2.0,
        }
    }
}

/// Index into a signal of length `n` under repeated mirror reflection
/// about the end samples (the edge sample is not repeated).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Log-mel power spectrogram extractor with centered, reflect-padded
/// frames and a periodic Hann window.
#[derive(Debug, Clone)]
pub struct MelSpectrogram {
    params: SpectrogramParams,
    fft: Fft,
    window: Vec<f64>,
    bank: MelFilterbank,
}

impl MelSpectrogram {
    pub fn new(params: SpectrogramParams) -> Result<Self> {
        if !params.n_fft.is_power_of_two() || params.hop == 0 || params.n_mels == 0 {
            return Err(Error::Config(format!(
                "invalid spectrogram parameters: n_fft {} hop {} n_mels {}",
                params.n_fft, params.hop, params.n_mels
            )));
        }
        let nyquist = params.sample_rate as f64 / 2.0;
        if !(0.0 <= params.fmin && params.fmin < params.fmax && params.fmax <= nyquist) {
            return Err(Error::Config(format!(
                "mel range {}..{} Hz invalid for {} Hz audio",
                params.fmin, params.fmax, params.sample_rate
            )));
        }
        let n = params.n_fft;
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let bank = MelFilterbank::new(
            params.n_mels,
            n,
            params.sample_rate,
            params.fmin,
            params.fmax,
        );
        Ok(Self {
            fft: Fft::new(n),
            window,
            bank,
            params,
        })
    }

    pub fn params(&self) -> &SpectrogramParams {
        &self.params
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn frame_count(&self, n_samples: usize) -> usize {
        n_samples / self.params.hop + 1
    }

    /// Mel power (before dB) of the frame centered on sample `center`.
    fn frame_power(&self, samples: &[f64], center: usize, mel: &mut [f64]) {
        let n = self.params.n_fft;
        let start = center as isize - (n / 2) as isize;
        let frame: Vec<f64> = (0..n)
            .map(|t| {
                let i = start + t as isize;
                let s = if i >= 0 && (i as usize) < samples.len() {
                    samples[i as usize]
                } else {
                    samples[reflect(i, samples.len())]
                };
                s * self.window[t]
            })
            .collect();
        let mut power = vec![0.0; self.bank.n_bins()];
        self.fft.power_spectrum(&frame, &mut power);
        self.bank.apply(&power, mel);
    }

    /// `[n_mels x T]` matrix of `10 log10(max(S, 1e-10))`.
    pub fn compute(&self, samples: &[f64]) -> Result<Tensor> {
        if samples.is_empty() {
            return Err(Error::Audio(
                "cannot take the spectrogram of an empty clip".into(),
            ));
        }
        let t = self.frame_count(samples.len());
        let m = self.params.n_mels;
        let frames: Vec<Vec<f64>> = (0..t)
            .into_par_iter()
            .map(|j| {
                let mut mel = vec![0.0; m];
                self.frame_power(samples, j * self.params.hop, &mut mel);
                mel
            })
            .collect();
        let mut out = vec![0.0; m * t];
        for (j, col) in frames.iter().enumerate() {
            for (b, &p) in col.iter().enumerate() {
                out[b * t + j] = 10.0 * p.max(POWER_FLOOR).log10();
            }
        }
        Tensor::new(vec![m, t], out)
    }
}

/// One-shot log-mel spectrogram with the default 12 kHz parameters.
pub fn log_mel_spectrogram(samples: &[f64]) -> Result<Tensor> {
    MelSpectrogram::new(SpectrogramParams::default())?.compute(samples)
}
