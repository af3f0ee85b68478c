use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const CLIP_SECONDS: usize = 30;
pub const CLIPS_PER_TRAILER: usize = 4;

/// Mono PCM audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Audio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Reads a PCM WAV file (integer or 32-bit float); multichannel audio
    /// is averaged to mono.
    pub fn read_wav(path: &Path) -> Result<Self> {
        let ctx = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
        let reader = hound::WavReader::open(path).map_err(ctx)?;
        let spec = reader.spec();
        let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Float, 32) => reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(ctx)?,
            (hound::SampleFormat::Int, bits @ 8..=32) => {
                let scale = (1u64 << (bits - 1)) as f64;
                reader
                    .into_samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(ctx)?
            }
            (fmt, bits) => {
                return Err(Error::Audio(format!(
                    "{}: unsupported sample format {fmt:?} with {bits} bits",
                    path.display()
                )))
            }
        };
        let ch = spec.channels.max(1) as usize;
        let mono = interleaved
            .chunks(ch)
            .map(|frame| frame.iter().sum::<f64>() / ch as f64)
            .collect();
        Self::new(mono, spec.sample_rate)
    }
}

/// Linear-interpolation resampling to `target` Hz; the output has
/// `round(n * target / source)` samples.
pub fn resample(audio: &AudioClip, target: u32) -> Result<AudioClip> {
    if target == 0 {
        return Err(Error::Audio("target sample rate must be positive".into()));
    }
    if audio.sample_rate == target {
        return Ok(audio.clone());
    }
    let n = audio.len();
    let out_len = (n as f64 * target as f64 / audio.sample_rate as f64).round() as usize;
    let ratio = audio.sample_rate as f64 / target as f64;
    let s = &audio.samples;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos.floor() as usize;
            if j + 1 >= n {
                return s[n - 1];
            }
            let frac = pos - j as f64;
            s[j] + (s[j + 1] - s[j]) * frac
        })
        .collect();
    AudioClip::new(samples, target)
}

/// Start offsets (in samples) of the four 30-second clips. Audio of at
/// least 120 s uses offsets 0, 30, 60 and 90 s. Shorter audio keeps every
/// whole leading clip and draws the rest uniformly from `[0, n - clip]`.
/// Audio under 30 s is tiled instead, so every offset is 0.
pub fn clip_offsets(n_samples: usize, sample_rate: u32, seed: u64) -> Result<Vec<usize>> {
    if n_samples < sample_rate as usize {
        return Err(Error::Audio(format!(
            "audio of {n_samples} samples at {sample_rate} Hz is shorter than 1 s"
        )));
    }
    let clip = CLIP_SECONDS * sample_rate as usize;
    if n_samples < clip {
        return Ok(vec![0; CLIPS_PER_TRAILER]);
    }
    let leading = (n_samples / clip).min(CLIPS_PER_TRAILER);
    let mut offsets: Vec<usize> = (0..leading).map(|i| i * clip).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while offsets.len() < CLIPS_PER_TRAILER {
        offsets.push(rng.gen_range(0..=n_samples - clip));
    }
    Ok(offsets)
}

/// The four 30-second clips of a trailer, in offset order.
pub fn select_clips(audio: &AudioClip, seed: u64) -> Result<Vec<AudioClip>> {
    let clip = CLIP_SECONDS * audio.sample_rate as usize;
    let offsets = clip_offsets(audio.len(), audio.sample_rate, seed)?;
    offsets
        .into_iter()
        .map(|o| {
            let samples = if audio.len() < clip {
                audio.samples.iter().copied().cycle().take(clip).collect()
            } else {
                audio.samples[o..o + clip].to_vec()
            };
            AudioClip::new(samples, audio.sample_rate)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn long_audio_uses_fixed_offsets() {
        let o = clip_offsets(180 * 12_000, 12_000, 9).unwrap();
        assert_eq!(o, vec![0, 360_000, 720_000, 1_080_000]);
    }

    #[test]
    fn medium_audio_is_seeded() {
        let n = 45 * 12_000;
        let a = clip_offsets(n, 12_000, 5).unwrap();
        assert_eq!(a[0], 0);
        assert!(a[1..].iter().all(|&o| o + 360_000 <= n));
        assert_eq!(a, clip_offsets(n, 12_000, 5).unwrap());
        assert_ne!(a, clip_offsets(n, 12_000, 6).unwrap());
    }

    #[test]
    fn short_audio_tiles() {
        let audio =
            AudioClip::new((0..2000).map(|i| (i as f64 / 2000.0) - 0.5).collect(), 1000).unwrap();
        let clips = select_clips(&audio, 0).unwrap();
        assert_eq!(clips.len(), 4);
        assert_eq!(clips[0].len(), 30_000);
        assert!(clips.iter().all(|c| c == &clips[0]));
        assert_eq!(clips[0].samples[2000], audio.samples[0]);
        let tiny = AudioClip::new(vec![0.0; 999], 1000).unwrap();
        assert!(matches!(select_clips(&tiny, 0), Err(Error::Audio(_))));
    }

    #[test]
    fn resample_identity_and_constant() {
        let a = AudioClip::new(vec![0.25; 1000], 12_000).unwrap();
        assert_eq!(resample(&a, 12_000).unwrap(), a);
        let b = AudioClip::new(vec![0.25; 1001], 44_100).unwrap();
        let r = resample(&b, 12_000).unwrap();
        assert_eq!(r.len(), (1001.0f64 * 12_000.0 / 44_100.0).round() as usize);
        assert!(r.samples.iter().all(|&s| s == 0.25));
    }

    #[test]
    fn resampled_sine_matches_analytic() {
        let sine = |t: f64| (2.0 * PI * 100.0 * t).sin();
        let a = AudioClip::new(
            (0..48_000).map(|i| sine(i as f64 / 48_000.0)).collect(),
            48_000,
        )
        .unwrap();
        let r = resample(&a, 12_000).unwrap();
        assert_eq!(r.len(), 12_000);
        let dev = r
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s - sine(i as f64 / 12_000.0)).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.01, "{dev}");
        // off-grid ratio still tracks the sine
        let r = resample(&a, 11_025).unwrap();
        let dev = r
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s - sine(i as f64 / 11_025.0)).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.01, "{dev}");
    }
}
