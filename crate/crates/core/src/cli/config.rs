use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::AudioAggregation;
use crate::data::labels::tier_names;
use crate::data::{Genre, Modality};
use crate::encoders::{Aggregator, EncoderConfig, Ngram, TrainParams};
use crate::error::{Error, Result};
use crate::forest::ForestParams;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// 13-way multi-label genre prediction.
    #[default]
    Genres,
    /// 5-tier single-label budget prediction.
    Budget,
}

impl Task {
    pub fn class_names(self) -> Vec<String> {
        match self {
            Task::Genres => Genre::names(),
            Task::Budget => tier_names(),
        }
    }

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }
}

/// Encoder settings that are not implied by the modality and task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub ngram: Ngram,
    pub aggregator: Aggregator,
    pub hidden: usize,
    pub dropout: f64,
    pub ngram_channels: Option<usize>,
    pub ngram_stride: Option<usize>,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let d = EncoderConfig::default();
        Self {
            ngram: d.ngram,
            aggregator: d.aggregator,
            hidden: d.hidden,
            dropout: d.dropout,
            ngram_channels: None,
            ngram_stride: None,
        }
    }
}

/// Everything `train` needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub modality: Modality,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// Word vectors, needed for `.txt` plots and metadata titles.
    pub glove: Option<PathBuf>,
    pub glove_dim: usize,
    /// Delimited metadata table (metadata modality only).
    pub metadata_table: Option<PathBuf>,
    /// Apply the two-pass frame subsampling to raw video features.
    pub video_subsample: bool,
    pub audio_aggregation: AudioAggregation,
    pub encoder: EncoderSection,
    pub train: TrainParams,
    pub forest: ForestParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Genres,
            modality: Modality::Text,
            manifest: PathBuf::from("manifest.jsonl"),
            out_dir: PathBuf::from("run"),
            glove: None,
            glove_dim: 300,
            metadata_table: None,
            video_subsample: true,
            audio_aggregation: AudioAggregation::Stacked,
            encoder: EncoderSection::default(),
            train: TrainParams::default(),
            forest: ForestParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.manifest);
        resolve(&mut cfg.out_dir);
        cfg.glove.as_mut().map(resolve);
        cfg.metadata_table.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.encoder.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.encoder.dropout
            )));
        }
        if self.modality == Modality::Metadata && self.metadata_table.is_none() {
            return Err(Error::Config(
                "metadata modality needs metadata_table".into(),
            ));
        }
        Ok(())
    }

    /// Full encoder configuration for a sequence modality.
    pub fn encoder_config(&self) -> Result<EncoderConfig> {
        let k = self.task.num_classes();
        let e = &self.encoder;
        let mut cfg = match self.modality {
            Modality::Text => EncoderConfig::text(e.ngram, k),
            Modality::Video => EncoderConfig::video(e.ngram, k),
            Modality::Poster => EncoderConfig::poster(k),
            Modality::Audio => EncoderConfig::audio(e.aggregator, k),
            Modality::Metadata => {
                return Err(Error::Config(
                    "metadata uses a forest, not an encoder".into(),
                ))
            }
        };
        cfg.aggregator = e.aggregator;
        cfg.hidden = e.hidden;
        cfg.dropout = e.dropout;
        cfg.ngram_channels = e.ngram_channels;
        if e.ngram_stride.is_some() {
            cfg.ngram_stride = e.ngram_stride;
        }
        Ok(cfg)
    }
}
