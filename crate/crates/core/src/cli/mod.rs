//! Command-line entry points. `main.rs` only parses arguments and calls
//! [`run`], so every command is also callable from tests.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

pub use commands::{
    cmd_eval, cmd_fuse, cmd_make_splits, cmd_report_attention, cmd_spectrogram, cmd_train,
    label_matrix, missing_features, splits_for_ids, task_records,
};
pub use config::{EncoderSection, RunConfig, Task};

use crate::data::{write_atomic, Modality, Split, SplitSizes};
use crate::encoders::{Aggregator, Ngram};
use crate::fusion::FusionTrainConfig;

/// Parses a snake_case enum name through its serde representation.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "mmfuse",
    version,
    about = "Multimodal movie genre and budget classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one modality model and write its score files.
    Train(TrainArgs),
    /// Evaluate a score file on one split.
    Eval(EvalArgs),
    /// Learn modal attention over two or more score files.
    Fuse(FuseArgs),
    /// Print the per-class attention table of a fusion model.
    ReportAttention(ReportArgs),
    /// Convert a directory of WAV files into spectrogram tensors.
    Spectrogram(SpectrogramArgs),
    /// Assign train/val/test splits.
    MakeSplits(SplitArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; flags below override it.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<Task>)]
    pub task: Option<Task>,
    #[arg(long)]
    pub modality: Option<Modality>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub glove: Option<PathBuf>,
    #[arg(long)]
    pub metadata_table: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<Ngram>)]
    pub ngram: Option<Ngram>,
    #[arg(long, value_parser = parse_enum::<Aggregator>)]
    pub aggregator: Option<Aggregator>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Default 100.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Default 32.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate, default 0.001.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag { cfg.$($field).+ = v.clone().into(); })*
            };
        }
        set! {
            task => task,
            modality => modality,
            manifest => manifest,
            out_dir => out_dir,
            ngram => encoder.ngram,
            aggregator => encoder.aggregator,
            hidden => encoder.hidden,
            dropout => encoder.dropout,
            epochs => train.epochs,
            batch_size => train.batch_size,
            lr => train.lr0,
            seed => train.seed,
            glove => glove,
            metadata_table => metadata_table,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, default_value = "genres", value_parser = parse_enum::<Task>)]
    pub task: Task,
    /// Also write the report as TSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Score file of one modality; repeat for each modality.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "genres", value_parser = parse_enum::<Task>)]
    pub task: Task,
    /// Split whose scores the attention weights are fitted on.
    #[arg(long, default_value = "val")]
    pub fit_split: Split,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    #[arg(long)]
    pub wav_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Seed for clip offsets of trailers shorter than two minutes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit with an error if any file was skipped.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Manifest whose records get new splits.
    #[arg(long, conflicts_with = "ids", required_unless_present = "ids")]
    pub manifest: Option<PathBuf>,
    /// Plain id list (one per line); writes `id<TAB>split` lines.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.10)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0.20)]
    pub test_frac: f64,
    /// Exact `train,val,test` counts instead of fractions.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
}

impl SplitArgs {
    fn sizes(&self) -> anyhow::Result<SplitSizes> {
        Ok(match self.counts.as_deref() {
            Some(&[train, val, test]) => SplitSizes::Counts { train, val, test },
            Some(other) => bail!("--counts takes train,val,test; got {} values", other.len()),
            None => SplitSizes::Fractions {
                val: self.val_frac,
                test: self.test_frac,
            },
        })
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let s = cmd_train(&cfg)?;
            println!(
                "trained {} on {} samples ({} val); outputs in {}",
                cfg.modality,
                s.n_train,
                s.n_val,
                s.out_dir.display()
            );
        }
        Command::Eval(args) => {
            let report = cmd_eval(&args.scores, &args.manifest, args.split, args.task)?;
            let label = args
                .scores
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy();
            print!("{}", report.to_table(&label, args.task == Task::Genres));
            if let Some(out) = &args.out {
                write_atomic(out, report.to_tsv().as_bytes())?;
            }
        }
        Command::Fuse(args) => {
            let cfg = FusionTrainConfig {
                lr: args.lr,
                max_steps: args.max_steps,
                patience: args.patience,
                seed: args.seed,
                ..FusionTrainConfig::default()
            };
            let out = cmd_fuse(
                &args.scores,
                &args.manifest,
                args.task,
                args.fit_split,
                &args.out_dir,
                &cfg,
            )?;
            print!("{}", out.model.attention_table()?);
        }
        Command::ReportAttention(args) => {
            let table = cmd_report_attention(&args.model)?;
            match &args.out {
                Some(p) => write_atomic(p, table.as_bytes())?,
                None => print!("{table}"),
            }
        }
        Command::Spectrogram(args) => {
            let s = cmd_spectrogram(&args.wav_dir, &args.out_dir, args.seed)?;
            println!(
                "wrote {} spectrograms, skipped {}",
                s.written,
                s.skipped.len()
            );
            if args.strict && !s.skipped.is_empty() {
                bail!("{} files could not be converted", s.skipped.len());
            }
        }
        Command::MakeSplits(args) => {
            let sizes = args.sizes()?;
            if let Some(ids) = &args.ids {
                let text = splits_for_ids(ids, args.seed, sizes)?;
                write_atomic(&args.out, text.as_bytes())
                    .with_context(|| format!("writing {}", args.out.display()))?;
            } else if let Some(m) = &args.manifest {
                let manifest = cmd_make_splits(m, &args.out, args.seed, sizes)?;
                for s in [Split::Train, Split::Val, Split::Test] {
                    println!("{s}\t{}", manifest.split(s).len());
                }
            }
        }
    }
    Ok(())
}
