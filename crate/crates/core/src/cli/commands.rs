use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;

use crate::audio::{clip_frames, stacked_frames, trailer_spectrogram, AudioAggregation, AudioClip};
use crate::cli::config::{RunConfig, Task};
use crate::data::labels::budget_to_tier;
use crate::data::{
    make_splits, read_tensor, write_atomic, write_tensor, Embeddings, Manifest, Modality,
    ModalityScores, Record, Split, SplitSizes,
};
use crate::encoders::{
    clip_eval_lstm, prepare_plot, subsample_frames, train_encoder, Aggregator, Dataset, Encoder,
    FeatureSequence, Targets, TrainHistory,
};
use crate::error::Error;
use crate::forest::{encode_metadata, forest_scores, train_forest, CategoryVocab, MetadataTable};
use crate::fusion::{train_fusion, FusionModel, FusionTrainConfig};
use crate::metrics::EvalReport;
use crate::tensor::Tensor;

/// Records usable for `task`: every record for genres, records with a
/// budget for the budget task.
pub fn task_records(manifest: &Manifest, task: Task) -> Vec<&Record> {
    match task {
        Task::Genres => manifest.records.iter().collect(),
        Task::Budget => {
            let (with, without): (Vec<&Record>, Vec<&Record>) = manifest
                .records
                .iter()
                .partition(|r| r.budget_usd.is_some());
            if !without.is_empty() {
                log::warn!("{} records without budget_usd skipped", without.len());
            }
            with
        }
    }
}

/// Binary `[N x K]` label matrix of `records` for `task`.
pub fn label_matrix(records: &[&Record], task: Task) -> crate::Result<Tensor> {
    let rows = records
        .iter()
        .map(|r| match task {
            Task::Genres => Ok(r.genre_vector()),
            Task::Budget => {
                let budget = r.budget_usd.ok_or_else(|| {
                    Error::Validation(format!("record '{}' has no budget_usd", r.id))
                })?;
                let mut v = vec![0.0; 5];
                v[budget_to_tier(budget)? - 1] = 1.0;
                Ok(v)
            }
        })
        .collect::<crate::Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::Validation("no labelled records".into()));
    }
    Tensor::from_rows(&rows)
}

fn targets(records: &[&Record], task: Task) -> crate::Result<Targets> {
    let m = label_matrix(records, task)?;
    Ok(match task {
        Task::Genres => Targets::MultiLabel(m),
        Task::Budget => Targets::SingleLabel(
            (0..m.rows())
                .map(|i| m.row(i).iter().position(|&v| v == 1.0).unwrap_or(0))
                .collect(),
        ),
    })
}

/// Every record whose feature file for `modality` is unlisted or absent.
pub fn missing_features(
    manifest: &Manifest,
    records: &[&Record],
    modality: Modality,
) -> Vec<String> {
    records
        .iter()
        .filter_map(|r| match manifest.feature_path(r, modality) {
            None => Some(format!("{}: no {modality} entry", r.id)),
            Some(p) if !p.is_file() => Some(format!("{}: {}", r.id, p.display())),
            Some(_) => None,
        })
        .collect()
}

/// Encoder inputs of one record: one sequence, or one per clip for
/// per-clip audio.
fn load_inputs(
    cfg: &RunConfig,
    manifest: &Manifest,
    rec: &Record,
    glove: Option<&Embeddings>,
) -> crate::Result<Vec<Tensor>> {
    let path = manifest
        .feature_path(rec, cfg.modality)
        .ok_or_else(|| Error::MissingModality {
            modality: cfg.modality.to_string(),
            id: rec.id.clone(),
        })?;
    let seq = |t: Tensor| FeatureSequence::new(cfg.modality, t, rec.id.as_str()).map(|s| s.data);
    match cfg.modality {
        Modality::Text if path.extension().is_some_and(|e| e == "txt") => {
            let glove = glove.ok_or_else(|| {
                Error::Config("plain-text plots need a glove file in the config".into())
            })?;
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::io(format!("reading plot {}", path.display()), e))?;
            Ok(vec![prepare_plot(&rec.id, &text, glove)?.0.data])
        }
        Modality::Video => {
            let raw = read_tensor(&path)?;
            let raw = if cfg.video_subsample {
                subsample_frames(&raw)?
            } else {
                raw
            };
            Ok(vec![seq(raw)?])
        }
        Modality::Audio => {
            let spec = read_tensor(&path)?;
            match cfg.audio_aggregation {
                AudioAggregation::Stacked => Ok(vec![stacked_frames(&spec)?]),
                AudioAggregation::PerClip => clip_frames(&spec),
            }
        }
        _ => Ok(vec![seq(read_tensor(&path)?)?]),
    }
}

fn score_inputs(
    cfg: &RunConfig,
    model: &Encoder,
    inputs: &[Tensor],
    id: &str,
) -> crate::Result<Vec<f64>> {
    let recurrent_video = cfg.modality == Modality::Video
        && matches!(
            model.config.aggregator,
            Aggregator::Lstm | Aggregator::Bilstm
        );
    let mut acc = vec![0.0; model.num_classes()];
    for x in inputs {
        let logits = if recurrent_video {
            let seq = FeatureSequence::new(Modality::Video, x.clone(), id)?;
            clip_eval_lstm(&seq, model)?
        } else {
            model.logits(x)?
        };
        acc.iter_mut().zip(logits).for_each(|(a, v)| *a += v);
    }
    Ok(acc.into_iter().map(|a| a / inputs.len() as f64).collect())
}

fn write_loss_log(path: &Path, history: &TrainHistory) -> crate::Result<()> {
    let mut out = String::from("epoch\ttrain_loss\tval_loss\n");
    for (e, (t, v)) in history.train_loss.iter().zip(&history.val_loss).enumerate() {
        match v {
            Some(v) => writeln!(out, "{e}\t{t}\t{v}").unwrap(),
            None => writeln!(out, "{e}\t{t}\t").unwrap(),
        }
    }
    write_atomic(path, out.as_bytes())
}

fn write_split_scores(
    out_dir: &Path,
    scores: &ModalityScores,
    records: &[&Record],
) -> crate::Result<()> {
    scores.save(&out_dir.join("scores.tsv"))?;
    for split in [Split::Train, Split::Val, Split::Test] {
        let ids: Vec<String> = records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.id.clone())
            .collect();
        if ids.is_empty() {
            continue;
        }
        let sub = ModalityScores::new(
            scores.modality.clone(),
            scores.class_names.clone(),
            ids.clone(),
            scores.aligned_to(&ids)?,
        )?;
        sub.save(&out_dir.join(format!("scores_{split}.tsv")))?;
    }
    Ok(())
}

/// Outcome of [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub n_train: usize,
    pub n_val: usize,
    pub final_train_loss: Option<f64>,
}

/// Trains the configured modality model and writes the model, its loss
/// log, the resolved config and score files for every split.
pub fn cmd_train(cfg: &RunConfig) -> anyhow::Result<TrainSummary> {
    cfg.validate()?;
    let manifest = Manifest::load(&cfg.manifest)?;
    let records = task_records(&manifest, cfg.task);
    if records.is_empty() {
        bail!("manifest {} has no usable records", cfg.manifest.display());
    }
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let glove = match &cfg.glove {
        Some(p) => Some(Embeddings::load(p, cfg.glove_dim)?),
        None => None,
    };
    let by_split = |s: Split| -> Vec<usize> {
        (0..records.len())
            .filter(|&i| records[i].split == s)
            .collect()
    };
    let (train_idx, val_idx) = (by_split(Split::Train), by_split(Split::Val));
    if train_idx.is_empty() {
        bail!("no training records");
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i]).collect::<Vec<_>>();
    let class_names = cfg.task.class_names();
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();

    let summary = if cfg.modality == Modality::Metadata {
        let table_path = cfg.metadata_table.as_ref().expect("validated");
        let table = MetadataTable::load(table_path)?;
        let absent: Vec<&str> = records
            .iter()
            .filter(|r| table.get(&r.id).is_none())
            .map(|r| r.id.as_str())
            .collect();
        if !absent.is_empty() {
            bail!(
                "{} records missing from metadata table {}:\n  {}",
                absent.len(),
                table_path.display(),
                absent.join("\n  ")
            );
        }
        let glove = glove.unwrap_or_else(|| Embeddings::new(cfg.glove_dim));
        let vocab = CategoryVocab::build(
            train_idx
                .iter()
                .map(|&i| table.get(&records[i].id).unwrap()),
        );
        let rows: Vec<Vec<f64>> = records
            .iter()
            .map(|r| encode_metadata(table.get(&r.id).unwrap(), &vocab, &glove))
            .collect();
        let x = Tensor::from_rows(&rows)?;
        let x_train = x.select_rows(&train_idx)?;
        let y_train = label_matrix(&pick(&train_idx), cfg.task)?;
        let forest = train_forest(&x_train, &y_train, &cfg.forest, cfg.train.seed)?;
        forest.save(&cfg.out_dir.join("forest.json"))?;
        write_atomic(&cfg.out_dir.join("vocab.json"), vocab.to_json()?.as_bytes())?;
        let scores = forest_scores(&forest, &x, ids, class_names)?;
        write_split_scores(&cfg.out_dir, &scores, &records)?;
        TrainSummary {
            out_dir: cfg.out_dir.clone(),
            n_train: train_idx.len(),
            n_val: val_idx.len(),
            final_train_loss: None,
        }
    } else {
        let missing = missing_features(&manifest, &records, cfg.modality);
        if !missing.is_empty() {
            bail!(
                "{} missing {} feature files:\n  {}",
                missing.len(),
                cfg.modality,
                missing.join("\n  ")
            );
        }
        let inputs: Vec<Vec<Tensor>> = records
            .par_iter()
            .map(|r| load_inputs(cfg, &manifest, r, glove.as_ref()))
            .collect::<crate::Result<_>>()?;
        let enc_cfg = cfg.encoder_config()?;
        let need = enc_cfg.min_len();
        let short: Vec<String> = records
            .iter()
            .zip(&inputs)
            .filter_map(|(r, xs)| {
                let len = xs.iter().map(Tensor::rows).min()?;
                (len < need).then(|| format!("{}: {len} steps", r.id))
            })
            .collect();
        if !short.is_empty() {
            bail!(
                "{} sequences shorter than the {need} steps the encoder needs:\n  {}",
                short.len(),
                short.join("\n  ")
            );
        }
        let expand = |idx: &[usize]| -> crate::Result<(Vec<Tensor>, Targets)> {
            let mut xs = Vec::new();
            let mut recs = Vec::new();
            for &i in idx {
                for x in &inputs[i] {
                    xs.push(x.clone());
                    recs.push(records[i]);
                }
            }
            Ok((xs, targets(&recs, cfg.task)?))
        };
        let (train_x, train_y) = expand(&train_idx)?;
        let val = if val_idx.is_empty() {
            None
        } else {
            Some(expand(&val_idx)?)
        };
        let train_ds = Dataset::new(&train_x, &train_y)?;
        let val_ds = match &val {
            Some((x, y)) => Some(Dataset::new(x, y)?),
            None => None,
        };
        let (model, history) = train_encoder(enc_cfg, train_ds, val_ds, &cfg.train)?;
        model.save(&cfg.out_dir.join("model.json"))?;
        write_loss_log(&cfg.out_dir.join("loss.tsv"), &history)?;
        let rows: Vec<Vec<f64>> = inputs
            .par_iter()
            .zip(ids.par_iter())
            .map(|(x, id)| score_inputs(cfg, &model, x, id))
            .collect::<crate::Result<_>>()?;
        let scores = ModalityScores::new(
            cfg.modality.name(),
            class_names,
            ids,
            Tensor::from_rows(&rows)?,
        )?;
        write_split_scores(&cfg.out_dir, &scores, &records)?;
        TrainSummary {
            out_dir: cfg.out_dir.clone(),
            n_train: train_idx.len(),
            n_val: val_idx.len(),
            final_train_loss: history.train_loss.last().copied(),
        }
    };
    // out_dir is the directory holding this file, so the copy stays valid if moved
    let saved = RunConfig {
        out_dir: PathBuf::from("."),
        ..cfg.clone()
    };
    let resolved = toml::to_string(&saved).context("serializing config")?;
    write_atomic(&cfg.out_dir.join("config.toml"), resolved.as_bytes())?;
    Ok(summary)
}

/// Evaluates a score file on one split of the manifest.
pub fn cmd_eval(
    scores_path: &Path,
    manifest_path: &Path,
    split: Split,
    task: Task,
) -> anyhow::Result<EvalReport> {
    let scores = ModalityScores::load(scores_path)?;
    if scores.class_names != task.class_names() {
        bail!(
            "{} has classes [{}], expected the {task:?} classes",
            scores_path.display(),
            scores.class_names.join(", ")
        );
    }
    let manifest = Manifest::load(manifest_path)?;
    let records: Vec<&Record> = task_records(&manifest, task)
        .into_iter()
        .filter(|r| r.split == split)
        .collect();
    if records.is_empty() {
        bail!("no {split} records in {}", manifest_path.display());
    }
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let s = scores.aligned_to(&ids)?;
    let y = label_matrix(&records, task)?;
    Ok(EvalReport::compute(&s, &y, scores.class_names.clone())?)
}

#[derive(Debug, Clone)]
pub struct FuseOutcome {
    pub model: FusionModel,
    pub fused: ModalityScores,
}

/// Fits modal attention on `fit_split` and fuses every sample shared by
/// the score files. Writes `fusion.json`, `fused_scores.tsv`,
/// `attention.tsv` and `fusion_loss.tsv` into `out_dir`.
pub fn cmd_fuse(
    score_paths: &[PathBuf],
    manifest_path: &Path,
    task: Task,
    fit_split: Split,
    out_dir: &Path,
    train_cfg: &FusionTrainConfig,
) -> anyhow::Result<FuseOutcome> {
    if score_paths.len() < 2 {
        bail!(Error::Config(format!(
            "fusion needs at least 2 score files, got {}",
            score_paths.len()
        )));
    }
    let inputs = score_paths
        .iter()
        .map(|p| ModalityScores::load(p))
        .collect::<crate::Result<Vec<_>>>()?;
    let modalities: Vec<String> = inputs.iter().map(|s| s.modality.clone()).collect();
    for (s, p) in inputs.iter().zip(score_paths) {
        if s.class_names != task.class_names() {
            bail!("{} does not carry the {task:?} classes", p.display());
        }
    }
    let manifest = Manifest::load(manifest_path)?;
    let records: Vec<&Record> = task_records(&manifest, task)
        .into_iter()
        .filter(|r| r.split == fit_split)
        .collect();
    if records.is_empty() {
        bail!("no {fit_split} records to fit fusion on");
    }
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let fit_inputs = inputs
        .iter()
        .map(|s| {
            ModalityScores::new(
                s.modality.clone(),
                s.class_names.clone(),
                ids.clone(),
                s.aligned_to(&ids)?,
            )
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let labels = label_matrix(&records, task)?;
    let (model, history) = train_fusion(&fit_inputs, modalities, &labels, train_cfg)?;

    // Fuse every id that all modalities share, in the first file's order.
    let shared: Vec<String> = {
        let sets: Vec<HashSet<&str>> = inputs
            .iter()
            .map(|s| s.ids.iter().map(String::as_str).collect())
            .collect();
        inputs[0]
            .ids
            .iter()
            .filter(|id| sets.iter().all(|s| s.contains(id.as_str())))
            .cloned()
            .collect()
    };
    let all = inputs
        .iter()
        .map(|s| {
            ModalityScores::new(
                s.modality.clone(),
                s.class_names.clone(),
                shared.clone(),
                s.aligned_to(&shared)?,
            )
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let fused = model.fuse(&all)?;

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    model.save(&out_dir.join("fusion.json"))?;
    fused.save(&out_dir.join("fused_scores.tsv"))?;
    write_atomic(
        &out_dir.join("attention.tsv"),
        model.attention_table()?.as_bytes(),
    )?;
    let mut log = String::from("step\tfit_loss\tholdout_loss\n");
    for (i, (f, h)) in history
        .fit_loss
        .iter()
        .zip(&history.holdout_loss)
        .enumerate()
    {
        writeln!(log, "{i}\t{f}\t{h}").unwrap();
    }
    write_atomic(&out_dir.join("fusion_loss.tsv"), log.as_bytes())?;
    Ok(FuseOutcome { model, fused })
}

pub fn cmd_report_attention(model_path: &Path) -> anyhow::Result<String> {
    Ok(FusionModel::load(model_path)?.attention_table()?)
}

/// Stable 64-bit FNV-1a, used to give each audio file its own clip seed.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpectrogramSummary {
    pub written: usize,
    pub skipped: Vec<String>,
}

/// Converts every `.wav` in `wav_dir` into a `<stem>.mft` spectrogram
/// tensor in `out_dir`. Unreadable files are logged and counted.
pub fn cmd_spectrogram(
    wav_dir: &Path,
    out_dir: &Path,
    seed: u64,
) -> anyhow::Result<SpectrogramSummary> {
    let mut wavs: Vec<PathBuf> = std::fs::read_dir(wav_dir)
        .with_context(|| format!("listing {}", wav_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    wavs.sort();
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let results: Vec<(String, crate::Result<()>)> = wavs
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            let run = || -> crate::Result<()> {
                let audio = AudioClip::read_wav(p)?;
                let spec = trailer_spectrogram(&audio, seed ^ fnv1a(&stem))?;
                write_tensor(&out_dir.join(format!("{stem}.mft")), &spec)
            };
            (p.display().to_string(), run())
        })
        .collect();
    let mut summary = SpectrogramSummary::default();
    for (name, r) in results {
        match r {
            Ok(()) => summary.written += 1,
            Err(e) => {
                log::error!("skipping {name}: {e}");
                summary.skipped.push(name);
            }
        }
    }
    Ok(summary)
}

/// Reassigns the split of every manifest record.
pub fn cmd_make_splits(
    manifest_path: &Path,
    out: &Path,
    seed: u64,
    sizes: SplitSizes,
) -> anyhow::Result<Manifest> {
    let mut manifest = Manifest::load(manifest_path)?;
    let ids: Vec<String> = manifest.records.iter().map(|r| r.id.clone()).collect();
    let splits = make_splits(&ids, seed, sizes)?;
    for (r, s) in manifest.records.iter_mut().zip(splits) {
        r.split = s;
    }
    manifest.save(out)?;
    Ok(manifest)
}

/// Split assignment for a plain id list (one id per line) as
/// `id<TAB>split` lines.
pub fn splits_for_ids(ids_path: &Path, seed: u64, sizes: SplitSizes) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(ids_path)
        .with_context(|| format!("reading {}", ids_path.display()))?;
    let ids: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let splits = make_splits(&ids, seed, sizes)?;
    let mut out = String::new();
    for (id, s) in ids.iter().zip(splits) {
        writeln!(out, "{id}\t{s}").unwrap();
    }
    Ok(out)
}
