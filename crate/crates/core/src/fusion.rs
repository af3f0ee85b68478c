//! Late fusion of per-modality logits with per-class softmax attention over
//! modalities.
//!
//! For class `j`, raw weights `W[j, :]` become `alpha[j, :] = softmax(W[j, :])`
//! and the fused logit is `sum_i alpha[j, i] * score_i[j]`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{write_atomic, ModalityScores};
use crate::error::{Error, Result};
use crate::nn::ops::softmax_in_place;
use crate::nn::{class_weights, weighted_bce_loss, Adam};
use crate::tensor::{Parameter, Tensor};

/// Row-wise stable softmax of a `[K x M]` weight matrix.
pub fn fusion_weights(w: &Tensor) -> Result<Tensor> {
    let (k, _) = w.as_matrix()?;
    w.ensure_finite("fusion weights")?;
    let mut alpha = w.clone();
    for j in 0..k {
        softmax_in_place(alpha.row_mut(j));
    }
    Ok(alpha)
}

/// `out[b, j] = sum_i alpha[j, i] * scores[i][b, j]`.
pub fn fuse_matrices(scores: &[Tensor], alpha: &Tensor) -> Result<Tensor> {
    let (k, m) = alpha.as_matrix()?;
    if scores.len() != m {
        return Err(Error::dim(format!(
            "{} score sets for {m} modalities",
            scores.len()
        )));
    }
    let (b, kk) = scores[0].as_matrix()?;
    if kk != k || scores.iter().any(|s| s.shape() != scores[0].shape()) {
        return Err(Error::dim("score sets disagree on shape or class count"));
    }
    let mut out = Tensor::zeros(&[b, k]);
    for (i, s) in scores.iter().enumerate() {
        for (o, (v, j)) in out
            .data_mut()
            .iter_mut()
            .zip(s.data().iter().zip((0..k).cycle()))
        {
            *o += alpha.row(j)[i] * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionModel {
    pub modalities: Vec<String>,
    pub class_names: Vec<String>,
    /// Raw weights `[K x M]`.
    pub weights: Parameter,
}

impl FusionModel {
    /// Zero weights, i.e. uniform attention.
    pub fn new(modalities: Vec<String>, class_names: Vec<String>) -> Result<Self> {
        if modalities.len() < 2 {
            return Err(Error::Config(format!(
                "fusion needs at least 2 modalities, got {}",
                modalities.len()
            )));
        }
        let unique: HashSet<_> = modalities.iter().collect();
        if unique.len() != modalities.len() {
            return Err(Error::Config("duplicate modality in fusion set".into()));
        }
        if class_names.is_empty() {
            return Err(Error::Config("fusion needs at least one class".into()));
        }
        let shape = [class_names.len(), modalities.len()];
        Ok(Self {
            modalities,
            class_names,
            weights: Parameter::zeros(&shape),
        })
    }

    pub fn with_weights(
        modalities: Vec<String>,
        class_names: Vec<String>,
        w: Tensor,
    ) -> Result<Self> {
        let mut model = Self::new(modalities, class_names)?;
        if w.shape() != model.weights.shape() {
            return Err(Error::dim(format!(
                "weights {:?}, expected {:?}",
                w.shape(),
                model.weights.shape()
            )));
        }
        model.weights = Parameter::new(w);
        Ok(model)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn alpha(&self) -> Result<Tensor> {
        fusion_weights(&self.weights.value)
    }

    /// Gathers the inputs in model modality order, aligned to the ids of the
    /// first modality. Every modality must cover exactly the same ids.
    pub fn align(&self, inputs: &[ModalityScores]) -> Result<(Vec<String>, Vec<Tensor>)> {
        let mut ordered = Vec::with_capacity(self.modalities.len());
        for m in &self.modalities {
            let s = inputs
                .iter()
                .find(|s| &s.modality == m)
                .ok_or_else(|| Error::Config(format!("no scores supplied for modality '{m}'")))?;
            if s.class_names != self.class_names {
                return Err(Error::dim(format!(
                    "modality '{m}' has a different class list"
                )));
            }
            ordered.push(s);
        }
        let ids = ordered[0].ids.clone();
        let mut mats = Vec::with_capacity(ordered.len());
        for s in ordered {
            let have: HashSet<&str> = s.ids.iter().map(String::as_str).collect();
            if let Some(id) = ids.iter().find(|id| !have.contains(id.as_str())) {
                return Err(Error::MissingModality {
                    modality: s.modality.clone(),
                    id: id.clone(),
                });
            }
            if s.len() != ids.len() {
                let first: HashSet<&str> = ids.iter().map(String::as_str).collect();
                let extra = s.ids.iter().find(|id| !first.contains(id.as_str()));
                return Err(Error::MissingModality {
                    modality: self.modalities[0].clone(),
                    id: extra.cloned().unwrap_or_default(),
                });
            }
            mats.push(s.aligned_to(&ids)?);
        }
        Ok((ids, mats))
    }

    pub fn fuse(&self, inputs: &[ModalityScores]) -> Result<ModalityScores> {
        let (ids, mats) = self.align(inputs)?;
        let fused = fuse_matrices(&mats, &self.alpha()?)?;
        ModalityScores::new("fused", self.class_names.clone(), ids, fused)
    }

    /// Weighted BCE of the fused logits and its gradient on the raw weights.
    pub fn loss_and_grad(
        &self,
        scores: &[Tensor],
        labels: &Tensor,
        cw: &Tensor,
    ) -> Result<(f64, Tensor)> {
        let alpha = self.alpha()?;
        let fused = fuse_matrices(scores, &alpha)?;
        let (loss, dfused) = weighted_bce_loss(&fused, labels, cw)?;
        let (k, m) = alpha.as_matrix()?;
        let b = fused.rows();
        // d fused[b,j] / d W[j,l] = alpha[j,l] * (scores_l[b,j] - fused[b,j])
        let mut dw = Tensor::zeros(&[k, m]);
        for j in 0..k {
            for (l, s) in scores.iter().enumerate() {
                let a = alpha.row(j)[l];
                let mut acc = 0.0;
                for bi in 0..b {
                    let f = fused.row(bi)[j];
                    acc += dfused.row(bi)[j] * (s.row(bi)[j] - f);
                }
                dw.row_mut(j)[l] = a * acc;
            }
        }
        Ok((loss, dw))
    }

    /// K x M attention table as tab-separated text with a header row.
    pub fn attention_table(&self) -> Result<String> {
        let alpha = self.alpha()?;
        let mut out = String::from("class");
        for m in &self.modalities {
            write!(out, "\t{m}").unwrap();
        }
        out.push('\n');
        for (j, name) in self.class_names.iter().enumerate() {
            out.push_str(name);
            for a in alpha.row(j) {
                write!(out, "\t{a}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading fusion model {}", path.display()), e))?;
        let m: FusionModel = serde_json::from_str(&text)?;
        Self::with_weights(m.modalities, m.class_names, m.weights.value)
    }
}

/// Per-class attention rows, one `Vec` per class.
pub fn report_modal_attention(model: &FusionModel) -> Result<Vec<Vec<f64>>> {
    let alpha = model.alpha()?;
    Ok((0..model.num_classes())
        .map(|j| alpha.row(j).to_vec())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionTrainConfig {
    pub lr: f64,
    pub max_steps: usize,
    /// Steps without early-stopping improvement before halting.
    pub patience: usize,
    /// Fraction of the fitting samples held out for early stopping.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            max_steps: 1000,
            patience: 100,
            holdout: 0.10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FusionHistory {
    pub fit_loss: Vec<f64>,
    pub holdout_loss: Vec<f64>,
    pub best_step: usize,
}

/// Fits the raw attention weights on frozen modality scores (normally the
/// validation split) with full-batch Adam, starting from uniform attention.
/// `labels` rows follow the ids of the first modality in `model_modalities`.
pub fn train_fusion(
    inputs: &[ModalityScores],
    model_modalities: Vec<String>,
    labels: &Tensor,
    cfg: &FusionTrainConfig,
) -> Result<(FusionModel, FusionHistory)> {
    let class_names = inputs
        .first()
        .ok_or_else(|| Error::Config("no modality scores supplied".into()))?
        .class_names
        .clone();
    let mut model = FusionModel::new(model_modalities, class_names)?;
    let (ids, mats) = model.align(inputs)?;
    if labels.as_matrix()? != (ids.len(), model.num_classes()) {
        return Err(Error::dim(format!(
            "labels {:?} for {} samples x {} classes",
            labels.shape(),
            ids.len(),
            model.num_classes()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_hold = (cfg.holdout * ids.len() as f64).floor() as usize;
    let (hold_idx, fit_idx) = order.split_at(n_hold);
    let mut fit_idx = fit_idx.to_vec();
    let mut hold_idx = hold_idx.to_vec();
    fit_idx.sort_unstable();
    hold_idx.sort_unstable();
    let pick = |idx: &[usize]| -> Result<(Vec<Tensor>, Tensor)> {
        let mats = mats
            .iter()
            .map(|m| m.select_rows(idx))
            .collect::<Result<Vec<_>>>()?;
        Ok((mats, labels.select_rows(idx)?))
    };
    let (fit_x, fit_y) = pick(&fit_idx)?;
    let cw = class_weights(&fit_y)?;
    let hold = if hold_idx.is_empty() {
        None
    } else {
        Some(pick(&hold_idx)?)
    };
    let adam = Adam::with_lr(cfg.lr);
    let mut history = FusionHistory::default();
    let mut best = (f64::INFINITY, model.weights.value.clone());
    let mut since_best = 0usize;
    for step in 0..cfg.max_steps {
        let (loss, dw) = model.loss_and_grad(&fit_x, &fit_y, &cw)?;
        history.fit_loss.push(loss);
        let monitor = match &hold {
            Some((hx, hy)) => model.loss_and_grad(hx, hy, &cw)?.0,
            None => loss,
        };
        history.holdout_loss.push(monitor);
        if monitor < best.0 {
            best = (monitor, model.weights.value.clone());
            history.best_step = step;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log::info!(
                    "fusion early stop at step {step} (best {})",
                    history.best_step
                );
                break;
            }
        }
        model.weights.grad = dw;
        adam.step(&mut model.weights)?;
    }
    model.weights.value = best.1;
    Ok((model, history))
}
