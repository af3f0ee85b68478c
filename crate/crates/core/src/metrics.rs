//! Average precision and its macro (per class), micro (per sample-class
//! pair) and per-sample aggregations.
//!
//! Rankings sort by descending score; equal scores keep ascending original
//! index, so every report is bit-reproducible.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::ModalityScores;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Non-interpolated average precision: the mean of precision@k over the
/// ranks k that hold a positive.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable: ties stay in index order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

fn check_pair(scores: &Tensor, labels: &Tensor) -> Result<(usize, usize)> {
    let shape = scores.as_matrix()?;
    if labels.as_matrix()? != shape {
        return Err(Error::dim(format!(
            "scores {:?} vs labels {:?}",
            scores.shape(),
            labels.shape()
        )));
    }
    Ok(shape)
}

fn column(t: &Tensor, j: usize) -> Vec<f64> {
    (0..t.rows()).map(|i| t.row(i)[j]).collect()
}

fn as_bool(v: &[f64]) -> Vec<bool> {
    v.iter().map(|&y| y > 0.5).collect()
}

/// Per-class AP; `None` for classes without positives.
pub fn per_class_ap(scores: &Tensor, labels: &Tensor) -> Result<Vec<Option<f64>>> {
    let (_, k) = check_pair(scores, labels)?;
    (0..k)
        .map(
            |j| match average_precision(&column(scores, j), &as_bool(&column(labels, j))) {
                Ok(ap) => Ok(Some(ap)),
                Err(Error::NoPositives) => Ok(None),
                Err(e) => Err(e),
            },
        )
        .collect()
}

/// Mean of per-class APs. Classes with no positives are left out (with a
/// warning); if no class has a positive the result is undefined.
pub fn macro_map(scores: &Tensor, labels: &Tensor) -> Result<f64> {
    mean_defined(&per_class_ap(scores, labels)?)
}

fn mean_defined(aps: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = aps.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::NoPositives);
    }
    let skipped = aps.len() - defined.len();
    if skipped > 0 {
        log::warn!(
            "{skipped} of {} classes have no positives; excluded from mAP",
            aps.len()
        );
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// AP over all `(sample, class)` pairs flattened into one ranking.
pub fn micro_ap(scores: &Tensor, labels: &Tensor) -> Result<f64> {
    check_pair(scores, labels)?;
    average_precision(scores.data(), &as_bool(labels.data()))
}

/// Mean over samples (with at least one positive) of each sample's AP
/// across its class scores.
pub fn sample_ap(scores: &Tensor, labels: &Tensor) -> Result<f64> {
    let (b, _) = check_pair(scores, labels)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..b {
        match average_precision(scores.row(i), &as_bool(labels.row(i))) {
            Ok(ap) => {
                sum += ap;
                n += 1;
            }
            Err(Error::NoPositives) => {}
            Err(e) => return Err(e),
        }
    }
    if n == 0 {
        return Err(Error::NoPositives);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub per_class: Vec<Option<f64>>,
    pub map: f64,
    pub micro_ap: f64,
    pub sample_ap: f64,
    pub n_samples: usize,
    pub n_classes: usize,
}

impl EvalReport {
    pub fn compute(scores: &Tensor, labels: &Tensor, class_names: Vec<String>) -> Result<Self> {
        let (b, k) = check_pair(scores, labels)?;
        if class_names.len() != k {
            return Err(Error::dim(format!(
                "{} names for {k} classes",
                class_names.len()
            )));
        }
        let per_class = per_class_ap(scores, labels)?;
        Ok(Self {
            class_names,
            map: mean_defined(&per_class)?,
            per_class,
            micro_ap: micro_ap(scores, labels)?,
            sample_ap: sample_ap(scores, labels)?,
            n_samples: b,
            n_classes: k,
        })
    }

    /// Two-line tab-separated form: header, then values in `[0, 1]`.
    /// Undefined class APs are written as `nan`.
    pub fn to_tsv(&self) -> String {
        let mut head = self.class_names.join("\t");
        head.push_str("\tmAP\tmicroAP\tsAP\tn_samples\n");
        let mut row = String::new();
        for ap in &self.per_class {
            match ap {
                Some(v) => write!(row, "{v}\t").unwrap(),
                None => row.push_str("nan\t"),
            }
        }
        writeln!(
            row,
            "{}\t{}\t{}\t{}",
            self.map, self.micro_ap, self.sample_ap, self.n_samples
        )
        .unwrap();
        head + &row
    }

    /// Fixed-width table in percent with one decimal, one column per class
    /// followed by the aggregate columns.
    pub fn to_table(&self, row_label: &str, include_micro_sample: bool) -> String {
        let mut cols: Vec<(String, Option<f64>)> = self
            .class_names
            .iter()
            .cloned()
            .zip(self.per_class.iter().copied())
            .collect();
        cols.push(("mAP".into(), Some(self.map)));
        if include_micro_sample {
            cols.push(("uAP".into(), Some(self.micro_ap)));
            cols.push(("sAP".into(), Some(self.sample_ap)));
        }
        let label_w = row_label.len().max(8);
        let mut head = format!("{:<label_w$}", "");
        let mut row = format!("{row_label:<label_w$}");
        for (name, v) in &cols {
            let w = name.len().max(6) + 1;
            write!(head, "{name:>w$}").unwrap();
            match v {
                Some(v) => write!(row, "{:>w$.1}", 100.0 * v).unwrap(),
                None => write!(row, "{:>w$}", "-").unwrap(),
            }
        }
        format!("{head}\n{row}\n")
    }
}

/// Scores every sample with its class's training prevalence plus seeded
/// uniform noise of magnitude 1e-9, which only serves to break ties.
pub fn prevalence_baseline(
    train_labels: &Tensor,
    ids: Vec<String>,
    class_names: Vec<String>,
    seed: u64,
) -> Result<ModalityScores> {
    let (n, k) = train_labels.as_matrix()?;
    let mut prevalence = vec![0.0; k];
    for i in 0..n {
        for (p, &y) in prevalence.iter_mut().zip(train_labels.row(i)) {
            *p += y;
        }
    }
    prevalence.iter_mut().for_each(|p| *p /= n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(ids.len() * k);
    for _ in 0..ids.len() {
        for &p in &prevalence {
            data.push(p + rng.gen_range(-1e-9..1e-9));
        }
    }
    let scores = Tensor::new(vec![ids.len(), k], data)?;
    ModalityScores::new("baseline", class_names, ids, scores)
}
