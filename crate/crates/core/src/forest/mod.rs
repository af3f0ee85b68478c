//! Metadata encoding and a one-vs-rest random forest over the encoded
//! records.

pub mod metadata;
pub mod tree;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metadata::{
    encode_metadata, CategoryVocab, MetadataRecord, MetadataTable, CATEGORICAL_FIELDS,
    METADATA_WIDTH, MISSING, NUMERIC_FIELDS,
};
pub use tree::{best_split, split_impurity, DecisionTree, Node, Split, TreeParams};

use crate::data::{write_atomic, ModalityScores};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probability clip applied before mapping votes to logits.
pub const PROB_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k.clamp(1, n_features.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 2,
            max_depth: None,
            bootstrap: true,
        }
    }
}

/// One binary forest per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_features: usize,
    pub params: ForestParams,
    /// Empty for labels without positive training samples.
    pub labels: Vec<Vec<DecisionTree>>,
}

/// Seeds for every (label, tree) pair, drawn sequentially from one stream
/// per label so they do not depend on thread scheduling.
fn tree_seeds(seed: u64, label: usize, n_trees: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label as u64 + 1);
    (0..n_trees).map(|_| rng.gen()).collect()
}

/// Trains one-vs-rest forests on `x [N x F]` and binary `y [N x K]`.
/// Labels with no positive sample get no trees (and score as negative).
pub fn train_forest(
    x: &Tensor,
    y: &Tensor,
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForest> {
    let (n, f) = x.as_matrix()?;
    let (ny, k) = y.as_matrix()?;
    if n != ny {
        return Err(Error::dim(format!("{n} feature rows for {ny} label rows")));
    }
    if n < 2 {
        return Err(Error::Validation(format!(
            "forest needs >= 2 samples, got {n}"
        )));
    }
    if params.n_trees == 0 {
        return Err(Error::Config("n_trees must be >= 1".into()));
    }
    x.ensure_finite("forest features")?;
    let tree_params = TreeParams {
        max_features: Some(params.max_features.resolve(f)),
        min_samples_leaf: params.min_samples_leaf,
        max_depth: params.max_depth,
    };
    let mut labels = Vec::with_capacity(k);
    for label in 0..k {
        let yk: Vec<bool> = (0..n).map(|i| y.row(i)[label] > 0.5).collect();
        if !yk.contains(&true) {
            log::warn!("label {label} has no positive training sample; it gets no trees");
            labels.push(Vec::new());
            continue;
        }
        let trees = tree_seeds(seed, label, params.n_trees)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit(x, &yk, &rows, &tree_params, &mut rng)
            })
            .collect();
        labels.push(trees);
    }
    Ok(RandomForest {
        n_features: f,
        params: *params,
        labels,
    })
}

pub fn prob_to_logit(p: f64) -> f64 {
    let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    (p / (1.0 - p)).ln()
}

impl RandomForest {
    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    /// Fraction of trees voting positive for each label.
    pub fn vote_fractions(&self, sample: &[f64]) -> Vec<f64> {
        self.labels
            .iter()
            .map(|trees| {
                if trees.is_empty() {
                    0.0
                } else {
                    let votes = trees.iter().filter(|t| t.votes_positive(sample)).count();
                    votes as f64 / trees.len() as f64
                }
            })
            .collect()
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let (_, f) = x.as_matrix()?;
        if f != self.n_features {
            return Err(Error::dim(format!(
                "forest expects {} features, got {f}",
                self.n_features
            )));
        }
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| self.vote_fractions(x.row(i)))
            .collect();
        Tensor::from_rows(&rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading forest {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Vote fractions mapped to `logit(clip(p, 1e-6, 1 - 1e-6))`.
pub fn forest_scores(
    forest: &RandomForest,
    x: &Tensor,
    ids: Vec<String>,
    class_names: Vec<String>,
) -> Result<ModalityScores> {
    let mut p = forest.predict(x)?;
    p.data_mut().iter_mut().for_each(|v| *v = prob_to_logit(*v));
    ModalityScores::new("metadata", class_names, ids, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable(n: usize, seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let mut row: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            row[2] = if pos {
                rng.gen_range(1.0..2.0)
            } else {
                rng.gen_range(-2.0..-1.0)
            };
            xs.push(row);
            ys.push(vec![pos as u8 as f64, !pos as u8 as f64]);
        }
        (
            Tensor::from_rows(&xs).unwrap(),
            Tensor::from_rows(&ys).unwrap(),
        )
    }

    #[test]
    fn logit_mapping() {
        assert_eq!(prob_to_logit(0.5), 0.0);
        assert!((prob_to_logit(1.0) - 13.815_509_557_963_773).abs() < 1e-9);
        assert!((prob_to_logit(0.0) + prob_to_logit(1.0)).abs() < 1e-9);
    }

    #[test]
    fn separable_train_accuracy() {
        let (x, y) = separable(60, 1);
        let f = train_forest(&x, &y, &ForestParams::default(), 7).unwrap();
        let p = f.predict(&x).unwrap();
        for i in 0..60 {
            for k in 0..2 {
                assert_eq!(p.row(i)[k] > 0.5, y.row(i)[k] > 0.5);
            }
        }
    }

    #[test]
    fn reproducible() {
        let (x, y) = separable(30, 2);
        let p = ForestParams {
            n_trees: 10,
            ..ForestParams::default()
        };
        let a = train_forest(&x, &y, &p, 3).unwrap();
        let b = train_forest(&x, &y, &p, 3).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn label_without_positives_scores_negative() {
        let (x, mut y) = separable(10, 3);
        for i in 0..10 {
            y.row_mut(i)[1] = 0.0;
        }
        let f = train_forest(&x, &y, &ForestParams::default(), 0).unwrap();
        assert!(f.labels[1].is_empty());
        let ids = (0..10).map(|i| format!("m{i}")).collect();
        let s = forest_scores(&f, &x, ids, vec!["a".into(), "b".into()]).unwrap();
        assert!(s.scores.row(0)[1] < -13.0);
    }

    #[test]
    fn max_features_rule() {
        assert_eq!(MaxFeatures::Sqrt.resolve(312), 17);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
    }
}
