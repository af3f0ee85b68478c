//! Per-sample logit scores from one model, keyed by sample id.
//!
//! On disk the scores are tab-separated text (tabs shown as spaces):
//!
//! ```text
//! # modality: video
//! id  action  animation  ...
//! m0001  -1.25  0.5  ...
//! ```
//!
//! Values are written in shortest round-trip form, so a load returns the
//! exact `f64` values that were saved.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityScores {
    pub modality: String,
    pub class_names: Vec<String>,
    pub ids: Vec<String>,
    /// `[ids.len() x class_names.len()]` logits.
    pub scores: Tensor,
}

impl ModalityScores {
    pub fn new(
        modality: impl Into<String>,
        class_names: Vec<String>,
        ids: Vec<String>,
        scores: Tensor,
    ) -> Result<Self> {
        let (b, k) = scores.as_matrix()?;
        if scores.rank() != 2 || b != ids.len() || k != class_names.len() {
            return Err(Error::dim(format!(
                "scores {:?} for {} ids and {} classes",
                scores.shape(),
                ids.len(),
                class_names.len()
            )));
        }
        scores.ensure_finite("modality scores")?;
        Ok(Self {
            modality: modality.into(),
            class_names,
            ids,
            scores,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row_of(&self, id: &str) -> Option<&[f64]> {
        self.ids
            .iter()
            .position(|x| x == id)
            .map(|i| self.scores.row(i))
    }

    /// Lookup table from id to row index.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Reorders rows to follow `ids`. Every id must be present.
    pub fn aligned_to(&self, ids: &[String]) -> Result<Tensor> {
        let index = self.index();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::MissingModality {
                        modality: self.modality.clone(),
                        id: id.clone(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        self.scores.select_rows(&rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# modality: {}\nid", self.modality);
        for c in &self.class_names {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for v in self.scores.row(i) {
                write!(out, "\t{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut modality = String::new();
        let mut class_names: Option<Vec<String>> = None;
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(m) = rest.trim().strip_prefix("modality:") {
                    modality = m.trim().to_string();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let first = fields.next().unwrap_or_default();
            match &class_names {
                None => {
                    if first != "id" {
                        return Err(err(i + 1, "expected header starting with 'id'".into()));
                    }
                    class_names = Some(fields.map(str::to_string).collect());
                }
                Some(names) => {
                    let row: Vec<f64> = fields
                        .map(|f| {
                            f.parse::<f64>()
                                .map_err(|_| err(i + 1, format!("bad score '{f}'")))
                        })
                        .collect::<Result<_>>()?;
                    if row.len() != names.len() {
                        return Err(err(
                            i + 1,
                            format!("{} scores for {} classes", row.len(), names.len()),
                        ));
                    }
                    ids.push(first.to_string());
                    data.extend(row);
                }
            }
        }
        let class_names = class_names.ok_or_else(|| err(0, "missing header".into()))?;
        if ids.is_empty() {
            return Err(err(0, "no score rows".into()));
        }
        let scores = Tensor::new(vec![ids.len(), class_names.len()], data)?;
        Self::new(modality, class_names, ids, scores)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading scores {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}
