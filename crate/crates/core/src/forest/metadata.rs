use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::glove::tokenize;
use crate::data::Embeddings;
use crate::error::{Error, Result};

pub const NUMERIC_FIELDS: [&str; 6] = [
    "cast_total_facebook_likes",
    "duration",
    "facenumber_in_poster",
    "num_critic_reviews",
    "movie_facebook_likes",
    "num_voted_users",
];

pub const CATEGORICAL_FIELDS: [&str; 6] = [
    "director_name",
    "actor_1_name",
    "actor_2_name",
    "actor_3_name",
    "language",
    "content_rating",
];

pub const TITLE_FIELD: &str = "movie_title";

/// Sentinel written for a missing numeric value.
pub const MISSING: f64 = -1.0;

/// Width of an encoded record with 300-d word vectors.
pub const METADATA_WIDTH: usize = NUMERIC_FIELDS.len() + CATEGORICAL_FIELDS.len() + 300;

/// One movie's metadata; `None` marks a missing entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord {
    /// In [`NUMERIC_FIELDS`] order.
    pub numeric: [Option<f64>; 6],
    /// In [`CATEGORICAL_FIELDS`] order.
    pub categorical: [Option<String>; 6],
    pub movie_title: Option<String>,
}

/// Vocabulary slot used by each categorical field: the three actor
/// columns share one actor vocabulary.
const VOCAB_OF_FIELD: [usize; 6] = [0, 1, 1, 1, 2, 3];
const VOCAB_NAMES: [&str; 4] = ["director", "actor", "language", "content_rating"];

/// Label encodings learned from the training split. Codes are frequency
/// ranks starting at 1 (ties broken alphabetically); 0 means unseen.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryVocab {
    tables: [Vec<String>; 4],
    #[serde(skip)]
    index: [HashMap<String, usize>; 4],
}

impl CategoryVocab {
    pub fn build<'a>(records: impl IntoIterator<Item = &'a MetadataRecord>) -> Self {
        let mut counts: [HashMap<&str, usize>; 4] = Default::default();
        for rec in records {
            for (field, value) in rec.categorical.iter().enumerate() {
                if let Some(v) = value {
                    *counts[VOCAB_OF_FIELD[field]].entry(v.as_str()).or_default() += 1;
                }
            }
        }
        let tables = counts.map(|c| {
            let mut entries: Vec<(&str, usize)> = c.into_iter().collect();
            entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            entries.into_iter().map(|(s, _)| s.to_string()).collect()
        });
        Self::from_tables(tables)
    }

    fn from_tables(tables: [Vec<String>; 4]) -> Self {
        let index = std::array::from_fn(|v| {
            tables[v]
                .iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i + 1))
                .collect()
        });
        Self { tables, index }
    }

    /// Code of `value` in the vocabulary of categorical field `field`.
    pub fn code(&self, field: usize, value: &str) -> usize {
        self.index[VOCAB_OF_FIELD[field]]
            .get(value)
            .copied()
            .unwrap_or(0)
    }

    pub fn decode(&self, field: usize, code: usize) -> Option<&str> {
        code.checked_sub(1)
            .and_then(|i| self.tables[VOCAB_OF_FIELD[field]].get(i))
            .map(String::as_str)
    }

    /// Number of known values per vocabulary (director, actor, language,
    /// content rating).
    pub fn sizes(&self) -> BTreeMap<&'static str, usize> {
        VOCAB_NAMES
            .iter()
            .zip(&self.tables)
            .map(|(n, t)| (*n, t.len()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.tables)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Self::from_tables(serde_json::from_str(text)?))
    }
}

/// `[6 numeric | 6 categorical codes | mean title word vector]`.
pub fn encode_metadata(
    rec: &MetadataRecord,
    vocab: &CategoryVocab,
    glove: &Embeddings,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(12 + glove.dim());
    out.extend(rec.numeric.iter().map(|v| v.unwrap_or(MISSING)));
    out.extend(
        rec.categorical
            .iter()
            .enumerate()
            .map(|(f, v)| v.as_deref().map_or(0, |s| vocab.code(f, s)) as f64),
    );
    let mut title = vec![0.0; glove.dim()];
    let mut found = 0usize;
    for tok in rec.movie_title.as_deref().map(tokenize).unwrap_or_default() {
        if let Some(v) = glove.get(&tok) {
            title.iter_mut().zip(v).for_each(|(a, &b)| *a += b as f64);
            found += 1;
        }
    }
    if found > 0 {
        title.iter_mut().for_each(|a| *a /= found as f64);
    }
    out.extend(title);
    out
}

/// Metadata rows keyed by sample id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetadataTable {
    pub records: BTreeMap<String, MetadataRecord>,
}

impl MetadataTable {
    /// Reads a delimited table (tab for `.tsv`, comma otherwise) whose
    /// header has an `id` column and every metadata entry name. Empty cells
    /// and negative numbers are treated as missing.
    pub fn load(path: &Path) -> Result<Self> {
        let delim = if path.extension().is_some_and(|e| e == "tsv") {
            b'\t'
        } else {
            b','
        };
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening metadata {}", path.display()), e))?;
        Self::read(file, delim, path)
    }

    pub fn read<R: std::io::Read>(reader: R, delimiter: u8, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| parse_err(1, format!("missing column '{name}'")))
        };
        let id_col = col("id")?;
        let num_cols = NUMERIC_FIELDS.map(col);
        let cat_cols = CATEGORICAL_FIELDS.map(col);
        let num_cols: Vec<usize> = num_cols.into_iter().collect::<Result<_>>()?;
        let cat_cols: Vec<usize> = cat_cols.into_iter().collect::<Result<_>>()?;
        let title_col = col(TITLE_FIELD)?;

        let mut records = BTreeMap::new();
        let mut missing = 0usize;
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| parse_err(line, e.to_string()))?;
            let cell = |c: usize| row.get(c).map(str::trim).filter(|s| !s.is_empty());
            let id = cell(id_col).ok_or_else(|| parse_err(line, "empty id".into()))?;
            let mut rec = MetadataRecord::default();
            for (slot, &c) in num_cols.iter().enumerate() {
                rec.numeric[slot] = match cell(c) {
                    None => None,
                    Some(s) => {
                        let v: f64 = s.parse().map_err(|_| {
                            parse_err(
                                line,
                                format!("{}: '{s}' is not a number", NUMERIC_FIELDS[slot]),
                            )
                        })?;
                        if !v.is_finite() {
                            return Err(parse_err(
                                line,
                                format!("{}: non-finite", NUMERIC_FIELDS[slot]),
                            ));
                        }
                        (v >= 0.0).then_some(v)
                    }
                };
                missing += rec.numeric[slot].is_none() as usize;
            }
            for (slot, &c) in cat_cols.iter().enumerate() {
                rec.categorical[slot] = cell(c).map(str::to_string);
                missing += rec.categorical[slot].is_none() as usize;
            }
            rec.movie_title = cell(title_col).map(str::to_string);
            if records.insert(id.to_string(), rec).is_some() {
                return Err(parse_err(line, format!("duplicate id '{id}'")));
            }
        }
        log::info!(
            "metadata {}: {} records, {missing} missing entries",
            path.display(),
            records.len()
        );
        Ok(Self { records })
    }

    pub fn get(&self, id: &str) -> Option<&MetadataRecord> {
        self.records.get(id)
    }
}
