//! Dataset manifest: one JSON object per line.
//!
//! ```text
//! {"id":"m0001","split":"train","genres":["comedy","drama"],"budget_usd":2500000,
//!  "features":{"text":"plots/m0001.txt","video":"frames/m0001.mft"}}
//! ```
//!
//! Relative feature paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::labels::Genre;
use crate::data::write_atomic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Validation(format!("unknown split '{s}'"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// The five input channels of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Video,
    Audio,
    Poster,
    Metadata,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Text,
        Modality::Video,
        Modality::Audio,
        Modality::Poster,
        Modality::Metadata,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Video => "video",
            Modality::Audio => "audio",
            Modality::Poster => "poster",
            Modality::Metadata => "metadata",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown modality '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub split: Split,
    #[serde(default)]
    pub genres: Vec<Genre>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_usd: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<Modality, PathBuf>,
}

impl Record {
    /// Multi-hot genre vector in canonical order.
    pub fn genre_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; Genre::ALL.len()];
        for g in &self.genres {
            v[g.index()] = 1.0;
        }
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<Record>,
    /// Directory that relative feature paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id '{}'", r.id)));
            }
        }
        Ok(Self {
            records,
            base_dir: PathBuf::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let mut rec: Record =
                serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            if !seen.insert(rec.id.clone()) {
                return Err(parse_err(format!("duplicate id '{}'", rec.id)));
            }
            if rec.budget_usd == Some(0) {
                return Err(parse_err("budget_usd must be positive".into()));
            }
            rec.genres.sort();
            rec.genres.dedup();
            records.push(rec);
        }
        if records.is_empty() {
            log::warn!("manifest {} has no records", path.display());
        }
        Ok(Self {
            records,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    pub fn split(&self, split: Split) -> Vec<&Record> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Absolute (or manifest-relative) path of a record's feature file.
    pub fn feature_path(&self, rec: &Record, modality: Modality) -> Option<PathBuf> {
        rec.features.get(&modality).map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                self.base_dir.join(p)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, content).unwrap();
        (dir, p)
    }

    #[test]
    fn empty_file_is_empty_manifest() {
        let (_d, p) = write("");
        assert!(Manifest::load(&p).unwrap().records.is_empty());
    }

    #[test]
    fn unknown_genre_names_line() {
        let (_d, p) = write(
            "{\"id\":\"a\",\"split\":\"train\",\"genres\":[\"drama\"]}\n\
             {\"id\":\"b\",\"split\":\"val\",\"genres\":[\"western\"]}\n",
        );
        match Manifest::load(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("western"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_bad_split_rejected() {
        let (_d, p) =
            write("{\"id\":\"a\",\"split\":\"train\"}\n{\"id\":\"a\",\"split\":\"test\"}\n");
        assert!(matches!(
            Manifest::load(&p),
            Err(Error::Parse { line: 2, .. })
        ));
        let (_d, p) = write("{\"id\":\"a\",\"split\":\"holdout\"}\n");
        assert!(matches!(
            Manifest::load(&p),
            Err(Error::Parse { line: 1, .. })
        ));
        let (_d, p) = write("not json\n");
        assert!(matches!(
            Manifest::load(&p),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn round_trip_preserves_fields() {
        let mut features = BTreeMap::new();
        features.insert(Modality::Text, PathBuf::from("plots/a.txt"));
        features.insert(Modality::Video, PathBuf::from("/abs/a.mft"));
        let m = Manifest::new(vec![
            Record {
                id: "a".into(),
                split: Split::Train,
                genres: vec![Genre::Comedy, Genre::SciFi],
                budget_usd: Some(1_234_567),
                features,
            },
            Record {
                id: "b".into(),
                split: Split::Test,
                genres: vec![],
                budget_usd: None,
                features: BTreeMap::new(),
            },
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.jsonl");
        m.save(&p).unwrap();
        let back = Manifest::load(&p).unwrap();
        assert_eq!(back.records, m.records);
        assert_eq!(
            back.feature_path(&back.records[0], Modality::Text).unwrap(),
            dir.path().join("plots/a.txt")
        );
        assert_eq!(back.to_jsonl().unwrap(), m.to_jsonl().unwrap());
    }

    #[test]
    fn genre_vector_is_canonical() {
        let r = Record {
            id: "x".into(),
            split: Split::Val,
            genres: vec![Genre::Thriller, Genre::Action],
            budget_usd: None,
            features: BTreeMap::new(),
        };
        let v = r.genre_vector();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[12], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 2.0);
    }
}
