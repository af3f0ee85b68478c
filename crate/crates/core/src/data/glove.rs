use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// Pretrained word vectors in the whitespace-separated GloVe text format.
#[derive(Debug, Clone, Default)]
pub struct Embeddings {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
}

impl Embeddings {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    /// Adds a vector. Returns `false` (keeping the old one) if the word is
    /// already present.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::dim(format!(
                "vector for '{word}' has {} values, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if self.index.contains_key(word) {
            return Ok(false);
        }
        self.index.insert(word.to_string(), self.index.len());
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    pub fn load(path: &Path, dim: usize) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening embeddings {}", path.display()), e))?;
        Self::read(std::io::BufReader::new(file), dim, path)
    }

    pub fn read<R: BufRead>(reader: R, dim: usize, path: &Path) -> Result<Self> {
        let mut emb = Self::new(dim);
        let mut dupes = 0usize;
        let mut buf = Vec::with_capacity(dim);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            buf.clear();
            for tok in parts {
                let v: f32 = tok
                    .parse()
                    .map_err(|_| parse_err(format!("bad float '{tok}'")))?;
                buf.push(v);
            }
            if buf.len() != dim {
                return Err(parse_err(format!(
                    "expected {dim} values for '{word}', found {}",
                    buf.len()
                )));
            }
            if !emb.insert(word, &buf)? {
                dupes += 1;
            }
        }
        if dupes > 0 {
            log::warn!(
                "{}: {dupes} duplicate words ignored (first occurrence kept)",
                path.display()
            );
        }
        Ok(emb)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }
}

/// Lowercased alphanumeric tokens (apostrophes and hyphens kept inside words).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-'))
        .map(|t| t.trim_matches(|c| c == '\'' || c == '-'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, dim: usize) -> Result<Embeddings> {
        Embeddings::read(text.as_bytes(), dim, Path::new("toy.txt"))
    }

    #[test]
    fn toy_file() {
        let e = load("the 0.1 0.2 0.3\ncat -1 0 1.5\n", 3).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.get("cat").unwrap(), &[-1.0, 0.0, 1.5]);
        assert!(e.get("dog").is_none());
    }

    #[test]
    fn arity_error_names_line() {
        match load("a 1 2 3\nb 1 2\n", 3) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn first_duplicate_wins() {
        let e = load("a 1 1\na 2 2\n", 2).unwrap();
        assert_eq!(e.get("a").unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(
            tokenize("The man's sci-fi DREAM, (again)!"),
            vec!["the", "man's", "sci-fi", "dream", "again"]
        );
    }
}
