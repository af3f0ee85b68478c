//! Dataset manifest, tensor files, word vectors, splits, label spaces, and
//! score files.

pub mod glove;
pub mod labels;
pub mod manifest;
pub mod scores;
pub mod splits;
pub mod tensor_file;

use std::io::Write;
use std::path::Path;

pub use glove::Embeddings;
pub use labels::{budget_to_tier, Genre};
pub use manifest::{Manifest, Modality, Record, Split};
pub use scores::ModalityScores;
pub use splits::{make_splits, SplitSizes};
pub use tensor_file::{read_tensor, write_tensor};

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let ctx = || format!("writing {}", path.display());
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(ctx(), e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(ctx(), e))?;
    tmp.persist(path).map_err(|e| Error::io(ctx(), e.error))?;
    Ok(())
}
