//! Model files and atomic output.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gamevo::fit::FittedGam;
use gamevo::formula::AdaptiveModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MODEL_FILE: &str = "best_model.json";

/// Writes through a temporary file in the target directory, renamed into
/// place once `body` succeeds.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(dir))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush().map_err(CliError::io(path))?;
    }
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(gamevo::Error::from)?;
        writeln!(w).map_err(CliError::io(path))
    })
}

/// A selected model with its training fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    /// Hour of day the model was selected for; `None` for all rows.
    pub hour: Option<u32>,
    pub algo: String,
    /// Formula and `Q` in the formula language.
    pub model: String,
    pub fitted: FittedGam,
}

impl ModelFile {
    pub fn adaptive_model(&self) -> Result<AdaptiveModel> {
        let m = AdaptiveModel::deserialize(&self.model).map_err(gamevo::Error::from)?;
        if m.formula != self.fitted.formula {
            return Err(CliError::Data(
                "model file: formula does not match its fit".into(),
            ));
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// A model file, or every `*/best_model.json` under a search directory in
/// name order.
pub fn model_files(path: &Path) -> Result<Vec<(PathBuf, ModelFile)>> {
    if path.is_file() {
        return Ok(vec![(path.to_path_buf(), ModelFile::read(path)?)]);
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(path).map_err(CliError::io(path))? {
        let p = entry.map_err(CliError::io(path))?.path().join(MODEL_FILE);
        if p.is_file() {
            found.push(p);
        }
    }
    if found.is_empty() {
        return Err(CliError::Data(format!(
            "no model files under {}",
            path.display()
        )));
    }
    found.sort();
    found
        .into_iter()
        .map(|p| ModelFile::read(&p).map(|m| (p, m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_write_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let r = write_atomic(&path, |w| {
            w.write_all(b"partial").unwrap();
            Err(CliError::Data("boom".into()))
        });
        assert!(r.is_err());
        assert!(!path.exists());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
        write_atomic(&path, |w| w.write_all(b"ok").map_err(CliError::io("x"))).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "ok");
    }
}
