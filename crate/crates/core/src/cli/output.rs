//! All-or-nothing file output: every artifact is staged in a temporary file
//! next to its destination and only renamed into place once all of them
//! have been written.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::Result;

#[derive(Default)]
pub struct Outputs {
    staged: Vec<(PathBuf, NamedTempFile)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stages one file, written by `write`.
    pub fn add(&mut self, path: impl AsRef<Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = path.as_ref().to_path_buf();
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut tmp = tempfile::Builder::new().prefix(".tallglmm-").tempfile_in(dir)?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            write(&mut buf)?;
            buf.flush()?;
        }
        self.staged.push((path, tmp));
        Ok(())
    }

    pub fn add_bytes(&mut self, path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        self.add(path, |w| Ok(w.write_all(bytes)?))
    }

    pub fn add_json<T: serde::Serialize>(&mut self, path: impl AsRef<Path>, value: &T) -> Result<()> {
        self.add(path, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            Ok(w.write_all(b"\n")?)
        })
    }

    pub fn paths(&self) -> Vec<&Path> {
        self.staged.iter().map(|(p, _)| p.as_path()).collect()
    }

    /// Moves every staged file into place. If one rename fails, the files
    /// already moved are removed again.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut done: Vec<PathBuf> = Vec::new();
        for (path, tmp) in self.staged {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e.error.into());
            }
            done.push(path);
        }
        Ok(done)
    }
}
