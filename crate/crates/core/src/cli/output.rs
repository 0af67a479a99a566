//! All-or-nothing output: files are staged as temporaries in the target
//! directory and renamed into place only once every one has been written.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{Error, Result};

pub(crate) struct OutputSet {
    dir: PathBuf,
    files: Vec<(PathBuf, String)>,
}

fn io_err(what: &str, path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("cannot {what} {}: {e}", path.display()))
}

impl OutputSet {
    pub(crate) fn new(dir: &Path) -> Result<Self> {
        let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub(crate) fn add(&mut self, name: PathBuf, contents: String) {
        self.files.push((name, contents));
    }

    pub(crate) fn commit(self) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| io_err("create", &self.dir, e))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, contents) in &self.files {
            let mut tmp = NamedTempFile::new_in(&self.dir).map_err(|e| io_err("stage output in", &self.dir, e))?;
            tmp.write_all(contents.as_bytes())
                .and_then(|_| tmp.flush())
                .map_err(|e| io_err("write", tmp.path(), e))?;
            staged.push((tmp, self.dir.join(name)));
        }
        for (tmp, dest) in staged {
            tmp.persist(&dest).map_err(|e| io_err("write", &dest, e.error))?;
        }
        Ok(())
    }
}
