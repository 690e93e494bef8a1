//! Tracks files a command writes so a failed run leaves nothing half-written.

use std::path::{Path, PathBuf};

use crate::failure::{CliResult, Failure};

fn resolved(path: &Path) -> PathBuf {
    if let Ok(p) = path.canonicalize() {
        return p;
    }
    match (path.parent(), path.file_name()) {
        (Some(parent), Some(name)) if !parent.as_os_str().is_empty() => {
            parent.canonicalize().map(|p| p.join(name)).unwrap_or_else(|_| path.to_path_buf())
        }
        _ => std::env::current_dir().map(|d| d.join(path)).unwrap_or_else(|_| path.to_path_buf()),
    }
}

#[derive(Debug)]
pub struct Outputs {
    inputs: Vec<PathBuf>,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new(inputs: &[&Path]) -> Self {
        Self {
            inputs: inputs.iter().map(|p| resolved(p)).collect(),
            files: Vec::new(),
            dirs: Vec::new(),
            committed: false,
        }
    }

    fn check(&self, path: &Path) -> CliResult<()> {
        let r = resolved(path);
        if self.inputs.iter().any(|i| *i == r || r.starts_with(i) && i.is_dir()) {
            return Err(Failure::usage(format!("output {} would overwrite an input", path.display())));
        }
        Ok(())
    }

    fn make_dirs(&mut self, dir: &Path) -> CliResult<()> {
        if dir.as_os_str().is_empty() || dir.exists() {
            return Ok(());
        }
        if let Some(parent) = dir.parent() {
            self.make_dirs(parent)?;
        }
        std::fs::create_dir(dir)?;
        self.dirs.push(dir.to_path_buf());
        Ok(())
    }

    /// Registers a file about to be written and creates its parent directories.
    pub fn claim(&mut self, path: &Path) -> CliResult<PathBuf> {
        self.check(path)?;
        if let Some(parent) = path.parent() {
            self.make_dirs(parent)?;
        }
        self.files.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    /// Registers an output directory, creating it if needed.
    pub fn claim_dir(&mut self, dir: &Path) -> CliResult<PathBuf> {
        self.check(dir)?;
        self.make_dirs(dir)?;
        Ok(dir.to_path_buf())
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    /// Keeps everything written so far.
    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            if f.exists() {
                log::info!("removing partial output {}", f.display());
                let _ = std::fs::remove_file(f);
            }
        }
        for d in self.dirs.iter().rev() {
            let _ = std::fs::remove_dir_all(d);
        }
    }
}
