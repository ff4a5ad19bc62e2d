//! Files appear complete or not at all: everything is written to a temporary
//! sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::{NamedTempFile, TempDir};

use crate::CliError;

fn parent_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = parent_of(path);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// A directory filled in a temporary location and moved to its final path by
/// [`Staging::commit`]. Dropping it without committing removes everything.
pub struct Staging {
    dir: TempDir,
    target: PathBuf,
}

/// Marker that identifies a directory previously written by `run`.
pub const RUN_MARKER: &str = "config.toml";

impl Staging {
    pub fn new(target: &Path) -> Result<Self, CliError> {
        if target.exists() && !target.join(RUN_MARKER).is_file() {
            return Err(CliError::Config(format!(
                "{} exists and does not look like a run directory; refusing to replace it",
                target.display()
            )));
        }
        let parent = parent_of(target);
        std::fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let dir = tempfile::Builder::new().prefix(".zorms-staging-").tempdir_in(&parent).map_err(|e| CliError::io(&parent, e))?;
        Ok(Self { dir, target: target.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))
    }

    /// Replaces any earlier run directory at the target.
    pub fn commit(self) -> Result<PathBuf, CliError> {
        if self.target.exists() {
            std::fs::remove_dir_all(&self.target).map_err(|e| CliError::io(&self.target, e))?;
        }
        let staged = self.dir.keep();
        std::fs::rename(&staged, &self.target).map_err(|e| CliError::io(&self.target, e))?;
        Ok(self.target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_staging_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        {
            let s = Staging::new(&target).unwrap();
            s.write("a.csv", b"x").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
    }

    #[test]
    fn commit_replaces_an_earlier_run_only() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("run");
        for content in [&b"1"[..], b"2"] {
            let s = Staging::new(&target).unwrap();
            s.write(RUN_MARKER, content).unwrap();
            s.commit().unwrap();
        }
        assert_eq!(std::fs::read(target.join(RUN_MARKER)).unwrap(), b"2");
        let other = root.path().join("other");
        std::fs::create_dir(&other).unwrap();
        assert!(Staging::new(&other).is_err());
    }
}
