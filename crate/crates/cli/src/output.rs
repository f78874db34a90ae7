use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunFile;
use crate::error::CliError;

/// Writes into the output directory through a temporary file that is
/// renamed over the target, so readers never see a partial file.
pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn write_with(
        &self,
        name: &str,
        fill: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
    ) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let io = |source| CliError::Io { path: path.clone(), source };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf)?;
            buf.flush().map_err(io)?;
        }
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Io {
                path: self.dir.join(name),
                source: e.into(),
            })?;
            w.write_all(b"\n").map_err(|source| CliError::Io { path: self.dir.join(name), source })
        })
    }

    /// `<stem>.run.json`, enough to repeat the run with `--config`.
    pub fn write_sidecar<T: Serialize>(&self, stem: &str, command: &str, seed: u64, config: &T) -> Result<PathBuf, CliError> {
        let run = RunFile {
            command: Some(command.into()),
            seed: Some(seed),
            config: serde_json::to_value(config).expect("configs always serialize"),
        };
        self.write_json(&format!("{stem}.run.json"), &run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overwrites_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(&dir.path().join("nested")).unwrap();
        out.write_with("a.txt", |w| w.write_all(b"one").map_err(|e| CliError::Config(e.to_string()))).unwrap();
        let p = out.write_with("a.txt", |w| w.write_all(b"two").map_err(|e| CliError::Config(e.to_string()))).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path().join("nested")).unwrap().count(), 1);
    }

    #[test]
    fn failed_fill_keeps_old_file() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(dir.path()).unwrap();
        out.write_with("a.txt", |w| w.write_all(b"old").map_err(|e| CliError::Config(e.to_string()))).unwrap();
        let err = out.write_with("a.txt", |_| Err(CliError::Config("boom".into())));
        assert!(err.is_err());
        assert_eq!(std::fs::read_to_string(dir.path().join("a.txt")).unwrap(), "old");
    }
}
