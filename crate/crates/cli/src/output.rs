use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliResult;

/// Output directory plus the list of files written so far.
pub struct Sink {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    /// Header taken from the row type's field names.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        let text = String::from_utf8(bytes).expect("csv output is utf-8");
        let path = self.path(name);
        fs::write(path, &text)?;
        Ok(text)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<String> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        let path = self.path(name);
        fs::write(path, &text)?;
        Ok(text)
    }

    pub fn text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let path = self.path(name);
        fs::write(path, text)?;
        Ok(())
    }
}
