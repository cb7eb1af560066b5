//! All-or-nothing output: files are rendered in memory, written under
//! temporary names, and renamed into place only once every write succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut staged = Vec::with_capacity(self.files.len());
        let result = (|| {
            for (name, bytes) in &self.files {
                let tmp = dir.join(format!(".{name}.partial"));
                staged.push(tmp.clone());
                fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            for tmp in &staged {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        let mut written = Vec::with_capacity(self.files.len());
        for ((name, _), tmp) in self.files.iter().zip(&staged) {
            let dst = dir.join(name);
            fs::rename(tmp, &dst).with_context(|| format!("moving output to {}", dst.display()))?;
            written.push(dst);
        }
        Ok(written)
    }
}
