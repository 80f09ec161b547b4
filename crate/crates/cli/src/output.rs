use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bgprofile::report;
use serde::Serialize;

/// Files written by one command, removed again if the command fails.
pub struct Outputs {
    dir: PathBuf,
    created_dirs: Vec<PathBuf>,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let mut out = Self {
            dir: dir.clone(),
            created_dirs: Vec::new(),
            written: Vec::new(),
        };
        out.ensure_dir(&dir)?;
        Ok(out)
    }

    fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        missing.reverse();
        self.created_dirs.extend(missing);
        Ok(())
    }

    /// Register `name` under the output directory and return its path.
    pub fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            let parent = parent.to_path_buf();
            self.ensure_dir(&parent)?;
        }
        self.written.push(p.clone());
        Ok(p)
    }

    pub fn register(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<PathBuf> {
        let p = self.path(name)?;
        report::write_json(value, &p)?;
        Ok(p)
    }

    pub fn json_lines<'a, S: Serialize + 'a>(
        &mut self,
        name: &str,
        values: impl IntoIterator<Item = &'a S>,
    ) -> Result<PathBuf> {
        let p = self.path(name)?;
        report::write_json_lines(values, &p)?;
        Ok(p)
    }

    pub fn discard(self) {
        for p in self.written.iter().rev() {
            let _ = fs::remove_file(p);
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

/// Append one line to `run.log`, the only output that carries timestamps.
pub fn log_run(dir: &Path, line: &str) {
    use std::io::Write;
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    if fs::create_dir_all(dir).is_ok() {
        if let Ok(mut f) = fs::OpenOptions::new().create(true).append(true).open(dir.join("run.log")) {
            let _ = writeln!(f, "{secs:.3} {line}");
        }
    }
}
