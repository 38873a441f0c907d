use std::path::{Path, PathBuf};

use super::{io_err, ExperimentConfig, Result};
use crate::io::write_atomic;

/// Environment variable naming the store root.
pub const STORE_ENV: &str = "PHYSLANG_STORE";

/// Append-only directory of run artifacts: one subdirectory per condition,
/// per-seed files inside it, and shared pretrained oracles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Store { root })
    }

    /// `$PHYSLANG_STORE` if set, else `fallback`.
    pub fn from_env(fallback: impl Into<PathBuf>) -> Result<Self> {
        match std::env::var_os(STORE_ENV) {
            Some(p) if !p.is_empty() => Store::open(PathBuf::from(p)),
            _ => Store::open(fallback),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.root.join(cfg.run_dir_name())
    }

    pub fn oracle_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.root.join("oracles").join(cfg.oracle_hash())
    }

    pub fn write_text(&self, path: &Path, text: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        write_atomic(path, text.as_bytes()).map_err(io_err(path))
    }

    pub fn read_text(&self, path: &Path) -> Option<String> {
        std::fs::read_to_string(path).ok()
    }

    /// Condition directories currently in the store.
    pub fn run_dirs(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let path = entry.map_err(io_err(&self.root))?.path();
            if path.is_dir() && path.join("config.toml").exists() {
                out.push(path);
            }
        }
        out.sort();
        Ok(out)
    }
}
