pub mod classes;
pub mod eval;
pub mod fit;
pub mod ingest;
pub mod mask;
pub mod synth;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
