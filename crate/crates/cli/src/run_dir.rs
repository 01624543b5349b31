//! Layout of a fit output directory.

use std::fs;
use std::path::{Path, PathBuf};

use allocore::state_io::load_state;
use allocore::ModelState;
use anyhow::{Context, Result};

pub const SAMPLES: &str = "samples";
pub const CHECKPOINT: &str = "checkpoint";
pub const CHAIN_LOG: &str = "chain.tsv";
pub const MASK: &str = "mask.txt";
pub const INCOMPLETE: &str = "INCOMPLETE";
pub const TRACE: &str = "trace.tsv";
pub const HISTOGRAMS: &str = "histograms.tsv";

pub fn sample_dir(run: &Path, iteration: u64) -> PathBuf {
    run.join(SAMPLES).join(format!("iter_{iteration:06}"))
}

pub fn is_incomplete(run: &Path) -> bool {
    run.join(INCOMPLETE).exists()
}

/// Saved sample directories ordered by iteration.
pub fn sample_dirs(run: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let dir = run.join(SAMPLES);
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let iteration = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("iter_"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(it) = iteration {
            out.push((it, path));
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_samples(run: &Path) -> Result<Vec<ModelState>> {
    sample_dirs(run)?
        .into_iter()
        .map(|(_, p)| load_state(&p).with_context(|| format!("loading sample {}", p.display())))
        .collect()
}

/// Wall time in the last chain-log row, if any.
pub fn last_wall_seconds(run: &Path) -> Option<f64> {
    let text = fs::read_to_string(run.join(CHAIN_LOG)).ok()?;
    text.lines().skip(1).last()?.rsplit('\t').next()?.parse().ok()
}
