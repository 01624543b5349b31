use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use allocore::eval::{mass_concentration, top_classes, DEFAULT_DISPLAY_THRESHOLD};
use allocore::io::read_vocab;
use allocore::state_io::load_state;
use anyhow::{anyhow, bail, Result};
use clap::Args;

use super::{create_dir, write};
use crate::manifest::{self, Manifest};
use crate::run_dir;

#[derive(Debug, Args)]
pub struct ClassesArgs {
    /// Fit output directory.
    #[arg(long)]
    pub run: PathBuf,

    /// Iteration of the sample to export; defaults to the last one.
    #[arg(long)]
    pub sample: Option<u64>,

    /// Number of classes.
    #[arg(long, default_value_t = 100)]
    pub n: usize,

    /// Smallest normalized weight listed per entity.
    #[arg(long, default_value_t = DEFAULT_DISPLAY_THRESHOLD)]
    pub threshold: f64,

    /// Directory with `vocab_<m>.txt` label files; defaults to the run directory.
    #[arg(long)]
    pub labels: Option<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,
}

fn load_labels(dir: &Path, shape: &[usize]) -> Result<Vec<Vec<String>>> {
    shape
        .iter()
        .enumerate()
        .map(|(m, &d)| {
            let path = dir.join(format!("vocab_{}.txt", m + 1));
            if !path.exists() {
                return Ok((1..=d).map(|i| i.to_string()).collect());
            }
            let labels = read_vocab(&path)?;
            if labels.len() != d {
                bail!("{} has {} labels for a mode of size {d}", path.display(), labels.len());
            }
            Ok(labels)
        })
        .collect()
}

pub fn run(args: ClassesArgs) -> Result<()> {
    let dirs = run_dir::sample_dirs(&args.run)?;
    let (iteration, dir) = match args.sample {
        Some(it) => dirs
            .into_iter()
            .find(|(i, _)| *i == it)
            .ok_or_else(|| anyhow!("{} has no sample at iteration {it}", args.run.display()))?,
        None => dirs
            .into_iter()
            .last()
            .ok_or_else(|| anyhow!("{} has no samples", args.run.display()))?,
    };
    let state = load_state(&dir)?;
    let labels = load_labels(args.labels.as_deref().unwrap_or(&args.run), &state.shape)?;
    let classes = top_classes(&state, args.n, args.threshold);
    let shares = mass_concentration(&state);

    create_dir(&args.out)?;
    let mut index = String::from("rank\tlocation\tlambda\tcumulative_share\n");
    for (r, class) in classes.iter().enumerate() {
        let loc: Vec<usize> = class.location.iter().map(|k| k + 1).collect();
        let _ = writeln!(
            index,
            "{}\t{}\t{:.6}\t{:.6}",
            r + 1,
            manifest::join(&loc, ","),
            class.value,
            shares[r]
        );
        let mut top = String::from("mode\tentity\tlabel\tweight\n");
        let mut raw = String::from("mode\tentity\tlabel\tvalue\n");
        for (m, col) in class.columns.iter().enumerate() {
            for &(d, w) in &col.top {
                let _ = writeln!(top, "{}\t{}\t{}\t{w:.6}", m + 1, d + 1, labels[m][d]);
            }
            for (d, v) in col.raw.iter().enumerate() {
                let _ = writeln!(raw, "{}\t{}\t{}\t{v:.6e}", m + 1, d + 1, labels[m][d]);
            }
        }
        write(&args.out.join(format!("class_{:03}.tsv", r + 1)), &top)?;
        write(&args.out.join(format!("class_{:03}_raw.tsv", r + 1)), &raw)?;
    }
    write(&args.out.join("index.tsv"), &index)?;
    println!(
        "{} classes from iteration {iteration} written to {}",
        classes.len(),
        args.out.display()
    );

    let mut mf = Manifest::new("classes");
    mf.set("run", args.run.display())
        .set("sample", iteration)
        .set("n", args.n)
        .set("threshold", args.threshold)
        .set(
            "labels",
            args.labels
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        )
        .set("out", args.out.display());
    mf.write(&args.out.join(manifest::FILE_NAME))
}
