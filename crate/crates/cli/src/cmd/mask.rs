use std::fmt::Write as _;
use std::path::PathBuf;

use allocore::io::write_mask;
use allocore::{make_fiber_mask, split};
use anyhow::{bail, Result};
use clap::Args;

use super::{create_dir, write};
use crate::data::DataArgs;
use crate::manifest::{self, Manifest};

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Held-out fraction of fibers.
    #[arg(long = "mask-frac", default_value_t = 0.01)]
    pub mask_frac: f64,

    /// Free mode of the masked fibers (1-based).
    #[arg(long = "mask-mode")]
    pub mask_mode: usize,

    /// Seed of the first mask; mask i uses this plus i - 1.
    #[arg(long = "mask-seed", default_value_t = 1)]
    pub mask_seed: u64,

    /// Number of masks to draw.
    #[arg(long, default_value_t = 1)]
    pub count: usize,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn mask_file_name(i: usize, count: usize) -> String {
    let width = count.to_string().len().max(2);
    format!("mask_{:0width$}.txt", i)
}

pub fn run(args: MaskArgs) -> Result<()> {
    if args.count == 0 {
        bail!("--count must be at least 1");
    }
    let ds = args.data.load()?;
    let shape = ds.tensor.shape();
    if args.mask_mode == 0 || args.mask_mode > shape.len() {
        bail!("--mask-mode must lie in 1..={}", shape.len());
    }
    create_dir(&args.out)?;
    let mut summary = String::from("file\tseed\tstems\theldout_cells\theldout_positive\theldout_total\ttrain_nnz\n");
    for i in 1..=args.count {
        let seed = args.mask_seed + (i as u64 - 1);
        let mask = make_fiber_mask(shape, args.mask_mode - 1, args.mask_frac, seed)?;
        let (train, heldout) = split(&ds.tensor, &mask)?;
        let name = mask_file_name(i, args.count);
        write_mask(&args.out.join(&name), &mask)?;
        let _ = writeln!(
            summary,
            "{name}\t{seed}\t{}\t{}\t{}\t{}\t{}",
            mask.stems().len(),
            heldout.len(),
            heldout.positive().len(),
            heldout.total(),
            train.nnz()
        );
    }
    print!("{summary}");
    write(&args.out.join("summary.tsv"), &summary)?;
    let mut mf = Manifest::new("mask");
    args.data.record(&mut mf);
    mf.set("mask_frac", args.mask_frac)
        .set("mask_mode", args.mask_mode)
        .set("mask_seed", args.mask_seed)
        .set("count", args.count)
        .set("out", args.out.display());
    mf.write(&args.out.join(manifest::FILE_NAME))
}
