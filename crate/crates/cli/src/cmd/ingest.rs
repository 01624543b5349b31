use std::path::PathBuf;

use allocore::io::{write_coo, write_vocab};
use anyhow::Result;
use clap::Args;

use super::create_dir;
use crate::data::{describe, DataArgs};
use crate::manifest::{self, Manifest};

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Directory receiving `tensor.coo` and `vocab_<m>.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: IngestArgs) -> Result<()> {
    let ds = args.data.load()?;
    print!("{}", describe(&ds.tensor));
    let Some(out) = &args.out else {
        return Ok(());
    };
    create_dir(out)?;
    write_coo(&out.join("tensor.coo"), &ds.tensor)?;
    if let Some(vocabs) = &ds.vocabularies {
        for (m, labels) in vocabs.iter().enumerate() {
            write_vocab(&out.join(format!("vocab_{}.txt", m + 1)), labels)?;
        }
    }
    let mut mf = Manifest::new("ingest");
    args.data.record(&mut mf);
    mf.set("out", out.display())
        .set("shape", manifest::join(ds.tensor.shape(), ","))
        .set("nnz", ds.tensor.nnz());
    mf.write(&out.join(manifest::FILE_NAME))
}
