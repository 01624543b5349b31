use std::path::PathBuf;

use allocore::io::write_coo;
use allocore::state_io::save_state;
use allocore::synth::{generate, SyntheticConfig};
use anyhow::Result;
use clap::Args;

use super::{create_dir, write};
use crate::manifest::{self, Manifest};

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Tensor shape; defaults to 40,40,5.
    #[arg(long, value_delimiter = ',')]
    pub shape: Vec<usize>,

    /// True latent dimensions; defaults to 4,4,2.
    #[arg(long = "true-K", value_delimiter = ',')]
    pub true_k: Vec<usize>,

    /// True core budget; defaults to 6.
    #[arg(long = "true-Q")]
    pub true_q: Option<usize>,

    #[arg(long)]
    pub column_scale: Option<f64>,

    #[arg(long)]
    pub column_concentration: Option<f64>,

    #[arg(long)]
    pub lambda_shape: Option<f64>,

    #[arg(long)]
    pub lambda_rate: Option<f64>,

    /// Draw every factor column at random instead of fixing the last mode.
    #[arg(long)]
    pub no_fixed_columns: bool,
}

fn build_config(args: &SynthArgs) -> SyntheticConfig {
    let mut c = SyntheticConfig::default();
    let reshaped = !args.shape.is_empty() || !args.true_k.is_empty();
    if !args.shape.is_empty() {
        c.shape = args.shape.clone();
    }
    if !args.true_k.is_empty() {
        c.true_dims = args.true_k.clone();
    }
    if let Some(q) = args.true_q {
        c.true_budget = q;
    }
    if let Some(v) = args.column_scale {
        c.column_scale = v;
    }
    if let Some(v) = args.column_concentration {
        c.column_concentration = v;
    }
    if let Some(v) = args.lambda_shape {
        c.lambda_shape = v;
    }
    if let Some(v) = args.lambda_rate {
        c.lambda_rate = v;
    }
    if args.no_fixed_columns || (reshaped && c.fixed_columns.len() != c.shape.len()) {
        c.fixed_columns.clear();
    } else if reshaped {
        let fits = c.fixed_columns.iter().enumerate().all(|(m, f)| {
            f.as_ref()
                .is_none_or(|cols| cols.len() == c.true_dims[m] && cols.iter().all(|col| col.len() == c.shape[m]))
        });
        if !fits {
            c.fixed_columns.clear();
        }
    }
    c
}

pub fn run(args: SynthArgs) -> Result<()> {
    let config = build_config(&args);
    let (tensor, truth) = generate(&config, args.seed)?;
    create_dir(&args.out)?;
    write_coo(&args.out.join("tensor.coo"), &tensor)?;
    save_state(&args.out.join("truth"), &truth.state)?;
    let echo = format!("seed={}\n{}", args.seed, config.echo());
    write(&args.out.join("config.txt"), &echo)?;
    let dims = format!(
        "q_eff={}\nk_eff={}\n",
        truth.dims.q_eff,
        manifest::join(&truth.dims.k_eff, ",")
    );
    write(&args.out.join("truth_dims.txt"), &dims)?;
    print!("{echo}{dims}nnz={}\n", tensor.nnz());

    let mut mf = Manifest::new("synth");
    mf.set("seed", args.seed).set("out", args.out.display());
    for line in config.echo().lines() {
        if let Some((k, v)) = line.split_once('=') {
            mf.set(k, v);
        }
    }
    mf.write(&args.out.join(manifest::FILE_NAME))
}
