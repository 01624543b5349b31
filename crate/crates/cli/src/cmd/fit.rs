use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use allocore::gibbs::{ChainRecord, SampleSink, SWEEP_ORDER};
use allocore::io::{read_mask, write_mask, write_vocab};
use allocore::model::DEFAULT_CORE_CELL_LIMIT;
use allocore::state_io::{load_state_for, save_state};
use allocore::synth::recovery_trace;
use allocore::{
    make_fiber_mask, run_chain, split, ChainConfig, CoreMode, Error, FiberMask, Hyperparameters, ModelConfig,
    ModelState,
};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};

use super::{create_dir, write};
use crate::data::DataArgs;
use crate::manifest::{self, Manifest};
use crate::run_dir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Allocore,
    Cp,
    Tucker,
}

impl From<ModeArg> for CoreMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Allocore => CoreMode::Allocore,
            ModeArg::Cp => CoreMode::CpLocked,
            ModeArg::Tucker => CoreMode::TuckerDense,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 1.0)]
    pub a0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub e0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub f0: f64,
    /// Dirichlet concentration per component: one value, or one per mode.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub alpha0: Vec<f64>,
    /// Divide the concentration by K_m.
    #[arg(long)]
    pub alpha0_over_k: bool,
}

impl HyperArgs {
    fn build(&self) -> Hyperparameters {
        Hyperparameters {
            a0: self.a0,
            b0: self.b0,
            e0: self.e0,
            f0: self.f0,
            alpha0: self.alpha0.clone(),
            alpha0_over_k: self.alpha0_over_k,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MaskSpec {
    /// Mask file holding the heldout fibers.
    #[arg(long, conflicts_with_all = ["mask_frac", "mask_mode", "mask_seed"])]
    pub mask: Option<PathBuf>,

    /// Draw a mask holding out this fraction of fibers.
    #[arg(long = "mask-frac", requires = "mask_mode")]
    pub mask_frac: Option<f64>,

    /// Free mode of the drawn mask (1-based).
    #[arg(long = "mask-mode", requires = "mask_frac")]
    pub mask_mode: Option<usize>,

    #[arg(long = "mask-seed", default_value_t = 1)]
    pub mask_seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, value_enum, default_value_t = ModeArg::Allocore)]
    pub mode: ModeArg,

    /// Core budget; ignored in tucker mode.
    #[arg(long = "Q")]
    pub q: Option<usize>,

    /// Latent dimensions: one value for every mode, or one per mode.
    /// Defaults to Q in every mode.
    #[arg(long = "K", value_delimiter = ',')]
    pub k: Vec<usize>,

    #[command(flatten)]
    pub hyper: HyperArgs,

    #[arg(long, default_value_t = 1000)]
    pub burnin: u64,

    /// Iterations after burn-in.
    #[arg(long, default_value_t = 4000)]
    pub iters: u64,

    #[arg(long, default_value_t = 20)]
    pub thin: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub mask: MaskSpec,

    #[arg(long)]
    pub out: PathBuf,

    /// Continue an interrupted run in `--out` from its checkpoint.
    #[arg(long)]
    pub resume: bool,

    /// Largest dense core accepted in tucker mode.
    #[arg(long, default_value_t = DEFAULT_CORE_CELL_LIMIT)]
    pub core_cell_limit: u128,

    /// Chain-log and checkpoint interval; 0 means every `--thin` iterations.
    #[arg(long, default_value_t = 0)]
    pub log_every: u64,

    /// Stop after the checkpoint at or past this iteration.
    #[arg(long, hide = true)]
    pub stop_after: Option<u64>,
}

fn expand_dims(k: &[usize], n_modes: usize) -> Result<Vec<usize>> {
    match k.len() {
        1 => Ok(vec![k[0]; n_modes]),
        n if n == n_modes => Ok(k.to_vec()),
        n => bail!("--K needs 1 or {n_modes} values, got {n}"),
    }
}

fn initial_state(args: &FitArgs, shape: &[usize]) -> Result<ModelState> {
    let hyper = args.hyper.build();
    let mode = CoreMode::from(args.mode);
    let need_q = || args.q.ok_or_else(|| anyhow!("--Q is required in {mode} mode"));
    let (dims, budget) = match mode {
        CoreMode::Allocore if args.k.is_empty() => {
            return Ok(ModelState::init_canonical(shape, need_q()?, hyper, args.seed)?);
        }
        CoreMode::Allocore | CoreMode::CpLocked => {
            let q = need_q()?;
            let dims = if args.k.is_empty() {
                vec![q; shape.len()]
            } else {
                expand_dims(&args.k, shape.len())?
            };
            (dims, q)
        }
        CoreMode::TuckerDense => {
            if args.k.is_empty() {
                bail!("--K is required in tucker mode");
            }
            (expand_dims(&args.k, shape.len())?, 0)
        }
    };
    let config = ModelConfig {
        shape: shape.to_vec(),
        dims,
        budget,
        mode,
        hyper,
        core_cell_limit: args.core_cell_limit,
    };
    Ok(ModelState::init(&config, args.seed)?)
}

fn resolve_mask(spec: &MaskSpec, shape: &[usize]) -> Result<Option<(FiberMask, String)>> {
    if let Some(path) = &spec.mask {
        let mask = read_mask(path, shape)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(Some((mask, id)));
    }
    match (spec.mask_frac, spec.mask_mode) {
        (Some(frac), Some(mode)) => {
            if mode == 0 || mode > shape.len() {
                bail!("--mask-mode must lie in 1..={}", shape.len());
            }
            let mask = make_fiber_mask(shape, mode - 1, frac, spec.mask_seed)?;
            Ok(Some((mask, format!("mode{mode}_frac{frac}_seed{}", spec.mask_seed))))
        }
        _ => Ok(None),
    }
}

fn describe_run(args: &FitArgs, shape: &[usize], mask_id: Option<&str>) -> Manifest {
    let mut mf = Manifest::new("fit");
    args.data.record(&mut mf);
    let mode = CoreMode::from(args.mode);
    let h = &args.hyper;
    mf.set("shape", manifest::join(shape, ","))
        .set("mode", mode)
        .set("Q", args.q.map(|q| q.to_string()).unwrap_or_default())
        .set("K", manifest::join(&args.k, ","))
        .set("a0", h.a0)
        .set("b0", h.b0)
        .set("e0", h.e0)
        .set("f0", h.f0)
        .set("alpha0", manifest::join(&h.alpha0, ","))
        .set("alpha0_over_k", h.alpha0_over_k)
        .set("burnin", args.burnin)
        .set("iters", args.iters)
        .set("thin", args.thin)
        .set("seed", args.seed)
        .set(
            "mask",
            args.mask
                .mask
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        )
        .set(
            "mask_frac",
            args.mask.mask_frac.map(|f| f.to_string()).unwrap_or_default(),
        )
        .set(
            "mask_mode",
            args.mask.mask_mode.map(|m| m.to_string()).unwrap_or_default(),
        )
        .set("mask_seed", args.mask.mask_seed)
        .set("mask_id", mask_id.unwrap_or(""))
        .set("core_cell_limit", args.core_cell_limit)
        .set("sweep_order", SWEEP_ORDER)
        .set("log_every", args.log_every)
        .set("threads", rayon::current_num_threads())
        .set("out", args.out.display());
    mf
}

/// Writes samples, chain-log rows and checkpoints as the chain advances.
struct RunSink {
    dir: PathBuf,
    log: File,
    wall_offset: f64,
    stop_after: Option<u64>,
    saved: usize,
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl RunSink {
    fn checkpoint(&self, state: &ModelState) -> allocore::Result<()> {
        let target = self.dir.join(run_dir::CHECKPOINT);
        let tmp = self.dir.join(format!("{}.tmp", run_dir::CHECKPOINT));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| io_error(&tmp, e))?;
        }
        save_state(&tmp, state)?;
        if target.exists() {
            fs::remove_dir_all(&target).map_err(|e| io_error(&target, e))?;
        }
        fs::rename(&tmp, &target).map_err(|e| io_error(&target, e))
    }
}

impl SampleSink for RunSink {
    fn on_sample(&mut self, iteration: u64, state: &ModelState) -> allocore::Result<()> {
        save_state(&run_dir::sample_dir(&self.dir, iteration), state)?;
        self.saved += 1;
        Ok(())
    }

    fn on_record(&mut self, record: &ChainRecord, state: &ModelState) -> allocore::Result<()> {
        let k: Vec<String> = record.dims.k_eff.iter().map(|k| k.to_string()).collect();
        let line = format!(
            "{}\t{:.6}\t{}\t{}\t{:.3}\n",
            record.iteration,
            record.loglik,
            record.dims.q_eff,
            k.join("\t"),
            record.wall_seconds + self.wall_offset
        );
        let path = self.dir.join(run_dir::CHAIN_LOG);
        self.log
            .write_all(line.as_bytes())
            .and_then(|_| self.log.flush())
            .map_err(|e| io_error(&path, e))?;
        log::info!(
            "iteration {}: loglik {:.2}, Q_eff {}, K_eff {}",
            record.iteration,
            record.loglik,
            record.dims.q_eff,
            k.join(",")
        );
        self.checkpoint(state)?;
        match self.stop_after {
            Some(stop) if record.iteration >= stop => Err(Error::Interrupted(record.iteration)),
            _ => Ok(()),
        }
    }
}

fn chain_log_header(n_modes: usize) -> String {
    let k: Vec<String> = (1..=n_modes).map(|m| format!("k_eff_{m}")).collect();
    format!("iteration\tloglik\tq_eff\t{}\twall_seconds\n", k.join("\t"))
}

/// Drop rows past `iteration` and return the last retained wall time.
fn truncate_chain_log(path: &Path, iteration: u64, n_modes: usize) -> Result<f64> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let mut out = chain_log_header(n_modes);
    let mut wall = 0.0;
    for line in text.lines().skip(1) {
        let mut fields = line.split('\t');
        let Some(Ok(it)) = fields.next().map(str::parse::<u64>) else {
            continue;
        };
        if it <= iteration {
            out.push_str(line);
            out.push('\n');
            wall = line.rsplit('\t').next().and_then(|w| w.parse().ok()).unwrap_or(wall);
        }
    }
    write(path, &out)?;
    Ok(wall)
}

pub fn run(args: FitArgs) -> Result<()> {
    let chain = ChainConfig {
        burn_in: args.burnin,
        total: args.iters,
        thin: args.thin,
        seed: args.seed,
        log_every: args.log_every,
        ..ChainConfig::default()
    };
    chain.validate()?;
    let ds = args.data.load()?;
    let shape = ds.tensor.shape().to_vec();
    let out = &args.out;
    let manifest_path = out.join(manifest::FILE_NAME);
    let existing = manifest_path.exists();

    if existing && !args.resume {
        bail!(
            "{} already holds a run; pass --resume or choose another --out",
            out.display()
        );
    }
    let resuming = existing && args.resume;
    if args.resume && !existing {
        log::warn!("nothing to resume in {}; starting a new run", out.display());
    }

    let (mask, mask_id) = if resuming {
        let path = out.join(run_dir::MASK);
        let mask = path.exists().then(|| read_mask(&path, &shape)).transpose()?;
        let id = Manifest::read(&manifest_path)?.get("mask_id").unwrap_or("").to_string();
        (mask, id)
    } else {
        match resolve_mask(&args.mask, &shape)? {
            Some((m, id)) => (Some(m), id),
            None => (None, String::new()),
        }
    };
    let mf = describe_run(&args, &shape, (!mask_id.is_empty()).then_some(mask_id.as_str()));

    let checkpoint = out.join(run_dir::CHECKPOINT);
    let log_path = out.join(run_dir::CHAIN_LOG);
    let (init, wall_offset) = if resuming {
        let previous = Manifest::read(&manifest_path)?;
        let diff = previous.differences(&mf);
        if !diff.is_empty() {
            bail!(
                "--resume with settings that differ from the stored run:\n  {}",
                diff.join("\n  ")
            );
        }
        if !run_dir::is_incomplete(out) {
            println!("{} is already complete", out.display());
            return Ok(());
        }
        if checkpoint.is_dir() {
            let state = load_state_for(&checkpoint, &shape).context("loading checkpoint")?;
            let wall = truncate_chain_log(&log_path, state.rng.iteration, shape.len())?;
            log::info!("resuming from iteration {}", state.rng.iteration);
            (state, wall)
        } else {
            write(&log_path, &chain_log_header(shape.len()))?;
            (initial_state(&args, &shape)?, 0.0)
        }
    } else {
        let init = initial_state(&args, &shape)?;
        create_dir(out)?;
        write(&out.join(run_dir::INCOMPLETE), "")?;
        mf.write(&manifest_path)?;
        if let Some(m) = &mask {
            write_mask(&out.join(run_dir::MASK), m)?;
        }
        if let Some(vocabs) = &ds.vocabularies {
            for (m, labels) in vocabs.iter().enumerate() {
                write_vocab(&out.join(format!("vocab_{}.txt", m + 1)), labels)?;
            }
        }
        write(&log_path, &chain_log_header(shape.len()))?;
        (init, 0.0)
    };

    let train = match &mask {
        Some(m) => split(&ds.tensor, m)?.0,
        None => ds.tensor.clone(),
    };
    let log = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let mut sink = RunSink {
        dir: out.clone(),
        log,
        wall_offset,
        stop_after: args.stop_after,
        saved: 0,
    };
    match run_chain(&train, mask.as_ref(), init, &chain, &mut sink) {
        Ok(_) => {}
        Err(Error::Interrupted(it)) => {
            println!("stopped at iteration {it}; rerun with --resume to continue");
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    }

    let samples = run_dir::load_samples(out)?;
    let trace = recovery_trace(&samples);
    write(&out.join(run_dir::TRACE), &trace.trace_table())?;
    write(&out.join(run_dir::HISTOGRAMS), &trace.histogram_table())?;
    fs::remove_file(out.join(run_dir::INCOMPLETE)).context("clearing the incomplete marker")?;
    println!(
        "{} samples in {} (median Q_eff {})",
        samples.len(),
        out.join(run_dir::SAMPLES).display(),
        trace.median_q()
    );
    Ok(())
}
