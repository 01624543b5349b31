use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use allocore::eval::{ppd, ppd_constant_baseline, ppd_positive};
use allocore::io::{read_coo, read_mask};
use allocore::{split, FiberMask, ModelState};
use anyhow::{anyhow, bail, Context, Result};
use clap::Args;

use super::write;
use crate::manifest::{self, Manifest};
use crate::run_dir;

const HEADER: &str = "dataset\tmode\tQ\tK\tseed\tmask\tS\tppd_full\tppd_positive\tbaseline\twall_seconds\trun";
const KEY_FIELDS: usize = 6;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Fit output directories.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,

    /// Results table; rows are merged into it.
    #[arg(long)]
    pub out: PathBuf,

    /// Dataset name for the rows; defaults to the data file stem.
    #[arg(long)]
    pub dataset: Option<String>,

    /// Full tensor; defaults to the COO file recorded in each run.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Heldout mask; defaults to the mask stored in each run.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

struct Row {
    key: Vec<String>,
    q: usize,
    line: String,
}

fn parse_row(line: &str) -> Option<Row> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < KEY_FIELDS {
        return None;
    }
    Some(Row {
        key: fields[..KEY_FIELDS].iter().map(|s| s.to_string()).collect(),
        q: fields[2].parse().ok()?,
        line: line.to_string(),
    })
}

fn fmt_metric(v: Result<f64, allocore::Error>) -> String {
    match v {
        Ok(x) => format!("{x:.6}"),
        Err(e) => {
            log::warn!("{e}");
            "nan".into()
        }
    }
}

fn evaluate(args: &EvalArgs, run: &Path, samples: &[ModelState]) -> Result<Row> {
    let mf = Manifest::read(&run.join(manifest::FILE_NAME))?;
    let data_path = match &args.data {
        Some(p) => p.clone(),
        None => {
            if mf.get("format") != Some("coo") {
                bail!(
                    "{} was fitted from an event log; pass --data with its COO tensor",
                    run.display()
                );
            }
            PathBuf::from(
                mf.get("data")
                    .ok_or_else(|| anyhow!("{} has no data entry", run.display()))?,
            )
        }
    };
    let tensor = read_coo(&data_path)?;
    let (mask, mask_id): (FiberMask, String) = match &args.mask {
        Some(p) => (
            read_mask(p, tensor.shape())?,
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        ),
        None => {
            let p = run.join(run_dir::MASK);
            if !p.exists() {
                bail!("{} was fitted without a mask; pass --mask", run.display());
            }
            (
                read_mask(&p, tensor.shape())?,
                mf.get("mask_id").unwrap_or("").to_string(),
            )
        }
    };
    let (train, heldout) = split(&tensor, &mask)?;
    let first = &samples[0];
    let dataset = args.dataset.clone().unwrap_or_else(|| {
        data_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let key = vec![
        dataset,
        first.core.mode.to_string(),
        first.budget().to_string(),
        manifest::join(&first.dims, ","),
        first.rng.seed.to_string(),
        mask_id,
    ];
    let wall = run_dir::last_wall_seconds(run).map_or("nan".to_string(), |w| format!("{w:.3}"));
    let line = format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        key.join("\t"),
        samples.len(),
        fmt_metric(ppd(samples, &heldout)),
        fmt_metric(ppd_positive(samples, &heldout)),
        fmt_metric(ppd_constant_baseline(&train, &heldout)),
        wall,
        run.display()
    );
    Ok(Row {
        key,
        q: first.budget(),
        line,
    })
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut problems = Vec::new();
    let mut loaded = Vec::new();
    for run in &args.runs {
        if run_dir::is_incomplete(run) {
            problems.push(format!("{} (incomplete)", run.display()));
            continue;
        }
        let samples = run_dir::load_samples(run)?;
        if samples.is_empty() {
            problems.push(format!("{} (no samples)", run.display()));
            continue;
        }
        loaded.push((run, samples));
    }
    if !problems.is_empty() {
        bail!("runs without usable samples:\n  {}", problems.join("\n  "));
    }

    let mut rows: BTreeMap<Vec<String>, Row> = BTreeMap::new();
    if args.out.exists() {
        let text = fs::read_to_string(&args.out).with_context(|| format!("reading {}", args.out.display()))?;
        for row in text.lines().skip(1).filter_map(parse_row) {
            rows.insert(row.key.clone(), row);
        }
    }
    let mut added = 0;
    for (run, samples) in loaded {
        let row = evaluate(&args, run, &samples)?;
        println!("{}", row.line);
        if !rows.contains_key(&row.key) {
            rows.insert(row.key.clone(), row);
            added += 1;
        }
    }
    let mut ordered: Vec<&Row> = rows.values().collect();
    ordered.sort_by(|a, b| a.q.cmp(&b.q).then_with(|| a.key.cmp(&b.key)));
    let mut table = format!("{HEADER}\n");
    for row in ordered {
        table.push_str(&row.line);
        table.push('\n');
    }
    write(&args.out, &table)?;
    log::info!("{added} new rows in {}", args.out.display());

    let mut mf = Manifest::new("eval");
    mf.set(
        "runs",
        args.runs
            .iter()
            .map(|r| r.display().to_string())
            .collect::<Vec<_>>()
            .join(","),
    )
    .set("out", args.out.display())
    .set("dataset", args.dataset.as_deref().unwrap_or(""))
    .set(
        "data",
        args.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
    )
    .set(
        "mask",
        args.mask.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
    );
    let mut name = args.out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.txt");
    mf.write(&args.out.with_file_name(name))
}
