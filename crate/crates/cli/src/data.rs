//! Dataset flags shared by the commands that read a tensor.

use std::path::{Path, PathBuf};

use allocore::events::{load_events, EventSchema, ModeColumn, TimeBinning};
use allocore::io::{read_coo, read_vocab};
use allocore::SparseCountTensor;
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};

use crate::manifest::{join, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Coo,
    Events,
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Coo => "coo",
            Format::Events => "events",
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Tensor file: COO text or a delimited event log.
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Coo)]
    pub format: Format,

    /// Event columns, one per tensor mode, in mode order.
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,

    /// Event column holding a per-row count.
    #[arg(long)]
    pub count_column: Option<String>,

    #[arg(long, default_value_t = ',')]
    pub delimiter: char,

    /// Event column binned over time.
    #[arg(long)]
    pub time_column: Option<String>,

    /// `monthly` for calendar dates, or an integer bin width.
    #[arg(long, default_value = "monthly")]
    pub time_bin: String,

    /// First bin: `YYYY-MM` for monthly bins, an integer origin otherwise.
    #[arg(long)]
    pub time_start: Option<String>,

    /// Number of time bins.
    #[arg(long)]
    pub time_bins: Option<usize>,

    /// Declared vocabulary for a mode, as `MODE=FILE` with a 1-based mode.
    #[arg(long = "vocab")]
    pub vocab: Vec<String>,
}

pub struct Dataset {
    pub tensor: SparseCountTensor,
    pub vocabularies: Option<Vec<Vec<String>>>,
}

impl DataArgs {
    pub fn load(&self) -> Result<Dataset> {
        match self.format {
            Format::Coo => {
                if !self.columns.is_empty() {
                    bail!("--columns only applies to --format events");
                }
                let tensor = read_coo(&self.data)?;
                Ok(Dataset {
                    tensor,
                    vocabularies: None,
                })
            }
            Format::Events => {
                let schema = self.schema()?;
                let ingested = load_events(&self.data, &schema)?;
                Ok(Dataset {
                    tensor: ingested.tensor,
                    vocabularies: Some(ingested.vocabularies),
                })
            }
        }
    }

    fn schema(&self) -> Result<EventSchema> {
        if self.columns.is_empty() {
            bail!("--format events needs --columns naming one column per mode");
        }
        if !self.delimiter.is_ascii() {
            bail!("--delimiter must be a single ASCII character");
        }
        let mut modes: Vec<ModeColumn> = self.columns.iter().map(ModeColumn::named).collect();
        if let Some(tc) = &self.time_column {
            let m = modes
                .iter_mut()
                .find(|c| &c.column == tc)
                .ok_or_else(|| anyhow!("--time-column {tc:?} is not listed in --columns"))?;
            m.binning = Some(self.binning()?);
        }
        for spec in &self.vocab {
            let (mode, file) = spec
                .split_once('=')
                .ok_or_else(|| anyhow!("--vocab expects MODE=FILE, got {spec:?}"))?;
            let mode: usize = mode.parse().with_context(|| format!("--vocab mode {mode:?}"))?;
            if mode == 0 || mode > modes.len() {
                bail!("--vocab mode {mode} out of range 1..={}", modes.len());
            }
            modes[mode - 1].vocabulary = Some(read_vocab(Path::new(file))?);
        }
        Ok(EventSchema {
            delimiter: self.delimiter as u8,
            modes,
            count_column: self.count_column.clone(),
        })
    }

    fn binning(&self) -> Result<TimeBinning> {
        if self.time_bin == "monthly" {
            let start = match &self.time_start {
                None => None,
                Some(s) => {
                    let (y, m) = s
                        .split_once('-')
                        .ok_or_else(|| anyhow!("--time-start must be YYYY-MM, got {s:?}"))?;
                    Some((y.parse()?, m.parse()?))
                }
            };
            return Ok(TimeBinning::Monthly {
                start,
                months: self.time_bins,
            });
        }
        let width: i64 = self.time_bin.parse().map_err(|_| {
            anyhow!(
                "--time-bin must be `monthly` or a positive integer, got {:?}",
                self.time_bin
            )
        })?;
        if width <= 0 {
            bail!("--time-bin width must be positive");
        }
        let origin = self
            .time_start
            .as_deref()
            .map(str::parse)
            .transpose()
            .context("--time-start must be an integer for integer bins")?;
        Ok(TimeBinning::Integer {
            width,
            origin,
            bins: self.time_bins,
        })
    }

    pub fn record(&self, m: &mut Manifest) {
        m.set("data", self.data.display());
        m.set("format", self.format);
        if self.format == Format::Events {
            m.set("columns", self.columns.join(","));
            m.set("count_column", self.count_column.as_deref().unwrap_or(""));
            m.set("delimiter", self.delimiter);
            m.set("time_column", self.time_column.as_deref().unwrap_or(""));
            m.set("time_bin", &self.time_bin);
            m.set("time_start", self.time_start.as_deref().unwrap_or(""));
            m.set("time_bins", self.time_bins.map(|b| b.to_string()).unwrap_or_default());
            m.set("vocab", self.vocab.join(";"));
        }
    }
}

pub fn describe(tensor: &SparseCountTensor) -> String {
    format!(
        "shape: {}\nnnz: {}\ntotal: {}\ndensity: {:.4}\n",
        join(tensor.shape(), " x "),
        tensor.nnz(),
        tensor.total(),
        tensor.density()
    )
}
