//! Event-log ingestion: delimiter-separated rows, one column per mode plus an
//! optional count column, aggregated into a sparse count tensor.

use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::tensor::SparseCountTensor;

/// How a time column is turned into contiguous bins.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeBinning {
    /// Integer time stamps grouped in bins of `width`. `origin` defaults to the
    /// smallest value seen, `bins` to however many are needed.
    Integer {
        width: i64,
        origin: Option<i64>,
        bins: Option<usize>,
    },
    /// Calendar dates (`YYYY-MM-DD`, `YYYY-MM` or `YYYYMMDD`) grouped by month.
    Monthly {
        start: Option<(i32, u32)>,
        months: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeColumn {
    pub column: String,
    /// Declared labels. When absent the vocabulary is built from the distinct
    /// values in order of first appearance.
    pub vocabulary: Option<Vec<String>>,
    pub binning: Option<TimeBinning>,
}

impl ModeColumn {
    pub fn named(column: impl Into<String>) -> Self {
        Self {
            column: column.into(),
            vocabulary: None,
            binning: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSchema {
    pub delimiter: u8,
    pub modes: Vec<ModeColumn>,
    /// Column holding a per-row count; each row counts once when absent.
    pub count_column: Option<String>,
}

#[derive(Debug, Clone)]
pub struct IngestedTensor {
    pub tensor: SparseCountTensor,
    /// One label list per mode, indexed by 0-based coordinate.
    pub vocabularies: Vec<Vec<String>>,
}

pub fn load_events(path: &Path, schema: &EventSchema) -> Result<IngestedTensor> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_events_from(file, &path.display().to_string(), schema)
}

pub fn load_events_from<R: std::io::Read>(reader: R, name: &str, schema: &EventSchema) -> Result<IngestedTensor> {
    if schema.modes.is_empty() {
        return Err(Error::Schema("at least one mode column is required".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse(name, 1, e.to_string()))?.clone();
    let find = |col: &str| {
        headers.iter().position(|h| h == col).ok_or_else(|| {
            Error::Schema(format!(
                "column {col:?} not found in {name} (have: {})",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let mode_cols: Vec<usize> = schema.modes.iter().map(|m| find(&m.column)).collect::<Result<_>>()?;
    let count_col = schema.count_column.as_deref().map(find).transpose()?;

    let m = schema.modes.len();
    let mut raw: Vec<(usize, Vec<String>, u64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(name, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let values: Vec<String> = mode_cols.iter().map(|&c| rec[c].to_string()).collect();
        let y = match count_col {
            Some(c) => rec[c]
                .parse::<u64>()
                .map_err(|_| Error::parse(name, line, format!("count {:?} is not a non-negative integer", &rec[c])))?,
            None => 1,
        };
        raw.push((line, values, y));
    }

    let mut coders: Vec<ModeCoder> = schema
        .modes
        .iter()
        .enumerate()
        .map(|(k, spec)| ModeCoder::new(spec, raw.iter().map(move |r| (r.0, r.1[k].as_str())), name))
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(raw.len());
    for (line, values, y) in &raw {
        let mut cell = Vec::with_capacity(m);
        for (k, v) in values.iter().enumerate() {
            cell.push(coders[k].encode(v, *line, name)?);
        }
        entries.push((cell, *y));
    }
    let shape: Vec<usize> = coders.iter().map(|c| c.len().max(1)).collect();
    let vocabularies = coders.iter_mut().map(|c| std::mem::take(&mut c.labels)).collect();
    let tensor = SparseCountTensor::from_entries(shape, entries)?;
    log::info!("ingested {}: shape {:?}, nnz {}", name, tensor.shape(), tensor.nnz());
    Ok(IngestedTensor { tensor, vocabularies })
}

struct ModeCoder {
    labels: Vec<String>,
    lookup: HashMap<String, usize>,
    /// Declared dimensionality; unseen values are rejected rather than added.
    fixed: bool,
    binning: Option<ResolvedBinning>,
}

enum ResolvedBinning {
    Integer { width: i64, origin: i64, bins: usize },
    Monthly { start: i64, months: usize },
}

fn parse_month(s: &str) -> Option<i64> {
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
        .or_else(|_| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d"))
        .ok()?;
    Some(date.year() as i64 * 12 + date.month0() as i64)
}

fn month_label(idx: i64) -> String {
    format!("{:04}-{:02}", idx.div_euclid(12), idx.rem_euclid(12) + 1)
}

impl ModeCoder {
    fn new<'a>(spec: &ModeColumn, values: impl Iterator<Item = (usize, &'a str)> + Clone, name: &str) -> Result<Self> {
        let mut coder = ModeCoder {
            labels: Vec::new(),
            lookup: HashMap::new(),
            fixed: false,
            binning: None,
        };
        match &spec.binning {
            Some(TimeBinning::Integer { width, origin, bins }) => {
                if *width <= 0 {
                    return Err(Error::Schema(format!(
                        "bin width for {:?} must be positive",
                        spec.column
                    )));
                }
                let mut parsed = Vec::new();
                for (line, v) in values {
                    let t: i64 = v
                        .parse()
                        .map_err(|_| Error::parse(name, line, format!("time value {v:?} is not an integer")))?;
                    parsed.push(t);
                }
                let origin = origin.unwrap_or_else(|| parsed.iter().copied().min().unwrap_or(0));
                let bins = bins.unwrap_or_else(|| {
                    parsed
                        .iter()
                        .map(|t| (t - origin).div_euclid(*width) + 1)
                        .max()
                        .unwrap_or(1)
                        .max(1) as usize
                });
                coder.labels = (0..bins).map(|b| (origin + b as i64 * width).to_string()).collect();
                coder.binning = Some(ResolvedBinning::Integer {
                    width: *width,
                    origin,
                    bins,
                });
            }
            Some(TimeBinning::Monthly { start, months }) => {
                let mut parsed = Vec::new();
                for (line, v) in values {
                    let mi = parse_month(v).ok_or_else(|| {
                        Error::parse(
                            name,
                            line,
                            format!("date {v:?} not in YYYY-MM-DD, YYYY-MM or YYYYMMDD form"),
                        )
                    })?;
                    parsed.push(mi);
                }
                let start = start
                    .map(|(y, mo)| y as i64 * 12 + mo as i64 - 1)
                    .unwrap_or_else(|| parsed.iter().copied().min().unwrap_or(0));
                let months =
                    months.unwrap_or_else(|| parsed.iter().map(|t| t - start + 1).max().unwrap_or(1).max(1) as usize);
                coder.labels = (0..months as i64).map(|i| month_label(start + i)).collect();
                coder.binning = Some(ResolvedBinning::Monthly { start, months });
            }
            None => {
                if let Some(vocab) = &spec.vocabulary {
                    coder.fixed = true;
                    for label in vocab {
                        let next = coder.labels.len();
                        if coder.lookup.insert(label.clone(), next).is_some() {
                            return Err(Error::Schema(format!(
                                "duplicate label {label:?} in vocabulary for {:?}",
                                spec.column
                            )));
                        }
                        coder.labels.push(label.clone());
                    }
                }
            }
        }
        Ok(coder)
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn encode(&mut self, value: &str, line: usize, name: &str) -> Result<usize> {
        match &self.binning {
            Some(ResolvedBinning::Integer { width, origin, bins }) => {
                let t: i64 = value.parse().expect("validated while resolving bins");
                let b = (t - origin).div_euclid(*width);
                if b < 0 || b as usize >= *bins {
                    return Err(Error::parse(
                        name,
                        line,
                        format!("time {t} falls outside the {bins} declared bins"),
                    ));
                }
                Ok(b as usize)
            }
            Some(ResolvedBinning::Monthly { start, months }) => {
                let mi = parse_month(value).expect("validated while resolving bins");
                let b = mi - start;
                if b < 0 || b as usize >= *months {
                    return Err(Error::parse(
                        name,
                        line,
                        format!("date {value} falls outside the {months} declared months"),
                    ));
                }
                Ok(b as usize)
            }
            None => {
                if let Some(&i) = self.lookup.get(value) {
                    return Ok(i);
                }
                if self.fixed {
                    return Err(Error::parse(
                        name,
                        line,
                        format!("value {value:?} is not in the declared vocabulary"),
                    ));
                }
                let i = self.labels.len();
                self.labels.push(value.to_string());
                self.lookup.insert(value.to_string(), i);
                Ok(i)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(cols: &[&str]) -> EventSchema {
        EventSchema {
            delimiter: b',',
            modes: cols.iter().map(|c| ModeColumn::named(*c)).collect(),
            count_column: None,
        }
    }

    #[test]
    fn rows_aggregate_into_one_cell() {
        let csv = "src,dst,act,t\nA,B,x,1\nA,B,x,1\nA,B,x,1\n";
        let got = load_events_from(csv.as_bytes(), "ev", &schema(&["src", "dst", "act", "t"])).unwrap();
        assert_eq!(got.tensor.nnz(), 1);
        assert_eq!(got.tensor.get(&[0, 0, 0, 0]), 3);
        assert_eq!(got.vocabularies[1], vec!["B".to_string()]);
    }

    #[test]
    fn empty_log_gives_empty_tensor() {
        let got = load_events_from("src,dst\n".as_bytes(), "ev", &schema(&["src", "dst"])).unwrap();
        assert_eq!(got.tensor.nnz(), 0);
    }

    #[test]
    fn weighted_rows_and_first_appearance_order() {
        let csv = "a\tb\tn\nz\tq\t2\ny\tq\t5\nz\tq\t1\n";
        let mut s = schema(&["a", "b"]);
        s.delimiter = b'\t';
        s.count_column = Some("n".into());
        let got = load_events_from(csv.as_bytes(), "ev", &s).unwrap();
        assert_eq!(got.vocabularies[0], vec!["z".to_string(), "y".to_string()]);
        assert_eq!(got.tensor.get(&[0, 0]), 3);
        assert_eq!(got.tensor.get(&[1, 0]), 5);
    }

    #[test]
    fn errors_name_line_and_column() {
        let err = load_events_from("a,b\n1,2\n3\n".as_bytes(), "ev", &schema(&["a", "b"])).unwrap_err();
        assert!(err.to_string().contains("ev:3"), "{err}");
        let err = load_events_from("a,b\n1,2\n".as_bytes(), "ev", &schema(&["a", "zz"])).unwrap_err();
        assert!(err.to_string().contains("\"zz\""), "{err}");
        let mut s = schema(&["a", "b"]);
        s.count_column = Some("b".into());
        let err = load_events_from("a,b\n1,-2\n".as_bytes(), "ev", &s).unwrap_err();
        assert!(err.to_string().contains("ev:2"), "{err}");
    }

    #[test]
    fn declared_vocabulary_rejects_unknown_values() {
        let mut s = schema(&["a"]);
        s.modes[0].vocabulary = Some(vec!["x".into(), "y".into()]);
        let got = load_events_from("a\ny\n".as_bytes(), "ev", &s).unwrap();
        assert_eq!(got.tensor.shape(), &[2]);
        assert_eq!(got.tensor.get(&[1]), 1);
        assert!(load_events_from("a\nw\n".as_bytes(), "ev", &s).is_err());
    }

    #[test]
    fn monthly_bins_with_declared_range() {
        let mut s = schema(&["t"]);
        s.modes[0].binning = Some(TimeBinning::Monthly {
            start: Some((2000, 1)),
            months: Some(84),
        });
        let got = load_events_from("t\n2000-01-15\n2006-12-31\n20030301\n".as_bytes(), "ev", &s).unwrap();
        assert_eq!(got.tensor.shape(), &[84]);
        assert_eq!(got.tensor.get(&[0]), 1);
        assert_eq!(got.tensor.get(&[83]), 1);
        assert_eq!(got.tensor.get(&[38]), 1);
        assert_eq!(got.vocabularies[0][83], "2006-12");
        assert!(load_events_from("t\n2007-01-01\n".as_bytes(), "ev", &s).is_err());
    }

    #[test]
    fn integer_bins() {
        let mut s = schema(&["t"]);
        s.modes[0].binning = Some(TimeBinning::Integer {
            width: 7,
            origin: None,
            bins: None,
        });
        let got = load_events_from("t\n3\n9\n10\n24\n".as_bytes(), "ev", &s).unwrap();
        assert_eq!(got.tensor.shape(), &[4]);
        assert_eq!(got.tensor.get(&[0]), 2);
        assert_eq!(got.tensor.get(&[1]), 1);
        assert_eq!(got.tensor.get(&[3]), 1);
    }
}
