//! Plain-text formats: COO tensors, fiber masks and vocabularies.
//!
//! All coordinates on disk are 1-based; in memory they are 0-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::FiberMask;
use crate::tensor::SparseCountTensor;

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Lines that carry content, paired with their 1-based line number.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_usize(file: &Path, line: usize, tok: &str) -> Result<usize> {
    tok.parse().map_err(|_| {
        Error::parse(
            file.display(),
            line,
            format!("expected a non-negative integer, got {tok:?}"),
        )
    })
}

fn parse_coord(file: &Path, line: usize, tok: &str) -> Result<usize> {
    let c = parse_usize(file, line, tok)?;
    if c == 0 {
        return Err(Error::parse(file.display(), line, "coordinates are 1-based; found 0"));
    }
    Ok(c - 1)
}

pub fn format_coo(tensor: &SparseCountTensor) -> String {
    let mut out = String::new();
    let _ = write!(out, "{}", tensor.n_modes());
    for d in tensor.shape() {
        let _ = write!(out, " {d}");
    }
    out.push('\n');
    for (cell, y) in tensor.iter() {
        for c in cell {
            let _ = write!(out, "{} ", c + 1);
        }
        let _ = writeln!(out, "{y}");
    }
    out
}

pub fn write_coo(path: &Path, tensor: &SparseCountTensor) -> Result<()> {
    write_string(path, &format_coo(tensor))
}

pub fn parse_coo(path: &Path, text: &str) -> Result<SparseCountTensor> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path.display(), 1, "missing header `M D_1 ... D_M`"))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| parse_usize(path, hline, t))
        .collect::<Result<_>>()?;
    let m = *head.first().unwrap_or(&0);
    if m == 0 || head.len() != m + 1 {
        return Err(Error::parse(path.display(), hline, "header must be `M D_1 ... D_M`"));
    }
    let shape = head[1..].to_vec();
    let mut entries = Vec::new();
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != m + 1 {
            return Err(Error::parse(
                path.display(),
                ln,
                format!("expected {} fields, found {}", m + 1, toks.len()),
            ));
        }
        let cell: Vec<usize> = toks[..m]
            .iter()
            .map(|t| parse_coord(path, ln, t))
            .collect::<Result<_>>()?;
        if let Some(k) = (0..m).find(|&k| cell[k] >= shape[k]) {
            return Err(Error::parse(
                path.display(),
                ln,
                format!(
                    "coordinate {} in mode {} exceeds dimension {}",
                    cell[k] + 1,
                    k + 1,
                    shape[k]
                ),
            ));
        }
        let y: u64 = toks[m]
            .parse()
            .map_err(|_| Error::parse(path.display(), ln, format!("bad count {:?}", toks[m])))?;
        entries.push((cell, y));
    }
    SparseCountTensor::from_entries(shape, entries)
}

pub fn read_coo(path: &Path) -> Result<SparseCountTensor> {
    parse_coo(path, &read_to_string(path)?)
}

pub fn format_mask(mask: &FiberMask) -> String {
    let mut out = format!("free_mode={}\n", mask.free_mode() + 1);
    for stem in mask.stems() {
        let line: Vec<String> = stem.iter().map(|c| (c + 1).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_mask(path: &Path, mask: &FiberMask) -> Result<()> {
    write_string(path, &format_mask(mask))
}

/// Parse a mask file. The tensor shape is not stored in the file, so it is
/// supplied by the caller.
pub fn parse_mask(path: &Path, text: &str, shape: &[usize]) -> Result<FiberMask> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path.display(), 1, "missing `free_mode=m` header"))?;
    let free = header
        .strip_prefix("free_mode=")
        .ok_or_else(|| Error::parse(path.display(), hline, "header must be `free_mode=m`"))?;
    let free_mode = parse_coord(path, hline, free.trim())?;
    if free_mode >= shape.len() {
        return Err(Error::parse(path.display(), hline, "free mode exceeds tensor order"));
    }
    let mut stems = Vec::new();
    for (ln, line) in lines {
        let stem: Vec<usize> = line
            .split_whitespace()
            .map(|t| parse_coord(path, ln, t))
            .collect::<Result<_>>()?;
        if stem.len() + 1 != shape.len() {
            return Err(Error::parse(
                path.display(),
                ln,
                format!("stem needs {} coordinates, found {}", shape.len() - 1, stem.len()),
            ));
        }
        stems.push(stem);
    }
    FiberMask::new(shape.to_vec(), free_mode, stems)
}

pub fn read_mask(path: &Path, shape: &[usize]) -> Result<FiberMask> {
    parse_mask(path, &read_to_string(path)?, shape)
}

/// One label per line.
pub fn write_vocab(path: &Path, labels: &[String]) -> Result<()> {
    let mut out = labels.join("\n");
    out.push('\n');
    write_string(path, &out)
}

pub fn read_vocab(path: &Path) -> Result<Vec<String>> {
    Ok(read_to_string(path)?
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .filter(|l| !l.is_empty())
        .collect())
}
