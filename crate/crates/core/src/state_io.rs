//! Model-state directories: a key=value manifest plus one text file per
//! parameter block. Floats are written in shortest round-trip form, so a
//! save/load cycle is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_string;
use crate::model::{ChainRng, CoreEntries, CoreMode, Hyperparameters, ModelState};

pub const STATE_FORMAT_VERSION: &str = "1";
const MANIFEST: &str = "manifest.txt";
const CORE: &str = "core.txt";
const PI: &str = "pi.txt";

fn factor_file(m: usize) -> String {
    format!("factor_{}.txt", m + 1)
}

fn join<T: std::fmt::Debug>(xs: &[T]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn checksum(files: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    for (name, body) in files {
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update(body.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn data_files(state: &ModelState) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for (m, f) in state.factors.iter().enumerate() {
        let mut body = String::new();
        for row in f.rows() {
            body.push_str(&join(row.as_slice().expect("standard layout")));
            body.push('\n');
        }
        files.push((factor_file(m), body));
    }
    let mut core = String::new();
    for q in 0..state.budget() {
        let _ = write!(core, "{:?}", state.core.values[q]);
        for k in state.core.location(q) {
            let _ = write!(core, " {}", k + 1);
        }
        core.push('\n');
    }
    files.push((CORE.to_string(), core));
    let mut pi = String::new();
    for p in &state.priors {
        pi.push_str(&join(p));
        pi.push('\n');
    }
    files.push((PI.to_string(), pi));
    files
}

pub fn save_state(dir: &Path, state: &ModelState) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = data_files(state);
    let h = &state.hyper;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "version={STATE_FORMAT_VERSION}");
    let _ = writeln!(manifest, "M={}", state.n_modes());
    let _ = writeln!(manifest, "shape={}", join(&state.shape));
    let _ = writeln!(manifest, "K={}", join(&state.dims));
    let _ = writeln!(manifest, "Q={}", state.budget());
    let _ = writeln!(manifest, "mode={}", state.core.mode);
    let _ = writeln!(manifest, "a0={:?}", h.a0);
    let _ = writeln!(manifest, "b0={:?}", h.b0);
    let _ = writeln!(manifest, "e0={:?}", h.e0);
    let _ = writeln!(manifest, "f0={:?}", h.f0);
    let _ = writeln!(manifest, "alpha0={}", join(&h.alpha0));
    let _ = writeln!(manifest, "alpha0_over_k={}", h.alpha0_over_k);
    let _ = writeln!(manifest, "rng_seed={}", state.rng.seed);
    let _ = writeln!(manifest, "rng_iteration={}", state.rng.iteration);
    let _ = writeln!(manifest, "checksum={}", checksum(&files));
    for (name, body) in &files {
        write_string(&dir.join(name), body)?;
    }
    // manifest last: its presence marks a complete directory
    write_string(&dir.join(MANIFEST), &manifest)
}

struct Manifest {
    path: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl Manifest {
    fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(&self.path, 0, format!("manifest lacks `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        let line = self.entries[key].0;
        raw.parse()
            .map_err(|_| Error::parse(&self.path, line, format!("bad value {raw:?} for `{key}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get(key)?;
        let line = self.entries[key].0;
        raw.split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::parse(&self.path, line, format!("bad entry {t:?} in `{key}`")))
            })
            .collect()
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_floats(file: &str, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(file, line, format!("bad number {t:?}")))
        })
        .collect()
}

pub fn load_state(dir: &Path) -> Result<ModelState> {
    let mpath = dir.join(MANIFEST);
    let text = read(&mpath)?;
    let mut entries = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(mpath.display(), i + 1, "expected key=value"))?;
        entries.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
    }
    let man = Manifest {
        path: mpath.display().to_string(),
        entries,
    };
    let version = man.get("version")?;
    if version != STATE_FORMAT_VERSION {
        return Err(Error::Version {
            found: version.to_string(),
            expected: STATE_FORMAT_VERSION.to_string(),
        });
    }
    let m: usize = man.parse("M")?;
    let shape: Vec<usize> = man.list("shape")?;
    let dims: Vec<usize> = man.list("K")?;
    let budget: usize = man.parse("Q")?;
    if shape.len() != m || dims.len() != m {
        return Err(Error::Shape(format!(
            "manifest declares M={m} but lists {} dimensions and {} latent sizes",
            shape.len(),
            dims.len()
        )));
    }
    let mode: CoreMode = man.get("mode")?.parse()?;
    let hyper = Hyperparameters {
        a0: man.parse("a0")?,
        b0: man.parse("b0")?,
        e0: man.parse("e0")?,
        f0: man.parse("f0")?,
        alpha0: man.list("alpha0")?,
        alpha0_over_k: man.parse("alpha0_over_k")?,
    };
    let rng = ChainRng {
        seed: man.parse("rng_seed")?,
        iteration: man.parse("rng_iteration")?,
    };

    let mut files = Vec::new();
    for mm in 0..m {
        let name = factor_file(mm);
        let body = read(&dir.join(&name))?;
        files.push((name, body));
    }
    for name in [CORE, PI] {
        let body = read(&dir.join(name))?;
        files.push((name.to_string(), body));
    }
    let expected = man.get("checksum")?;
    let actual = checksum(&files);
    if expected != actual {
        return Err(Error::Integrity(format!(
            "{}: checksum mismatch (manifest {expected}, files {actual})",
            dir.display()
        )));
    }

    let mut factors = Vec::with_capacity(m);
    for mm in 0..m {
        let (name, body) = &files[mm];
        let mut data = Vec::with_capacity(shape[mm] * dims[mm]);
        let mut rows = 0;
        for (i, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row = parse_floats(name, i + 1, line)?;
            if row.len() != dims[mm] {
                return Err(Error::parse(
                    name,
                    i + 1,
                    format!("expected {} columns, found {}", dims[mm], row.len()),
                ));
            }
            data.extend(row);
            rows += 1;
        }
        if rows != shape[mm] {
            return Err(Error::Shape(format!("{name} has {rows} rows, expected {}", shape[mm])));
        }
        factors.push(Array2::from_shape_vec((shape[mm], dims[mm]), data).expect("sized above"));
    }

    let (_, core_body) = &files[m];
    let mut values = Vec::with_capacity(budget);
    let mut locations = Vec::with_capacity(budget * m);
    for (i, line) in core_body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != m + 1 {
            return Err(Error::parse(
                CORE,
                i + 1,
                format!("expected {} fields, found {}", m + 1, toks.len()),
            ));
        }
        values.push(
            toks[0]
                .parse::<f64>()
                .map_err(|_| Error::parse(CORE, i + 1, "bad core value"))?,
        );
        for t in &toks[1..] {
            let k: usize = t.parse().map_err(|_| Error::parse(CORE, i + 1, "bad location"))?;
            if k == 0 {
                return Err(Error::parse(CORE, i + 1, "locations are 1-based"));
            }
            locations.push(k - 1);
        }
    }
    if values.len() != budget {
        return Err(Error::Shape(format!(
            "core file has {} entries, manifest says Q={budget}",
            values.len()
        )));
    }

    let (_, pi_body) = &files[m + 1];
    let priors: Vec<Vec<f64>> = pi_body
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_floats(PI, i + 1, l))
        .collect::<Result<_>>()?;
    if priors.len() != m {
        return Err(Error::Shape(format!("pi file has {} rows, expected {m}", priors.len())));
    }

    let state = ModelState {
        shape,
        dims,
        hyper,
        factors,
        core: CoreEntries::new(mode, values, locations, m)?,
        priors,
        rng,
    };
    state.validate()?;
    Ok(state)
}

/// Load and require a particular tensor shape.
pub fn load_state_for(dir: &Path, shape: &[usize]) -> Result<ModelState> {
    let state = load_state(dir)?;
    if state.shape != shape {
        return Err(Error::Shape(format!(
            "state in {} has shape {:?}, data has {:?}",
            dir.display(),
            state.shape,
            shape
        )));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Block};
    use rand::Rng;

    fn sample_state() -> ModelState {
        let mut s = ModelState::init_explicit(
            &[7, 6, 5],
            &[3, 4, 2],
            5,
            CoreMode::Allocore,
            Hyperparameters::default(),
            21,
        )
        .unwrap();
        s.hyper.alpha0 = vec![0.1, 0.2, 0.3];
        s.rng.iteration = 1234;
        s.core.values[0] = 1e-300;
        s
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample_state();
        save_state(dir.path(), &s).unwrap();
        let back = load_state(dir.path()).unwrap();
        assert_eq!(back, s);
        let mut rng = substream(0, 0, Block::Data, 0);
        for _ in 0..20 {
            let cell: Vec<usize> = s.shape.iter().map(|&d| rng.random_range(0..d)).collect();
            assert_eq!(back.rate_at(&cell).to_bits(), s.rate_at(&cell).to_bits());
        }
    }

    #[test]
    fn wrong_mode_count_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_state(dir.path(), &sample_state()).unwrap();
        assert!(load_state_for(dir.path(), &[7, 6, 5, 2]).is_err());
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replace("M=3", "M=4");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_state(dir.path()), Err(Error::Shape(_))));
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        save_state(dir.path(), &sample_state()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap();
        let idx = text.find("checksum=").unwrap() + "checksum=".len();
        let mut bytes = text.into_bytes();
        bytes[idx] = if bytes[idx] == b'0' { b'1' } else { b'0' };
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_state(dir.path()), Err(Error::Integrity(_))));

        let dir = tempfile::tempdir().unwrap();
        save_state(dir.path(), &sample_state()).unwrap();
        let core = dir.path().join(CORE);
        let text = fs::read_to_string(&core).unwrap();
        fs::write(&core, text.replacen(' ', "  ", 1).replacen("1e-300", "2e-300", 1)).unwrap();
        assert!(matches!(load_state(dir.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_state(dir.path(), &sample_state()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replace("version=1", "version=9");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_state(dir.path()), Err(Error::Version { .. })));
    }
}
