//! `key=value` manifests written next to every command's output.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub const FILE_NAME: &str = "manifest.txt";

/// Keys that may legitimately differ between an interrupted run and its resumption.
const VOLATILE: &[&str] = &["argv", "resume", "threads", "log_every"];

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("command", command);
        m.set("tool_version", env!("CARGO_PKG_VERSION"));
        m.set("state_format_version", allocore::state_io::STATE_FORMAT_VERSION);
        m.set("argv", shell_join(std::env::args()));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Ok(Self { entries })
    }

    /// Keys whose values differ, ignoring volatile bookkeeping.
    pub fn differences(&self, other: &Manifest) -> Vec<String> {
        let a: BTreeMap<&str, &str> = self.stable().collect();
        let b: BTreeMap<&str, &str> = other.stable().collect();
        let mut keys: Vec<&str> = a.keys().chain(b.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .filter(|k| a.get(k) != b.get(k))
            .map(|k| {
                format!(
                    "{k}: {} vs {}",
                    a.get(k).unwrap_or(&"<unset>"),
                    b.get(k).unwrap_or(&"<unset>")
                )
            })
            .collect()
    }

    fn stable(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .filter(|(k, _)| !VOLATILE.contains(&k.as_str()))
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

fn shell_join(args: impl Iterator<Item = String>) -> String {
    args.map(|a| {
        if !a.is_empty() && a.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=,:+".contains(c)) {
            a
        } else {
            format!("'{}'", a.replace('\'', r"'\''"))
        }
    })
    .collect::<Vec<_>>()
    .join(" ")
}

pub fn join<T: Display>(values: &[T], sep: &str) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}
