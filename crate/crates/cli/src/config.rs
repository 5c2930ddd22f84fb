//! Plain-text run configuration: `key = value` lines, optional `[section]`
//! headers, `#` comments. Keys before the first section are global.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const GLOBAL: &str = "";

/// Recognized keys per section.
const SCHEMA: &[(&str, &[&str])] = &[
    (GLOBAL, &["seed", "threads"]),
    ("gen", &["kind", "line", "fs_hz", "window_ms", "faults", "attacks", "minimal_fraction", "train_fraction", "out"]),
    (
        "train",
        &[
            "data",
            "out",
            "i_nom",
            "epochs",
            "batch_size",
            "learning_rate",
            "patience",
            "val_fraction",
            "clip_norm",
            "hidden",
            "dense1",
            "dense2",
            "readout",
            "grid_search",
            "grid_hidden",
            "grid_dense1",
            "grid_lr",
        ],
    ),
    ("eval", &["model", "data", "sidecar", "noise_snr", "sweep", "out"]),
    (
        "attack",
        &["kind", "line", "fs_hz", "strategy", "alpha", "delta", "shift_ms", "direction", "pairs", "onset_s", "model", "out"],
    ),
    ("bench", &["model", "iters", "fs_hz", "window_ms", "out"]),
    ("model-info", &["model", "kind", "fs_hz", "window_ms"]),
];

fn known(section: &str, key: &str) -> bool {
    SCHEMA.iter().any(|(s, keys)| *s == section && keys.contains(&key))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<(String, String), String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = GLOBAL.to_string();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) || name.is_empty() {
                    bail!("line {}: unknown section [{name}]", n + 1);
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let key = key.trim();
            if !known(&section, key) {
                let where_ = if section.is_empty() { "global scope".to_string() } else { format!("[{section}]") };
                bail!("line {}: unknown key `{key}` in {where_}", n + 1);
            }
            cfg.values.insert((section.clone(), key.to_string()), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Command-line values take precedence over the file.
    pub fn overlay<T: ToString>(&mut self, section: &str, key: &str, value: Option<T>) {
        debug_assert!(known(section, key), "{section}.{key} missing from schema");
        if let Some(v) = value {
            self.values.insert((section.to_string(), key.to_string()), v.to_string());
        }
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| anyhow!("bad value `{v}` for {}: {e}", label(section, key))),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(section, key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim().parse().map_err(|e| anyhow!("bad list item `{s}` for {}: {e}", label(section, key))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

fn label(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

/// Resolved settings in config-file syntax; feeding the text back through
/// `--config` reproduces the run.
#[derive(Debug, Default)]
pub struct Echo {
    global: Vec<(String, String)>,
    section: String,
    entries: Vec<(String, String)>,
}

impl Echo {
    pub fn new(section: &str, seed: u64, threads: usize) -> Self {
        Self {
            global: vec![("seed".into(), seed.to_string()), ("threads".into(), threads.to_string())],
            section: section.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        debug_assert!(known(&self.section, key), "{}.{key} missing from schema", self.section);
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.global {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[{}]", self.section);
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
