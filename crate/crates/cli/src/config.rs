//! Store settings: defaults, then an optional `key = value` file, then flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use dynawarp_core::logstore::{Codec, TokenRules};
use dynawarp_core::StoreConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CodecArg {
    None,
    Zstd,
}

impl FromStr for CodecArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RulesArg {
    /// Whole runs, composites and grams.
    Full,
    /// Alphanumeric words only.
    Words,
}

impl FromStr for RulesArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    #[default]
    Sketch,
    Scan,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct StoreArgs {
    /// Maximum batches per segment (1..=65536).
    #[arg(long)]
    pub capacity: Option<u32>,
    /// Seal a batch after this many lines.
    #[arg(long)]
    pub batch_lines: Option<u32>,
    /// Seal a batch once it holds this many uncompressed bytes.
    #[arg(long)]
    pub batch_bytes: Option<usize>,
    /// Signature bits per token (0..=32).
    #[arg(long)]
    pub signature_bits: Option<u8>,
    #[arg(long)]
    pub sample_interval: Option<u32>,
    /// Flush the in-memory sketch to disk above this many bytes.
    #[arg(long)]
    pub memory_limit: Option<usize>,
    /// Keep separate batches per source (with --source-tab input).
    #[arg(long)]
    pub group_by_source: bool,
    #[arg(long)]
    pub max_open_batches: Option<usize>,
    #[arg(long, value_enum)]
    pub codec: Option<CodecArg>,
    #[arg(long)]
    pub zstd_level: Option<i32>,
    #[arg(long, value_enum)]
    pub token_rules: Option<RulesArg>,
}

/// Parsed `key = value` file. Keys accept `-` or `_`.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "store",
    "capacity",
    "batch_lines",
    "batch_bytes",
    "signature_bits",
    "sample_interval",
    "memory_limit",
    "group_by_source",
    "max_open_batches",
    "codec",
    "zstd_level",
    "token_rules",
    "mode",
];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {}: expected key = value", i + 1);
            };
            let key = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key {key:?}", i + 1);
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config key {key}: {e}")))
            .transpose()
    }

    pub fn store(&self) -> Option<PathBuf> {
        self.values.get("store").map(PathBuf::from)
    }

    pub fn mode(&self) -> Result<Option<Mode>> {
        self.get("mode")
    }
}

impl StoreArgs {
    /// Flags win over the file, the file over defaults.
    pub fn resolve(&self, file: &ConfigFile) -> Result<StoreConfig> {
        let mut c = StoreConfig::default();
        macro_rules! layer {
            ($field:ident) => {
                if let Some(v) = self.$field.or(file.get(stringify!($field))?) {
                    c.$field = v;
                }
            };
        }
        layer!(capacity);
        layer!(batch_lines);
        layer!(batch_bytes);
        layer!(signature_bits);
        layer!(sample_interval);
        layer!(max_open_batches);
        layer!(zstd_level);
        c.memory_limit = self.memory_limit.or(file.get("memory_limit")?);
        c.group_by_source = self.group_by_source || file.get("group_by_source")?.unwrap_or(false);
        if let Some(codec) = self.codec.or(file.get("codec")?) {
            c.codec = match codec {
                CodecArg::None => Codec::None,
                CodecArg::Zstd => Codec::Zstd,
            };
        }
        if let Some(rules) = self.token_rules.or(file.get("token_rules")?) {
            c.token_rules = match rules {
                RulesArg::Full => TokenRules::Full,
                RulesArg::Words => TokenRules::Words,
            };
        }
        c.validate()?;
        Ok(c)
    }
}
