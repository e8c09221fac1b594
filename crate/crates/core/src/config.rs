//! Run configuration file.
//!
//! ```toml
//! seed = 42
//! out = "out"
//! schema = "schema.toml"      # optional, bundled schema otherwise
//! corpus = "runs.csv"         # or a [toy] section
//! n_generate = 1000000
//! test_fraction = 0.25
//!
//! [label]
//! high_indicator = "gdp_index"
//! low_indicator = "gini_index"
//!
//! [forest]
//! n_trees = 10000
//! max_depth = 15
//!
//! [toy]
//! runs = 11076
//! world = "world.toml"        # optional, default preset otherwise
//! ```
//!
//! Relative paths are resolved against the directory of the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Hyperparams;
use crate::labeling::LabelSpec;
use crate::toyabm::{GDP_INDICATOR, GINI_INDICATOR};

pub const DESK_TREES: usize = 100;
pub const DESK_GENERATE: u64 = 100_000;
pub const DEFAULT_BATCH: u64 = 65_536;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<PathBuf>,
    /// Overrides the world's noise level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelSpec>,
    #[serde(default)]
    pub forest: Hyperparams,
    #[serde(default = "default_generate")]
    pub n_generate: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_true")]
    pub stratified: bool,
    #[serde(default = "default_batch")]
    pub batch_size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToySection>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_generate() -> u64 {
    1_000_000
}
fn default_test_fraction() -> f64 {
    0.25
}
fn default_true() -> bool {
    true
}
fn default_batch() -> u64 {
    DEFAULT_BATCH
}

impl Default for CliConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_against(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        self.schema.as_mut().map(fix);
        self.corpus.as_mut().map(fix);
        if let Some(world) = self.toy.as_mut().and_then(|t| t.world.as_mut()) {
            fix(world);
        }
    }

    /// Trees 100 and 10^5 generated configurations.
    pub fn desk_scale(&mut self) {
        self.forest.n_trees = DESK_TREES;
        self.n_generate = DESK_GENERATE;
    }

    /// The label spec, defaulting to the toy indicator names when the
    /// corpus is synthetic.
    pub fn label_spec(&self) -> Result<LabelSpec> {
        match (&self.label, &self.toy) {
            (Some(l), _) => {
                l.validate()?;
                Ok(l.clone())
            }
            (None, Some(_)) => Ok(LabelSpec::new(GDP_INDICATOR, GINI_INDICATOR)),
            (None, None) => Err(Error::Config(
                "a [label] section naming the production and inequality indicators is required".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        self.label_spec()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction {} outside (0, 1)", self.test_fraction)));
        }
        if self.n_generate == 0 {
            return Err(Error::Config("n_generate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        match (&self.corpus, &self.toy) {
            (None, None) => Err(Error::Config("set `corpus` or add a [toy] section".into())),
            (Some(_), Some(_)) => Err(Error::Config("`corpus` and [toy] are mutually exclusive".into())),
            (_, Some(t)) if t.runs == 0 => Err(Error::Config("[toy] runs must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Seed precedence: command-line flag, then environment, then file.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, file: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("seed `{v}` from the environment is not an unsigned integer"))),
        None => Ok(file),
    }
}
