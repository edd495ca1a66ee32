//! Run settings: command-line flags layered over an optional TOML file.
//!
//! The file uses the flag names as keys, e.g.
//!
//! ```toml
//! corpus = "data/MixATIS_clean"
//! lexicon = "lexicon/mixatis.tsv"
//! backend = "http:http://127.0.0.1:8080"
//! run-sp = true
//! seed = 2
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::Deserialize;

use prompt_slu::dataset::Split;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Layer {
    pub corpus: Option<PathBuf>,
    pub split: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub backend: Option<String>,
    pub layout: Option<String>,
    pub sig: Option<bool>,
    pub run_sp: Option<bool>,
    pub gold_intents: Option<bool>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub max_new_tokens: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub out: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub dry_run: Option<bool>,
}

macro_rules! overlay {
    ($top:expr, $bottom:expr, $($field:ident),*) => {
        Layer { $($field: $top.$field.or($bottom.$field)),* }
    };
}

impl Layer {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut layer: Layer = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut layer.corpus,
            &mut layer.lexicon,
            &mut layer.out,
            &mut layer.predictions,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(layer)
    }

    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: Layer) -> Layer {
        overlay!(
            self,
            lower,
            corpus,
            split,
            lexicon,
            backend,
            layout,
            sig,
            run_sp,
            gold_intents,
            seed,
            parallelism,
            max_new_tokens,
            timeout_secs,
            out,
            predictions,
            dry_run
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Oracle,
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = CliError;

    /// `oracle`, `http:<url>`, or a bare `http://…` URL.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "oracle" {
            return Ok(BackendSpec::Oracle);
        }
        let url = match s.strip_prefix("http:") {
            Some(rest) if rest.starts_with("//") => s.to_string(),
            Some(rest) if !rest.is_empty() => rest.to_string(),
            _ => {
                return Err(CliError::Usage(format!(
                    "backend {s:?} is neither \"oracle\" nor \"http:<url>\""
                )))
            }
        };
        Ok(BackendSpec::Http(url))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Split,
    Weighted,
}

impl Layout {
    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Split => "split",
            Layout::Weighted => "weighted",
        }
    }
}

fn parse_layout(s: &str) -> Result<Layout, CliError> {
    match s {
        "split" => Ok(Layout::Split),
        "weighted" => Ok(Layout::Weighted),
        other => Err(CliError::Usage(format!(
            "layout {other:?} is neither \"split\" nor \"weighted\""
        ))),
    }
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

pub struct BuildSettings {
    pub corpus: PathBuf,
    pub splits: Option<Split>,
    pub lexicon: Option<PathBuf>,
    pub layouts: Vec<Layout>,
    pub sig: bool,
    pub seed: u64,
    pub out: PathBuf,
}

impl BuildSettings {
    pub fn resolve(layer: Layer) -> Result<Self, CliError> {
        let layouts = match layer.layout.as_deref() {
            Some(s) => vec![parse_layout(s)?],
            None => vec![Layout::Split, Layout::Weighted],
        };
        Ok(Self {
            corpus: required(layer.corpus, "corpus")?,
            splits: layer.split.as_deref().map(parse_split).transpose()?,
            lexicon: layer.lexicon,
            layouts,
            sig: layer.sig.unwrap_or(true),
            seed: layer.seed.unwrap_or(0),
            out: required(layer.out, "out")?,
        })
    }
}

pub struct InferSettings {
    pub corpus: PathBuf,
    pub split: Split,
    pub lexicon: Option<PathBuf>,
    pub backend: BackendSpec,
    pub sig: bool,
    pub run_sp: bool,
    pub gold_intents: bool,
    pub parallelism: usize,
    pub max_new_tokens: u32,
    pub timeout: Duration,
    pub out: Option<PathBuf>,
    pub dry_run: bool,
}

impl InferSettings {
    pub fn resolve(layer: Layer) -> Result<Self, CliError> {
        let dry_run = layer.dry_run.unwrap_or(false);
        let parallelism = layer.parallelism.unwrap_or(4);
        if parallelism == 0 {
            return Err(CliError::Usage("--parallelism must be at least 1".into()));
        }
        let max_new_tokens = layer.max_new_tokens.unwrap_or(128);
        if max_new_tokens == 0 {
            return Err(CliError::Usage(
                "--max-new-tokens must be at least 1".into(),
            ));
        }
        let out = match (layer.out, dry_run) {
            (Some(out), _) => Some(out),
            (None, true) => None,
            (None, false) => return Err(CliError::Usage("--out is required".into())),
        };
        Ok(Self {
            corpus: required(layer.corpus, "corpus")?,
            split: parse_split(layer.split.as_deref().unwrap_or("test"))?,
            lexicon: layer.lexicon,
            backend: layer.backend.as_deref().unwrap_or("oracle").parse()?,
            sig: layer.sig.unwrap_or(true),
            run_sp: layer.run_sp.unwrap_or(false),
            gold_intents: layer.gold_intents.unwrap_or(false),
            parallelism,
            max_new_tokens,
            timeout: Duration::from_secs(layer.timeout_secs.unwrap_or(60)),
            out,
            dry_run,
        })
    }
}

pub struct EvalSettings {
    pub corpus: PathBuf,
    pub split: Split,
    pub lexicon: Option<PathBuf>,
    pub predictions: PathBuf,
    pub out: PathBuf,
}

impl EvalSettings {
    pub fn resolve(layer: Layer) -> Result<Self, CliError> {
        let predictions = required(layer.predictions, "predictions")?;
        let out = layer.out.unwrap_or_else(|| {
            predictions
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default()
        });
        Ok(Self {
            corpus: required(layer.corpus, "corpus")?,
            split: parse_split(layer.split.as_deref().unwrap_or("test"))?,
            lexicon: layer.lexicon,
            predictions,
            out,
        })
    }
}
