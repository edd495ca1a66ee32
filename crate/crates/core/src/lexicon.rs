//! Mapping between raw dataset labels and the natural-language descriptions
//! that appear in prompts and generation targets.
//!
//! A lexicon holds explicit `(namespace, raw, description)` entries plus an
//! optional inventory of raw labels known from a corpus. Labels without an
//! explicit entry are described by [`derive_default_description`]; the
//! inventory lets [`LabelLexicon::unlabel`] invert that derivation.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief_span::{ITEM_SEPARATOR, KEY_VALUE_SEPARATOR};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: expected `namespace<TAB>raw<TAB>description`, got {content:?}")]
    MalformedLine { line: usize, content: String },
    #[error("line {line}: unknown namespace {namespace:?} (expected `intent` or `slot`)")]
    UnknownNamespace { line: usize, namespace: String },
    #[error("{namespace} label {raw:?} is listed more than once")]
    DuplicateRaw { namespace: Namespace, raw: String },
    #[error("{namespace} labels {first:?} and {second:?} share the description {description:?}")]
    DuplicateDescription {
        namespace: Namespace,
        description: String,
        first: String,
        second: String,
    },
    #[error(
        "description {description:?} for {namespace} label {raw:?} contains a reserved delimiter"
    )]
    ReservedDelimiter {
        namespace: Namespace,
        raw: String,
        description: String,
    },
    #[error("empty description for {namespace} label {raw:?}")]
    EmptyDescription { namespace: Namespace, raw: String },
    #[error("label is empty")]
    EmptyLabel,
    #[error("failed to read lexicon file: {0}")]
    Io(#[from] std::io::Error),
}

/// Which label vocabulary a label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Namespace {
    Intent,
    Slot,
}

impl Namespace {
    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Intent => "intent",
            Namespace::Slot => "slot",
        }
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Namespace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intent" => Ok(Namespace::Intent),
            "slot" => Ok(Namespace::Slot),
            other => Err(other.to_string()),
        }
    }
}

/// Result of mapping a description back to a raw label.
///
/// Generated text is untrusted, so descriptions that match nothing are
/// passed through as `Unknown` instead of failing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unlabeled {
    Known(String),
    Unknown(String),
}

impl Unlabeled {
    pub fn is_known(&self) -> bool {
        matches!(self, Unlabeled::Known(_))
    }

    pub fn as_str(&self) -> &str {
        match self {
            Unlabeled::Known(s) | Unlabeled::Unknown(s) => s,
        }
    }

    pub fn into_string(self) -> String {
        match self {
            Unlabeled::Known(s) | Unlabeled::Unknown(s) => s,
        }
    }
}

const ATIS_PREFIX: &str = "atis_";

/// Describe a raw label when no explicit lexicon entry exists.
///
/// Strips a leading `atis_`, turns every run of `_`/`.` into a single space
/// and lowercases. `atis_ground_service` becomes `ground service`.
pub fn derive_default_description(raw: &str) -> Result<String, LexiconError> {
    if raw.is_empty() {
        return Err(LexiconError::EmptyLabel);
    }
    let stripped = raw.strip_prefix(ATIS_PREFIX).unwrap_or(raw);
    let description = stripped
        .split(['_', '.'])
        .filter(|part| !part.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    if description.is_empty() {
        return Err(LexiconError::EmptyLabel);
    }
    Ok(description)
}

fn contains_reserved(description: &str) -> bool {
    description.contains(ITEM_SEPARATOR)
        || description.contains(KEY_VALUE_SEPARATOR)
        || description.ends_with(',')
        || description.ends_with(" :")
}

#[derive(Debug, Clone, Default)]
struct Table {
    to_desc: HashMap<String, String>,
    from_desc: HashMap<String, String>,
    /// Raw labels seen in a corpus, keyed by their default description.
    inventory: HashMap<String, String>,
}

impl Table {
    fn describe(&self, raw: &str) -> Result<String, LexiconError> {
        match self.to_desc.get(raw) {
            Some(desc) => Ok(desc.clone()),
            None => derive_default_description(raw),
        }
    }

    fn insert_explicit(
        &mut self,
        namespace: Namespace,
        raw: &str,
        description: &str,
    ) -> Result<(), LexiconError> {
        if raw.is_empty() {
            return Err(LexiconError::EmptyLabel);
        }
        let description = description.trim();
        if description.is_empty() {
            return Err(LexiconError::EmptyDescription {
                namespace,
                raw: raw.to_string(),
            });
        }
        if contains_reserved(description) {
            return Err(LexiconError::ReservedDelimiter {
                namespace,
                raw: raw.to_string(),
                description: description.to_string(),
            });
        }
        if self.to_desc.contains_key(raw) {
            return Err(LexiconError::DuplicateRaw {
                namespace,
                raw: raw.to_string(),
            });
        }
        if let Some(first) = self.from_desc.get(description) {
            return Err(LexiconError::DuplicateDescription {
                namespace,
                description: description.to_string(),
                first: first.clone(),
                second: raw.to_string(),
            });
        }
        self.to_desc
            .insert(raw.to_string(), description.to_string());
        self.from_desc
            .insert(description.to_string(), raw.to_string());
        Ok(())
    }

    /// Registers a corpus label. Fails if its effective description would
    /// collide with a different label.
    fn insert_inventory(&mut self, namespace: Namespace, raw: &str) -> Result<(), LexiconError> {
        if self.to_desc.contains_key(raw) {
            return Ok(());
        }
        let description = derive_default_description(raw)?;
        if contains_reserved(&description) {
            return Err(LexiconError::ReservedDelimiter {
                namespace,
                raw: raw.to_string(),
                description,
            });
        }
        let clash = self
            .from_desc
            .get(&description)
            .or_else(|| self.inventory.get(&description))
            .filter(|other| other.as_str() != raw);
        if let Some(first) = clash {
            return Err(LexiconError::DuplicateDescription {
                namespace,
                description,
                first: first.clone(),
                second: raw.to_string(),
            });
        }
        self.inventory.insert(description, raw.to_string());
        Ok(())
    }

    fn unlabel(&self, description: &str) -> Unlabeled {
        if let Some(raw) = self.from_desc.get(description) {
            return Unlabeled::Known(raw.clone());
        }
        if let Some(raw) = self.inventory.get(description) {
            return Unlabeled::Known(raw.clone());
        }
        Unlabeled::Unknown(description.to_string())
    }
}

/// Bidirectional raw-label / description table, immutable once built.
#[derive(Debug, Clone, Default)]
pub struct LabelLexicon {
    intents: Table,
    slots: Table,
}

impl LabelLexicon {
    /// A lexicon with no explicit entries; every lookup uses the default derivation.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses a lexicon document: one `namespace<TAB>raw<TAB>description`
    /// entry per line, `#` comments and blank lines ignored.
    pub fn parse(source: &str) -> Result<Self, LexiconError> {
        let mut lexicon = Self::default();
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(LexiconError::MalformedLine {
                    line: line_no,
                    content: trimmed.to_string(),
                });
            }
            let namespace: Namespace =
                fields[0]
                    .trim()
                    .parse()
                    .map_err(|namespace| LexiconError::UnknownNamespace {
                        line: line_no,
                        namespace,
                    })?;
            lexicon.insert(namespace, fields[1].trim(), fields[2])?;
        }
        Ok(lexicon)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let source = std::fs::read_to_string(path)?;
        Self::parse(&source)
    }

    /// Adds one explicit entry, enforcing injectivity and delimiter rules.
    pub fn insert(
        &mut self,
        namespace: Namespace,
        raw: &str,
        description: &str,
    ) -> Result<(), LexiconError> {
        self.table_mut(namespace)
            .insert_explicit(namespace, raw, description)
    }

    /// Registers raw labels from a corpus so that their default descriptions
    /// can be mapped back by [`unlabel`](Self::unlabel).
    pub fn register_inventory<'a, I>(
        &mut self,
        namespace: Namespace,
        labels: I,
    ) -> Result<(), LexiconError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let table = self.table_mut(namespace);
        for raw in labels {
            table.insert_inventory(namespace, raw)?;
        }
        Ok(())
    }

    pub fn describe(&self, namespace: Namespace, raw: &str) -> Result<String, LexiconError> {
        self.table(namespace).describe(raw)
    }

    pub fn unlabel(&self, namespace: Namespace, description: &str) -> Unlabeled {
        self.table(namespace).unlabel(description)
    }

    /// Whether `raw` has an explicit entry or is part of the registered inventory.
    pub fn knows(&self, namespace: Namespace, raw: &str) -> bool {
        let table = self.table(namespace);
        table.to_desc.contains_key(raw) || table.inventory.values().any(|r| r == raw)
    }

    pub fn explicit_len(&self, namespace: Namespace) -> usize {
        self.table(namespace).to_desc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intents.to_desc.is_empty() && self.slots.to_desc.is_empty()
    }

    fn table(&self, namespace: Namespace) -> &Table {
        match namespace {
            Namespace::Intent => &self.intents,
            Namespace::Slot => &self.slots,
        }
    }

    fn table_mut(&mut self, namespace: Namespace) -> &mut Table {
        match namespace {
            Namespace::Intent => &mut self.intents,
            Namespace::Slot => &mut self.slots,
        }
    }
}
