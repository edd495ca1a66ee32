//! Belief-span codec: the flat `key : value, key : value` text format shared
//! by every generation target.
//!
//! Three span kinds exist:
//!
//! | span | rendering |
//! |------|-----------|
//! | [`IntentSpan`] | `intent : airport, intent : flight` |
//! | [`PairSpan`] | `city name : dallas, city name : denver` |
//! | [`SlotSpan`] | `slot : transport type, slot : city name` |
//!
//! An empty span renders as the literal [`EMPTY_SPAN`]. Spans validate their
//! contents on construction, so serialization cannot fail. Parsing accepts
//! arbitrary text and never fails; unusable items are dropped and counted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separates items of a span.
pub const ITEM_SEPARATOR: &str = ", ";
/// Separates key from value inside an item.
pub const KEY_VALUE_SEPARATOR: &str = " : ";
/// Rendering of a span with no items.
pub const EMPTY_SPAN: &str = "none";

const INTENT_KEY: &str = "intent";
const SLOT_KEY: &str = "slot";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("span entry is empty")]
    Empty,
    #[error("span entry {0:?} has leading or trailing whitespace")]
    Untrimmed(String),
    #[error("span entry {0:?} contains a reserved delimiter")]
    ReservedDelimiter(String),
}

fn check_entry(entry: &str) -> Result<(), SpanError> {
    if entry.is_empty() {
        return Err(SpanError::Empty);
    }
    if entry.trim() != entry {
        return Err(SpanError::Untrimmed(entry.to_string()));
    }
    if entry.contains(ITEM_SEPARATOR) {
        return Err(SpanError::ReservedDelimiter(entry.to_string()));
    }
    Ok(())
}

/// Labels (intent or slot descriptions) may hold neither delimiter.
fn check_label(entry: &str) -> Result<(), SpanError> {
    check_entry(entry)?;
    // A trailing " :" or "," would merge with the separator that follows.
    if entry.contains(KEY_VALUE_SEPARATOR) || entry.ends_with(" :") || entry.ends_with(',') {
        return Err(SpanError::ReservedDelimiter(entry.to_string()));
    }
    Ok(())
}

/// Output of a best-effort parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed<T> {
    pub span: T,
    /// Items that were present but could not be used.
    pub malformed: usize,
}

fn dedup_preserving_order(items: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items
        .into_iter()
        .filter(|item| seen.insert(item.clone()))
        .collect()
}

fn is_empty_sentinel(text: &str) -> bool {
    let trimmed = text.trim();
    trimmed.is_empty() || trimmed == EMPTY_SPAN
}

fn serialize_keyed(key: &str, items: &[String]) -> String {
    if items.is_empty() {
        return EMPTY_SPAN.to_string();
    }
    items
        .iter()
        .map(|item| format!("{key}{KEY_VALUE_SEPARATOR}{item}"))
        .collect::<Vec<_>>()
        .join(ITEM_SEPARATOR)
}

fn strip_key<'a>(item: &'a str, key: &str) -> &'a str {
    let Some(rest) = item.strip_prefix(key) else {
        return item;
    };
    let rest = rest.trim_start();
    match rest.strip_prefix(':') {
        Some(value) => value,
        None => item,
    }
}

fn parse_keyed(text: &str, key: &str) -> Parsed<Vec<String>> {
    if is_empty_sentinel(text) {
        return Parsed {
            span: Vec::new(),
            malformed: 0,
        };
    }
    let mut malformed = 0;
    let mut items = Vec::new();
    for raw in text.trim().split(ITEM_SEPARATOR) {
        let item = strip_key(raw.trim(), key).trim();
        if item.is_empty() {
            continue;
        }
        if check_label(item).is_err() {
            malformed += 1;
            continue;
        }
        items.push(item.to_string());
    }
    Parsed {
        span: dedup_preserving_order(items),
        malformed,
    }
}

/// Ordered intent descriptions, the target of intent detection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct IntentSpan(Vec<String>);

impl IntentSpan {
    pub fn new<I, S>(intents: I) -> Result<Self, SpanError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let intents: Vec<String> = intents.into_iter().map(Into::into).collect();
        intents.iter().try_for_each(|i| check_label(i))?;
        Ok(Self(intents))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn intents(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn serialize(&self) -> String {
        serialize_keyed(INTENT_KEY, &self.0)
    }

    /// Splits on `, `, strips an optional `intent :` / `intent:` key, drops
    /// blanks and repeats.
    pub fn parse(text: &str) -> Parsed<Self> {
        let parsed = parse_keyed(text, INTENT_KEY);
        Parsed {
            span: Self(parsed.span),
            malformed: parsed.malformed,
        }
    }
}

/// Ordered slot descriptions, the target of slot prediction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SlotSpan(Vec<String>);

impl SlotSpan {
    pub fn new<I, S>(slots: I) -> Result<Self, SpanError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let slots: Vec<String> = slots.into_iter().map(Into::into).collect();
        slots.iter().try_for_each(|s| check_label(s))?;
        Ok(Self(slots))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn slots(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn serialize(&self) -> String {
        serialize_keyed(SLOT_KEY, &self.0)
    }

    pub fn parse(text: &str) -> Parsed<Self> {
        let parsed = parse_keyed(text, SLOT_KEY);
        Parsed {
            span: Self(parsed.span),
            malformed: parsed.malformed,
        }
    }
}

/// One `slot : value` item. The value is a verbatim utterance fragment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotValuePair {
    slot: String,
    value: String,
}

impl SlotValuePair {
    pub fn new(slot: impl Into<String>, value: impl Into<String>) -> Result<Self, SpanError> {
        let slot = slot.into();
        let value = value.into();
        check_label(&slot)?;
        check_entry(&value)?;
        Ok(Self { slot, value })
    }

    pub fn slot(&self) -> &str {
        &self.slot
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

/// Slot-value pairs in order of appearance; duplicates are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PairSpan(Vec<SlotValuePair>);

impl PairSpan {
    pub fn new(pairs: Vec<SlotValuePair>) -> Self {
        Self(pairs)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn pairs(&self) -> &[SlotValuePair] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_pairs(self) -> Vec<SlotValuePair> {
        self.0
    }

    pub fn serialize(&self) -> String {
        if self.0.is_empty() {
            return EMPTY_SPAN.to_string();
        }
        self.0
            .iter()
            .map(|p| format!("{}{KEY_VALUE_SEPARATOR}{}", p.slot, p.value))
            .collect::<Vec<_>>()
            .join(ITEM_SEPARATOR)
    }

    /// Splits each item on its first ` : `. Items without one are counted as
    /// malformed. No deduplication.
    pub fn parse(text: &str) -> Parsed<Self> {
        if is_empty_sentinel(text) {
            return Parsed {
                span: Self::empty(),
                malformed: 0,
            };
        }
        let mut malformed = 0;
        let mut pairs = Vec::new();
        for raw in text.trim().split(ITEM_SEPARATOR) {
            let item = raw.trim();
            if item.is_empty() {
                continue;
            }
            let pair = item
                .split_once(KEY_VALUE_SEPARATOR)
                .and_then(|(slot, value)| SlotValuePair::new(slot.trim(), value.trim()).ok());
            match pair {
                Some(pair) => pairs.push(pair),
                None => malformed += 1,
            }
        }
        Parsed {
            span: Self(pairs),
            malformed,
        }
    }

    /// Distinct slots in first-occurrence order.
    pub fn slot_span(&self) -> SlotSpan {
        SlotSpan(dedup_preserving_order(
            self.0.iter().map(|p| p.slot.clone()).collect(),
        ))
    }
}

impl FromIterator<SlotValuePair> for PairSpan {
    fn from_iter<T: IntoIterator<Item = SlotValuePair>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}
