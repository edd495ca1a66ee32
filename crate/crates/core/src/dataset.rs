//! Corpus loading and conversion into text-generation training examples.
//!
//! Corpus files hold one sample per block: `token tag` lines, then a line
//! with the intent labels joined by `#`, then a blank line.
//!
//! ```text
//! list O
//! flights O
//! to O
//! denver B-toloc.city_name
//! atis_flight#atis_airline
//!
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief_span::{IntentSpan, PairSpan, SlotSpan, SpanError};
use crate::bio::{bio_to_pairs, BioError, BioSequence, BioTag, Utterance};
use crate::lexicon::{LabelLexicon, LexiconError, Namespace};
use crate::prompt::{PromptBuilder, PromptError, TaskKind};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: token and tag counts differ ({content:?})")]
    LengthMismatch { line: usize, content: String },
    #[error("line {line}: sample has no intent line")]
    MissingIntentLine { line: usize },
    #[error("line {line}: empty intent label in {content:?}")]
    EmptyIntent { line: usize, content: String },
    #[error("line {line}: {source}")]
    Tag { line: usize, source: BioError },
    #[error("line {line}: {source}")]
    Token { line: usize, source: BioError },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("sample {sample_id}: {source}")]
    Bio { sample_id: String, source: BioError },
    #[error("sample {sample_id}: {source}")]
    Lexicon {
        sample_id: String,
        source: LexiconError,
    },
    #[error("sample {sample_id}: {source}")]
    Span {
        sample_id: String,
        source: SpanError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("failed to write dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Record {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One annotated corpus sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSample {
    pub id: String,
    pub utterance: Utterance,
    pub tags: BioSequence,
    /// Raw intent labels in file order.
    pub intents: Vec<String>,
}

/// Parses corpus text. Sample ids are `<id_prefix>-<index>`.
pub fn parse_corpus(source: &str, id_prefix: &str) -> Result<Vec<RawSample>, CorpusError> {
    parse_lines(source.lines().map(|l| Ok(l.to_string())), id_prefix).map_err(|e| e.expect_parse())
}

/// Loads a corpus file; ids are prefixed with the file stem.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<RawSample>, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let prefix = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".to_string());
    parse_lines(std::io::BufReader::new(file).lines(), &prefix).map_err(|e| match e {
        LineError::Io(source) => io_err(source),
        LineError::Parse(e) => e,
    })
}

enum LineError {
    Io(std::io::Error),
    Parse(CorpusError),
}

impl LineError {
    fn expect_parse(self) -> CorpusError {
        match self {
            LineError::Parse(e) => e,
            LineError::Io(e) => CorpusError::Io {
                path: PathBuf::new(),
                source: e,
            },
        }
    }
}

fn parse_lines<I>(lines: I, id_prefix: &str) -> Result<Vec<RawSample>, LineError>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let mut samples = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<BioTag> = Vec::new();
    // Line number of an intent line that must be followed by a blank line.
    let mut pending_separator: Option<(usize, String)> = None;
    let mut line_no = 0;

    for line in lines {
        let line = line.map_err(LineError::Io)?;
        line_no += 1;
        let line = line.trim_end_matches('\r');
        let fields: Vec<&str> = line.split_whitespace().collect();

        if fields.is_empty() {
            if !tokens.is_empty() {
                return Err(LineError::Parse(CorpusError::MissingIntentLine {
                    line: line_no,
                }));
            }
            pending_separator = None;
            continue;
        }
        if let Some((line, content)) = pending_separator.take() {
            // A one-field line inside a block is a token without its tag.
            return Err(LineError::Parse(CorpusError::LengthMismatch {
                line,
                content,
            }));
        }
        match fields.as_slice() {
            [token, tag] => {
                let tag = tag.parse::<BioTag>().map_err(|source| {
                    LineError::Parse(CorpusError::Tag {
                        line: line_no,
                        source,
                    })
                })?;
                tokens.push((*token).to_string());
                tags.push(tag);
            }
            [intent_line] if !tokens.is_empty() => {
                let intents: Vec<String> = intent_line.split('#').map(str::to_string).collect();
                if intents.iter().any(String::is_empty) {
                    return Err(LineError::Parse(CorpusError::EmptyIntent {
                        line: line_no,
                        content: intent_line.to_string(),
                    }));
                }
                let utterance = Utterance::new(std::mem::take(&mut tokens)).map_err(|source| {
                    LineError::Parse(CorpusError::Token {
                        line: line_no,
                        source,
                    })
                })?;
                samples.push(RawSample {
                    id: format!("{id_prefix}-{}", samples.len()),
                    utterance,
                    tags: BioSequence::new(std::mem::take(&mut tags)),
                    intents,
                });
                pending_separator = Some((line_no, line.to_string()));
            }
            _ => {
                return Err(LineError::Parse(CorpusError::LengthMismatch {
                    line: line_no,
                    content: line.to_string(),
                }))
            }
        }
    }
    if !tokens.is_empty() {
        return Err(LineError::Parse(CorpusError::MissingIntentLine {
            line: line_no,
        }));
    }
    Ok(samples)
}

/// The train/dev/test files of one corpus directory.
#[derive(Debug, Clone, Default)]
pub struct CorpusSplits {
    splits: BTreeMap<Split, Vec<RawSample>>,
}

impl CorpusSplits {
    /// Loads every `train.txt`, `dev.txt` and `test.txt` present in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let dir = dir.as_ref();
        let mut splits = BTreeMap::new();
        for split in Split::ALL {
            let path = dir.join(split.file_name());
            if path.is_file() {
                splits.insert(split, load_corpus(&path)?);
            }
        }
        if splits.is_empty() {
            return Err(CorpusError::Io {
                path: dir.to_path_buf(),
                source: std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "no train.txt, dev.txt or test.txt found",
                ),
            });
        }
        Ok(Self { splits })
    }

    pub fn get(&self, split: Split) -> Option<&[RawSample]> {
        self.splits.get(&split).map(Vec::as_slice)
    }

    pub fn counts(&self) -> BTreeMap<Split, usize> {
        self.splits.iter().map(|(s, v)| (*s, v.len())).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Split, &[RawSample])> {
        self.splits.iter().map(|(s, v)| (*s, v.as_slice()))
    }

    pub fn all_samples(&self) -> impl Iterator<Item = &RawSample> {
        self.splits.values().flatten()
    }
}

/// Adds every intent and slot label used by `samples` to the lexicon inventory.
pub fn register_corpus_labels<'a, I>(
    lexicon: &mut LabelLexicon,
    samples: I,
) -> Result<(), LexiconError>
where
    I: IntoIterator<Item = &'a RawSample>,
{
    let mut intents = std::collections::BTreeSet::new();
    let mut slots = std::collections::BTreeSet::new();
    for sample in samples {
        intents.extend(sample.intents.iter().map(String::as_str));
        slots.extend(sample.tags.slot_labels());
    }
    lexicon.register_inventory(Namespace::Intent, intents)?;
    lexicon.register_inventory(Namespace::Slot, slots)
}

/// Gold structures of one sample, with labels rendered as descriptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldFrame {
    pub intents: IntentSpan,
    pub pairs: PairSpan,
    pub slots: SlotSpan,
}

impl GoldFrame {
    pub fn target(&self, task: TaskKind) -> String {
        match task {
            TaskKind::IntentDetection => self.intents.serialize(),
            TaskKind::SlotFilling => self.pairs.serialize(),
            TaskKind::SlotPrediction => self.slots.serialize(),
        }
    }
}

pub fn gold_frame(sample: &RawSample, lexicon: &LabelLexicon) -> Result<GoldFrame, DatasetError> {
    let descriptions = sample
        .intents
        .iter()
        .map(|raw| lexicon.describe(Namespace::Intent, raw))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| DatasetError::Lexicon {
            sample_id: sample.id.clone(),
            source,
        })?;
    let intents = IntentSpan::new(descriptions).map_err(|source| DatasetError::Span {
        sample_id: sample.id.clone(),
        source,
    })?;
    let pairs = bio_to_pairs(&sample.utterance, &sample.tags, lexicon)
        .map_err(|source| DatasetError::Bio {
            sample_id: sample.id.clone(),
            source,
        })?
        .pairs;
    let slots = pairs.slot_span();
    Ok(GoldFrame {
        intents,
        pairs,
        slots,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldTargets {
    pub id_target: String,
    pub sf_target: String,
    pub sp_target: String,
}

pub fn make_gold_targets(
    sample: &RawSample,
    lexicon: &LabelLexicon,
) -> Result<GoldTargets, DatasetError> {
    let frame = gold_frame(sample, lexicon)?;
    Ok(GoldTargets {
        id_target: frame.target(TaskKind::IntentDetection),
        sf_target: frame.target(TaskKind::SlotFilling),
        sp_target: frame.target(TaskKind::SlotPrediction),
    })
}

/// One text-generation example. Field order is the on-disk record order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub sample_id: String,
    pub task: TaskKind,
    pub prompt: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy)]
pub struct ExampleOptions {
    /// Embed gold intents into SF/SP prompts; off gives the ablated templates.
    pub sig: bool,
    pub builder: PromptBuilder,
}

impl Default for ExampleOptions {
    fn default() -> Self {
        Self {
            sig: true,
            builder: PromptBuilder::default(),
        }
    }
}

/// The ID, SF and SP examples for one sample, in that order.
pub fn sample_examples(
    sample: &RawSample,
    lexicon: &LabelLexicon,
    options: ExampleOptions,
) -> Result<[TrainingExample; 3], DatasetError> {
    let frame = gold_frame(sample, lexicon)?;
    let make = |task: TaskKind| -> Result<TrainingExample, DatasetError> {
        let prompt = match task {
            TaskKind::IntentDetection => options.builder.build(task, &sample.utterance, None)?,
            _ if options.sig => {
                options
                    .builder
                    .build(task, &sample.utterance, Some(&frame.intents))?
            }
            _ => options.builder.build_ablated(task, &sample.utterance)?,
        };
        Ok(TrainingExample {
            sample_id: sample.id.clone(),
            task,
            prompt: prompt.text,
            target: frame.target(task),
        })
    };
    Ok([
        make(TaskKind::IntentDetection)?,
        make(TaskKind::SlotFilling)?,
        make(TaskKind::SlotPrediction)?,
    ])
}

/// Split-loss layout: three independent examples per sample, optionally
/// shuffled with `seed` (epoch 0).
pub fn expand_split(
    samples: &[RawSample],
    lexicon: &LabelLexicon,
    options: ExampleOptions,
    seed: Option<u64>,
) -> Result<Vec<TrainingExample>, DatasetError> {
    let mut examples = Vec::with_capacity(samples.len() * 3);
    for sample in samples {
        examples.extend(sample_examples(sample, lexicon, options)?);
    }
    if let Some(seed) = seed {
        shuffle_examples(&mut examples, seed, 0);
    }
    Ok(examples)
}

/// Deterministic shuffle; each epoch draws from its own stream of `seed`.
pub fn shuffle_examples<T>(examples: &mut [T], seed: u64, epoch: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    examples.shuffle(&mut rng);
}

/// The three examples of one sample, kept together for a weighted loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGroup {
    pub sample_id: String,
    pub examples: [TrainingExample; 3],
}

pub fn group_for_weighted(
    samples: &[RawSample],
    lexicon: &LabelLexicon,
    options: ExampleOptions,
) -> Result<Vec<WeightedGroup>, DatasetError> {
    samples
        .iter()
        .map(|sample| {
            Ok(WeightedGroup {
                sample_id: sample.id.clone(),
                examples: sample_examples(sample, lexicon, options)?,
            })
        })
        .collect()
}

/// Writes one JSON record per line.
pub fn write_examples<'a, W, I>(mut out: W, examples: I) -> Result<(), DatasetError>
where
    W: Write,
    I: IntoIterator<Item = &'a TrainingExample>,
{
    for example in examples {
        serde_json::to_writer(&mut out, example).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_examples<R: BufRead>(input: R) -> Result<Vec<TrainingExample>, DatasetError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| DatasetError::Record {
                line: idx + 1,
                source,
            })?,
        );
    }
    Ok(out)
}
