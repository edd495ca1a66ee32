//! Staged inference: intent detection first, then slot filling (and
//! optionally slot prediction) with the detected intents embedded in the
//! prompt.
//!
//! ```text
//! utterance ─► ID prompt ─► backend ─► parse intents
//!                                          │
//!                   ┌──────────────────────┴─────────────────────┐
//!                   ▼                                            ▼
//!         SF prompt with intents                      SP prompt with intents
//!                   │                                            │
//!             backend, parse pairs                     backend, parse slots
//! ```
//!
//! SF and SP run concurrently when both are requested. Results are keyed by
//! task, so the outcome does not depend on which finishes first.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend, GenerationRequest, DEFAULT_MAX_NEW_TOKENS};
use crate::belief_span::{IntentSpan, PairSpan, SlotSpan};
use crate::bio::Utterance;
use crate::dataset::RawSample;
use crate::lexicon::{LabelLexicon, LexiconError, Namespace};
use crate::prompt::{Prompt, PromptBuilder, PromptError, TaskKind};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{task} stage: {source}")]
    Backend {
        task: TaskKind,
        source: BackendError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("gold intents: {0}")]
    GoldIntents(String),
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error("failed to read or write predictions: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Record {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    /// Embed intents into the SF/SP prompts. Off uses the ablated templates.
    pub sig: bool,
    /// Also run slot prediction. It is an auxiliary training task, so it is
    /// off by default.
    pub run_sp: bool,
    pub max_new_tokens: u32,
    pub builder: PromptBuilder,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            sig: true,
            run_sp: false,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            builder: PromptBuilder::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub malformed: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stages: BTreeMap<TaskKind, StageReport>,
    /// Labels in the output that the lexicon could not map back.
    #[serde(default)]
    pub unknown_labels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SluPrediction {
    pub intents: IntentSpan,
    pub pairs: PairSpan,
    pub slots: Option<SlotSpan>,
    pub diagnostics: Diagnostics,
}

struct StageOutput {
    text: String,
    report: StageReport,
}

fn run_stage(
    backend: &dyn GenerationBackend,
    prompt: &Prompt,
    max_new_tokens: u32,
) -> Result<StageOutput, PipelineError> {
    let backend_err = |source| PipelineError::Backend {
        task: prompt.task,
        source,
    };
    let req = GenerationRequest::new(prompt.text.clone(), max_new_tokens).map_err(backend_err)?;
    let started = Instant::now();
    let response = backend.generate(&req).map_err(backend_err)?;
    Ok(StageOutput {
        text: response.text,
        report: StageReport {
            malformed: 0,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    })
}

fn guided_prompt(
    task: TaskKind,
    utt: &Utterance,
    intents: &IntentSpan,
    options: &PipelineOptions,
) -> Result<Prompt, PromptError> {
    if options.sig {
        options.builder.build(task, utt, Some(intents))
    } else {
        options.builder.build_ablated(task, utt)
    }
}

/// SF and, if requested, SP for fixed intents.
fn run_slot_stages(
    utt: &Utterance,
    intents: IntentSpan,
    backend: &dyn GenerationBackend,
    options: &PipelineOptions,
    mut diagnostics: Diagnostics,
) -> Result<SluPrediction, PipelineError> {
    let sf_prompt = guided_prompt(TaskKind::SlotFilling, utt, &intents, options)?;
    let sp_prompt = options
        .run_sp
        .then(|| guided_prompt(TaskKind::SlotPrediction, utt, &intents, options))
        .transpose()?;

    let (sf, sp) = match &sp_prompt {
        Some(sp_prompt) => std::thread::scope(|scope| {
            let sp = scope.spawn(|| run_stage(backend, sp_prompt, options.max_new_tokens));
            let sf = run_stage(backend, &sf_prompt, options.max_new_tokens);
            let sp = sp.join().expect("slot prediction stage panicked");
            (sf, Some(sp))
        }),
        None => (run_stage(backend, &sf_prompt, options.max_new_tokens), None),
    };

    let sf = sf?;
    let pairs = PairSpan::parse(&sf.text);
    diagnostics.stages.insert(
        TaskKind::SlotFilling,
        StageReport {
            malformed: pairs.malformed,
            ..sf.report
        },
    );
    let slots = match sp.transpose()? {
        Some(sp) => {
            let slots = SlotSpan::parse(&sp.text);
            diagnostics.stages.insert(
                TaskKind::SlotPrediction,
                StageReport {
                    malformed: slots.malformed,
                    ..sp.report
                },
            );
            Some(slots.span)
        }
        None => None,
    };
    Ok(SluPrediction {
        intents,
        pairs: pairs.span,
        slots,
        diagnostics,
    })
}

/// Runs ID, then SF/SP guided by the predicted intents.
pub fn run_pipeline(
    utt: &Utterance,
    backend: &dyn GenerationBackend,
    options: &PipelineOptions,
) -> Result<SluPrediction, PipelineError> {
    let id_prompt = options
        .builder
        .build(TaskKind::IntentDetection, utt, None)?;
    let id = run_stage(backend, &id_prompt, options.max_new_tokens)?;
    let intents = IntentSpan::parse(&id.text);
    let mut diagnostics = Diagnostics::default();
    diagnostics.stages.insert(
        TaskKind::IntentDetection,
        StageReport {
            malformed: intents.malformed,
            ..id.report
        },
    );
    run_slot_stages(utt, intents.span, backend, options, diagnostics)
}

/// Skips intent detection and guides SF/SP with the supplied intents.
pub fn run_pipeline_gold_intents(
    utt: &Utterance,
    gold: &IntentSpan,
    backend: &dyn GenerationBackend,
    options: &PipelineOptions,
) -> Result<SluPrediction, PipelineError> {
    run_slot_stages(utt, gold.clone(), backend, options, Diagnostics::default())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum IntentSource {
    #[default]
    Predicted,
    Gold,
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusRunConfig {
    pub options: PipelineOptions,
    pub parallelism: usize,
    pub intents: IntentSource,
}

impl Default for CorpusRunConfig {
    fn default() -> Self {
        Self {
            options: PipelineOptions::default(),
            parallelism: 4,
            intents: IntentSource::Predicted,
        }
    }
}

#[derive(Debug)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub result: Result<SluPrediction, PipelineError>,
}

fn gold_intents(sample: &RawSample, lexicon: &LabelLexicon) -> Result<IntentSpan, PipelineError> {
    let descriptions = sample
        .intents
        .iter()
        .map(|raw| lexicon.describe(Namespace::Intent, raw))
        .collect::<Result<Vec<_>, LexiconError>>()
        .map_err(|e| PipelineError::GoldIntents(e.to_string()))?;
    IntentSpan::new(descriptions).map_err(|e| PipelineError::GoldIntents(e.to_string()))
}

/// Runs every sample, up to `parallelism` at a time. A failing sample is
/// reported in its own outcome and does not stop the others. Outcomes are in
/// corpus order.
pub fn run_corpus(
    samples: &[RawSample],
    backend: &dyn GenerationBackend,
    lexicon: &LabelLexicon,
    config: &CorpusRunConfig,
) -> Result<Vec<SampleOutcome>, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let outcomes = pool.install(|| {
        samples
            .par_iter()
            .map(|sample| {
                let result = match config.intents {
                    IntentSource::Predicted => {
                        run_pipeline(&sample.utterance, backend, &config.options)
                    }
                    IntentSource::Gold => gold_intents(sample, lexicon).and_then(|gold| {
                        run_pipeline_gold_intents(
                            &sample.utterance,
                            &gold,
                            backend,
                            &config.options,
                        )
                    }),
                };
                if let Err(e) = &result {
                    warn!("sample {} failed: {e}", sample.id);
                }
                SampleOutcome {
                    sample_id: sample.id.clone(),
                    result,
                }
            })
            .collect()
    });
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DumpPair {
    pub slot: String,
    pub value: String,
}

/// One line of a prediction dump. Labels are raw dataset labels where the
/// lexicon could map them back, otherwise the generated description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub sample_id: String,
    pub intents: Vec<String>,
    pub pairs: Vec<DumpPair>,
    pub slots: Option<Vec<String>>,
    pub diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DumpRecord {
    pub fn from_prediction(
        sample_id: &str,
        prediction: &SluPrediction,
        lexicon: &LabelLexicon,
    ) -> Self {
        let mut unknown = 0;
        let mut raw = |namespace, description: &str| {
            let label = lexicon.unlabel(namespace, description);
            if !label.is_known() {
                unknown += 1;
            }
            label.into_string()
        };
        let intents = prediction
            .intents
            .intents()
            .iter()
            .map(|d| raw(Namespace::Intent, d))
            .collect();
        let pairs = prediction
            .pairs
            .pairs()
            .iter()
            .map(|p| DumpPair {
                slot: raw(Namespace::Slot, p.slot()),
                value: p.value().to_string(),
            })
            .collect();
        let slots = prediction
            .slots
            .as_ref()
            .map(|s| s.slots().iter().map(|d| raw(Namespace::Slot, d)).collect());
        let mut diagnostics = prediction.diagnostics.clone();
        diagnostics.unknown_labels = unknown;
        Self {
            sample_id: sample_id.to_string(),
            intents,
            pairs,
            slots,
            diagnostics,
            error: None,
        }
    }

    pub fn failure(sample_id: &str, error: &PipelineError) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            intents: Vec::new(),
            pairs: Vec::new(),
            slots: None,
            diagnostics: Diagnostics::default(),
            error: Some(error.to_string()),
        }
    }

    pub fn from_outcome(outcome: &SampleOutcome, lexicon: &LabelLexicon) -> Self {
        match &outcome.result {
            Ok(prediction) => Self::from_prediction(&outcome.sample_id, prediction, lexicon),
            Err(e) => Self::failure(&outcome.sample_id, e),
        }
    }

    pub fn is_failure(&self) -> bool {
        self.error.is_some()
    }
}

pub fn write_dump<'a, W, I>(mut out: W, records: I) -> Result<(), PipelineError>
where
    W: Write,
    I: IntoIterator<Item = &'a DumpRecord>,
{
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dump<R: BufRead>(input: R) -> Result<Vec<DumpRecord>, PipelineError> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).map_err(|source| PipelineError::Record {
                line: idx + 1,
                source,
            })?,
        );
    }
    Ok(records)
}
