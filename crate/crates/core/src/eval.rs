//! Slot F1, Intent Acc and Overall Acc.
//!
//! Pairs are compared as `(raw slot label, value)` with whitespace in the
//! value collapsed to single spaces. Repeated pairs are removed from both
//! prediction and gold before counting. Intent Acc and Overall Acc are
//! exact-set matches per utterance.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bio::extract_chunks;
use crate::dataset::RawSample;
use crate::lexicon::{LabelLexicon, Namespace};
use crate::pipeline::DumpRecord;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate: the corpus is empty")]
    EmptyCorpus,
    #[error("prediction ids missing from the gold corpus: {0:?}")]
    UnknownIds(Vec<String>),
    #[error("gold samples without a prediction: {0:?}")]
    MissingPredictions(Vec<String>),
    #[error("duplicate sample ids: {0:?}")]
    DuplicateIds(Vec<String>),
    #[error("gold sample {0}: {1}")]
    Gold(String, String),
    #[error("failed to write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to write csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Pair = (String, String);

/// Predicted and gold frames of one utterance, with raw labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    pub sample_id: String,
    pub pred_intents: BTreeSet<String>,
    pub pred_pairs: Vec<Pair>,
    pub gold_intents: BTreeSet<String>,
    pub gold_pairs: Vec<Pair>,
}

fn normalize_value(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn pair_set(pairs: &[Pair]) -> HashSet<(&str, String)> {
    pairs
        .iter()
        .map(|(slot, value)| (slot.trim(), normalize_value(value)))
        .collect()
}

impl EvalRecord {
    pub fn intents_correct(&self) -> bool {
        self.pred_intents == self.gold_intents
    }

    pub fn slots_correct(&self) -> bool {
        pair_set(&self.pred_pairs) == pair_set(&self.gold_pairs)
    }

    pub fn overall_correct(&self) -> bool {
        self.intents_correct() && self.slots_correct()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotCounts {
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Micro F1 over deduplicated pairs, as a percentage. 100 when there is
/// nothing to find and nothing was predicted.
pub fn slot_f1(records: &[EvalRecord]) -> SlotCounts {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for record in records {
        let pred = pair_set(&record.pred_pairs);
        let gold = pair_set(&record.gold_pairs);
        let hits = pred.intersection(&gold).count();
        tp += hits;
        fp += pred.len() - hits;
        fn_ += gold.len() - hits;
    }
    let f1 = if tp + fp + fn_ == 0 {
        100.0
    } else {
        100.0 * (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    };
    SlotCounts { f1, tp, fp, fn_ }
}

fn accuracy(records: &[EvalRecord], correct: impl Fn(&EvalRecord) -> bool) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let hits = records.iter().filter(|r| correct(r)).count();
    Some(100.0 * hits as f64 / records.len() as f64)
}

/// `None` for an empty record set.
pub fn intent_acc(records: &[EvalRecord]) -> Option<f64> {
    accuracy(records, EvalRecord::intents_correct)
}

/// `None` for an empty record set.
pub fn overall_acc(records: &[EvalRecord]) -> Option<f64> {
    accuracy(records, EvalRecord::overall_correct)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub slot_f1: f64,
    pub intent_acc: f64,
    pub overall_acc: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCorrectness {
    pub sample_id: String,
    pub intent_ok: bool,
    pub slots_ok: bool,
    pub overall_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub per_sample: Vec<SampleCorrectness>,
}

pub fn evaluate_records(records: &[EvalRecord]) -> Result<Evaluation, EvalError> {
    let (Some(intent), Some(overall)) = (intent_acc(records), overall_acc(records)) else {
        return Err(EvalError::EmptyCorpus);
    };
    let slots = slot_f1(records);
    let per_sample = records
        .iter()
        .map(|r| SampleCorrectness {
            sample_id: r.sample_id.clone(),
            intent_ok: r.intents_correct(),
            slots_ok: r.slots_correct(),
            overall_ok: r.overall_correct(),
        })
        .collect();
    Ok(Evaluation {
        report: MetricsReport {
            slot_f1: slots.f1,
            intent_acc: intent,
            overall_acc: overall,
            tp: slots.tp,
            fp: slots.fp,
            fn_: slots.fn_,
            n_samples: records.len(),
        },
        per_sample,
    })
}

fn duplicates<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            dups.insert(id.to_string());
        }
    }
    dups.into_iter().collect()
}

/// Labels that are already raw stay as they are; descriptions go through
/// the lexicon.
fn to_raw(lexicon: &LabelLexicon, namespace: Namespace, label: &str) -> String {
    if lexicon.knows(namespace, label) {
        label.to_string()
    } else {
        lexicon.unlabel(namespace, label).into_string()
    }
}

/// Joins a prediction dump with its gold corpus on sample id. Failed
/// samples count as empty predictions.
pub fn join_with_gold(
    dump: &[DumpRecord],
    gold: &[RawSample],
    lexicon: &LabelLexicon,
) -> Result<Vec<EvalRecord>, EvalError> {
    if dump.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let dup_pred = duplicates(dump.iter().map(|r| r.sample_id.as_str()));
    let dup_gold = duplicates(gold.iter().map(|s| s.id.as_str()));
    if !dup_pred.is_empty() || !dup_gold.is_empty() {
        return Err(EvalError::DuplicateIds(
            dup_pred.into_iter().chain(dup_gold).collect(),
        ));
    }
    let by_id: HashMap<&str, &RawSample> = gold.iter().map(|s| (s.id.as_str(), s)).collect();
    let unknown: Vec<String> = dump
        .iter()
        .filter(|r| !by_id.contains_key(r.sample_id.as_str()))
        .map(|r| r.sample_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownIds(unknown));
    }
    let predicted: HashSet<&str> = dump.iter().map(|r| r.sample_id.as_str()).collect();
    let missing: Vec<String> = gold
        .iter()
        .filter(|s| !predicted.contains(s.id.as_str()))
        .map(|s| s.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }

    dump.iter()
        .map(|record| {
            let sample = by_id[record.sample_id.as_str()];
            let (chunks, _) = extract_chunks(&sample.utterance, &sample.tags)
                .map_err(|e| EvalError::Gold(sample.id.clone(), e.to_string()))?;
            let gold_pairs = chunks
                .iter()
                .map(|c| {
                    (
                        c.slot.clone(),
                        sample.utterance.tokens()[c.start..c.end].join(" "),
                    )
                })
                .collect();
            Ok(EvalRecord {
                sample_id: record.sample_id.clone(),
                pred_intents: record
                    .intents
                    .iter()
                    .map(|i| to_raw(lexicon, Namespace::Intent, i))
                    .collect(),
                pred_pairs: record
                    .pairs
                    .iter()
                    .map(|p| (to_raw(lexicon, Namespace::Slot, &p.slot), p.value.clone()))
                    .collect(),
                gold_intents: sample.intents.iter().cloned().collect(),
                gold_pairs,
            })
        })
        .collect()
}

pub fn evaluate_corpus(
    dump: &[DumpRecord],
    gold: &[RawSample],
    lexicon: &LabelLexicon,
) -> Result<Evaluation, EvalError> {
    evaluate_records(&join_with_gold(dump, gold, lexicon)?)
}

/// `metric,value,tp,fp,fn,n`
pub fn write_metrics_csv<W: Write>(out: W, report: &MetricsReport) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["metric", "value", "tp", "fp", "fn", "n"])?;
    let n = report.n_samples.to_string();
    writer.write_record([
        "slot_f1",
        &format!("{:.4}", report.slot_f1),
        &report.tp.to_string(),
        &report.fp.to_string(),
        &report.fn_.to_string(),
        &n,
    ])?;
    for (name, value) in [
        ("intent_acc", report.intent_acc),
        ("overall_acc", report.overall_acc),
    ] {
        writer.write_record([name, &format!("{value:.4}"), "", "", "", &n])?;
    }
    writer.flush()?;
    Ok(())
}

/// `sample_id,intent_ok,slots_ok,overall_ok`
pub fn write_per_sample_csv<W: Write>(out: W, rows: &[SampleCorrectness]) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
