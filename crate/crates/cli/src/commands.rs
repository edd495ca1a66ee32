use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use prompt_slu::backend::{GenerationBackend, HttpBackend, HttpConfig, OracleBackend};
use prompt_slu::dataset::{
    expand_split, group_for_weighted, register_corpus_labels, write_examples, CorpusSplits,
    ExampleOptions, RawSample, Split,
};
use prompt_slu::eval::{evaluate_corpus, write_metrics_csv, write_per_sample_csv};
use prompt_slu::pipeline::{
    read_dump, run_corpus, write_dump, CorpusRunConfig, DumpRecord, IntentSource, PipelineOptions,
};
use prompt_slu::prompt::PromptBuilder;
use prompt_slu::{IntentSpan, LabelLexicon, MetricsReport, Namespace, TaskKind};

use crate::config::{BackendSpec, BuildSettings, EvalSettings, InferSettings, Layout};
use crate::error::CliError;

fn load_corpus(dir: &Path) -> Result<CorpusSplits, CliError> {
    CorpusSplits::load_dir(dir).map_err(|e| CliError::data(format!("corpus {}", dir.display()), e))
}

fn split_samples(corpus: &CorpusSplits, split: Split) -> Result<&[RawSample], CliError> {
    corpus
        .get(split)
        .ok_or_else(|| CliError::Data(format!("corpus has no {} split", split.file_name())))
}

/// Explicit entries from `path` when it exists, plus every label the corpus uses.
fn load_lexicon(path: Option<&Path>, corpus: &CorpusSplits) -> Result<LabelLexicon, CliError> {
    let mut lexicon = match path {
        Some(p) if p.exists() => LabelLexicon::load(p)
            .map_err(|e| CliError::data(format!("lexicon {}", p.display()), e))?,
        Some(p) => {
            warn!(
                "lexicon {} not found; using default label descriptions",
                p.display()
            );
            LabelLexicon::empty()
        }
        None => {
            warn!("no lexicon given; using default label descriptions");
            LabelLexicon::empty()
        }
    };
    register_corpus_labels(&mut lexicon, corpus.all_samples())
        .map_err(|e| CliError::data("corpus labels", e))?;
    Ok(lexicon)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::data(parent.display(), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(path.display(), e))
}

#[derive(Debug, Serialize)]
struct DatasetStats {
    seed: u64,
    sig: bool,
    layouts: Vec<&'static str>,
    samples: BTreeMap<Split, usize>,
    files: BTreeMap<String, usize>,
}

pub fn build_dataset(settings: BuildSettings) -> Result<(), CliError> {
    let corpus = load_corpus(&settings.corpus)?;
    let lexicon = load_lexicon(settings.lexicon.as_deref(), &corpus)?;
    let splits: Vec<Split> = match settings.splits {
        Some(split) => vec![split],
        None => corpus.iter().map(|(s, _)| s).collect(),
    };
    let options = ExampleOptions {
        sig: settings.sig,
        builder: PromptBuilder::default(),
    };
    let mut stats = DatasetStats {
        seed: settings.seed,
        sig: settings.sig,
        layouts: settings.layouts.iter().map(|l| l.as_str()).collect(),
        samples: BTreeMap::new(),
        files: BTreeMap::new(),
    };
    for split in splits {
        let samples = split_samples(&corpus, split)?;
        stats.samples.insert(split, samples.len());
        for layout in &settings.layouts {
            let examples = match layout {
                Layout::Split => expand_split(samples, &lexicon, options, Some(settings.seed)),
                Layout::Weighted => group_for_weighted(samples, &lexicon, options)
                    .map(|groups| groups.into_iter().flat_map(|g| g.examples).collect()),
            }
            .map_err(|e| CliError::data(split.file_name(), e))?;
            let name = format!("{split}.{}.jsonl", layout.as_str());
            let path = settings.out.join(&name);
            write_examples(create(&path)?, &examples)
                .map_err(|e| CliError::data(path.display(), e))?;
            info!("wrote {} examples to {}", examples.len(), path.display());
            stats.files.insert(name, examples.len());
        }
    }
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    let stats_path = settings.out.join("stats.json");
    let mut out = create(&stats_path)?;
    writeln!(out, "{json}")
        .and_then(|_| out.flush())
        .map_err(|e| CliError::data(stats_path.display(), e))?;
    println!("{json}");
    Ok(())
}

fn gold_intents(sample: &RawSample, lexicon: &LabelLexicon) -> Result<IntentSpan, CliError> {
    let descriptions = sample
        .intents
        .iter()
        .map(|raw| lexicon.describe(Namespace::Intent, raw))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::data(&sample.id, e))?;
    IntentSpan::new(descriptions).map_err(|e| CliError::data(&sample.id, e))
}

/// Prints the prompts a run would send. Without a backend there are no
/// predicted intents, so guided prompts carry the gold ones.
fn print_prompts(
    samples: &[RawSample],
    lexicon: &LabelLexicon,
    options: &PipelineOptions,
) -> Result<(), CliError> {
    let mut tasks = vec![TaskKind::IntentDetection, TaskKind::SlotFilling];
    if options.run_sp {
        tasks.push(TaskKind::SlotPrediction);
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for sample in samples {
        let intents = gold_intents(sample, lexicon)?;
        for &task in &tasks {
            let prompt = match task {
                TaskKind::IntentDetection => options.builder.build(task, &sample.utterance, None),
                _ if options.sig => options
                    .builder
                    .build(task, &sample.utterance, Some(&intents)),
                _ => options.builder.build_ablated(task, &sample.utterance),
            }
            .map_err(|e| CliError::data(&sample.id, e))?;
            writeln!(out, "{}\t{task}\t{}", sample.id, prompt.text)
                .map_err(|e| CliError::data("stdout", e))?;
        }
    }
    Ok(())
}

fn connect(
    spec: &BackendSpec,
    samples: &[RawSample],
    lexicon: &LabelLexicon,
    settings: &InferSettings,
) -> Result<Box<dyn GenerationBackend>, CliError> {
    match spec {
        BackendSpec::Oracle => OracleBackend::new(samples, lexicon)
            .map(|b| Box::new(b) as Box<dyn GenerationBackend>)
            .map_err(|e| CliError::data("oracle", e)),
        BackendSpec::Http(url) => {
            let config = HttpConfig {
                timeout: settings.timeout,
                max_in_flight: settings.parallelism * 2,
                ..HttpConfig::new(url.clone())
            };
            HttpBackend::connect_verified(config)
                .map(|b| Box::new(b) as Box<dyn GenerationBackend>)
                .map_err(|e| CliError::Backend(format!("{url}: {e}")))
        }
    }
}

#[derive(Debug, Serialize)]
struct InferSummary {
    backend: String,
    split: Split,
    samples: usize,
    failed: usize,
    predictions: PathBuf,
}

pub fn infer(settings: InferSettings) -> Result<(), CliError> {
    let corpus = load_corpus(&settings.corpus)?;
    let lexicon = load_lexicon(settings.lexicon.as_deref(), &corpus)?;
    let samples = split_samples(&corpus, settings.split)?;
    let options = PipelineOptions {
        sig: settings.sig,
        run_sp: settings.run_sp,
        max_new_tokens: settings.max_new_tokens,
        builder: PromptBuilder::default(),
    };
    if settings.dry_run {
        return print_prompts(samples, &lexicon, &options);
    }
    let out = settings
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;

    let backend = connect(&settings.backend, samples, &lexicon, &settings)?;
    let config = CorpusRunConfig {
        options,
        parallelism: settings.parallelism,
        intents: if settings.gold_intents {
            IntentSource::Gold
        } else {
            IntentSource::Predicted
        },
    };
    let outcomes = run_corpus(samples, backend.as_ref(), &lexicon, &config)
        .map_err(|e| CliError::Backend(e.to_string()))?;
    let dump: Vec<DumpRecord> = outcomes
        .iter()
        .map(|o| DumpRecord::from_outcome(o, &lexicon))
        .collect();

    let path = out.join("predictions.jsonl");
    write_dump(create(&path)?, &dump).map_err(|e| CliError::data(path.display(), e))?;
    let failed = dump.iter().filter(|r| r.is_failure()).count();
    let summary = InferSummary {
        backend: backend.backend_id().to_string(),
        split: settings.split,
        samples: dump.len(),
        failed,
        predictions: path.clone(),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    if failed > 0 {
        return Err(CliError::Backend(format!(
            "{failed} of {} samples failed; see the error field in {}",
            dump.len(),
            path.display()
        )));
    }
    Ok(())
}

pub fn evaluate(settings: EvalSettings) -> Result<MetricsReport, CliError> {
    let corpus = load_corpus(&settings.corpus)?;
    let lexicon = load_lexicon(settings.lexicon.as_deref(), &corpus)?;
    let samples = split_samples(&corpus, settings.split)?;
    let file = File::open(&settings.predictions)
        .map_err(|e| CliError::data(settings.predictions.display(), e))?;
    let dump = read_dump(BufReader::new(file))
        .map_err(|e| CliError::data(settings.predictions.display(), e))?;
    let failed = dump.iter().filter(|r| r.is_failure()).count();
    if failed > 0 {
        warn!("{failed} failed samples are scored as empty predictions");
    }
    let evaluation =
        evaluate_corpus(&dump, samples, &lexicon).map_err(|e| CliError::data("evaluation", e))?;

    let metrics_path = settings.out.join("metrics.csv");
    write_metrics_csv(create(&metrics_path)?, &evaluation.report)
        .map_err(|e| CliError::data(metrics_path.display(), e))?;
    let per_sample_path = settings.out.join("per_sample.csv");
    write_per_sample_csv(create(&per_sample_path)?, &evaluation.per_sample)
        .map_err(|e| CliError::data(per_sample_path.display(), e))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&evaluation.report).expect("report serializes")
    );
    Ok(evaluation.report)
}
