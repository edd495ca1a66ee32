mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{BuildSettings, EvalSettings, InferSettings, Layer};
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "prompt-slu",
    version,
    about = "Multi-intent SLU as staged text generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expand a corpus into text-generation training files.
    BuildDataset(BuildArgs),
    /// Run staged inference over a corpus split and write a prediction dump.
    Infer(InferArgs),
    /// Score a prediction dump against the gold corpus.
    Evaluate(EvalArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// TOML file supplying any of these flags; flags given here win.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Directory holding train.txt, dev.txt and test.txt.
    #[arg(long)]
    corpus: Option<PathBuf>,

    /// train, dev or test.
    #[arg(long)]
    split: Option<String>,

    /// Tab-separated label descriptions. Missing means default descriptions.
    #[arg(long)]
    lexicon: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SigFlags {
    /// Embed intents into slot prompts (default).
    #[arg(long, overrides_with = "no_sig")]
    sig: bool,

    /// Use the prompts without the intent segment.
    #[arg(long, overrides_with = "sig")]
    no_sig: bool,
}

impl SigFlags {
    fn value(&self) -> Option<bool> {
        match (self.sig, self.no_sig) {
            (_, true) => Some(false),
            (true, false) => Some(true),
            (false, false) => None,
        }
    }
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    sig: SigFlags,

    /// split or weighted; both when omitted.
    #[arg(long)]
    layout: Option<String>,

    /// Shuffle seed for the split layout.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    sig: SigFlags,

    /// `oracle` or `http:<url>`.
    #[arg(long)]
    backend: Option<String>,

    /// Also run slot prediction.
    #[arg(long)]
    run_sp: bool,

    /// Guide slot filling with gold intents instead of predicted ones.
    #[arg(long)]
    gold_intents: bool,

    /// Samples processed concurrently.
    #[arg(long)]
    parallelism: Option<usize>,

    #[arg(long)]
    max_new_tokens: Option<u32>,

    /// Per-request deadline for the HTTP backend.
    #[arg(long)]
    timeout_secs: Option<u64>,

    /// Print the prompts instead of calling the backend.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Prediction dump written by `infer`.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

fn flag(set: bool) -> Option<bool> {
    set.then_some(true)
}

impl CommonArgs {
    fn layer(&self) -> Layer {
        Layer {
            corpus: self.corpus.clone(),
            split: self.split.clone(),
            lexicon: self.lexicon.clone(),
            out: self.out.clone(),
            ..Layer::default()
        }
    }

    /// Flags over the config file, if any.
    fn merge(&self, flags: Layer) -> Result<Layer, CliError> {
        let file = match &self.config {
            Some(path) => Layer::load(path)?,
            None => Layer::default(),
        };
        Ok(flags.over(self.layer()).over(file))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildDataset(args) => {
            let layer = args.common.merge(Layer {
                sig: args.sig.value(),
                layout: args.layout,
                seed: args.seed,
                ..Layer::default()
            })?;
            commands::build_dataset(BuildSettings::resolve(layer)?)
        }
        Command::Infer(args) => {
            let layer = args.common.merge(Layer {
                sig: args.sig.value(),
                backend: args.backend,
                run_sp: flag(args.run_sp),
                gold_intents: flag(args.gold_intents),
                parallelism: args.parallelism,
                max_new_tokens: args.max_new_tokens,
                timeout_secs: args.timeout_secs,
                dry_run: flag(args.dry_run),
                ..Layer::default()
            })?;
            commands::infer(InferSettings::resolve(layer)?)
        }
        Command::Evaluate(args) => {
            let layer = args.common.merge(Layer {
                predictions: args.predictions,
                ..Layer::default()
            })?;
            commands::evaluate(EvalSettings::resolve(layer)?).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
