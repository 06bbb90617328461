//! Command-line pipelines: convert, train, generate, eval-gen, embed and
//! eval-prop.
//!
//! Every command resolves a [`RunConfig`] and writes it to its output
//! directory as `<command>.config`. Exit codes: 0 success, 1 domain failure
//! (bad molecules, unusable data or checkpoints), 2 I/O failure, 3 bad
//! configuration or usage.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{checkpoint_id, cmd_convert, cmd_embed, cmd_eval_gen, cmd_eval_prop, cmd_generate, cmd_train};
pub use config::{parse_pairs, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Domain(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Config(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "selfbart", version, about = "SELFIES denoising model: data conversion, training, generation and evaluation")]
struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// key=value file; later flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any key, e.g. --set steps=200. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// smiles-to-selfies or selfies-to-smiles.
    #[arg(long)]
    direction: Option<String>,
    /// Exit 0 even when some lines fail.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// SMILES corpus, one molecule per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    /// Train in 64-bit arithmetic.
    #[arg(long)]
    f64: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    f64: bool,
}

#[derive(Debug, Args)]
struct EvalGenArgs {
    #[command(flatten)]
    common: Common,
    /// SELFIES file written by generate.
    #[arg(long)]
    generated: Option<PathBuf>,
    /// SMILES of the training molecules.
    #[arg(long)]
    training_canon: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long)]
    width: Option<usize>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    f64: bool,
}

#[derive(Debug, Args)]
struct EvalPropArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// CSV with a header row.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// key=value file naming the task type and label columns.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    f64: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert SMILES lines to SELFIES or back.
    Convert(ConvertArgs),
    /// Build a vocabulary and train the denoising model.
    Train(TrainArgs),
    /// Sample molecules from a checkpoint.
    Generate(GenerateArgs),
    /// Score a generated set: validity, unique@k, novelty, IntDiv.
    EvalGen(EvalGenArgs),
    /// Write mean-pooled encoder embeddings, one CSV row per input line.
    Embed(EmbedArgs),
    /// Fit a linear probe on embeddings and report ROC-AUC or RMSE.
    EvalProp(EvalPropArgs),
}

fn path_text(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.to_string_lossy().into_owned())
}

fn resolve(
    name: &'static str,
    defaults: &[(&str, &str)],
    common: &Common,
    threads: Option<usize>,
    flags: Vec<(&str, Option<String>)>,
) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::new(name, defaults);
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        config.merge_text(&text)?;
    }
    for assignment in &common.set {
        config.merge_assignment(assignment)?;
    }
    let shared = [
        ("seed", common.seed.map(|s| s.to_string())),
        ("out_dir", path_text(&common.out_dir)),
        ("threads", threads.map(|t| t.to_string())),
    ];
    for (key, value) in shared.into_iter().chain(flags) {
        if let Some(v) = value {
            config.set(key, v)?;
        }
    }
    Ok(config)
}

fn switch(on: bool, value: &str) -> Option<String> {
    on.then(|| value.to_owned())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let t = cli.threads;
    let config = match &cli.command {
        Command::Convert(a) => resolve(
            "convert",
            commands::CONVERT_KEYS,
            &a.common,
            t,
            vec![
                ("input", path_text(&a.input)),
                ("output", path_text(&a.output)),
                ("direction", a.direction.clone()),
                ("lenient", switch(a.lenient, "true")),
            ],
        )?,
        Command::Train(a) => resolve(
            "train",
            commands::TRAIN_KEYS,
            &a.common,
            t,
            vec![
                ("corpus", path_text(&a.corpus)),
                ("steps", a.steps.map(|s| s.to_string())),
                ("precision", switch(a.f64, "f64")),
            ],
        )?,
        Command::Generate(a) => resolve(
            "generate",
            commands::GENERATE_KEYS,
            &a.common,
            t,
            vec![
                ("checkpoint", path_text(&a.checkpoint)),
                ("vocab", path_text(&a.vocab)),
                ("n", a.n.map(|n| n.to_string())),
                ("temperature", a.temperature.map(|x| x.to_string())),
                ("precision", switch(a.f64, "f64")),
            ],
        )?,
        Command::EvalGen(a) => resolve(
            "eval-gen",
            commands::EVAL_GEN_KEYS,
            &a.common,
            t,
            vec![
                ("generated", path_text(&a.generated)),
                ("training_canon", path_text(&a.training_canon)),
                ("k", a.k.map(|k| k.to_string())),
                ("radius", a.radius.map(|r| r.to_string())),
                ("width", a.width.map(|w| w.to_string())),
            ],
        )?,
        Command::Embed(a) => resolve(
            "embed",
            commands::EMBED_KEYS,
            &a.common,
            t,
            vec![
                ("checkpoint", path_text(&a.checkpoint)),
                ("vocab", path_text(&a.vocab)),
                ("input", path_text(&a.input)),
                ("output", path_text(&a.output)),
                ("lenient", switch(a.lenient, "true")),
                ("precision", switch(a.f64, "f64")),
            ],
        )?,
        Command::EvalProp(a) => resolve(
            "eval-prop",
            commands::EVAL_PROP_KEYS,
            &a.common,
            t,
            vec![
                ("checkpoint", path_text(&a.checkpoint)),
                ("vocab", path_text(&a.vocab)),
                ("dataset", path_text(&a.dataset)),
                ("manifest", path_text(&a.manifest)),
                ("precision", switch(a.f64, "f64")),
            ],
        )?,
    };
    let threads: usize = config.get("threads")?;
    // A second call in the same process keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    match config.command() {
        "convert" => cmd_convert(config),
        "train" => cmd_train(config),
        "generate" => cmd_generate(config),
        "eval-gen" => cmd_eval_gen(config),
        "embed" => cmd_embed(config),
        _ => cmd_eval_prop(config),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
