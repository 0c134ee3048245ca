mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mhnn::models::RiskVariant;
use mhnn::train::Strategy;

#[derive(Debug, Parser)]
#[command(name = "mhnn", version, about = "Depression detection and self-harm risk triage with convolutional models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with [dataset], [depression], [risk], [synth.*] and [gradcheck] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for JSON outputs; created if absent.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectionArgs {
    #[arg(long)]
    n_post: Option<usize>,
    #[arg(long)]
    n_term: Option<usize>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Depression,
    Risk,
    Raw,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect diagnosed users, match controls and write train/validation/test splits.
    BuildDataset {
        #[command(flatten)]
        common: Common,
        /// JSONL post dump.
        #[arg(long)]
        corpus: PathBuf,
        /// JSONL annotator votes for diagnosis posts.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Generate a synthetic corpus.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[command(flatten)]
        common: Common,
    },
    Train {
        #[command(flatten)]
        common: Common,
        /// `depression`, `risk` or `risk:<variant>`.
        #[arg(long, value_parser = parse_task)]
        task: TaskArg,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<RiskVariant>,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        selection: SelectionArgs,
    },
    /// Score a checkpoint on a labeled split, or score a predictions file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "predictions", requires = "data")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// JSONL rows carrying `gold` and `pred` labels.
        #[arg(long, conflicts_with = "checkpoint")]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        selection: SelectionArgs,
    },
    /// Label unlabeled posts (depression) or threads (risk).
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        selection: SelectionArgs,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// `layers`, `depression`, `risk` or `all`.
        #[arg(long, default_value = "all", value_parser = ["all", "layers", "depression", "risk"])]
        task: String,
    },
    /// Highest-scoring trigram per user for the diagnosed class.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[command(flatten)]
        selection: SelectionArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TaskKind {
    Depression,
    Risk(RiskVariant),
}

#[derive(Debug, Clone, Copy)]
enum TaskArg {
    Depression,
    Risk(Option<RiskVariant>),
}

fn parse_task(s: &str) -> Result<TaskArg, String> {
    match s {
        "depression" => Ok(TaskArg::Depression),
        "risk" => Ok(TaskArg::Risk(None)),
        _ if s.starts_with("risk:") => parse_variant(s).map(|v| TaskArg::Risk(Some(v))),
        _ => Err(format!("unknown task {s:?}; expected depression or risk:<variant>")),
    }
}

fn parse_variant(s: &str) -> Result<RiskVariant, String> {
    s.parse().map_err(|e: mhnn::Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: mhnn::Error| e.to_string())
}

/// Bad flag combinations detected after parsing; exits like a clap error.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    msg = if msg.is_empty() { cause } else { format!("{msg}: {cause}") };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    use commands as c;
    match cli.command {
        Command::BuildDataset { common, corpus, annotations } => c::build_dataset(&common, &corpus, annotations),
        Command::Synth { kind, common } => c::synth(&common, kind),
        Command::Train { common, task, variant, data, epochs, selection } => {
            let task = match (task, variant) {
                (TaskArg::Depression, None) => TaskKind::Depression,
                (TaskArg::Depression, Some(_)) => return Err(Usage("--variant only applies to risk tasks".into()).into()),
                (TaskArg::Risk(Some(a)), Some(b)) if a != b => {
                    return Err(Usage(format!("--task names {} but --variant names {}", a.name(), b.name())).into())
                }
                (TaskArg::Risk(v), w) => TaskKind::Risk(v.or(w).ok_or_else(|| Usage("risk training needs a variant".into()))?),
            };
            c::train(&common, task, &data, epochs, &selection)
        }
        Command::Evaluate { common, checkpoint, data, split, predictions, selection } => match (checkpoint, predictions) {
            (_, Some(p)) => c::evaluate_predictions(&common, &p),
            (Some(ck), None) => c::evaluate(&common, &ck, &data.expect("clap requires data"), &split, &selection),
            (None, None) => unreachable!("clap requires one of them"),
        },
        Command::Predict { common, checkpoint, input, selection } => c::predict(&common, &checkpoint, &input, &selection),
        Command::Gradcheck { common, task } => c::gradcheck(&common, &task),
        Command::Explain { common, checkpoint, data, split, m, selection } => {
            c::explain(&common, &checkpoint, &data, &split, m, &selection)
        }
    }
}
