//! `jargon`: run the detection pipeline from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{EvalPredictor, InputError};
use config::{ConfigError, RunConfig, KEY_HELP};
use jargon::synth::SynthConfig;

#[derive(Parser)]
#[command(name = "jargon", version, about = "Context-aware drug-jargon detection", after_long_help = KEY_HELP)]
struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. --set train.max_epochs=3.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Artifact directory (paths.workdir).
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Global seed (rng_seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// POS lexicon, word<TAB>tag (paths.lexicon).
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, clean and filter raw posts into the sentence store.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Label the store by distant supervision and sample negatives.
    BuildDataset {
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        r_stms: Option<usize>,
        #[arg(long)]
        r_nonstms: Option<f64>,
        #[arg(long)]
        no_neg_stms: bool,
    },
    /// Domain-adaptive masked-LM training of the encoder.
    Pretrain {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        no_pretrain: bool,
    },
    /// Train the ensemble classifier.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        no_word_head: bool,
        #[arg(long)]
        no_pretrain: bool,
    },
    /// Classify one word in one sentence; prints JSON.
    Detect {
        #[arg(long)]
        sentence: String,
        #[arg(long)]
        word: String,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score every noun in the store and write the ranked jargon list.
    ExtractList {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        n: Option<u32>,
    },
    /// Precision, recall and F1 on annotated sentences.
    Evaluate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, conflicts_with_all = ["list", "mlm_k"])]
        model: Option<PathBuf>,
        /// Evaluate a word list (one per line) instead of the model.
        #[arg(long, conflicts_with = "mlm_k")]
        list: Option<PathBuf>,
        /// Evaluate the masked-LM top-K baseline with this K.
        #[arg(long)]
        mlm_k: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cohen's kappa of two aligned 0/1 label files.
    Kappa {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a baseline: word2vec writes a word list; mlm evaluates on annotations.
    Baseline {
        kind: BaselineKind,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the synthetic corpus, seeds, lexicon and annotations.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sentences: Option<usize>,
        #[arg(long)]
        synth_seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Word2vec,
    Mlm,
}

fn push(sets: &mut Vec<String>, key: &str, value: impl std::fmt::Display) {
    sets.push(format!("{key}={value}"));
}

fn path_value(p: &std::path::Path) -> String {
    // quoted TOML string; escape backslashes and quotes
    format!("\"{}\"", p.display().to_string().replace('\\', "\\\\").replace('"', "\\\""))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut sets = cli.sets.clone();
    if let Some(w) = &cli.workdir {
        push(&mut sets, "paths.workdir", path_value(w));
    }
    if let Some(s) = cli.seed {
        push(&mut sets, "rng_seed", s);
    }
    if let Some(l) = &cli.lexicon {
        push(&mut sets, "paths.lexicon", path_value(l));
    }
    match &cli.command {
        Command::Ingest { corpus: Some(c) } => push(&mut sets, "paths.corpus", path_value(c)),
        Command::BuildDataset {
            seeds,
            r_stms,
            r_nonstms,
            no_neg_stms,
        } => {
            if let Some(s) = seeds {
                push(&mut sets, "paths.seeds", path_value(s));
            }
            if let Some(r) = r_stms {
                push(&mut sets, "sampling.r_stms", r);
            }
            if let Some(r) = r_nonstms {
                push(&mut sets, "sampling.r_nonstms", format!("{r:?}"));
            }
            if *no_neg_stms {
                push(&mut sets, "ablation.no_neg_stms", true);
            }
        }
        Command::Pretrain { epochs, no_pretrain } => {
            if let Some(e) = epochs {
                push(&mut sets, "pretrain.epochs", e);
            }
            if *no_pretrain {
                push(&mut sets, "ablation.no_pretrain", true);
            }
        }
        Command::Train {
            epochs,
            learning_rate,
            no_word_head,
            no_pretrain,
        } => {
            if let Some(e) = epochs {
                push(&mut sets, "train.max_epochs", e);
            }
            if let Some(lr) = learning_rate {
                push(&mut sets, "train.learning_rate", format!("{lr:?}"));
            }
            if *no_word_head {
                push(&mut sets, "ablation.no_word_head", true);
            }
            if *no_pretrain {
                push(&mut sets, "ablation.no_pretrain", true);
            }
        }
        Command::ExtractList { top_k, n, .. } => {
            if let Some(k) = top_k {
                push(&mut sets, "score.top_k", k);
            }
            if let Some(n) = n {
                push(&mut sets, "score.n", n);
            }
        }
        Command::Baseline { k: Some(k), .. } => push(&mut sets, "baseline.mlm_k", k),
        _ => {}
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &sets)?.resolve()?;

    match cli.command {
        Command::Ingest { .. } => commands::ingest(&cfg),
        Command::BuildDataset { .. } => commands::build(&cfg),
        Command::Pretrain { .. } => commands::pretrain(&cfg),
        Command::Train { .. } => commands::train_cmd(&cfg),
        Command::Detect { sentence, word, model } => commands::detect(&cfg, &sentence, &word, model.as_deref()),
        Command::ExtractList { model, .. } => commands::extract(&cfg, model.as_deref()),
        Command::Evaluate {
            annotations,
            model,
            list,
            mlm_k,
            output,
        } => {
            let predictor = match (list, mlm_k) {
                (Some(l), _) => EvalPredictor::List(l),
                (None, Some(k)) => EvalPredictor::Mlm(k),
                (None, None) => EvalPredictor::Model(model),
            };
            commands::evaluate_cmd(&cfg, &annotations, predictor, output.as_deref())
        }
        Command::Kappa { a, b, output } => commands::kappa(&cfg, &a, &b, output.as_deref()),
        Command::Baseline {
            kind,
            annotations,
            output,
            ..
        } => match kind {
            BaselineKind::Word2vec => commands::baseline_word2vec_cmd(&cfg),
            BaselineKind::Mlm => {
                let Some(ann) = annotations else {
                    anyhow::bail!(ConfigError("baseline mlm needs --annotations".into()));
                };
                let out = output.unwrap_or_else(|| cfg.paths.workdir.join("baseline_mlm_metrics.json"));
                commands::evaluate_cmd(&cfg, &ann, EvalPredictor::Mlm(cfg.baseline.mlm_k), Some(&out))
            }
        },
        Command::Synth {
            out,
            sentences,
            synth_seed,
        } => {
            let mut sc = SynthConfig::default();
            if let Some(n) = sentences {
                sc.sentences = n;
            }
            if let Some(s) = synth_seed {
                sc.seed = s;
            }
            commands::synth(&cfg, &out, &sc)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if err.downcast_ref::<InputError>().is_some() {
        return 3;
    }
    if let Some(e) = err.downcast_ref::<jargon::Error>() {
        use jargon::Error::*;
        return match e {
            Config(_) => 2,
            UnreadableInput { .. }
            | Malformed { .. }
            | EmptySeedList
            | EmptyStore
            | EmptyCorpus
            | EmptyDataset
            | DegenerateDataset(_)
            | WordNotInSentence(_)
            | SentenceRejectedByFilter
            | SpanOutOfRange { .. }
            | LengthMismatch(..) => 3,
            _ => 4,
        };
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
