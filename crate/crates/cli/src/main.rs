//! `coauthor`: synthesize co-authored corpora, train and apply the boundary
//! tagger, and report on the results.

mod commands;
mod config;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, missing or malformed input. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// Anything else. Exit code 1.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Internal(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "coauthor", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run config; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving every output and the resolved config snapshot.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed applied to every random stream of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool width (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct EvalFlags {
    /// viterbi or posterior.
    #[arg(long)]
    decoder: Option<String>,
    /// human, machine or both.
    #[arg(long)]
    positive: Option<String>,
    /// Comma-separated subset of language,case,generator, or `none`.
    #[arg(long)]
    group_by: Option<String>,
    /// Normalise homoglyphs and invisible characters before featurizing.
    #[arg(long)]
    normalize: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build a labeled co-authored corpus from human sources.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Source texts: JSONL documents or one plain-text document per line.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Generate this many offline human-style sources instead of reading
        /// `--input`.
        #[arg(long)]
        mock_sources: Option<usize>,
        /// Number of offline mock generators.
        #[arg(long)]
        mock_generators: Option<usize>,
        /// Chat-completions endpoint; replaces the mocks.
        #[arg(long)]
        endpoint: Option<String>,
        /// Model name sent to `--endpoint`.
        #[arg(long)]
        model_name: Option<String>,
        /// Language tag of plain-text sources.
        #[arg(long)]
        lang: Option<String>,
    },
    /// Train the tagger on a corpus.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long)]
        l2: Option<f64>,
        #[arg(long)]
        dropout: Option<f64>,
        /// sgd or adagrad.
        #[arg(long)]
        optimizer: Option<String>,
    },
    /// Label every document of a corpus (gold spans not needed).
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        decoder: Option<String>,
        #[arg(long)]
        normalize: bool,
    },
    /// Score a model against a labeled corpus.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Boundary length statistics and boundary bigram audit of a corpus.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Apply a perturbation to every document, keeping labels aligned.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// homoglyph, misspelling, alternative_spelling, article_deletion,
        /// whitespace or paraphrase_stub.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Evaluate and analyze in one go, plus SVG charts of per-group F1.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalFlags,
    },
}

fn base_config(name: &str, common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.command = name.to_string();
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &common.out_dir {
        cfg.paths.out_dir = Some(o.clone());
    }
    cfg.apply_seed();
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        *slot = value.clone();
    }
}

fn apply_eval(cfg: &mut RunConfig, flags: &EvalFlags) -> Result<(), CliError> {
    if let Some(d) = &flags.decoder {
        cfg.evaluation.decoder = d.parse().map_err(CliError::Input)?;
    }
    if let Some(p) = &flags.positive {
        cfg.evaluation.positive = commands::parse_positive(p)?;
    }
    if let Some(g) = &flags.group_by {
        cfg.evaluation.group_by = commands::parse_group_by(g)?;
    }
    cfg.evaluation.normalize |= flags.normalize;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synthesize {
            common,
            input,
            mock_sources,
            mock_generators,
            endpoint,
            model_name,
            lang,
        } => {
            let mut cfg = base_config("synthesize", &common)?;
            set_path(&mut cfg.paths.input, &input);
            set(&mut cfg.generator.mock_sources, mock_sources);
            set(&mut cfg.generator.mock, mock_generators);
            set(&mut cfg.generator.language, lang);
            if let Some(url) = endpoint {
                let mut http = cfg.generator.endpoints.first().cloned().unwrap_or_default();
                http.url = url;
                if let Some(m) = model_name {
                    http.model = m;
                }
                cfg.generator.endpoints = vec![http];
            }
            if cfg.jobs > 0 {
                cfg.synthesis.max_in_flight = cfg.jobs;
            }
            commands::synthesize(&cfg)
        }
        Command::Train {
            common,
            corpus,
            epochs,
            batch_size,
            step_size,
            l2,
            dropout,
            optimizer,
        } => {
            let mut cfg = base_config("train", &common)?;
            set_path(&mut cfg.paths.corpus, &corpus);
            let t = &mut cfg.training;
            set(&mut t.epochs, epochs);
            set(&mut t.batch_size, batch_size);
            set(&mut t.step_size, step_size);
            set(&mut t.l2, l2);
            set(&mut t.feature_dropout, dropout);
            if let Some(o) = optimizer {
                t.optimizer = serde_json::from_value(serde_json::Value::String(o.clone()))
                    .map_err(|_| {
                        CliError::Input(format!(
                            "unknown optimizer {o:?} (expected sgd or adagrad)"
                        ))
                    })?;
            }
            commands::train(&cfg)
        }
        Command::Predict {
            common,
            model,
            corpus,
            decoder,
            normalize,
        } => {
            let mut cfg = base_config("predict", &common)?;
            set_path(&mut cfg.paths.model, &model);
            set_path(&mut cfg.paths.corpus, &corpus);
            if let Some(d) = decoder {
                cfg.evaluation.decoder = d.parse().map_err(CliError::Input)?;
            }
            cfg.evaluation.normalize |= normalize;
            commands::predict(&cfg)
        }
        Command::Evaluate {
            common,
            model,
            corpus,
            eval,
        } => {
            let mut cfg = base_config("evaluate", &common)?;
            set_path(&mut cfg.paths.model, &model);
            set_path(&mut cfg.paths.corpus, &corpus);
            apply_eval(&mut cfg, &eval)?;
            commands::evaluate(&cfg).map(|_| ())
        }
        Command::Analyze { common, corpus } => {
            let mut cfg = base_config("analyze", &common)?;
            set_path(&mut cfg.paths.corpus, &corpus);
            commands::analyze(&cfg)
        }
        Command::Attack {
            common,
            corpus,
            kind,
            rate,
        } => {
            let mut cfg = base_config("attack", &common)?;
            set_path(&mut cfg.paths.corpus, &corpus);
            set(&mut cfg.attack.kind, kind);
            set(&mut cfg.attack.rate, rate);
            commands::attack(&cfg)
        }
        Command::Report {
            common,
            model,
            corpus,
            eval,
        } => {
            let mut cfg = base_config("report", &common)?;
            set_path(&mut cfg.paths.model, &model);
            set_path(&mut cfg.paths.corpus, &corpus);
            apply_eval(&mut cfg, &eval)?;
            commands::report(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
