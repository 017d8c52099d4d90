use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use coauthor_core::adversarial::{attack_corpus, AttackError, AttackKind, ConfusablesTable};
use coauthor_core::corpus::{
    assign_splits, filter_source, read_corpus, write_corpus, CaseKind, CorpusError, Document, Label,
};
use coauthor_core::crf::{load_model, save_model, CrfError, CrfModel};
use coauthor_core::evaluation::{
    accuracy_vs_length, audit_report_csv, boundary_bigram_audit, boundary_stats, evaluate_corpus,
    length_table_csv, length_table_markdown, EvalError, EvalLevel, EvalOptions, EvalReport,
    GroupBy,
};
use coauthor_core::exec::with_width;
use coauthor_core::pipeline::{predict_corpus, train_corpus, PipelineError, PredictOptions};
use coauthor_core::synthesis::{
    compose_corpus, mock, mock_sources, Generator, HttpGenerator, MarkovStyle, MockGenerator,
    SynthesisError,
};
use coauthor_core::Execution;
use serde::Serialize;

use crate::config::RunConfig;
use crate::svg::bar_chart;
use crate::CliError;

pub fn parse_positive(s: &str) -> Result<Option<Label>, CliError> {
    match s {
        "both" => Ok(None),
        other => other.parse::<Label>().map(Some).map_err(|_| {
            CliError::Input(format!(
                "--positive must be human, machine or both, got {other:?}"
            ))
        }),
    }
}

pub fn parse_group_by(s: &str) -> Result<GroupBy, CliError> {
    let mut g = GroupBy {
        language: false,
        case: false,
        generator: false,
    };
    if s == "none" {
        return Ok(g);
    }
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "language" => g.language = true,
            "case" => g.case = true,
            "generator" => g.generator = true,
            other => {
                return Err(CliError::Input(format!(
                    "--group-by takes language, case, generator or none, got {other:?}"
                )))
            }
        }
    }
    Ok(g)
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| {
        CliError::Input(format!(
            "missing --{flag} (or paths.{} in the config)",
            flag.replace('-', "_")
        ))
    })
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = require(&cfg.paths.out_dir, "out-dir")?.to_path_buf();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn corpus_error(path: &Path, e: CorpusError) -> CliError {
    match e {
        CorpusError::Io(io) => CliError::Input(format!("cannot read {}: {io}", path.display())),
        other => CliError::Input(format!("{}: {other}", path.display())),
    }
}

fn load_corpus(path: &Path) -> Result<Vec<Document>, CliError> {
    read_corpus(path).map_err(|e| corpus_error(path, e))
}

fn load(path: &Path) -> Result<CrfModel, CliError> {
    load_model(path).map_err(|e| match e {
        CrfError::Io(io) => CliError::Input(format!("cannot read model {}: {io}", path.display())),
        other => CliError::Input(format!("model {}: {other}", path.display())),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| CliError::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn read_sources(cfg: &RunConfig) -> Result<Vec<Document>, CliError> {
    let g = &cfg.generator;
    if g.mock_sources > 0 {
        if g.mock_min_words == 0 || g.mock_min_words > g.mock_max_words {
            return Err(CliError::Input("mock source word range is empty".into()));
        }
        let style = MarkovStyle::new(mock::HUMAN_STYLE_SEED, mock::DEFAULT_DIVERGENCE);
        return mock_sources(
            g.mock_sources,
            g.mock_min_words,
            g.mock_max_words,
            &style,
            cfg.synthesis.seed,
        )
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            Document::single(
                format!("src-{i:06}"),
                &g.language,
                CaseKind::Human,
                None,
                text,
                Label::Human,
            )
            .map_err(internal)
        })
        .collect();
    }
    let path = require(&cfg.paths.input, "input")?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let jsonl = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    if jsonl {
        return load_corpus(path);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            Document::single(
                format!("src-{i:06}"),
                &g.language,
                CaseKind::Human,
                None,
                l.trim(),
                Label::Human,
            )
        })
        .collect::<Result<_, _>>()
        .map_err(internal)
}

#[derive(Serialize)]
struct Manifest<'a> {
    sources: usize,
    filtered_out: usize,
    documents: usize,
    planned: BTreeMap<&'static str, usize>,
    cases: BTreeMap<&'static str, usize>,
    generators: BTreeMap<String, usize>,
    splits: BTreeMap<&'static str, usize>,
    failures: &'a [coauthor_core::synthesis::Failure],
}

pub fn synthesize(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    cfg.synthesis
        .validate()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let sources = read_sources(cfg)?;
    let total = sources.len();
    let kept: Vec<Document> = sources
        .into_iter()
        .filter(|d| filter_source(&d.text, &d.language))
        .collect();
    let clients: Vec<Box<dyn Generator>> = if cfg.generator.endpoints.is_empty() {
        (0..cfg.generator.mock)
            .map(|k| Box::new(MockGenerator::numbered(k)) as Box<dyn Generator>)
            .collect()
    } else {
        cfg.generator
            .endpoints
            .iter()
            .map(|h| Box::new(HttpGenerator::new(h.clone())) as Box<dyn Generator>)
            .collect()
    };
    let outcome = compose_corpus(&kept, &clients, &cfg.synthesis).map_err(|e| match e {
        SynthesisError::InvalidConfig(_) | SynthesisError::NoGenerators => {
            CliError::Input(e.to_string())
        }
        other => internal(other),
    })?;
    let mut docs: Vec<Document> = outcome
        .samples
        .into_iter()
        .map(|s| s.into_document())
        .collect();
    let split = assign_splits(&mut docs, cfg.synthesis.seed);
    write_corpus(out.join("corpus.jsonl"), &docs).map_err(internal)?;

    let mut planned = BTreeMap::new();
    for c in &outcome.planned {
        *planned.entry(c.as_str()).or_insert(0) += 1;
    }
    let mut cases = BTreeMap::new();
    let mut generators = BTreeMap::new();
    for d in &docs {
        *cases.entry(d.case_kind.as_str()).or_insert(0) += 1;
        if let Some(g) = &d.generator_id {
            *generators.entry(g.clone()).or_insert(0) += 1;
        }
    }
    let (tr, dv, te) = split.sizes();
    let manifest = Manifest {
        sources: total,
        filtered_out: total - kept.len(),
        documents: docs.len(),
        planned,
        cases,
        generators,
        splits: BTreeMap::from([("train", tr), ("dev", dv), ("test", te)]),
        failures: &outcome.failures,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(internal)?;
    write_text(&out.join("manifest.json"), &(json + "\n"))?;
    cfg.snapshot(&out)?;

    let unavailable = outcome
        .failures
        .iter()
        .filter(|f| f.kind == "unavailable")
        .count();
    if unavailable > 0 {
        return Err(CliError::Internal(format!(
            "{unavailable} document(s) failed because a generator was unreachable; partial corpus and manifest kept in {}",
            out.display()
        )));
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let corpus_path = require(&cfg.paths.corpus, "corpus")?;
    let docs = load_corpus(corpus_path)?;
    let (model, log) = with_width(cfg.jobs, || {
        train_corpus(&docs, &cfg.training, Execution::Parallel)
    })
    .map_err(|e| match e {
        PipelineError::Crf(CrfError::EmptyTrainingSet | CrfError::InvalidConfig(_)) => {
            CliError::Input(format!("{}: {e}", corpus_path.display()))
        }
        PipelineError::Corpus(c) => corpus_error(corpus_path, c),
        other => internal(other),
    })?;
    for w in &log.warnings {
        log::warn!("{w}");
    }
    save_model(&model, out.join("model.crf")).map_err(internal)?;
    write_text(&out.join("train_log.csv"), &log.to_csv())?;
    cfg.snapshot(&out)?;
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let model = load(require(&cfg.paths.model, "model")?)?;
    let docs = load_corpus(require(&cfg.paths.corpus, "corpus")?)?;
    let opts = PredictOptions {
        decoder: cfg.evaluation.decoder,
        normalize: cfg.evaluation.normalize.then(ConfusablesTable::builtin),
    };
    let results = with_width(cfg.jobs, || {
        predict_corpus(&model, &docs, &opts, Execution::Parallel)
    });
    let predictions = docs
        .iter()
        .zip(results)
        .map(|(d, r)| r.map_err(|e| CliError::Internal(format!("document {}: {e}", d.id))))
        .collect::<Result<Vec<_>, _>>()?;
    write_json_lines(&out.join("predictions.jsonl"), &predictions)?;
    cfg.snapshot(&out)?;
    Ok(())
}

fn run_evaluate(cfg: &RunConfig, out: &Path) -> Result<EvalReport, CliError> {
    let model = load(require(&cfg.paths.model, "model")?)?;
    let docs = load_corpus(require(&cfg.paths.corpus, "corpus")?)?;
    let opts = EvalOptions {
        decoder: cfg.evaluation.decoder,
        positive: cfg.evaluation.positive,
        group_by: cfg.evaluation.group_by,
        normalize: cfg.evaluation.normalize.then(ConfusablesTable::builtin),
        exec: Execution::Parallel,
    };
    let report = with_width(cfg.jobs, || evaluate_corpus(&model, &docs, &opts)).map_err(|e| match e {
        EvalError::Unlabeled { id } => CliError::Input(format!(
            "document {id} has no gold spans; evaluation needs a labeled corpus (use `coauthor predict` to label unlabeled text)"
        )),
        other => internal(other),
    })?;
    for f in &report.failures {
        log::warn!("document {} skipped: {}", f.id, f.error);
    }
    let csv = report.to_csv().map_err(internal)?;
    let csv_path = out.join("report.csv");
    write_text(&csv_path, &csv)?;
    write_text(&out.join("report.md"), &report.to_markdown())?;
    let bins = accuracy_vs_length(&report.documents);
    write_text(
        &out.join("length.csv"),
        &length_table_csv(&bins).map_err(internal)?,
    )?;
    write_text(&out.join("length.md"), &length_table_markdown(&bins))?;
    // re-read what was written and check every derived metric
    let written = fs::read_to_string(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    audit_report_csv(&written)
        .map_err(|e| CliError::Internal(format!("report self-audit failed: {e}")))?;
    Ok(report)
}

pub fn evaluate(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let out = out_dir(cfg)?;
    let report = run_evaluate(cfg, &out)?;
    cfg.snapshot(&out)?;
    Ok(report)
}

fn run_analyze(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let docs = load_corpus(require(&cfg.paths.corpus, "corpus")?)?;
    let stats = boundary_stats(&docs);
    write_text(
        &out.join("boundary.csv"),
        &stats.to_csv().map_err(internal)?,
    )?;
    write_text(&out.join("boundary.md"), &stats.to_markdown())?;
    let audit = boundary_bigram_audit(&docs);
    write_text(&out.join("bigrams.csv"), &audit.to_csv())?;
    write_text(&out.join("bigrams.md"), &audit.to_markdown())?;
    if stats.skipped > 0 {
        log::warn!(
            "{} partial document(s) lack the replaced text and were skipped",
            stats.skipped
        );
    }
    Ok(())
}

pub fn analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    run_analyze(cfg, &out)?;
    cfg.snapshot(&out)?;
    Ok(())
}

pub fn attack(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let kind: AttackKind = cfg
        .attack
        .kind
        .parse()
        .map_err(|e: AttackError| CliError::Input(e.to_string()))?;
    let docs = load_corpus(require(&cfg.paths.corpus, "corpus")?)?;
    let attacked = with_width(cfg.jobs, || {
        attack_corpus(
            &docs,
            kind,
            cfg.attack.rate,
            cfg.attack.seed,
            Execution::Parallel,
        )
    })
    .map_err(|e| match e {
        AttackError::Corpus(c) => internal(c),
        other => CliError::Input(other.to_string()),
    })?;
    write_corpus(out.join("corpus.jsonl"), &attacked).map_err(internal)?;
    cfg.snapshot(&out)?;
    Ok(())
}

/// File-name-safe level name.
fn chart_name(level: EvalLevel) -> String {
    format!("f1_{}.svg", level.as_str())
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let report = run_evaluate(cfg, &out)?;
    run_analyze(cfg, &out)?;
    let positive = report.positives.first().copied().unwrap_or(Label::Machine);
    let rows = report.rows();
    for level in EvalLevel::ALL {
        let bars: Vec<(String, f64)> = rows
            .iter()
            .filter(|r| r.level == level && r.positive == positive)
            .map(|r| {
                (
                    format!("{} / {} / {}", r.language, r.case, r.generator),
                    r.f1,
                )
            })
            .collect();
        if bars.is_empty() {
            continue;
        }
        let title = format!("F1 ({} positive), {}", positive, level.as_str());
        write_text(&out.join(chart_name(level)), &bar_chart(&title, &bars))?;
    }
    cfg.snapshot(&out)?;
    Ok(())
}
