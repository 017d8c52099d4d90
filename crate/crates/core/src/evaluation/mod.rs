//! Scoring predictions against gold spans at unit, sentence and document
//! level, plus corpus analyses.

mod analysis;
mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversarial::{normalize_document, ConfusablesTable};
use crate::corpus::{CaseKind, Document, Label, UnitMode};
use crate::crf::CrfModel;
use crate::exec::{map_indexed, Execution};
use crate::granularity::{doc_label_runs, doc_label_threshold, majority, Level, DOC_THRESHOLD};
use crate::pipeline::{decode_document, gold_unit_labels, Decoder, PipelineError};

pub use analysis::{
    accuracy_vs_length, boundary_bigram_audit, boundary_lengths, boundary_stats,
    boundary_stats_from, length_bin, length_table_csv, length_table_markdown, BigramAudit,
    BoundaryClass, BoundaryRow, BoundarySample, BoundaryStats, LengthBin, LENGTH_BINS,
};
pub use metrics::{confusion, ConfusionCounts};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("document {id} has no gold spans; use predict for unlabeled input")]
    Unlabeled { id: String },
    #[error("level mismatch: predicted {pred:?}, gold {gold:?}")]
    LevelMismatch { pred: Level, gold: Level },
    #[error("length mismatch: {pred} predicted, {gold} gold")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("report row {row}: {message}")]
    Audit { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Level at which a row of the report was scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalLevel {
    Word,
    Character,
    Sentence,
    /// Document is human iff at least 1% of units are human.
    DocThresholdHuman,
    /// Document is machine iff at least 1% of units are machine.
    DocThresholdMachine,
    /// Document takes the label of its longest run.
    DocRuns,
}

impl EvalLevel {
    pub const ALL: [EvalLevel; 6] = [
        EvalLevel::Word,
        EvalLevel::Character,
        EvalLevel::Sentence,
        EvalLevel::DocThresholdHuman,
        EvalLevel::DocThresholdMachine,
        EvalLevel::DocRuns,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalLevel::Word => "word",
            EvalLevel::Character => "character",
            EvalLevel::Sentence => "sentence",
            EvalLevel::DocThresholdHuman => "doc_threshold_human",
            EvalLevel::DocThresholdMachine => "doc_threshold_machine",
            EvalLevel::DocRuns => "doc_runs",
        }
    }

    pub fn unit(mode: UnitMode) -> Self {
        match mode {
            UnitMode::Word => EvalLevel::Word,
            UnitMode::Character => EvalLevel::Character,
        }
    }
}

/// Which keys split the report rows. Disabled keys collapse to `all`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupBy {
    pub language: bool,
    pub case: bool,
    pub generator: bool,
}

impl Default for GroupBy {
    fn default() -> Self {
        Self {
            language: true,
            case: true,
            generator: true,
        }
    }
}

pub const ALL_GROUP: &str = "all";
/// Generator key of documents without a generator.
pub const NO_GENERATOR: &str = "-";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub level: EvalLevel,
    pub language: String,
    pub case: String,
    pub generator: String,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions<'a> {
    pub decoder: Decoder,
    /// Positive class; `None` reports both orientations.
    pub positive: Option<Label>,
    pub group_by: GroupBy,
    pub normalize: Option<&'a ConfusablesTable>,
    pub exec: Execution,
}

/// Per-document results, machine-positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocOutcome {
    pub id: String,
    pub language: String,
    pub case: CaseKind,
    pub generator: Option<String>,
    pub unit_mode: UnitMode,
    pub sentence_count: usize,
    pub units: ConfusionCounts,
    pub sentences: ConfusionCounts,
    pub doc_threshold_human: ConfusionCounts,
    pub doc_threshold_machine: ConfusionCounts,
    pub doc_runs: ConfusionCounts,
}

impl DocOutcome {
    fn by_level(&self) -> [(EvalLevel, &ConfusionCounts); 5] {
        [
            (EvalLevel::unit(self.unit_mode), &self.units),
            (EvalLevel::Sentence, &self.sentences),
            (EvalLevel::DocThresholdHuman, &self.doc_threshold_human),
            (EvalLevel::DocThresholdMachine, &self.doc_threshold_machine),
            (EvalLevel::DocRuns, &self.doc_runs),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Machine-positive counts per group.
    pub groups: BTreeMap<GroupKey, ConfusionCounts>,
    pub positives: Vec<Label>,
    /// Successfully evaluated documents in input order.
    pub documents: Vec<DocOutcome>,
    pub failures: Vec<DocFailure>,
    /// Documents without any unit, left out of every count.
    pub empty: usize,
}

/// One CSV/markdown row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub level: EvalLevel,
    pub language: String,
    pub case: String,
    pub generator: String,
    pub positive: Label,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ReportRow {
    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
            positive: self.positive,
        }
    }
}

pub const CSV_COLUMNS: [&str; 13] = [
    "level",
    "language",
    "case",
    "generator",
    "positive",
    "tp",
    "fp",
    "fn",
    "tn",
    "accuracy",
    "precision",
    "recall",
    "f1",
];

fn evaluate_document(
    model: &CrfModel,
    doc: &Document,
    options: &EvalOptions,
) -> Result<Option<DocOutcome>, PipelineError> {
    let normalized;
    let doc = match options.normalize {
        Some(table) => {
            normalized = normalize_document(doc, table)?;
            &normalized
        }
        None => doc,
    };
    let d = decode_document(model, doc, options.decoder)?;
    if d.unit_labels.is_empty() {
        return Ok(None);
    }
    let gold_units = gold_unit_labels(doc, &d.prepared.units)?;
    let gold_sentences: Vec<Label> = d
        .prepared
        .sentences
        .iter()
        .map(|&(s, e)| majority(&gold_units[s..e]).expect("non-empty sentence"))
        .collect();
    let m = Label::Machine;
    let doc_pair = |pred: Label, gold: Label| ConfusionCounts::from_pairs(&[pred], &[gold], m);
    let th = |labels: &[Label], positive| doc_label_threshold(labels, positive, DOC_THRESHOLD);
    Ok(Some(DocOutcome {
        id: doc.id.clone(),
        language: doc.language.clone(),
        case: doc.case_kind,
        generator: doc.generator_id.clone(),
        unit_mode: doc.unit_mode,
        sentence_count: d.prepared.sentences.len(),
        units: ConfusionCounts::from_pairs(&d.unit_labels, &gold_units, m),
        sentences: ConfusionCounts::from_pairs(&d.sentence_labels, &gold_sentences, m),
        doc_threshold_human: doc_pair(
            th(&d.unit_labels, Label::Human),
            th(&gold_units, Label::Human),
        ),
        doc_threshold_machine: doc_pair(
            th(&d.unit_labels, Label::Machine),
            th(&gold_units, Label::Machine),
        ),
        doc_runs: doc_pair(
            doc_label_runs(&d.unit_labels)?.0,
            doc_label_runs(&gold_units)?.0,
        ),
    }))
}

/// Decodes every document, maps predictions up the levels and aggregates
/// confusion counts per group. Documents that fail to decode are reported
/// and skipped. Refuses corpora with unlabeled documents.
pub fn evaluate_corpus(
    model: &CrfModel,
    docs: &[Document],
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if let Some(d) = docs.iter().find(|d| !d.is_labeled()) {
        return Err(EvalError::Unlabeled { id: d.id.clone() });
    }
    let results = map_indexed(options.exec, docs, |_, d| {
        evaluate_document(model, d, options)
    });
    let mut documents = Vec::new();
    let mut failures = Vec::new();
    let mut empty = 0;
    for (doc, r) in docs.iter().zip(results) {
        match r {
            Ok(Some(o)) => documents.push(o),
            Ok(None) => empty += 1,
            Err(e) => failures.push(DocFailure {
                id: doc.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let positives = match options.positive {
        Some(p) => vec![p],
        None => vec![Label::Machine, Label::Human],
    };
    Ok(EvalReport {
        groups: aggregate(&documents, options.group_by),
        positives,
        documents,
        failures,
        empty,
    })
}

/// Sums document outcomes per group key.
pub fn aggregate(
    documents: &[DocOutcome],
    group_by: GroupBy,
) -> BTreeMap<GroupKey, ConfusionCounts> {
    let mut groups: BTreeMap<GroupKey, ConfusionCounts> = BTreeMap::new();
    for o in documents {
        for (level, counts) in o.by_level() {
            let key = GroupKey {
                level,
                language: pick(group_by.language, &o.language),
                case: pick(group_by.case, o.case.as_str()),
                generator: pick(
                    group_by.generator,
                    o.generator.as_deref().unwrap_or(NO_GENERATOR),
                ),
            };
            groups
                .entry(key)
                .or_insert_with(|| ConfusionCounts::new(Label::Machine))
                .merge(counts);
        }
    }
    groups
}

fn pick(enabled: bool, value: &str) -> String {
    if enabled {
        value.to_string()
    } else {
        ALL_GROUP.to_string()
    }
}

impl EvalReport {
    /// Rows ordered by group key, then positive label as requested.
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        for (key, counts) in &self.groups {
            for &p in &self.positives {
                let c = if p == counts.positive {
                    *counts
                } else {
                    counts.flipped()
                };
                rows.push(ReportRow {
                    level: key.level,
                    language: key.language.clone(),
                    case: key.case.clone(),
                    generator: key.generator.clone(),
                    positive: p,
                    tp: c.tp,
                    fp: c.fp,
                    fn_: c.fn_,
                    tn: c.tn,
                    accuracy: c.accuracy(),
                    precision: c.precision(),
                    recall: c.recall(),
                    f1: c.f1(),
                });
            }
        }
        rows
    }

    /// Pooled machine-positive counts at `level` over all groups.
    pub fn total(&self, level: EvalLevel) -> ConfusionCounts {
        let mut c = ConfusionCounts::new(Label::Machine);
        for (k, v) in &self.groups {
            if k.level == level {
                c.merge(v);
            }
        }
        c
    }

    /// Pooled unit-level (word and character) counts.
    pub fn unit_total(&self) -> ConfusionCounts {
        let mut c = self.total(EvalLevel::Word);
        c.merge(&self.total(EvalLevel::Character));
        c
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        rows_to_csv(&self.rows())
    }

    /// Unit-level accuracy with languages down and cases across, followed by
    /// the full metric table.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let mut cells: BTreeMap<(&str, CaseKind), ConfusionCounts> = BTreeMap::new();
        for o in &self.documents {
            cells
                .entry((o.language.as_str(), o.case))
                .or_insert_with(|| ConfusionCounts::new(Label::Machine))
                .merge(&o.units);
        }
        let mut languages: Vec<&str> = cells.keys().map(|k| k.0).collect();
        languages.dedup();
        let mut cases: Vec<CaseKind> = cells.keys().map(|k| k.1).collect();
        cases.sort();
        cases.dedup();
        out.push_str("## Unit-level accuracy by language and case\n\n| Language |");
        for c in &cases {
            let _ = write!(out, " {} |", c.as_str());
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(cases.len()));
        out.push('\n');
        for l in &languages {
            let _ = write!(out, "| {l} |");
            for c in &cases {
                match cells.get(&(*l, *c)) {
                    Some(v) => {
                        let _ = write!(out, " {:.4} |", v.accuracy());
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&rows_to_markdown(&self.rows()));
        if !self.failures.is_empty() {
            let _ = write!(
                out,
                "\n{} document(s) failed to decode.\n",
                self.failures.len()
            );
        }
        out
    }
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_to_markdown(rows: &[ReportRow]) -> String {
    let mut out = String::from(
        "## Metrics\n\n| Level | Language | Case | Generator | Positive | N | Accuracy | Precision | Recall | F1 |\n\
         |---|---|---|---|---|---:|---:|---:|---:|---:|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
            r.level.as_str(),
            r.language,
            r.case,
            r.generator,
            r.positive,
            r.counts().total(),
            r.accuracy,
            r.precision,
            r.recall,
            r.f1
        );
    }
    out
}

pub fn parse_report_csv(content: &str) -> Result<Vec<ReportRow>, EvalError> {
    let mut r = csv::Reader::from_reader(content.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(EvalError::Audit {
            row: 0,
            message: format!("unexpected header {header:?}"),
        });
    }
    Ok(r.deserialize().collect::<Result<Vec<ReportRow>, _>>()?)
}

/// Re-parses an emitted CSV report and checks that every derived metric
/// equals the value recomputed from its counts, bit for bit.
pub fn audit_report_csv(content: &str) -> Result<usize, EvalError> {
    let rows = parse_report_csv(content)?;
    for (i, r) in rows.iter().enumerate() {
        let c = r.counts();
        for (name, stored, derived) in [
            ("accuracy", r.accuracy, c.accuracy()),
            ("precision", r.precision, c.precision()),
            ("recall", r.recall, c.recall()),
            ("f1", r.f1, c.f1()),
        ] {
            if stored.to_bits() != derived.to_bits() {
                return Err(EvalError::Audit {
                    row: i + 1,
                    message: format!("{name} is {stored}, counts give {derived}"),
                });
            }
        }
    }
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AuthorSpan;
    use crate::crf::Sequence;
    use crate::pipeline::prepare;

    fn doc(id: &str, lang: &str, text: &str, boundary: usize, case: CaseKind) -> Document {
        let n = text.chars().count();
        let spans = if boundary == 0 {
            vec![AuthorSpan::new(0, n, Label::Machine)]
        } else if boundary >= n {
            vec![AuthorSpan::new(0, n, Label::Human)]
        } else {
            vec![
                AuthorSpan::new(0, boundary, Label::Human),
                AuthorSpan::new(boundary, n, Label::Machine),
            ]
        };
        Document::new(id, lang, case, Some("g".into()), text, spans).unwrap()
    }

    /// Model that labels tokens through a per-feature lookup of the gold
    /// labels, so it predicts its own training document perfectly.
    fn memorising_model(docs: &[Document]) -> CrfModel {
        let mut m = CrfModel::new(crate::features::FEATURE_DIM);
        for d in docs {
            let p = prepare(d, None).unwrap();
            let gold = crate::pipeline::gold_token_labels(d, &p.tokens).unwrap();
            let s = Sequence::new(p.features, gold);
            for (f, l) in s.features.iter().zip(&s.labels) {
                for &j in f.indices() {
                    *m.emission_mut(*l, j) += 1.0;
                }
            }
        }
        m
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let d = doc(
            "a",
            "en",
            "Alpha beta gamma. Delta epsilon zeta.",
            0,
            CaseKind::Rewritten,
        );
        let m = memorising_model(std::slice::from_ref(&d));
        let r = evaluate_corpus(&m, &[d], &EvalOptions::default()).unwrap();
        for row in r.rows() {
            if row.positive == Label::Machine {
                assert_eq!(row.accuracy, 1.0, "{row:?}");
                assert_eq!(row.f1, 1.0, "{row:?}");
            }
        }
    }

    #[test]
    fn chinese_is_scored_by_character() {
        let d = doc("z", "zh", "你好世界。再见朋友。", 5, CaseKind::Partial);
        let r = evaluate_corpus(
            &CrfModel::new(crate::features::FEATURE_DIM),
            &[d],
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(r.groups.keys().any(|k| k.level == EvalLevel::Character));
        assert!(!r.groups.keys().any(|k| k.level == EvalLevel::Word));
        assert_eq!(r.total(EvalLevel::Character).total(), 10);
    }

    #[test]
    fn unlabeled_is_refused() {
        let d = Document::unlabeled("u", "en", "some text");
        assert!(matches!(
            evaluate_corpus(&CrfModel::new(4), &[d], &EvalOptions::default()),
            Err(EvalError::Unlabeled { .. })
        ));
    }

    #[test]
    fn decode_failure_is_recorded() {
        let d = doc("a", "en", "Alpha beta.", 6, CaseKind::Partial);
        let r = evaluate_corpus(&CrfModel::new(4), &[d], &EvalOptions::default()).unwrap();
        assert_eq!(r.failures.len(), 1);
        assert!(r.groups.is_empty());
    }

    fn sample_docs() -> Vec<Document> {
        vec![
            doc(
                "a",
                "en",
                "One two three four. Five six seven.",
                9,
                CaseKind::Partial,
            ),
            doc("b", "en", "Nothing but people here.", 100, CaseKind::Human),
            doc(
                "c",
                "de",
                "Ganz und gar von der Maschine.",
                0,
                CaseKind::Rewritten,
            ),
            doc("d", "zh", "你好世界。再见朋友。", 5, CaseKind::Partial),
        ]
    }

    #[test]
    fn grouping_changes_keys_not_totals() {
        let docs = sample_docs();
        let m = memorising_model(&docs[..2]);
        let full = evaluate_corpus(&m, &docs, &EvalOptions::default()).unwrap();
        let flat = evaluate_corpus(
            &m,
            &docs,
            &EvalOptions {
                group_by: GroupBy {
                    language: false,
                    case: false,
                    generator: false,
                },
                ..Default::default()
            },
        )
        .unwrap();
        for level in EvalLevel::ALL {
            assert_eq!(full.total(level), flat.total(level));
        }
        assert!(flat
            .groups
            .keys()
            .all(|k| k.language == ALL_GROUP && k.case == ALL_GROUP));
        assert!(full.groups.len() > flat.groups.len());
    }

    #[test]
    fn order_and_parallelism_do_not_change_totals() {
        let docs = sample_docs();
        let m = memorising_model(&docs[1..3]);
        let a = evaluate_corpus(&m, &docs, &EvalOptions::default()).unwrap();
        let mut rev = docs.clone();
        rev.reverse();
        let b = evaluate_corpus(
            &m,
            &rev,
            &EvalOptions {
                exec: Execution::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.groups, b.groups);
    }

    #[test]
    fn counts_match_independent_recount() {
        let docs = sample_docs();
        let m = memorising_model(&docs[..1]);
        let r = evaluate_corpus(&m, &docs, &EvalOptions::default()).unwrap();
        // recount units straight from predictions and spans
        let mut tp_fp_fn_tn = [0u64; 4];
        for d in &docs {
            let p = crate::pipeline::predict_document(&m, d, &Default::default()).unwrap();
            let spans = d.spans.as_ref().unwrap();
            for (u, bit) in d.units().iter().zip(p.units.chars()) {
                let gold = spans
                    .iter()
                    .find(|s| s.start <= u.start && u.start < s.end)
                    .unwrap()
                    .label;
                let idx = match (bit == '1', gold == Label::Machine) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                tp_fp_fn_tn[idx] += 1;
            }
        }
        let c = r.unit_total();
        assert_eq!([c.tp, c.fp, c.fn_, c.tn], tp_fp_fn_tn);
    }

    #[test]
    fn csv_round_trip_and_audit() {
        let docs = sample_docs();
        let r = evaluate_corpus(
            &memorising_model(&docs[..1]),
            &docs,
            &EvalOptions::default(),
        )
        .unwrap();
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with(
            "level,language,case,generator,positive,tp,fp,fn,tn,accuracy,precision,recall,f1\n"
        ));
        assert_eq!(parse_report_csv(&csv).unwrap(), r.rows());
        assert_eq!(audit_report_csv(&csv).unwrap(), r.rows().len());
        let mut rows = r.rows();
        let row = rows.iter_mut().find(|r| r.tp > 0).unwrap();
        row.fn_ += 1;
        assert!(audit_report_csv(&rows_to_csv(&rows).unwrap()).is_err());
        let md = r.to_markdown();
        assert!(
            md.contains("| Language | human | rewritten | partial |")
                || md.contains("| Language |")
        );
        assert!(md.contains("| Level | Language | Case | Generator | Positive | N | Accuracy | Precision | Recall | F1 |"));
        assert_eq!(audit_report_csv(&rows_to_csv(&[]).unwrap()).unwrap(), 0);
    }

    #[test]
    fn single_orientation() {
        let docs = sample_docs();
        let r = evaluate_corpus(
            &memorising_model(&docs[..1]),
            &docs,
            &EvalOptions {
                positive: Some(Label::Human),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.rows().iter().all(|row| row.positive == Label::Human));
    }
}
