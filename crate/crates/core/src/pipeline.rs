//! Glue from documents to model inputs and from decoded tokens back to
//! word, sentence and document predictions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversarial::{normalize_document, ConfusablesTable};
use crate::corpus::{
    label_at, labels_to_bits, segment_sentences, CorpusError, Document, Label, Unit, UnitMode,
};
use crate::crf::{
    posterior_decode, train, viterbi, CrfError, CrfModel, Sequence, TrainConfig, TrainLog,
};
use crate::exec::{map_indexed, Execution};
use crate::features::{extract_all, tokenize, FeatureError, FeatureVector, Token};
use crate::granularity::{
    doc_label_runs, doc_label_threshold, run_summary, sentence_word_ranges, tokens_to_words,
    words_to_sentences, GranularityError, RunSummary, DOC_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Granularity(#[from] GranularityError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error("document {id}: feature dimension {got} does not match model dimension {expected}")]
    Dimension {
        id: String,
        expected: usize,
        got: usize,
    },
}

/// A document cut into units, tokens and features.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub units: Vec<Unit>,
    pub tokens: Vec<Token>,
    pub features: Vec<FeatureVector>,
    /// Unit index range of every sentence, tiling the units.
    pub sentences: Vec<(usize, usize)>,
}

/// Segments, tokenizes and featurizes `doc`.
pub fn prepare(doc: &Document, scores: Option<&[f64]>) -> Result<Prepared, PipelineError> {
    let units = doc.units();
    let tokens = tokenize(&units);
    let features = extract_all(&tokens, scores)?;
    let sentences = sentence_ranges(&doc.text, &units);
    Ok(Prepared {
        units,
        tokens,
        features,
        sentences,
    })
}

/// Sentence ranges over units, widened so that they tile every unit.
pub fn sentence_ranges(text: &str, units: &[Unit]) -> Vec<(usize, usize)> {
    let mut ranges = sentence_word_ranges(units, &segment_sentences(text));
    // units outside every trimmed sentence (rare) join their neighbour
    if let Some(first) = ranges.first_mut() {
        first.0 = 0;
    }
    for i in 1..ranges.len() {
        ranges[i].0 = ranges[i - 1].1;
    }
    match ranges.last_mut() {
        Some(last) => last.1 = units.len(),
        None if !units.is_empty() => ranges.push((0, units.len())),
        None => {}
    }
    ranges
}

/// Gold label of each token: the label at its first scalar.
pub fn gold_token_labels(doc: &Document, tokens: &[Token]) -> Result<Vec<Label>, CorpusError> {
    let spans = doc.gold_spans()?;
    tokens
        .iter()
        .map(|t| {
            label_at(spans, t.start).ok_or_else(|| CorpusError::Invalid {
                id: doc.id.clone(),
                reason: format!("no span covers offset {}", t.start),
            })
        })
        .collect()
}

/// Gold label of each unit: the label at its first scalar.
pub fn gold_unit_labels(doc: &Document, units: &[Unit]) -> Result<Vec<Label>, CorpusError> {
    let spans = doc.gold_spans()?;
    units
        .iter()
        .map(|u| {
            label_at(spans, u.start).ok_or_else(|| CorpusError::Invalid {
                id: doc.id.clone(),
                reason: format!("no span covers offset {}", u.start),
            })
        })
        .collect()
}

/// Training sequence for a labeled document.
pub fn to_sequence(doc: &Document) -> Result<Sequence, PipelineError> {
    let p = prepare(doc, None)?;
    let labels = gold_token_labels(doc, &p.tokens)?;
    Ok(Sequence::new(p.features, labels))
}

/// Value of `meta["split"]`, if any.
pub fn split_of(doc: &Document) -> Option<&str> {
    doc.meta.get("split").map(String::as_str)
}

/// Trains on the documents marked `train` (every document if none carries a
/// split) and reports dev loss on those marked `dev`. Empty documents are
/// skipped.
pub fn train_corpus(
    docs: &[Document],
    config: &TrainConfig,
    exec: Execution,
) -> Result<(CrfModel, TrainLog), PipelineError> {
    let any_split = docs.iter().any(|d| split_of(d).is_some());
    let pick = |name: &str| -> Vec<&Document> {
        docs.iter()
            .filter(|d| !d.text.is_empty())
            .filter(|d| {
                if any_split {
                    split_of(d) == Some(name)
                } else {
                    name == "train"
                }
            })
            .collect()
    };
    let build = |set: Vec<&Document>| -> Result<Vec<Sequence>, PipelineError> {
        map_indexed(exec, &set, |_, d| to_sequence(d))
            .into_iter()
            .filter(|s| !matches!(s, Ok(s) if s.is_empty()))
            .collect()
    };
    let train_set = build(pick("train"))?;
    let dev_set = build(pick("dev"))?;
    Ok(train(&train_set, &dev_set, config, exec)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    #[default]
    Viterbi,
    Posterior,
}

impl std::str::FromStr for Decoder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "viterbi" => Ok(Decoder::Viterbi),
            "posterior" => Ok(Decoder::Posterior),
            other => Err(format!(
                "unknown decoder {other:?} (expected viterbi or posterior)"
            )),
        }
    }
}

pub fn decode(model: &CrfModel, features: &[FeatureVector], decoder: Decoder) -> Vec<Label> {
    match decoder {
        Decoder::Viterbi => viterbi(model, features),
        Decoder::Posterior => posterior_decode(model, features),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunDecision {
    pub label: Label,
    pub confidence: f64,
}

/// Labels for one document at every level. Label sequences are written as
/// strings of `0` (human) and `1` (machine).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    #[serde(rename = "lang")]
    pub language: String,
    pub unit_mode: UnitMode,
    pub tokens: String,
    /// Scalar offsets of each token.
    pub token_spans: Vec<(usize, usize)>,
    pub units: String,
    pub sentences: String,
    /// Human if at least 1% of units are predicted human.
    pub doc_threshold_human: Label,
    /// Machine if at least 1% of units are predicted machine.
    pub doc_threshold_machine: Label,
    /// `None` for empty documents.
    pub doc_runs: Option<RunDecision>,
    pub run_summary: Option<RunSummary>,
}

/// Everything needed to score a decoded document.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub prepared: Prepared,
    pub token_labels: Vec<Label>,
    pub unit_labels: Vec<Label>,
    pub sentence_labels: Vec<Label>,
}

pub fn decode_document(
    model: &CrfModel,
    doc: &Document,
    decoder: Decoder,
) -> Result<Decoded, PipelineError> {
    let prepared = prepare(doc, None)?;
    if let Some(j) = prepared
        .features
        .iter()
        .flat_map(|f| f.indices())
        .find(|&&j| j as usize >= model.feature_dim())
    {
        return Err(PipelineError::Dimension {
            id: doc.id.clone(),
            expected: model.feature_dim(),
            got: *j as usize + 1,
        });
    }
    let token_labels = decode(model, &prepared.features, decoder);
    let unit_labels = tokens_to_words(&token_labels, &prepared.tokens)?.labels;
    let sentence_labels = words_to_sentences(&unit_labels, &prepared.sentences)?.labels;
    Ok(Decoded {
        prepared,
        token_labels,
        unit_labels,
        sentence_labels,
    })
}

#[derive(Debug, Clone, Default)]
pub struct PredictOptions<'a> {
    pub decoder: Decoder,
    /// Homoglyph and invisible-character normalisation before featurizing.
    pub normalize: Option<&'a ConfusablesTable>,
}

pub fn predict_document(
    model: &CrfModel,
    doc: &Document,
    options: &PredictOptions,
) -> Result<Prediction, PipelineError> {
    let normalized;
    let doc = match options.normalize {
        Some(table) => {
            normalized = normalize_document(doc, table)?;
            &normalized
        }
        None => doc,
    };
    let d = decode_document(model, doc, options.decoder)?;
    let summary = run_summary(&d.unit_labels).ok();
    let runs = doc_label_runs(&d.unit_labels)
        .ok()
        .map(|(label, confidence)| RunDecision { label, confidence });
    Ok(Prediction {
        id: doc.id.clone(),
        language: doc.language.clone(),
        unit_mode: doc.unit_mode,
        tokens: labels_to_bits(&d.token_labels),
        token_spans: d.prepared.tokens.iter().map(|t| (t.start, t.end)).collect(),
        units: labels_to_bits(&d.unit_labels),
        sentences: labels_to_bits(&d.sentence_labels),
        doc_threshold_human: doc_label_threshold(&d.unit_labels, Label::Human, DOC_THRESHOLD),
        doc_threshold_machine: doc_label_threshold(&d.unit_labels, Label::Machine, DOC_THRESHOLD),
        doc_runs: runs,
        run_summary: summary,
    })
}

/// Predictions in input order.
pub fn predict_corpus(
    model: &CrfModel,
    docs: &[Document],
    options: &PredictOptions,
    exec: Execution,
) -> Vec<Result<Prediction, PipelineError>> {
    map_indexed(exec, docs, |_, d| predict_document(model, d, options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AuthorSpan, CaseKind};

    fn partial() -> Document {
        let text = "One two three. Four five six. Seven eight nine.";
        Document::new(
            "d",
            "en",
            CaseKind::Partial,
            Some("g".into()),
            text,
            vec![
                AuthorSpan::new(0, 15, Label::Human),
                AuthorSpan::new(15, 47, Label::Machine),
            ],
        )
        .unwrap()
    }

    #[test]
    fn sentence_ranges_tile_units() {
        let d = partial();
        let p = prepare(&d, None).unwrap();
        assert_eq!(p.units.len(), 9);
        assert_eq!(p.sentences, vec![(0, 3), (3, 6), (6, 9)]);
        let odd = "  lead. tail";
        let u = crate::corpus::segment_units(odd, UnitMode::Word);
        let r = sentence_ranges(odd, &u);
        assert_eq!(r.first().unwrap().0, 0);
        assert_eq!(r.last().unwrap().1, u.len());
        assert!(sentence_ranges("", &[]).is_empty());
    }

    #[test]
    fn gold_labels_follow_spans() {
        let d = partial();
        let p = prepare(&d, None).unwrap();
        let units = gold_unit_labels(&d, &p.units).unwrap();
        assert_eq!(labels_to_bits(&units), "000111111");
        let toks = gold_token_labels(&d, &p.tokens).unwrap();
        assert_eq!(toks.len(), p.tokens.len());
        assert!(matches!(
            gold_token_labels(&Document::unlabeled("u", "en", "x"), &p.tokens),
            Err(CorpusError::Unlabeled { .. })
        ));
    }

    #[test]
    fn prediction_shape() {
        let d = partial();
        let model = CrfModel::new(crate::features::FEATURE_DIM);
        let p = predict_document(&model, &d, &PredictOptions::default()).unwrap();
        // zero model: every tie goes to human
        assert_eq!(p.units, "000000000");
        assert_eq!(p.sentences, "000");
        assert_eq!(p.doc_threshold_human, Label::Human);
        assert_eq!(p.doc_threshold_machine, Label::Human);
        assert_eq!(p.doc_runs.unwrap().confidence, 1.0);
        assert_eq!(p.tokens.len(), p.token_spans.len());

        let empty = Document::unlabeled("e", "en", "");
        let p = predict_document(&model, &empty, &PredictOptions::default()).unwrap();
        assert!(p.units.is_empty() && p.doc_runs.is_none());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = CrfModel::new(8);
        assert!(matches!(
            predict_document(&model, &partial(), &PredictOptions::default()),
            Err(PipelineError::Dimension { .. })
        ));
    }

    #[test]
    fn normalisation_is_applied() {
        let model = CrfModel::new(crate::features::FEATURE_DIM);
        let d = Document::unlabeled("h", "en", "Ηello\u{200b} world");
        let opts = PredictOptions {
            normalize: Some(ConfusablesTable::builtin()),
            ..Default::default()
        };
        let p = predict_document(&model, &d, &opts).unwrap();
        assert_eq!(p.token_spans[0], (0, 5));
    }
}
