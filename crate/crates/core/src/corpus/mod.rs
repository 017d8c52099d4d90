//! Co-authored document model, segmentation, labeling and dataset splits.

mod io;
mod segment;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_corpus, read_corpus_from, write_corpus, write_corpus_to};
pub use segment::{scalar_slice, segment_sentences, segment_units, word_count, Unit, UnitMode};

/// Binary authorship label. `Human` sorts first and is index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Machine,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Human, Label::Machine];

    pub fn index(self) -> usize {
        match self {
            Label::Human => 0,
            Label::Machine => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => Label::Human,
            _ => Label::Machine,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label::Human => Label::Machine,
            Label::Machine => Label::Human,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Machine => "machine",
        }
    }

    /// `'0'` for human, `'1'` for machine.
    pub fn bit(self) -> char {
        match self {
            Label::Human => '0',
            Label::Machine => '1',
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" | "0" => Ok(Label::Human),
            "machine" | "1" => Ok(Label::Machine),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

/// Encodes labels as a string of `0`/`1`.
pub fn labels_to_bits(labels: &[Label]) -> String {
    labels.iter().map(|l| l.bit()).collect()
}

pub fn labels_from_bits(bits: &str) -> Result<Vec<Label>, String> {
    bits.chars()
        .map(|c| match c {
            '0' => Ok(Label::Human),
            '1' => Ok(Label::Machine),
            _ => Err(format!("invalid label bit {c:?}")),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Human,
    MachineFull,
    Partial,
    Rewritten,
}

impl CaseKind {
    pub const ALL: [CaseKind; 4] = [
        CaseKind::Human,
        CaseKind::MachineFull,
        CaseKind::Partial,
        CaseKind::Rewritten,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Human => "human",
            CaseKind::MachineFull => "machine_full",
            CaseKind::Partial => "partial",
            CaseKind::Rewritten => "rewritten",
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open scalar range with a single author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorSpan {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

impl AuthorSpan {
    pub fn new(start: usize, end: usize, label: Label) -> Self {
        Self { start, end, label }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("document {id} has no gold spans")]
    Unlabeled { id: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A document with (optional) gold authorship spans.
///
/// `spans == None` marks an unlabeled document, e.g. prediction input. When
/// present, spans are sorted, contiguous, cover the whole text, and adjacent
/// spans carry different labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(rename = "lang")]
    pub language: String,
    pub unit_mode: UnitMode,
    #[serde(rename = "case")]
    pub case_kind: CaseKind,
    #[serde(rename = "generator", default)]
    pub generator_id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub spans: Option<Vec<AuthorSpan>>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orig_suffix: Option<String>,
    /// Unrecognised keys, carried through a read/write round trip.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Document {
    /// Builds a labeled document, merging adjacent same-label spans and
    /// checking every invariant.
    pub fn new(
        id: impl Into<String>,
        language: impl Into<String>,
        case_kind: CaseKind,
        generator_id: Option<String>,
        text: impl Into<String>,
        spans: Vec<AuthorSpan>,
    ) -> Result<Self, CorpusError> {
        let language = language.into();
        let mut doc = Document {
            id: id.into(),
            unit_mode: UnitMode::for_language(&language),
            language,
            case_kind,
            generator_id,
            text: text.into(),
            spans: Some(merge_spans(spans)),
            meta: BTreeMap::new(),
            orig_suffix: None,
            extra: serde_json::Map::new(),
        };
        doc.validate()?;
        if doc.text.is_empty() {
            doc.spans = Some(Vec::new());
        }
        Ok(doc)
    }

    /// Single-span document labeled entirely `label`.
    pub fn single(
        id: impl Into<String>,
        language: impl Into<String>,
        case_kind: CaseKind,
        generator_id: Option<String>,
        text: impl Into<String>,
        label: Label,
    ) -> Result<Self, CorpusError> {
        let text = text.into();
        let n = text.chars().count();
        let spans = if n == 0 {
            Vec::new()
        } else {
            vec![AuthorSpan::new(0, n, label)]
        };
        Self::new(id, language, case_kind, generator_id, text, spans)
    }

    pub fn unlabeled(
        id: impl Into<String>,
        language: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        let language = language.into();
        Document {
            id: id.into(),
            unit_mode: UnitMode::for_language(&language),
            language,
            case_kind: CaseKind::Human,
            generator_id: None,
            text: text.into(),
            spans: None,
            meta: BTreeMap::new(),
            orig_suffix: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn scalar_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_labeled(&self) -> bool {
        self.spans.is_some()
    }

    pub fn gold_spans(&self) -> Result<&[AuthorSpan], CorpusError> {
        self.spans.as_deref().ok_or_else(|| CorpusError::Unlabeled {
            id: self.id.clone(),
        })
    }

    /// Scalar offsets where the label changes.
    pub fn boundaries(&self) -> Vec<usize> {
        self.spans
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .skip(1)
            .map(|s| s.start)
            .collect()
    }

    pub fn units(&self) -> Vec<Unit> {
        segment_units(&self.text, self.unit_mode)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::Invalid {
            id: self.id.clone(),
            reason,
        };
        let Some(spans) = &self.spans else {
            return Ok(());
        };
        let n = self.scalar_len();
        if n == 0 {
            return if spans.is_empty() {
                Ok(())
            } else {
                Err(invalid("spans on empty text".into()))
            };
        }
        let mut expected = 0;
        for (i, s) in spans.iter().enumerate() {
            if s.start >= s.end {
                return Err(invalid(format!(
                    "span {i} is empty or reversed ({}..{})",
                    s.start, s.end
                )));
            }
            if s.start != expected {
                return Err(invalid(format!(
                    "span {i} starts at {} but previous coverage ends at {expected} (gap or overlap)",
                    s.start
                )));
            }
            if i > 0 && spans[i - 1].label == s.label {
                return Err(invalid(format!("spans {} and {i} share a label", i - 1)));
            }
            expected = s.end;
        }
        if expected != n {
            return Err(invalid(format!("spans cover {expected} of {n} scalars")));
        }
        let labels: Vec<Label> = spans.iter().map(|s| s.label).collect();
        let ok = match self.case_kind {
            CaseKind::Human => labels == [Label::Human],
            CaseKind::MachineFull | CaseKind::Rewritten => labels == [Label::Machine],
            CaseKind::Partial => labels.len() >= 2,
        };
        if !ok {
            return Err(invalid(format!(
                "case {} inconsistent with span labels {labels:?}",
                self.case_kind
            )));
        }
        Ok(())
    }
}

fn merge_spans(spans: Vec<AuthorSpan>) -> Vec<AuthorSpan> {
    let mut out: Vec<AuthorSpan> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if last.label == s.label && last.end == s.start => last.end = s.end,
            _ => out.push(s),
        }
    }
    out
}

/// Label of the span containing scalar `pos` in a sorted span list.
pub fn label_at(spans: &[AuthorSpan], pos: usize) -> Option<Label> {
    let idx = spans.partition_point(|s| s.end <= pos);
    spans.get(idx).filter(|s| s.start <= pos).map(|s| s.label)
}

/// One gold label per unit. A unit straddling a span boundary takes the label
/// of its first scalar.
pub fn labels_for_units(doc: &Document) -> Result<Vec<Label>, CorpusError> {
    let spans = doc.gold_spans()?;
    Ok(doc
        .units()
        .iter()
        .map(|u| label_at(spans, u.start).expect("validated spans cover every unit"))
        .collect())
}

/// Source-text length filter: word-mode languages need at least 3 sentences
/// or at least 50 words; Chinese and Japanese need at least 100
/// non-whitespace characters.
pub fn filter_source(text: &str, language: &str) -> bool {
    match UnitMode::for_language(language) {
        UnitMode::Character => text.chars().filter(|c| !c.is_whitespace()).count() >= 100,
        UnitMode::Word => segment_sentences(text).len() >= 3 || word_count(text) >= 50,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }

    fn extend(&mut self, other: DatasetSplit) {
        self.train.extend(other.train);
        self.dev.extend(other.dev);
        self.test.extend(other.test);
    }

    /// Split name for `id`, if assigned.
    pub fn name_of(&self, id: &str) -> Option<&'static str> {
        if self.train.iter().any(|x| x == id) {
            Some("train")
        } else if self.dev.iter().any(|x| x == id) {
            Some("dev")
        } else if self.test.iter().any(|x| x == id) {
            Some("test")
        } else {
            None
        }
    }
}

/// Seeded shuffle followed by a 40/10/50 partition. Train and dev sizes are
/// rounded down; the remainder goes to test.
pub fn split_dataset(ids: &[String], seed: u64) -> DatasetSplit {
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = shuffled.len();
    let n_train = n * 4 / 10;
    let n_dev = n / 10;
    let test = shuffled.split_off(n_train + n_dev);
    let dev = shuffled.split_off(n_train);
    DatasetSplit {
        train: shuffled,
        dev,
        test,
    }
}

/// Applies [`split_dataset`] separately inside each (language, generator)
/// group. Groups are visited in sorted key order.
pub fn split_grouped(docs: &[Document], seed: u64) -> DatasetSplit {
    let mut groups: BTreeMap<(&str, Option<&str>), Vec<String>> = BTreeMap::new();
    for d in docs {
        groups
            .entry((d.language.as_str(), d.generator_id.as_deref()))
            .or_default()
            .push(d.id.clone());
    }
    let mut out = DatasetSplit::default();
    for ids in groups.values() {
        out.extend(split_dataset(ids, seed));
    }
    out
}

/// Writes each document's split name into `meta["split"]` using
/// [`split_grouped`].
pub fn assign_splits(docs: &mut [Document], seed: u64) -> DatasetSplit {
    let split = split_grouped(docs, seed);
    let mut names: BTreeMap<&str, &'static str> = BTreeMap::new();
    for (ids, name) in [
        (&split.train, "train"),
        (&split.dev, "dev"),
        (&split.test, "test"),
    ] {
        for id in ids {
            names.insert(id.as_str(), name);
        }
    }
    for d in docs.iter_mut() {
        if let Some(n) = names.get(d.id.as_str()) {
            d.meta.insert("split".into(), (*n).to_string());
        }
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_span(text: &str, b: usize) -> Document {
        let n = text.chars().count();
        Document::new(
            "d",
            "en",
            CaseKind::Partial,
            Some("g".into()),
            text,
            vec![
                AuthorSpan::new(0, b, Label::Human),
                AuthorSpan::new(b, n, Label::Machine),
            ],
        )
        .unwrap()
    }

    #[test]
    fn unit_labels_follow_spans() {
        let d = two_span("alpha beta ", 6);
        assert_eq!(
            labels_for_units(&d).unwrap(),
            vec![Label::Human, Label::Machine]
        );
        // boundary inside "alpha": the word keeps its first scalar's label
        let d = two_span("alpha beta ", 3);
        assert_eq!(
            labels_for_units(&d).unwrap(),
            vec![Label::Human, Label::Machine]
        );
        let d = Document::single(
            "h",
            "en",
            CaseKind::Human,
            None,
            "one two three",
            Label::Human,
        )
        .unwrap();
        assert_eq!(labels_for_units(&d).unwrap(), vec![Label::Human; 3]);
    }

    #[test]
    fn construction_merges_and_validates() {
        let d = Document::new(
            "m",
            "en",
            CaseKind::Human,
            None,
            "abcd",
            vec![
                AuthorSpan::new(0, 2, Label::Human),
                AuthorSpan::new(2, 4, Label::Human),
            ],
        )
        .unwrap();
        assert_eq!(d.spans.as_ref().unwrap().len(), 1);

        let overlap = Document::new(
            "bad",
            "en",
            CaseKind::Partial,
            None,
            "abcd",
            vec![
                AuthorSpan::new(0, 3, Label::Human),
                AuthorSpan::new(2, 4, Label::Machine),
            ],
        );
        let err = overlap.unwrap_err().to_string();
        assert!(err.contains("bad"), "{err}");

        let short = Document::new(
            "short",
            "en",
            CaseKind::Human,
            None,
            "abcd",
            vec![AuthorSpan::new(0, 3, Label::Human)],
        );
        assert!(short.is_err());

        // partial with a single span is inconsistent
        let p = Document::single("p", "en", CaseKind::Partial, None, "abcd", Label::Machine);
        assert!(p.is_err());
        let r = Document::single("r", "en", CaseKind::Rewritten, None, "abcd", Label::Human);
        assert!(r.is_err());
    }

    #[test]
    fn unlabeled_documents_refuse_gold_queries() {
        let d = Document::unlabeled("u", "en", "some text");
        assert!(matches!(
            labels_for_units(&d),
            Err(CorpusError::Unlabeled { .. })
        ));
    }

    #[test]
    fn filter_rules() {
        let words = |n: usize| vec!["word"; n].join(" ");
        // 2 sentences, 55 words: accepted through the word arm
        let t = format!("{}. {}.", words(30), words(25));
        assert_eq!(segment_sentences(&t).len(), 2);
        assert!(filter_source(&t, "en"));
        let t = format!("{}. {}.", words(20), words(20));
        assert!(!filter_source(&t, "en"));
        assert!(filter_source("A. B. C.", "en"));
        let zh: String = "字".repeat(99);
        assert!(!filter_source(&zh, "zh"));
        let zh: String = "字".repeat(100);
        assert!(filter_source(&zh, "zh"));
        // whitespace does not count towards the character threshold
        let zh = format!("{} {}", "字".repeat(50), "字".repeat(49));
        assert!(!filter_source(&zh, "ja"));
    }

    #[test]
    fn split_examples() {
        let ids: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
        assert_eq!(split_dataset(&ids, 7).sizes(), (4, 1, 5));
        assert_eq!(split_dataset(&ids[..1], 7).sizes(), (0, 0, 1));
        assert_eq!(split_dataset(&ids, 7), split_dataset(&ids, 7));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..1000, seed in any::<u64>()) {
            let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
            let s = split_dataset(&ids, seed);
            let mut all: Vec<String> = s.train.iter().chain(&s.dev).chain(&s.test).cloned().collect();
            prop_assert_eq!(all.len(), n);
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(s.train.len(), n * 4 / 10);
            prop_assert_eq!(s.dev.len(), n / 10);
        }

        #[test]
        fn spans_reconstruct_text(text in "[a-zé ]{1,40}", cut in 0usize..40) {
            let n = text.chars().count();
            let b = cut % n;
            let spans = if b == 0 {
                vec![AuthorSpan::new(0, n, Label::Human)]
            } else {
                vec![AuthorSpan::new(0, b, Label::Human), AuthorSpan::new(b, n, Label::Machine)]
            };
            let case = if b == 0 { CaseKind::Human } else { CaseKind::Partial };
            let d = Document::new("p", "en", case, None, text.clone(), spans).unwrap();
            let rebuilt: String = d.spans.as_ref().unwrap().iter()
                .map(|s| scalar_slice(&d.text, s.start, s.end)).collect();
            prop_assert_eq!(rebuilt, text);
            for mode in [UnitMode::Word, UnitMode::Character] {
                let mut d2 = d.clone();
                d2.unit_mode = mode;
                prop_assert_eq!(labels_for_units(&d2).unwrap().len(), d2.units().len());
            }
        }
    }
}
