//! Mapping predictions between granularities: token → word → sentence →
//! document.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, Unit};
use crate::features::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Token,
    Word,
    Sentence,
    Document,
}

/// Labels at one level. `alignment[i]` is the half-open index range of the
/// level below covered by element `i` (scalar offsets for tokens).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    pub level: Level,
    pub labels: Vec<Label>,
    pub alignment: Vec<(usize, usize)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GranularityError {
    #[error("{labels} labels for {items} items")]
    LengthMismatch { labels: usize, items: usize },
    #[error("word {0} has no first-token flag")]
    MissingFirstToken(usize),
    #[error("sentence {0} covers no words")]
    EmptySentence(usize),
    #[error("sentence ranges do not tile the {0} words")]
    BadCoverage(usize),
    #[error("empty label sequence")]
    Empty,
}

/// Token labels as a [`LabelSequence`] aligned to scalar offsets.
pub fn token_sequence(labels: &[Label], tokens: &[Token]) -> LabelSequence {
    LabelSequence {
        level: Level::Token,
        labels: labels.to_vec(),
        alignment: tokens.iter().map(|t| (t.start, t.end)).collect(),
    }
}

/// Each word takes the label of its first token, whatever its other tokens
/// say.
pub fn tokens_to_words(
    token_labels: &[Label],
    tokens: &[Token],
) -> Result<LabelSequence, GranularityError> {
    if token_labels.len() != tokens.len() {
        return Err(GranularityError::LengthMismatch {
            labels: token_labels.len(),
            items: tokens.len(),
        });
    }
    let n_words = tokens.iter().map(|t| t.word_index + 1).max().unwrap_or(0);
    let mut first: Vec<Option<usize>> = vec![None; n_words];
    let mut ranges: Vec<(usize, usize)> = vec![(usize::MAX, 0); n_words];
    for (i, t) in tokens.iter().enumerate() {
        if t.is_first_of_word && first[t.word_index].is_none() {
            first[t.word_index] = Some(i);
        }
        let r = &mut ranges[t.word_index];
        r.0 = r.0.min(i);
        r.1 = r.1.max(i + 1);
    }
    let labels = first
        .iter()
        .enumerate()
        .map(|(w, f)| {
            f.map(|i| token_labels[i])
                .ok_or(GranularityError::MissingFirstToken(w))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LabelSequence {
        level: Level::Word,
        labels,
        alignment: ranges,
    })
}

/// Word-index range of every sentence. Sentences holding no unit are dropped.
pub fn sentence_word_ranges(units: &[Unit], sentences: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(sentences.len());
    let mut w = 0;
    for &(s, e) in sentences {
        while w < units.len() && units[w].start < s {
            w += 1;
        }
        let begin = w;
        while w < units.len() && units[w].start < e {
            w += 1;
        }
        if w > begin {
            out.push((begin, w));
        }
    }
    out
}

/// Majority label of a sentence's words; an exact tie takes the first
/// word's label.
pub fn majority(labels: &[Label]) -> Option<Label> {
    let first = *labels.first()?;
    let machine = labels.iter().filter(|&&l| l == Label::Machine).count();
    let human = labels.len() - machine;
    Some(match machine.cmp(&human) {
        std::cmp::Ordering::Greater => Label::Machine,
        std::cmp::Ordering::Less => Label::Human,
        std::cmp::Ordering::Equal => first,
    })
}

pub fn words_to_sentences(
    word_labels: &[Label],
    sentence_ranges: &[(usize, usize)],
) -> Result<LabelSequence, GranularityError> {
    let mut expected = 0;
    let mut labels = Vec::with_capacity(sentence_ranges.len());
    for (i, &(s, e)) in sentence_ranges.iter().enumerate() {
        if s >= e {
            return Err(GranularityError::EmptySentence(i));
        }
        if s != expected || e > word_labels.len() {
            return Err(GranularityError::BadCoverage(word_labels.len()));
        }
        expected = e;
        labels.push(majority(&word_labels[s..e]).expect("non-empty range"));
    }
    if expected != word_labels.len() {
        return Err(GranularityError::BadCoverage(word_labels.len()));
    }
    Ok(LabelSequence {
        level: Level::Sentence,
        labels,
        alignment: sentence_ranges.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub label: Label,
    pub start: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: Vec<Run>,
    pub change_count: usize,
    pub longest_run_label: Label,
    pub longest_run_fraction: f64,
}

impl RunSummary {
    /// Expands the runs back into the label sequence.
    pub fn expand(&self) -> Vec<Label> {
        self.runs
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.label, r.length))
            .collect()
    }
}

/// Maximal runs, left to right. The longest-run tie goes to the earlier run.
pub fn run_summary(labels: &[Label]) -> Result<RunSummary, GranularityError> {
    if labels.is_empty() {
        return Err(GranularityError::Empty);
    }
    let mut runs: Vec<Run> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.label == l => r.length += 1,
            _ => runs.push(Run {
                label: l,
                start: i,
                length: 1,
            }),
        }
    }
    let mut longest = runs[0];
    for r in &runs[1..] {
        if r.length > longest.length {
            longest = *r;
        }
    }
    Ok(RunSummary {
        change_count: runs.len() - 1,
        longest_run_label: longest.label,
        longest_run_fraction: longest.length as f64 / labels.len() as f64,
        runs,
    })
}

/// Labels the document `positive` iff at least `threshold` of its units
/// carry `positive`. An empty sequence gets the other label.
pub fn doc_label_threshold(labels: &[Label], positive: Label, threshold: f64) -> Label {
    if labels.is_empty() {
        return positive.other();
    }
    let hits = labels.iter().filter(|&&l| l == positive).count();
    if hits as f64 / labels.len() as f64 >= threshold {
        positive
    } else {
        positive.other()
    }
}

/// Default threshold of the document adapters: one percent.
pub const DOC_THRESHOLD: f64 = 0.01;

/// Document label from the longest run; confidence
/// `longest_run_fraction / (1 + change_count)`.
pub fn doc_label_runs(labels: &[Label]) -> Result<(Label, f64), GranularityError> {
    let s = run_summary(labels)?;
    Ok((
        s.longest_run_label,
        s.longest_run_fraction / (1 + s.change_count) as f64,
    ))
}

/// Index `k` minimising disagreement between `labels` and `k` human labels
/// followed by machine labels; ties take the smallest `k`.
pub fn nearest_split(labels: &[Label]) -> usize {
    // cost(k) = machine labels before k + human labels from k on
    let mut cost = labels.iter().filter(|&&l| l == Label::Human).count();
    let (mut best, mut best_cost) = (0, cost);
    for (i, &l) in labels.iter().enumerate() {
        if l == Label::Human {
            cost -= 1;
        } else {
            cost += 1;
        }
        if cost < best_cost {
            best = i + 1;
            best_cost = cost;
        }
    }
    best
}
