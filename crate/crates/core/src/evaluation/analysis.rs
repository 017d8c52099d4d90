use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    scalar_slice, segment_sentences, segment_units, CaseKind, Document, Label, UnitMode,
};

use super::{ConfusionCounts, DocOutcome, EvalError, NO_GENERATOR};

/// Sentence-count bins as inclusive ranges; `None` is open-ended.
pub const LENGTH_BINS: [(usize, Option<usize>); 8] = [
    (1, Some(1)),
    (2, Some(2)),
    (3, Some(3)),
    (4, Some(4)),
    (5, Some(5)),
    (6, Some(10)),
    (11, Some(20)),
    (21, None),
];

/// Index into [`LENGTH_BINS`]; `None` for zero sentences.
pub fn length_bin(sentences: usize) -> Option<usize> {
    LENGTH_BINS
        .iter()
        .position(|&(lo, hi)| sentences >= lo && hi.is_none_or(|h| sentences <= h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    pub bin: String,
    pub documents: usize,
    pub units: u64,
    pub correct: u64,
    pub accuracy: f64,
}

/// Pooled unit-level accuracy per sentence-count bin. Empty bins are
/// omitted.
pub fn accuracy_vs_length(documents: &[DocOutcome]) -> Vec<LengthBin> {
    let mut acc: Vec<(usize, ConfusionCounts)> =
        vec![(0, ConfusionCounts::new(Label::Machine)); LENGTH_BINS.len()];
    for d in documents {
        if let Some(b) = length_bin(d.sentence_count) {
            acc[b].0 += 1;
            acc[b].1.merge(&d.units);
        }
    }
    acc.iter()
        .zip(LENGTH_BINS)
        .filter(|((n, _), _)| *n > 0)
        .map(|((n, c), (lo, hi))| LengthBin {
            bin: match hi {
                Some(h) if h == lo => lo.to_string(),
                Some(h) => format!("{lo}-{h}"),
                None => format!("{lo}+"),
            },
            documents: *n,
            units: c.total(),
            correct: c.correct(),
            accuracy: c.accuracy(),
        })
        .collect()
}

pub fn length_table_csv(bins: &[LengthBin]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if bins.is_empty() {
        w.write_record(["bin", "documents", "units", "correct", "accuracy"])?;
    }
    for b in bins {
        w.serialize(b)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

pub fn length_table_markdown(bins: &[LengthBin]) -> String {
    let mut out = String::from(
        "## Accuracy vs length (sentences)\n\n| Sentences | Documents | Units | Accuracy |\n|---|---:|---:|---:|\n",
    );
    for b in bins {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.4} |",
            b.bin, b.documents, b.units, b.accuracy
        );
    }
    out
}

/// Boundary-sentence tail lengths of one partial document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub language: String,
    pub generator: String,
    /// Units from the boundary (inclusive) to the end of its sentence in the
    /// original text.
    pub original: usize,
    /// The same in the synthesized text.
    pub generated: usize,
}

/// Units from `boundary` (inclusive) to the end of the sentence holding it.
fn tail_length(text: &str, boundary: usize, mode: UnitMode) -> usize {
    let sentences = segment_sentences(text);
    let end = sentences
        .iter()
        .find(|&&(s, e)| s <= boundary && boundary < e)
        .or_else(|| sentences.iter().find(|&&(s, _)| s >= boundary))
        .map(|&(_, e)| e)
        .unwrap_or(boundary);
    segment_units(text, mode)
        .iter()
        .filter(|u| u.start >= boundary && u.start < end)
        .count()
}

/// Original and generated tail lengths for a partial document carrying its
/// replaced suffix; `None` for anything else.
pub fn boundary_lengths(doc: &Document) -> Option<BoundarySample> {
    if doc.case_kind != CaseKind::Partial {
        return None;
    }
    let suffix = doc.orig_suffix.as_ref()?;
    let boundary = *doc.boundaries().first()?;
    let original = format!("{}{}", scalar_slice(&doc.text, 0, boundary), suffix);
    Some(BoundarySample {
        language: doc.language.clone(),
        generator: doc
            .generator_id
            .clone()
            .unwrap_or_else(|| NO_GENERATOR.into()),
        original: tail_length(&original, boundary, doc.unit_mode),
        generated: tail_length(&doc.text, boundary, doc.unit_mode),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub grouping: String,
    pub group: String,
    pub samples: usize,
    pub original_mean: f64,
    pub original_median: f64,
    pub generated_mean: f64,
    pub generated_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryStats {
    pub by_language: Vec<BoundaryRow>,
    pub by_generator: Vec<BoundaryRow>,
    pub samples: usize,
    /// Partial documents without an original suffix.
    pub skipped: usize,
}

fn mean(v: &[usize]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<usize>() as f64 / v.len() as f64
}

/// Middle value; the average of the two middle values for even counts.
fn median(v: &[usize]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_unstable();
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
    }
}

fn rows_by(
    samples: &[BoundarySample],
    grouping: &str,
    key: impl Fn(&BoundarySample) -> &str,
) -> Vec<BoundaryRow> {
    let mut groups: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for s in samples {
        let g = groups.entry(key(s)).or_default();
        g.0.push(s.original);
        g.1.push(s.generated);
    }
    groups
        .into_iter()
        .map(|(k, (o, g))| BoundaryRow {
            grouping: grouping.into(),
            group: k.into(),
            samples: o.len(),
            original_mean: mean(&o),
            original_median: median(&o),
            generated_mean: mean(&g),
            generated_median: median(&g),
        })
        .collect()
}

pub fn boundary_stats_from(samples: &[BoundarySample], skipped: usize) -> BoundaryStats {
    BoundaryStats {
        by_language: rows_by(samples, "language", |s| &s.language),
        by_generator: rows_by(samples, "generator", |s| &s.generator),
        samples: samples.len(),
        skipped,
    }
}

/// Mean and median boundary-sentence tail lengths per language and per
/// generator over the partial documents of a corpus.
pub fn boundary_stats(docs: &[Document]) -> BoundaryStats {
    let mut samples = Vec::new();
    let mut skipped = 0;
    for d in docs.iter().filter(|d| d.case_kind == CaseKind::Partial) {
        match boundary_lengths(d) {
            Some(s) => samples.push(s),
            None => skipped += 1,
        }
    }
    boundary_stats_from(&samples, skipped)
}

impl BoundaryStats {
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let rows: Vec<&BoundaryRow> = self.by_language.iter().chain(&self.by_generator).collect();
        if rows.is_empty() {
            w.write_record([
                "grouping",
                "group",
                "samples",
                "original_mean",
                "original_median",
                "generated_mean",
                "generated_median",
            ])?;
        }
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("utf-8"))
    }

    /// Median tail lengths per language, then per generator.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for (title, head, rows) in [
            ("by language", "Language", &self.by_language),
            ("by generator", "Generator", &self.by_generator),
        ] {
            let _ = write!(
                out,
                "## Boundary sentence lengths {title} (median units)\n\n\
                 | {head} | Length of original part | Length of generated part |\n|---|---:|---:|\n"
            );
            for r in rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} |",
                    r.group, r.original_median, r.generated_median
                );
            }
            out.push('\n');
        }
        out
    }
}

/// Coarse class of the units around a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClass {
    UpperInitial,
    Lower,
    Digit,
    Punctuation,
    Other,
}

impl BoundaryClass {
    pub const ALL: [BoundaryClass; 5] = [
        BoundaryClass::UpperInitial,
        BoundaryClass::Lower,
        BoundaryClass::Digit,
        BoundaryClass::Punctuation,
        BoundaryClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryClass::UpperInitial => "upper_initial",
            BoundaryClass::Lower => "lower",
            BoundaryClass::Digit => "digit",
            BoundaryClass::Punctuation => "punctuation",
            BoundaryClass::Other => "other",
        }
    }

    pub fn of_char(c: char) -> Self {
        if c.is_uppercase() {
            BoundaryClass::UpperInitial
        } else if c.is_lowercase() {
            BoundaryClass::Lower
        } else if c.is_numeric() {
            BoundaryClass::Digit
        } else if !c.is_alphanumeric() && !c.is_whitespace() {
            BoundaryClass::Punctuation
        } else {
            BoundaryClass::Other
        }
    }

    /// Unit before a boundary: punctuation if it ends in punctuation,
    /// otherwise the class of its first scalar.
    pub fn before(unit: &str) -> Self {
        match unit.chars().last().map(Self::of_char) {
            Some(BoundaryClass::Punctuation) => BoundaryClass::Punctuation,
            _ => unit
                .chars()
                .next()
                .map_or(BoundaryClass::Other, Self::of_char),
        }
    }

    /// Unit after a boundary: the class of its first scalar.
    pub fn after(unit: &str) -> Self {
        unit.chars()
            .next()
            .map_or(BoundaryClass::Other, Self::of_char)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigramAudit {
    /// `counts[pre][post]` in [`BoundaryClass::ALL`] order.
    pub counts: [[u64; 5]; 5],
    pub total: u64,
    /// Smallest cell, a measure of how evenly boundary contexts are covered.
    pub min_cell: u64,
}

/// Counts (pre, post) unit classes over every label change in the corpus.
pub fn boundary_bigram_audit(docs: &[Document]) -> BigramAudit {
    let mut counts = [[0u64; 5]; 5];
    for d in docs {
        let boundaries = d.boundaries();
        if boundaries.is_empty() {
            continue;
        }
        let units = d.units();
        for b in boundaries {
            let pre = units.iter().rev().find(|u| u.start < b);
            let post = units.iter().find(|u| u.start >= b);
            if let (Some(pre), Some(post)) = (pre, post) {
                counts[BoundaryClass::before(&pre.text) as usize]
                    [BoundaryClass::after(&post.text) as usize] += 1;
            }
        }
    }
    BigramAudit {
        total: counts.iter().flatten().sum(),
        min_cell: counts.iter().flatten().copied().min().unwrap_or(0),
        counts,
    }
}

impl BigramAudit {
    pub fn to_markdown(&self) -> String {
        let mut out =
            String::from("## Boundary bigram audit (rows: before, columns: after)\n\n| |");
        for c in BoundaryClass::ALL {
            let _ = write!(out, " {} |", c.as_str());
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(5));
        out.push('\n');
        for pre in BoundaryClass::ALL {
            let _ = write!(out, "| {} |", pre.as_str());
            for post in BoundaryClass::ALL {
                let _ = write!(out, " {} |", self.counts[pre as usize][post as usize]);
            }
            out.push('\n');
        }
        let _ = write!(
            out,
            "\nBoundaries: {}. Smallest cell: {}.\n",
            self.total, self.min_cell
        );
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("before,after,count\n");
        for pre in BoundaryClass::ALL {
            for post in BoundaryClass::ALL {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    pre.as_str(),
                    post.as_str(),
                    self.counts[pre as usize][post as usize]
                );
            }
        }
        out
    }
}
