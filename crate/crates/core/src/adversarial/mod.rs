//! Robustness tooling: text normalisers and attack generators.

mod attack;
mod confusables;

pub use attack::{apply_attack, apply_attack_with, AttackError, AttackKind, ALT_SPELLINGS};
pub use confusables::{ConfusablesError, ConfusablesTable};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{scalar_slice, AuthorSpan, CorpusError, Document};
use crate::exec::{derive_seed, map_indexed, Execution};

/// Applies an attack span by span so gold labels stay aligned with the
/// perturbed text.
pub fn attack_document(
    doc: &Document,
    kind: AttackKind,
    rate: f64,
    rng: &mut impl rand::Rng,
) -> Result<Document, AttackError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(AttackError::BadRate(rate));
    }
    Ok(map_spans(doc, |s| {
        apply_attack(s, kind, rate, rng).expect("rate already checked")
    })?)
}

/// [`attack_document`] over a corpus; document `i` draws from its own stream
/// seeded by `(seed, i)`, so the output does not depend on scheduling.
pub fn attack_corpus(
    docs: &[Document],
    kind: AttackKind,
    rate: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Document>, AttackError> {
    map_indexed(exec, docs, |i, d| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, 0xA7));
        attack_document(d, kind, rate, &mut rng)
    })
    .into_iter()
    .collect()
}

/// Replaces every scalar listed in `table` by its canonical form. The scalar
/// length of the text is unchanged.
pub fn normalize_homoglyphs(text: &str, table: &ConfusablesTable) -> String {
    text.chars().map(|c| table.canonical(c)).collect()
}

/// Zero-width and bidirectional-control scalars removed by
/// [`strip_invisible`].
pub const INVISIBLE: &[char] = &[
    '\u{00AD}', // soft hyphen
    '\u{061C}', // arabic letter mark
    '\u{180E}', // mongolian vowel separator
    '\u{200B}', '\u{200C}', '\u{200D}', '\u{200E}', '\u{200F}', '\u{202A}', '\u{202B}', '\u{202C}',
    '\u{202D}', '\u{202E}', '\u{2060}', '\u{2061}', '\u{2062}', '\u{2063}', '\u{2064}', '\u{2066}',
    '\u{2067}', '\u{2068}', '\u{2069}', '\u{FEFF}',
];

/// Drops [`INVISIBLE`] scalars; with `collapse`, every whitespace run
/// becomes a single space.
pub fn strip_invisible(text: &str, collapse: bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_ws = false;
    for c in text.chars().filter(|c| !INVISIBLE.contains(c)) {
        if collapse && c.is_whitespace() {
            if !in_ws {
                out.push(' ');
            }
            in_ws = true;
        } else {
            out.push(c);
            in_ws = false;
        }
    }
    out
}

/// Rewrites a document span by span, rebuilding the gold spans from the new
/// piece lengths. Pieces that become empty are dropped. Unlabeled documents
/// are rewritten as a whole.
pub fn map_spans(
    doc: &Document,
    mut f: impl FnMut(&str) -> String,
) -> Result<Document, CorpusError> {
    let mut out = doc.clone();
    let Some(spans) = &doc.spans else {
        out.text = f(&doc.text);
        return Ok(out);
    };
    let mut text = String::with_capacity(doc.text.len());
    let mut new_spans = Vec::with_capacity(spans.len());
    let mut pos = 0;
    for s in spans {
        let piece = f(scalar_slice(&doc.text, s.start, s.end));
        let n = piece.chars().count();
        if n > 0 {
            new_spans.push(AuthorSpan::new(pos, pos + n, s.label));
            pos += n;
            text.push_str(&piece);
        }
    }
    let mut rebuilt = Document::new(
        doc.id.clone(),
        doc.language.clone(),
        doc.case_kind,
        doc.generator_id.clone(),
        text,
        new_spans,
    )?;
    rebuilt.unit_mode = doc.unit_mode;
    rebuilt.meta = doc.meta.clone();
    rebuilt.orig_suffix = doc.orig_suffix.clone();
    rebuilt.extra = doc.extra.clone();
    Ok(rebuilt)
}

/// Homoglyph normalisation plus invisible-scalar removal (no whitespace
/// collapse, so word units stay aligned with the input).
pub fn normalize_document(
    doc: &Document,
    table: &ConfusablesTable,
) -> Result<Document, CorpusError> {
    map_spans(doc, |s| {
        strip_invisible(&normalize_homoglyphs(s, table), false)
    })
}
