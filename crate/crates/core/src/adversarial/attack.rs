//! Attack generators for robustness test corpora. Every attack is a pure
//! function of its input, rate and generator state; `rate == 0` is the
//! identity.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use thiserror::Error;

use super::ConfusablesTable;
use crate::corpus::segment_sentences;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    Homoglyph,
    Misspelling,
    AlternativeSpelling,
    ArticleDeletion,
    Whitespace,
    /// Clause reordering only. Not a real paraphrase, which needs a
    /// generator model.
    ParaphraseStub,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::Homoglyph,
        AttackKind::Misspelling,
        AttackKind::AlternativeSpelling,
        AttackKind::ArticleDeletion,
        AttackKind::Whitespace,
        AttackKind::ParaphraseStub,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Homoglyph => "homoglyph",
            AttackKind::Misspelling => "misspelling",
            AttackKind::AlternativeSpelling => "alternative_spelling",
            AttackKind::ArticleDeletion => "article_deletion",
            AttackKind::Whitespace => "whitespace",
            AttackKind::ParaphraseStub => "paraphrase_stub",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AttackError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("unknown attack kind {0:?}")]
    UnknownKind(String),
    #[error("attack rate {0} outside [0, 1]")]
    BadRate(f64),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// US ↔ GB spelling pairs used by the alternative-spelling attack.
pub const ALT_SPELLINGS: &[(&str, &str)] = &[
    ("color", "colour"),
    ("colors", "colours"),
    ("favorite", "favourite"),
    ("honor", "honour"),
    ("labor", "labour"),
    ("neighbor", "neighbour"),
    ("neighbors", "neighbours"),
    ("behavior", "behaviour"),
    ("flavor", "flavour"),
    ("humor", "humour"),
    ("center", "centre"),
    ("theater", "theatre"),
    ("meter", "metre"),
    ("fiber", "fibre"),
    ("organize", "organise"),
    ("organized", "organised"),
    ("realize", "realise"),
    ("realized", "realised"),
    ("recognize", "recognise"),
    ("apologize", "apologise"),
    ("analyze", "analyse"),
    ("defense", "defence"),
    ("license", "licence"),
    ("traveled", "travelled"),
    ("traveling", "travelling"),
    ("catalog", "catalogue"),
    ("program", "programme"),
    ("gray", "grey"),
    ("aluminum", "aluminium"),
    ("jewelry", "jewellery"),
];

/// Applies `kind` with the built-in confusables table.
pub fn apply_attack(
    text: &str,
    kind: AttackKind,
    rate: f64,
    rng: &mut impl Rng,
) -> Result<String, AttackError> {
    apply_attack_with(text, kind, rate, ConfusablesTable::builtin(), rng)
}

pub fn apply_attack_with(
    text: &str,
    kind: AttackKind,
    rate: f64,
    table: &ConfusablesTable,
    rng: &mut impl Rng,
) -> Result<String, AttackError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(AttackError::BadRate(rate));
    }
    if rate == 0.0 {
        return Ok(text.to_string());
    }
    Ok(match kind {
        AttackKind::Homoglyph => homoglyphs(text, rate, table, rng),
        AttackKind::Misspelling => map_words(text, |w| swap_letters(w, rate, rng)),
        AttackKind::AlternativeSpelling => map_words(text, |w| respell(w, rate, rng)),
        AttackKind::ArticleDeletion => delete_articles(text, rate, rng),
        AttackKind::Whitespace => widen_whitespace(text, rate, rng),
        AttackKind::ParaphraseStub => shuffle_clauses(text, rate, rng),
    })
}

fn homoglyphs(text: &str, rate: f64, table: &ConfusablesTable, rng: &mut impl Rng) -> String {
    text.chars()
        .map(|c| {
            let alts = table.homoglyphs_of(c);
            if !alts.is_empty() && rng.random::<f64>() < rate {
                *alts.choose(rng).unwrap()
            } else {
                c
            }
        })
        .collect()
}

/// Alternating runs of non-whitespace and whitespace.
fn pieces(text: &str) -> Vec<(bool, String)> {
    let mut out: Vec<(bool, String)> = Vec::new();
    for c in text.chars() {
        let ws = c.is_whitespace();
        match out.last_mut() {
            Some((w, s)) if *w == ws => s.push(c),
            _ => out.push((ws, c.to_string())),
        }
    }
    out
}

fn map_words(text: &str, mut f: impl FnMut(&str) -> String) -> String {
    pieces(text)
        .into_iter()
        .map(|(ws, s)| if ws { s } else { f(&s) })
        .collect()
}

fn swap_letters(word: &str, rate: f64, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let candidates: Vec<usize> = (0..chars.len().saturating_sub(1))
        .filter(|&k| {
            chars[k].is_alphabetic() && chars[k + 1].is_alphabetic() && chars[k] != chars[k + 1]
        })
        .collect();
    if candidates.is_empty() || rng.random::<f64>() >= rate {
        return word.to_string();
    }
    let k = *candidates.choose(rng).unwrap();
    chars.swap(k, k + 1);
    chars.into_iter().collect()
}

fn match_case(template: &str, word: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut c = word.chars();
        c.next()
            .map(|f| f.to_uppercase().chain(c).collect())
            .unwrap_or_default()
    } else {
        word.to_string()
    }
}

fn respell(word: &str, rate: f64, rng: &mut impl Rng) -> String {
    let core_end = word
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphabetic())
        .map_or(0, |(i, c)| i + c.len_utf8());
    let (core, tail) = word.split_at(core_end);
    let lower = core.to_lowercase();
    let swap = ALT_SPELLINGS.iter().find_map(|&(us, gb)| {
        if lower == us {
            Some(gb)
        } else if lower == gb {
            Some(us)
        } else {
            None
        }
    });
    match swap {
        Some(alt) if rng.random::<f64>() < rate => format!("{}{tail}", match_case(core, alt)),
        _ => word.to_string(),
    }
}

fn is_article(word: &str) -> bool {
    matches!(word.to_lowercase().as_str(), "a" | "an" | "the")
}

/// Drops an article together with the whitespace after it (or before it,
/// when it ends the text).
fn delete_articles(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    let ps = pieces(text);
    let mut keep = vec![true; ps.len()];
    for i in 0..ps.len() {
        let (ws, s) = &ps[i];
        if *ws || !is_article(s) || rng.random::<f64>() >= rate {
            continue;
        }
        keep[i] = false;
        if i + 1 < ps.len() {
            keep[i + 1] = false;
        } else if i > 0 && ps[i - 1].0 {
            keep[i - 1] = false;
        }
    }
    ps.into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|((_, s), _)| s)
        .collect()
}

fn widen_whitespace(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    pieces(text)
        .into_iter()
        .map(|(ws, mut s)| {
            if ws && rng.random::<f64>() < rate {
                s.push(' ');
            }
            s
        })
        .collect()
}

fn shuffle_clauses(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for (s, e) in segment_sentences(text) {
        out.extend(&chars[pos..s]);
        let sentence: String = chars[s..e].iter().collect();
        let (body, term) = match sentence.char_indices().last() {
            Some((i, '.' | '!' | '?' | '…' | '。' | '！' | '？')) => sentence.split_at(i),
            _ => (sentence.as_str(), ""),
        };
        let mut clauses: Vec<&str> = body.split(", ").collect();
        if clauses.len() > 1 && rng.random::<f64>() < rate {
            clauses.shuffle(rng);
            out.push_str(&clauses.join(", "));
            out.push_str(term);
        } else {
            out.push_str(&sentence);
        }
        pos = e;
    }
    out.extend(&chars[pos..]);
    out
}

#[cfg(test)]
mod tests {
    use super::super::normalize_homoglyphs;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    #[test]
    fn zero_rate_is_identity() {
        let text = "The color of the sky, seen from a hill, was gray. An owl flew!";
        for k in AttackKind::ALL {
            assert_eq!(
                apply_attack(text, k, 0.0, &mut rng(1)).unwrap(),
                text,
                "{k}"
            );
        }
    }

    #[test]
    fn article_deletion() {
        let out = apply_attack(
            "the cat saw a dog",
            AttackKind::ArticleDeletion,
            1.0,
            &mut rng(2),
        )
        .unwrap();
        assert_eq!(out, "cat saw dog");
        let out =
            apply_attack("give me the", AttackKind::ArticleDeletion, 1.0, &mut rng(2)).unwrap();
        assert_eq!(out, "give me");
    }

    #[test]
    fn spelling_and_whitespace() {
        let out = apply_attack(
            "Color and gray, colour.",
            AttackKind::AlternativeSpelling,
            1.0,
            &mut rng(3),
        )
        .unwrap();
        assert_eq!(out, "Colour and grey, color.");
        let out = apply_attack("a b c", AttackKind::Whitespace, 1.0, &mut rng(3)).unwrap();
        assert_eq!(out, "a  b  c");
        let out = apply_attack("abcd", AttackKind::Misspelling, 1.0, &mut rng(3)).unwrap();
        assert_ne!(out, "abcd");
        let mut sorted: Vec<char> = out.chars().collect();
        sorted.sort();
        assert_eq!(sorted, ['a', 'b', 'c', 'd']);
    }

    #[test]
    fn paraphrase_stub_reorders_clauses() {
        let text = "one two, three four, five six. Next";
        let out = apply_attack(text, AttackKind::ParaphraseStub, 1.0, &mut rng(4)).unwrap();
        assert!(out.ends_with(". Next"));
        let mut a: Vec<&str> = out.trim_end_matches(". Next").split(", ").collect();
        a.sort();
        assert_eq!(a, ["five six", "one two", "three four"]);
    }

    #[test]
    fn errors() {
        assert!(
            matches!("nope".parse::<AttackKind>(), Err(AttackError::UnknownKind(k)) if k == "nope")
        );
        assert_eq!(
            "article_deletion".parse::<AttackKind>().unwrap(),
            AttackKind::ArticleDeletion
        );
        assert!(matches!(
            apply_attack("x", AttackKind::Homoglyph, 1.5, &mut rng(5)),
            Err(AttackError::BadRate(r)) if r == 1.5
        ));
    }

    proptest! {
        #[test]
        fn homoglyph_round_trip(text in "[ -~]{0,80}", seed in any::<u64>(), rate in 0.0f64..=1.0) {
            let t = ConfusablesTable::builtin();
            let attacked = apply_attack(&text, AttackKind::Homoglyph, rate, &mut rng(seed)).unwrap();
            prop_assert_eq!(normalize_homoglyphs(&attacked, t), text);
        }

        #[test]
        fn attacks_are_deterministic(text in "[a-zA-Z ,.]{0,80}", seed in any::<u64>(), k in 0usize..6) {
            let kind = AttackKind::ALL[k];
            let a = apply_attack(&text, kind, 0.5, &mut rng(seed)).unwrap();
            let b = apply_attack(&text, kind, 0.5, &mut rng(seed)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
