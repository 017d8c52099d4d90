//! Sub-word tokenization and hashed sparse emission features.
//!
//! Feature strings are hashed with 64-bit FNV-1a (offset basis
//! `0xcbf29ce484222325`, prime `0x100000001b3`) followed by the SplitMix64
//! finaliser (`0xbf58476d1ce4e5b9`, `0x94d049bb133111eb`), and reduced to the
//! low 20 bits. Models trained here are therefore portable to any
//! implementation that reproduces the same feature strings.

use thiserror::Error;
use unicode_script::{Script, UnicodeScript};

use crate::corpus::{Unit, UnitMode};

pub const FEATURE_BITS: u32 = 20;
pub const FEATURE_DIM: usize = 1 << FEATURE_BITS;
/// Longest token, in scalars, before a word is force-split.
pub const MAX_TOKEN_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    /// Index of the owning unit.
    pub word_index: usize,
    pub is_first_of_word: bool,
}

/// Strictly increasing feature indices; every present feature has value 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector {
    indices: Vec<u32>,
}

impl FeatureVector {
    pub fn from_indices(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: u32) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    /// Keeps each index independently with probability `1 - p`.
    pub fn dropout(&self, p: f64, rng: &mut impl rand::Rng) -> FeatureVector {
        if p <= 0.0 {
            return self.clone();
        }
        FeatureVector {
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|_| rng.random::<f64>() >= p)
                .collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("external score count {got} does not match token count {expected}")]
    ScoreLengthMismatch { expected: usize, got: usize },
    #[error("token index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("external score line {line}: {message}")]
    ScoreParse { line: usize, message: String },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    /// Letters of script-neutral characters carry `Script::Common`.
    Letter(Script),
    Digit,
    Punct,
}

fn char_class(c: char) -> CharClass {
    let script = c.script();
    if script == Script::Inherited {
        // combining marks attach to whatever letter precedes them
        CharClass::Letter(Script::Common)
    } else if c.is_alphabetic() {
        CharClass::Letter(script)
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Punct
    }
}

/// Splits word units at letter/digit/punctuation class changes, at changes of
/// script between letters, and every [`MAX_TOKEN_LEN`] scalars. Character units pass through one-to-one.
pub fn tokenize(units: &[Unit]) -> Vec<Token> {
    let mut tokens = Vec::with_capacity(units.len());
    for (w, unit) in units.iter().enumerate() {
        if unit.kind == UnitMode::Character {
            tokens.push(Token {
                text: unit.text.clone(),
                start: unit.start,
                end: unit.end,
                word_index: w,
                is_first_of_word: true,
            });
            continue;
        }
        let mut cur = String::new();
        let mut cur_len = 0;
        let mut cur_start = unit.start;
        let mut prev: Option<CharClass> = None;
        for (k, c) in unit.text.chars().enumerate() {
            let mut class = char_class(c);
            // script-neutral letters continue the current run
            if let (Some(CharClass::Letter(p)), CharClass::Letter(Script::Common)) = (prev, class) {
                class = CharClass::Letter(p);
            }
            let split = cur_len == MAX_TOKEN_LEN || prev.is_some_and(|p| p != class);
            if split && cur_len > 0 {
                let first = tokens.last().is_none_or(|t: &Token| t.word_index != w);
                tokens.push(Token {
                    text: std::mem::take(&mut cur),
                    start: cur_start,
                    end: unit.start + k,
                    word_index: w,
                    is_first_of_word: first,
                });
                cur_start = unit.start + k;
                cur_len = 0;
            }
            cur.push(c);
            cur_len += 1;
            prev = Some(class);
        }
        if cur_len > 0 {
            let first = tokens.last().is_none_or(|t| t.word_index != w);
            tokens.push(Token {
                text: cur,
                start: cur_start,
                end: unit.end,
                word_index: w,
                is_first_of_word: first,
            });
        }
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Upper,
    Lower,
    Title,
    Digit,
    Punct,
    Other,
}

impl Shape {
    pub fn of(text: &str) -> Shape {
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return Shape::Other;
        }
        if chars.iter().all(|c| c.is_numeric()) {
            return Shape::Digit;
        }
        if chars.iter().all(|c| !c.is_alphanumeric()) {
            return Shape::Punct;
        }
        if chars.iter().all(|c| c.is_alphabetic()) {
            if chars.iter().all(|c| c.is_lowercase()) {
                return Shape::Lower;
            }
            if chars.iter().all(|c| c.is_uppercase()) {
                return Shape::Upper;
            }
            if chars[0].is_uppercase() && chars[1..].iter().all(|c| c.is_lowercase()) {
                return Shape::Title;
            }
        }
        Shape::Other
    }

    fn tag(self) -> &'static str {
        match self {
            Shape::Upper => "U",
            Shape::Lower => "L",
            Shape::Title => "T",
            Shape::Digit => "D",
            Shape::Punct => "P",
            Shape::Other => "O",
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit hash of a raw feature string.
pub fn hash64(feature: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in feature.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix_finalize(h)
}

/// Bucket of a raw feature string in `[0, FEATURE_DIM)`.
pub fn feature_index(feature: &str) -> u32 {
    (hash64(feature) & (FEATURE_DIM as u64 - 1)) as u32
}

fn length_bucket(n: usize) -> &'static str {
    match n {
        0..=1 => "1",
        2 => "2",
        3 => "3",
        4 => "4",
        5..=6 => "5-6",
        7..=9 => "7-9",
        _ => "10+",
    }
}

/// Per-token decile of external scores within the document: the bin is
/// `floor(10 * rank / n)` where `rank` counts strictly smaller scores.
fn score_bins(scores: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = scores.len();
    scores
        .iter()
        .map(|s| {
            let rank = sorted.partition_point(|x| x.total_cmp(s).is_lt());
            (10 * rank / n).min(9)
        })
        .collect()
}

/// Raw (unhashed) feature strings for token `i`.
pub fn raw_features(tokens: &[Token], i: usize, score_bin: Option<usize>) -> Vec<String> {
    let tok = &tokens[i];
    let mut out = Vec::with_capacity(24);
    out.push("b".to_string());
    let padded: Vec<char> = std::iter::once('^')
        .chain(tok.text.chars())
        .chain(std::iter::once('$'))
        .collect();
    let inner = &padded[1..padded.len() - 1];
    for c in inner {
        out.push(format!("c1:{c}"));
    }
    for n in 2..=3 {
        for win in padded.windows(n) {
            let s: String = win.iter().collect();
            out.push(format!("c{n}:{s}"));
        }
    }
    out.push(format!("s:{}", Shape::of(&tok.text).tag()));
    out.push(format!("l:{}", length_bucket(tok.end - tok.start)));
    out.push(format!("p:{}", 10 * i / tokens.len()));
    let prev = if i == 0 {
        "BOS"
    } else {
        Shape::of(&tokens[i - 1].text).tag()
    };
    let next = tokens
        .get(i + 1)
        .map_or("EOS", |t| Shape::of(&t.text).tag());
    out.push(format!("ps:{prev}"));
    out.push(format!("ns:{next}"));
    if let Some(bin) = score_bin {
        out.push(format!("x:{bin}"));
    }
    out
}

fn check_scores(
    tokens: &[Token],
    external: Option<&[f64]>,
) -> Result<Option<Vec<usize>>, FeatureError> {
    match external {
        None => Ok(None),
        Some(s) if s.len() != tokens.len() => Err(FeatureError::ScoreLengthMismatch {
            expected: tokens.len(),
            got: s.len(),
        }),
        Some(s) => Ok(Some(score_bins(s))),
    }
}

/// Features of token `i` given its ±1 window, document position and
/// optional external per-token scores.
pub fn extract(
    tokens: &[Token],
    i: usize,
    external_scores: Option<&[f64]>,
) -> Result<FeatureVector, FeatureError> {
    if i >= tokens.len() {
        return Err(FeatureError::IndexOutOfRange {
            index: i,
            len: tokens.len(),
        });
    }
    let bins = check_scores(tokens, external_scores)?;
    Ok(hash_all(raw_features(tokens, i, bins.map(|b| b[i]))))
}

/// Features for every token of a sequence.
pub fn extract_all(
    tokens: &[Token],
    external_scores: Option<&[f64]>,
) -> Result<Vec<FeatureVector>, FeatureError> {
    let bins = check_scores(tokens, external_scores)?;
    Ok((0..tokens.len())
        .map(|i| hash_all(raw_features(tokens, i, bins.as_ref().map(|b| b[i]))))
        .collect())
}

fn hash_all(raw: Vec<String>) -> FeatureVector {
    FeatureVector::from_indices(raw.iter().map(|f| feature_index(f)).collect())
}

/// Parses an external score file: one real per line, blank lines ignored.
pub fn parse_scores(content: &str) -> Result<Vec<f64>, FeatureError> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| FeatureError::ScoreParse {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::segment_units;
    use std::collections::HashSet;

    fn toks(text: &str) -> Vec<Token> {
        tokenize(&segment_units(text, UnitMode::Word))
    }

    #[test]
    fn class_change_split() {
        let t = toks("don't");
        let texts: Vec<&str> = t.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["don", "'", "t"]);
        assert_eq!(
            t.iter().map(|t| t.is_first_of_word).collect::<Vec<_>>(),
            [true, false, false]
        );
        assert_eq!((t[1].start, t[1].end), (3, 4));
        let t = toks("abc123 x");
        assert_eq!(t.len(), 3);
        assert_eq!(t[2].word_index, 1);
        assert!(t[2].is_first_of_word);
    }

    #[test]
    fn script_change_split() {
        // Latin "p", Cyrillic "а", Latin "ss"
        let t = toks("p\u{430}ss");
        let texts: Vec<&str> = t.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["p", "\u{430}", "ss"]);
        // combining marks stay with their base letter
        assert_eq!(toks("e\u{301}te").len(), 1);
        assert_eq!(toks("日本語").len(), 1);
    }

    #[test]
    fn length_cap() {
        let word = "a".repeat(40);
        let t = toks(&word);
        assert_eq!(t.len(), 3);
        assert!(t.iter().all(|t| t.text.chars().count() <= MAX_TOKEN_LEN));
        assert_eq!(t[2].end, 40);
    }

    #[test]
    fn character_mode_passthrough() {
        let units = segment_units("你好 吗!", UnitMode::Character);
        let t = tokenize(&units);
        assert_eq!(t.len(), units.len());
        assert!(t.iter().all(|t| t.is_first_of_word));
    }

    #[test]
    fn shapes() {
        assert_eq!(Shape::of("ABC"), Shape::Upper);
        assert_eq!(Shape::of("abc"), Shape::Lower);
        assert_eq!(Shape::of("Abc"), Shape::Title);
        assert_eq!(Shape::of("42"), Shape::Digit);
        assert_eq!(Shape::of("..."), Shape::Punct);
        assert_eq!(Shape::of("aB"), Shape::Other);
        assert_eq!(Shape::of("你"), Shape::Other);
    }

    #[test]
    fn deterministic_and_shape_sensitive() {
        let t = toks("The cat sat");
        let a = extract(&t, 1, None).unwrap();
        let b = extract(&t, 1, None).unwrap();
        assert_eq!(a, b);
        assert!(a.indices().windows(2).all(|w| w[0] < w[1]));
        let t2 = toks("The CAT sat");
        let c = extract(&t2, 1, None).unwrap();
        assert_ne!(a, c);
        assert!(c.contains(feature_index("s:U")));
        assert!(!c.contains(feature_index("s:L")));
    }

    #[test]
    fn locality() {
        // same window and token count, different far-away tokens
        let a = toks("alpha beta gamma delta epsilon zeta eta theta iota kappa");
        let b = toks("omega beta gamma delta epsilon zeta eta theta iota lambda");
        assert_eq!(extract(&a, 4, None).unwrap(), extract(&b, 4, None).unwrap());
    }

    #[test]
    fn external_scores() {
        let t = toks("a b c");
        assert_eq!(
            extract(&t, 0, Some(&[0.1, 0.2])).unwrap_err(),
            FeatureError::ScoreLengthMismatch {
                expected: 3,
                got: 2
            }
        );
        let with = extract(&t, 2, Some(&[0.1, 0.2, 0.9])).unwrap();
        let without = extract(&t, 2, None).unwrap();
        assert!(with.contains(feature_index("x:6")));
        assert_eq!(with.len(), without.len() + 1);
        assert_eq!(score_bins(&[3.0, 1.0, 2.0, 2.0]), vec![7, 0, 2, 2]);
        assert_eq!(parse_scores("0.5\n\n1e-3\n").unwrap(), vec![0.5, 1e-3]);
        assert!(parse_scores("0.5\nx\n").is_err());
    }

    #[test]
    fn hash_is_pinned() {
        // frozen so that model files stay portable
        assert_eq!(hash64(""), splitmix_finalize(FNV_OFFSET));
        assert_eq!(feature_index("b"), (hash64("b") & 0xFFFFF) as u32);
        let h = hash64("c1:a");
        assert_eq!(h, hash64("c1:a"));
        assert_ne!(h, hash64("c1:b"));
    }

    fn collision_rate(n: usize) -> f64 {
        let distinct: HashSet<u32> = (0..n).map(|i| feature_index(&format!("raw:{i}"))).collect();
        1.0 - distinct.len() as f64 / n as f64
    }

    #[test]
    fn collision_rate_matches_birthday_bound() {
        // Expected occupied buckets for n uniform throws into m bins is
        // m * (1 - (1 - 1/m)^n); the hashed rate must track that bound.
        let m = FEATURE_DIM as f64;
        for n in [100_000usize, 1_000_000] {
            let expected = 1.0 - m * (1.0 - (1.0 - 1.0 / m).powf(n as f64)) / n as f64;
            let got = collision_rate(n);
            assert!((got - expected).abs() < 0.005, "n={n}: {got} vs {expected}");
        }
        assert!(collision_rate(100_000) <= 0.05);
    }
}
