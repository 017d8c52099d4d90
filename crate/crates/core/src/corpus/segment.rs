//! Unit and sentence segmentation.
//!
//! All offsets are counted in Unicode scalar values, never bytes.

use serde::{Deserialize, Serialize};

/// Atomic evaluation unit: whitespace-delimited words, or single scalars for
/// scripts written without spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitMode {
    Word,
    Character,
}

impl UnitMode {
    /// Character mode for Chinese and Japanese, word mode for everything else.
    pub fn for_language(tag: &str) -> Self {
        let primary = tag
            .split(['-', '_'])
            .next()
            .unwrap_or("")
            .to_ascii_lowercase();
        match primary.as_str() {
            "zh" | "ja" => UnitMode::Character,
            _ => UnitMode::Word,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnitMode::Word => "word",
            UnitMode::Character => "character",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub kind: UnitMode,
}

impl Unit {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Splits `text` into units. Word mode splits on whitespace runs; character
/// mode emits one unit per non-whitespace scalar.
pub fn segment_units(text: &str, mode: UnitMode) -> Vec<Unit> {
    let mut units = Vec::new();
    match mode {
        UnitMode::Character => {
            for (i, c) in text.chars().enumerate() {
                if !c.is_whitespace() {
                    units.push(Unit {
                        text: c.to_string(),
                        start: i,
                        end: i + 1,
                        kind: mode,
                    });
                }
            }
        }
        UnitMode::Word => {
            let mut current = String::new();
            let mut start = 0;
            let mut pos = 0;
            for c in text.chars() {
                if c.is_whitespace() {
                    if !current.is_empty() {
                        units.push(Unit {
                            text: std::mem::take(&mut current),
                            start,
                            end: pos,
                            kind: mode,
                        });
                    }
                } else {
                    if current.is_empty() {
                        start = pos;
                    }
                    current.push(c);
                }
                pos += 1;
            }
            if !current.is_empty() {
                units.push(Unit {
                    text: current,
                    start,
                    end: pos,
                    kind: mode,
                });
            }
        }
    }
    units
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…' | '。' | '！' | '？')
}

// Full-width terminators are not followed by spaces in CJK text.
fn is_cjk_terminator(c: char) -> bool {
    matches!(c, '。' | '！' | '？')
}

/// Sentence ranges as `(start, end)` scalar offsets.
///
/// A sentence ends after a terminator that is followed by whitespace or the
/// end of text (full-width CJK terminators end a sentence unconditionally).
/// Ranges exclude surrounding whitespace and are never empty. Abbreviations
/// such as "Mr." are split like any other terminator.
pub fn segment_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    // exclusive end of the last non-whitespace scalar in the open sentence
    let mut last_content = 0;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            continue;
        }
        if start.is_none() {
            start = Some(i);
        }
        last_content = i + 1;
        let closes = is_terminator(c)
            && (is_cjk_terminator(c) || chars.get(i + 1).is_none_or(|n| n.is_whitespace()));
        if closes {
            out.push((start.take().unwrap(), i + 1));
        }
    }
    if let Some(s) = start {
        out.push((s, last_content));
    }
    out
}

/// Number of whitespace-delimited words.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Byte offset of every scalar boundary; `len() == scalar_count + 1`.
pub(crate) fn byte_offsets(text: &str) -> Vec<usize> {
    let mut offs: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    offs.push(text.len());
    offs
}

/// Substring by scalar offsets.
pub fn scalar_slice(text: &str, start: usize, end: usize) -> &str {
    let offs = byte_offsets(text);
    &text[offs[start]..offs[end]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(units: &[Unit]) -> Vec<(&str, usize, usize)> {
        units
            .iter()
            .map(|u| (u.text.as_str(), u.start, u.end))
            .collect()
    }

    #[test]
    fn word_units() {
        let u = segment_units("ab cd", UnitMode::Word);
        assert_eq!(spans(&u), vec![("ab", 0, 2), ("cd", 3, 5)]);
        assert!(segment_units("", UnitMode::Word).is_empty());
        let u = segment_units("  x\t\ny  ", UnitMode::Word);
        assert_eq!(spans(&u), vec![("x", 2, 3), ("y", 5, 6)]);
    }

    #[test]
    fn character_units_skip_whitespace() {
        let u = segment_units("你好 吗", UnitMode::Character);
        assert_eq!(spans(&u), vec![("你", 0, 1), ("好", 1, 2), ("吗", 3, 4)]);
    }

    #[test]
    fn sentences() {
        assert_eq!(segment_sentences("A. B! C"), vec![(0, 2), (3, 5), (6, 7)]);
        assert_eq!(segment_sentences("no terminator"), vec![(0, 13)]);
        // literal rule: the abbreviation closes a sentence
        assert_eq!(segment_sentences("Mr. X came.").len(), 2);
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("   ").is_empty());
        assert_eq!(segment_sentences("3.14 is pi"), vec![(0, 10)]);
        assert_eq!(segment_sentences("Wait!! Now"), vec![(0, 6), (7, 10)]);
        assert_eq!(segment_sentences("你好。我很好。"), vec![(0, 3), (3, 7)]);
        assert_eq!(segment_sentences("end.  "), vec![(0, 4)]);
    }

    #[test]
    fn language_modes() {
        assert_eq!(UnitMode::for_language("zh"), UnitMode::Character);
        assert_eq!(UnitMode::for_language("ja-JP"), UnitMode::Character);
        assert_eq!(UnitMode::for_language("zh_Hant"), UnitMode::Character);
        assert_eq!(UnitMode::for_language("en"), UnitMode::Word);
        assert_eq!(UnitMode::for_language(""), UnitMode::Word);
    }

    #[test]
    fn slicing_is_by_scalar() {
        assert_eq!(scalar_slice("héllo wörld", 6, 11), "wörld");
    }
}
