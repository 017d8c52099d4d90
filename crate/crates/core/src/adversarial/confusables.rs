use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

const BUILTIN: &str = include_str!("../../data/confusables.txt");

#[derive(Debug, Error)]
pub enum ConfusablesError {
    #[error("confusables line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Look-alike scalar → canonical scalar.
///
/// Canonical targets never appear as keys (self-mappings are dropped on
/// load), so lookup is idempotent and the mapping has no cycles.
#[derive(Debug, Clone)]
pub struct ConfusablesTable {
    map: HashMap<char, char>,
    inverse: BTreeMap<char, Vec<char>>,
    pub provenance: String,
}

fn parse_scalar(s: &str) -> Result<char, String> {
    let hex = s.trim_start_matches("U+").trim_start_matches("u+");
    let v = u32::from_str_radix(hex, 16).map_err(|e| format!("bad hex {s:?}: {e}"))?;
    char::from_u32(v).ok_or_else(|| format!("{s} is not a Unicode scalar value"))
}

impl ConfusablesTable {
    /// The table shipped with the crate.
    pub fn builtin() -> &'static ConfusablesTable {
        static TABLE: OnceLock<ConfusablesTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            Self::parse(BUILTIN, "builtin").expect("shipped confusables table is valid")
        })
    }

    /// Parses lines of `<hex scalar> <hex scalar> [# comment]`. Blank and
    /// comment-only lines are skipped.
    pub fn parse(content: &str, provenance: impl Into<String>) -> Result<Self, ConfusablesError> {
        let mut map = HashMap::new();
        for (i, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfusablesError::Line {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(err(format!("expected 2 fields, found {}", fields.len())));
            }
            let from = parse_scalar(fields[0]).map_err(err)?;
            let to = parse_scalar(fields[1]).map_err(err)?;
            if from == to {
                continue;
            }
            if let Some(prev) = map.insert(from, to) {
                if prev != to {
                    return Err(err(format!("U+{:04X} mapped twice", from as u32)));
                }
            }
        }
        if let Some((&k, _)) = map.iter().find(|(_, v)| map.contains_key(v)) {
            return Err(ConfusablesError::Line {
                line: 0,
                message: format!(
                    "target of U+{:04X} is itself remapped (chain or cycle)",
                    k as u32
                ),
            });
        }
        let mut inverse: BTreeMap<char, Vec<char>> = BTreeMap::new();
        for (&k, &v) in &map {
            inverse.entry(v).or_default().push(k);
        }
        for v in inverse.values_mut() {
            v.sort_unstable();
        }
        Ok(Self {
            map,
            inverse,
            provenance: provenance.into(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfusablesError> {
        let p = path.as_ref();
        Self::parse(&std::fs::read_to_string(p)?, p.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, c: char) -> Option<char> {
        self.map.get(&c).copied()
    }

    /// Canonical form of `c` (itself when unmapped).
    pub fn canonical(&self, c: char) -> char {
        self.get(c).unwrap_or(c)
    }

    /// Look-alikes of a canonical scalar, sorted.
    pub fn homoglyphs_of(&self, c: char) -> &[char] {
        self.inverse.get(&c).map_or(&[], Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table() {
        let t = ConfusablesTable::builtin();
        assert!(t.len() >= 500, "{}", t.len());
        assert_eq!(t.get('\u{0430}'), Some('a'));
        for c in ['a', 'z', 'A', '0', '!'] {
            assert!(!t.homoglyphs_of(c).is_empty(), "{c}");
            assert_eq!(t.get(c), None);
        }
    }

    #[test]
    fn rejects_bad_lines() {
        let e = ConfusablesTable::parse("0430 0061\nzz 0061\n", "t").unwrap_err();
        assert!(matches!(e, ConfusablesError::Line { line: 2, .. }));
        let e = ConfusablesTable::parse("0430\n", "t").unwrap_err();
        assert!(matches!(e, ConfusablesError::Line { line: 1, .. }));
        assert!(ConfusablesTable::parse("D800 0061\n", "t").is_err());
        // chain a -> b -> c
        assert!(ConfusablesTable::parse("0430 0061\n0061 0062\n", "t").is_err());
        let t = ConfusablesTable::parse("# only comments\n\n0061 0061\n", "t").unwrap();
        assert!(t.is_empty());
    }
}
