//! Text corpus loading, normalization, and character inventories.
//!
//! Every downstream stage (unit training, language modeling, graph
//! construction, lattice synthesis) assumes text that went through
//! [`normalize`]: Unicode NFC, trimmed, with internal whitespace runs
//! collapsed to single spaces. Words are obtained with [`split_words`],
//! which detaches punctuation marks into standalone single-character
//! tokens so that `"darling."` yields `["darling", "."]`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// One normalized line of text together with the language it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusLine {
    pub text: String,
    pub language_tag: String,
}

/// The set of characters a corpus (or a union of corpora) is written with.
///
/// Characters are kept unique and ordered by code point, so two inventories
/// built from the same text always compare equal and iterate identically.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CharacterInventory {
    chars: BTreeSet<char>,
}

impl CharacterInventory {
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        CharacterInventory {
            chars: chars.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.contains(&c)
    }

    /// Whether the plain space character is part of the inventory.
    pub fn includes_space(&self) -> bool {
        self.chars.contains(&' ')
    }

    /// Characters in code-point order.
    pub fn iter(&self) -> impl Iterator<Item = char> + '_ {
        self.chars.iter().copied()
    }

    /// Serialize as a symbol-table style listing, one character per line:
    /// `character<TAB>index`. The space character is written as `<space>`
    /// so the file survives whitespace-trimming editors.
    pub fn write_charset(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, c) in self.iter().enumerate() {
            let shown = escape_char(c);
            out.push_str(&format!("{shown}\t{i}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_charset(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut chars = BTreeSet::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let field = line
                .split('\t')
                .next()
                .ok_or_else(|| Error::format(path, idx + 1, "missing character field"))?;
            let c = unescape_char(field)
                .ok_or_else(|| Error::format(path, idx + 1, format!("bad character {field:?}")))?;
            chars.insert(c);
        }
        if chars.is_empty() {
            return Err(Error::EmptyInput(format!(
                "charset file {} has no characters",
                path.display()
            )));
        }
        Ok(CharacterInventory { chars })
    }
}

impl fmt::Display for CharacterInventory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} characters", self.len())
    }
}

fn escape_char(c: char) -> String {
    if c == ' ' {
        "<space>".to_string()
    } else {
        c.to_string()
    }
}

fn unescape_char(field: &str) -> Option<char> {
    if field == "<space>" {
        return Some(' ');
    }
    let mut it = field.chars();
    let c = it.next()?;
    if it.next().is_some() {
        return None;
    }
    Some(c)
}

/// Normalize a line of text: Unicode NFC, trim, collapse internal
/// whitespace runs to single spaces. Idempotent.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    let mut in_space = false;
    for c in nfc.trim().chars() {
        if c.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(c);
            in_space = false;
        }
    }
    out
}

/// Load a plain-text corpus, one line per entry, tagging every line with
/// `language_tag`. Lines that are empty after normalization are skipped.
pub fn load_corpus(path: &Path, language_tag: &str) -> Result<Vec<CorpusLine>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = strip_cr(raw);
        let text = std::str::from_utf8(raw).map_err(|_| Error::InvalidEncoding {
            path: path.to_path_buf(),
            line: idx + 1,
        })?;
        let text = normalize(text);
        if text.is_empty() {
            continue;
        }
        lines.push(CorpusLine {
            text,
            language_tag: language_tag.to_string(),
        });
    }
    Ok(lines)
}

/// Load a tagged corpus: TSV with columns `language_tag<TAB>text`.
pub fn load_tagged_corpus(path: &Path) -> Result<Vec<CorpusLine>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = strip_cr(raw);
        if raw.is_empty() {
            continue;
        }
        let text = std::str::from_utf8(raw).map_err(|_| Error::InvalidEncoding {
            path: path.to_path_buf(),
            line: idx + 1,
        })?;
        let (tag, rest) = text
            .split_once('\t')
            .ok_or_else(|| Error::format(path, idx + 1, "expected language_tag<TAB>text"))?;
        let rest = normalize(rest);
        if rest.is_empty() {
            continue;
        }
        lines.push(CorpusLine {
            text: rest,
            language_tag: tag.trim().to_string(),
        });
    }
    Ok(lines)
}

/// Collect every character occurring in the given lines (spaces included).
pub fn build_character_inventory(lines: &[CorpusLine]) -> Result<CharacterInventory> {
    if lines.is_empty() {
        return Err(Error::EmptyInput("no corpus lines for inventory".into()));
    }
    let mut chars = BTreeSet::new();
    for line in lines {
        chars.extend(line.text.chars());
    }
    Ok(CharacterInventory { chars })
}

/// Union of two inventories. Commutative, associative, idempotent.
pub fn unify_inventories(a: &CharacterInventory, b: &CharacterInventory) -> CharacterInventory {
    CharacterInventory {
        chars: a.chars.union(&b.chars).copied().collect(),
    }
}

/// Punctuation marks that are detached into standalone tokens.
///
/// ASCII punctuation plus the typographic marks common in European text.
/// Note this includes the apostrophe: `l'homme` becomes `l ' homme`.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '«' | '»' | '…' | '—' | '–' | '‘' | '’' | '“' | '”' | '¿' | '¡' | '·'
        )
}

/// Split a normalized line into word tokens.
///
/// Splits on spaces, then detaches punctuation marks as standalone
/// single-character tokens; runs of non-punctuation stay together.
/// Joining the result with single spaces reproduces the normalized text
/// up to spacing around punctuation.
pub fn split_words(line: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in line.split(' ') {
        if chunk.is_empty() {
            continue;
        }
        let mut current = String::new();
        for c in chunk.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                words.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

/// Normalize and re-spell a line in canonical form: words (with punctuation
/// detached) joined by single spaces. Canonical text is what lattices are
/// synthesized from and what decoders are scored against; `split_words` on
/// canonical text is a plain whitespace split.
pub fn canonicalize(text: &str) -> String {
    split_words(&normalize(text)).join(" ")
}

fn strip_cr(raw: &[u8]) -> &[u8] {
    match raw.last() {
        Some(b'\r') => &raw[..raw.len() - 1],
        _ => raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(text: &str, tag: &str) -> CorpusLine {
        CorpusLine {
            text: text.to_string(),
            language_tag: tag.to_string(),
        }
    }

    #[test]
    fn normalize_collapses_whitespace_and_trims() {
        assert_eq!(normalize("  Merci   beaucoup\t"), "Merci beaucoup");
    }

    #[test]
    fn normalize_is_idempotent() {
        let once = normalize("  un\u{0065}\u{0301}té   deux ");
        assert_eq!(normalize(&once), once);
    }

    #[test]
    fn normalize_applies_nfc() {
        // e + combining acute accent becomes the precomposed character.
        assert_eq!(normalize("caf\u{0065}\u{0301}"), "caf\u{00e9}");
    }

    #[test]
    fn split_words_detaches_punctuation() {
        assert_eq!(split_words("darling."), vec!["darling", "."]);
        assert_eq!(split_words("(oui)"), vec!["(", "oui", ")"]);
        assert_eq!(split_words("l'homme"), vec!["l", "'", "homme"]);
    }

    #[test]
    fn split_words_idempotent_on_canonical_text() {
        let canon = canonicalize("Eh bien, darling.");
        assert_eq!(canon, "Eh bien , darling .");
        assert_eq!(split_words(&canon).join(" "), canon);
    }

    #[test]
    fn split_words_tokens_are_nonempty_and_space_free() {
        for w in split_words("  du texte, (très) simple !   ") {
            assert!(!w.is_empty());
            assert!(!w.contains(' '));
        }
    }

    #[test]
    fn inventory_is_sorted_and_unique() {
        let lines = [line("baa", "x")];
        let inv = build_character_inventory(&lines).unwrap();
        let got: Vec<char> = inv.iter().collect();
        assert_eq!(got, vec!['a', 'b']);
    }

    #[test]
    fn inventory_counts_space() {
        let inv = build_character_inventory(&[line("a b", "x")]).unwrap();
        assert!(inv.includes_space());
        assert_eq!(inv.len(), 3);
    }

    #[test]
    fn inventory_of_empty_input_is_an_error() {
        assert!(matches!(
            build_character_inventory(&[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn union_size_is_subadditive_with_equality_iff_disjoint() {
        let a = CharacterInventory::from_chars("abc".chars());
        let b = CharacterInventory::from_chars("cde".chars());
        let u = unify_inventories(&a, &b);
        assert_eq!(u.len(), 5);
        let disjoint = CharacterInventory::from_chars("xyz".chars());
        assert_eq!(unify_inventories(&a, &disjoint).len(), a.len() + 3);
    }

    #[test]
    fn union_laws() {
        let a = CharacterInventory::from_chars("abé".chars());
        let b = CharacterInventory::from_chars("b#".chars());
        let c = CharacterInventory::from_chars("ç".chars());
        assert_eq!(unify_inventories(&a, &b), unify_inventories(&b, &a));
        assert_eq!(
            unify_inventories(&unify_inventories(&a, &b), &c),
            unify_inventories(&a, &unify_inventories(&b, &c))
        );
        assert_eq!(unify_inventories(&a, &a), a);
    }

    #[test]
    fn load_corpus_skips_empty_lines_and_tags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "Merci  beaucoup\n\n  \nau revoir\n").unwrap();
        let lines = load_corpus(&p, "fr").unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].text, "Merci beaucoup");
        assert_eq!(lines[1].language_tag, "fr");
    }

    #[test]
    fn load_corpus_reports_bad_encoding_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");
        std::fs::write(&p, b"fine\n\xff\xfe broken\n").unwrap();
        match load_corpus(&p, "fr") {
            Err(Error::InvalidEncoding { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected encoding error, got {other:?}"),
        }
    }

    #[test]
    fn tagged_corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        std::fs::write(&p, "fr\tMerci beaucoup\nen\tthank  you\n").unwrap();
        let lines = load_tagged_corpus(&p).unwrap();
        assert_eq!(lines[0].language_tag, "fr");
        assert_eq!(lines[1].text, "thank you");
    }

    #[test]
    fn charset_file_round_trip_includes_space() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("chars.tsv");
        let inv = CharacterInventory::from_chars(" aéb".chars());
        inv.write_charset(&p).unwrap();
        let back = CharacterInventory::read_charset(&p).unwrap();
        assert_eq!(back, inv);
    }
}
