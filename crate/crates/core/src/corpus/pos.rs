use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{CorpusError, Result};

/// POS tags produced by an external tagger, keyed by sentence id and token index.
#[derive(Debug, Clone, Default)]
pub struct PosSidecar {
    tags: HashMap<String, BTreeMap<usize, String>>,
}

impl PosSidecar {
    /// Reads a UTF-8 TSV with columns `sentence_id`, `token_index`, `tag`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut tags: HashMap<String, BTreeMap<usize, String>> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |message: String| CorpusError::Format {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            if cols.len() != 3 {
                return Err(bad(format!("expected 3 tab-separated columns, got {}", cols.len())));
            }
            let idx: usize = cols[1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad token index {:?}", cols[1])))?;
            tags.entry(cols[0].to_string())
                .or_default()
                .insert(idx, cols[2].trim().to_string());
        }
        Ok(Self { tags })
    }

    /// Tags for a sentence, if the sidecar covers exactly `n_tokens` positions.
    pub fn tags_for(&self, sentence_id: &str, n_tokens: usize) -> Option<Vec<String>> {
        let map = self.tags.get(sentence_id)?;
        if map.len() != n_tokens || map.keys().next_back() != n_tokens.checked_sub(1).as_ref() {
            return None;
        }
        Some(map.values().cloned().collect())
    }
}

/// Where per-token POS tags come from.
#[derive(Debug, Clone, Default)]
pub enum PosSource {
    #[default]
    Fallback,
    Sidecar(PosSidecar),
}

impl PosSource {
    pub fn tags(&self, sentence_id: &str, surfaces: &[&str]) -> Vec<String> {
        if let PosSource::Sidecar(sc) = self {
            match sc.tags_for(sentence_id, surfaces.len()) {
                Some(t) => return t,
                None => log::warn!(
                    "POS sidecar has no complete entry for sentence {sentence_id}; using fallback tagger"
                ),
            }
        }
        surfaces.iter().enumerate().map(|(i, s)| fallback_tag(s, i == 0)).collect()
    }
}

const DETERMINERS: &[&str] = &["the", "a", "an", "this", "these", "those", "that", "each", "all", "no"];
const PREPOSITIONS: &[&str] = &[
    "of", "in", "with", "by", "for", "on", "from", "at", "as", "than", "during", "after", "before",
    "between", "into", "within", "without", "via", "whereas", "although", "because", "while", "if",
];
const CONJUNCTIONS: &[&str] = &["and", "or", "but", "nor"];
const MODALS: &[&str] = &["may", "can", "should", "must", "will", "would", "could", "might"];
const PRONOUNS: &[&str] = &["it", "they", "we", "he", "she", "its", "their"];

/// Suffix-heuristic Penn Treebank tagger used when no external tags exist.
pub fn fallback_tag(word: &str, sentence_initial: bool) -> String {
    let lower = word.to_lowercase();
    let w = lower.as_str();
    let tag = if w.chars().all(|c| !c.is_alphanumeric()) {
        match w {
            "." | "!" | "?" => ".",
            "," => ",",
            ":" | ";" => ":",
            "(" | "[" => "-LRB-",
            ")" | "]" => "-RRB-",
            _ => "SYM",
        }
    } else if w.chars().all(|c| c.is_ascii_digit() || c == '.') {
        "CD"
    } else if DETERMINERS.contains(&w) {
        "DT"
    } else if w == "to" {
        "TO"
    } else if PREPOSITIONS.contains(&w) {
        "IN"
    } else if CONJUNCTIONS.contains(&w) {
        "CC"
    } else if MODALS.contains(&w) {
        "MD"
    } else if PRONOUNS.contains(&w) {
        "PRP"
    } else if w == "not" || w.ends_with("ly") {
        "RB"
    } else if w == "is" || w == "has" {
        "VBZ"
    } else if w == "are" || w == "have" {
        "VBP"
    } else if w == "was" || w == "were" {
        "VBD"
    } else if w == "be" {
        "VB"
    } else if w == "been" {
        "VBN"
    } else if w.ends_with("ing") && w.len() > 4 {
        "VBG"
    } else if w.ends_with("ed") && w.len() > 3 {
        "VBN"
    } else if ["tion", "sion", "ment", "ness", "ity", "ance", "ence"].iter().any(|s| w.ends_with(s)) {
        "NN"
    } else if ["ous", "ive", "able", "ible", "al", "ic", "ary"].iter().any(|s| w.ends_with(s)) {
        "JJ"
    } else if ["es", "ates", "izes"].iter().any(|s| w.ends_with(s)) && w.len() > 4 {
        "VBZ"
    } else if w.ends_with('s') && !w.ends_with("ss") && w.len() > 3 {
        "NNS"
    } else if !sentence_initial && word.chars().next().is_some_and(char::is_uppercase) {
        "NNP"
    } else {
        "NN"
    };
    tag.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_covers_common_cases() {
        assert_eq!(fallback_tag("interferes", false), "VBZ");
        assert_eq!(fallback_tag("the", true), "DT");
        assert_eq!(fallback_tag("contraceptive", false), "JJ");
        assert_eq!(fallback_tag(".", false), ".");
        assert_eq!(fallback_tag("250", false), "CD");
        assert_eq!(fallback_tag("reduced", false), "VBN");
        assert_eq!(fallback_tag("Warfarin", false), "NNP");
        assert_eq!(fallback_tag("effect", false), "NN");
    }

    #[test]
    fn sidecar_lookup_and_fallback() {
        let sc = PosSidecar::parse("s1\t0\tNN\ns1\t1\tVBZ\ns2\t0\tNN\n", Path::new("pos.tsv")).unwrap();
        assert_eq!(sc.tags_for("s1", 2).unwrap(), vec!["NN", "VBZ"]);
        assert!(sc.tags_for("s2", 3).is_none());
        let src = PosSource::Sidecar(sc);
        assert_eq!(src.tags("s9", &["Drugs", "."]), vec!["NNS", "."]);
    }

    #[test]
    fn sidecar_line_errors_carry_line_number() {
        let err = PosSidecar::parse("s1\t0\tNN\ns1\tx\tNN\n", Path::new("p.tsv")).unwrap_err();
        assert!(matches!(err, CorpusError::Format { line: 2, .. }));
    }
}
