//! Tokenization and stopword removal.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};

/// English function words. Also the reference list for language detection.
pub const ENGLISH_FUNCTION_WORDS: &[&str] = &[
    "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "either",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "however", "if", "in", "into", "is", "it", "its",
    "itself", "just", "may", "me", "might", "more", "most", "must", "my", "myself", "neither",
    "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours",
    "ourselves", "out", "over", "own", "same", "shall", "she", "should", "so", "some", "such",
    "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "therefore",
    "these", "they", "this", "those", "through", "thus", "to", "too", "under", "until", "up",
    "upon", "us", "very", "was", "we", "were", "what", "when", "where", "whether", "which",
    "while", "who", "whom", "whose", "why", "will", "with", "within", "without", "would", "yet",
    "you", "your", "yours", "yourself", "yourselves",
];

const DEFAULT_DOMAIN_STOPWORDS: &str = include_str!("../data/domain_stopwords.txt");

/// Split on Unicode whitespace and punctuation, lowercase, and drop tokens
/// shorter than two characters or without any alphabetic character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some() && t.chars().any(char::is_alphabetic))
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

/// Built-in function words plus a user-overridable domain list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stoplist {
    base_words: BTreeSet<String>,
    domain_words: BTreeSet<String>,
}

impl Default for Stoplist {
    fn default() -> Self {
        Self::with_domain_text(DEFAULT_DOMAIN_STOPWORDS)
    }
}

impl Stoplist {
    /// Function words only, no domain list.
    pub fn english() -> Self {
        Self {
            base_words: ENGLISH_FUNCTION_WORDS.iter().map(|w| w.to_string()).collect(),
            domain_words: BTreeSet::new(),
        }
    }

    /// Parse a domain list: one word per line, `#` starts a comment.
    pub fn with_domain_text(text: &str) -> Self {
        let mut list = Self::english();
        for line in text.lines() {
            let word = line.split('#').next().unwrap_or("").trim().to_lowercase();
            if !word.is_empty() && !list.base_words.contains(&word) {
                list.domain_words.insert(word);
            }
        }
        list
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| AtlasError::Read {
            path: path.to_owned(),
            source,
        })?;
        Ok(Self::with_domain_text(&text))
    }

    pub fn base_words(&self) -> &BTreeSet<String> {
        &self.base_words
    }

    pub fn domain_words(&self) -> &BTreeSet<String> {
        &self.domain_words
    }

    pub fn contains(&self, token: &str) -> bool {
        self.base_words.contains(token) || self.domain_words.contains(token)
    }
}

pub fn remove_stopwords(tokens: Vec<String>, stoplist: &Stoplist) -> Vec<String> {
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

pub fn normalize_document(doc_id: &str, body: &str, stoplist: &Stoplist) -> TokenizedDocument {
    TokenizedDocument {
        doc_id: doc_id.to_owned(),
        tokens: remove_stopwords(tokenize(body), stoplist),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn splits_hyphens_and_drops_numbers() {
        assert_eq!(
            tokenize("SARS-CoV-2 replicates fast."),
            strings(&["sars", "cov", "replicates", "fast"])
        );
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn lowercases_before_stopword_removal() {
        assert_eq!(tokenize("The THE the"), strings(&["the", "the", "the"]));
    }

    #[test]
    fn keeps_alphanumeric_mixes() {
        assert_eq!(tokenize("covid19 (2020) h1n1, a"), strings(&["covid19", "h1n1"]));
    }

    #[test]
    fn removes_paper_boilerplate() {
        let list = Stoplist::default();
        let out = remove_stopwords(strings(&["the", "viral", "doi", "load"]), &list);
        assert_eq!(out, strings(&["viral", "load"]));
        assert!(remove_stopwords(vec![], &list).is_empty());
        assert!(remove_stopwords(strings(&["fig", "medrxiv", "of"]), &list).is_empty());
    }

    #[test]
    fn domain_file_merges_and_ignores_comments() {
        let list = Stoplist::with_domain_text("# header\nDOI\nthe  # already a function word\n\nfoo\n");
        assert!(list.domain_words().contains("doi"));
        assert!(list.domain_words().contains("foo"));
        assert!(!list.domain_words().contains("the"));
        assert!(list.base_words().is_disjoint(list.domain_words()));
    }

    #[test]
    fn shipped_defaults() {
        let list = Stoplist::default();
        for w in ["doi", "fig", "medrxiv", "preprint", "copyright", "license", "et", "al"] {
            assert!(list.contains(w), "{w}");
        }
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "[a-zA-Z0-9 .,;:!?()'\"\\-éüßΣω]{0,120}") {
            let once = tokenize(&text);
            let again = tokenize(&once.join(" "));
            prop_assert_eq!(once, again);
        }

        #[test]
        fn tokens_are_normalized(text in "\\PC{0,80}") {
            for t in tokenize(&text) {
                prop_assert!(t.chars().count() >= 2);
                prop_assert!(t.chars().any(char::is_alphabetic));
                prop_assert!(t.chars().all(char::is_alphanumeric));
                prop_assert_eq!(t.to_lowercase(), t.clone());
            }
        }

        #[test]
        fn stopword_output_is_clean_subsequence(
            words in proptest::collection::vec("(the|of|doi|fig|virus|cell|bat|al|et|host)", 0..40)
        ) {
            let list = Stoplist::default();
            let out = remove_stopwords(words.clone(), &list);
            prop_assert!(out.iter().all(|t| !list.contains(t)));
            let mut it = words.iter();
            for t in &out {
                prop_assert!(it.any(|w| w == t));
            }
        }
    }
}
