//! Capped vocabulary and tf-idf weighting into a row-normalized sparse matrix.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::matrix::SparseDocTermMatrix;
use crate::text::TokenizedDocument;

pub const DEFAULT_MAX_FEATURES: usize = 4096;

/// Kept terms in lexicographic order; a term's position is its column index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    corpus_frequency: Vec<usize>,
    n_docs: usize,
}

#[derive(Default)]
struct TermCounts {
    df: usize,
    cf: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }

    pub fn document_frequency(&self, index: usize) -> usize {
        self.document_frequency[index]
    }

    pub fn corpus_frequency(&self, index: usize) -> usize {
        self.corpus_frequency[index]
    }

    /// Smoothed inverse document frequency `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        let n = self.n_docs as f64;
        let df = self.document_frequency[index] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

fn count_document(doc: &TokenizedDocument) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in &doc.tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Rank terms by total corpus frequency (descending, ties lexicographic),
/// keep the first `max_features`, then index the survivors lexicographically.
pub fn build_vocabulary(docs: &[TokenizedDocument], max_features: usize) -> Result<Vocabulary> {
    if max_features == 0 {
        return Err(AtlasError::invalid("max_features must be at least 1"));
    }
    let merged: BTreeMap<&str, TermCounts> = docs
        .par_iter()
        .fold(BTreeMap::new, |mut acc: BTreeMap<&str, TermCounts>, doc| {
            for (term, c) in count_document(doc) {
                let e = acc.entry(term).or_default();
                e.df += 1;
                e.cf += c;
            }
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (term, c) in b {
                let e = a.entry(term).or_default();
                e.df += c.df;
                e.cf += c.cf;
            }
            a
        });
    if merged.is_empty() {
        return Err(AtlasError::EmptyVocabulary);
    }
    // BTreeMap iteration is lexicographic, so a stable sort on cf keeps the tie rule.
    let mut ranked: Vec<(&str, TermCounts)> = merged.into_iter().collect();
    ranked.sort_by_key(|t| std::cmp::Reverse(t.1.cf));
    ranked.truncate(max_features);
    ranked.sort_by(|a, b| a.0.cmp(b.0));

    Ok(Vocabulary {
        terms: ranked.iter().map(|(t, _)| t.to_string()).collect(),
        document_frequency: ranked.iter().map(|(_, c)| c.df).collect(),
        corpus_frequency: ranked.iter().map(|(_, c)| c.cf).collect(),
        n_docs: docs.len(),
    })
}

/// Raw-count tf times smoothed idf, each row scaled to unit l2 norm.
pub fn tfidf(docs: &[TokenizedDocument], vocab: &Vocabulary) -> Result<SparseDocTermMatrix> {
    let rows: Vec<Vec<(usize, f64)>> = docs
        .par_iter()
        .map(|doc| {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for t in &doc.tokens {
                if let Some(j) = vocab.index_of(t) {
                    *counts.entry(j).or_insert(0) += 1;
                }
            }
            let mut row: Vec<(usize, f64)> = counts
                .into_iter()
                .map(|(j, c)| (j, c as f64 * vocab.idf(j)))
                .collect();
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|(_, v)| *v /= norm);
            }
            row
        })
        .collect();
    SparseDocTermMatrix::from_sorted_rows(vocab.len(), rows)
}
