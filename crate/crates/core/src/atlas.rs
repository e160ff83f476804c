//! The atlas file: documents with their map coordinates and cluster labels,
//! per-cluster descriptive terms, and run provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStats, DocumentRecord};
use crate::error::{AtlasError, Result};
use crate::matrix::RowMatrix;
use crate::tsne::Embedding2D;
use crate::vectorize::Vocabulary;

pub const SCHEMA_VERSION: &str = "1";
pub const DEFAULT_TOP_TERMS: usize = 10;
pub const LISTED_AUTHORS: usize = 3;
const COORDINATE_DIGITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasPoint {
    pub id: String,
    pub title: String,
    pub authors: String,
    pub journal: String,
    pub url: String,
    pub x: f64,
    pub y: f64,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtlasCluster {
    pub id: usize,
    pub size: usize,
    pub top_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub corpus_stats: CorpusStats,
    pub chosen_k: usize,
    pub final_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atlas {
    pub schema_version: String,
    pub points: Vec<AtlasPoint>,
    pub clusters: Vec<AtlasCluster>,
    pub provenance: Provenance,
}

/// The first three authors, then "et al." when more follow.
pub fn format_authors(authors: &[String]) -> String {
    let mut out = authors.iter().take(LISTED_AUTHORS).cloned().collect::<Vec<_>>().join(", ");
    if authors.len() > LISTED_AUTHORS {
        out.push_str(" et al.");
    }
    out
}

/// Round to six significant digits.
pub fn round_coordinate(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", COORDINATE_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses")
}

/// For each cluster in `0..k`, the `top_n` terms with the highest mean
/// tf-idf over its member rows, ties broken lexicographically. Terms with a
/// zero mean are never listed, so an empty cluster gets an empty list.
pub fn cluster_top_terms<M: RowMatrix>(
    x: &M,
    labels: &[usize],
    k: usize,
    vocab: &Vocabulary,
    top_n: usize,
) -> Result<Vec<Vec<String>>> {
    if labels.len() != x.n_rows() {
        return Err(AtlasError::DimensionMismatch {
            expected: x.n_rows(),
            actual: labels.len(),
        });
    }
    if vocab.len() != x.n_cols() {
        return Err(AtlasError::DimensionMismatch {
            expected: x.n_cols(),
            actual: vocab.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(AtlasError::invalid(format!("label {bad} is out of range for k = {k}")));
    }
    let mut sums = vec![vec![0.0; x.n_cols()]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        x.for_each_in_row(i, |j, v| sums[l][j] += v);
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(sum, count)| {
            if count == 0 {
                return Vec::new();
            }
            let mut ranked: Vec<(usize, f64)> = sum
                .into_iter()
                .map(|s| s / count as f64)
                .enumerate()
                .filter(|(_, m)| *m > 0.0)
                .collect();
            // vocabulary indices are in lexicographic order, so the index breaks ties
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked
                .into_iter()
                .take(top_n)
                .map(|(j, _)| vocab.term(j).to_string())
                .collect()
        })
        .collect())
}

/// Assemble the atlas. Inputs must share one document ordering; every
/// cluster in `0..k` is listed, including empty ones.
pub fn build_atlas(
    docs: &[DocumentRecord],
    embedding: &Embedding2D,
    labels: &[usize],
    top_terms: Vec<Vec<String>>,
    provenance: Provenance,
) -> Result<Atlas> {
    let n = docs.len();
    for len in [embedding.y.n_rows(), labels.len()] {
        if len != n {
            return Err(AtlasError::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    let k = top_terms.len();
    let mut sizes = vec![0usize; k];
    let mut points = Vec::with_capacity(n);
    for ((doc, xy), &cluster) in docs.iter().zip(embedding.y.rows()).zip(labels) {
        if cluster >= k {
            return Err(AtlasError::invalid(format!(
                "document {} has cluster {cluster} but only {k} clusters are described",
                doc.doc_id
            )));
        }
        if !(xy[0].is_finite() && xy[1].is_finite()) {
            return Err(AtlasError::invalid(format!("document {} has non-finite coordinates", doc.doc_id)));
        }
        sizes[cluster] += 1;
        points.push(AtlasPoint {
            id: doc.doc_id.clone(),
            title: doc.title.clone(),
            authors: format_authors(&doc.authors),
            journal: doc.journal.clone(),
            url: doc.url.clone(),
            x: round_coordinate(xy[0]),
            y: round_coordinate(xy[1]),
            cluster,
        });
    }
    let clusters = top_terms
        .into_iter()
        .zip(sizes)
        .enumerate()
        .map(|(id, (top_terms, size))| AtlasCluster { id, size, top_terms })
        .collect();
    Ok(Atlas {
        schema_version: SCHEMA_VERSION.to_string(),
        points,
        clusters,
        provenance,
    })
}

impl Atlas {
    /// Pretty JSON with a trailing newline; field order is fixed by the types.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("atlas serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Structural checks a consumer relies on.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(AtlasError::invalid(format!("unsupported schema version {}", self.schema_version)));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if c.id != i {
                return Err(AtlasError::invalid("cluster ids must be 0..k in order"));
            }
        }
        let mut sizes = vec![0usize; self.clusters.len()];
        for p in &self.points {
            if p.cluster >= sizes.len() {
                return Err(AtlasError::invalid(format!("point {} references unknown cluster {}", p.id, p.cluster)));
            }
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(AtlasError::invalid(format!("point {} has non-finite coordinates", p.id)));
            }
            sizes[p.cluster] += 1;
        }
        if sizes.iter().zip(&self.clusters).any(|(s, c)| *s != c.size) {
            return Err(AtlasError::invalid("cluster sizes do not match the points"));
        }
        Ok(())
    }
}

pub fn write_atlas(atlas: &Atlas, path: &Path) -> Result<()> {
    std::fs::write(path, atlas.to_json()).map_err(|source| AtlasError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_atlas(path: &Path) -> Result<Atlas> {
    let text = std::fs::read_to_string(path).map_err(|source| AtlasError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Atlas::from_json(&text).map_err(|e| AtlasError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
