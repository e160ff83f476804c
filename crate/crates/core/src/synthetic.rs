//! Seeded synthetic data with known ground truth, used by the acceptance
//! suite and handy for trying the pipeline without a real corpus.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::DocumentRecord;
use crate::matrix::{squared_distance, DenseMatrix};
use crate::text::{Stoplist, ENGLISH_FUNCTION_WORDS};

/// Isotropic Gaussian blobs whose centers are pairwise at least
/// `separation` standard deviations apart. Returns points and true labels.
pub fn gaussian_blobs(
    n_clusters: usize,
    per_cluster: usize,
    dim: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> (DenseMatrix, Vec<usize>) {
    gaussian_blobs_in_box(n_clusters, per_cluster, dim, separation, sigma, 2.0, seed)
}

/// As [`gaussian_blobs`], with centers drawn uniformly from a cube whose side
/// is `box_factor` times the minimum center distance.
pub fn gaussian_blobs_in_box(
    n_clusters: usize,
    per_cluster: usize,
    dim: usize,
    separation: f64,
    sigma: f64,
    box_factor: f64,
    seed: u64,
) -> (DenseMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sq = (separation * sigma).powi(2);
    let side = box_factor * separation * sigma;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_clusters);
    while centers.len() < n_clusters {
        let c: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * side).collect();
        if centers.iter().all(|o| squared_distance(o, &c) >= min_sq) {
            centers.push(c);
        }
    }
    let mut values = Vec::with_capacity(n_clusters * per_cluster * dim);
    let mut labels = Vec::with_capacity(n_clusters * per_cluster);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..per_cluster {
            for &c in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(c + sigma * z);
            }
            labels.push(label);
        }
    }
    let x = DenseMatrix::from_vec(n_clusters * per_cluster, dim, values)
        .expect("generated values are finite and correctly sized");
    (x, labels)
}

/// Made-up lowercase words that are neither function words nor stopwords.
fn pseudo_words(count: usize, rng: &mut ChaCha8Rng, taken: &mut std::collections::HashSet<String>) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let stop = Stoplist::default();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.random_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(*CONSONANTS.choose(rng).unwrap() as char);
            w.push(*VOWELS.choose(rng).unwrap() as char);
        }
        if !stop.contains(&w) && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct PlantedTopics {
    pub n_topics: usize,
    pub docs_per_topic: usize,
    pub tokens_per_doc: usize,
    /// Fraction of each document's content tokens drawn from the shared pool.
    pub background_fraction: f64,
    pub topic_vocabulary: usize,
    pub background_vocabulary: usize,
}

impl Default for PlantedTopics {
    fn default() -> Self {
        Self {
            n_topics: 5,
            docs_per_topic: 100,
            tokens_per_doc: 200,
            background_fraction: 0.10,
            topic_vocabulary: 150,
            background_vocabulary: 100,
        }
    }
}

/// English-looking records drawn from disjoint topic vocabularies plus a
/// shared background pool. Content words alternate with function words so the
/// records pass the language filter; the function words are later removed as
/// stopwords, leaving exactly `tokens_per_doc` content tokens per document.
pub fn planted_topic_corpus(spec: &PlantedTopics, seed: u64) -> (Vec<DocumentRecord>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = std::collections::HashSet::new();
    let topics: Vec<Vec<String>> = (0..spec.n_topics)
        .map(|_| pseudo_words(spec.topic_vocabulary, &mut rng, &mut taken))
        .collect();
    let background = pseudo_words(spec.background_vocabulary, &mut rng, &mut taken);
    let n_background = (spec.tokens_per_doc as f64 * spec.background_fraction).round() as usize;

    let mut records = Vec::new();
    let mut labels = Vec::new();
    for doc in 0..spec.n_topics * spec.docs_per_topic {
        let topic = doc % spec.n_topics;
        let mut content: Vec<&str> = (0..spec.tokens_per_doc)
            .map(|i| {
                let pool = if i < n_background { &background } else { &topics[topic] };
                pool.choose(&mut rng).unwrap().as_str()
            })
            .collect();
        // interleave background words instead of front-loading them
        for i in (1..content.len()).rev() {
            let j = rng.random_range(0..=i);
            content.swap(i, j);
        }
        let mut body = String::new();
        for (i, w) in content.iter().enumerate() {
            if i > 0 {
                body.push(' ');
            }
            body.push_str(w);
            body.push(' ');
            body.push_str(ENGLISH_FUNCTION_WORDS.choose(&mut rng).unwrap());
        }
        body.push('.');
        records.push(DocumentRecord {
            doc_id: format!("doc-{doc:04}"),
            title: format!("Synthetic report {doc}"),
            abstract_text: String::new(),
            body_text: body,
            authors: vec![format!("Author {}", doc % 7), format!("Author {}", doc % 11)],
            journal: format!("Journal {}", topic),
            url: format!("https://example.org/papers/{doc}"),
            source_file: "synthetic".into(),
        });
        labels.push(topic);
    }
    (records, labels)
}

/// Two unit-variance blobs twenty standard deviations apart.
pub fn two_blobs(per_blob: usize, dim: usize, seed: u64) -> (DenseMatrix, Vec<usize>) {
    gaussian_blobs(2, per_blob, dim, 20.0, 1.0, seed)
}
