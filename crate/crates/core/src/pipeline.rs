//! Stage-by-stage orchestration with on-disk caches.
//!
//! Every stage reads its predecessors' caches from the output directory and
//! writes its own. Each cache records a hash of everything that determines
//! its contents, so a cache produced under a different configuration is
//! refused rather than silently reused.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atlas::{build_atlas, cluster_top_terms, write_atlas, Provenance, DEFAULT_TOP_TERMS};
use crate::corpus::{clean_corpus, load_corpus, CorpusStats, DocumentRecord, InputFormat, DEFAULT_LANGUAGE_THRESHOLD};
use crate::error::{AtlasError, Result};
use crate::kmeans::{elbow_sweep, kmeans_fit, ElbowConfig, ElbowCurve, KMeansConfig, KMeansModel};
use crate::matrix::{DenseMatrix, SparseDocTermMatrix};
use crate::pca::{fit_pca, transform, PcaModel, PcaTarget, DEFAULT_VARIANCE_TARGET};
use crate::text::{normalize_document, Stoplist};
use crate::tsne::{embed, Embedding2D, TsneConfig};
use crate::vectorize::{build_vocabulary, tfidf, Vocabulary, DEFAULT_MAX_FEATURES};

// Per-stage offsets from the global seed.
pub const ELBOW_SEED_OFFSET: u64 = 1;
pub const CLUSTER_SEED_OFFSET: u64 = 2;
pub const TSNE_SEED_OFFSET: u64 = 3;

pub const CORPUS_CACHE: &str = "corpus.json";
pub const CORPUS_STATS_FILE: &str = "corpus_stats.json";
pub const VECTORS_CACHE: &str = "vectors.json";
pub const REDUCED_CACHE: &str = "reduced.json";
pub const ELBOW_CACHE: &str = "elbow.json";
pub const ELBOW_CSV: &str = "elbow.csv";
pub const CLUSTERS_CACHE: &str = "clusters.json";
pub const EMBEDDING_CACHE: &str = "embedding.json";
pub const ATLAS_FILE: &str = "atlas.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Ingest,
    Vectorize,
    Reduce,
    Elbow,
    Cluster,
    Embed,
    Export,
    All,
}

impl Stage {
    pub const SEQUENCE: [Stage; 7] = [
        Stage::Ingest,
        Stage::Vectorize,
        Stage::Reduce,
        Stage::Elbow,
        Stage::Cluster,
        Stage::Embed,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Vectorize => "vectorize",
            Stage::Reduce => "reduce",
            Stage::Elbow => "elbow",
            Stage::Cluster => "cluster",
            Stage::Embed => "embed",
            Stage::Export => "export",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        Stage::SEQUENCE
            .into_iter()
            .chain([Stage::All])
            .find(|st| st.name() == s)
            .ok_or_else(|| AtlasError::Config(format!("unknown stage `{s}`")))
    }
}

/// Everything a run needs. Relative paths are resolved against the
/// directory of the config file they were read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub format: InputFormat,
    /// Domain stopword list; the built-in list when absent.
    pub stoplist: Option<PathBuf>,
    pub language_threshold: f64,
    pub max_features: usize,
    pub variance_target: f64,
    /// Fixed cluster count; the elbow choice when absent.
    pub k: Option<usize>,
    pub top_terms: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; the rayon default when absent.
    pub threads: Option<usize>,
    pub kmeans: KMeansConfig,
    pub elbow: ElbowConfig,
    /// `tsne.seed` is ignored: the global seed fans out to every stage.
    pub tsne: TsneConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            format: InputFormat::Jsonl,
            stoplist: None,
            language_threshold: DEFAULT_LANGUAGE_THRESHOLD,
            max_features: DEFAULT_MAX_FEATURES,
            variance_target: DEFAULT_VARIANCE_TARGET,
            k: None,
            top_terms: DEFAULT_TOP_TERMS,
            seed: 0,
            out_dir: PathBuf::from("atlas-out"),
            threads: None,
            kmeans: KMeansConfig::default(),
            elbow: ElbowConfig::default(),
            tsne: TsneConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    /// Read a TOML or JSON config, chosen by extension (`.json` is JSON,
    /// anything else TOML). Does not validate.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| AtlasError::Read {
            path: path.to_owned(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut config = if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
        .map_err(|e| AtlasError::Config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn out_path(&self, file: &str) -> PathBuf {
        self.resolve(&self.out_dir).join(file)
    }

    /// Parameter checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AtlasError::Config(msg));
        if self.inputs.is_empty() {
            return bad("at least one input path is required".into());
        }
        if !(0.0..=1.0).contains(&self.language_threshold) {
            return bad(format!("language_threshold must be in [0, 1], got {}", self.language_threshold));
        }
        if self.max_features == 0 {
            return bad("max_features must be at least 1".into());
        }
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            return bad(format!("variance_target must be in (0, 1], got {}", self.variance_target));
        }
        if self.k == Some(0) {
            return bad("k must be at least 1".into());
        }
        if self.top_terms == 0 {
            return bad("top_terms must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.kmeans.n_init == 0 || self.kmeans.max_iter == 0 {
            return bad("kmeans n_init and max_iter must be at least 1".into());
        }
        if !(self.kmeans.tol.is_finite() && self.kmeans.tol >= 0.0) {
            return bad(format!("kmeans tol must be finite and non-negative, got {}", self.kmeans.tol));
        }
        if self.k.is_none() {
            let e = &self.elbow;
            if e.step == 0 || e.k_min == 0 || e.k_min >= e.k_max {
                return bad(format!(
                    "elbow needs 1 <= k_min < k_max and step >= 1, got {}..{} step {}",
                    e.k_min, e.k_max, e.step
                ));
            }
        }
        self.tsne.validate().map_err(|e| AtlasError::Config(e.to_string()))
    }

    fn tsne_for_run(&self) -> TsneConfig {
        TsneConfig {
            seed: self.seed.wrapping_add(TSNE_SEED_OFFSET),
            ..self.tsne.clone()
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_value<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("hash inputs serialize"))
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| AtlasError::Read {
        path: path.to_owned(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

/// The content hash each stage's cache must carry under a given config.
/// Every hash covers its own parameters and its predecessors' hashes; input
/// files contribute their bytes. The output directory and thread count
/// never affect results and are excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageHashes {
    pub ingest: String,
    pub vectorize: String,
    pub reduce: String,
    pub elbow: String,
    pub cluster: String,
    pub embed: String,
    pub export: String,
    /// Covers every result-affecting parameter, used or not.
    pub config: String,
}

impl StageHashes {
    pub fn compute(config: &PipelineConfig) -> Result<Self> {
        let input_digests = config
            .inputs
            .iter()
            .map(|p| file_digest(&config.resolve(p)))
            .collect::<Result<Vec<_>>>()?;
        let stoplist_digest = match &config.stoplist {
            Some(p) => file_digest(&config.resolve(p))?,
            None => "builtin".to_string(),
        };
        let ingest = hash_value(&(
            "ingest",
            &config.inputs,
            &input_digests,
            config.format,
            config.language_threshold,
        ));
        let vectorize = hash_value(&("vectorize", &ingest, &stoplist_digest, config.max_features));
        let reduce = hash_value(&("reduce", &vectorize, config.variance_target));
        let elbow = hash_value(&("elbow", &reduce, config.elbow, &config.kmeans, config.seed));
        let k_source = match config.k {
            Some(k) => format!("k={k}"),
            None => format!("elbow={elbow}"),
        };
        let cluster = hash_value(&("cluster", &reduce, k_source, &config.kmeans, config.seed));
        let embed = hash_value(&("embed", &vectorize, config.tsne_for_run()));
        let export = hash_value(&("export", &cluster, &embed, config.top_terms));

        let mut effective = config.clone();
        effective.out_dir = PathBuf::new();
        effective.threads = None;
        let config_hash = hash_value(&("config", &effective, &input_digests, &stoplist_digest));
        Ok(Self {
            ingest,
            vectorize,
            reduce,
            elbow,
            cluster,
            embed,
            export,
            config: config_hash,
        })
    }

    fn for_stage(&self, stage: Stage) -> &str {
        match stage {
            Stage::Ingest => &self.ingest,
            Stage::Vectorize => &self.vectorize,
            Stage::Reduce => &self.reduce,
            Stage::Elbow => &self.elbow,
            Stage::Cluster => &self.cluster,
            Stage::Embed => &self.embed,
            Stage::Export | Stage::All => &self.export,
        }
    }
}

#[derive(Serialize)]
struct CacheOut<'a, T> {
    stage: &'static str,
    config_hash: &'a str,
    data: &'a T,
}

#[derive(Deserialize)]
struct CacheIn<T> {
    stage: String,
    config_hash: String,
    data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusCache {
    pub records: Vec<DocumentRecord>,
    pub stats: CorpusStats,
}

/// The document-term matrix with its vocabulary (term, df per column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorsCache {
    pub vocabulary: Vocabulary,
    pub matrix: SparseDocTermMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedCache {
    pub model: PcaModel,
    pub reduced: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersCache {
    pub model: KMeansModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCache {
    pub embedding: Embedding2D,
    pub config: TsneConfig,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| AtlasError::Write {
            path: dir.to_owned(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| AtlasError::Write {
        path: path.to_owned(),
        source,
    })
}

fn cache_file(stage: Stage) -> &'static str {
    match stage {
        Stage::Ingest => CORPUS_CACHE,
        Stage::Vectorize => VECTORS_CACHE,
        Stage::Reduce => REDUCED_CACHE,
        Stage::Elbow => ELBOW_CACHE,
        Stage::Cluster => CLUSTERS_CACHE,
        Stage::Embed => EMBEDDING_CACHE,
        Stage::Export | Stage::All => ATLAS_FILE,
    }
}

fn write_cache<T: Serialize>(config: &PipelineConfig, stage: Stage, hash: &str, data: &T) -> Result<PathBuf> {
    let path = config.out_path(cache_file(stage));
    let envelope = CacheOut {
        stage: stage.name(),
        config_hash: hash,
        data,
    };
    let mut bytes = serde_json::to_vec(&envelope).expect("cache serializes");
    bytes.push(b'\n');
    write_file(&path, &bytes)?;
    Ok(path)
}

/// Load a predecessor's cache, refusing one that is absent or was built
/// under a different configuration.
pub fn read_cache<T: DeserializeOwned>(config: &PipelineConfig, hashes: &StageHashes, stage: Stage) -> Result<T> {
    let path = config.out_path(cache_file(stage));
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(AtlasError::MissingStage { stage: stage.name() })
        }
        Err(source) => return Err(AtlasError::Read { path, source }),
    };
    let cache: CacheIn<T> = serde_json::from_str(&text).map_err(|e| AtlasError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if cache.stage != stage.name() || cache.config_hash != hashes.for_stage(stage) {
        return Err(AtlasError::StaleStage { stage: stage.name() });
    }
    Ok(cache.data)
}

/// What one stage produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub artifacts: Vec<PathBuf>,
    pub notes: Vec<String>,
}

fn ingest(config: &PipelineConfig, hashes: &StageHashes) -> Result<StageOutcome> {
    let resolved: Vec<PathBuf> = config.inputs.iter().map(|p| config.resolve(p)).collect();
    let loaded = load_corpus(&resolved, config.format)?;
    // record paths as written in the config so caches do not depend on where it lives
    let as_written: HashMap<String, String> = resolved
        .iter()
        .zip(&config.inputs)
        .map(|(r, w)| (r.display().to_string(), w.display().to_string()))
        .collect();
    let records = loaded
        .records
        .into_iter()
        .map(|mut r| {
            if let Some(w) = as_written.get(&r.source_file) {
                r.source_file = w.clone();
            }
            r
        })
        .collect();
    let (records, stats) = clean_corpus(records, config.language_threshold);
    if records.is_empty() {
        return Err(AtlasError::EmptyCorpus);
    }
    let mut notes: Vec<String> = loaded.warnings.iter().map(|w| format!("skipped {w}")).collect();
    notes.push(format!(
        "{} records read, {} after dedup, {} with body text, {} in English",
        stats.n_raw, stats.n_after_dedup, stats.n_after_abstract_filter, stats.n_after_language_filter
    ));
    let cache = write_cache(config, Stage::Ingest, &hashes.ingest, &CorpusCache { records, stats })?;
    let stats_path = config.out_path(CORPUS_STATS_FILE);
    let mut stats_json = serde_json::to_vec_pretty(&stats).expect("stats serialize");
    stats_json.push(b'\n');
    write_file(&stats_path, &stats_json)?;
    Ok(StageOutcome {
        stage: Stage::Ingest,
        artifacts: vec![cache, stats_path],
        notes,
    })
}

/// Tokenize each record's body text.
pub fn tokenize_records(records: &[DocumentRecord], stoplist: &Stoplist) -> Vec<crate::text::TokenizedDocument> {
    records
        .par_iter()
        .map(|r| normalize_document(&r.doc_id, &r.body_text, stoplist))
        .collect()
}

fn vectorize(config: &PipelineConfig, hashes: &StageHashes) -> Result<StageOutcome> {
    let corpus: CorpusCache = read_cache(config, hashes, Stage::Ingest)?;
    let stoplist = match &config.stoplist {
        Some(p) => Stoplist::from_file(&config.resolve(p))?,
        None => Stoplist::default(),
    };
    let docs = tokenize_records(&corpus.records, &stoplist);
    let vocabulary = build_vocabulary(&docs, config.max_features)?;
    let matrix = tfidf(&docs, &vocabulary)?;
    let notes = vec![format!("{} documents x {} terms", docs.len(), vocabulary.len())];
    let cache = write_cache(config, Stage::Vectorize, &hashes.vectorize, &VectorsCache { vocabulary, matrix })?;
    Ok(StageOutcome {
        stage: Stage::Vectorize,
        artifacts: vec![cache],
        notes,
    })
}

fn reduce(config: &PipelineConfig, hashes: &StageHashes) -> Result<StageOutcome> {
    let vectors: VectorsCache = read_cache(config, hashes, Stage::Vectorize)?;
    let model = fit_pca(&vectors.matrix, PcaTarget::Variance(config.variance_target))?;
    let reduced = transform(&vectors.matrix, &model)?;
    let notes = vec![format!(
        "{} components keep {:.4} of the variance",
        model.n_components(),
        model.cumulative_ratio()
    )];
    let cache = write_cache(config, Stage::Reduce, &hashes.reduce, &ReducedCache { model, reduced })?;
    Ok(StageOutcome {
        stage: Stage::Reduce,
        artifacts: vec![cache],
        notes,
    })
}

fn elbow(config: &PipelineConfig, hashes: &StageHashes) -> Result<StageOutcome> {
    let reduced: ReducedCache = read_cache(config, hashes, Stage::Reduce)?;
    let curve = elbow_sweep(
        &reduced.reduced,
        &config.elbow,
        config.seed.wrapping_add(ELBOW_SEED_OFFSET),
        &config.kmeans,
    )?;
    let notes = vec![format!("elbow at k = {}", curve.chosen_k)];
    let csv_path = config.out_path(ELBOW_CSV);
    write_file(&csv_path, curve.to_csv().as_bytes())?;
    let cache = write_cache(config, Stage::Elbow, &hashes.elbow, &curve)?;
    Ok(StageOutcome {
        stage: Stage::Elbow,
        artifacts: vec![cache, csv_path],
        notes,
    })
}

fn cluster(config: &PipelineConfig, hashes: &StageHashes) -> Result<StageOutcome> {
    let reduced: ReducedCache = read_cache(config, hashes, Stage::Reduce)?;
    let k = match config.k {
        Some(k) => k,
        None => read_cache::<ElbowCurve>(config, hashes, Stage::Elbow)?.chosen_k,
    };
    let model = kmeans_fit(
        &reduced.reduced,
        k,
        config.seed.wrapping_add(CLUSTER_SEED_OFFSET),
        &config.kmeans,
    )?;
    let notes = vec![format!("k = {k}, inertia {:.6}", model.inertia)];
    let cache = write_cache(config, Stage::Cluster, &hashes.cluster, &ClustersCache { model })?;
    Ok(StageOutcome {
        stage: Stage::Cluster,
        artifacts: vec![cache],
        notes,
    })
}

fn embed_stage(config: &PipelineConfig, hashes: &StageHashes) -> Result<StageOutcome> {
    let vectors: VectorsCache = read_cache(config, hashes, Stage::Vectorize)?;
    let tsne = config.tsne_for_run();
    let embedding = embed(&vectors.matrix, &tsne)?;
    let notes = vec![format!("final KL {:.6}", embedding.final_kl)];
    let cache = write_cache(
        config,
        Stage::Embed,
        &hashes.embed,
        &EmbeddingCache {
            embedding,
            config: tsne,
        },
    )?;
    Ok(StageOutcome {
        stage: Stage::Embed,
        artifacts: vec![cache],
        notes,
    })
}

fn export(config: &PipelineConfig, hashes: &StageHashes) -> Result<StageOutcome> {
    let corpus: CorpusCache = read_cache(config, hashes, Stage::Ingest)?;
    let vectors: VectorsCache = read_cache(config, hashes, Stage::Vectorize)?;
    let clusters: ClustersCache = read_cache(config, hashes, Stage::Cluster)?;
    let embedding: EmbeddingCache = read_cache(config, hashes, Stage::Embed)?;
    let model = clusters.model;
    let top_terms = cluster_top_terms(&vectors.matrix, &model.labels, model.k, &vectors.vocabulary, config.top_terms)?;
    let provenance = Provenance {
        config_hash: hashes.config.clone(),
        corpus_stats: corpus.stats,
        chosen_k: model.k,
        final_kl: embedding.embedding.final_kl,
    };
    let atlas = build_atlas(&corpus.records, &embedding.embedding, &model.labels, top_terms, provenance)?;
    let path = config.out_path(ATLAS_FILE);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| AtlasError::Write {
            path: dir.to_owned(),
            source,
        })?;
    }
    write_atlas(&atlas, &path)?;
    Ok(StageOutcome {
        stage: Stage::Export,
        artifacts: vec![path],
        notes: vec![format!("{} points in {} clusters", atlas.points.len(), atlas.clusters.len())],
    })
}

fn run_one(stage: Stage, config: &PipelineConfig, hashes: &StageHashes) -> Result<StageOutcome> {
    match stage {
        Stage::Ingest => ingest(config, hashes),
        Stage::Vectorize => vectorize(config, hashes),
        Stage::Reduce => reduce(config, hashes),
        Stage::Elbow => elbow(config, hashes),
        Stage::Cluster => cluster(config, hashes),
        Stage::Embed => embed_stage(config, hashes),
        Stage::Export => export(config, hashes),
        Stage::All => unreachable!("expanded by run"),
    }
}

/// Validate the config, then run one stage, or every stage in order for
/// `All` (the elbow is skipped when `k` is fixed). Stages always exchange
/// data through the caches, so a staged run and `All` agree byte for byte.
pub fn run(stage: Stage, config: &PipelineConfig) -> Result<Vec<StageOutcome>> {
    config.validate()?;
    let go = || -> Result<Vec<StageOutcome>> {
        let hashes = StageHashes::compute(config)?;
        match stage {
            Stage::All => Stage::SEQUENCE
                .into_iter()
                .filter(|&s| !(s == Stage::Elbow && config.k.is_some()))
                .map(|s| run_one(s, config, &hashes))
                .collect(),
            single => Ok(vec![run_one(single, config, &hashes)?]),
        }
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| AtlasError::Config(format!("cannot start {n} threads: {e}")))?
            .install(go),
        None => go(),
    }
}
