//! Loading raw paper records and cleaning the corpus: duplicates,
//! abstract-only papers and non-English papers are removed.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{AtlasError, Result};
use crate::text::{tokenize, ENGLISH_FUNCTION_WORDS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub body_text: String,
    pub authors: Vec<String>,
    pub journal: String,
    pub url: String,
    pub source_file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    Jsonl,
    JsonArray,
    Csv,
}

/// A record that was skipped while loading. `line` is 1-based; for JSON
/// arrays it is the 1-based element position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub path: PathBuf,
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.path.display(), self.line, self.reason)
    }
}

#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub records: Vec<DocumentRecord>,
    pub warnings: Vec<LoadWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_raw: usize,
    pub n_after_dedup: usize,
    pub n_after_abstract_filter: usize,
    pub n_after_language_filter: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AuthorsField {
    List(Vec<String>),
    Joined(String),
}

fn authors_field<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    Ok(match Option::<AuthorsField>::deserialize(d)? {
        None => Vec::new(),
        Some(AuthorsField::List(v)) => v,
        Some(AuthorsField::Joined(s)) => s
            .split(';')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_owned)
            .collect(),
    })
}

/// On-disk shape of one record; every field optional so that missing keys
/// become per-record warnings instead of parse failures.
#[derive(Deserialize)]
struct RawRecord {
    doc_id: Option<String>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
    body_text: Option<String>,
    #[serde(default, deserialize_with = "authors_field")]
    authors: Vec<String>,
    journal: Option<String>,
    url: Option<String>,
}

impl RawRecord {
    fn into_record(self, source_file: &str) -> std::result::Result<DocumentRecord, String> {
        let doc_id = match self.doc_id {
            Some(id) if !id.trim().is_empty() => id,
            _ => return Err("missing doc_id".into()),
        };
        let Some(body_text) = self.body_text else {
            return Err(format!("record {doc_id}: missing body_text"));
        };
        Ok(DocumentRecord {
            doc_id,
            title: self.title.unwrap_or_default(),
            abstract_text: self.abstract_text.unwrap_or_default(),
            body_text,
            authors: self.authors,
            journal: self.journal.unwrap_or_default(),
            url: self.url.unwrap_or_default(),
            source_file: source_file.to_owned(),
        })
    }
}

fn load_file(path: &Path, format: InputFormat) -> Result<LoadedCorpus> {
    let text = std::fs::read_to_string(path).map_err(|source| AtlasError::Read {
        path: path.to_owned(),
        source,
    })?;
    let source = path.display().to_string();
    let mut out = LoadedCorpus::default();
    let mut push = |line: usize, parsed: std::result::Result<RawRecord, String>| {
        match parsed.and_then(|raw| raw.into_record(&source)) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.warnings.push(LoadWarning {
                path: path.to_owned(),
                line,
                reason,
            }),
        }
    };
    match format {
        InputFormat::Jsonl => {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                push(i + 1, serde_json::from_str(line).map_err(|e| e.to_string()));
            }
        }
        InputFormat::JsonArray => {
            if text.trim().is_empty() {
                return Ok(out);
            }
            let items: Vec<serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| AtlasError::Parse {
                    path: path.to_owned(),
                    message: e.to_string(),
                })?;
            for (i, item) in items.into_iter().enumerate() {
                push(i + 1, serde_json::from_value(item).map_err(|e| e.to_string()));
            }
        }
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(true)
                .from_reader(text.as_bytes());
            let headers = match reader.headers() {
                Ok(h) => h.clone(),
                Err(_) => return Ok(out),
            };
            let mut row = csv::StringRecord::new();
            loop {
                match reader.read_record(&mut row) {
                    Ok(false) => break,
                    Ok(true) => {
                        let line = row.position().map_or(0, |p| p.line() as usize);
                        // empty cells mean "absent" so the skip rule applies
                        let fields = headers.iter().zip(row.iter()).filter(|(_, v)| !v.is_empty());
                        let obj: serde_json::Map<_, _> = fields
                            .map(|(k, v)| (k.to_owned(), serde_json::Value::from(v)))
                            .collect();
                        push(
                            line,
                            serde_json::from_value(obj.into()).map_err(|e| e.to_string()),
                        );
                    }
                    Err(e) => {
                        let line = e.position().map_or(0, |p| p.line() as usize);
                        push(line, Err(e.to_string()));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Load every file, preserving file order and record order within a file.
/// Malformed records are reported as warnings; an unreadable file is fatal.
pub fn load_corpus<P: AsRef<Path> + Sync>(paths: &[P], format: InputFormat) -> Result<LoadedCorpus> {
    let per_file: Vec<LoadedCorpus> = paths
        .par_iter()
        .map(|p| load_file(p.as_ref(), format))
        .collect::<Result<_>>()?;
    let mut out = LoadedCorpus::default();
    for part in per_file {
        out.records.extend(part.records);
        out.warnings.extend(part.warnings);
    }
    Ok(out)
}

fn normalized_text_key(rec: &DocumentRecord) -> String {
    let joined = format!("{} {}", rec.title, rec.abstract_text).to_lowercase();
    joined.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keep the first occurrence of every duplicate group. Two records are
/// duplicates when their ids match or their normalized title+abstract
/// match; an empty title+abstract never matches anything.
pub fn deduplicate(records: Vec<DocumentRecord>) -> Vec<DocumentRecord> {
    let mut ids = HashSet::new();
    let mut texts = HashSet::new();
    records
        .into_iter()
        .filter(|rec| {
            let key = normalized_text_key(rec);
            let dup = ids.contains(&rec.doc_id) || (!key.is_empty() && texts.contains(&key));
            if !dup {
                ids.insert(rec.doc_id.clone());
                if !key.is_empty() {
                    texts.insert(key);
                }
            }
            !dup
        })
        .collect()
}

pub fn filter_abstract_only(records: Vec<DocumentRecord>) -> Vec<DocumentRecord> {
    records
        .into_iter()
        .filter(|r| !r.body_text.trim().is_empty())
        .collect()
}

pub const DEFAULT_LANGUAGE_THRESHOLD: f64 = 0.20;
const LANGUAGE_SAMPLE_TOKENS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageGuess {
    /// ISO-639-1 code, or `"other"`.
    pub code: String,
    /// Fraction of sampled tokens that are English function words.
    pub confidence: f64,
}

/// Guess whether `text` is English from the hit-rate of English function
/// words over its first 2,000 tokens.
pub fn detect_language(text: &str, threshold: f64) -> Result<LanguageGuess> {
    if text.trim().is_empty() {
        return Err(AtlasError::EmptyText);
    }
    let tokens = tokenize(text);
    let sample = &tokens[..tokens.len().min(LANGUAGE_SAMPLE_TOKENS)];
    let hits = sample
        .iter()
        .filter(|t| ENGLISH_FUNCTION_WORDS.binary_search(&t.as_str()).is_ok())
        .count();
    let rate = if sample.is_empty() {
        0.0
    } else {
        hits as f64 / sample.len() as f64
    };
    Ok(LanguageGuess {
        code: if rate >= threshold { "en" } else { "other" }.to_owned(),
        confidence: rate,
    })
}

pub fn filter_non_english(records: Vec<DocumentRecord>, threshold: f64) -> Vec<DocumentRecord> {
    let keep: Vec<bool> = records
        .par_iter()
        .map(|r| detect_language(&r.body_text, threshold).is_ok_and(|g| g.code == "en"))
        .collect();
    records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

/// Run dedup, abstract-only and language filters in order.
pub fn clean_corpus(
    records: Vec<DocumentRecord>,
    language_threshold: f64,
) -> (Vec<DocumentRecord>, CorpusStats) {
    let n_raw = records.len();
    let records = deduplicate(records);
    let n_after_dedup = records.len();
    let records = filter_abstract_only(records);
    let n_after_abstract_filter = records.len();
    let records = filter_non_english(records, language_threshold);
    let stats = CorpusStats {
        n_raw,
        n_after_dedup,
        n_after_abstract_filter,
        n_after_language_filter: records.len(),
    };
    (records, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn rec(id: &str, title: &str, abs: &str, body: &str) -> DocumentRecord {
        DocumentRecord {
            doc_id: id.into(),
            title: title.into(),
            abstract_text: abs.into(),
            body_text: body.into(),
            authors: vec![],
            journal: String::new(),
            url: String::new(),
            source_file: String::new(),
        }
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn function_word_list_is_sorted_for_lookup() {
        assert!(ENGLISH_FUNCTION_WORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn jsonl_well_formed() {
        let f = write_tmp(concat!(
            r#"{"doc_id":"a","title":"A","abstract":"","body_text":"x","authors":["p","q"],"journal":"J","url":"u"}"#,
            "\n",
            r#"{"doc_id":"b","body_text":"y"}"#,
            "\n",
            r#"{"doc_id":"c","body_text":"z","authors":"r; s"}"#,
            "\n"
        ));
        let out = load_corpus(&[f.path()], InputFormat::Jsonl).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.warnings.is_empty());
        assert_eq!(out.records[0].authors, vec!["p", "q"]);
        assert_eq!(out.records[2].authors, vec!["r", "s"]);
    }

    #[test]
    fn jsonl_skips_record_without_id() {
        let f = write_tmp(concat!(
            r#"{"doc_id":"a","body_text":"x"}"#,
            "\n",
            r#"{"title":"orphan","body_text":"x"}"#,
            "\n",
            r#"{"doc_id":"b","body_text":"y"}"#,
            "\n",
        ));
        let out = load_corpus(&[f.path()], InputFormat::Jsonl).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].line, 2);
    }

    #[test]
    fn jsonl_reports_broken_lines_and_missing_body() {
        let f = write_tmp("{not json\n{\"doc_id\":\"a\"}\n");
        let out = load_corpus(&[f.path()], InputFormat::Jsonl).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.warnings.iter().map(|w| w.line).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        for format in [InputFormat::Jsonl, InputFormat::JsonArray, InputFormat::Csv] {
            let f = write_tmp("");
            let out = load_corpus(&[f.path()], format).unwrap();
            assert!(out.records.is_empty());
            assert!(out.warnings.is_empty());
        }
    }

    #[test]
    fn json_array_and_csv() {
        let f = write_tmp(r#"[{"doc_id":"a","body_text":"x"},{"body_text":"y"}]"#);
        let out = load_corpus(&[f.path()], InputFormat::JsonArray).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.warnings[0].line, 2);

        let f = write_tmp(
            "doc_id,title,abstract,body_text,authors,journal,url\n\
             a,T,,\"body, with comma\",X; Y,J,http://x\n\
             ,T2,,body,,,\n",
        );
        let out = load_corpus(&[f.path()], InputFormat::Csv).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].body_text, "body, with comma");
        assert_eq!(out.records[0].authors, vec!["X", "Y"]);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].line, 3);
    }

    #[test]
    fn unreadable_file_names_path() {
        let err = load_corpus(&["/nonexistent/corpus.jsonl"], InputFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/corpus.jsonl"));
    }

    #[test]
    fn dedup_by_id_keeps_first() {
        let a = rec("a", "t1", "", "b1");
        let b = rec("b", "t2", "", "b2");
        let a2 = rec("a", "t3", "", "b3");
        let out = deduplicate(vec![a.clone(), b.clone(), a2]);
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn dedup_by_normalized_text() {
        let a = rec("a", "Bat  Viruses", "In  Asia", "b1");
        let b = rec("b", "bat viruses", "in\nasia", "b2");
        let out = deduplicate(vec![a.clone(), b]);
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn dedup_ignores_empty_text_key() {
        let out = deduplicate(vec![rec("a", "", "", "x"), rec("b", "", " ", "y")]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn dedup_all_distinct_preserves_order() {
        let input: Vec<_> = (0..6).map(|i| rec(&i.to_string(), &format!("t{i}"), "", "b")).collect();
        assert_eq!(deduplicate(input.clone()), input);
    }

    #[test]
    fn abstract_only_records_dropped() {
        let out = filter_abstract_only(vec![
            rec("a", "", "abs", ""),
            rec("b", "", "", "   \n"),
            rec("c", "", "", "body"),
        ]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].doc_id, "c");
    }

    const ENGLISH: &str = "The virus was isolated from bats in the region and it is \
        closely related to the strains that have been found in other species. We \
        examined whether the animals were infected before they were moved to the \
        new site, and our results show that most of them had antibodies against \
        the pathogen.";

    // Function words of ENGLISH, counted by hand.
    const ENGLISH_HITS: &[&str] = &[
        "the", "was", "from", "in", "the", "and", "it", "is", "to", "the", "that", "have",
        "been", "in", "other", "we", "whether", "the", "were", "before", "they", "were", "to",
        "the", "and", "our", "that", "most", "of", "them", "had", "against", "the",
    ];
    const ENGLISH_TOKENS: usize = 52;

    const SPANISH: &str = "El virus fue aislado de murciélagos en la región y está \
        estrechamente relacionado con las cepas que se han encontrado en otras \
        especies. Examinamos si los animales estaban infectados antes de ser \
        trasladados al nuevo sitio.";

    #[test]
    fn english_paragraph_detected() {
        let guess = detect_language(ENGLISH, DEFAULT_LANGUAGE_THRESHOLD).unwrap();
        assert_eq!(tokenize(ENGLISH).len(), ENGLISH_TOKENS);
        let expected = ENGLISH_HITS.len() as f64 / ENGLISH_TOKENS as f64;
        assert_eq!(guess.code, "en");
        assert!((guess.confidence - expected).abs() < 1e-12, "{}", guess.confidence);
        assert!(guess.confidence > 2.0 * DEFAULT_LANGUAGE_THRESHOLD);
    }

    #[test]
    fn spanish_paragraph_is_other() {
        // 35 tokens ("y" is too short); none is an English function word.
        let guess = detect_language(SPANISH, DEFAULT_LANGUAGE_THRESHOLD).unwrap();
        assert_eq!(tokenize(SPANISH).len(), 35);
        assert_eq!(guess.code, "other");
        assert_eq!(guess.confidence, 0.0);
    }

    #[test]
    fn digits_only_is_other_with_zero_confidence() {
        let guess = detect_language("12, 34.5 (6) -- 7/8", DEFAULT_LANGUAGE_THRESHOLD).unwrap();
        assert_eq!(guess.code, "other");
        assert_eq!(guess.confidence, 0.0);
    }

    #[test]
    fn empty_text_is_undecidable() {
        assert!(matches!(detect_language("  ", 0.2), Err(AtlasError::EmptyText)));
        assert!(matches!(detect_language("", 0.2), Err(AtlasError::EmptyText)));
    }

    #[test]
    fn clean_counts_are_monotone_and_order_stable() {
        let records = vec![
            rec("1", "t1", "", ENGLISH),
            rec("2", "t2", "", SPANISH),
            rec("1", "dup", "", ENGLISH),
            rec("3", "t3", "", ""),
            rec("4", "t4", "", ENGLISH),
        ];
        let (out, stats) = clean_corpus(records, DEFAULT_LANGUAGE_THRESHOLD);
        assert_eq!(
            stats,
            CorpusStats {
                n_raw: 5,
                n_after_dedup: 4,
                n_after_abstract_filter: 3,
                n_after_language_filter: 2
            }
        );
        assert_eq!(out.iter().map(|r| r.doc_id.as_str()).collect::<Vec<_>>(), vec!["1", "4"]);
    }

    #[test]
    fn dedup_is_idempotent() {
        let records = vec![
            rec("a", "x", "", "1"),
            rec("b", "X", "", "2"),
            rec("c", "y", "", "3"),
            rec("a", "z", "", "4"),
        ];
        let once = deduplicate(records);
        assert_eq!(deduplicate(once.clone()), once);
    }
}
