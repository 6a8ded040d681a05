//! Metadata curation: keep videos whose tags, duration, language and title
//! suggest usable, describable content.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data_pipeline::parallel::parallel_map;
use crate::error::{invalid, io_err, Error, Result};

const STOP_WORDS: &str = include_str!("../../data/stopwords.txt");

/// The shipped stop-word list.
pub fn stop_words() -> &'static HashSet<String> {
    static WORDS: OnceLock<HashSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| parse_word_list(STOP_WORDS))
}

/// One word per line; blank lines and `#` comments ignored.
pub fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub duration_seconds: f64,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub language: String,
    pub source_id: String,
}

/// Reads one JSON object per non-empty line.
pub fn read_metadata<R: BufRead>(r: R, path: &Path) -> Result<Vec<MetadataRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(format!("reading {}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetadataRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            what: "metadata record",
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        if !(rec.duration_seconds >= 0.0) {
            return Err(Error::Format {
                what: "metadata record",
                path: path.to_path_buf(),
                reason: format!("line {}: negative duration", i + 1),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rejection {
    Tags,
    Duration,
    Language,
    Title,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::Tags => "tags",
            Rejection::Duration => "duration",
            Rejection::Language => "language",
            Rejection::Title => "title",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurationConfig {
    pub top_tags: usize,
    pub min_selected_tags: usize,
    pub min_duration: f64,
    pub max_duration: f64,
    /// A title needs strictly more meaningful words than this.
    pub min_meaningful_words: usize,
    pub min_ascii_ratio: f64,
    pub min_stop_word_hits: usize,
    pub workers: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            top_tags: 10,
            min_selected_tags: 3,
            min_duration: 10.0,
            max_duration: 400.0,
            min_meaningful_words: 4,
            min_ascii_ratio: 0.9,
            min_stop_word_hits: 1,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurationOutcome {
    pub selected_tags: Vec<String>,
    /// Indices of accepted records, in input order.
    pub accepted: Vec<usize>,
    /// Every failed rule per record (empty for accepted records).
    pub reasons: Vec<Vec<Rejection>>,
}

fn normalize_tag(t: &str) -> String {
    t.trim().to_lowercase()
}

/// Lowercased alphanumeric runs.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Words left after dropping stop words and pure numbers.
pub fn meaningful_words(text: &str, stop: &HashSet<String>) -> usize {
    words(text)
        .iter()
        .filter(|w| !stop.contains(*w) && !w.chars().all(|c| c.is_ascii_digit()))
        .count()
}

/// Declared language compatible with English, mostly ASCII text, and at
/// least a few English function words.
pub fn looks_english(rec: &MetadataRecord, cfg: &CurationConfig, stop: &HashSet<String>) -> bool {
    let lang = rec.language.trim().to_ascii_lowercase();
    if !(lang.is_empty() || lang.starts_with("en")) {
        return false;
    }
    let text = format!("{} {}", rec.title, rec.description);
    let letters: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if letters.is_empty() {
        return false;
    }
    let ascii = letters.iter().filter(|c| c.is_ascii()).count() as f64 / letters.len() as f64;
    let hits = words(&text).iter().filter(|w| stop.contains(*w)).count();
    ascii >= cfg.min_ascii_ratio && hits >= cfg.min_stop_word_hits
}

/// The `k` most frequent tags (each counted once per record), ties broken
/// lexicographically, restricted to `allowlist`.
pub fn select_tags(records: &[MetadataRecord], k: usize, allowlist: &HashSet<String>) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let distinct: BTreeSet<String> = r.tags.iter().map(|t| normalize_tag(t)).filter(|t| !t.is_empty()).collect();
        for t in distinct {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let allow: HashSet<String> = allowlist.iter().map(|t| normalize_tag(t)).collect();
    ranked
        .into_iter()
        .take(k)
        .map(|(t, _)| t)
        .filter(|t| allow.contains(t))
        .collect()
}

pub fn check_record(
    rec: &MetadataRecord,
    selected: &HashSet<String>,
    cfg: &CurationConfig,
    stop: &HashSet<String>,
) -> Vec<Rejection> {
    let mut reasons = Vec::new();
    let hits: BTreeSet<String> = rec
        .tags
        .iter()
        .map(|t| normalize_tag(t))
        .filter(|t| selected.contains(t))
        .collect();
    if hits.len() < cfg.min_selected_tags {
        reasons.push(Rejection::Tags);
    }
    if !(rec.duration_seconds >= cfg.min_duration && rec.duration_seconds <= cfg.max_duration) {
        reasons.push(Rejection::Duration);
    }
    if !looks_english(rec, cfg, stop) {
        reasons.push(Rejection::Language);
    }
    if meaningful_words(&rec.title, stop) <= cfg.min_meaningful_words {
        reasons.push(Rejection::Title);
    }
    reasons
}

pub fn curate_metadata(
    records: &[MetadataRecord],
    allowlist: &HashSet<String>,
    cfg: &CurationConfig,
) -> Result<CurationOutcome> {
    if records.is_empty() {
        return Err(invalid("no metadata records to curate"));
    }
    let stop = stop_words();
    let selected_tags = select_tags(records, cfg.top_tags, allowlist);
    let selected: HashSet<String> = selected_tags.iter().cloned().collect();
    let reasons = parallel_map(records, cfg.workers, |r| check_record(r, &selected, cfg, stop));
    let accepted = reasons
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_empty())
        .map(|(i, _)| i)
        .collect();
    Ok(CurationOutcome {
        selected_tags,
        accepted,
        reasons,
    })
}
