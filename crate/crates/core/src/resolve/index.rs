use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use super::{rank_and_dedup, MatchKind, MatchedOn, ResolveError, TermHit, TermResolver};
use crate::normalize::{normalize_value, tokens};

const HEADER: [&str; 4] = ["ontology", "iri", "label", "synonyms"];

#[derive(Debug, thiserror::Error)]
pub enum TermFileError {
    #[error("cannot read term file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Entry {
    iri: String,
    matched_on: MatchedOn,
    text: String,
    label: String,
}

/// Exact-match lookup structure over pre-extracted ontology terms.
///
/// Keys are normalized labels and synonyms, per ontology. Immutable once
/// built.
#[derive(Debug, Clone, Default)]
pub struct TermIndex {
    /// acronym -> normalized key -> entries sorted by IRI, label first.
    ontologies: BTreeMap<String, BTreeMap<String, Vec<Entry>>>,
    /// token -> (acronym, normalized key)
    token_index: HashMap<String, Vec<(String, String)>>,
}

/// Build an index from term files (`ontology  iri  label  synonyms` TSV).
pub fn build_term_index<P: AsRef<Path>>(sources: &[P]) -> Result<TermIndex, TermFileError> {
    let mut builder = TermIndex::default();
    for path in sources {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TermFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        builder.add_tsv(&text, path)?;
    }
    builder.finish();
    Ok(builder)
}

impl TermIndex {
    /// Build from in-memory TSV text.
    pub fn from_tsv(text: &str) -> Result<Self, TermFileError> {
        let mut index = TermIndex::default();
        index.add_tsv(text, Path::new("<memory>"))?;
        index.finish();
        Ok(index)
    }

    fn add_tsv(&mut self, text: &str, path: &Path) -> Result<(), TermFileError> {
        let malformed = |line: usize, message: String| TermFileError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) => {
                let cols: Vec<_> = header.trim_end_matches('\r').split('\t').map(str::trim).collect();
                if cols != HEADER {
                    return Err(malformed(1, format!("expected header {:?}, found {cols:?}", HEADER.join("\t"))));
                }
            }
            None => return Ok(()),
        }
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 || cols.len() > 4 {
                return Err(malformed(line_no, format!("expected 3 or 4 tab-separated columns, found {}", cols.len())));
            }
            let acronym = cols[0].trim().to_uppercase();
            let iri = cols[1].trim();
            let label = cols[2].trim();
            if acronym.is_empty() || acronym.contains(char::is_whitespace) {
                return Err(malformed(line_no, "empty or invalid ontology acronym".into()));
            }
            if iri.is_empty() {
                return Err(malformed(line_no, "empty term IRI".into()));
            }
            if label.is_empty() {
                return Err(malformed(line_no, "empty label".into()));
            }
            self.insert(&acronym, iri, label, label, MatchedOn::Label);
            if let Some(syns) = cols.get(3) {
                for syn in syns.split('|').map(str::trim).filter(|s| !s.is_empty()) {
                    self.insert(&acronym, iri, label, syn, MatchedOn::Synonym);
                }
            }
        }
        Ok(())
    }

    fn insert(&mut self, acronym: &str, iri: &str, label: &str, text: &str, matched_on: MatchedOn) {
        let key = normalize_value(text);
        if key.is_empty() {
            return;
        }
        self.ontologies
            .entry(acronym.to_string())
            .or_default()
            .entry(key)
            .or_default()
            .push(Entry {
                iri: iri.to_string(),
                matched_on,
                text: text.to_string(),
                label: label.to_string(),
            });
    }

    fn finish(&mut self) {
        self.token_index.clear();
        for (acronym, keys) in &mut self.ontologies {
            for (key, entries) in keys.iter_mut() {
                entries.sort();
                entries.dedup();
                for tok in tokens(key) {
                    self.token_index
                        .entry(tok.to_string())
                        .or_default()
                        .push((acronym.clone(), key.clone()));
                }
            }
        }
        for v in self.token_index.values_mut() {
            v.sort();
            v.dedup();
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ontologies.is_empty()
    }

    pub fn ontologies(&self) -> impl Iterator<Item = &str> {
        self.ontologies.keys().map(String::as_str)
    }

    /// Number of distinct normalized keys across all ontologies.
    pub fn key_count(&self) -> usize {
        self.ontologies.values().map(BTreeMap::len).sum()
    }

    pub fn contains_key(&self, ontology_acronym: &str, normalized: &str) -> bool {
        self.ontologies
            .get(&ontology_acronym.trim().to_uppercase())
            .is_some_and(|k| k.contains_key(normalized))
    }

    /// Every (label or synonym text, matched_on, IRI, preferred label) for an
    /// ontology, in key order.
    pub fn terms(&self, ontology_acronym: &str) -> Vec<(&str, MatchedOn, &str, &str)> {
        self.ontologies
            .get(&ontology_acronym.trim().to_uppercase())
            .into_iter()
            .flat_map(|keys| keys.values().flatten())
            .map(|e| (e.text.as_str(), e.matched_on, e.iri.as_str(), e.label.as_str()))
            .collect()
    }

    fn hit(acronym: &str, e: &Entry, kind: MatchKind) -> TermHit {
        TermHit {
            ontology_acronym: acronym.to_string(),
            term_iri: e.iri.clone(),
            preferred_label: e.label.clone(),
            matched_on: e.matched_on,
            match_kind: kind,
            matched_text: e.text.clone(),
        }
    }

    fn lookup_exact(&self, query: &str, ontology_acronym: &str) -> Option<TermHit> {
        let key = normalize_value(query);
        if key.is_empty() {
            return None;
        }
        let acronym = ontology_acronym.trim().to_uppercase();
        let entries = self.ontologies.get(&acronym)?.get(&key)?;
        entries.first().map(|e| Self::hit(&acronym, e, MatchKind::Exact))
    }

    fn search(&self, query: &str, limit: usize) -> Vec<TermHit> {
        let q = normalize_value(query);
        if q.is_empty() || limit == 0 {
            return Vec::new();
        }
        let mut hits = Vec::new();
        for (acronym, keys) in &self.ontologies {
            for (key, entries) in keys.range(q.clone()..) {
                if !key.starts_with(&q) {
                    break;
                }
                let kind = if *key == q { MatchKind::Exact } else { MatchKind::Prefix };
                hits.extend(entries.iter().map(|e| Self::hit(acronym, e, kind)));
            }
        }
        for tok in tokens(&q) {
            for (acronym, key) in self.token_index.get(tok).into_iter().flatten() {
                let entries = &self.ontologies[acronym][key];
                hits.extend(entries.iter().map(|e| Self::hit(acronym, e, MatchKind::Token)));
            }
        }
        rank_and_dedup(hits, limit)
    }
}

impl TermResolver for TermIndex {
    fn resolve_exact(&self, query: &str, ontology_acronym: &str) -> Result<Option<TermHit>, ResolveError> {
        Ok(self.lookup_exact(query, ontology_acronym))
    }

    fn search_any(&self, query: &str, limit: usize) -> Result<Vec<TermHit>, ResolveError> {
        Ok(self.search(query, limit))
    }
}
