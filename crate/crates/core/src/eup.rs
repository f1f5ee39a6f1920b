//! End-user-perspective agreement scores from search/purchase sessions.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{path_label, EventKind, SessionRecord};
use crate::error::{input, Result};

pub const MIN_QUERY_CHARS: usize = 5;
pub const OVERLAP_THRESHOLD: f64 = 0.9;

fn query_chars(query: &str) -> HashSet<char> {
    query.chars().filter(|c| !c.is_whitespace()).flat_map(char::to_lowercase).collect()
}

/// Non-whitespace characters in a query.
pub fn query_length(query: &str) -> usize {
    query.chars().filter(|c| !c.is_whitespace()).count()
}

/// Share of the query's distinct non-whitespace characters that occur in
/// the concatenated node names. Case-insensitive.
pub fn query_overlap<S: AsRef<str>>(query: &str, path_names: &[S]) -> Result<f64> {
    let q = query_chars(query);
    if q.is_empty() {
        return input("empty query");
    }
    let path: HashSet<char> = path_names.iter().flat_map(|n| n.as_ref().chars().flat_map(char::to_lowercase)).collect();
    Ok(q.iter().filter(|c| path.contains(c)).count() as f64 / q.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPair {
    pub provided: Vec<String>,
    pub catalog: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairFilter {
    pub min_query_chars: usize,
    /// Overlap must be strictly greater than this.
    pub overlap_threshold: f64,
}

impl Default for PairFilter {
    fn default() -> Self {
        PairFilter { min_query_chars: MIN_QUERY_CHARS, overlap_threshold: OVERLAP_THRESHOLD }
    }
}

/// One `(provided, catalog)` pair per purchase whose most recent preceding
/// search in the same session is long enough and overlaps the provided
/// path. Purchases of items missing from either label map are skipped.
pub fn collect_label_pairs(
    sessions: &[SessionRecord],
    catalog_labels: &HashMap<String, Vec<String>>,
    provided_labels: &HashMap<String, Vec<String>>,
    filter: PairFilter,
) -> Vec<LabelPair> {
    let mut pairs = Vec::new();
    for s in sessions {
        let mut last_query: Option<&str> = None;
        for ev in &s.events {
            match ev.kind {
                EventKind::Search => last_query = ev.query.as_deref(),
                EventKind::Purchase => {
                    let (Some(q), Some(item)) = (last_query, ev.item_id.as_deref()) else { continue };
                    let (Some(provided), Some(catalog)) = (provided_labels.get(item), catalog_labels.get(item)) else {
                        continue;
                    };
                    if query_length(q) < filter.min_query_chars {
                        continue;
                    }
                    match query_overlap(q, provided) {
                        Ok(o) if o > filter.overlap_threshold => {
                            pairs.push(LabelPair { provided: provided.clone(), catalog: catalog.clone() })
                        }
                        _ => {}
                    }
                }
                EventKind::Click | EventKind::AddToCart => {}
            }
        }
    }
    pairs
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EupEntry {
    pub score: f64,
    pub pair_count: usize,
    pub agreements: usize,
}

/// Genre path (joined with `" > "`) to EuP entry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EupTable {
    pub level: usize,
    pub entries: BTreeMap<String, EupEntry>,
}

impl EupTable {
    pub fn score(&self, genre: &str) -> Option<f64> {
        self.entries.get(genre).map(|e| e.score)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("genre_path\tscore\tcount\n");
        for (g, e) in &self.entries {
            out.push_str(&format!("{g}\t{}\t{}\n", crate::report::sig6(e.score), e.pair_count));
        }
        out
    }

    /// Each path's score divided by the total over paths sharing its parent
    /// (all paths count as siblings at level one).
    pub fn sibling_normalized(&self) -> BTreeMap<String, f64> {
        let parent = |g: &str| g.rsplit_once(" > ").map(|(p, _)| p.to_string()).unwrap_or_default();
        let mut totals: HashMap<String, f64> = HashMap::new();
        for (g, e) in &self.entries {
            *totals.entry(parent(g)).or_default() += e.score;
        }
        self.entries
            .iter()
            .map(|(g, e)| {
                let t = totals[&parent(g)];
                (g.clone(), if t > 0.0 { e.score / t } else { 0.0 })
            })
            .collect()
    }
}

/// Agreement rate of catalog with provided paths, grouped by the provided
/// path truncated to `level`.
pub fn eup_scores(pairs: &[LabelPair], level: usize) -> EupTable {
    let mut entries: BTreeMap<String, EupEntry> = BTreeMap::new();
    for p in pairs {
        let key = path_label(&p.provided, Some(level));
        let e = entries.entry(key.clone()).or_insert(EupEntry { score: 0.0, pair_count: 0, agreements: 0 });
        e.pair_count += 1;
        if path_label(&p.catalog, Some(level)) == key {
            e.agreements += 1;
        }
    }
    for e in entries.values_mut() {
        e.score = e.agreements as f64 / e.pair_count as f64;
    }
    EupTable { level, entries }
}

/// Mean over the table's genres of EuP times F1.
pub fn eup_weighted_f1(f1: &BTreeMap<String, f64>, eup: &EupTable) -> Result<f64> {
    if eup.entries.is_empty() {
        return input("EuP table is empty");
    }
    let mut total = 0.0;
    for (g, e) in &eup.entries {
        let Some(f) = f1.get(g) else { return input(format!("no F1 for genre {g:?}")) };
        total += e.score * f;
    }
    Ok(total / eup.entries.len() as f64)
}
