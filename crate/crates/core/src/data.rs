//! Line-delimited JSON records for catalog items and user sessions.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub title: String,
    /// Node names below the root, shallowest first.
    pub genre_path: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shop_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_ids: Option<Vec<String>>,
    /// `(token, part-of-speech)` pairs from an external tagger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_tokens: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purchase_flag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cart_flag: Option<bool>,
}

impl ItemRecord {
    pub fn new(id: impl Into<String>, title: impl Into<String>, genre_path: Vec<String>) -> Self {
        ItemRecord {
            id: id.into(),
            title: title.into(),
            genre_path,
            shop_id: None,
            tag_ids: None,
            description_tokens: None,
            purchase_flag: None,
            cart_flag: None,
        }
    }

    pub fn purchased_or_carted(&self) -> bool {
        self.purchase_flag == Some(true) || self.cart_flag == Some(true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Search,
    Click,
    AddToCart,
    Purchase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub timestamp: f64,
    #[serde(rename = "type")]
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
}

impl SessionEvent {
    pub fn search(timestamp: f64, query: &str) -> Self {
        SessionEvent { timestamp, kind: EventKind::Search, query: Some(query.into()), item_id: None }
    }

    pub fn item(timestamp: f64, kind: EventKind, item: &str) -> Self {
        SessionEvent { timestamp, kind, query: None, item_id: Some(item.into()) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub user_hash: String,
    pub events: Vec<SessionEvent>,
}

impl SessionRecord {
    fn check(&self) -> std::result::Result<(), String> {
        for (i, ev) in self.events.iter().enumerate() {
            if !ev.timestamp.is_finite() {
                return Err(format!("event {i}: timestamp is not finite"));
            }
            if i > 0 && ev.timestamp < self.events[i - 1].timestamp {
                return Err(format!("event {i}: timestamps go backwards"));
            }
            match ev.kind {
                EventKind::Search if ev.query.is_none() => return Err(format!("event {i}: search without query")),
                EventKind::Click | EventKind::Purchase | EventKind::AddToCart if ev.item_id.is_none() => {
                    return Err(format!("event {i}: {:?} without item_id", ev.kind));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// One rejected input line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Records that parsed plus the lines that did not.
#[derive(Clone, Debug, PartialEq)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
}

/// Parses one JSON record per non-blank line. Once more than `error_budget`
/// lines have failed, returns the first failure as an error.
fn parse_lines<T, F>(text: &str, error_budget: usize, check: F) -> Result<Ingested<T>>
where
    T: serde::de::DeserializeOwned,
    F: Fn(&T) -> std::result::Result<(), String>,
{
    let mut records = Vec::new();
    let mut errors: Vec<LineError> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<T>(line)
            .map_err(|e| e.to_string())
            .and_then(|r| check(&r).map(|_| r));
        match parsed {
            Ok(r) => records.push(r),
            Err(message) => {
                errors.push(LineError { line: n + 1, message });
                if errors.len() > error_budget {
                    let first = errors.swap_remove(0);
                    return Err(Error::Parse { line: first.line, message: first.message });
                }
            }
        }
    }
    Ok(Ingested { records, errors })
}

pub fn parse_items(text: &str, error_budget: usize) -> Result<Ingested<ItemRecord>> {
    let seen = std::cell::RefCell::new(HashSet::new());
    parse_lines(text, error_budget, |r: &ItemRecord| {
        if r.genre_path.is_empty() {
            return Err("genre_path is empty".into());
        }
        if !seen.borrow_mut().insert(r.id.clone()) {
            return Err(format!("duplicate id {:?}", r.id));
        }
        Ok(())
    })
}

pub fn parse_sessions(text: &str, error_budget: usize) -> Result<Ingested<SessionRecord>> {
    parse_lines(text, error_budget, SessionRecord::check)
}

pub fn ingest_items(path: &Path, error_budget: usize) -> Result<Ingested<ItemRecord>> {
    parse_items(&std::fs::read_to_string(path)?, error_budget)
}

pub fn ingest_sessions(path: &Path, error_budget: usize) -> Result<Ingested<SessionRecord>> {
    parse_sessions(&std::fs::read_to_string(path)?, error_budget)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Class name for a path truncated to `level` nodes (all nodes when `None`).
pub fn path_label(path: &[String], level: Option<usize>) -> String {
    let n = level.map_or(path.len(), |l| l.min(path.len()));
    path[..n].join(" > ")
}
