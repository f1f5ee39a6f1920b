//! Tokenisation, vocabularies and fixed-length encoding.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{config, Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Longest description kept after part-of-speech filtering.
pub const DESCRIPTION_MAX_TOKENS: usize = 120;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    Word,
    Char,
    Bigram,
}

impl std::fmt::Display for TokenMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TokenMode::Word => "word",
            TokenMode::Char => "char",
            TokenMode::Bigram => "bigram",
        })
    }
}

/// Splits NFKC-normalised text into tokens.
///
/// * word: maximal runs of alphanumeric characters, lowercased
/// * char: one token per character, whitespace runs collapsed to `" "`
/// * bigram: adjacent word tokens joined with `_`
pub fn tokenize(text: &str, mode: TokenMode) -> Vec<String> {
    let norm: String = text.nfkc().collect();
    match mode {
        TokenMode::Word => words(&norm),
        TokenMode::Char => {
            let mut out: Vec<String> = Vec::new();
            let mut in_space = false;
            for c in norm.trim().chars() {
                if c.is_whitespace() {
                    if !in_space {
                        out.push(" ".to_string());
                    }
                    in_space = true;
                } else {
                    out.push(c.to_string());
                    in_space = false;
                }
            }
            out
        }
        TokenMode::Bigram => {
            let w = words(&norm);
            w.windows(2).map(|p| format!("{}_{}", p[0], p[1])).collect()
        }
    }
}

fn words(norm: &str) -> Vec<String> {
    norm.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_lowercase())
        .collect()
}

/// Token ↔ index table with PAD at 0 and UNK at 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Keeps tokens seen at least `min_freq` times, ranked by frequency
    /// (descending) then token (ascending), capped so that the vocabulary
    /// including PAD and UNK has at most `max_size` entries.
    pub fn build<I, S>(corpus: I, min_freq: usize, max_size: usize) -> Result<Vocab>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        if min_freq == 0 {
            return config("min_freq must be at least 1");
        }
        if max_size < 2 {
            return config("max_size must leave room for PAD and UNK");
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            for tok in doc.as_ref() {
                *counts.entry(tok.clone()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - 2);
        let tokens = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Ok(Vocab::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied().filter(|&i| i >= 2)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    /// Tab-separated `index\ttoken` lines in index order; tabs, newlines and
    /// backslashes inside tokens are escaped.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{}", escape(t));
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Vocab> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (idx, tok) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "expected index<TAB>token".into(),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: n + 1,
                message: format!("bad index {idx:?}"),
            })?;
            if idx != n {
                return Err(Error::Parse { line: n + 1, message: format!("index {idx} out of order") });
            }
            tokens.push(unescape(tok));
        }
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Parse { line: 1, message: "vocabulary must start with <pad> and <unk>".into() });
        }
        Ok(Vocab::from_tokens(tokens))
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Token indices padded or truncated to a thread's input length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSequence {
    pub ids: Vec<usize>,
    pub true_length: usize,
}

/// Maps tokens to indices (unknown → UNK), keeps the first `length` and
/// right-pads with PAD.
pub fn encode(tokens: &[String], vocab: &Vocab, length: usize) -> Result<EncodedSequence> {
    if length == 0 {
        return config("encoded length must be at least 1");
    }
    let mut ids: Vec<usize> = tokens.iter().take(length).map(|t| vocab.index_of(t)).collect();
    let true_length = ids.len();
    ids.resize(length, PAD);
    Ok(EncodedSequence { ids, true_length })
}

/// Keeps nouns, adjectives and adverbs (Universal Dependencies or IPADIC
/// tag names), drops repeated tokens and caps the result at
/// [`DESCRIPTION_MAX_TOKENS`].
pub fn prepare_description<S: AsRef<str>, T: AsRef<str>>(tagged: &[(S, T)]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (tok, tag) in tagged {
        if out.len() == DESCRIPTION_MAX_TOKENS {
            break;
        }
        if !is_content_tag(tag.as_ref()) {
            continue;
        }
        if seen.insert(tok.as_ref()) {
            out.push(tok.as_ref().to_string());
        }
    }
    out
}

fn is_content_tag(tag: &str) -> bool {
    let t = tag.trim();
    ["NOUN", "ADJ", "ADV"].iter().any(|k| t.eq_ignore_ascii_case(k))
        || t.starts_with("名詞")
        || t.starts_with("形容詞")
        || t.starts_with("副詞")
}
