//! Lexical helpers shared by routing, retrieval and the oracle matcher.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "to", "in", "on", "for", "and", "or", "with", "by", "from", "at",
    "is", "are", "was", "were", "be", "been", "this", "that", "these", "those", "it", "its",
    "into", "as", "do", "does", "did", "there", "their", "then", "than", "such", "any", "if",
];

/// Lowercased alphanumeric runs with a light plural strip
/// (`windows` -> `window`, but `glass` stays).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(stem(core::mem::take(&mut cur)));
        }
    }
    if !cur.is_empty() {
        out.push(stem(cur));
    }
    out
}

fn stem(mut word: String) -> String {
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") {
        word.pop();
    }
    word
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// Token set without stopwords.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().filter(|t| !is_stopword(t)).collect()
}

/// |a ∩ b| / |a ∪ b|, zero when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Fraction of `query` tokens present in `target`; zero for an empty query.
pub fn coverage(query: &BTreeSet<String>, target: &BTreeSet<String>) -> f64 {
    if query.is_empty() {
        return 0.0;
    }
    query.intersection(target).count() as f64 / query.len() as f64
}
