//! Small lexical helpers shared by entity resolution, schema fallback and
//! relevance scoring.

use std::collections::BTreeSet;

/// Lowercase word tokens, split on every non-alphanumeric character.
///
/// `located_in` yields `["located", "in"]` and `Alice's` yields
/// `["alice", "s"]`.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn word_token_set(text: &str) -> BTreeSet<String> {
    word_tokens(text).into_iter().collect()
}

/// Lowercase whitespace tokens; used for alias overlap ranking.
pub fn whitespace_tokens(text: &str) -> BTreeSet<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Case-folds and collapses internal whitespace.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
