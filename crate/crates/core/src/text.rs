//! Tokenization shared by the rationale miner and the Naive Bayes baseline.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use unicode_segmentation::UnicodeSegmentation;

/// Lowercased words split on Unicode word boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(|w| w.to_lowercase()).collect()
}

/// [`tokenize`] with every token in `stop` removed.
pub fn tokenize_filtered(text: &str, stop: &BTreeSet<String>) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !stop.contains(t))
        .collect()
}

/// Small English + Spanish function-word list used when mining justifications.
pub fn default_stop_words() -> BTreeSet<String> {
    const WORDS: &[&str] = &[
        "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have",
        "in", "is", "it", "its", "of", "on", "or", "that", "the", "there", "this", "to", "was",
        "were", "with", "which", "not", "no", "does", "do", "article", "news", "text",
        "el", "la", "los", "las", "un", "una", "y", "o", "de", "del", "en", "que", "se", "por",
        "con", "para", "es", "al", "lo", "su", "sus", "como",
    ];
    WORDS.iter().map(|w| String::from(*w)).collect()
}
