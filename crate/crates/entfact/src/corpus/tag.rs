//! Whitespace/punctuation tokenizer and the rule-based entity tagger.
//!
//! The tagger is deliberately small: maximal runs of capitalized tokens
//! (minus sentence-initial function words), standalone numbers, and
//! day-month(-year) date patterns. It stands in for an external NER system
//! at desk scale; gold labels in input files always take precedence.

use std::collections::HashSet;
use std::sync::OnceLock;

use super::EntityMention;

/// Function words skipped when capitalized at a sentence start.
static STOPWORDS: &str = include_str!("../../data/stopwords.txt");

fn stopword_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).collect()
    })
}

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

const DETACHED: &[char] = &[
    '.', ',', '!', '?', ';', ':', '"', '(', ')', '[', ']', '{', '}', '\u{2018}', '\u{2019}',
    '\u{201c}', '\u{201d}', '\u{2026}',
];

fn is_stopword(token: &str) -> bool {
    stopword_set().contains(token.to_lowercase().as_str())
}

/// Splits text on whitespace and detaches leading/trailing punctuation.
///
/// Casing is preserved; intra-word punctuation (hyphens, apostrophes) is
/// kept so tokens like `Jean-Claude` stay whole. Empty input gives an
/// empty sequence.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut leading = Vec::new();
        let mut core: &str = chunk;
        loop {
            let mut chars = core.chars();
            match chars.next() {
                Some(c) if DETACHED.contains(&c) => {
                    leading.push(c.to_string());
                    core = chars.as_str();
                }
                _ => break,
            }
        }
        let mut trailing = Vec::new();
        loop {
            let mut chars = core.chars();
            match chars.next_back() {
                Some(c) if DETACHED.contains(&c) => {
                    trailing.push(c.to_string());
                    core = chars.as_str();
                }
                _ => break,
            }
        }
        tokens.extend(leading);
        if !core.is_empty() {
            tokens.push(core.to_string());
        }
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}

/// True for tokens made of digits with optional `,`/`.` separators.
pub fn is_numeric_token(token: &str) -> bool {
    let mut saw_digit = false;
    for (i, c) in token.chars().enumerate() {
        if c.is_ascii_digit() {
            saw_digit = true;
        } else if (c == ',' || c == '.') && i > 0 {
            continue;
        } else {
            return false;
        }
    }
    saw_digit
        && token
            .chars()
            .next_back()
            .is_some_and(|c| c.is_ascii_digit())
}

fn is_capitalized(token: &str) -> bool {
    token.chars().next().is_some_and(|c| c.is_uppercase())
}

fn sentence_initial(tokens: &[String], i: usize) -> bool {
    i == 0 || matches!(tokens[i - 1].as_str(), "." | "!" | "?")
}

fn is_month(token: &str) -> bool {
    MONTHS.contains(&token)
}

fn is_year(token: &str) -> bool {
    token.len() == 4 && token.chars().all(|c| c.is_ascii_digit())
}

/// Tags entity candidates: date patterns first, then capitalized runs,
/// then standalone numbers. Output spans are sorted and non-overlapping;
/// labels are left unset.
pub fn extract_entities(tokens: &[String]) -> Vec<EntityMention> {
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        // day month (year)
        if is_numeric_token(&tokens[i]) && i + 1 < tokens.len() && is_month(&tokens[i + 1]) {
            let mut len = 2;
            if i + 2 < tokens.len() && is_year(&tokens[i + 2]) {
                len = 3;
            }
            mentions.push(EntityMention::over(tokens, i, len).expect("span in bounds"));
            i += len;
            continue;
        }
        if is_capitalized(&tokens[i]) && !(sentence_initial(tokens, i) && is_stopword(&tokens[i])) {
            let start = i;
            while i < tokens.len() && is_capitalized(&tokens[i]) {
                i += 1;
            }
            mentions.push(EntityMention::over(tokens, start, i - start).expect("span in bounds"));
            continue;
        }
        if is_numeric_token(&tokens[i]) {
            mentions.push(EntityMention::over(tokens, i, 1).expect("span in bounds"));
        }
        i += 1;
    }
    mentions
}

/// Matches two tokens under the corpus rule: case-insensitive for words,
/// exact for numerals.
pub fn tokens_match(a: &str, b: &str) -> bool {
    if is_numeric_token(a) || is_numeric_token(b) {
        a == b
    } else {
        a.to_lowercase() == b.to_lowercase()
    }
}

/// True iff `needle` occurs as a contiguous token subsequence of
/// `haystack` under [`tokens_match`].
pub fn contains_span(haystack: &[String], needle: &[String]) -> bool {
    count_span_occurrences(haystack, needle) > 0
}

/// Number of contiguous occurrences of `needle` in `haystack` (possibly
/// overlapping) under [`tokens_match`].
pub fn count_span_occurrences(haystack: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || needle.len() > haystack.len() {
        return 0;
    }
    haystack
        .windows(needle.len())
        .filter(|w| w.iter().zip(needle).all(|(h, n)| tokens_match(h, n)))
        .count()
}
