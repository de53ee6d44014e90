//! Text utilities shared by every pathway: the token counter behind the
//! context budgets and the analyzer behind the lexical index.

use unicode_normalization::{is_nfkc_quick, IsNormalized, UnicodeNormalization};

/// NFKC-normalizes `text`.
pub fn normalize(text: &str) -> String {
    if is_nfkc_quick(text.chars()) == IsNormalized::Yes {
        return text.to_owned();
    }
    text.nfkc().collect()
}

/// Budget tokens of `text`: whitespace-separated pieces after NFKC normalization.
///
/// Empty or whitespace-only text counts as zero.
pub fn count_tokens(text: &str) -> usize {
    fn runs(chars: impl Iterator<Item = char>) -> usize {
        let mut n = 0;
        let mut in_token = false;
        for c in chars {
            let ws = c.is_whitespace();
            if !ws && !in_token {
                n += 1;
            }
            in_token = !ws;
        }
        n
    }
    if is_nfkc_quick(text.chars()) == IsNormalized::Yes {
        runs(text.chars())
    } else {
        runs(text.nfkc())
    }
}

/// Splits `text` into budget tokens.
pub fn budget_tokens(text: &str) -> Vec<String> {
    normalize(text)
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Keeps at most `max_tokens` budget tokens of `text`, re-joined with single spaces.
///
/// Text already within budget is returned unchanged.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> String {
    truncate_counted(text, max_tokens).0
}

/// [`truncate_tokens`] plus the budget token count of the result.
pub fn truncate_counted(text: &str, max_tokens: usize) -> (String, usize) {
    // stops normalizing as soon as the budget is known to be exceeded
    let mut out = String::new();
    let mut taken = 0;
    let mut in_token = false;
    for c in text.nfkc() {
        if c.is_whitespace() {
            in_token = false;
            continue;
        }
        if !in_token {
            if taken == max_tokens {
                return (out, taken);
            }
            if taken > 0 {
                out.push(' ');
            }
            taken += 1;
            in_token = true;
        }
        out.push(c);
    }
    (text.to_owned(), taken)
}

/// Index terms of `text`: lowercased alphanumeric runs after normalization.
pub fn analyze(text: &str) -> Vec<String> {
    normalize(text)
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Lowercases, strips punctuation and collapses whitespace.
pub fn fold(text: &str) -> String {
    analyze(text).join(" ")
}
