//! Phrase normalization and matching shared by every stage.

use std::ops::Range;

use regex::{Regex, RegexBuilder};

/// Lowercases, trims and collapses internal whitespace.
pub fn normalize(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Case-insensitive pattern for a phrase; internal whitespace matches any run
/// of whitespace.
fn phrase_regex(phrase: &str) -> Option<Regex> {
    let words: Vec<String> = phrase.split_whitespace().map(regex::escape).collect();
    if words.is_empty() {
        return None;
    }
    RegexBuilder::new(&words.join(r"\s+"))
        .case_insensitive(true)
        .build()
        .ok()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Byte ranges of every non-overlapping occurrence of `phrase` in `haystack`.
///
/// Matching ignores case and requires that an occurrence is not glued to a
/// neighbouring word character, so "friend" does not match inside
/// "girlfriend".
pub fn find_phrase(haystack: &str, phrase: &str) -> Vec<Range<usize>> {
    let Some(re) = phrase_regex(phrase) else {
        return Vec::new();
    };
    let mut found = Vec::new();
    let mut pos = 0;
    while pos <= haystack.len() {
        let Some(m) = re.find_at(haystack, pos) else {
            break;
        };
        let before_ok = haystack[..m.start()]
            .chars()
            .next_back()
            .is_none_or(|c| !is_word_char(c));
        let after_ok = haystack[m.end()..]
            .chars()
            .next()
            .is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok && !m.is_empty() {
            found.push(m.range());
            pos = m.end();
        } else {
            // retry one character further on
            let step = haystack[m.start()..]
                .chars()
                .next()
                .map_or(1, char::len_utf8);
            pos = m.start() + step;
        }
    }
    found
}

/// Whether `phrase` occurs in `haystack` under [`find_phrase`] rules.
pub fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    !find_phrase(haystack, phrase).is_empty()
}

/// Order-preserving deduplication by normalized form; blank entries dropped.
pub fn dedup_phrases<I, S>(phrases: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for phrase in phrases {
        let trimmed = phrase.as_ref().trim();
        if trimmed.is_empty() {
            continue;
        }
        if seen.insert(normalize(trimmed)) {
            out.push(trimmed.to_string());
        }
    }
    out
}

/// Fills `{key}` slots in a single left-to-right pass. Substituted values are
/// never rescanned, and unknown slots are left as written.
pub fn fill_slots(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let value = after.find('}').and_then(|close| {
            let key = &after[..close];
            slots
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (*v, close))
        });
        match value {
            Some((v, close)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_case_and_space() {
        assert_eq!(normalize("  My   Friend \t"), "my friend");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn find_respects_word_boundaries() {
        let text = "buy a doll for girlfriend and tell friend";
        assert_eq!(find_phrase(text, "friend"), vec![35..41]);
        assert_eq!(find_phrase(text, "girlfriend").len(), 1);
    }

    #[test]
    fn find_is_case_insensitive_and_whitespace_tolerant() {
        let text = "call My  Friend, then my friend's mom";
        assert_eq!(find_phrase(text, "my friend").len(), 2);
        assert!(contains_phrase("friend's phone number", "Friend's Phone number"));
    }

    #[test]
    fn find_handles_leading_symbols() {
        assert_eq!(find_phrase("and then @ TikTok friend.", "tiktok friend"), vec![11..24]);
        assert!(find_phrase("anything", "   ").is_empty());
    }

    #[test]
    fn slots_fill_once() {
        assert_eq!(
            fill_slots("a {x} b {y} {z}", &[("x", "{y}"), ("y", "2")]),
            "a {y} b 2 {z}"
        );
    }

    #[test]
    fn dedup_keeps_first_spelling() {
        assert_eq!(
            dedup_phrases(["Friend", " friend ", "", "my home"]),
            vec!["Friend".to_string(), "my home".to_string()]
        );
    }
}
