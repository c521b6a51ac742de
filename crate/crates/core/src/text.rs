//! Sentence utilities for summaries and fallbacks.

/// Byte offsets just past each sentence terminator (`.`, `!`, `?`, optionally followed
/// by closing quotes or brackets) that is followed by whitespace or the end of text.
fn sentence_ends(s: &str) -> Vec<usize> {
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut ends = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?' | '。' | '！' | '？') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?' | '"' | '\'' | ')' | ']' | '”' | '’') {
                j += 1;
            }
            let at_end = j == chars.len();
            if at_end || chars[j].1.is_whitespace() {
                let end = if at_end { s.len() } else { chars[j].0 };
                ends.push(end);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    ends
}

/// Split into trimmed, non-empty sentences. Trailing text without a terminator counts as one.
pub fn sentences(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for end in sentence_ends(s) {
        let piece = s[start..end].trim();
        if !piece.is_empty() {
            out.push(piece);
        }
        start = end;
    }
    let rest = s[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// First `n` sentences, preserving the original spacing between them.
pub fn truncate_sentences(s: &str, n: usize) -> &str {
    let trimmed = s.trim();
    if n == 0 {
        return "";
    }
    match sentence_ends(trimmed).get(n - 1) {
        Some(&end) => trimmed[..end].trim_end(),
        None => trimmed,
    }
}

pub fn first_sentence(s: &str) -> &str {
    truncate_sentences(s, 1)
}

pub fn sentence_count(s: &str) -> usize {
    sentences(s).len()
}

/// Rough emoji test covering the pictographic blocks, dingbats and variation selectors.
pub fn is_emoji_char(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0x2300..=0x23FF
        | 0xFE0F
        | 0x200D
        | 0x20E3
        | 0xE0020..=0xE007F)
}

pub fn strip_emoji(s: &str) -> String {
    let out: String = s.chars().filter(|c| !is_emoji_char(*c)).collect();
    if out.len() == s.len() {
        out
    } else {
        out.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

/// Collapse runs of whitespace.
pub fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
