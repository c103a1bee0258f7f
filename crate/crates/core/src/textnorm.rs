//! Text normalization shared by corpus identity checks and response
//! matching.

/// Canonical form used when comparing author or title strings: Unicode
/// lowercasing, whitespace runs collapsed to single spaces, and terminal
/// punctuation dropped.
pub fn normalize_name(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let lowered = collapsed.to_lowercase();
    lowered
        .trim_end_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?'))
        .trim()
        .to_string()
}
