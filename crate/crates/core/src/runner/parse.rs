//! Response parsing: a fixed regular-expression cascade.

use std::sync::OnceLock;

use regex::Regex;

/// Extract the answer from a raw model response. The patterns are tried in
/// order and the first match wins; the captured group is trimmed of leading
/// and trailing whitespace. Empty input parses to the empty string.
pub fn parse_response(raw: &str) -> String {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    let patterns = PATTERNS.get_or_init(|| {
        [
            r"Answer: (.+)",
            r"The answer is (.+)",
            r"\*\*(.+)\*\*",
            r"(.+)",
        ]
        .iter()
        .map(|p| Regex::new(p).expect("static pattern compiles"))
        .collect()
    });
    for pattern in patterns {
        if let Some(caps) = pattern.captures(raw) {
            return caps.get(1).map_or("", |m| m.as_str()).trim().to_string();
        }
    }
    raw.trim().to_string()
}
