//! Lowercased alphanumeric tokenization shared by phrase mining, label-name
//! matching, and the default text model.

/// Split text into lowercased tokens on every non-alphanumeric character
/// (whitespace and punctuation alike). Empty fragments are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Render an attribute (field, value) pair as a single synthetic token,
/// e.g. ("Brand", "Seventh Generation") -> "brand=seventh_generation".
/// The token is treated as one unit and never re-tokenized.
pub fn attribute_token(field: &str, value: &str) -> String {
    let value = value
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_");
    format!("{}={}", field.to_lowercase(), value)
}

/// Count the occurrences of `needle` as a contiguous subsequence of
/// `haystack`, sliding one position at a time (occurrences may overlap).
pub fn count_token_seq(haystack: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || haystack.len() < needle.len() {
        return 0;
    }
    haystack
        .windows(needle.len())
        .filter(|w| *w == needle)
        .count()
}
