/// Replaces any all-digit token.
pub const NUM: &str = "NUM";

/// Lowercase, split on anything that is not alphanumeric, and collapse
/// digit-only runs to [`NUM`].
pub fn tokenize(message: &str) -> Vec<String> {
    message
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            if t.chars().all(|c| c.is_ascii_digit()) {
                NUM.to_string()
            } else {
                t.to_lowercase()
            }
        })
        .collect()
}
