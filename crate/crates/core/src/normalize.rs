//! String normalization shared by dictionary lookup, value matching, and
//! term resolution.
//!
//! Attribute *names* and attribute *values* normalize differently: names map
//! underscores to spaces, values keep them. `lung_squamous_carcinoma` must not
//! resolve to `lung squamous carcinoma`.

/// Normalize an attribute name for dictionary identity.
///
/// Lower-cases, maps `_` to a space, trims, and collapses internal whitespace
/// runs to a single space. Idempotent.
pub fn normalize_attribute_name(raw: &str) -> String {
    let mapped: String = raw
        .chars()
        .map(|c| if c == '_' { ' ' } else { c })
        .collect();
    collapse_lower(&mapped)
}

/// Normalize an attribute value (or ontology label) for lenient matching.
///
/// Trims, case-folds, and collapses internal whitespace. Underscores are
/// preserved.
pub fn normalize_value(raw: &str) -> String {
    collapse_lower(raw)
}

fn collapse_lower(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for c in word.chars() {
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Whitespace-delimited tokens of an already-normalized string.
pub(crate) fn tokens(normalized: &str) -> impl Iterator<Item = &str> {
    normalized.split(' ').filter(|t| !t.is_empty())
}
