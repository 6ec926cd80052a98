//! Anchor extraction from wikitext.
//!
//! Only link markup is handled: `[[Target]]` and `[[Target|anchor text]]`.
//! Section fragments (`Target#Section`) are stripped from targets. Files may
//! concatenate several documents with `= = = DOC <title> = = =` separator
//! lines; separators are dropped before scanning.

/// Returns `(target, anchor_text)` pairs plus the number of skipped anchors
/// (unbalanced brackets or empty target/text).
pub fn extract_anchors(content: &str) -> (Vec<(String, String)>, u64) {
    let mut anchors = Vec::new();
    let mut skipped = 0u64;
    for line in content.lines() {
        if is_doc_separator(line) {
            continue;
        }
        let mut rest = line;
        while let Some(open) = rest.find("[[") {
            let after = &rest[open + 2..];
            let Some(close) = after.find("]]") else {
                skipped += 1;
                break;
            };
            let inner = &after[..close];
            rest = &after[close + 2..];
            let (target_raw, text_raw) = match inner.split_once('|') {
                Some((target, text)) => (target, text),
                None => (inner, inner),
            };
            let target = target_raw.split('#').next().unwrap_or("").trim();
            let text = text_raw.trim();
            if target.is_empty() || text.is_empty() {
                skipped += 1;
                continue;
            }
            anchors.push((target.to_string(), text.to_string()));
        }
    }
    (anchors, skipped)
}

fn is_doc_separator(line: &str) -> bool {
    let trimmed = line.trim();
    trimmed.starts_with("= = = DOC ") && trimmed.ends_with("= = =")
}
