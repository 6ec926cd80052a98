//! Word tokenization with character offsets.
//!
//! Spans throughout the crate are expressed in Unicode code points, not
//! bytes, so every token records both its character offset (the public
//! coordinate system) and its byte offset (for slicing).

use unicode_segmentation::UnicodeSegmentation;

/// A word token with its position in the source document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// 0-based character (code point) offset of the first char.
    pub start: usize,
    /// Length in characters.
    pub len: usize,
    /// Byte offset of the token in the source string.
    pub byte_start: usize,
    /// Byte length of the token.
    pub byte_len: usize,
}

impl Token {
    /// Character offset one past the end of the token.
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Splits `text` into word tokens on Unicode word boundaries.
///
/// Segments that contain no alphanumeric character (whitespace, punctuation)
/// act as separators and are not emitted. `"Red Star (Belgrade)"` tokenizes
/// to `Red`, `Star`, `Belgrade`; `"1996-08-30"` to `1996`, `08`, `30`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut char_offset = 0usize;
    let mut byte_cursor = 0usize;
    for (byte_start, word) in text.split_word_bound_indices() {
        // Track the character offset of this segment: advance over the gap
        // between the previous segment's end and this one (there is none for
        // split_word_bound_indices, segments are contiguous).
        debug_assert_eq!(byte_start, byte_cursor);
        let n_chars = word.chars().count();
        if word.chars().any(|c| c.is_alphanumeric()) {
            tokens.push(Token {
                text: word.to_string(),
                start: char_offset,
                len: n_chars,
                byte_start,
                byte_len: word.len(),
            });
        }
        char_offset += n_chars;
        byte_cursor = byte_start + word.len();
    }
    tokens
}

/// Returns the number of characters in `text` (the document length used for
/// span bounds checks).
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Slices `text` by character offsets, returning the corresponding substring.
///
/// Returns `None` if the range exceeds the text. O(n) in the prefix length;
/// fine for request-sized documents.
pub fn slice_chars(text: &str, start: usize, len: usize) -> Option<&str> {
    let mut iter = text.char_indices();
    let byte_start = if start == 0 {
        0
    } else {
        iter.nth(start - 1).map(|(i, c)| i + c.len_utf8())?
    };
    let mut end_iter = text[byte_start..].char_indices();
    let byte_len = if len == 0 {
        0
    } else {
        end_iter.nth(len - 1).map(|(i, c)| i + c.len_utf8())?
    };
    Some(&text[byte_start..byte_start + byte_len])
}
