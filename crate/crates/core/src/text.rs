//! Sentence splitting and tokenization.
//!
//! Sentence boundaries follow a plain rule: a `.`, `!` or `?` followed by
//! whitespace or end of text. There is no abbreviation handling, so
//! "Dr. Smith" splits after "Dr.".

use alloc::string::{String, ToString};
use alloc::vec::Vec;

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits off the first sentence. Both halves are whitespace-trimmed; text
/// without a terminator is returned whole as the first sentence.
pub fn split_first_sentence(text: &str) -> (&str, &str) {
    let text = text.trim();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if is_terminator(c) && chars.peek().is_none_or(|&(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            return (&text[..end], text[end..].trim_start());
        }
    }
    (text, "")
}

/// All sentences of `text` in order.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    loop {
        let (first, tail) = split_first_sentence(rest);
        if first.is_empty() {
            return out;
        }
        out.push(first);
        rest = tail;
    }
}

pub fn sentence_count(text: &str) -> usize {
    sentences(text).len()
}

/// Turns text into the token units every budget is measured in.
pub trait Tokenizer: Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;

    /// Token count of `text`.
    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Whitespace split, with every punctuation or symbol character emitted as
/// its own token and alphanumeric runs kept together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimpleTokenizer;

impl Tokenizer for SimpleTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            let mut word_start = None;
            for (i, c) in chunk.char_indices() {
                if c.is_alphanumeric() {
                    word_start.get_or_insert(i);
                } else {
                    if let Some(s) = word_start.take() {
                        out.push(chunk[s..i].to_string());
                    }
                    out.push(c.to_string());
                }
            }
            if let Some(s) = word_start {
                out.push(chunk[s..].to_string());
            }
        }
        out
    }
}

/// [`SimpleTokenizer`] as a free function.
pub fn tokenize(text: &str) -> Vec<String> {
    SimpleTokenizer.tokenize(text)
}
