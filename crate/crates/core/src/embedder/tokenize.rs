use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Ordered tokens produced by [`tokenize`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

impl From<Vec<String>> for TokenSeq {
    fn from(tokens: Vec<String>) -> Self {
        Self { tokens }
    }
}

/// True for CJK unified ideographs (all extensions) and compatibility ideographs.
pub fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x2F800..=0x2FA1F
        | 0x30000..=0x323AF)
}

/// Splits text into tokens.
///
/// The text is NFC-normalized first. Every Han ideograph is its own token;
/// maximal runs of other letters and digits form one lowercased token; all
/// remaining characters (punctuation, whitespace, symbols) separate tokens
/// and are dropped.
///
/// ```
/// use qfine::embedder::tokenize;
/// assert_eq!(tokenize("Patent Law 2024!").tokens, ["patent", "law", "2024"]);
/// assert_eq!(tokenize("發明專利").tokens, ["發", "明", "專", "利"]);
/// ```
pub fn tokenize(text: &str) -> TokenSeq {
    let mut tokens = Vec::new();
    let mut run = String::new();
    for c in text.nfc() {
        if is_han(c) {
            if !run.is_empty() {
                tokens.push(std::mem::take(&mut run));
            }
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            run.extend(c.to_lowercase());
        } else if !run.is_empty() {
            tokens.push(std::mem::take(&mut run));
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    TokenSeq { tokens }
}
