//! Text normalization and tokenization shared by all lexical metrics.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

/// Tokenizer settings. Equal input text always yields equal token lists.
///
/// The default (NFC + lowercase + each punctuation codepoint its own token)
/// approximates the language-independent "international" tokenization used
/// by common MT scoring toolkits without importing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Each Unicode punctuation codepoint becomes its own token.
    pub split_punctuation: bool,
    /// NFC normalization is always applied; kept as a field so configs
    /// serialize their full behavior.
    pub unicode_nfc: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            split_punctuation: true,
            unicode_nfc: true,
        }
    }
}

/// NFC-normalize a string. All text entering the toolkit goes through this.
pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

fn is_punctuation(ch: char) -> bool {
    ch.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Split text into tokens: NFC, optional lowercase, whitespace split, and
/// (optionally) each punctuation codepoint separated out.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let normalized: String = if config.lowercase {
        text.nfc().flat_map(char::to_lowercase).collect()
    } else {
        text.nfc().collect()
    };

    let mut tokens = Vec::new();
    for chunk in normalized.split_whitespace() {
        if !config.split_punctuation {
            tokens.push(chunk.to_string());
            continue;
        }
        let mut current = String::new();
        for ch in chunk.chars() {
            if is_punctuation(ch) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            } else {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Character stream for ChrF: NFC, optional lowercase, all whitespace removed.
pub fn chrf_chars(text: &str, lowercase: bool) -> Vec<char> {
    let it = text.nfc().filter(|ch| !ch.is_whitespace());
    if lowercase {
        it.flat_map(char::to_lowercase).collect()
    } else {
        it.collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        let toks = tokenize("Hello, world!", &TokenizerConfig::default());
        assert_eq!(toks, vec!["hello", ",", "world", "!"]);
    }

    #[test]
    fn empty_input_gives_no_tokens() {
        assert!(tokenize("", &TokenizerConfig::default()).is_empty());
        assert!(tokenize("   \t\n", &TokenizerConfig::default()).is_empty());
    }

    #[test]
    fn nfc_and_whitespace_rule() {
        // "Café" with a combining acute accent (NFD) must normalize to the
        // precomposed form; runs of whitespace collapse.
        let toks = tokenize("Cafe\u{0301}\t au  lait", &TokenizerConfig::default());
        assert_eq!(toks, vec!["café", "au", "lait"]);
    }

    #[test]
    fn case_preserved_when_disabled() {
        let cfg = TokenizerConfig {
            lowercase: false,
            ..TokenizerConfig::default()
        };
        assert_eq!(tokenize("Hello X", &cfg), vec!["Hello", "X"]);
    }

    #[test]
    fn punctuation_kept_inline_when_split_disabled() {
        let cfg = TokenizerConfig {
            split_punctuation: false,
            ..TokenizerConfig::default()
        };
        assert_eq!(tokenize("Hello, world!", &cfg), vec!["hello,", "world!"]);
    }

    #[test]
    fn unicode_punctuation_is_split() {
        let toks = tokenize("a\u{2014}b \u{00BF}que?", &TokenizerConfig::default());
        assert_eq!(toks, vec!["a", "\u{2014}", "b", "\u{00BF}", "que", "?"]);
    }

    #[test]
    fn chrf_chars_strip_whitespace() {
        assert_eq!(chrf_chars("a b\tc", true), vec!['a', 'b', 'c']);
        assert_eq!(chrf_chars("AB", false), vec!['A', 'B']);
        assert_eq!(chrf_chars("AB", true), vec!['a', 'b']);
    }
}
