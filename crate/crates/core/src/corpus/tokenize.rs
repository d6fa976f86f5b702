//! Social-media tokenizer.
//!
//! Text is split on whitespace, Unicode separators and control/format
//! characters. Each chunk is then screened as a whole for URLs, hashtags and
//! user mentions before any punctuation handling, so `#fun` never leaks `fun`.
//! Surviving chunks are split on hyphens, and punctuation and symbol
//! characters act as token boundaries (or become their own tokens when the
//! corresponding removal flag is off).

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

/// Pre-processing switches. Every flag defaults to `true`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRules {
    pub remove_punct: bool,
    pub remove_symbols: bool,
    pub remove_numbers: bool,
    pub remove_urls: bool,
    pub remove_hashtags: bool,
    pub remove_mentions: bool,
    pub split_hyphens: bool,
    pub remove_separators: bool,
    pub lowercase: bool,
}

impl Default for TokenRules {
    fn default() -> Self {
        Self {
            remove_punct: true,
            remove_symbols: true,
            remove_numbers: true,
            remove_urls: true,
            remove_hashtags: true,
            remove_mentions: true,
            split_hyphens: true,
            remove_separators: true,
            lowercase: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Word,
    Hyphen,
    Apostrophe,
    Punct,
    Symbol,
    Boundary,
}

fn classify(c: char) -> CharClass {
    use GeneralCategory::*;
    if matches!(c, '-' | '\u{2010}' | '\u{2011}') {
        return CharClass::Hyphen;
    }
    if matches!(c, '\'' | '\u{2019}') {
        return CharClass::Apostrophe;
    }
    match get_general_category(c) {
        UppercaseLetter | LowercaseLetter | TitlecaseLetter | ModifierLetter | OtherLetter | NonspacingMark
        | SpacingMark | EnclosingMark | DecimalNumber | LetterNumber | OtherNumber => CharClass::Word,
        ConnectorPunctuation | DashPunctuation | OpenPunctuation | ClosePunctuation | InitialPunctuation
        | FinalPunctuation | OtherPunctuation => CharClass::Punct,
        MathSymbol | CurrencySymbol | ModifierSymbol | OtherSymbol => CharClass::Symbol,
        SpaceSeparator | LineSeparator | ParagraphSeparator | Control | Format => CharClass::Boundary,
        _ => CharClass::Symbol,
    }
}

fn is_chunk_boundary(c: char, rules: &TokenRules) -> bool {
    c.is_whitespace() || (rules.remove_separators && classify(c) == CharClass::Boundary)
}

fn is_url(chunk: &str) -> bool {
    let lower = chunk.trim_start_matches(|c: char| !c.is_alphanumeric());
    let lower = lower.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") || lower.contains("://")
}

/// Leading characters that may precede a `#` or `@` without changing the
/// chunk's nature, e.g. `(@user` or `"#tag`.
fn strip_opening_punct(chunk: &str) -> &str {
    chunk.trim_start_matches(|c: char| {
        c != '#' && c != '@' && matches!(classify(c), CharClass::Punct | CharClass::Apostrophe)
    })
}

fn is_tagged(chunk: &str, sigil: char) -> bool {
    let rest = strip_opening_punct(chunk);
    let mut chars = rest.chars();
    chars.next() == Some(sigil) && chars.next().is_some_and(|c| classify(c) == CharClass::Word)
}

/// Tokenize `text` under `rules`.
pub fn tokenize(text: &str, rules: &TokenRules) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split(|c: char| is_chunk_boundary(c, rules)) {
        if chunk.is_empty() {
            continue;
        }
        if rules.remove_urls && is_url(chunk) {
            continue;
        }
        if rules.remove_hashtags && is_tagged(chunk, '#') {
            continue;
        }
        if rules.remove_mentions && is_tagged(chunk, '@') {
            continue;
        }
        if rules.lowercase {
            let lowered = chunk.to_lowercase();
            split_chunk(&lowered, rules, &mut out);
        } else {
            split_chunk(chunk, rules, &mut out);
        }
    }
    out
}

fn split_chunk(chunk: &str, rules: &TokenRules, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let class = match classify(c) {
            CharClass::Hyphen if !rules.split_hyphens => {
                let inner = i > 0
                    && i + 1 < chars.len()
                    && classify(chars[i - 1]) == CharClass::Word
                    && classify(chars[i + 1]) == CharClass::Word;
                if inner {
                    CharClass::Word
                } else {
                    CharClass::Punct
                }
            }
            CharClass::Hyphen => CharClass::Boundary,
            CharClass::Apostrophe => {
                // Internal apostrophes stay inside the word: "don't".
                let inner = i > 0
                    && i + 1 < chars.len()
                    && classify(chars[i - 1]) == CharClass::Word
                    && classify(chars[i + 1]) == CharClass::Word;
                if inner {
                    CharClass::Word
                } else {
                    CharClass::Punct
                }
            }
            other => other,
        };
        match class {
            CharClass::Word => word.push(c),
            CharClass::Punct | CharClass::Symbol | CharClass::Boundary => {
                flush(&mut word, rules, out);
                let keep = match class {
                    CharClass::Punct => !rules.remove_punct,
                    CharClass::Symbol => !rules.remove_symbols,
                    _ => false,
                };
                if keep {
                    out.push(c.to_string());
                }
            }
            CharClass::Hyphen | CharClass::Apostrophe => unreachable!(),
        }
    }
    flush(&mut word, rules, out);
}

fn flush(word: &mut String, rules: &TokenRules, out: &mut Vec<String>) {
    if word.is_empty() {
        return;
    }
    let numeric = word.chars().all(|c| {
        matches!(
            get_general_category(c),
            GeneralCategory::DecimalNumber | GeneralCategory::LetterNumber | GeneralCategory::OtherNumber
        )
    });
    if !(rules.remove_numbers && numeric) {
        out.push(std::mem::take(word));
    } else {
        word.clear();
    }
}
