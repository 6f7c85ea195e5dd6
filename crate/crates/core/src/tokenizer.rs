//! Line-based sentence segmentation and offset-preserving tokenization.
//!
//! A sentence is one non-blank line of the article. A token is a maximal run
//! of non-whitespace characters, with punctuation peeled off both edges as
//! single-character tokens. Every offset is an absolute character offset
//! into the article.

use std::ops::Range;

use crate::corpus::{Article, CharSpan};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub span: CharSpan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub article_id: String,
    pub span: CharSpan,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

/// Punctuation is anything that is not alphanumeric, a hyphen or an apostrophe.
pub fn is_punctuation(c: char) -> bool {
    !(c.is_alphanumeric() || c == '-' || c == '\'' || c == '\u{2019}')
}

pub fn split_sentences(article: &Article) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    let mut line_start = 0usize;
    let mut line = String::new();
    let flush = |line: &mut String, start: usize, sentences: &mut Vec<Sentence>| {
        let content = line.strip_suffix('\r').unwrap_or(line);
        if !content.trim().is_empty() {
            let len = content.chars().count();
            sentences.push(Sentence {
                article_id: article.id.clone(),
                span: CharSpan {
                    begin: start,
                    end: start + len,
                },
                tokens: tokenize(content, start),
            });
        }
        line.clear();
    };
    for (i, c) in article.text.chars().enumerate() {
        if c == '\n' {
            flush(&mut line, line_start, &mut sentences);
            line_start = i + 1;
        } else {
            line.push(c);
        }
    }
    flush(&mut line, line_start, &mut sentences);
    sentences
}

/// Non-whitespace runs of `text` as `(char_begin, chars)` relative to `offset`.
fn runs(text: &str, offset: usize) -> Vec<(usize, Vec<char>)> {
    let mut out = Vec::new();
    let mut current: Option<(usize, Vec<char>)> = None;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if let Some(run) = current.take() {
                out.push(run);
            }
        } else {
            current.get_or_insert_with(|| (offset + i, Vec::new())).1.push(c);
        }
    }
    out.extend(current);
    out
}

fn make_token(chars: &[char], begin: usize) -> Token {
    Token {
        text: chars.iter().collect(),
        span: CharSpan {
            begin,
            end: begin + chars.len(),
        },
    }
}

pub fn tokenize(text: &str, offset: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    for (begin, chars) in runs(text, offset) {
        let mut lo = 0;
        let mut hi = chars.len();
        while lo < hi && is_punctuation(chars[lo]) {
            tokens.push(make_token(&chars[lo..lo + 1], begin + lo));
            lo += 1;
        }
        let mut trailing = Vec::new();
        while hi > lo && is_punctuation(chars[hi - 1]) {
            trailing.push(make_token(&chars[hi - 1..hi], begin + hi - 1));
            hi -= 1;
        }
        if lo < hi {
            tokens.push(make_token(&chars[lo..hi], begin + lo));
        }
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}

/// Whitespace-delimited words, with absolute offsets. Used wherever a
/// "word" count is needed (context windows, length statistics).
pub fn words(text: &str, offset: usize) -> Vec<Token> {
    runs(text, offset)
        .into_iter()
        .map(|(begin, chars)| make_token(&chars, begin))
        .collect()
}

/// Indices of the tokens sharing at least one character with `span`.
/// `tokens` must be ordered and non-overlapping.
pub fn snap_span(span: CharSpan, tokens: &[Token]) -> Range<usize> {
    let start = tokens.partition_point(|t| t.span.end <= span.begin);
    let end = tokens.partition_point(|t| t.span.begin < span.end);
    if start >= end {
        start..start
    } else {
        start..end
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(tokens: &[Token]) -> Vec<(&str, usize, usize)> {
        tokens
            .iter()
            .map(|t| (t.text.as_str(), t.span.begin, t.span.end))
            .collect()
    }

    #[test]
    fn splits_on_newlines_skipping_blank_lines() {
        let a = Article::new("1", "A b.\n\nC d.");
        let s = split_sentences(&a);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].span, CharSpan { begin: 0, end: 4 });
        assert_eq!(s[1].span, CharSpan { begin: 6, end: 10 });

        let one = split_sentences(&Article::new("1", "one line"));
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].span, CharSpan { begin: 0, end: 8 });

        assert!(split_sentences(&Article::new("1", "")).is_empty());
        assert!(split_sentences(&Article::new("1", "\n  \n\t\n")).is_empty());
    }

    #[test]
    fn carriage_returns_stay_out_of_sentences() {
        let a = Article::new("1", "ab\r\ncd");
        let s = split_sentences(&a);
        assert_eq!(s[0].span, CharSpan { begin: 0, end: 2 });
        assert_eq!(s[1].span, CharSpan { begin: 4, end: 6 });
    }

    #[test]
    fn peels_punctuation() {
        assert_eq!(
            texts(&tokenize("He said, go!", 0)),
            vec![("He", 0, 2), ("said", 3, 7), (",", 7, 8), ("go", 9, 11), ("!", 11, 12)]
        );
        assert!(tokenize("", 0).is_empty());
        assert_eq!(texts(&tokenize("  a  ", 10)), vec![("a", 12, 13)]);
        assert_eq!(
            texts(&tokenize("\"well-known\"", 0)),
            vec![("\"", 0, 1), ("well-known", 1, 11), ("\"", 11, 12)]
        );
        assert_eq!(texts(&tokenize("don't...", 0))[0], ("don't", 0, 5));
        assert_eq!(tokenize("...", 0).len(), 3);
    }

    #[test]
    fn snapping() {
        let tokens = tokenize("The dictator will", 0);
        assert_eq!(snap_span(CharSpan { begin: 4, end: 12 }, &tokens), 1..2);
        assert_eq!(snap_span(CharSpan { begin: 6, end: 15 }, &tokens), 1..3);
        assert!(snap_span(CharSpan { begin: 33, end: 40 }, &tokens).is_empty());
        // whitespace between tokens only
        assert!(snap_span(CharSpan { begin: 3, end: 4 }, &tokens).is_empty());
    }

    proptest! {
        #[test]
        fn tokens_are_ordered_and_exact(text in "[a-zA-Z0-9 ,.!?'\"é\n\t-]{0,80}", offset in 0usize..50) {
            let tokens = tokenize(&text, offset);
            let chars: Vec<char> = text.chars().collect();
            for w in tokens.windows(2) {
                prop_assert!(w[0].span.end <= w[1].span.begin);
            }
            for t in &tokens {
                let slice: String = chars[t.span.begin - offset..t.span.end - offset].iter().collect();
                prop_assert_eq!(&slice, &t.text);
            }
            for (i, t) in tokens.iter().enumerate() {
                prop_assert_eq!(snap_span(t.span, &tokens), i..i + 1);
            }
            // tokens cover exactly the non-whitespace characters
            let covered: usize = tokens.iter().map(|t| t.span.len()).sum();
            prop_assert_eq!(covered, chars.iter().filter(|c| !c.is_whitespace()).count());
        }
    }
}
