//! Fragment/context pairs for technique classification.
//!
//! Sentence context grows outward from the fragment one whole word at a
//! time, alternating left and right and starting on the left, until both
//! sides reach the edge of the sentence window or the word cap is hit.
//! The window is every sentence the fragment overlaps.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{Article, CharSpan, SpanAnnotation};
use crate::error::{Error, Result};
use crate::tokenizer::{split_sentences, words, Token};

pub const DEFAULT_CONTEXT_CAP: usize = 130;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ContextKind {
    Sentence,
    Title,
    None,
}

impl ContextKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextKind::Sentence => "SENTENCE",
            ContextKind::Title => "TITLE",
            ContextKind::None => "NONE",
        }
    }
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SENTENCE" => Ok(ContextKind::Sentence),
            "TITLE" => Ok(ContextKind::Title),
            "NONE" => Ok(ContextKind::None),
            _ => Err(Error::InvalidArgument(format!("unknown context kind {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContextConfig {
    /// Maximum number of words in a sentence context.
    pub cap: usize,
    /// Whether the fragment's own words count toward `cap`.
    pub cap_includes_fragment: bool,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            cap: DEFAULT_CONTEXT_CAP,
            cap_includes_fragment: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Context {
    pub kind: ContextKind,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextPair {
    pub article_id: String,
    pub span: CharSpan,
    pub technique: Option<String>,
    pub context_kind: ContextKind,
    pub fragment_text: String,
    pub context_text: String,
}

pub fn extract_sentence_context(article: &Article, span: CharSpan, config: &ContextConfig) -> Result<Context> {
    article.check_span(span)?;
    let sentences = split_sentences(article);
    let window: Vec<&crate::tokenizer::Sentence> =
        sentences.iter().filter(|s| s.span.overlaps(&span)).collect();

    let window_words: Vec<Token> = if window.is_empty() {
        // span lies entirely in blank lines; only its own characters are available
        let text = article.slice(span).expect("span checked");
        words(text, span.begin)
    } else {
        window
            .iter()
            .flat_map(|s| {
                let text = article.slice(s.span).expect("sentence inside article");
                words(text, s.span.begin)
            })
            .collect()
    };

    let first_frag = window_words.partition_point(|w| w.span.end <= span.begin);
    let end_frag = window_words.partition_point(|w| w.span.begin < span.end).max(first_frag);
    let fragment_words = end_frag - first_frag;

    let (lo, hi) = if config.cap_includes_fragment && fragment_words >= config.cap {
        (first_frag, first_frag + config.cap)
    } else {
        let mut budget = if config.cap_includes_fragment {
            config.cap - fragment_words
        } else {
            config.cap
        };
        let (mut lo, mut hi) = (first_frag, end_frag);
        let mut take_left = true;
        while budget > 0 && (lo > 0 || hi < window_words.len()) {
            if take_left && lo > 0 {
                lo -= 1;
                budget -= 1;
            } else if !take_left && hi < window_words.len() {
                hi += 1;
                budget -= 1;
            }
            take_left = !take_left;
        }
        (lo, hi)
    };

    let truncated = config.cap_includes_fragment && fragment_words > config.cap;
    let mut begin = window_words.get(lo).map_or(span.begin, |w| w.span.begin);
    let mut end = if hi > lo { window_words[hi - 1].span.end } else { span.end };
    if !truncated {
        begin = begin.min(span.begin);
        end = end.max(span.end);
    }
    let text = article
        .slice(CharSpan { begin, end })
        .expect("context inside article")
        .to_string();
    Ok(Context {
        kind: ContextKind::Sentence,
        text,
    })
}

pub fn extract_title_context(article: &Article) -> Context {
    Context {
        kind: ContextKind::Title,
        text: article.title.clone(),
    }
}

pub fn build_pair(
    article: &Article,
    annotation: &SpanAnnotation,
    kind: ContextKind,
    config: &ContextConfig,
) -> Result<ContextPair> {
    article.check_span(annotation.span)?;
    let context_text = match kind {
        ContextKind::Sentence => extract_sentence_context(article, annotation.span, config)?.text,
        ContextKind::Title => extract_title_context(article).text,
        ContextKind::None => String::new(),
    };
    Ok(ContextPair {
        article_id: article.id.clone(),
        span: annotation.span,
        technique: annotation.technique.clone(),
        context_kind: kind,
        fragment_text: article.slice(annotation.span).expect("span checked").to_string(),
        context_text,
    })
}

/// One pair per annotation, in input order.
pub fn build_tc_dataset(
    articles: &[Article],
    annotations: &[SpanAnnotation],
    kind: ContextKind,
    config: &ContextConfig,
) -> Result<Vec<ContextPair>> {
    let by_id: HashMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
    annotations
        .iter()
        .map(|a| {
            let article = by_id
                .get(a.article_id.as_str())
                .ok_or_else(|| Error::UnknownArticle(a.article_id.clone()))?;
            build_pair(article, a, kind, config)
        })
        .collect()
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(Error::parse(line, format!("bad escape \\{}", other.map(String::from).unwrap_or_default()))),
        }
    }
    Ok(out)
}

/// `article_id, begin, end, technique|-, kind, fragment, context`, one
/// pair per line, with backslash escapes for tabs and newlines.
pub fn write_pairs(pairs: &[ContextPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            p.article_id,
            p.span.begin,
            p.span.end,
            p.technique.as_deref().unwrap_or("-"),
            p.context_kind,
            escape(&p.fragment_text),
            escape(&p.context_text)
        ));
    }
    out
}

pub fn parse_pairs(tsv: &str) -> Result<Vec<ContextPair>> {
    let mut out = Vec::new();
    for (idx, line) in tsv.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(Error::parse(line_no, format!("expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(line_no, format!("non-integer offset {s:?}")))
        };
        let span = CharSpan::new(num(f[1])?, num(f[2])?).map_err(|e| Error::parse(line_no, e.to_string()))?;
        out.push(ContextPair {
            article_id: f[0].to_string(),
            span,
            technique: (f[3] != "-").then(|| f[3].to_string()),
            context_kind: f[4].parse().map_err(|e: Error| Error::parse(line_no, e.to_string()))?,
            fragment_text: unescape(f[5], line_no)?,
            context_text: unescape(f[6], line_no)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn numbered_words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    fn span_of_words(text: &str, first: usize, last_inclusive: usize) -> CharSpan {
        let ws = words(text, 0);
        CharSpan {
            begin: ws[first].span.begin,
            end: ws[last_inclusive].span.end,
        }
    }

    fn word_count(s: &str) -> usize {
        s.split_whitespace().count()
    }

    #[test]
    fn short_sentence_is_kept_whole() {
        let sentence = numbered_words(12);
        let text = format!("Title here\n{sentence}\nAnother line.");
        let a = Article::new("1", text.clone());
        let ws = words(&text, 0);
        let span = CharSpan {
            begin: ws[5].span.begin,
            end: ws[6].span.end,
        };
        let c = extract_sentence_context(&a, span, &ContextConfig::default()).unwrap();
        assert_eq!(c.text, sentence);
    }

    #[test]
    fn long_sentence_is_capped_symmetrically() {
        let text = numbered_words(200);
        let a = Article::new("1", text.clone());
        let span = span_of_words(&text, 100, 101);
        let c = extract_sentence_context(&a, span, &ContextConfig::default()).unwrap();
        let got: Vec<&str> = c.text.split_whitespace().collect();
        assert_eq!(got.len(), 130);
        assert_eq!(got[0], "w36");
        assert_eq!(*got.last().unwrap(), "w165");
    }

    #[test]
    fn budget_flows_to_the_open_side() {
        let text = numbered_words(200);
        let a = Article::new("1", text.clone());
        let span = span_of_words(&text, 3, 3);
        let c = extract_sentence_context(&a, span, &ContextConfig::default()).unwrap();
        let got: Vec<&str> = c.text.split_whitespace().collect();
        assert_eq!(got.len(), 130);
        assert_eq!(got[0], "w0");
        assert_eq!(*got.last().unwrap(), "w129");
    }

    #[test]
    fn fragment_across_sentences_uses_both() {
        let text = "Intro line.\nFirst sentence ends here.\nSecond one follows now.\nTail.";
        let a = Article::new("1", text);
        let begin = text.find("here").unwrap();
        let end = text.find("one").unwrap() + 3;
        let span = CharSpan { begin, end };
        let c = extract_sentence_context(&a, span, &ContextConfig::default()).unwrap();
        assert_eq!(c.text, "First sentence ends here.\nSecond one follows now.");
    }

    #[test]
    fn overlong_fragment_is_truncated_to_cap() {
        let text = numbered_words(50);
        let a = Article::new("1", text.clone());
        let cfg = ContextConfig {
            cap: 10,
            cap_includes_fragment: true,
        };
        let span = span_of_words(&text, 5, 30);
        let c = extract_sentence_context(&a, span, &cfg).unwrap();
        assert_eq!(c.text, (5..15).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "));
    }

    #[test]
    fn cap_can_exclude_fragment() {
        let text = numbered_words(50);
        let a = Article::new("1", text.clone());
        let cfg = ContextConfig {
            cap: 4,
            cap_includes_fragment: false,
        };
        let span = span_of_words(&text, 20, 22);
        let c = extract_sentence_context(&a, span, &cfg).unwrap();
        assert_eq!(c.text, "w18 w19 w20 w21 w22 w23 w24");
    }

    #[test]
    fn title_context() {
        let a = Article::new("1", "Hello\nbody text");
        assert_eq!(extract_title_context(&a).text, "Hello");
        assert_eq!(extract_title_context(&Article::new("2", "")).text, "");
        assert!(!extract_title_context(&a).text.contains('\n'));
    }

    #[test]
    fn dataset_keeps_duplicates_and_order() {
        let a = Article::new("5", "Title\nThey are traitors and liars.");
        let anns = vec![
            SpanAnnotation::tc("5", "Name_Calling,Labeling", CharSpan { begin: 15, end: 23 }),
            SpanAnnotation::tc("5", "Loaded_Language", CharSpan { begin: 15, end: 23 }),
        ];
        let pairs = build_tc_dataset(&[a], &anns, ContextKind::Sentence, &ContextConfig::default()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].fragment_text, "traitors");
        assert_eq!(pairs[1].technique.as_deref(), Some("Loaded_Language"));
        assert_eq!(pairs[0].context_text, "They are traitors and liars.");

        let missing = vec![SpanAnnotation::tc("6", "Doubt", CharSpan { begin: 0, end: 1 })];
        assert!(matches!(
            build_tc_dataset(&[], &missing, ContextKind::Title, &ContextConfig::default()),
            Err(Error::UnknownArticle(_))
        ));
    }

    #[test]
    fn out_of_bounds_span_is_an_error() {
        let a = Article::new("1", "short");
        assert!(extract_sentence_context(&a, CharSpan { begin: 2, end: 9 }, &ContextConfig::default()).is_err());
    }

    #[test]
    fn pair_tsv_roundtrip_with_escapes() {
        let pairs = vec![ContextPair {
            article_id: "1".into(),
            span: CharSpan { begin: 0, end: 3 },
            technique: None,
            context_kind: ContextKind::Sentence,
            fragment_text: "a\tb".into(),
            context_text: "x\\n\ny".into(),
        }];
        let tsv = write_pairs(&pairs);
        assert_eq!(tsv.lines().count(), 1);
        assert!(tsv.contains("\t-\tSENTENCE\t"));
        assert_eq!(parse_pairs(&tsv).unwrap(), pairs);
    }

    proptest! {
        #[test]
        fn context_respects_cap_and_contains_fragment(
            lines in prop::collection::vec(1usize..300, 1..4),
            cap in 1usize..140,
            seed in 0usize..10_000,
        ) {
            let text = lines.iter().map(|&n| numbered_words(n)).collect::<Vec<_>>().join("\n");
            let a = Article::new("1", text.clone());
            let ws = words(&text, 0);
            let i = seed % ws.len();
            let j = (i + seed / 7 % 5).min(ws.len() - 1);
            let span = CharSpan { begin: ws[i].span.begin, end: ws[j].span.end };
            let frag = a.slice(span).unwrap();
            let cfg = ContextConfig { cap, cap_includes_fragment: true };
            let c = extract_sentence_context(&a, span, &cfg).unwrap();
            prop_assert!(word_count(&c.text) <= cap);
            if word_count(frag) <= cap {
                prop_assert!(c.text.contains(frag));
            }
        }
    }
}
