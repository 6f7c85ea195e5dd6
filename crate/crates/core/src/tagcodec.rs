//! Tagging-scheme codecs: character spans to per-token labels and back.
//!
//! Decoding follows the positivity rule: any token tagged P, B, I, E or S is
//! part of a propaganda span and maximal runs of positive tokens are merged.
//! Decoding never needs a structurally valid sequence.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::corpus::{Article, CharSpan};
use crate::error::{Error, Result};
use crate::tokenizer::{snap_span, split_sentences, Sentence, Token};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    O,
    P,
    B,
    I,
    E,
    S,
}

impl Tag {
    pub fn is_positive(self) -> bool {
        self != Tag::O
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::O => "O",
            Tag::P => "P",
            Tag::B => "B",
            Tag::I => "I",
            Tag::E => "E",
            Tag::S => "S",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "O" => Tag::O,
            "P" => Tag::P,
            "B" => Tag::B,
            "I" => Tag::I,
            "E" => Tag::E,
            "S" => Tag::S,
            _ => return Err(Error::UnknownTag(s.to_string())),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaggingScheme {
    Pnp,
    Bio,
    Bioe,
    Bioes,
}

impl TaggingScheme {
    pub const ALL: [TaggingScheme; 4] = [
        TaggingScheme::Pnp,
        TaggingScheme::Bio,
        TaggingScheme::Bioe,
        TaggingScheme::Bioes,
    ];

    /// The label alphabet, `O` first and the rest in lexicographic order.
    /// Class indices of the tagger follow this order, so an argmax that
    /// prefers the lowest index breaks ties toward `O`.
    pub fn labels(self) -> &'static [Tag] {
        match self {
            TaggingScheme::Pnp => &[Tag::O, Tag::P],
            TaggingScheme::Bio => &[Tag::O, Tag::B, Tag::I],
            TaggingScheme::Bioe => &[Tag::O, Tag::B, Tag::E, Tag::I],
            TaggingScheme::Bioes => &[Tag::O, Tag::B, Tag::E, Tag::I, Tag::S],
        }
    }

    pub fn contains(self, tag: Tag) -> bool {
        self.labels().contains(&tag)
    }

    pub fn label_index(self, tag: Tag) -> Option<usize> {
        self.labels().iter().position(|&t| t == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaggingScheme::Pnp => "PNP",
            TaggingScheme::Bio => "BIO",
            TaggingScheme::Bioe => "BIOE",
            TaggingScheme::Bioes => "BIOES",
        }
    }

    /// Tags for one positive run of `n >= 1` tokens.
    fn run_tags(self, n: usize) -> impl Iterator<Item = Tag> {
        (0..n).map(move |i| {
            let first = i == 0;
            let last = i + 1 == n;
            match self {
                TaggingScheme::Pnp => Tag::P,
                TaggingScheme::Bio => {
                    if first {
                        Tag::B
                    } else {
                        Tag::I
                    }
                }
                // a single-token run is a lone B
                TaggingScheme::Bioe => match (first, last) {
                    (true, _) => Tag::B,
                    (false, true) => Tag::E,
                    (false, false) => Tag::I,
                },
                TaggingScheme::Bioes => match (first, last) {
                    (true, true) => Tag::S,
                    (true, false) => Tag::B,
                    (false, true) => Tag::E,
                    (false, false) => Tag::I,
                },
            }
        })
    }
}

impl fmt::Display for TaggingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaggingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('/', "").as_str() {
            "PNP" => Ok(TaggingScheme::Pnp),
            "BIO" => Ok(TaggingScheme::Bio),
            "BIOE" => Ok(TaggingScheme::Bioe),
            "BIOES" => Ok(TaggingScheme::Bioes),
            _ => Err(Error::UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSequence {
    scheme: TaggingScheme,
    labels: Vec<Tag>,
}

impl TagSequence {
    pub fn new(scheme: TaggingScheme, labels: Vec<Tag>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|t| !scheme.contains(**t)) {
            return Err(Error::LabelNotInScheme {
                label: bad.to_string(),
                scheme: scheme.to_string(),
            });
        }
        Ok(TagSequence { scheme, labels })
    }

    /// Parses space-separated labels, e.g. `"O B I E O"`.
    pub fn parse(scheme: TaggingScheme, line: &str) -> Result<Self> {
        let labels = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<Tag>>>()?;
        TagSequence::new(scheme, labels)
    }

    pub fn scheme(&self) -> TaggingScheme {
        self.scheme
    }

    pub fn labels(&self) -> &[Tag] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Maximal runs of positive tokens.
    pub fn positive_runs(&self) -> Vec<Range<usize>> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, tag) in self.labels.iter().enumerate() {
            match (tag.is_positive(), start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push(s..i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push(s..self.labels.len());
        }
        runs
    }
}

impl fmt::Display for TagSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t.as_str())?;
        }
        Ok(())
    }
}

/// Encodes token ranges. Overlapping or touching ranges form one run.
pub fn encode_runs(scheme: TaggingScheme, len: usize, ranges: &[Range<usize>]) -> Result<TagSequence> {
    let mut positive = vec![false; len];
    for r in ranges {
        if r.start > r.end || r.end > len {
            return Err(Error::RangeOutOfBounds {
                start: r.start,
                end: r.end,
                len,
            });
        }
        positive[r.clone()].iter_mut().for_each(|p| *p = true);
    }
    let mut labels = Vec::with_capacity(len);
    let mut i = 0;
    while i < len {
        if positive[i] {
            let start = i;
            while i < len && positive[i] {
                i += 1;
            }
            labels.extend(scheme.run_tags(i - start));
        } else {
            labels.push(Tag::O);
            i += 1;
        }
    }
    Ok(TagSequence { scheme, labels })
}

/// Snaps each character span to the tokens it overlaps and encodes the union.
pub fn encode(scheme: TaggingScheme, tokens: &[Token], spans: &[CharSpan]) -> Result<TagSequence> {
    let ranges: Vec<Range<usize>> = spans.iter().map(|s| snap_span(*s, tokens)).collect();
    encode_runs(scheme, tokens.len(), &ranges)
}

pub fn decode(seq: &TagSequence, tokens: &[Token]) -> Result<Vec<CharSpan>> {
    if seq.len() != tokens.len() {
        return Err(Error::LengthMismatch {
            expected: tokens.len(),
            actual: seq.len(),
        });
    }
    if let Some(bad) = seq.labels.iter().find(|t| !seq.scheme.contains(**t)) {
        return Err(Error::LabelNotInScheme {
            label: bad.to_string(),
            scheme: seq.scheme.to_string(),
        });
    }
    Ok(seq
        .positive_runs()
        .into_iter()
        .map(|r| CharSpan {
            begin: tokens[r.start].span.begin,
            end: tokens[r.end - 1].span.end,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// I or E without a preceding B or I.
    OrphanInside,
    /// A multi-token run that reaches O, a new run or the end without E.
    UnterminatedRun,
    /// S directly next to a B/I/E run.
    AdjacentSingleton,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::OrphanInside => "I/E without preceding B",
            ViolationKind::UnterminatedRun => "unterminated B-run",
            ViolationKind::AdjacentSingleton => "S adjacent to a B/I/E run",
        };
        write!(f, "{what} at index {}", self.index)
    }
}

pub fn validate(seq: &TagSequence) -> Vec<Violation> {
    use Tag::*;
    let scheme = seq.scheme;
    let labels = &seq.labels;
    let mut out = Vec::new();
    if scheme == TaggingScheme::Pnp {
        return out;
    }
    let needs_end = matches!(scheme, TaggingScheme::Bioe | TaggingScheme::Bioes);
    for (i, &tag) in labels.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| labels[p]);
        let next = labels.get(i + 1).copied();
        let continues = matches!(next, Some(I) | Some(E));
        if matches!(tag, I | E) && !matches!(prev, Some(B) | Some(I)) {
            out.push(Violation {
                index: i,
                kind: ViolationKind::OrphanInside,
            });
        }
        if needs_end && !continues {
            // BIOE allows a lone B as a one-token run; BIOES uses S for that.
            let unterminated = match tag {
                I => true,
                B => scheme == TaggingScheme::Bioes,
                _ => false,
            };
            if unterminated {
                out.push(Violation {
                    index: i,
                    kind: ViolationKind::UnterminatedRun,
                });
            }
        }
        if tag == S && (matches!(prev, Some(B | I | E)) || matches!(next, Some(B | I | E))) {
            out.push(Violation {
                index: i,
                kind: ViolationKind::AdjacentSingleton,
            });
        }
    }
    out
}

/// Re-encodes the decoded runs of `seq` under another scheme.
pub fn convert(seq: &TagSequence, target: TaggingScheme) -> TagSequence {
    let runs = seq.positive_runs();
    encode_runs(target, seq.len(), &runs).expect("runs come from the sequence itself")
}

/// Splits an article into sentences and encodes the spans falling in each.
pub fn tag_article(
    article: &Article,
    spans: &[CharSpan],
    scheme: TaggingScheme,
) -> Vec<(Sentence, TagSequence)> {
    split_sentences(article)
        .into_iter()
        .map(|sentence| {
            let local: Vec<CharSpan> = spans
                .iter()
                .filter(|s| s.overlaps(&sentence.span))
                .copied()
                .collect();
            let tags = encode(scheme, &sentence.tokens, &local).expect("snapped ranges are in bounds");
            (sentence, tags)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::tokenize;
    use proptest::prelude::*;

    fn seq(scheme: TaggingScheme, s: &str) -> TagSequence {
        TagSequence::parse(scheme, s).unwrap()
    }

    #[test]
    fn encodes_each_scheme() {
        let cases = [
            (TaggingScheme::Bioe, 3..6, "O O O B I E"),
            (TaggingScheme::Bioes, 1..2, "O S O O O O"),
            (TaggingScheme::Pnp, 3..6, "O O O P P P"),
            (TaggingScheme::Bio, 3..6, "O O O B I I"),
            (TaggingScheme::Bioe, 1..2, "O B O O O O"),
            (TaggingScheme::Bioe, 1..3, "O B E O O O"),
        ];
        for (scheme, run, expected) in cases {
            let got = encode_runs(scheme, 6, &[run]).unwrap();
            assert_eq!(got.to_string(), expected, "{scheme}");
        }
    }

    #[test]
    fn encode_rejects_out_of_range() {
        assert!(matches!(
            encode_runs(TaggingScheme::Bio, 3, std::slice::from_ref(&(2..4))),
            Err(Error::RangeOutOfBounds { .. })
        ));
    }

    #[test]
    fn touching_runs_merge() {
        let got = encode_runs(TaggingScheme::Bioes, 5, &[0..2, 2..3]).unwrap();
        assert_eq!(got.to_string(), "B I E O O");
    }

    #[test]
    fn decodes_by_positivity() {
        let tokens = tokenize("The dictator will destroy us all", 0);
        let s = decode(&seq(TaggingScheme::Bioe, "O B O O O O"), &tokens).unwrap();
        assert_eq!(s, vec![CharSpan { begin: 4, end: 12 }]);
        let s = decode(&seq(TaggingScheme::Bioe, "O I E O O O"), &tokens).unwrap();
        assert_eq!(s, vec![CharSpan { begin: 4, end: 17 }]);
        let s = decode(&seq(TaggingScheme::Bioe, "O O O O O O"), &tokens).unwrap();
        assert!(s.is_empty());
        assert!(decode(&seq(TaggingScheme::Bioe, "O O"), &tokens).is_err());
    }

    #[test]
    fn labels_outside_scheme_are_rejected() {
        assert!(matches!(
            TagSequence::parse(TaggingScheme::Bio, "O S"),
            Err(Error::LabelNotInScheme { .. })
        ));
        assert!(matches!(
            TagSequence::parse(TaggingScheme::Bio, "O X"),
            Err(Error::UnknownTag(_))
        ));
    }

    #[test]
    fn validation() {
        assert!(validate(&seq(TaggingScheme::Bioe, "O B I E O")).is_empty());
        assert_eq!(
            validate(&seq(TaggingScheme::Bioe, "O I E O O")),
            vec![Violation {
                index: 1,
                kind: ViolationKind::OrphanInside
            }]
        );
        assert_eq!(
            validate(&seq(TaggingScheme::Bioe, "O B I O O")),
            vec![Violation {
                index: 2,
                kind: ViolationKind::UnterminatedRun
            }]
        );
        assert!(validate(&seq(TaggingScheme::Bioe, "O B O")).is_empty());
        assert_eq!(
            validate(&seq(TaggingScheme::Bioes, "O B O")),
            vec![Violation {
                index: 1,
                kind: ViolationKind::UnterminatedRun
            }]
        );
        assert_eq!(
            validate(&seq(TaggingScheme::Bioes, "B E S")),
            vec![Violation {
                index: 2,
                kind: ViolationKind::AdjacentSingleton
            }]
        );
        assert!(validate(&seq(TaggingScheme::Bio, "B I I O B")).is_empty());
        assert_eq!(validate(&seq(TaggingScheme::Bio, "O I")).len(), 1);
        assert!(validate(&seq(TaggingScheme::Pnp, "P O P")).is_empty());
    }

    #[test]
    fn conversions() {
        let c = convert(&seq(TaggingScheme::Pnp, "O P P P O"), TaggingScheme::Bioe);
        assert_eq!(c.to_string(), "O B I E O");
        let c = convert(&seq(TaggingScheme::Bioe, "O B E O O"), TaggingScheme::Bioes);
        assert_eq!(c.to_string(), "O B E O O");
        let c = convert(&seq(TaggingScheme::Bioe, "O B O O O"), TaggingScheme::Bioes);
        assert_eq!(c.to_string(), "O S O O O");
        let c = convert(&seq(TaggingScheme::Pnp, "O P P P O"), TaggingScheme::Bioes);
        assert_eq!(c.to_string(), "O B I E O");
    }

    #[test]
    fn tags_whole_articles() {
        let a = Article::new("1", "Title line\nThe dictator will destroy us all.");
        let spans = [CharSpan { begin: 15, end: 23 }, CharSpan { begin: 29, end: 43 }];
        let tagged = tag_article(&a, &spans, TaggingScheme::Bioe);
        assert_eq!(tagged.len(), 2);
        assert_eq!(tagged[0].1.to_string(), "O O");
        assert_eq!(tagged[1].1.to_string(), "O B O B I E O");
    }

    #[test]
    fn scheme_names_parse() {
        for s in TaggingScheme::ALL {
            assert_eq!(s.name().parse::<TaggingScheme>().unwrap(), s);
        }
        assert_eq!("P/NP".parse::<TaggingScheme>().unwrap(), TaggingScheme::Pnp);
        assert!("BILOU".parse::<TaggingScheme>().is_err());
    }

    fn arb_sequence() -> impl Strategy<Value = TagSequence> {
        (0usize..4).prop_flat_map(|k| {
            let scheme = TaggingScheme::ALL[k];
            let alphabet = scheme.labels().to_vec();
            prop::collection::vec(prop::sample::select(alphabet), 0..30)
                .prop_map(move |labels| TagSequence::new(scheme, labels).unwrap())
        })
    }

    fn arb_ranges() -> impl Strategy<Value = (usize, Vec<Range<usize>>)> {
        (1usize..30).prop_flat_map(|len| {
            let range = (0..len).prop_flat_map(move |s| (Just(s), s + 1..=len)).prop_map(|(s, e)| s..e);
            (Just(len), prop::collection::vec(range, 0..5))
        })
    }

    proptest! {
        #[test]
        fn encoding_is_always_valid((len, ranges) in arb_ranges()) {
            for scheme in TaggingScheme::ALL {
                let s = encode_runs(scheme, len, &ranges).unwrap();
                prop_assert!(validate(&s).is_empty(), "{} {}", scheme, s);
            }
        }

        #[test]
        fn runs_survive_every_conversion((len, ranges) in arb_ranges()) {
            let base = encode_runs(TaggingScheme::Pnp, len, &ranges).unwrap();
            for a in TaggingScheme::ALL {
                for b in TaggingScheme::ALL {
                    let back = convert(&convert(&base, a), b);
                    prop_assert_eq!(back.positive_runs(), base.positive_runs());
                }
            }
        }

        #[test]
        fn decode_is_total_and_sorted(s in arb_sequence()) {
            let text = vec!["w"; s.len()].join(" ");
            let tokens = tokenize(&text, 0);
            let spans = decode(&s, &tokens).unwrap();
            for w in spans.windows(2) {
                prop_assert!(w[0].end < w[1].begin);
            }
        }
    }
}
