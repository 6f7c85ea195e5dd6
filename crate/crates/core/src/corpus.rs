//! Article and label-file ingestion.
//!
//! Articles are plain UTF-8 files whose name carries the numeric article id
//! (`article111111111.txt`). Label files are tab-separated without a header:
//!
//! * span identification: `id \t begin \t end`
//! * technique classification: `id \t technique \t begin \t end`
//!
//! All offsets count Unicode scalar values, not bytes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Half-open character interval `[begin, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CharSpan {
    pub begin: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(begin: usize, end: usize) -> Result<Self> {
        if begin >= end {
            return Err(Error::InvalidSpan { begin, end });
        }
        Ok(CharSpan { begin, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.begin
    }

    /// Number of characters shared by both spans.
    pub fn intersection_len(&self, other: &CharSpan) -> usize {
        let lo = self.begin.max(other.begin);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.intersection_len(other) > 0
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.begin, self.end)
    }
}

/// A news article. `title` is the first line of `text`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Article {
    pub id: String,
    pub text: String,
    pub title: String,
    // byte offset of every char, plus text.len() as a sentinel
    char_bytes: Vec<usize>,
}

impl Article {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let first_line = text.split('\n').next().unwrap_or("");
        let title = first_line.strip_suffix('\r').unwrap_or(first_line).to_string();
        let mut char_bytes: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        char_bytes.push(text.len());
        Article {
            id: id.into(),
            text,
            title,
            char_bytes,
        }
    }

    /// Length of the text in characters.
    pub fn char_len(&self) -> usize {
        self.char_bytes.len() - 1
    }

    /// Slice the text by character offsets. `None` if the span is out of bounds.
    pub fn slice(&self, span: CharSpan) -> Option<&str> {
        if span.begin > span.end || span.end > self.char_len() {
            return None;
        }
        Some(&self.text[self.char_bytes[span.begin]..self.char_bytes[span.end]])
    }

    /// Byte offset of a character offset (`char_len()` maps to `text.len()`).
    pub fn byte_offset(&self, char_offset: usize) -> Option<usize> {
        self.char_bytes.get(char_offset).copied()
    }

    pub fn check_span(&self, span: CharSpan) -> Result<()> {
        if span.begin >= span.end || span.end > self.char_len() {
            return Err(Error::SpanOutOfBounds {
                article_id: self.id.clone(),
                begin: span.begin,
                end: span.end,
                len: self.char_len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnnotationKind {
    /// Span identification rows: `id begin end`.
    Si,
    /// Technique classification rows: `id technique begin end`.
    Tc,
}

impl AnnotationKind {
    fn columns(self) -> usize {
        match self {
            AnnotationKind::Si => 3,
            AnnotationKind::Tc => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpanAnnotation {
    pub article_id: String,
    pub span: CharSpan,
    pub technique: Option<String>,
}

impl SpanAnnotation {
    pub fn si(article_id: impl Into<String>, span: CharSpan) -> Self {
        SpanAnnotation {
            article_id: article_id.into(),
            span,
            technique: None,
        }
    }

    pub fn tc(article_id: impl Into<String>, technique: impl Into<String>, span: CharSpan) -> Self {
        SpanAnnotation {
            article_id: article_id.into(),
            span,
            technique: Some(technique.into()),
        }
    }
}

/// Extracts the first maximal run of ASCII digits from a file's base name.
pub fn article_id_from_path(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    let start = name.find(|c: char| c.is_ascii_digit())?;
    let digits: String = name[start..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    Some(digits)
}

pub fn load_article(path: impl AsRef<Path>) -> Result<Article> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let text = String::from_utf8(bytes).map_err(|_| Error::NotUtf8(path.to_path_buf()))?;
    let id = article_id_from_path(path).ok_or_else(|| Error::NoArticleId(path.to_path_buf()))?;
    Ok(Article::new(id, text))
}

/// Loads every `*.txt` file of a directory, ordered by file name.
pub fn load_articles_dir(dir: impl AsRef<Path>) -> Result<Vec<Article>> {
    let mut paths = list_files(dir.as_ref(), "txt")?;
    paths.sort();
    paths.iter().map(load_article).collect()
}

fn list_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let io_err = |source| Error::Io {
        path: dir.to_path_buf(),
        source,
    };
    if !dir.exists() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(extension) {
            out.push(path);
        }
    }
    Ok(out)
}

pub fn parse_annotations(tsv: &str, kind: AnnotationKind) -> Result<Vec<SpanAnnotation>> {
    let mut out = Vec::new();
    for (idx, raw) in tsv.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != kind.columns() {
            return Err(Error::parse(
                line_no,
                format!("expected {} tab-separated fields, found {}", kind.columns(), fields.len()),
            ));
        }
        let offset = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(line_no, format!("non-integer offset {s:?}")))
        };
        let (technique, begin, end) = match kind {
            AnnotationKind::Si => (None, offset(fields[1])?, offset(fields[2])?),
            AnnotationKind::Tc => (
                Some(fields[1].to_string()),
                offset(fields[2])?,
                offset(fields[3])?,
            ),
        };
        if begin >= end {
            return Err(Error::parse(line_no, format!("begin {begin} >= end {end}")));
        }
        out.push(SpanAnnotation {
            article_id: fields[0].trim().to_string(),
            span: CharSpan { begin, end },
            technique,
        });
    }
    Ok(out)
}

/// Reads annotations from a single label file, or from every `*.labels`
/// file of a directory (ordered by file name).
pub fn load_annotations(path: impl AsRef<Path>, kind: AnnotationKind) -> Result<Vec<SpanAnnotation>> {
    let path = path.as_ref();
    let files = if path.is_dir() {
        let mut files = list_files(path, "labels")?;
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(file.clone())
            } else {
                Error::Io {
                    path: file.clone(),
                    source,
                }
            }
        })?;
        out.extend(parse_annotations(&text, kind)?);
    }
    Ok(out)
}

pub fn write_annotations(annotations: &[SpanAnnotation], kind: AnnotationKind) -> Result<String> {
    let mut out = String::new();
    for (index, a) in annotations.iter().enumerate() {
        match (kind, &a.technique) {
            (AnnotationKind::Si, None) => {
                out.push_str(&format!("{}\t{}\t{}\n", a.article_id, a.span.begin, a.span.end));
            }
            (AnnotationKind::Tc, Some(t)) => {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    a.article_id, t, a.span.begin, a.span.end
                ));
            }
            (AnnotationKind::Si, Some(_)) => {
                return Err(Error::InvalidAnnotation {
                    index,
                    message: "span identification record carries a technique".into(),
                })
            }
            (AnnotationKind::Tc, None) => {
                return Err(Error::InvalidAnnotation {
                    index,
                    message: "technique classification record without technique".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Checks every annotation against the length of its article. Offsets are
/// never clipped.
pub fn validate_offsets(annotations: &[SpanAnnotation], articles: &[Article]) -> Result<()> {
    let by_id: HashMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
    for a in annotations {
        let article = by_id
            .get(a.article_id.as_str())
            .ok_or_else(|| Error::UnknownArticle(a.article_id.clone()))?;
        article.check_span(a.span)?;
    }
    Ok(())
}

/// Sorted, de-duplicated technique names with stable class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelInventory {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelInventory {
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(Error::EmptyInput("label inventory"));
        }
        let names: Vec<String> = set.into_iter().collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(LabelInventory { names, index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }
}

pub fn build_label_inventory(annotations: &[SpanAnnotation]) -> Result<LabelInventory> {
    if annotations.is_empty() {
        return Err(Error::EmptyInput("annotations"));
    }
    let mut names = Vec::with_capacity(annotations.len());
    for (index, a) in annotations.iter().enumerate() {
        match &a.technique {
            Some(t) => names.push(t.clone()),
            None => {
                return Err(Error::InvalidAnnotation {
                    index,
                    message: "annotation has no technique".into(),
                })
            }
        }
    }
    LabelInventory::from_names(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn span(b: usize, e: usize) -> CharSpan {
        CharSpan::new(b, e).unwrap()
    }

    #[test]
    fn loads_article_fields() {
        let dir = std::env::temp_dir().join(format!("spantag-corpus-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("article123.txt");
        fs::write(&p, "Hello\nWorld").unwrap();
        let a = load_article(&p).unwrap();
        assert_eq!(a.id, "123");
        assert_eq!(a.title, "Hello");
        assert_eq!(a.text, "Hello\nWorld");

        let p = dir.join("article7.txt");
        fs::write(&p, "").unwrap();
        let a = load_article(&p).unwrap();
        assert_eq!((a.id.as_str(), a.title.as_str(), a.text.as_str()), ("7", "", ""));

        let p = dir.join("noid.txt");
        fs::write(&p, "x").unwrap();
        assert!(matches!(load_article(&p), Err(Error::NoArticleId(_))));

        let p = dir.join("article9.txt");
        fs::write(&p, [0xff, 0xfe, 0x00]).unwrap();
        assert!(matches!(load_article(&p), Err(Error::NotUtf8(_))));

        assert!(matches!(
            load_article(dir.join("article404.txt")),
            Err(Error::MissingFile(_))
        ));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn id_is_first_digit_run() {
        assert_eq!(
            article_id_from_path(Path::new("/x/1/article111.task1-SI.labels")).as_deref(),
            Some("111")
        );
    }

    #[test]
    fn offsets_count_chars() {
        let a = Article::new("1", "héllo wörld");
        assert_eq!(a.char_len(), 11);
        assert_eq!(a.slice(span(6, 11)), Some("wörld"));
        assert_eq!(a.slice(span(6, 12)), None);
    }

    #[test]
    fn parses_si_and_tc_rows() {
        let si = parse_annotations("111\t34\t40", AnnotationKind::Si).unwrap();
        assert_eq!(si, vec![SpanAnnotation::si("111", span(34, 40))]);
        let tc = parse_annotations("111\tLoaded_Language\t34\t40\n", AnnotationKind::Tc).unwrap();
        assert_eq!(tc, vec![SpanAnnotation::tc("111", "Loaded_Language", span(34, 40))]);
    }

    #[test]
    fn duplicate_fragments_stay_distinct() {
        let text = "1\tDoubt\t0\t5\n1\tSlogans\t0\t5\n";
        let tc = parse_annotations(text, AnnotationKind::Tc).unwrap();
        assert_eq!(tc.len(), 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad_cols = parse_annotations("1\t2\t3\n1\t2\n", AnnotationKind::Si);
        assert!(matches!(bad_cols, Err(Error::Parse { line: 2, .. })));
        let bad_int = parse_annotations("1\tx\t3", AnnotationKind::Si);
        assert!(matches!(bad_int, Err(Error::Parse { line: 1, .. })));
        let reversed = parse_annotations("1\t5\t5", AnnotationKind::Si);
        assert!(matches!(reversed, Err(Error::Parse { line: 1, .. })));
        let tc_as_si = parse_annotations("1\tDoubt\t0\t5", AnnotationKind::Si);
        assert!(tc_as_si.is_err());
    }

    #[test]
    fn writes_rows() {
        assert_eq!(write_annotations(&[], AnnotationKind::Si).unwrap(), "");
        let one = [SpanAnnotation::si("9", span(0, 5))];
        assert_eq!(write_annotations(&one, AnnotationKind::Si).unwrap(), "9\t0\t5\n");
        assert!(write_annotations(&one, AnnotationKind::Tc).is_err());
        let tc = [SpanAnnotation::tc("9", "Doubt", span(0, 5))];
        assert!(write_annotations(&tc, AnnotationKind::Si).is_err());
    }

    #[test]
    fn inventory_is_sorted_and_deduplicated() {
        let anns = vec![
            SpanAnnotation::tc("1", "B", span(0, 1)),
            SpanAnnotation::tc("1", "A", span(0, 1)),
            SpanAnnotation::tc("1", "A", span(1, 2)),
        ];
        let inv = build_label_inventory(&anns).unwrap();
        assert_eq!(inv.names(), ["A", "B"]);
        assert_eq!(inv.index_of("A"), Some(0));
        assert_eq!(inv.index_of("B"), Some(1));

        let single = vec![SpanAnnotation::tc("1", "A", span(0, 1)); 3];
        assert_eq!(build_label_inventory(&single).unwrap().len(), 1);
        assert!(build_label_inventory(&[]).is_err());
    }

    #[test]
    fn offsets_validated_against_article() {
        let articles = [Article::new("1", "abcdef")];
        assert!(validate_offsets(&[SpanAnnotation::si("1", span(0, 6))], &articles).is_ok());
        assert!(matches!(
            validate_offsets(&[SpanAnnotation::si("1", span(2, 7))], &articles),
            Err(Error::SpanOutOfBounds { .. })
        ));
        assert!(matches!(
            validate_offsets(&[SpanAnnotation::si("2", span(0, 1))], &articles),
            Err(Error::UnknownArticle(_))
        ));
    }

    fn arb_annotation(kind: AnnotationKind) -> impl Strategy<Value = SpanAnnotation> {
        let technique = match kind {
            AnnotationKind::Si => Just(None).boxed(),
            AnnotationKind::Tc => "[A-Za-z_,-]{1,20}".prop_map(Some).boxed(),
        };
        ("[0-9]{1,9}", 0usize..10_000, 1usize..500, technique).prop_map(|(id, b, len, t)| {
            SpanAnnotation {
                article_id: id,
                span: CharSpan { begin: b, end: b + len },
                technique: t,
            }
        })
    }

    proptest! {
        #[test]
        fn si_write_parse_roundtrip(anns in prop::collection::vec(arb_annotation(AnnotationKind::Si), 0..20)) {
            let text = write_annotations(&anns, AnnotationKind::Si).unwrap();
            let back = parse_annotations(&text, AnnotationKind::Si).unwrap();
            prop_assert_eq!(&back, &anns);
            prop_assert_eq!(write_annotations(&back, AnnotationKind::Si).unwrap(), text);
        }

        #[test]
        fn tc_write_parse_roundtrip(anns in prop::collection::vec(arb_annotation(AnnotationKind::Tc), 0..20)) {
            let text = write_annotations(&anns, AnnotationKind::Tc).unwrap();
            let back = parse_annotations(&text, AnnotationKind::Tc).unwrap();
            prop_assert_eq!(&back, &anns);
            prop_assert_eq!(write_annotations(&back, AnnotationKind::Tc).unwrap(), text);
        }
    }
}
