//! Dataset statistics: class counts and span-length distributions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::corpus::{Article, CharSpan, SpanAnnotation};
use crate::error::{Error, Result};
use crate::tokenizer::words;

/// Techniques whose span lengths follow the peaky distribution.
pub const CATEGORY_ONE: [&str; 7] = [
    "Loaded_Language",
    "Name_Calling,Labeling",
    "Repetition",
    "Slogans",
    "Thought-terminating_Cliches",
    "Exaggeration,Minimisation",
    "Flag-Waving",
];

/// The fourteen techniques of the shared-task inventory.
pub const OFFICIAL_TECHNIQUES: [&str; 14] = [
    "Appeal_to_Authority",
    "Appeal_to_fear-prejudice",
    "Bandwagon,Reductio_ad_hitlerum",
    "Black-and-White_Fallacy",
    "Causal_Oversimplification",
    "Doubt",
    "Exaggeration,Minimisation",
    "Flag-Waving",
    "Loaded_Language",
    "Name_Calling,Labeling",
    "Repetition",
    "Slogans",
    "Thought-terminating_Cliches",
    "Whataboutism,Straw_Men,Red_Herring",
];

pub fn category_of(technique: &str) -> u8 {
    if CATEGORY_ONE.contains(&technique) {
        1
    } else {
        2
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryMap {
    map: BTreeMap<String, u8>,
}

impl CategoryMap {
    pub fn for_techniques<'a, I: IntoIterator<Item = &'a str>>(techniques: I) -> Self {
        CategoryMap {
            map: techniques
                .into_iter()
                .map(|t| (t.to_string(), category_of(t)))
                .collect(),
        }
    }

    pub fn get(&self, technique: &str) -> Option<u8> {
        self.map.get(technique).copied()
    }

    /// Number of techniques in category 1 and category 2.
    pub fn sizes(&self) -> (usize, usize) {
        let one = self.map.values().filter(|&&c| c == 1).count();
        (one, self.map.len() - one)
    }
}

/// Technique counts, most frequent first (ties by name).
pub fn class_histogram(annotations: &[SpanAnnotation]) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for a in annotations {
        if let Some(t) = &a.technique {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LengthUnit {
    Chars,
    Words,
}

impl LengthUnit {
    pub fn default_bin_width(self) -> usize {
        match self {
            LengthUnit::Chars => 10,
            LengthUnit::Words => 2,
        }
    }
}

impl fmt::Display for LengthUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LengthUnit::Chars => "chars",
            LengthUnit::Words => "words",
        })
    }
}

impl FromStr for LengthUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chars" => Ok(LengthUnit::Chars),
            "words" => Ok(LengthUnit::Words),
            _ => Err(Error::InvalidArgument(format!("unknown length unit {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grouping {
    All,
    Technique,
    Category,
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::All => "all",
            Grouping::Technique => "technique",
            Grouping::Category => "category",
        })
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Grouping::All),
            "technique" => Ok(Grouping::Technique),
            "category" => Ok(Grouping::Category),
            _ => Err(Error::InvalidArgument(format!("unknown grouping {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LengthHistogram {
    pub group: String,
    pub bin_width: usize,
    /// Bin index (`length / bin_width`) to count.
    pub bins: BTreeMap<usize, usize>,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

impl LengthHistogram {
    pub fn from_lengths(group: impl Into<String>, lengths: &[usize], bin_width: usize) -> Self {
        let mut bins = BTreeMap::new();
        for &l in lengths {
            *bins.entry(l / bin_width).or_default() += 1;
        }
        let mut sorted = lengths.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = match n {
            0 => 0.0,
            _ if n % 2 == 1 => sorted[n / 2] as f64,
            _ => (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0,
        };
        let mean = if n > 0 {
            sorted.iter().sum::<usize>() as f64 / n as f64
        } else {
            0.0
        };
        LengthHistogram {
            group: group.into(),
            bin_width,
            bins,
            count: n,
            mean,
            median,
        }
    }

    /// `(bin_low, bin_high, count)` with inclusive bounds.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.bins
            .iter()
            .map(|(&b, &c)| (b * self.bin_width, b * self.bin_width + self.bin_width - 1, c))
    }
}

impl fmt::Display for LengthHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: n={} mean={:.2} median={:.1}",
            self.group, self.count, self.mean, self.median
        )
    }
}

fn span_length(a: &SpanAnnotation, unit: LengthUnit, articles: &HashMap<&str, &Article>) -> Result<usize> {
    match unit {
        LengthUnit::Chars => Ok(a.span.len()),
        LengthUnit::Words => {
            let article = articles
                .get(a.article_id.as_str())
                .ok_or_else(|| Error::UnknownArticle(a.article_id.clone()))?;
            article.check_span(a.span)?;
            Ok(words(article.slice(a.span).expect("span checked"), 0).len())
        }
    }
}

/// One histogram per group, ordered by group name. `articles` is only
/// consulted for [`LengthUnit::Words`].
pub fn span_length_distribution(
    annotations: &[SpanAnnotation],
    articles: &[Article],
    unit: LengthUnit,
    grouping: Grouping,
    bin_width: usize,
) -> Result<Vec<LengthHistogram>> {
    if bin_width == 0 {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let by_id: HashMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for a in annotations {
        let technique = a.technique.as_deref().unwrap_or("-");
        let key = match grouping {
            Grouping::All => "all".to_string(),
            Grouping::Technique => technique.to_string(),
            Grouping::Category => format!("category_{}", category_of(technique)),
        };
        groups.entry(key).or_default().push(span_length(a, unit, &by_id)?);
    }
    Ok(groups
        .into_iter()
        .map(|(g, lengths)| LengthHistogram::from_lengths(g, &lengths, bin_width))
        .collect())
}

pub fn histograms_to_csv(histograms: &[LengthHistogram]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "bin_low", "bin_high", "count"])?;
    for h in histograms {
        for (lo, hi, count) in h.rows() {
            w.write_record([h.group.clone(), lo.to_string(), hi.to_string(), count.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn average_span_length(spans: &[CharSpan]) -> Result<f64> {
    if spans.is_empty() {
        return Err(Error::EmptyInput("spans"));
    }
    Ok(spans.iter().map(|s| s.len()).sum::<usize>() as f64 / spans.len() as f64)
}
