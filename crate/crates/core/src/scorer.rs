//! Task metrics.
//!
//! Span identification uses overlap credit: a (predicted `s`, gold `t`) pair
//! earns `|s ∩ t| / |s|` toward precision and `|s ∩ t| / |t|` toward recall,
//! averaged over the predicted and gold span counts pooled across articles.
//! Technique classification uses micro-averaged F1 plus per-class scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::corpus::{CharSpan, SpanAnnotation};
use crate::error::{Error, Result};

pub fn overlap_fraction(s: CharSpan, t: CharSpan, h: usize) -> Result<f64> {
    if h == 0 {
        return Err(Error::InvalidArgument("overlap normalizer must be positive".into()));
    }
    Ok(s.intersection_len(&t) as f64 / h as f64)
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted_spans: usize,
    pub gold_spans: usize,
    pub per_article: BTreeMap<String, Prf>,
}

impl SiScore {
    /// `metric \t value` lines.
    pub fn to_tsv(&self) -> String {
        format!(
            "precision\t{}\nrecall\t{}\nf1\t{}\npredicted_spans\t{}\ngold_spans\t{}\n",
            self.precision, self.recall, self.f1, self.predicted_spans, self.gold_spans
        )
    }
}

/// Merges overlapping spans; the result is sorted and pairwise disjoint.
pub fn merge_spans(spans: &[CharSpan]) -> Vec<CharSpan> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    let mut out: Vec<CharSpan> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if s.begin < last.end => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

fn group_by_article(annotations: &[SpanAnnotation]) -> BTreeMap<&str, Vec<CharSpan>> {
    let mut map: BTreeMap<&str, Vec<CharSpan>> = BTreeMap::new();
    for a in annotations {
        map.entry(a.article_id.as_str()).or_default().push(a.span);
    }
    map.into_iter().map(|(k, v)| (k, merge_spans(&v))).collect()
}

fn check_disjoint(article_id: &str, spans: &[CharSpan]) -> Result<()> {
    for w in spans.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(Error::OverlappingSpans {
                article_id: article_id.to_string(),
                a_begin: w[0].begin,
                a_end: w[0].end,
                b_begin: w[1].begin,
                b_end: w[1].end,
            });
        }
    }
    Ok(())
}

// (precision credit, recall credit) summed over all pairs
fn overlap_credit(pred: &[CharSpan], gold: &[CharSpan]) -> (f64, f64) {
    let mut p = 0.0;
    let mut r = 0.0;
    for s in pred {
        for t in gold {
            let inter = s.intersection_len(t);
            if inter > 0 {
                p += inter as f64 / s.len() as f64;
                r += inter as f64 / t.len() as f64;
            }
        }
    }
    (p, r)
}

fn prf_from_credit(p_sum: f64, r_sum: f64, n_pred: usize, n_gold: usize) -> Prf {
    if n_pred == 0 && n_gold == 0 {
        return Prf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let precision = if n_pred > 0 { p_sum / n_pred as f64 } else { 0.0 };
    let recall = if n_gold > 0 { r_sum / n_gold as f64 } else { 0.0 };
    Prf {
        precision,
        recall,
        f1: f1(precision, recall),
    }
}

pub fn score_si(pred: &[SpanAnnotation], gold: &[SpanAnnotation]) -> Result<SiScore> {
    let pred = group_by_article(pred);
    let gold = group_by_article(gold);
    let articles: BTreeSet<&str> = pred.keys().chain(gold.keys()).copied().collect();

    let empty = Vec::new();
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    let (mut n_pred, mut n_gold) = (0usize, 0usize);
    let mut per_article = BTreeMap::new();
    for id in articles {
        let ps = pred.get(id).unwrap_or(&empty);
        let gs = gold.get(id).unwrap_or(&empty);
        check_disjoint(id, ps)?;
        check_disjoint(id, gs)?;
        let (p, r) = overlap_credit(ps, gs);
        per_article.insert(id.to_string(), prf_from_credit(p, r, ps.len(), gs.len()));
        p_sum += p;
        r_sum += r;
        n_pred += ps.len();
        n_gold += gs.len();
    }
    let total = prf_from_credit(p_sum, r_sum, n_pred, n_gold);
    Ok(SiScore {
        precision: total.precision,
        recall: total.recall,
        f1: total.f1,
        predicted_spans: n_pred,
        gold_spans: n_gold,
        per_article,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcScore {
    pub micro_f1: f64,
    pub accuracy: f64,
    pub per_class: BTreeMap<String, ClassScore>,
}

impl TcScore {
    pub fn to_tsv(&self) -> String {
        format!("micro_f1\t{}\naccuracy\t{}\n", self.micro_f1, self.accuracy)
    }

    /// `class \t P \t R \t F1 \t support` lines with a header row.
    pub fn per_class_tsv(&self) -> String {
        let mut out = String::from("class\tprecision\trecall\tf1\tsupport\n");
        for (name, c) in &self.per_class {
            let _ = writeln!(out, "{name}\t{}\t{}\t{}\t{}", c.precision, c.recall, c.f1, c.support);
        }
        out
    }
}

/// Micro-averaged and per-class scores for label lists aligned by position.
pub fn score_labels<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Result<TcScore> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            actual: pred.len(),
        });
    }
    // (tp, fp, fn, support)
    let mut counts: BTreeMap<&str, (usize, usize, usize, usize)> = BTreeMap::new();
    let mut correct = 0usize;
    for (p, g) in pred.iter().zip(gold) {
        let (p, g) = (p.as_ref(), g.as_ref());
        counts.entry(g).or_default().3 += 1;
        if p == g {
            correct += 1;
            counts.entry(g).or_default().0 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(g).or_default().2 += 1;
        }
    }
    let n = gold.len();
    // pooled counts: TP = correct, FP = FN = n - correct
    let (tp, fp, fn_) = (correct, n - correct, n - correct);
    let micro_f1 = if n > 0 {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    } else {
        0.0
    };
    let per_class = counts
        .into_iter()
        .map(|(name, (tp, fp, fn_, support))| {
            let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
            let recall = if support > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
            (
                name.to_string(),
                ClassScore {
                    precision,
                    recall,
                    f1: f1(precision, recall),
                    support,
                },
            )
        })
        .collect();
    Ok(TcScore {
        micro_f1,
        accuracy: if n > 0 { correct as f64 / n as f64 } else { 0.0 },
        per_class,
    })
}

/// Scores technique predictions. Both lists must describe the same
/// instances (article and span) in the same order.
pub fn score_tc(pred: &[SpanAnnotation], gold: &[SpanAnnotation]) -> Result<TcScore> {
    if pred.len() != gold.len() {
        return Err(Error::Misaligned {
            index: pred.len().min(gold.len()),
            message: format!("{} predictions for {} gold instances", pred.len(), gold.len()),
        });
    }
    let mut p_labels = Vec::with_capacity(pred.len());
    let mut g_labels = Vec::with_capacity(gold.len());
    for (index, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.article_id != g.article_id || p.span != g.span {
            return Err(Error::Misaligned {
                index,
                message: format!(
                    "prediction {}:{} vs gold {}:{}",
                    p.article_id, p.span, g.article_id, g.span
                ),
            });
        }
        let label = |a: &SpanAnnotation| {
            a.technique.clone().ok_or_else(|| Error::InvalidAnnotation {
                index,
                message: "missing technique".into(),
            })
        };
        p_labels.push(label(p)?);
        g_labels.push(label(g)?);
    }
    score_labels(&p_labels, &g_labels)
}
