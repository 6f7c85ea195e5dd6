//! Text encoders and context-combination strategies.
//!
//! [`HashedEncoder`] is the shipped baseline: every token is described by a
//! handful of string features, each hashed with 64-bit FNV-1a into one of
//! `dim` buckets. A sequence vector is the L2-normalized mean of the token
//! vectors. Any other encoder can be plugged in through [`SequenceEncoder`]
//! or by supplying precomputed vectors ([`PrecomputedVectors`]).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tokenizer::{is_punctuation, tokenize, Token};

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_HIDDEN_DIM: usize = 64;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn hash_feature(feature: &str, dim: usize) -> usize {
    assert!(dim > 0, "feature dimension must be positive");
    (fnv1a64(feature.as_bytes()) % dim as u64) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PositionBucket {
    Begin,
    Middle,
    End,
}

impl PositionBucket {
    pub fn of(index: usize, len: usize) -> Self {
        if index == 0 {
            PositionBucket::Begin
        } else if index + 1 >= len {
            PositionBucket::End
        } else {
            PositionBucket::Middle
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            PositionBucket::Begin => "begin",
            PositionBucket::Middle => "middle",
            PositionBucket::End => "end",
        }
    }
}

fn shape(token: &str) -> &'static str {
    let mut chars = token.chars();
    let first = chars.next().expect("non-empty token");
    if token.chars().all(|c| c.is_numeric()) {
        "Digit"
    } else if token.chars().all(is_punctuation) {
        "Punct"
    } else if token.chars().any(char::is_alphabetic)
        && token.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase)
        && token.chars().filter(|c| c.is_alphabetic()).count() > 1
    {
        "AllCaps"
    } else if first.is_uppercase() {
        "Cap"
    } else {
        "Lower"
    }
}

/// String features of one token: lowercased form, padded character
/// trigrams, prefixes and suffixes up to length 3, shape class and
/// position bucket. Empty tokens have no features.
pub fn featurize_token(token: &str, bucket: PositionBucket) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if token.is_empty() {
        return out;
    }
    let lower = token.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    out.insert(format!("lower={lower}"));
    let padded: Vec<char> = std::iter::once('^')
        .chain(chars.iter().copied())
        .chain(std::iter::once('$'))
        .collect();
    for w in padded.windows(3) {
        out.insert(format!("tri={}", w.iter().collect::<String>()));
    }
    for k in 1..=chars.len().min(3) {
        out.insert(format!("pre{k}={}", chars[..k].iter().collect::<String>()));
        out.insert(format!("suf{k}={}", chars[chars.len() - k..].iter().collect::<String>()));
    }
    out.insert(format!("shape={}", shape(token)));
    out.insert(format!("pos={}", bucket.as_str()));
    out
}

/// Sparse feature vector: sorted, de-duplicated indices with values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Sums duplicate indices.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        SparseVector { entries }
    }

    /// Hashes string features; each contributes 1.0 to its bucket.
    pub fn from_features<'a, I: IntoIterator<Item = &'a String>>(features: I, dim: usize) -> Self {
        SparseVector::from_pairs(features.into_iter().map(|f| (hash_feature(f, dim), 1.0)).collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| dense[i] * v).sum()
    }

    pub fn add_to(&self, dense: &mut [f64], scale: f64) {
        for &(i, v) in &self.entries {
            dense[i] += scale * v;
        }
    }
}

/// Hashed feature vector of every token in a sentence. Each token also sees
/// its immediate neighbours' lowercased forms.
pub fn token_feature_vectors(tokens: &[Token], dim: usize) -> Vec<SparseVector> {
    let n = tokens.len();
    (0..n)
        .map(|i| {
            let mut feats = featurize_token(&tokens[i].text, PositionBucket::of(i, n));
            let prev = i.checked_sub(1).map_or("<s>".to_string(), |p| tokens[p].text.to_lowercase());
            let next = tokens.get(i + 1).map_or("</s>".to_string(), |t| t.text.to_lowercase());
            feats.insert(format!("prev={prev}"));
            feats.insert(format!("next={next}"));
            SparseVector::from_features(&feats, dim)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VectorRole {
    Sequence,
    Context,
    Combined,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqVector {
    pub role: VectorRole,
    pub values: Vec<f64>,
}

impl SeqVector {
    pub fn new(role: VectorRole, values: Vec<f64>) -> Self {
        SeqVector { role, values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn with_role(mut self, role: VectorRole) -> Self {
        self.role = role;
        self
    }
}

pub trait SequenceEncoder {
    fn dim(&self) -> usize;

    /// A single vector summarizing `text`, tagged as a sequence vector.
    fn encode_sequence(&self, text: &str) -> SeqVector;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashedEncoder {
    pub dim: usize,
}

impl Default for HashedEncoder {
    fn default() -> Self {
        HashedEncoder { dim: DEFAULT_DIM }
    }
}

impl HashedEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "encoder dimension must be positive");
        HashedEncoder { dim }
    }
}

impl SequenceEncoder for HashedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_sequence(&self, text: &str) -> SeqVector {
        let tokens = tokenize(text, 0);
        let mut values = vec![0.0; self.dim];
        let n = tokens.len();
        for (i, t) in tokens.iter().enumerate() {
            for f in featurize_token(&t.text, PositionBucket::of(i, n)) {
                values[hash_feature(&f, self.dim)] += 1.0;
            }
        }
        if n > 0 {
            values.iter_mut().for_each(|v| *v /= n as f64);
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                values.iter_mut().for_each(|v| *v /= norm);
            }
        }
        SeqVector::new(VectorRole::Sequence, values)
    }
}

/// Externally computed vectors keyed by `article_id:begin:end` (fragments),
/// `article_id:TITLE` (titles) or `article_id:begin:end:SENTENCE`
/// (sentence contexts).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrecomputedVectors {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl PrecomputedVectors {
    /// One vector per line: key, then `dim` tab-separated floats.
    pub fn parse(tsv: &str, dim: usize) -> Result<Self> {
        let mut table = HashMap::new();
        for (idx, line) in tsv.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let key = fields.next().unwrap_or_default().to_string();
            let values = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(idx + 1, format!("bad float {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(Error::parse(
                    idx + 1,
                    format!("expected {dim} values, found {}", values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(idx + 1, "non-finite value"));
            }
            table.insert(key, values);
        }
        Ok(PrecomputedVectors { dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.table.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Uses precomputed vectors where a key matches, the base encoder otherwise.
pub struct KeyedEncoder<'a, E> {
    pub base: &'a E,
    pub overrides: Option<&'a PrecomputedVectors>,
}

impl<E: SequenceEncoder> KeyedEncoder<'_, E> {
    pub fn encode(&self, key: Option<&str>, text: &str) -> SeqVector {
        if let (Some(table), Some(key)) = (self.overrides, key) {
            if let Some(v) = table.get(key) {
                return SeqVector::new(VectorRole::Sequence, v.to_vec());
            }
        }
        self.base.encode_sequence(text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CombinationStrategy {
    /// `V = S`.
    None,
    /// Context text is concatenated with the fragment before encoding.
    ConcatText,
    /// `V = [S; C]`.
    ConcatEmbed,
    /// `V = [S; tanh(W C + b)]`.
    ConcatEmbedHidden { hidden_dim: usize },
    /// `V = S + C`.
    Add,
    /// `V = alpha S + (1 - alpha) C`.
    WeightedAvg { alpha: f64 },
}

impl CombinationStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            CombinationStrategy::None => "NONE",
            CombinationStrategy::ConcatText => "CONCAT_TEXT",
            CombinationStrategy::ConcatEmbed => "CONCAT_EMBED",
            CombinationStrategy::ConcatEmbedHidden { .. } => "CONCAT_EMBED_HIDDEN",
            CombinationStrategy::Add => "ADD",
            CombinationStrategy::WeightedAvg { .. } => "WEIGHTED_AVG",
        }
    }

    /// Builds a strategy from its name; `alpha` and `hidden_dim` are only
    /// consulted by the variants that use them.
    pub fn from_parts(name: &str, alpha: Option<f64>, hidden_dim: Option<usize>) -> Result<Self> {
        let s = match name.to_ascii_uppercase().replace('-', "_").as_str() {
            "NONE" => CombinationStrategy::None,
            "CONCAT_TEXT" => CombinationStrategy::ConcatText,
            "CONCAT_EMBED" => CombinationStrategy::ConcatEmbed,
            "CONCAT_EMBED_HIDDEN" => CombinationStrategy::ConcatEmbedHidden {
                hidden_dim: hidden_dim.unwrap_or(DEFAULT_HIDDEN_DIM),
            },
            "ADD" => CombinationStrategy::Add,
            "WEIGHTED_AVG" => CombinationStrategy::WeightedAvg {
                alpha: alpha.ok_or_else(|| Error::InvalidArgument("WEIGHTED_AVG needs alpha".into()))?,
            },
            _ => return Err(Error::InvalidArgument(format!("unknown strategy {name:?}"))),
        };
        s.check()?;
        Ok(s)
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            CombinationStrategy::WeightedAvg { alpha } => Some(*alpha),
            _ => None,
        }
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        match self {
            CombinationStrategy::ConcatEmbedHidden { hidden_dim } => Some(*hidden_dim),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<()> {
        match *self {
            CombinationStrategy::WeightedAvg { alpha } if !(0.0..=1.0).contains(&alpha) => {
                Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")))
            }
            CombinationStrategy::ConcatEmbedHidden { hidden_dim: 0 } => {
                Err(Error::InvalidArgument("hidden dimension must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Dimension of `V` for sequence/context vectors of dimension `dim`.
    pub fn output_dim(&self, dim: usize) -> usize {
        match self {
            CombinationStrategy::ConcatEmbed => 2 * dim,
            CombinationStrategy::ConcatEmbedHidden { hidden_dim } => dim + hidden_dim,
            _ => dim,
        }
    }

    pub fn uses_context_vector(&self) -> bool {
        !matches!(self, CombinationStrategy::None | CombinationStrategy::ConcatText)
    }
}

impl fmt::Display for CombinationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CombinationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CombinationStrategy::from_parts(s, None, None)
    }
}

/// Dimension-reducing layer applied to the context vector.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HiddenLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        HiddenLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|r| {
                let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
                let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.bias[r];
                z.tanh()
            })
            .collect()
    }
}

pub fn combine(
    s: &SeqVector,
    c: &SeqVector,
    strategy: &CombinationStrategy,
    hidden: Option<&HiddenLayer>,
) -> Result<SeqVector> {
    strategy.check()?;
    let elementwise = |f: &dyn Fn(f64, f64) -> f64| -> Result<Vec<f64>> {
        if s.dim() != c.dim() {
            return Err(Error::DimensionMismatch {
                expected: s.dim(),
                actual: c.dim(),
            });
        }
        Ok(s.values.iter().zip(&c.values).map(|(&a, &b)| f(a, b)).collect())
    };
    let values = match *strategy {
        CombinationStrategy::None => s.values.clone(),
        CombinationStrategy::ConcatText => {
            return Err(Error::InvalidArgument(
                "CONCAT_TEXT encodes concatenated text and has no vector combination".into(),
            ))
        }
        CombinationStrategy::ConcatEmbed => s.values.iter().chain(&c.values).copied().collect(),
        CombinationStrategy::ConcatEmbedHidden { hidden_dim } => {
            let layer = hidden.ok_or_else(|| Error::InvalidArgument("missing hidden layer".into()))?;
            if layer.in_dim != c.dim() {
                return Err(Error::DimensionMismatch {
                    expected: layer.in_dim,
                    actual: c.dim(),
                });
            }
            if layer.out_dim != hidden_dim {
                return Err(Error::DimensionMismatch {
                    expected: hidden_dim,
                    actual: layer.out_dim,
                });
            }
            let mut v = s.values.clone();
            v.extend(layer.forward(&c.values));
            v
        }
        CombinationStrategy::Add => elementwise(&|a, b| a + b)?,
        CombinationStrategy::WeightedAvg { alpha } => elementwise(&|a, b| alpha * a + (1.0 - alpha) * b)?,
    };
    Ok(SeqVector::new(VectorRole::Combined, values))
}
