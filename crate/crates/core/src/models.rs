//! Baseline trainable models.
//!
//! Both models are multinomial logistic regressions trained with plain
//! mini-batch gradient descent from zero-initialized output weights. The
//! seed drives example shuffling and, for the context hidden layer, its
//! initial weights, so identical inputs and config give bit-identical models.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::{ContextConfig, ContextKind, ContextPair};
use crate::corpus::{Article, CharSpan, LabelInventory};
use crate::encoder::{
    combine, token_feature_vectors, CombinationStrategy, HashedEncoder, HiddenLayer, KeyedEncoder,
    PrecomputedVectors, SeqVector, SequenceEncoder, SparseVector, VectorRole, DEFAULT_DIM,
};
use crate::error::{Error, Result};
use crate::tagcodec::{decode, TagSequence, TaggingScheme};
use crate::tokenizer::{split_sentences, Token};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dim: usize,
    /// Weight each example by `N / (K * count(class))`.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 8,
            seed: 0,
            dim: DEFAULT_DIM,
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument(
                "epochs, batch size and dimension must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Softmax with the max subtracted first.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn class_weights(labels: impl Iterator<Item = usize>, classes: usize, enabled: bool) -> Vec<f64> {
    if !enabled {
        return vec![1.0; classes];
    }
    let mut counts = vec![0usize; classes];
    let mut n = 0usize;
    for l in labels {
        counts[l] += 1;
        n += 1;
    }
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n as f64 / (classes * c) as f64 })
        .collect()
}

fn fmt_row(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out
}

fn parse_row(line: Option<&str>, expected: usize, what: &str) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| Error::ModelFormat(format!("missing {what} row")))?;
    let values = line
        .split_whitespace()
        .map(|f| f.parse::<f64>().map_err(|_| Error::ModelFormat(format!("bad float {f:?} in {what}"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != expected {
        return Err(Error::ModelFormat(format!(
            "{what} row has {} values, expected {expected}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelFormat(format!("non-finite value in {what}")));
    }
    Ok(values)
}

fn parse_header<'a>(line: Option<&'a str>, magic: &str) -> Result<HashMap<&'a str, &'a str>> {
    let line = line.ok_or_else(|| Error::ModelFormat("empty model file".into()))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(Error::ModelFormat(format!("expected a {magic} file")));
    }
    if parts.next() != Some("1") {
        return Err(Error::ModelFormat("unsupported format version".into()));
    }
    parts
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| Error::ModelFormat(format!("bad header field {kv:?}")))
        })
        .collect()
}

fn header_value<T: std::str::FromStr>(header: &HashMap<&str, &str>, key: &str) -> Result<T> {
    header
        .get(key)
        .ok_or_else(|| Error::ModelFormat(format!("header lacks {key}")))?
        .parse()
        .map_err(|_| Error::ModelFormat(format!("bad header value for {key}")))
}

fn config_header(c: &TrainConfig) -> String {
    format!(
        "dim={} seed={} lr={} epochs={} batch={} class_weighting={}",
        c.dim, c.seed, c.learning_rate, c.epochs, c.batch_size, c.class_weighting as u8
    )
}

fn config_from_header(h: &HashMap<&str, &str>) -> Result<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: header_value(h, "lr")?,
        epochs: header_value(h, "epochs")?,
        batch_size: header_value(h, "batch")?,
        seed: header_value(h, "seed")?,
        dim: header_value(h, "dim")?,
        class_weighting: header_value::<u8>(h, "class_weighting")? != 0,
    })
}

// ---------------------------------------------------------------------------
// Span identification tagger

/// One token: hashed features and gold label index.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenExample {
    pub features: SparseVector,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggedSentence {
    pub tokens: Vec<Token>,
    pub tags: TagSequence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggerModel {
    pub scheme: TaggingScheme,
    pub config: TrainConfig,
    /// Row-major `labels x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Mean training loss after each epoch.
    pub loss_trace: Vec<f64>,
}

impl TaggerModel {
    pub fn zeros(scheme: TaggingScheme, config: TrainConfig) -> Self {
        let k = scheme.labels().len();
        TaggerModel {
            scheme,
            config,
            weights: vec![0.0; k * config.dim],
            bias: vec![0.0; k],
            loss_trace: Vec::new(),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.scheme.labels().len()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    fn check_shape(&self) -> Result<()> {
        let k = self.num_labels();
        if self.weights.len() != k * self.dim() {
            return Err(Error::DimensionMismatch {
                expected: k * self.dim(),
                actual: self.weights.len(),
            });
        }
        if self.bias.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: self.bias.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        let d = self.dim();
        (0..self.num_labels())
            .map(|k| x.dot(&self.weights[k * d..(k + 1) * d]) + self.bias[k])
            .collect()
    }

    /// Mean cross-entropy over `examples`.
    pub fn loss(&self, examples: &[TokenExample]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let total: f64 = examples
            .iter()
            .map(|e| {
                let z = self.logits(&e.features);
                log_sum_exp(&z) - z[e.label]
            })
            .sum();
        total / examples.len() as f64
    }

    // Adds the weighted gradient of one example; returns its weighted loss.
    fn accumulate(&self, e: &TokenExample, weight: f64, grad_w: &mut [f64], grad_b: &mut [f64]) -> f64 {
        let d = self.dim();
        let z = self.logits(&e.features);
        let p = softmax(&z);
        for k in 0..self.num_labels() {
            let delta = weight * (p[k] - (k == e.label) as u8 as f64);
            e.features.add_to(&mut grad_w[k * d..(k + 1) * d], delta);
            grad_b[k] += delta;
        }
        weight * (log_sum_exp(&z) - z[e.label])
    }

    /// Gradient of [`TaggerModel::loss`], flattened as weights then bias.
    pub fn gradient(&self, examples: &[TokenExample]) -> Vec<f64> {
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.bias.len()];
        if !examples.is_empty() {
            let scale = 1.0 / examples.len() as f64;
            for e in examples {
                self.accumulate(e, scale, &mut grad_w, &mut grad_b);
            }
        }
        grad_w.extend(grad_b);
        grad_w
    }

    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let n = self.weights.len();
        if params.len() != n + self.bias.len() {
            return Err(Error::DimensionMismatch {
                expected: n + self.bias.len(),
                actual: params.len(),
            });
        }
        self.weights.copy_from_slice(&params[..n]);
        self.bias.copy_from_slice(&params[n..]);
        Ok(())
    }

    pub fn predict_tags(&self, tokens: &[Token]) -> Result<TagSequence> {
        self.check_shape()?;
        let labels = token_feature_vectors(tokens, self.dim())
            .iter()
            .map(|x| self.scheme.labels()[argmax(&self.logits(x))])
            .collect();
        TagSequence::new(self.scheme, labels)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "spantag-tagger 1 scheme={} labels={} {}\n",
            self.scheme,
            self.num_labels(),
            config_header(&self.config)
        );
        let d = self.dim();
        for k in 0..self.num_labels() {
            out.push_str(&fmt_row(&self.weights[k * d..(k + 1) * d]));
            out.push('\n');
        }
        out.push_str(&fmt_row(&self.bias));
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = parse_header(lines.next(), "spantag-tagger")?;
        let scheme: TaggingScheme = header_value::<String>(&header, "scheme")?.parse()?;
        let config = config_from_header(&header)?;
        config.check()?;
        let k: usize = header_value(&header, "labels")?;
        if k != scheme.labels().len() {
            return Err(Error::ModelFormat(format!("{scheme} has {} labels, header says {k}", scheme.labels().len())));
        }
        let mut weights = Vec::with_capacity(k * config.dim);
        for r in 0..k {
            weights.extend(parse_row(lines.next(), config.dim, &format!("weight row {r}"))?);
        }
        let bias = parse_row(lines.next(), k, "bias")?;
        Ok(TaggerModel {
            scheme,
            config,
            weights,
            bias,
            loss_trace: Vec::new(),
        })
    }
}

/// Tokens with gold labels, grouped by sentence.
pub fn tagger_examples(sentences: &[TaggedSentence], scheme: TaggingScheme, dim: usize) -> Result<Vec<Vec<TokenExample>>> {
    sentences
        .iter()
        .map(|s| {
            if s.tags.scheme() != scheme {
                return Err(Error::InvalidArgument(format!(
                    "sentence tagged with {} but training {scheme}",
                    s.tags.scheme()
                )));
            }
            if s.tags.len() != s.tokens.len() {
                return Err(Error::LengthMismatch {
                    expected: s.tokens.len(),
                    actual: s.tags.len(),
                });
            }
            let feats = token_feature_vectors(&s.tokens, dim);
            Ok(feats
                .into_iter()
                .zip(s.tags.labels())
                .map(|(features, tag)| TokenExample {
                    features,
                    label: scheme.label_index(*tag).expect("sequence validated against scheme"),
                })
                .collect())
        })
        .collect()
}

pub fn train_si(sentences: &[TaggedSentence], scheme: TaggingScheme, config: &TrainConfig) -> Result<TaggerModel> {
    config.check()?;
    if sentences.iter().all(|s| s.tokens.is_empty()) {
        return Err(Error::EmptyInput("training sentences"));
    }
    let data = tagger_examples(sentences, scheme, config.dim)?;
    let all: Vec<TokenExample> = data.iter().flatten().cloned().collect();
    let k = scheme.labels().len();
    let cw = class_weights(all.iter().map(|e| e.label), k, config.class_weighting);

    let mut model = TaggerModel::zeros(scheme, *config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad_w = vec![0.0; model.weights.len()];
    let mut grad_b = vec![0.0; k];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let n_tokens: usize = batch.iter().map(|&i| data[i].len()).sum();
            if n_tokens == 0 {
                continue;
            }
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / n_tokens as f64;
            for &i in batch {
                for e in &data[i] {
                    model.accumulate(e, scale * cw[e.label], &mut grad_w, &mut grad_b);
                }
            }
            let lr = config.learning_rate;
            model.weights.iter_mut().zip(&grad_w).for_each(|(w, g)| *w -= lr * g);
            model.bias.iter_mut().zip(&grad_b).for_each(|(b, g)| *b -= lr * g);
        }
        model.loss_trace.push(model.loss(&all));
    }
    Ok(model)
}

/// Predicted spans of an article, sorted and disjoint.
pub fn predict_si(model: &TaggerModel, article: &Article) -> Result<Vec<CharSpan>> {
    let mut spans = Vec::new();
    for sentence in split_sentences(article) {
        let tags = model.predict_tags(&sentence.tokens)?;
        spans.extend(decode(&tags, &sentence.tokens)?);
    }
    spans.sort();
    Ok(spans)
}

// ---------------------------------------------------------------------------
// Technique classifier

/// Encoded classifier input: fragment vector, context vector, fragment
/// length in characters, gold class.
#[derive(Clone, Debug, PartialEq)]
pub struct TcExample {
    pub sequence: Vec<f64>,
    pub context: Vec<f64>,
    pub fragment_chars: usize,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub labels: LabelInventory,
    pub strategy: CombinationStrategy,
    pub length_feature: bool,
    /// Fragment lengths are divided by this before entering the model.
    pub length_scale: f64,
    pub config: TrainConfig,
    /// Row-major `classes x input_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub hidden: Option<HiddenLayer>,
    /// Context settings the model was trained with; prediction must build
    /// pairs the same way.
    pub context_kind: ContextKind,
    pub context_config: ContextConfig,
    pub loss_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcPrediction {
    pub class_index: usize,
    pub technique: String,
    pub probabilities: Vec<f64>,
}

// forward-pass intermediates for one example
struct Forward {
    input: Vec<f64>,
    hidden_out: Option<Vec<f64>>,
    logits: Vec<f64>,
}

impl ClassifierModel {
    /// Output layer at zero; the hidden layer (if any) drawn uniformly from
    /// `±1/sqrt(dim)` with `rng`.
    pub fn init(
        labels: LabelInventory,
        strategy: CombinationStrategy,
        length_feature: bool,
        config: TrainConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        strategy.check()?;
        config.check()?;
        let hidden = strategy.hidden_dim().map(|dc| {
            let mut layer = HiddenLayer::zeros(config.dim, dc);
            let r = 1.0 / (config.dim as f64).sqrt();
            layer.weights.iter_mut().for_each(|w| *w = rng.gen_range(-r..r));
            layer
        });
        let mut model = ClassifierModel {
            labels,
            strategy,
            length_feature,
            length_scale: 1.0,
            config,
            weights: Vec::new(),
            bias: Vec::new(),
            hidden,
            context_kind: ContextKind::None,
            context_config: ContextConfig::default(),
            loss_trace: Vec::new(),
        };
        model.weights = vec![0.0; model.num_classes() * model.input_dim()];
        model.bias = vec![0.0; model.num_classes()];
        Ok(model)
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn input_dim(&self) -> usize {
        self.strategy.output_dim(self.config.dim) + self.length_feature as usize
    }

    /// The combined representation `V` (without the length feature).
    pub fn representation(&self, sequence: &[f64], context: &[f64]) -> Result<SeqVector> {
        let d = self.config.dim;
        if sequence.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: sequence.len(),
            });
        }
        let s = SeqVector::new(VectorRole::Sequence, sequence.to_vec());
        if !self.strategy.uses_context_vector() {
            return Ok(s.with_role(VectorRole::Combined));
        }
        let c = SeqVector::new(VectorRole::Context, context.to_vec());
        combine(&s, &c, &self.strategy, self.hidden.as_ref())
    }

    fn forward(&self, e: &TcExample) -> Result<Forward> {
        let mut input = self.representation(&e.sequence, &e.context)?.values;
        let hidden_out = self.hidden.as_ref().map(|_| input[self.config.dim..].to_vec());
        if self.length_feature {
            input.push(e.fragment_chars as f64 / self.length_scale);
        }
        let n = input.len();
        let logits = (0..self.num_classes())
            .map(|k| {
                let row = &self.weights[k * n..(k + 1) * n];
                row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>() + self.bias[k]
            })
            .collect();
        Ok(Forward {
            input,
            hidden_out,
            logits,
        })
    }

    pub fn loss(&self, examples: &[TcExample]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for e in examples {
            let f = self.forward(e)?;
            total += log_sum_exp(&f.logits) - f.logits[e.label];
        }
        Ok(total / examples.len() as f64)
    }

    fn param_len(&self) -> usize {
        self.weights.len()
            + self.bias.len()
            + self.hidden.as_ref().map_or(0, |h| h.weights.len() + h.bias.len())
    }

    /// Flattened as output weights, output bias, hidden weights, hidden bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.weights.iter().chain(&self.bias).copied().collect();
        if let Some(h) = &self.hidden {
            out.extend(&h.weights);
            out.extend(&h.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::DimensionMismatch {
                expected: self.param_len(),
                actual: params.len(),
            });
        }
        let mut rest = params;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(&mut self.weights);
        take(&mut self.bias);
        if let Some(h) = &mut self.hidden {
            take(&mut h.weights);
            take(&mut h.bias);
        }
        Ok(())
    }

    // Adds the weighted gradient of one example into `grad` (params layout).
    fn accumulate(&self, e: &TcExample, weight: f64, grad: &mut [f64]) -> Result<f64> {
        let f = self.forward(e)?;
        let p = softmax(&f.logits);
        let n = f.input.len();
        let k_classes = self.num_classes();
        let d = self.config.dim;
        let delta: Vec<f64> = (0..k_classes)
            .map(|k| weight * (p[k] - (k == e.label) as u8 as f64))
            .collect();
        let (gw, rest) = grad.split_at_mut(self.weights.len());
        let (gb, gh) = rest.split_at_mut(self.bias.len());
        for k in 0..k_classes {
            let row = &mut gw[k * n..(k + 1) * n];
            row.iter_mut().zip(&f.input).for_each(|(g, x)| *g += delta[k] * x);
            gb[k] += delta[k];
        }
        if let (Some(layer), Some(h)) = (&self.hidden, &f.hidden_out) {
            let (ghw, ghb) = gh.split_at_mut(layer.weights.len());
            for (j, hj) in h.iter().enumerate() {
                let col = d + j;
                let dh: f64 = (0..k_classes).map(|k| self.weights[k * n + col] * delta[k]).sum();
                let dpre = dh * (1.0 - hj * hj);
                if dpre == 0.0 {
                    continue;
                }
                let row = &mut ghw[j * layer.in_dim..(j + 1) * layer.in_dim];
                row.iter_mut().zip(&e.context).for_each(|(g, c)| *g += dpre * c);
                ghb[j] += dpre;
            }
        }
        Ok(weight * (log_sum_exp(&f.logits) - f.logits[e.label]))
    }

    /// Gradient of [`ClassifierModel::loss`] in [`ClassifierModel::params`] layout.
    pub fn gradient(&self, examples: &[TcExample]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.param_len()];
        if !examples.is_empty() {
            let scale = 1.0 / examples.len() as f64;
            for e in examples {
                self.accumulate(e, scale, &mut grad)?;
            }
        }
        Ok(grad)
    }

    pub fn predict_example(&self, e: &TcExample) -> Result<TcPrediction> {
        let f = self.forward(e)?;
        let probabilities = softmax(&f.logits);
        let class_index = argmax(&probabilities);
        Ok(TcPrediction {
            class_index,
            technique: self.labels.name(class_index).expect("index within inventory").to_string(),
            probabilities,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "spantag-classifier 1 strategy={} alpha={} hidden_dim={} classes={} length_feature={} length_scale={} context={} context_cap={} cap_includes_fragment={} {}\n",
            self.strategy.name(),
            self.strategy.alpha().unwrap_or(0.0),
            self.strategy.hidden_dim().unwrap_or(0),
            self.num_classes(),
            self.length_feature as u8,
            self.length_scale,
            self.context_kind,
            self.context_config.cap,
            self.context_config.cap_includes_fragment as u8,
            config_header(&self.config)
        );
        out.push_str(&self.labels.names().join("\t"));
        out.push('\n');
        let n = self.input_dim();
        for k in 0..self.num_classes() {
            out.push_str(&fmt_row(&self.weights[k * n..(k + 1) * n]));
            out.push('\n');
        }
        out.push_str(&fmt_row(&self.bias));
        out.push('\n');
        if let Some(h) = &self.hidden {
            for r in 0..h.out_dim {
                out.push_str(&fmt_row(&h.weights[r * h.in_dim..(r + 1) * h.in_dim]));
                out.push('\n');
            }
            out.push_str(&fmt_row(&h.bias));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = parse_header(lines.next(), "spantag-classifier")?;
        let config = config_from_header(&header)?;
        config.check()?;
        let name: String = header_value(&header, "strategy")?;
        let alpha: f64 = header_value(&header, "alpha")?;
        let hidden_dim: usize = header_value(&header, "hidden_dim")?;
        let strategy = CombinationStrategy::from_parts(&name, Some(alpha), Some(hidden_dim))?;
        let classes: usize = header_value(&header, "classes")?;
        let length_feature = header_value::<u8>(&header, "length_feature")? != 0;
        let length_scale: f64 = header_value(&header, "length_scale")?;
        let context_kind: ContextKind = header_value::<String>(&header, "context")?.parse()?;
        let context_config = ContextConfig {
            cap: header_value(&header, "context_cap")?,
            cap_includes_fragment: header_value::<u8>(&header, "cap_includes_fragment")? != 0,
        };
        let names = lines
            .next()
            .ok_or_else(|| Error::ModelFormat("missing label row".into()))?
            .split('\t')
            .map(str::to_string)
            .collect::<Vec<_>>();
        let labels = LabelInventory::from_names(names)?;
        if labels.len() != classes {
            return Err(Error::ModelFormat(format!("{} labels for {classes} classes", labels.len())));
        }
        let mut model = ClassifierModel {
            labels,
            strategy,
            length_feature,
            length_scale,
            config,
            weights: Vec::new(),
            bias: Vec::new(),
            hidden: None,
            context_kind,
            context_config,
            loss_trace: Vec::new(),
        };
        let n = model.input_dim();
        for r in 0..classes {
            model.weights.extend(parse_row(lines.next(), n, &format!("weight row {r}"))?);
        }
        model.bias = parse_row(lines.next(), classes, "bias")?;
        if let Some(dc) = strategy.hidden_dim() {
            let mut layer = HiddenLayer::zeros(config.dim, dc);
            layer.weights.clear();
            for r in 0..dc {
                layer.weights.extend(parse_row(lines.next(), config.dim, &format!("hidden row {r}"))?);
            }
            layer.bias = parse_row(lines.next(), dc, "hidden bias")?;
            model.hidden = Some(layer);
        }
        Ok(model)
    }
}

/// Lookup keys for externally supplied vectors.
pub fn fragment_key(pair: &ContextPair) -> String {
    format!("{}:{}:{}", pair.article_id, pair.span.begin, pair.span.end)
}

pub fn context_key(pair: &ContextPair) -> Option<String> {
    match pair.context_kind {
        ContextKind::Sentence => Some(format!("{}:SENTENCE", fragment_key(pair))),
        ContextKind::Title => Some(format!("{}:TITLE", pair.article_id)),
        ContextKind::None => None,
    }
}

/// Encodes a pair into classifier input. With `CONCAT_TEXT` the sequence
/// vector encodes the fragment followed by its context and the context
/// vector is left empty.
pub fn encode_pair<E: SequenceEncoder>(
    encoder: &KeyedEncoder<'_, E>,
    pair: &ContextPair,
    strategy: &CombinationStrategy,
    label: usize,
) -> TcExample {
    let (sequence, context) = match strategy {
        CombinationStrategy::ConcatText => {
            let text = if pair.context_text.is_empty() {
                pair.fragment_text.clone()
            } else {
                format!("{} {}", pair.fragment_text, pair.context_text)
            };
            (encoder.base.encode_sequence(&text).values, Vec::new())
        }
        s => {
            let seq = encoder.encode(Some(&fragment_key(pair)), &pair.fragment_text).values;
            let ctx = if s.uses_context_vector() {
                encoder.encode(context_key(pair).as_deref(), &pair.context_text).values
            } else {
                Vec::new()
            };
            (seq, ctx)
        }
    };
    TcExample {
        sequence,
        context,
        fragment_chars: pair.fragment_text.chars().count(),
        label,
    }
}

fn check_encoder_dim<E: SequenceEncoder>(encoder: &KeyedEncoder<'_, E>, dim: usize) -> Result<()> {
    let dims = [Some(encoder.base.dim()), encoder.overrides.map(PrecomputedVectors::dim)];
    for d in dims.into_iter().flatten() {
        if d != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: d });
        }
    }
    Ok(())
}

/// Trains the technique classifier with the baseline hashed encoder.
pub fn train_tc(
    pairs: &[ContextPair],
    strategy: CombinationStrategy,
    length_feature: bool,
    config: &TrainConfig,
) -> Result<ClassifierModel> {
    let base = HashedEncoder::new(config.dim.max(1));
    let encoder = KeyedEncoder {
        base: &base,
        overrides: None,
    };
    train_tc_with(&encoder, pairs, strategy, length_feature, config)
}

pub fn train_tc_with<E: SequenceEncoder>(
    encoder: &KeyedEncoder<'_, E>,
    pairs: &[ContextPair],
    strategy: CombinationStrategy,
    length_feature: bool,
    config: &TrainConfig,
) -> Result<ClassifierModel> {
    config.check()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("training pairs"));
    }
    check_encoder_dim(encoder, config.dim)?;
    let names = pairs
        .iter()
        .enumerate()
        .map(|(index, p)| {
            p.technique.clone().ok_or_else(|| Error::InvalidAnnotation {
                index,
                message: "training pair without technique".into(),
            })
        })
        .collect::<Result<Vec<String>>>()?;
    let labels = LabelInventory::from_names(names.iter().cloned())?;
    let examples: Vec<TcExample> = pairs
        .iter()
        .zip(&names)
        .map(|(p, n)| encode_pair(encoder, p, &strategy, labels.index_of(n).expect("inventory built from pairs")))
        .collect();
    let mut model = train_tc_examples(labels, &examples, strategy, length_feature, config)?;
    model.context_kind = pairs[0].context_kind;
    Ok(model)
}

/// Trains on already-encoded examples.
pub fn train_tc_examples(
    labels: LabelInventory,
    examples: &[TcExample],
    strategy: CombinationStrategy,
    length_feature: bool,
    config: &TrainConfig,
) -> Result<ClassifierModel> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("training examples"));
    }
    if let Some(e) = examples.iter().find(|e| e.label >= labels.len()) {
        return Err(Error::UnknownTechnique(format!("class index {}", e.label)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ClassifierModel::init(labels, strategy, length_feature, *config, &mut rng)?;
    model.length_scale = examples.iter().map(|e| e.fragment_chars).max().unwrap_or(1).max(1) as f64;
    let cw = class_weights(examples.iter().map(|e| e.label), model.num_classes(), config.class_weighting);

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; model.param_len()];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let e = &examples[i];
                model.accumulate(e, scale * cw[e.label], &mut grad)?;
            }
            let mut params = model.params();
            params
                .iter_mut()
                .zip(&grad)
                .for_each(|(p, g)| *p -= config.learning_rate * g);
            model.set_params(&params)?;
        }
        let loss = model.loss(examples)?;
        model.loss_trace.push(loss);
    }
    Ok(model)
}

pub fn predict_tc(model: &ClassifierModel, pair: &ContextPair) -> Result<TcPrediction> {
    let base = HashedEncoder::new(model.config.dim);
    let encoder = KeyedEncoder {
        base: &base,
        overrides: None,
    };
    predict_tc_with(&encoder, model, pair)
}

pub fn predict_tc_with<E: SequenceEncoder>(
    encoder: &KeyedEncoder<'_, E>,
    model: &ClassifierModel,
    pair: &ContextPair,
) -> Result<TcPrediction> {
    check_encoder_dim(encoder, model.config.dim)?;
    let e = encode_pair(encoder, pair, &model.strategy, 0);
    model.predict_example(&e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{build_tc_dataset, ContextConfig};
    use crate::corpus::SpanAnnotation;
    use crate::encoder::hash_feature;
    use crate::tagcodec::Tag;
    use crate::tagcodec::tag_article;
    use crate::tokenizer::tokenize;

    fn small_config(dim: usize) -> TrainConfig {
        TrainConfig {
            dim,
            epochs: 5,
            ..TrainConfig::default()
        }
    }

    fn toy_sentences(scheme: TaggingScheme) -> Vec<TaggedSentence> {
        let article = Article::new(
            "1",
            "The corrupt elites lie again.\nWeather is mild today.\nThose traitors destroy everything.",
        );
        let spans = [
            CharSpan { begin: 4, end: 18 },
            CharSpan { begin: 59, end: 75 },
        ];
        tag_article(&article, &spans, scheme)
            .into_iter()
            .map(|(s, tags)| TaggedSentence { tokens: s.tokens, tags })
            .collect()
    }

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn tagger_training_is_deterministic() {
        let data = toy_sentences(TaggingScheme::Bioe);
        let a = train_si(&data, TaggingScheme::Bioe, &small_config(64)).unwrap();
        let b = train_si(&data, TaggingScheme::Bioe, &small_config(64)).unwrap();
        assert_eq!(a, b);
        assert!(a.loss_trace.iter().all(|l| l.is_finite()));
        assert_eq!(a.loss_trace.len(), 5);
    }

    #[test]
    fn tagger_rejects_bad_input() {
        let data = toy_sentences(TaggingScheme::Bio);
        assert!(train_si(&data, TaggingScheme::Bioe, &small_config(16)).is_err());
        assert!(matches!(
            train_si(&[], TaggingScheme::Bio, &small_config(16)),
            Err(Error::EmptyInput(_))
        ));
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..small_config(16)
        };
        assert!(train_si(&data, TaggingScheme::Bio, &bad).is_err());
    }

    #[test]
    fn zero_model_predicts_nothing() {
        let model = TaggerModel::zeros(TaggingScheme::Bioes, small_config(32));
        let a = Article::new("1", "The dictator will destroy us all.");
        assert!(predict_si(&model, &a).unwrap().is_empty());
        assert!(predict_si(&model, &Article::new("2", "")).unwrap().is_empty());
    }

    #[test]
    fn hand_set_weights_pick_one_token() {
        let dim = 1 << 16;
        let scheme = TaggingScheme::Bioe;
        let mut model = TaggerModel::zeros(scheme, small_config(dim));
        let b = scheme.label_index(Tag::B).unwrap();
        let idx = hash_feature("lower=dictator", dim);
        // the bucket must not be shared with any feature of the other tokens
        let tokens = tokenize("The dictator will destroy us all.", 0);
        let feats = token_feature_vectors(&tokens, dim);
        for (i, f) in feats.iter().enumerate() {
            let hit = f.entries().iter().any(|e| e.0 == idx);
            assert_eq!(hit, i == 1);
        }
        model.weights[b * dim + idx] = 1.0;
        let spans = predict_si(&model, &Article::new("1", "The dictator will destroy us all.")).unwrap();
        assert_eq!(spans, vec![CharSpan { begin: 4, end: 12 }]);
    }

    #[test]
    fn corrupt_tagger_shape_is_reported() {
        let mut model = TaggerModel::zeros(TaggingScheme::Bio, small_config(8));
        model.weights.pop();
        assert!(matches!(
            predict_si(&model, &Article::new("1", "a b")),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tagger_file_roundtrip() {
        let data = toy_sentences(TaggingScheme::Bioes);
        let model = train_si(&data, TaggingScheme::Bioes, &small_config(16)).unwrap();
        let text = model.to_text();
        let back = TaggerModel::from_text(&text).unwrap();
        assert_eq!(back.weights, model.weights);
        assert_eq!(back.bias, model.bias);
        assert_eq!(back.config, model.config);
        assert_eq!(back.to_text(), text);
        assert!(TaggerModel::from_text("spantag-tagger 2\n").is_err());
        assert!(TaggerModel::from_text(&text.replace("labels=5", "labels=4")).is_err());
    }

    fn toy_pairs() -> Vec<ContextPair> {
        let article = Article::new(
            "3",
            "Headline\nThey are traitors and we must fight.\nGod bless our great nation forever.",
        );
        let anns = vec![
            SpanAnnotation::tc("3", "Name_Calling,Labeling", CharSpan { begin: 18, end: 26 }),
            SpanAnnotation::tc("3", "Flag-Waving", CharSpan { begin: 46, end: 81 }),
            SpanAnnotation::tc("3", "Loaded_Language", CharSpan { begin: 18, end: 26 }),
        ];
        build_tc_dataset(&[article], &anns, ContextKind::Sentence, &ContextConfig::default()).unwrap()
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let labels = LabelInventory::from_names(["A", "B", "C", "D"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model =
            ClassifierModel::init(labels, CombinationStrategy::Add, false, small_config(16), &mut rng).unwrap();
        let pair = &toy_pairs()[0];
        let p = predict_tc(&model, pair).unwrap();
        assert_eq!(p.class_index, 0);
        assert_eq!(p.technique, "A");
        assert!(p.probabilities.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn hand_set_classifier_weights() {
        let labels = LabelInventory::from_names(["A", "B", "C"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model =
            ClassifierModel::init(labels, CombinationStrategy::None, false, small_config(8), &mut rng).unwrap();
        let e = TcExample {
            sequence: vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            context: Vec::new(),
            fragment_chars: 4,
            label: 0,
        };
        model.weights[2 * 8 + 3] = 2.0;
        let p = model.predict_example(&e).unwrap();
        assert_eq!(p.class_index, 2);
        let expected = (2.0f64).exp() / (2.0 + (2.0f64).exp());
        assert!((p.probabilities[2] - expected).abs() < 1e-15);
    }

    #[test]
    fn classifier_is_deterministic_and_roundtrips() {
        let pairs = toy_pairs();
        for strategy in [
            CombinationStrategy::None,
            CombinationStrategy::ConcatText,
            CombinationStrategy::ConcatEmbed,
            CombinationStrategy::ConcatEmbedHidden { hidden_dim: 4 },
            CombinationStrategy::Add,
            CombinationStrategy::WeightedAvg { alpha: 0.3 },
        ] {
            let a = train_tc(&pairs, strategy, true, &small_config(16)).unwrap();
            let b = train_tc(&pairs, strategy, true, &small_config(16)).unwrap();
            assert_eq!(a, b, "{strategy}");
            let text = a.to_text();
            let back = ClassifierModel::from_text(&text).unwrap();
            assert_eq!(back.params(), a.params(), "{strategy}");
            assert_eq!(back.to_text(), text);
            let p = predict_tc(&back, &pairs[1]).unwrap();
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn classifier_errors() {
        let mut pairs = toy_pairs();
        assert!(train_tc(&[], CombinationStrategy::None, false, &small_config(8)).is_err());
        pairs[0].technique = None;
        assert!(train_tc(&pairs, CombinationStrategy::None, false, &small_config(8)).is_err());

        let model = train_tc(&toy_pairs(), CombinationStrategy::None, false, &small_config(8)).unwrap();
        let other = HashedEncoder::new(16);
        let enc = KeyedEncoder {
            base: &other,
            overrides: None,
        };
        assert!(matches!(
            predict_tc_with(&enc, &model, &toy_pairs()[0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
