use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use spantag::analytics::{class_histogram, histograms_to_csv, span_length_distribution, LengthUnit};
use spantag::context::{build_tc_dataset, write_pairs};
use spantag::corpus::{
    build_label_inventory, load_annotations, load_articles_dir, parse_annotations, validate_offsets,
    write_annotations,
};
use spantag::encoder::{HashedEncoder, KeyedEncoder, PrecomputedVectors};
use spantag::models::{predict_si, predict_tc_with, train_si, train_tc_with, TaggedSentence};
use spantag::pipeline::split_train_dev;
use spantag::scorer::{score_labels, score_si, score_tc};
use spantag::tagcodec::{convert, tag_article, TagSequence};
use spantag::tokenizer::{split_sentences, words};
use spantag::{
    AnnotationKind, Article, CharSpan, ClassifierModel, PipelineConfig, SpanAnnotation, TaggerModel,
};

use crate::manifest::{FileDigest, Manifest};
use crate::output::{digest_path, write_atomic};
use crate::UsageError;

pub const COMMANDS: [&str; 12] = [
    "ingest",
    "encode-tags",
    "decode-tags",
    "convert-tags",
    "score-si",
    "score-tc",
    "extract-context",
    "train-si",
    "predict-si",
    "train-tc",
    "predict-tc",
    "stats",
];

/// One command execution: reads inputs named in the config, writes outputs
/// and remembers digests of both for the manifest.
pub struct Job {
    pub command: String,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Primary output when no `output` path is configured.
    pub stdout: String,
    /// Progress and summary lines.
    pub notes: String,
}

impl Job {
    pub fn new(command: &str, mut config: PipelineConfig) -> Result<Self> {
        for path in config.paths.values_mut() {
            *path = std::path::absolute(&*path).with_context(|| format!("resolving {}", path.display()))?;
        }
        Ok(Job {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            stdout: String::new(),
            notes: String::new(),
        })
    }

    fn optional(&self, key: &str) -> Option<PathBuf> {
        self.config.paths.get(key).cloned()
    }

    fn required(&self, key: &str) -> Result<PathBuf> {
        self.optional(key).ok_or_else(|| {
            UsageError(format!(
                "{} needs --{} (or `{key} = ...` in the config)",
                self.command,
                key.replace('_', "-")
            ))
            .into()
        })
    }

    fn record_input(&mut self, key: &str, path: &Path) -> Result<()> {
        if self.inputs.iter().any(|d| d.key == key) {
            return Ok(());
        }
        let sha256 = digest_path(path)?;
        self.inputs.push(FileDigest {
            key: key.to_string(),
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    fn input(&mut self, key: &str) -> Result<PathBuf> {
        let path = self.required(key)?;
        self.record_input(key, &path)?;
        Ok(path)
    }

    fn optional_input(&mut self, key: &str) -> Result<Option<PathBuf>> {
        match self.optional(key) {
            Some(path) => {
                self.record_input(key, &path)?;
                Ok(Some(path))
            }
            None => Ok(None),
        }
    }

    fn read_text(&mut self, key: &str) -> Result<(PathBuf, String)> {
        let path = self.input(key)?;
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok((path, text))
    }

    /// Writes `contents` to the path under `key`; the `output` key falls
    /// back to stdout.
    fn emit(&mut self, key: &str, contents: &str) -> Result<()> {
        match self.optional(key) {
            Some(path) => {
                write_atomic(&path, contents.as_bytes())?;
                self.outputs.push(FileDigest {
                    key: key.to_string(),
                    path,
                    sha256: crate::output::sha256_hex(contents.as_bytes()),
                });
                Ok(())
            }
            None if key == "output" => {
                self.stdout.push_str(contents);
                Ok(())
            }
            None => Err(UsageError(format!("{} needs --{}", self.command, key.replace('_', "-"))).into()),
        }
    }

    fn note(&mut self, line: impl AsRef<str>) {
        self.notes.push_str(line.as_ref());
        self.notes.push('\n');
    }

    fn articles(&mut self) -> Result<Vec<Article>> {
        let path = self.input("articles")?;
        let articles = load_articles_dir(&path).with_context(|| format!("loading articles from {}", path.display()))?;
        if articles.is_empty() {
            bail!("{}: no article*.txt files", path.display());
        }
        Ok(articles)
    }

    fn annotations(&mut self, key: &str, kind: AnnotationKind) -> Result<Vec<SpanAnnotation>> {
        let path = self.input(key)?;
        load_annotations(&path, kind).with_context(|| format!("{}", path.display()))
    }

    fn optional_annotations(&mut self, key: &str, kind: AnnotationKind) -> Result<Option<Vec<SpanAnnotation>>> {
        if self.optional(key).is_none() {
            return Ok(None);
        }
        self.annotations(key, kind).map(Some)
    }

    /// TC labels when configured, SI labels otherwise.
    fn any_annotations(&mut self) -> Result<Vec<SpanAnnotation>> {
        if self.optional("tc_labels").is_some() {
            self.annotations("tc_labels", AnnotationKind::Tc)
        } else if self.optional("si_labels").is_some() {
            self.annotations("si_labels", AnnotationKind::Si)
        } else {
            Err(UsageError(format!("{} needs --tc-labels or --si-labels", self.command)).into())
        }
    }

    fn vectors(&mut self, dim: usize) -> Result<Option<PrecomputedVectors>> {
        let Some(path) = self.optional_input("vectors")? else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        PrecomputedVectors::parse(&text, dim)
            .map(Some)
            .with_context(|| format!("{}", path.display()))
    }
}

pub fn execute(command: &str, config: PipelineConfig) -> Result<Job> {
    let mut job = Job::new(command, config)?;
    match command {
        "ingest" => ingest(&mut job)?,
        "encode-tags" => encode_tags(&mut job)?,
        "decode-tags" => decode_tags(&mut job)?,
        "convert-tags" => convert_tags(&mut job)?,
        "score-si" => score_si_cmd(&mut job)?,
        "score-tc" => score_tc_cmd(&mut job)?,
        "extract-context" => extract_context(&mut job)?,
        "train-si" => train_si_cmd(&mut job)?,
        "predict-si" => predict_si_cmd(&mut job)?,
        "train-tc" => train_tc_cmd(&mut job)?,
        "predict-tc" => predict_tc_cmd(&mut job)?,
        "stats" => stats(&mut job)?,
        other => return Err(UsageError(format!("unknown command {other:?}")).into()),
    }
    Ok(job)
}

/// Writes a manifest next to every file output.
pub fn write_manifests(job: &Job) -> Result<()> {
    if job.outputs.is_empty() {
        return Ok(());
    }
    let manifest = Manifest {
        tool: "spantag".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: job.command.clone(),
        seed: job.config.train.seed,
        config: Manifest::config_map(&job.config),
        inputs: job.inputs.clone(),
        outputs: job.outputs.clone(),
    };
    for out in &job.outputs {
        manifest.write(&Manifest::path_for(&out.path))?;
    }
    Ok(())
}

/// Repeats the run recorded in `manifest_path`. Inputs must be unchanged;
/// the new outputs must match the recorded digests.
pub fn rerun(manifest_path: &Path, output: Option<&Path>) -> Result<Job> {
    let manifest = Manifest::read(manifest_path)?;
    if !COMMANDS.contains(&manifest.command.as_str()) {
        bail!("{}: unknown command {:?}", manifest_path.display(), manifest.command);
    }
    for input in &manifest.inputs {
        let now = digest_path(&input.path)?;
        if now != input.sha256 {
            bail!("input {} changed since {} was written", input.path.display(), manifest_path.display());
        }
    }
    let mut config = manifest.pipeline_config()?;
    if let Some(out) = output {
        let out = std::path::absolute(out)?;
        for (i, recorded) in manifest.outputs.iter().enumerate() {
            let path = if i == 0 {
                out.clone()
            } else {
                let mut name = out.as_os_str().to_owned();
                name.push(format!(".{}", recorded.key));
                PathBuf::from(name)
            };
            config.paths.insert(recorded.key.clone(), path);
        }
    }
    let mut job = execute(&manifest.command, config)?;
    write_manifests(&job)?;
    for recorded in &manifest.outputs {
        let produced = job
            .outputs
            .iter()
            .find(|o| o.key == recorded.key)
            .ok_or_else(|| anyhow!("rerun produced no {} output", recorded.key))?;
        if produced.sha256 != recorded.sha256 {
            bail!("{} differs from the recorded output {}", produced.path.display(), recorded.path.display());
        }
        let line = format!("reproduced\t{}", produced.path.display());
        job.note(line);
    }
    Ok(job)
}

fn sentence_words(article: &Article, span: CharSpan) -> usize {
    words(article.slice(span).unwrap_or(""), span.begin).len()
}

fn spans_by_article(annotations: &[SpanAnnotation]) -> HashMap<&str, Vec<CharSpan>> {
    let mut map: HashMap<&str, Vec<CharSpan>> = HashMap::new();
    for a in annotations {
        map.entry(a.article_id.as_str()).or_default().push(a.span);
    }
    map
}

fn ingest(job: &mut Job) -> Result<()> {
    let articles = job.articles()?;
    let scheme = job.config.scheme;
    let mut report = String::new();
    let mut sentences = 0usize;
    let mut tokens = 0usize;
    let mut max_tokens = 0usize;
    let mut max_words = 0usize;
    for article in &articles {
        for s in split_sentences(article) {
            sentences += 1;
            tokens += s.tokens.len();
            max_tokens = max_tokens.max(s.tokens.len());
            max_words = max_words.max(sentence_words(article, s.span));
        }
    }
    let _ = writeln!(report, "articles\t{}", articles.len());
    let _ = writeln!(report, "sentences\t{sentences}");
    let _ = writeln!(report, "tokens\t{tokens}");
    let _ = writeln!(report, "max_sentence_tokens\t{max_tokens}");
    let _ = writeln!(report, "max_sentence_words\t{max_words}");

    if let Some(si) = job.optional_annotations("si_labels", AnnotationKind::Si)? {
        validate_offsets(&si, &articles).context("checking SI offsets")?;
        let by_article = spans_by_article(&si);
        let mut positive = 0usize;
        for article in &articles {
            let spans = by_article.get(article.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            for (_, tags) in tag_article(article, spans, scheme) {
                positive += tags.labels().iter().filter(|t| t.is_positive()).count();
            }
        }
        let fraction = if tokens == 0 { 0.0 } else { positive as f64 / tokens as f64 };
        let mean = mean_len(&si);
        let _ = writeln!(report, "si_spans\t{}", si.len());
        let _ = writeln!(report, "si_mean_span_chars\t{mean:.4}");
        let _ = writeln!(report, "positive_tokens\t{positive}");
        let _ = writeln!(report, "positive_token_fraction\t{fraction:.6}");
    }
    if let Some(tc) = job.optional_annotations("tc_labels", AnnotationKind::Tc)? {
        validate_offsets(&tc, &articles).context("checking TC offsets")?;
        let inventory = build_label_inventory(&tc)?;
        let _ = writeln!(report, "tc_pairs\t{}", tc.len());
        let _ = writeln!(report, "tc_mean_span_chars\t{:.4}", mean_len(&tc));
        let _ = writeln!(report, "techniques\t{}", inventory.len());
        for (name, count) in class_histogram(&tc) {
            let _ = writeln!(report, "technique:{name}\t{count}");
        }
    }
    job.emit("output", &report)
}

fn mean_len(annotations: &[SpanAnnotation]) -> f64 {
    if annotations.is_empty() {
        return 0.0;
    }
    annotations.iter().map(|a| a.span.len()).sum::<usize>() as f64 / annotations.len() as f64
}

fn encode_tags(job: &mut Job) -> Result<()> {
    let articles = job.articles()?;
    let si = job.annotations("si_labels", AnnotationKind::Si)?;
    validate_offsets(&si, &articles).context("checking SI offsets")?;
    let by_article = spans_by_article(&si);
    let mut out = String::new();
    for article in &articles {
        let spans = by_article.get(article.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        for (sentence, tags) in tag_article(article, spans, job.config.scheme) {
            let _ = writeln!(out, "{}\t{}\t{}\t{tags}", article.id, sentence.span.begin, sentence.span.end);
        }
    }
    job.emit("output", &out)
}

fn decode_tags(job: &mut Job) -> Result<()> {
    let articles = job.articles()?;
    let (path, text) = job.read_text("tags")?;
    let scheme = job.config.scheme;
    let mut sentences = HashMap::new();
    for article in &articles {
        for s in split_sentences(article) {
            sentences.insert((article.id.clone(), s.span.begin, s.span.end), s);
        }
    }
    let mut annotations = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}: line {}", path.display(), idx + 1);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            bail!("{}: expected 4 tab-separated fields, found {}", at(), f.len());
        }
        let begin: usize = f[1].parse().map_err(|_| anyhow!("{}: bad offset {:?}", at(), f[1]))?;
        let end: usize = f[2].parse().map_err(|_| anyhow!("{}: bad offset {:?}", at(), f[2]))?;
        let sentence = sentences
            .get(&(f[0].to_string(), begin, end))
            .ok_or_else(|| anyhow!("{}: no sentence {}:{}-{} in the articles", at(), f[0], begin, end))?;
        let tags = TagSequence::parse(scheme, f[3]).with_context(at)?;
        let spans = spantag::tagcodec::decode(&tags, &sentence.tokens).with_context(at)?;
        annotations.extend(spans.into_iter().map(|s| SpanAnnotation::si(f[0], s)));
    }
    annotations.sort_by(|a, b| (&a.article_id, a.span).cmp(&(&b.article_id, b.span)));
    let out = write_annotations(&annotations, AnnotationKind::Si)?;
    job.emit("output", &out)
}

fn convert_tags(job: &mut Job) -> Result<()> {
    let from = job
        .config
        .from_scheme
        .ok_or_else(|| UsageError("convert-tags needs --from".into()))?;
    let to = job.config.scheme;
    let (label, text) = match job.optional_input("input")? {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            (path.display().to_string(), text)
        }
        None => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text).context("reading stdin")?;
            ("<stdin>".to_string(), text)
        }
    };
    let mut out = String::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (prefix, tags) = match line.rfind('\t') {
            Some(i) => line.split_at(i + 1),
            None => ("", line),
        };
        let seq = TagSequence::parse(from, tags).with_context(|| format!("{label}: line {}", idx + 1))?;
        let _ = writeln!(out, "{prefix}{}", convert(&seq, to));
    }
    job.emit("output", &out)
}

fn score_si_cmd(job: &mut Job) -> Result<()> {
    let pred = job.annotations("pred", AnnotationKind::Si)?;
    let gold = job.annotations("gold", AnnotationKind::Si)?;
    let score = score_si(&pred, &gold)?;
    job.emit("output", &score.to_tsv())
}

fn score_tc_cmd(job: &mut Job) -> Result<()> {
    let pred = job.annotations("pred", AnnotationKind::Tc)?;
    let gold = job.annotations("gold", AnnotationKind::Tc)?;
    let score = score_tc(&pred, &gold)?;
    if job.optional("per_class").is_some() {
        job.emit("per_class", &score.per_class_tsv())?;
    }
    job.emit("output", &score.to_tsv())
}

fn extract_context(job: &mut Job) -> Result<()> {
    let articles = job.articles()?;
    let annotations = job.any_annotations()?;
    let pairs = build_tc_dataset(&articles, &annotations, job.config.context_kind, &job.config.context)?;
    job.emit("output", &write_pairs(&pairs))
}

/// Splits articles by id and returns the ids of the training side.
fn split_articles(job: &Job, articles: &[Article]) -> Result<BTreeSet<String>> {
    let ids: Vec<String> = articles.iter().map(|a| a.id.clone()).collect();
    let (train, _) = split_train_dev(ids, job.config.split, job.config.train.seed)?;
    Ok(train.into_iter().collect())
}

fn train_si_cmd(job: &mut Job) -> Result<()> {
    job.required("model")?;
    let articles = job.articles()?;
    let si = job.annotations("si_labels", AnnotationKind::Si)?;
    validate_offsets(&si, &articles).context("checking SI offsets")?;
    let train_ids = split_articles(job, &articles)?;
    let by_article = spans_by_article(&si);
    let scheme = job.config.scheme;

    let mut sentences = Vec::new();
    for article in articles.iter().filter(|a| train_ids.contains(&a.id)) {
        let spans = by_article.get(article.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        for (sentence, tags) in tag_article(article, spans, scheme) {
            sentences.push(TaggedSentence {
                tokens: sentence.tokens,
                tags,
            });
        }
    }
    let model = train_si(&sentences, scheme, &job.config.train)?;
    job.emit("model", &model.to_text())?;

    let dev: Vec<&Article> = articles.iter().filter(|a| !train_ids.contains(&a.id)).collect();
    job.note(format!("train_articles\t{}", train_ids.len()));
    job.note(format!("dev_articles\t{}", dev.len()));
    if let Some(loss) = model.loss_trace.last() {
        job.note(format!("final_loss\t{loss}"));
    }
    if !dev.is_empty() {
        let mut pred = Vec::new();
        for article in &dev {
            pred.extend(predict_si(&model, article)?.into_iter().map(|s| SpanAnnotation::si(&article.id, s)));
        }
        let gold: Vec<SpanAnnotation> = si.iter().filter(|a| !train_ids.contains(&a.article_id)).cloned().collect();
        let score = score_si(&pred, &gold)?;
        job.note(format!("dev_precision\t{}\ndev_recall\t{}\ndev_f1\t{}", score.precision, score.recall, score.f1));
    }
    Ok(())
}

fn predict_si_cmd(job: &mut Job) -> Result<()> {
    let (path, text) = job.read_text("model")?;
    let model = TaggerModel::from_text(&text).with_context(|| format!("{}", path.display()))?;
    let articles = job.articles()?;
    let mut pred = Vec::new();
    for article in &articles {
        pred.extend(predict_si(&model, article)?.into_iter().map(|s| SpanAnnotation::si(&article.id, s)));
    }
    let out = write_annotations(&pred, AnnotationKind::Si)?;
    job.emit("output", &out)
}

fn train_tc_cmd(job: &mut Job) -> Result<()> {
    job.required("model")?;
    let strategy = job.config.combination_strategy().map_err(|e| UsageError(e.to_string()))?;
    let articles = job.articles()?;
    let tc = job.annotations("tc_labels", AnnotationKind::Tc)?;
    validate_offsets(&tc, &articles).context("checking TC offsets")?;
    let train_ids = split_articles(job, &articles)?;
    let (train_anns, dev_anns): (Vec<SpanAnnotation>, Vec<SpanAnnotation>) =
        tc.into_iter().partition(|a| train_ids.contains(&a.article_id));
    let kind = job.config.context_kind;
    let ctx = job.config.context;
    let train_pairs = build_tc_dataset(&articles, &train_anns, kind, &ctx)?;

    let config = job.config.train;
    let vectors = job.vectors(config.dim)?;
    let base = HashedEncoder::new(config.dim);
    let encoder = KeyedEncoder {
        base: &base,
        overrides: vectors.as_ref(),
    };
    let mut model = train_tc_with(&encoder, &train_pairs, strategy, job.config.length_feature, &config)?;
    model.context_kind = kind;
    model.context_config = ctx;
    job.emit("model", &model.to_text())?;

    job.note(format!("train_pairs\t{}", train_pairs.len()));
    job.note(format!("dev_pairs\t{}", dev_anns.len()));
    job.note(format!("classes\t{}", model.labels.len()));
    if let Some(loss) = model.loss_trace.last() {
        job.note(format!("final_loss\t{loss}"));
    }
    if !dev_anns.is_empty() {
        let dev_pairs = build_tc_dataset(&articles, &dev_anns, kind, &ctx)?;
        let mut pred = Vec::with_capacity(dev_pairs.len());
        for pair in &dev_pairs {
            pred.push(predict_tc_with(&encoder, &model, pair)?.technique);
        }
        let gold: Vec<String> = dev_anns.iter().map(|a| a.technique.clone().unwrap_or_default()).collect();
        let score = score_labels(&pred, &gold)?;
        job.note(format!("dev_micro_f1\t{}", score.micro_f1));
    }
    Ok(())
}

/// Span file for prediction: TC rows have four fields, SI rows three.
fn parse_span_file(path: &Path, text: &str) -> Result<Vec<SpanAnnotation>> {
    let fields = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').count())
        .unwrap_or(3);
    let kind = if fields == 4 { AnnotationKind::Tc } else { AnnotationKind::Si };
    parse_annotations(text, kind).with_context(|| format!("{}", path.display()))
}

fn predict_tc_cmd(job: &mut Job) -> Result<()> {
    let (path, text) = job.read_text("model")?;
    let model = ClassifierModel::from_text(&text).with_context(|| format!("{}", path.display()))?;
    let articles = job.articles()?;
    let key = ["input", "tc_labels", "si_labels"]
        .into_iter()
        .find(|k| job.optional(k).is_some())
        .ok_or_else(|| UsageError("predict-tc needs --input, --tc-labels or --si-labels".into()))?;
    let spans = if key == "input" {
        let (path, text) = job.read_text("input")?;
        parse_span_file(&path, &text)?
    } else {
        job.any_annotations()?
    };
    let pairs = build_tc_dataset(&articles, &spans, model.context_kind, &model.context_config)?;
    let vectors = job.vectors(model.config.dim)?;
    let base = HashedEncoder::new(model.config.dim);
    let encoder = KeyedEncoder {
        base: &base,
        overrides: vectors.as_ref(),
    };
    let mut pred = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let p = predict_tc_with(&encoder, &model, pair)?;
        pred.push(SpanAnnotation::tc(&pair.article_id, p.technique, pair.span));
    }
    let out = write_annotations(&pred, AnnotationKind::Tc)?;
    job.emit("output", &out)
}

fn stats(job: &mut Job) -> Result<()> {
    let annotations = job.any_annotations()?;
    let unit = job.config.unit;
    let articles = if job.optional("articles").is_some() {
        let articles = job.articles()?;
        validate_offsets(&annotations, &articles).context("checking offsets")?;
        articles
    } else if unit == LengthUnit::Words {
        return Err(UsageError("word lengths need --articles".into()).into());
    } else {
        Vec::new()
    };
    let width = job.config.bin_width.unwrap_or(unit.default_bin_width());
    let histograms = span_length_distribution(&annotations, &articles, unit, job.config.grouping, width)?;
    let csv = histograms_to_csv(&histograms)?;

    if annotations.iter().any(|a| a.technique.is_some()) {
        for (name, count) in class_histogram(&annotations) {
            job.note(format!("{name}\t{count}"));
        }
    }
    job.note(format!("spans\t{}", annotations.len()));
    job.note(format!("mean_span_chars\t{:.4}", mean_len(&annotations)));
    for h in &histograms {
        job.note(format!("{}\tcount={}\tmean={:.4}\tmedian={}", h.group, h.count, h.mean, h.median));
    }
    job.emit("output", &csv)
}
