use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spantag::PipelineConfig;

use crate::UsageError;

#[derive(Parser, Debug)]
#[command(name = "spantag", version, about = "Propaganda span identification and technique classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a corpus and print sentence, token and label statistics.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        scheme: SchemeArg,
    },
    /// Write one tag line per sentence for the gold SI spans.
    EncodeTags {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        scheme: SchemeArg,
    },
    /// Turn tag lines back into an SI span file.
    DecodeTags {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        scheme: SchemeArg,
        /// Tag file written by encode-tags or predict output.
        #[arg(long)]
        tags: Option<PathBuf>,
    },
    /// Convert tag sequences between schemes (stdin to stdout by default).
    ConvertTags {
        #[command(flatten)]
        common: Common,
        #[arg(long = "from")]
        from: Option<String>,
        #[arg(long = "to")]
        to: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Overlap precision, recall and F1 of predicted spans.
    ScoreSi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: Eval,
    },
    /// Micro-F1 and per-class scores of technique predictions.
    ScoreTc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: Eval,
        #[arg(long)]
        per_class: Option<PathBuf>,
    },
    /// Pair every technique span with its context.
    ExtractContext {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        context: ContextArgs,
    },
    /// Train the span tagger.
    TrainSi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        scheme: SchemeArg,
        #[command(flatten)]
        train: Train,
        /// Where to write the trained model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Predict spans with a trained tagger.
    PredictSi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the technique classifier.
    TrainTc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        context: ContextArgs,
        #[command(flatten)]
        tc: TcArgs,
        #[command(flatten)]
        train: Train,
        /// Where to write the trained model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classify spans with a trained classifier.
    PredictTc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Spans to classify (SI or TC file); defaults to the label files.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    /// Class histogram and span length distributions as CSV.
    Stats {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// chars or words
        #[arg(long)]
        unit: Option<String>,
        /// all, technique or category
        #[arg(long)]
        grouping: Option<String>,
        #[arg(long)]
        bin_width: Option<usize>,
    },
    /// Re-run a command from its manifest and check the outputs match.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Write the primary output here instead of the recorded path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// key = value config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; falls back to SPANTAG_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct Data {
    /// Directory of article<id>.txt files.
    #[arg(long)]
    pub articles: Option<PathBuf>,
    #[arg(long)]
    pub si_labels: Option<PathBuf>,
    #[arg(long)]
    pub tc_labels: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SchemeArg {
    /// PNP, BIO, BIOE or BIOES
    #[arg(long)]
    pub scheme: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct Eval {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ContextArgs {
    /// SENTENCE, TITLE or NONE
    #[arg(long)]
    pub context: Option<String>,
    /// Word cap for sentence context.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Count only context words against the cap.
    #[arg(long)]
    pub cap_excludes_fragment: bool,
}

#[derive(Args, Debug, Default)]
pub struct TcArgs {
    /// NONE, CONCAT_TEXT, CONCAT_EMBED, CONCAT_EMBED_HIDDEN, ADD or WEIGHTED_AVG
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub length_feature: bool,
    /// Precomputed vectors TSV.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct Train {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Fraction of articles used for training.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub class_weighting: bool,
}

/// Collects flag values as config `key = value` overrides.
#[derive(Default)]
struct Overrides(Vec<(&'static str, String)>);

impl Overrides {
    fn opt<T: ToString>(&mut self, key: &'static str, value: &Option<T>) {
        if let Some(v) = value {
            self.0.push((key, v.to_string()));
        }
    }

    fn path(&mut self, key: &'static str, value: &Option<PathBuf>) {
        if let Some(v) = value {
            self.0.push((key, v.display().to_string()));
        }
    }

    fn flag(&mut self, key: &'static str, on: bool, value: bool) {
        if on {
            self.0.push((key, value.to_string()));
        }
    }

    fn common(&mut self, c: &Common) {
        self.opt("seed", &c.seed);
        self.path("output", &c.output);
    }

    fn data(&mut self, d: &Data) {
        self.path("articles", &d.articles);
        self.path("si_labels", &d.si_labels);
        self.path("tc_labels", &d.tc_labels);
    }

    fn context(&mut self, c: &ContextArgs) {
        self.opt("context", &c.context);
        self.opt("context_cap", &c.cap);
        self.flag("cap_includes_fragment", c.cap_excludes_fragment, false);
    }

    fn tc(&mut self, t: &TcArgs) {
        self.opt("strategy", &t.strategy);
        self.opt("alpha", &t.alpha);
        self.opt("hidden_dim", &t.hidden_dim);
        self.flag("length_feature", t.length_feature, true);
        self.path("vectors", &t.vectors);
    }

    fn train(&mut self, t: &Train) {
        self.opt("lr", &t.lr);
        self.opt("epochs", &t.epochs);
        self.opt("batch_size", &t.batch_size);
        self.opt("dim", &t.dim);
        self.opt("split", &t.split);
        self.flag("class_weighting", t.class_weighting, true);
    }
}

pub const SEED_ENV: &str = "SPANTAG_SEED";

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::EncodeTags { .. } => "encode-tags",
            Command::DecodeTags { .. } => "decode-tags",
            Command::ConvertTags { .. } => "convert-tags",
            Command::ScoreSi { .. } => "score-si",
            Command::ScoreTc { .. } => "score-tc",
            Command::ExtractContext { .. } => "extract-context",
            Command::TrainSi { .. } => "train-si",
            Command::PredictSi { .. } => "predict-si",
            Command::TrainTc { .. } => "train-tc",
            Command::PredictTc { .. } => "predict-tc",
            Command::Stats { .. } => "stats",
            Command::Rerun { .. } => "rerun",
        }
    }

    fn common(&self) -> Option<&Common> {
        match self {
            Command::Ingest { common, .. }
            | Command::EncodeTags { common, .. }
            | Command::DecodeTags { common, .. }
            | Command::ConvertTags { common, .. }
            | Command::ScoreSi { common, .. }
            | Command::ScoreTc { common, .. }
            | Command::ExtractContext { common, .. }
            | Command::TrainSi { common, .. }
            | Command::PredictSi { common, .. }
            | Command::TrainTc { common, .. }
            | Command::PredictTc { common, .. }
            | Command::Stats { common, .. } => Some(common),
            Command::Rerun { .. } => None,
        }
    }

    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        if let Some(c) = self.common() {
            o.common(c);
        }
        match self {
            Command::Ingest { data, scheme, .. } | Command::EncodeTags { data, scheme, .. } => {
                o.data(data);
                o.opt("scheme", &scheme.scheme);
            }
            Command::DecodeTags { data, scheme, tags, .. } => {
                o.data(data);
                o.opt("scheme", &scheme.scheme);
                o.path("tags", tags);
            }
            Command::ConvertTags { from, to, input, .. } => {
                o.opt("from_scheme", from);
                o.opt("scheme", to);
                o.path("input", input);
            }
            Command::ScoreSi { eval, .. } => {
                o.path("pred", &eval.pred);
                o.path("gold", &eval.gold);
            }
            Command::ScoreTc { eval, per_class, .. } => {
                o.path("pred", &eval.pred);
                o.path("gold", &eval.gold);
                o.path("per_class", per_class);
            }
            Command::ExtractContext { data, context, .. } => {
                o.data(data);
                o.context(context);
            }
            Command::TrainSi { data, scheme, train, model, .. } => {
                o.data(data);
                o.path("model", model);
                o.opt("scheme", &scheme.scheme);
                o.train(train);
            }
            Command::PredictSi { data, model, .. } => {
                o.data(data);
                o.path("model", model);
            }
            Command::TrainTc { data, context, tc, train, model, .. } => {
                o.data(data);
                o.path("model", model);
                o.context(context);
                o.tc(tc);
                o.train(train);
            }
            Command::PredictTc { data, model, input, vectors, .. } => {
                o.data(data);
                o.path("model", model);
                o.path("input", input);
                o.path("vectors", vectors);
            }
            Command::Stats { data, unit, grouping, bin_width, .. } => {
                o.data(data);
                o.opt("unit", unit);
                o.opt("grouping", grouping);
                o.opt("bin_width", bin_width);
            }
            Command::Rerun { .. } => {}
        }
        o
    }

    /// Defaults, then SPANTAG_SEED, then the config file, then flags.
    pub fn resolve_config(&self, env_seed: Option<String>) -> anyhow::Result<PipelineConfig> {
        let mut config = PipelineConfig::default();
        if let Some(seed) = env_seed {
            config
                .set("seed", seed.trim())
                .map_err(|e| UsageError(format!("{SEED_ENV}: {e}")))?;
        }
        if let Some(path) = self.common().and_then(|c| c.config.as_ref()) {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
            config
                .apply_text(&text)
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        }
        for (key, value) in self.overrides().0 {
            config
                .set(key, &value)
                .map_err(|e| UsageError(format!("--{}: {e}", key.replace('_', "-"))))?;
        }
        Ok(config)
    }
}
