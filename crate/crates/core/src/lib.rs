//! Propaganda span identification and technique classification.
//!
//! The span pipeline turns character-offset annotations into per-token tags
//! ([`tagcodec`]), trains a per-token classifier ([`models::train_si`]) and
//! decodes predictions back to character spans scored with overlap F1
//! ([`scorer::score_si`]). The technique pipeline pairs each fragment with a
//! sentence or title context ([`context`]), encodes both ([`encoder`]),
//! combines them under a [`CombinationStrategy`] and trains a softmax
//! classifier ([`models::train_tc`]).

pub mod analytics;
pub mod context;
pub mod corpus;
pub mod encoder;
mod error;
pub mod models;
pub mod pipeline;
pub mod scorer;
pub mod tagcodec;
pub mod tokenizer;

pub use context::{ContextConfig, ContextKind, ContextPair};
pub use corpus::{AnnotationKind, Article, CharSpan, LabelInventory, SpanAnnotation};
pub use encoder::{CombinationStrategy, HashedEncoder, SeqVector, SequenceEncoder};
pub use error::{Error, Result};
pub use models::{ClassifierModel, TaggerModel, TrainConfig};
pub use pipeline::PipelineConfig;
pub use scorer::{SiScore, TcScore};
pub use tagcodec::{Tag, TagSequence, TaggingScheme};
pub use tokenizer::{Sentence, Token};
