//! Linguistic cues: segmentation, lexicon-based cue scoring and per-season
//! feature aggregation.

pub mod cues;
pub mod features;
pub mod lexicon;
pub mod text;

use thiserror::Error;

pub use cues::{
    extract_message_cues, extract_message_cues_with, sentiment_label, MessageCues, Scorers,
    Sentiment,
};
pub use features::{
    aggregate_season_features, aggregate_season_features_with, feature_names, DirectionCues, SeasonFeatures, CUE_NAMES,
    N_FEATURES,
};
pub use lexicon::{prune_frequent_connectives, ConnectiveClass, LexiconSet, Polarity};
pub use text::{segment_sentences, tokenize};

#[derive(Debug, Error)]
pub enum LingError {
    #[error("lexicon file {file}, line {line}: {message}")]
    Lexicon {
        file: String,
        line: usize,
        message: String,
    },
    #[error("empty corpus")]
    EmptyCorpus,
}
