//! Per-season, per-direction aggregation of message cues.

use serde::{Deserialize, Serialize};

use super::cues::{extract_message_cues_with, MessageCues, Scorers};
use super::lexicon::LexiconSet;
use crate::gamelog::{Message, Power, Recipient};

/// Cue names in feature-vector order.
pub const CUE_NAMES: [&str; N_CUES] = [
    "messages",
    "sentences",
    "words",
    "positive_sentiment",
    "neutral_sentiment",
    "negative_sentiment",
    "comparison",
    "contingency",
    "expansion",
    "temporal",
    "planning",
    "claims",
    "premises",
    "requests",
    "politeness",
    "subjectivity",
];

pub const N_CUES: usize = 16;

/// Index of a cue in [`CUE_NAMES`].
pub fn cue_index(name: &str) -> Option<usize> {
    CUE_NAMES.iter().position(|n| *n == name)
}

/// Normalized cue values for the messages one player sent to the other
/// in one season.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionCues {
    pub n_messages: usize,
    pub values: [f64; N_CUES],
}

impl DirectionCues {
    pub fn zero() -> Self {
        DirectionCues {
            n_messages: 0,
            values: [0.0; N_CUES],
        }
    }

    pub fn get(&self, cue: &str) -> f64 {
        self.values[cue_index(cue).expect("known cue name")]
    }

    /// Pool the cues of several messages. Rates are per sentence except for
    /// requests (per message) and politeness (mean message score).
    pub fn from_messages(cues: &[MessageCues]) -> Self {
        if cues.is_empty() {
            return DirectionCues::zero();
        }
        let n = cues.len() as f64;
        let sum = |f: fn(&MessageCues) -> usize| cues.iter().map(f).sum::<usize>() as f64;
        let sentences = sum(|c| c.n_sentences);
        let per_sentence = |x: f64| if sentences > 0.0 { x / sentences } else { 0.0 };
        // summing in sorted order keeps the mean independent of message order
        let mut politeness: Vec<f64> = cues.iter().map(|c| c.politeness).collect();
        politeness.sort_by(f64::total_cmp);
        let values = [
            n,
            sentences / n,
            per_sentence(sum(|c| c.n_words)),
            per_sentence(sum(|c| c.sentiment.positive)),
            per_sentence(sum(|c| c.sentiment.neutral)),
            per_sentence(sum(|c| c.sentiment.negative)),
            per_sentence(sum(|c| c.connectives.comparison)),
            per_sentence(sum(|c| c.connectives.contingency)),
            per_sentence(sum(|c| c.connectives.expansion)),
            per_sentence(sum(|c| c.connectives.temporal)),
            per_sentence(sum(|c| c.planning)),
            per_sentence(sum(|c| c.claims)),
            per_sentence(sum(|c| c.premises)),
            sum(|c| c.requests) / n,
            politeness.iter().sum::<f64>() / n,
            per_sentence(sum(|c| c.subjectivity)),
        ];
        DirectionCues {
            n_messages: cues.len(),
            values,
        }
    }
}

/// Features of one dyad-season with roles assigned: `betrayer` is the
/// (potential) betrayer B and `victim` the (potential) victim V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonFeatures {
    pub betrayer: DirectionCues,
    pub victim: DirectionCues,
}

pub const N_FEATURES: usize = 3 * N_CUES;

impl SeasonFeatures {
    /// `B − V` for every cue.
    pub fn imbalance(&self) -> [f64; N_CUES] {
        let mut out = [0.0; N_CUES];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.betrayer.values[i] - self.victim.values[i];
        }
        out
    }

    /// `[B cues.., V cues.., B−V cues..]`, named by [`feature_names`].
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(N_FEATURES);
        v.extend_from_slice(&self.betrayer.values);
        v.extend_from_slice(&self.victim.values);
        v.extend_from_slice(&self.imbalance());
        v
    }

    pub fn swapped(&self) -> Self {
        SeasonFeatures {
            betrayer: self.victim,
            victim: self.betrayer,
        }
    }
}

/// Names of the entries of [`SeasonFeatures::to_vector`]: `B:<cue>`,
/// `V:<cue>` and `B-V:<cue>`.
pub fn feature_names() -> Vec<String> {
    let mut out = Vec::with_capacity(N_FEATURES);
    for prefix in ["B", "V", "B-V"] {
        out.extend(CUE_NAMES.iter().map(|c| format!("{prefix}:{c}")));
    }
    out
}

/// Aggregate the messages B and V exchanged in one season. Messages between
/// other players are ignored.
pub fn aggregate_season_features<'a, I>(
    messages: I,
    betrayer: Power,
    victim: Power,
    lexicon: &LexiconSet,
) -> SeasonFeatures
where
    I: IntoIterator<Item = &'a Message>,
{
    aggregate_season_features_with(messages, betrayer, victim, lexicon, &Scorers::lexicon_defaults(lexicon))
}

pub fn aggregate_season_features_with<'a, I>(
    messages: I,
    betrayer: Power,
    victim: Power,
    lexicon: &LexiconSet,
    scorers: &Scorers,
) -> SeasonFeatures
where
    I: IntoIterator<Item = &'a Message>,
{
    let mut from_b = Vec::new();
    let mut from_v = Vec::new();
    for m in messages {
        if m.admin {
            continue;
        }
        match (m.sender, m.recipient) {
            (s, Recipient::Power(r)) if s == betrayer && r == victim => {
                from_b.push(extract_message_cues_with(&m.text, lexicon, scorers))
            }
            (s, Recipient::Power(r)) if s == victim && r == betrayer => {
                from_v.push(extract_message_cues_with(&m.text, lexicon, scorers))
            }
            _ => {}
        }
    }
    SeasonFeatures {
        betrayer: DirectionCues::from_messages(&from_b),
        victim: DirectionCues::from_messages(&from_v),
    }
}
