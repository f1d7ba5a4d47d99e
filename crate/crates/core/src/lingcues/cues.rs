//! Per-message cue extraction and the pluggable scorer interfaces.

use serde::{Deserialize, Serialize};

use super::lexicon::{ConnectiveClass, LexiconSet, Polarity};
use super::text::{segment_sentences, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Neutral,
    Negative,
}

/// Three-way sentence sentiment.
pub trait SentimentScorer {
    fn label(&self, sentence: &str, tokens: &[String]) -> Sentiment;
}

/// Message-level politeness in `[0, 1]`.
pub trait PolitenessScorer {
    fn score(&self, sentences: &[&str]) -> f64;
}

/// Binary request detection per sentence.
pub trait RequestDetector {
    fn is_request(&self, sentence: &str, tokens: &[String]) -> bool;
}

const NEGATORS: &[&str] = &[
    "not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "cannot", "without",
    "hardly",
];

/// How many tokens after a negator a polarity word gets flipped.
pub const NEGATION_WINDOW: usize = 3;

fn is_negator(token: &str) -> bool {
    NEGATORS.contains(&token) || token.ends_with("n't")
}

/// Counts lexicon polarity hits, flipping a hit that falls within three
/// tokens after a negator. The sign of the total decides the label.
pub struct LexiconSentiment<'a>(pub &'a LexiconSet);

impl SentimentScorer for LexiconSentiment<'_> {
    fn label(&self, _sentence: &str, tokens: &[String]) -> Sentiment {
        let mut score = 0i64;
        for (i, tok) in tokens.iter().enumerate() {
            let Some(polarity) = self.0.sentiment_lexicon().get(tok) else {
                continue;
            };
            let mut value = match polarity {
                Polarity::Positive => 1,
                Polarity::Negative => -1,
            };
            let lo = i.saturating_sub(NEGATION_WINDOW);
            if tokens[lo..i].iter().any(|t| is_negator(t)) {
                value = -value;
            }
            score += value;
        }
        match score.signum() {
            1 => Sentiment::Positive,
            -1 => Sentiment::Negative,
            _ => Sentiment::Neutral,
        }
    }
}

/// Logistic squash of the weighted sum of politeness cue matches. A
/// heuristic stand-in for a trained politeness classifier.
pub struct CuePoliteness<'a>(pub &'a LexiconSet);

impl CuePoliteness<'_> {
    pub fn raw_score(&self, sentences: &[&str]) -> f64 {
        let mut total = 0.0;
        for s in sentences {
            let lowered = s.trim().to_lowercase();
            for cue in self.0.politeness_cues() {
                total += cue.weight * cue.pattern.find_iter(&lowered).count() as f64;
            }
        }
        total
    }
}

impl PolitenessScorer for CuePoliteness<'_> {
    fn score(&self, sentences: &[&str]) -> f64 {
        1.0 / (1.0 + (-self.raw_score(sentences)).exp())
    }
}

pub struct PatternRequests<'a>(pub &'a LexiconSet);

impl RequestDetector for PatternRequests<'_> {
    fn is_request(&self, sentence: &str, _tokens: &[String]) -> bool {
        let lowered = sentence.trim().to_lowercase();
        self.0.request_patterns().iter().any(|p| p.is_match(&lowered))
    }
}

/// The scorers used by [`extract_message_cues_with`].
pub struct Scorers<'a> {
    pub sentiment: Box<dyn SentimentScorer + 'a>,
    pub politeness: Box<dyn PolitenessScorer + 'a>,
    pub requests: Box<dyn RequestDetector + 'a>,
}

impl<'a> Scorers<'a> {
    pub fn lexicon_defaults(lexicon: &'a LexiconSet) -> Self {
        Scorers {
            sentiment: Box::new(LexiconSentiment(lexicon)),
            politeness: Box::new(CuePoliteness(lexicon)),
            requests: Box::new(PatternRequests(lexicon)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentCounts {
    pub positive: usize,
    pub neutral: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectiveCounts {
    pub comparison: usize,
    pub contingency: usize,
    pub expansion: usize,
    pub temporal: usize,
}

impl ConnectiveCounts {
    fn add(&mut self, class: ConnectiveClass) {
        match class {
            ConnectiveClass::Comparison => self.comparison += 1,
            ConnectiveClass::Contingency => self.contingency += 1,
            ConnectiveClass::Expansion => self.expansion += 1,
            ConnectiveClass::Temporal => self.temporal += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageCues {
    pub n_sentences: usize,
    pub n_words: usize,
    pub sentiment: SentimentCounts,
    pub connectives: ConnectiveCounts,
    pub planning: usize,
    pub claims: usize,
    pub premises: usize,
    pub requests: usize,
    pub politeness: f64,
    pub subjectivity: usize,
}

/// Label one sentence with the default lexicon scorer.
pub fn sentiment_label(sentence: &str, lexicon: &LexiconSet) -> Sentiment {
    LexiconSentiment(lexicon).label(sentence, &tokenize(sentence))
}

pub fn extract_message_cues(text: &str, lexicon: &LexiconSet) -> MessageCues {
    extract_message_cues_with(text, lexicon, &Scorers::lexicon_defaults(lexicon))
}

/// Count every cue in `text`. Each category is matched independently, so a
/// phrase can count toward several cues.
pub fn extract_message_cues_with(text: &str, lexicon: &LexiconSet, scorers: &Scorers) -> MessageCues {
    let sentences = segment_sentences(text);
    let mut cues = MessageCues {
        n_sentences: sentences.len(),
        ..Default::default()
    };
    for sentence in &sentences {
        let tokens = tokenize(sentence);
        cues.n_words += tokens.len();
        match scorers.sentiment.label(sentence, &tokens) {
            Sentiment::Positive => cues.sentiment.positive += 1,
            Sentiment::Neutral => cues.sentiment.neutral += 1,
            Sentiment::Negative => cues.sentiment.negative += 1,
        }
        for class in lexicon.connective_matcher.find_all(&tokens) {
            cues.connectives.add(class);
        }
        cues.planning += lexicon.planning_matcher.count(&tokens);
        cues.claims += lexicon.claim_matcher.count(&tokens);
        cues.premises += lexicon.premise_matcher.count(&tokens);
        cues.subjectivity += lexicon.subjectivity_matcher.count(&tokens);
        if scorers.requests.is_request(sentence, &tokens) {
            cues.requests += 1;
        }
    }
    cues.politeness = scorers.politeness.score(&sentences);
    cues
}
