//! Cue lexicons: loading, validation and frequency pruning.
//!
//! A lexicon directory holds:
//!
//! | file               | format                                  |
//! |--------------------|-----------------------------------------|
//! | `connectives.tsv`  | `phrase<TAB>class` (class: comparison, contingency, expansion, temporal) |
//! | `planning.txt`     | phrase per line, each a temporal connective |
//! | `claims.txt`       | phrase per line                         |
//! | `premises.txt`     | phrase per line                         |
//! | `subjectivity.txt` | phrase per line                         |
//! | `positive.txt`     | token per line                          |
//! | `negative.txt`     | token per line                          |
//! | `politeness.tsv`   | `name<TAB>regex<TAB>weight`             |
//! | `requests.txt`     | regex per line                          |
//!
//! Blank lines and lines starting with `#` are ignored everywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::text::{normalize_phrase, segment_sentences, tokenize, PhraseMatcher};
use super::LingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectiveClass {
    Comparison,
    Contingency,
    Expansion,
    Temporal,
}

impl ConnectiveClass {
    pub const ALL: [ConnectiveClass; 4] = [
        ConnectiveClass::Comparison,
        ConnectiveClass::Contingency,
        ConnectiveClass::Expansion,
        ConnectiveClass::Temporal,
    ];
}

impl FromStr for ConnectiveClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "comparison" => Ok(ConnectiveClass::Comparison),
            "contingency" => Ok(ConnectiveClass::Contingency),
            "expansion" => Ok(ConnectiveClass::Expansion),
            "temporal" => Ok(ConnectiveClass::Temporal),
            other => Err(format!("unknown connective class `{other}`")),
        }
    }
}

impl fmt::Display for ConnectiveClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConnectiveClass::Comparison => "comparison",
            ConnectiveClass::Contingency => "contingency",
            ConnectiveClass::Expansion => "expansion",
            ConnectiveClass::Temporal => "temporal",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone)]
pub struct PolitenessCue {
    pub name: String,
    pub pattern: Regex,
    pub weight: f64,
}

/// Raw lexicon contents before validation and compilation.
#[derive(Debug, Clone, Default)]
pub struct LexiconParts {
    pub connectives: Vec<(String, ConnectiveClass)>,
    pub planning_markers: Vec<String>,
    pub claim_markers: Vec<String>,
    pub premise_markers: Vec<String>,
    pub subjectivity_phrases: Vec<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub politeness_cues: Vec<(String, String, f64)>,
    pub request_patterns: Vec<String>,
}

/// Validated, immutable lexicon set with compiled matchers.
#[derive(Debug, Clone)]
pub struct LexiconSet {
    connectives: BTreeMap<String, ConnectiveClass>,
    planning_markers: BTreeSet<String>,
    claim_markers: BTreeSet<String>,
    premise_markers: BTreeSet<String>,
    subjectivity_phrases: BTreeSet<String>,
    sentiment_lexicon: BTreeMap<String, Polarity>,
    politeness_cues: Vec<PolitenessCue>,
    request_patterns: Vec<Regex>,
    pruned: BTreeSet<String>,
    pub(crate) connective_matcher: PhraseMatcher<ConnectiveClass>,
    pub(crate) planning_matcher: PhraseMatcher<()>,
    pub(crate) claim_matcher: PhraseMatcher<()>,
    pub(crate) premise_matcher: PhraseMatcher<()>,
    pub(crate) subjectivity_matcher: PhraseMatcher<()>,
}

const BUILTIN: [(&str, &str); 9] = [
    ("connectives.tsv", include_str!("../../lexicons/connectives.tsv")),
    ("planning.txt", include_str!("../../lexicons/planning.txt")),
    ("claims.txt", include_str!("../../lexicons/claims.txt")),
    ("premises.txt", include_str!("../../lexicons/premises.txt")),
    ("subjectivity.txt", include_str!("../../lexicons/subjectivity.txt")),
    ("positive.txt", include_str!("../../lexicons/positive.txt")),
    ("negative.txt", include_str!("../../lexicons/negative.txt")),
    ("politeness.tsv", include_str!("../../lexicons/politeness.tsv")),
    ("requests.txt", include_str!("../../lexicons/requests.txt")),
];

/// Version of the bundled lexicon files.
pub const BUILTIN_VERSION: &str = include_str!("../../lexicons/VERSION");

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn bad(file: &str, line: usize, message: impl Into<String>) -> LingError {
    LingError::Lexicon {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

impl LexiconParts {
    /// Parse the contents of the named lexicon files.
    pub fn parse_files<'a, I>(files: I) -> Result<Self, LingError>
    where
        I: IntoIterator<Item = (&'a str, String)>,
    {
        let mut parts = LexiconParts::default();
        for (name, text) in files {
            match name {
                "connectives.tsv" => {
                    for (n, line) in data_lines(&text) {
                        let (phrase, class) = line
                            .split_once('\t')
                            .ok_or_else(|| bad(name, n, "expected phrase<TAB>class"))?;
                        let class = class.parse().map_err(|e: String| bad(name, n, e))?;
                        parts.connectives.push((phrase.trim().to_string(), class));
                    }
                }
                "politeness.tsv" => {
                    for (n, line) in data_lines(&text) {
                        let fields: Vec<&str> = line.split('\t').collect();
                        if fields.len() != 3 {
                            return Err(bad(name, n, "expected name<TAB>pattern<TAB>weight"));
                        }
                        let weight: f64 = fields[2]
                            .trim()
                            .parse()
                            .map_err(|_| bad(name, n, "weight is not a number"))?;
                        parts.politeness_cues.push((
                            fields[0].trim().to_string(),
                            fields[1].to_string(),
                            weight,
                        ));
                    }
                }
                _ => {
                    let list: Vec<String> =
                        data_lines(&text).map(|(_, l)| l.trim().to_string()).collect();
                    match name {
                        "planning.txt" => parts.planning_markers = list,
                        "claims.txt" => parts.claim_markers = list,
                        "premises.txt" => parts.premise_markers = list,
                        "subjectivity.txt" => parts.subjectivity_phrases = list,
                        "positive.txt" => parts.positive = list,
                        "negative.txt" => parts.negative = list,
                        "requests.txt" => parts.request_patterns = list,
                        other => return Err(bad(other, 0, "unknown lexicon file")),
                    }
                }
            }
        }
        Ok(parts)
    }
}

impl LexiconSet {
    /// The lexicons bundled with the crate.
    pub fn builtin() -> Self {
        let parts = LexiconParts::parse_files(BUILTIN.iter().map(|(n, t)| (*n, t.to_string())))
            .expect("bundled lexicons parse");
        LexiconSet::from_parts(parts).expect("bundled lexicons are valid")
    }

    /// A lexicon set with no entries at all.
    pub fn empty() -> Self {
        LexiconSet::from_parts(LexiconParts::default()).expect("empty lexicon is valid")
    }

    /// Load every known lexicon file present in `dir`; missing files fall
    /// back to the bundled defaults.
    pub fn load_dir(dir: &Path) -> Result<Self, LingError> {
        let mut files = Vec::new();
        for (name, builtin) in BUILTIN {
            let path = dir.join(name);
            let text = if path.exists() {
                std::fs::read_to_string(&path).map_err(|e| bad(name, 0, e.to_string()))?
            } else {
                builtin.to_string()
            };
            files.push((name, text));
        }
        LexiconSet::from_parts(LexiconParts::parse_files(files)?)
    }

    pub fn from_parts(parts: LexiconParts) -> Result<Self, LingError> {
        let mut connectives = BTreeMap::new();
        for (phrase, class) in parts.connectives {
            connectives.insert(normalize_phrase(&phrase), class);
        }
        let norm = |list: Vec<String>| -> BTreeSet<String> {
            list.iter()
                .map(|p| normalize_phrase(p))
                .filter(|p| !p.is_empty())
                .collect()
        };
        let planning_markers = norm(parts.planning_markers);
        for p in &planning_markers {
            if connectives.get(p) != Some(&ConnectiveClass::Temporal) {
                return Err(bad(
                    "planning.txt",
                    0,
                    format!("planning marker `{p}` is not a temporal connective"),
                ));
            }
        }
        let mut sentiment_lexicon = BTreeMap::new();
        for t in norm(parts.positive) {
            sentiment_lexicon.insert(t, Polarity::Positive);
        }
        for t in norm(parts.negative) {
            if sentiment_lexicon.insert(t.clone(), Polarity::Negative).is_some() {
                return Err(bad("negative.txt", 0, format!("`{t}` is listed with both polarities")));
            }
        }
        let mut politeness_cues = Vec::new();
        for (name, pattern, weight) in parts.politeness_cues {
            if !weight.is_finite() {
                return Err(bad("politeness.tsv", 0, format!("cue `{name}` has a non-finite weight")));
            }
            let pattern = Regex::new(&pattern)
                .map_err(|e| bad("politeness.tsv", 0, format!("cue `{name}`: {e}")))?;
            politeness_cues.push(PolitenessCue {
                name,
                pattern,
                weight,
            });
        }
        let request_patterns = parts
            .request_patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| bad("requests.txt", 0, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LexiconSet::assemble(
            connectives,
            planning_markers,
            norm(parts.claim_markers),
            norm(parts.premise_markers),
            norm(parts.subjectivity_phrases),
            sentiment_lexicon,
            politeness_cues,
            request_patterns,
            BTreeSet::new(),
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        connectives: BTreeMap<String, ConnectiveClass>,
        planning_markers: BTreeSet<String>,
        claim_markers: BTreeSet<String>,
        premise_markers: BTreeSet<String>,
        subjectivity_phrases: BTreeSet<String>,
        sentiment_lexicon: BTreeMap<String, Polarity>,
        politeness_cues: Vec<PolitenessCue>,
        request_patterns: Vec<Regex>,
        pruned: BTreeSet<String>,
    ) -> Self {
        let unit = |set: &BTreeSet<String>| PhraseMatcher::new(set.iter().map(|p| (p.as_str(), ())));
        LexiconSet {
            connective_matcher: PhraseMatcher::new(
                connectives.iter().map(|(p, c)| (p.as_str(), *c)),
            ),
            planning_matcher: unit(&planning_markers),
            claim_matcher: unit(&claim_markers),
            premise_matcher: unit(&premise_markers),
            subjectivity_matcher: unit(&subjectivity_phrases),
            connectives,
            planning_markers,
            claim_markers,
            premise_markers,
            subjectivity_phrases,
            sentiment_lexicon,
            politeness_cues,
            request_patterns,
            pruned,
        }
    }

    /// Active connectives (pruned ones removed).
    pub fn connectives(&self) -> &BTreeMap<String, ConnectiveClass> {
        &self.connectives
    }

    pub fn planning_markers(&self) -> &BTreeSet<String> {
        &self.planning_markers
    }

    pub fn claim_markers(&self) -> &BTreeSet<String> {
        &self.claim_markers
    }

    pub fn premise_markers(&self) -> &BTreeSet<String> {
        &self.premise_markers
    }

    pub fn subjectivity_phrases(&self) -> &BTreeSet<String> {
        &self.subjectivity_phrases
    }

    pub fn sentiment_lexicon(&self) -> &BTreeMap<String, Polarity> {
        &self.sentiment_lexicon
    }

    pub fn politeness_cues(&self) -> &[PolitenessCue] {
        &self.politeness_cues
    }

    pub fn request_patterns(&self) -> &[Regex] {
        &self.request_patterns
    }

    pub fn pruned(&self) -> &BTreeSet<String> {
        &self.pruned
    }

    /// Every token or phrase that any cue list recognizes.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        out.extend(self.connectives.keys().cloned());
        out.extend(self.pruned.iter().cloned());
        out.extend(self.planning_markers.iter().cloned());
        out.extend(self.claim_markers.iter().cloned());
        out.extend(self.premise_markers.iter().cloned());
        out.extend(self.subjectivity_phrases.iter().cloned());
        out.extend(self.sentiment_lexicon.keys().cloned());
        out
    }
}

/// Fraction of messages above which a connective is considered too common
/// to be informative.
pub const PRUNE_THRESHOLD: f64 = 0.2;

/// Move every connective that appears in more than 20% of `messages` into
/// the pruned set.
pub fn prune_frequent_connectives<'a, I>(messages: I, lexicon: &LexiconSet) -> Result<LexiconSet, LingError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut n_messages = 0usize;
    let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
    for text in messages {
        n_messages += 1;
        let mut seen = BTreeSet::new();
        for sentence in segment_sentences(text) {
            seen.extend(lexicon.connective_matcher.present(&tokenize(sentence)));
        }
        for phrase in seen {
            *doc_freq.entry(phrase).or_default() += 1;
        }
    }
    if n_messages == 0 {
        return Err(LingError::EmptyCorpus);
    }
    let mut connectives = lexicon.connectives.clone();
    let mut pruned = lexicon.pruned.clone();
    for (phrase, count) in doc_freq {
        if count as f64 / n_messages as f64 > PRUNE_THRESHOLD {
            connectives.remove(&phrase);
            pruned.insert(phrase);
        }
    }
    Ok(LexiconSet::assemble(
        connectives,
        lexicon.planning_markers.clone(),
        lexicon.claim_markers.clone(),
        lexicon.premise_markers.clone(),
        lexicon.subjectivity_phrases.clone(),
        lexicon.sentiment_lexicon.clone(),
        lexicon.politeness_cues.clone(),
        lexicon.request_patterns.clone(),
        pruned,
    ))
}
