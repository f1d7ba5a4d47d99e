//! Sentence segmentation, tokenization and greedy phrase matching.

use std::collections::HashMap;

/// Tokens ending in a period that never close a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "mr.", "mrs.", "ms.", "dr.", "st.", "vs.", "cf.", "jr.", "sr.", "prof.",
    "approx.", "no.",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Split text into sentences on `.`, `!` or `?` runs followed by whitespace
/// or end of text. Known abbreviations do not end a sentence.
pub fn segment_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && is_terminator(chars[j + 1].1) {
            j += 1;
        }
        let end = chars[j].0 + chars[j].1.len_utf8();
        let at_boundary = j + 1 == chars.len() || chars[j + 1].1.is_whitespace();
        if at_boundary && !(i == j && c == '.' && ends_with_abbreviation(&text[start..end])) {
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
        i = j + 1;
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn ends_with_abbreviation(span: &str) -> bool {
    let word = span
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t);
    }
}

/// Whitespace split, edge punctuation stripped, lowercased.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Normalized key for a lexicon phrase: its tokens joined by single spaces.
pub fn normalize_phrase(phrase: &str) -> String {
    tokenize(phrase).join(" ")
}

/// Multiword phrase matcher. Matches are non-overlapping, found left to
/// right, trying the longest phrase first at each position.
#[derive(Debug, Clone, Default)]
pub struct PhraseMatcher<V> {
    by_first: HashMap<String, Vec<(Vec<String>, V)>>,
}

impl<V: Clone> PhraseMatcher<V> {
    pub fn new<'a, I>(phrases: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, V)>,
    {
        let mut by_first: HashMap<String, Vec<(Vec<String>, V)>> = HashMap::new();
        for (phrase, value) in phrases {
            let tokens = tokenize(phrase);
            if let Some(first) = tokens.first().cloned() {
                by_first.entry(first).or_default().push((tokens, value));
            }
        }
        for list in by_first.values_mut() {
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        }
        PhraseMatcher { by_first }
    }

    pub fn is_empty(&self) -> bool {
        self.by_first.is_empty()
    }

    fn longest_at(&self, tokens: &[String], i: usize) -> Option<&(Vec<String>, V)> {
        self.by_first.get(&tokens[i])?.iter().find(|(phrase, _)| {
            tokens.len() - i >= phrase.len() && tokens[i..i + phrase.len()] == phrase[..]
        })
    }

    /// Values of all greedy matches in `tokens`.
    pub fn find_all(&self, tokens: &[String]) -> Vec<V> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match self.longest_at(tokens, i) {
                Some((phrase, value)) => {
                    out.push(value.clone());
                    i += phrase.len();
                }
                None => i += 1,
            }
        }
        out
    }

    pub fn count(&self, tokens: &[String]) -> usize {
        self.find_all(tokens).len()
    }

    /// Every phrase occurring anywhere in `tokens` (overlaps allowed),
    /// reported as its normalized key.
    pub fn present(&self, tokens: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..tokens.len() {
            if let Some(list) = self.by_first.get(&tokens[i]) {
                for (phrase, _) in list {
                    if tokens.len() - i >= phrase.len() && tokens[i..i + phrase.len()] == phrase[..]
                    {
                        out.push(phrase.join(" "));
                    }
                }
            }
        }
        out
    }
}
