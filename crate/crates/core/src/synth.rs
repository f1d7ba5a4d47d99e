//! Synthetic corpora with planted friendships, betrayals and cue shifts.
//!
//! Each game pairs up six of the seven powers into friendship episodes. An
//! episode starts with mutual support orders and, once the friendship has
//! lasted `min_friendship` seasons, dissolves each season with probability
//! `hazard`: the betrayer attacks the victim's home and the victim
//! retaliates the next season. Every episode owns its own territories, so
//! acts never collide across dyads. Message text is lexicon-token salad
//! over a filler vocabulary that matches no cue; it is not language.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gamelog::{
    Action, GameLog, Message, Order, Phase, Power, Recipient, SeasonRecord, Territory, UnitKind,
    STANDARD_TERRITORIES,
};
use crate::lingcues::{ConnectiveClass, LexiconSet, Polarity};
use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Multiplicative shifts of per-sentence emission rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effects {
    /// Betrayer's positive-word rate over the whole pre-betrayal window.
    pub betrayer_positive: f64,
    /// Betrayer's planning-marker rate over the whole pre-betrayal window.
    pub betrayer_planning: f64,
    /// Betrayer's politeness-cue rate at t = 2.
    pub betrayer_politeness: f64,
    /// Victim's politeness-cue rate at t = 2.
    pub victim_politeness: f64,
}

impl Effects {
    pub fn planted() -> Self {
        Effects {
            betrayer_positive: 1.5,
            betrayer_planning: 0.6,
            betrayer_politeness: 0.4,
            victim_politeness: 0.7,
        }
    }

    pub fn null() -> Self {
        Effects {
            betrayer_positive: 1.0,
            betrayer_planning: 1.0,
            betrayer_politeness: 1.0,
            victim_politeness: 1.0,
        }
    }
}

/// Per-sentence probabilities of inserting one token of each cue kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub positive: f64,
    pub negative: f64,
    pub planning: f64,
    pub claim: f64,
    pub premise: f64,
    pub subjectivity: f64,
    pub connective: f64,
    pub politeness: f64,
    pub request: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            positive: 0.3,
            negative: 0.15,
            planning: 0.3,
            claim: 0.15,
            premise: 0.15,
            subjectivity: 0.2,
            connective: 0.3,
            politeness: 0.5,
            request: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_games: usize,
    pub min_seasons: usize,
    pub max_seasons: usize,
    /// Latest season an episode may start in.
    pub max_start: usize,
    pub hazard: f64,
    pub min_friendship: usize,
    pub effects: Effects,
    pub rates: Rates,
    /// Inclusive range of messages per direction per friendly season.
    pub messages_per_direction: (usize, usize),
    pub sentences_per_message: (usize, usize),
    pub filler_per_sentence: (usize, usize),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_games: 250,
            min_seasons: 12,
            max_seasons: 18,
            max_start: 4,
            hazard: 0.08,
            min_friendship: 4,
            effects: Effects::planted(),
            rates: Rates::default(),
            messages_per_direction: (1, 3),
            sentences_per_message: (1, 3),
            filler_per_sentence: (3, 6),
            seed: 1,
        }
    }
}

/// Episodes per game: three disjoint dyads over six powers.
pub const EPISODES_PER_GAME: usize = 3;

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_games == 0 {
            return bad("n_games must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.hazard) {
            return bad(format!("hazard {} outside [0, 1]", self.hazard));
        }
        if self.min_friendship < 3 {
            return bad("min_friendship must be at least 3".into());
        }
        if self.min_seasons > self.max_seasons {
            return bad("min_seasons exceeds max_seasons".into());
        }
        if self.max_start + self.min_friendship + 2 > self.min_seasons {
            return bad(format!(
                "games of {} seasons leave no room for a {}-season friendship starting at season {} plus retaliation",
                self.min_seasons, self.min_friendship, self.max_start
            ));
        }
        let e = &self.effects;
        let r = &self.rates;
        for (name, v) in [
            ("betrayer_positive", e.betrayer_positive),
            ("betrayer_planning", e.betrayer_planning),
            ("betrayer_politeness", e.betrayer_politeness),
            ("victim_politeness", e.victim_politeness),
            ("positive", r.positive),
            ("negative", r.negative),
            ("planning", r.planning),
            ("claim", r.claim),
            ("premise", r.premise),
            ("subjectivity", r.subjectivity),
            ("connective", r.connective),
            ("politeness", r.politeness),
            ("request", r.request),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be a positive finite number, got {v}"));
            }
        }
        for (name, (lo, hi)) in [
            ("messages_per_direction", self.messages_per_direction),
            ("sentences_per_message", self.sentences_per_message),
            ("filler_per_sentence", self.filler_per_sentence),
        ] {
            if lo == 0 || lo > hi {
                return bad(format!("{name} range ({lo}, {hi}) is empty or starts at 0"));
            }
        }
        Ok(())
    }

    /// Positive-class rate of the imminent task implied by the generator:
    /// betrayals over the summed lengths of their windows, both taken in
    /// expectation over game length, start season and dissolution season.
    pub fn expected_imminent_positive_rate(&self) -> Option<f64> {
        let (mut betrayals, mut window) = (0.0, 0.0);
        let n_len = (self.max_seasons - self.min_seasons + 1) as f64;
        for s_total in self.min_seasons..=self.max_seasons {
            let n_start = (self.max_start + 1) as f64;
            for s0 in 0..=self.max_start {
                let p_game = 1.0 / (n_len * n_start);
                let mut survive = 1.0;
                for s in s0 + self.min_friendship..s_total {
                    let p = survive * self.hazard;
                    survive *= 1.0 - self.hazard;
                    if s + 1 < s_total {
                        betrayals += p_game * p;
                        window += p_game * p * (s - s0 - 1) as f64;
                    }
                }
            }
        }
        (window > 0.0).then(|| betrayals / window)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueBetrayal {
    pub game_id: String,
    pub betrayer: Power,
    pub victim: Power,
    pub friendship_start: usize,
    pub last_friendly_season: usize,
    pub betrayal_season: usize,
}

/// Ground truth written next to a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: SynthSpec,
    pub n_episodes: usize,
    pub betrayals: Vec<TrueBetrayal>,
    /// Attacks in a game's final season, which leave no room for the
    /// second hostile act.
    pub unretaliated_attacks: usize,
    /// Friendly seasons of age ≥ `min_friendship` followed by another
    /// season of the game, and how many of them were followed by an attack.
    pub at_risk_seasons: usize,
    pub dissolutions: usize,
    pub expected_imminent_positive_rate: Option<f64>,
}

const FILLER: &[&str] = &[
    "we", "they", "our", "their", "the", "a", "to", "in", "on", "at", "this", "that", "it", "is",
    "army", "fleet", "units", "border", "coast", "sea", "supply", "center", "orders", "turn",
    "position", "region", "north", "south", "east", "west", "channel", "front", "line", "hold",
    "push", "into", "toward", "plan", "deal", "board", "map", "spring", "fall", "build",
];

const POLITE: &[&str] = &["thanks", "please", "sorry", "thank you", "appreciate"];

/// Filler tokens used between cue tokens.
pub fn filler_vocabulary() -> &'static [&'static str] {
    FILLER
}

pub fn polite_phrases() -> &'static [&'static str] {
    POLITE
}

struct Vocab {
    positive: Vec<String>,
    negative: Vec<String>,
    planning: Vec<String>,
    claims: Vec<String>,
    premises: Vec<String>,
    subjectivity: Vec<String>,
    connectives: Vec<String>,
}

impl Vocab {
    fn from(lexicon: &LexiconSet) -> Self {
        let polarity = |want: Polarity| {
            lexicon
                .sentiment_lexicon()
                .iter()
                .filter(|(_, p)| **p == want)
                .map(|(t, _)| t.clone())
                .collect()
        };
        Vocab {
            positive: polarity(Polarity::Positive),
            negative: polarity(Polarity::Negative),
            planning: lexicon.planning_markers().iter().cloned().collect(),
            claims: lexicon.claim_markers().iter().cloned().collect(),
            premises: lexicon.premise_markers().iter().cloned().collect(),
            subjectivity: lexicon.subjectivity_phrases().iter().cloned().collect(),
            connectives: lexicon
                .connectives()
                .iter()
                .filter(|(_, c)| **c != ConnectiveClass::Temporal)
                .map(|(p, _)| p.clone())
                .collect(),
        }
    }
}

fn season_record(index: usize) -> SeasonRecord {
    SeasonRecord {
        index,
        year: 1901 + (index / 2) as i32,
        phase: if index % 2 == 0 { Phase::Spring } else { Phase::Fall },
        orders: vec![],
        messages: vec![],
        occupancy: Default::default(),
        centers: Default::default(),
    }
}

#[derive(Clone, Copy)]
enum Role {
    Betrayer,
    Victim,
    Neutral,
}

struct Writer<'a> {
    spec: &'a SynthSpec,
    vocab: &'a Vocab,
}

impl Writer<'_> {
    fn sentence(&self, rng: &mut SeededRng, rates: &Rates) -> String {
        let (lo, hi) = self.spec.filler_per_sentence;
        let mut words: Vec<String> = (0..rng.range_inclusive(lo, hi))
            .map(|_| rng.choose(FILLER).to_string())
            .collect();
        let slots: [(f64, &[String]); 7] = [
            (rates.positive, &self.vocab.positive),
            (rates.negative, &self.vocab.negative),
            (rates.planning, &self.vocab.planning),
            (rates.claim, &self.vocab.claims),
            (rates.premise, &self.vocab.premises),
            (rates.subjectivity, &self.vocab.subjectivity),
            (rates.connective, &self.vocab.connectives),
        ];
        for (p, list) in slots {
            if rng.bernoulli(p.min(1.0)) && !list.is_empty() {
                let at = 1 + rng.index(words.len());
                words.insert(at, rng.choose(list).clone());
            }
        }
        if rng.bernoulli(rates.politeness.min(1.0)) {
            let at = 1 + rng.index(words.len());
            words.insert(at, rng.choose(POLITE).to_string());
        }
        let end = if rng.bernoulli(rates.request.min(1.0)) { "?" } else { "." };
        let mut s = words.join(" ");
        if let Some(first) = s.get(0..1) {
            s.replace_range(0..1, &first.to_uppercase());
        }
        s.push_str(end);
        s
    }

    fn message(&self, rng: &mut SeededRng, rates: &Rates) -> String {
        let (lo, hi) = self.spec.sentences_per_message;
        (0..rng.range_inclusive(lo, hi))
            .map(|_| self.sentence(rng, rates))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Rates for one direction of a betrayal episode at relative index `t`.
    fn rates(&self, role: Role, t: Option<i64>) -> Rates {
        let mut r = self.spec.rates;
        let e = &self.spec.effects;
        if let Some(t) = t.filter(|t| *t >= 2) {
            match role {
                Role::Betrayer => {
                    r.positive *= e.betrayer_positive;
                    r.planning *= e.betrayer_planning;
                    if t == 2 {
                        r.politeness *= e.betrayer_politeness;
                    }
                }
                Role::Victim => {
                    if t == 2 {
                        r.politeness *= e.victim_politeness;
                    }
                }
                Role::Neutral => {}
            }
        }
        r
    }
}

/// Generate a corpus and its ground truth.
pub fn generate(spec: &SynthSpec, lexicon: &LexiconSet) -> Result<(Vec<GameLog>, Sidecar), SynthError> {
    spec.validate()?;
    let vocab = Vocab::from(lexicon);
    let writer = Writer { spec, vocab: &vocab };
    let mut sidecar = Sidecar {
        spec: spec.clone(),
        n_episodes: 0,
        betrayals: vec![],
        unretaliated_attacks: 0,
        at_risk_seasons: 0,
        dissolutions: 0,
        expected_imminent_positive_rate: spec.expected_imminent_positive_rate(),
    };
    let mut games = Vec::with_capacity(spec.n_games);
    let territories: Vec<Territory> = STANDARD_TERRITORIES
        .iter()
        .map(|c| Territory::new(c).expect("standard code"))
        .collect();
    for g in 0..spec.n_games {
        let mut rng = SeededRng::substream(spec.seed, g as u64);
        let game_id = format!("synth-{g:05}");
        let n_seasons = rng.range_inclusive(spec.min_seasons, spec.max_seasons);
        let mut powers = Power::ALL;
        rng.shuffle(&mut powers);
        let mut terr = territories.clone();
        rng.shuffle(&mut terr);
        // homes for all seven powers, extra units for bounces, neutral ground
        let home: Vec<(Power, Territory)> = powers.iter().zip(&terr[0..7]).map(|(p, t)| (*p, t.clone())).collect();
        let extra: Vec<(Power, Territory)> = powers.iter().zip(&terr[7..14]).map(|(p, t)| (*p, t.clone())).collect();
        let neutral: Vec<Territory> = terr[14..20].to_vec();
        let home_of = |p: Power| home.iter().find(|(q, _)| *q == p).expect("home").1.clone();
        let extra_of = |p: Power| extra.iter().find(|(q, _)| *q == p).expect("extra").1.clone();

        let mut seasons: Vec<SeasonRecord> = (0..n_seasons).map(season_record).collect();
        for s in seasons.iter_mut() {
            for (p, t) in home.iter().chain(&extra) {
                s.occupancy.insert(t.clone(), *p);
                s.centers.insert(t.clone(), *p);
            }
        }
        // (a, b, start, attack season, betrayer first)
        let mut episodes = Vec::new();
        for e in 0..EPISODES_PER_GAME {
            let (a, b) = (powers[2 * e], powers[2 * e + 1]);
            let start = rng.range_inclusive(0, spec.max_start);
            let mut attack = None;
            for s in start + spec.min_friendship..n_seasons {
                sidecar.at_risk_seasons += 1;
                if rng.bernoulli(spec.hazard) {
                    sidecar.dissolutions += 1;
                    attack = Some(s);
                    break;
                }
            }
            let a_betrays = rng.bernoulli(0.5);
            let (betrayer, victim) = if a_betrays { (a, b) } else { (b, a) };
            episodes.push((betrayer, victim, start, attack));
            sidecar.n_episodes += 1;
            match attack {
                Some(s) if s + 1 < n_seasons => sidecar.betrayals.push(TrueBetrayal {
                    game_id: game_id.clone(),
                    betrayer,
                    victim,
                    friendship_start: start,
                    last_friendly_season: s - 1,
                    betrayal_season: s,
                }),
                Some(_) => sidecar.unretaliated_attacks += 1,
                None => {}
            }
        }
        let mut busy: Vec<(usize, Power)> = Vec::new();
        for &(bp, vp, start, attack) in &episodes {
            let end = attack.unwrap_or(n_seasons);
            for s in start..end {
                for (from, to) in [(bp, vp), (vp, bp)] {
                    seasons[s].orders.push(Order {
                        power: from,
                        unit: UnitKind::Army,
                        location: home_of(from),
                        action: Action::SupportHold {
                            target_power: to,
                            target_loc: home_of(to),
                        },
                    });
                    busy.push((s, from));
                }
                let t = attack.map(|a| a as i64 - s as i64);
                for (from, to, role) in [(bp, vp, Role::Betrayer), (vp, bp, Role::Victim)] {
                    let role = if attack.is_some() { role } else { Role::Neutral };
                    let rates = writer.rates(role, t);
                    let (lo, hi) = spec.messages_per_direction;
                    for _ in 0..rng.range_inclusive(lo, hi) {
                        seasons[s].messages.push(Message {
                            sender: from,
                            recipient: Recipient::Power(to),
                            season_index: s,
                            text: writer.message(&mut rng, &rates),
                            admin: false,
                        });
                    }
                }
            }
            if let Some(a) = attack {
                seasons[a].orders.push(Order {
                    power: bp,
                    unit: UnitKind::Army,
                    location: home_of(bp),
                    action: Action::Move { dest: home_of(vp) },
                });
                busy.push((a, bp));
                if a + 1 < n_seasons {
                    seasons[a + 1].orders.push(Order {
                        power: vp,
                        unit: UnitKind::Army,
                        location: home_of(vp),
                        action: Action::Move { dest: home_of(bp) },
                    });
                    busy.push((a + 1, vp));
                }
            }
        }
        for (s, season) in seasons.iter_mut().enumerate() {
            for p in powers {
                if !busy.contains(&(s, p)) {
                    season.orders.push(Order {
                        power: p,
                        unit: UnitKind::Army,
                        location: home_of(p),
                        action: Action::Hold,
                    });
                }
            }
            // a bounce between two extra units over empty, uncontrolled ground
            if rng.bernoulli(0.3) {
                let dest = rng.choose(&neutral).clone();
                let i = rng.index(7);
                let j = (i + 1 + rng.index(6)) % 7;
                for p in [powers[i], powers[j]] {
                    season.orders.push(Order {
                        power: p,
                        unit: UnitKind::Fleet,
                        location: extra_of(p),
                        action: Action::Move { dest: dest.clone() },
                    });
                }
            }
            // chatter outside the studied dyads, plus setup and broadcast noise
            if rng.bernoulli(0.5) {
                let from = powers[6];
                let to = powers[rng.index(6)];
                season.messages.push(Message {
                    sender: from,
                    recipient: Recipient::Power(to),
                    season_index: s,
                    text: writer.message(&mut rng, &spec.rates),
                    admin: false,
                });
            }
            if rng.bernoulli(0.2) {
                season.messages.push(Message {
                    sender: powers[rng.index(7)],
                    recipient: Recipient::Broadcast,
                    season_index: s,
                    text: writer.message(&mut rng, &spec.rates),
                    admin: false,
                });
            }
            if s == 0 {
                season.messages.push(Message {
                    sender: powers[0],
                    recipient: Recipient::Broadcast,
                    season_index: 0,
                    text: "Game setup complete.".into(),
                    admin: true,
                });
            }
        }
        games.push(GameLog {
            game_id,
            variant: "standard".into(),
            powers: Power::ALL.into_iter().collect(),
            seasons,
        });
    }
    Ok((games, sidecar))
}
