//! Game transcripts: parsing, validation, message filtering and corpus
//! statistics.
//!
//! A corpus file is UTF-8 JSONL with one game per line:
//!
//! ```text
//! {"game_id": str, "variant": str, "powers": [str x7],
//!  "seasons": [{"year": int, "phase": "spring"|"fall",
//!               "occupancy": {terr: power}, "centers": {terr: power},
//!               "orders": [order],
//!               "messages": [{"from": str, "to": str|"ALL", "text": str, "admin": bool}]}]}
//! ```
//!
//! Orders carry a single-key action object: `{"hold":null}`, `{"move":terr}`,
//! `{"support_hold":{"power":p,"loc":t}}`,
//! `{"support_move":{"power":p,"from":t,"to":t}}` or
//! `{"convoy":{"power":p,"from":t,"to":t}}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::lingcues::text::{segment_sentences, tokenize};

#[derive(Debug, Error)]
pub enum GameLogError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("consistency error at line {line}: {message}")]
    Consistency { line: usize, message: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GameLogError {
    fn consistency(message: impl Into<String>) -> Self {
        GameLogError::Consistency {
            line: 1,
            message: message.into(),
        }
    }

    /// Shift the reported line number by `offset` lines (used when a record
    /// sits in the middle of a multi-game file).
    pub fn at_line(self, line: usize) -> Self {
        match self {
            GameLogError::Syntax {
                line: l,
                column,
                message,
            } => GameLogError::Syntax {
                line: line + l - 1,
                column,
                message,
            },
            GameLogError::Schema { field, message, .. } => GameLogError::Schema {
                line,
                field,
                message,
            },
            GameLogError::Consistency { message, .. } => {
                GameLogError::Consistency { line, message }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Power {
    Austria,
    England,
    France,
    Germany,
    Italy,
    Russia,
    Turkey,
}

impl Power {
    pub const ALL: [Power; 7] = [
        Power::Austria,
        Power::England,
        Power::France,
        Power::Germany,
        Power::Italy,
        Power::Russia,
        Power::Turkey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Power::Austria => "AUSTRIA",
            Power::England => "ENGLAND",
            Power::France => "FRANCE",
            Power::Germany => "GERMANY",
            Power::Italy => "ITALY",
            Power::Russia => "RUSSIA",
            Power::Turkey => "TURKEY",
        }
    }
}

impl fmt::Display for Power {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Power {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Power::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown power `{s}`"))
    }
}

/// Province code on the board, three uppercase ASCII letters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Territory(String);

impl Territory {
    pub fn new(code: &str) -> Result<Self, String> {
        if code.len() == 3 && code.bytes().all(|b| b.is_ascii_uppercase()) {
            Ok(Territory(code.to_string()))
        } else {
            Err(format!("invalid territory id `{code}`"))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Whether the code names a province of the standard board.
    pub fn is_standard(&self) -> bool {
        STANDARD_TERRITORIES.binary_search(&self.0.as_str()).is_ok()
    }
}

impl fmt::Display for Territory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Territory {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Territory {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Territory::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// The 75 provinces of the standard map, sorted.
pub const STANDARD_TERRITORIES: [&str; 75] = [
    "ADR", "AEG", "ALB", "ANK", "APU", "ARM", "BAL", "BAR", "BEL", "BER", "BLA", "BOH", "BOT",
    "BRE", "BUD", "BUL", "BUR", "CLY", "CON", "DEN", "EAS", "EDI", "ENG", "FIN", "GAL", "GAS",
    "GOL", "GRE", "HEL", "HOL", "ION", "IRI", "KIE", "LON", "LVN", "LVP", "MAO", "MAR", "MOS",
    "MUN", "NAF", "NAO", "NAP", "NTH", "NWG", "NWY", "PAR", "PIC", "PIE", "POR", "PRU", "ROM",
    "RUH", "RUM", "SER", "SEV", "SIL", "SKA", "SMY", "SPA", "STP", "SWE", "SYR", "TRI", "TUN",
    "TUS", "TYR", "TYS", "UKR", "VEN", "VIE", "WAL", "WAR", "WES", "YOR",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Spring,
    Fall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Army,
    Fleet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Hold,
    Move {
        dest: Territory,
    },
    SupportHold {
        target_power: Power,
        target_loc: Territory,
    },
    SupportMove {
        target_power: Power,
        from: Territory,
        to: Territory,
    },
    Convoy {
        target_power: Power,
        from: Territory,
        to: Territory,
    },
}

impl Action {
    fn territories(&self) -> Vec<&Territory> {
        match self {
            Action::Hold => vec![],
            Action::Move { dest } => vec![dest],
            Action::SupportHold { target_loc, .. } => vec![target_loc],
            Action::SupportMove { from, to, .. } | Action::Convoy { from, to, .. } => {
                vec![from, to]
            }
        }
    }

    fn target_power(&self) -> Option<Power> {
        match self {
            Action::SupportHold { target_power, .. }
            | Action::SupportMove { target_power, .. }
            | Action::Convoy { target_power, .. } => Some(*target_power),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    pub power: Power,
    pub unit: UnitKind,
    pub location: Territory,
    pub action: Action,
}

impl Order {
    /// Every territory the order mentions, starting with the unit's location.
    pub fn territories(&self) -> Vec<&Territory> {
        let mut out = vec![&self.location];
        out.extend(self.action.territories());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Recipient {
    Power(Power),
    Broadcast,
}

impl Serialize for Recipient {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Recipient::Power(p) => s.serialize_str(p.name()),
            Recipient::Broadcast => s.serialize_str("ALL"),
        }
    }
}

impl<'de> Deserialize<'de> for Recipient {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        if raw == "ALL" {
            Ok(Recipient::Broadcast)
        } else {
            raw.parse()
                .map(Recipient::Power)
                .map_err(serde::de::Error::custom)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub sender: Power,
    pub recipient: Recipient,
    pub season_index: usize,
    pub text: String,
    pub admin: bool,
}

impl Message {
    /// Player-to-player message with a single addressee.
    pub fn is_dyadic(&self) -> bool {
        !self.admin && matches!(self.recipient, Recipient::Power(p) if p != self.sender)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeasonRecord {
    pub index: usize,
    pub year: i32,
    pub phase: Phase,
    pub orders: Vec<Order>,
    pub messages: Vec<Message>,
    pub occupancy: BTreeMap<Territory, Power>,
    pub centers: BTreeMap<Territory, Power>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameLog {
    pub game_id: String,
    pub variant: String,
    pub powers: BTreeSet<Power>,
    pub seasons: Vec<SeasonRecord>,
}

impl GameLog {
    pub fn n_messages(&self) -> usize {
        self.seasons.iter().map(|s| s.messages.len()).sum()
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.seasons.iter().flat_map(|s| s.messages.iter())
    }

    pub fn is_standard(&self) -> bool {
        self.variant == "standard"
    }
}

mod wire {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Game {
        pub game_id: String,
        pub variant: String,
        pub powers: Vec<Power>,
        pub seasons: Vec<Season>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Season {
        pub year: i32,
        pub phase: Phase,
        pub occupancy: BTreeMap<Territory, Power>,
        pub centers: BTreeMap<Territory, Power>,
        pub orders: Vec<Order>,
        pub messages: Vec<Message>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Order {
        pub power: Power,
        pub unit: UnitKind,
        pub location: Territory,
        pub action: Action,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "snake_case", deny_unknown_fields)]
    pub enum Action {
        Hold(()),
        Move(Territory),
        SupportHold { power: Power, loc: Territory },
        SupportMove { power: Power, from: Territory, to: Territory },
        Convoy { power: Power, from: Territory, to: Territory },
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Message {
        pub from: Power,
        pub to: Recipient,
        pub text: String,
        pub admin: bool,
    }

    impl From<Action> for super::Action {
        fn from(a: Action) -> Self {
            match a {
                Action::Hold(()) => super::Action::Hold,
                Action::Move(dest) => super::Action::Move { dest },
                Action::SupportHold { power, loc } => super::Action::SupportHold {
                    target_power: power,
                    target_loc: loc,
                },
                Action::SupportMove { power, from, to } => super::Action::SupportMove {
                    target_power: power,
                    from,
                    to,
                },
                Action::Convoy { power, from, to } => super::Action::Convoy {
                    target_power: power,
                    from,
                    to,
                },
            }
        }
    }

    impl From<&super::Action> for Action {
        fn from(a: &super::Action) -> Self {
            match a.clone() {
                super::Action::Hold => Action::Hold(()),
                super::Action::Move { dest } => Action::Move(dest),
                super::Action::SupportHold {
                    target_power,
                    target_loc,
                } => Action::SupportHold {
                    power: target_power,
                    loc: target_loc,
                },
                super::Action::SupportMove {
                    target_power,
                    from,
                    to,
                } => Action::SupportMove {
                    power: target_power,
                    from,
                    to,
                },
                super::Action::Convoy {
                    target_power,
                    from,
                    to,
                } => Action::Convoy {
                    power: target_power,
                    from,
                    to,
                },
            }
        }
    }
}

/// Parse one game record. Line numbers in errors are relative to `bytes`.
pub fn parse_game_log(bytes: &[u8]) -> Result<GameLog, GameLogError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let raw: wire::Game = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let field = err.path().to_string();
        let inner = err.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => GameLogError::Schema {
                line: inner.line(),
                field,
                message: inner.to_string(),
            },
            _ => GameLogError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            },
        }
    })?;
    de.end().map_err(|e| GameLogError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_wire(raw)
}

fn from_wire(raw: wire::Game) -> Result<GameLog, GameLogError> {
    let powers: BTreeSet<Power> = raw.powers.iter().copied().collect();
    if powers.len() != raw.powers.len() {
        return Err(GameLogError::consistency("duplicate power in `powers`"));
    }
    if powers.len() != 7 {
        return Err(GameLogError::consistency(format!(
            "expected the 7 standard powers, found {}",
            powers.len()
        )));
    }
    let check_power = |p: Power, what: &str| {
        if powers.contains(&p) {
            Ok(())
        } else {
            Err(GameLogError::consistency(format!(
                "{what} references power {p} not in the game"
            )))
        }
    };

    let mut seasons = Vec::with_capacity(raw.seasons.len());
    let mut prev: Option<(i32, Phase)> = None;
    for (index, s) in raw.seasons.into_iter().enumerate() {
        if s.year < 1901 {
            return Err(GameLogError::consistency(format!(
                "season {index}: year {} precedes 1901",
                s.year
            )));
        }
        if let Some(p) = prev {
            if (s.year, s.phase) <= p {
                return Err(GameLogError::consistency(format!(
                    "season {index}: ({}, {:?}) does not follow ({}, {:?})",
                    s.year, s.phase, p.0, p.1
                )));
            }
        }
        prev = Some((s.year, s.phase));
        for p in s.occupancy.values().chain(s.centers.values()) {
            check_power(*p, &format!("season {index} map"))?;
        }

        let mut orders = Vec::with_capacity(s.orders.len());
        for (i, o) in s.orders.into_iter().enumerate() {
            let order = Order {
                power: o.power,
                unit: o.unit,
                location: o.location,
                action: o.action.into(),
            };
            let what = format!("season {index} order {i}");
            check_power(order.power, &what)?;
            if let Some(t) = order.action.target_power() {
                check_power(t, &what)?;
            }
            match &order.action {
                Action::Move { dest } if *dest == order.location => {
                    return Err(GameLogError::consistency(format!(
                        "{what}: move destination equals location {dest}"
                    )));
                }
                Action::SupportMove { from, to, .. } | Action::Convoy { from, to, .. }
                    if from == to =>
                {
                    return Err(GameLogError::consistency(format!(
                        "{what}: supported move from {from} to itself"
                    )));
                }
                _ => {}
            }
            orders.push(order);
        }

        let mut messages = Vec::with_capacity(s.messages.len());
        for (i, m) in s.messages.into_iter().enumerate() {
            let what = format!("season {index} message {i}");
            check_power(m.from, &what)?;
            if let Recipient::Power(to) = m.to {
                check_power(to, &what)?;
                if to == m.from {
                    return Err(GameLogError::consistency(format!(
                        "{what}: sender and recipient are both {to}"
                    )));
                }
            }
            if m.text.trim().is_empty() {
                return Err(GameLogError::consistency(format!("{what}: empty text")));
            }
            messages.push(Message {
                sender: m.from,
                recipient: m.to,
                season_index: index,
                text: m.text,
                admin: m.admin,
            });
        }

        seasons.push(SeasonRecord {
            index,
            year: s.year,
            phase: s.phase,
            orders,
            messages,
            occupancy: s.occupancy,
            centers: s.centers,
        });
    }

    Ok(GameLog {
        game_id: raw.game_id,
        variant: raw.variant,
        powers,
        seasons,
    })
}

fn to_wire(game: &GameLog) -> wire::Game {
    wire::Game {
        game_id: game.game_id.clone(),
        variant: game.variant.clone(),
        powers: game.powers.iter().copied().collect(),
        seasons: game
            .seasons
            .iter()
            .map(|s| wire::Season {
                year: s.year,
                phase: s.phase,
                occupancy: s.occupancy.clone(),
                centers: s.centers.clone(),
                orders: s
                    .orders
                    .iter()
                    .map(|o| wire::Order {
                        power: o.power,
                        unit: o.unit,
                        location: o.location.clone(),
                        action: (&o.action).into(),
                    })
                    .collect(),
                messages: s
                    .messages
                    .iter()
                    .map(|m| wire::Message {
                        from: m.sender,
                        to: m.recipient,
                        text: m.text.clone(),
                        admin: m.admin,
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Serialize a game as one JSONL line (no trailing newline).
pub fn to_json_line(game: &GameLog) -> String {
    serde_json::to_string(&to_wire(game)).expect("game serialization is infallible")
}

/// Read every non-blank line of a corpus file as one game.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<GameLog>, GameLogError> {
    let mut games = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        games.push(parse_game_log(line.as_bytes()).map_err(|e| e.at_line(i + 1))?);
    }
    Ok(games)
}

/// Drop admin messages, broadcasts and setup chatter, keeping only
/// player-to-player messages. Setup messages are carried by the `admin`
/// flag in the corpus schema.
pub fn filter_messages(game: &GameLog) -> GameLog {
    let mut out = game.clone();
    for s in &mut out.seasons {
        s.messages.retain(Message::is_dyadic);
    }
    out
}

/// Order statistics with lower-nearest-rank quantiles (`x[floor(q (n-1))]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let at = |q: f64| sorted[(q * (sorted.len() - 1) as f64).floor() as usize];
        Some(Summary {
            n: sorted.len(),
            min: sorted[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_games: usize,
    pub n_messages: usize,
    pub messages_per_game: Summary,
    /// Over messages with at least one sentence.
    pub sentences_per_message: Option<Summary>,
    pub words_per_sentence: Option<Summary>,
}

pub fn corpus_statistics(corpus: &[GameLog]) -> Result<CorpusStats, GameLogError> {
    if corpus.is_empty() {
        return Err(GameLogError::EmptyCorpus);
    }
    let per_game: Vec<f64> = corpus.iter().map(|g| g.n_messages() as f64).collect();
    let mut sentences_per_message = Vec::new();
    let mut words_per_sentence = Vec::new();
    for m in corpus.iter().flat_map(|g| g.messages()) {
        let sentences = segment_sentences(&m.text);
        if !sentences.is_empty() {
            sentences_per_message.push(sentences.len() as f64);
        }
        words_per_sentence.extend(sentences.iter().map(|s| tokenize(s).len() as f64));
    }
    Ok(CorpusStats {
        n_games: corpus.len(),
        n_messages: per_game.iter().sum::<f64>() as usize,
        messages_per_game: Summary::from_values(&per_game).expect("corpus is non-empty"),
        sentences_per_message: Summary::from_values(&sentences_per_message),
        words_per_sentence: Summary::from_values(&words_per_sentence),
    })
}
