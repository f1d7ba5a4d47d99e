//! Friendly and hostile acts derived from orders, per-dyad timelines,
//! stable friendships, betrayals and relationship transition rates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gamelog::{Action, GameLog, Power, SeasonRecord, Territory};

#[derive(Debug, Error, PartialEq)]
pub enum RelationError {
    #[error("season {season}, order {order}: unknown territory {territory}")]
    UnknownTerritory {
        season: usize,
        order: usize,
        territory: String,
    },
    #[error("empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationConfig {
    /// Count convoying another power's unit as a friendly act.
    pub convoy_as_friendly: bool,
    /// Require at least two friendly acts in each direction for a stable
    /// friendship, instead of two acts overall with both directions present.
    pub strict_reciprocity: bool,
}

/// Longest allowed distance, in seasons, between consecutive friendly acts
/// of one friendship.
pub const MAX_FRIENDLY_GAP: usize = 5;
/// Minimum span of a stable friendship, first to last friendly season
/// inclusive.
pub const MIN_FRIENDSHIP_SEASONS: usize = 3;
pub const MIN_FRIENDLY_ACTS: usize = 2;
pub const MIN_HOSTILE_ACTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActKind {
    Friendly,
    Hostile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Act {
    pub season_index: usize,
    pub kind: ActKind,
    pub actor: Power,
    pub recipient: Power,
    /// Indices of the triggering orders within the season.
    pub evidence: Vec<usize>,
}

/// Unordered pair of powers, stored with the smaller power first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dyad(Power, Power);

impl Dyad {
    pub fn new(a: Power, b: Power) -> Self {
        assert_ne!(a, b, "a dyad needs two distinct powers");
        if a < b {
            Dyad(a, b)
        } else {
            Dyad(b, a)
        }
    }

    pub fn first(&self) -> Power {
        self.0
    }

    pub fn second(&self) -> Power {
        self.1
    }

    pub fn contains(&self, p: Power) -> bool {
        self.0 == p || self.1 == p
    }

    pub fn other(&self, p: Power) -> Power {
        if p == self.0 {
            self.1
        } else {
            self.0
        }
    }

    /// All 21 dyads of the standard powers.
    pub fn all() -> Vec<Dyad> {
        let mut out = Vec::new();
        for (i, a) in Power::ALL.iter().enumerate() {
            for b in &Power::ALL[i + 1..] {
                out.push(Dyad::new(*a, *b));
            }
        }
        out
    }
}

impl fmt::Display for Dyad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

fn owner(season: &SeasonRecord, t: &Territory) -> Option<Power> {
    season
        .occupancy
        .get(t)
        .or_else(|| season.centers.get(t))
        .copied()
}

/// Acts implied by one season's orders, in order-list order.
///
/// * Supporting another power's hold or move is friendly toward it.
/// * Moving into a territory occupied by, or a supply center controlled by,
///   another power is hostile toward that power.
/// * Supporting a third power's move that is hostile toward X is hostile
///   toward X.
///
/// Moves into empty, uncontrolled territory produce nothing, so two powers
/// bouncing there stay neutral.
pub fn classify_interactions(
    season: &SeasonRecord,
    config: &RelationConfig,
) -> Result<Vec<Act>, RelationError> {
    let mut acts = Vec::new();
    for (i, order) in season.orders.iter().enumerate() {
        for t in order.territories() {
            if !t.is_standard() && !season.occupancy.contains_key(t) && !season.centers.contains_key(t) {
                return Err(RelationError::UnknownTerritory {
                    season: season.index,
                    order: i,
                    territory: t.to_string(),
                });
            }
        }
        let mut emit = |kind, recipient: Power| {
            if recipient != order.power {
                acts.push(Act {
                    season_index: season.index,
                    kind,
                    actor: order.power,
                    recipient,
                    evidence: vec![i],
                });
            }
        };
        match &order.action {
            Action::Hold => {}
            Action::Move { dest } => {
                if let Some(x) = owner(season, dest) {
                    emit(ActKind::Hostile, x);
                }
            }
            Action::SupportHold { target_power, .. } => emit(ActKind::Friendly, *target_power),
            Action::SupportMove { target_power, to, .. } => {
                emit(ActKind::Friendly, *target_power);
                if *target_power != order.power {
                    if let Some(x) = owner(season, to).filter(|x| x != target_power) {
                        emit(ActKind::Hostile, x);
                    }
                }
            }
            Action::Convoy { target_power, .. } => {
                if config.convoy_as_friendly {
                    emit(ActKind::Friendly, *target_power);
                }
            }
        }
    }
    Ok(acts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadTimeline {
    pub game_id: String,
    pub pair: Dyad,
    /// Number of seasons in the game.
    pub n_seasons: usize,
    pub acts: Vec<Act>,
}

impl DyadTimeline {
    fn seasons(&self) -> Vec<(usize, &[Act])> {
        let mut out: Vec<(usize, &[Act])> = Vec::new();
        let mut start = 0;
        for i in 1..=self.acts.len() {
            if i == self.acts.len() || self.acts[i].season_index != self.acts[start].season_index {
                out.push((self.acts[start].season_index, &self.acts[start..i]));
                start = i;
            }
        }
        out
    }
}

pub fn build_dyad_timeline(
    game: &GameLog,
    pair: Dyad,
    config: &RelationConfig,
) -> Result<DyadTimeline, RelationError> {
    let mut acts = Vec::new();
    for season in &game.seasons {
        acts.extend(
            classify_interactions(season, config)?
                .into_iter()
                .filter(|a| pair.contains(a.actor) && pair.contains(a.recipient)),
        );
    }
    Ok(DyadTimeline {
        game_id: game.game_id.clone(),
        pair,
        n_seasons: game.seasons.len(),
        acts,
    })
}

/// Timelines for all 21 dyads, classifying each season once.
pub fn build_all_timelines(
    game: &GameLog,
    config: &RelationConfig,
) -> Result<Vec<DyadTimeline>, RelationError> {
    let mut by_pair: BTreeMap<Dyad, Vec<Act>> = Dyad::all().into_iter().map(|d| (d, vec![])).collect();
    for season in &game.seasons {
        for act in classify_interactions(season, config)? {
            by_pair
                .get_mut(&Dyad::new(act.actor, act.recipient))
                .expect("all dyads present")
                .push(act);
        }
    }
    Ok(by_pair
        .into_iter()
        .map(|(pair, acts)| DyadTimeline {
            game_id: game.game_id.clone(),
            pair,
            n_seasons: game.seasons.len(),
            acts,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendshipSpan {
    pub game_id: String,
    pub dyad: Dyad,
    pub first_friendly_season: usize,
    pub last_friendly_season: usize,
    pub length_seasons: usize,
    pub start_offset: usize,
    pub acts: Vec<Act>,
}

impl FriendshipSpan {
    /// Stable identifier used for deterministic ordering.
    pub fn id(&self) -> String {
        format!("{}/{}/{}", self.game_id, self.dyad, self.first_friendly_season)
    }
}

fn qualifies(acts: &[Act], config: &RelationConfig) -> bool {
    let Some(first) = acts.first() else {
        return false;
    };
    let last = acts.last().expect("non-empty");
    let forward = acts.iter().filter(|a| a.actor == first.actor).count();
    let backward = acts.len() - forward;
    let reciprocated = if config.strict_reciprocity {
        forward >= MIN_FRIENDLY_ACTS && backward >= MIN_FRIENDLY_ACTS
    } else {
        forward >= 1 && backward >= 1
    };
    acts.len() >= MIN_FRIENDLY_ACTS
        && reciprocated
        && last.season_index - first.season_index + 1 >= MIN_FRIENDSHIP_SEASONS
}

/// Maximal runs of friendly acts that form stable friendships.
///
/// A run is broken by any season containing a hostile act of the dyad
/// (friendly acts in that season are discarded) and by a gap of more than
/// [`MAX_FRIENDLY_GAP`] seasons. Each run that is reciprocated, holds at
/// least two acts and spans at least three seasons becomes a span.
pub fn find_stable_friendships(timeline: &DyadTimeline, config: &RelationConfig) -> Vec<FriendshipSpan> {
    let mut spans = Vec::new();
    let mut run: Vec<Act> = Vec::new();
    let mut close = |run: &mut Vec<Act>| {
        if qualifies(run, config) {
            let first = run[0].season_index;
            let last = run[run.len() - 1].season_index;
            spans.push(FriendshipSpan {
                game_id: timeline.game_id.clone(),
                dyad: timeline.pair,
                first_friendly_season: first,
                last_friendly_season: last,
                length_seasons: last - first + 1,
                start_offset: first,
                acts: std::mem::take(run),
            });
        }
        run.clear();
    };
    for (season, acts) in timeline.seasons() {
        if acts.iter().any(|a| a.kind == ActKind::Hostile) {
            close(&mut run);
            continue;
        }
        if let Some(last) = run.last() {
            if season - last.season_index > MAX_FRIENDLY_GAP {
                close(&mut run);
            }
        }
        run.extend(acts.iter().cloned());
    }
    close(&mut run);
    spans
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetrayalRecord {
    pub span: FriendshipSpan,
    pub betrayer: Power,
    pub victim: Power,
    /// Season of the first hostile act (relative index 0).
    pub betrayal_season: usize,
    pub hostile_acts: Vec<Act>,
}

impl BetrayalRecord {
    /// Seasons before the betrayal: 0 at the first hostile act, 1 at the
    /// season before, and so on.
    pub fn relative_index(&self, season: usize) -> i64 {
        self.betrayal_season as i64 - season as i64
    }
}

/// Betrayals ending `span`: at least two hostile acts after the span with
/// no friendly-only season before the second one. When both players open
/// hostilities in the same season, one record per betrayer is returned.
pub fn detect_betrayal(span: &FriendshipSpan, timeline: &DyadTimeline) -> Vec<BetrayalRecord> {
    let mut hostile: Vec<Act> = Vec::new();
    let mut first_season: Option<usize> = None;
    for (season, acts) in timeline.seasons() {
        if season <= span.last_friendly_season {
            continue;
        }
        let h: Vec<&Act> = acts.iter().filter(|a| a.kind == ActKind::Hostile).collect();
        if h.is_empty() {
            break;
        }
        first_season.get_or_insert(season);
        hostile.extend(h.into_iter().cloned());
        if hostile.len() >= MIN_HOSTILE_ACTS {
            break;
        }
    }
    let Some(betrayal_season) = first_season else {
        return vec![];
    };
    if hostile.len() < MIN_HOSTILE_ACTS {
        return vec![];
    }
    let mut betrayers: Vec<Power> = Vec::new();
    for a in hostile.iter().filter(|a| a.season_index == betrayal_season) {
        if !betrayers.contains(&a.actor) {
            betrayers.push(a.actor);
        }
    }
    betrayers
        .into_iter()
        .map(|betrayer| {
            let (mut acts, rest): (Vec<Act>, Vec<Act>) = hostile
                .iter()
                .cloned()
                .partition(|a| a.season_index == betrayal_season && a.actor == betrayer);
            acts.extend(rest);
            BetrayalRecord {
                span: span.clone(),
                betrayer,
                victim: span.dyad.other(betrayer),
                betrayal_season,
                hostile_acts: acts,
            }
        })
        .collect()
}

/// Stable friendships of one timeline and the betrayals ending them.
pub fn analyze_timeline(
    timeline: &DyadTimeline,
    config: &RelationConfig,
) -> (Vec<FriendshipSpan>, Vec<BetrayalRecord>) {
    let spans = find_stable_friendships(timeline, config);
    let betrayals = spans.iter().flat_map(|s| detect_betrayal(s, timeline)).collect();
    (spans, betrayals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationshipKind {
    Friendship,
    Conflict,
}

/// Largest exact age bucket; older relationships share one bucket.
pub const MAX_AGE_BUCKET: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionCell {
    pub at_risk: usize,
    pub transitions: usize,
}

impl TransitionCell {
    pub fn probability(&self) -> Option<f64> {
        (self.at_risk > 0).then(|| self.transitions as f64 / self.at_risk as f64)
    }
}

/// Per-age probabilities that a friendship turns hostile (or a conflict
/// turns friendly) in the next season. Bucket `a` holds relationships of
/// age `a` seasons for `a < 10`; bucket 10 holds ages of ten or more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionStats {
    pub friendship: Vec<TransitionCell>,
    pub conflict: Vec<TransitionCell>,
}

impl TransitionStats {
    fn cells(&self, kind: RelationshipKind) -> &[TransitionCell] {
        match kind {
            RelationshipKind::Friendship => &self.friendship,
            RelationshipKind::Conflict => &self.conflict,
        }
    }

    /// Transition probability for relationships of `age` seasons.
    pub fn probability(&self, kind: RelationshipKind, age: usize) -> Option<f64> {
        self.cells(kind)[age.clamp(1, MAX_AGE_BUCKET) - 1].probability()
    }

    /// Pooled cell over all ages `>= min_age`.
    pub fn pooled(&self, kind: RelationshipKind, min_age: usize) -> TransitionCell {
        self.cells(kind)[min_age.clamp(1, MAX_AGE_BUCKET) - 1..]
            .iter()
            .fold(TransitionCell::default(), |acc, c| TransitionCell {
                at_risk: acc.at_risk + c.at_risk,
                transitions: acc.transitions + c.transitions,
            })
    }

    /// Friendship-to-hostility rate over hostility-to-friendship rate.
    pub fn rate_ratio(&self) -> Option<f64> {
        let dissolve = self.pooled(RelationshipKind::Friendship, 1).probability()?;
        let resolve = self.pooled(RelationshipKind::Conflict, 1).probability()?;
        (resolve > 0.0).then(|| dissolve / resolve)
    }
}

/// Count relationship transitions over every dyad-season.
///
/// Each season with acts is friendly (friendly acts only) or hostile (any
/// hostile act). A season without acts keeps the previous state while the
/// last act is at most [`MAX_FRIENDLY_GAP`] seasons old, and is undefined
/// afterwards. Age counts seasons since the state began. A season in a
/// defined state is at risk when the next season of the game is defined.
pub fn transition_statistics(timelines: &[DyadTimeline]) -> Result<TransitionStats, RelationError> {
    if timelines.is_empty() {
        return Err(RelationError::EmptyCorpus);
    }
    let mut stats = TransitionStats {
        friendship: vec![TransitionCell::default(); MAX_AGE_BUCKET],
        conflict: vec![TransitionCell::default(); MAX_AGE_BUCKET],
    };
    for tl in timelines {
        let mut labels: Vec<Option<RelationshipKind>> = vec![None; tl.n_seasons];
        for (season, acts) in tl.seasons() {
            if season < tl.n_seasons {
                labels[season] = Some(if acts.iter().any(|a| a.kind == ActKind::Hostile) {
                    RelationshipKind::Conflict
                } else {
                    RelationshipKind::Friendship
                });
            }
        }
        let mut states: Vec<Option<(RelationshipKind, usize)>> = vec![None; tl.n_seasons];
        let mut last_act: Option<usize> = None;
        for s in 0..tl.n_seasons {
            let prev = if s > 0 { states[s - 1] } else { None };
            states[s] = match labels[s] {
                Some(kind) => {
                    last_act = Some(s);
                    match prev {
                        Some((k, age)) if k == kind => Some((kind, age + 1)),
                        _ => Some((kind, 1)),
                    }
                }
                None => match (prev, last_act) {
                    (Some((k, age)), Some(l)) if s - l <= MAX_FRIENDLY_GAP => Some((k, age + 1)),
                    _ => None,
                },
            };
        }
        for s in 0..tl.n_seasons.saturating_sub(1) {
            let (Some((kind, age)), Some((next, _))) = (states[s], states[s + 1]) else {
                continue;
            };
            let cells = match kind {
                RelationshipKind::Friendship => &mut stats.friendship,
                RelationshipKind::Conflict => &mut stats.conflict,
            };
            let cell = &mut cells[age.min(MAX_AGE_BUCKET) - 1];
            cell.at_risk += 1;
            if next != kind {
                cell.transitions += 1;
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamelog::{Order, Phase, UnitKind};
    use std::collections::{BTreeMap, BTreeSet};

    fn t(code: &str) -> Territory {
        Territory::new(code).unwrap()
    }

    fn season(index: usize, occupancy: &[(&str, Power)], orders: Vec<Order>) -> SeasonRecord {
        let occupancy: BTreeMap<Territory, Power> =
            occupancy.iter().map(|(c, p)| (t(c), *p)).collect();
        SeasonRecord {
            index,
            year: 1901 + (index / 2) as i32,
            phase: if index % 2 == 0 { Phase::Spring } else { Phase::Fall },
            orders,
            messages: vec![],
            centers: occupancy.clone(),
            occupancy,
        }
    }

    fn order(power: Power, loc: &str, action: Action) -> Order {
        Order {
            power,
            unit: UnitKind::Army,
            location: t(loc),
            action,
        }
    }

    fn support_hold(p: Power, loc: &str, target: Power, target_loc: &str) -> Order {
        order(
            p,
            loc,
            Action::SupportHold {
                target_power: target,
                target_loc: t(target_loc),
            },
        )
    }

    fn support_move(p: Power, loc: &str, target: Power, from: &str, to: &str) -> Order {
        order(
            p,
            loc,
            Action::SupportMove {
                target_power: target,
                from: t(from),
                to: t(to),
            },
        )
    }

    fn mv(p: Power, loc: &str, dest: &str) -> Order {
        order(p, loc, Action::Move { dest: t(dest) })
    }

    const B: Power = Power::Russia;
    const V: Power = Power::Austria;
    const X: Power = Power::Germany;

    #[test]
    fn support_hold_is_friendly() {
        let s = season(
            0,
            &[("VIE", V), ("GAL", B)],
            vec![support_hold(B, "GAL", V, "VIE")],
        );
        let acts = classify_interactions(&s, &RelationConfig::default()).unwrap();
        assert_eq!(acts.len(), 1);
        assert_eq!((acts[0].kind, acts[0].actor, acts[0].recipient), (ActKind::Friendly, B, V));
        assert_eq!(acts[0].evidence, vec![0]);
    }

    #[test]
    fn attack_is_hostile() {
        let s = season(0, &[("VIE", V), ("GAL", B)], vec![mv(B, "GAL", "VIE")]);
        let acts = classify_interactions(&s, &RelationConfig::default()).unwrap();
        assert_eq!(acts.len(), 1);
        assert_eq!((acts[0].kind, acts[0].actor, acts[0].recipient), (ActKind::Hostile, B, V));
    }

    #[test]
    fn walk_into_unoccupied_center_is_hostile() {
        let mut s = season(0, &[("GAL", B)], vec![mv(B, "GAL", "BUD")]);
        s.centers.insert(t("BUD"), V);
        let acts = classify_interactions(&s, &RelationConfig::default()).unwrap();
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].recipient, V);
    }

    #[test]
    fn bounce_produces_nothing() {
        let s = season(
            0,
            &[("MUN", X), ("VIE", V)],
            vec![mv(X, "MUN", "TYR"), mv(V, "VIE", "TYR")],
        );
        assert!(classify_interactions(&s, &RelationConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn self_support_and_own_moves_ignored() {
        let s = season(
            0,
            &[("MUN", X), ("BER", X), ("KIE", X)],
            vec![
                support_hold(X, "BER", X, "MUN"),
                support_move(X, "KIE", X, "MUN", "BER"),
                mv(X, "MUN", "KIE"),
            ],
        );
        assert!(classify_interactions(&s, &RelationConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn supporting_an_enemy_is_hostile() {
        // B helps X move into V's Vienna: friendly to X, hostile to V.
        let s = season(
            0,
            &[("VIE", V), ("BOH", X), ("GAL", B)],
            vec![support_move(B, "GAL", X, "BOH", "VIE")],
        );
        let acts = classify_interactions(&s, &RelationConfig::default()).unwrap();
        assert_eq!(acts.len(), 2);
        assert_eq!((acts[0].kind, acts[0].recipient), (ActKind::Friendly, X));
        assert_eq!((acts[1].kind, acts[1].recipient), (ActKind::Hostile, V));
    }

    #[test]
    fn convoy_flag() {
        let s = season(
            0,
            &[("NTH", Power::England), ("BEL", Power::France)],
            vec![order(
                Power::England,
                "NTH",
                Action::Convoy {
                    target_power: Power::France,
                    from: t("BEL"),
                    to: t("YOR"),
                },
            )],
        );
        assert!(classify_interactions(&s, &RelationConfig::default())
            .unwrap()
            .is_empty());
        let cfg = RelationConfig {
            convoy_as_friendly: true,
            ..Default::default()
        };
        let acts = classify_interactions(&s, &cfg).unwrap();
        assert_eq!(acts[0].kind, ActKind::Friendly);
    }

    #[test]
    fn unknown_territory() {
        let s = season(0, &[("MUN", X)], vec![mv(X, "MUN", "QQQ")]);
        assert_eq!(
            classify_interactions(&s, &RelationConfig::default()).unwrap_err(),
            RelationError::UnknownTerritory {
                season: 0,
                order: 0,
                territory: "QQQ".into()
            }
        );
        // custom boards may name extra territories in their maps
        let s = season(0, &[("MUN", X), ("QQQ", V)], vec![mv(X, "MUN", "QQQ")]);
        assert_eq!(classify_interactions(&s, &RelationConfig::default()).unwrap().len(), 1);
    }

    fn act(season: usize, kind: ActKind, actor: Power) -> Act {
        let recipient = if actor == B { V } else { B };
        Act {
            season_index: season,
            kind,
            actor,
            recipient,
            evidence: vec![0],
        }
    }

    fn timeline(acts: Vec<Act>, n_seasons: usize) -> DyadTimeline {
        DyadTimeline {
            game_id: "g".into(),
            pair: Dyad::new(B, V),
            n_seasons,
            acts,
        }
    }

    use ActKind::{Friendly as F, Hostile as H};

    /// Figure-style arc: friendly acts at relative seasons 4, 3, 3, 1, then
    /// B attacks at 0 and V retaliates at -1. Betrayal season is 6.
    fn arc() -> DyadTimeline {
        timeline(
            vec![
                act(2, F, B),
                act(3, F, V),
                act(3, F, B),
                act(5, F, V),
                act(6, H, B),
                act(7, H, V),
            ],
            10,
        )
    }

    #[test]
    fn arc_span_and_betrayal() {
        let tl = arc();
        let cfg = RelationConfig::default();
        let spans = find_stable_friendships(&tl, &cfg);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].length_seasons, 4);
        assert_eq!(spans[0].acts.len(), 4);
        let b = detect_betrayal(&spans[0], &tl);
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].betrayer, b[0].victim), (B, V));
        assert_eq!(b[0].relative_index(b[0].betrayal_season), 0);
        assert_eq!(b[0].relative_index(spans[0].last_friendly_season), 1);
        assert_eq!(b[0].relative_index(spans[0].first_friendly_season), 4);
        assert_eq!(b[0].hostile_acts.len(), 2);
    }

    #[test]
    fn single_season_friendship_is_not_stable() {
        let tl = timeline(vec![act(3, F, B), act(3, F, V)], 10);
        assert!(find_stable_friendships(&tl, &RelationConfig::default()).is_empty());
    }

    #[test]
    fn six_season_gap_splits() {
        // 0..2 qualifies on its own, 8..9 is too short
        let tl = timeline(
            vec![act(0, F, B), act(2, F, V), act(8, F, B), act(9, F, V)],
            12,
        );
        let spans = find_stable_friendships(&tl, &RelationConfig::default());
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].first_friendly_season, spans[0].last_friendly_season), (0, 2));
        // a gap of exactly five keeps the run together
        let tl = timeline(vec![act(0, F, B), act(5, F, V)], 12);
        assert_eq!(find_stable_friendships(&tl, &RelationConfig::default()).len(), 1);
        let tl = timeline(vec![act(0, F, B), act(6, F, V)], 12);
        assert!(find_stable_friendships(&tl, &RelationConfig::default()).is_empty());
    }

    #[test]
    fn unreciprocated_is_not_stable() {
        let tl = timeline(vec![act(0, F, B), act(1, F, B), act(3, F, B)], 6);
        assert!(find_stable_friendships(&tl, &RelationConfig::default()).is_empty());
    }

    #[test]
    fn strict_reciprocity_needs_two_each_way() {
        let tl = timeline(vec![act(0, F, B), act(1, F, V), act(3, F, B)], 6);
        assert_eq!(find_stable_friendships(&tl, &RelationConfig::default()).len(), 1);
        let strict = RelationConfig {
            strict_reciprocity: true,
            ..Default::default()
        };
        assert!(find_stable_friendships(&tl, &strict).is_empty());
    }

    #[test]
    fn mixed_season_is_hostile_dominant() {
        let tl = timeline(
            vec![act(0, F, B), act(1, F, V), act(2, F, B), act(2, H, V), act(3, H, B)],
            6,
        );
        let cfg = RelationConfig::default();
        let spans = find_stable_friendships(&tl, &cfg);
        assert!(spans.is_empty(), "span 0..1 is only two seasons long");
        let tl = timeline(
            vec![
                act(0, F, B),
                act(1, F, V),
                act(2, F, B),
                act(3, F, B),
                act(3, H, V),
                act(4, H, B),
            ],
            6,
        );
        let spans = find_stable_friendships(&tl, &cfg);
        assert_eq!(spans[0].last_friendly_season, 2);
        let b = detect_betrayal(&spans[0], &tl);
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].betrayer, b[0].betrayal_season), (V, 3));
    }

    #[test]
    fn one_hostile_act_is_not_betrayal() {
        let tl = timeline(vec![act(0, F, B), act(1, F, V), act(2, F, B), act(3, H, B)], 4);
        let spans = find_stable_friendships(&tl, &RelationConfig::default());
        assert!(detect_betrayal(&spans[0], &tl).is_empty());
    }

    #[test]
    fn friendly_act_between_hostile_acts_cancels() {
        let tl = timeline(
            vec![
                act(0, F, B),
                act(1, F, V),
                act(2, F, B),
                act(3, H, B),
                act(10, F, V),
                act(11, H, V),
            ],
            12,
        );
        let spans = find_stable_friendships(&tl, &RelationConfig::default());
        assert_eq!(spans.len(), 1);
        assert!(detect_betrayal(&spans[0], &tl).is_empty());
    }

    #[test]
    fn mutual_betrayal_yields_two_records() {
        let tl = timeline(
            vec![
                act(0, F, B),
                act(1, F, V),
                act(2, F, B),
                act(3, H, B),
                act(3, H, V),
                act(4, H, B),
                act(4, H, V),
            ],
            6,
        );
        let spans = find_stable_friendships(&tl, &RelationConfig::default());
        let mut b = detect_betrayal(&spans[0], &tl);
        assert_eq!(b.len(), 2);
        b.sort_by_key(|r| r.betrayer);
        assert_eq!((b[0].betrayer, b[0].victim), (V, B));
        assert_eq!((b[1].betrayer, b[1].victim), (B, V));
        for r in &b {
            assert_eq!(r.hostile_acts[0].actor, r.betrayer);
            assert_eq!(r.betrayal_season, 3);
        }
    }

    #[test]
    fn empty_timeline() {
        let tl = timeline(vec![], 5);
        assert!(find_stable_friendships(&tl, &RelationConfig::default()).is_empty());
    }

    fn game_with(seasons: Vec<SeasonRecord>) -> GameLog {
        GameLog {
            game_id: "g".into(),
            variant: "standard".into(),
            powers: Power::ALL.into_iter().collect::<BTreeSet<_>>(),
            seasons,
        }
    }

    #[test]
    fn timeline_ignores_other_powers() {
        let occ = [("VIE", V), ("GAL", B), ("MUN", X), ("BER", Power::Turkey)];
        let mut orders = vec![
            support_hold(B, "GAL", V, "VIE"),
            mv(X, "MUN", "BER"),
            support_hold(Power::Turkey, "BER", X, "MUN"),
        ];
        let g1 = game_with(vec![season(0, &occ, orders.clone())]);
        orders.swap(1, 2);
        let g2 = game_with(vec![season(0, &occ, orders)]);
        let cfg = RelationConfig::default();
        let a = build_dyad_timeline(&g1, Dyad::new(B, V), &cfg).unwrap();
        let b = build_dyad_timeline(&g2, Dyad::new(B, V), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.acts.len(), 1);
        let none = build_dyad_timeline(&g1, Dyad::new(Power::England, Power::France), &cfg).unwrap();
        assert!(none.acts.is_empty());
        let all = build_all_timelines(&g1, &cfg).unwrap();
        assert_eq!(all.len(), 21);
        assert_eq!(all.iter().find(|t| t.pair == Dyad::new(B, V)).unwrap(), &a);
    }

    #[test]
    fn never_broken_friendship_has_zero_dissolution() {
        let acts = (0..8).flat_map(|s| [act(s, F, B), act(s, F, V)]).collect();
        let stats = transition_statistics(&[timeline(acts, 8)]).unwrap();
        for age in 1..=7 {
            assert_eq!(stats.probability(RelationshipKind::Friendship, age), Some(0.0));
        }
        assert_eq!(stats.pooled(RelationshipKind::Friendship, 1).at_risk, 7);
        assert_eq!(stats.rate_ratio(), None);
        assert_eq!(transition_statistics(&[]).unwrap_err(), RelationError::EmptyCorpus);
    }

    #[test]
    fn transitions_counted_by_age() {
        // F F H H F . . . . . . (undefined after gap)
        let acts = vec![
            act(0, F, B),
            act(1, F, V),
            act(2, H, B),
            act(3, H, V),
            act(4, F, B),
        ];
        let stats = transition_statistics(&[timeline(acts, 12)]).unwrap();
        let f1 = stats.friendship[0];
        let f2 = stats.friendship[1];
        assert_eq!((f1.at_risk, f1.transitions), (2, 0));
        assert_eq!((f2.at_risk, f2.transitions), (2, 1));
        let c2 = stats.conflict[1];
        assert_eq!((c2.at_risk, c2.transitions), (1, 1));
        // season 4 friendship carried through season 9; 9 -> 10 is censored
        assert_eq!(stats.pooled(RelationshipKind::Friendship, 1).at_risk, 2 + 5);
        let ratio = stats.rate_ratio().unwrap();
        assert!((ratio - (1.0 / 7.0) / (1.0 / 2.0)).abs() < 1e-12);
    }
}
