//! Matched betrayal/control population and labeled instances for the
//! long-term and imminent prediction tasks.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gamelog::{GameLog, Power};
use crate::lingcues::{aggregate_season_features_with, feature_names, LexiconSet, Scorers};
use crate::relations::{BetrayalRecord, FriendshipSpan};
use crate::stats::{self, StatsError, TestResult};

#[derive(Debug, Error, PartialEq)]
pub enum CohortError {
    #[error("{betrayals} betrayals but only {candidates} control candidates")]
    InsufficientControls { betrayals: usize, candidates: usize },
    #[error("matched sets differ on {variable} (Mann-Whitney p = {p_value:.4})")]
    Imbalanced { variable: String, p_value: f64 },
    #[error("unknown game {0}")]
    UnknownGame(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Balance tests below this p-value fail under strict balance.
pub const STRICT_BALANCE_ALPHA: f64 = 0.05;
/// Minimum friendship length for the imminent task.
pub const IMMINENT_MIN_LENGTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub betrayal: BetrayalRecord,
    pub control: FriendshipSpan,
    pub distance: f64,
}

/// Mann-Whitney comparison of betrayal and matched-control spans on both
/// matching variables. `None` when nothing was matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub n_pairs: usize,
    pub length: Option<TestResult>,
    pub start_offset: Option<TestResult>,
}

impl BalanceReport {
    /// Error if either variable differs at p ≤ 0.05.
    pub fn check_strict(&self) -> Result<(), CohortError> {
        for (name, test) in [("length", &self.length), ("start_offset", &self.start_offset)] {
            if let Some(t) = test {
                if t.p_value <= STRICT_BALANCE_ALPHA {
                    return Err(CohortError::Imbalanced {
                        variable: name.into(),
                        p_value: t.p_value,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Spans that never ended in betrayal.
pub fn control_candidates(spans: &[FriendshipSpan], betrayals: &[BetrayalRecord]) -> Vec<FriendshipSpan> {
    let betrayed: BTreeSet<String> = betrayals.iter().map(|b| b.span.id()).collect();
    spans
        .iter()
        .filter(|s| !betrayed.contains(&s.id()))
        .cloned()
        .collect()
}

fn z_params(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let m = stats::mean(&v);
    let sd = if v.len() > 1 { stats::variance(&v).sqrt() } else { 0.0 };
    (m, if sd > 0.0 { sd } else { 1.0 })
}

fn betrayal_order(a: &BetrayalRecord, b: &BetrayalRecord) -> Ordering {
    b.span
        .length_seasons
        .cmp(&a.span.length_seasons)
        .then_with(|| a.span.game_id.cmp(&b.span.game_id))
        .then_with(|| a.span.dyad.to_string().cmp(&b.span.dyad.to_string()))
        .then_with(|| a.span.first_friendly_season.cmp(&b.span.first_friendly_season))
        .then_with(|| a.betrayer.cmp(&b.betrayer))
}

/// Greedy nearest-neighbour matching of betrayals to never-betrayed spans.
///
/// Betrayals are visited longest friendship first. Each takes the unused
/// candidate with the smallest L1 distance on z-scored (length, start
/// offset), breaking ties by the smaller start-offset difference and then
/// by span id. z-scores use the pooled betrayal and candidate values.
/// The procedure is deterministic; `seed` is accepted for interface
/// stability and does not influence the result.
pub fn match_controls(
    betrayals: &[BetrayalRecord],
    candidates: &[FriendshipSpan],
    _seed: u64,
) -> Result<(Vec<MatchedPair>, BalanceReport), CohortError> {
    if candidates.len() < betrayals.len() {
        return Err(CohortError::InsufficientControls {
            betrayals: betrayals.len(),
            candidates: candidates.len(),
        });
    }
    let spans = betrayals.iter().map(|b| &b.span).chain(candidates.iter());
    let (ml, sl) = z_params(spans.clone().map(|s| s.length_seasons as f64));
    let (ms, ss) = z_params(spans.map(|s| s.start_offset as f64));
    let z = |s: &FriendshipSpan| ((s.length_seasons as f64 - ml) / sl, (s.start_offset as f64 - ms) / ss);

    let mut order: Vec<&BetrayalRecord> = betrayals.iter().collect();
    order.sort_by(|a, b| betrayal_order(a, b));
    let cand_z: Vec<(f64, f64)> = candidates.iter().map(z).collect();
    let cand_id: Vec<String> = candidates.iter().map(|c| c.id()).collect();
    let mut used = vec![false; candidates.len()];
    let mut pairs = Vec::with_capacity(order.len());
    for b in order {
        let (bl, bs) = z(&b.span);
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = (cand_z[i].0 - bl).abs() + (cand_z[i].1 - bs).abs();
            let ds = c.start_offset.abs_diff(b.span.start_offset);
            let better = match best {
                None => true,
                Some((bd, bds, bi)) => d
                    .total_cmp(&bd)
                    .then(ds.cmp(&bds))
                    .then_with(|| cand_id[i].cmp(&cand_id[bi]))
                    .is_lt(),
            };
            if better {
                best = Some((d, ds, i));
            }
        }
        let (d, _, i) = best.expect("enough candidates");
        used[i] = true;
        pairs.push(MatchedPair {
            betrayal: b.clone(),
            control: candidates[i].clone(),
            distance: d,
        });
    }
    let report = balance_report(&pairs)?;
    Ok((pairs, report))
}

pub fn balance_report(pairs: &[MatchedPair]) -> Result<BalanceReport, CohortError> {
    if pairs.is_empty() {
        return Ok(BalanceReport {
            n_pairs: 0,
            length: None,
            start_offset: None,
        });
    }
    let col = |f: fn(&FriendshipSpan) -> usize| -> (Vec<f64>, Vec<f64>) {
        (
            pairs.iter().map(|p| f(&p.betrayal.span) as f64).collect(),
            pairs.iter().map(|p| f(&p.control) as f64).collect(),
        )
    };
    let (bl, cl) = col(|s| s.length_seasons);
    let (bs, cs) = col(|s| s.start_offset);
    Ok(BalanceReport {
        n_pairs: pairs.len(),
        length: Some(stats::mann_whitney_u(&bl, &cl)?),
        start_offset: Some(stats::mann_whitney_u(&bs, &cs)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Longterm,
    Imminent,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Longterm => "longterm",
            Task::Imminent => "imminent",
        })
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "longterm" => Ok(Task::Longterm),
            "imminent" => Ok(Task::Imminent),
            _ => Err(format!("unknown task {s:?} (expected longterm or imminent)")),
        }
    }
}

/// One dyad-season with roles assigned. `features` is empty until
/// [`featurize`] fills it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub game_id: String,
    pub betrayer: Power,
    pub victim: Power,
    pub season_index: usize,
    /// Seasons before the first hostile act; for controls, before the
    /// season after the last friendly act.
    pub t: i64,
    pub label: u8,
    pub group_key: String,
    pub features: Vec<f64>,
}

impl TaskInstance {
    /// `B-V` tag in role order.
    pub fn dyad(&self) -> String {
        format!("{}-{}", self.betrayer, self.victim)
    }
}

fn instance(span: &FriendshipSpan, b: Power, v: Power, season: usize, t: i64, label: u8) -> TaskInstance {
    TaskInstance {
        game_id: span.game_id.clone(),
        betrayer: b,
        victim: v,
        season_index: season,
        t,
        label,
        group_key: span.game_id.clone(),
        features: vec![],
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x100000001b3)
    })
}

/// Deterministic, arbitrary (B, V) roles for a control span.
pub fn control_roles(span: &FriendshipSpan) -> (Power, Power) {
    let key = format!("{}/{}", span.game_id, span.dyad);
    let (a, b) = (span.dyad.first(), span.dyad.second());
    if fnv1a(key.as_bytes()) % 2 == 0 {
        (a, b)
    } else {
        (b, a)
    }
}

/// Seasons of the betrayal window: from the first friendly season up to,
/// but excluding, the season of the last friendly act.
pub fn betrayal_window(b: &BetrayalRecord) -> std::ops::Range<usize> {
    b.span.first_friendly_season..b.span.last_friendly_season
}

/// Long-term task: every season of each betrayal window (label 1) and of
/// its control's mirrored window (label 0). The control window has the
/// same length, ends the season before the control's last friendly act
/// and is clipped at the control's first friendly season.
pub fn label_longterm_task(pairs: &[MatchedPair]) -> Vec<TaskInstance> {
    let mut out = Vec::new();
    for p in pairs {
        let b = &p.betrayal;
        for s in betrayal_window(b) {
            out.push(instance(&b.span, b.betrayer, b.victim, s, b.relative_index(s), 1));
        }
        let c = &p.control;
        let len = betrayal_window(b).len();
        let (cb, cv) = control_roles(c);
        let end = c.last_friendly_season;
        let start = end.saturating_sub(len).max(c.first_friendly_season);
        for s in start..end {
            out.push(instance(c, cb, cv, s, (end + 1 - s) as i64, 0));
        }
    }
    out
}

/// Imminent task over betrayals whose friendship lasted at least four
/// seasons: the newest window season is positive, older ones negative.
pub fn label_imminent_task(betrayals: &[BetrayalRecord]) -> Vec<TaskInstance> {
    let mut out = Vec::new();
    for b in betrayals.iter().filter(|b| b.span.length_seasons >= IMMINENT_MIN_LENGTH) {
        let w = betrayal_window(b);
        let newest = w.end - 1;
        for s in w {
            let label = u8::from(s == newest);
            out.push(instance(&b.span, b.betrayer, b.victim, s, b.relative_index(s), label));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub positives: usize,
    pub negatives: usize,
    pub positive_rate: f64,
}

pub fn class_balance(instances: &[TaskInstance]) -> ClassBalance {
    let positives = instances.iter().filter(|i| i.label == 1).count();
    let n = instances.len();
    ClassBalance {
        positives,
        negatives: n - positives,
        positive_rate: if n > 0 { positives as f64 / n as f64 } else { 0.0 },
    }
}

/// Share of false positives whose season lies within `within` seasons
/// before the last friendly act. `None` without false positives.
pub fn false_positive_proximity(instances: &[TaskInstance], predictions: &[u8], within: i64) -> Option<f64> {
    let fp: Vec<&TaskInstance> = instances
        .iter()
        .zip(predictions)
        .filter(|(i, p)| **p == 1 && i.label == 0)
        .map(|(i, _)| i)
        .collect();
    if fp.is_empty() {
        return None;
    }
    let near = fp.iter().filter(|i| i.t - 1 <= within).count();
    Some(near as f64 / fp.len() as f64)
}

/// Fill every instance's feature vector from the messages its roles
/// exchanged in its season.
pub fn featurize(
    instances: &mut [TaskInstance],
    games: &[GameLog],
    lexicon: &LexiconSet,
) -> Result<(), CohortError> {
    let by_id: BTreeMap<&str, &GameLog> = games.iter().map(|g| (g.game_id.as_str(), g)).collect();
    let scorers = Scorers::lexicon_defaults(lexicon);
    for inst in instances.iter_mut() {
        let game = by_id
            .get(inst.game_id.as_str())
            .ok_or_else(|| CohortError::UnknownGame(inst.game_id.clone()))?;
        let messages = game
            .seasons
            .iter()
            .find(|s| s.index == inst.season_index)
            .map(|s| s.messages.as_slice())
            .unwrap_or(&[]);
        inst.features =
            aggregate_season_features_with(messages, inst.betrayer, inst.victim, lexicon, &scorers).to_vector();
    }
    Ok(())
}

/// CSV with header `game_id,dyad,season,t,label,<features>`.
pub fn to_csv(instances: &[TaskInstance]) -> String {
    let mut out = String::from("game_id,dyad,season,t,label");
    for name in feature_names() {
        out.push(',');
        out.push_str(&name);
    }
    out.push('\n');
    for i in instances {
        out.push_str(&format!("{},{},{},{},{}", i.game_id, i.dyad(), i.season_index, i.t, i.label));
        for v in &i.features {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::{Act, ActKind, Dyad};

    fn span(game: &str, pair: Dyad, first: usize, len: usize) -> FriendshipSpan {
        let last = first + len - 1;
        let act = |s, a: Power| Act {
            season_index: s,
            kind: ActKind::Friendly,
            actor: a,
            recipient: pair.other(a),
            evidence: vec![0],
        };
        FriendshipSpan {
            game_id: game.into(),
            dyad: pair,
            first_friendly_season: first,
            last_friendly_season: last,
            length_seasons: len,
            start_offset: first,
            acts: vec![act(first, pair.first()), act(last, pair.second())],
        }
    }

    fn betrayal(game: &str, first: usize, len: usize) -> BetrayalRecord {
        let pair = Dyad::new(Power::Russia, Power::Austria);
        let s = span(game, pair, first, len);
        BetrayalRecord {
            betrayal_season: s.last_friendly_season + 1,
            betrayer: Power::Russia,
            victim: Power::Austria,
            hostile_acts: vec![],
            span: s,
        }
    }

    fn cand(game: &str, first: usize, len: usize) -> FriendshipSpan {
        span(game, Dyad::new(Power::England, Power::France), first, len)
    }

    #[test]
    fn single_pair_matches_regardless_of_distance() {
        let (pairs, report) = match_controls(&[betrayal("a", 0, 3)], &[cand("b", 30, 20)], 1).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].control.game_id, "b");
        assert_eq!(report.n_pairs, 1);
    }

    #[test]
    fn nearest_candidate_wins() {
        let cands = [cand("x", 3, 5), cand("y", 9, 5), cand("z", 3, 2)];
        let (pairs, _) = match_controls(&[betrayal("a", 3, 5)], &cands, 7).unwrap();
        assert_eq!(pairs[0].control.game_id, "x");
        assert_eq!(pairs[0].distance, 0.0);
    }

    #[test]
    fn too_few_candidates() {
        let err = match_controls(&[betrayal("a", 0, 3), betrayal("b", 0, 3)], &[cand("c", 0, 3)], 0).unwrap_err();
        assert_eq!(
            err,
            CohortError::InsufficientControls {
                betrayals: 2,
                candidates: 1
            }
        );
    }

    #[test]
    fn matching_is_injective_and_seed_free() {
        let bs: Vec<_> = (0..6).map(|i| betrayal(&format!("g{i}"), i, 3 + i % 3)).collect();
        let cs: Vec<_> = (0..9).map(|i| cand(&format!("c{i}"), i % 4, 3 + i % 4)).collect();
        let (p1, r1) = match_controls(&bs, &cs, 1).unwrap();
        let (p2, r2) = match_controls(&bs, &cs, 99).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
        let ids: BTreeSet<String> = p1.iter().map(|p| p.control.id()).collect();
        assert_eq!(ids.len(), p1.len());
    }

    #[test]
    fn strict_balance_flags_mismatch() {
        let bs: Vec<_> = (0..10).map(|i| betrayal(&format!("g{i}"), 0, 3)).collect();
        let cs: Vec<_> = (0..10).map(|i| cand(&format!("c{i}"), 20, 12)).collect();
        let (_, report) = match_controls(&bs, &cs, 0).unwrap();
        assert!(matches!(report.check_strict(), Err(CohortError::Imbalanced { .. })));
        let cs: Vec<_> = (0..10).map(|i| cand(&format!("c{i}"), 0, 3)).collect();
        let (_, report) = match_controls(&bs, &cs, 0).unwrap();
        assert!(report.check_strict().is_ok());
    }

    #[test]
    fn control_candidates_excludes_betrayed() {
        let b = betrayal("a", 0, 3);
        let other = cand("a", 0, 3);
        let c = control_candidates(&[b.span.clone(), other.clone()], &[b]);
        assert_eq!(c, vec![other]);
    }

    #[test]
    fn six_pre_betrayal_seasons_give_five_instances() {
        // friendly from t=6 to t=1
        let b = betrayal("a", 4, 6);
        let pair = MatchedPair {
            betrayal: b,
            control: cand("c", 0, 10),
            distance: 0.0,
        };
        let inst = label_longterm_task(&[pair]);
        let pos: Vec<i64> = inst.iter().filter(|i| i.label == 1).map(|i| i.t).collect();
        assert_eq!(pos, vec![6, 5, 4, 3, 2]);
        let neg: Vec<&TaskInstance> = inst.iter().filter(|i| i.label == 0).collect();
        assert_eq!(neg.len(), 5);
        assert_eq!(neg.iter().map(|i| i.season_index).collect::<Vec<_>>(), vec![4, 5, 6, 7, 8]);
        assert!(inst.iter().all(|i| i.group_key == i.game_id));
    }

    #[test]
    fn control_window_clipped_to_its_span() {
        let pair = MatchedPair {
            betrayal: betrayal("a", 0, 8),
            control: cand("c", 2, 3),
            distance: 0.0,
        };
        let neg: Vec<usize> = label_longterm_task(&[pair])
            .iter()
            .filter(|i| i.label == 0)
            .map(|i| i.season_index)
            .collect();
        assert_eq!(neg, vec![2, 3]);
    }

    #[test]
    fn imminent_window_arithmetic() {
        // window of two seasons: one positive, one negative
        let mut b = betrayal("a", 0, 4);
        b.span.first_friendly_season = 1;
        let inst = label_imminent_task(&[b]);
        assert_eq!(inst.len(), 2);
        assert_eq!(class_balance(&inst).positives, 1);
        assert_eq!(inst.iter().find(|i| i.label == 1).unwrap().t, 2);

        let inst = label_imminent_task(&[betrayal("a", 0, 4), betrayal("b", 0, 3)]);
        assert_eq!(inst.len(), 3);
        assert_eq!(class_balance(&inst).positives, 1);
    }

    #[test]
    fn false_positive_proximity_counts_near_seasons() {
        let inst = label_imminent_task(&[betrayal("a", 0, 7)]);
        // window t = 7..2; predict positive everywhere
        let preds = vec![1u8; inst.len()];
        let p = false_positive_proximity(&inst, &preds, 2).unwrap();
        assert!((p - 1.0 / 5.0).abs() < 1e-12);
        assert_eq!(false_positive_proximity(&inst, &vec![0; inst.len()], 2), None);
    }

    #[test]
    fn csv_header_and_rows() {
        let mut inst = label_imminent_task(&[betrayal("a", 0, 4)]);
        for i in &mut inst {
            i.features = vec![0.0; crate::lingcues::N_FEATURES];
        }
        let csv = to_csv(&inst);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("game_id,dyad,season,t,label,B:messages"));
        assert_eq!(lines.next().unwrap().split(',').count(), 5 + crate::lingcues::N_FEATURES);
        assert!(csv.contains(",RUSSIA-AUSTRIA,"));
    }
}
