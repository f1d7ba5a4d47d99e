//! End-to-end chaining of relations, cohort, cues and model for one task.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{self, BalanceReport, ClassBalance, CohortError, MatchedPair, Task, TaskInstance};
use crate::gamelog::GameLog;
use crate::lingcues::{self, feature_names, LexiconSet, LingError, CUE_NAMES, N_FEATURES};
use crate::model::{self, Grid, Matrix, ModelError, NestedResult, RankedFeature, TrainedModel};
use crate::relations::{self, BetrayalRecord, DyadTimeline, FriendshipSpan, RelationConfig, RelationError, TransitionStats};
use crate::stats::{self, StatsError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Lexicon(#[from] LingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Each class needs at least this many instances for a run.
pub const MIN_CLASS_INSTANCES: usize = 10;
pub const DEFAULT_FOLDS: usize = 5;
/// Bootstrap replicates behind each figure point's standard error.
pub const CURVE_REPLICATES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelateOutput {
    pub timelines: Vec<DyadTimeline>,
    pub spans: Vec<FriendshipSpan>,
    pub betrayals: Vec<BetrayalRecord>,
    pub transitions: TransitionStats,
}

pub fn relate(games: &[GameLog], config: &RelationConfig) -> Result<RelateOutput> {
    let mut timelines = Vec::new();
    let mut spans = Vec::new();
    let mut betrayals = Vec::new();
    for g in games {
        for tl in relations::build_all_timelines(g, config)? {
            let (s, b) = relations::analyze_timeline(&tl, config);
            spans.extend(s);
            betrayals.extend(b);
            timelines.push(tl);
        }
    }
    let transitions = relations::transition_statistics(&timelines)?;
    Ok(RelateOutput {
        timelines,
        spans,
        betrayals,
        transitions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortOutput {
    pub n_candidates: usize,
    pub pairs: Vec<MatchedPair>,
    pub balance: BalanceReport,
}

pub fn build_cohort(rel: &RelateOutput, seed: u64, strict_balance: bool) -> Result<CohortOutput> {
    let candidates = cohort::control_candidates(&rel.spans, &rel.betrayals);
    let (pairs, balance) = cohort::match_controls(&rel.betrayals, &candidates, seed)?;
    if strict_balance {
        balance.check_strict()?;
    }
    Ok(CohortOutput {
        n_candidates: candidates.len(),
        pairs,
        balance,
    })
}

/// Lexicon with connectives pruned on the corpus's dyadic messages.
pub fn corpus_lexicon(games: &[GameLog], lexicon: &LexiconSet) -> Result<LexiconSet> {
    let texts = games
        .iter()
        .flat_map(|g| g.messages())
        .filter(|m| m.is_dyadic())
        .map(|m| m.text.as_str());
    Ok(lingcues::prune_frequent_connectives(texts, lexicon)?)
}

/// Labeled, featurized instances for `task`.
pub fn task_instances(
    task: Task,
    games: &[GameLog],
    rel: &RelateOutput,
    cohort: Option<&CohortOutput>,
    lexicon: &LexiconSet,
) -> Result<Vec<TaskInstance>> {
    let mut instances = match task {
        Task::Longterm => {
            let c = cohort.ok_or_else(|| PipelineError::InsufficientData("long-term task needs a matched cohort".into()))?;
            cohort::label_longterm_task(&c.pairs)
        }
        Task::Imminent => cohort::label_imminent_task(&rel.betrayals),
    };
    cohort::featurize(&mut instances, games, lexicon)?;
    Ok(instances)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceTest {
    pub cue: String,
    pub n: usize,
    pub mean: f64,
    pub t: f64,
    pub p_value: f64,
}

/// One-sample t-tests of each B − V cue against 0 over betrayal seasons.
/// Cues without variance are skipped.
pub fn imbalance_tests(task: Task, instances: &[TaskInstance]) -> Vec<ImbalanceTest> {
    let rows: Vec<&TaskInstance> = instances
        .iter()
        .filter(|i| task == Task::Imminent || i.label == 1)
        .collect();
    let offset = 2 * CUE_NAMES.len();
    CUE_NAMES
        .iter()
        .enumerate()
        .filter_map(|(c, name)| {
            let v: Vec<f64> = rows.iter().map(|i| i.features[offset + c]).collect();
            let r = stats::one_sample_t(&v, 0.0).ok()?;
            Some(ImbalanceTest {
                cue: name.to_string(),
                n: v.len(),
                mean: stats::mean(&v),
                t: r.statistic,
                p_value: r.p_value,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// `betrayer`, `victim`, `control_b` or `control_v`.
    pub group: String,
    pub t: i64,
    pub cue: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

/// Per-relative-season cue means with bootstrap standard errors.
pub fn cue_curves(task: Task, instances: &[TaskInstance], seed: u64) -> Result<Vec<CurvePoint>> {
    let mut cells: BTreeMap<(&str, i64), Vec<&TaskInstance>> = BTreeMap::new();
    for i in instances {
        let betrayal = task == Task::Imminent || i.label == 1;
        let (b, v) = if betrayal { ("betrayer", "victim") } else { ("control_b", "control_v") };
        cells.entry((b, i.t)).or_default().push(i);
        cells.entry((v, i.t)).or_default().push(i);
    }
    let mut out = Vec::new();
    for ((group, t), rows) in cells {
        let offset = if matches!(group, "betrayer" | "control_b") { 0 } else { CUE_NAMES.len() };
        for (c, cue) in CUE_NAMES.iter().enumerate() {
            let v: Vec<f64> = rows.iter().map(|i| i.features[offset + c]).collect();
            let se = if v.len() > 1 {
                let point_seed = seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ c as u64;
                stats::bootstrap(&v, stats::mean, CURVE_REPLICATES, 0.95, point_seed)?.se
            } else {
                0.0
            };
            out.push(CurvePoint {
                group: group.to_string(),
                t,
                cue: cue.to_string(),
                n: v.len(),
                mean: stats::mean(&v),
                se,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub task: Task,
    pub seed: u64,
    pub grid: Grid,
    pub k_folds: usize,
    pub strict_balance: bool,
    pub relation: RelationConfig,
}

impl RunOptions {
    pub fn new(task: Task, seed: u64) -> Self {
        let metric = match task {
            Task::Longterm => model::ObjectiveMetric::Accuracy,
            Task::Imminent => model::ObjectiveMetric::F1,
        };
        RunOptions {
            task,
            seed,
            grid: Grid::full(metric),
            k_folds: DEFAULT_FOLDS,
            strict_balance: false,
            relation: RelationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub n_configs: usize,
    pub best: model::ModelConfig,
    /// Cross-validated report of the selected configuration. Optimistic:
    /// the same folds chose it.
    pub report: model::EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    pub seed: u64,
    pub n_games: usize,
    pub n_spans: usize,
    pub n_betrayals: usize,
    pub n_candidates: Option<usize>,
    pub balance: Option<BalanceReport>,
    pub class_balance: ClassBalance,
    pub pruned_connectives: Vec<String>,
    pub grid: GridSummary,
    /// Headline estimate: selection and fitting never saw the scored games.
    pub nested: NestedResult,
    pub ranking: Vec<RankedFeature>,
    pub imbalance: Vec<ImbalanceTest>,
    /// Imminent task: share of nested-CV false positives within two
    /// seasons of the last friendly act.
    pub false_positive_proximity: Option<f64>,
}

pub struct RunOutput {
    pub report: RunReport,
    pub model: TrainedModel,
    pub instances: Vec<TaskInstance>,
    pub curves: Vec<CurvePoint>,
}

pub fn instance_matrix(instances: &[TaskInstance]) -> Result<(Matrix, Vec<u8>, Vec<String>)> {
    let mut data = Vec::with_capacity(instances.len() * N_FEATURES);
    for i in instances {
        if i.features.len() != N_FEATURES {
            return Err(PipelineError::InsufficientData(format!(
                "instance {}/{} has {} features, expected {N_FEATURES}",
                i.game_id,
                i.season_index,
                i.features.len()
            )));
        }
        data.extend_from_slice(&i.features);
    }
    let x = Matrix::new(instances.len(), N_FEATURES, data)?;
    let y = instances.iter().map(|i| i.label).collect();
    let groups = instances.iter().map(|i| i.group_key.clone()).collect();
    Ok((x, y, groups))
}

pub fn check_sizes(instances: &[TaskInstance], k_folds: usize) -> Result<()> {
    let b = cohort::class_balance(instances);
    if b.positives < MIN_CLASS_INSTANCES || b.negatives < MIN_CLASS_INSTANCES {
        return Err(PipelineError::InsufficientData(format!(
            "{} positive and {} negative instances (need {MIN_CLASS_INSTANCES} of each)",
            b.positives, b.negatives
        )));
    }
    let games: BTreeSet<&str> = instances.iter().map(|i| i.group_key.as_str()).collect();
    if games.len() < k_folds {
        return Err(PipelineError::InsufficientData(format!(
            "instances come from {} games; {k_folds} folds need at least that many",
            games.len()
        )));
    }
    Ok(())
}

/// Run one task from parsed games to report, model and figure data.
pub fn run(games: &[GameLog], lexicon: &LexiconSet, opts: &RunOptions) -> Result<RunOutput> {
    let rel = relate(games, &opts.relation)?;
    let cohort_out = match opts.task {
        Task::Longterm => Some(build_cohort(&rel, opts.seed, opts.strict_balance)?),
        Task::Imminent => None,
    };
    let lex = corpus_lexicon(games, lexicon)?;
    let instances = task_instances(opts.task, games, &rel, cohort_out.as_ref(), &lex)?;
    check_sizes(&instances, opts.k_folds)?;
    let (x, y, groups) = instance_matrix(&instances)?;
    let names = feature_names();
    log::info!("{} instances, grid of {} configurations", instances.len(), opts.grid.len());
    let grid = model::grid_search(&x, &y, &groups, &opts.grid, opts.k_folds, opts.seed)?;
    let nested = model::nested_cv(&x, &y, &groups, &opts.grid, opts.k_folds, opts.seed, &names)?;
    let fitted = model::train(&x, &y, &grid.best, &names)?;
    let ranking = model::rank_features(&fitted);
    let fp = match opts.task {
        Task::Imminent => cohort::false_positive_proximity(&instances, &nested.predictions, 2),
        Task::Longterm => None,
    };
    let curves = cue_curves(opts.task, &instances, opts.seed)?;
    let report = RunReport {
        task: opts.task,
        seed: opts.seed,
        n_games: games.len(),
        n_spans: rel.spans.len(),
        n_betrayals: rel.betrayals.len(),
        n_candidates: cohort_out.as_ref().map(|c| c.n_candidates),
        balance: cohort_out.map(|c| c.balance),
        class_balance: cohort::class_balance(&instances),
        pruned_connectives: lex.pruned().iter().cloned().collect(),
        grid: GridSummary {
            n_configs: opts.grid.len(),
            best: grid.best,
            report: grid.report,
        },
        nested,
        ranking,
        imbalance: imbalance_tests(opts.task, &instances),
        false_positive_proximity: fp,
    };
    Ok(RunOutput {
        report,
        model: fitted,
        instances,
        curves,
    })
}

pub fn curves_csv(curves: &[CurvePoint]) -> String {
    let mut out = String::from("group,t,cue,n,mean,se\n");
    for c in curves {
        out.push_str(&format!("{},{},{},{},{},{}\n", c.group, c.t, c.cue, c.n, c.mean, c.se));
    }
    out
}

const PALETTE: [(&str, &str); 4] = [
    ("betrayer", "#c0392b"),
    ("victim", "#2c7fb8"),
    ("control_b", "#7f7f7f"),
    ("control_v", "#bdbdbd"),
];

/// Line chart of one cue's mean per relative season, one line per group,
/// with ±1 SE whiskers. Older seasons are on the left.
pub fn curve_svg(curves: &[CurvePoint], cue: &str) -> String {
    let pts: Vec<&CurvePoint> = curves.iter().filter(|c| c.cue == cue).collect();
    let (w, h, m) = (480.0, 300.0, 48.0);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{cue}</text>\n",
        w / 2.0
    );
    if pts.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let tmin = pts.iter().map(|p| p.t).min().unwrap_or(0);
    let tmax = pts.iter().map(|p| p.t).max().unwrap_or(0);
    let lo = pts.iter().map(|p| p.mean - p.se).fold(f64::INFINITY, f64::min).min(0.0);
    let mut hi = pts.iter().map(|p| p.mean + p.se).fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let sx = |t: i64| {
        let span = (tmax - tmin).max(1) as f64;
        m + (tmax - t) as f64 / span * (w - 2.0 * m)
    };
    let sy = |v: f64| h - m - (v - lo) / (hi - lo) * (h - 2.0 * m);
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - m,
        w - m,
        h - m,
        h - m
    ));
    for t in tmin..=tmax {
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{t}</text>\n",
            sx(t),
            h - m + 14.0
        ));
    }
    for (v, label) in [(lo, lo), (hi, hi)] {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{label:.3}</text>\n",
            m - 4.0,
            sy(v)
        ));
    }
    for (i, (group, color)) in PALETTE.iter().enumerate() {
        let mut g: Vec<&&CurvePoint> = pts.iter().filter(|p| p.group == *group).collect();
        if g.is_empty() {
            continue;
        }
        g.sort_by_key(|p| std::cmp::Reverse(p.t));
        let path: Vec<String> = g.iter().map(|p| format!("{:.1},{:.1}", sx(p.t), sy(p.mean))).collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for p in &g {
            out.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"{color}\"/>\n",
                sy(p.mean - p.se),
                sy(p.mean + p.se),
                x = sx(p.t)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{group}</text>\n",
            w - m - 70.0,
            m + 14.0 * i as f64
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Horizontal bar chart of ranked coefficients.
pub fn ranking_svg(ranking: &[RankedFeature]) -> String {
    let bar = 18.0;
    let (w, m, label_w) = (560.0, 20.0, 180.0);
    let h = 2.0 * m + bar * ranking.len().max(1) as f64;
    let max = ranking.iter().map(|r| r.coefficient.abs()).fold(0.0, f64::max).max(1e-12);
    let mid = label_w + (w - label_w - m) / 2.0;
    let half = (w - label_w - m) / 2.0;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{mid}\" y1=\"{m}\" x2=\"{mid}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - m
    );
    for (i, r) in ranking.iter().enumerate() {
        let y = m + bar * i as f64;
        let len = r.coefficient.abs() / max * half;
        let x = if r.coefficient >= 0.0 { mid } else { mid - len };
        let color = if r.coefficient >= 0.0 { "#c0392b" } else { "#2c7fb8" };
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n\
             <rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{len:.1}\" height=\"{:.1}\" fill=\"{color}\"/>\n",
            label_w - 6.0,
            y + bar * 0.7,
            r.name,
            y + 2.0,
            bar - 4.0
        ));
    }
    out.push_str("</svg>\n");
    out
}
