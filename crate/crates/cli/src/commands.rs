//! Subcommand bodies. Each stage reads files, hashes them, and skips the
//! work when its manifest shows nothing changed.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use betrayal_core::cohort::{self, Task, TaskInstance};
use betrayal_core::gamelog::{self, corpus_statistics, GameLog, GameLogError};
use betrayal_core::lingcues::{feature_names, LexiconSet, CUE_NAMES};
use betrayal_core::model::{self, EvalReport, NestedResult, RankedFeature};
use betrayal_core::pipeline::{self, CohortOutput, CurvePoint, GridSummary, ImbalanceTest, RelateOutput, RunOptions};
use betrayal_core::relations::TransitionCell;
use betrayal_core::synth;

use crate::config::Config;
use crate::store::Stage;

/// Print to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub const CORPUS: &str = "corpus.jsonl";
pub const CORPUS_SUMMARY: &str = "corpus_summary.json";
pub const RELATIONS: &str = "relations.json";
pub const COHORT: &str = "cohort.json";
pub const SYNTH_CORPUS: &str = "synth_corpus.jsonl";
pub const SYNTH_TRUTH: &str = "synth_truth.json";
/// Subdirectory of the output directory holding one-shot `run` artifacts.
pub const RUN_DIR: &str = "run";

pub fn instances_file(task: Task) -> String {
    format!("instances_{task}.json")
}

pub fn model_file(task: Task) -> String {
    format!("model_{task}.txt")
}

pub fn grid_file(task: Task) -> String {
    format!("grid_{task}.json")
}

pub fn eval_file(task: Task) -> String {
    format!("eval_{task}.json")
}

pub fn run_file(task: Task) -> String {
    format!("run_{task}.json")
}

/// Malformed or missing user input; maps to exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_err(e: impl fmt::Display) -> anyhow::Error {
    InputError(e.to_string()).into()
}

pub struct Ctx {
    pub config: Config,
    /// Recompute even when the manifest says outputs are current.
    pub force: bool,
}

impl Ctx {
    fn out(&self) -> PathBuf {
        self.config.out_dir()
    }

    fn skip(&self, stage: &Stage) -> bool {
        if !self.force && stage.is_fresh() {
            say!("unchanged: {}", stage.manifest_path().display());
            return true;
        }
        false
    }

    fn lexicon(&self, stage: &mut Stage) -> Result<LexiconSet> {
        match self.config.lexicon_dir() {
            None => {
                stage.input_bytes("builtin-lexicons", betrayal_core::lingcues::lexicon::BUILTIN_VERSION.as_bytes());
                Ok(LexiconSet::builtin())
            }
            Some(dir) => {
                if !dir.is_dir() {
                    return Err(input_err(format!("lexicon directory {} not found", dir.display())));
                }
                let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                    .map_err(input_err)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_file())
                    .collect();
                files.sort();
                for f in &files {
                    stage.input(f).map_err(input_err)?;
                }
                LexiconSet::load_dir(&dir).map_err(input_err)
            }
        }
    }
}

fn finish(stage: Stage) -> Result<()> {
    for path in stage.commit().context("writing outputs")? {
        say!("wrote {}", path.display());
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serialization");
    out.push(b'\n');
    out
}

fn read_json<T: for<'de> Deserialize<'de>>(bytes: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

/// Parse a JSONL corpus, keeping only player-to-player messages.
fn parse_corpus(bytes: &[u8], path: &Path) -> Result<Vec<GameLog>> {
    let games = gamelog::read_corpus(bytes).with_context(|| path.display().to_string())?;
    if games.is_empty() {
        return Err(anyhow::Error::new(GameLogError::EmptyCorpus).context(path.display().to_string()));
    }
    Ok(games.iter().map(gamelog::filter_messages).collect())
}

fn corpus_jsonl(games: &[GameLog]) -> String {
    games.iter().map(|g| gamelog::to_json_line(g) + "\n").collect()
}

#[derive(Debug, Serialize)]
struct GameSummary {
    game_id: String,
    variant: String,
    seasons: usize,
    messages: usize,
    dyadic_messages: usize,
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    stats: gamelog::CorpusStats,
    games: Vec<GameSummary>,
}

pub fn ingest(ctx: &Ctx, paths: &[PathBuf]) -> Result<()> {
    let mut stage = Stage::new(&ctx.out(), "ingest");
    let mut raw = Vec::new();
    for p in paths {
        raw.push((p, stage.input(p).map_err(input_err)?));
    }
    if ctx.skip(&stage) {
        return Ok(());
    }
    let mut games = Vec::new();
    let mut failures: Vec<anyhow::Error> = Vec::new();
    for (path, bytes) in &raw {
        let parsed = match gamelog::read_corpus(&bytes[..]) {
            Ok(g) if g.is_empty() => Err(GameLogError::EmptyCorpus),
            other => other,
        };
        match parsed {
            Ok(g) => games.extend(g),
            Err(e) => failures.push(anyhow::Error::new(e).context(path.display().to_string())),
        }
    }
    if failures.len() == 1 {
        return Err(failures.remove(0));
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("error: {f:#}");
        }
        return Err(input_err(format!("{} of {} files failed to parse", failures.len(), raw.len())));
    }
    let mut seen = BTreeSet::new();
    for g in &games {
        if !seen.insert(g.game_id.clone()) {
            return Err(input_err(format!("duplicate game id `{}`", g.game_id)));
        }
    }
    let summary: Vec<GameSummary> = games
        .iter()
        .map(|g| GameSummary {
            game_id: g.game_id.clone(),
            variant: g.variant.clone(),
            seasons: g.seasons.len(),
            messages: g.n_messages(),
            dyadic_messages: g.messages().filter(|m| m.is_dyadic()).count(),
        })
        .collect();
    let filtered: Vec<GameLog> = games.iter().map(gamelog::filter_messages).collect();
    let stats = corpus_statistics(&filtered)?;
    say!("{} games, {} player messages", stats.n_games, stats.n_messages);
    for g in &summary {
        say!("  {}: {} seasons, {} messages", g.game_id, g.seasons, g.dyadic_messages);
    }
    stage.output(CORPUS, corpus_jsonl(&filtered));
    stage.output(CORPUS_SUMMARY, json(&IngestSummary { stats, games: summary }));
    finish(stage)
}

fn relation_settings(ctx: &Ctx, stage: &mut Stage) -> Result<betrayal_core::relations::RelationConfig> {
    let rel = ctx.config.relation()?;
    stage.setting("convoy_as_friendly", rel.convoy_as_friendly);
    stage.setting("strict_reciprocity", rel.strict_reciprocity);
    Ok(rel)
}

pub fn relate(ctx: &Ctx, corpus: Option<&Path>) -> Result<()> {
    let out = ctx.out();
    let path = corpus.map_or_else(|| out.join(CORPUS), Path::to_path_buf);
    let mut stage = Stage::new(&out, "relate");
    let bytes = stage.input(&path).map_err(input_err)?;
    let rel_cfg = relation_settings(ctx, &mut stage)?;
    if ctx.skip(&stage) {
        return Ok(());
    }
    let games = parse_corpus(&bytes, &path)?;
    let rel = pipeline::relate(&games, &rel_cfg)?;
    say!(
        "{} dyads, {} stable friendships, {} betrayals",
        rel.timelines.len(),
        rel.spans.len(),
        rel.betrayals.len()
    );
    stage.output(RELATIONS, json(&rel));
    stage.output("acts.csv", acts_csv(&rel));
    stage.output("spans.csv", spans_csv(&rel));
    stage.output("betrayals.csv", betrayals_csv(&rel));
    stage.output("transitions.csv", transitions_csv(&rel));
    finish(stage)
}

fn acts_csv(rel: &RelateOutput) -> String {
    let mut out = String::from("game_id,dyad,season,kind,actor,recipient\n");
    for tl in &rel.timelines {
        for a in &tl.acts {
            let kind = format!("{:?}", a.kind).to_lowercase();
            let _ = writeln!(
                out,
                "{},{},{},{kind},{},{}",
                tl.game_id,
                tl.pair,
                a.season_index,
                a.actor.name(),
                a.recipient.name()
            );
        }
    }
    out
}

fn spans_csv(rel: &RelateOutput) -> String {
    let betrayed: BTreeSet<String> = rel.betrayals.iter().map(|b| b.span.id()).collect();
    let mut out = String::from("span_id,game_id,dyad,first_friendly_season,last_friendly_season,length_seasons,start_offset,n_acts,betrayed\n");
    for s in &rel.spans {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.id(),
            s.game_id,
            s.dyad,
            s.first_friendly_season,
            s.last_friendly_season,
            s.length_seasons,
            s.start_offset,
            s.acts.len(),
            betrayed.contains(&s.id())
        );
    }
    out
}

fn betrayals_csv(rel: &RelateOutput) -> String {
    let mut out = String::from("span_id,game_id,betrayer,victim,last_friendly_season,betrayal_season,friendship_length,n_hostile_acts\n");
    for b in &rel.betrayals {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            b.span.id(),
            b.span.game_id,
            b.betrayer.name(),
            b.victim.name(),
            b.span.last_friendly_season,
            b.betrayal_season,
            b.span.length_seasons,
            b.hostile_acts.len()
        );
    }
    out
}

fn transitions_csv(rel: &RelateOutput) -> String {
    let mut out = String::from("relationship,age,at_risk,transitions,probability\n");
    let rows = |out: &mut String, kind: &str, cells: &[TransitionCell]| {
        for (i, c) in cells.iter().enumerate() {
            let age = if i + 1 == cells.len() {
                format!("{}+", i + 1)
            } else {
                (i + 1).to_string()
            };
            let p = c.probability().map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{kind},{age},{},{},{p}", c.at_risk, c.transitions);
        }
    };
    rows(&mut out, "friendship", &rel.transitions.friendship);
    rows(&mut out, "conflict", &rel.transitions.conflict);
    out
}

pub fn cohort(ctx: &Ctx) -> Result<()> {
    let out = ctx.out();
    let path = out.join(RELATIONS);
    let mut stage = Stage::new(&out, "cohort");
    let bytes = stage.input(&path).map_err(input_err)?;
    let seed = ctx.config.seed()?;
    let strict = ctx.config.strict_balance()?;
    stage.setting("seed", seed);
    stage.setting("strict_balance", strict);
    if ctx.skip(&stage) {
        return Ok(());
    }
    let rel: RelateOutput = read_json(&bytes, &path)?;
    let co = pipeline::build_cohort(&rel, seed, strict)?;
    say!("{} betrayals matched among {} candidate controls", co.pairs.len(), co.n_candidates);
    for (name, test) in [("length", &co.balance.length), ("start offset", &co.balance.start_offset)] {
        if let Some(t) = test {
            say!("  balance on {name}: p = {:.4}", t.p_value);
        }
    }
    let mut csv = String::from("betrayal_span,control_span,betrayal_length,control_length,betrayal_offset,control_offset,distance\n");
    for p in &co.pairs {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            p.betrayal.span.id(),
            p.control.id(),
            p.betrayal.span.length_seasons,
            p.control.length_seasons,
            p.betrayal.span.start_offset,
            p.control.start_offset,
            p.distance
        );
    }
    stage.output(COHORT, json(&co));
    stage.output("matched_pairs.csv", csv);
    finish(stage)
}

pub fn featurize(ctx: &Ctx, corpus: Option<&Path>) -> Result<()> {
    let out = ctx.out();
    let task = ctx.config.task()?;
    let corpus_path = corpus.map_or_else(|| out.join(CORPUS), Path::to_path_buf);
    let mut stage = Stage::new(&out, &format!("featurize.{task}"));
    let corpus_bytes = stage.input(&corpus_path).map_err(input_err)?;
    let rel_path = out.join(RELATIONS);
    let rel_bytes = stage.input(&rel_path).map_err(input_err)?;
    let cohort_path = out.join(COHORT);
    let cohort_bytes = match task {
        Task::Longterm => Some(stage.input(&cohort_path).map_err(input_err)?),
        Task::Imminent => None,
    };
    let lexicon = ctx.lexicon(&mut stage)?;
    stage.setting("task", task);
    if ctx.skip(&stage) {
        return Ok(());
    }
    let games = parse_corpus(&corpus_bytes, &corpus_path)?;
    let rel: RelateOutput = read_json(&rel_bytes, &rel_path)?;
    let co: Option<CohortOutput> = cohort_bytes.map(|b| read_json(&b, &cohort_path)).transpose()?;
    let lex = pipeline::corpus_lexicon(&games, &lexicon)?;
    let instances = pipeline::task_instances(task, &games, &rel, co.as_ref(), &lex)?;
    let balance = cohort::class_balance(&instances);
    say!(
        "{task}: {} instances ({} positive, {} negative)",
        instances.len(),
        balance.positives,
        balance.negatives
    );
    if !lex.pruned().is_empty() {
        say!("  pruned connectives: {}", lex.pruned().iter().cloned().collect::<Vec<_>>().join(" "));
    }
    stage.output(&instances_file(task), json(&instances));
    stage.output(&format!("instances_{task}.csv"), cohort::to_csv(&instances));
    finish(stage)
}

fn load_instances(stage: &mut Stage, out: &Path, task: Task) -> Result<Vec<TaskInstance>> {
    let path = out.join(instances_file(task));
    let bytes = stage.input(&path).map_err(input_err)?;
    read_json(&bytes, &path)
}

fn ranking_csv(ranking: &[RankedFeature]) -> String {
    let mut out = String::from("rank,feature,source,cue,coefficient\n");
    for (i, r) in ranking.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", i + 1, r.name, r.source, r.cue, r.coefficient);
    }
    out
}

pub fn train(ctx: &Ctx) -> Result<()> {
    let out = ctx.out();
    let task = ctx.config.task()?;
    let mut stage = Stage::new(&out, &format!("train.{task}"));
    let instances = load_instances(&mut stage, &out, task)?;
    let seed = ctx.config.seed()?;
    let folds = ctx.config.folds()?;
    let grid = ctx.config.grid(task)?;
    stage.setting("seed", seed);
    stage.setting("folds", folds);
    stage.setting("grid", serde_json::to_string(&grid)?);
    if ctx.skip(&stage) {
        return Ok(());
    }
    pipeline::check_sizes(&instances, folds)?;
    let (x, y, groups) = pipeline::instance_matrix(&instances)?;
    log::info!("{} instances, {} configurations", y.len(), grid.len());
    let result = model::grid_search(&x, &y, &groups, &grid, folds, seed)?;
    let fitted = model::train(&x, &y, &result.best, &feature_names())?;
    let ranking = model::rank_features(&fitted);
    let summary = GridSummary {
        n_configs: grid.len(),
        best: result.best,
        report: result.report,
    };
    say!("best of {} configurations: {}", summary.n_configs, describe_config(&summary.best));
    say!("  cross-validated {}", describe_report(&summary.report));
    let mut entries = String::from("k_features,scorer,class_weight,penalty,c,mean_objective\n");
    for e in &result.entries {
        let c = &e.config;
        let _ = writeln!(
            entries,
            "{},{},{},{},{:e},{}",
            c.k_features, c.scorer, c.class_weight, c.regularizer, c.c, e.mean_objective
        );
    }
    stage.output(&model_file(task), model::to_artifact(&fitted));
    stage.output(&grid_file(task), json(&summary));
    stage.output(&format!("grid_{task}.csv"), entries);
    stage.output(&format!("ranking_{task}.csv"), ranking_csv(&ranking));
    stage.output(&format!("ranking_{task}.md"), model::format_ranking(&ranking));
    finish(stage)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub task: Task,
    pub seed: u64,
    pub nested: NestedResult,
    pub false_positive_proximity: Option<f64>,
}

pub fn evaluate(ctx: &Ctx) -> Result<()> {
    let out = ctx.out();
    let task = ctx.config.task()?;
    let mut stage = Stage::new(&out, &format!("evaluate.{task}"));
    let instances = load_instances(&mut stage, &out, task)?;
    let seed = ctx.config.seed()?;
    let folds = ctx.config.folds()?;
    let grid = ctx.config.grid(task)?;
    stage.setting("seed", seed);
    stage.setting("folds", folds);
    stage.setting("grid", serde_json::to_string(&grid)?);
    if ctx.skip(&stage) {
        return Ok(());
    }
    pipeline::check_sizes(&instances, folds)?;
    let (x, y, groups) = pipeline::instance_matrix(&instances)?;
    let nested = model::nested_cv(&x, &y, &groups, &grid, folds, seed, &feature_names())?;
    let fp = match task {
        Task::Imminent => cohort::false_positive_proximity(&instances, &nested.predictions, 2),
        Task::Longterm => None,
    };
    say!("nested {}", describe_report(&nested.report));
    stage.output(
        &eval_file(task),
        json(&Evaluation {
            task,
            seed,
            nested,
            false_positive_proximity: fp,
        }),
    );
    finish(stage)
}

pub fn report(ctx: &Ctx) -> Result<()> {
    let out = ctx.out();
    let task = ctx.config.task()?;
    let mut stage = Stage::new(&out, &format!("report.{task}"));
    let instances = load_instances(&mut stage, &out, task)?;
    let model_path = out.join(model_file(task));
    let model_text = stage.input(&model_path).map_err(input_err)?;
    let grid_path = out.join(grid_file(task));
    let grid_bytes = stage.input(&grid_path).map_err(input_err)?;
    let eval_path = out.join(eval_file(task));
    let eval_bytes = if eval_path.exists() {
        Some(stage.input(&eval_path).map_err(input_err)?)
    } else {
        None
    };
    let seed = ctx.config.seed()?;
    stage.setting("seed", seed);
    if ctx.skip(&stage) {
        return Ok(());
    }
    let text = String::from_utf8(model_text).map_err(input_err)?;
    let fitted = model::from_artifact(&text).map_err(|e| input_err(format!("{}: {e}", model_path.display())))?;
    let grid: GridSummary = read_json(&grid_bytes, &grid_path)?;
    let evaluation: Option<Evaluation> = eval_bytes.map(|b| read_json(&b, &eval_path)).transpose()?;
    let ranking = model::rank_features(&fitted);
    let curves = pipeline::cue_curves(task, &instances, seed)?;
    let imbalance = pipeline::imbalance_tests(task, &instances);
    let summary = Summary {
        task,
        class_balance: cohort::class_balance(&instances),
        grid: Some(&grid),
        nested: evaluation.as_ref().map(|e| &e.nested.report),
        false_positive_proximity: evaluation.as_ref().and_then(|e| e.false_positive_proximity),
        ranking: &ranking,
        imbalance: &imbalance,
    };
    stage.output(&format!("report_{task}.md"), summary.markdown());
    figure_outputs(&mut stage, "", task, &curves, &ranking);
    finish(stage)
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let out = ctx.out();
    let mut stage = Stage::new(&out, "synth");
    let lexicon = ctx.lexicon(&mut stage)?;
    let spec = ctx.config.synth_spec()?;
    spec.validate().map_err(input_err)?;
    stage.setting("spec", serde_json::to_string(&spec)?);
    if ctx.skip(&stage) {
        return Ok(());
    }
    let (games, sidecar) = synth::generate(&spec, &lexicon).map_err(input_err)?;
    say!(
        "{} games, {} planted betrayals, {} dissolutions",
        games.len(),
        sidecar.betrayals.len(),
        sidecar.dissolutions
    );
    stage.output(SYNTH_CORPUS, corpus_jsonl(&games));
    stage.output(SYNTH_TRUTH, json(&sidecar));
    finish(stage)
}

pub fn run(ctx: &Ctx, corpus: Option<&Path>) -> Result<()> {
    let out = ctx.out();
    let task = ctx.config.task()?;
    let path = corpus.map_or_else(|| out.join(CORPUS), Path::to_path_buf);
    let mut stage = Stage::new(&out, &format!("run.{task}"));
    let bytes = stage.input(&path).map_err(input_err)?;
    let lexicon = ctx.lexicon(&mut stage)?;
    let mut opts = RunOptions::new(task, ctx.config.seed()?);
    opts.grid = ctx.config.grid(task)?;
    opts.k_folds = ctx.config.folds()?;
    opts.strict_balance = ctx.config.strict_balance()?;
    opts.relation = relation_settings(ctx, &mut stage)?;
    stage.setting("options", serde_json::to_string(&opts)?);
    if ctx.skip(&stage) {
        return Ok(());
    }
    let games = parse_corpus(&bytes, &path)?;
    let result = pipeline::run(&games, &lexicon, &opts)?;
    let r = &result.report;
    say!(
        "{task}: {} games, {} betrayals, {} instances",
        r.n_games,
        r.n_betrayals,
        result.instances.len()
    );
    say!("  grid search {}", describe_report(&r.grid.report));
    say!("  nested {}", describe_report(&r.nested.report));
    let summary = Summary {
        task,
        class_balance: r.class_balance.clone(),
        grid: Some(&r.grid),
        nested: Some(&r.nested.report),
        false_positive_proximity: r.false_positive_proximity,
        ranking: &r.ranking,
        imbalance: &r.imbalance,
    };
    stage.output(&format!("{RUN_DIR}/report_{task}.md"), summary.markdown());
    stage.output(&format!("{RUN_DIR}/{}", run_file(task)), json(r));
    stage.output(&format!("{RUN_DIR}/{}", model_file(task)), model::to_artifact(&result.model));
    stage.output(&format!("{RUN_DIR}/instances_{task}.csv"), cohort::to_csv(&result.instances));
    stage.output(&format!("{RUN_DIR}/ranking_{task}.csv"), ranking_csv(&r.ranking));
    stage.output(&format!("{RUN_DIR}/ranking_{task}.md"), model::format_ranking(&r.ranking));
    figure_outputs(&mut stage, RUN_DIR, task, &result.curves, &r.ranking);
    finish(stage)
}

/// `dir` is relative to the output directory; empty for the top level.
fn figure_outputs(stage: &mut Stage, dir: &str, task: Task, curves: &[CurvePoint], ranking: &[RankedFeature]) {
    let at = |name: String| if dir.is_empty() { name } else { format!("{dir}/{name}") };
    stage.output(&at(format!("curves_{task}.csv")), pipeline::curves_csv(curves));
    for cue in CUE_NAMES {
        stage.output(&at(format!("figures/{task}_{cue}.svg")), pipeline::curve_svg(curves, cue));
    }
    stage.output(&at(format!("figures/{task}_ranking.svg")), pipeline::ranking_svg(ranking));
}

fn describe_config(c: &model::ModelConfig) -> String {
    format!(
        "k={} scorer={} class_weight={} penalty={} C={:e}",
        c.k_features, c.scorer, c.class_weight, c.regularizer, c.c
    )
}

fn describe_report(r: &EvalReport) -> String {
    let ci = r
        .mcc_ci
        .as_ref()
        .map(|b| format!(" [{:.3}, {:.3}]", b.ci_low, b.ci_high))
        .unwrap_or_default();
    format!("accuracy {:.3}, F1 {:.3}, MCC {:.3}{ci}", r.accuracy, r.f1, r.mcc)
}

struct Summary<'a> {
    task: Task,
    class_balance: cohort::ClassBalance,
    grid: Option<&'a GridSummary>,
    nested: Option<&'a EvalReport>,
    false_positive_proximity: Option<f64>,
    ranking: &'a [RankedFeature],
    imbalance: &'a [ImbalanceTest],
}

impl Summary<'_> {
    fn markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} betrayal prediction\n", self.task);
        let b = &self.class_balance;
        let _ = writeln!(
            s,
            "{} instances: {} positive, {} negative (positive rate {:.3}).\n",
            b.positives + b.negatives,
            b.positives,
            b.negatives,
            b.positive_rate
        );
        let _ = writeln!(s, "| estimate | accuracy | F1 | MCC | MCC 95% CI | majority accuracy |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        let mut row = |name: &str, r: &EvalReport| {
            let ci = r
                .mcc_ci
                .as_ref()
                .map(|c| format!("[{:.3}, {:.3}]", c.ci_low, c.ci_high))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "| {name} | {:.3} | {:.3} | {:.3} | {ci} | {:.3} |",
                r.accuracy, r.f1, r.mcc, r.majority_accuracy
            );
        };
        if let Some(g) = self.grid {
            row("grid search (selection folds)", &g.report);
        }
        if let Some(n) = self.nested {
            row("nested cross-validation", n);
        }
        if let Some(g) = self.grid {
            let _ = writeln!(s, "\nSelected configuration: {}.", describe_config(&g.best));
        }
        if let Some(fp) = self.false_positive_proximity {
            let _ = writeln!(s, "\nFalse positives within two seasons of the last friendly act: {:.1}%.", 100.0 * fp);
        }
        let _ = writeln!(s, "\n## Feature ranking\n\n{}", model::format_ranking(self.ranking));
        if !self.imbalance.is_empty() {
            let _ = writeln!(s, "\n## Betrayer minus victim imbalance\n");
            let _ = writeln!(s, "| cue | n | mean | t | p |");
            let _ = writeln!(s, "|---|---|---|---|---|");
            for t in self.imbalance {
                let _ = writeln!(s, "| {} | {} | {:.4} | {:.2} | {:.3e} |", t.cue, t.n, t.mean, t.t, t.p_value);
            }
        }
        s
    }
}
