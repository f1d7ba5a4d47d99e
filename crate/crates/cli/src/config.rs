//! Flat `key=value` configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use betrayal_core::cohort::Task;
use betrayal_core::model::{Grid, KFeatures, ObjectiveMetric};
use betrayal_core::pipeline::DEFAULT_FOLDS;
use betrayal_core::relations::RelationConfig;
use betrayal_core::synth::{Effects, SynthSpec};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT: &str = "out";

/// Every key a config file may set.
pub const KEYS: &[&str] = &[
    "seed",
    "out",
    "lexicons",
    "task",
    "strict_balance",
    "convoy_as_friendly",
    "strict_reciprocity",
    "folds",
    "grid.k",
    "grid.scorers",
    "grid.class_weights",
    "grid.penalties",
    "grid.c",
    "grid.metric",
    "synth.games",
    "synth.min_seasons",
    "synth.max_seasons",
    "synth.max_start",
    "synth.hazard",
    "synth.min_friendship",
    "synth.effects",
    "synth.betrayer_positive",
    "synth.betrayer_planning",
    "synth.betrayer_politeness",
    "synth.victim_politeness",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key=value", i + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| ConfigError(format!("line {}: {}", i + 1, e.0)))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Config::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(ConfigError(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError(format!("`{key}` = `{v}`: {e}"))))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim()
                            .parse::<T>()
                            .map_err(|e| ConfigError(format!("`{key}` item `{}`: {e}", item.trim())))
                    })
                    .collect()
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool> {
        Ok(self.parsed::<bool>(key)?.unwrap_or(false))
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.parsed("seed")?.unwrap_or(DEFAULT_SEED))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out").unwrap_or(DEFAULT_OUT))
    }

    pub fn lexicon_dir(&self) -> Option<PathBuf> {
        self.get("lexicons").map(PathBuf::from)
    }

    pub fn task(&self) -> Result<Task> {
        Ok(self.parsed("task")?.unwrap_or(Task::Longterm))
    }

    pub fn strict_balance(&self) -> Result<bool> {
        self.flag("strict_balance")
    }

    pub fn relation(&self) -> Result<RelationConfig> {
        Ok(RelationConfig {
            convoy_as_friendly: self.flag("convoy_as_friendly")?,
            strict_reciprocity: self.flag("strict_reciprocity")?,
        })
    }

    pub fn folds(&self) -> Result<usize> {
        match self.parsed::<usize>("folds")? {
            Some(k) if k < 2 => Err(ConfigError("`folds` must be at least 2".into())),
            k => Ok(k.unwrap_or(DEFAULT_FOLDS)),
        }
    }

    /// Full grid for `task` with any `grid.*` overrides applied.
    pub fn grid(&self, task: Task) -> Result<Grid> {
        let metric = match task {
            Task::Longterm => ObjectiveMetric::Accuracy,
            Task::Imminent => ObjectiveMetric::F1,
        };
        let mut grid = Grid::full(self.parsed("grid.metric")?.unwrap_or(metric));
        if let Some(k) = self.list::<KFeatures>("grid.k")? {
            grid.k_features = k;
        }
        if let Some(s) = self.list("grid.scorers")? {
            grid.scorers = s;
        }
        if let Some(w) = self.list("grid.class_weights")? {
            grid.class_weights = w;
        }
        if let Some(r) = self.list("grid.penalties")? {
            grid.regularizers = r;
        }
        if let Some(c) = self.list::<f64>("grid.c")? {
            grid.cs = c;
        }
        if grid.is_empty() {
            return Err(ConfigError("grid overrides leave an empty grid".into()));
        }
        for cfg in grid.configs() {
            cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        }
        Ok(grid)
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let mut spec = SynthSpec {
            seed: self.seed()?,
            ..SynthSpec::default()
        };
        match self.get("synth.effects") {
            None | Some("planted") => {}
            Some("null") => spec.effects = Effects::null(),
            Some(other) => return Err(ConfigError(format!("`synth.effects` = `{other}`: expected planted or null"))),
        }
        let set = |slot: &mut usize, key: &str| -> Result<()> {
            if let Some(v) = self.parsed(key)? {
                *slot = v;
            }
            Ok(())
        };
        set(&mut spec.n_games, "synth.games")?;
        set(&mut spec.min_seasons, "synth.min_seasons")?;
        set(&mut spec.max_seasons, "synth.max_seasons")?;
        set(&mut spec.max_start, "synth.max_start")?;
        set(&mut spec.min_friendship, "synth.min_friendship")?;
        let setf = |slot: &mut f64, key: &str| -> Result<()> {
            if let Some(v) = self.parsed(key)? {
                *slot = v;
            }
            Ok(())
        };
        setf(&mut spec.hazard, "synth.hazard")?;
        setf(&mut spec.effects.betrayer_positive, "synth.betrayer_positive")?;
        setf(&mut spec.effects.betrayer_planning, "synth.betrayer_planning")?;
        setf(&mut spec.effects.betrayer_politeness, "synth.betrayer_politeness")?;
        setf(&mut spec.effects.victim_politeness, "synth.victim_politeness")?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let c = Config::parse("# run\nseed = 7\n\ntask=imminent\n").unwrap();
        assert_eq!(c.seed().unwrap(), 7);
        assert_eq!(c.task().unwrap(), Task::Imminent);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let e = Config::parse("seed=1\nsede=2\n").unwrap_err();
        assert!(e.0.contains("line 2"), "{e}");
    }

    #[test]
    fn grid_overrides_apply() {
        let c = Config::parse("grid.k=4,all\ngrid.penalties=l2\ngrid.c=1,10").unwrap();
        let g = c.grid(Task::Longterm).unwrap();
        assert_eq!(g.k_features, vec![KFeatures::Count(4), KFeatures::All]);
        assert_eq!(g.len(), 2 * 2 * 2 * 1 * 2);
    }

    #[test]
    fn out_of_range_c_is_rejected() {
        let c = Config::parse("grid.c=1e13").unwrap();
        assert!(c.grid(Task::Longterm).is_err());
    }

    #[test]
    fn null_effects_switch() {
        let c = Config::parse("synth.effects=null\nsynth.games=10").unwrap();
        let s = c.synth_spec().unwrap();
        assert_eq!(s.effects, Effects::null());
        assert_eq!(s.n_games, 10);
    }
}
