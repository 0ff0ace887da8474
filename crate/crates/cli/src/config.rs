//! Flat `key = value` run configuration, layered under command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gml_core::engine::EngineConfig;
use gml_core::synthetic::SyntheticParams;

/// Keys accepted in a config file, with a short description for `--help`
/// style error messages.
pub const KEYS: &[(&str, &str)] = &[
    ("corpus", "corpus JSON path"),
    ("lexicon", "lexicon TSV path"),
    ("connectives", "connective list path"),
    ("embeddings", "word vector path"),
    ("normalize_lexicon", "rescale lexicon scores to [-4, 4]"),
    (
        "min_strength",
        "smallest |score| counted as a sentiment hit",
    ),
    ("m", "candidates kept by support"),
    ("k", "candidates kept by approximate ranking"),
    ("df", "word-feature support uncertainty"),
    ("dfp", "relational-feature support uncertainty"),
    ("df_star", "word-feature certainty uncertainty"),
    ("dfp_star", "relational-feature certainty uncertainty"),
    ("seed", "random seed"),
    ("burn_in", "Gibbs burn-in sweeps"),
    ("samples", "Gibbs sample sweeps"),
    ("epochs", "weight-learning epochs"),
    ("step_size", "weight-learning step size"),
    ("l2", "weight-learning L2 penalty"),
    ("weight_clamp", "weight magnitude bound"),
    ("init_word", "initial word weight"),
    ("init_similar", "initial similar weight"),
    ("init_opposite", "initial opposite weight"),
    ("sim_threshold", "aspect-association similarity threshold"),
    ("kgram_max", "longest word-feature k-gram"),
    ("negation_window", "tokens a negation cue reaches"),
    ("hops", "relational hops in a subgraph"),
    ("subgraph_cap", "bearers taken whole per word feature"),
    ("parallel", "fan out work across threads"),
    ("easy_fraction", "synthetic: easy unit fraction"),
    (
        "relation_density",
        "synthetic: sentence continuation probability",
    ),
    ("noise", "synthetic: transition violation probability"),
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl Settings {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("{origin}:{}: expected key = value", i + 1)))?;
            let key = key.trim();
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(ConfigError(format!(
                    "{origin}:{}: unknown key `{key}`",
                    i + 1
                )));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Settings { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("--config: cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Sets a key unless the value is absent; flags call this after the
    /// file is loaded, so they win.
    pub fn set(&mut self, key: &str, value: Option<String>) {
        debug_assert!(KEYS.iter().any(|(k, _)| *k == key), "{key}");
        if let Some(v) = value {
            self.values.insert(key.to_string(), v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| ConfigError(format!("{key}: invalid value `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        Ok(self.parsed::<bool>(key)?.unwrap_or(default))
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parsed(key)
    }

    pub fn engine_config(&self) -> Result<EngineConfig, ConfigError> {
        let mut c = EngineConfig::default();
        macro_rules! apply {
            ($key:literal, $field:expr) => {
                if let Some(v) = self.parsed($key)? {
                    $field = v;
                }
            };
        }
        apply!("m", c.m);
        apply!("k", c.k);
        apply!("df", c.uncertainty.d_f);
        apply!("dfp", c.uncertainty.d_fp);
        apply!("df_star", c.uncertainty.d_f_star);
        apply!("dfp_star", c.uncertainty.d_fp_star);
        apply!("seed", c.seed);
        apply!("burn_in", c.inference.burn_in_sweeps);
        apply!("samples", c.inference.sample_sweeps);
        apply!("epochs", c.inference.learning_epochs);
        apply!("step_size", c.inference.step_size);
        apply!("l2", c.inference.l2);
        apply!("weight_clamp", c.inference.weight_clamp);
        apply!("init_word", c.init.word);
        apply!("init_similar", c.init.similar);
        apply!("init_opposite", c.init.opposite);
        apply!("sim_threshold", c.extraction.sim_threshold);
        apply!("kgram_max", c.extraction.kgram_max);
        apply!("negation_window", c.extraction.negation_window);
        apply!("hops", c.hops);
        apply!("subgraph_cap", c.subgraph_cap);
        apply!("parallel", c.parallel);
        c.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(c)
    }

    pub fn synthetic_params(&self) -> Result<SyntheticParams, ConfigError> {
        let mut p = SyntheticParams::default();
        if let Some(v) = self.parsed("easy_fraction")? {
            p.easy_fraction = v;
        }
        if let Some(v) = self.parsed("relation_density")? {
            p.relation_density = v;
        }
        if let Some(v) = self.parsed("noise")? {
            p.noise = v;
        }
        if let Some(v) = self.parsed("seed")? {
            p.seed = v;
        }
        p.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(p)
    }
}
