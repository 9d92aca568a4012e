//! Flat `key=value` run configuration. Command-line flags use the same keys and
//! override the file, so both go through one resolver.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use docnade::{Activation, SoftmaxMode, TrainConfig};

pub const DEFAULT_VOCAB_SIZE: usize = 2000;

pub const KEYS: &[&str] = &[
    "activation",
    "bidirectional",
    "embeddings",
    "epochs",
    "hidden",
    "init_from",
    "lambda",
    "lambda_grid",
    "learning_rate",
    "patience",
    "seed",
    "softmax",
    "vocab_size",
];

/// Raw settings by key.
pub type Settings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub lambda: Option<f64>,
    pub embeddings: Option<PathBuf>,
    pub vocab_size: usize,
}

impl RunConfig {
    /// Every key with its resolved value; unset optional keys are omitted.
    pub fn settings(&self) -> Settings {
        let t = &self.train;
        let join = |v: &[String]| v.join(",");
        let mut s = Settings::new();
        let mut put = |k: &str, v: String| {
            s.insert(k.to_string(), v);
        };
        put("activation", t.arch.activation.to_string());
        put("bidirectional", t.arch.bidirectional.to_string());
        put("epochs", t.epochs.to_string());
        put("hidden", join(&t.arch.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>()));
        put("lambda_grid", join(&t.lambda_grid.iter().map(|l| format!("{l:?}")).collect::<Vec<_>>()));
        put("learning_rate", format!("{:?}", t.learning_rate));
        put("patience", t.early_stop_patience.to_string());
        put("seed", t.seed.to_string());
        put("softmax", t.arch.softmax.to_string());
        put("vocab_size", self.vocab_size.to_string());
        if let Some(p) = &t.init_from {
            put("init_from", p.display().to_string());
        }
        if let Some(l) = self.lambda {
            put("lambda", format!("{l:?}"));
        }
        if let Some(p) = &self.embeddings {
            put("embeddings", p.display().to_string());
        }
        s
    }
}

/// All problems found in a configuration, in the order they were detected.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

/// Parses `key=value` lines. Blank lines and `#` comments are ignored; unknown keys are
/// kept so that [`resolve`] reports them together with every other problem.
pub fn parse_settings(text: &str) -> Result<Settings, ConfigErrors> {
    let mut settings = Settings::new();
    let mut errors = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {}: expected key=value", n + 1));
            continue;
        };
        let key = key.trim();
        if settings.insert(key.to_string(), value.trim().to_string()).is_some() {
            errors.push(format!("line {}: duplicate key {key}", n + 1));
        }
    }
    if errors.is_empty() {
        Ok(settings)
    } else {
        Err(ConfigErrors(errors))
    }
}

fn parse<T: FromStr>(key: &str, value: &str, errors: &mut Vec<String>) -> Option<T> {
    match value.parse() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(format!("{key}: cannot parse {value:?}"));
            None
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str, errors: &mut Vec<String>) -> Option<Vec<T>> {
    let items: Vec<Option<T>> = value
        .split(',')
        .map(|item| parse(key, item.trim(), errors))
        .collect();
    items.into_iter().collect()
}

fn parse_bool(key: &str, value: &str, errors: &mut Vec<String>) -> Option<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => {
            errors.push(format!("{key}: expected true or false, got {value:?}"));
            None
        }
    }
}

/// Fills defaults and checks every key, reporting all problems at once.
pub fn resolve(settings: &Settings) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let unknown: Vec<&str> = settings
        .keys()
        .map(String::as_str)
        .filter(|k| !KEYS.contains(k))
        .collect();
    if !unknown.is_empty() {
        errors.push(format!("unknown keys: {}", unknown.join(", ")));
    }

    let mut cfg = RunConfig {
        train: TrainConfig::default(),
        lambda: None,
        embeddings: None,
        vocab_size: DEFAULT_VOCAB_SIZE,
    };
    let t = &mut cfg.train;
    for (key, value) in settings {
        let e = &mut errors;
        match key.as_str() {
            "activation" => t.arch.activation = parse::<Activation>(key, value, e).unwrap_or(t.arch.activation),
            "bidirectional" => t.arch.bidirectional = parse_bool(key, value, e).unwrap_or(false),
            "embeddings" => cfg.embeddings = Some(PathBuf::from(value)),
            "epochs" => t.epochs = parse(key, value, e).unwrap_or(t.epochs),
            "hidden" => t.arch.hidden = parse_list(key, value, e).unwrap_or_default(),
            "init_from" => t.init_from = Some(PathBuf::from(value)),
            "lambda" => cfg.lambda = parse(key, value, e),
            "lambda_grid" => t.lambda_grid = parse_list(key, value, e).unwrap_or_default(),
            "learning_rate" => t.learning_rate = parse(key, value, e).unwrap_or(t.learning_rate),
            "patience" => t.early_stop_patience = parse(key, value, e).unwrap_or(t.early_stop_patience),
            "seed" => t.seed = parse(key, value, e).unwrap_or(t.seed),
            "softmax" => t.arch.softmax = parse::<SoftmaxMode>(key, value, e).unwrap_or(t.arch.softmax),
            "vocab_size" => cfg.vocab_size = parse(key, value, e).unwrap_or(cfg.vocab_size),
            _ => {}
        }
    }

    if cfg.lambda.is_some() && cfg.embeddings.is_none() {
        errors.push("lambda requires embeddings".into());
    }
    if let Some(l) = cfg.lambda {
        if !(l >= 0.0 && l.is_finite()) {
            errors.push(format!("lambda must be non-negative, got {l}"));
        }
    }
    if cfg.vocab_size < 2 {
        errors.push(format!("vocab_size must be at least 2, got {}", cfg.vocab_size));
    }
    if let Err(e) = cfg.train.validate() {
        errors.push(e.to_string());
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

/// Reads, checks and resolves a configuration file.
pub fn validate_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigErrors> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
    resolve(&parse_settings(&text)?)
}
