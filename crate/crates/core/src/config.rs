//! TOML application config.
//!
//! Relative paths resolve against the config file's directory. Loading
//! validates everything up front and reports every problem at once.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::fusion::{RiskRules, DEFAULT_TAU, MIN_BACKENDS, MIN_SURVIVORS};
use crate::gateway::{BackendKind, BackendSpec};

pub const MAX_CRITIQUE_ROUNDS: u32 = 5;
pub const MAX_GRID_POINTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    /// Remote HTTP backends.
    #[default]
    Live,
    /// Scripted mocks loaded from `<mocks.dir>/<backend>.json`.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSettings {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub mode: BackendMode,
}

fn default_threshold() -> f64 {
    0.70
}
fn default_bin_width() -> f64 {
    0.02
}
fn default_grid_points() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    #[serde(default)]
    pub anchor: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            threshold: default_threshold(),
            bin_width: default_bin_width(),
            anchor: 0.0,
            grid_points: default_grid_points(),
        }
    }
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_min_survivors() -> usize {
    MIN_SURVIVORS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSettings {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_min_survivors")]
    pub min_survivors: usize,
    /// Replaces the built-in risk routing table.
    #[serde(default)]
    pub risk_rules: Option<RiskRules>,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            min_survivors: MIN_SURVIVORS,
            risk_rules: None,
        }
    }
}

fn default_rounds() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSettings {
    #[serde(default = "default_rounds")]
    pub max_critique_rounds: u32,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            max_critique_rounds: default_rounds(),
        }
    }
}

/// Backend names per role. Commands fail when a role they need is unset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    pub eval_generator: Option<String>,
    pub eval_embedder: Option<String>,
    pub observer: Option<String>,
    pub interpreter: Option<String>,
    pub zeitgeist: Option<String>,
    pub listener: Option<String>,
    #[serde(default)]
    pub fusion_interpreters: Vec<String>,
    pub fusion_extractor: Option<String>,
    pub fusion_embedder: Option<String>,
    pub fusion_merger: Option<String>,
}

impl Roles {
    /// `(role, backend name, kind the role needs)` for every set role.
    pub fn assignments(&self) -> Vec<(String, &str, BackendKind)> {
        let singles: [(&str, &Option<String>, BackendKind); 9] = [
            ("eval_generator", &self.eval_generator, BackendKind::Generate),
            ("eval_embedder", &self.eval_embedder, BackendKind::Embed),
            ("observer", &self.observer, BackendKind::Generate),
            ("interpreter", &self.interpreter, BackendKind::Generate),
            ("zeitgeist", &self.zeitgeist, BackendKind::Generate),
            ("listener", &self.listener, BackendKind::Generate),
            ("fusion_extractor", &self.fusion_extractor, BackendKind::Generate),
            ("fusion_embedder", &self.fusion_embedder, BackendKind::Embed),
            ("fusion_merger", &self.fusion_merger, BackendKind::Generate),
        ];
        let mut out: Vec<(String, &str, BackendKind)> = singles
            .into_iter()
            .filter_map(|(role, name, kind)| name.as_deref().map(|n| (role.to_string(), n, kind)))
            .collect();
        for (i, n) in self.fusion_interpreters.iter().enumerate() {
            out.push((format!("fusion_interpreters[{i}]"), n.as_str(), BackendKind::Generate));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub store_root: PathBuf,
    /// Directory of prompt template overrides.
    pub prompts: PathBuf,
    /// Observation schema file.
    pub schema: PathBuf,
    #[serde(default)]
    pub mocks: MockSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub fusion: FusionSettings,
    #[serde(default)]
    pub pipeline: PipelineSettings,
    #[serde(default)]
    pub roles: Roles,
    #[serde(default)]
    pub backends: Vec<BackendSpec>,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&raw, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses, resolves relative paths against `base` and validates.
    pub fn from_toml(raw: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: AppConfig = toml::from_str(raw).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.store_root);
        resolve(&mut cfg.prompts);
        resolve(&mut cfg.schema);
        if let Some(d) = cfg.mocks.dir.as_mut() {
            resolve(d);
        }
        let problems = cfg.problems();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn backend(&self, name: &str) -> Option<&BackendSpec> {
        self.backends.iter().find(|b| b.name == name)
    }

    pub fn risk_rules(&self) -> RiskRules {
        self.fusion.risk_rules.clone().unwrap_or_default()
    }

    /// Every validation failure, empty when the config is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let e = &self.eval;
        if !(-1.0..=1.0).contains(&e.threshold) {
            p.push(format!("eval.threshold {} is outside [-1, 1]", e.threshold));
        }
        if !(e.bin_width > 0.0 && e.bin_width <= 2.0) {
            p.push(format!("eval.bin_width {} is outside (0, 2]", e.bin_width));
        }
        if !(-1.0..=1.0).contains(&e.anchor) {
            p.push(format!("eval.anchor {} is outside [-1, 1]", e.anchor));
        }
        if !(2..=MAX_GRID_POINTS).contains(&e.grid_points) {
            p.push(format!(
                "eval.grid_points {} is outside [2, {MAX_GRID_POINTS}]",
                e.grid_points
            ));
        }
        let f = &self.fusion;
        if !(f.tau > 0.0 && f.tau < 1.0) {
            p.push(format!("fusion.tau {} is outside (0, 1)", f.tau));
        }
        if f.min_survivors < MIN_SURVIVORS {
            p.push(format!(
                "fusion.min_survivors {} is below {MIN_SURVIVORS}",
                f.min_survivors
            ));
        }
        let interpreters = &self.roles.fusion_interpreters;
        if !interpreters.is_empty() {
            if interpreters.len() < MIN_BACKENDS {
                p.push(format!(
                    "roles.fusion_interpreters lists {} backends; at least {MIN_BACKENDS} are needed",
                    interpreters.len()
                ));
            }
            if f.min_survivors > interpreters.len() {
                p.push(format!(
                    "fusion.min_survivors {} exceeds the {} fusion interpreters",
                    f.min_survivors,
                    interpreters.len()
                ));
            }
            let distinct: BTreeSet<&String> = interpreters.iter().collect();
            if distinct.len() != interpreters.len() {
                p.push("roles.fusion_interpreters contains duplicates".into());
            }
        }
        if let Some(rules) = &f.risk_rules {
            if let Err(err) = rules.validate() {
                p.push(format!("fusion.risk_rules: {err}"));
            }
        }
        if self.pipeline.max_critique_rounds > MAX_CRITIQUE_ROUNDS {
            p.push(format!(
                "pipeline.max_critique_rounds {} exceeds {MAX_CRITIQUE_ROUNDS}",
                self.pipeline.max_critique_rounds
            ));
        }

        let mut names = BTreeSet::new();
        for b in &self.backends {
            if let Err(msg) = b.validate() {
                p.push(msg);
            }
            if !names.insert(b.name.as_str()) {
                p.push(format!("backend {} is defined twice", b.name));
            }
        }
        for (role, name, kind) in self.roles.assignments() {
            match self.backend(name) {
                None => p.push(format!("roles.{role} names undefined backend {name}")),
                Some(b) if b.kind != kind => p.push(format!(
                    "roles.{role} needs a {kind} backend but {name} is {}",
                    b.kind
                )),
                _ => {}
            }
        }

        if !self.store_root.is_dir() {
            p.push(format!("store_root {} is not a directory", self.store_root.display()));
        }
        if !self.prompts.is_dir() {
            p.push(format!("prompts {} is not a directory", self.prompts.display()));
        }
        if !self.schema.is_file() {
            p.push(format!("schema {} is not a file", self.schema.display()));
        }
        match (&self.mocks.dir, self.mocks.mode) {
            (Some(d), _) if !d.is_dir() => {
                p.push(format!("mocks.dir {} is not a directory", d.display()))
            }
            (None, BackendMode::Replay) => p.push("mocks.mode = \"replay\" needs mocks.dir".into()),
            _ => {}
        }
        p
    }
}
