//! Run configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::bail;
use kgsel_core::experiment::TrainingConfig;
use kgsel_core::pipeline::PipelineConfig;
use kgsel_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::UserError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset root holding `knowledge.json` and `<split>/{logs,labels}.json`.
    pub data: Option<PathBuf>,
    /// Knowledge base file; defaults to `<data>/knowledge.json`.
    pub kb: Option<PathBuf>,
    pub models: PathBuf,
    pub outputs: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: None,
            kb: None,
            models: PathBuf::from("models"),
            outputs: PathBuf::from("outputs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Used for every role without its own endpoint.
    pub endpoint: Option<String>,
    pub detector: Option<String>,
    pub domain: Option<String>,
    pub ranker: Option<String>,
    pub generator: Option<String>,
    pub pool_size: usize,
    pub timeout_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint: None,
            detector: None,
            domain: None,
            ranker: None,
            generator: None,
            pool_size: 4,
            timeout_ms: 30_000,
        }
    }
}

impl GatewayConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn for_role<'a>(&'a self, role: &'a Option<String>) -> Option<&'a str> {
        role.as_deref().or(self.endpoint.as_deref())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, every component seed is derived from it.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub training: TrainingConfig,
    pub pipeline: PipelineConfig,
    pub synth: SynthConfig,
    pub gateway: GatewayConfig,
}

impl RunConfig {
    /// Read `path` (if any), then apply `key=value` overrides. Relative
    /// paths inside the file are taken relative to the file.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UserError(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| UserError(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| UserError(format!("config: {e}")))?;
        if let Some(dir) = path.and_then(Path::parent) {
            cfg.paths.rebase(dir);
        }
        if let Some(seed) = cfg.seed {
            cfg.apply_seed(seed);
        }
        Ok(cfg)
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.training.detector.seed = seed;
        self.training.domain.seed = seed.wrapping_add(1);
        self.training.ranker.sampling.seed = seed.wrapping_add(2);
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.pipeline.validate().map_err(|e| UserError(e.to_string()))?;
        self.training.ranker.validate().map_err(|e| UserError(e.to_string()))?;
        if self.gateway.pool_size == 0 {
            bail!(UserError("gateway pool_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn kb_path(&self) -> anyhow::Result<PathBuf> {
        let path = match (&self.paths.kb, &self.paths.data) {
            (Some(kb), _) => kb.clone(),
            (None, Some(data)) => data.join("knowledge.json"),
            (None, None) => bail!(UserError("no knowledge base given; use --kb or --data".into())),
        };
        existing(path)
    }

    /// `(logs, labels)` of a split under the dataset root.
    pub fn split_paths(&self, split: &str) -> anyhow::Result<(PathBuf, PathBuf)> {
        let Some(data) = &self.paths.data else {
            bail!(UserError(format!("split '{split}' needs --data (or explicit --logs/--labels)")));
        };
        let dir = data.join(split);
        Ok((dir.join("logs.json"), dir.join("labels.json")))
    }
}

impl Paths {
    fn rebase(&mut self, dir: &Path) {
        for p in [&mut self.data, &mut self.kb].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        for p in [&mut self.models, &mut self.outputs] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

pub fn existing(path: PathBuf) -> anyhow::Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        bail!(UserError(format!("{} does not exist", path.display())))
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// when it does not parse as one.
fn apply_override(root: &mut toml::Table, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| UserError(format!("override '{spec}' is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!(UserError(format!("bad override key '{key}'")));
    }
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut table = root;
    for p in parents {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| UserError(format!("override '{key}': '{p}' is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
