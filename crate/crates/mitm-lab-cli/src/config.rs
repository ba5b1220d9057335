//! Config resolution: preset and/or file, then `--set` overrides, then the
//! flag shorthands. Every resolved value is echoed back in the result's
//! provenance, so a run can be reproduced from its output alone.

use anyhow::{anyhow, bail, Context, Result};
use mitm_lab::harness::{presets, ExperimentConfig};
use serde_json::{Map, Value};
use std::path::Path;

/// One `--set KEY=VALUE` override. The value is parsed as JSON when
/// possible and falls back to a bare string.
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form KEY=VALUE"))?;
    if key.is_empty() {
        bail!("override `{spec}` has an empty key");
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn merge_object(base: &mut Map<String, Value>, patch: Map<String, Value>) {
    for (k, v) in patch {
        base.insert(k, v);
    }
}

/// Resolve a config from an optional preset, an optional JSON file, and the
/// override list. Overrides are applied one at a time so a bad key or value
/// is reported by name.
pub fn resolve_config(
    preset: Option<&str>,
    path: Option<&Path>,
    overrides: &[String],
) -> Result<ExperimentConfig> {
    let mut doc: Map<String, Value> = match preset {
        Some(name) => {
            let cfg = presets::by_name(name).ok_or_else(|| {
                anyhow!(
                    "unknown preset `{name}` (available: {})",
                    presets::PRESET_NAMES.join(", ")
                )
            })?;
            match serde_json::to_value(&cfg)? {
                Value::Object(m) => m,
                _ => unreachable!("config serializes to an object"),
            }
        }
        None => Map::new(),
    };

    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let trimmed = text.trim();
        if !trimmed.is_empty() {
            let value: Value = serde_json::from_str(trimmed)
                .with_context(|| format!("parsing config file {}", path.display()))?;
            match value {
                Value::Object(m) => merge_object(&mut doc, m),
                _ => bail!("config file {} must hold a JSON object", path.display()),
            }
        }
    }

    // Verify the pre-override document first so later failures are
    // attributable to a specific override key.
    if !doc.is_empty() {
        deserialize(&doc).context("in the base config (before --set overrides)")?;
    } else if overrides.is_empty() {
        bail!("no preset, config file or overrides given");
    }

    for spec in overrides {
        let (key, value) = parse_override(spec)?;
        doc.insert(key.clone(), value);
        deserialize(&doc).with_context(|| format!("applying --set for key `{key}`"))?;
    }

    deserialize(&doc)
}

fn deserialize(doc: &Map<String, Value>) -> Result<ExperimentConfig> {
    let value = Value::Object(doc.clone());
    serde_json::from_value(value).map_err(|e| anyhow!("{e}"))
}

/// Apply the flag shorthands (`--seed`, `--trials`, `--workers`).
pub fn apply_shorthands(
    config: &mut ExperimentConfig,
    seed: Option<u64>,
    trials: Option<usize>,
    workers: Option<usize>,
) {
    if let Some(s) = seed {
        config.master_seed = s;
    }
    if let Some(t) = trials {
        config.trials = t;
    }
    if let Some(w) = workers {
        config.workers = Some(w);
    }
}
