//! Model checkpoints with config-header validation. The header must match
//! the configuration the caller expects field by field; a mismatch is an
//! error naming the offending field.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

use ssn_core::generator::{GenConfig, Generator};
use ssn_core::numerics::{load_checkpoint, save_checkpoint};
use ssn_core::ssn::{SSNConfig, SsnModel};

fn config_mismatch(expected: &Value, found: &Value) -> Option<String> {
    let (Value::Object(e), Value::Object(f)) = (expected, found) else {
        return Some("config".to_string());
    };
    for (key, ev) in e {
        if f.get(key) != Some(ev) {
            return Some(key.clone());
        }
    }
    f.keys().find(|k| !e.contains_key(*k)).cloned()
}

fn validate_header<T: serde::Serialize>(header: &Value, expected: Option<&T>) -> Result<()> {
    if let Some(expected) = expected {
        let expected = serde_json::to_value(expected)?;
        if let Some(field) = config_mismatch(&expected, header) {
            bail!(
                "checkpoint config mismatch at `{field}`: checkpoint has {}, run expects {}",
                header.get(&field).unwrap_or(&Value::Null),
                expected.get(&field).unwrap_or(&Value::Null),
            );
        }
    }
    Ok(())
}

pub fn save_ssn(path: &Path, model: &SsnModel) -> Result<()> {
    let config = serde_json::to_value(model.config)?;
    save_checkpoint(path, &config, &model.params)
        .with_context(|| format!("saving detector checkpoint {}", path.display()))
}

pub fn load_ssn(path: &Path, expected: Option<&SSNConfig>) -> Result<SsnModel> {
    let (header, params) = load_checkpoint(path)
        .with_context(|| format!("loading detector checkpoint {}", path.display()))?;
    validate_header(&header, expected)?;
    let config: SSNConfig = serde_json::from_value(header)
        .map_err(|e| anyhow!("invalid detector config header: {e}"))?;
    Ok(SsnModel { config, params })
}

pub fn save_gen(path: &Path, gen: &Generator) -> Result<()> {
    let config = serde_json::to_value(gen.config)?;
    save_checkpoint(path, &config, &gen.params)
        .with_context(|| format!("saving generator checkpoint {}", path.display()))
}

pub fn load_gen(path: &Path, expected: Option<&GenConfig>) -> Result<Generator> {
    let (header, params) = load_checkpoint(path)
        .with_context(|| format!("loading generator checkpoint {}", path.display()))?;
    validate_header(&header, expected)?;
    let config: GenConfig = serde_json::from_value(header)
        .map_err(|e| anyhow!("invalid generator config header: {e}"))?;
    Ok(Generator { config, params })
}
