//! Model checkpoints: one JSON document with a config header and decimal
//! floats. Save -> load -> save is byte-identical (parameter order is
//! preserved and floats serialize via shortest round-trip decimal).

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

use super::optim::ParameterSet;
use super::tensor::Tensor;

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: u32,
    config: Value,
    params: indexmap::IndexMap<String, ParamRecord>,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    config: &Value,
    params: &ParameterSet,
) -> Result<()> {
    let file = CheckpointFile {
        format: FORMAT_VERSION,
        config: config.clone(),
        params: params
            .iter()
            .map(|(name, t)| {
                (
                    name.to_string(),
                    ParamRecord {
                        shape: t.shape.clone(),
                        data: t.data.clone(),
                    },
                )
            })
            .collect(),
    };
    let json = serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path.as_ref(), json).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Value, ParameterSet)> {
    let raw = std::fs::read_to_string(path.as_ref()).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let file: CheckpointFile =
        serde_json::from_str(&raw).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.format != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format {}",
            file.format
        )));
    }
    let mut params = ParameterSet::new();
    for (name, rec) in file.params {
        params.insert(&name, Tensor::from_vec(&rec.shape, rec.data)?)?;
    }
    Ok((file.config, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn save_load_save_is_byte_identical() {
        let mut rng = stream(1, "ckpt");
        let mut params = ParameterSet::new();
        params.add_uniform("a.w", &[3, 2], 0.08, &mut rng).unwrap();
        params.add_uniform("b.w", &[4], 0.08, &mut rng).unwrap();
        let config = serde_json::json!({"embed_dim": 8, "mode": "pair"});

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.json");
        let p2 = dir.path().join("two.json");
        save_checkpoint(&p1, &config, &params).unwrap();
        let (cfg2, params2) = load_checkpoint(&p1).unwrap();
        assert_eq!(cfg2, config);
        save_checkpoint(&p2, &cfg2, &params2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trunc.json");
        let mut params = ParameterSet::new();
        params.add_zeros("w", &[8]).unwrap();
        save_checkpoint(&p, &serde_json::json!({}), &params).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
