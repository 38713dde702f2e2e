//! Parameter snapshot files: a JSON header line describing the
//! architecture and seed, followed by one parameter value per line in
//! shortest-round-trip decimal (lossless for both f32 and f64).

use crate::network::{NetConfig, NetParams};
use crate::scalar::Scalar;
use crate::Error;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub input_dim: usize,
    pub width: usize,
    pub blocks: usize,
    pub seed: u64,
    pub count: usize,
}

impl SnapshotHeader {
    pub fn config(&self) -> NetConfig {
        NetConfig::new(self.input_dim, self.width, self.blocks)
    }
}

pub fn save_params<T: Scalar>(
    params: &NetParams<T>,
    seed: u64,
    path: &Path,
) -> Result<(), Error> {
    let header = SnapshotHeader {
        input_dim: params.config.input_dim,
        width: params.config.width,
        blocks: params.config.residual_blocks,
        seed,
        count: params.params.len(),
    };
    let mut out = serde_json::to_string(&header)
        .map_err(|e| Error::Invalid(format!("snapshot header: {e}")))?;
    out.push('\n');
    for v in &params.params.values {
        out.push_str(&format!("{v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_params<T: Scalar>(path: &Path) -> Result<(NetParams<T>, SnapshotHeader), Error> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Invalid("snapshot: empty file".into()))?;
    let header: SnapshotHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::Invalid(format!("snapshot header: {e}")))?;
    let mut values = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("snapshot: bad value on line {}", i + 2)))?;
        values.push(T::c(v));
    }
    if values.len() != header.count {
        return Err(Error::Invalid(format!(
            "snapshot: header promises {} values, file has {}",
            header.count,
            values.len()
        )));
    }
    let config = header.config();
    if config.total_params() != header.count {
        return Err(Error::Invalid(format!(
            "snapshot: architecture {config:?} implies {} parameters, header says {}",
            config.total_params(),
            header.count
        )));
    }
    Ok((NetParams::from_values(config, values)?, header))
}
