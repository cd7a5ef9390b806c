//! Weight checkpoints: a flat little-endian `f64` array in [`LstmWeights`]
//! layout order, plus a JSON sidecar at `<path>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{count_parameters, LstmDims, LstmError, LstmWeights, Result};
use crate::signal_io::NormStats;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub dims: LstmDims,
    pub parameter_count: usize,
    pub seed: u64,
    /// Generation (or epoch) the weights were taken from.
    pub epoch: usize,
    pub checksum: String,
    #[serde(default)]
    pub normalization: Option<NormStats>,
}

impl CheckpointMeta {
    pub fn for_weights(
        weights: &LstmWeights,
        seed: u64,
        epoch: usize,
        normalization: Option<NormStats>,
    ) -> Self {
        CheckpointMeta {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            dims: weights.dims(),
            parameter_count: weights.as_flat().len(),
            seed,
            epoch,
            checksum: weights.checksum(),
            normalization,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_checkpoint(weights: &LstmWeights, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = weights
        .as_flat()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(path, bytes)?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| LstmError::Sidecar(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(LstmWeights, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(sidecar_path(path))?)
        .map_err(|e| LstmError::Sidecar(e.to_string()))?;
    if meta.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(LstmError::Sidecar(format!(
            "unsupported schema_version {}",
            meta.schema_version
        )));
    }
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(LstmError::Sidecar(format!(
            "payload length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let expected = count_parameters(&meta.dims).total;
    if params.len() != expected || meta.parameter_count != expected {
        return Err(LstmError::DimensionMismatch {
            expected,
            got: params.len(),
        });
    }
    let weights = LstmWeights::from_flat(meta.dims, params)?;
    if weights.checksum() != meta.checksum {
        return Err(LstmError::Sidecar("checksum does not match payload".into()));
    }
    Ok((weights, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{init_weights, Gate};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let w = init_weights(&LstmDims::new(3, 2, 2).unwrap(), 11);
        let stats = NormStats {
            mean: 0.5,
            std: 2.0,
        };
        write_checkpoint(
            &w,
            &CheckpointMeta::for_weights(&w, 11, 3, Some(stats)),
            &path,
        )
        .unwrap();
        let (back, meta) = read_checkpoint(&path).unwrap();
        assert_eq!(
            back.as_flat()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            w.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(meta.epoch, 3);
        assert_eq!(meta.normalization, Some(stats));
        assert_eq!(fs::read(&path).unwrap().len(), 8 * w.as_flat().len());
    }

    #[test]
    fn documented_layout_order() {
        let dims = LstmDims::new(1, 1, 1).unwrap();
        let w = LstmWeights::from_flat(dims, (0..14).map(f64::from).collect()).unwrap();
        // gate matrices i, f, g, o (each 1x2), gate biases, dense weight, dense bias
        assert_eq!(
            w.gate_weight(Gate::Forget)
                .iter()
                .copied()
                .collect::<Vec<_>>(),
            vec![2.0, 3.0]
        );
        assert_eq!(
            w.gate_weight(Gate::Output)
                .iter()
                .copied()
                .collect::<Vec<_>>(),
            vec![6.0, 7.0]
        );
        assert_eq!(w.gate_bias(Gate::Input), &[8.0]);
        assert_eq!(w.gate_bias(Gate::Output), &[11.0]);
        assert_eq!(w.dense_weight()[[0, 0]], 12.0);
        assert_eq!(w.dense_bias(), &[13.0]);
    }

    #[test]
    fn corrupted_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let w = init_weights(&LstmDims::new(2, 2, 1).unwrap(), 1);
        write_checkpoint(&w, &CheckpointMeta::for_weights(&w, 1, 0, None), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] ^= 1;
        fs::write(&path, &bytes).unwrap();
        assert!(read_checkpoint(&path).is_err());
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
