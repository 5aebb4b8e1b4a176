//! Checkpoint layout: the magic `WMCK`, a little-endian `u32` header length,
//! the JSON header, then one WMT1 tensor per parameter block in
//! [`PARAM_BLOCKS`] order. Parameters are stored as `f32`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DenoiserDims, ToyDenoiser, TrainConfig, PARAM_BLOCKS};
use crate::error::{Error, Result};
use crate::geometry::LatentGeometry;
use crate::tensor::RawTensor;

const MAGIC: &[u8; 4] = b"WMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub dims: DenoiserDims,
    pub geometry: LatentGeometry,
    pub config: TrainConfig,
    pub seed: u64,
    pub blocks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: ToyDenoiser,
}

impl Checkpoint {
    /// Wraps a trained model. Parameters are rounded to `f32` here so that a
    /// checkpoint in memory behaves exactly like one read back from disk.
    pub fn new(model: &ToyDenoiser, geometry: LatentGeometry, config: TrainConfig) -> Result<Self> {
        let dims = *model.dims();
        if dims != DenoiserDims::for_geometry(&geometry, dims.hidden) {
            return Err(Error::InvalidInput("model dims do not match geometry".into()));
        }
        let params = model.params().iter().map(|&p| p as f32 as f64).collect();
        Ok(Self {
            header: CheckpointHeader {
                version: CHECKPOINT_VERSION,
                dims,
                geometry,
                seed: config.seed,
                config,
                blocks: PARAM_BLOCKS.iter().map(|s| s.to_string()).collect(),
            },
            model: ToyDenoiser::from_params(dims, params)?,
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, shape, data) in self.model.blocks() {
            let raw = RawTensor::new(shape, data.iter().map(|&v| v as f32).collect())?;
            out.extend_from_slice(&raw.to_bytes());
        }
        w.write_all(&out).map_err(|e| Error::io("<checkpoint>", e))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        let mut len = [0u8; 4];
        r.read_exact(&mut magic)
            .and_then(|_| r.read_exact(&mut len))
            .map_err(|_| Error::Format("truncated checkpoint".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let len = u32::from_le_bytes(len) as usize;
        if r.len() < len {
            return Err(Error::Format("truncated checkpoint header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&r[..len])?;
        r = &r[len..];
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                header.version
            )));
        }
        if header.dims != DenoiserDims::for_geometry(&header.geometry, header.dims.hidden) {
            return Err(Error::Format("checkpoint dims disagree with its geometry".into()));
        }
        let mut params = Vec::with_capacity(header.dims.param_count());
        for _ in PARAM_BLOCKS {
            let raw = RawTensor::read_from(&mut r)?;
            params.extend(raw.data.iter().map(|&v| v as f64));
        }
        if !r.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes after checkpoint",
                r.len()
            )));
        }
        let model = ToyDenoiser::from_params(header.dims, params)?;
        Ok(Self { header, model })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn id(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_after_rounding() {
        let geom = LatentGeometry::toy();
        let model = ToyDenoiser::new(DenoiserDims::for_geometry(&geom, 8), 3);
        let ck = Checkpoint::new(&model, geom, TrainConfig::default()).unwrap();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.id(), ck.id());
    }

    #[test]
    fn rejects_bad_magic_and_trailing_bytes() {
        let geom = LatentGeometry::toy();
        let model = ToyDenoiser::new(DenoiserDims::for_geometry(&geom, 4), 0);
        let mut bytes = Checkpoint::new(&model, geom, TrainConfig::default())
            .unwrap()
            .to_bytes();
        bytes.push(0);
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }
}
