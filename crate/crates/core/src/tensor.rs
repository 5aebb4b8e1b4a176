//! Dense video and latent tensors plus the `WMT1` binary container.
//!
//! `WMT1` layout: the 4 magic bytes `WMT1`, one `u8` rank, `rank` little-endian
//! `u32` dimensions, then the payload as little-endian `f32`, row-major with the
//! last dimension fastest.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array3, Array4, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::geometry::LatentGeometry;

pub const WMT1_MAGIC: &[u8; 4] = b"WMT1";

/// A raw n-dimensional `f32` array as stored in a `WMT1` block.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("{n} values for dims {dims:?}"), data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(WMT1_MAGIC)?;
        w.write_all(&[self.dims.len() as u8])?;
        for &d in &self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 * self.dims.len() + 4 * self.data.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != WMT1_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut rank = [0u8; 1];
        read_exact(r, &mut rank)?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut b = [0u8; 4];
            read_exact(r, &mut b)?;
            dims.push(u32::from_le_bytes(b) as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let mut bytes = vec![0u8; n * 4];
        read_exact(r, &mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let t = Self::read_from(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len())));
        }
        Ok(t)
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

    fn into_array4(self) -> Result<Array4<f32>> {
        if self.dims.len() != 4 {
            return Err(Error::shape("rank 4", format!("rank {}", self.dims.len())));
        }
        let d = &self.dims;
        Array4::from_shape_vec((d[0], d[1], d[2], d[3]), self.data).map_err(|e| Error::Format(e.to_string()))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated tensor: {e}")))
}

fn array_to_raw(a: &Array4<f32>) -> RawTensor {
    RawTensor {
        dims: a.shape().to_vec(),
        data: a.iter().copied().collect(),
    }
}

/// An RGB video: (frames, height, width, 3) with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    data: Array4<f32>,
}

impl VideoTensor {
    pub fn new(data: Array4<f32>) -> Result<Self> {
        if data.shape()[3] != 3 {
            return Err(Error::shape("3 color channels", data.shape()[3]));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("video contains non-finite values".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        Self {
            data: Array4::zeros((frames, height, width, 3)),
        }
    }

    /// Stacks `frames` first-frame-first into a video.
    pub fn from_frames(frames: &[Array3<f32>]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("no frames".into()))?;
        let (h, w, c) = first.dim();
        let mut data = Array4::zeros((frames.len(), h, w, c));
        for (i, f) in frames.iter().enumerate() {
            if f.dim() != (h, w, c) {
                return Err(Error::shape(format!("{h}x{w}x{c}"), format!("{:?}", f.dim())));
            }
            data.index_axis_mut(Axis(0), i).assign(f);
        }
        Self::new(data)
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn array(&self) -> &Array4<f32> {
        &self.data
    }

    pub fn array_mut(&mut self) -> &mut Array4<f32> {
        &mut self.data
    }

    pub fn into_array(self) -> Array4<f32> {
        self.data
    }

    pub fn frame(&self, n: usize) -> ArrayView3<'_, f32> {
        self.data.index_axis(Axis(0), n)
    }

    pub fn check_geometry(&self, geom: &LatentGeometry) -> Result<()> {
        let want = geom.video_shape();
        if self.data.shape() != want {
            return Err(Error::shape(
                format!("{want:?}"),
                format!("{:?}", self.data.shape()),
            ));
        }
        Ok(())
    }

    /// Clamps every value into [0, 1].
    pub fn clamp_unit(mut self) -> Self {
        self.data.mapv_inplace(|v| v.clamp(0.0, 1.0));
        self
    }

    pub fn to_raw(&self) -> RawTensor {
        array_to_raw(&self.data)
    }

    pub fn from_raw(raw: RawTensor) -> Result<Self> {
        Self::new(raw.into_array4()?)
    }
}

/// A latent tensor: (latent frames, rows, cols, channels).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    data: Array4<f32>,
}

impl LatentTensor {
    pub fn new(data: Array4<f32>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("latent contains non-finite values".into()));
        }
        Ok(Self { data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            data: Array4::zeros(shape),
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        let s = self.data.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn array(&self) -> &Array4<f32> {
        &self.data
    }

    pub fn array_mut(&mut self) -> &mut Array4<f32> {
        &mut self.data
    }

    pub fn into_array(self) -> Array4<f32> {
        self.data
    }

    /// Contiguous row-major view of the values.
    pub fn as_slice(&self) -> &[f32] {
        self.data
            .as_slice()
            .expect("latent tensors are kept in standard layout")
    }

    pub fn check_geometry(&self, geom: &LatentGeometry) -> Result<()> {
        let want = geom.latent_shape();
        if self.shape() != want {
            return Err(Error::shape(format!("{want:?}"), format!("{:?}", self.shape())));
        }
        Ok(())
    }

    pub fn to_raw(&self) -> RawTensor {
        array_to_raw(&self.data)
    }

    pub fn from_raw(raw: RawTensor) -> Result<Self> {
        Self::new(raw.into_array4()?)
    }

    /// Builds a tensor from a flat standard-layout vector.
    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let a = Array4::from_shape_vec(shape, data).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(a)
    }
}
