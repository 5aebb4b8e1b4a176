//! A block-mean stand-in for a video VAE.
//!
//! Encoding averages each `f_s × f_s` patch of frame 0 and each
//! `f_s × f_s × f_t` block of the later frames; decoding upsamples by
//! nearest neighbour. Shifting the input by whole blocks shifts the latent by
//! whole cells, exactly.

use ndarray::{s, Array3, Array4, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::geometry::LatentGeometry;
use crate::tensor::{LatentTensor, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockCodec {
    geometry: LatentGeometry,
}

impl MockCodec {
    pub fn new(geometry: LatentGeometry) -> Result<Self> {
        geometry.validate()?;
        if geometry.channels != 3 {
            return Err(Error::Geometry(format!(
                "the mock codec has 3 latent channels, got {}",
                geometry.channels
            )));
        }
        Ok(Self { geometry })
    }

    pub fn geometry(&self) -> &LatentGeometry {
        &self.geometry
    }

    pub fn encode(&self, video: &VideoTensor) -> Result<LatentTensor> {
        video.check_geometry(&self.geometry)?;
        let g = &self.geometry;
        let (fs, ft) = (g.spatial_factor, g.temporal_factor);
        let v = video.array();
        let mut out = Array4::<f32>::zeros(g.latent_shape());
        for n in 0..g.latent_frames() {
            let frames = if n == 0 {
                0..1
            } else {
                (n - 1) * ft + 1..n * ft + 1
            };
            let count = (frames.len() * fs * fs) as f64;
            for r in 0..g.latent_rows() {
                for c in 0..g.latent_cols() {
                    let mut acc = [0.0f64; 3];
                    for f in frames.clone() {
                        for y in r * fs..(r + 1) * fs {
                            for x in c * fs..(c + 1) * fs {
                                for (ch, a) in acc.iter_mut().enumerate() {
                                    *a += v[[f, y, x, ch]] as f64;
                                }
                            }
                        }
                    }
                    for (ch, a) in acc.iter().enumerate() {
                        out[[n, r, c, ch]] = (a / count) as f32;
                    }
                }
            }
        }
        LatentTensor::new(out)
    }

    pub fn decode(&self, latent: &LatentTensor) -> Result<VideoTensor> {
        latent.check_geometry(&self.geometry)?;
        let g = &self.geometry;
        let (fs, ft) = (g.spatial_factor, g.temporal_factor);
        let z = latent.array();
        let mut out = Array4::<f32>::zeros(g.video_shape());
        for f in 0..g.frames {
            let n = if f == 0 { 0 } else { (f - 1) / ft + 1 };
            for y in 0..g.height {
                for x in 0..g.width {
                    for ch in 0..3 {
                        out[[f, y, x, ch]] = z[[n, y / fs, x / fs, ch]];
                    }
                }
            }
        }
        VideoTensor::new(out)
    }

    /// Encodes `[first_frame, 0, …, 0]`, the condition tensor before any motion is injected.
    pub fn encode_condition(&self, first_frame: ArrayView3<f32>) -> Result<LatentTensor> {
        let g = &self.geometry;
        let expect = (g.height, g.width, 3);
        if first_frame.dim() != expect {
            return Err(Error::shape(
                format!("{expect:?}"),
                format!("{:?}", first_frame.dim()),
            ));
        }
        let video = padded_video(first_frame, g.frames)?;
        self.encode(&video)
    }
}

/// `[first_frame, 0, …, 0]` with `frames` frames in total.
pub fn padded_video(first_frame: ArrayView3<f32>, frames: usize) -> Result<VideoTensor> {
    let (h, w, c) = first_frame.dim();
    let mut data = Array4::<f32>::zeros((frames, h, w, c));
    data.index_axis_mut(Axis(0), 0).assign(&first_frame);
    VideoTensor::new(data)
}

/// The video produced by `decode(encode(video))`: each block replaced by its mean.
pub fn block_average(codec: &MockCodec, video: &VideoTensor) -> Result<VideoTensor> {
    codec.decode(&codec.encode(video)?)
}

/// First frame of a video as an owned image.
pub fn first_frame(video: &VideoTensor) -> Array3<f32> {
    video.array().slice(s![0, .., .., ..]).to_owned()
}
