use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Video and latent dimensions tied together by the codec's compression factors.
///
/// A video has `1 + T` frames of `height × width` pixels. The latent has
/// `1 + T / temporal_factor` frames on a `(height / spatial_factor) × (width / spatial_factor)`
/// grid with `channels` features per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentGeometry {
    pub temporal_factor: usize,
    pub spatial_factor: usize,
    pub channels: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentGeometry {
    pub fn new(
        temporal_factor: usize,
        spatial_factor: usize,
        channels: usize,
        frames: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let geom = Self {
            temporal_factor,
            spatial_factor,
            channels,
            frames,
            height,
            width,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// The desk-scale default: 9 frames of 32×32 pixels, f_t = 4, f_s = 4, 3 channels.
    pub fn toy() -> Self {
        Self {
            temporal_factor: 4,
            spatial_factor: 4,
            channels: 3,
            frames: 9,
            height: 32,
            width: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temporal_factor == 0 || self.spatial_factor == 0 || self.channels == 0 {
            return Err(Error::Geometry(
                "compression factors and channel count must be at least 1".into(),
            ));
        }
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Geometry("video dimensions must be nonzero".into()));
        }
        let t = self.frames - 1;
        if !t.is_multiple_of(self.temporal_factor) {
            return Err(Error::Geometry(format!(
                "T = {t} is not divisible by the temporal factor {}",
                self.temporal_factor
            )));
        }
        if !self.height.is_multiple_of(self.spatial_factor) || !self.width.is_multiple_of(self.spatial_factor)
        {
            return Err(Error::Geometry(format!(
                "{}x{} is not divisible by the spatial factor {}",
                self.height, self.width, self.spatial_factor
            )));
        }
        Ok(())
    }

    /// Number of frames after the first (`T`).
    pub fn time_steps(&self) -> usize {
        self.frames - 1
    }

    pub fn latent_frames(&self) -> usize {
        1 + self.time_steps() / self.temporal_factor
    }

    pub fn latent_rows(&self) -> usize {
        self.height / self.spatial_factor
    }

    pub fn latent_cols(&self) -> usize {
        self.width / self.spatial_factor
    }

    /// Shape of the latent tensor: (frames, rows, cols, channels).
    pub fn latent_shape(&self) -> [usize; 4] {
        [
            self.latent_frames(),
            self.latent_rows(),
            self.latent_cols(),
            self.channels,
        ]
    }

    /// Shape of an RGB video tensor: (frames, height, width, 3).
    pub fn video_shape(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, 3]
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }
}
