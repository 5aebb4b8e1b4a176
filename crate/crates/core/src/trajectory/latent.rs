use serde::{Deserialize, Serialize};

use super::{PixelTrajectory, Point};
use crate::error::{Error, Result};
use crate::geometry::LatentGeometry;

/// A trajectory on the latent grid, one fractional position per latent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub id: u32,
    pub positions: Vec<Point>,
    pub visible: Vec<bool>,
}

/// A latent trajectory snapped to integer cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedTrack {
    pub id: u32,
    pub cells: Vec<(usize, usize)>,
    pub visible: Vec<bool>,
}

impl QuantizedTrack {
    pub fn start(&self) -> (usize, usize) {
        self.cells[0]
    }
}

fn check_length(traj: &PixelTrajectory, geom: &LatentGeometry) -> Result<()> {
    geom.validate()?;
    if traj.positions.len() != geom.frames || traj.visible.len() != geom.frames {
        return Err(Error::shape(
            format!("{} frames", geom.frames),
            format!(
                "{} positions / {} visibility flags",
                traj.positions.len(),
                traj.visible.len()
            ),
        ));
    }
    Ok(())
}

/// Maps a pixel trajectory onto the latent grid.
///
/// Frame 0 is divided by the spatial factor; each later latent frame `n` is the
/// mean of pixel frames `(n-1)·f_t + 1 ..= n·f_t`, divided by the spatial factor.
/// Occluded frames take part in the mean; visibility is aggregated separately
/// by [`aggregate_visibility`].
pub fn map_to_latent(traj: &PixelTrajectory, geom: &LatentGeometry) -> Result<LatentTrajectory> {
    check_length(traj, geom)?;
    let ft = geom.temporal_factor;
    let fs = geom.spatial_factor as f64;
    let denom = ft as f64 * fs;

    let mut positions = Vec::with_capacity(geom.latent_frames());
    let p0 = traj.positions[0];
    positions.push(Point::new(p0.row / fs, p0.col / fs));
    for group in traj.positions[1..].chunks_exact(ft) {
        let (sr, sc) = group.iter().fold((0.0, 0.0), |(r, c), p| (r + p.row, c + p.col));
        positions.push(Point::new(sr / denom, sc / denom));
    }

    Ok(LatentTrajectory {
        id: traj.id,
        positions,
        visible: aggregate_visibility(traj, geom)?,
    })
}

/// Latent frame 0 copies pixel frame 0; each later latent frame is visible when a
/// strict majority of its `f_t` pixel frames are.
pub fn aggregate_visibility(traj: &PixelTrajectory, geom: &LatentGeometry) -> Result<Vec<bool>> {
    check_length(traj, geom)?;
    let ft = geom.temporal_factor;
    let mut out = Vec::with_capacity(geom.latent_frames());
    out.push(traj.visible[0]);
    out.extend(
        traj.visible[1..]
            .chunks_exact(ft)
            .map(|g| 2 * g.iter().filter(|&&v| v).count() > ft),
    );
    Ok(out)
}

/// Rounds half-up to the nearest latent cell, then clamps to the grid.
pub fn quantize(lt: &LatentTrajectory, geom: &LatentGeometry) -> QuantizedTrack {
    let max_r = geom.latent_rows() as i64 - 1;
    let max_c = geom.latent_cols() as i64 - 1;
    let cells = lt
        .positions
        .iter()
        .map(|p| {
            let (r, c) = p.round_half_up();
            (r.clamp(0, max_r) as usize, c.clamp(0, max_c) as usize)
        })
        .collect();
    QuantizedTrack {
        id: lt.id,
        cells,
        visible: lt.visible.clone(),
    }
}
