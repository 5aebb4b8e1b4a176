//! Single-channel maps (depth, masks) read from PNG or WMT1 files.

use std::path::Path;

use latentmove_core::synth::DepthMap;
use latentmove_core::{io, Error, RawTensor};
use nalgebra::Vector3;
use ndarray::Array2;

use crate::error::{CliError, CliResult};

/// A `[H, W]` map. WMT1 tensors (`[H, W]` or `[H, W, 1]`) are taken as is;
/// PNGs give their first channel as 8-bit levels 0..=255.
fn load_map(path: &Path) -> CliResult<(Array2<f64>, bool)> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Read {
        path: path.into(),
        source,
    })?;
    if bytes.starts_with(b"WMT1") {
        let raw = RawTensor::from_bytes(&bytes)?;
        let (h, w) = match raw.dims.as_slice() {
            [h, w] | [h, w, 1] => (*h, *w),
            other => {
                return Err(CliError::Usage(format!(
                    "{}: expected a [H, W] or [H, W, 1] tensor, got {other:?}",
                    path.display()
                )))
            }
        };
        let map = Array2::from_shape_vec((h, w), raw.data.iter().map(|&v| v as f64).collect())
            .map_err(|e| Error::Internal(e.to_string()))?;
        return Ok((map, false));
    }
    let rgb = io::decode_png(&bytes)?;
    let map = rgb
        .index_axis(ndarray::Axis(2), 0)
        .mapv(|v| (v as f64 * 255.0).round());
    Ok((map, true))
}

/// PNG depth is `level · scale`; WMT1 depth is already in scene units.
pub fn load_depth(path: &Path, scale: f64) -> CliResult<DepthMap> {
    let (map, is_png) = load_map(path)?;
    let map = if is_png { map * scale } else { map };
    Ok(DepthMap::new(map)?)
}

/// Nonzero entries (any nonzero level for PNG) are inside the object.
pub fn load_mask(path: &Path) -> CliResult<Array2<bool>> {
    Ok(load_map(path)?.0.mapv(|v| v > 0.0))
}

/// `"x,y,z"`.
pub fn parse_vec3(s: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(format!("expected three comma-separated numbers, got {s:?}")),
    }
}

/// `"row,col"`.
pub fn parse_point(s: &str) -> Result<latentmove_core::Point, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [r, c] => Ok(latentmove_core::Point::new(*r, *c)),
        _ => Err(format!("expected row,col, got {s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_parse() {
        assert_eq!(parse_vec3("1, 0,-2.5").unwrap(), Vector3::new(1.0, 0.0, -2.5));
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_point("3,4").is_ok());
        assert!(parse_point("a,4").is_err());
    }

    #[test]
    fn png_depth_is_scaled_levels() {
        let dir = tempfile::tempdir().unwrap();
        let mut frame = ndarray::Array3::<f32>::zeros((4, 4, 3));
        frame.fill(10.0 / 255.0);
        frame[[0, 0, 0]] = 1.0;
        let path = dir.path().join("d.png");
        io::save_frame(frame.view(), &path).unwrap();
        let d = load_depth(&path, 0.5).unwrap();
        assert_eq!(d.at(latentmove_core::Point::new(0.0, 0.0)), 127.5);
        assert_eq!(d.at(latentmove_core::Point::new(2.0, 3.0)), 5.0);

        let raw = RawTensor::new(vec![2, 2, 1], vec![0.0, 1.0, 0.0, 2.0]).unwrap();
        let path = dir.path().join("m.wmt1");
        raw.save(&path).unwrap();
        let m = load_mask(&path).unwrap();
        assert_eq!(m, ndarray::arr2(&[[false, true], [false, true]]));
    }
}
