//! Trajectory generators for camera motion, sphere primitives, object
//! rotation and motion transfer.
//!
//! Camera-space convention: `x` right (columns), `y` down (rows), `z` along the
//! optical axis. Poses map world points to camera points, `X_c = R·X + t`.

use std::collections::HashMap;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::LatentGeometry;
use crate::trajectory::{PixelTrajectory, Point, TrajectorySet};

/// Per-pixel depth along the optical axis; finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    depth: Array2<f64>,
}

impl DepthMap {
    pub fn new(depth: Array2<f64>) -> Result<Self> {
        if let Some(((r, c), v)) = depth.indexed_iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "depth at ({r}, {c}) is {v}, expected a positive finite value"
            )));
        }
        Ok(Self { depth })
    }

    pub fn planar(height: usize, width: usize, z: f64) -> Result<Self> {
        Self::new(Array2::from_elem((height, width), z))
    }

    pub fn height(&self) -> usize {
        self.depth.nrows()
    }

    pub fn width(&self) -> usize {
        self.depth.ncols()
    }

    /// Depth at the pixel nearest to `p`.
    pub fn at(&self, p: Point) -> f64 {
        let (r, c) = p.round_half_up();
        let r = r.clamp(0, self.height() as i64 - 1) as usize;
        let c = c.clamp(0, self.width() as i64 - 1) as usize;
        self.depth[[r, c]]
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Principal point at the image center with equal focal lengths.
    pub fn centered(height: usize, width: usize, focal: f64) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
        )
    }

    pub fn back_project(&self, p: Point, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (p.col - self.cx) * depth / self.fx,
            (p.row - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Pixel position of a camera-space point; meaningless when `z ≤ 0`.
    pub fn project(&self, x: &Vector3<f64>) -> Point {
        Point::new(self.fy * x.y / x.z + self.cy, self.fx * x.x / x.z + self.cx)
    }
}

/// A rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        let det = rotation.determinant();
        if ortho > 1e-6 || (det - 1.0).abs() > 1e-6 || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "pose rotation is not proper orthonormal (|RᵀR − I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// The pose of a camera whose center sits at `center` with orientation
    /// `orientation` (camera-to-world rotation).
    pub fn from_camera(orientation: Rotation3<f64>, center: Vector3<f64>) -> Self {
        let r = orientation.inverse();
        Self {
            rotation: *r.matrix(),
            translation: -(r * center),
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    fn is_identity(&self) -> bool {
        (self.rotation - Matrix3::identity()).abs().max() < 1e-9 && self.translation.abs().max() < 1e-9
    }
}

/// One pose per video frame; pose 0 must be the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPath {
    pub poses: Vec<Pose>,
}

impl CameraPath {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        for p in &poses {
            Pose::new(p.rotation, p.translation)?;
        }
        Ok(Self { poses })
    }

    pub fn identity(frames: usize) -> Self {
        Self {
            poses: vec![Pose::identity(); frames],
        }
    }

    /// The camera center moves linearly to `center_end` while turning by
    /// `angle` radians about `axis`, both interpolated linearly over the frames.
    pub fn linear(frames: usize, center_end: Vector3<f64>, axis: Vector3<f64>, angle: f64) -> Result<Self> {
        let axis = unit_axis(axis)?;
        let poses = (0..frames)
            .map(|n| {
                let s = fraction(n, frames);
                Pose::from_camera(Rotation3::from_axis_angle(&axis, angle * s), center_end * s)
            })
            .collect();
        Self::new(poses)
    }
}

fn unit_axis(axis: Vector3<f64>) -> Result<Unit<Vector3<f64>>> {
    let norm = axis.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::InvalidInput("rotation axis must be nonzero".into()));
    }
    Ok(Unit::new_normalize(axis))
}

/// `n / (frames − 1)`, or 0 for single-frame clips.
fn fraction(n: usize, frames: usize) -> f64 {
    if frames <= 1 {
        0.0
    } else {
        n as f64 / (frames - 1) as f64
    }
}

/// Seeds at the centers of an `n × n` grid of patches.
pub fn grid_tracks(geom: &LatentGeometry, n_per_side: usize) -> Result<Vec<Point>> {
    if n_per_side == 0 {
        return Err(Error::InvalidInput("n_per_side must be at least 1".into()));
    }
    Ok(crate::data::grid_points(geom.height, geom.width, n_per_side))
}

/// Stationary, always visible tracks at the given seeds.
pub fn stationary_set(geom: &LatentGeometry, seeds: &[Point]) -> Result<TrajectorySet> {
    let tracks = seeds
        .iter()
        .enumerate()
        .map(|(i, &p)| PixelTrajectory::stationary(i as u32, p, geom.frames))
        .collect();
    TrajectorySet::new(geom.frames, geom.height, geom.width, tracks)
}

/// A point after projection, before visibility resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub position: Point,
    pub depth: f64,
}

/// Z-buffer visibility over 1-pixel cells.
///
/// A point is visible when its depth is positive, its rounded pixel lies in
/// the `height × width` frame, and no other such point in the same pixel is
/// strictly closer. Equal depths leave both visible.
pub fn zbuffer_visibility(points: &[Projected], height: usize, width: usize) -> Vec<bool> {
    let cell = |p: &Projected| -> Option<(i64, i64)> {
        if !(p.depth > 0.0 && p.position.is_finite()) {
            return None;
        }
        let (r, c) = p.position.round_half_up();
        (r >= 0 && c >= 0 && r < height as i64 && c < width as i64).then_some((r, c))
    };
    let cells: Vec<_> = points.iter().map(cell).collect();
    let mut nearest: HashMap<(i64, i64), f64> = HashMap::new();
    for (p, c) in points.iter().zip(&cells) {
        if let Some(c) = c {
            let d = nearest.entry(*c).or_insert(p.depth);
            if p.depth < *d {
                *d = p.depth;
            }
        }
    }
    points
        .iter()
        .zip(&cells)
        .map(|(p, c)| c.is_some_and(|c| p.depth <= nearest[&c]))
        .collect()
}

/// Builds a trajectory set from per-frame camera-space points, resolving
/// visibility per frame with the z-buffer. Positions of invisible points are
/// clamped into the frame; points behind the camera repeat their last position.
fn tracks_from_camera_points(
    frames_pts: &[Vec<Vector3<f64>>],
    k: &Intrinsics,
    height: usize,
    width: usize,
) -> Result<TrajectorySet> {
    let n_pts = frames_pts.first().map_or(0, Vec::len);
    let mut positions = vec![Vec::with_capacity(frames_pts.len()); n_pts];
    let mut visible = vec![Vec::with_capacity(frames_pts.len()); n_pts];
    let (max_r, max_c) = (height as f64 - 1.0, width as f64 - 1.0);
    for pts in frames_pts {
        let proj: Vec<Projected> = pts
            .iter()
            .map(|x| Projected {
                position: k.project(x),
                depth: x.z,
            })
            .collect();
        let vis = zbuffer_visibility(&proj, height, width);
        for (i, (p, v)) in proj.iter().zip(vis).enumerate() {
            let pos = if p.depth > 0.0 && p.position.is_finite() {
                Point::new(p.position.row.clamp(0.0, max_r), p.position.col.clamp(0.0, max_c))
            } else {
                positions[i]
                    .last()
                    .copied()
                    .unwrap_or(Point::new(max_r / 2.0, max_c / 2.0))
            };
            positions[i].push(pos);
            visible[i].push(v);
        }
    }
    let tracks = positions
        .into_iter()
        .zip(visible)
        .enumerate()
        .map(|(i, (p, v))| PixelTrajectory::new(i as u32, p, v))
        .collect();
    TrajectorySet::new(frames_pts.len(), height, width, tracks)
}

/// Lifts seeds into 3D through the depth map.
pub fn back_project(depth: &DepthMap, k: &Intrinsics, seeds: &[Point]) -> Vec<Vector3<f64>> {
    seeds.iter().map(|&p| k.back_project(p, depth.at(p))).collect()
}

/// Trajectories of depth-lifted seeds seen from a moving camera.
pub fn camera_tracks(
    depth: &DepthMap,
    k: &Intrinsics,
    path: &CameraPath,
    seeds: &[Point],
) -> Result<TrajectorySet> {
    match path.poses.first() {
        None => return Err(Error::InvalidInput("camera path is empty".into())),
        Some(p) if !p.is_identity() => {
            return Err(Error::InvalidInput(
                "the first camera pose must be the identity".into(),
            ))
        }
        _ => {}
    }
    let world = back_project(depth, k, seeds);
    let per_frame: Vec<Vec<Vector3<f64>>> = path
        .poses
        .iter()
        .map(|pose| world.iter().map(|x| pose.apply(x)).collect())
        .collect();
    tracks_from_camera_points(&per_frame, k, depth.height(), depth.width())
}

/// A sphere drawn orthographically: image-space center and radius, spun by
/// `angle` radians about `axis` over the clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePrimitive {
    pub center: Point,
    pub radius: f64,
    pub axis: Vector3<f64>,
    pub angle: f64,
}

impl SpherePrimitive {
    pub fn new(center: Point, radius: f64, axis: Vector3<f64>, angle: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("sphere radius must be positive".into()));
        }
        if (axis.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput("sphere axis must be unit length".into()));
        }
        Ok(Self {
            center,
            radius,
            axis,
            angle,
        })
    }
}

/// Trajectories of seeds painted on the visible hemisphere of a spinning sphere.
///
/// Each seed is lifted to `z = −√(R² − x² − y²)` (toward the viewer), rotated
/// by `angle · n / T` and projected orthographically; it is visible while `z < 0`.
pub fn sphere_tracks(
    sph: &SpherePrimitive,
    frames: usize,
    height: usize,
    width: usize,
    seeds: &[Point],
) -> Result<TrajectorySet> {
    let r = sph.radius;
    let c = sph.center;
    if c.row - r < 0.0 || c.col - r < 0.0 || c.row + r > height as f64 - 1.0 || c.col + r > width as f64 - 1.0
    {
        return Err(Error::InvalidInput("sphere does not fit inside the frame".into()));
    }
    let axis = unit_axis(sph.axis)?;
    let mut lifted = Vec::with_capacity(seeds.len());
    for s in seeds {
        let (x, y) = (s.col - c.col, s.row - c.row);
        let rho2 = x * x + y * y;
        if rho2 > r * r {
            return Err(Error::InvalidInput(format!(
                "seed ({}, {}) lies outside the sphere's disc",
                s.row, s.col
            )));
        }
        lifted.push(Vector3::new(x, y, -(r * r - rho2).sqrt()));
    }
    let rotations: Vec<Rotation3<f64>> = (0..frames)
        .map(|n| Rotation3::from_axis_angle(&axis, sph.angle * fraction(n, frames)))
        .collect();
    let tracks = lifted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let (positions, visible) = rotations
                .iter()
                .map(|rot| {
                    let y = rot * x;
                    (Point::new(c.row + y.y, c.col + y.x), y.z < 0.0)
                })
                .unzip();
            PixelTrajectory::new(i as u32, positions, visible)
        })
        .collect();
    TrajectorySet::new(frames, height, width, tracks)
}

/// Rotates camera-space points about `pivot` and projects every frame.
#[allow(clippy::too_many_arguments)]
pub fn rotate_points_tracks(
    points: &[Vector3<f64>],
    k: &Intrinsics,
    pivot: Vector3<f64>,
    axis: Vector3<f64>,
    angle: f64,
    frames: usize,
    height: usize,
    width: usize,
) -> Result<TrajectorySet> {
    let axis = unit_axis(axis)?;
    let per_frame: Vec<Vec<Vector3<f64>>> = (0..frames)
        .map(|n| {
            let rot = Rotation3::from_axis_angle(&axis, angle * fraction(n, frames));
            points.iter().map(|x| pivot + rot * (x - pivot)).collect()
        })
        .collect();
    tracks_from_camera_points(&per_frame, k, height, width)
}

/// Object rotation: masked pixels (every `stride`-th row and column) are lifted
/// through the depth map and spun about their 3D centroid.
pub fn rotate3d_tracks(
    depth: &DepthMap,
    k: &Intrinsics,
    mask: &Array2<bool>,
    axis: Vector3<f64>,
    angle: f64,
    frames: usize,
    stride: usize,
) -> Result<TrajectorySet> {
    if mask.dim() != (depth.height(), depth.width()) {
        return Err(Error::shape(
            format!("{}x{} mask", depth.height(), depth.width()),
            format!("{:?}", mask.dim()),
        ));
    }
    let stride = stride.max(1);
    let seeds: Vec<Point> = mask
        .indexed_iter()
        .filter(|((r, c), &m)| m && r % stride == 0 && c % stride == 0)
        .map(|((r, c), _)| Point::new(r as f64, c as f64))
        .collect();
    if seeds.is_empty() {
        return Err(Error::InvalidInput("object mask is empty".into()));
    }
    let points = back_project(depth, k, &seeds);
    let pivot = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    rotate_points_tracks(
        &points,
        k,
        pivot,
        axis,
        angle,
        frames,
        depth.height(),
        depth.width(),
    )
}

/// Rescales tracks from their source frame size to `height × width`.
pub fn motion_transfer(
    tracks: &TrajectorySet,
    frames: usize,
    height: usize,
    width: usize,
) -> Result<TrajectorySet> {
    if tracks.frames != frames {
        return Err(Error::shape(format!("{frames} frames"), tracks.frames));
    }
    let sr = height as f64 / tracks.height as f64;
    let sc = width as f64 / tracks.width as f64;
    let mut out = TrajectorySet::unchecked(
        frames,
        height,
        width,
        tracks
            .tracks
            .iter()
            .map(|t| {
                PixelTrajectory::new(
                    t.id,
                    t.positions
                        .iter()
                        .map(|p| Point::new(p.row * sr, p.col * sc))
                        .collect(),
                    t.visible.clone(),
                )
            })
            .collect(),
    );
    out.clamp_to_bounds();
    let report = crate::trajectory::validate_set(&out);
    if let Some(v) = report.violations.first() {
        return Err(Error::InvalidInput(format!("transferred tracks: {v}")));
    }
    Ok(out)
}
