//! Motion and fidelity metrics: end-point error, PSNR, SSIM and the
//! first-frame stability score.

use ndarray::{Array2, ArrayView3};

use crate::error::{Error, Result};
use crate::tensor::VideoTensor;
use crate::trajectory::TrajectorySet;

/// Mean Euclidean distance in pixels between matched tracks, over the frames
/// where the ground truth is visible.
pub fn epe(gt: &TrajectorySet, pred: &TrajectorySet) -> Result<f64> {
    if gt.tracks.len() != pred.tracks.len() {
        return Err(Error::TrackMismatch(format!(
            "{} ground-truth tracks vs {} predicted",
            gt.tracks.len(),
            pred.tracks.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for g in &gt.tracks {
        let p = pred
            .get(g.id)
            .ok_or_else(|| Error::TrackMismatch(format!("track {} missing from prediction", g.id)))?;
        if p.positions.len() != g.positions.len() {
            return Err(Error::TrackMismatch(format!(
                "track {}: {} vs {} frames",
                g.id,
                g.positions.len(),
                p.positions.len()
            )));
        }
        for ((a, b), &vis) in g.positions.iter().zip(&p.positions).zip(&g.visible) {
            if vis {
                sum += a.distance(b);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("no visible ground-truth frames".into()));
    }
    Ok(sum / count as f64)
}

fn check_same_shape(a: &VideoTensor, b: &VideoTensor) -> Result<()> {
    if a.array().shape() != b.array().shape() {
        return Err(Error::shape(
            format!("{:?}", a.array().shape()),
            format!("{:?}", b.array().shape()),
        ));
    }
    Ok(())
}

/// Frame-averaged PSNR for data in [0, 1]; `f64::INFINITY` when any frame is identical.
pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    check_same_shape(a, b)?;
    let frames = a.frames();
    let mut total = 0.0;
    for n in 0..frames {
        let (fa, fb) = (a.frame(n), b.frame(n));
        let mse = fa
            .iter()
            .zip(fb.iter())
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum::<f64>()
            / fa.len() as f64;
        if mse == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += 10.0 * (1.0 / mse).log10();
    }
    Ok(total / frames as f64)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// ITU-R BT.601 luma of an `H × W × 3` frame.
pub fn luma(frame: ArrayView3<f32>) -> Array2<f64> {
    let (h, w, _) = frame.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        0.299 * frame[[y, x, 0]] as f64 + 0.587 * frame[[y, x, 1]] as f64 + 0.114 * frame[[y, x, 2]] as f64
    })
}

fn gaussian_kernel() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter keeping only fully covered ("valid") positions.
fn filter_valid(img: &Array2<f64>, k: &[f64]) -> Array2<f64> {
    let (h, w) = img.dim();
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let rows = Array2::from_shape_fn((h, ow), |(y, x)| {
        (0..n).map(|i| k[i] * img[[y, x + i]]).sum::<f64>()
    });
    Array2::from_shape_fn((oh, ow), |(y, x)| {
        (0..n).map(|i| k[i] * rows[[y + i, x]]).sum::<f64>()
    })
}

fn ssim_frame(a: &Array2<f64>, b: &Array2<f64>, k: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mu_a = filter_valid(a, k);
    let mu_b = filter_valid(b, k);
    let aa = filter_valid(&(a * a), k);
    let bb = filter_valid(&(b * b), k);
    let ab = filter_valid(&(a * b), k);
    let mut sum = 0.0;
    for (i, &ma) in mu_a.indexed_iter() {
        let mb = mu_b[i];
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    sum / mu_a.len() as f64
}

/// Frame-averaged SSIM on luma with an 11×11 Gaussian window (σ = 1.5),
/// K1 = 0.01, K2 = 0.03 and a data range of 1.
pub fn ssim(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    check_same_shape(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}"
        )));
    }
    let k = gaussian_kernel();
    let total: f64 = (0..a.frames())
        .map(|n| ssim_frame(&luma(a.frame(n)), &luma(b.frame(n)), &k))
        .sum();
    Ok(total / a.frames() as f64)
}

/// Flattened `grid × grid` block-mean luma, the default stability feature.
pub fn block_mean_luma(frame: ArrayView3<f32>, grid: usize) -> Vec<f64> {
    let l = luma(frame);
    let (h, w) = l.dim();
    let mut out = Vec::with_capacity(grid * grid);
    for by in 0..grid {
        for bx in 0..grid {
            let (y0, y1) = (by * h / grid, ((by + 1) * h / grid).max(by * h / grid + 1));
            let (x0, x1) = (bx * w / grid, ((bx + 1) * w / grid).max(bx * w / grid + 1));
            let mut s = 0.0;
            for y in y0..y1.min(h) {
                for x in x0..x1.min(w) {
                    s += l[[y, x]];
                }
            }
            out.push(s / ((y1.min(h) - y0) * (x1.min(w) - x0)) as f64);
        }
    }
    out
}

pub fn default_features(frame: ArrayView3<f32>) -> Vec<f64> {
    block_mean_luma(frame, 8)
}

/// Cosine similarity between the features of frame 0 and the mean feature of
/// the remaining frames. `None` when either vector has zero norm.
pub fn stability_score<F>(video: &VideoTensor, features: F) -> Result<Option<f64>>
where
    F: Fn(ArrayView3<f32>) -> Vec<f64>,
{
    if video.frames() < 2 {
        return Err(Error::InvalidInput("stability needs at least 2 frames".into()));
    }
    let first = features(video.frame(0));
    let mut mean = vec![0.0; first.len()];
    for n in 1..video.frames() {
        let f = features(video.frame(n));
        if f.len() != first.len() {
            return Err(Error::shape(first.len(), f.len()));
        }
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    let rest = (video.frames() - 1) as f64;
    mean.iter_mut().for_each(|m| *m /= rest);
    let dot: f64 = first.iter().zip(&mean).map(|(a, b)| a * b).sum();
    let na: f64 = first.iter().map(|a| a * a).sum();
    let nb: f64 = mean.iter().map(|b| b * b).sum();
    if na == 0.0 || nb == 0.0 {
        return Ok(None);
    }
    Ok(Some((dot / (na * nb).sqrt()).clamp(-1.0, 1.0)))
}

/// Indices of the videos whose stability score is at least `threshold`.
/// Videos with an undefined score are dropped.
pub fn filter_stable(scores: &[Option<f64>], threshold: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.filter(|&v| v >= threshold).map(|_| i))
        .collect()
}
