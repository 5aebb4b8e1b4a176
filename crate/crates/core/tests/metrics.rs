use latentmove_core::metrics::{epe, psnr, ssim};
use latentmove_core::{PixelTrajectory, Point, TrajectorySet, VideoTensor};
use ndarray::Array4;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// PSNR straight from the definition: per-frame 10·log10(1/MSE), averaged.
fn reference_psnr(a: &Array4<f32>, b: &Array4<f32>) -> f64 {
    let (t, h, w, c) = a.dim();
    let mut total = 0.0;
    for n in 0..t {
        let mut se = 0.0;
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let d = a[[n, y, x, ch]] as f64 - b[[n, y, x, ch]] as f64;
                    se += d * d;
                }
            }
        }
        total += 10.0 * (1.0 / (se / (h * w * c) as f64)).log10();
    }
    total / t as f64
}

/// SSIM with a direct (non-separable) 11×11 Gaussian window over every
/// fully covered position.
fn reference_ssim(a: &Array4<f32>, b: &Array4<f32>) -> f64 {
    let (t, h, w, _) = a.dim();
    let luma = |v: &Array4<f32>, n: usize, y: usize, x: usize| {
        0.299 * v[[n, y, x, 0]] as f64 + 0.587 * v[[n, y, x, 1]] as f64 + 0.114 * v[[n, y, x, 2]] as f64
    };
    let mut g = [[0.0f64; 11]; 11];
    let mut norm = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = ((i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5);
            *v = (-d2).exp();
            norm += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for n in 0..t {
        let mut sum = 0.0;
        let mut count = 0;
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, grow) in g.iter().enumerate() {
                    for (j, gv) in grow.iter().enumerate() {
                        let wgt = gv / norm;
                        let (p, q) = (luma(a, n, y0 + i, x0 + j), luma(b, n, y0 + i, x0 + j));
                        ma += wgt * p;
                        mb += wgt * q;
                        aa += wgt * p * p;
                        bb += wgt * q * q;
                        ab += wgt * p * q;
                    }
                }
                let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                sum +=
                    ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    total / t as f64
}

#[test]
fn psnr_and_ssim_match_a_direct_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for pair in 0..20 {
        let (t, h, w) = (
            rng.random_range(1..=3),
            rng.random_range(11..=18),
            rng.random_range(11..=18),
        );
        let a = Array4::from_shape_fn((t, h, w, 3), |_| rng.random::<f32>());
        // Half the pairs are mild perturbations so SSIM is far from zero.
        let b = if pair % 2 == 0 {
            Array4::from_shape_fn((t, h, w, 3), |_| rng.random::<f32>())
        } else {
            a.mapv(|v| (v + rng.random_range(-0.1f32..0.1)).clamp(0.0, 1.0))
        };
        let (va, vb) = (
            VideoTensor::new(a.clone()).unwrap(),
            VideoTensor::new(b.clone()).unwrap(),
        );
        let p = psnr(&va, &vb).unwrap();
        let s = ssim(&va, &vb).unwrap();
        assert!((p - reference_psnr(&a, &b)).abs() < 1e-4, "pair {pair}: psnr {p}");
        assert!((s - reference_ssim(&a, &b)).abs() < 1e-4, "pair {pair}: ssim {s}");
    }
}

fn set_from(paths: &[Vec<(f64, f64)>], visible: &[Vec<bool>]) -> TrajectorySet {
    let frames = paths[0].len();
    let tracks = paths
        .iter()
        .zip(visible)
        .enumerate()
        .map(|(i, (p, v))| {
            PixelTrajectory::new(
                i as u32,
                p.iter().map(|&(r, c)| Point::new(r, c)).collect(),
                v.clone(),
            )
        })
        .collect();
    TrajectorySet::new(frames, 64, 64, tracks).unwrap()
}

fn paths(n: usize, frames: usize) -> impl Strategy<Value = Vec<Vec<(f64, f64)>>> {
    prop::collection::vec(prop::collection::vec((0.0..63.0f64, 0.0..63.0f64), frames), n)
}

proptest! {
    #[test]
    fn epe_is_symmetric_with_shared_visibility(
        (a, b, vis) in (1usize..5, 1usize..6).prop_flat_map(|(n, f)| (
            paths(n, f),
            paths(n, f),
            prop::collection::vec(prop::collection::vec(any::<bool>(), f), n),
        ))
    ) {
        prop_assume!(vis.iter().flatten().any(|&v| v));
        let (sa, sb) = (set_from(&a, &vis), set_from(&b, &vis));
        let ab = epe(&sa, &sb).unwrap();
        prop_assert_eq!(ab, epe(&sb, &sa).unwrap());
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn epe_is_zero_iff_visible_positions_agree(
        (a, b, vis) in (1usize..4, 1usize..5).prop_flat_map(|(n, f)| (
            paths(n, f),
            paths(n, f),
            prop::collection::vec(prop::collection::vec(any::<bool>(), f), n),
        ))
    ) {
        prop_assume!(vis.iter().flatten().any(|&v| v));
        // Copy `a` into `b` wherever the frame is visible; hidden frames differ freely.
        let mut merged = b.clone();
        for (i, track) in merged.iter_mut().enumerate() {
            for (f, p) in track.iter_mut().enumerate() {
                if vis[i][f] {
                    *p = a[i][f];
                }
            }
        }
        let sa = set_from(&a, &vis);
        prop_assert_eq!(epe(&sa, &set_from(&merged, &vis)).unwrap(), 0.0);
        let differs = (0..a.len()).any(|i| (0..a[i].len()).any(|f| vis[i][f] && a[i][f] != b[i][f]));
        prop_assert_eq!(epe(&sa, &set_from(&b, &vis)).unwrap() > 0.0, differs);
    }
}
