use rand::seq::index;
use rand::Rng;

use super::TrajectorySet;

/// Probability that a training draw carries no trajectories at all.
pub const DROP_PROBABILITY: f64 = 0.05;

/// Default upper bound on the number of trajectories per training draw.
pub const DEFAULT_MAX_TRACKS: usize = 200;

/// Draws the trajectory subset used for one training sample.
///
/// With probability [`DROP_PROBABILITY`] the result is empty; otherwise `k` is
/// drawn uniformly from `1..=min(n_max, |tracks|)` and `k` distinct tracks are
/// chosen uniformly without replacement. Selected tracks keep their input order.
pub fn sample_training_tracks<R: Rng + ?Sized>(
    set: &TrajectorySet,
    rng: &mut R,
    n_max: usize,
) -> TrajectorySet {
    assert!(n_max >= 1, "n_max must be at least 1");
    let mut out = TrajectorySet::unchecked(set.frames, set.height, set.width, Vec::new());
    if set.tracks.is_empty() {
        log::debug!("sample_training_tracks called with an empty set");
        return out;
    }
    if rng.random_bool(DROP_PROBABILITY) {
        return out;
    }
    let k_max = n_max.min(set.tracks.len());
    let k = rng.random_range(1..=k_max);
    let mut picked = index::sample(rng, set.tracks.len(), k).into_vec();
    picked.sort_unstable();
    out.tracks = picked.into_iter().map(|i| set.tracks[i].clone()).collect();
    out
}
