//! Resampling, velocity derivation, tracklet segmentation and fold assignment.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{State, Tracklet, Trajectory, TIME_TOL};
use crate::error::{Error, Result};
use crate::{DT, OBS_LEN, TRACKLET_LEN};

/// Tolerance for treating a grid time as coincident with a source sample.
const COINCIDENT: f64 = 1e-9;

fn check_resample_input(traj: &Trajectory) -> Result<()> {
    if traj.len() < 2 {
        return Err(Error::TooShort { id: traj.id.clone(), len: traj.len(), min: 2 });
    }
    if let Some(index) = traj.first_unordered() {
        return Err(Error::Unordered { id: traj.id.clone(), index });
    }
    Ok(())
}

/// Resamples onto a uniform grid starting at the first timestamp.
///
/// Positions and velocities are interpolated linearly; the action is copied
/// from the nearest source sample (the earlier one on ties). Grid points that
/// coincide with a source sample copy it unchanged. Fails with
/// [`Error::Gap`] if two consecutive samples are more than `2 * dt` apart.
pub fn resample(traj: &Trajectory, dt: f64) -> Result<Trajectory> {
    check_resample_input(traj)?;
    if let Some((index, gap)) = gaps(&traj.states, dt).next() {
        return Err(Error::Gap { id: traj.id.clone(), index, gap });
    }
    Ok(Trajectory { states: resample_states(&traj.states, dt), ..traj.clone() })
}

/// Splits at gaps larger than `2 * dt` and resamples each piece.
///
/// Pieces with a single sample are dropped. All pieces keep the source id so
/// they land in the same cross-validation fold.
pub fn resample_segments(traj: &Trajectory, dt: f64) -> Result<Vec<Trajectory>> {
    check_resample_input(traj)?;
    let mut cuts: Vec<usize> = gaps(&traj.states, dt).map(|(i, _)| i).collect();
    cuts.push(traj.len());
    let mut out = Vec::new();
    let mut start = 0;
    for end in cuts {
        let piece = &traj.states[start..end];
        if piece.len() >= 2 {
            out.push(Trajectory { states: resample_states(piece, dt), ..traj.clone() });
        }
        start = end;
    }
    Ok(out)
}

/// Yields `(index, gap)` for every sample that starts after a gap.
fn gaps(states: &[State], dt: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    states.windows(2).enumerate().filter_map(move |(i, w)| {
        let gap = w[1].t - w[0].t;
        (gap > 2.0 * dt + COINCIDENT).then_some((i + 1, gap))
    })
}

fn resample_states(src: &[State], dt: f64) -> Vec<State> {
    let t0 = src[0].t;
    let t_end = src[src.len() - 1].t;
    let mut out = Vec::new();
    let mut j = 0;
    let mut k = 0usize;
    loop {
        let t = t0 + k as f64 * dt;
        if t > t_end + COINCIDENT {
            break;
        }
        while j + 1 < src.len() && src[j + 1].t <= t + COINCIDENT {
            j += 1;
        }
        let a = &src[j];
        let state = if libm::fabs(t - a.t) <= COINCIDENT || j + 1 == src.len() {
            State { t, ..*a }
        } else {
            let b = &src[j + 1];
            let w = (t - a.t) / (b.t - a.t);
            let lerp = |p: f64, q: f64| p + (q - p) * w;
            // nearest label, earlier sample on ties
            let action = if t - a.t <= b.t - t { a.action } else { b.action };
            State {
                t,
                x: lerp(a.x, b.x),
                y: lerp(a.y, b.y),
                vx: lerp(a.vx, b.vx),
                vy: lerp(a.vy, b.vy),
                action,
            }
        };
        out.push(state);
        k += 1;
    }
    out
}

/// Nominal step of a uniformly sampled series.
fn uniform_step(traj: &Trajectory) -> Result<f64> {
    let n = traj.len();
    if n < 2 {
        return Err(Error::TooShort { id: traj.id.clone(), len: n, min: 2 });
    }
    let s = &traj.states;
    let step = (s[n - 1].t - s[0].t) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::Unordered { id: traj.id.clone(), index: 1 });
    }
    for (i, w) in s.windows(2).enumerate() {
        if libm::fabs(w[1].t - w[0].t - step) > TIME_TOL {
            return Err(Error::NonUniform { id: traj.id.clone(), index: i + 1 });
        }
    }
    Ok(step)
}

/// Recomputes velocities by central differences (one-sided at the ends).
/// Any velocities already present are overwritten.
pub fn derive_velocities(traj: &Trajectory) -> Result<Trajectory> {
    let dt = uniform_step(traj)?;
    let s = &traj.states;
    let n = s.len();
    let mut states = s.clone();
    for i in 0..n {
        let (lo, hi, span) = if i == 0 {
            (0, 1, dt)
        } else if i == n - 1 {
            (n - 2, n - 1, dt)
        } else {
            (i - 1, i + 1, 2.0 * dt)
        };
        states[i].vx = (s[hi].x - s[lo].x) / span;
        states[i].vy = (s[hi].y - s[lo].y) / span;
    }
    Ok(Trajectory { states, ..traj.clone() })
}

/// Cuts consecutive non-overlapping 20-step windows; the remainder is dropped.
pub fn segment_tracklets(traj: &Trajectory) -> Vec<Tracklet> {
    traj.states
        .chunks_exact(TRACKLET_LEN)
        .map(|w| Tracklet {
            agent_id: traj.agent_id.clone(),
            agent_class: traj.agent_class,
            observed: w[..OBS_LEN].to_vec(),
            future: w[OBS_LEN..].to_vec(),
            source_trajectory_id: traj.id.clone(),
        })
        .collect()
}

/// Full per-trajectory pipeline: gap split, resample, velocities, segmentation.
pub fn trajectory_to_tracklets(traj: &Trajectory, dt: f64) -> Result<Vec<Tracklet>> {
    if traj.len() < 2 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for piece in resample_segments(traj, dt)? {
        let piece = derive_velocities(&piece)?;
        out.extend(segment_tracklets(&piece));
    }
    Ok(out)
}

/// Mapping from source trajectory id to fold index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, trajectory_id: &str) -> Option<usize> {
        self.folds.get(trajectory_id).copied()
    }

    /// Number of trajectory ids per fold.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0; self.k];
        for &f in self.folds.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(train, validation)` tracklets for validation fold `fold`.
    /// Tracklets whose trajectory is unassigned go to neither side.
    pub fn split<'a>(&self, tracklets: &'a [Tracklet], fold: usize) -> (Vec<&'a Tracklet>, Vec<&'a Tracklet>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for t in tracklets {
            match self.fold_of(&t.source_trajectory_id) {
                Some(f) if f == fold => val.push(t),
                Some(_) => train.push(t),
                None => {}
            }
        }
        (train, val)
    }
}

/// Groups tracklets by source trajectory, shuffles the ids with a seeded RNG
/// and deals them round-robin into `k` folds.
pub fn assign_folds(tracklets: &[Tracklet], k: usize, seed: u64) -> Result<FoldAssignment> {
    let ids: Vec<&str> = tracklets.iter().map(|t| t.source_trajectory_id.as_str()).collect();
    assign_folds_by_id(&ids, k, seed)
}

pub fn assign_folds_by_id(ids: &[&str], k: usize, seed: u64) -> Result<FoldAssignment> {
    if ids.is_empty() {
        return Err(Error::Empty("tracklets"));
    }
    let mut unique: Vec<&str> = ids.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if k < 2 || unique.len() < k {
        return Err(Error::FoldCount { ids: unique.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unique.shuffle(&mut rng);
    let folds = unique
        .into_iter()
        .enumerate()
        .map(|(i, id)| (String::from(id), i % k))
        .collect();
    Ok(FoldAssignment { k, folds })
}

/// Checks that a trajectory is uniformly sampled at [`DT`].
pub fn check_uniform(traj: &Trajectory) -> Result<()> {
    let step = uniform_step(traj)?;
    if libm::fabs(step - DT) > TIME_TOL {
        return Err(Error::NonUniform { id: traj.id.clone(), index: 1 });
    }
    Ok(())
}
