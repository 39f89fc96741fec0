//! Dataset statistics: action distribution and kinematic profiles.
//!
//! Speed is the norm of the state velocity. Acceleration is the signed rate
//! of change of speed, taken by central differences inside each 20-step
//! segment (one-sided at the segment ends), so decelerating steps are
//! negative. Navigation distance is the path length `Σ ‖p[i+1] − p[i]‖`
//! accumulated per segment; step `i → i+1` is attributed to the action of
//! state `i`.
//!
//! Means and standard deviations are population moments accumulated with
//! Welford updates, mergeable pairwise via [`Moments::merge`].

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{State, Tracklet};
use crate::vocab::{argmax, ActionClass};
use crate::DT;

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    /// Population standard deviation; 0 when empty.
    pub fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            libm::sqrt((self.m2 / self.n as f64).max(0.0))
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// How segment distance is attributed to actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceMode {
    /// Each action accumulates only the steps it labels.
    #[default]
    PerAction,
    /// The whole segment distance goes to the segment's most frequent action.
    PerSegment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionKinematics {
    /// `None` marks the pooled, all-actions row.
    pub action: Option<ActionClass>,
    /// Number of states contributing to speed and acceleration.
    pub n: usize,
    /// Number of segments contributing to distance.
    pub segments: usize,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub accel_mean: f64,
    pub accel_std: f64,
    pub dist_mean: f64,
    pub dist_std: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    speed: Moments,
    accel: Moments,
    dist: Moments,
}

impl Accum {
    fn merge(&self, o: &Accum) -> Accum {
        Accum {
            speed: self.speed.merge(&o.speed),
            accel: self.accel.merge(&o.accel),
            dist: self.dist.merge(&o.dist),
        }
    }

    fn finish(&self, action: Option<ActionClass>) -> ActionKinematics {
        ActionKinematics {
            action,
            n: self.speed.n,
            segments: self.dist.n,
            speed_mean: self.speed.mean,
            speed_std: self.speed.std(),
            accel_mean: self.accel.mean,
            accel_std: self.accel.std(),
            dist_mean: self.dist.mean,
            dist_std: self.dist.std(),
        }
    }
}

/// Per-timestep action counts over all 20 states of every tracklet, in
/// vocabulary order (index 0..13). Use [`sorted_distribution`] for display.
pub fn action_distribution(tracklets: &[Tracklet]) -> Vec<(ActionClass, usize)> {
    let mut counts = [0usize; ActionClass::COUNT];
    for s in tracklets.iter().flat_map(Tracklet::states) {
        counts[s.action.index()] += 1;
    }
    ActionClass::ALL.iter().copied().zip(counts).collect()
}

/// Descending by count; ties keep vocabulary order.
pub fn sorted_distribution(dist: &[(ActionClass, usize)]) -> Vec<(ActionClass, usize)> {
    let mut v = dist.to_vec();
    v.sort_by(|a, b| b.1.cmp(&a.1));
    v
}

/// Speeds and signed speed derivatives of one segment.
fn segment_profiles(states: &[State], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let speed: Vec<f64> = states.iter().map(State::speed).collect();
    let n = speed.len();
    let accel = (0..n)
        .map(|i| match n {
            0 | 1 => 0.0,
            _ if i == 0 => (speed[1] - speed[0]) / dt,
            _ if i == n - 1 => (speed[n - 1] - speed[n - 2]) / dt,
            _ => (speed[i + 1] - speed[i - 1]) / (2.0 * dt),
        })
        .collect();
    (speed, accel)
}

fn step_lengths(states: &[State]) -> Vec<f64> {
    states
        .windows(2)
        .map(|w| libm::hypot(w[1].x - w[0].x, w[1].y - w[0].y))
        .collect()
}

/// Path length of a segment.
pub fn segment_distance(states: &[State]) -> f64 {
    step_lengths(states).iter().sum()
}

fn accumulate(tracklets: &[Tracklet], mode: DistanceMode, dt: f64) -> ([Accum; ActionClass::COUNT], Accum) {
    let mut per = [Accum::default(); ActionClass::COUNT];
    let mut global = Accum::default();
    for t in tracklets {
        let states: Vec<State> = t.states().copied().collect();
        let (speed, accel) = segment_profiles(&states, dt);
        let steps = step_lengths(&states);
        let mut present = [false; ActionClass::COUNT];
        let mut dist = [0.0f64; ActionClass::COUNT];
        let mut counts = [0usize; ActionClass::COUNT];
        for (i, s) in states.iter().enumerate() {
            let a = s.action.index();
            present[a] = true;
            counts[a] += 1;
            per[a].speed.push(speed[i]);
            per[a].accel.push(accel[i]);
            global.speed.push(speed[i]);
            global.accel.push(accel[i]);
            if let Some(d) = steps.get(i) {
                dist[a] += d;
            }
        }
        let total: f64 = steps.iter().sum();
        global.dist.push(total);
        match mode {
            DistanceMode::PerAction => {
                for a in 0..ActionClass::COUNT {
                    if present[a] {
                        per[a].dist.push(dist[a]);
                    }
                }
            }
            DistanceMode::PerSegment => {
                if let Some(a) = argmax(&counts) {
                    per[a].dist.push(total);
                }
            }
        }
    }
    (per, global)
}

/// Kinematic profile of every action, in vocabulary order (index 0..13).
pub fn per_action_kinematics(tracklets: &[Tracklet]) -> Vec<ActionKinematics> {
    per_action_kinematics_with(tracklets, DistanceMode::PerAction, DT)
}

pub fn per_action_kinematics_with(tracklets: &[Tracklet], mode: DistanceMode, dt: f64) -> Vec<ActionKinematics> {
    let (per, _) = accumulate(tracklets, mode, dt);
    ActionClass::ALL
        .iter()
        .zip(per.iter())
        .map(|(&a, acc)| acc.finish(Some(a)))
        .collect()
}

/// The same statistics pooled over all steps and segments.
pub fn global_kinematics(tracklets: &[Tracklet]) -> ActionKinematics {
    global_kinematics_with(tracklets, DT)
}

pub fn global_kinematics_with(tracklets: &[Tracklet], dt: f64) -> ActionKinematics {
    accumulate(tracklets, DistanceMode::PerAction, dt).1.finish(None)
}

/// Pools per-shard results computed independently; the merge is exact up to
/// rounding and independent of shard order in exact arithmetic.
pub fn merged_global(shards: &[&[Tracklet]], dt: f64) -> ActionKinematics {
    shards
        .iter()
        .map(|s| accumulate(s, DistanceMode::PerAction, dt).1)
        .fold(Accum::default(), |a, b| a.merge(&b))
        .finish(None)
}
