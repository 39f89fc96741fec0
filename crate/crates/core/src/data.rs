//! States, trajectories and tracklets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::vocab::{ActionClass, AgentClass, Vocabulary};
use crate::{DT, OBS_LEN, PRED_LEN};

/// Tolerance on timestep uniformity, seconds.
pub const TIME_TOL: f64 = 1e-6;

/// One timestep of an agent's motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub action: ActionClass,
}

impl State {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn speed(&self) -> f64 {
        libm::hypot(self.vx, self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.x.is_finite()
            && self.y.is_finite()
            && self.vx.is_finite()
            && self.vy.is_finite()
    }
}

/// Time-ordered motion of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Grouping key for cross-validation; segments split from one recording share it.
    pub id: String,
    pub agent_id: String,
    pub agent_class: AgentClass,
    pub states: Vec<State>,
    #[serde(default)]
    pub scenario_tag: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Index of the first timestamp that does not increase, if any.
    pub fn first_unordered(&self) -> Option<usize> {
        self.states
            .windows(2)
            .position(|w| !(w[1].t > w[0].t))
            .map(|i| i + 1)
    }
}

/// A 20-step segment split into observed and future windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub agent_id: String,
    pub agent_class: AgentClass,
    pub observed: Vec<State>,
    pub future: Vec<State>,
    pub source_trajectory_id: String,
}

impl Tracklet {
    pub fn states(&self) -> impl Iterator<Item = &State> + '_ {
        self.observed.iter().chain(self.future.iter())
    }

    /// Last observed position, the origin of model coordinates.
    pub fn anchor(&self) -> [f64; 2] {
        self.observed
            .last()
            .map(State::position)
            .unwrap_or([0.0, 0.0])
    }

    pub fn future_positions(&self) -> Vec<[f64; 2]> {
        self.future.iter().map(State::position).collect()
    }

    pub fn future_actions(&self) -> Vec<ActionClass> {
        self.future.iter().map(|s| s.action).collect()
    }

    /// Returns a copy with every position shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Tracklet {
        let shift = |s: &State| State { x: s.x + dx, y: s.y + dy, ..*s };
        Tracklet {
            observed: self.observed.iter().map(shift).collect(),
            future: self.future.iter().map(shift).collect(),
            ..self.clone()
        }
    }
}

/// Checks every tracklet invariant; an empty list means the tracklet is valid.
pub fn validate_tracklet(t: &Tracklet, vocab: &Vocabulary) -> Vec<String> {
    validate_tracklet_with_dt(t, vocab, DT)
}

pub fn validate_tracklet_with_dt(t: &Tracklet, vocab: &Vocabulary, dt: f64) -> Vec<String> {
    let mut out = Vec::new();
    if t.observed.len() != OBS_LEN {
        out.push(format!("observed length {} ≠ {}", t.observed.len(), OBS_LEN));
    }
    if t.future.len() != PRED_LEN {
        out.push(format!("future length {} ≠ {}", t.future.len(), PRED_LEN));
    }
    if !vocab.contains_agent_class(t.agent_class) {
        out.push(format!("agent class {} not in vocabulary", t.agent_class));
    }
    let states: Vec<&State> = t.states().collect();
    if states.iter().any(|s| !s.is_finite()) {
        out.push(String::from("non-finite state value"));
    }
    if states
        .windows(2)
        .any(|w| libm::fabs(w[1].t - w[0].t - dt) > TIME_TOL)
    {
        out.push(String::from("non-uniform/incorrect timestep"));
    }
    let mut missing: Vec<ActionClass> = Vec::new();
    for s in &states {
        if !vocab.contains_action(s.action) && !missing.contains(&s.action) {
            missing.push(s.action);
        }
    }
    for a in missing {
        out.push(format!("action {} not in vocabulary", a));
    }
    out
}


#[cfg(test)]
mod tests {
    use super::fixtures::straight;
    use super::*;
    use crate::vocab::{scenario_vocabulary, ScenarioSelector};

    fn vocab() -> Vocabulary {
        scenario_vocabulary(ScenarioSelector::Scenarios2and3)
    }

    #[test]
    fn well_formed_is_valid() {
        let t = straight(0.0, 0.0, 1.0, 0.0, ActionClass::Walk);
        assert!(validate_tracklet(&t, &vocab()).is_empty());
        let first = t.observed[0].t;
        let last = t.future[PRED_LEN - 1].t;
        assert!((last - first - 7.6).abs() < 1e-9);
    }

    #[test]
    fn short_observed() {
        let mut t = straight(0.0, 0.0, 1.0, 0.0, ActionClass::Walk);
        t.observed.remove(0);
        let v = validate_tracklet(&t, &vocab());
        assert_eq!(v, ["observed length 7 ≠ 8"]);
    }

    #[test]
    fn wrong_timestep() {
        let mut t = straight(0.0, 0.0, 1.0, 0.0, ActionClass::Walk);
        for (i, s) in t.observed.iter_mut().chain(t.future.iter_mut()).enumerate() {
            s.t = i as f64 * 0.5;
        }
        assert_eq!(validate_tracklet(&t, &vocab()), ["non-uniform/incorrect timestep"]);
    }

    #[test]
    fn out_of_vocab_labels() {
        let mut t = straight(0.0, 0.0, 1.0, 0.0, ActionClass::PickStorageBin);
        t.agent_class = AgentClass::CarrierStorageBinHRI;
        let v = validate_tracklet(&t, &vocab());
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn translation_shifts_positions_only() {
        let t = straight(1.0, 2.0, 0.5, 0.0, ActionClass::Walk);
        let m = t.translated(10.0, -3.0);
        assert_eq!(m.anchor(), [t.anchor()[0] + 10.0, t.anchor()[1] - 3.0]);
        assert_eq!(m.observed[3].vx, t.observed[3].vx);
    }
}
