//! Seeded synthetic trajectories that follow per-class action schedules.
//!
//! Every agent walks its class template (a cycle of phases, each with an
//! action, a duration and a speed) from a random point of the cycle.
//! Motion is piecewise linear; the heading only changes where one phase
//! ends and the next begins, so noiseless futures are known in closed form.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::data::{State, Tracklet, Trajectory};
use crate::error::{Error, Result};
use crate::vocab::{ActionClass, AgentClass};
use crate::{DT, PRED_LEN};

/// Slack when deciding which phase a timestamp belongs to.
const PHASE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub action: ActionClass,
    pub duration_s: f64,
    /// Meters per second; zero for static actions.
    pub speed: f64,
}

impl Phase {
    pub fn new(action: ActionClass, duration_s: f64, speed: f64) -> Self {
        Self { action, duration_s, speed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub class: AgentClass,
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeight {
    pub class: AgentClass,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_trajectories: usize,
    /// Each trajectory has `⌊duration_s / 0.4⌋` samples.
    pub duration_s: f64,
    pub class_mix: Vec<ClassWeight>,
    pub templates: Vec<ClassTemplate>,
    /// Standard deviation of Gaussian position noise, meters.
    pub noise_std: f64,
    /// Heading changes at phase boundaries are drawn from `U(−max_turn, max_turn)`, radians.
    pub max_turn: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let templates = default_templates();
        let w = 1.0 / templates.len() as f64;
        Self {
            n_trajectories: 50,
            duration_s: 24.0,
            class_mix: templates.iter().map(|t| ClassWeight { class: t.class, weight: w }).collect(),
            templates,
            noise_std: 0.0,
            max_turn: core::f64::consts::FRAC_PI_2,
            seed: 0,
        }
    }
}

/// Templates for the classes of the Scenario 2 and 3 vocabulary.
pub fn default_templates() -> Vec<ClassTemplate> {
    use ActionClass::*;
    let t = |class, phases: &[(ActionClass, f64, f64)]| ClassTemplate {
        class,
        phases: phases.iter().map(|&(a, d, s)| Phase::new(a, d, s)).collect(),
    };
    vec![
        t(
            AgentClass::CarrierBox,
            &[(PickBox, 2.0, 0.0), (WalkBox, 4.0, 1.0), (DeliverBox, 2.0, 0.0), (Walk, 4.0, 1.2)],
        ),
        t(
            AgentClass::CarrierBucket,
            &[(PickBucket, 2.0, 0.0), (WalkBucket, 4.0, 0.9), (DeliverBucket, 2.0, 0.0), (Walk, 4.0, 1.2)],
        ),
        t(AgentClass::CarrierLargeObject, &[(WalkLO, 6.0, 0.7), (Walk, 4.0, 1.2)]),
        t(AgentClass::VisitorsAlone, &[(Walk, 6.0, 1.1), (DrawCard, 2.4, 0.0)]),
        t(AgentClass::VisitorsGroup, &[(Walk, 6.0, 1.0), (ObserveCardDraw, 2.4, 0.0), (DrawCard, 2.0, 0.0)]),
    ]
}

impl SynthSpec {
    pub fn template(&self, class: AgentClass) -> Option<&ClassTemplate> {
        self.templates.iter().find(|t| t.class == class)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SynthSpec(m));
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be at least 1".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s >= DT) {
            return bad(format!("duration_s must be at least {DT}"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std must be finite and non-negative".into());
        }
        if !(self.max_turn.is_finite() && self.max_turn >= 0.0) {
            return bad("max_turn must be finite and non-negative".into());
        }
        if self.class_mix.is_empty() {
            return bad("class_mix is empty".into());
        }
        let mut total = 0.0;
        for cw in &self.class_mix {
            if !(cw.weight.is_finite() && cw.weight >= 0.0) {
                return bad(format!("weight of {} must be non-negative", cw.class.name()));
            }
            total += cw.weight;
            if cw.weight > 0.0 && self.template(cw.class).is_none() {
                return bad(format!("no template for {}", cw.class.name()));
            }
        }
        if libm::fabs(total - 1.0) > 1e-9 {
            return bad(format!("class weights sum to {total}, not 1"));
        }
        for t in &self.templates {
            if t.phases.is_empty() {
                return bad(format!("template for {} has no phases", t.class.name()));
            }
            for p in &t.phases {
                if !(p.duration_s.is_finite() && p.duration_s > 0.0) {
                    return bad(format!("{} phase duration must be positive", p.action.name()));
                }
                if !(p.speed.is_finite() && p.speed >= 0.0) {
                    return bad(format!("{} phase speed must be non-negative", p.action.name()));
                }
            }
        }
        Ok(())
    }

    pub fn samples_per_trajectory(&self) -> usize {
        libm::floor(self.duration_s / DT + PHASE_TOL) as usize
    }
}

/// One phase laid out in schedule time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedPhase {
    pub action: ActionClass,
    pub start: f64,
    pub end: f64,
    pub velocity: [f64; 2],
    pub start_position: [f64; 2],
}

/// The noiseless motion of one generated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub agent_id: String,
    pub agent_class: AgentClass,
    /// Schedule time of the trajectory's first sample.
    pub offset: f64,
    pub phases: Vec<PlannedPhase>,
}

impl Plan {
    fn phase_at(&self, s: f64) -> &PlannedPhase {
        self.phases
            .iter()
            .find(|p| s < p.end - PHASE_TOL)
            .unwrap_or_else(|| &self.phases[self.phases.len() - 1])
    }

    /// Position, velocity and action at trajectory time `t`.
    pub fn at(&self, t: f64) -> ([f64; 2], [f64; 2], ActionClass) {
        let s = self.offset + t;
        let p = self.phase_at(s);
        let dt = s - p.start;
        (
            [p.start_position[0] + p.velocity[0] * dt, p.start_position[1] + p.velocity[1] * dt],
            p.velocity,
            p.action,
        )
    }
}

/// Generates trajectories; see [`generate_with_plans`].
pub fn generate(spec: &SynthSpec) -> Result<Vec<Trajectory>> {
    Ok(generate_with_plans(spec)?.into_iter().map(|(t, _)| t).collect())
}

/// Generates trajectories together with the plans they were sampled from.
/// Trajectory `i` only depends on `(spec, i)`.
pub fn generate_with_plans(spec: &SynthSpec) -> Result<Vec<(Trajectory, Plan)>> {
    spec.validate()?;
    let weights: Vec<f64> = spec.class_mix.iter().map(|c| c.weight).collect();
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::SynthSpec(format!("class_mix: {e}")))?;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::SynthSpec(format!("noise_std: {e}")))?;
    let n = spec.samples_per_trajectory();
    (0..spec.n_trajectories)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let class = spec.class_mix[picker.sample(&mut rng)].class;
            let template = spec.template(class).ok_or_else(|| Error::SynthSpec(format!("no template for {}", class.name())))?;
            let plan = plan_trajectory(format!("synth{i:04}"), class, &template.phases, n, spec.max_turn, &mut rng);
            let states = (0..n)
                .map(|k| {
                    let t = k as f64 * DT;
                    let ([x, y], [vx, vy], action) = plan.at(t);
                    let (x, y) = if spec.noise_std > 0.0 {
                        (x + noise.sample(&mut rng), y + noise.sample(&mut rng))
                    } else {
                        (x, y)
                    };
                    State { t, x, y, vx, vy, action }
                })
                .collect();
            let traj = Trajectory {
                id: plan.agent_id.clone(),
                agent_id: plan.agent_id.clone(),
                agent_class: class,
                states,
                scenario_tag: String::new(),
            };
            Ok((traj, plan))
        })
        .collect()
}

fn plan_trajectory(
    agent_id: String,
    class: AgentClass,
    template: &[Phase],
    samples: usize,
    max_turn: f64,
    rng: &mut ChaCha8Rng,
) -> Plan {
    let cycle: f64 = template.iter().map(|p| p.duration_s).sum();
    let cycle_steps = libm::ceil(cycle / DT - PHASE_TOL).max(1.0) as usize;
    let offset = rng.random_range(0..cycle_steps) as f64 * DT;
    let origin = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
    let mut heading = rng.random_range(0.0..core::f64::consts::TAU);

    // schedule covers the trajectory plus one prediction horizon
    let horizon = offset + (samples + PRED_LEN) as f64 * DT;
    let mut phases: Vec<PlannedPhase> = Vec::new();
    let mut start = 0.0;
    let mut pos = origin;
    let mut k = 0usize;
    while start <= horizon {
        let ph = template[k % template.len()];
        k += 1;
        let end = start + ph.duration_s;
        if let Some(last) = phases.last_mut() {
            let same = last.action == ph.action
                && libm::fabs(libm::hypot(last.velocity[0], last.velocity[1]) - ph.speed) == 0.0;
            if same {
                last.end = end;
                pos = [pos[0] + last.velocity[0] * ph.duration_s, pos[1] + last.velocity[1] * ph.duration_s];
                start = end;
                continue;
            }
            heading += rng.random_range(-1.0..=1.0) * max_turn;
        }
        let velocity = [ph.speed * libm::cos(heading), ph.speed * libm::sin(heading)];
        phases.push(PlannedPhase { action: ph.action, start, end, velocity, start_position: pos });
        pos = [pos[0] + velocity[0] * ph.duration_s, pos[1] + velocity[1] * ph.duration_s];
        start = end;
    }
    Plan { agent_id, agent_class: class, offset, phases }
}

/// Exact future positions of a tracklet cut from a noiseless generated
/// trajectory, continued from its plan past the last observed step.
pub fn closed_form_future(spec: &SynthSpec, plans: &[Plan], tracklet: &Tracklet) -> Result<Vec<[f64; 2]>> {
    if spec.noise_std != 0.0 {
        return Err(Error::Noisy);
    }
    let plan = plans
        .iter()
        .find(|p| p.agent_id == tracklet.agent_id)
        .ok_or_else(|| Error::SynthSpec(format!("no plan for agent {}", tracklet.agent_id)))?;
    let last = tracklet.observed.last().ok_or(Error::Empty("observed window"))?.t;
    let k = libm::round(last / DT) as usize;
    Ok((1..=PRED_LEN).map(|j| plan.at((k + j) as f64 * DT).0).collect())
}
