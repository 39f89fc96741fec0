//! Action and agent-class label sets.
//!
//! Both enumerations have a fixed order; [`ActionClass::index`] and
//! [`AgentClass::index`] are stable and used by the full vocabulary. Scenario
//! restricted vocabularies define their own order through [`Vocabulary`].

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-timestep action label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionClass {
    Walk,
    DrawCard,
    ObserveCardDraw,
    WalkLO,
    PickBucket,
    WalkBucket,
    DeliverBucket,
    PickBox,
    WalkBox,
    DeliverBox,
    PickStorageBin,
    WalkStorageBin,
    DeliverStorageBin,
    HRI,
}

impl ActionClass {
    pub const COUNT: usize = 14;

    /// All labels, index 0..13.
    pub const ALL: [ActionClass; 14] = [
        ActionClass::Walk,
        ActionClass::DrawCard,
        ActionClass::ObserveCardDraw,
        ActionClass::WalkLO,
        ActionClass::PickBucket,
        ActionClass::WalkBucket,
        ActionClass::DeliverBucket,
        ActionClass::PickBox,
        ActionClass::WalkBox,
        ActionClass::DeliverBox,
        ActionClass::PickStorageBin,
        ActionClass::WalkStorageBin,
        ActionClass::DeliverStorageBin,
        ActionClass::HRI,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionClass::Walk => "Walk",
            ActionClass::DrawCard => "DrawCard",
            ActionClass::ObserveCardDraw => "ObserveCardDraw",
            ActionClass::WalkLO => "WalkLO",
            ActionClass::PickBucket => "PickBucket",
            ActionClass::WalkBucket => "WalkBucket",
            ActionClass::DeliverBucket => "DeliverBucket",
            ActionClass::PickBox => "PickBox",
            ActionClass::WalkBox => "WalkBox",
            ActionClass::DeliverBox => "DeliverBox",
            ActionClass::PickStorageBin => "PickStorageBin",
            ActionClass::WalkStorageBin => "WalkStorageBin",
            ActionClass::DeliverStorageBin => "DeliverStorageBin",
            ActionClass::HRI => "HRI",
        }
    }

    /// Actions performed in place: picking, delivering and card drawing.
    pub fn is_static(self) -> bool {
        matches!(
            self,
            ActionClass::DrawCard
                | ActionClass::ObserveCardDraw
                | ActionClass::PickBucket
                | ActionClass::DeliverBucket
                | ActionClass::PickBox
                | ActionClass::DeliverBox
                | ActionClass::PickStorageBin
                | ActionClass::DeliverStorageBin
        )
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = normalize(s);
        ActionClass::ALL
            .iter()
            .copied()
            .find(|a| normalize(a.name()) == key)
            .ok_or_else(|| Error::Vocabulary { label: s.to_string() })
    }
}

/// Role assigned to a participant for a whole recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentClass {
    CarrierBox,
    CarrierBucket,
    CarrierLargeObject,
    VisitorsAlone,
    VisitorsGroup,
    VisitorsAloneHRI,
    CarrierStorageBinHRI,
}

impl AgentClass {
    pub const COUNT: usize = 7;

    pub const ALL: [AgentClass; 7] = [
        AgentClass::CarrierBox,
        AgentClass::CarrierBucket,
        AgentClass::CarrierLargeObject,
        AgentClass::VisitorsAlone,
        AgentClass::VisitorsGroup,
        AgentClass::VisitorsAloneHRI,
        AgentClass::CarrierStorageBinHRI,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentClass::CarrierBox => "CarrierBox",
            AgentClass::CarrierBucket => "CarrierBucket",
            AgentClass::CarrierLargeObject => "CarrierLargeObject",
            AgentClass::VisitorsAlone => "VisitorsAlone",
            AgentClass::VisitorsGroup => "VisitorsGroup",
            AgentClass::VisitorsAloneHRI => "VisitorsAloneHRI",
            AgentClass::CarrierStorageBinHRI => "CarrierStorageBinHRI",
        }
    }

    /// Actions an agent of this class performs.
    pub fn actions(self) -> &'static [ActionClass] {
        use ActionClass::*;
        match self {
            AgentClass::CarrierBox => &[Walk, PickBox, WalkBox, DeliverBox],
            AgentClass::CarrierBucket => &[Walk, PickBucket, WalkBucket, DeliverBucket],
            AgentClass::CarrierLargeObject => &[Walk, WalkLO],
            AgentClass::VisitorsAlone => &[Walk, DrawCard],
            AgentClass::VisitorsGroup => &[Walk, DrawCard, ObserveCardDraw],
            AgentClass::VisitorsAloneHRI => &[Walk, DrawCard, HRI],
            AgentClass::CarrierStorageBinHRI => {
                &[Walk, PickStorageBin, WalkStorageBin, DeliverStorageBin, HRI]
            }
        }
    }
}

impl fmt::Display for AgentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentClass {
    type Err = Error;

    /// Accepts the canonical names as well as the dataset's spelled-out
    /// forms such as `Carrier--Large Object` or `Visitors–Alone HRI`.
    fn from_str(s: &str) -> Result<Self> {
        let key = normalize(s);
        AgentClass::ALL
            .iter()
            .copied()
            .find(|a| normalize(a.name()) == key)
            .ok_or_else(|| Error::Vocabulary { label: s.to_string() })
    }
}

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioSelector {
    /// Every label of the dataset.
    Full,
    /// Merged static-robot and moving-robot scenarios.
    Scenarios2and3,
}

impl FromStr for ScenarioSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match normalize(s).as_str() {
            "full" => Ok(ScenarioSelector::Full),
            "scenarios2and3" | "s23" => Ok(ScenarioSelector::Scenarios2and3),
            _ => Err(Error::Vocabulary { label: s.to_string() }),
        }
    }
}

/// Ordered label subsets; position in each list is the one-hot index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    actions: Vec<ActionClass>,
    agent_classes: Vec<AgentClass>,
}

impl Vocabulary {
    pub fn new(actions: Vec<ActionClass>, agent_classes: Vec<AgentClass>) -> Result<Self> {
        if actions.is_empty() || agent_classes.is_empty() {
            return Err(Error::Empty("vocabulary"));
        }
        for (i, a) in actions.iter().enumerate() {
            if actions[..i].contains(a) {
                return Err(Error::Vocabulary { label: a.name().to_string() });
            }
        }
        for (i, c) in agent_classes.iter().enumerate() {
            if agent_classes[..i].contains(c) {
                return Err(Error::Vocabulary { label: c.name().to_string() });
            }
        }
        Ok(Self { actions, agent_classes })
    }

    pub fn actions(&self) -> &[ActionClass] {
        &self.actions
    }

    pub fn agent_classes(&self) -> &[AgentClass] {
        &self.agent_classes
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_agent_classes(&self) -> usize {
        self.agent_classes.len()
    }

    pub fn action_index(&self, action: ActionClass) -> Result<usize> {
        self.actions
            .iter()
            .position(|&a| a == action)
            .ok_or_else(|| Error::Vocabulary { label: action.name().to_string() })
    }

    pub fn agent_index(&self, class: AgentClass) -> Result<usize> {
        self.agent_classes
            .iter()
            .position(|&c| c == class)
            .ok_or_else(|| Error::Vocabulary { label: class.name().to_string() })
    }

    pub fn action_at(&self, index: usize) -> Option<ActionClass> {
        self.actions.get(index).copied()
    }

    pub fn contains_action(&self, action: ActionClass) -> bool {
        self.actions.contains(&action)
    }

    pub fn contains_agent_class(&self, class: AgentClass) -> bool {
        self.agent_classes.contains(&class)
    }

    /// One-hot encoding of `action` over this vocabulary's action list.
    pub fn one_hot(&self, action: ActionClass) -> Result<Vec<f64>> {
        let idx = self.action_index(action)?;
        let mut v = alloc::vec![0.0; self.actions.len()];
        v[idx] = 1.0;
        Ok(v)
    }

    /// Inverse of [`Vocabulary::one_hot`]: the label at the largest entry,
    /// ties resolved towards the lowest index.
    pub fn decode(&self, scores: &[f64]) -> Option<ActionClass> {
        let idx = argmax(scores)?;
        self.action_at(idx)
    }
}

/// Index of the maximum; the lowest index wins ties. `None` on empty input.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn scenario_vocabulary(selector: ScenarioSelector) -> Vocabulary {
    use ActionClass::*;
    use AgentClass::*;
    let (actions, classes) = match selector {
        ScenarioSelector::Full => (ActionClass::ALL.to_vec(), AgentClass::ALL.to_vec()),
        ScenarioSelector::Scenarios2and3 => (
            alloc::vec![
                DrawCard,
                Walk,
                WalkLO,
                PickBucket,
                WalkBucket,
                DeliverBucket,
                ObserveCardDraw,
                PickBox,
                WalkBox,
                DeliverBox,
            ],
            alloc::vec![CarrierBox, CarrierBucket, CarrierLargeObject, VisitorsAlone, VisitorsGroup],
        ),
    };
    Vocabulary { actions, agent_classes: classes }
}
