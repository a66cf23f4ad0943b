use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Fraction, ObjectId, Placement, WorldState};

/// What pushed an object somewhere it was not asked to go.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DisplacementCause {
    Slip,
    Rebound { off: ObjectId },
    Swept { by: ObjectId },
    External,
}

/// Why a primitive declined to act; no state changes accompany a refusal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Refusal {
    RegionFull,
    RegionOutsideWorkspace,
    TooWide,
    AtCapacity,
    ContainerClosed,
    ContainerUnreachable,
    SupportCycle,
    GraspInfeasible { reason: String },
    Diverged,
}

impl fmt::Display for Refusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Refusal::RegionFull => f.write_str("region full"),
            Refusal::RegionOutsideWorkspace => f.write_str("region outside workspace"),
            Refusal::TooWide => f.write_str("too wide for opening"),
            Refusal::AtCapacity => f.write_str("container at capacity"),
            Refusal::ContainerClosed => f.write_str("container closed"),
            Refusal::ContainerUnreachable => f.write_str("container unreachable"),
            Refusal::SupportCycle => f.write_str("target rests on the held object"),
            Refusal::GraspInfeasible { reason } => write!(f, "grasp infeasible ({reason})"),
            Refusal::Diverged => f.write_str("execution diverged"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectKind {
    /// Intended relocation of the acting object.
    Moved {
        from: Placement,
        to: Placement,
    },
    /// The object toppled out of a placement attempt.
    Fell {
        from: Placement,
        to: Placement,
    },
    Displaced {
        from: Placement,
        to: Placement,
        cause: DisplacementCause,
    },
    JointChanged {
        from: Fraction,
        to: Fraction,
    },
    /// A close was stopped by an occupant taller than the clearance.
    Jammed {
        by: ObjectId,
    },
    /// A grasp approach was blocked by an occupant.
    Blocked {
        by: ObjectId,
    },
    Unreachable,
    Refused {
        reason: Refusal,
    },
}

impl EffectKind {
    /// Placement change carried by this effect, if any.
    pub fn relocation(&self) -> Option<(&Placement, &Placement)> {
        match self {
            EffectKind::Moved { from, to } | EffectKind::Fell { from, to } | EffectKind::Displaced { from, to, .. } => {
                Some((from, to))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Effect {
    pub object: ObjectId,
    #[serde(flatten)]
    pub kind: EffectKind,
    pub irreversible: bool,
}

impl Effect {
    /// Placement-change effect; irreversibility follows from where the object
    /// ends up in `post`.
    pub(crate) fn relocation(object: &ObjectId, kind: EffectKind, post: &WorldState) -> Effect {
        let irreversible = kind
            .relocation()
            .is_some_and(|(_, to)| !post.placement_in_workspace(to));
        Effect {
            object: object.clone(),
            kind,
            irreversible,
        }
    }

    pub(crate) fn note(object: &ObjectId, kind: EffectKind) -> Effect {
        Effect {
            object: object.clone(),
            kind,
            irreversible: false,
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.object)?;
        match &self.kind {
            EffectKind::Moved { from, to } => write!(f, "moved {from} -> {to}")?,
            EffectKind::Fell { from, to } => write!(f, "fell {from} -> {to}")?,
            EffectKind::Displaced { from, to, cause } => {
                write!(f, "displaced {from} -> {to}")?;
                match cause {
                    DisplacementCause::Slip => f.write_str(" (slip)")?,
                    DisplacementCause::Rebound { off } => write!(f, " (rebound off {off})")?,
                    DisplacementCause::Swept { by } => write!(f, " (swept by {by})")?,
                    DisplacementCause::External => f.write_str(" (external)")?,
                }
            }
            EffectKind::JointChanged { from, to } => write!(f, "joint {from} -> {to}")?,
            EffectKind::Jammed { by } => write!(f, "jammed by {by}")?,
            EffectKind::Blocked { by } => write!(f, "grasp blocked by {by}")?,
            EffectKind::Unreachable => f.write_str("unreachable")?,
            EffectKind::Refused { reason } => write!(f, "refused: {reason}")?,
        }
        if self.irreversible {
            f.write_str(" [irreversible]")?;
        }
        Ok(())
    }
}

/// Result of applying one primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: WorldState,
    pub effects: Vec<Effect>,
    pub primitive_ok: bool,
}
