//! Step evaluation: turns a rollout into a verdict and, on failure, a typed
//! diagnosis that reflective branching can act on.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plantree::{Action, ActionVerb};
use crate::skills::SkillError;
use crate::world::{DisplacementCause, Effect, EffectKind, ObjectId, PoseQualifier, Refusal, StepOutcome, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum FailureCause {
    CollisionDisturbance {
        victim: ObjectId,
        via: ObjectId,
    },
    OrderingConflict {
        blocker: ObjectId,
        blocked_target: ObjectId,
    },
    UnstablePlacement {
        obj: ObjectId,
        container: ObjectId,
    },
    GraspSlip {
        obj: ObjectId,
        pose: Option<PoseQualifier>,
    },
    Unreachable {
        obj: ObjectId,
    },
    BlockedClearance {
        articulated: ObjectId,
        blocker: ObjectId,
    },
    /// The primitive refused to run at all (gripper state, unknown pose...).
    PreconditionViolated {
        obj: ObjectId,
        reason: String,
    },
}

impl FailureCause {
    pub fn tag(&self) -> &'static str {
        match self {
            FailureCause::CollisionDisturbance { .. } => "collision_disturbance",
            FailureCause::OrderingConflict { .. } => "ordering_conflict",
            FailureCause::UnstablePlacement { .. } => "unstable_placement",
            FailureCause::GraspSlip { .. } => "grasp_slip",
            FailureCause::Unreachable { .. } => "unreachable",
            FailureCause::BlockedClearance { .. } => "blocked_clearance",
            FailureCause::PreconditionViolated { .. } => "precondition_violated",
        }
    }

    /// Objects named by the cause, most relevant first.
    pub fn objects(&self) -> Vec<&ObjectId> {
        match self {
            FailureCause::CollisionDisturbance { victim, via } => vec![victim, via],
            FailureCause::OrderingConflict {
                blocker,
                blocked_target,
            } => vec![blocker, blocked_target],
            FailureCause::UnstablePlacement { obj, container } => vec![obj, container],
            FailureCause::GraspSlip { obj, .. }
            | FailureCause::Unreachable { obj }
            | FailureCause::PreconditionViolated { obj, .. } => vec![obj],
            FailureCause::BlockedClearance { articulated, blocker } => vec![blocker, articulated],
        }
    }
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.objects().into_iter().map(|o| o.as_str()).collect();
        write!(f, "{}({})", self.tag(), names.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FailureDiagnosis {
    #[serde(flatten)]
    pub cause: FailureCause,
    pub recoverable: bool,
    pub narrative: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum EvalResult {
    Success,
    Failure(FailureDiagnosis),
}

impl EvalResult {
    pub fn is_success(&self) -> bool {
        matches!(self, EvalResult::Success)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("outcome does not follow from the pre-state: {0}")]
    Mismatch(String),
    #[error("judge backend failed: {0}")]
    Backend(String),
}

pub trait Judge: Send + Sync {
    fn evaluate(&self, pre: &WorldState, outcome: &StepOutcome, action: &Action) -> Result<EvalResult, JudgeError>;

    fn name(&self) -> &str {
        "builtin"
    }
}

/// Rule-based judge reading the full world state.
#[derive(Debug, Default, Clone, Copy)]
pub struct BuiltinJudge;

impl Judge for BuiltinJudge {
    fn evaluate(&self, pre: &WorldState, outcome: &StepOutcome, action: &Action) -> Result<EvalResult, JudgeError> {
        evaluate(pre, outcome, action)
    }
}

/// True iff any effect is irreversible or leaves an object outside the
/// workspace.
pub fn classify_safety(effects: &[Effect]) -> bool {
    effects.iter().any(|e| e.irreversible)
}

/// The object an action manipulates: the grasp target, the held object for
/// puts, the articulated object for open/close.
pub fn subject(pre: &WorldState, action: &Action) -> ObjectId {
    match action.verb() {
        ActionVerb::PutOn | ActionVerb::PutInto => pre.held().cloned().unwrap_or_else(|| action.target().clone()),
        _ => action.target().clone(),
    }
}

fn check_consistent(pre: &WorldState, outcome: &StepOutcome) -> Result<(), JudgeError> {
    if !std::sync::Arc::ptr_eq(pre.scene_arc(), outcome.state.scene_arc()) && pre.scene() != outcome.state.scene() {
        return Err(JudgeError::Mismatch("different scenes".into()));
    }
    for e in &outcome.effects {
        match &e.kind {
            EffectKind::Moved { from, .. } | EffectKind::Fell { from, .. } | EffectKind::Displaced { from, .. }
                if pre.placement(e.object.as_str()) != Some(from) =>
            {
                return Err(JudgeError::Mismatch(format!(
                    "{} was not at {from} before the step",
                    e.object
                )));
            }
            EffectKind::JointChanged { from, .. } if pre.joint(e.object.as_str()) != Some(*from) => {
                return Err(JudgeError::Mismatch(format!(
                    "{} joint was not at {from} before the step",
                    e.object
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn evaluate(pre: &WorldState, outcome: &StepOutcome, action: &Action) -> Result<EvalResult, JudgeError> {
    check_consistent(pre, outcome)?;
    let subj = subject(pre, action);
    let target = action.target();
    let effects = &outcome.effects;
    let recoverable = !classify_safety(effects);
    let narrate = |cause: FailureCause| {
        let detail: Vec<String> = effects.iter().map(ToString::to_string).collect();
        let narrative = if detail.is_empty() {
            format!("{action}: {cause}")
        } else {
            format!("{action}: {cause}; {}", detail.join("; "))
        };
        Ok(EvalResult::Failure(FailureDiagnosis {
            cause,
            recoverable,
            narrative,
        }))
    };

    // Side effects on other objects, irreversible ones first.
    let mut bystanders: Vec<&Effect> = effects
        .iter()
        .filter(|e| e.object != subj && e.kind.relocation().is_some())
        .collect();
    bystanders.sort_by_key(|e| !e.irreversible);
    if let Some(e) = bystanders.first() {
        return narrate(FailureCause::CollisionDisturbance {
            victim: e.object.clone(),
            via: target.clone(),
        });
    }
    let find = |f: &dyn Fn(&EffectKind) -> bool| effects.iter().find(|e| f(&e.kind));
    if let Some(e) = find(&|k| {
        matches!(
            k,
            EffectKind::Displaced {
                cause: DisplacementCause::Rebound { .. },
                ..
            }
        )
    }) {
        if let EffectKind::Displaced {
            cause: DisplacementCause::Rebound { off },
            ..
        } = &e.kind
        {
            return narrate(FailureCause::CollisionDisturbance {
                victim: off.clone(),
                via: e.object.clone(),
            });
        }
    }
    if let Some(EffectKind::Jammed { by }) = find(&|k| matches!(k, EffectKind::Jammed { .. })).map(|e| &e.kind) {
        return narrate(FailureCause::BlockedClearance {
            articulated: target.clone(),
            blocker: by.clone(),
        });
    }
    if let Some(EffectKind::Blocked { by }) = find(&|k| matches!(k, EffectKind::Blocked { .. })).map(|e| &e.kind) {
        return narrate(FailureCause::OrderingConflict {
            blocker: by.clone(),
            blocked_target: target.clone(),
        });
    }
    let unstable = find(&|k| {
        matches!(
            k,
            EffectKind::Fell { .. }
                | EffectKind::Refused {
                    reason: Refusal::RegionFull
                        | Refusal::TooWide
                        | Refusal::AtCapacity
                        | Refusal::ContainerClosed
                        | Refusal::SupportCycle
                }
        )
    });
    if unstable.is_some() {
        return narrate(FailureCause::UnstablePlacement {
            obj: subj,
            container: target.clone(),
        });
    }
    if find(&|k| {
        matches!(
            k,
            EffectKind::Displaced {
                cause: DisplacementCause::Slip,
                ..
            }
        )
    })
    .is_some()
    {
        return narrate(FailureCause::GraspSlip {
            obj: subj,
            pose: action.pose().cloned(),
        });
    }
    let unreachable = find(&|k| {
        matches!(
            k,
            EffectKind::Unreachable
                | EffectKind::Refused {
                    reason: Refusal::GraspInfeasible { .. }
                        | Refusal::RegionOutsideWorkspace
                        | Refusal::ContainerUnreachable
                        | Refusal::Diverged
                }
        )
    });
    if unreachable.is_some() || !outcome.primitive_ok || !recoverable {
        return narrate(FailureCause::Unreachable { obj: target.clone() });
    }
    Ok(EvalResult::Success)
}

/// Diagnosis for an action whose preconditions did not hold.
pub fn precondition_failure(action: &Action, err: &SkillError) -> FailureDiagnosis {
    FailureDiagnosis {
        cause: FailureCause::PreconditionViolated {
            obj: action.target().clone(),
            reason: err.to_string(),
        },
        recoverable: true,
        narrative: format!("{action}: {err}"),
    }
}
