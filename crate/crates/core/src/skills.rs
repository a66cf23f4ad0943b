//! Executable semantics of the five primitives as deterministic rules over
//! [`WorldState`].
//!
//! Precondition violations (grasping with a full gripper, opening something
//! that is not articulated, ...) are planner bugs and come back as
//! [`SkillError`]. Physical failures are ordinary outcomes with
//! `primitive_ok = false` and effects describing what happened.

use thiserror::Error;

use crate::plantree::{Action, ActionVerb};
use crate::world::{
    DisplacementCause, Effect, EffectKind, GraspOutcome, Gripper, ItemMatch, Joint, ObjectId, Placement, PoseQualifier,
    Refusal, Stability, StabilityCondition, StepOutcome, WorldState,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkillError {
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("gripper is already holding {0}")]
    GripperBusy(ObjectId),
    #[error("gripper is empty")]
    GripperEmpty,
    #[error("{0} cannot be grasped")]
    NotGraspable(ObjectId),
    #[error("{object} has no affordance {pose}")]
    UnknownPose { object: ObjectId, pose: PoseQualifier },
    #[error("{0} declares several affordances; a pose is required")]
    AmbiguousPose(ObjectId),
    #[error("region {region} does not belong to {surface}")]
    RegionMismatch { surface: ObjectId, region: String },
    #[error("{0} is not a container")]
    NotContainer(ObjectId),
    #[error("{0} is not articulated")]
    NotArticulated(ObjectId),
}

/// Applies one action to a copy of `state`.
pub fn apply(state: &WorldState, action: &Action) -> Result<StepOutcome, SkillError> {
    let target = action.target();
    match action.verb() {
        ActionVerb::PickUp => pick_up(state, target, action.pose()),
        ActionVerb::PutOn => put_on(state, target, action.region().map(|r| r.as_str()).unwrap_or_default()),
        ActionVerb::PutInto => put_into(state, target),
        ActionVerb::Open => open(state, target),
        ActionVerb::Close => close(state, target),
    }
}

fn unchanged(state: &WorldState, effect: Effect) -> StepOutcome {
    StepOutcome {
        state: state.clone(),
        effects: vec![effect],
        primitive_ok: false,
    }
}

/// Whether the arm can get at `obj` where it currently sits.
fn graspable_location(state: &WorldState, obj: &str) -> bool {
    let Some(p) = state.placement(obj) else {
        return false;
    };
    if !state.placement_in_workspace(p) {
        return false;
    }
    container_accessible(state, p)
}

/// Interiors of articulated containers are only accessible when fully open.
fn container_accessible(state: &WorldState, p: &Placement) -> bool {
    let mut cur = p.clone();
    for _ in 0..=state.placements().len() {
        match cur {
            Placement::Inside { ref container } => {
                if let Some(f) = state.joint(container.as_str()) {
                    if !f.is_open() {
                        return false;
                    }
                }
                match state.placement(container.as_str()) {
                    Some(next) => cur = next.clone(),
                    None => return true,
                }
            }
            Placement::OnSurface { ref surface, .. } => match state.placement(surface.as_str()) {
                Some(next) => cur = next.clone(),
                None => return true,
            },
            _ => return true,
        }
    }
    false
}

pub fn resolve_pose(
    state: &WorldState,
    obj: &ObjectId,
    pose: Option<&PoseQualifier>,
) -> Result<PoseQualifier, SkillError> {
    let spec = state
        .scene()
        .object(obj.as_str())
        .ok_or_else(|| SkillError::UnknownObject(obj.clone()))?;
    let item = spec
        .item
        .as_ref()
        .ok_or_else(|| SkillError::NotGraspable(obj.clone()))?;
    match pose {
        Some(p) if item.affordances.contains_key(p) => Ok(p.clone()),
        Some(p) => Err(SkillError::UnknownPose {
            object: obj.clone(),
            pose: p.clone(),
        }),
        None if item.affordances.len() == 1 => Ok(item.affordances.keys().next().expect("one affordance").clone()),
        None => Err(SkillError::AmbiguousPose(obj.clone())),
    }
}

pub fn pick_up(state: &WorldState, obj: &ObjectId, pose: Option<&PoseQualifier>) -> Result<StepOutcome, SkillError> {
    if let Some(h) = state.held() {
        return Err(SkillError::GripperBusy(h.clone()));
    }
    let pose = resolve_pose(state, obj, pose)?;
    let spec = state.scene().object(obj.as_str()).expect("resolved");
    let rule = &spec.item.as_ref().expect("resolved").affordances[&pose];
    let from = state
        .placement(obj.as_str())
        .cloned()
        .ok_or_else(|| SkillError::UnknownObject(obj.clone()))?;

    if !graspable_location(state, obj.as_str()) {
        return Ok(unchanged(state, Effect::note(obj, EffectKind::Unreachable)));
    }
    if rule.blocked_by_occupancy {
        if let Some(by) = state.occupants(obj.as_str()).into_iter().next() {
            return Ok(unchanged(state, Effect::note(obj, EffectKind::Blocked { by })));
        }
    }
    let contained = matches!(from, Placement::Inside { .. });
    let outcome = match (&rule.when_contained, contained) {
        (Some(o), true) => o,
        _ => &rule.outcome,
    };

    let mut next = state.clone();
    match outcome {
        GraspOutcome::Hold => {
            let to = Placement::Held { pose };
            next.set_placement(obj, to.clone());
            next.set_gripper(Gripper::Holding(obj.clone()));
            let effect = Effect::relocation(obj, EffectKind::Moved { from, to }, &next);
            Ok(StepOutcome {
                state: next,
                effects: vec![effect],
                primitive_ok: true,
            })
        }
        GraspOutcome::Slip { landing, .. } => {
            let to = state.land(landing, obj.as_str());
            if to == from {
                return Ok(unchanged(
                    state,
                    Effect::note(
                        obj,
                        EffectKind::Refused {
                            reason: Refusal::GraspInfeasible {
                                reason: "slipped in place".into(),
                            },
                        },
                    ),
                ));
            }
            next.set_placement(obj, to.clone());
            let effect = Effect::relocation(
                obj,
                EffectKind::Displaced {
                    from,
                    to,
                    cause: DisplacementCause::Slip,
                },
                &next,
            );
            Ok(StepOutcome {
                state: next,
                effects: vec![effect],
                primitive_ok: false,
            })
        }
        GraspOutcome::Infeasible { reason } => Ok(unchanged(
            state,
            Effect::note(
                obj,
                EffectKind::Refused {
                    reason: Refusal::GraspInfeasible { reason: reason.clone() },
                },
            ),
        )),
    }
}

fn holding(state: &WorldState) -> Result<ObjectId, SkillError> {
    state.held().cloned().ok_or(SkillError::GripperEmpty)
}

pub fn put_on(state: &WorldState, surface: &ObjectId, region: &str) -> Result<StepOutcome, SkillError> {
    let held = holding(state)?;
    if state.scene().object(surface.as_str()).is_none() {
        return Err(SkillError::UnknownObject(surface.clone()));
    }
    let spec = state
        .scene()
        .region(region)
        .filter(|r| r.surface == *surface)
        .ok_or_else(|| SkillError::RegionMismatch {
            surface: surface.clone(),
            region: region.to_string(),
        })?;
    let refuse = |reason| Ok(unchanged(state, Effect::note(&held, EffectKind::Refused { reason })));
    if state.supported_by(surface.as_str(), held.as_str()) {
        return refuse(Refusal::SupportCycle);
    }
    if !spec.in_workspace || !state.object_in_workspace(surface.as_str()) {
        return refuse(Refusal::RegionOutsideWorkspace);
    }
    let Some(slot) = state.free_slot(region, Some(held.as_str())) else {
        return refuse(Refusal::RegionFull);
    };
    let from = state.placement(held.as_str()).cloned().expect("held object placed");
    let to = Placement::OnSurface {
        surface: surface.clone(),
        region: spec.id.clone(),
        slot,
    };
    let mut next = state.clone();
    next.set_placement(&held, to.clone());
    next.set_gripper(Gripper::Empty);
    let effect = Effect::relocation(&held, EffectKind::Moved { from, to }, &next);
    Ok(StepOutcome {
        state: next,
        effects: vec![effect],
        primitive_ok: true,
    })
}

fn matches_item(state: &WorldState, m: &ItemMatch, item: &ObjectId) -> bool {
    match m {
        ItemMatch::Any => true,
        ItemMatch::Object(o) => o == item,
        ItemMatch::Class(c) => state
            .scene()
            .classes()
            .get(c)
            .is_some_and(|members| members.contains(item)),
    }
}

pub fn put_into(state: &WorldState, container: &ObjectId) -> Result<StepOutcome, SkillError> {
    let held = holding(state)?;
    let cspec = state
        .scene()
        .object(container.as_str())
        .ok_or_else(|| SkillError::UnknownObject(container.clone()))?;
    let c = cspec
        .container()
        .ok_or_else(|| SkillError::NotContainer(container.clone()))?;
    let refuse = |reason| Ok(unchanged(state, Effect::note(&held, EffectKind::Refused { reason })));

    if state.supported_by(container.as_str(), held.as_str()) {
        return refuse(Refusal::SupportCycle);
    }
    if !state.object_in_workspace(container.as_str()) {
        return refuse(Refusal::ContainerUnreachable);
    }
    if state.joint(container.as_str()).is_some_and(|f| !f.is_open()) {
        return refuse(Refusal::ContainerClosed);
    }
    let width = state
        .scene()
        .object(held.as_str())
        .and_then(|o| o.item.as_ref())
        .map(|i| i.dims.width)
        .expect("held objects are items");
    if width >= c.opening_width {
        return refuse(Refusal::TooWide);
    }
    if state.occupants(container.as_str()).len() >= c.capacity {
        return refuse(Refusal::AtCapacity);
    }

    let obstruction = state.resting_on(container.as_str()).into_iter().next();
    let outcome = c
        .stability
        .iter()
        .find(|r| {
            matches_item(state, &r.item, &held)
                && match r.when {
                    StabilityCondition::Always => true,
                    StabilityCondition::Obstructed => obstruction.is_some(),
                }
        })
        .map(|r| &r.outcome)
        .unwrap_or(&Stability::Stable);

    let from = state.placement(held.as_str()).cloned().expect("held object placed");
    let mut next = state.clone();
    next.set_gripper(Gripper::Empty);
    let (kind, ok) = match outcome {
        Stability::Stable => {
            let to = Placement::Inside {
                container: container.clone(),
            };
            (EffectKind::Moved { from, to }, true)
        }
        Stability::Topple { landing } => {
            let to = state.land(landing, held.as_str());
            (EffectKind::Fell { from, to }, false)
        }
        Stability::Rebound { landing } => {
            let to = state.land(landing, held.as_str());
            let off = obstruction.unwrap_or_else(|| container.clone());
            (
                EffectKind::Displaced {
                    from,
                    to,
                    cause: DisplacementCause::Rebound { off },
                },
                false,
            )
        }
    };
    let (_, to) = kind.relocation().expect("placement effect");
    next.set_placement(&held, to.clone());
    let effect = Effect::relocation(&held, kind, &next);
    Ok(StepOutcome {
        state: next,
        effects: vec![effect],
        primitive_ok: ok,
    })
}

fn articulated<'a>(state: &'a WorldState, obj: &ObjectId) -> Result<&'a Joint, SkillError> {
    if let Some(h) = state.held() {
        return Err(SkillError::GripperBusy(h.clone()));
    }
    let spec = state
        .scene()
        .object(obj.as_str())
        .ok_or_else(|| SkillError::UnknownObject(obj.clone()))?;
    spec.articulated
        .as_ref()
        .map(|a| &a.joint)
        .ok_or_else(|| SkillError::NotArticulated(obj.clone()))
}

pub fn open(state: &WorldState, obj: &ObjectId) -> Result<StepOutcome, SkillError> {
    let joint = articulated(state, obj)?;
    let from = state.joint(obj.as_str()).expect("articulated objects have a joint");
    if from.is_open() {
        return Ok(StepOutcome {
            state: state.clone(),
            effects: Vec::new(),
            primitive_ok: true,
        });
    }
    let (region, landing) = match joint {
        Joint::Revolute { swept_region, landing } => (swept_region, landing),
        Joint::Prismatic {
            front_aperture,
            landing,
            ..
        } => (front_aperture, landing),
    };
    let mut next = state.clone();
    let mut effects = Vec::new();
    for victim in state.in_region(region.as_str()) {
        let from_p = next.placement(victim.as_str()).cloned().expect("placed");
        let to = next.land(landing, victim.as_str());
        next.set_placement(&victim, to.clone());
        effects.push((victim, from_p, to));
    }
    next.set_joint(obj, crate::world::Fraction::OPEN);
    let mut out: Vec<Effect> = effects
        .into_iter()
        .map(|(victim, from_p, to)| {
            Effect::relocation(
                &victim,
                EffectKind::Displaced {
                    from: from_p,
                    to,
                    cause: DisplacementCause::Swept { by: obj.clone() },
                },
                &next,
            )
        })
        .collect();
    out.push(Effect::note(
        obj,
        EffectKind::JointChanged {
            from,
            to: crate::world::Fraction::OPEN,
        },
    ));
    Ok(StepOutcome {
        state: next,
        effects: out,
        primitive_ok: true,
    })
}

pub fn close(state: &WorldState, obj: &ObjectId) -> Result<StepOutcome, SkillError> {
    let joint = articulated(state, obj)?;
    let from = state.joint(obj.as_str()).expect("articulated objects have a joint");
    if from.is_closed() {
        return Ok(StepOutcome {
            state: state.clone(),
            effects: Vec::new(),
            primitive_ok: true,
        });
    }
    if let Joint::Prismatic { clearance_height, .. } = joint {
        let too_tall = state.occupants(obj.as_str()).into_iter().find(|o| {
            state
                .scene()
                .object(o.as_str())
                .and_then(|s| s.item.as_ref())
                .is_some_and(|i| i.dims.height > *clearance_height)
        });
        if let Some(by) = too_tall {
            return Ok(unchanged(state, Effect::note(obj, EffectKind::Jammed { by })));
        }
    }
    let mut next = state.clone();
    next.set_joint(obj, crate::world::Fraction::CLOSED);
    Ok(StepOutcome {
        state: next,
        effects: vec![Effect::note(
            obj,
            EffectKind::JointChanged {
                from,
                to: crate::world::Fraction::CLOSED,
            },
        )],
        primitive_ok: true,
    })
}
