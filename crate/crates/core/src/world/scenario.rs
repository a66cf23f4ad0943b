//! Scenario documents: TOML text with a versioned schema describing objects,
//! regions, the initial state, the goal, pose/class declarations and the
//! disturbance schedule.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use super::{
    Articulated, Container, Dims, DisplacementCause, Effect, EffectKind, Fraction, GoalSpec, GraspOutcome, GraspRule,
    Gripper, ItemMatch, Joint, Landing, ObjectId, ObjectSpec, Placement, PoseQualifier, Region, RegionId, RigidItem,
    Scene, Stability, StabilityCondition, StabilityRule, WorldState,
};
use crate::plantree::Action;

pub const SCHEMA_VERSION: &str = "wmtree-scenario/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafeRegion {
    pub surface: ObjectId,
    pub region: RegionId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trigger {
    /// Fires once `k` actions have been executed, before the next one.
    AfterStep(usize),
    /// Fires right after an action equal to the pattern has executed.
    AfterAction(Action),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EditTarget {
    Region(RegionId),
    Inside(ObjectId),
    OffTable,
}

/// Scripted state edit applied by a disturbance or a divergence entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateEdit {
    Move { object: ObjectId, to: EditTarget },
    SetJoint { object: ObjectId, fraction: Fraction },
}

impl StateEdit {
    /// Applies the edit, returning the effect describing the change (none if
    /// the edit is a no-op). Off-table objects are never brought back.
    pub fn apply(&self, state: &mut WorldState) -> Option<Effect> {
        match self {
            StateEdit::Move { object, to } => {
                let from = state.placement(object.as_str())?.clone();
                if from == Placement::OffTable {
                    return None;
                }
                let to = match to {
                    EditTarget::Region(r) => state.land(&Landing::Region(r.clone()), object.as_str()),
                    EditTarget::Inside(c) => Placement::Inside { container: c.clone() },
                    EditTarget::OffTable => Placement::OffTable,
                };
                if to == from {
                    return None;
                }
                if matches!(from, Placement::Held { .. }) {
                    state.set_gripper(Gripper::Empty);
                }
                state.set_placement(object, to.clone());
                Some(Effect::relocation(
                    object,
                    EffectKind::Displaced {
                        from,
                        to,
                        cause: DisplacementCause::External,
                    },
                    state,
                ))
            }
            StateEdit::SetJoint { object, fraction } => {
                let from = state.joint(object.as_str())?;
                if from == *fraction {
                    return None;
                }
                state.set_joint(object, *fraction);
                Some(Effect::note(object, EffectKind::JointChanged { from, to: *fraction }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disturbance {
    pub trigger: Trigger,
    pub edits: Vec<StateEdit>,
}

/// Real-world execution that departs from simulation: the matching action
/// fails in place and the edits are applied instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub action: Action,
    pub edits: Vec<StateEdit>,
    pub times: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioMeta {
    pub name: String,
    pub instruction: String,
    pub poses: BTreeMap<ObjectId, Vec<PoseQualifier>>,
    pub classes: BTreeMap<String, Vec<ObjectId>>,
    pub disturbances: Vec<Disturbance>,
    pub divergence: Vec<Divergence>,
    pub safe_region: Option<SafeRegion>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub initial: WorldState,
    pub goal: GoalSpec,
    pub meta: ScenarioMeta,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.meta.name
    }
}

// ---- raw document -------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: String,
    name: String,
    instruction: String,
    objects: Vec<RawObject>,
    #[serde(default)]
    regions: Vec<RawRegion>,
    initial: RawInitial,
    goal: GoalSpec,
    #[serde(default)]
    poses: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    classes: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    disturbances: Vec<RawDisturbance>,
    #[serde(default)]
    divergence: Vec<RawDivergence>,
    safe_region: Option<String>,
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum RawKind {
    Surface,
    Item,
    Container,
    Articulated,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    id: String,
    kind: RawKind,
    dims: Option<[f64; 3]>,
    footprint: Option<f64>,
    #[serde(default)]
    affordances: BTreeMap<String, RawGrasp>,
    container: Option<RawContainer>,
    joint: Option<RawJoint>,
    interior: Option<RawContainer>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrasp {
    outcome: RawGraspOutcome,
    #[serde(default)]
    blocked_by_occupancy: bool,
    when_contained: Option<RawGraspOutcome>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawGraspOutcome {
    Hold,
    Slip {
        displacement: f64,
        direction: [f64; 2],
        landing: String,
    },
    Infeasible {
        reason: String,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContainer {
    opening_width: f64,
    interior_height: f64,
    capacity: usize,
    #[serde(default)]
    stability: Vec<RawStability>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum RawWhen {
    Always,
    Obstructed,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum RawStabilityOutcome {
    Stable,
    Topple,
    Rebound,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStability {
    item: String,
    when: Option<RawWhen>,
    outcome: RawStabilityOutcome,
    landing: Option<String>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawJoint {
    Revolute {
        swept_region: String,
        landing: String,
    },
    Prismatic {
        travel: [f64; 2],
        front_aperture: String,
        landing: String,
        clearance_height: f64,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    id: String,
    surface: String,
    workspace: bool,
    slots: u8,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    #[serde(default)]
    placements: BTreeMap<String, RawPlacement>,
    #[serde(default)]
    joints: BTreeMap<String, f64>,
}

#[derive(Deserialize, Clone, Default)]
#[serde(deny_unknown_fields)]
struct RawPlacement {
    on: Option<String>,
    slot: Option<u8>,
    inside: Option<String>,
    held: Option<String>,
    #[serde(default)]
    off_table: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    after_step: Option<usize>,
    after_action: Option<String>,
    edits: Vec<RawEdit>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDivergence {
    action: String,
    #[serde(default)]
    edits: Vec<RawEdit>,
    times: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdit {
    object: String,
    to: Option<RawPlacement>,
    fraction: Option<f64>,
}

// ---- loading -------------------------------------------------------------

/// Parses and validates a scenario document.
pub fn load_scenario(document: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(document).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if raw.schema != SCHEMA_VERSION {
        return Err(invalid(
            "schema",
            format!("unsupported schema {:?}, expected {SCHEMA_VERSION:?}", raw.schema),
        ));
    }
    let scene = Arc::new(build_scene(&raw)?);
    let initial = build_initial(&raw, &scene)?;
    raw.goal
        .validate(&scene)
        .map_err(|(path, message)| invalid(path, message))?;

    let poses = scene
        .objects()
        .filter_map(|o| o.item.as_ref().map(|i| (o.id.clone(), i.poses.clone())))
        .collect();
    let disturbances = raw
        .disturbances
        .iter()
        .enumerate()
        .map(|(i, d)| build_disturbance(d, &scene, &format!("disturbances[{i}]")))
        .collect::<Result<_, _>>()?;
    let divergence = raw
        .divergence
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let path = format!("divergence[{i}]");
            Ok(Divergence {
                action: parse_action(&d.action, &format!("{path}.action"))?,
                edits: build_edits(&d.edits, &scene, &path)?,
                times: d.times.unwrap_or(1),
            })
        })
        .collect::<Result<_, ScenarioError>>()?;
    let safe_region = match &raw.safe_region {
        None => None,
        Some(r) => {
            let region = scene
                .region(r)
                .ok_or_else(|| invalid("safe_region", format!("unknown region {r:?}")))?;
            if !region.in_workspace {
                return Err(invalid("safe_region", format!("{r} is outside the workspace")));
            }
            Some(SafeRegion {
                surface: region.surface.clone(),
                region: region.id.clone(),
            })
        }
    };

    let meta = ScenarioMeta {
        name: raw.name.clone(),
        instruction: raw.instruction.clone(),
        poses,
        classes: scene.classes().clone(),
        disturbances,
        divergence,
        safe_region,
    };
    Ok(Scenario {
        initial,
        goal: raw.goal,
        meta,
    })
}

fn parse_action(text: &str, path: &str) -> Result<Action, ScenarioError> {
    text.parse().map_err(|e| invalid(path, format!("{e}")))
}

fn landing(raw: &str, regions: &BTreeMap<RegionId, Region>, path: &str) -> Result<Landing, ScenarioError> {
    if raw == "off_table" {
        return Ok(Landing::OffTable);
    }
    if regions.contains_key(raw) {
        Ok(Landing::Region(RegionId::from(raw)))
    } else {
        Err(invalid(path, format!("unknown landing region {raw:?}")))
    }
}

fn positive(v: f64, path: &str) -> Result<f64, ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(path, format!("must be > 0 (got {v})")))
    }
}

fn build_scene(raw: &RawScenario) -> Result<Scene, ScenarioError> {
    let mut ids = BTreeSet::new();
    for (i, o) in raw.objects.iter().enumerate() {
        if o.id.is_empty() || !ids.insert(o.id.as_str()) {
            return Err(invalid(
                format!("objects[{i}].id"),
                format!("duplicate or empty id {:?}", o.id),
            ));
        }
    }

    let mut regions = BTreeMap::new();
    let mut region_order = Vec::new();
    for (i, r) in raw.regions.iter().enumerate() {
        let path = format!("regions[{i}]");
        if !ids.contains(r.surface.as_str()) {
            return Err(invalid(
                format!("{path}.surface"),
                format!("unknown object {:?}", r.surface),
            ));
        }
        if r.slots == 0 {
            return Err(invalid(format!("{path}.slots"), "must be at least 1"));
        }
        let id = RegionId::from(r.id.as_str());
        if regions.contains_key(&id) || r.id == "off_table" {
            return Err(invalid(
                format!("{path}.id"),
                format!("duplicate or reserved region {:?}", r.id),
            ));
        }
        region_order.push(id.clone());
        regions.insert(
            id.clone(),
            Region {
                id,
                surface: ObjectId::from(r.surface.as_str()),
                in_workspace: r.workspace,
                slots: r.slots,
            },
        );
    }

    let mut classes: BTreeMap<String, Vec<ObjectId>> = BTreeMap::new();
    for (name, members) in &raw.classes {
        if ids.contains(name.as_str()) {
            return Err(invalid(
                format!("classes.{name}"),
                "class name clashes with an object id",
            ));
        }
        if members.is_empty() {
            return Err(invalid(format!("classes.{name}"), "class has no members"));
        }
        for (j, m) in members.iter().enumerate() {
            if !ids.contains(m.as_str()) {
                return Err(invalid(format!("classes.{name}[{j}]"), format!("unknown object {m:?}")));
            }
        }
        classes.insert(
            name.clone(),
            members.iter().map(|m| ObjectId::from(m.as_str())).collect(),
        );
    }

    let item_ref = |s: &str, path: &str| -> Result<ItemMatch, ScenarioError> {
        if s == "*" {
            Ok(ItemMatch::Any)
        } else if classes.contains_key(s) {
            Ok(ItemMatch::Class(s.to_string()))
        } else if ids.contains(s) {
            Ok(ItemMatch::Object(ObjectId::from(s)))
        } else {
            Err(invalid(path, format!("unknown object or class {s:?}")))
        }
    };

    let build_container = |c: &RawContainer, path: &str| -> Result<Container, ScenarioError> {
        let mut stability = Vec::new();
        for (k, s) in c.stability.iter().enumerate() {
            let spath = format!("{path}.stability[{k}]");
            let need_landing = || {
                s.landing
                    .as_deref()
                    .ok_or_else(|| invalid(format!("{spath}.landing"), "required for this outcome"))
                    .and_then(|l| landing(l, &regions, &format!("{spath}.landing")))
            };
            let outcome = match s.outcome {
                RawStabilityOutcome::Stable => Stability::Stable,
                RawStabilityOutcome::Topple => Stability::Topple {
                    landing: need_landing()?,
                },
                RawStabilityOutcome::Rebound => Stability::Rebound {
                    landing: need_landing()?,
                },
            };
            stability.push(StabilityRule {
                item: item_ref(&s.item, &format!("{spath}.item"))?,
                when: match s.when.unwrap_or(RawWhen::Always) {
                    RawWhen::Always => StabilityCondition::Always,
                    RawWhen::Obstructed => StabilityCondition::Obstructed,
                },
                outcome,
            });
        }
        if c.capacity == 0 {
            return Err(invalid(format!("{path}.capacity"), "must be at least 1"));
        }
        Ok(Container {
            opening_width: positive(c.opening_width, &format!("{path}.opening_width"))?,
            interior_height: positive(c.interior_height, &format!("{path}.interior_height"))?,
            capacity: c.capacity,
            stability,
        })
    };

    let grasp_outcome = |g: &RawGraspOutcome, path: &str| -> Result<GraspOutcome, ScenarioError> {
        Ok(match g {
            RawGraspOutcome::Hold => GraspOutcome::Hold,
            RawGraspOutcome::Slip {
                displacement,
                direction,
                landing: l,
            } => {
                if *displacement < 0.0 {
                    return Err(invalid(format!("{path}.displacement"), "must be >= 0"));
                }
                let norm = direction[0].hypot(direction[1]);
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(invalid(format!("{path}.direction"), "must be a unit vector"));
                }
                GraspOutcome::Slip {
                    displacement: *displacement,
                    direction: *direction,
                    landing: landing(l, &regions, &format!("{path}.landing"))?,
                }
            }
            RawGraspOutcome::Infeasible { reason } => GraspOutcome::Infeasible { reason: reason.clone() },
        })
    };

    let mut objects = BTreeMap::new();
    let mut object_order = Vec::new();
    for (i, o) in raw.objects.iter().enumerate() {
        let path = format!("objects[{i}]");
        let id = ObjectId::from(o.id.as_str());
        let movable = matches!(o.kind, RawKind::Item | RawKind::Container);

        let item = if movable {
            let dims = o
                .dims
                .ok_or_else(|| invalid(format!("{path}.dims"), "required for items"))?;
            for (k, d) in dims.iter().enumerate() {
                positive(*d, &format!("{path}.dims[{k}]"))?;
            }
            if o.affordances.is_empty() {
                return Err(invalid(
                    format!("{path}.affordances"),
                    "at least one affordance required",
                ));
            }
            let mut affordances = BTreeMap::new();
            for (pose, g) in &o.affordances {
                let gpath = format!("{path}.affordances.{pose}");
                affordances.insert(
                    PoseQualifier::from(pose.as_str()),
                    GraspRule {
                        outcome: grasp_outcome(&g.outcome, &format!("{gpath}.outcome"))?,
                        blocked_by_occupancy: g.blocked_by_occupancy,
                        when_contained: g
                            .when_contained
                            .as_ref()
                            .map(|w| grasp_outcome(w, &format!("{gpath}.when_contained")))
                            .transpose()?,
                    },
                );
            }
            let poses = match raw.poses.get(&o.id) {
                Some(list) => {
                    let mut seen = BTreeSet::new();
                    for (k, p) in list.iter().enumerate() {
                        if !affordances.contains_key(p.as_str()) || !seen.insert(p) {
                            return Err(invalid(
                                format!("poses.{}[{k}]", o.id),
                                format!("pose {p:?} is not a declared affordance (or repeated)"),
                            ));
                        }
                    }
                    if seen.len() != affordances.len() {
                        return Err(invalid(format!("poses.{}", o.id), "must list every affordance"));
                    }
                    list.iter().map(|p| PoseQualifier::from(p.as_str())).collect()
                }
                None => affordances.keys().cloned().collect(),
            };
            let footprint = match o.footprint {
                Some(f) => positive(f, &format!("{path}.footprint"))?,
                None => dims[0].max(dims[1]) / 2.0,
            };
            Some(RigidItem {
                dims: Dims {
                    width: dims[0],
                    depth: dims[1],
                    height: dims[2],
                },
                footprint,
                affordances,
                poses,
            })
        } else {
            if !o.affordances.is_empty() {
                return Err(invalid(format!("{path}.affordances"), "fixtures cannot be grasped"));
            }
            None
        };

        let container = match (o.kind, &o.container) {
            (RawKind::Container, Some(c)) => Some(build_container(c, &format!("{path}.container"))?),
            (RawKind::Container, None) => return Err(invalid(format!("{path}.container"), "required for containers")),
            (_, Some(_)) => return Err(invalid(format!("{path}.container"), "only valid for kind = container")),
            (_, None) => None,
        };

        let articulated = match (o.kind, &o.joint) {
            (RawKind::Articulated, Some(j)) => {
                let jpath = format!("{path}.joint");
                let known_region = |r: &str, p: &str| {
                    if regions.contains_key(r) {
                        Ok(RegionId::from(r))
                    } else {
                        Err(invalid(p, format!("unknown region {r:?}")))
                    }
                };
                let joint = match j {
                    RawJoint::Revolute {
                        swept_region,
                        landing: l,
                    } => Joint::Revolute {
                        swept_region: known_region(swept_region, &format!("{jpath}.swept_region"))?,
                        landing: landing(l, &regions, &format!("{jpath}.landing"))?,
                    },
                    RawJoint::Prismatic {
                        travel,
                        front_aperture,
                        landing: l,
                        clearance_height,
                    } => Joint::Prismatic {
                        travel: *travel,
                        front_aperture: known_region(front_aperture, &format!("{jpath}.front_aperture"))?,
                        landing: landing(l, &regions, &format!("{jpath}.landing"))?,
                        clearance_height: positive(*clearance_height, &format!("{jpath}.clearance_height"))?,
                    },
                };
                let interior = o
                    .interior
                    .as_ref()
                    .map(|c| build_container(c, &format!("{path}.interior")))
                    .transpose()?;
                Some(Articulated { joint, interior })
            }
            (RawKind::Articulated, None) => {
                return Err(invalid(format!("{path}.joint"), "required for articulated objects"))
            }
            (_, Some(_)) => return Err(invalid(format!("{path}.joint"), "only valid for articulated objects")),
            (_, None) => {
                if o.interior.is_some() {
                    return Err(invalid(
                        format!("{path}.interior"),
                        "only valid for articulated objects",
                    ));
                }
                None
            }
        };

        let member_of = classes
            .iter()
            .filter(|(_, m)| m.contains(&id))
            .map(|(c, _)| c.clone())
            .collect();
        object_order.push(id.clone());
        objects.insert(
            id.clone(),
            ObjectSpec {
                id,
                item,
                container,
                articulated,
                classes: member_of,
            },
        );
    }

    for name in raw.poses.keys() {
        if !objects.get(name.as_str()).is_some_and(|o| o.is_movable()) {
            return Err(invalid(format!("poses.{name}"), "not a graspable object"));
        }
    }

    Ok(Scene {
        name: raw.name.clone(),
        objects,
        object_order,
        regions,
        region_order,
        classes,
    })
}

fn placement_target(raw: &RawPlacement, scene: &Scene, path: &str) -> Result<EditTarget, ScenarioError> {
    let set = [
        raw.on.is_some(),
        raw.inside.is_some(),
        raw.held.is_some(),
        raw.off_table,
    ]
    .iter()
    .filter(|b| **b)
    .count();
    if set != 1 {
        return Err(invalid(path, "exactly one of on / inside / held / off_table required"));
    }
    if let Some(r) = &raw.on {
        if scene.region(r).is_none() {
            return Err(invalid(format!("{path}.on"), format!("unknown region {r:?}")));
        }
        return Ok(EditTarget::Region(RegionId::from(r.as_str())));
    }
    if let Some(c) = &raw.inside {
        if scene.object(c).and_then(|o| o.container()).is_none() {
            return Err(invalid(format!("{path}.inside"), format!("{c:?} is not a container")));
        }
        return Ok(EditTarget::Inside(ObjectId::from(c.as_str())));
    }
    if raw.held.is_some() {
        return Err(invalid(
            format!("{path}.held"),
            "held placements are only valid initially",
        ));
    }
    Ok(EditTarget::OffTable)
}

fn build_initial(raw: &RawScenario, scene: &Arc<Scene>) -> Result<WorldState, ScenarioError> {
    let mut placements = BTreeMap::new();
    let mut gripper = Gripper::Empty;
    let mut pending_slots: Vec<(ObjectId, RegionId, String)> = Vec::new();

    for (name, p) in &raw.initial.placements {
        let path = format!("initial.placements.{name}");
        let obj = scene
            .object(name)
            .ok_or_else(|| invalid(&path, format!("unknown object {name:?}")))?;
        let Some(item) = &obj.item else {
            return Err(invalid(&path, "fixtures have no placement"));
        };
        let id = obj.id.clone();
        if let Some(pose) = &p.held {
            if p.on.is_some() || p.inside.is_some() || p.off_table {
                return Err(invalid(&path, "exactly one of on / inside / held / off_table required"));
            }
            if !item.affordances.contains_key(pose.as_str()) {
                return Err(invalid(format!("{path}.held"), format!("unknown pose {pose:?}")));
            }
            if gripper != Gripper::Empty {
                return Err(invalid(&path, "at most one object can be held"));
            }
            gripper = Gripper::Holding(id.clone());
            placements.insert(
                id,
                Placement::Held {
                    pose: PoseQualifier::from(pose.as_str()),
                },
            );
            continue;
        }
        match placement_target(p, scene, &path)? {
            EditTarget::Region(r) => {
                let region = scene.region(r.as_str()).expect("validated");
                match p.slot {
                    Some(slot) if slot >= region.slots => {
                        return Err(invalid(
                            format!("{path}.slot"),
                            format!("region {r} has {} slots", region.slots),
                        ))
                    }
                    Some(slot) => {
                        placements.insert(
                            id,
                            Placement::OnSurface {
                                surface: region.surface.clone(),
                                region: r,
                                slot,
                            },
                        );
                    }
                    None => pending_slots.push((id, r, path)),
                }
            }
            EditTarget::Inside(c) => {
                if p.slot.is_some() {
                    return Err(invalid(format!("{path}.slot"), "slots only apply to regions"));
                }
                let container = scene.object(c.as_str()).and_then(|o| o.container()).expect("validated");
                if item.dims.width >= container.opening_width {
                    return Err(invalid(
                        &path,
                        format!("{name} does not fit through the opening of {c}"),
                    ));
                }
                placements.insert(id, Placement::Inside { container: c });
            }
            EditTarget::OffTable => {
                placements.insert(id, Placement::OffTable);
            }
        }
    }

    let mut joints = BTreeMap::new();
    for (name, v) in &raw.initial.joints {
        let path = format!("initial.joints.{name}");
        let obj = scene
            .object(name)
            .ok_or_else(|| invalid(&path, format!("unknown object {name:?}")))?;
        if obj.articulated.is_none() {
            return Err(invalid(&path, "not an articulated object"));
        }
        let f = Fraction::from_f64(*v).ok_or_else(|| invalid(&path, "open fraction must lie in [0, 1]"))?;
        joints.insert(obj.id.clone(), f);
    }
    for obj in scene.objects() {
        if obj.articulated.is_some() {
            joints.entry(obj.id.clone()).or_insert(Fraction::CLOSED);
        }
        if obj.is_movable()
            && !placements.contains_key(&obj.id)
            && !pending_slots.iter().any(|(id, _, _)| *id == obj.id)
        {
            return Err(invalid(
                format!("initial.placements.{}", obj.id),
                "movable object has no placement",
            ));
        }
    }

    let mut state = WorldState::from_parts(scene.clone(), placements, joints, gripper);
    for (id, region, path) in pending_slots {
        let slot = state
            .free_slot(region.as_str(), None)
            .ok_or_else(|| invalid(&path, format!("region {region} is full")))?;
        let surface = scene.region(region.as_str()).expect("validated").surface.clone();
        state.set_placement(&id, Placement::OnSurface { surface, region, slot });
    }

    for obj in scene.objects() {
        if let Some(c) = obj.container() {
            if state.occupants(obj.id.as_str()).len() > c.capacity {
                return Err(invalid(
                    "initial.placements",
                    format!("{} holds more than its capacity of {}", obj.id, c.capacity),
                ));
            }
        }
    }
    state.check_invariants().map_err(|m| invalid("initial", m))?;
    Ok(state)
}

fn build_edits(raw: &[RawEdit], scene: &Scene, path: &str) -> Result<Vec<StateEdit>, ScenarioError> {
    raw.iter()
        .enumerate()
        .map(|(i, e)| {
            let epath = format!("{path}.edits[{i}]");
            let obj = scene
                .object(&e.object)
                .ok_or_else(|| invalid(format!("{epath}.object"), format!("unknown object {:?}", e.object)))?;
            match (&e.to, e.fraction) {
                (Some(to), None) => {
                    if !obj.is_movable() {
                        return Err(invalid(format!("{epath}.object"), "fixtures cannot be moved"));
                    }
                    Ok(StateEdit::Move {
                        object: obj.id.clone(),
                        to: placement_target(to, scene, &format!("{epath}.to"))?,
                    })
                }
                (None, Some(f)) => {
                    if obj.articulated.is_none() {
                        return Err(invalid(format!("{epath}.object"), "not an articulated object"));
                    }
                    Ok(StateEdit::SetJoint {
                        object: obj.id.clone(),
                        fraction: Fraction::from_f64(f)
                            .ok_or_else(|| invalid(format!("{epath}.fraction"), "must lie in [0, 1]"))?,
                    })
                }
                _ => Err(invalid(&epath, "exactly one of `to` or `fraction` required")),
            }
        })
        .collect()
}

fn build_disturbance(raw: &RawDisturbance, scene: &Scene, path: &str) -> Result<Disturbance, ScenarioError> {
    let trigger = match (raw.after_step, &raw.after_action) {
        (Some(k), None) => Trigger::AfterStep(k),
        (None, Some(a)) => Trigger::AfterAction(parse_action(a, &format!("{path}.after_action"))?),
        _ => return Err(invalid(path, "exactly one of after_step / after_action required")),
    };
    if raw.edits.is_empty() {
        return Err(invalid(format!("{path}.edits"), "at least one edit required"));
    }
    Ok(Disturbance {
        trigger,
        edits: build_edits(&raw.edits, scene, path)?,
    })
}
