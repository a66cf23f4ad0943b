//! The embodied world model: a rule-based 2.5D tabletop with discrete
//! support/containment relations, scenario-declared physical-effect tables
//! and snapshot/rollback.

mod effect;
mod goal;
mod observe;
mod scenario;
mod snapshot;

pub use effect::{DisplacementCause, Effect, EffectKind, Refusal, StepOutcome};
pub use goal::{goal_satisfied, GoalSpec, JointTarget, Predicate};
pub use observe::{observe, ObjectView, Observation, RegionView};
pub use scenario::{
    load_scenario, Disturbance, Divergence, SafeRegion, Scenario, ScenarioError, ScenarioMeta, StateEdit, Trigger,
    SCHEMA_VERSION,
};
pub use snapshot::{Snapshot, SnapshotError, SnapshotId, SnapshotStore};

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

macro_rules! name_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

name_type!(
    /// Scenario-unique object name.
    ObjectId
);
name_type!(
    /// Named placement region on a surface.
    RegionId
);
name_type!(
    /// Named grasp/approach variant, e.g. `horizontal` or `vertical`.
    PoseQualifier
);

/// Joint opening in `[0, 1]`, stored in thousandths so states hash exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fraction(u16);

impl Fraction {
    pub const CLOSED: Fraction = Fraction(0);
    pub const OPEN: Fraction = Fraction(1000);

    pub fn from_f64(v: f64) -> Option<Fraction> {
        if !(0.0..=1.0).contains(&v) {
            return None;
        }
        Some(Fraction((v * 1000.0).round() as u16))
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 1000.0
    }

    pub fn is_open(self) -> bool {
        self == Self::OPEN
    }

    pub fn is_closed(self) -> bool {
        self == Self::CLOSED
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Fraction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Fraction::from_f64(v).ok_or_else(|| serde::de::Error::custom(format!("fraction {v} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dims {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

/// Where a displaced object comes to rest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Landing {
    Region(RegionId),
    OffTable,
}

impl fmt::Display for Landing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Landing::Region(r) => write!(f, "{r}"),
            Landing::OffTable => f.write_str("off_table"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraspOutcome {
    Hold,
    Slip {
        displacement: f64,
        direction: [f64; 2],
        landing: Landing,
    },
    Infeasible {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspRule {
    pub outcome: GraspOutcome,
    /// A top-down approach is blocked while this object, as a container,
    /// holds an occupant.
    pub blocked_by_occupancy: bool,
    /// Outcome override while the object sits inside a container.
    pub when_contained: Option<GraspOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidItem {
    pub dims: Dims,
    pub footprint: f64,
    pub affordances: BTreeMap<PoseQualifier, GraspRule>,
    /// Declared pose order (enumeration order for branching).
    pub poses: Vec<PoseQualifier>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ItemMatch {
    Any,
    Object(ObjectId),
    Class(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityCondition {
    Always,
    /// Something rests on one of the container's own rim regions.
    Obstructed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Topple { landing: Landing },
    Rebound { landing: Landing },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilityRule {
    pub item: ItemMatch,
    pub when: StabilityCondition,
    pub outcome: Stability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub opening_width: f64,
    pub interior_height: f64,
    pub capacity: usize,
    /// First matching rule wins; no match means stable.
    pub stability: Vec<StabilityRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Joint {
    Revolute {
        swept_region: RegionId,
        landing: Landing,
    },
    Prismatic {
        travel: [f64; 2],
        front_aperture: RegionId,
        landing: Landing,
        clearance_height: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Articulated {
    pub joint: Joint,
    pub interior: Option<Container>,
}

/// Static description of one scene object. Fixtures (surfaces, articulated
/// furniture) have no `item` component and never move.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub id: ObjectId,
    pub item: Option<RigidItem>,
    pub container: Option<Container>,
    pub articulated: Option<Articulated>,
    pub classes: Vec<String>,
}

impl ObjectSpec {
    pub fn is_movable(&self) -> bool {
        self.item.is_some()
    }

    /// Container component, whether free-standing or articulated interior.
    pub fn container(&self) -> Option<&Container> {
        self.container
            .as_ref()
            .or_else(|| self.articulated.as_ref().and_then(|a| a.interior.as_ref()))
    }

    pub fn kind_tags(&self) -> Vec<&'static str> {
        let mut tags = Vec::new();
        if self.item.is_some() {
            tags.push("item");
        }
        if self.container().is_some() {
            tags.push("container");
        }
        if self.articulated.is_some() {
            tags.push("articulated");
        }
        if tags.is_empty() {
            tags.push("surface");
        }
        tags
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: RegionId,
    pub surface: ObjectId,
    pub in_workspace: bool,
    pub slots: u8,
}

/// Immutable scene tables shared by every state of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    objects: BTreeMap<ObjectId, ObjectSpec>,
    object_order: Vec<ObjectId>,
    regions: BTreeMap<RegionId, Region>,
    region_order: Vec<RegionId>,
    classes: BTreeMap<String, Vec<ObjectId>>,
}

impl Scene {
    pub fn object(&self, id: &str) -> Option<&ObjectSpec> {
        self.objects.get(id)
    }

    pub fn region(&self, id: &str) -> Option<&Region> {
        self.regions.get(id)
    }

    /// Objects in declaration order.
    pub fn objects(&self) -> impl Iterator<Item = &ObjectSpec> {
        self.object_order.iter().map(|id| &self.objects[id])
    }

    /// Regions in declaration order.
    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.region_order.iter().map(|id| &self.regions[id])
    }

    pub fn regions_of<'a>(&'a self, surface: &'a str) -> impl Iterator<Item = &'a Region> + 'a {
        self.regions().filter(move |r| r.surface.as_str() == surface)
    }

    pub fn classes(&self) -> &BTreeMap<String, Vec<ObjectId>> {
        &self.classes
    }

    /// Resolves an operand naming either an object or an instance class.
    pub fn resolve(&self, name: &str) -> Vec<ObjectId> {
        if let Some(members) = self.classes.get(name) {
            members.clone()
        } else if self.objects.contains_key(name) {
            vec![ObjectId::from(name)]
        } else {
            Vec::new()
        }
    }

    pub fn workspace(&self) -> impl Iterator<Item = &RegionId> {
        self.regions().filter(|r| r.in_workspace).map(|r| &r.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    OnSurface {
        surface: ObjectId,
        region: RegionId,
        slot: u8,
    },
    Inside {
        container: ObjectId,
    },
    Held {
        pose: PoseQualifier,
    },
    OffTable,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::OnSurface { surface, region, slot } => write!(f, "on {surface}@{region}#{slot}"),
            Placement::Inside { container } => write!(f, "in {container}"),
            Placement::Held { pose } => write!(f, "held({pose})"),
            Placement::OffTable => f.write_str("off_table"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gripper {
    Empty,
    Holding(ObjectId),
}

/// Full scene state. Equality and hashing cover only the dynamic part;
/// the static tables are shared through an `Arc`.
#[derive(Debug, Clone)]
pub struct WorldState {
    scene: Arc<Scene>,
    placements: BTreeMap<ObjectId, Placement>,
    joints: BTreeMap<ObjectId, Fraction>,
    gripper: Gripper,
}

impl PartialEq for WorldState {
    fn eq(&self, other: &Self) -> bool {
        self.placements == other.placements
            && self.joints == other.joints
            && self.gripper == other.gripper
            && (Arc::ptr_eq(&self.scene, &other.scene) || self.scene == other.scene)
    }
}

impl Eq for WorldState {}

impl Hash for WorldState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.placements.hash(state);
        self.joints.hash(state);
        self.gripper.hash(state);
    }
}

impl WorldState {
    pub(crate) fn from_parts(
        scene: Arc<Scene>,
        placements: BTreeMap<ObjectId, Placement>,
        joints: BTreeMap<ObjectId, Fraction>,
        gripper: Gripper,
    ) -> Self {
        WorldState {
            scene,
            placements,
            joints,
            gripper,
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn scene_arc(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn placements(&self) -> &BTreeMap<ObjectId, Placement> {
        &self.placements
    }

    pub fn placement(&self, id: &str) -> Option<&Placement> {
        self.placements.get(id)
    }

    pub fn joints(&self) -> &BTreeMap<ObjectId, Fraction> {
        &self.joints
    }

    pub fn joint(&self, id: &str) -> Option<Fraction> {
        self.joints.get(id).copied()
    }

    pub fn gripper(&self) -> &Gripper {
        &self.gripper
    }

    pub fn held(&self) -> Option<&ObjectId> {
        match &self.gripper {
            Gripper::Holding(id) => Some(id),
            Gripper::Empty => None,
        }
    }

    pub(crate) fn set_placement(&mut self, id: &ObjectId, placement: Placement) {
        self.placements.insert(id.clone(), placement);
    }

    pub(crate) fn set_joint(&mut self, id: &ObjectId, fraction: Fraction) {
        self.joints.insert(id.clone(), fraction);
    }

    pub(crate) fn set_gripper(&mut self, gripper: Gripper) {
        self.gripper = gripper;
    }

    /// Objects directly inside `container`, in id order.
    pub fn occupants(&self, container: &str) -> Vec<ObjectId> {
        self.placements
            .iter()
            .filter(|(_, p)| matches!(p, Placement::Inside { container: c } if c.as_str() == container))
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Objects resting on any region owned by `surface`, in id order.
    pub fn resting_on(&self, surface: &str) -> Vec<ObjectId> {
        self.placements
            .iter()
            .filter(|(_, p)| matches!(p, Placement::OnSurface { surface: s, .. } if s.as_str() == surface))
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Objects placed in `region`, in id order.
    pub fn in_region(&self, region: &str) -> Vec<ObjectId> {
        self.placements
            .iter()
            .filter(|(_, p)| matches!(p, Placement::OnSurface { region: r, .. } if r.as_str() == region))
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Lowest free slot of `region`, ignoring `moving` (which is about to
    /// leave its current slot).
    pub fn free_slot(&self, region: &str, moving: Option<&str>) -> Option<u8> {
        let spec = self.scene.region(region)?;
        let taken: Vec<u8> = self
            .placements
            .iter()
            .filter(|(id, _)| Some(id.as_str()) != moving)
            .filter_map(|(_, p)| match p {
                Placement::OnSurface { region: r, slot, .. } if r.as_str() == region => Some(*slot),
                _ => None,
            })
            .collect();
        (0..spec.slots).find(|s| !taken.contains(s))
    }

    /// Resolves a landing to a concrete placement for `moving`; a full landing
    /// region spills the object off the table.
    pub fn land(&self, landing: &Landing, moving: &str) -> Placement {
        match landing {
            Landing::OffTable => Placement::OffTable,
            Landing::Region(r) => match (self.scene.region(r.as_str()), self.free_slot(r.as_str(), Some(moving))) {
                (Some(region), Some(slot)) => Placement::OnSurface {
                    surface: region.surface.clone(),
                    region: r.clone(),
                    slot,
                },
                _ => Placement::OffTable,
            },
        }
    }

    /// Whether a placement lies inside the arm's workspace. Containment is
    /// resolved through the container's own placement; fixtures are always
    /// in the workspace.
    pub fn placement_in_workspace(&self, placement: &Placement) -> bool {
        let mut current = placement.clone();
        for _ in 0..=self.placements.len() {
            match current {
                Placement::OffTable => return false,
                Placement::Held { .. } => return true,
                Placement::OnSurface { ref region, .. } => {
                    let Some(spec) = self.scene.region(region.as_str()) else {
                        return false;
                    };
                    if !spec.in_workspace {
                        return false;
                    }
                    match self.placements.get(&spec.surface) {
                        Some(p) => current = p.clone(),
                        None => return true,
                    }
                }
                Placement::Inside { ref container } => match self.placements.get(container) {
                    Some(p) => current = p.clone(),
                    None => return true,
                },
            }
        }
        false
    }

    pub fn object_in_workspace(&self, id: &str) -> bool {
        match self.placements.get(id) {
            Some(p) => self.placement_in_workspace(p),
            None => true,
        }
    }

    /// Whether `a` is `b` or transitively supported/contained by `b`.
    pub fn supported_by(&self, a: &str, b: &str) -> bool {
        let mut cur = a.to_string();
        for _ in 0..=self.placements.len() {
            if cur == b {
                return true;
            }
            match self.placements.get(cur.as_str()) {
                Some(Placement::OnSurface { surface, .. }) => cur = surface.to_string(),
                Some(Placement::Inside { container }) => cur = container.to_string(),
                _ => return false,
            }
        }
        false
    }

    /// Structural checks; used by tests and after loading.
    pub fn check_invariants(&self) -> Result<(), String> {
        let held: Vec<&ObjectId> = self
            .placements
            .iter()
            .filter(|(_, p)| matches!(p, Placement::Held { .. }))
            .map(|(id, _)| id)
            .collect();
        match (&self.gripper, held.as_slice()) {
            (Gripper::Empty, []) => {}
            (Gripper::Holding(g), [h]) if g == *h => {}
            _ => return Err(format!("gripper {:?} inconsistent with held {:?}", self.gripper, held)),
        }
        for (id, p) in &self.placements {
            match p {
                Placement::OnSurface { surface, region, slot } => {
                    let r = self
                        .scene
                        .region(region.as_str())
                        .ok_or_else(|| format!("{id}: unknown region {region}"))?;
                    if &r.surface != surface || *slot >= r.slots {
                        return Err(format!("{id}: bad slot {surface}@{region}#{slot}"));
                    }
                    let clash = self.placements.iter().any(|(o, q)| {
                        o != id
                            && matches!(q, Placement::OnSurface { region: r2, slot: s2, .. } if r2 == region && s2 == slot)
                    });
                    if clash {
                        return Err(format!("{id}: slot {region}#{slot} double-booked"));
                    }
                }
                Placement::Inside { container } => {
                    let c = self
                        .scene
                        .object(container.as_str())
                        .and_then(|o| o.container())
                        .ok_or_else(|| format!("{id}: {container} is not a container"))?;
                    if self.occupants(container.as_str()).len() > c.capacity {
                        return Err(format!("{container}: over capacity"));
                    }
                }
                Placement::Held { .. } | Placement::OffTable => {}
            }
            if let Placement::OnSurface { surface: s, .. } | Placement::Inside { container: s } = p {
                if self.supported_by(s.as_str(), id.as_str()) {
                    return Err(format!("{id}: support cycle through {s}"));
                }
            }
        }
        for (id, f) in &self.joints {
            if self
                .scene
                .object(id.as_str())
                .and_then(|o| o.articulated.as_ref())
                .is_none()
            {
                return Err(format!("{id}: joint on non-articulated object"));
            }
            if f.as_f64() > 1.0 {
                return Err(format!("{id}: fraction out of range"));
            }
        }
        Ok(())
    }
}
