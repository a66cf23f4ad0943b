//! Candidate branch generation: the initial enumeration over object
//! instances and grasp poses, and failure-driven revision of a branch.

mod priori;
mod reflective;

pub use priori::{priori_branches, DEFAULT_MAX_BRANCHES};
pub use reflective::reflective_branch;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::judge::FailureDiagnosis;
use crate::plantree::{Action, Branch, DEFAULT_MAX_BRANCH_LEN};
use crate::world::{
    Fraction, GoalSpec, Gripper, JointTarget, ObjectId, ObjectView, Observation, Placement, PoseQualifier, Predicate,
    RegionId, RegionView, SafeRegion, ScenarioMeta,
};

/// What the brancher knows about the scene: the observation plus the
/// scenario's declarations. Nothing here reads the privileged world state.
#[derive(Debug, Clone, Serialize)]
pub struct SceneParse {
    pub instruction: String,
    pub objects: BTreeMap<ObjectId, ObjectView>,
    pub regions: BTreeMap<RegionId, RegionView>,
    pub placements: BTreeMap<ObjectId, Placement>,
    pub joints: BTreeMap<ObjectId, Fraction>,
    pub gripper: Gripper,
    pub classes: BTreeMap<String, Vec<ObjectId>>,
    pub poses: BTreeMap<ObjectId, Vec<PoseQualifier>>,
    #[serde(skip)]
    pub safe_region: Option<SafeRegion>,
    #[serde(skip)]
    pub observation: Observation,
}

impl SceneParse {
    pub fn new(observation: &Observation, meta: &ScenarioMeta) -> Self {
        SceneParse {
            instruction: meta.instruction.clone(),
            objects: observation.objects.clone(),
            regions: observation.regions.clone(),
            placements: observation.placements.clone(),
            joints: observation.joints.clone(),
            gripper: observation.gripper.clone(),
            classes: meta.classes.clone(),
            poses: meta.poses.clone(),
            safe_region: meta.safe_region.clone(),
            observation: observation.clone(),
        }
    }

    /// Builds the parse for a live state.
    pub fn of_state(state: &crate::world::WorldState, meta: &ScenarioMeta) -> Self {
        SceneParse::new(&crate::world::observe(state, &[]), meta)
    }

    pub fn resolve(&self, name: &str) -> Vec<ObjectId> {
        if let Some(m) = self.classes.get(name) {
            m.clone()
        } else if self.objects.contains_key(name) {
            vec![ObjectId::from(name)]
        } else {
            Vec::new()
        }
    }

    pub fn is_articulated(&self, obj: &ObjectId) -> bool {
        self.objects
            .get(obj)
            .is_some_and(|v| v.kinds.iter().any(|k| k == "articulated"))
    }

    pub fn poses_of(&self, obj: &ObjectId) -> &[PoseQualifier] {
        self.poses.get(obj).map(Vec::as_slice).unwrap_or(&[])
    }

    /// First in-workspace region of a surface, by region id.
    pub fn workspace_region(&self, surface: &ObjectId) -> Option<&RegionId> {
        self.regions
            .iter()
            .find(|(_, v)| v.in_workspace && v.surface == *surface)
            .map(|(r, _)| r)
    }

    /// Support and containment relations as readable facts.
    pub fn relations(&self) -> Vec<String> {
        self.placements
            .iter()
            .map(|(o, p)| match p {
                Placement::OnSurface { surface, region, .. } => format!("on({o}, {surface}@{region})"),
                Placement::Inside { container } => format!("in({o}, {container})"),
                Placement::Held { pose } => format!("held({o}, {pose})"),
                Placement::OffTable => format!("off_table({o})"),
            })
            .collect()
    }

    pub fn holds(&self, p: &Predicate) -> bool {
        holds(p, &self.placements, &self.joints, &self.gripper, self)
    }
}

pub(crate) fn holds(
    p: &Predicate,
    placements: &BTreeMap<ObjectId, Placement>,
    joints: &BTreeMap<ObjectId, Fraction>,
    gripper: &Gripper,
    parse: &SceneParse,
) -> bool {
    match p {
        Predicate::In(o, c) => {
            let cs = parse.resolve(c);
            parse
                .resolve(o)
                .iter()
                .any(|x| matches!(placements.get(x), Some(Placement::Inside { container }) if cs.contains(container)))
        }
        Predicate::On(o, s) => {
            let ss = parse.resolve(s);
            parse.resolve(o).iter().any(
                |x| matches!(placements.get(x), Some(Placement::OnSurface { surface, .. }) if ss.contains(surface)),
            )
        }
        Predicate::JointAt(a, t) => parse.resolve(a).iter().any(|x| {
            joints.get(x).is_some_and(|f| match t {
                JointTarget::Open => f.is_open(),
                JointTarget::Closed => f.is_closed(),
            })
        }),
        Predicate::Holding(o) => matches!(gripper, Gripper::Holding(h) if parse.resolve(o).contains(h)),
        Predicate::AnyOf(ds) => ds
            .iter()
            .any(|d| d.iter().all(|q| holds(q, placements, joints, gripper, parse))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BranchError {
    #[error("brancher backend failed: {0}")]
    Backend(String),
}

/// Inputs to one reflective revision.
#[derive(Debug, Clone)]
pub struct ReflectRequest<'a> {
    pub diagnosis: &'a FailureDiagnosis,
    /// Index of the failed action within `original`.
    pub failed_index: usize,
    pub original: &'a Branch,
    pub parse: &'a SceneParse,
}

impl ReflectRequest<'_> {
    pub fn failed(&self) -> &Action {
        &self.original.actions()[self.failed_index]
    }
}

pub trait Brancher: Send + Sync {
    fn priori(&self, parse: &SceneParse, goal: &GoalSpec) -> Result<Vec<Branch>, BranchError>;

    fn reflect(&self, request: &ReflectRequest<'_>) -> Result<Option<Branch>, BranchError>;

    fn name(&self) -> &str {
        "builtin"
    }
}

/// Rule-based brancher.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinBrancher {
    pub max_branches: usize,
    pub max_branch_len: usize,
}

impl Default for BuiltinBrancher {
    fn default() -> Self {
        BuiltinBrancher {
            max_branches: DEFAULT_MAX_BRANCHES,
            max_branch_len: DEFAULT_MAX_BRANCH_LEN,
        }
    }
}

impl Brancher for BuiltinBrancher {
    fn priori(&self, parse: &SceneParse, goal: &GoalSpec) -> Result<Vec<Branch>, BranchError> {
        Ok(priori_branches(parse, goal, self.max_branches))
    }

    fn reflect(&self, request: &ReflectRequest<'_>) -> Result<Option<Branch>, BranchError> {
        Ok(reflective_branch(
            request.diagnosis,
            request.failed_index,
            request.original,
            request.parse,
            self.max_branch_len,
        ))
    }
}
