use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Effect, Fraction, Gripper, ObjectId, Placement, PoseQualifier, RegionId, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectView {
    pub kinds: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poses: Vec<PoseQualifier>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionView {
    pub surface: ObjectId,
    pub in_workspace: bool,
    pub slots: u8,
}

/// Canonical structured rendering of a world state, the payload handed to
/// judges and branchers. Maps are key-ordered so equal states serialize to
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub scene: String,
    pub objects: BTreeMap<ObjectId, ObjectView>,
    pub regions: BTreeMap<RegionId, RegionView>,
    pub placements: BTreeMap<ObjectId, Placement>,
    pub joints: BTreeMap<ObjectId, Fraction>,
    pub gripper: Gripper,
    #[serde(default)]
    pub effects: Vec<Effect>,
}

impl Observation {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("observation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Observes `state`, attaching the effects of the step that produced it.
pub fn observe(state: &WorldState, last_effects: &[Effect]) -> Observation {
    let scene = state.scene();
    let objects = scene
        .objects()
        .map(|o| {
            (
                o.id.clone(),
                ObjectView {
                    kinds: o.kind_tags().into_iter().map(String::from).collect(),
                    classes: o.classes.clone(),
                    poses: o.item.as_ref().map(|i| i.poses.clone()).unwrap_or_default(),
                },
            )
        })
        .collect();
    let regions = scene
        .regions()
        .map(|r| {
            (
                r.id.clone(),
                RegionView {
                    surface: r.surface.clone(),
                    in_workspace: r.in_workspace,
                    slots: r.slots,
                },
            )
        })
        .collect();
    Observation {
        scene: scene.name.clone(),
        objects,
        regions,
        placements: state.placements().clone(),
        joints: state.joints().clone(),
        gripper: state.gripper().clone(),
        effects: last_effects.to_vec(),
    }
}
