use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ObjectId, Placement, Scene, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointTarget {
    Open,
    Closed,
}

/// One goal conjunct. Operands name either an object or an instance class;
/// a class operand is satisfied by any of its members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    In(String, String),
    On(String, String),
    JointAt(String, JointTarget),
    Holding(String),
    AnyOf(Vec<Vec<Predicate>>),
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::In(o, c) => write!(f, "In({o}, {c})"),
            Predicate::On(o, s) => write!(f, "On({o}, {s})"),
            Predicate::JointAt(a, JointTarget::Open) => write!(f, "JointAt({a}, open)"),
            Predicate::JointAt(a, JointTarget::Closed) => write!(f, "JointAt({a}, closed)"),
            Predicate::Holding(o) => write!(f, "Holding({o})"),
            Predicate::AnyOf(ds) => {
                f.write_str("AnyOf(")?;
                for (i, d) in ds.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    let parts: Vec<String> = d.iter().map(ToString::to_string).collect();
                    write!(f, "{}", parts.join(" & "))?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Conjunction of predicates plus a set of objects that must stay on the
/// table and inside the workspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub all: Vec<Predicate>,
    #[serde(default)]
    pub protected: Vec<ObjectId>,
}

impl Predicate {
    pub fn holds(&self, state: &WorldState) -> bool {
        let scene = state.scene();
        match self {
            Predicate::In(o, c) => {
                let containers = scene.resolve(c);
                scene.resolve(o).iter().any(|obj| {
                    matches!(state.placement(obj.as_str()),
                        Some(Placement::Inside { container }) if containers.contains(container))
                })
            }
            Predicate::On(o, s) => {
                let surfaces = scene.resolve(s);
                scene.resolve(o).iter().any(|obj| {
                    matches!(state.placement(obj.as_str()),
                        Some(Placement::OnSurface { surface, .. }) if surfaces.contains(surface))
                })
            }
            Predicate::JointAt(a, target) => scene.resolve(a).iter().any(|obj| {
                state.joint(obj.as_str()).is_some_and(|f| match target {
                    JointTarget::Open => f.is_open(),
                    JointTarget::Closed => f.is_closed(),
                })
            }),
            Predicate::Holding(o) => state.held().is_some_and(|h| scene.resolve(o).contains(h)),
            Predicate::AnyOf(ds) => ds.iter().any(|d| d.iter().all(|p| p.holds(state))),
        }
    }

    pub(crate) fn validate(&self, scene: &Scene, path: &str) -> Result<(), (String, String)> {
        let known = |name: &str, at: String| {
            if scene.resolve(name).is_empty() {
                Err((at, format!("unknown object or class {name:?}")))
            } else {
                Ok(())
            }
        };
        match self {
            Predicate::In(o, c) => {
                known(o, format!("{path}.in[0]"))?;
                known(c, format!("{path}.in[1]"))?;
                for member in scene.resolve(c) {
                    if scene.object(member.as_str()).and_then(|m| m.container()).is_none() {
                        return Err((format!("{path}.in[1]"), format!("{member} is not a container")));
                    }
                }
                Ok(())
            }
            Predicate::On(o, s) => {
                known(o, format!("{path}.on[0]"))?;
                known(s, format!("{path}.on[1]"))?;
                for member in scene.resolve(s) {
                    if scene.regions_of(member.as_str()).next().is_none() {
                        return Err((format!("{path}.on[1]"), format!("{member} has no regions")));
                    }
                }
                Ok(())
            }
            Predicate::JointAt(a, _) => {
                known(a, format!("{path}.joint_at[0]"))?;
                for member in scene.resolve(a) {
                    if scene
                        .object(member.as_str())
                        .and_then(|m| m.articulated.as_ref())
                        .is_none()
                    {
                        return Err((format!("{path}.joint_at[0]"), format!("{member} is not articulated")));
                    }
                }
                Ok(())
            }
            Predicate::Holding(o) => known(o, format!("{path}.holding")),
            Predicate::AnyOf(ds) => {
                if ds.is_empty() {
                    return Err((format!("{path}.any_of"), "empty disjunction".into()));
                }
                for (i, d) in ds.iter().enumerate() {
                    for (j, p) in d.iter().enumerate() {
                        p.validate(scene, &format!("{path}.any_of[{i}][{j}]"))?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl GoalSpec {
    pub(crate) fn validate(&self, scene: &Scene) -> Result<(), (String, String)> {
        for (i, p) in self.all.iter().enumerate() {
            p.validate(scene, &format!("goal.all[{i}]"))?;
        }
        for (i, o) in self.protected.iter().enumerate() {
            if scene.object(o.as_str()).is_none() {
                return Err((format!("goal.protected[{i}]"), format!("unknown object {o:?}")));
            }
        }
        Ok(())
    }
}

/// True iff every conjunct holds and no protected object has left the
/// table or the workspace.
pub fn goal_satisfied(state: &WorldState, goal: &GoalSpec) -> bool {
    goal.protected.iter().all(|o| state.object_in_workspace(o.as_str())) && goal.all.iter().all(|p| p.holds(state))
}
