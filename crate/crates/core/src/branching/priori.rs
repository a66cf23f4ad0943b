use std::collections::{BTreeMap, BTreeSet};

use log::warn;

use super::{holds, SceneParse};
use crate::plantree::{Action, ActionVerb, Branch};
use crate::world::{Fraction, GoalSpec, Gripper, JointTarget, ObjectId, Placement, Predicate};

pub const DEFAULT_MAX_BRANCHES: usize = 12;

/// Expands one goal conjunct into its concrete alternatives; each alternative
/// is a list of object-level predicates.
fn alternatives(p: &Predicate, parse: &SceneParse) -> Vec<Vec<Predicate>> {
    let pairs = |a: &str, b: &str, mk: fn(String, String) -> Predicate| {
        let mut out = Vec::new();
        for x in parse.resolve(a) {
            for y in parse.resolve(b) {
                out.push(vec![mk(x.to_string(), y.to_string())]);
            }
        }
        out
    };
    match p {
        Predicate::In(o, c) => pairs(o, c, Predicate::In),
        Predicate::On(o, s) => pairs(o, s, Predicate::On),
        Predicate::JointAt(a, t) => parse
            .resolve(a)
            .into_iter()
            .map(|x| vec![Predicate::JointAt(x.to_string(), *t)])
            .collect(),
        Predicate::Holding(o) => parse
            .resolve(o)
            .into_iter()
            .map(|x| vec![Predicate::Holding(x.to_string())])
            .collect(),
        Predicate::AnyOf(ds) => ds.iter().flat_map(|d| product(d, parse)).collect(),
    }
}

/// Cartesian product over conjuncts, the first conjunct varying slowest.
fn product(conjuncts: &[Predicate], parse: &SceneParse) -> Vec<Vec<Predicate>> {
    let mut acc: Vec<Vec<Predicate>> = vec![Vec::new()];
    for c in conjuncts {
        let alts = alternatives(c, parse);
        let mut next = Vec::with_capacity(acc.len() * alts.len());
        for prefix in &acc {
            for alt in &alts {
                let mut v = prefix.clone();
                v.extend(alt.iter().cloned());
                next.push(v);
            }
        }
        acc = next;
    }
    acc
}

struct Symbolic<'a> {
    parse: &'a SceneParse,
    placements: BTreeMap<ObjectId, Placement>,
    joints: BTreeMap<ObjectId, Fraction>,
    gripper: Gripper,
    actions: Vec<Action>,
}

impl Symbolic<'_> {
    fn holds(&self, p: &Predicate) -> bool {
        holds(p, &self.placements, &self.joints, &self.gripper, self.parse)
    }

    fn grasp(&mut self, obj: &ObjectId) {
        if self.gripper == Gripper::Holding(obj.clone()) {
            return;
        }
        self.actions.push(Action::pick_up(obj.clone(), None));
        self.gripper = Gripper::Holding(obj.clone());
    }

    fn open_if_needed(&mut self, obj: &ObjectId) {
        if self.parse.is_articulated(obj) && !self.joints.get(obj).is_some_and(|f| f.is_open()) {
            self.actions.push(Action::open(obj.clone()));
            self.joints.insert(obj.clone(), Fraction::OPEN);
        }
    }

    fn compile(&mut self, p: &Predicate) -> bool {
        if self.holds(p) {
            return true;
        }
        match p {
            Predicate::In(o, c) => {
                let (o, c) = (ObjectId::from(o.as_str()), ObjectId::from(c.as_str()));
                self.open_if_needed(&c);
                self.grasp(&o);
                self.actions.push(Action::put_into(c.clone()));
                self.placements.insert(o, Placement::Inside { container: c });
                self.gripper = Gripper::Empty;
            }
            Predicate::On(o, s) => {
                let (o, s) = (ObjectId::from(o.as_str()), ObjectId::from(s.as_str()));
                let Some(region) = self.parse.workspace_region(&s).cloned() else {
                    return false;
                };
                self.grasp(&o);
                self.actions.push(Action::put_on(s.clone(), region.clone()));
                self.placements.insert(
                    o,
                    Placement::OnSurface {
                        surface: s,
                        region,
                        slot: 0,
                    },
                );
                self.gripper = Gripper::Empty;
            }
            Predicate::JointAt(a, t) => {
                let a = ObjectId::from(a.as_str());
                let (action, f) = match t {
                    JointTarget::Open => (Action::open(a.clone()), Fraction::OPEN),
                    JointTarget::Closed => (Action::close(a.clone()), Fraction::CLOSED),
                };
                self.actions.push(action);
                self.joints.insert(a, f);
            }
            Predicate::Holding(o) => self.grasp(&ObjectId::from(o.as_str())),
            Predicate::AnyOf(_) => unreachable!("disjunctions are expanded before compiling"),
        }
        true
    }
}

/// Gives every grasp of a multi-pose object each declared pose in turn.
fn expand_poses(parse: &SceneParse, actions: &[Action]) -> Vec<Vec<Action>> {
    let mut out: Vec<Vec<Action>> = vec![Vec::new()];
    for a in actions {
        let poses = parse.poses_of(a.target());
        if a.verb() == ActionVerb::PickUp && poses.len() > 1 {
            let mut next = Vec::new();
            for prefix in &out {
                for pose in poses {
                    let mut v = prefix.clone();
                    v.push(Action::pick_up(a.target().clone(), Some(pose.clone())));
                    next.push(v);
                }
            }
            out = next;
        } else {
            for v in &mut out {
                v.push(a.clone());
            }
        }
    }
    out
}

/// One straight-line branch per satisfying assignment of the goal to
/// concrete instances and grasp poses, in declaration order. Returns an
/// empty list when the goal already holds or cannot be instantiated.
pub fn priori_branches(parse: &SceneParse, goal: &GoalSpec, max_branches: usize) -> Vec<Branch> {
    let mut seen = BTreeSet::new();
    let mut branches = Vec::new();
    let mut truncated = false;
    for assignment in product(&goal.all, parse) {
        let mut sym = Symbolic {
            parse,
            placements: parse.placements.clone(),
            joints: parse.joints.clone(),
            gripper: parse.gripper.clone(),
            actions: Vec::new(),
        };
        if !assignment.iter().all(|p| sym.compile(p)) {
            continue;
        }
        if sym.actions.is_empty() {
            return Vec::new();
        }
        for seq in expand_poses(parse, &sym.actions) {
            if !seen.insert(seq.clone()) {
                continue;
            }
            if branches.len() == max_branches {
                truncated = true;
                break;
            }
            if let Ok(b) = Branch::new(seq) {
                branches.push(b);
            }
        }
    }
    if truncated {
        warn!("priori enumeration truncated to {max_branches} branches");
    }
    branches
}
