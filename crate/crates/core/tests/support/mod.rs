//! Shared generators and property checks for the property and acceptance
//! test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use wmtree_core::bundled;
use wmtree_core::closedloop::instantiable_actions;
use wmtree_core::plantree::{Action, Branch, PlanningTree};
use wmtree_core::skills;
use wmtree_core::world::{EffectKind, Placement, SnapshotId, SnapshotStore, WorldState};
use wmtree_core::Scenario;

pub fn scenarios() -> Vec<Scenario> {
    bundled::all()
}

/// Small action alphabet so random branch sets share prefixes often.
fn alphabet() -> Vec<Action> {
    vec![
        Action::pick_up("ball", None),
        Action::pick_up("apple", None),
        Action::put_into("holder"),
        Action::put_on("desk", "desk-safe"),
        Action::open("drawer"),
        Action::close("drawer"),
    ]
}

pub fn branch_sets() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0..6usize, 1..6), 1..12)
}

/// Builds a tree from index-encoded branches and compares it with a
/// reference trie of prefixes; then re-merges everything and checks that
/// nothing changes.
pub fn check_trie(sets: &[Vec<usize>]) -> Result<(), String> {
    let alpha = alphabet();
    let branches: Vec<Branch> = sets
        .iter()
        .map(|b| Branch::new(b.iter().map(|i| alpha[*i].clone()).collect()).unwrap())
        .collect();
    let mut tree = PlanningTree::new(SnapshotId::from_raw(0));
    for b in &branches {
        tree.merge_branch(b).map_err(|e| e.to_string())?;
        tree.check_invariants()?;
    }

    let mut prefixes: BTreeSet<Vec<String>> = BTreeSet::new();
    for b in &branches {
        let names: Vec<String> = b.actions().iter().map(ToString::to_string).collect();
        for k in 1..=names.len() {
            prefixes.insert(names[..k].to_vec());
        }
    }
    if tree.len() != prefixes.len() {
        return Err(format!("{} nodes, {} distinct prefixes", tree.len(), prefixes.len()));
    }
    // Every root-to-leaf path of the tree is a maximal prefix, and vice versa.
    let leaves: BTreeSet<Vec<String>> = tree
        .all_branches()
        .iter()
        .map(|b| b.actions().iter().map(ToString::to_string).collect())
        .collect();
    let maximal: BTreeSet<Vec<String>> = prefixes
        .iter()
        .filter(|p| !prefixes.iter().any(|q| q.len() > p.len() && q.starts_with(p)))
        .cloned()
        .collect();
    if leaves != maximal {
        return Err(format!("leaves {leaves:?} != maximal prefixes {maximal:?}"));
    }

    let shape = tree.shape();
    for b in &branches {
        let r = tree.merge_branch(b).map_err(|e| e.to_string())?;
        if r.new_head.is_some() || r.merged.len() != b.len() {
            return Err(format!("re-merge of {b} created nodes"));
        }
    }
    if tree.shape() != shape {
        return Err("re-merge changed the tree".into());
    }
    tree.check_invariants()
}

/// Scenario index plus a stream of choices used to drive a random walk.
pub fn walks(len: usize) -> impl Strategy<Value = (usize, Vec<usize>)> {
    (0..bundled::NAMES.len(), prop::collection::vec(any::<usize>(), len))
}

/// Advances `state` by choosing among instantiable actions; skill errors
/// leave the state as is.
fn step(state: &WorldState, choice: usize) -> (Action, Option<WorldState>) {
    let actions = instantiable_actions(state);
    let a = actions[choice % actions.len()].clone();
    let next = skills::apply(state, &a).ok().map(|o| o.state);
    (a, next)
}

pub fn walk(scenario: &Scenario, choices: &[usize]) -> Vec<WorldState> {
    let mut states = vec![scenario.initial.clone()];
    for c in choices {
        let cur = states.last().unwrap();
        let (_, next) = step(cur, *c);
        states.push(next.unwrap_or_else(|| cur.clone()));
    }
    states
}

/// Snapshots every state along a walk, then mutates further and checks
/// that each restored snapshot equals what was captured.
pub fn check_snapshots(scenario: &Scenario, choices: &[usize]) -> Result<(), String> {
    let states = walk(scenario, choices);
    let mut store = SnapshotStore::new();
    let ids: Vec<SnapshotId> = states.iter().map(|s| store.snapshot(s)).collect();
    let mut live = states.last().unwrap().clone();
    for c in choices.iter().rev() {
        if let (_, Some(next)) = step(&live, *c) {
            live = next;
        }
    }
    for (id, expected) in ids.iter().zip(&states) {
        let restored = store.restore(*id).map_err(|e| e.to_string())?;
        if &restored != expected {
            return Err(format!("snapshot {id} did not round-trip"));
        }
        restored.check_invariants()?;
        // Advancing a restored copy must not leak into the store.
        let mut copy = store.restore(*id).map_err(|e| e.to_string())?;
        if let (_, Some(next)) = step(&copy, 1) {
            copy = next;
        }
        let again = store.restore(*id).map_err(|e| e.to_string())?;
        if &again != expected {
            return Err(format!("snapshot {id} changed after a restored copy moved to {copy:?}"));
        }
    }
    Ok(())
}

/// Every placement and joint difference between pre and post is reported
/// by exactly one effect with matching endpoints, and nothing else changes.
pub fn check_effects(scenario: &Scenario, choices: &[usize], pick: usize) -> Result<(), String> {
    let pre = walk(scenario, choices).pop().unwrap();
    let actions = instantiable_actions(&pre);
    let action = &actions[pick % actions.len()];
    let Ok(outcome) = skills::apply(&pre, action) else {
        return Ok(());
    };
    let post = &outcome.state;
    post.check_invariants()?;

    let mut moved: BTreeMap<String, (Placement, Placement)> = BTreeMap::new();
    let mut joints = BTreeMap::new();
    for e in &outcome.effects {
        if let Some((from, to)) = e.kind.relocation() {
            if moved.insert(e.object.to_string(), (from.clone(), to.clone())).is_some() {
                return Err(format!("{action}: {} relocated twice", e.object));
            }
            if e.irreversible == post.placement_in_workspace(to) {
                return Err(format!("{action}: irreversible flag wrong on {e}"));
            }
        }
        if let EffectKind::JointChanged { from, to } = &e.kind {
            joints.insert(e.object.to_string(), (*from, *to));
        }
    }
    for (id, before) in pre.placements() {
        let after = post.placement(id.as_str()).cloned().unwrap();
        match moved.get(id.as_str()) {
            Some((from, to)) if from == before && *to == after => {}
            Some(m) => return Err(format!("{action}: {id} effect {m:?} vs {before} -> {after}")),
            None if *before != after => return Err(format!("{action}: {id} moved silently")),
            None => {}
        }
    }
    for (id, before) in pre.joints() {
        let after = post.joint(id.as_str()).unwrap();
        match joints.get(id.as_str()) {
            Some((from, to)) if from == before && *to == after && from != to => {}
            Some(j) => return Err(format!("{action}: {id} joint effect {j:?} vs {before} -> {after}")),
            None if *before != after => return Err(format!("{action}: {id} joint changed silently")),
            None => {}
        }
    }
    if pre.placements().len() != post.placements().len() {
        return Err(format!("{action}: object set changed"));
    }
    Ok(())
}

/// Objects knocked off the table never come back.
pub fn check_monotone(scenario: &Scenario, choices: &[usize]) -> Result<(), String> {
    let states = walk(scenario, choices);
    let mut gone: BTreeSet<String> = BTreeSet::new();
    for (k, s) in states.iter().enumerate() {
        for id in &gone {
            if s.placement(id) != Some(&Placement::OffTable) {
                return Err(format!("{id} returned from off_table at step {k}"));
            }
        }
        for (id, p) in s.placements() {
            if *p == Placement::OffTable {
                gone.insert(id.to_string());
            }
        }
    }
    Ok(())
}
