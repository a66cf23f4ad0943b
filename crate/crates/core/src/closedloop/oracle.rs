//! Brute-force feasibility oracle: breadth-first search over canonical world
//! states, independent of the planning tree.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::plantree::{Action, Plan};
use crate::skills;
use crate::world::{goal_satisfied, Gripper, Placement, Scenario, WorldState};

pub const DEFAULT_STATE_BUDGET: usize = 1_000_000;
const MAX_ORACLE_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("state budget of {0} exceeded")]
    BudgetExceeded(usize),
    #[error("max_len {0} is above the supported limit of {MAX_ORACLE_LEN}")]
    TooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleResult {
    /// Length of the shortest feasible plan, if one exists within max_len.
    pub min_len: Option<usize>,
    /// Every feasible plan of that length, sorted.
    pub plans: Vec<Plan>,
    pub states_explored: usize,
}

impl OracleResult {
    pub fn contains(&self, plan: &Plan) -> bool {
        self.plans.binary_search(plan).is_ok()
    }
}

/// Every action whose preconditions could hold in `state`.
pub fn instantiable_actions(state: &WorldState) -> Vec<Action> {
    let scene = state.scene();
    let mut out = Vec::new();
    match state.gripper() {
        Gripper::Empty => {
            for o in scene.objects() {
                if let Some(item) = &o.item {
                    if state.placement(o.id.as_str()) == Some(&Placement::OffTable) {
                        continue;
                    }
                    if item.poses.len() > 1 {
                        for p in &item.poses {
                            out.push(Action::pick_up(o.id.clone(), Some(p.clone())));
                        }
                    } else {
                        out.push(Action::pick_up(o.id.clone(), None));
                    }
                }
            }
            for o in scene.objects().filter(|o| o.articulated.is_some()) {
                out.push(Action::open(o.id.clone()));
                out.push(Action::close(o.id.clone()));
            }
        }
        Gripper::Holding(held) => {
            for r in scene.regions() {
                if r.surface != *held {
                    out.push(Action::put_on(r.surface.clone(), r.id.clone()));
                }
            }
            for o in scene.objects() {
                if o.container().is_some() && o.id != *held {
                    out.push(Action::put_into(o.id.clone()));
                }
            }
        }
    }
    out
}

/// A step is admissible when it runs and causes nothing irreversible.
fn admissible_step(state: &WorldState, action: &Action) -> Option<WorldState> {
    let outcome = skills::apply(state, action).ok()?;
    if outcome.effects.iter().any(|e| e.irreversible) {
        return None;
    }
    Some(outcome.state)
}

/// Replays `plan` from the scenario's initial state.
pub fn is_feasible(scenario: &Scenario, plan: &Plan) -> bool {
    let mut state = scenario.initial.clone();
    for a in plan.actions() {
        match admissible_step(&state, a) {
            Some(next) => state = next,
            None => return false,
        }
    }
    goal_satisfied(&state, &scenario.goal)
}

/// All minimal-length feasible plans of length at most `max_len`.
pub fn oracle_feasible_plans(scenario: &Scenario, max_len: usize, budget: usize) -> Result<OracleResult, OracleError> {
    if max_len > MAX_ORACLE_LEN {
        return Err(OracleError::TooLong(max_len));
    }
    let mut index: HashMap<WorldState, usize> = HashMap::new();
    let mut states: Vec<WorldState> = Vec::new();
    // parents[i] lists (predecessor, action) edges from the previous layer.
    let mut parents: Vec<Vec<(usize, Action)>> = Vec::new();
    let mut depth: Vec<usize> = Vec::new();

    index.insert(scenario.initial.clone(), 0);
    states.push(scenario.initial.clone());
    parents.push(Vec::new());
    depth.push(0);
    let mut layer = vec![0usize];
    let mut d = 0;

    loop {
        let goals: Vec<usize> = layer
            .iter()
            .copied()
            .filter(|i| goal_satisfied(&states[*i], &scenario.goal))
            .collect();
        if !goals.is_empty() {
            let mut plans = Vec::new();
            for g in goals {
                collect_paths(g, &parents, &mut Vec::new(), &mut plans);
            }
            plans.sort();
            plans.dedup();
            return Ok(OracleResult {
                min_len: Some(d),
                plans,
                states_explored: states.len(),
            });
        }
        if d == max_len || layer.is_empty() {
            return Ok(OracleResult {
                min_len: None,
                plans: Vec::new(),
                states_explored: states.len(),
            });
        }
        let mut next_layer = Vec::new();
        for &i in &layer {
            for action in instantiable_actions(&states[i]) {
                let Some(next) = admissible_step(&states[i], &action) else {
                    continue;
                };
                match index.get(&next) {
                    Some(&j) if depth[j] == d + 1 => parents[j].push((i, action)),
                    Some(_) => {}
                    None => {
                        if states.len() >= budget {
                            return Err(OracleError::BudgetExceeded(budget));
                        }
                        let j = states.len();
                        index.insert(next.clone(), j);
                        states.push(next);
                        parents.push(vec![(i, action)]);
                        depth.push(d + 1);
                        next_layer.push(j);
                    }
                }
            }
        }
        layer = next_layer;
        d += 1;
    }
}

fn collect_paths(node: usize, parents: &[Vec<(usize, Action)>], suffix: &mut Vec<Action>, out: &mut Vec<Plan>) {
    if parents[node].is_empty() {
        out.push(Plan(suffix.iter().rev().cloned().collect()));
        return;
    }
    for (p, a) in &parents[node] {
        suffix.push(a.clone());
        collect_paths(*p, parents, suffix, out);
        suffix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn plan(text: &str) -> Plan {
        Plan(text.split(" ; ").map(|a| a.parse().unwrap()).collect())
    }

    #[test]
    fn task4_minimal_plan_relocates_the_toy() {
        let s = bundled::load("task4").unwrap();
        let r = oracle_feasible_plans(&s, 3, DEFAULT_STATE_BUDGET).unwrap();
        assert_eq!(r.min_len, Some(3));
        assert!(r.contains(&plan(
            "[PICK UP, toy] ; [PUT ON, drawer]@drawer-top-safe ; [CLOSE, drawer]"
        )));
    }

    #[test]
    fn direct_actions_are_infeasible() {
        for name in ["task1", "task4"] {
            let s = bundled::load(name).unwrap();
            let r = oracle_feasible_plans(&s, 1, DEFAULT_STATE_BUDGET).unwrap();
            assert!(r.plans.is_empty(), "{name}");
        }
    }

    #[test]
    fn zero_length_only_when_goal_holds() {
        let s = bundled::load("task2").unwrap();
        assert!(oracle_feasible_plans(&s, 0, DEFAULT_STATE_BUDGET)
            .unwrap()
            .plans
            .is_empty());
        let mut done = s.clone();
        done.goal.all.clear();
        let r = oracle_feasible_plans(&done, 0, DEFAULT_STATE_BUDGET).unwrap();
        assert_eq!(r.plans, vec![Plan(Vec::new())]);
    }

    #[test]
    fn budget_is_enforced() {
        let s = bundled::load("task7").unwrap();
        assert_eq!(oracle_feasible_plans(&s, 8, 10), Err(OracleError::BudgetExceeded(10)));
    }

    #[test]
    fn feasibility_replay() {
        let s = bundled::load("task1").unwrap();
        assert!(!is_feasible(&s, &plan("[OPEN, microwave]")));
        assert!(is_feasible(
            &s,
            &plan("[PICK UP, ball] ; [PUT ON, desk]@desk-safe ; [OPEN, microwave]")
        ));
    }
}
