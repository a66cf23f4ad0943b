//! The eight scenario documents shipped with the crate.

use crate::world::{load_scenario, Scenario, ScenarioError};

pub const NAMES: [&str; 8] = [
    "task1",
    "task2",
    "task3",
    "task4",
    "task5",
    "task6",
    "task7",
    "disturbance",
];

pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "task1" => include_str!("../scenarios/task1.scn"),
        "task2" => include_str!("../scenarios/task2.scn"),
        "task3" => include_str!("../scenarios/task3.scn"),
        "task4" => include_str!("../scenarios/task4.scn"),
        "task5" => include_str!("../scenarios/task5.scn"),
        "task6" => include_str!("../scenarios/task6.scn"),
        "task7" => include_str!("../scenarios/task7.scn"),
        "disturbance" => include_str!("../scenarios/disturbance.scn"),
        _ => return None,
    })
}

pub fn load(name: &str) -> Result<Scenario, ScenarioError> {
    let text = source(name).ok_or_else(|| ScenarioError::Parse(format!("no bundled scenario {name:?}")))?;
    load_scenario(text)
}

pub fn all() -> Vec<Scenario> {
    NAMES
        .iter()
        .map(|n| load(n).expect("bundled scenarios are valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{goal_satisfied, Placement};

    #[test]
    fn every_bundled_scenario_loads() {
        for s in all() {
            s.initial.check_invariants().unwrap();
            assert!(!goal_satisfied(&s.initial, &s.goal), "{}", s.name());
        }
    }

    #[test]
    fn task1_ball_in_swept_region() {
        let s = load("task1").unwrap();
        assert!(s.initial.joint("microwave").unwrap().is_closed());
        assert!(matches!(s.initial.placement("ball"),
            Some(Placement::OnSurface { region, .. }) if region.as_str() == "desk-front"));
    }

    #[test]
    fn task7_drawer_ajar_ball_in_aperture() {
        let s = load("task7").unwrap();
        let f = s.initial.joint("drawer").unwrap();
        assert!(!f.is_open() && !f.is_closed());
        assert!(matches!(s.initial.placement("ball"),
            Some(Placement::OnSurface { region, .. }) if region.as_str() == "desk-front"));
    }
}
