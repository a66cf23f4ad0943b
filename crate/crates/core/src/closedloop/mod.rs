//! Closed-loop execution against a deterministic stand-in for the real
//! world, with scheduled disturbances and replanning from the observed state.

mod oracle;

pub use oracle::{
    instantiable_actions, is_feasible, oracle_feasible_plans, OracleError, OracleResult, DEFAULT_STATE_BUDGET,
};

use serde::Serialize;

use crate::branching::Brancher;
use crate::judge::{precondition_failure, EvalResult, Judge};
use crate::plantree::Action;
use crate::search::{plan_from, SearchConfig, SearchError, SearchOutcome};
use crate::skills;
use crate::trace::{Trace, TraceEvent};
use crate::world::{goal_satisfied, Effect, EffectKind, Refusal, Scenario, StepOutcome, Trigger, WorldState};

pub const DEFAULT_MAX_REPLANS: usize = 3;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub search: SearchConfig,
    /// Replans allowed before giving up; the mode may lower this to zero.
    pub max_replans: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            search: SearchConfig::default(),
            max_replans: DEFAULT_MAX_REPLANS,
        }
    }
}

/// The "real" world: same skill rules, plus scripted disturbances and
/// optional divergence from simulation.
#[derive(Debug, Clone)]
pub struct RealWorldStub {
    state: WorldState,
    scenario: Scenario,
    fired: Vec<bool>,
    divergence_left: Vec<usize>,
    steps: usize,
}

impl RealWorldStub {
    pub fn new(scenario: &Scenario) -> Self {
        RealWorldStub {
            state: scenario.initial.clone(),
            fired: vec![false; scenario.meta.disturbances.len()],
            divergence_left: scenario.meta.divergence.iter().map(|d| d.times).collect(),
            scenario: scenario.clone(),
            steps: 0,
        }
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    fn fire(&mut self, matches: impl Fn(&Trigger) -> bool) -> Vec<Effect> {
        let mut effects = Vec::new();
        for (i, d) in self.scenario.meta.disturbances.iter().enumerate() {
            if self.fired[i] || !matches(&d.trigger) {
                continue;
            }
            self.fired[i] = true;
            for edit in &d.edits {
                effects.extend(edit.apply(&mut self.state));
            }
        }
        effects
    }

    /// Disturbances scheduled before the next step.
    pub fn before_step(&mut self) -> Vec<Effect> {
        let k = self.steps;
        self.fire(|t| matches!(t, Trigger::AfterStep(s) if *s == k))
    }

    /// Executes one action; `Err` carries a precondition violation.
    pub fn execute(&mut self, action: &Action) -> Result<StepOutcome, skills::SkillError> {
        self.steps += 1;
        let diverged = self
            .scenario
            .meta
            .divergence
            .iter()
            .position(|d| d.action == *action)
            .filter(|i| self.divergence_left[*i] > 0);
        let outcome = match diverged {
            Some(i) => {
                self.divergence_left[i] -= 1;
                let mut next = self.state.clone();
                let mut effects: Vec<Effect> = self.scenario.meta.divergence[i]
                    .edits
                    .iter()
                    .filter_map(|e| e.apply(&mut next))
                    .collect();
                effects.push(Effect {
                    object: action.target().clone(),
                    kind: EffectKind::Refused {
                        reason: Refusal::Diverged,
                    },
                    irreversible: false,
                });
                StepOutcome {
                    state: next,
                    effects,
                    primitive_ok: false,
                }
            }
            None => skills::apply(&self.state, action)?,
        };
        self.state = outcome.state.clone();
        Ok(outcome)
    }

    /// Disturbances triggered by the action that just ran.
    pub fn after_action(&mut self, action: &Action) -> Vec<Effect> {
        self.fire(|t| matches!(t, Trigger::AfterAction(a) if a == action))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub replan: usize,
    pub action: String,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    pub effects: Vec<Effect>,
    pub disturbances: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSummary {
    pub replan: usize,
    #[serde(flatten)]
    pub outcome: SearchOutcome,
    pub nodes_expanded: usize,
    pub rollouts: usize,
    pub reflections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionReport {
    pub scenario: String,
    pub success: bool,
    pub replans: usize,
    pub steps: Vec<StepRecord>,
    pub searches: Vec<SearchSummary>,
    pub final_goal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl ExecutionReport {
    pub fn total_nodes(&self) -> usize {
        self.searches.iter().map(|s| s.nodes_expanded).sum()
    }

    pub fn total_rollouts(&self) -> usize {
        self.searches.iter().map(|s| s.rollouts).sum()
    }
}

/// Plans, executes on the stub, and replans from the stub's state after each
/// real failure, up to the configured number of replans.
pub fn run_closed_loop(
    scenario: &Scenario,
    judge: &dyn Judge,
    brancher: &dyn Brancher,
    cfg: &RunConfig,
    trace: &mut Trace,
) -> Result<ExecutionReport, SearchError> {
    let max_replans = cfg.search.mode.max_replans(cfg.max_replans);
    let mut stub = RealWorldStub::new(scenario);
    let mut steps = Vec::new();
    let mut searches = Vec::new();
    let mut replan = 0;
    let failure = 'outer: loop {
        let report = plan_from(
            stub.state(),
            &scenario.goal,
            &scenario.meta,
            judge,
            brancher,
            &cfg.search,
            trace,
        )?;
        searches.push(SearchSummary {
            replan,
            outcome: report.outcome.clone(),
            nodes_expanded: report.nodes_expanded,
            rollouts: report.rollouts,
            reflections: report.reflections,
        });
        let plan = match report.outcome {
            SearchOutcome::Plan { plan } => plan,
            SearchOutcome::PlanningFailed { reason } => break Some(format!("planning failed: {reason}")),
        };

        let mut failed = None;
        for action in plan.actions() {
            let step = steps.len();
            let mut disturbances = stub.before_step();
            if !disturbances.is_empty() {
                trace.push(TraceEvent::Disturbance {
                    step,
                    effects: disturbances.clone(),
                });
            }
            let pre = stub.state().clone();
            let (effects, verdict) = match stub.execute(action) {
                Ok(outcome) => {
                    let v = judge.evaluate(&pre, &outcome, action)?;
                    (outcome.effects, v)
                }
                Err(e) => (Vec::new(), EvalResult::Failure(precondition_failure(action, &e))),
            };
            let after = stub.after_action(action);
            if !after.is_empty() {
                trace.push(TraceEvent::Disturbance {
                    step,
                    effects: after.clone(),
                });
            }
            disturbances.extend(after);
            let cause = match &verdict {
                EvalResult::Success => None,
                EvalResult::Failure(d) => Some(d.cause.to_string()),
            };
            trace.push(TraceEvent::Execute {
                step,
                replan,
                action: action.to_string(),
                success: cause.is_none(),
                effects: effects.clone(),
            });
            steps.push(StepRecord {
                step,
                replan,
                action: action.to_string(),
                success: cause.is_none(),
                cause: cause.clone(),
                effects,
                disturbances,
            });
            if let Some(c) = cause {
                failed = Some(format!("{action} failed: {c}"));
                break;
            }
        }

        let reason = match failed {
            Some(r) => r,
            None if goal_satisfied(stub.state(), &scenario.goal) => break None,
            None => "plan completed but the goal does not hold".to_string(),
        };
        if replan >= max_replans {
            break 'outer Some(if max_replans == 0 {
                reason
            } else {
                format!("{reason}; replans exhausted")
            });
        }
        replan += 1;
        trace.push(TraceEvent::Replan {
            replan,
            reason: reason.clone(),
        });
    };

    let final_goal = goal_satisfied(stub.state(), &scenario.goal);
    Ok(ExecutionReport {
        scenario: scenario.name().to_string(),
        success: final_goal,
        replans: replan,
        steps,
        searches,
        final_goal,
        failure: if final_goal { None } else { failure },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::BuiltinBrancher;
    use crate::bundled;
    use crate::judge::BuiltinJudge;
    use crate::mode::Mode;

    fn run(name: &str, mode: Mode) -> ExecutionReport {
        let s = bundled::load(name).unwrap();
        let cfg = RunConfig {
            search: SearchConfig {
                mode,
                ..SearchConfig::default()
            },
            ..RunConfig::default()
        };
        run_closed_loop(
            &s,
            &BuiltinJudge,
            &BuiltinBrancher::default(),
            &cfg,
            &mut Trace::default(),
        )
        .unwrap()
    }

    #[test]
    fn disturbance_is_recovered_by_replanning() {
        let r = run("disturbance", Mode::Full);
        assert!(r.success, "{r:?}");
        assert_eq!(r.replans, 1);
        assert_eq!(r.steps.last().unwrap().action, "[PICK UP, ball_b]");
    }

    #[test]
    fn disturbance_fails_without_replanning() {
        let r = run("disturbance", Mode::NoReplan);
        assert!(!r.success);
        assert_eq!(r.replans, 0);
        assert_eq!(r.steps.len(), 1);
    }

    #[test]
    fn undisturbed_run_replays_the_plan() {
        let s = bundled::load("task2").unwrap();
        let r = run("task2", Mode::Full);
        assert!(r.success);
        assert_eq!(r.replans, 0);
        let planned = r.searches[0].outcome.plan().unwrap();
        let executed: Vec<&str> = r.steps.iter().map(|s| s.action.as_str()).collect();
        let expected: Vec<String> = planned.actions().iter().map(ToString::to_string).collect();
        assert_eq!(executed, expected);
        assert!(is_feasible(&s, planned));
    }

    #[test]
    fn divergence_forces_a_replan() {
        let text = bundled::source("task2").unwrap().to_string()
            + "\n[[divergence]]\naction = \"[PUT INTO, holder2]\"\nedits = [{ object = \"pen\", to = { on = \"desk-side\" } }]\n";
        let s = crate::world::load_scenario(&text).unwrap();
        let r = run_closed_loop(
            &s,
            &BuiltinJudge,
            &BuiltinBrancher::default(),
            &RunConfig::default(),
            &mut Trace::default(),
        )
        .unwrap();
        assert!(r.success, "{r:?}");
        assert_eq!(r.replans, 1);
    }

    #[test]
    fn reports_are_reproducible() {
        let a = serde_json::to_string(&run("disturbance", Mode::Full)).unwrap();
        let b = serde_json::to_string(&run("disturbance", Mode::Full)).unwrap();
        assert_eq!(a, b);
    }
}
