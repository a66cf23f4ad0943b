//! Breadth-first search over the planning tree.
//!
//! Each popped node is rolled out from its parent's post-action snapshot,
//! judged, and either expanded (its children are queued) or pruned, in which
//! case every branch through it is handed to the reflective brancher and the
//! revisions are merged back into the tree. In parallel mode the whole queue
//! is drained into one batch whose rollouts run on scoped threads; results
//! are applied in queue order so both modes walk the same tree.

use std::collections::{HashMap, HashSet, VecDeque};
use std::panic::{self, AssertUnwindSafe};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::Serialize;
use thiserror::Error;

use crate::branching::{BranchError, Brancher, ReflectRequest, SceneParse};
use crate::judge::{precondition_failure, EvalResult, FailureCause, Judge, JudgeError};
use crate::mode::Mode;
use crate::plantree::{
    render_sequence, Action, Branch, NodeId, NodeStatus, Plan, PlanningTree, TreeError, DEFAULT_MAX_BRANCH_LEN,
};
use crate::skills;
use crate::trace::{Trace, TraceEvent};
use crate::world::{
    goal_satisfied, GoalSpec, Scenario, ScenarioMeta, Snapshot, SnapshotId, SnapshotStore, StepOutcome, WorldState,
};

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub max_nodes: usize,
    pub max_reflections_per_signature: usize,
    pub parallel: bool,
    /// Artificial delay added to every rollout.
    pub rollout_latency: Option<Duration>,
    pub max_branch_len: usize,
    pub mode: Mode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_nodes: 200,
            max_reflections_per_signature: 1,
            parallel: false,
            rollout_latency: None,
            max_branch_len: DEFAULT_MAX_BRANCH_LEN,
            mode: Mode::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum SearchOutcome {
    Plan { plan: Plan },
    PlanningFailed { reason: String },
}

impl SearchOutcome {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            SearchOutcome::Plan { plan } => Some(plan),
            SearchOutcome::PlanningFailed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    #[serde(flatten)]
    pub outcome: SearchOutcome,
    pub nodes_expanded: usize,
    pub rollouts: usize,
    pub reflections: usize,
    #[serde(skip)]
    pub wall_time: Duration,
    pub tree_shape: Vec<String>,
}

impl SearchReport {
    pub fn to_json(&self, timing: bool) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if timing {
            v["wall_time_ms"] = serde_json::json!(self.wall_time.as_secs_f64() * 1000.0);
        }
        v
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Brancher(#[from] BranchError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("snapshot for node {0} is missing")]
    MissingSnapshot(NodeId),
}

/// Everything needed to roll out one node, detached from the tree.
struct RolloutJob {
    node: NodeId,
    action: Action,
    parent: Snapshot,
}

struct RolloutResult {
    outcome: Option<StepOutcome>,
    verdict: EvalResult,
}

fn rollout(job: &RolloutJob, judge: &dyn Judge, latency: Option<Duration>) -> Result<RolloutResult, JudgeError> {
    if let Some(d) = latency {
        thread::sleep(d);
    }
    let pre: &WorldState = &job.parent;
    match skills::apply(pre, &job.action) {
        Ok(outcome) => {
            let verdict = judge.evaluate(pre, &outcome, &job.action)?;
            Ok(RolloutResult {
                outcome: Some(outcome),
                verdict,
            })
        }
        Err(e) => Ok(RolloutResult {
            outcome: None,
            verdict: EvalResult::Failure(precondition_failure(&job.action, &e)),
        }),
    }
}

type Signature = (FailureCause, Action, Branch);

struct Search<'a> {
    goal: &'a GoalSpec,
    parse: SceneParse,
    judge: &'a dyn Judge,
    brancher: &'a dyn Brancher,
    cfg: &'a SearchConfig,
    store: SnapshotStore,
    tree: PlanningTree,
    queue: VecDeque<NodeId>,
    /// Popped but not yet applied (parallel batches); counts as queued.
    in_flight: HashSet<NodeId>,
    signatures: HashMap<Signature, usize>,
    nodes_expanded: usize,
    rollouts: usize,
    reflections: usize,
}

enum Applied {
    Continue,
    Found(Plan),
}

impl<'a> Search<'a> {
    fn queued(&self, id: NodeId) -> bool {
        self.in_flight.contains(&id) || self.queue.contains(&id)
    }

    fn job(&self, id: NodeId) -> Result<RolloutJob, SearchError> {
        let node = self.tree.node(id)?;
        let snap: SnapshotId = self.tree.parent_snapshot(id)?.ok_or(SearchError::MissingSnapshot(id))?;
        let parent = self.store.get(snap).map_err(|_| SearchError::MissingSnapshot(id))?;
        Ok(RolloutJob {
            node: id,
            action: node.action.clone(),
            parent,
        })
    }

    fn run_batch(&self, jobs: &[RolloutJob]) -> Vec<Result<RolloutResult, JudgeError>> {
        let latency = self.cfg.rollout_latency;
        let judge = self.judge;
        if !self.cfg.parallel || jobs.len() == 1 {
            return jobs.iter().map(|j| rollout(j, judge, latency)).collect();
        }
        let joined: Vec<thread::Result<Result<RolloutResult, JudgeError>>> = thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|j| s.spawn(move || rollout(j, judge, latency)))
                .collect();
            handles.into_iter().map(|h| h.join()).collect()
        });
        joined
            .into_iter()
            .zip(jobs)
            .map(|(r, j)| match r {
                Ok(r) => r,
                Err(_) => {
                    warn!("rollout worker for {} panicked; re-evaluating sequentially", j.node);
                    match panic::catch_unwind(AssertUnwindSafe(|| rollout(j, judge, None))) {
                        Ok(r) => r,
                        Err(_) => Err(JudgeError::Backend(format!("rollout of {} panicked", j.node))),
                    }
                }
            })
            .collect()
    }

    fn apply(&mut self, job: &RolloutJob, result: RolloutResult, trace: &mut Trace) -> Result<Applied, SearchError> {
        let id = job.node;
        self.in_flight.remove(&id);
        if !self.tree.contains(id) {
            trace.push(TraceEvent::Discard { node: id });
            return Ok(Applied::Continue);
        }
        self.nodes_expanded += 1;
        self.rollouts += 1;
        trace.push(TraceEvent::Pop {
            node: id,
            action: job.action.to_string(),
        });
        trace.push(TraceEvent::Rollout {
            node: id,
            primitive_ok: result.outcome.as_ref().is_some_and(|o| o.primitive_ok),
            effects: result.outcome.as_ref().map(|o| o.effects.clone()).unwrap_or_default(),
        });
        match result.verdict {
            EvalResult::Success => {
                trace.push(TraceEvent::Verdict {
                    node: id,
                    success: true,
                    diagnosis: None,
                });
                let outcome = result.outcome.expect("success implies an outcome");
                let snap = self.store.snapshot(&outcome.state);
                self.tree.set_status(id, NodeStatus::Succeeded, Some(snap))?;
                trace.extend_tree(self.tree.drain_events());
                let children = self.tree.node(id)?.children.clone();
                if children.is_empty() {
                    if goal_satisfied(&outcome.state, self.goal) {
                        return Ok(Applied::Found(self.tree.extract_path(id)?));
                    }
                    trace.push(TraceEvent::LeafGoalUnmet { node: id });
                    return Ok(Applied::Continue);
                }
                self.queue.extend(children.iter().copied());
                trace.push(TraceEvent::Push { nodes: children });
            }
            EvalResult::Failure(diag) => {
                trace.push(TraceEvent::Verdict {
                    node: id,
                    success: false,
                    diagnosis: Some(diag.clone()),
                });
                let failed_index = self.tree.depth(id)? - 1;
                self.tree.set_status(id, NodeStatus::Failed(diag.clone()), None)?;
                let paths = self.tree.extract_paths(id)?;
                let removed = self.tree.remove_subtree(id)?;
                self.queue.retain(|n| !removed.contains(n));
                trace.extend_tree(self.tree.drain_events());
                if !self.cfg.mode.reflective() {
                    return Ok(Applied::Continue);
                }
                for path in paths {
                    let failed = path.actions()[failed_index].clone();
                    let sig: Signature = (diag.cause.clone(), failed, path.clone());
                    let used = self.signatures.entry(sig).or_insert(0);
                    if *used >= self.cfg.max_reflections_per_signature {
                        trace.push(TraceEvent::ReflectionSkipped {
                            node: id,
                            original: path.to_string(),
                            reason: "signature already reflected".into(),
                        });
                        continue;
                    }
                    *used += 1;
                    let revised = self.brancher.reflect(&ReflectRequest {
                        diagnosis: &diag,
                        failed_index,
                        original: &path,
                        parse: &self.parse,
                    })?;
                    trace.push(TraceEvent::Reflection {
                        node: id,
                        original: path.to_string(),
                        revised: revised.as_ref().map(ToString::to_string),
                    });
                    let Some(b) = revised else { continue };
                    self.reflections += 1;
                    let merge = match self.tree.merge_branch(&b) {
                        Ok(m) => m,
                        Err(TreeError::BranchTooLong { len, max }) => {
                            debug!("revised branch of length {len} exceeds {max}");
                            continue;
                        }
                        Err(e) => return Err(e.into()),
                    };
                    trace.extend_tree(self.tree.drain_events());
                    if let Some(head) = merge.new_head {
                        if !merge.merged.iter().any(|m| self.queued(*m)) {
                            self.queue.push_back(head);
                            trace.push(TraceEvent::Push { nodes: vec![head] });
                        }
                    }
                }
            }
        }
        Ok(Applied::Continue)
    }
}

/// Plans for a scenario from its initial state.
pub fn plan(
    scenario: &Scenario,
    judge: &dyn Judge,
    brancher: &dyn Brancher,
    cfg: &SearchConfig,
    trace: &mut Trace,
) -> Result<SearchReport, SearchError> {
    plan_from(
        &scenario.initial,
        &scenario.goal,
        &scenario.meta,
        judge,
        brancher,
        cfg,
        trace,
    )
}

/// Plans from an arbitrary state; closed-loop replanning calls this with
/// the real state at the moment of failure.
pub fn plan_from(
    initial: &WorldState,
    goal: &GoalSpec,
    meta: &ScenarioMeta,
    judge: &dyn Judge,
    brancher: &dyn Brancher,
    cfg: &SearchConfig,
    trace: &mut Trace,
) -> Result<SearchReport, SearchError> {
    let started = Instant::now();
    let mut store = SnapshotStore::new();
    let root = store.snapshot(initial);
    let parse = SceneParse::of_state(initial, meta);
    let mut branches = brancher.priori(&parse, goal)?;
    if cfg.mode.single_branch() {
        branches.truncate(1);
    }
    trace.push(TraceEvent::Priori {
        branches: branches.iter().map(ToString::to_string).collect(),
    });

    let mut tree = PlanningTree::with_max_branch_len(root, cfg.max_branch_len);
    for b in &branches {
        if let Err(e) = tree.merge_branch(b) {
            warn!("skipping candidate branch {}: {e}", render_sequence(b.actions()));
        }
    }
    trace.extend_tree(tree.drain_events());

    let mut search = Search {
        goal,
        parse,
        judge,
        brancher,
        cfg,
        store,
        queue: tree.root_children().iter().copied().collect(),
        tree,
        in_flight: HashSet::new(),
        signatures: HashMap::new(),
        nodes_expanded: 0,
        rollouts: 0,
        reflections: 0,
    };
    let finish = |search: &Search, outcome: SearchOutcome, trace: &mut Trace| {
        let label = match &outcome {
            SearchOutcome::Plan { plan } => plan.to_string(),
            SearchOutcome::PlanningFailed { reason } => format!("planning failed: {reason}"),
        };
        trace.push(TraceEvent::SearchDone {
            outcome: label,
            nodes_expanded: search.nodes_expanded,
        });
        SearchReport {
            outcome,
            nodes_expanded: search.nodes_expanded,
            rollouts: search.rollouts,
            reflections: search.reflections,
            wall_time: started.elapsed(),
            tree_shape: search.tree.shape(),
        }
    };

    if branches.is_empty() {
        let outcome = if goal_satisfied(initial, goal) {
            SearchOutcome::Plan { plan: Plan(Vec::new()) }
        } else {
            SearchOutcome::PlanningFailed {
                reason: "no candidate branches".into(),
            }
        };
        return Ok(finish(&search, outcome, trace));
    }
    trace.push(TraceEvent::Push {
        nodes: search.queue.iter().copied().collect(),
    });

    loop {
        if search.queue.is_empty() {
            let reason = "search queue exhausted".to_string();
            return Ok(finish(&search, SearchOutcome::PlanningFailed { reason }, trace));
        }
        let budget = cfg.max_nodes.saturating_sub(search.nodes_expanded);
        if budget == 0 {
            let reason = format!("node budget of {} exhausted", cfg.max_nodes);
            return Ok(finish(&search, SearchOutcome::PlanningFailed { reason }, trace));
        }
        let take = if cfg.parallel {
            search.queue.len().min(budget)
        } else {
            1
        };
        let batch: Vec<NodeId> = search.queue.drain(..take).collect();
        let jobs = batch.iter().map(|id| search.job(*id)).collect::<Result<Vec<_>, _>>()?;
        search.in_flight.extend(batch.iter().copied());
        let results = search.run_batch(&jobs);
        for (job, result) in jobs.iter().zip(results) {
            if let Applied::Found(plan) = search.apply(job, result?, trace)? {
                return Ok(finish(&search, SearchOutcome::Plan { plan }, trace));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::BuiltinBrancher;
    use crate::bundled;
    use crate::judge::BuiltinJudge;

    fn run(name: &str, cfg: &SearchConfig) -> SearchReport {
        let s = bundled::load(name).unwrap();
        plan(
            &s,
            &BuiltinJudge,
            &BuiltinBrancher::default(),
            cfg,
            &mut Trace::default(),
        )
        .unwrap()
    }

    fn plan_text(r: &SearchReport) -> String {
        r.outcome
            .plan()
            .map(ToString::to_string)
            .unwrap_or_else(|| "failed".into())
    }

    #[test]
    fn task2_prefers_the_stable_holder() {
        let r = run("task2", &SearchConfig::default());
        assert_eq!(plan_text(&r), "[PICK UP, pen] ; [PUT INTO, holder2]");
        assert_eq!(r.reflections, 0);
    }

    #[test]
    fn task1_relocates_the_ball() {
        let r = run("task1", &SearchConfig::default());
        assert_eq!(
            plan_text(&r),
            "[PICK UP, ball] ; [PUT ON, desk]@desk-safe ; [OPEN, microwave]"
        );
        assert_eq!(r.reflections, 1);
    }

    #[test]
    fn no_reflective_fails_task6() {
        let cfg = SearchConfig {
            mode: Mode::NoReflective,
            ..SearchConfig::default()
        };
        assert!(run("task6", &cfg).outcome.plan().is_none());
    }

    #[test]
    fn node_budget_is_respected() {
        let cfg = SearchConfig {
            max_nodes: 2,
            ..SearchConfig::default()
        };
        let r = run("task7", &cfg);
        assert!(r.outcome.plan().is_none());
        assert_eq!(r.nodes_expanded, 2);
    }

    #[test]
    fn parallel_matches_sequential() {
        for name in bundled::NAMES {
            let seq = run(name, &SearchConfig::default());
            let par = run(
                name,
                &SearchConfig {
                    parallel: true,
                    ..SearchConfig::default()
                },
            );
            assert_eq!(seq.outcome, par.outcome, "{name}");
            assert_eq!(seq.tree_shape, par.tree_shape, "{name}");
        }
    }

    struct Panicky;

    impl Judge for Panicky {
        fn evaluate(&self, pre: &WorldState, outcome: &StepOutcome, action: &Action) -> Result<EvalResult, JudgeError> {
            if thread::current().name().is_none() && action.target().as_str() == "holder1" {
                panic!("worker crash");
            }
            BuiltinJudge.evaluate(pre, outcome, action)
        }
    }

    #[test]
    fn crashed_worker_is_reevaluated() {
        let s = bundled::load("task2").unwrap();
        let cfg = SearchConfig {
            parallel: true,
            ..SearchConfig::default()
        };
        let r = plan(&s, &Panicky, &BuiltinBrancher::default(), &cfg, &mut Trace::default()).unwrap();
        assert_eq!(plan_text(&r), "[PICK UP, pen] ; [PUT INTO, holder2]");
    }

    #[test]
    fn pruned_results_are_discarded() {
        // Hand-build a batch where the first node's failure removes the
        // second node before its result is applied.
        let s = bundled::load("task2").unwrap();
        let cfg = SearchConfig::default();
        let mut store = SnapshotStore::new();
        let root = store.snapshot(&s.initial);
        let mut tree = PlanningTree::new(root);
        let bad: Branch = Branch::new(vec![
            "[PUT INTO, holder1]".parse().unwrap(),
            "[PICK UP, pen]".parse().unwrap(),
        ])
        .unwrap();
        tree.merge_branch(&bad).unwrap();
        let first = tree.root_children()[0];
        let second = tree.node(first).unwrap().children[0];
        let mut search = Search {
            goal: &s.goal,
            parse: SceneParse::of_state(&s.initial, &s.meta),
            judge: &BuiltinJudge,
            brancher: &BuiltinBrancher::default(),
            cfg: &cfg,
            store,
            tree,
            queue: VecDeque::new(),
            in_flight: HashSet::new(),
            signatures: HashMap::new(),
            nodes_expanded: 0,
            rollouts: 0,
            reflections: 0,
        };
        let j1 = search.job(first).unwrap();
        let j2 = RolloutJob {
            node: second,
            action: "[PICK UP, pen]".parse().unwrap(),
            parent: search.store.get(root).unwrap(),
        };
        let results = search.run_batch(&[j1, j2]);
        let jobs = [
            search.job(first).unwrap(),
            RolloutJob {
                node: second,
                action: "[PICK UP, pen]".parse().unwrap(),
                parent: search.store.get(root).unwrap(),
            },
        ];
        let mut trace = Trace::default();
        for (job, r) in jobs.iter().zip(results) {
            search.apply(job, r.unwrap(), &mut trace).unwrap();
        }
        assert_eq!(search.nodes_expanded, 1);
        assert!(trace
            .records()
            .iter()
            .any(|r| r.event == TraceEvent::Discard { node: second }));
    }
}
