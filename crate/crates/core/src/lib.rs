//! Planning-tree search over a rule-based tabletop world model.
//!
//! Candidate action sequences are merged into a prefix tree, rolled out node
//! by node against snapshots of the world, judged, and repaired on failure.

pub mod adapter;
pub mod bench;
pub mod branching;
pub mod bundled;
pub mod closedloop;
pub mod judge;
pub mod mode;
pub mod plantree;
pub mod search;
pub mod skills;
pub mod trace;
pub mod world;

pub use branching::{Brancher, BuiltinBrancher, SceneParse};
pub use closedloop::{run_closed_loop, ExecutionReport, RunConfig};
pub use judge::{BuiltinJudge, EvalResult, FailureCause, FailureDiagnosis, Judge};
pub use mode::Mode;
pub use plantree::{Action, ActionVerb, Branch, NodeId, Plan, PlanningTree};
pub use search::{plan, SearchConfig, SearchOutcome, SearchReport};
pub use world::{load_scenario, Observation, Scenario, WorldState};
