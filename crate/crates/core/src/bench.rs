//! Scenario x mode benchmark matrix.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::branching::Brancher;
use crate::closedloop::{run_closed_loop, RunConfig};
use crate::judge::Judge;
use crate::mode::Mode;
use crate::trace::Trace;
use crate::world::Scenario;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub scenario: String,
    pub mode: Mode,
    pub solved: bool,
    pub nodes: usize,
    pub rollouts: usize,
    pub replans: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn solved(&self, mode: Mode) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.mode == mode && r.solved)
            .map(|r| r.scenario.as_str())
            .collect()
    }

    pub fn total_time(&self) -> Duration {
        self.rows.iter().map(|r| r.wall_time).sum()
    }

    /// One JSON object per row.
    pub fn to_jsonl(&self, timing: bool) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let mut v = serde_json::to_value(r).expect("row serializes");
            if timing {
                v["wall_time_ms"] = serde_json::json!(r.wall_time.as_secs_f64() * 1000.0);
            }
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    /// Human-readable table.
    pub fn to_table(&self, timing: bool) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{:<12} {:<14} {:<7} {:>6} {:>9} {:>8}",
            "scenario", "mode", "solved", "nodes", "rollouts", "replans"
        );
        if timing {
            out.push_str("   time_ms");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{:<12} {:<14} {:<7} {:>6} {:>9} {:>8}",
                r.scenario,
                r.mode.as_str(),
                if r.solved { "yes" } else { "no" },
                r.nodes,
                r.rollouts,
                r.replans
            );
            if timing {
                let _ = write!(out, " {:>9.2}", r.wall_time.as_secs_f64() * 1000.0);
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every scenario under every mode through the closed loop. Errors in
/// one cell are recorded and the matrix continues.
pub fn run_bench(
    scenarios: &[Scenario],
    modes: &[Mode],
    judge: &dyn Judge,
    brancher: &dyn Brancher,
    base: &RunConfig,
) -> BenchReport {
    let mut rows = Vec::new();
    for s in scenarios {
        for &mode in modes {
            let mut cfg = base.clone();
            cfg.search.mode = mode;
            let started = Instant::now();
            let result = run_closed_loop(s, judge, brancher, &cfg, &mut Trace::default());
            let wall_time = started.elapsed();
            rows.push(match result {
                Ok(rep) => BenchRow {
                    scenario: s.name().to_string(),
                    mode,
                    solved: rep.success,
                    nodes: rep.total_nodes(),
                    rollouts: rep.total_rollouts(),
                    replans: rep.replans,
                    plan: rep.success.then(|| {
                        rep.steps
                            .iter()
                            .filter(|st| st.success)
                            .map(|st| st.action.clone())
                            .collect::<Vec<_>>()
                            .join(" ; ")
                    }),
                    error: None,
                    wall_time,
                },
                Err(e) => BenchRow {
                    scenario: s.name().to_string(),
                    mode,
                    solved: false,
                    nodes: 0,
                    rollouts: 0,
                    replans: 0,
                    plan: None,
                    error: Some(e.to_string()),
                    wall_time,
                },
            });
        }
    }
    BenchReport { rows }
}
