//! Fixtures shared by the criterion benchmarks.

use std::time::Duration;

use wmtree_core::bundled;
use wmtree_core::trace::Trace;
use wmtree_core::{plan, BuiltinBrancher, BuiltinJudge, Scenario, SearchConfig, SearchReport};

pub fn scenario(name: &str) -> Scenario {
    bundled::load(name).unwrap_or_else(|e| panic!("bundled scenario {name}: {e}"))
}

pub fn config(parallel: bool, latency_ms: Option<u64>) -> SearchConfig {
    SearchConfig {
        parallel,
        rollout_latency: latency_ms.map(Duration::from_millis),
        ..SearchConfig::default()
    }
}

/// One planning call with the built-in backends and no trace retention.
pub fn solve(s: &Scenario, cfg: &SearchConfig) -> SearchReport {
    plan(
        s,
        &BuiltinJudge,
        &BuiltinBrancher::default(),
        cfg,
        &mut Trace::default(),
    )
    .expect("search runs")
}
