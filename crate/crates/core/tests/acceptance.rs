//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the summary lines always reach stdout.

mod support;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestCaseError, TestRunner};
use wmtree_core::bench::run_bench;
use wmtree_core::closedloop::{is_feasible, oracle_feasible_plans, DEFAULT_STATE_BUDGET};
use wmtree_core::plantree::{Action, Plan};
use wmtree_core::skills;
use wmtree_core::trace::Trace;
use wmtree_core::{
    plan, run_closed_loop, BuiltinBrancher, BuiltinJudge, Mode, RunConfig, Scenario, SearchConfig, SearchReport,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn(&[Scenario]) -> Check);

fn golden(name: &str) -> Plan {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.plan"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Plan(
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.parse::<Action>().unwrap())
            .collect(),
    )
}

fn search(s: &Scenario, cfg: &SearchConfig) -> SearchReport {
    plan(
        s,
        &BuiltinJudge,
        &BuiltinBrancher::default(),
        cfg,
        &mut Trace::default(),
    )
    .expect("search runs")
}

/// Replays a plan from the initial state: every step runs, nothing is
/// irreversible, and the goal holds at the end.
fn replay_ok(s: &Scenario, p: &Plan) -> bool {
    let mut state = s.initial.clone();
    for a in p.actions() {
        match skills::apply(&state, a) {
            Ok(o) if o.primitive_ok && !o.effects.iter().any(|e| e.irreversible) => state = o.state,
            _ => return false,
        }
    }
    wmtree_core::world::goal_satisfied(&state, &s.goal)
}

fn full_mode_bench(scenarios: &[Scenario]) -> Check {
    let started = Instant::now();
    let report = run_bench(
        scenarios,
        &[Mode::Full],
        &BuiltinJudge,
        &BuiltinBrancher::default(),
        &RunConfig::default(),
    );
    let elapsed = started.elapsed();
    let solved = report.solved(Mode::Full).len();
    for s in scenarios {
        let r = search(s, &SearchConfig::default());
        let Some(p) = r.outcome.plan() else {
            return Err(format!("{}: no plan", s.name()));
        };
        if !replay_ok(s, p) {
            return Err(format!("{}: replay failed", s.name()));
        }
        let o = oracle_feasible_plans(s, p.len(), DEFAULT_STATE_BUDGET).map_err(|e| e.to_string())?;
        if !o.contains(p) {
            return Err(format!("{}: plan not in oracle set", s.name()));
        }
    }
    let msg = format!("{solved}/{} solved in {elapsed:.2?}", scenarios.len());
    if solved == scenarios.len() && elapsed < Duration::from_secs(10) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ablation(scenarios: &[Scenario]) -> Check {
    let report = run_bench(
        scenarios,
        &[Mode::Full, Mode::NoReflective, Mode::NoReplan, Mode::NoPriori],
        &BuiltinJudge,
        &BuiltinBrancher::default(),
        &RunConfig::default(),
    );
    let names = |m| report.solved(m).join(",");
    let no_reflective = names(Mode::NoReflective);
    let no_replan = names(Mode::NoReplan);
    let no_priori = report.solved(Mode::NoPriori);
    let full = report.solved(Mode::Full);
    let planning_only: Vec<&str> = scenarios
        .iter()
        .map(|s| s.name())
        .filter(|n| *n != "disturbance")
        .collect();
    let ok = no_reflective == "task2,task3,disturbance"
        && no_replan == planning_only.join(",")
        && !no_priori.contains(&"task2")
        && !no_priori.contains(&"task3")
        && full.contains(&"task2")
        && full.contains(&"task3");
    let msg = format!(
        "no-reflective {{{no_reflective}}}, no-replan {{{no_replan}}}, no-priori {{{}}}",
        no_priori.join(",")
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn canonical_plans(scenarios: &[Scenario]) -> Check {
    for s in scenarios {
        let r = search(s, &SearchConfig::default());
        if r.outcome.plan() != Some(&golden(s.name())) {
            return Err(format!("{} differs from its golden plan", s.name()));
        }
    }
    let t1 = golden("task1").to_string();
    let t6 = golden("task6");
    let t7 = golden("task7");
    let holder_first = t6
        .actions()
        .iter()
        .position(|a| a.to_string() == "[PUT ON, drawer]@drawer-top")
        < t6.actions().iter().position(|a| a.to_string() == "[PUT INTO, holder]");
    let t7_text: Vec<String> = t7.actions().iter().map(ToString::to_string).collect();
    let relocated = t7_text.iter().position(|a| a == "[PUT ON, drawer]@drawer-top-safe");
    let opened = t7_text.iter().position(|a| a == "[OPEN, drawer]");
    let ok = t1 == "[PICK UP, ball] ; [PUT ON, desk]@desk-safe ; [OPEN, microwave]"
        && holder_first
        && relocated.is_some()
        && relocated < opened
        && t7_text.contains(&"[PUT INTO, holder]".to_string())
        && t7_text.ends_with(&["[PUT INTO, drawer]".to_string(), "[CLOSE, drawer]".to_string()]);
    if ok {
        Ok("8 plans match golden files; task1/task6/task7 orderings hold".into())
    } else {
        Err("canonical ordering check failed".into())
    }
}

fn oracle_equivalence(scenarios: &[Scenario]) -> Check {
    let mut slowest = Duration::ZERO;
    for s in scenarios {
        let g = golden(s.name());
        let started = Instant::now();
        let o = oracle_feasible_plans(s, g.len(), DEFAULT_STATE_BUDGET).map_err(|e| format!("{}: {e}", s.name()))?;
        let t = started.elapsed();
        slowest = slowest.max(t);
        if !o.contains(&g) || !is_feasible(s, &g) {
            return Err(format!("{}: golden plan not in oracle set", s.name()));
        }
        if t > Duration::from_secs(60) {
            return Err(format!("{}: oracle took {t:.2?}", s.name()));
        }
    }
    for name in ["task1", "task4"] {
        let s = scenarios.iter().find(|s| s.name() == name).unwrap();
        let o = oracle_feasible_plans(s, 1, DEFAULT_STATE_BUDGET).map_err(|e| e.to_string())?;
        if !o.plans.is_empty() {
            return Err(format!("{name}: a one-step plan exists"));
        }
    }
    Ok(format!(
        "golden plans contained; task1/task4 have no one-step plan; slowest {slowest:.2?}"
    ))
}

fn parallel(scenarios: &[Scenario]) -> Check {
    for s in scenarios {
        let seq = search(s, &SearchConfig::default());
        let par = search(
            s,
            &SearchConfig {
                parallel: true,
                ..SearchConfig::default()
            },
        );
        if seq.outcome != par.outcome || seq.tree_shape != par.tree_shape {
            return Err(format!("{}: parallel result differs", s.name()));
        }
    }
    let task7 = scenarios.iter().find(|s| s.name() == "task7").unwrap();
    let latency = Some(Duration::from_millis(50));
    let seq_cfg = SearchConfig {
        rollout_latency: latency,
        ..SearchConfig::default()
    };
    let par_cfg = SearchConfig {
        parallel: true,
        ..seq_cfg.clone()
    };
    let t = Instant::now();
    let seq = search(task7, &seq_cfg);
    let seq_time = t.elapsed();
    let t = Instant::now();
    let par = search(task7, &par_cfg);
    let par_time = t.elapsed();
    let reduction = 1.0 - par_time.as_secs_f64() / seq_time.as_secs_f64();
    let msg = format!(
        "task7 sequential {seq_time:.2?}, parallel {par_time:.2?}, reduction {:.0}%",
        reduction * 100.0
    );
    if seq.outcome == par.outcome && seq.tree_shape == par.tree_shape && reduction >= 0.40 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn outputs(s: &Scenario) -> String {
    let mut out = String::new();
    let mut trace = Trace::new(false);
    let r = plan(
        s,
        &BuiltinJudge,
        &BuiltinBrancher::default(),
        &SearchConfig::default(),
        &mut trace,
    )
    .unwrap();
    out += &trace.to_jsonl();
    out += &r.to_json(false).to_string();
    let mut trace = Trace::new(false);
    let r = run_closed_loop(
        s,
        &BuiltinJudge,
        &BuiltinBrancher::default(),
        &RunConfig::default(),
        &mut trace,
    )
    .unwrap();
    out += &trace.to_jsonl();
    out += &serde_json::to_string(&r).unwrap();
    out
}

fn determinism(scenarios: &[Scenario]) -> Check {
    for s in scenarios {
        if outputs(s) != outputs(s) {
            return Err(format!("{}: outputs differ between runs", s.name()));
        }
    }
    let bench = || {
        run_bench(
            scenarios,
            &Mode::ALL,
            &BuiltinJudge,
            &BuiltinBrancher::default(),
            &RunConfig::default(),
        )
        .to_jsonl(false)
    };
    if bench() != bench() {
        return Err("bench reports differ between runs".into());
    }
    Ok("plan, run and bench outputs are byte-identical across runs".into())
}

fn run_property<S: proptest::strategy::Strategy>(
    name: &str,
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), String>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        failure_persistence: None,
        ..Config::with_cases(1000)
    });
    runner
        .run(&strategy, |v| check(v).map_err(TestCaseError::fail))
        .map_err(|e| format!("{name}: {e}"))
}

fn properties(scenarios: &[Scenario]) -> Check {
    run_property("trie", support::branch_sets(), |sets| support::check_trie(&sets))?;
    run_property("snapshots", support::walks(12), |(i, c)| {
        support::check_snapshots(&scenarios[i], &c)
    })?;
    run_property(
        "effects",
        (support::walks(8), proptest::num::usize::ANY),
        |((i, c), pick)| support::check_effects(&scenarios[i], &c, pick),
    )?;
    run_property("irreversibility", support::walks(20), |(i, c)| {
        support::check_monotone(&scenarios[i], &c)
    })?;
    Ok("trie, snapshot, effect and irreversibility suites pass 1000 cases each".into())
}

fn main() -> ExitCode {
    let scenarios = support::scenarios();
    let criteria: [Criterion; 7] = [
        ("full-mode solvability", full_mode_bench),
        ("ablation pattern", ablation),
        ("canonical plans", canonical_plans),
        ("oracle equivalence", oracle_equivalence),
        ("parallel speedup and equivalence", parallel),
        ("determinism", determinism),
        ("property suites", properties),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check(&scenarios) {
            Ok(msg) => println!("criterion {}: PASS {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {msg}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
