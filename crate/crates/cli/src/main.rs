use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use wmtree_core::adapter::{Endpoint, StreamBrancher, StreamJudge, DEFAULT_TIMEOUT};
use wmtree_core::bench::run_bench;
use wmtree_core::closedloop::{oracle_feasible_plans, DEFAULT_MAX_REPLANS, DEFAULT_STATE_BUDGET};
use wmtree_core::trace::Trace;
use wmtree_core::{
    load_scenario, plan, run_closed_loop, Brancher, BuiltinBrancher, BuiltinJudge, Judge, Mode, RunConfig, Scenario,
    SearchConfig,
};

#[derive(Parser)]
#[command(
    name = "wmtree",
    version,
    about = "Planning-tree search over a symbolic tabletop world"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a plan from the scenario's initial state.
    Plan {
        scenario: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Plan, execute against the world stub, and replan on failure.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Run every scenario in a directory under each mode.
    Bench {
        dir: PathBuf,
        /// Comma-separated modes; an empty list yields a header-only report.
        #[arg(long, env = "WMTREE_MODES", default_value = "full")]
        modes: String,
        #[command(flatten)]
        opts: Opts,
    },
    /// Enumerate every shortest feasible plan by brute force.
    Oracle {
        scenario: PathBuf,
        #[arg(long, env = "WMTREE_MAX_LEN", default_value_t = 8)]
        max_len: usize,
        #[arg(long, env = "WMTREE_BUDGET", default_value_t = DEFAULT_STATE_BUDGET)]
        budget: usize,
        #[arg(long, env = "WMTREE_REPORT")]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Opts {
    #[arg(long, env = "WMTREE_MODE", default_value = "full")]
    mode: Mode,
    /// Evaluate queued branches concurrently.
    #[arg(long, env = "WMTREE_PARALLEL")]
    parallel: bool,
    /// `builtin` or `stream:<host:port|exec:cmd>`.
    #[arg(long, env = "WMTREE_JUDGE", default_value = "builtin")]
    judge: String,
    /// `builtin` or `stream:<host:port|exec:cmd>`.
    #[arg(long, env = "WMTREE_BRANCHER", default_value = "builtin")]
    brancher: String,
    /// Write the event trace as JSON lines.
    #[arg(long, env = "WMTREE_TRACE")]
    trace: Option<PathBuf>,
    /// Write the machine-readable report.
    #[arg(long, env = "WMTREE_REPORT")]
    report: Option<PathBuf>,
    #[arg(long, env = "WMTREE_MAX_REPLANS", default_value_t = DEFAULT_MAX_REPLANS)]
    max_replans: usize,
    /// Extra delay per rollout, in milliseconds.
    #[arg(long, env = "WMTREE_ROLLOUT_LATENCY")]
    rollout_latency: Option<u64>,
    #[arg(long, env = "WMTREE_MAX_NODES", default_value_t = 200)]
    max_nodes: usize,
    /// Omit wall-clock fields so output is reproducible.
    #[arg(long, env = "WMTREE_NO_TIMESTAMPS")]
    no_timestamps: bool,
}

impl Opts {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            search: SearchConfig {
                max_nodes: self.max_nodes,
                parallel: self.parallel,
                rollout_latency: self.rollout_latency.map(Duration::from_millis),
                mode: self.mode,
                ..SearchConfig::default()
            },
            max_replans: self.max_replans,
        }
    }

    fn judge(&self) -> Result<Box<dyn Judge>> {
        Ok(match backend(&self.judge)? {
            None => Box::new(BuiltinJudge),
            Some(ep) => Box::new(StreamJudge::new(ep, DEFAULT_TIMEOUT)),
        })
    }

    fn brancher(&self) -> Result<Box<dyn Brancher>> {
        Ok(match backend(&self.brancher)? {
            None => Box::new(BuiltinBrancher::default()),
            Some(ep) => Box::new(StreamBrancher::new(ep, DEFAULT_TIMEOUT, BuiltinBrancher::default())),
        })
    }

    fn trace(&self) -> Trace {
        Trace::new(!self.no_timestamps)
    }

    fn write_trace(&self, trace: &Trace) -> Result<()> {
        if let Some(path) = &self.trace {
            write(path, &trace.to_jsonl())?;
        }
        Ok(())
    }
}

fn backend(spec: &str) -> Result<Option<Endpoint>> {
    if spec == "builtin" {
        return Ok(None);
    }
    let Some(addr) = spec.strip_prefix("stream:") else {
        bail!("unknown backend {spec:?}, expected builtin or stream:<addr>");
    };
    Endpoint::parse(addr).map(Some).map_err(anyhow::Error::msg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_scenario(&text).with_context(|| format!("invalid scenario {}", path.display()))
}

fn read_dir(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .scn files in {}", dir.display());
    }
    paths.iter().map(|p| read_scenario(p)).collect()
}

fn parse_modes(list: &str) -> Result<Vec<Mode>> {
    list.split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| m.parse::<Mode>().map_err(anyhow::Error::msg))
        .collect()
}

/// Returns whether the command achieved its goal.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Plan { scenario, opts } => {
            let s = read_scenario(&scenario)?;
            let (judge, brancher) = (opts.judge()?, opts.brancher()?);
            let mut trace = opts.trace();
            let report = plan(
                &s,
                judge.as_ref(),
                brancher.as_ref(),
                &opts.run_config().search,
                &mut trace,
            )?;
            opts.write_trace(&trace)?;
            if let Some(path) = &opts.report {
                write(path, &format!("{}\n", report.to_json(!opts.no_timestamps)))?;
            }
            match report.outcome.plan() {
                Some(p) => {
                    for a in p.actions() {
                        println!("{a}");
                    }
                    Ok(true)
                }
                None => {
                    println!("planning failed");
                    Ok(false)
                }
            }
        }
        Command::Run { scenario, opts } => {
            let s = read_scenario(&scenario)?;
            let (judge, brancher) = (opts.judge()?, opts.brancher()?);
            let mut trace = opts.trace();
            let report = run_closed_loop(&s, judge.as_ref(), brancher.as_ref(), &opts.run_config(), &mut trace)?;
            opts.write_trace(&trace)?;
            if let Some(path) = &opts.report {
                write(path, &format!("{}\n", serde_json::to_string(&report)?))?;
            }
            for st in &report.steps {
                let mark = if st.success { "ok" } else { "FAILED" };
                println!("{:>3} {} {mark}", st.step, st.action);
            }
            match &report.failure {
                None => println!("success after {} replans", report.replans),
                Some(f) => println!("failure after {} replans: {f}", report.replans),
            }
            Ok(report.success)
        }
        Command::Bench { dir, modes, opts } => {
            let modes = parse_modes(&modes)?;
            let scenarios = read_dir(&dir)?;
            if opts.trace.is_some() {
                warn!("--trace is ignored by bench");
            }
            let (judge, brancher) = (opts.judge()?, opts.brancher()?);
            let report = run_bench(
                &scenarios,
                &modes,
                judge.as_ref(),
                brancher.as_ref(),
                &opts.run_config(),
            );
            let timing = !opts.no_timestamps;
            if let Some(path) = &opts.report {
                write(path, &report.to_jsonl(timing))?;
            }
            print!("{}", report.to_table(timing));
            Ok(report.rows.iter().all(|r| r.solved))
        }
        Command::Oracle {
            scenario,
            max_len,
            budget,
            report,
        } => {
            let s = read_scenario(&scenario)?;
            let result = oracle_feasible_plans(&s, max_len, budget)?;
            if let Some(path) = &report {
                write(path, &format!("{}\n", serde_json::to_string(&result)?))?;
            }
            match result.min_len {
                Some(n) => {
                    println!(
                        "{} plans of length {n} ({} states)",
                        result.plans.len(),
                        result.states_explored
                    );
                    for p in &result.plans {
                        println!("{p}");
                    }
                }
                None => println!(
                    "no feasible plan within {max_len} steps ({} states)",
                    result.states_explored
                ),
            }
            Ok(result.min_len.is_some())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
