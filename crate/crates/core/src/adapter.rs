//! External judge and brancher backends speaking newline-delimited JSON over
//! a TCP socket or a child process's standard streams.
//!
//! Every request is one JSON object on one line; the backend answers with
//! one line. Any transport error, timeout or malformed reply falls back to
//! the built-in backend with a warning.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::branching::{BranchError, Brancher, BuiltinBrancher, ReflectRequest, SceneParse};
use crate::judge::{BuiltinJudge, EvalResult, FailureCause, FailureDiagnosis, Judge, JudgeError};
use crate::plantree::{Action, Branch};
use crate::world::{observe, GoalSpec, ObjectId, StepOutcome, WorldState};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// Where an external backend lives: `tcp:host:port` (or bare `host:port`)
/// or `exec:<command line>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Exec(String),
}

impl Endpoint {
    pub fn parse(spec: &str) -> Result<Endpoint, String> {
        if let Some(cmd) = spec.strip_prefix("exec:") {
            if cmd.trim().is_empty() {
                return Err("empty exec command".into());
            }
            return Ok(Endpoint::Exec(cmd.to_string()));
        }
        let addr = spec.strip_prefix("tcp:").unwrap_or(spec);
        if addr
            .rsplit_once(':')
            .is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok())
        {
            Ok(Endpoint::Tcp(addr.to_string()))
        } else {
            Err(format!("bad endpoint {spec:?}, expected host:port or exec:<command>"))
        }
    }
}

enum Conn {
    Tcp(BufReader<TcpStream>),
    Exec {
        _child: Child,
        stdin: ChildStdin,
        lines: Receiver<String>,
    },
}

/// One serialized connection, opened lazily and dropped after any error.
pub struct StreamClient {
    endpoint: Endpoint,
    timeout: Duration,
    conn: Mutex<Option<Conn>>,
}

impl StreamClient {
    pub fn new(endpoint: Endpoint, timeout: Duration) -> Self {
        StreamClient {
            endpoint,
            timeout,
            conn: Mutex::new(None),
        }
    }

    fn connect(&self) -> std::io::Result<Conn> {
        match &self.endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)?;
                stream.set_read_timeout(Some(self.timeout))?;
                stream.set_write_timeout(Some(self.timeout))?;
                Ok(Conn::Tcp(BufReader::new(stream)))
            }
            Endpoint::Exec(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let (tx, rx) = mpsc::channel();
                thread::spawn(move || {
                    for line in BufReader::new(stdout).lines() {
                        let Ok(line) = line else { break };
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                });
                Ok(Conn::Exec {
                    _child: child,
                    stdin,
                    lines: rx,
                })
            }
        }
    }

    /// Sends one request line and waits for one reply line.
    pub fn request(&self, line: &str) -> std::io::Result<String> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.connect()?);
        }
        let result = match guard.as_mut().expect("connected") {
            Conn::Tcp(reader) => (|| {
                let stream = reader.get_mut();
                stream.write_all(line.as_bytes())?;
                stream.write_all(b"\n")?;
                stream.flush()?;
                let mut reply = String::new();
                if reader.read_line(&mut reply)? == 0 {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::UnexpectedEof,
                        "backend closed the stream",
                    ));
                }
                Ok(reply)
            })(),
            Conn::Exec { stdin, lines, .. } => (|| {
                stdin.write_all(line.as_bytes())?;
                stdin.write_all(b"\n")?;
                stdin.flush()?;
                lines
                    .recv_timeout(self.timeout)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::TimedOut, e.to_string()))
            })(),
        };
        if result.is_err() {
            *guard = None;
        }
        result.map(|s| s.trim_end().to_string())
    }
}

#[derive(Serialize)]
struct JudgeRequest<'a> {
    action: String,
    pre: &'a crate::world::Observation,
    post: &'a crate::world::Observation,
    question: &'static str,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum Verdict {
    Success,
    Failure,
}

#[derive(Deserialize)]
struct JudgeReply {
    verdict: Verdict,
    cause: Option<String>,
    #[serde(default)]
    objects: Vec<String>,
    recoverable: Option<bool>,
    #[serde(default)]
    narrative: String,
}

fn cause_from_tag(tag: &str, objects: &[String], action: &Action) -> Option<FailureCause> {
    let obj = |i: usize| objects.get(i).map(|s| ObjectId::from(s.as_str()));
    let target = action.target().clone();
    Some(match tag {
        "collision_disturbance" => FailureCause::CollisionDisturbance {
            victim: obj(0)?,
            via: obj(1).unwrap_or(target),
        },
        "ordering_conflict" => FailureCause::OrderingConflict {
            blocker: obj(0)?,
            blocked_target: obj(1).unwrap_or(target),
        },
        "unstable_placement" => FailureCause::UnstablePlacement {
            obj: obj(0)?,
            container: obj(1).unwrap_or(target),
        },
        "grasp_slip" => FailureCause::GraspSlip {
            obj: obj(0).unwrap_or(target),
            pose: action.pose().cloned(),
        },
        "unreachable" => FailureCause::Unreachable {
            obj: obj(0).unwrap_or(target),
        },
        "blocked_clearance" => FailureCause::BlockedClearance {
            blocker: obj(0)?,
            articulated: obj(1).unwrap_or(target),
        },
        _ => return None,
    })
}

/// Judge backed by an external process; the built-in judge stands in when
/// the backend misbehaves.
pub struct StreamJudge {
    client: StreamClient,
    fallback: BuiltinJudge,
}

impl StreamJudge {
    pub fn new(endpoint: Endpoint, timeout: Duration) -> Self {
        StreamJudge {
            client: StreamClient::new(endpoint, timeout),
            fallback: BuiltinJudge,
        }
    }

    fn ask(&self, pre: &WorldState, outcome: &StepOutcome, action: &Action) -> Result<EvalResult, String> {
        let pre_obs = observe(pre, &[]);
        let post_obs = observe(&outcome.state, &outcome.effects);
        let req = JudgeRequest {
            action: action.to_string(),
            pre: &pre_obs,
            post: &post_obs,
            question: "success-and-safe?",
        };
        let line = serde_json::to_string(&req).map_err(|e| e.to_string())?;
        let reply = self.client.request(&line).map_err(|e| e.to_string())?;
        let reply: JudgeReply = serde_json::from_str(&reply).map_err(|e| format!("malformed reply: {e}"))?;
        match reply.verdict {
            Verdict::Success => Ok(EvalResult::Success),
            Verdict::Failure => {
                let tag = reply.cause.ok_or("failure reply without a cause")?;
                let cause =
                    cause_from_tag(&tag, &reply.objects, action).ok_or_else(|| format!("unusable cause {tag:?}"))?;
                Ok(EvalResult::Failure(FailureDiagnosis {
                    cause,
                    recoverable: reply.recoverable.unwrap_or(true),
                    narrative: reply.narrative,
                }))
            }
        }
    }
}

impl Judge for StreamJudge {
    fn evaluate(&self, pre: &WorldState, outcome: &StepOutcome, action: &Action) -> Result<EvalResult, JudgeError> {
        match self.ask(pre, outcome, action) {
            Ok(v) => Ok(v),
            Err(e) => {
                warn!("external judge failed ({e}); using the built-in judge");
                self.fallback.evaluate(pre, outcome, action)
            }
        }
    }

    fn name(&self) -> &str {
        "stream"
    }
}

#[derive(Serialize)]
struct BranchRequest<'a> {
    mode: &'static str,
    instruction: &'a str,
    observation: &'a crate::world::Observation,
    #[serde(skip_serializing_if = "Option::is_none")]
    goal: Option<&'a GoalSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnosis: Option<&'a FailureDiagnosis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    original: Option<&'a Branch>,
}

#[derive(Deserialize)]
struct BranchReply {
    branches: Vec<Vec<String>>,
}

fn parse_branches(reply: &str) -> Result<Vec<Branch>, String> {
    let reply: BranchReply = serde_json::from_str(reply).map_err(|e| format!("malformed reply: {e}"))?;
    reply
        .branches
        .into_iter()
        .map(|seq| {
            let actions = seq
                .iter()
                .map(|a| a.parse::<Action>().map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, _>>()?;
            Branch::new(actions).map_err(|e| e.to_string())
        })
        .collect()
}

pub struct StreamBrancher {
    client: StreamClient,
    fallback: BuiltinBrancher,
}

impl StreamBrancher {
    pub fn new(endpoint: Endpoint, timeout: Duration, fallback: BuiltinBrancher) -> Self {
        StreamBrancher {
            client: StreamClient::new(endpoint, timeout),
            fallback,
        }
    }

    fn ask(&self, req: &BranchRequest<'_>) -> Result<Vec<Branch>, String> {
        let line = serde_json::to_string(req).map_err(|e| e.to_string())?;
        let reply = self.client.request(&line).map_err(|e| e.to_string())?;
        parse_branches(&reply)
    }
}

impl Brancher for StreamBrancher {
    fn priori(&self, parse: &SceneParse, goal: &GoalSpec) -> Result<Vec<Branch>, BranchError> {
        let req = BranchRequest {
            mode: "priori",
            instruction: &parse.instruction,
            observation: &parse.observation,
            goal: Some(goal),
            diagnosis: None,
            failed: None,
            original: None,
        };
        match self.ask(&req) {
            Ok(b) => Ok(b),
            Err(e) => {
                warn!("external brancher failed ({e}); using the built-in brancher");
                self.fallback.priori(parse, goal)
            }
        }
    }

    fn reflect(&self, request: &ReflectRequest<'_>) -> Result<Option<Branch>, BranchError> {
        let req = BranchRequest {
            mode: "reflective",
            instruction: &request.parse.instruction,
            observation: &request.parse.observation,
            goal: None,
            diagnosis: Some(request.diagnosis),
            failed: Some(request.failed().to_string()),
            original: Some(request.original),
        };
        match self.ask(&req) {
            Ok(b) => Ok(b.into_iter().next()),
            Err(e) => {
                warn!("external brancher failed ({e}); using the built-in brancher");
                self.fallback.reflect(request)
            }
        }
    }

    fn name(&self) -> &str {
        "stream"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::skills::apply;
    use std::net::TcpListener;

    fn serve(replies: Vec<&'static str>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut out = stream;
            for r in replies {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    return;
                }
                let _: serde_json::Value = serde_json::from_str(&line).unwrap();
                writeln!(out, "{r}").unwrap();
            }
        });
        addr
    }

    fn task1_open() -> (WorldState, StepOutcome, Action) {
        let s = bundled::load("task1").unwrap();
        let a: Action = "[OPEN, microwave]".parse().unwrap();
        let out = apply(&s.initial, &a).unwrap();
        (s.initial, out, a)
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            Endpoint::parse("127.0.0.1:9000"),
            Ok(Endpoint::Tcp("127.0.0.1:9000".into()))
        );
        assert_eq!(
            Endpoint::parse("tcp:localhost:1"),
            Ok(Endpoint::Tcp("localhost:1".into()))
        );
        assert_eq!(Endpoint::parse("exec:cat"), Ok(Endpoint::Exec("cat".into())));
        assert!(Endpoint::parse("nowhere").is_err());
    }

    #[test]
    fn external_verdict_is_used() {
        let addr = serve(vec![
            r#"{"verdict":"failure","cause":"collision_disturbance","objects":["ball","microwave"],"recoverable":false}"#,
        ]);
        let judge = StreamJudge::new(Endpoint::Tcp(addr), Duration::from_secs(2));
        let (pre, out, a) = task1_open();
        let EvalResult::Failure(d) = judge.evaluate(&pre, &out, &a).unwrap() else {
            panic!("expected failure")
        };
        assert_eq!(
            d.cause,
            FailureCause::CollisionDisturbance {
                victim: "ball".into(),
                via: "microwave".into()
            }
        );
    }

    #[test]
    fn malformed_reply_falls_back() {
        let addr = serve(vec!["not json"]);
        let judge = StreamJudge::new(Endpoint::Tcp(addr), Duration::from_secs(2));
        let (pre, out, a) = task1_open();
        assert_eq!(
            judge.evaluate(&pre, &out, &a).unwrap(),
            BuiltinJudge.evaluate(&pre, &out, &a).unwrap()
        );
    }

    #[test]
    fn unreachable_backend_falls_back() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let judge = StreamJudge::new(Endpoint::Tcp(addr), Duration::from_millis(200));
        let (pre, out, a) = task1_open();
        assert!(judge.evaluate(&pre, &out, &a).is_ok());
    }

    #[test]
    fn exec_brancher_round_trip() {
        let reply = r#"{"branches":[["[PICK UP, pen]","[PUT INTO, holder2]"]]}"#;
        let cmd = format!("while read line; do echo '{reply}'; done");
        let b = StreamBrancher::new(Endpoint::Exec(cmd), Duration::from_secs(5), BuiltinBrancher::default());
        let s = bundled::load("task2").unwrap();
        let parse = SceneParse::of_state(&s.initial, &s.meta);
        let got = b.priori(&parse, &s.goal).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].to_string(), "[PICK UP, pen] ; [PUT INTO, holder2]");
    }

    #[test]
    fn observation_survives_serialization() {
        let (_, out, _) = task1_open();
        let obs = observe(&out.state, &out.effects);
        let back = crate::world::Observation::from_json(&obs.to_json()).unwrap();
        assert_eq!(obs, back);
    }
}
