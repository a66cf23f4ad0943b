//! Run trace: an append-only list of structured records, one per planner or
//! executor event, rendered as JSON lines.

use std::time::Instant;

use serde::Serialize;

use crate::judge::FailureDiagnosis;
use crate::plantree::{NodeId, TreeEvent};
use crate::world::Effect;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Priori {
        branches: Vec<String>,
    },
    Pop {
        node: NodeId,
        action: String,
    },
    Rollout {
        node: NodeId,
        primitive_ok: bool,
        effects: Vec<Effect>,
    },
    Verdict {
        node: NodeId,
        success: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        diagnosis: Option<FailureDiagnosis>,
    },
    Reflection {
        node: NodeId,
        original: String,
        revised: Option<String>,
    },
    ReflectionSkipped {
        node: NodeId,
        original: String,
        reason: String,
    },
    Push {
        nodes: Vec<NodeId>,
    },
    Discard {
        node: NodeId,
    },
    LeafGoalUnmet {
        node: NodeId,
    },
    Tree(TreeEvent),
    SearchDone {
        outcome: String,
        nodes_expanded: usize,
    },
    Disturbance {
        step: usize,
        effects: Vec<Effect>,
    },
    Execute {
        step: usize,
        replan: usize,
        action: String,
        success: bool,
        effects: Vec<Effect>,
    },
    Replan {
        replan: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub seq: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_ms: Option<f64>,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone)]
pub struct Trace {
    records: Vec<TraceRecord>,
    start: Instant,
    timestamps: bool,
}

impl Default for Trace {
    fn default() -> Self {
        Trace::new(false)
    }
}

impl Trace {
    pub fn new(timestamps: bool) -> Self {
        Trace {
            records: Vec::new(),
            start: Instant::now(),
            timestamps,
        }
    }

    pub fn push(&mut self, event: TraceEvent) {
        let t_ms = self.timestamps.then(|| self.start.elapsed().as_secs_f64() * 1000.0);
        self.records.push(TraceRecord {
            seq: self.records.len(),
            t_ms,
            event,
        });
    }

    pub fn extend_tree(&mut self, events: Vec<TreeEvent>) {
        for e in events {
            self.push(TraceEvent::Tree(e));
        }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}
