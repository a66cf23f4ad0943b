use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::WorldState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct SnapshotId(u64);

impl SnapshotId {
    pub fn from_raw(raw: u64) -> Self {
        SnapshotId(raw)
    }
}

impl fmt::Display for SnapshotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Immutable captured state; cheap to share with rollout workers.
pub type Snapshot = Arc<WorldState>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("unknown snapshot {0}")]
    Unknown(SnapshotId),
}

#[derive(Debug, Default)]
pub struct SnapshotStore {
    next: u64,
    snaps: HashMap<SnapshotId, Snapshot>,
}

impl SnapshotStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&mut self, state: &WorldState) -> SnapshotId {
        let id = SnapshotId(self.next);
        self.next += 1;
        self.snaps.insert(id, Arc::new(state.clone()));
        id
    }

    /// Shared handle to a stored snapshot.
    pub fn get(&self, id: SnapshotId) -> Result<Snapshot, SnapshotError> {
        self.snaps.get(&id).cloned().ok_or(SnapshotError::Unknown(id))
    }

    /// Private mutable copy of a stored snapshot.
    pub fn restore(&self, id: SnapshotId) -> Result<WorldState, SnapshotError> {
        self.snaps
            .get(&id)
            .map(|s| WorldState::clone(s))
            .ok_or(SnapshotError::Unknown(id))
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }
}
