//! The planning tree: candidate action sequences merged into a prefix tree,
//! with per-node evaluation status and cached post-action world snapshots.

mod action;

pub use action::{render_sequence, Action, ActionError, ActionVerb};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::FailureDiagnosis;
use crate::world::SnapshotId;

/// Default cap on the length of any root-to-leaf branch.
pub const DEFAULT_MAX_BRANCH_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> u32 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parent {
    Root,
    Node(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeStatus {
    Unevaluated,
    Succeeded,
    Failed(FailureDiagnosis),
}

impl NodeStatus {
    pub fn label(&self) -> &'static str {
        match self {
            NodeStatus::Unevaluated => "unevaluated",
            NodeStatus::Succeeded => "succeeded",
            NodeStatus::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: NodeId,
    pub action: Action,
    pub parent: Parent,
    pub children: Vec<NodeId>,
    pub status: NodeStatus,
    pub post_snapshot: Option<SnapshotId>,
}

/// A complete root-to-leaf candidate action sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Action>", into = "Vec<Action>")]
pub struct Branch(Vec<Action>);

impl Branch {
    pub fn new(actions: Vec<Action>) -> Result<Self, TreeError> {
        if actions.is_empty() {
            return Err(TreeError::EmptyBranch);
        }
        Ok(Branch(actions))
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_actions(self) -> Vec<Action> {
        self.0
    }
}

impl TryFrom<Vec<Action>> for Branch {
    type Error = TreeError;
    fn try_from(actions: Vec<Action>) -> Result<Self, Self::Error> {
        Branch::new(actions)
    }
}

impl From<Branch> for Vec<Action> {
    fn from(b: Branch) -> Self {
        b.0
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_sequence(&self.0))
    }
}

/// A feasible action sequence (possibly empty when the goal already holds).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plan(pub Vec<Action>);

impl Plan {
    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("(empty plan)")
        } else {
            f.write_str(&render_sequence(&self.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeResult {
    /// Pre-existing nodes that matched the branch prefix, root-first.
    pub merged: Vec<NodeId>,
    /// First newly created node, absent when the branch already existed.
    pub new_head: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("branch must contain at least one action")]
    EmptyBranch,
    #[error("branch of {len} actions exceeds the maximum of {max}")]
    BranchTooLong { len: usize, max: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("the root cannot be removed")]
    RootRemoval,
}

/// Mutation journal entries, drained by the search loop into the run trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TreeEvent {
    Merge {
        branch: String,
        merged: Vec<NodeId>,
        new_head: Option<NodeId>,
        created: Vec<NodeId>,
    },
    Remove {
        node: NodeId,
        action: String,
        removed: Vec<NodeId>,
    },
    Status {
        node: NodeId,
        action: String,
        status: &'static str,
    },
}

#[derive(Debug, Clone)]
pub struct PlanningTree {
    root_snapshot: SnapshotId,
    root_children: Vec<NodeId>,
    nodes: BTreeMap<NodeId, TreeNode>,
    next_id: u32,
    max_branch_len: usize,
    journal: Vec<TreeEvent>,
}

impl PlanningTree {
    pub fn new(initial: SnapshotId) -> Self {
        Self::with_max_branch_len(initial, DEFAULT_MAX_BRANCH_LEN)
    }

    pub fn with_max_branch_len(initial: SnapshotId, max_branch_len: usize) -> Self {
        PlanningTree {
            root_snapshot: initial,
            root_children: Vec::new(),
            nodes: BTreeMap::new(),
            next_id: 0,
            max_branch_len,
            journal: Vec::new(),
        }
    }

    pub fn root_snapshot(&self) -> SnapshotId {
        self.root_snapshot
    }

    pub fn root_children(&self) -> &[NodeId] {
        &self.root_children
    }

    pub fn max_branch_len(&self) -> usize {
        self.max_branch_len
    }

    /// Number of action nodes (the root is not counted).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode, TreeError> {
        self.nodes.get(&id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn children_of(&self, parent: Parent) -> Result<&[NodeId], TreeError> {
        match parent {
            Parent::Root => Ok(&self.root_children),
            Parent::Node(id) => Ok(&self.node(id)?.children),
        }
    }

    /// Snapshot a node's action must be rolled out from.
    pub fn parent_snapshot(&self, id: NodeId) -> Result<Option<SnapshotId>, TreeError> {
        match self.node(id)?.parent {
            Parent::Root => Ok(Some(self.root_snapshot)),
            Parent::Node(p) => Ok(self.node(p)?.post_snapshot),
        }
    }

    pub fn depth(&self, id: NodeId) -> Result<usize, TreeError> {
        let mut depth = 1;
        let mut cur = self.node(id)?;
        while let Parent::Node(p) = cur.parent {
            depth += 1;
            cur = self.node(p)?;
        }
        Ok(depth)
    }

    pub fn merge_branch(&mut self, branch: &Branch) -> Result<MergeResult, TreeError> {
        if branch.len() > self.max_branch_len {
            return Err(TreeError::BranchTooLong {
                len: branch.len(),
                max: self.max_branch_len,
            });
        }
        let mut merged = Vec::new();
        let mut parent = Parent::Root;
        let mut actions = branch.actions().iter().peekable();
        while let Some(action) = actions.peek() {
            let existing = self
                .children_of(parent)?
                .iter()
                .copied()
                .find(|c| self.nodes[c].action == **action);
            match existing {
                Some(child) => {
                    merged.push(child);
                    parent = Parent::Node(child);
                    actions.next();
                }
                None => break,
            }
        }

        let mut created = Vec::new();
        for action in actions {
            let id = NodeId(self.next_id);
            self.next_id += 1;
            self.nodes.insert(
                id,
                TreeNode {
                    id,
                    action: action.clone(),
                    parent,
                    children: Vec::new(),
                    status: NodeStatus::Unevaluated,
                    post_snapshot: None,
                },
            );
            self.children_mut(parent).push(id);
            created.push(id);
            parent = Parent::Node(id);
        }

        let result = MergeResult {
            merged,
            new_head: created.first().copied(),
        };
        self.journal.push(TreeEvent::Merge {
            branch: branch.to_string(),
            merged: result.merged.clone(),
            new_head: result.new_head,
            created,
        });
        Ok(result)
    }

    /// Removes `id` and all of its descendants; returns the removed ids in
    /// pre-order.
    pub fn remove_subtree(&mut self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        let node = self.node(id)?;
        let parent = node.parent;
        let action = node.action.to_string();
        let removed = self.preorder(id);
        for r in &removed {
            self.nodes.remove(r);
        }
        self.children_mut(parent).retain(|c| *c != id);
        self.journal.push(TreeEvent::Remove {
            node: id,
            action,
            removed: removed.clone(),
        });
        Ok(removed)
    }

    /// Removal request addressed to a parent handle; the root is rejected.
    pub fn remove(&mut self, target: Parent) -> Result<Vec<NodeId>, TreeError> {
        match target {
            Parent::Root => Err(TreeError::RootRemoval),
            Parent::Node(id) => self.remove_subtree(id),
        }
    }

    pub fn set_status(
        &mut self,
        id: NodeId,
        status: NodeStatus,
        post_snapshot: Option<SnapshotId>,
    ) -> Result<(), TreeError> {
        let node = self.nodes.get_mut(&id).ok_or(TreeError::UnknownNode(id))?;
        debug_assert!(
            !matches!(status, NodeStatus::Succeeded) || post_snapshot.is_some(),
            "a succeeded node must carry its post snapshot"
        );
        node.status = status;
        node.post_snapshot = post_snapshot;
        self.journal.push(TreeEvent::Status {
            node: id,
            action: node.action.to_string(),
            status: node.status.label(),
        });
        Ok(())
    }

    pub fn extract_path(&self, id: NodeId) -> Result<Plan, TreeError> {
        let mut actions = Vec::new();
        let mut cur = self.node(id)?;
        loop {
            actions.push(cur.action.clone());
            match cur.parent {
                Parent::Root => break,
                Parent::Node(p) => cur = self.node(p)?,
            }
        }
        actions.reverse();
        Ok(Plan(actions))
    }

    /// Every complete root-to-leaf branch passing through `id`, depth-first in
    /// child order.
    pub fn extract_paths(&self, id: NodeId) -> Result<Vec<Branch>, TreeError> {
        let prefix = self.extract_path(id)?.0;
        let mut out = Vec::new();
        let mut suffix = Vec::new();
        self.collect_leaves(id, &prefix, &mut suffix, &mut out);
        Ok(out)
    }

    fn collect_leaves(&self, id: NodeId, prefix: &[Action], suffix: &mut Vec<Action>, out: &mut Vec<Branch>) {
        let node = &self.nodes[&id];
        if node.children.is_empty() {
            let mut actions = prefix.to_vec();
            actions.extend(suffix.iter().cloned());
            out.push(Branch(actions));
            return;
        }
        for c in &node.children {
            suffix.push(self.nodes[c].action.clone());
            self.collect_leaves(*c, prefix, suffix, out);
            suffix.pop();
        }
    }

    /// All complete branches in the tree.
    pub fn all_branches(&self) -> Vec<Branch> {
        let mut out = Vec::new();
        for c in &self.root_children {
            out.extend(self.extract_paths(*c).expect("root child exists"));
        }
        out
    }

    pub fn drain_events(&mut self) -> Vec<TreeEvent> {
        std::mem::take(&mut self.journal)
    }

    /// Canonical indented rendering of structure and status, used to compare
    /// trees built by different evaluation schedules.
    pub fn shape(&self) -> Vec<String> {
        let mut lines = Vec::new();
        let mut stack: Vec<(NodeId, usize)> = self.root_children.iter().rev().map(|c| (*c, 0)).collect();
        while let Some((id, depth)) = stack.pop() {
            let node = &self.nodes[&id];
            lines.push(format!(
                "{}{} [{}]",
                "  ".repeat(depth),
                node.action,
                node.status.label()
            ));
            stack.extend(node.children.iter().rev().map(|c| (*c, depth + 1)));
        }
        lines
    }

    /// Structural consistency check: parent/child links agree, siblings carry
    /// distinct actions, every node is reachable from the root, and succeeded
    /// nodes carry a snapshot.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = 0usize;
        let mut stack: Vec<(Parent, NodeId)> = self.root_children.iter().map(|c| (Parent::Root, *c)).collect();
        self.check_siblings(Parent::Root, &self.root_children)?;
        while let Some((parent, id)) = stack.pop() {
            let node = self.nodes.get(&id).ok_or_else(|| format!("dangling child {id}"))?;
            if node.parent != parent {
                return Err(format!("{id} parent link mismatch"));
            }
            if matches!(node.status, NodeStatus::Succeeded) && node.post_snapshot.is_none() {
                return Err(format!("{id} succeeded without snapshot"));
            }
            self.check_siblings(Parent::Node(id), &node.children)?;
            seen += 1;
            if seen > self.nodes.len() {
                return Err("cycle detected".into());
            }
            stack.extend(node.children.iter().map(|c| (Parent::Node(id), *c)));
        }
        if seen != self.nodes.len() {
            return Err(format!("{} orphaned nodes", self.nodes.len().saturating_sub(seen)));
        }
        Ok(())
    }

    fn check_siblings(&self, parent: Parent, children: &[NodeId]) -> Result<(), String> {
        for (i, a) in children.iter().enumerate() {
            for b in &children[i + 1..] {
                let (Some(na), Some(nb)) = (self.nodes.get(a), self.nodes.get(b)) else {
                    return Err(format!("dangling child under {parent:?}"));
                };
                if na.action == nb.action {
                    return Err(format!("duplicate sibling action {}", na.action));
                }
            }
        }
        Ok(())
    }

    fn preorder(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[&n].children.iter().rev());
        }
        out
    }

    fn children_mut(&mut self, parent: Parent) -> &mut Vec<NodeId> {
        match parent {
            Parent::Root => &mut self.root_children,
            Parent::Node(p) => &mut self.nodes.get_mut(&p).expect("parent exists").children,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::SnapshotId;

    fn tree() -> PlanningTree {
        PlanningTree::new(SnapshotId::from_raw(0))
    }

    fn branch(actions: &[Action]) -> Branch {
        Branch::new(actions.to_vec()).unwrap()
    }

    fn pen() -> Action {
        Action::pick_up("pen", None)
    }

    #[test]
    fn new_tree_is_empty() {
        let t = tree();
        assert_eq!(t.len(), 0);
        assert!(t.all_branches().is_empty());
    }

    #[test]
    fn merge_into_empty_tree() {
        let mut t = tree();
        let r = t.merge_branch(&branch(&[pen()])).unwrap();
        assert!(r.merged.is_empty());
        assert_eq!(t.node(r.new_head.unwrap()).unwrap().action, pen());
        assert_eq!(t.node(r.new_head.unwrap()).unwrap().parent, Parent::Root);
    }

    #[test]
    fn shared_prefix_is_merged() {
        let mut t = tree();
        t.merge_branch(&branch(&[pen(), Action::put_into("holder1")])).unwrap();
        let r = t.merge_branch(&branch(&[pen(), Action::put_into("holder2")])).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(r.merged.len(), 1);
        let head = t.node(r.new_head.unwrap()).unwrap();
        assert_eq!(head.parent, Parent::Node(r.merged[0]));
        assert_eq!(t.node(r.merged[0]).unwrap().children.len(), 2);
        // both branches pass through the shared pick-up node
        let paths = t.extract_paths(r.merged[0]).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.len() == 2));
    }

    #[test]
    fn identical_merge_is_idempotent() {
        let mut t = tree();
        let b = branch(&[pen(), Action::put_into("holder1")]);
        t.merge_branch(&b).unwrap();
        let r = t.merge_branch(&b).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(r.merged.len(), 2);
        assert_eq!(r.new_head, None);
    }

    #[test]
    fn overlong_branch_rejected() {
        let mut t = PlanningTree::with_max_branch_len(SnapshotId::from_raw(0), 2);
        let b = branch(&[pen(), Action::put_into("h"), Action::close("d")]);
        assert_eq!(t.merge_branch(&b), Err(TreeError::BranchTooLong { len: 3, max: 2 }));
        assert!(t.is_empty());
    }

    #[test]
    fn remove_counts() {
        let mut t = tree();
        let r = t
            .merge_branch(&branch(&[
                Action::open("a"),
                Action::open("b"),
                Action::open("c"),
                Action::open("d"),
            ]))
            .unwrap();
        let ids: Vec<NodeId> = t.preorder(r.new_head.unwrap());
        t.remove_subtree(ids[3]).unwrap();
        assert_eq!(t.len(), 3);
        let removed = t.remove_subtree(ids[0]).unwrap();
        assert_eq!(removed.len(), 3);
        assert!(t.is_empty());
        assert!(t.root_children().is_empty());
    }

    #[test]
    fn remove_rejects_root_and_unknown() {
        let mut t = tree();
        assert_eq!(t.remove(Parent::Root), Err(TreeError::RootRemoval));
        assert_eq!(t.remove_subtree(NodeId(7)), Err(TreeError::UnknownNode(NodeId(7))));
        assert!(t.extract_path(NodeId(7)).is_err());
        assert!(t.extract_paths(NodeId(7)).is_err());
    }

    #[test]
    fn ids_are_not_reused() {
        let mut t = tree();
        let a = t.merge_branch(&branch(&[pen()])).unwrap().new_head.unwrap();
        t.remove_subtree(a).unwrap();
        let b = t.merge_branch(&branch(&[pen()])).unwrap().new_head.unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn extract_path_orders_root_first() {
        let mut t = tree();
        let acts = [pen(), Action::put_on("drawer", "top"), Action::close("drawer")];
        t.merge_branch(&branch(&acts)).unwrap();
        let leaf = *t.nodes.keys().max().unwrap();
        assert_eq!(t.depth(leaf).unwrap(), 3);
        assert_eq!(t.extract_path(leaf).unwrap().0, acts.to_vec());
        let first = t.root_children()[0];
        assert_eq!(t.extract_path(first).unwrap().0, vec![pen()]);
        assert_eq!(t.extract_paths(leaf).unwrap(), vec![branch(&acts)]);
    }

    #[test]
    fn journal_records_mutations() {
        let mut t = tree();
        let id = t.merge_branch(&branch(&[pen()])).unwrap().new_head.unwrap();
        t.set_status(id, NodeStatus::Succeeded, Some(SnapshotId::from_raw(1)))
            .unwrap();
        t.remove_subtree(id).unwrap();
        let ops: Vec<_> = t
            .drain_events()
            .into_iter()
            .map(|e| match e {
                TreeEvent::Merge { .. } => "merge",
                TreeEvent::Remove { .. } => "remove",
                TreeEvent::Status { .. } => "status",
            })
            .collect();
        assert_eq!(ops, ["merge", "status", "remove"]);
        assert!(t.drain_events().is_empty());
    }
}
