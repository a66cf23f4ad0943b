use super::SceneParse;
use crate::judge::{FailureCause, FailureDiagnosis};
use crate::plantree::{Action, ActionVerb, Branch};
use crate::world::ObjectId;

/// Start of the pick-and-place segment that contains `index`: a put belongs
/// to the grasp that precedes it.
fn segment_start(actions: &[Action], index: usize) -> usize {
    if actions[index].is_put() {
        actions[..index]
            .iter()
            .rposition(|a| a.verb() == ActionVerb::PickUp)
            .unwrap_or(index)
    } else {
        index
    }
}

/// End (inclusive) of the segment starting with a grasp at `start`.
fn segment_end(actions: &[Action], start: usize) -> Option<usize> {
    actions[start..].iter().position(Action::is_put).map(|off| start + off)
}

fn relocate(obj: &ObjectId, failed_index: usize, original: &Branch, parse: &SceneParse) -> Option<Vec<Action>> {
    let safe = parse.safe_region.as_ref()?;
    let actions = original.actions();
    let at = segment_start(actions, failed_index);
    let poses = parse.poses_of(obj);
    let pose = (poses.len() > 1).then(|| poses[0].clone());
    let mut out = actions[..at].to_vec();
    out.push(Action::pick_up(obj.clone(), pose));
    out.push(Action::put_on(safe.surface.clone(), safe.region.clone()));
    out.extend_from_slice(&actions[at..]);
    Some(out)
}

/// Moves the segment that put `blocker` in place to just after the segment
/// that handles `blocked`.
fn reorder(blocker: &ObjectId, failed_index: usize, original: &Branch) -> Option<Vec<Action>> {
    let actions = original.actions();
    let blocked_start = segment_start(actions, failed_index);
    let blocked_end = segment_end(actions, blocked_start)?;
    let blocker_start = actions[..blocked_start]
        .iter()
        .rposition(|a| a.verb() == ActionVerb::PickUp && a.target() == blocker)?;
    let blocker_end = segment_end(actions, blocker_start)?;
    if blocker_end >= blocked_start {
        return None;
    }
    let mut out = Vec::with_capacity(actions.len());
    out.extend_from_slice(&actions[..blocker_start]);
    out.extend_from_slice(&actions[blocker_end + 1..=blocked_end]);
    out.extend_from_slice(&actions[blocker_start..=blocker_end]);
    out.extend_from_slice(&actions[blocked_end + 1..]);
    Some(out)
}

/// Revises `original` after its action at `failed_index` failed. Only
/// collisions, clearance jams and ordering conflicts have a correction.
pub fn reflective_branch(
    diag: &FailureDiagnosis,
    failed_index: usize,
    original: &Branch,
    parse: &SceneParse,
    max_len: usize,
) -> Option<Branch> {
    if failed_index >= original.len() {
        return None;
    }
    let revised = match &diag.cause {
        FailureCause::CollisionDisturbance { victim, .. } => relocate(victim, failed_index, original, parse)?,
        FailureCause::BlockedClearance { blocker, .. } => relocate(blocker, failed_index, original, parse)?,
        FailureCause::OrderingConflict { blocker, .. } => reorder(blocker, failed_index, original)?,
        _ => return None,
    };
    if revised.len() > max_len {
        return None;
    }
    Branch::new(revised).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn branch(text: &str) -> Branch {
        Branch::new(text.split(" ; ").map(|a| a.parse().unwrap()).collect()).unwrap()
    }

    fn diag(cause: FailureCause) -> FailureDiagnosis {
        FailureDiagnosis {
            cause,
            recoverable: true,
            narrative: String::new(),
        }
    }

    fn parse(name: &str) -> SceneParse {
        let s = bundled::load(name).unwrap();
        SceneParse::of_state(&s.initial, &s.meta)
    }

    #[test]
    fn collision_inserts_relocation_before_failed_action() {
        let d = diag(FailureCause::CollisionDisturbance {
            victim: "ball".into(),
            via: "microwave".into(),
        });
        let out = reflective_branch(&d, 0, &branch("[OPEN, microwave]"), &parse("task1"), 12).unwrap();
        assert_eq!(
            out.to_string(),
            "[PICK UP, ball] ; [PUT ON, desk]@desk-safe ; [OPEN, microwave]"
        );
    }

    #[test]
    fn failed_put_relocates_before_its_grasp() {
        let d = diag(FailureCause::CollisionDisturbance {
            victim: "apple".into(),
            via: "pen".into(),
        });
        let out = reflective_branch(
            &d,
            1,
            &branch("[PICK UP, pen] ; [PUT INTO, holder2]"),
            &parse("task5"),
            12,
        )
        .unwrap();
        assert_eq!(
            out.to_string(),
            "[PICK UP, apple] ; [PUT ON, desk]@desk-safe ; [PICK UP, pen] ; [PUT INTO, holder2]"
        );
    }

    #[test]
    fn ordering_conflict_swaps_segments() {
        let d = diag(FailureCause::OrderingConflict {
            blocker: "apple".into(),
            blocked_target: "holder".into(),
        });
        let original =
            branch("[PICK UP, apple] ; [PUT INTO, holder] ; [PICK UP, holder] ; [PUT ON, drawer]@drawer-top");
        let out = reflective_branch(&d, 2, &original, &parse("task6"), 12).unwrap();
        assert_eq!(
            out.to_string(),
            "[PICK UP, holder] ; [PUT ON, drawer]@drawer-top ; [PICK UP, apple] ; [PUT INTO, holder]"
        );
        let mut a = out.actions().to_vec();
        let mut b = original.actions().to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn uncorrectable_causes_return_none() {
        let d = diag(FailureCause::GraspSlip {
            obj: "holder".into(),
            pose: Some("horizontal".into()),
        });
        assert!(reflective_branch(&d, 0, &branch("[PICK UP, holder](horizontal)"), &parse("task3"), 12).is_none());
    }

    #[test]
    fn length_cap_is_respected() {
        let d = diag(FailureCause::CollisionDisturbance {
            victim: "ball".into(),
            via: "microwave".into(),
        });
        assert!(reflective_branch(&d, 0, &branch("[OPEN, microwave]"), &parse("task1"), 2).is_none());
    }
}
