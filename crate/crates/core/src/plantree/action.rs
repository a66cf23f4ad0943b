//! Action primitives and their text grammar.
//!
//! An action renders as `[VERB, target](pose)@region`, where the pose suffix
//! only appears on `PICK UP` and the region suffix only on `PUT ON`:
//!
//! ```text
//! [PICK UP, holder](vertical)
//! [PUT ON, drawer]@drawer-top-safe
//! [PUT INTO, holder2]
//! [OPEN, microwave]
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::world::{ObjectId, PoseQualifier, RegionId};

/// The five manipulation skills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionVerb {
    PickUp,
    PutOn,
    PutInto,
    Open,
    Close,
}

impl ActionVerb {
    pub const ALL: [ActionVerb; 5] = [
        ActionVerb::PickUp,
        ActionVerb::PutOn,
        ActionVerb::PutInto,
        ActionVerb::Open,
        ActionVerb::Close,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ActionVerb::PickUp => "PICK UP",
            ActionVerb::PutOn => "PUT ON",
            ActionVerb::PutInto => "PUT INTO",
            ActionVerb::Open => "OPEN",
            ActionVerb::Close => "CLOSE",
        }
    }

    fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.keyword() == s)
    }
}

impl fmt::Display for ActionVerb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("pose qualifier is only valid on PICK UP (got {0})")]
    PoseNotAllowed(ActionVerb),
    #[error("placement region is only valid on PUT ON (got {0})")]
    RegionNotAllowed(ActionVerb),
    #[error("malformed action text {text:?}: {reason}")]
    Syntax { text: String, reason: &'static str },
}

/// One step of a plan. Equality is structural over all four fields, which is
/// what makes two grasp variants of the same object distinct tree children.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    verb: ActionVerb,
    target: ObjectId,
    pose: Option<PoseQualifier>,
    region: Option<RegionId>,
}

impl Action {
    pub fn new(
        verb: ActionVerb,
        target: ObjectId,
        pose: Option<PoseQualifier>,
        region: Option<RegionId>,
    ) -> Result<Self, ActionError> {
        if pose.is_some() && verb != ActionVerb::PickUp {
            return Err(ActionError::PoseNotAllowed(verb));
        }
        if region.is_some() && verb != ActionVerb::PutOn {
            return Err(ActionError::RegionNotAllowed(verb));
        }
        Ok(Action {
            verb,
            target,
            pose,
            region,
        })
    }

    pub fn pick_up(target: impl Into<ObjectId>, pose: Option<PoseQualifier>) -> Self {
        Action {
            verb: ActionVerb::PickUp,
            target: target.into(),
            pose,
            region: None,
        }
    }

    pub fn put_on(surface: impl Into<ObjectId>, region: impl Into<RegionId>) -> Self {
        Action {
            verb: ActionVerb::PutOn,
            target: surface.into(),
            pose: None,
            region: Some(region.into()),
        }
    }

    pub fn put_into(container: impl Into<ObjectId>) -> Self {
        Self::bare(ActionVerb::PutInto, container)
    }

    pub fn open(target: impl Into<ObjectId>) -> Self {
        Self::bare(ActionVerb::Open, target)
    }

    pub fn close(target: impl Into<ObjectId>) -> Self {
        Self::bare(ActionVerb::Close, target)
    }

    fn bare(verb: ActionVerb, target: impl Into<ObjectId>) -> Self {
        Action {
            verb,
            target: target.into(),
            pose: None,
            region: None,
        }
    }

    pub fn verb(&self) -> ActionVerb {
        self.verb
    }

    pub fn target(&self) -> &ObjectId {
        &self.target
    }

    pub fn pose(&self) -> Option<&PoseQualifier> {
        self.pose.as_ref()
    }

    pub fn region(&self) -> Option<&RegionId> {
        self.region.as_ref()
    }

    pub fn is_put(&self) -> bool {
        matches!(self.verb, ActionVerb::PutOn | ActionVerb::PutInto)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.verb, self.target)?;
        if let Some(pose) = &self.pose {
            write!(f, "({pose})")?;
        }
        if let Some(region) = &self.region {
            write!(f, "@{region}")?;
        }
        Ok(())
    }
}

fn is_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl FromStr for Action {
    type Err = ActionError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let syntax = |reason| ActionError::Syntax {
            text: text.to_string(),
            reason,
        };
        let s = text.trim();
        let rest = s.strip_prefix('[').ok_or_else(|| syntax("expected '['"))?;
        let close = rest.find(']').ok_or_else(|| syntax("expected ']'"))?;
        let (inner, mut tail) = (&rest[..close], &rest[close + 1..]);
        let (verb, target) = inner.split_once(',').ok_or_else(|| syntax("expected 'VERB, target'"))?;
        let verb = ActionVerb::from_keyword(verb.trim()).ok_or_else(|| syntax("unknown verb"))?;
        let target = target.trim();
        if !is_name(target) {
            return Err(syntax("invalid target name"));
        }

        let mut pose = None;
        if let Some(p) = tail.strip_prefix('(') {
            let end = p.find(')').ok_or_else(|| syntax("unterminated pose"))?;
            let name = p[..end].trim();
            if !is_name(name) {
                return Err(syntax("invalid pose name"));
            }
            pose = Some(PoseQualifier::from(name));
            tail = &p[end + 1..];
        }
        let mut region = None;
        if let Some(r) = tail.strip_prefix('@') {
            let name = r.trim();
            if !is_name(name) {
                return Err(syntax("invalid region name"));
            }
            region = Some(RegionId::from(name));
            tail = "";
        }
        if !tail.trim().is_empty() {
            return Err(syntax("trailing characters"));
        }
        Action::new(verb, ObjectId::from(target), pose, region)
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Renders a sequence as `a1 ; a2 ; ...`.
pub fn render_sequence<'a>(actions: impl IntoIterator<Item = &'a Action>) -> String {
    actions
        .into_iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ; ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_each_shape() {
        assert_eq!(
            Action::pick_up("holder", Some("vertical".into())).to_string(),
            "[PICK UP, holder](vertical)"
        );
        assert_eq!(
            Action::put_on("drawer", "drawer-top-safe").to_string(),
            "[PUT ON, drawer]@drawer-top-safe"
        );
        assert_eq!(Action::close("drawer").to_string(), "[CLOSE, drawer]");
    }

    #[test]
    fn qualifiers_are_verb_restricted() {
        assert_eq!(
            Action::new(ActionVerb::Open, "door".into(), Some("x".into()), None),
            Err(ActionError::PoseNotAllowed(ActionVerb::Open))
        );
        assert!("[PUT INTO, holder]@rim".parse::<Action>().is_err());
        assert!("[OPEN, drawer](side)".parse::<Action>().is_err());
    }

    #[test]
    fn rejects_malformed_text() {
        for bad in ["", "PICK UP, pen", "[PICK, pen]", "[PICK UP, ]", "[OPEN, a] x"] {
            assert!(bad.parse::<Action>().is_err(), "{bad:?} parsed");
        }
    }

    #[test]
    fn equality_includes_qualifiers() {
        let h = Action::pick_up("holder", Some("horizontal".into()));
        let v = Action::pick_up("holder", Some("vertical".into()));
        assert_ne!(h, v);
        assert_ne!(Action::pick_up("holder", None), v);
    }

    fn name() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_-]{0,8}"
    }

    fn action() -> impl Strategy<Value = Action> {
        prop_oneof![
            (name(), proptest::option::of(name()))
                .prop_map(|(t, p)| Action::pick_up(t.as_str(), p.map(|p| p.as_str().into()))),
            (name(), name()).prop_map(|(s, r)| Action::put_on(s.as_str(), r.as_str())),
            name().prop_map(|t| Action::put_into(t.as_str())),
            name().prop_map(|t| Action::open(t.as_str())),
            name().prop_map(|t| Action::close(t.as_str())),
        ]
    }

    proptest! {
        #[test]
        fn text_grammar_round_trips(a in action()) {
            let text = a.to_string();
            prop_assert_eq!(text.parse::<Action>().unwrap(), a);
        }
    }
}
