use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Ablation switch for the planner and executor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Full,
    /// Only the first enumerated candidate branch is kept.
    NoPriori,
    /// Failures are never repaired.
    NoReflective,
    /// Closed-loop execution gives up at the first real failure.
    NoReplan,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Full, Mode::NoPriori, Mode::NoReflective, Mode::NoReplan];

    pub fn single_branch(self) -> bool {
        self == Mode::NoPriori
    }

    pub fn reflective(self) -> bool {
        self != Mode::NoReflective
    }

    pub fn max_replans(self, configured: usize) -> usize {
        if self == Mode::NoReplan {
            0
        } else {
            configured
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoPriori => "no-priori",
            Mode::NoReflective => "no-reflective",
            Mode::NoReplan => "no-replan",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected full, no-priori, no-reflective or no-replan)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("fast".parse::<Mode>().is_err());
    }

    #[test]
    fn switches() {
        assert!(Mode::NoPriori.single_branch());
        assert!(!Mode::NoReflective.reflective());
        assert_eq!(Mode::NoReplan.max_replans(3), 0);
        assert_eq!(Mode::Full.max_replans(3), 3);
    }
}
