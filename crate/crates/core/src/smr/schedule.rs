use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurtleKind {
    Onestep,
    Lowerbound,
    BftOnestep,
    BftLowerbound,
}

impl TurtleKind {
    pub const ALL: [TurtleKind; 4] = [
        TurtleKind::Onestep,
        TurtleKind::Lowerbound,
        TurtleKind::BftOnestep,
        TurtleKind::BftLowerbound,
    ];

    /// Quorum intersection degree the protocol needs.
    pub fn required_intersection(self) -> usize {
        match self {
            TurtleKind::Onestep => 3,
            TurtleKind::Lowerbound => 2,
            TurtleKind::BftOnestep => 5,
            TurtleKind::BftLowerbound => 3,
        }
    }

    pub fn is_bft(self) -> bool {
        matches!(self, TurtleKind::BftOnestep | TurtleKind::BftLowerbound)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TurtleKind::Onestep => "onestep",
            TurtleKind::Lowerbound => "lowerbound",
            TurtleKind::BftOnestep => "bft_onestep",
            TurtleKind::BftLowerbound => "bft_lowerbound",
        }
    }
}

impl fmt::Display for TurtleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How many consecutive instances an entry covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Repeat {
    Times(u64),
    /// Every remaining instance; later entries are never reached.
    Cycle,
}

impl Default for Repeat {
    fn default() -> Self {
        Repeat::Times(1)
    }
}

impl Serialize for Repeat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Repeat::Times(n) => s.serialize_u64(*n),
            Repeat::Cycle => s.serialize_str("cycle"),
        }
    }
}

impl<'de> Deserialize<'de> for Repeat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Times(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Times(0) => Err(serde::de::Error::custom("repeat must be at least 1")),
            Raw::Times(n) => Ok(Repeat::Times(n)),
            Raw::Word(w) if w == "cycle" => Ok(Repeat::Cycle),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "repeat must be a positive integer or \"cycle\", got {w:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub kind: TurtleKind,
    #[serde(default)]
    pub repeat: Repeat,
}

/// Which turtle protocol runs at each instance.
///
/// Entries are laid out in order; once the list is exhausted it starts over,
/// so `[onestep, lowerbound]` alternates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TurtleSchedule {
    entries: Vec<ScheduleEntry>,
}

impl TurtleSchedule {
    pub fn new(entries: Vec<ScheduleEntry>) -> Option<Self> {
        (!entries.is_empty()).then_some(Self { entries })
    }

    pub fn uniform(kind: TurtleKind) -> Self {
        Self {
            entries: vec![ScheduleEntry {
                kind,
                repeat: Repeat::Cycle,
            }],
        }
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn kinds(&self) -> impl Iterator<Item = TurtleKind> + '_ {
        self.entries.iter().map(|e| e.kind)
    }

    /// Protocol of instance `i` (1-based). Instance 0 has none.
    pub fn kind_for(&self, i: u64) -> Option<TurtleKind> {
        if i == 0 {
            return None;
        }
        let mut pos = i - 1;
        let mut period = 0u64;
        for e in &self.entries {
            match e.repeat {
                Repeat::Cycle => return Some(e.kind),
                Repeat::Times(r) => {
                    if pos < r {
                        return Some(e.kind);
                    }
                    pos -= r;
                    period += r;
                }
            }
        }
        // Every entry is finite here; wrap around.
        let mut pos = (i - 1) % period;
        for e in &self.entries {
            if let Repeat::Times(r) = e.repeat {
                if pos < r {
                    return Some(e.kind);
                }
                pos -= r;
            }
        }
        unreachable!("position within one period always lands on an entry")
    }

    pub fn max_required_intersection(&self) -> usize {
        self.kinds().map(TurtleKind::required_intersection).max().unwrap_or(0)
    }
}

impl FromStr for TurtleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TurtleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown turtle kind {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(kind: TurtleKind, repeat: Repeat) -> ScheduleEntry {
        ScheduleEntry { kind, repeat }
    }

    #[test]
    fn alternating_schedule_wraps() {
        let s = TurtleSchedule::new(vec![
            entry(TurtleKind::Onestep, Repeat::Times(1)),
            entry(TurtleKind::Lowerbound, Repeat::Times(2)),
        ])
        .unwrap();
        let kinds: Vec<_> = (1..=7).map(|i| s.kind_for(i).unwrap()).collect();
        use TurtleKind::*;
        assert_eq!(
            kinds,
            [Onestep, Lowerbound, Lowerbound, Onestep, Lowerbound, Lowerbound, Onestep]
        );
        assert_eq!(s.kind_for(0), None);
        assert_eq!(s.max_required_intersection(), 3);
    }

    #[test]
    fn cycle_holds_forever() {
        let s = TurtleSchedule::new(vec![
            entry(TurtleKind::Lowerbound, Repeat::Times(2)),
            entry(TurtleKind::Onestep, Repeat::Cycle),
            entry(TurtleKind::BftOnestep, Repeat::Times(1)),
        ])
        .unwrap();
        assert_eq!(s.kind_for(2), Some(TurtleKind::Lowerbound));
        assert_eq!(s.kind_for(3), Some(TurtleKind::Onestep));
        assert_eq!(s.kind_for(1_000_000), Some(TurtleKind::Onestep));
    }

    #[test]
    fn entries_parse_from_json() {
        let e: Vec<ScheduleEntry> = serde_json::from_str(
            r#"[{"kind":"onestep","repeat":3},{"kind":"bft_lowerbound","repeat":"cycle"},{"kind":"lowerbound"}]"#,
        )
        .unwrap();
        assert_eq!(e[0], entry(TurtleKind::Onestep, Repeat::Times(3)));
        assert_eq!(e[1], entry(TurtleKind::BftLowerbound, Repeat::Cycle));
        assert_eq!(e[2], entry(TurtleKind::Lowerbound, Repeat::Times(1)));
        assert!(serde_json::from_str::<ScheduleEntry>(r#"{"kind":"onestep","repeat":0}"#).is_err());
        assert!(serde_json::from_str::<ScheduleEntry>(r#"{"kind":"onestep","repeat":"x"}"#).is_err());
        assert!(serde_json::from_str::<ScheduleEntry>(r#"{"kind":"paxos"}"#).is_err());
    }
}
