use std::fmt;

use crate::error::{Error, Result};

/// Values assigned to the two treatment components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Regime {
    pub a_y: u8,
    pub a_d: u8,
}

impl Regime {
    pub fn new(a_y: u8, a_d: u8) -> Result<Self> {
        if a_y > 1 || a_d > 1 {
            return Err(Error::MissingRegime(format!("components must be 0 or 1, got ({a_y}, {a_d})")));
        }
        Ok(Regime { a_y, a_d })
    }

    /// Both components at the same value, i.e. an arm of the observed trial.
    pub fn is_diagonal(self) -> bool {
        self.a_y == self.a_d
    }

    pub fn all() -> [Regime; 4] {
        [Regime { a_y: 0, a_d: 0 }, Regime { a_y: 0, a_d: 1 }, Regime { a_y: 1, a_d: 0 }, Regime { a_y: 1, a_d: 1 }]
    }

    /// Parse `ay=1;ad=0`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::MissingRegime(format!("cannot parse regime '{s}'"));
        let (y, d) = s.split_once(';').ok_or_else(bad)?;
        let y = y.trim().strip_prefix("ay=").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let d = d.trim().strip_prefix("ad=").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        Regime::new(y, d)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ay={};ad={}", self.a_y, self.a_d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trip() {
        for r in Regime::all() {
            assert_eq!(Regime::parse(&r.to_string()).unwrap(), r);
        }
        assert!(Regime::parse("ay=2;ad=0").is_err());
        assert!(Regime::parse("1,0").is_err());
    }
}
