use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A calendar quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Self {
        assert!((1..=4).contains(&q), "quarter out of range");
        Quarter { year, q }
    }

    pub fn index(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn from_index(i: i64) -> Self {
        Quarter { year: i.div_euclid(4) as i32, q: (i.rem_euclid(4) + 1) as u8 }
    }

    pub fn succ(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn offset(self, n: i64) -> Self {
        Self::from_index(self.index() + n)
    }

    pub fn of_month(year: i32, month: u32) -> Self {
        Quarter { year, q: ((month - 1) / 3 + 1) as u8 }
    }

    /// Consecutive quarters `[start, end]`.
    pub fn range(start: Quarter, end: Quarter) -> Vec<Quarter> {
        (start.index()..=end.index()).map(Self::from_index).collect()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = String;

    /// Accepts `1960Q1`, `1960-Q1`, `1960q1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_uppercase().replace('-', "");
        let (y, q) = t.split_once('Q').ok_or_else(|| format!("bad quarter '{s}'"))?;
        let year: i32 = y.parse().map_err(|_| format!("bad year in '{s}'"))?;
        let q: u8 = q.parse().map_err(|_| format!("bad quarter in '{s}'"))?;
        if !(1..=4).contains(&q) {
            return Err(format!("quarter out of range in '{s}'"));
        }
        Ok(Quarter { year, q })
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
