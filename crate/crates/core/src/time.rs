use std::fmt;

use chrono::{DateTime, SecondsFormat};
use serde::{Deserialize, Serialize};

/// UTC instant stored as integer microseconds since the Unix epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_micros(us: i64) -> Self {
        Self(us)
    }

    pub const fn as_micros(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Midpoint, rounded toward negative infinity.
    pub fn midpoint(self, other: Timestamp) -> Timestamp {
        Timestamp(self.0 + (other.0 - self.0).div_euclid(2))
    }

    /// ISO-8601 with a `Z` suffix; sub-second digits only when non-zero.
    pub fn to_iso8601(self) -> String {
        match DateTime::from_timestamp_micros(self.0) {
            Some(dt) if self.0.rem_euclid(1_000_000) == 0 => {
                dt.to_rfc3339_opts(SecondsFormat::Secs, true)
            }
            Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Micros, true),
            None => format!("{}us", self.0),
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso8601())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso_formatting() {
        assert_eq!(Timestamp(1_718_182_800_000_000).to_iso8601(), "2024-06-12T09:00:00Z");
        assert_eq!(Timestamp(1_718_182_800_000_250).to_iso8601(), "2024-06-12T09:00:00.000250Z");
    }

    #[test]
    fn midpoint_of_clip() {
        assert_eq!(Timestamp(0).midpoint(Timestamp(5_000_000)), Timestamp(2_500_000));
        assert_eq!(Timestamp(-3).midpoint(Timestamp(0)), Timestamp(-2));
    }
}
