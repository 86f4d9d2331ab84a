use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Timelike};

use crate::Error;

/// Whole hours since 1970-01-01T00:00Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hour(pub i64);

impl Hour {
    pub fn offset(self, hours: i64) -> Hour {
        Hour(self.0 + hours)
    }

    /// Hour of day in UTC, 0..24.
    pub fn hour_of_day(self) -> u32 {
        self.0.rem_euclid(24) as u32
    }

    fn datetime(self) -> NaiveDateTime {
        DateTime::from_timestamp(self.0 * 3600, 0)
            .expect("hour within chrono range")
            .naive_utc()
    }

    /// Parses `YYYY-MM-DDTHH:MMZ` (seconds optional). Minutes and seconds must be zero.
    pub fn parse(s: &str) -> Result<Hour, Error> {
        let s = s.trim();
        let body = s.strip_suffix('Z').unwrap_or(s);
        let dt = NaiveDateTime::parse_from_str(body, "%Y-%m-%dT%H:%M")
            .or_else(|_| NaiveDateTime::parse_from_str(body, "%Y-%m-%dT%H:%M:%S"))
            .map_err(|e| Error::InvalidParameter(format!("bad timestamp `{s}`: {e}")))?;
        if dt.minute() != 0 || dt.second() != 0 {
            return Err(Error::InvalidParameter(format!(
                "timestamp `{s}` is not on the hour"
            )));
        }
        Ok(Hour(dt.and_utc().timestamp().div_euclid(3600)))
    }

    /// Parses a timestamp and rounds it to the nearest hour.
    pub fn parse_nearest(s: &str) -> Result<Hour, Error> {
        let s = s.trim();
        let body = s.strip_suffix('Z').unwrap_or(s);
        let dt = NaiveDateTime::parse_from_str(body, "%Y-%m-%dT%H:%M:%S")
            .or_else(|_| NaiveDateTime::parse_from_str(body, "%Y-%m-%dT%H:%M"))
            .or_else(|_| NaiveDateTime::parse_from_str(body, "%Y-%m-%dT%H"))
            .map_err(|e| Error::InvalidParameter(format!("bad timestamp `{s}`: {e}")))?;
        let secs = dt.and_utc().timestamp();
        Ok(Hour((secs + 1800).div_euclid(3600)))
    }
}

impl fmt::Display for Hour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.datetime().format("%Y-%m-%dT%H:%MZ"))
    }
}

impl FromStr for Hour {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Hour::parse(s)
    }
}
