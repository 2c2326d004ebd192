//! Slot arithmetic over a fixed-resolution time grid.
//!
//! All timestamps are stored in UTC. Scheduling semantics ("1 am", "9 am",
//! weekends) are expressed in region-local time, resolved through a fixed
//! offset table that also covers DST transitions.

use chrono::{DateTime, Datelike, NaiveDateTime, TimeDelta, Utc, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 24 * 60;

/// UTC offset table: a base offset plus dated transitions.
///
/// Enough to model one region's DST schedule without a tz database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TzTable {
    /// Offset in seconds east of UTC before the first transition.
    pub base_offset_secs: i32,
    /// `(effective from, offset seconds)` pairs, sorted ascending by instant.
    pub transitions: Vec<(DateTime<Utc>, i32)>,
}

impl TzTable {
    pub fn utc() -> Self {
        Self::fixed(0)
    }

    pub fn fixed(offset_secs: i32) -> Self {
        TzTable {
            base_offset_secs: offset_secs,
            transitions: Vec::new(),
        }
    }

    pub fn with_transitions(base_offset_secs: i32, transitions: Vec<(DateTime<Utc>, i32)>) -> Result<Self> {
        if transitions.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config(
                "timezone transitions must be sorted by instant".into(),
            ));
        }
        Ok(TzTable {
            base_offset_secs,
            transitions,
        })
    }

    /// Offset in effect at a UTC instant.
    pub fn offset_at(&self, t: DateTime<Utc>) -> i32 {
        self.transitions
            .iter()
            .take_while(|(from, _)| *from <= t)
            .last()
            .map(|(_, off)| *off)
            .unwrap_or(self.base_offset_secs)
    }

    pub fn to_local(&self, t: DateTime<Utc>) -> NaiveDateTime {
        (t + TimeDelta::seconds(self.offset_at(t) as i64)).naive_utc()
    }

    /// Earliest UTC instant whose local representation equals `local`.
    ///
    /// During a backward transition (fold) the earlier instant wins; in a
    /// forward gap the base interpretation is used. Anchors used by the
    /// schedulers (1 am, 9 am) never fall inside real-world gaps, which sit
    /// around 2-3 am.
    pub fn from_local(&self, local: NaiveDateTime) -> DateTime<Utc> {
        let mut offsets: Vec<i32> = std::iter::once(self.base_offset_secs)
            .chain(self.transitions.iter().map(|(_, o)| *o))
            .collect();
        offsets.sort_unstable();
        offsets.dedup();

        let mut best: Option<DateTime<Utc>> = None;
        for off in offsets {
            let candidate = (local - TimeDelta::seconds(off as i64)).and_utc();
            if self.offset_at(candidate) == off {
                best = Some(match best {
                    Some(b) if b <= candidate => b,
                    _ => candidate,
                });
            }
        }
        best.unwrap_or_else(|| (local - TimeDelta::seconds(self.base_offset_secs as i64)).and_utc())
    }
}

/// Geometry of a sampled period: start instant, slot resolution, slot count,
/// and the local-time rules of the region it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotGrid {
    pub start: DateTime<Utc>,
    pub resolution_min: u32,
    pub len: usize,
    pub tz: TzTable,
}

impl SlotGrid {
    pub fn new(start: DateTime<Utc>, resolution_min: u32, len: usize, tz: TzTable) -> Result<Self> {
        if resolution_min == 0 || !MINUTES_PER_DAY.is_multiple_of(resolution_min) {
            return Err(Error::UnevenResolution(resolution_min));
        }
        Ok(SlotGrid {
            start,
            resolution_min,
            len,
            tz,
        })
    }

    pub fn slot_hours(&self) -> f64 {
        self.resolution_min as f64 / 60.0
    }

    pub fn slots_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.resolution_min) as usize
    }

    /// UTC start instant of a slot. Extrapolates for indices beyond `len`.
    pub fn slot_start(&self, slot: usize) -> DateTime<Utc> {
        self.start + TimeDelta::minutes(slot as i64 * self.resolution_min as i64)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.slot_start(self.len)
    }

    /// Signed slot offset of an instant from the grid start (floor division).
    pub fn slot_offset(&self, t: DateTime<Utc>) -> i64 {
        let delta_min = (t - self.start).num_minutes();
        delta_min.div_euclid(self.resolution_min as i64)
    }

    /// Index of the slot containing `t`, if within the grid.
    pub fn slot_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let off = self.slot_offset(t);
        if off >= 0 && (off as usize) < self.len {
            Some(off as usize)
        } else {
            None
        }
    }

    pub fn local(&self, slot: usize) -> NaiveDateTime {
        self.tz.to_local(self.slot_start(slot))
    }

    /// Minutes past local midnight at the start of a slot.
    pub fn local_time_of_day_min(&self, slot: usize) -> u32 {
        let local = self.local(slot);
        (local.time() - chrono::NaiveTime::MIN).num_minutes() as u32
    }

    pub fn local_weekday(&self, slot: usize) -> Weekday {
        self.local(slot).weekday()
    }

    pub fn is_weekend(&self, slot: usize) -> bool {
        matches!(self.local_weekday(slot), Weekday::Sat | Weekday::Sun)
    }

    /// Grid with the same span and timezone at a different resolution.
    pub fn with_resolution(&self, resolution_min: u32, len: usize) -> Result<Self> {
        SlotGrid::new(self.start, resolution_min, len, self.tz.clone())
    }
}

/// Parses a human duration like `30min`, `8h`, `2d` or a bare minute count.
pub fn parse_duration_min(s: &str) -> Result<u32> {
    let s = s.trim();
    let (num, unit) = match s.find(|c: char| !c.is_ascii_digit()) {
        Some(i) => s.split_at(i),
        None => (s, ""),
    };
    let n: u32 = num
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad duration '{s}'")))?;
    let minutes = match unit.trim() {
        "" | "m" | "min" => n,
        "h" | "hr" => n * 60,
        "d" | "day" | "days" => n * MINUTES_PER_DAY,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown duration unit '{other}' in '{s}'"
            )))
        }
    };
    Ok(minutes)
}

/// Parses a UTC offset like `+01:00`, `-08:00`, or `Z` into seconds.
pub fn parse_offset_secs(s: &str) -> Result<i32> {
    let s = s.trim();
    if s.is_empty() || s == "Z" || s == "z" {
        return Ok(0);
    }
    let (sign, rest) = match s.as_bytes()[0] {
        b'+' => (1, &s[1..]),
        b'-' => (-1, &s[1..]),
        _ => (1, s),
    };
    let (h, m) = match rest.split_once(':') {
        Some((h, m)) => (h, m),
        None if rest.len() == 4 => rest.split_at(2),
        None => (rest, "0"),
    };
    let hours: i32 = h
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad offset '{s}'")))?;
    let minutes: i32 = m
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad offset '{s}'")))?;
    Ok(sign * (hours * 3600 + minutes * 60))
}

/// Parses an ISO-8601 timestamp, returning UTC. Naive timestamps are read as UTC.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(naive.and_utc());
        }
    }
    Err(Error::InvalidInput(format!("unparseable timestamp '{s}'")))
}
