//! Theoretical shifting-potential analytics: how much a unit workload's
//! carbon intensity could drop by moving it to the best slot within a
//! bounded window, aggregated by local time of day; plus workday/weekend
//! statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmodel::CarbonSignal;
use crate::timegrid::MINUTES_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Future,
    Past,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Future => write!(f, "future"),
            Direction::Past => write!(f, "past"),
        }
    }
}

/// A shifting window: how far a workload may move from its slot, and in
/// which direction. The window always contains the slot itself, so the
/// potential is never negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PotentialWindow {
    pub direction: Direction,
    pub length_min: u32,
}

impl PotentialWindow {
    pub fn future(length_min: u32) -> Self {
        PotentialWindow {
            direction: Direction::Future,
            length_min,
        }
    }

    pub fn past(length_min: u32) -> Self {
        PotentialWindow {
            direction: Direction::Past,
            length_min,
        }
    }

    /// Window extent in slots (excluding the slot itself).
    pub fn slots(&self, resolution_min: u32) -> Result<usize> {
        if self.length_min == 0 || !self.length_min.is_multiple_of(resolution_min) {
            return Err(Error::InvalidInput(format!(
                "window of {} min must be a positive multiple of the {} min resolution",
                self.length_min, resolution_min
            )));
        }
        Ok((self.length_min / resolution_min) as usize)
    }
}

/// Achievable intensity reduction for a unit workload at slot `t`: the
/// signal value at `t` minus the window minimum.
pub fn shifting_potential(signal: &CarbonSignal, t: usize, window: PotentialWindow) -> Result<f64> {
    let k = window.slots(signal.grid.resolution_min)?;
    let (lo, hi) = match window.direction {
        Direction::Future => (t, t + k),
        Direction::Past => (t.wrapping_sub(k), t),
    };
    if lo > t || hi >= signal.len() {
        return Err(Error::OutOfBounds {
            start: lo,
            end: hi + 1,
            len: signal.len(),
        });
    }
    let min = signal.values[lo..=hi]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(signal.values[t] - min)
}

/// Potential statistics for one local time-of-day bucket.
#[derive(Debug, Clone, Serialize)]
pub struct TimeOfDayRow {
    /// Minutes past local midnight.
    pub time_of_day_min: u32,
    pub samples: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    /// Share of days with potential >= the matching configured threshold.
    pub share_at_least: Vec<f64>,
}

/// Aggregated shifting potential over a year, keyed by local time of day.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialByTimeOfDay {
    pub region: String,
    pub direction: Direction,
    pub window_min: u32,
    pub thresholds: Vec<f64>,
    pub rows: Vec<TimeOfDayRow>,
}

/// Aggregates `p(t, W)` for every slot where the window fits, bucketed by
/// local time of day. For each bucket it reports mean, quantiles, and the
/// share of days on which the potential reaches each threshold.
pub fn potential_by_time_of_day(
    signal: &CarbonSignal,
    window: PotentialWindow,
    thresholds: &[f64],
) -> Result<PotentialByTimeOfDay> {
    let k = window.slots(signal.grid.resolution_min)?;
    let buckets = (MINUTES_PER_DAY / signal.grid.resolution_min) as usize;
    let mut per_bucket: Vec<Vec<f64>> = vec![Vec::new(); buckets];

    let range = match window.direction {
        Direction::Future => 0..signal.len().saturating_sub(k),
        Direction::Past => k..signal.len(),
    };
    for t in range {
        let p = shifting_potential(signal, t, window)?;
        let tod = signal.grid.local_time_of_day_min(t);
        per_bucket[(tod / signal.grid.resolution_min) as usize].push(p);
    }

    let rows = per_bucket
        .into_iter()
        .enumerate()
        .filter(|(_, values)| !values.is_empty())
        .map(|(b, mut values)| {
            values.sort_by(f64::total_cmp);
            let samples = values.len();
            let mean = values.iter().sum::<f64>() / samples as f64;
            let share_at_least = thresholds
                .iter()
                .map(|thr| values.iter().filter(|p| **p >= *thr).count() as f64 / samples as f64)
                .collect();
            TimeOfDayRow {
                time_of_day_min: b as u32 * signal.grid.resolution_min,
                samples,
                mean,
                p50: quantile_sorted(&values, 0.5),
                p90: quantile_sorted(&values, 0.9),
                share_at_least,
            }
        })
        .collect();

    Ok(PotentialByTimeOfDay {
        region: signal.region.clone(),
        direction: window.direction,
        window_min: window.length_min,
        thresholds: thresholds.to_vec(),
        rows,
    })
}

/// Linear-interpolated quantile of an ascending slice.
fn quantile_sorted(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let pos = (values.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        values[lo]
    } else {
        let w = pos - lo as f64;
        values[lo] * (1.0 - w) + values[hi] * w
    }
}

/// One bin of the carbon-intensity value distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    /// Inclusive lower edge of the bin.
    pub lower: f64,
    pub count: usize,
}

/// Raw binned counts of the signal's intensity values, for external
/// distribution plots. Bins start at zero with the given width.
pub fn intensity_histogram(signal: &CarbonSignal, bin_width: f64) -> Result<Vec<HistogramBin>> {
    if !bin_width.is_finite() || bin_width <= 0.0 {
        return Err(Error::InvalidInput(format!("bad bin width {bin_width}")));
    }
    let max = signal.values.iter().copied().fold(0.0f64, f64::max);
    let n_bins = (max / bin_width).floor() as usize + 1;
    let mut counts = vec![0usize; n_bins];
    for v in &signal.values {
        counts[(v / bin_width).floor() as usize] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: i as f64 * bin_width,
            count,
        })
        .collect())
}

/// Mean carbon intensity over local workdays vs. weekends, and the relative
/// drop between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeekdayWeekendStats {
    pub workday_mean: f64,
    pub weekend_mean: f64,
    pub drop_percent: f64,
}

pub fn weekday_weekend_stats(signal: &CarbonSignal) -> Result<WeekdayWeekendStats> {
    let slots_per_week = signal.grid.slots_per_day() * 7;
    if signal.len() < slots_per_week {
        return Err(Error::SignalTooShort {
            required: slots_per_week,
            actual: signal.len(),
        });
    }
    let mut workday = (0.0f64, 0usize);
    let mut weekend = (0.0f64, 0usize);
    for (t, v) in signal.values.iter().enumerate() {
        if signal.grid.is_weekend(t) {
            weekend.0 += v;
            weekend.1 += 1;
        } else {
            workday.0 += v;
            workday.1 += 1;
        }
    }
    let workday_mean = workday.0 / workday.1 as f64;
    let weekend_mean = weekend.0 / weekend.1 as f64;
    Ok(WeekdayWeekendStats {
        workday_mean,
        weekend_mean,
        drop_percent: 100.0 * (1.0 - weekend_mean / workday_mean),
    })
}

/// Writes the aggregate matrix as long-format CSV for external plotting.
pub fn write_potential_csv<W: Write>(table: &PotentialByTimeOfDay, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "region".to_string(),
        "direction".to_string(),
        "window_min".to_string(),
        "time_of_day".to_string(),
        "samples".to_string(),
        "mean".to_string(),
        "p50".to_string(),
        "p90".to_string(),
    ];
    for thr in &table.thresholds {
        header.push(format!("share_ge_{thr}"));
    }
    w.write_record(&header)?;
    for row in &table.rows {
        let mut record = vec![
            table.region.clone(),
            table.direction.to_string(),
            table.window_min.to_string(),
            format!("{:02}:{:02}", row.time_of_day_min / 60, row.time_of_day_min % 60),
            row.samples.to_string(),
            format!("{}", row.mean),
            format!("{}", row.p50),
            format!("{}", row.p90),
        ];
        for share in &row.share_at_least {
            record.push(format!("{share}"));
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<potential csv>", e))?;
    Ok(())
}
