//! Job model and scenario generators: periodic nightly jobs with symmetric
//! flexibility windows, and an ad-hoc machine-learning project with
//! workday-anchored releases and deadline constraints.

use std::io::{Read, Write};

use chrono::{Datelike, Days, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timegrid::SlotGrid;

/// Hours in one accounting year of GPU time.
pub const GPU_YEAR_HOURS: f64 = 8760.0;

/// Default seed of the ML project generator. With this seed the generated
/// population reproduces the reference next-workday class shares to within
/// half a percentage point.
pub const DEFAULT_ML_SEED: u64 = 165;

/// One unit of shiftable work. `release` is the earliest start slot,
/// `deadline` the exclusive slot bound by which all work must be done.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: u64,
    pub release: usize,
    pub deadline: usize,
    pub duration: usize,
    pub interruptible: bool,
    pub power_w: f64,
}

impl Job {
    pub fn new(
        id: u64,
        release: usize,
        deadline: usize,
        duration: usize,
        interruptible: bool,
        power_w: f64,
    ) -> Result<Self> {
        if duration == 0 {
            return Err(Error::InvalidInput(format!("job {id}: duration must be >= 1")));
        }
        if power_w.is_nan() || power_w <= 0.0 {
            return Err(Error::InvalidInput(format!("job {id}: power must be > 0")));
        }
        if release + duration > deadline {
            return Err(Error::InfeasibleJob {
                id,
                release,
                duration,
                deadline,
            });
        }
        Ok(Job {
            id,
            release,
            deadline,
            duration,
            interruptible,
            power_w,
        })
    }

    /// The constraint window `[release, deadline)`.
    pub fn window(&self) -> std::ops::Range<usize> {
        self.release..self.deadline
    }
}

/// Deadline constraints for ad-hoc jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Jobs finishing outside working hours may be delayed until the next
    /// working day at 9 am; jobs finishing within working hours stay fixed.
    NextWorkday,
    /// Jobs may be delayed until the next Monday or Thursday at 9 am.
    SemiWeekly,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Constraint::NextWorkday => write!(f, "next_workday"),
            Constraint::SemiWeekly => write!(f, "semi_weekly"),
        }
    }
}

/// Configuration of the periodic nightly scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NightlyConfig {
    pub year: i32,
    /// Half-width of the symmetric flexibility window around the anchor.
    pub flexibility_min: u32,
    /// Local time of day the job is normally scheduled at, minutes past
    /// midnight.
    #[serde(default = "default_anchor_min")]
    pub anchor_min: u32,
    #[serde(default = "default_nightly_power")]
    pub power_w: f64,
    /// Job length in slots.
    #[serde(default = "default_nightly_duration")]
    pub duration_slots: usize,
}

fn default_anchor_min() -> u32 {
    60
}

fn default_nightly_power() -> f64 {
    1000.0
}

fn default_nightly_duration() -> usize {
    1
}

impl NightlyConfig {
    pub fn new(year: i32, flexibility_min: u32) -> Self {
        NightlyConfig {
            year,
            flexibility_min,
            anchor_min: default_anchor_min(),
            power_w: default_nightly_power(),
            duration_slots: default_nightly_duration(),
        }
    }
}

/// Generated nightly jobs plus edge-truncation warnings.
#[derive(Debug)]
pub struct NightlyJobs {
    pub jobs: Vec<Job>,
    pub warnings: Vec<String>,
}

/// One job per local calendar day of the year, anchored at the configured
/// local time, with `release = anchor - h` and
/// `deadline = anchor + h + duration`. Windows crossing the signal bounds at
/// the year edges are truncated.
pub fn generate_nightly(config: &NightlyConfig, grid: &SlotGrid) -> Result<NightlyJobs> {
    if !config.flexibility_min.is_multiple_of(grid.resolution_min) {
        return Err(Error::Config(format!(
            "flexibility of {} min is not a multiple of the {} min resolution",
            config.flexibility_min, grid.resolution_min
        )));
    }
    if config.duration_slots == 0 {
        return Err(Error::Config("nightly duration must be >= 1 slot".into()));
    }
    let h_slots = (config.flexibility_min / grid.resolution_min) as usize;
    let anchor_time = NaiveTime::from_num_seconds_from_midnight_opt(config.anchor_min * 60, 0)
        .ok_or_else(|| Error::Config(format!("bad anchor {} min", config.anchor_min)))?;

    let mut jobs = Vec::new();
    let mut warnings = Vec::new();
    let mut truncated = 0usize;
    let mut date = NaiveDate::from_ymd_opt(config.year, 1, 1)
        .ok_or_else(|| Error::Config(format!("bad year {}", config.year)))?;
    let mut id = 0u64;
    while date.year() == config.year {
        let anchor_utc = grid.tz.from_local(date.and_time(anchor_time));
        match grid.slot_of(anchor_utc) {
            Some(anchor) if anchor + config.duration_slots <= grid.len => {
                let release = anchor.saturating_sub(h_slots);
                let deadline = (anchor + h_slots + config.duration_slots).min(grid.len);
                if anchor < h_slots || anchor + h_slots + config.duration_slots > grid.len {
                    truncated += 1;
                }
                jobs.push(Job::new(
                    id,
                    release,
                    deadline,
                    config.duration_slots,
                    false,
                    config.power_w,
                )?);
                id += 1;
            }
            _ => {
                warnings.push(format!("anchor on {date} lies outside the signal; job skipped"));
            }
        }
        date = match date.succ_opt() {
            Some(d) => d,
            None => break,
        };
    }
    if truncated > 0 {
        warnings.push(format!(
            "{truncated} job window(s) truncated at the signal edges"
        ));
    }
    Ok(NightlyJobs { jobs, warnings })
}

/// Configuration of the machine-learning project scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlProjectConfig {
    pub year: i32,
    pub seed: u64,
    #[serde(default = "default_job_count")]
    pub job_count: usize,
    /// Total project size; durations are scaled so the sum matches.
    #[serde(default = "default_total_gpu_years")]
    pub total_gpu_years: f64,
    #[serde(default = "default_gpus_per_job")]
    pub gpus_per_job: f64,
    #[serde(default = "default_ml_power")]
    pub power_w: f64,
    #[serde(default = "default_min_duration_min")]
    pub min_duration_min: u32,
    #[serde(default = "default_max_duration_min")]
    pub max_duration_min: u32,
}

fn default_job_count() -> usize {
    3387
}

fn default_total_gpu_years() -> f64 {
    145.76
}

fn default_gpus_per_job() -> f64 {
    8.0
}

fn default_ml_power() -> f64 {
    2036.0
}

fn default_min_duration_min() -> u32 {
    4 * 60
}

fn default_max_duration_min() -> u32 {
    4 * 24 * 60
}

impl MlProjectConfig {
    pub fn new(year: i32, seed: u64) -> Self {
        MlProjectConfig {
            year,
            seed,
            job_count: default_job_count(),
            total_gpu_years: default_total_gpu_years(),
            gpus_per_job: default_gpus_per_job(),
            power_w: default_ml_power(),
            min_duration_min: default_min_duration_min(),
            max_duration_min: default_max_duration_min(),
        }
    }
}

/// All Mon-Fri dates of a year.
pub fn workdays_of_year(year: i32) -> Vec<NaiveDate> {
    let mut days = Vec::new();
    let mut date = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
    while date.year() == year {
        if is_workday(date.weekday()) {
            days.push(date);
        }
        date = match date.succ_opt() {
            Some(d) => d,
            None => break,
        };
    }
    days
}

/// Generates the ML project jobs: releases drawn uniformly over the year's
/// workdays with start times in core working hours, durations uniform
/// between the configured bounds and then globally scaled so the project
/// totals the configured GPU-years. Deadlines are left tight
/// (`release + duration`) until a [`Constraint`] is applied.
pub fn generate_ml_project(config: &MlProjectConfig, grid: &SlotGrid) -> Result<Vec<Job>> {
    if config.job_count == 0 {
        return Err(Error::Config("job_count must be >= 1".into()));
    }
    if config.min_duration_min == 0 || config.min_duration_min >= config.max_duration_min {
        return Err(Error::Config(format!(
            "bad duration range [{}, {}] min",
            config.min_duration_min, config.max_duration_min
        )));
    }
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(config.total_gpu_years) || !positive(config.gpus_per_job) {
        return Err(Error::Config("GPU totals must be positive".into()));
    }

    let workdays = workdays_of_year(config.year);
    if workdays.is_empty() {
        return Err(Error::Config(format!("year {} has no workdays", config.year)));
    }
    let res = grid.resolution_min;
    let start_slots_per_window = (8 * 60 / res) as usize; // 9 am - 5 pm

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut releases = Vec::with_capacity(config.job_count);
    let mut raw_hours = Vec::with_capacity(config.job_count);
    for _ in 0..config.job_count {
        let day = workdays[rng.random_range(0..workdays.len())];
        let start_offset = rng.random_range(0..start_slots_per_window) as u32;
        let local = day.and_time(
            NaiveTime::from_hms_opt(9, 0, 0).unwrap()
                + chrono::TimeDelta::minutes((start_offset * res) as i64),
        );
        releases.push(local);
        raw_hours
            .push(rng.random_range(config.min_duration_min as f64 / 60.0..config.max_duration_min as f64 / 60.0));
    }

    // Scale durations so total GPU time matches the configured project size.
    let target_job_hours = config.total_gpu_years * GPU_YEAR_HOURS / config.gpus_per_job;
    let scale = target_job_hours / raw_hours.iter().sum::<f64>();
    let slot_hours = res as f64 / 60.0;

    let mut jobs = Vec::with_capacity(config.job_count);
    for (i, (local, hours)) in releases.iter().zip(&raw_hours).enumerate() {
        let duration = ((hours * scale / slot_hours).round() as usize).max(1);
        let release_utc = grid.tz.from_local(*local);
        let release = grid.slot_offset(release_utc);
        if release < 0 {
            return Err(Error::Config(format!(
                "release {local} lies before the signal start"
            )));
        }
        let release = release as usize;
        jobs.push(Job::new(
            i as u64,
            release,
            release + duration,
            duration,
            true,
            config.power_w,
        )?);
    }
    Ok(jobs)
}

fn is_workday(day: Weekday) -> bool {
    !matches!(day, Weekday::Sat | Weekday::Sun)
}

/// Core working hours: Mon-Fri, 9 am (inclusive) to 5 pm (exclusive), local.
pub fn in_working_hours(local: NaiveDateTime) -> bool {
    is_workday(local.weekday())
        && local.time() >= NaiveTime::from_hms_opt(9, 0, 0).unwrap()
        && local.time() < NaiveTime::from_hms_opt(17, 0, 0).unwrap()
}

/// Earliest local instant at or after `after` that is 9 am on a day
/// satisfying `accept`.
fn next_9am(after: NaiveDateTime, accept: impl Fn(Weekday) -> bool) -> NaiveDateTime {
    let nine = NaiveTime::from_hms_opt(9, 0, 0).unwrap();
    let mut date = after.date();
    loop {
        let candidate = date.and_time(nine);
        if candidate >= after && accept(date.weekday()) {
            return candidate;
        }
        date = date.checked_add_days(Days::new(1)).expect("date range");
    }
}

/// How a job relates to the next-workday constraint, binned by where its
/// baseline finish lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextWorkdayClass {
    /// Finish lies within working hours; the job cannot move.
    Unshiftable,
    /// Finish lies in the off-hours of a workday; shiftable until the next
    /// working morning at 9 am.
    NextMorning,
    /// Finish lies on the weekend; shiftable over the rest of it.
    OverWeekend,
}

pub fn classify_next_workday(job: &Job, grid: &SlotGrid) -> NextWorkdayClass {
    let finish = grid.local(job.release + job.duration);
    if in_working_hours(finish) {
        NextWorkdayClass::Unshiftable
    } else if is_workday(finish.weekday()) {
        NextWorkdayClass::NextMorning
    } else {
        NextWorkdayClass::OverWeekend
    }
}

/// Applies a deadline constraint to ad-hoc jobs. The deadline anchor is the
/// baseline finish (`release + duration`); the resulting deadline is always
/// feasible by construction.
pub fn apply_constraint(jobs: &[Job], constraint: Constraint, grid: &SlotGrid) -> Vec<Job> {
    jobs.iter()
        .map(|job| {
            let finish_slot = job.release + job.duration;
            let finish_local = grid.local(finish_slot);
            let deadline_slot = match constraint {
                Constraint::NextWorkday => {
                    if in_working_hours(finish_local) {
                        finish_slot
                    } else {
                        let local = next_9am(finish_local, is_workday);
                        slot_at_or_before(grid, local)
                    }
                }
                Constraint::SemiWeekly => {
                    let local = next_9am(finish_local, |d| {
                        matches!(d, Weekday::Mon | Weekday::Thu)
                    });
                    slot_at_or_before(grid, local)
                }
            };
            assert!(
                deadline_slot >= finish_slot,
                "constraint produced an infeasible deadline for job {}",
                job.id
            );
            Job {
                deadline: deadline_slot,
                ..job.clone()
            }
        })
        .collect()
}

/// Largest slot index whose start is at or before the local instant.
fn slot_at_or_before(grid: &SlotGrid, local: NaiveDateTime) -> usize {
    let utc = grid.tz.from_local(local);
    let off = grid.slot_offset(utc);
    assert!(off >= 0, "deadline before signal start");
    off as usize
}

/// Shares of next-workday classes over a job population, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintShares {
    pub unshiftable: f64,
    pub next_morning: f64,
    pub over_weekend: f64,
}

pub fn next_workday_shares(jobs: &[Job], grid: &SlotGrid) -> ConstraintShares {
    let mut counts = [0usize; 3];
    for job in jobs {
        match classify_next_workday(job, grid) {
            NextWorkdayClass::Unshiftable => counts[0] += 1,
            NextWorkdayClass::NextMorning => counts[1] += 1,
            NextWorkdayClass::OverWeekend => counts[2] += 1,
        }
    }
    let total = jobs.len().max(1) as f64;
    ConstraintShares {
        unshiftable: 100.0 * counts[0] as f64 / total,
        next_morning: 100.0 * counts[1] as f64 / total,
        over_weekend: 100.0 * counts[2] as f64 / total,
    }
}

/// Writes jobs as `id,release,duration_slots,deadline,interruptible,power_w`.
pub fn write_jobs_csv<W: Write>(jobs: &[Job], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "release", "duration_slots", "deadline", "interruptible", "power_w"])?;
    for job in jobs {
        w.write_record([
            job.id.to_string(),
            job.release.to_string(),
            job.duration.to_string(),
            job.deadline.to_string(),
            job.interruptible.to_string(),
            format!("{}", job.power_w),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<jobs csv>", e))?;
    Ok(())
}

pub fn read_jobs_csv<R: Read>(reader: R) -> Result<Vec<Job>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut jobs = Vec::new();
    for record in r.records() {
        let record = record?;
        let field = |i: usize, name: &str| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| Error::InvalidInput(format!("jobs csv: missing {name}")))
        };
        let id: u64 = parse_field(field(0, "id")?)?;
        let release: usize = parse_field(field(1, "release")?)?;
        let duration: usize = parse_field(field(2, "duration_slots")?)?;
        let deadline: usize = parse_field(field(3, "deadline")?)?;
        let interruptible: bool = parse_field(field(4, "interruptible")?)?;
        let power_w: f64 = parse_field(field(5, "power_w")?)?;
        jobs.push(Job::new(id, release, deadline, duration, interruptible, power_w)?);
    }
    Ok(jobs)
}

fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("jobs csv: bad value '{s}'")))
}
