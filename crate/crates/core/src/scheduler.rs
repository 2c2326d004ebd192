//! Slot assignment under the three scheduling strategies, and emissions
//! accounting against the true signal.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmodel::CarbonSignal;
use crate::workload::Job;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Run at release time; the reference for savings.
    BaselineImmediate,
    /// Contiguous window with the lowest mean forecast intensity.
    NonInterrupting,
    /// The cheapest individual slots, executed in chronological order.
    Interrupting,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::BaselineImmediate => write!(f, "baseline_immediate"),
            Strategy::NonInterrupting => write!(f, "non_interrupting"),
            Strategy::Interrupting => write!(f, "interrupting"),
        }
    }
}

/// Execution slots assigned to one job, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub job_id: u64,
    pub slots: Vec<usize>,
}

impl Assignment {
    /// Checks the assignment against the job's constraints: slot count,
    /// window membership, ordering, and contiguity for non-interruptible
    /// jobs.
    pub fn validate(&self, job: &Job) -> Result<()> {
        if self.slots.is_empty() {
            return Err(Error::InvalidInput(format!(
                "job {}: empty assignment",
                job.id
            )));
        }
        if self.slots.len() != job.duration {
            return Err(Error::InvalidInput(format!(
                "job {}: assignment has {} slots, duration is {}",
                job.id,
                self.slots.len(),
                job.duration
            )));
        }
        if self.slots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "job {}: slots not strictly ascending",
                job.id
            )));
        }
        let (first, last) = (self.slots[0], *self.slots.last().unwrap());
        if first < job.release || last >= job.deadline {
            return Err(Error::InvalidInput(format!(
                "job {}: slots outside [{}, {})",
                job.id, job.release, job.deadline
            )));
        }
        if !job.interruptible && last - first + 1 != job.duration {
            return Err(Error::InvalidInput(format!(
                "job {}: non-interruptible job assigned non-contiguous slots",
                job.id
            )));
        }
        Ok(())
    }
}

/// Chooses execution slots for a job given a forecast over its constraint
/// window `[release, deadline)`. Ties break toward the earliest placement.
///
/// The interrupting strategy falls back to a contiguous window for jobs
/// that are not interruptible.
pub fn schedule(job: &Job, forecast: &[f64], strategy: Strategy) -> Result<Assignment> {
    let window = job.deadline - job.release;
    if forecast.len() != window {
        return Err(Error::InvalidInput(format!(
            "job {}: forecast covers {} slots, constraint window is {}",
            job.id,
            forecast.len(),
            window
        )));
    }
    if job.duration > window {
        return Err(Error::InfeasibleJob {
            id: job.id,
            release: job.release,
            duration: job.duration,
            deadline: job.deadline,
        });
    }

    let slots = match strategy {
        Strategy::BaselineImmediate => (0..job.duration).collect::<Vec<_>>(),
        Strategy::NonInterrupting => best_contiguous(forecast, job.duration),
        Strategy::Interrupting if job.interruptible => best_slots(forecast, job.duration),
        Strategy::Interrupting => best_contiguous(forecast, job.duration),
    };

    let assignment = Assignment {
        job_id: job.id,
        slots: slots.into_iter().map(|s| s + job.release).collect(),
    };
    assignment.validate(job)?;
    Ok(assignment)
}

/// Start of the contiguous window of `duration` slots with the lowest sum.
/// Sums are computed per window so the choice matches exhaustive
/// enumeration exactly, including on ties.
fn best_contiguous(forecast: &[f64], duration: usize) -> Vec<usize> {
    let mut best_start = 0;
    let mut best_sum = f64::INFINITY;
    for start in 0..=(forecast.len() - duration) {
        let sum: f64 = forecast[start..start + duration].iter().sum();
        if sum < best_sum {
            best_sum = sum;
            best_start = start;
        }
    }
    (best_start..best_start + duration).collect()
}

/// The `duration` slots with the lowest forecast values, earlier slots
/// preferred on ties, returned ascending.
fn best_slots(forecast: &[f64], duration: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..forecast.len()).collect();
    order.sort_by(|a, b| forecast[*a].total_cmp(&forecast[*b]).then(a.cmp(b)));
    let mut chosen = order[..duration].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Emissions of an assignment in grams of CO2, evaluated on the true
/// signal: power (kW) x slot hours x intensity, summed over slots.
pub fn emissions(assignment: &Assignment, job: &Job, signal: &CarbonSignal) -> Result<f64> {
    assignment.validate(job)?;
    let slot_energy_kwh = job.power_w / 1000.0 * signal.grid.slot_hours();
    let mut total = 0.0;
    for &slot in &assignment.slots {
        if slot >= signal.len() {
            return Err(Error::OutOfBounds {
                start: slot,
                end: slot + 1,
                len: signal.len(),
            });
        }
        total += slot_energy_kwh * signal.values[slot];
    }
    Ok(total)
}

/// Writes assignments as `job_id,slot_index` rows for audit and plotting.
pub fn write_assignments_csv<W: Write>(assignments: &[Assignment], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["job_id", "slot_index"])?;
    for a in assignments {
        for slot in &a.slots {
            w.write_record([a.job_id.to_string(), slot.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<assignments csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timegrid::{SlotGrid, TzTable};
    use chrono::NaiveDate;

    fn signal(values: Vec<f64>) -> CarbonSignal {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
            .and_utc();
        let grid = SlotGrid::new(start, 30, values.len(), TzTable::utc()).unwrap();
        CarbonSignal::new("test", grid, values).unwrap()
    }

    fn job(release: usize, deadline: usize, duration: usize, interruptible: bool) -> Job {
        Job::new(1, release, deadline, duration, interruptible, 1000.0).unwrap()
    }

    #[test]
    fn constant_forecast_places_all_strategies_at_release() {
        let j = job(3, 10, 2, true);
        let forecast = vec![100.0; 7];
        for strategy in [
            Strategy::BaselineImmediate,
            Strategy::NonInterrupting,
            Strategy::Interrupting,
        ] {
            let a = schedule(&j, &forecast, strategy).unwrap();
            assert_eq!(a.slots, vec![3, 4], "{strategy}");
        }
    }

    #[test]
    fn interrupting_picks_cheapest_individual_slots() {
        let j = job(0, 5, 2, true);
        let a = schedule(&j, &[5.0, 1.0, 9.0, 1.0, 5.0], Strategy::Interrupting).unwrap();
        assert_eq!(a.slots, vec![1, 3]);
    }

    #[test]
    fn non_interrupting_breaks_ties_toward_the_earliest_window() {
        let j = job(0, 5, 2, false);
        // Windows {0,1} and {3,4} both sum to 6; earliest wins.
        let a = schedule(&j, &[5.0, 1.0, 9.0, 1.0, 5.0], Strategy::NonInterrupting).unwrap();
        assert_eq!(a.slots, vec![0, 1]);
    }

    #[test]
    fn interrupting_respects_non_interruptible_jobs() {
        let j = job(0, 5, 2, false);
        let a = schedule(&j, &[5.0, 1.0, 9.0, 1.0, 5.0], Strategy::Interrupting).unwrap();
        // Falls back to the contiguous optimum.
        assert_eq!(a.slots, vec![0, 1]);
        a.validate(&j).unwrap();
    }

    #[test]
    fn forecast_length_must_match_window() {
        let j = job(0, 5, 2, true);
        assert!(schedule(&j, &[1.0; 4], Strategy::Interrupting).is_err());
        assert!(schedule(&j, &[1.0; 6], Strategy::Interrupting).is_err());
    }

    #[test]
    fn emissions_of_half_hour_kilowatt_slot() {
        let s = signal(vec![200.0, 300.0]);
        let j = job(0, 1, 1, false);
        let a = Assignment {
            job_id: 1,
            slots: vec![0],
        };
        // 1 kW for 30 min at 200 gCO2/kWh.
        assert_eq!(emissions(&a, &j, &s).unwrap(), 100.0);
    }

    #[test]
    fn emissions_scale_linearly_with_power() {
        let s = signal(vec![150.0, 250.0, 350.0]);
        let j1 = Job::new(1, 0, 3, 2, true, 1000.0).unwrap();
        let j2 = Job::new(1, 0, 3, 2, true, 2000.0).unwrap();
        let a = Assignment {
            job_id: 1,
            slots: vec![0, 2],
        };
        let e1 = emissions(&a, &j1, &s).unwrap();
        let e2 = emissions(&a, &j2, &s).unwrap();
        assert!((e2 - 2.0 * e1).abs() < 1e-12);
    }

    #[test]
    fn empty_assignment_rejected() {
        let s = signal(vec![100.0]);
        let j = job(0, 1, 1, false);
        let a = Assignment {
            job_id: 1,
            slots: vec![],
        };
        assert!(emissions(&a, &j, &s).is_err());
    }

    #[test]
    fn out_of_signal_slot_rejected() {
        let s = signal(vec![100.0, 100.0]);
        let j = job(1, 4, 1, false);
        let a = Assignment {
            job_id: 1,
            slots: vec![3],
        };
        assert!(matches!(emissions(&a, &j, &s), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn validate_catches_gap_in_non_interruptible_assignment() {
        let j = job(0, 5, 2, false);
        let a = Assignment {
            job_id: 1,
            slots: vec![0, 2],
        };
        assert!(a.validate(&j).is_err());
    }

    #[test]
    fn adding_a_constant_does_not_change_the_choice() {
        let base = [320.0, 15.0, 230.5, 15.0, 88.0, 310.0, 9.0];
        let shifted: Vec<f64> = base.iter().map(|v| v + 500.0).collect();
        for (duration, interruptible) in [(2, true), (3, false)] {
            let j = job(0, base.len(), duration, interruptible);
            for strategy in [Strategy::NonInterrupting, Strategy::Interrupting] {
                let a = schedule(&j, &base, strategy).unwrap();
                let b = schedule(&j, &shifted, strategy).unwrap();
                assert_eq!(a.slots, b.slots);
            }
        }
    }
}
