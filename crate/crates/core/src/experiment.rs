//! Experiment orchestration: scenario runs with repeated noisy forecasts,
//! baseline comparison, savings statistics, and result emission.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ForecastModel;
use crate::gridmodel::CarbonSignal;
use crate::scheduler::{emissions, schedule, Assignment, Strategy};
use crate::workload::{
    apply_constraint, generate_ml_project, generate_nightly, Constraint, Job, MlProjectConfig,
    NightlyConfig,
};

/// Which workload a run simulates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Nightly(NightlyConfig),
    MlProject(MlProjectConfig),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Nightly(_) => "nightly",
            Scenario::MlProject(_) => "ml_project",
        }
    }
}

fn default_repetitions() -> usize {
    10
}

fn default_flag_factor() -> f64 {
    1.5
}

/// One experiment: a scenario scheduled under a strategy and forecast
/// model, repeated over noise realizations and compared to the immediate
/// baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Key of the carbon signal this experiment runs against.
    pub region: String,
    pub scenario: Scenario,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Constraint>,
    pub forecast: ForecastModel,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Scheduled concurrency above `factor x baseline` raises a flag.
    #[serde(default = "default_flag_factor")]
    pub concurrency_flag_factor: f64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        self.forecast.validate()?;
        match (&self.scenario, self.constraint) {
            (Scenario::Nightly(_), Some(_)) => Err(Error::Config(
                "nightly scenario has a built-in window; no constraint applies".into(),
            )),
            (Scenario::MlProject(_), None) => Err(Error::Config(
                "ml_project scenario requires a constraint".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Relative forecast error, zero for the perfect model.
    pub fn relative_error(&self) -> f64 {
        match self.forecast {
            ForecastModel::Perfect => 0.0,
            ForecastModel::GaussianNoise { relative_sigma, .. } => relative_sigma,
        }
    }
}

/// Aggregated outcome of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub region: String,
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Constraint>,
    pub strategy: Strategy,
    pub relative_error: f64,
    pub repetitions: usize,
    pub job_count: usize,
    pub baseline_emissions_g: f64,
    /// Mean over repetitions.
    pub total_emissions_g: f64,
    pub per_repetition_emissions_g: Vec<f64>,
    pub savings_percent: f64,
    pub per_repetition_savings_percent: Vec<f64>,
    pub savings_std_percent: f64,
    /// Active jobs per slot in the first repetition.
    pub allocation_histogram: Vec<u32>,
    pub max_concurrent: u32,
    pub baseline_max_concurrent: u32,
    pub concurrency_flagged: bool,
    pub warnings: Vec<String>,
}

/// Jobs of a scenario: the constrained population to schedule and the
/// baseline population executed immediately at release. For the nightly
/// scenario the baseline is the zero-flexibility variant (every job at its
/// anchor); for the ML project both sets share releases and durations.
fn build_jobs(spec: &ExperimentSpec, signal: &CarbonSignal) -> Result<(Vec<Job>, Vec<Job>, Vec<String>)> {
    let mut warnings = Vec::new();
    let (jobs, baseline_jobs) = match &spec.scenario {
        Scenario::Nightly(config) => {
            let shifted = generate_nightly(config, &signal.grid)?;
            let baseline = generate_nightly(
                &NightlyConfig {
                    flexibility_min: 0,
                    ..config.clone()
                },
                &signal.grid,
            )?;
            warnings.extend(shifted.warnings);
            (shifted.jobs, baseline.jobs)
        }
        Scenario::MlProject(config) => {
            let generated = generate_ml_project(config, &signal.grid)?;
            let constraint = spec.constraint.expect("validated");
            let constrained = apply_constraint(&generated, constraint, &signal.grid);
            (constrained, generated)
        }
    };
    if jobs.is_empty() {
        return Err(Error::InvalidInput(
            "scenario produced no jobs within the signal".into(),
        ));
    }
    for job in jobs.iter().chain(baseline_jobs.iter()) {
        if job.deadline > signal.len() {
            return Err(Error::HorizonOverflow {
                id: job.id,
                needed: job.deadline,
                len: signal.len(),
            });
        }
    }
    Ok((jobs, baseline_jobs, warnings))
}

/// Recomputes the job set and slot assignments of one repetition, for audit
/// exports. Deterministic, and consistent with what [`run`] scheduled.
pub fn assignments_for_repetition(
    spec: &ExperimentSpec,
    signal: &CarbonSignal,
    repetition: u64,
) -> Result<(Vec<Job>, Vec<Assignment>)> {
    spec.validate()?;
    let (jobs, _, _) = build_jobs(spec, signal)?;
    let mut assignments = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let forecast = spec.forecast.forecast(signal, job.window(), repetition)?;
        assignments.push(schedule(job, &forecast, spec.strategy)?);
    }
    Ok((jobs, assignments))
}

/// Runs one experiment. Deterministic given the scenario seed and the
/// forecast model seed; repetition `r` draws the forecast stream for
/// repetition index `r`.
pub fn run(spec: &ExperimentSpec, signal: &CarbonSignal) -> Result<ExperimentResult> {
    spec.validate()?;
    let (jobs, baseline_jobs, mut warnings) = build_jobs(spec, signal)?;

    // Baseline: immediate execution on the true signal, forecast-independent.
    let mut baseline_emissions = 0.0;
    let mut baseline_histogram = vec![0u32; signal.len()];
    for job in &baseline_jobs {
        let truth = &signal.values[job.window()];
        let assignment = schedule(job, truth, Strategy::BaselineImmediate)?;
        baseline_emissions += emissions(&assignment, job, signal)?;
        count_slots(&mut baseline_histogram, &assignment);
    }
    let baseline_max_concurrent = baseline_histogram.iter().copied().max().unwrap_or(0);

    let mut per_rep_emissions = Vec::with_capacity(spec.repetitions);
    let mut histogram = vec![0u32; signal.len()];
    let mut max_concurrent = 0u32;
    for rep in 0..spec.repetitions {
        let mut total = 0.0;
        let mut rep_histogram = vec![0u32; signal.len()];
        for job in &jobs {
            let forecast = spec.forecast.forecast(signal, job.window(), rep as u64)?;
            let assignment = schedule(job, &forecast, spec.strategy)?;
            total += emissions(&assignment, job, signal)?;
            count_slots(&mut rep_histogram, &assignment);
        }
        max_concurrent = max_concurrent.max(rep_histogram.iter().copied().max().unwrap_or(0));
        if rep == 0 {
            histogram = rep_histogram;
        }
        per_rep_emissions.push(total);
    }

    let per_rep_savings: Vec<f64> = per_rep_emissions
        .iter()
        .map(|e| 100.0 * (1.0 - e / baseline_emissions))
        .collect();
    let savings_percent = mean(&per_rep_savings);
    let total_emissions = mean(&per_rep_emissions);
    let savings_std = std_dev(&per_rep_savings);

    let concurrency_flagged =
        max_concurrent as f64 > spec.concurrency_flag_factor * baseline_max_concurrent as f64;
    if concurrency_flagged {
        warnings.push(format!(
            "scheduled concurrency {max_concurrent} exceeds {} x baseline ({baseline_max_concurrent})",
            spec.concurrency_flag_factor
        ));
    }

    Ok(ExperimentResult {
        region: spec.region.clone(),
        scenario: spec.scenario.name().to_string(),
        window_min: match &spec.scenario {
            Scenario::Nightly(c) => Some(c.flexibility_min),
            Scenario::MlProject(_) => None,
        },
        constraint: spec.constraint,
        strategy: spec.strategy,
        relative_error: spec.relative_error(),
        repetitions: spec.repetitions,
        job_count: jobs.len(),
        baseline_emissions_g: baseline_emissions,
        total_emissions_g: total_emissions,
        per_repetition_emissions_g: per_rep_emissions,
        savings_percent,
        per_repetition_savings_percent: per_rep_savings,
        savings_std_percent: savings_std,
        allocation_histogram: histogram,
        max_concurrent,
        baseline_max_concurrent,
        concurrency_flagged,
        warnings,
    })
}

/// Runs every spec against its region's signal, in parallel, preserving
/// input order in the output.
pub fn sweep(
    specs: &[ExperimentSpec],
    signals: &BTreeMap<String, CarbonSignal>,
) -> Result<Vec<ExperimentResult>> {
    specs
        .par_iter()
        .map(|spec| {
            let signal = signals.get(&spec.region).ok_or_else(|| {
                Error::Config(format!("no signal loaded for region '{}'", spec.region))
            })?;
            run(spec, signal)
        })
        .collect()
}

/// The 17 flexibility settings of the nightly sweep: 0 to 8 hours in
/// 30-minute steps.
pub fn nightly_flexibility_sweep() -> Vec<u32> {
    (0..=16).map(|k| k * 30).collect()
}

/// Writes results as long-format CSV, one row per experiment.
pub fn write_results_csv<W: Write>(results: &[ExperimentResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "region",
        "scenario",
        "window_min",
        "constraint",
        "strategy",
        "relative_error",
        "repetitions",
        "job_count",
        "baseline_emissions_g",
        "total_emissions_g",
        "savings_percent",
        "savings_std_percent",
        "max_concurrent",
        "baseline_max_concurrent",
        "concurrency_flagged",
    ])?;
    for r in results {
        w.write_record([
            r.region.clone(),
            r.scenario.clone(),
            r.window_min.map(|v| v.to_string()).unwrap_or_default(),
            r.constraint.map(|c| c.to_string()).unwrap_or_default(),
            r.strategy.to_string(),
            format!("{}", r.relative_error),
            r.repetitions.to_string(),
            r.job_count.to_string(),
            format!("{}", r.baseline_emissions_g),
            format!("{}", r.total_emissions_g),
            format!("{}", r.savings_percent),
            format!("{}", r.savings_std_percent),
            r.max_concurrent.to_string(),
            r.baseline_max_concurrent.to_string(),
            r.concurrency_flagged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<results csv>", e))?;
    Ok(())
}

/// Reads back a results CSV written by [`write_results_csv`], for reporting.
pub fn read_results_csv<R: std::io::Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for record in r.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

/// Flat row of the results CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub region: String,
    pub scenario: String,
    pub window_min: Option<u32>,
    pub constraint: Option<String>,
    pub strategy: String,
    pub relative_error: f64,
    pub repetitions: usize,
    pub job_count: usize,
    pub baseline_emissions_g: f64,
    pub total_emissions_g: f64,
    pub savings_percent: f64,
    pub savings_std_percent: f64,
    pub max_concurrent: u32,
    pub baseline_max_concurrent: u32,
    pub concurrency_flagged: bool,
}

/// Exhaustive minimum emissions for a job set under a strategy class,
/// evaluated on the true signal. Enumeration is exact and exponential for
/// the interrupting class; intended for tiny test instances.
pub fn brute_force_oracle(jobs: &[Job], signal: &CarbonSignal, strategy: Strategy) -> Result<f64> {
    let mut total = 0.0;
    for job in jobs {
        if job.deadline > signal.len() {
            return Err(Error::HorizonOverflow {
                id: job.id,
                needed: job.deadline,
                len: signal.len(),
            });
        }
        let window = &signal.values[job.window()];
        let slot_energy_kwh = job.power_w / 1000.0 * signal.grid.slot_hours();
        let best = match strategy {
            Strategy::BaselineImmediate => window[..job.duration].iter().sum::<f64>(),
            Strategy::Interrupting if job.interruptible => {
                min_subset_sum(window, job.duration)?
            }
            _ => min_window_sum(window, job.duration),
        };
        total += best * slot_energy_kwh;
    }
    Ok(total)
}

fn min_window_sum(values: &[f64], duration: usize) -> f64 {
    (0..=values.len() - duration)
        .map(|start| values[start..start + duration].iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Minimum sum over all k-subsets, by enumeration.
fn min_subset_sum(values: &[f64], k: usize) -> Result<f64> {
    let n = values.len();
    let combinations = binomial(n, k);
    if combinations > 2e7 {
        return Err(Error::InvalidInput(format!(
            "oracle instance too large: C({n}, {k}) ~ {combinations:.1e} subsets"
        )));
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    loop {
        let sum: f64 = idx.iter().map(|i| values[*i]).sum();
        best = best.min(sum);
        // Advance to the next combination in lexicographic order.
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            if idx[pos] != pos + n - k {
                idx[pos] += 1;
                for j in pos + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return Ok(best);
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn count_slots(histogram: &mut [u32], assignment: &Assignment) {
    for &slot in &assignment.slots {
        histogram[slot] += 1;
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Provenance record for one run: seeds, inputs, and dataset fingerprints.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub specs: Vec<ExperimentSpec>,
    pub signals: BTreeMap<String, SignalFingerprint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignalFingerprint {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    pub start: String,
    pub resolution_min: u32,
    pub len: usize,
}

impl RunManifest {
    pub fn new(specs: &[ExperimentSpec]) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            specs: specs.to_vec(),
            signals: BTreeMap::new(),
        }
    }

    pub fn add_signal(
        &mut self,
        signal: &CarbonSignal,
        source: Option<String>,
        sha256: Option<String>,
    ) {
        self.signals.insert(
            signal.region.clone(),
            SignalFingerprint {
                source,
                sha256,
                start: signal
                    .grid
                    .start
                    .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                resolution_min: signal.grid.resolution_min,
                len: signal.len(),
            },
        );
    }
}
