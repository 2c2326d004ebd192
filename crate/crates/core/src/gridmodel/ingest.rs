//! CSV ingestion of generation and import time series.
//!
//! Input format: header row `timestamp,<col>...`, ISO-8601 timestamps,
//! values in MW. Rows must be strictly increasing in time; missing rows or
//! cells are filled by linear interpolation up to a configurable run length.

use std::path::Path;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::timegrid::{parse_timestamp, SlotGrid};

use super::{RegionConfig, RegionTrace, TraceColumn};

/// An ingested trace plus non-fatal observations made along the way.
#[derive(Debug)]
pub struct IngestOutcome {
    pub trace: RegionTrace,
    pub warnings: Vec<String>,
}

/// Raw parsed series before densification.
struct ParsedCsv {
    columns: Vec<String>,
    stamps: Vec<DateTime<Utc>>,
    rows: Vec<Vec<Option<f64>>>,
}

/// Dense per-column series on a uniform grid.
struct DenseSeries {
    start: DateTime<Utc>,
    resolution_min: u32,
    columns: Vec<(String, Vec<f64>)>,
}

/// Reads generation and (optionally) import CSVs, maps their columns through
/// the region config, and produces a [`RegionTrace`] at the native
/// resolution, UTC-normalized.
pub fn ingest_trace(
    generation_csv: &Path,
    imports_csv: Option<&Path>,
    config: &RegionConfig,
) -> Result<IngestOutcome> {
    let mut warnings = Vec::new();

    let gen_raw = parse_csv(generation_csv)?;
    let gen_mapped = map_columns(&gen_raw, generation_csv, |label| {
        config.map_source_column(label).map(str::to_string)
    })?;
    let mut gen = densify(gen_mapped, config.max_gap_slots, &mut warnings)?;

    let mut imports = match imports_csv {
        Some(path) => {
            let raw = parse_csv(path)?;
            let mapped = map_columns(&raw, path, |label| {
                config.map_neighbor_column(label).map(str::to_string)
            })?;
            Some(densify(mapped, config.max_gap_slots, &mut warnings)?)
        }
        None => None,
    };

    if let Some(imp) = imports.as_mut() {
        align(&mut gen, imp, &mut warnings)?;
    }

    clamp_negative(&mut gen, "generation", &mut warnings);
    if let Some(imp) = imports.as_mut() {
        clamp_negative(imp, "import", &mut warnings);
    }

    let len = gen.columns.first().map(|(_, v)| v.len()).unwrap_or(0);
    let grid = SlotGrid::new(gen.start, gen.resolution_min, len, config.tz.clone())?;
    let trace = RegionTrace::new(
        config.region.clone(),
        grid,
        gen.columns
            .into_iter()
            .map(|(name, values)| TraceColumn { name, values })
            .collect(),
        imports
            .map(|imp| {
                imp.columns
                    .into_iter()
                    .map(|(name, values)| TraceColumn { name, values })
                    .collect()
            })
            .unwrap_or_default(),
    )?;

    Ok(IngestOutcome { trace, warnings })
}

fn parse_csv(path: &Path) -> Result<ParsedCsv> {
    let mut reader = super::open_csv(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || !headers[0].eq_ignore_ascii_case("timestamp") {
        return Err(Error::InvalidInput(format!(
            "{}: first column must be 'timestamp'",
            path.display()
        )));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if columns.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no value columns",
            path.display()
        )));
    }

    let mut stamps = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let ts = parse_timestamp(record.get(0).unwrap_or(""))?;
        if let Some(last) = stamps.last() {
            if ts <= *last {
                return Err(Error::NonMonotoneTimestamps { row: i + 1 });
            }
        }
        let mut row = Vec::with_capacity(columns.len());
        for (j, column) in columns.iter().enumerate() {
            let cell = record.get(j + 1).unwrap_or("").trim();
            if cell.is_empty() {
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::InvalidInput(format!(
                        "{}: bad value '{}' at row {}, column '{column}'",
                        path.display(),
                        cell,
                        i + 1,
                    ))
                })?;
                row.push(Some(v));
            }
        }
        stamps.push(ts);
        rows.push(row);
    }
    if stamps.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: need at least two data rows",
            path.display()
        )));
    }
    Ok(ParsedCsv {
        columns,
        stamps,
        rows,
    })
}

fn map_columns(
    parsed: &ParsedCsv,
    path: &Path,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<ParsedCsv> {
    let mut columns = Vec::with_capacity(parsed.columns.len());
    for label in &parsed.columns {
        match lookup(label) {
            Some(name) => columns.push(name),
            None => {
                return Err(Error::UnmappedColumn(format!(
                    "{} (in {})",
                    label,
                    path.display()
                )))
            }
        }
    }
    Ok(ParsedCsv {
        columns,
        stamps: parsed.stamps.clone(),
        rows: parsed.rows.clone(),
    })
}

/// Lays the parsed rows onto a uniform grid inferred from timestamp spacing
/// and interpolates missing cells.
fn densify(parsed: ParsedCsv, max_gap: usize, warnings: &mut Vec<String>) -> Result<DenseSeries> {
    // The native resolution is the GCD of all row spacings, so a single
    // missing row does not distort the inferred step.
    let mut res_min: i64 = 0;
    for pair in parsed.stamps.windows(2) {
        let diff = (pair[1] - pair[0]).num_minutes();
        res_min = gcd(res_min, diff);
    }
    if res_min <= 0 {
        return Err(Error::InvalidInput("cannot infer resolution".into()));
    }

    let start = parsed.stamps[0];
    let total_span = (*parsed.stamps.last().unwrap() - start).num_minutes();
    let len = (total_span / res_min) as usize + 1;

    let n_cols = parsed.columns.len();
    let mut dense: Vec<Vec<Option<f64>>> = vec![vec![None; len]; n_cols];
    let mut missing_rows = 0usize;
    for (ts, row) in parsed.stamps.iter().zip(&parsed.rows) {
        let idx = ((*ts - start).num_minutes() / res_min) as usize;
        for (c, cell) in row.iter().enumerate() {
            dense[c][idx] = *cell;
        }
    }
    for idx in 0..len {
        if dense.iter().all(|col| col[idx].is_none()) {
            missing_rows += 1;
        }
    }
    if missing_rows > 0 {
        warnings.push(format!(
            "{missing_rows} missing row(s) on the {res_min}-minute grid; gaps filled by interpolation"
        ));
    }

    let mut columns = Vec::with_capacity(n_cols);
    for (c, name) in parsed.columns.into_iter().enumerate() {
        let filled = fill_gaps(&dense[c], max_gap, &name, start, res_min)?;
        columns.push((name, filled));
    }

    Ok(DenseSeries {
        start,
        resolution_min: res_min as u32,
        columns,
    })
}

/// Linear interpolation across runs of missing values up to `max_gap` slots.
/// Longer runs, or missing values at the edges, are rejected.
fn fill_gaps(
    values: &[Option<f64>],
    max_gap: usize,
    column: &str,
    start: DateTime<Utc>,
    res_min: i64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(values.len());
    let mut i = 0;
    while i < values.len() {
        match values[i] {
            Some(v) => {
                out.push(v);
                i += 1;
            }
            None => {
                let run_start = i;
                while i < values.len() && values[i].is_none() {
                    i += 1;
                }
                let run_len = i - run_start;
                let at = (start + chrono::TimeDelta::minutes(run_start as i64 * res_min))
                    .to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
                if run_len > max_gap || run_start == 0 || i == values.len() {
                    return Err(Error::GapTooLarge {
                        at: format!("{at} (column '{column}')"),
                        gap_slots: run_len,
                        limit: max_gap,
                    });
                }
                let before = out[run_start - 1];
                let after = values[i].unwrap();
                for k in 0..run_len {
                    let w = (k + 1) as f64 / (run_len + 1) as f64;
                    out.push(before + (after - before) * w);
                }
            }
        }
    }
    Ok(out)
}

/// Brings two dense series onto a common resolution and overlapping span.
fn align(a: &mut DenseSeries, b: &mut DenseSeries, warnings: &mut Vec<String>) -> Result<()> {
    // Coarser of the two resolutions wins.
    let (a_res, b_res) = (a.resolution_min, b.resolution_min);
    let target = a_res.max(b_res);
    for series in [&mut *a, &mut *b] {
        if target != series.resolution_min {
            if target % series.resolution_min != 0 {
                return Err(Error::IncompatibleResolution { a: a_res, b: b_res });
            }
            let k = (target / series.resolution_min) as usize;
            for (_, values) in series.columns.iter_mut() {
                *values = values
                    .chunks(k)
                    .map(|chunk| chunk.iter().sum::<f64>() / chunk.len() as f64)
                    .collect();
            }
            warnings.push(format!(
                "resampled {} min series to common {} min resolution",
                series.resolution_min, target
            ));
            series.resolution_min = target;
        }
    }

    let a_len = a.columns[0].1.len();
    let b_len = b.columns[0].1.len();
    let a_end = a.start + chrono::TimeDelta::minutes(a_len as i64 * target as i64);
    let b_end = b.start + chrono::TimeDelta::minutes(b_len as i64 * target as i64);
    let start = a.start.max(b.start);
    let end = a_end.min(b_end);
    if start >= end {
        return Err(Error::InvalidInput(
            "generation and import series do not overlap in time".into(),
        ));
    }
    if start != a.start || start != b.start || end != a_end || end != b_end {
        warnings.push(format!(
            "trimmed series to common span {} .. {}",
            start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            end.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        ));
    }
    for series in [a, b] {
        let skip = ((start - series.start).num_minutes() / target as i64) as usize;
        let take = ((end - start).num_minutes() / target as i64) as usize;
        for (_, values) in series.columns.iter_mut() {
            *values = values[skip..skip + take].to_vec();
        }
        series.start = start;
    }
    Ok(())
}

fn clamp_negative(series: &mut DenseSeries, kind: &str, warnings: &mut Vec<String>) {
    let mut clamped = 0usize;
    for (_, values) in series.columns.iter_mut() {
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
    }
    if clamped > 0 {
        warnings.push(format!(
            "clamped {clamped} negative {kind} value(s) to zero"
        ));
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if a == 0 {
        b
    } else {
        gcd(b % a, a)
    }
}
