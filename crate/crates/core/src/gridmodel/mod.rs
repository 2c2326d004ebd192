//! Regional grid model: generation/import traces and the consumption-weighted
//! average carbon-intensity signal derived from them.

mod config;
mod ingest;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timegrid::{parse_timestamp, SlotGrid, TzTable};

pub use config::{default_source_mapping, RegionConfig, Vocabulary};
pub use ingest::{ingest_trace, IngestOutcome};

/// A named energy source with its life-cycle carbon intensity in gCO2/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySourceProfile {
    pub name: String,
    pub carbon_intensity: f64,
}

impl EnergySourceProfile {
    pub fn new(name: impl Into<String>, carbon_intensity: f64) -> Self {
        EnergySourceProfile {
            name: name.into(),
            carbon_intensity,
        }
    }
}

/// A neighboring region contributing imports, weighted by its yearly average
/// carbon intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborProfile {
    pub name: String,
    pub yearly_avg_intensity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub citation: Option<String>,
}

impl NeighborProfile {
    pub fn new(name: impl Into<String>, yearly_avg_intensity: f64) -> Self {
        NeighborProfile {
            name: name.into(),
            yearly_avg_intensity,
            citation: None,
        }
    }
}

/// The default source catalog: life-cycle intensities of the nine canonical
/// energy source categories.
pub fn default_sources() -> Vec<EnergySourceProfile> {
    [
        ("biopower", 18.0),
        ("solar", 46.0),
        ("geothermal", 45.0),
        ("hydropower", 4.0),
        ("wind", 12.0),
        ("nuclear", 16.0),
        ("gas", 469.0),
        ("oil", 840.0),
        ("coal", 1001.0),
    ]
    .into_iter()
    .map(|(n, c)| EnergySourceProfile::new(n, c))
    .collect()
}

/// One power time series, named after the canonical source or neighbor it
/// was mapped to. Values are average MW over each slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// Aligned per-source generation and per-neighbor import series for one
/// region. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTrace {
    pub region: String,
    pub grid: SlotGrid,
    pub generation: Vec<TraceColumn>,
    pub imports: Vec<TraceColumn>,
}

impl RegionTrace {
    pub fn new(
        region: impl Into<String>,
        grid: SlotGrid,
        generation: Vec<TraceColumn>,
        imports: Vec<TraceColumn>,
    ) -> Result<Self> {
        for col in generation.iter().chain(imports.iter()) {
            if col.values.len() != grid.len {
                return Err(Error::InvalidInput(format!(
                    "column '{}' has {} slots, grid has {}",
                    col.name,
                    col.values.len(),
                    grid.len
                )));
            }
            if col.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "column '{}' contains negative or non-finite power",
                    col.name
                )));
            }
        }
        if generation.is_empty() {
            return Err(Error::InvalidInput("trace has no generation columns".into()));
        }
        Ok(RegionTrace {
            region: region.into(),
            grid,
            generation,
            imports,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len
    }

    pub fn is_empty(&self) -> bool {
        self.grid.len == 0
    }
}

/// Carbon intensity of the regional mix over time, in gCO2/kWh per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonSignal {
    pub region: String,
    pub grid: SlotGrid,
    pub values: Vec<f64>,
    /// Mean over the whole series, fixed at construction.
    pub yearly_mean: f64,
}

impl CarbonSignal {
    pub fn new(region: impl Into<String>, grid: SlotGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len {
            return Err(Error::InvalidInput(format!(
                "signal has {} values, grid has {} slots",
                values.len(),
                grid.len
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidInput("signal is empty".into()));
        }
        let yearly_mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok(CarbonSignal {
            region: region.into(),
            grid,
            values,
            yearly_mean,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Computes the per-slot average carbon intensity of a region by weighting
/// each generation column with its source intensity and each import column
/// with the neighbor's yearly average, divided by total generated plus
/// imported power.
///
/// Slots with zero total power carry the previous slot's value forward; a
/// zero first slot is an error, as is a trace with no positive power at all.
pub fn compute_carbon_signal(
    trace: &RegionTrace,
    sources: &[EnergySourceProfile],
    neighbors: &[NeighborProfile],
) -> Result<CarbonSignal> {
    let mut names = BTreeSet::new();
    for s in sources {
        if s.carbon_intensity < 0.0 || !s.carbon_intensity.is_finite() {
            return Err(Error::Config(format!(
                "source '{}' has invalid carbon intensity {}",
                s.name, s.carbon_intensity
            )));
        }
        if !names.insert(s.name.as_str()) {
            return Err(Error::Config(format!("duplicate source '{}'", s.name)));
        }
    }
    let mut neighbor_names = BTreeSet::new();
    for n in neighbors {
        if n.yearly_avg_intensity < 0.0 || !n.yearly_avg_intensity.is_finite() {
            return Err(Error::Config(format!(
                "neighbor '{}' has invalid yearly intensity {}",
                n.name, n.yearly_avg_intensity
            )));
        }
        if !neighbor_names.insert(n.name.as_str()) {
            return Err(Error::Config(format!("duplicate neighbor '{}'", n.name)));
        }
    }

    // Per-column intensity, generation first, then imports.
    let mut weighted: Vec<(f64, &[f64])> = Vec::new();
    for col in &trace.generation {
        let profile = sources
            .iter()
            .find(|s| s.name == col.name)
            .ok_or_else(|| Error::UnknownSource {
                column: col.name.clone(),
                name: col.name.clone(),
            })?;
        weighted.push((profile.carbon_intensity, &col.values));
    }
    for col in &trace.imports {
        let profile = neighbors
            .iter()
            .find(|n| n.name == col.name)
            .ok_or_else(|| Error::UnknownNeighbor {
                column: col.name.clone(),
                neighbor: col.name.clone(),
            })?;
        weighted.push((profile.yearly_avg_intensity, &col.values));
    }

    let len = trace.len();
    let mut values = Vec::with_capacity(len);
    let mut any_positive = false;
    for t in 0..len {
        let mut num = 0.0;
        let mut den = 0.0;
        for (intensity, series) in &weighted {
            let p = series[t];
            num += p * intensity;
            den += p;
        }
        if den > 0.0 {
            any_positive = true;
            values.push(num / den);
        } else if let Some(prev) = values.last().copied() {
            values.push(prev);
        } else {
            // Distinguish an all-zero trace from a zero first slot.
            let all_zero = (t..len).all(|u| weighted.iter().all(|(_, s)| s[u] == 0.0));
            return Err(if all_zero {
                Error::DegenerateTrace
            } else {
                Error::ZeroPowerAtStart
            });
        }
    }
    if !any_positive {
        return Err(Error::DegenerateTrace);
    }

    CarbonSignal::new(trace.region.clone(), trace.grid.clone(), values)
}

/// Resamples a trace to a different resolution.
///
/// Downsampling takes the arithmetic mean of covered slots (power is an
/// average rate); upsampling replicates slot values. The target must divide
/// or be divided by the native resolution.
pub fn resample(trace: &RegionTrace, target_resolution_min: u32) -> Result<RegionTrace> {
    let native = trace.grid.resolution_min;
    let target = target_resolution_min;
    if target == native {
        return Ok(trace.clone());
    }

    let resample_col = |col: &TraceColumn| -> TraceColumn {
        let values = if target > native {
            let k = (target / native) as usize;
            col.values
                .chunks(k)
                .map(|chunk| chunk.iter().sum::<f64>() / chunk.len() as f64)
                .collect()
        } else {
            let m = (native / target) as usize;
            col.values
                .iter()
                .flat_map(|v| std::iter::repeat_n(*v, m))
                .collect()
        };
        TraceColumn {
            name: col.name.clone(),
            values,
        }
    };

    let new_len = if target > native {
        if !target.is_multiple_of(native) {
            return Err(Error::IncompatibleResolution { a: native, b: target });
        }
        let k = (target / native) as usize;
        trace.grid.len.div_ceil(k)
    } else {
        if !native.is_multiple_of(target) {
            return Err(Error::IncompatibleResolution { a: native, b: target });
        }
        trace.grid.len * (native / target) as usize
    };

    let grid = trace.grid.with_resolution(target, new_len)?;
    RegionTrace::new(
        trace.region.clone(),
        grid,
        trace.generation.iter().map(resample_col).collect(),
        trace.imports.iter().map(resample_col).collect(),
    )
}

/// Writes a signal as `timestamp,carbon_intensity_gco2_per_kwh` CSV.
pub fn write_signal_csv<W: Write>(signal: &CarbonSignal, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "carbon_intensity_gco2_per_kwh"])?;
    for (i, v) in signal.values.iter().enumerate() {
        let ts = signal
            .grid
            .slot_start(i)
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        w.write_record([ts.as_str(), &format!("{v}")])?;
    }
    w.flush().map_err(|e| Error::io("<signal csv>", e))?;
    Ok(())
}

/// Opens a CSV reader with path context on I/O failure.
pub(crate) fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

/// Reads a signal CSV produced by [`write_signal_csv`]. Timestamps must be
/// strictly increasing and uniformly spaced.
pub fn read_signal_csv(path: &Path, region: impl Into<String>, tz: TzTable) -> Result<CarbonSignal> {
    let mut reader = open_csv(path)?;
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let ts = record
            .get(0)
            .ok_or_else(|| Error::InvalidInput(format!("row {row}: missing timestamp")))?;
        let v = record
            .get(1)
            .ok_or_else(|| Error::InvalidInput(format!("row {row}: missing value")))?;
        stamps.push(parse_timestamp(ts)?);
        values.push(
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("row {row}: bad value '{v}'")))?,
        );
    }
    if stamps.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: need at least two rows",
            path.display()
        )));
    }
    let res = (stamps[1] - stamps[0]).num_minutes();
    if res <= 0 {
        return Err(Error::NonMonotoneTimestamps { row: 1 });
    }
    for (i, pair) in stamps.windows(2).enumerate() {
        if (pair[1] - pair[0]).num_minutes() != res {
            return Err(Error::InvalidInput(format!(
                "{}: non-uniform spacing at row {}",
                path.display(),
                i + 1
            )));
        }
    }
    let grid = SlotGrid::new(stamps[0], res as u32, values.len(), tz)?;
    CarbonSignal::new(region, grid, values)
}
