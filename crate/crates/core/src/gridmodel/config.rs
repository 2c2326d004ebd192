//! Region configuration: timezone offsets, column mappings, neighbor
//! intensities, ingestion limits.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::timegrid::{parse_offset_secs, TzTable};

use super::{default_sources, EnergySourceProfile, NeighborProfile};

/// Built-in column vocabularies for common feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vocabulary {
    Entsoe,
    Caiso,
    None,
}

/// Default mapping from feed-specific column labels to canonical source
/// names. Lookup is case-insensitive; config entries extend or override it.
pub fn default_source_mapping(vocabulary: Vocabulary) -> BTreeMap<String, String> {
    let pairs: &[(&str, &str)] = match vocabulary {
        Vocabulary::Entsoe => &[
            ("biomass", "biopower"),
            ("waste", "biopower"),
            ("other renewable", "biopower"),
            ("solar", "solar"),
            ("geothermal", "geothermal"),
            ("hydro pumped storage", "hydropower"),
            ("hydro run-of-river and poundage", "hydropower"),
            ("hydro water reservoir", "hydropower"),
            ("marine", "hydropower"),
            ("wind onshore", "wind"),
            ("wind offshore", "wind"),
            ("nuclear", "nuclear"),
            ("fossil gas", "gas"),
            ("fossil coal-derived gas", "gas"),
            ("other", "gas"),
            ("fossil oil", "oil"),
            ("fossil oil shale", "oil"),
            ("fossil hard coal", "coal"),
            ("fossil brown coal/lignite", "coal"),
            ("lignite", "coal"),
            ("fossil peat", "coal"),
        ],
        Vocabulary::Caiso => &[
            ("biomass", "biopower"),
            ("biogas", "biopower"),
            ("solar", "solar"),
            ("geothermal", "geothermal"),
            ("small hydro", "hydropower"),
            ("large hydro", "hydropower"),
            ("hydro", "hydropower"),
            ("wind", "wind"),
            ("nuclear", "nuclear"),
            ("natural gas", "gas"),
            ("gas", "gas"),
            ("oil", "oil"),
            ("coal", "coal"),
        ],
        Vocabulary::None => &[],
    };
    let mut map = BTreeMap::new();
    // Canonical names always map to themselves.
    for s in default_sources() {
        map.insert(s.name.clone(), s.name);
    }
    for (k, v) in pairs {
        map.insert((*k).to_string(), (*v).to_string());
    }
    map
}

#[derive(Debug, Deserialize)]
struct TransitionEntry {
    from_utc: DateTime<Utc>,
    offset: String,
}

#[derive(Debug, Default, Deserialize)]
struct TimezoneSection {
    #[serde(default)]
    offset: Option<String>,
    #[serde(default)]
    transitions: Vec<TransitionEntry>,
}

#[derive(Debug, Default, Deserialize)]
struct MappingSection {
    #[serde(default)]
    vocabulary: Option<Vocabulary>,
    #[serde(default)]
    sources: BTreeMap<String, String>,
    #[serde(default)]
    neighbors: BTreeMap<String, String>,
}

#[derive(Debug, Default, Deserialize)]
struct IngestSection {
    #[serde(default)]
    max_gap_slots: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct RegionConfigFile {
    region: String,
    #[serde(default)]
    timezone: Option<TimezoneSection>,
    #[serde(default)]
    mapping: Option<MappingSection>,
    #[serde(default)]
    sources: BTreeMap<String, f64>,
    #[serde(default)]
    neighbors: Vec<NeighborProfile>,
    #[serde(default)]
    ingest: Option<IngestSection>,
}

/// Resolved region configuration used by ingestion and signal computation.
#[derive(Debug, Clone)]
pub struct RegionConfig {
    pub region: String,
    pub tz: TzTable,
    /// Lowercased CSV column label -> canonical source name.
    pub source_mapping: BTreeMap<String, String>,
    /// Lowercased CSV column label -> neighbor name.
    pub neighbor_mapping: BTreeMap<String, String>,
    pub sources: Vec<EnergySourceProfile>,
    pub neighbors: Vec<NeighborProfile>,
    /// Largest run of missing slots that is filled by interpolation.
    pub max_gap_slots: usize,
}

pub const DEFAULT_MAX_GAP_SLOTS: usize = 2;

impl RegionConfig {
    /// Sensible defaults: UTC, ENTSO-E vocabulary, canonical sources, no
    /// neighbors.
    pub fn default_for(region: impl Into<String>) -> Self {
        RegionConfig {
            region: region.into(),
            tz: TzTable::utc(),
            source_mapping: lowercase_keys(default_source_mapping(Vocabulary::Entsoe)),
            neighbor_mapping: BTreeMap::new(),
            sources: default_sources(),
            neighbors: Vec::new(),
            max_gap_slots: DEFAULT_MAX_GAP_SLOTS,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RegionConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

        let tz = match file.timezone {
            Some(section) => {
                let base = match &section.offset {
                    Some(s) => parse_offset_secs(s)?,
                    None => 0,
                };
                let mut transitions = Vec::with_capacity(section.transitions.len());
                for t in &section.transitions {
                    transitions.push((t.from_utc, parse_offset_secs(&t.offset)?));
                }
                TzTable::with_transitions(base, transitions)?
            }
            None => TzTable::utc(),
        };

        let mapping = file.mapping.unwrap_or_default();
        let mut source_mapping = lowercase_keys(default_source_mapping(
            mapping.vocabulary.unwrap_or(Vocabulary::Entsoe),
        ));
        for (k, v) in mapping.sources {
            source_mapping.insert(k.trim().to_lowercase(), v);
        }
        let neighbor_mapping = mapping
            .neighbors
            .into_iter()
            .map(|(k, v)| (k.trim().to_lowercase(), v))
            .collect();

        // Per-region intensity overrides on top of the canonical catalog.
        let mut sources = default_sources();
        for (name, intensity) in file.sources {
            match sources.iter_mut().find(|s| s.name == name) {
                Some(s) => s.carbon_intensity = intensity,
                None => sources.push(EnergySourceProfile::new(name, intensity)),
            }
        }

        Ok(RegionConfig {
            region: file.region,
            tz,
            source_mapping,
            neighbor_mapping,
            sources,
            neighbors: file.neighbors,
            max_gap_slots: file
                .ingest
                .and_then(|i| i.max_gap_slots)
                .unwrap_or(DEFAULT_MAX_GAP_SLOTS),
        })
    }

    pub fn map_source_column(&self, label: &str) -> Option<&str> {
        self.source_mapping
            .get(&label.trim().to_lowercase())
            .map(String::as_str)
    }

    pub fn map_neighbor_column(&self, label: &str) -> Option<&str> {
        self.neighbor_mapping
            .get(&label.trim().to_lowercase())
            .map(String::as_str)
    }
}

fn lowercase_keys(map: BTreeMap<String, String>) -> BTreeMap<String, String> {
    map.into_iter()
        .map(|(k, v)| (k.trim().to_lowercase(), v))
        .collect()
}
