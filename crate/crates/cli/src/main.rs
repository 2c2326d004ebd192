//! Command-line front end: ingestion, signal computation, potential
//! analytics, simulation, sweeps, and reporting.
//!
//! All outputs are written atomically (temp file + rename) and every source
//! of randomness is a `--seed` flag, so identical invocations produce
//! byte-identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sha2::Digest;

use carbonshift::experiment::{
    self, assignments_for_repetition, ExperimentSpec, Scenario, SignalFingerprint,
};
use carbonshift::forecast::ForecastModel;
use carbonshift::gridmodel::{
    compute_carbon_signal, ingest_trace, read_signal_csv, resample, write_signal_csv,
    CarbonSignal, RegionConfig, RegionTrace,
};
use carbonshift::potential::{
    intensity_histogram, potential_by_time_of_day, weekday_weekend_stats, write_potential_csv,
    Direction, PotentialWindow,
};
use carbonshift::scheduler::{write_assignments_csv, Strategy};
use carbonshift::timegrid::parse_duration_min;
use carbonshift::workload::{
    write_jobs_csv, Constraint, MlProjectConfig, NightlyConfig, DEFAULT_ML_SEED,
};

/// Environment variable holding the default directory for relative input
/// paths that do not resolve against the working directory.
const DATA_DIR_ENV: &str = "CARBONSHIFT_DATA_DIR";

#[derive(Parser)]
#[command(name = "carbonshift", version, about = "Carbon-aware workload shifting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest raw generation/import CSVs into a normalized trace CSV.
    Ingest(IngestArgs),
    /// Compute a region's carbon-intensity signal from raw CSVs.
    Signal(SignalArgs),
    /// Aggregate shifting potential by local time of day.
    Potential(PotentialArgs),
    /// Run one scheduling experiment and write a result JSON.
    Simulate(SimulateArgs),
    /// Run a declarative list of experiments and write a results CSV.
    Sweep(SweepArgs),
    /// Summarize a results CSV on stdout.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Generation CSV: header `timestamp,<col>...`, values in MW.
    #[arg(long)]
    gen: PathBuf,
    /// Cross-border import CSV in the same format.
    #[arg(long)]
    imports: Option<PathBuf>,
    /// Region config TOML (timezone, column mappings, neighbors).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Resample the trace to this resolution (e.g. `30min`).
    #[arg(long)]
    resolution: Option<String>,
    /// Output CSV with normalized `gen:<source>` / `import:<neighbor>` columns.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SignalArgs {
    /// Region identifier recorded in the output.
    #[arg(long)]
    region: Option<String>,
    /// Generation CSV: header `timestamp,<col>...`, values in MW.
    #[arg(long)]
    gen: PathBuf,
    /// Cross-border import CSV in the same format.
    #[arg(long)]
    imports: Option<PathBuf>,
    /// Region config TOML (timezone, column mappings, neighbors).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Common resolution of the signal (default `30min`).
    #[arg(long, default_value = "30min")]
    resolution: String,
    /// Output CSV `timestamp,carbon_intensity_gco2_per_kwh`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PotentialArgs {
    /// Carbon-intensity signal CSV.
    #[arg(long)]
    signal: PathBuf,
    /// Shifting window: `+8h` into the future, `-2h` into the past.
    #[arg(long, allow_hyphen_values = true)]
    window: String,
    /// Region config TOML; supplies the local timezone.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    region: Option<String>,
    /// Potential thresholds in gCO2/kWh for the share columns.
    #[arg(long, value_delimiter = ',', default_values_t = [40.0, 80.0, 120.0])]
    thresholds: Vec<f64>,
    /// Output keyed by (region, window, direction, time of day).
    #[arg(long)]
    out: PathBuf,
    /// Emit the aggregate table as JSON instead of CSV.
    #[arg(long)]
    json: bool,
    /// Also write workday/weekend statistics to this CSV.
    #[arg(long)]
    weekstats_out: Option<PathBuf>,
    /// Also write raw binned counts of the intensity distribution.
    #[arg(long)]
    histogram_out: Option<PathBuf>,
    /// Bin width of the intensity histogram in gCO2/kWh.
    #[arg(long, default_value_t = 10.0)]
    histogram_bin: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario: `nightly` or `ml_project`.
    #[arg(long)]
    scenario: String,
    /// Carbon-intensity signal CSV.
    #[arg(long)]
    signal: PathBuf,
    /// Region config TOML; supplies the local timezone.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    region: Option<String>,
    /// Scenario year.
    #[arg(long, default_value_t = 2020)]
    year: i32,
    /// Nightly flexibility half-width, e.g. `8h` (nightly only).
    #[arg(long)]
    window: Option<String>,
    /// Deadline constraint (`next_workday` or `semi_weekly`, ml_project only).
    #[arg(long)]
    constraint: Option<String>,
    /// Scheduling strategy: `baseline_immediate`, `non_interrupting`,
    /// `interrupting`.
    #[arg(long, default_value = "non_interrupting")]
    strategy: String,
    /// Relative forecast error (0 = perfect forecast).
    #[arg(long, default_value_t = 0.05)]
    error: f64,
    /// Scenario generator seed (ml_project).
    #[arg(long, default_value_t = DEFAULT_ML_SEED)]
    seed: u64,
    /// Base seed of the forecast noise streams.
    #[arg(long, default_value_t = 42)]
    forecast_seed: u64,
    /// Repetitions over noise realizations (default 10; 1 when error = 0).
    #[arg(long)]
    reps: Option<usize>,
    /// Result JSON.
    #[arg(long)]
    out: PathBuf,
    /// Optionally write the generated jobs as CSV.
    #[arg(long)]
    jobs_out: Option<PathBuf>,
    /// Optionally write the first repetition's assignments as CSV.
    #[arg(long)]
    assignments_out: Option<PathBuf>,
    /// Optionally write a provenance manifest JSON.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config TOML: signal paths plus `[[experiments]]` entries.
    #[arg(long)]
    config: PathBuf,
    /// Long-format results CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optionally write a provenance manifest JSON.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV produced by `sweep` or `simulate`.
    #[arg(long)]
    results: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({ "error": format!("{err:#}") });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Signal(args) => cmd_signal(args),
        Command::Potential(args) => cmd_potential(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    }
}

/// Resolves an input path, falling back to `$CARBONSHIFT_DATA_DIR`.
fn resolve_input(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

/// Writes bytes atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path)
        .map_err(|e| anyhow!("renaming into {}: {}", path.display(), e.error))?;
    Ok(())
}

fn load_region_config(config: Option<&PathBuf>, region_flag: Option<&str>) -> Result<RegionConfig> {
    let mut cfg = match config {
        Some(path) => RegionConfig::load(&resolve_input(path))?,
        None => RegionConfig::default_for(region_flag.unwrap_or("region")),
    };
    if let Some(region) = region_flag {
        cfg.region = region.to_string();
    }
    Ok(cfg)
}

fn ingest_and_resample(
    gen: &Path,
    imports: Option<&PathBuf>,
    cfg: &RegionConfig,
    resolution: Option<&str>,
) -> Result<RegionTrace> {
    let outcome = ingest_trace(
        &resolve_input(gen),
        imports.map(|p| resolve_input(p)).as_deref(),
        cfg,
    )?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    match resolution {
        Some(res) => Ok(resample(&outcome.trace, parse_duration_min(res)?)?),
        None => Ok(outcome.trace),
    }
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let cfg = load_region_config(args.config.as_ref(), None)?;
    let trace = ingest_and_resample(&args.gen, args.imports.as_ref(), &cfg, args.resolution.as_deref())?;

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["timestamp".to_string()];
        header.extend(trace.generation.iter().map(|c| format!("gen:{}", c.name)));
        header.extend(trace.imports.iter().map(|c| format!("import:{}", c.name)));
        w.write_record(&header)?;
        for t in 0..trace.len() {
            let mut record = vec![trace
                .grid
                .slot_start(t)
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)];
            for col in trace.generation.iter().chain(trace.imports.iter()) {
                record.push(format!("{}", col.values[t]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
    }
    write_atomic(&args.out, &buf)
}

fn cmd_signal(args: SignalArgs) -> Result<()> {
    let cfg = load_region_config(args.config.as_ref(), args.region.as_deref())?;
    let trace = ingest_and_resample(
        &args.gen,
        args.imports.as_ref(),
        &cfg,
        Some(args.resolution.as_str()),
    )?;
    let signal = compute_carbon_signal(&trace, &cfg.sources, &cfg.neighbors)?;

    let mut buf = Vec::new();
    write_signal_csv(&signal, &mut buf)?;
    write_atomic(&args.out, &buf)
}

fn load_signal(path: &Path, config: Option<&PathBuf>, region_flag: Option<&str>) -> Result<CarbonSignal> {
    let cfg = load_region_config(config, region_flag)?;
    Ok(read_signal_csv(&resolve_input(path), cfg.region.clone(), cfg.tz.clone())?)
}

fn cmd_potential(args: PotentialArgs) -> Result<()> {
    let signal = load_signal(&args.signal, args.config.as_ref(), args.region.as_deref())?;

    let spec = args.window.trim();
    let (direction, length) = match spec.as_bytes().first() {
        Some(b'+') => (Direction::Future, &spec[1..]),
        Some(b'-') => (Direction::Past, &spec[1..]),
        _ => (Direction::Future, spec),
    };
    let window = PotentialWindow {
        direction,
        length_min: parse_duration_min(length)?,
    };

    let table = potential_by_time_of_day(&signal, window, &args.thresholds)?;
    if args.json {
        write_atomic(&args.out, serde_json::to_string_pretty(&table)?.as_bytes())?;
    } else {
        let mut buf = Vec::new();
        write_potential_csv(&table, &mut buf)?;
        write_atomic(&args.out, &buf)?;
    }

    if let Some(path) = &args.histogram_out {
        let bins = intensity_histogram(&signal, args.histogram_bin)?;
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["bin_lower_gco2_per_kwh", "count"])?;
            for bin in &bins {
                w.write_record([format!("{}", bin.lower), bin.count.to_string()])?;
            }
            w.flush()?;
        }
        write_atomic(path, &buf)?;
    }

    if let Some(path) = &args.weekstats_out {
        let stats = weekday_weekend_stats(&signal)?;
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["region", "workday_mean", "weekend_mean", "drop_percent"])?;
            w.write_record([
                signal.region.clone(),
                format!("{}", stats.workday_mean),
                format!("{}", stats.weekend_mean),
                format!("{}", stats.drop_percent),
            ])?;
            w.flush()?;
        }
        write_atomic(path, &buf)?;
    }
    Ok(())
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    match s {
        "baseline_immediate" | "baseline" => Ok(Strategy::BaselineImmediate),
        "non_interrupting" => Ok(Strategy::NonInterrupting),
        "interrupting" => Ok(Strategy::Interrupting),
        other => bail!("unknown strategy '{other}'"),
    }
}

fn parse_constraint(s: &str) -> Result<Constraint> {
    match s {
        "next_workday" => Ok(Constraint::NextWorkday),
        "semi_weekly" => Ok(Constraint::SemiWeekly),
        other => bail!("unknown constraint '{other}'"),
    }
}

fn forecast_model(error: f64, seed: u64) -> ForecastModel {
    if error == 0.0 {
        ForecastModel::Perfect
    } else {
        ForecastModel::gaussian(error, seed)
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let signal = load_signal(&args.signal, args.config.as_ref(), args.region.as_deref())?;

    let scenario = match args.scenario.as_str() {
        "nightly" => {
            let window = args.window.as_deref().unwrap_or("8h");
            Scenario::Nightly(NightlyConfig::new(args.year, parse_duration_min(window)?))
        }
        "ml_project" | "ml" => Scenario::MlProject(MlProjectConfig::new(args.year, args.seed)),
        other => bail!("unknown scenario '{other}'"),
    };
    let constraint = match (&scenario, args.constraint.as_deref()) {
        (Scenario::MlProject(_), None) => Some(Constraint::NextWorkday),
        (Scenario::MlProject(_), Some(c)) => Some(parse_constraint(c)?),
        (Scenario::Nightly(_), Some(_)) => bail!("nightly scenario takes no --constraint"),
        (Scenario::Nightly(_), None) => None,
    };

    let forecast = forecast_model(args.error, args.forecast_seed);
    let repetitions = args.reps.unwrap_or(if forecast.is_perfect() { 1 } else { 10 });
    let spec = ExperimentSpec {
        region: signal.region.clone(),
        scenario,
        strategy: parse_strategy(&args.strategy)?,
        constraint,
        forecast,
        repetitions,
        concurrency_flag_factor: 1.5,
    };

    let result = experiment::run(&spec, &signal)?;
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    write_atomic(&args.out, serde_json::to_string_pretty(&result)?.as_bytes())?;

    if args.jobs_out.is_some() || args.assignments_out.is_some() {
        let (jobs, assignments) = assignments_for_repetition(&spec, &signal, 0)?;
        if let Some(path) = &args.jobs_out {
            let mut buf = Vec::new();
            write_jobs_csv(&jobs, &mut buf)?;
            write_atomic(path, &buf)?;
        }
        if let Some(path) = &args.assignments_out {
            let mut buf = Vec::new();
            write_assignments_csv(&assignments, &mut buf)?;
            write_atomic(path, &buf)?;
        }
    }

    if let Some(path) = &args.manifest_out {
        let mut manifest = experiment::RunManifest::new(std::slice::from_ref(&spec));
        let source = resolve_input(&args.signal);
        manifest.add_signal(
            &signal,
            Some(source.display().to_string()),
            Some(sha256_file(&source)?),
        );
        write_atomic(path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    }
    Ok(())
}

/// Declarative sweep configuration.
#[derive(Debug, Deserialize)]
struct SweepConfig {
    /// Region -> signal CSV path.
    signals: BTreeMap<String, PathBuf>,
    /// Region -> region config TOML (timezone), optional.
    #[serde(default)]
    signal_configs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    experiments: Vec<SweepEntry>,
}

#[derive(Debug, Deserialize)]
struct SweepEntry {
    region: String,
    scenario: String,
    #[serde(default)]
    window: Option<String>,
    /// Expands to one experiment per window.
    #[serde(default)]
    windows: Vec<String>,
    #[serde(default)]
    constraint: Option<String>,
    #[serde(default)]
    strategy: Option<String>,
    #[serde(default)]
    error: Option<f64>,
    #[serde(default)]
    repetitions: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    forecast_seed: Option<u64>,
    #[serde(default)]
    year: Option<i32>,
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(resolve_input(&args.config))
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config: SweepConfig = toml::from_str(&text).context("parsing sweep config")?;

    let mut signals = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for (region, path) in &config.signals {
        let region_cfg = match config.signal_configs.get(region) {
            Some(p) => RegionConfig::load(&resolve_input(p))?,
            None => RegionConfig::default_for(region.clone()),
        };
        let resolved = resolve_input(path);
        let signal = read_signal_csv(&resolved, region.clone(), region_cfg.tz.clone())?;
        signals.insert(region.clone(), signal);
        sources.insert(region.clone(), resolved);
    }

    let mut specs = Vec::new();
    for entry in &config.experiments {
        let year = entry.year.unwrap_or(2020);
        let error = entry.error.unwrap_or(0.05);
        let forecast = forecast_model(error, entry.forecast_seed.unwrap_or(42));
        let strategy = parse_strategy(entry.strategy.as_deref().unwrap_or("non_interrupting"))?;
        let repetitions = entry
            .repetitions
            .unwrap_or(if forecast.is_perfect() { 1 } else { 10 });

        let windows: Vec<Option<&str>> = if entry.windows.is_empty() {
            vec![entry.window.as_deref()]
        } else {
            entry.windows.iter().map(|w| Some(w.as_str())).collect()
        };
        for window in windows {
            let (scenario, constraint) = match entry.scenario.as_str() {
                "nightly" => (
                    Scenario::Nightly(NightlyConfig::new(
                        year,
                        parse_duration_min(window.unwrap_or("8h"))?,
                    )),
                    None,
                ),
                "ml_project" | "ml" => (
                    Scenario::MlProject(MlProjectConfig::new(
                        year,
                        entry.seed.unwrap_or(DEFAULT_ML_SEED),
                    )),
                    Some(parse_constraint(entry.constraint.as_deref().unwrap_or("next_workday"))?),
                ),
                other => bail!("unknown scenario '{other}' in sweep config"),
            };
            specs.push(ExperimentSpec {
                region: entry.region.clone(),
                scenario,
                strategy,
                constraint,
                forecast,
                repetitions,
                concurrency_flag_factor: 1.5,
            });
        }
    }

    let results = experiment::sweep(&specs, &signals)?;
    for result in &results {
        for warning in &result.warnings {
            eprintln!("warning: {}: {warning}", result.region);
        }
    }

    let mut buf = Vec::new();
    experiment::write_results_csv(&results, &mut buf)?;
    write_atomic(&args.out, &buf)?;

    if let Some(path) = &args.manifest_out {
        let mut manifest = experiment::RunManifest::new(&specs);
        for (region, signal) in &signals {
            let source = &sources[region];
            let fingerprint = SignalFingerprint {
                source: Some(source.display().to_string()),
                sha256: Some(sha256_file(source)?),
                start: signal
                    .grid
                    .start
                    .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                resolution_min: signal.grid.resolution_min,
                len: signal.len(),
            };
            manifest.signals.insert(region.clone(), fingerprint);
        }
        write_atomic(path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let file = std::fs::File::open(resolve_input(&args.results))
        .with_context(|| format!("opening {}", args.results.display()))?;
    let rows = experiment::read_results_csv(file)?;
    if rows.is_empty() {
        println!("no results");
        return Ok(());
    }
    println!(
        "{:<8} {:<10} {:>10} {:<14} {:<18} {:>6} {:>12} {:>10}",
        "region", "scenario", "window", "constraint", "strategy", "error", "savings_%", "std_%"
    );
    for row in &rows {
        println!(
            "{:<8} {:<10} {:>10} {:<14} {:<18} {:>6} {:>12.2} {:>10.2}",
            row.region,
            row.scenario,
            row.window_min.map(|w| format!("{w}min")).unwrap_or_else(|| "-".into()),
            row.constraint.clone().unwrap_or_else(|| "-".into()),
            row.strategy,
            row.relative_error,
            row.savings_percent,
            row.savings_std_percent,
        );
    }
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let digest = sha2::Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
