//! Command-line surface. Each subcommand is a thin wrapper over the library:
//! parse flags, build the effective config, call in, print a JSON summary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use odflow_core::cdr::{user_stats, UserId, UserStats};
use odflow_core::metrics::compare;
use odflow_core::od::{bin_trips, MatrixKind};
use odflow_core::transit::{chain_journeys, public_od, ChainDiagnostics, Journey};

use crate::config::{RunConfig, TsFormat};
use crate::csvio::{
    read_cdr, read_legs, read_stations, read_towers, read_trips, write_places, write_stats,
    write_trips, TowerTable,
};
use crate::districts::read_districts;
use crate::error::{CliError, CliResult};
use crate::odio::{read_od_series, write_od_series};
use crate::pipeline;
use crate::reports::{build_report, write_meta, write_report_files, WindowSpec};
use crate::synthgen::{generate, WorldSpec};

#[derive(Debug, Parser)]
#[command(
    name = "odflow",
    version,
    about = "Origin-destination flows from cellphone and smart-card logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

// One short-lived instance at startup; boxing the big Run variant would
// only complicate clap's derive.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world: logs plus ground-truth OD series.
    Synth(SynthArgs),
    /// Per-user activity statistics from a call log.
    Stats(StatsArgs),
    /// Extract trips from a call log.
    Trips(TripsArgs),
    /// Extract significant places from a call log.
    Places(PlacesArgs),
    /// Bin a trip table into an hourly OD series.
    Od(OdArgs),
    /// Build the public-transport OD series from smart-card legs.
    PublicOd(PublicOdArgs),
    /// Mode shares and underserved connections from OD series files.
    Report(ReportArgs),
    /// Full pipeline: logs in, matrices, reports, and a manifest out.
    Run(RunArgs),
    /// Compare an inferred OD series against a reference series.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// World description JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Directory for the generated logs and truth series.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Call log CSV.
    #[arg(long)]
    pub cdr: PathBuf,
    /// Tower table; switches the log to `user_id,timestamp,tower_id`.
    #[arg(long)]
    pub towers: Option<PathBuf>,
    /// Timestamp format: `unix` or `rfc3339`.
    #[arg(long, default_value = "unix")]
    pub ts_format: String,
    /// Mean inter-event gap below which a user counts as frequent.
    #[arg(long)]
    pub frequent_threshold_min: Option<f64>,
    /// Abort when more than this fraction of data lines is malformed.
    #[arg(long)]
    pub max_malformed_fraction: Option<f64>,
    /// Write the per-user table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TripsArgs {
    /// Call log CSV.
    #[arg(long)]
    pub cdr: PathBuf,
    /// District polygons GeoJSON.
    #[arg(long)]
    pub districts: PathBuf,
    /// Tower table; switches the log to `user_id,timestamp,tower_id`.
    #[arg(long)]
    pub towers: Option<PathBuf>,
    /// Timestamp format: `unix` or `rfc3339`.
    #[arg(long, default_value = "unix")]
    pub ts_format: String,
    /// Virtual-location merge radius in metres.
    #[arg(long)]
    pub delta_d_m: Option<f64>,
    /// Minimum dwell in minutes for a cluster.
    #[arg(long)]
    pub delta_t_min: Option<f64>,
    /// Mean inter-event gap below which a user counts as frequent.
    #[arg(long)]
    pub frequent_threshold_min: Option<f64>,
    /// Abort when more than this fraction of data lines is malformed.
    #[arg(long)]
    pub max_malformed_fraction: Option<f64>,
    /// Extract for every user instead of frequent users only.
    #[arg(long)]
    pub all_users: bool,
    /// Write the trip table here.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlacesArgs {
    /// Call log CSV.
    #[arg(long)]
    pub cdr: PathBuf,
    /// District polygons GeoJSON.
    #[arg(long)]
    pub districts: PathBuf,
    /// Tower table; switches the log to `user_id,timestamp,tower_id`.
    #[arg(long)]
    pub towers: Option<PathBuf>,
    /// Timestamp format: `unix` or `rfc3339`.
    #[arg(long, default_value = "unix")]
    pub ts_format: String,
    /// Place-clustering radius in metres.
    #[arg(long)]
    pub radius_m: Option<f64>,
    /// Minimum share of a user's events for a significant place.
    #[arg(long)]
    pub min_share: Option<f64>,
    /// Place-clustering iteration cap.
    #[arg(long)]
    pub max_iter: Option<u32>,
    /// Abort when more than this fraction of data lines is malformed.
    #[arg(long)]
    pub max_malformed_fraction: Option<f64>,
    /// Write the place table here.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OdArgs {
    /// Trip table produced by `trips`.
    #[arg(long)]
    pub trips: PathBuf,
    /// District polygons GeoJSON.
    #[arg(long)]
    pub districts: PathBuf,
    /// OD window size: hour, day, or a number of seconds.
    #[arg(long)]
    pub granularity: Option<String>,
    /// Label stored in the series sidecar.
    #[arg(long, default_value = "trips")]
    pub label: String,
    /// Write the OD series here.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PublicOdArgs {
    /// Smart-card leg CSV.
    #[arg(long)]
    pub legs: PathBuf,
    /// Station table CSV.
    #[arg(long)]
    pub stations: PathBuf,
    /// District polygons GeoJSON.
    #[arg(long)]
    pub districts: PathBuf,
    /// Timestamp format: `unix` or `rfc3339`.
    #[arg(long, default_value = "unix")]
    pub ts_format: String,
    /// Transfer window in minutes for journey chaining.
    #[arg(long)]
    pub transfer_min: Option<f64>,
    /// OD window size: hour, day, or a number of seconds.
    #[arg(long)]
    pub granularity: Option<String>,
    /// Abort when more than this fraction of data lines is malformed.
    #[arg(long)]
    pub max_malformed_fraction: Option<f64>,
    /// Write the OD series here.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Overall OD series (estimates).
    #[arg(long)]
    pub overall: PathBuf,
    /// Public-transport OD series (counts).
    #[arg(long)]
    pub public: PathBuf,
    /// District polygons GeoJSON.
    #[arg(long)]
    pub districts: PathBuf,
    /// Named zone or fixed offset like +08:00.
    #[arg(long)]
    pub timezone: Option<String>,
    /// Connections kept in the underserved ranking.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Sample pairs per district for the distance report; 0 disables it.
    #[arg(long)]
    pub intra_samples: Option<u32>,
    /// Seed for every sampling step.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write one flow map per window.
    #[arg(long)]
    pub flow_geojson: bool,
    /// Include weekend windows in the aggregation.
    #[arg(long)]
    pub include_weekends: bool,
    /// Directory for the report files.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Call log CSV.
    #[arg(long)]
    pub cdr: Option<PathBuf>,
    /// Optional tower table; positions in the call log are tower ids.
    #[arg(long)]
    pub towers: Option<PathBuf>,
    /// Smart-card leg CSV.
    #[arg(long)]
    pub legs: Option<PathBuf>,
    /// Station table CSV.
    #[arg(long)]
    pub stations: Option<PathBuf>,
    /// District polygons GeoJSON.
    #[arg(long)]
    pub districts: Option<PathBuf>,
    /// Output directory; created if absent, files are overwritten.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Timestamp format: unix or rfc3339.
    #[arg(long)]
    pub ts_format: Option<String>,
    /// OD window size: hour, day, or a number of seconds.
    #[arg(long)]
    pub granularity: Option<String>,
    /// Named zone or fixed offset like +08:00.
    #[arg(long)]
    pub timezone: Option<String>,
    /// Virtual-location merge radius in metres.
    #[arg(long)]
    pub delta_d_m: Option<f64>,
    /// Minimum dwell in minutes for a cluster.
    #[arg(long)]
    pub delta_t_min: Option<f64>,
    /// Mean inter-event gap below which a user counts as frequent.
    #[arg(long)]
    pub frequent_threshold_min: Option<f64>,
    /// Place-clustering radius in metres.
    #[arg(long)]
    pub radius_m: Option<f64>,
    /// Minimum share of a user's events for a significant place.
    #[arg(long)]
    pub min_share: Option<f64>,
    /// Place-clustering iteration cap.
    #[arg(long)]
    pub max_iter: Option<u32>,
    /// Transfer window in minutes for journey chaining.
    #[arg(long)]
    pub transfer_min: Option<f64>,
    /// Operator market share used in upscaling.
    #[arg(long)]
    pub market_share: Option<f64>,
    /// Devices per resident used in upscaling.
    #[arg(long)]
    pub penetration: Option<f64>,
    /// Frequent-user share used in upscaling; defaults to the measured one.
    #[arg(long)]
    pub frequent_share: Option<f64>,
    /// Abort when more than this fraction of data lines is malformed.
    #[arg(long)]
    pub max_malformed_fraction: Option<f64>,
    /// Connections kept in the underserved ranking.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Sample pairs per district for the distance report; 0 disables it.
    #[arg(long)]
    pub intra_samples: Option<u32>,
    /// Seed for every sampling step.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write per-window flow GeoJSON.
    #[arg(long)]
    pub flow_geojson: bool,
    /// Keep Saturdays and Sundays in the report windows.
    #[arg(long)]
    pub include_weekends: bool,
    /// Worker threads; 0 means one per core. Never affects output bytes.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// OD series under test.
    #[arg(long)]
    pub inferred: PathBuf,
    /// Reference OD series.
    #[arg(long)]
    pub truth: PathBuf,
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => exec_synth(a),
        Command::Stats(a) => exec_stats(a),
        Command::Trips(a) => exec_trips(a),
        Command::Places(a) => exec_places(a),
        Command::Od(a) => exec_od(a),
        Command::PublicOd(a) => exec_public_od(a),
        Command::Report(a) => exec_report(a),
        Command::Run(a) => exec_run(a),
        Command::Compare(a) => exec_compare(a),
    }
}

fn print_json(value: &Value) -> CliResult<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::internal(format!("serializing summary: {e}")))?;
    // A closed pipe (`odflow ... | head`) is normal downstream behaviour,
    // not an error worth a nonzero exit.
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(CliError::internal(format!("writing summary: {e}"))),
    }
}

fn load_towers(path: &Option<PathBuf>) -> CliResult<Option<TowerTable>> {
    match path.as_deref() {
        Some(p) => Ok(Some(read_towers(p)?)),
        None => Ok(None),
    }
}

fn exec_synth(a: SynthArgs) -> CliResult<()> {
    let spec = WorldSpec::from_file(&a.spec)?;
    let (_world, _paths, manifest) = generate(&spec, &a.out_dir)?;
    print_json(&manifest)
}

fn exec_stats(a: StatsArgs) -> CliResult<()> {
    let mut cfg = RunConfig { cdr: Some(a.cdr.clone()), towers: a.towers.clone(), ..RunConfig::default() };
    cfg.ts_format = TsFormat::parse_flag(&a.ts_format)?;
    RunConfig::override_with(&mut cfg.frequent_threshold_min, a.frequent_threshold_min);
    RunConfig::override_with(&mut cfg.max_malformed_fraction, a.max_malformed_fraction);
    cfg.validate()?;

    let towers = load_towers(&a.towers)?;
    let mut cdr = read_cdr(&a.cdr, cfg.ts_format, towers.as_ref(), cfg.max_malformed_fraction)?;
    pipeline::sort_events(&mut cdr.events);
    let ranges = pipeline::user_ranges(&cdr.events);
    let stats: Vec<(UserId, UserStats)> =
        ranges.iter().map(|(u, r)| (*u, user_stats(&cdr.events[r.clone()]))).collect();
    let frequent = stats
        .iter()
        .filter(|(_, s)| odflow_core::cdr::is_frequent(s, cfg.frequent_threshold_min))
        .count() as u64;
    let total = stats.len() as u64;

    if let Some(out) = &a.out {
        write_stats(out, &stats, &cdr.users, cfg.frequent_threshold_min)?;
        write_meta(out, "stats/1", &cfg.to_value())?;
    }
    print_json(&json!({
        "users": total,
        "events": cdr.events.len() as u64,
        "malformed_lines": cdr.diag.malformed_lines,
        "frequent": frequent,
        "single_event": stats.iter().filter(|(_, s)| s.n_events == 1).count() as u64,
        "measured_frequent_share": if total > 0 { frequent as f64 / total as f64 } else { 0.0 },
    }))
}

fn exec_trips(a: TripsArgs) -> CliResult<()> {
    let mut cfg = RunConfig {
        cdr: Some(a.cdr.clone()),
        towers: a.towers.clone(),
        districts: Some(a.districts.clone()),
        ..RunConfig::default()
    };
    cfg.ts_format = TsFormat::parse_flag(&a.ts_format)?;
    RunConfig::override_with(&mut cfg.delta_d_m, a.delta_d_m);
    RunConfig::override_with(&mut cfg.delta_t_min, a.delta_t_min);
    RunConfig::override_with(&mut cfg.frequent_threshold_min, a.frequent_threshold_min);
    RunConfig::override_with(&mut cfg.max_malformed_fraction, a.max_malformed_fraction);
    cfg.validate()?;

    let map = read_districts(&a.districts)?;
    let towers = load_towers(&a.towers)?;
    let mut cdr = read_cdr(&a.cdr, cfg.ts_format, towers.as_ref(), cfg.max_malformed_fraction)?;
    pipeline::sort_events(&mut cdr.events);
    let ranges = pipeline::user_ranges(&cdr.events);

    let mut trips = Vec::new();
    let mut degenerate = 0u64;
    let mut selected_users = 0u64;
    for (u, r) in &ranges {
        let events = &cdr.events[r.clone()];
        if !a.all_users {
            let s = user_stats(events);
            if !odflow_core::cdr::is_frequent(&s, cfg.frequent_threshold_min) {
                continue;
            }
        }
        selected_users += 1;
        let (t, dg) =
            pipeline::extract_user_trips(*u, events, cfg.delta_d_m, cfg.delta_t_min, &map);
        trips.extend(t);
        degenerate += dg;
    }

    write_trips(&a.out, &trips, &cdr.users)?;
    write_meta(&a.out, "trips/1", &cfg.to_value())?;
    print_json(&json!({
        "users": ranges.len() as u64,
        "selected_users": selected_users,
        "trips": trips.len() as u64,
        "degenerate_pairs": degenerate,
    }))
}

fn exec_places(a: PlacesArgs) -> CliResult<()> {
    let mut cfg = RunConfig {
        cdr: Some(a.cdr.clone()),
        towers: a.towers.clone(),
        districts: Some(a.districts.clone()),
        ..RunConfig::default()
    };
    cfg.ts_format = TsFormat::parse_flag(&a.ts_format)?;
    RunConfig::override_with(&mut cfg.radius_m, a.radius_m);
    RunConfig::override_with(&mut cfg.min_share, a.min_share);
    RunConfig::override_with(&mut cfg.max_iter, a.max_iter);
    RunConfig::override_with(&mut cfg.max_malformed_fraction, a.max_malformed_fraction);
    cfg.validate()?;

    let map = read_districts(&a.districts)?;
    let towers = load_towers(&a.towers)?;
    let mut cdr = read_cdr(&a.cdr, cfg.ts_format, towers.as_ref(), cfg.max_malformed_fraction)?;
    pipeline::sort_events(&mut cdr.events);
    let ranges = pipeline::user_ranges(&cdr.events);
    let params = cfg.place_params();

    let mut places = Vec::with_capacity(ranges.len());
    for (u, r) in &ranges {
        let ps = odflow_core::places::significant_places(*u, &cdr.events[r.clone()], &params, &map)
            .map_err(|e| CliError::internal(format!("place extraction: {e}")))?;
        places.push(ps);
    }
    let n_places: u64 = places.iter().map(|p| p.len() as u64).sum();

    write_places(&a.out, &places, &cdr.users)?;
    write_meta(&a.out, "places/1", &cfg.to_value())?;
    print_json(&json!({
        "users": ranges.len() as u64,
        "places": n_places,
    }))
}

fn exec_od(a: OdArgs) -> CliResult<()> {
    let mut cfg = RunConfig { districts: Some(a.districts.clone()), ..RunConfig::default() };
    RunConfig::override_with(&mut cfg.granularity, a.granularity.clone());
    cfg.validate()?;
    let granularity_s = cfg.granularity_s()?;

    let map = read_districts(&a.districts)?;
    let (trips, _users) = read_trips(&a.trips, map.d())?;
    let (series, diag) = bin_trips(&trips, map.d(), granularity_s, &a.label)
        .map_err(|e| CliError::internal(format!("binning trips: {e}")))?;

    write_od_series(&a.out, &series, map.d(), MatrixKind::Count, &a.label, "none", &cfg.to_value())?;
    print_json(&json!({
        "trips": trips.len() as u64,
        "binned": diag.binned,
        "skipped_no_district": diag.skipped_no_district,
        "windows": series.len() as u64,
    }))
}

fn exec_public_od(a: PublicOdArgs) -> CliResult<()> {
    let mut cfg = RunConfig {
        legs: Some(a.legs.clone()),
        stations: Some(a.stations.clone()),
        districts: Some(a.districts.clone()),
        ..RunConfig::default()
    };
    cfg.ts_format = TsFormat::parse_flag(&a.ts_format)?;
    RunConfig::override_with(&mut cfg.transfer_min, a.transfer_min);
    RunConfig::override_with(&mut cfg.granularity, a.granularity.clone());
    RunConfig::override_with(&mut cfg.max_malformed_fraction, a.max_malformed_fraction);
    cfg.validate()?;
    let granularity_s = cfg.granularity_s()?;

    let map = read_districts(&a.districts)?;
    let stations = read_stations(&a.stations, &map)?;
    let mut legs_data = read_legs(&a.legs, cfg.ts_format, &stations, cfg.max_malformed_fraction)?;
    pipeline::sort_legs(&mut legs_data.legs);
    let cards = pipeline::card_ranges(&legs_data.legs);

    let mut journeys: Vec<Journey> = Vec::new();
    let mut diag = ChainDiagnostics::default();
    for (_, r) in &cards {
        let (js, dg) = chain_journeys(&legs_data.legs[r.clone()], cfg.transfer_min);
        journeys.extend(js);
        diag.legs_in += dg.legs_in;
        diag.legs_dropped_overlap += dg.legs_dropped_overlap;
        diag.legs_chained += dg.legs_chained;
    }
    let series = public_od(&journeys, &stations.index, map.d(), granularity_s, "public")
        .map_err(|e| CliError::internal(format!("public OD: {e}")))?;

    write_od_series(&a.out, &series, map.d(), MatrixKind::Count, "public", "none", &cfg.to_value())?;
    print_json(&json!({
        "cards": cards.len() as u64,
        "legs": diag.legs_in,
        "legs_chained": diag.legs_chained,
        "legs_dropped_overlap": diag.legs_dropped_overlap,
        "journeys": journeys.len() as u64,
        "windows": series.len() as u64,
    }))
}

fn exec_report(a: ReportArgs) -> CliResult<()> {
    let mut cfg = RunConfig { districts: Some(a.districts.clone()), ..RunConfig::default() };
    RunConfig::override_with(&mut cfg.timezone, a.timezone.clone());
    RunConfig::override_with(&mut cfg.top_k, a.top_k);
    RunConfig::override_with(&mut cfg.intra_samples, a.intra_samples);
    RunConfig::override_with(&mut cfg.seed, a.seed);
    cfg.flow_geojson |= a.flow_geojson;
    cfg.workdays_only &= !a.include_weekends;
    cfg.validate()?;
    let tz = cfg.tz()?;

    let map = read_districts(&a.districts)?;
    let (overall, overall_meta) = read_od_series(&a.overall)?;
    let (public, public_meta) = read_od_series(&a.public)?;
    if overall_meta.districts != map.d() || public_meta.districts != map.d() {
        return Err(CliError::input_invalid(format!(
            "series dimensions ({}, {}) do not match the district map ({})",
            overall_meta.districts,
            public_meta.districts,
            map.d()
        )));
    }

    let (private, clamped_cells, clamped_mass) = pipeline::private_series(&overall, &public, map.d())?;
    let windows = [
        WindowSpec { name: "morning", hours: cfg.morning },
        WindowSpec { name: "midday", hours: cfg.midday },
        WindowSpec { name: "evening", hours: cfg.evening },
    ];
    let report = build_report(
        &windows,
        &public,
        &private,
        cfg.workdays_only,
        tz,
        cfg.top_k,
        &map,
        cfg.intra_samples,
        cfg.seed,
        cfg.to_value(),
    )?;

    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let written = write_report_files(&a.out_dir, &report, &map, cfg.flow_geojson)?;
    print_json(&json!({
        "out_dir": a.out_dir,
        "outputs": written,
        "clamped_cells": clamped_cells,
        "clamped_mass": clamped_mass,
    }))
}

fn exec_run(a: RunArgs) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    RunConfig::override_with(&mut cfg.cdr, a.cdr.map(Some));
    RunConfig::override_with(&mut cfg.towers, a.towers.map(Some));
    RunConfig::override_with(&mut cfg.legs, a.legs.map(Some));
    RunConfig::override_with(&mut cfg.stations, a.stations.map(Some));
    RunConfig::override_with(&mut cfg.districts, a.districts.map(Some));
    RunConfig::override_with(&mut cfg.out_dir, a.out_dir.map(Some));
    if let Some(fmt) = &a.ts_format {
        cfg.ts_format = TsFormat::parse_flag(fmt)?;
    }
    RunConfig::override_with(&mut cfg.granularity, a.granularity);
    RunConfig::override_with(&mut cfg.timezone, a.timezone);
    RunConfig::override_with(&mut cfg.delta_d_m, a.delta_d_m);
    RunConfig::override_with(&mut cfg.delta_t_min, a.delta_t_min);
    RunConfig::override_with(&mut cfg.frequent_threshold_min, a.frequent_threshold_min);
    RunConfig::override_with(&mut cfg.radius_m, a.radius_m);
    RunConfig::override_with(&mut cfg.min_share, a.min_share);
    RunConfig::override_with(&mut cfg.max_iter, a.max_iter);
    RunConfig::override_with(&mut cfg.transfer_min, a.transfer_min);
    RunConfig::override_with(&mut cfg.market_share, a.market_share);
    RunConfig::override_with(&mut cfg.penetration, a.penetration);
    RunConfig::override_with(&mut cfg.frequent_share, a.frequent_share.map(Some));
    RunConfig::override_with(&mut cfg.max_malformed_fraction, a.max_malformed_fraction);
    RunConfig::override_with(&mut cfg.top_k, a.top_k);
    RunConfig::override_with(&mut cfg.intra_samples, a.intra_samples);
    RunConfig::override_with(&mut cfg.seed, a.seed);
    cfg.flow_geojson |= a.flow_geojson;
    cfg.workdays_only &= !a.include_weekends;
    RunConfig::override_with(&mut cfg.workers, a.workers);

    let summary = pipeline::run(&cfg)?;
    print_json(&summary.manifest)
}

fn exec_compare(a: CompareArgs) -> CliResult<()> {
    let (inferred, _) = read_od_series(&a.inferred)?;
    let (truth, _) = read_od_series(&a.truth)?;
    let m = compare(&inferred, &truth)
        .map_err(|e| CliError::input_invalid(format!("series comparison failed: {e}")))?;
    print_json(&json!({
        "total_inferred": m.total_inferred,
        "total_reference": m.total_reference,
        "total_relative_error": m.total_relative_error,
        "cellwise_l1": m.cellwise_l1,
        "max_abs_cell_error": m.max_abs_cell_error,
        "windows_inferred_only": m.windows_inferred_only,
        "windows_reference_only": m.windows_reference_only,
    }))
}
