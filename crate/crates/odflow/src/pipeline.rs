//! End-to-end run: logs in, matrices, reports, and a manifest out.
//!
//! Every parallel section is an order-preserving map over per-user or
//! per-card slices, and all accumulation happens sequentially afterwards, so
//! output bytes do not depend on the worker count.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use odflow_core::analysis::private_od;
use odflow_core::cdr::{
    extract_clusters, extract_trips, extract_virtual_locations, is_frequent, user_stats,
    EventRecord, Trip, UserId, UserStats,
};
use odflow_core::geo::DistrictMap;
use odflow_core::od::{bin_trips, correct_bias, upscale, MatrixKind, ODMatrix};
use odflow_core::places::{significant_places, DistrictShares, SignificantPlace};
use odflow_core::transit::{chain_journeys, public_od, CardId, ChainDiagnostics, Journey, SmartCardLeg};

use crate::config::RunConfig;
use crate::csvio::{
    read_cdr, read_legs, read_stations, read_towers, write_places, write_stats, write_trips,
    CdrData, LegsData, StationTable,
};
use crate::districts::read_districts;
use crate::error::{CliError, CliResult};
use crate::odio::write_od_series;
use crate::reports::{build_report, write_meta, write_report_files, Report, WindowSpec};

/// Stable order: by user, then time; ties keep file order.
pub fn sort_events(events: &mut [EventRecord]) {
    events.par_sort_by_key(|e| (e.user.0, e.t));
}

/// Contiguous per-user slices of a sorted event stream, in user-id order.
pub fn user_ranges(events: &[EventRecord]) -> Vec<(UserId, Range<usize>)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    for i in 1..=events.len() {
        if i == events.len() || events[i].user != events[start].user {
            ranges.push((events[start].user, start..i));
            start = i;
        }
    }
    ranges
}

/// Stable order: by card, then boarding time; ties keep file order.
pub fn sort_legs(legs: &mut [SmartCardLeg]) {
    legs.par_sort_by_key(|l| (l.card.0, l.board_t));
}

/// Contiguous per-card slices of a sorted leg stream, in card-id order.
pub fn card_ranges(legs: &[SmartCardLeg]) -> Vec<(CardId, Range<usize>)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    for i in 1..=legs.len() {
        if i == legs.len() || legs[i].card != legs[start].card {
            ranges.push((legs[start].card, start..i));
            start = i;
        }
    }
    ranges
}

/// Virtual locations, dwell clusters, trips, for one user's sorted events.
pub fn extract_user_trips(
    user: UserId,
    events: &[EventRecord],
    delta_d_m: f64,
    delta_t_min: f64,
    map: &DistrictMap,
) -> (Vec<Trip>, u64) {
    let vlocs = extract_virtual_locations(events, delta_d_m);
    let clusters = extract_clusters(&vlocs, delta_t_min);
    extract_trips(user, &clusters, map)
}

/// Per-window `overall - public`, clamped at zero, over the union of both
/// window sets; a window missing on one side contributes as all zeros.
/// Returns the private series plus total clamped cells and clamped mass.
/// Overall/public matrices sharing one window, either side optional.
type WindowPair<'a> = (Option<&'a ODMatrix>, Option<&'a ODMatrix>);

pub fn private_series(
    overall: &[ODMatrix],
    public: &[ODMatrix],
    d: usize,
) -> CliResult<(Vec<ODMatrix>, u64, f64)> {
    let mut by_window: BTreeMap<(i64, i64), WindowPair> = BTreeMap::new();
    for m in overall {
        by_window.entry(m.window()).or_default().0 = Some(m);
    }
    for m in public {
        by_window.entry(m.window()).or_default().1 = Some(m);
    }
    let mut out = Vec::with_capacity(by_window.len());
    let mut clamped_cells = 0u64;
    let mut clamped_mass = 0.0;
    for (window, (o, p)) in by_window {
        let zero_o;
        let o = match o {
            Some(m) => m,
            None => {
                zero_o = ODMatrix::zero(d, window, "overall", MatrixKind::Estimate)
                    .map_err(|e| CliError::internal(e.to_string()))?;
                &zero_o
            }
        };
        let zero_p;
        let p = match p {
            Some(m) => m,
            None => {
                zero_p = ODMatrix::zero(d, window, "public", MatrixKind::Count)
                    .map_err(|e| CliError::internal(e.to_string()))?;
                &zero_p
            }
        };
        let pr = private_od(o, p).map_err(|e| CliError::internal(e.to_string()))?;
        clamped_cells += pr.clamped_cells;
        clamped_mass += pr.clamped_mass;
        out.push(pr.matrix.with_label("private"));
    }
    Ok((out, clamped_cells, clamped_mass))
}

#[derive(Debug, Serialize)]
struct InputsSection {
    cdr_file_bytes: u64,
    cdr_bytes_read: u64,
    cdr_data_lines: u64,
    cdr_malformed_lines: u64,
    events: u64,
    legs_file_bytes: u64,
    legs_bytes_read: u64,
    legs_data_lines: u64,
    legs_malformed_lines: u64,
    legs: u64,
    stations: u64,
    districts: u64,
}

#[derive(Debug, Serialize)]
struct UsersSection {
    total: u64,
    frequent: u64,
    single_event: u64,
    measured_frequent_share: f64,
}

#[derive(Debug, Serialize)]
struct PlacesSection {
    total: u64,
    of_frequent_users: u64,
    phi: f64,
    substituted_districts: Vec<u16>,
}

#[derive(Debug, Serialize)]
struct TripsSection {
    extracted: u64,
    degenerate_pairs: u64,
    skipped_no_district: u64,
    out_of_window: u64,
    /// Invariant: `binned = extracted - skipped_no_district - out_of_window`.
    binned: u64,
    windows: u64,
}

#[derive(Debug, Serialize)]
struct TransitSection {
    cards: u64,
    legs_chained: u64,
    legs_dropped_overlap: u64,
    journeys: u64,
    journeys_binned: u64,
    windows: u64,
}

#[derive(Debug, Serialize)]
struct AnalysisSection {
    clamped_cells: u64,
    clamped_mass: f64,
    windows: u64,
}

#[derive(Debug, Serialize)]
struct Manifest {
    format: &'static str,
    config: Value,
    config_sha256: String,
    inputs: InputsSection,
    users: UsersSection,
    places: PlacesSection,
    trips: TripsSection,
    transit: TransitSection,
    analysis: AnalysisSection,
    outputs: Vec<String>,
}

pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: Value,
}

struct Computed {
    stats: Vec<(UserId, UserStats)>,
    n_users: u64,
    n_frequent: u64,
    single_event: u64,
    measured_frequent_share: f64,
    places: Vec<Vec<SignificantPlace>>,
    phi: f64,
    substituted: Vec<u16>,
    trips: Vec<Trip>,
    degenerate_pairs: u64,
    skipped_no_district: u64,
    binned: u64,
    freq_raw: Vec<ODMatrix>,
    overall: Vec<ODMatrix>,
    n_cards: u64,
    chain_diag: ChainDiagnostics,
    journeys: Vec<Journey>,
    public_series: Vec<ODMatrix>,
    private: Vec<ODMatrix>,
    clamped_cells: u64,
    clamped_mass: f64,
    report: Report,
}

fn require<'a>(field: &'a Option<PathBuf>, name: &str) -> CliResult<&'a Path> {
    field
        .as_deref()
        .ok_or_else(|| CliError::config_invalid(format!("run requires `{name}` to be set")))
}

fn file_bytes(path: &Path) -> u64 {
    fs::metadata(path).map(|m| m.len()).unwrap_or(0)
}

fn compute(
    cfg: &RunConfig,
    map: &DistrictMap,
    stations: &StationTable,
    cdr: &mut CdrData,
    legs_data: &mut LegsData,
    config_echo: &Value,
) -> CliResult<Computed> {
    let d = map.d();
    let granularity_s = cfg.granularity_s()?;
    let tz = cfg.tz()?;

    sort_events(&mut cdr.events);
    let ranges = user_ranges(&cdr.events);
    let events = &cdr.events;

    let stats: Vec<(UserId, UserStats)> =
        ranges.par_iter().map(|(u, r)| (*u, user_stats(&events[r.clone()]))).collect();
    let frequent: Vec<bool> =
        stats.iter().map(|(_, s)| is_frequent(s, cfg.frequent_threshold_min)).collect();
    let n_users = ranges.len() as u64;
    let n_frequent = frequent.iter().filter(|&&f| f).count() as u64;
    let single_event = stats.iter().filter(|(_, s)| s.n_events == 1).count() as u64;
    let measured_frequent_share =
        if n_users > 0 { n_frequent as f64 / n_users as f64 } else { 0.0 };

    let params = cfg.place_params();
    let places: Vec<Vec<SignificantPlace>> = ranges
        .par_iter()
        .map(|(u, r)| significant_places(*u, &events[r.clone()], &params, map))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::internal(format!("place extraction: {e}")))?;

    let shares = DistrictShares::compute(
        places
            .iter()
            .zip(&frequent)
            .filter(|(_, f)| **f)
            .flat_map(|(ps, _)| ps.iter().map(|p| p.district)),
        places.iter().flat_map(|ps| ps.iter().map(|p| p.district)),
        d,
    );
    let phi = shares.phi();

    let per_user: Vec<(Vec<Trip>, u64)> = ranges
        .par_iter()
        .zip(frequent.par_iter())
        .map(|((u, r), &f)| {
            if f {
                extract_user_trips(*u, &events[r.clone()], cfg.delta_d_m, cfg.delta_t_min, map)
            } else {
                (Vec::new(), 0)
            }
        })
        .collect();
    let mut trips = Vec::new();
    let mut degenerate_pairs = 0;
    for (t, dg) in per_user {
        trips.extend(t);
        degenerate_pairs += dg;
    }

    let (freq_raw, bin_diag) = bin_trips(&trips, d, granularity_s, "frequent-raw")
        .map_err(|e| CliError::internal(format!("binning trips: {e}")))?;

    let mut overall = Vec::with_capacity(freq_raw.len());
    let mut substituted = Vec::new();
    if !freq_raw.is_empty() {
        let scaling = cfg.scaling(measured_frequent_share)?;
        for m in &freq_raw {
            let corr = correct_bias(m, &shares).map_err(|e| {
                CliError::input_invalid(format!("district bias correction failed: {e}"))
            })?;
            substituted = corr.substituted.iter().map(|i| i.0).collect();
            let up = upscale(&corr.matrix, &scaling)
                .map_err(|e| CliError::internal(format!("upscaling: {e}")))?;
            overall.push(up.with_label("overall"));
        }
    }

    sort_legs(&mut legs_data.legs);
    let cards = card_ranges(&legs_data.legs);
    let legs = &legs_data.legs;
    let n_cards = cards.len() as u64;
    let per_card: Vec<(Vec<Journey>, ChainDiagnostics)> =
        cards.par_iter().map(|(_, r)| chain_journeys(&legs[r.clone()], cfg.transfer_min)).collect();
    let mut journeys = Vec::new();
    let mut chain_diag = ChainDiagnostics::default();
    for (js, diag) in per_card {
        journeys.extend(js);
        chain_diag.legs_in += diag.legs_in;
        chain_diag.legs_dropped_overlap += diag.legs_dropped_overlap;
        chain_diag.legs_chained += diag.legs_chained;
    }

    let public_series = public_od(&journeys, &stations.index, d, granularity_s, "public")
        .map_err(|e| CliError::internal(format!("public OD: {e}")))?;

    let (private, clamped_cells, clamped_mass) = private_series(&overall, &public_series, d)?;

    let windows = [
        WindowSpec { name: "morning", hours: cfg.morning },
        WindowSpec { name: "midday", hours: cfg.midday },
        WindowSpec { name: "evening", hours: cfg.evening },
    ];
    let report = build_report(
        &windows,
        &public_series,
        &private,
        cfg.workdays_only,
        tz,
        cfg.top_k,
        map,
        cfg.intra_samples,
        cfg.seed,
        config_echo.clone(),
    )?;

    Ok(Computed {
        stats,
        n_users,
        n_frequent,
        single_event,
        measured_frequent_share,
        places,
        phi,
        substituted,
        trips,
        degenerate_pairs,
        skipped_no_district: bin_diag.skipped_no_district,
        binned: bin_diag.binned,
        freq_raw,
        overall,
        n_cards,
        chain_diag,
        journeys,
        public_series,
        private,
        clamped_cells,
        clamped_mass,
        report,
    })
}

pub fn run(cfg: &RunConfig) -> CliResult<RunSummary> {
    cfg.validate()?;
    let cdr_path = require(&cfg.cdr, "cdr")?;
    let legs_path = require(&cfg.legs, "legs")?;
    let stations_path = require(&cfg.stations, "stations")?;
    let districts_path = require(&cfg.districts, "districts")?;
    let out_dir = require(&cfg.out_dir, "out_dir")?.to_path_buf();
    let config_echo = cfg.to_value();

    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", out_dir.display())))?;

    let map = read_districts(districts_path)?;
    let towers = match cfg.towers.as_deref() {
        Some(p) => Some(read_towers(p)?),
        None => None,
    };
    let mut cdr = read_cdr(cdr_path, cfg.ts_format, towers.as_ref(), cfg.max_malformed_fraction)?;
    let stations = read_stations(stations_path, &map)?;
    let mut legs_data = read_legs(legs_path, cfg.ts_format, &stations, cfg.max_malformed_fraction)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::internal(format!("cannot build worker pool: {e}")))?;
    let c = pool
        .install(|| compute(cfg, &map, &stations, &mut cdr, &mut legs_data, &config_echo))?;

    let mut outputs = Vec::new();
    let d = map.d();

    let stats_path = out_dir.join("stats.csv");
    write_stats(&stats_path, &c.stats, &cdr.users, cfg.frequent_threshold_min)?;
    write_meta(&stats_path, "stats/1", &config_echo)?;
    outputs.push("stats.csv".to_owned());

    let places_path = out_dir.join("places.csv");
    write_places(&places_path, &c.places, &cdr.users)?;
    write_meta(&places_path, "places/1", &config_echo)?;
    outputs.push("places.csv".to_owned());

    let trips_path = out_dir.join("trips.csv");
    write_trips(&trips_path, &c.trips, &cdr.users)?;
    write_meta(&trips_path, "trips/1", &config_echo)?;
    outputs.push("trips.csv".to_owned());

    let od_specs: [(&str, &[ODMatrix], MatrixKind, &str); 4] = [
        ("od_frequent_raw.csv", &c.freq_raw, MatrixKind::Count, "frequent-raw"),
        ("od_overall.csv", &c.overall, MatrixKind::Estimate, "overall"),
        ("od_public.csv", &c.public_series, MatrixKind::Count, "public"),
        ("od_private.csv", &c.private, MatrixKind::Estimate, "private"),
    ];
    for (name, series, kind, label) in od_specs {
        write_od_series(&out_dir.join(name), series, d, kind, label, "none", &config_echo)?;
        outputs.push(name.to_owned());
    }

    outputs.extend(write_report_files(&out_dir, &c.report, &map, cfg.flow_geojson)?);

    let manifest = Manifest {
        format: "run-manifest/1",
        config: config_echo,
        config_sha256: cfg.sha256_hex(),
        inputs: InputsSection {
            cdr_file_bytes: file_bytes(cdr_path),
            cdr_bytes_read: cdr.diag.bytes_read,
            cdr_data_lines: cdr.diag.data_lines,
            cdr_malformed_lines: cdr.diag.malformed_lines,
            events: cdr.events.len() as u64,
            legs_file_bytes: file_bytes(legs_path),
            legs_bytes_read: legs_data.diag.bytes_read,
            legs_data_lines: legs_data.diag.data_lines,
            legs_malformed_lines: legs_data.diag.malformed_lines,
            legs: legs_data.legs.len() as u64,
            stations: stations.names.len() as u64,
            districts: d as u64,
        },
        users: UsersSection {
            total: c.n_users,
            frequent: c.n_frequent,
            single_event: c.single_event,
            measured_frequent_share: c.measured_frequent_share,
        },
        places: PlacesSection {
            total: c.places.iter().map(|p| p.len() as u64).sum(),
            of_frequent_users: c
                .places
                .iter()
                .zip(c.stats.iter())
                .filter(|(_, (_, s))| is_frequent(s, cfg.frequent_threshold_min))
                .map(|(p, _)| p.len() as u64)
                .sum(),
            phi: c.phi,
            substituted_districts: c.substituted,
        },
        trips: TripsSection {
            extracted: c.trips.len() as u64,
            degenerate_pairs: c.degenerate_pairs,
            skipped_no_district: c.skipped_no_district,
            out_of_window: 0,
            binned: c.binned,
            windows: c.freq_raw.len() as u64,
        },
        transit: TransitSection {
            cards: c.n_cards,
            legs_chained: c.chain_diag.legs_chained,
            legs_dropped_overlap: c.chain_diag.legs_dropped_overlap,
            journeys: c.journeys.len() as u64,
            journeys_binned: c.journeys.len() as u64,
            windows: c.public_series.len() as u64,
        },
        analysis: AnalysisSection {
            clamped_cells: c.clamped_cells,
            clamped_mass: c.clamped_mass,
            windows: c.private.len() as u64,
        },
        outputs,
    };

    let manifest_value = serde_json::to_value(&manifest)
        .map_err(|e| CliError::internal(format!("serializing manifest: {e}")))?;
    let mut text = serde_json::to_string_pretty(&manifest_value)
        .map_err(|e| CliError::internal(format!("serializing manifest: {e}")))?;
    text.push('\n');
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, text)
        .map_err(|e| CliError::internal(format!("writing {}: {e}", manifest_path.display())))?;

    Ok(RunSummary { out_dir, manifest: manifest_value })
}
