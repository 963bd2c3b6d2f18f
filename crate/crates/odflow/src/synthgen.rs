//! Synthetic world generator: a grid of districts, a population of commuting
//! agents, and the full set of logs plus ground truth for them.
//!
//! Every randomized quantity comes from a per-agent seeded stream, so the
//! same spec always regenerates byte-identical files. Two regimes trade
//! realism against exactness:
//!
//! * `guaranteed`: every stay emits events at its first and last minute, so
//!   trip extraction recovers the generated trips exactly (same endpoints,
//!   same hour bins). Arrival times are nudged off hour boundaries to keep
//!   that exactness.
//! * `naturalistic`: events are a plain Poisson process over each stay, so
//!   extraction faces realistic sampling noise.
//!
//! Spatial layout keeps stays separable: cells are wide enough that no two
//! distinct stays can fall within the default 2 km merge radius, and event
//! jitter cannot push a point out of its district.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use odflow_core::analysis::mix_seed;
use odflow_core::cdr::{Trip, UserId};
use odflow_core::geo::{self, District, DistrictId, DistrictMap, GeoPoint, LocalXY, Polygon};
use odflow_core::od::{bin_trips, ODMatrix};
use odflow_core::time::{is_workday, TzOffset};

use crate::districts::write_districts;
use crate::error::{CliError, CliResult};
use crate::odio::write_od_series;

const M_PER_DEG_LAT: f64 = geo::EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// Merge radius the generated geometry must stay separable under.
const SEPARATION_M: f64 = 2000.0;

/// Minutes are the schedule's natural unit; offsets below are minutes past
/// local midnight.
const DEPART_HOME_MIN: i64 = 390; // 06:30
const DEPART_HOME_SPREAD_MIN: i64 = 150;
const TRIP_MIN: i64 = 20;
const TRIP_SPREAD_MIN: i64 = 20;
const DEPART_MIDDAY_MIN: i64 = 690; // 11:30
const DEPART_MIDDAY_SPREAD_MIN: i64 = 60;
const MIDDAY_TRIP_MIN: i64 = 10;
const MIDDAY_TRIP_SPREAD_MIN: i64 = 10;
const LUNCH_STAY_MIN: i64 = 60;
const LUNCH_STAY_SPREAD_MIN: i64 = 30;
const DEPART_EVENING_MIN: i64 = 1035; // 17:15
const DEPART_EVENING_SPREAD_MIN: i64 = 180;

/// Transfer gap inserted between split legs; well under the chaining limit.
const SPLIT_GAP_S: i64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Guaranteed,
    Naturalistic,
}

/// Declarative description of a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub seed: u64,
    pub regime: Regime,
    pub rows: u16,
    pub cols: u16,
    pub cell_km: f64,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub n_agents: u32,
    pub frequent_fraction: f64,
    pub start_date: String,
    pub n_days: u32,
    pub tz_offset_min: i32,
    pub frequent_gap_min: f64,
    pub infrequent_gap_min: f64,
    pub midday_trip_prob: f64,
    pub public_share_morning: f64,
    pub public_share_midday: f64,
    pub public_share_evening: f64,
    pub jitter_m: f64,
    pub split_leg_prob: f64,
    /// Districts deliberately left without a station; only legal when all
    /// public shares are zero.
    pub stationless_districts: Vec<u16>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 0,
            regime: Regime::Guaranteed,
            rows: 2,
            cols: 3,
            cell_km: 3.6,
            origin_lon: 103.6,
            origin_lat: 1.2,
            n_agents: 1000,
            frequent_fraction: 0.3,
            start_date: "2011-04-04".to_owned(),
            n_days: 5,
            tz_offset_min: 480,
            frequent_gap_min: 10.0,
            infrequent_gap_min: 300.0,
            midday_trip_prob: 0.3,
            public_share_morning: 0.38,
            public_share_midday: 0.44,
            public_share_evening: 0.52,
            jitter_m: 150.0,
            split_leg_prob: 0.2,
            stationless_districts: Vec::new(),
        }
    }
}

impl WorldSpec {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::from_io(path, &e))?;
        let spec: WorldSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::input_invalid(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::input_invalid(format!("world spec: {msg}")));
        let d = self.rows as u32 * self.cols as u32;
        if self.rows == 0 || self.cols == 0 || d < 2 {
            return bad("grid must have at least 2 districts".into());
        }
        if d > 4096 {
            return bad(format!("grid of {d} districts is beyond the supported 4096"));
        }
        if self.n_agents > 1_000_000 {
            return bad("n_agents is capped at 1000000".into());
        }
        if !(self.cell_km.is_finite() && self.cell_km > 0.0) {
            return bad(format!("cell_km must be positive, got {}", self.cell_km));
        }
        if !(self.jitter_m.is_finite() && self.jitter_m >= 0.0) {
            return bad(format!("jitter_m must be non-negative, got {}", self.jitter_m));
        }
        let cell_m = self.cell_km * 1000.0;
        // Events stray at most 2 * jitter from a cell center (anchor plus
        // event jitter), so stays in adjacent cells come no closer than
        // cell_m - 4 * jitter. That slack must clear the merge radius, and
        // points must stay inside their cell.
        if cell_m - 4.0 * self.jitter_m < SEPARATION_M + 100.0 {
            return bad(format!(
                "cells of {cell_m} m with {} m jitter cannot keep stays separated by {SEPARATION_M} m",
                self.jitter_m
            ));
        }
        if 2.0 * self.jitter_m > 0.45 * cell_m {
            return bad("jitter_m is too large for the cell size".into());
        }
        for (name, v) in [
            ("frequent_fraction", self.frequent_fraction),
            ("midday_trip_prob", self.midday_trip_prob),
            ("public_share_morning", self.public_share_morning),
            ("public_share_midday", self.public_share_midday),
            ("public_share_evening", self.public_share_evening),
            ("split_leg_prob", self.split_leg_prob),
        ] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        // Sampling-rate classes must stay on their own sides of the 60-minute
        // frequency threshold with slack for randomness.
        if !(self.frequent_gap_min > 0.0 && self.frequent_gap_min <= 30.0) {
            return bad(format!(
                "frequent_gap_min must be in (0, 30], got {}",
                self.frequent_gap_min
            ));
        }
        if !(self.infrequent_gap_min >= 120.0 && self.infrequent_gap_min.is_finite()) {
            return bad(format!(
                "infrequent_gap_min must be at least 120, got {}",
                self.infrequent_gap_min
            ));
        }
        if self.n_days == 0 || self.n_days > 366 {
            return bad(format!("n_days must be in 1..=366, got {}", self.n_days));
        }
        if self.start_date_parsed().is_none() {
            return bad(format!("start_date must be YYYY-MM-DD, got {:?}", self.start_date));
        }
        if TzOffset::from_minutes(self.tz_offset_min).is_err() {
            return bad(format!("tz_offset_min {} out of range", self.tz_offset_min));
        }
        for &s in &self.stationless_districts {
            if s as u32 >= d {
                return bad(format!("stationless district {s} not in the grid"));
            }
        }
        let any_public = self.public_share_morning > 0.0
            || self.public_share_midday > 0.0
            || self.public_share_evening > 0.0;
        if any_public && !self.stationless_districts.is_empty() {
            return bad(format!(
                "district {} has no station but public trips are enabled",
                self.stationless_districts[0]
            ));
        }
        Ok(())
    }

    fn start_date_parsed(&self) -> Option<chrono::NaiveDate> {
        chrono::NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d").ok()
    }

    fn cell_m(&self) -> f64 {
        self.cell_km * 1000.0
    }

    fn d(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    fn tz(&self) -> TzOffset {
        TzOffset::from_minutes(self.tz_offset_min).expect("validated")
    }

    /// Unix time of local midnight opening the simulated horizon.
    fn t0(&self) -> i64 {
        let date = self.start_date_parsed().expect("validated");
        let days = date
            .signed_duration_since(chrono::NaiveDate::from_ymd_opt(1970, 1, 1).unwrap())
            .num_days();
        days * 86_400 - self.tz().seconds() as i64
    }

    /// Builds the grid map. Cell edges track metres at the map's latitude so
    /// cells are square on the ground, not in degrees.
    pub fn district_map(&self) -> CliResult<DistrictMap> {
        let lat_step = self.cell_m() / M_PER_DEG_LAT;
        let mid_lat = self.origin_lat + self.rows as f64 * lat_step / 2.0;
        let lon_step = self.cell_m() / (M_PER_DEG_LAT * mid_lat.to_radians().cos());
        let mut districts = Vec::with_capacity(self.d());
        for r in 0..self.rows {
            for c in 0..self.cols {
                let id = r * self.cols + c;
                let min = GeoPoint::new(
                    self.origin_lon + c as f64 * lon_step,
                    self.origin_lat + r as f64 * lat_step,
                )
                .map_err(|e| CliError::input_invalid(format!("world spec: {e}")))?;
                let max = GeoPoint::new(min.lon + lon_step, min.lat + lat_step)
                    .map_err(|e| CliError::input_invalid(format!("world spec: {e}")))?;
                let polygon = Polygon::rectangle(min, max)
                    .map_err(|e| CliError::input_invalid(format!("world spec: {e}")))?;
                districts.push(District::new(
                    DistrictId(id),
                    format!("district-{id:02}"),
                    polygon,
                ));
            }
        }
        let origin = GeoPoint::new(
            self.origin_lon + self.cols as f64 * lon_step / 2.0,
            self.origin_lat + self.rows as f64 * lat_step / 2.0,
        )
        .map_err(|e| CliError::input_invalid(format!("world spec: {e}")))?;
        DistrictMap::new(districts, origin)
            .map_err(|e| CliError::internal(format!("grid construction: {e}")))
    }
}

/// One generated trip with its ground-truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthTrip {
    pub agent: u32,
    pub origin: u16,
    pub dest: u16,
    pub depart_t: i64,
    pub arrive_t: i64,
    pub public: bool,
    pub frequent: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthEvent {
    pub t: i64,
    pub agent: u32,
    pub seq: u32,
    pub pos: GeoPoint,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthLeg {
    pub board_t: i64,
    pub alight_t: i64,
    pub agent: u32,
    pub seq: u32,
    pub board_d: u16,
    pub alight_d: u16,
}

/// A fully generated world, in memory.
pub struct SynthWorld {
    pub spec: WorldSpec,
    pub map: DistrictMap,
    /// Districts that have a station, ascending.
    pub station_districts: Vec<u16>,
    pub events: Vec<SynthEvent>,
    pub legs: Vec<SynthLeg>,
    pub trips: Vec<TruthTrip>,
    pub n_frequent: u32,
}

struct Stay {
    anchor: GeoPoint,
    arrive: i64,
    depart: i64,
}

fn sample_disc(rng: &mut ChaCha8Rng, radius: f64, center: GeoPoint) -> GeoPoint {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    geo::unproject(LocalXY::new(r * theta.cos(), r * theta.sin()), center)
}

fn exp_secs(rng: &mut ChaCha8Rng, mean_min: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() * mean_min * 60.0
}

/// Offset in seconds from local midnight: a fixed base plus a uniform spread,
/// both given in minutes.
fn offset_s(rng: &mut ChaCha8Rng, base_min: i64, spread_min: i64) -> i64 {
    base_min * 60 + rng.gen_range(0..spread_min * 60)
}

/// Nudges an arrival out of an hour's final three minutes so that, in the
/// guaranteed regime, the first event at the destination (arrival + 60 s)
/// still falls in the arrival's hour bin.
fn clamp_arrive(t: i64, tz: TzOffset) -> i64 {
    let local_minute = (t + tz.seconds() as i64).div_euclid(60).rem_euclid(60);
    if local_minute >= 57 {
        t - 240
    } else {
        t
    }
}

/// Generates the whole world from a validated spec.
pub fn build_world(spec: &WorldSpec) -> CliResult<SynthWorld> {
    spec.validate()?;
    let map = spec.district_map()?;
    let d = spec.d();
    let centers: Vec<GeoPoint> =
        (0..d).map(|i| map.centroid(DistrictId(i as u16))).collect();
    let station_districts: Vec<u16> = (0..d as u16)
        .filter(|i| !spec.stationless_districts.contains(i))
        .collect();

    let n_frequent = (spec.n_agents as f64 * spec.frequent_fraction).round() as u32;
    let tz = spec.tz();
    let t0 = spec.t0();
    let sim_end = t0 + spec.n_days as i64 * 86_400;
    let start_date = spec.start_date_parsed().expect("validated");

    let mut world = SynthWorld {
        spec: spec.clone(),
        map,
        station_districts,
        events: Vec::new(),
        legs: Vec::new(),
        trips: Vec::new(),
        n_frequent,
    };

    for agent in 0..spec.n_agents {
        let frequent = agent < n_frequent;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, agent as u64));

        // Fixed draw order: home, work, anchors, then the day schedule.
        let dd = d as u16;
        let home_d = rng.gen_range(0..dd);
        let work_d = {
            let k = rng.gen_range(0..dd - 1);
            if k >= home_d { k + 1 } else { k }
        };
        let home_anchor = sample_disc(&mut rng, spec.jitter_m, centers[home_d as usize]);
        let work_anchor = sample_disc(&mut rng, spec.jitter_m, centers[work_d as usize]);

        let mut stays: Vec<Stay> = Vec::new();
        let mut open = Stay { anchor: home_anchor, arrive: t0, depart: 0 };
        let mut leg_seq = 0u32;

        // Closes the open stay at `depart` and opens the next at `arrive`.
        macro_rules! move_to {
            ($anchor:expr, $depart:expr, $arrive:expr) => {{
                open.depart = $depart;
                stays.push(std::mem::replace(
                    &mut open,
                    Stay { anchor: $anchor, arrive: $arrive, depart: 0 },
                ));
            }};
        }

        let record_trip = |rng: &mut ChaCha8Rng,
                               trips: &mut Vec<TruthTrip>,
                               legs: &mut Vec<SynthLeg>,
                               leg_seq: &mut u32,
                               origin: u16,
                               dest: u16,
                               depart: i64,
                               arrive: i64,
                               public_share: f64| {
            let public = rng.gen::<f64>() < public_share;
            trips.push(TruthTrip {
                agent,
                origin,
                dest,
                depart_t: depart,
                arrive_t: arrive,
                public,
                frequent,
            });
            if !public {
                return;
            }
            let split = rng.gen::<f64>() < spec.split_leg_prob && arrive - depart >= 1500;
            if split {
                let via = rng.gen_range(0..dd);
                let mid = depart + (arrive - depart) * 2 / 5;
                legs.push(SynthLeg {
                    board_t: depart,
                    alight_t: mid,
                    agent,
                    seq: *leg_seq,
                    board_d: origin,
                    alight_d: via,
                });
                legs.push(SynthLeg {
                    board_t: mid + SPLIT_GAP_S,
                    alight_t: arrive,
                    agent,
                    seq: *leg_seq + 1,
                    board_d: via,
                    alight_d: dest,
                });
                *leg_seq += 2;
            } else {
                legs.push(SynthLeg {
                    board_t: depart,
                    alight_t: arrive,
                    agent,
                    seq: *leg_seq,
                    board_d: origin,
                    alight_d: dest,
                });
                *leg_seq += 1;
            }
        };

        for day in 0..spec.n_days {
            let date = start_date + chrono::Days::new(day as u64);
            if !is_workday(date) {
                continue;
            }
            let day_base = t0 + day as i64 * 86_400;

            // Home to work.
            let depart_home = day_base + offset_s(&mut rng, DEPART_HOME_MIN, DEPART_HOME_SPREAD_MIN);
            let dur = offset_s(&mut rng, TRIP_MIN, TRIP_SPREAD_MIN);
            let arrive_work = clamp_arrive(depart_home + dur, tz);
            move_to!(work_anchor, depart_home, arrive_work);
            record_trip(
                &mut rng, &mut world.trips, &mut world.legs, &mut leg_seq,
                home_d, work_d, depart_home, arrive_work, spec.public_share_morning,
            );

            // Optional midday excursion.
            if rng.gen::<f64>() < spec.midday_trip_prob {
                let lunch_d = {
                    let k = rng.gen_range(0..dd - 1);
                    if k >= work_d { k + 1 } else { k }
                };
                let lunch_anchor = sample_disc(&mut rng, spec.jitter_m, centers[lunch_d as usize]);
                let depart_mid =
                    day_base + offset_s(&mut rng, DEPART_MIDDAY_MIN, DEPART_MIDDAY_SPREAD_MIN);
                let dur_out = offset_s(&mut rng, MIDDAY_TRIP_MIN, MIDDAY_TRIP_SPREAD_MIN);
                let arrive_lunch = clamp_arrive(depart_mid + dur_out, tz);
                let stay_len = offset_s(&mut rng, LUNCH_STAY_MIN, LUNCH_STAY_SPREAD_MIN);
                let depart_lunch = arrive_lunch + stay_len;
                let dur_back = offset_s(&mut rng, MIDDAY_TRIP_MIN, MIDDAY_TRIP_SPREAD_MIN);
                let arrive_back = clamp_arrive(depart_lunch + dur_back, tz);

                move_to!(lunch_anchor, depart_mid, arrive_lunch);
                record_trip(
                    &mut rng, &mut world.trips, &mut world.legs, &mut leg_seq,
                    work_d, lunch_d, depart_mid, arrive_lunch, spec.public_share_midday,
                );
                move_to!(work_anchor, depart_lunch, arrive_back);
                record_trip(
                    &mut rng, &mut world.trips, &mut world.legs, &mut leg_seq,
                    lunch_d, work_d, depart_lunch, arrive_back, spec.public_share_midday,
                );
            }

            // Work to home.
            let depart_evening =
                day_base + offset_s(&mut rng, DEPART_EVENING_MIN, DEPART_EVENING_SPREAD_MIN);
            let dur = offset_s(&mut rng, TRIP_MIN, TRIP_SPREAD_MIN);
            let arrive_home = clamp_arrive(depart_evening + dur, tz);
            move_to!(home_anchor, depart_evening, arrive_home);
            record_trip(
                &mut rng, &mut world.trips, &mut world.legs, &mut leg_seq,
                work_d, home_d, depart_evening, arrive_home, spec.public_share_evening,
            );
        }
        open.depart = sim_end;
        stays.push(open);

        // Event emission over the settled stay list.
        let gap_min = if frequent { spec.frequent_gap_min } else { spec.infrequent_gap_min };
        let mut seq = 0u32;
        for stay in &stays {
            let mut push = |t: i64, rng: &mut ChaCha8Rng| {
                let pos = sample_disc(rng, spec.jitter_m, stay.anchor);
                world.events.push(SynthEvent { t, agent, seq, pos });
                seq += 1;
            };
            match spec.regime {
                Regime::Guaranteed => {
                    debug_assert!(stay.depart - stay.arrive > 120);
                    push(stay.arrive + 60, &mut rng);
                    let cap = (stay.depart - 61) as f64;
                    let mut t = (stay.arrive + 61) as f64 + exp_secs(&mut rng, gap_min);
                    while t < cap {
                        push(t as i64, &mut rng);
                        t += exp_secs(&mut rng, gap_min);
                    }
                    push(stay.depart - 60, &mut rng);
                }
                Regime::Naturalistic => {
                    let cap = stay.depart as f64;
                    let mut t = stay.arrive as f64 + exp_secs(&mut rng, gap_min);
                    while t < cap {
                        push(t as i64, &mut rng);
                        t += exp_secs(&mut rng, gap_min);
                    }
                }
            }
        }
    }

    // Logs are time-ordered like real exports; (t, agent, seq) is a total
    // order, so the sort result is unique and worker-independent.
    world.events.sort_unstable_by_key(|e| (e.t, e.agent, e.seq));
    world.legs.sort_unstable_by_key(|l| (l.board_t, l.agent, l.seq));
    Ok(world)
}

/// Selector for building truth OD series from the trip list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSelect {
    All,
    Public,
    Private,
    Frequent,
}

impl SynthWorld {
    /// Bins ground-truth trips (by arrival time) into an OD series.
    pub fn truth_series(&self, select: TruthSelect, granularity_s: i64, label: &str) -> Vec<ODMatrix> {
        let trips: Vec<Trip> = self
            .trips
            .iter()
            .filter(|t| match select {
                TruthSelect::All => true,
                TruthSelect::Public => t.public,
                TruthSelect::Private => !t.public,
                TruthSelect::Frequent => t.frequent,
            })
            .map(|t| Trip {
                user: UserId(t.agent),
                origin: self.map.centroid(DistrictId(t.origin)),
                dest: self.map.centroid(DistrictId(t.dest)),
                start_t: t.depart_t,
                end_t: t.arrive_t,
                origin_district: Some(DistrictId(t.origin)),
                dest_district: Some(DistrictId(t.dest)),
            })
            .collect();
        let (ms, diag) = bin_trips(trips.iter(), self.map.d(), granularity_s, label)
            .expect("granularity validated");
        debug_assert_eq!(diag.skipped_no_district, 0);
        ms
    }
}

/// Paths of everything `write_world` produces.
#[derive(Debug, Clone, Serialize)]
pub struct SynthPaths {
    pub districts: PathBuf,
    pub stations: PathBuf,
    pub cdr: PathBuf,
    pub legs: PathBuf,
    pub truth_trips: PathBuf,
    pub truth_overall: PathBuf,
    pub truth_public: PathBuf,
    pub truth_private: PathBuf,
    pub truth_frequent: PathBuf,
    pub manifest: PathBuf,
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    let f = fs::File::create(path)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::internal(format!("writing {}: {e}", path.display()))
}

/// Writes the full world into `out_dir` and returns the manifest value.
pub fn write_world(world: &SynthWorld, out_dir: &Path) -> CliResult<(SynthPaths, serde_json::Value)> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", out_dir.display())))?;
    let paths = SynthPaths {
        districts: out_dir.join("districts.geojson"),
        stations: out_dir.join("stations.csv"),
        cdr: out_dir.join("cdr.csv"),
        legs: out_dir.join("legs.csv"),
        truth_trips: out_dir.join("truth_trips.csv"),
        truth_overall: out_dir.join("truth_overall.csv"),
        truth_public: out_dir.join("truth_public.csv"),
        truth_private: out_dir.join("truth_private.csv"),
        truth_frequent: out_dir.join("truth_frequent.csv"),
        manifest: out_dir.join("synth_manifest.json"),
    };

    write_districts(&paths.districts, &world.map)?;

    {
        let mut w = create(&paths.stations)?;
        let err = |e| io_err(&paths.stations, e);
        writeln!(w, "station_id,lon,lat").map_err(err)?;
        for &d in &world.station_districts {
            let c = world.map.centroid(DistrictId(d));
            writeln!(w, "s{d},{:.6},{:.6}", c.lon, c.lat).map_err(err)?;
        }
        w.flush().map_err(err)?;
    }

    {
        let mut w = create(&paths.cdr)?;
        let err = |e| io_err(&paths.cdr, e);
        writeln!(w, "user_id,timestamp,lon,lat").map_err(err)?;
        let mut line = String::with_capacity(64);
        for e in &world.events {
            line.clear();
            let _ = write!(line, "a{:06},{},{:.6},{:.6}", e.agent, e.t, e.pos.lon, e.pos.lat);
            writeln!(w, "{line}").map_err(err)?;
        }
        w.flush().map_err(err)?;
    }

    {
        let mut w = create(&paths.legs)?;
        let err = |e| io_err(&paths.legs, e);
        writeln!(w, "card_id,board_time,alight_time,board_station,alight_station").map_err(err)?;
        for l in &world.legs {
            writeln!(w, "c{:06},{},{},s{},s{}", l.agent, l.board_t, l.alight_t, l.board_d, l.alight_d)
                .map_err(err)?;
        }
        w.flush().map_err(err)?;
    }

    {
        let mut w = create(&paths.truth_trips)?;
        let err = |e| io_err(&paths.truth_trips, e);
        writeln!(w, "agent_id,origin_district,dest_district,depart_time,arrive_time,mode,frequent")
            .map_err(err)?;
        for t in &world.trips {
            writeln!(
                w,
                "a{:06},{},{},{},{},{},{}",
                t.agent,
                t.origin,
                t.dest,
                t.depart_t,
                t.arrive_t,
                if t.public { "public" } else { "private" },
                t.frequent,
            )
            .map_err(err)?;
        }
        w.flush().map_err(err)?;
    }

    let spec_value = serde_json::to_value(&world.spec).expect("spec serializes");
    let d = world.map.d();
    for (path, select, label) in [
        (&paths.truth_overall, TruthSelect::All, "truth-overall"),
        (&paths.truth_public, TruthSelect::Public, "truth-public"),
        (&paths.truth_private, TruthSelect::Private, "truth-private"),
        (&paths.truth_frequent, TruthSelect::Frequent, "truth-frequent"),
    ] {
        let series = world.truth_series(select, 3600, label);
        write_od_series(
            path,
            &series,
            d,
            odflow_core::od::MatrixKind::Count,
            label,
            "none",
            &spec_value,
        )?;
    }

    let manifest = serde_json::json!({
        "spec": spec_value,
        "districts": d,
        "stations": world.station_districts.len(),
        "agents": world.spec.n_agents,
        "frequent_agents": world.n_frequent,
        "events": world.events.len(),
        "legs": world.legs.len(),
        "trips": world.trips.len(),
        "public_trips": world.trips.iter().filter(|t| t.public).count(),
        "files": paths,
    });
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::internal(format!("serializing manifest: {e}")))?;
    text.push('\n');
    fs::write(&paths.manifest, text).map_err(|e| io_err(&paths.manifest, e))?;

    Ok((paths, manifest))
}

/// Convenience: validate, build, write.
pub fn generate(spec: &WorldSpec, out_dir: &Path) -> CliResult<(SynthWorld, SynthPaths, serde_json::Value)> {
    let world = build_world(spec)?;
    let (paths, manifest) = write_world(&world, out_dir)?;
    Ok((world, paths, manifest))
}
