//! CSV readers and writers for the raw logs and intermediate artifacts.
//!
//! Raw logs (cellphone events, smart-card legs) are third-party data, so
//! malformed lines are counted and skipped up to a configurable fraction;
//! past it the file is rejected wholesale. Machine-written intermediates
//! (trips, places, stats) get no such tolerance: any bad row is fatal.
//!
//! All floats are written in shortest round-trip form, so re-reading a file
//! reproduces the exact bit pattern that was written.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use odflow_core::cdr::{EventRecord, Trip, UserId, UserStats};
use odflow_core::geo::{DistrictId, DistrictMap, GeoPoint};
use odflow_core::places::SignificantPlace;
use odflow_core::transit::{CardId, SmartCardLeg, StationId, StationIndex};

use crate::config::TsFormat;
use crate::error::{CliError, CliResult};

/// Accepted timestamp range: years 1900 through 2999. Values outside it are
/// treated as corrupt, not as exotic data.
const MIN_TS: i64 = -2_208_988_800;
const MAX_TS: i64 = 32_503_680_000;

/// Maps external string ids to dense u32 indices, preserving first-appearance
/// order. Dense ids keep the hot structs at 32 bytes.
#[derive(Debug, Default)]
pub struct Interner {
    names: Vec<Box<str>>,
    index: HashMap<Box<str>, u32>,
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        let boxed: Box<str> = name.into();
        self.names.push(boxed.clone());
        self.index.insert(boxed, id);
        id
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Per-file ingest tallies; `bytes_read` must end up equal to the file size.
#[derive(Debug, Default, Clone, Copy, Serialize)]
pub struct ReadDiagnostics {
    pub bytes_read: u64,
    pub data_lines: u64,
    pub malformed_lines: u64,
}

fn check_malformed(
    path: &Path,
    diag: &ReadDiagnostics,
    max_malformed_fraction: f64,
) -> CliResult<()> {
    if diag.data_lines == 0 {
        return Ok(());
    }
    let fraction = diag.malformed_lines as f64 / diag.data_lines as f64;
    if fraction > max_malformed_fraction {
        return Err(CliError::input_invalid(format!(
            "{}: {} of {} data lines malformed ({:.2}%), above the {:.2}% limit",
            path.display(),
            diag.malformed_lines,
            diag.data_lines,
            fraction * 100.0,
            max_malformed_fraction * 100.0
        )));
    }
    Ok(())
}

fn open_csv(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::from_io(path, &e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// The header line is the file's self-description; if it does not match the
/// contract exactly the file is some other format and is rejected outright.
fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> CliResult<()> {
    let headers = rdr
        .headers()
        .map_err(|e| CliError::input_invalid(format!("{}: unreadable header: {e}", path.display())))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(CliError::input_invalid(format!(
            "{}: expected header {:?}, got {:?}",
            path.display(),
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_ts(field: &str, fmt: TsFormat) -> Option<i64> {
    let t = match fmt {
        TsFormat::Unix => field.parse::<i64>().ok()?,
        TsFormat::Rfc3339 => chrono::DateTime::parse_from_rfc3339(field).ok()?.timestamp(),
    };
    (MIN_TS..=MAX_TS).contains(&t).then_some(t)
}

/// Cell towers referenced by tower-mode CDR files: `tower_id,lon,lat`.
#[derive(Debug, Default)]
pub struct TowerTable {
    positions: HashMap<Box<str>, GeoPoint>,
}

impl TowerTable {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

pub fn read_towers(path: &Path) -> CliResult<TowerTable> {
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, &["tower_id", "lon", "lat"])?;
    let mut table = TowerTable::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |what: &str| {
            CliError::input_invalid(format!("{} line {line}: {what}", path.display()))
        };
        let rec = rec.map_err(|e| bad(&format!("unparsable record: {e}")))?;
        if rec.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        let lon: f64 = rec[1].parse().map_err(|_| bad("bad lon"))?;
        let lat: f64 = rec[2].parse().map_err(|_| bad("bad lat"))?;
        let pos = GeoPoint::new(lon, lat).map_err(|e| bad(&e.to_string()))?;
        if table.positions.insert(rec[0].into(), pos).is_some() {
            return Err(bad(&format!("duplicate tower id {:?}", &rec[0])));
        }
    }
    if table.is_empty() {
        return Err(CliError::input_invalid(format!("{}: no towers defined", path.display())));
    }
    Ok(table)
}

/// A parsed CDR file: events in file order plus the user table.
#[derive(Debug)]
pub struct CdrData {
    pub events: Vec<EventRecord>,
    pub users: Interner,
    pub diag: ReadDiagnostics,
}

/// Reads `user_id,timestamp,lon,lat` (or `user_id,timestamp,tower_id` when a
/// tower table is supplied). Structurally broken lines, bad timestamps, bad
/// coordinates, and unknown towers count as malformed and are skipped.
pub fn read_cdr(
    path: &Path,
    fmt: TsFormat,
    towers: Option<&TowerTable>,
    max_malformed_fraction: f64,
) -> CliResult<CdrData> {
    let mut rdr = open_csv(path)?;
    let expected: &[&str] = match towers {
        Some(_) => &["user_id", "timestamp", "tower_id"],
        None => &["user_id", "timestamp", "lon", "lat"],
    };
    check_header(path, &mut rdr, expected)?;

    let mut data = CdrData {
        events: Vec::new(),
        users: Interner::default(),
        diag: ReadDiagnostics::default(),
    };
    let mut rec = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(_) => {
                data.diag.data_lines += 1;
                data.diag.malformed_lines += 1;
                continue;
            }
        }
        data.diag.data_lines += 1;
        let Some(ev) = parse_cdr_record(&rec, fmt, towers, &mut data.users) else {
            data.diag.malformed_lines += 1;
            continue;
        };
        data.events.push(ev);
    }
    data.diag.bytes_read = rdr.position().byte();
    check_malformed(path, &data.diag, max_malformed_fraction)?;
    Ok(data)
}

fn parse_cdr_record(
    rec: &csv::ByteRecord,
    fmt: TsFormat,
    towers: Option<&TowerTable>,
    users: &mut Interner,
) -> Option<EventRecord> {
    let expected_len = if towers.is_some() { 3 } else { 4 };
    if rec.len() != expected_len {
        return None;
    }
    let user = std::str::from_utf8(rec.get(0)?).ok()?;
    if user.is_empty() {
        return None;
    }
    let t = parse_ts(std::str::from_utf8(rec.get(1)?).ok()?, fmt)?;
    let pos = match towers {
        Some(table) => *table.positions.get(std::str::from_utf8(rec.get(2)?).ok()?)?,
        None => {
            let lon: f64 = std::str::from_utf8(rec.get(2)?).ok()?.parse().ok()?;
            let lat: f64 = std::str::from_utf8(rec.get(3)?).ok()?.parse().ok()?;
            GeoPoint::new(lon, lat).ok()?
        }
    };
    Some(EventRecord { user: UserId(users.intern(user)), t, pos })
}

/// Stations with their resolved districts: `station_id,lon,lat`.
///
/// The station file is the authoritative station universe. A station that
/// falls outside every district poisons all public OD accounting, so it is
/// rejected during load with its id in the message.
#[derive(Debug)]
pub struct StationTable {
    pub names: Interner,
    pub positions: Vec<GeoPoint>,
    pub index: StationIndex,
}

pub fn read_stations(path: &Path, map: &DistrictMap) -> CliResult<StationTable> {
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, &["station_id", "lon", "lat"])?;
    let mut names = Interner::default();
    let mut positions = Vec::new();
    let mut districts = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |what: String| {
            CliError::input_invalid(format!("{} line {line}: {what}", path.display()))
        };
        let rec = rec.map_err(|e| bad(format!("unparsable record: {e}")))?;
        if rec.len() != 3 {
            return Err(bad("expected 3 fields".into()));
        }
        let lon: f64 = rec[1].parse().map_err(|_| bad("bad lon".into()))?;
        let lat: f64 = rec[2].parse().map_err(|_| bad("bad lat".into()))?;
        let pos = GeoPoint::new(lon, lat).map_err(|e| bad(e.to_string()))?;
        let district = map.district_of(pos).ok_or_else(|| {
            bad(format!("station {:?} lies outside every district", &rec[0]))
        })?;
        let id = names.intern(&rec[0]);
        if (id as usize) < positions.len() {
            return Err(bad(format!("duplicate station id {:?}", &rec[0])));
        }
        positions.push(pos);
        districts.push(district);
    }
    if names.is_empty() {
        return Err(CliError::input_invalid(format!("{}: no stations defined", path.display())));
    }
    Ok(StationTable { names, positions, index: StationIndex::new(districts) })
}

/// A parsed smart-card leg file.
#[derive(Debug)]
pub struct LegsData {
    pub legs: Vec<SmartCardLeg>,
    pub cards: Interner,
    pub diag: ReadDiagnostics,
}

/// Reads `card_id,board_time,alight_time,board_station,alight_station`.
/// Lines that fail to parse or have `board_time >= alight_time` are malformed
/// and skipped. A well-formed line naming a station that is not in the
/// station table is a referential integrity failure and aborts the load.
pub fn read_legs(
    path: &Path,
    fmt: TsFormat,
    stations: &StationTable,
    max_malformed_fraction: f64,
) -> CliResult<LegsData> {
    let mut rdr = open_csv(path)?;
    check_header(
        path,
        &mut rdr,
        &["card_id", "board_time", "alight_time", "board_station", "alight_station"],
    )?;

    let mut data = LegsData {
        legs: Vec::new(),
        cards: Interner::default(),
        diag: ReadDiagnostics::default(),
    };
    let mut rec = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(_) => {
                data.diag.data_lines += 1;
                data.diag.malformed_lines += 1;
                continue;
            }
        }
        data.diag.data_lines += 1;
        match parse_leg_record(&rec, fmt, stations, &mut data.cards) {
            Ok(Some(leg)) => data.legs.push(leg),
            Ok(None) => data.diag.malformed_lines += 1,
            Err(station) => {
                return Err(CliError::input_invalid(format!(
                    "{} line {}: unknown station {station:?}",
                    path.display(),
                    data.diag.data_lines + 1
                )));
            }
        }
    }
    data.diag.bytes_read = rdr.position().byte();
    check_malformed(path, &data.diag, max_malformed_fraction)?;
    Ok(data)
}

/// `Ok(None)` = malformed, `Err(name)` = unknown station.
fn parse_leg_record(
    rec: &csv::ByteRecord,
    fmt: TsFormat,
    stations: &StationTable,
    cards: &mut Interner,
) -> Result<Option<SmartCardLeg>, String> {
    if rec.len() != 5 {
        return Ok(None);
    }
    let field = |i: usize| std::str::from_utf8(rec.get(i).unwrap()).ok();
    let (Some(card), Some(board), Some(alight), Some(b_st), Some(a_st)) =
        (field(0), field(1), field(2), field(3), field(4))
    else {
        return Ok(None);
    };
    if card.is_empty() {
        return Ok(None);
    }
    let (Some(board_t), Some(alight_t)) = (parse_ts(board, fmt), parse_ts(alight, fmt)) else {
        return Ok(None);
    };
    if board_t >= alight_t {
        return Ok(None);
    }
    let station_id = |name: &str| -> Result<StationId, String> {
        match stations.names.get(name) {
            Some(id) => Ok(StationId(id)),
            None => Err(name.to_owned()),
        }
    };
    Ok(Some(SmartCardLeg {
        card: CardId(cards.intern(card)),
        board_t,
        alight_t,
        board_station: station_id(b_st)?,
        alight_station: station_id(a_st)?,
    }))
}

#[derive(Serialize, Deserialize)]
struct TripRow {
    user_id: String,
    origin_district: Option<u16>,
    dest_district: Option<u16>,
    start_time: i64,
    end_time: i64,
    origin_lon: f64,
    origin_lat: f64,
    dest_lon: f64,
    dest_lat: f64,
}

/// Opens a CSV writer with the header already written, so empty outputs stay
/// self-describing. Serialized rows after a manual record do not re-emit a
/// header.
fn writer(path: &Path, header: &[&str]) -> CliResult<csv::Writer<File>> {
    let file = File::create(path)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", path.display())))?;
    // Headers are written by hand so an empty table still yields a
    // self-describing file; auto headers are off to avoid a duplicate.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(header)
        .map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))?;
    Ok(w)
}

/// Writes extracted trips. Timestamps are always Unix seconds here regardless
/// of the input timestamp format; district columns are empty off the map.
pub fn write_trips(path: &Path, trips: &[Trip], users: &Interner) -> CliResult<()> {
    let mut w = writer(
        path,
        &[
            "user_id", "origin_district", "dest_district", "start_time", "end_time",
            "origin_lon", "origin_lat", "dest_lon", "dest_lat",
        ],
    )?;
    for t in trips {
        w.serialize(TripRow {
            user_id: users.name(t.user.0).to_owned(),
            origin_district: t.origin_district.map(|d| d.0),
            dest_district: t.dest_district.map(|d| d.0),
            start_time: t.start_t,
            end_time: t.end_t,
            origin_lon: t.origin.lon,
            origin_lat: t.origin.lat,
            dest_lon: t.dest.lon,
            dest_lat: t.dest.lat,
        })
        .map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Reads a trips file back. These files are machine-written, so any bad row
/// is fatal; district ids are checked against `d`.
pub fn read_trips(path: &Path, d: usize) -> CliResult<(Vec<Trip>, Interner)> {
    let mut rdr = open_csv(path)?;
    let mut users = Interner::default();
    let mut trips = Vec::new();
    for (i, row) in rdr.deserialize::<TripRow>().enumerate() {
        let line = i + 2;
        let bad = |what: String| {
            CliError::input_invalid(format!("{} line {line}: {what}", path.display()))
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let district = |field: Option<u16>, what: &str| -> CliResult<Option<DistrictId>> {
            match field {
                None => Ok(None),
                Some(x) if (x as usize) < d => Ok(Some(DistrictId(x))),
                Some(x) => Err(bad(format!("{what} district {x} out of range 0..{d}"))),
            }
        };
        if row.start_time >= row.end_time {
            return Err(bad("trip does not advance in time".into()));
        }
        let origin = GeoPoint::new(row.origin_lon, row.origin_lat).map_err(|e| bad(e.to_string()))?;
        let dest = GeoPoint::new(row.dest_lon, row.dest_lat).map_err(|e| bad(e.to_string()))?;
        trips.push(Trip {
            user: UserId(users.intern(&row.user_id)),
            origin,
            dest,
            start_t: row.start_time,
            end_t: row.end_time,
            origin_district: district(row.origin_district, "origin")?,
            dest_district: district(row.dest_district, "dest")?,
        });
    }
    Ok((trips, users))
}

#[derive(Serialize)]
struct PlaceRow<'a> {
    user_id: &'a str,
    rank: u32,
    lon: f64,
    lat: f64,
    share: f64,
    n_events: u32,
    district: Option<u16>,
}

/// Writes significant places, one block per user, ranked by share within the
/// user as produced by detection.
pub fn write_places(path: &Path, places: &[Vec<SignificantPlace>], users: &Interner) -> CliResult<()> {
    let mut w = writer(path, &["user_id", "rank", "lon", "lat", "share", "n_events", "district"])?;
    for user_places in places {
        for (rank, p) in user_places.iter().enumerate() {
            w.serialize(PlaceRow {
                user_id: users.name(p.user.0),
                rank: rank as u32,
                lon: p.centroid.lon,
                lat: p.centroid.lat,
                share: p.share,
                n_events: p.n_events,
                district: p.district.map(|d| d.0),
            })
            .map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))?;
        }
    }
    w.flush().map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

#[derive(Serialize)]
struct StatsRow<'a> {
    user_id: &'a str,
    n_events: u64,
    mean_gap_min: Option<f64>,
    q25_min: Option<f64>,
    q50_min: Option<f64>,
    q75_min: Option<f64>,
    frequent: bool,
}

/// Writes per-user activity stats with the frequent/infrequent verdict.
pub fn write_stats(
    path: &Path,
    stats: &[(UserId, UserStats)],
    users: &Interner,
    threshold_min: f64,
) -> CliResult<()> {
    let mut w = writer(
        path,
        &["user_id", "n_events", "mean_gap_min", "q25_min", "q50_min", "q75_min", "frequent"],
    )?;
    for (user, s) in stats {
        let q = s.gap_quartiles_min;
        w.serialize(StatsRow {
            user_id: users.name(user.0),
            n_events: s.n_events,
            mean_gap_min: s.inter_event_mean_min,
            q25_min: q.map(|q| q[0]),
            q50_min: q.map(|q| q[1]),
            q75_min: q.map(|q| q[2]),
            frequent: odflow_core::cdr::is_frequent(s, threshold_min),
        })
        .map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))?;
    Ok(())
}
