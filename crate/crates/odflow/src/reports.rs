//! Report assembly: per-window mode shares, underserved-connection rankings,
//! optional intra-district distance estimates, and flow map output.
//!
//! Aggregation selects hourly matrices by local civil time, sums them, and
//! presents per-day averages over the distinct local dates selected. Both
//! mode series are normalized by the same day set, so a day with zero public
//! trips dilutes the public average instead of being skipped.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use odflow_core::analysis::{
    intra_district_mean_distance, mode_share, underserved_ranking, IntraDistrictReport,
};
use odflow_core::geo::{DistrictId, DistrictMap};
use odflow_core::od::{aggregate, MatrixKind, Normalization, ODMatrix, WindowFilter};
use odflow_core::time::{is_workday, local_civil, TzOffset};

use crate::error::{CliError, CliResult};

/// One analysis window by name and local-hour range.
#[derive(Debug, Clone, Copy)]
pub struct WindowSpec {
    pub name: &'static str,
    pub hours: (u32, u32),
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectionRow {
    pub origin_district: u16,
    pub dest_district: u16,
    pub origin_name: String,
    pub dest_name: String,
    pub public_n: f64,
    pub private_n: f64,
    pub total_n: f64,
    pub private_share: f64,
    pub underserved: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowReport {
    pub window: String,
    pub start_hour: u32,
    pub end_hour: u32,
    /// Distinct local dates contributing to this window.
    pub days: u64,
    pub public_trips_per_day: f64,
    pub private_trips_per_day: f64,
    pub public_share: Option<f64>,
    pub top_connections: Vec<ConnectionRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistrictDistanceRow {
    pub district: u16,
    pub name: String,
    pub mean_m: f64,
    pub area_m2: f64,
    pub n_samples: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntraReport {
    pub per_district: Vec<DistrictDistanceRow>,
    pub skipped: Vec<u16>,
    pub mean_district_area_m2: f64,
    pub square_side_m: f64,
    pub area_law_mean_distance_m: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub windows: Vec<WindowReport>,
    pub intra_district: Option<IntraReport>,
    pub config: Value,
}

/// Mirrors the selection rule used for aggregation: a window belongs to the
/// local hour its start falls in, on its start's local date.
fn window_matches(window: (i64, i64), hours: (u32, u32), workdays_only: bool, tz: TzOffset) -> bool {
    let Some(civil) = local_civil(window.0, tz) else {
        return false;
    };
    if workdays_only && !is_workday(civil.date) {
        return false;
    }
    civil.hour >= hours.0 && civil.hour < hours.1
}

fn select(
    series: &[ODMatrix],
    hours: (u32, u32),
    workdays_only: bool,
    tz: TzOffset,
) -> Vec<&ODMatrix> {
    series
        .iter()
        .filter(|m| window_matches(m.window(), hours, workdays_only, tz))
        .collect()
}

/// Sums preselected matrices; `None` when nothing was selected.
fn sum_selected(
    selected: &[&ODMatrix],
    d: usize,
    kind: MatrixKind,
    label: &str,
) -> CliResult<Option<ODMatrix>> {
    if selected.is_empty() {
        return Ok(None);
    }
    let owned: Vec<ODMatrix> = selected.iter().map(|&m| m.clone()).collect();
    let all = WindowFilter::all(TzOffset::UTC);
    let agg = aggregate(&owned, &all, Normalization::Total, label)
        .map_err(|e| CliError::internal(format!("aggregating {label}: {e}")))?;
    if agg.d() != d || agg.kind() != kind {
        return Err(CliError::internal(format!("aggregate of {label} has unexpected shape")));
    }
    Ok(Some(agg))
}

/// Builds the report row for one named window.
///
/// `public` and `private` are hourly series; `private` spans the union of
/// all windows, so its matching dates define the day set for both averages.
pub fn window_report(
    spec: WindowSpec,
    public: &[ODMatrix],
    private: &[ODMatrix],
    workdays_only: bool,
    tz: TzOffset,
    top_k: usize,
    map: &DistrictMap,
) -> CliResult<WindowReport> {
    let d = map.d();
    let selected_public = select(public, spec.hours, workdays_only, tz);
    let selected_private = select(private, spec.hours, workdays_only, tz);

    let mut days_set = std::collections::BTreeSet::new();
    for m in &selected_private {
        if let Some(civil) = local_civil(m.window().0, tz) {
            days_set.insert(civil.date);
        }
    }
    for m in &selected_public {
        if let Some(civil) = local_civil(m.window().0, tz) {
            days_set.insert(civil.date);
        }
    }
    let days = days_set.len() as u64;

    let span = (0, 1);
    let public_agg = match sum_selected(&selected_public, d, MatrixKind::Count, "public-window")? {
        Some(m) => m,
        None => ODMatrix::zero(d, span, "public-window", MatrixKind::Count)
            .map_err(|e| CliError::internal(e.to_string()))?,
    };
    let private_agg =
        match sum_selected(&selected_private, d, MatrixKind::Estimate, "private-window")? {
            Some(m) => m,
            None => ODMatrix::zero(d, span, "private-window", MatrixKind::Estimate)
                .map_err(|e| CliError::internal(e.to_string()))?,
        };

    let share = mode_share(&public_agg, &private_agg)
        .map_err(|e| CliError::internal(format!("mode share for {}: {e}", spec.name)))?;
    let ranking = if days == 0 {
        Vec::new()
    } else {
        underserved_ranking(&public_agg, &private_agg, top_k)
            .map_err(|e| CliError::internal(format!("ranking for {}: {e}", spec.name)))?
    };

    let per_day = |v: f64| if days > 0 { v / days as f64 } else { 0.0 };
    let top_connections = ranking
        .iter()
        .map(|r| ConnectionRow {
            origin_district: r.origin.0,
            dest_district: r.dest.0,
            origin_name: map.district(r.origin).name.clone(),
            dest_name: map.district(r.dest).name.clone(),
            public_n: per_day(r.public_n),
            private_n: per_day(r.private_n),
            total_n: per_day(r.total_n),
            private_share: r.private_share,
            underserved: r.underserved,
        })
        .collect();

    Ok(WindowReport {
        window: spec.name.to_owned(),
        start_hour: spec.hours.0,
        end_hour: spec.hours.1,
        days,
        public_trips_per_day: per_day(share.public_trips),
        private_trips_per_day: per_day(share.private_trips),
        public_share: share.public_share,
        top_connections,
    })
}

fn intra_report(map: &DistrictMap, samples: u32, seed: u64) -> IntraReport {
    let IntraDistrictReport { per_district, skipped, area_law } =
        intra_district_mean_distance(map, samples, seed);
    IntraReport {
        per_district: per_district
            .iter()
            .map(|r| DistrictDistanceRow {
                district: r.district.0,
                name: map.district(r.district).name.clone(),
                mean_m: r.mean_m,
                area_m2: r.area_m2,
                n_samples: r.n_samples,
            })
            .collect(),
        skipped: skipped.iter().map(|d| d.0).collect(),
        mean_district_area_m2: area_law.mean_district_area_m2,
        square_side_m: area_law.square_side_m,
        area_law_mean_distance_m: area_law.mean_distance_m,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn build_report(
    windows: &[WindowSpec],
    public: &[ODMatrix],
    private: &[ODMatrix],
    workdays_only: bool,
    tz: TzOffset,
    top_k: usize,
    map: &DistrictMap,
    intra_samples: u32,
    seed: u64,
    config: Value,
) -> CliResult<Report> {
    let mut rows = Vec::with_capacity(windows.len());
    for &w in windows {
        rows.push(window_report(w, public, private, workdays_only, tz, top_k, map)?);
    }
    let intra = (intra_samples > 0).then(|| intra_report(map, intra_samples, seed));
    Ok(Report { windows: rows, intra_district: intra, config })
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::internal(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Sidecar for non-OD outputs: the format tag plus the config echo.
pub fn write_meta(output: &Path, format: &str, config: &Value) -> CliResult<()> {
    let meta = crate::odio::sidecar_path(output);
    write_json(&meta, &serde_json::json!({ "format": format, "config": config }))
}

#[derive(Serialize)]
struct ModeShareRow<'a> {
    window: &'a str,
    start_hour: u32,
    end_hour: u32,
    days: u64,
    public_trips_per_day: f64,
    private_trips_per_day: f64,
    public_share: Option<f64>,
}

#[derive(Serialize)]
struct UnderservedRow<'a> {
    window: &'a str,
    rank: u32,
    origin_district: u16,
    dest_district: u16,
    origin_name: &'a str,
    dest_name: &'a str,
    public_n: f64,
    private_n: f64,
    total_n: f64,
    private_share: f64,
    underserved: bool,
}

/// Writes report.json, mode_share.csv, underserved.csv, and (optionally) one
/// flow map per window. Returns relative names of everything written.
pub fn write_report_files(
    out_dir: &Path,
    report: &Report,
    map: &DistrictMap,
    flow_geojson: bool,
) -> CliResult<Vec<String>> {
    let mut written = Vec::new();

    let report_path = out_dir.join("report.json");
    write_json(&report_path, report)?;
    written.push("report.json".to_owned());

    let mode_path = out_dir.join("mode_share.csv");
    {
        let file = fs::File::create(&mode_path)
            .map_err(|e| CliError::internal(format!("cannot create {}: {e}", mode_path.display())))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        w.write_record([
            "window",
            "start_hour",
            "end_hour",
            "days",
            "public_trips_per_day",
            "private_trips_per_day",
            "public_share",
        ])
        .map_err(|e| CliError::internal(format!("writing {}: {e}", mode_path.display())))?;
        for r in &report.windows {
            w.serialize(ModeShareRow {
                window: &r.window,
                start_hour: r.start_hour,
                end_hour: r.end_hour,
                days: r.days,
                public_trips_per_day: r.public_trips_per_day,
                private_trips_per_day: r.private_trips_per_day,
                public_share: r.public_share,
            })
            .map_err(|e| CliError::internal(format!("writing {}: {e}", mode_path.display())))?;
        }
        w.flush()
            .map_err(|e| CliError::internal(format!("writing {}: {e}", mode_path.display())))?;
    }
    write_meta(&mode_path, "mode-share/1", &report.config)?;
    written.push("mode_share.csv".to_owned());

    let under_path = out_dir.join("underserved.csv");
    {
        let file = fs::File::create(&under_path)
            .map_err(|e| CliError::internal(format!("cannot create {}: {e}", under_path.display())))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        w.write_record([
            "window",
            "rank",
            "origin_district",
            "dest_district",
            "origin_name",
            "dest_name",
            "public_n",
            "private_n",
            "total_n",
            "private_share",
            "underserved",
        ])
        .map_err(|e| CliError::internal(format!("writing {}: {e}", under_path.display())))?;
        for r in &report.windows {
            for (i, c) in r.top_connections.iter().enumerate() {
                w.serialize(UnderservedRow {
                    window: &r.window,
                    rank: i as u32 + 1,
                    origin_district: c.origin_district,
                    dest_district: c.dest_district,
                    origin_name: &c.origin_name,
                    dest_name: &c.dest_name,
                    public_n: c.public_n,
                    private_n: c.private_n,
                    total_n: c.total_n,
                    private_share: c.private_share,
                    underserved: c.underserved,
                })
                .map_err(|e| CliError::internal(format!("writing {}: {e}", under_path.display())))?;
            }
        }
        w.flush()
            .map_err(|e| CliError::internal(format!("writing {}: {e}", under_path.display())))?;
    }
    write_meta(&under_path, "underserved/1", &report.config)?;
    written.push("underserved.csv".to_owned());

    if flow_geojson {
        for r in &report.windows {
            let name = format!("flows_{}.geojson", r.window);
            let path = out_dir.join(&name);
            write_json(&path, &flows_feature_collection(r, map, &report.config))?;
            written.push(name);
        }
    }

    Ok(written)
}

/// Flow map: one LineString per ranked connection, centroid to centroid.
fn flows_feature_collection(report: &WindowReport, map: &DistrictMap, config: &Value) -> Value {
    let features: Vec<Value> = report
        .top_connections
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let o = map.centroid(DistrictId(c.origin_district));
            let d = map.centroid(DistrictId(c.dest_district));
            serde_json::json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[o.lon, o.lat], [d.lon, d.lat]],
                },
                "properties": {
                    "rank": i + 1,
                    "origin_district": c.origin_district,
                    "dest_district": c.dest_district,
                    "origin_name": c.origin_name,
                    "dest_name": c.dest_name,
                    "public_n": c.public_n,
                    "private_n": c.private_n,
                    "total_n": c.total_n,
                    "private_share": c.private_share,
                    "underserved": c.underserved,
                },
            })
        })
        .collect();
    serde_json::json!({
        "type": "FeatureCollection",
        "window": report.window,
        "format": "flows/1",
        "config": config,
        "features": features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use odflow_core::geo::{District, GeoPoint, Polygon};

    fn two_district_map() -> DistrictMap {
        let mk = |id: u16, lon0: f64| {
            District::new(
                DistrictId(id),
                format!("d{id}"),
                Polygon::rectangle(GeoPoint::raw(lon0, 1.0), GeoPoint::raw(lon0 + 0.1, 1.1))
                    .unwrap(),
            )
        };
        DistrictMap::new(vec![mk(0, 103.0), mk(1, 103.1)], GeoPoint::raw(103.1, 1.05)).unwrap()
    }

    /// Monday 2011-04-04 08:00 local (+08:00).
    const MONDAY_8AM: i64 = 1_301_875_200;
    const HOUR: i64 = 3600;

    fn hourly(window_start: i64, kind: MatrixKind, cells: &[(u16, u16, f64)]) -> ODMatrix {
        let mut m = ODMatrix::zero(2, (window_start, window_start + HOUR), "t", kind).unwrap();
        for &(o, d, v) in cells {
            m.set(DistrictId(o), DistrictId(d), v);
        }
        m
    }

    #[test]
    fn per_day_normalization_uses_the_union_day_set() {
        let tz = TzOffset::from_minutes(480).unwrap();
        // Public trips only on Monday; private on Monday and Tuesday.
        let public = vec![hourly(MONDAY_8AM, MatrixKind::Count, &[(0, 1, 10.0)])];
        let private = vec![
            hourly(MONDAY_8AM, MatrixKind::Estimate, &[(0, 1, 10.0)]),
            hourly(MONDAY_8AM + 86_400, MatrixKind::Estimate, &[(0, 1, 30.0)]),
        ];
        let spec = WindowSpec { name: "morning", hours: (6, 10) };
        let r = window_report(spec, &public, &private, true, tz, 5, &two_district_map()).unwrap();
        assert_eq!(r.days, 2);
        assert!((r.public_trips_per_day - 5.0).abs() < 1e-12);
        assert!((r.private_trips_per_day - 20.0).abs() < 1e-12);
        // Share computed over totals: 10 / (10 + 40).
        assert!((r.public_share.unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_window_reports_zeroes_not_errors() {
        let tz = TzOffset::from_minutes(480).unwrap();
        let spec = WindowSpec { name: "evening", hours: (17, 22) };
        let r = window_report(spec, &[], &[], true, tz, 5, &two_district_map()).unwrap();
        assert_eq!(r.days, 0);
        assert_eq!(r.public_trips_per_day, 0.0);
        assert!(r.public_share.is_none());
        assert!(r.top_connections.is_empty());
    }

    #[test]
    fn weekend_windows_are_excluded_when_workdays_only() {
        let tz = TzOffset::from_minutes(480).unwrap();
        // Saturday 2011-04-09 08:00 local.
        let saturday = MONDAY_8AM + 5 * 86_400;
        let public = vec![hourly(saturday, MatrixKind::Count, &[(0, 1, 7.0)])];
        let private = vec![hourly(saturday, MatrixKind::Estimate, &[(0, 1, 7.0)])];
        let spec = WindowSpec { name: "morning", hours: (6, 10) };
        let r = window_report(spec, &public, &private, true, tz, 5, &two_district_map()).unwrap();
        assert_eq!(r.days, 0);
        let r = window_report(spec, &public, &private, false, tz, 5, &two_district_map()).unwrap();
        assert_eq!(r.days, 1);
        assert!((r.public_trips_per_day - 7.0).abs() < 1e-12);
    }
}
