//! OD matrix series files: a CSV of non-zero cells plus a JSON metadata
//! sidecar at `<file>.meta.json`.
//!
//! The CSV carries `origin_district,dest_district,window_start,window_end,count`
//! with windows in Unix UTC seconds and counts in shortest round-trip float
//! form, so write-then-read reproduces every cell bit for bit. The sidecar
//! carries what the CSV cannot: matrix kind, dimension, normalization, and
//! the full configuration the series was produced under.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use odflow_core::geo::DistrictId;
use odflow_core::od::{MatrixKind, ODMatrix};

use crate::error::{CliError, CliResult};

/// Series-level metadata describing an OD CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdSidecar {
    pub format: String,
    pub label: String,
    pub kind: String,
    pub districts: usize,
    pub normalization: String,
    pub windows: usize,
    /// The configuration echo; every output of one run carries the same one.
    pub config: Value,
}

pub const OD_FORMAT: &str = "od-series/1";

impl OdSidecar {
    pub fn matrix_kind(&self) -> CliResult<MatrixKind> {
        match self.kind.as_str() {
            "count" => Ok(MatrixKind::Count),
            "estimate" => Ok(MatrixKind::Estimate),
            other => Err(CliError::input_invalid(format!(
                "sidecar kind must be \"count\" or \"estimate\", got {other:?}"
            ))),
        }
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct OdRow {
    origin_district: u16,
    dest_district: u16,
    window_start: i64,
    window_end: i64,
    count: f64,
}

/// Writes a window series and its sidecar. All matrices must agree on
/// dimension and kind; zero cells are omitted.
pub fn write_od_series(
    csv_path: &Path,
    ms: &[ODMatrix],
    d: usize,
    kind: MatrixKind,
    label: &str,
    normalization: &str,
    config: &Value,
) -> CliResult<()> {
    let file = File::create(csv_path)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", csv_path.display())))?;
    // Headers are written by hand so an empty series still yields a
    // self-describing file; auto headers are off to avoid a duplicate.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(["origin_district", "dest_district", "window_start", "window_end", "count"])
        .map_err(|e| CliError::internal(format!("writing {}: {e}", csv_path.display())))?;
    for m in ms {
        if m.d() != d {
            return Err(CliError::internal(format!(
                "matrix dimension {} does not match series dimension {d}",
                m.d()
            )));
        }
        if m.kind() != kind {
            return Err(CliError::internal("mixed matrix kinds in one series".to_owned()));
        }
        let (ws, we) = m.window();
        for (o, dd, v) in m.iter() {
            if v == 0.0 {
                continue;
            }
            w.serialize(OdRow {
                origin_district: o.0,
                dest_district: dd.0,
                window_start: ws,
                window_end: we,
                count: v,
            })
            .map_err(|e| CliError::internal(format!("writing {}: {e}", csv_path.display())))?;
        }
    }
    w.flush()
        .map_err(|e| CliError::internal(format!("writing {}: {e}", csv_path.display())))?;

    let sidecar = OdSidecar {
        format: OD_FORMAT.to_owned(),
        label: label.to_owned(),
        kind: kind.to_string(),
        districts: d,
        normalization: normalization.to_owned(),
        windows: ms.len(),
        config: config.clone(),
    };
    let meta = sidecar_path(csv_path);
    let mut text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CliError::internal(format!("serializing sidecar: {e}")))?;
    text.push('\n');
    fs::write(&meta, text)
        .map_err(|e| CliError::internal(format!("writing {}: {e}", meta.display())))?;
    Ok(())
}

/// Reads a series back. The sidecar is required: without it the kind and
/// dimension are unknowable. Cells accumulate, so the reader also accepts
/// unsorted rows; window order in the result is ascending.
pub fn read_od_series(csv_path: &Path) -> CliResult<(Vec<ODMatrix>, OdSidecar)> {
    let meta_path = sidecar_path(csv_path);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| CliError::from_io(&meta_path, &e))?;
    let sidecar: OdSidecar = serde_json::from_str(&meta_text)
        .map_err(|e| CliError::input_invalid(format!("{}: {e}", meta_path.display())))?;
    if sidecar.format != OD_FORMAT {
        return Err(CliError::input_invalid(format!(
            "{}: unsupported format {:?}",
            meta_path.display(),
            sidecar.format
        )));
    }
    let kind = sidecar.matrix_kind()?;
    let d = sidecar.districts;
    if d == 0 {
        return Err(CliError::input_invalid(format!(
            "{}: districts must be positive",
            meta_path.display()
        )));
    }

    let file = File::open(csv_path).map_err(|e| CliError::from_io(csv_path, &e))?;
    let mut rdr = csv::Reader::from_reader(file);
    use std::collections::btree_map::Entry;
    let mut by_window: std::collections::BTreeMap<(i64, i64), ODMatrix> =
        std::collections::BTreeMap::new();
    for (i, row) in rdr.deserialize::<OdRow>().enumerate() {
        let line = i + 2;
        let bad = |what: String| {
            CliError::input_invalid(format!("{} line {line}: {what}", csv_path.display()))
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.origin_district as usize >= d || row.dest_district as usize >= d {
            return Err(bad(format!(
                "district pair ({}, {}) out of range 0..{d}",
                row.origin_district, row.dest_district
            )));
        }
        if row.window_start >= row.window_end {
            return Err(bad("empty window".into()));
        }
        if !row.count.is_finite() {
            return Err(bad("count must be finite".into()));
        }
        let key = (row.window_start, row.window_end);
        let m = match by_window.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(
                ODMatrix::zero(d, key, sidecar.label.clone(), kind)
                    .map_err(|e| bad(e.to_string()))?,
            ),
        };
        m.add(DistrictId(row.origin_district), DistrictId(row.dest_district), row.count);
    }
    Ok((by_window.into_values().collect(), sidecar))
}
