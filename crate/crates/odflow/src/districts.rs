//! District map IO: a GeoJSON FeatureCollection of Polygon features, each
//! carrying an integer `district_id` and a string `name` property.
//!
//! Ids must form the exact range `0..D`, because matrices index cells by id.
//! Duplicates and gaps are structural errors, not warnings.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use odflow_core::geo::{District, DistrictId, DistrictMap, GeoPoint, Polygon};

use crate::error::{CliError, CliResult};

pub fn read_districts(path: &Path) -> CliResult<DistrictMap> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from_io(path, &e))?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| bad(path, format!("not valid JSON: {e}")))?;
    parse_feature_collection(path, &root)
}

fn bad(path: &Path, what: String) -> CliError {
    CliError::input_invalid(format!("{}: {what}", path.display()))
}

fn parse_feature_collection(path: &Path, root: &Value) -> CliResult<DistrictMap> {
    if root["type"] != "FeatureCollection" {
        return Err(bad(path, "expected a GeoJSON FeatureCollection".into()));
    }
    let features = root["features"]
        .as_array()
        .ok_or_else(|| bad(path, "\"features\" must be an array".into()))?;
    if features.is_empty() {
        return Err(bad(path, "no district features".into()));
    }

    let mut districts = Vec::with_capacity(features.len());
    let mut bbox = BBox::default();
    for (i, feature) in features.iter().enumerate() {
        let ctx = |what: String| bad(path, format!("feature {i}: {what}"));
        if feature["type"] != "Feature" {
            return Err(ctx("expected \"type\": \"Feature\"".into()));
        }
        let id = feature["properties"]["district_id"]
            .as_u64()
            .filter(|&v| v <= u16::MAX as u64)
            .ok_or_else(|| {
                ctx("properties.district_id must be an integer in 0..=65535".into())
            })?;
        let name = feature["properties"]["name"]
            .as_str()
            .ok_or_else(|| ctx("properties.name must be a string".into()))?;
        let polygon = parse_polygon(&feature["geometry"], &mut bbox).map_err(ctx)?;
        districts.push(District::new(DistrictId(id as u16), name.to_owned(), polygon));
    }

    // Projection origin at the map bbox center keeps planar distortion
    // balanced across the whole map.
    let origin = GeoPoint::new(
        (bbox.min_lon + bbox.max_lon) / 2.0,
        (bbox.min_lat + bbox.max_lat) / 2.0,
    )
    .map_err(|e| bad(path, e.to_string()))?;

    DistrictMap::new(districts, origin).map_err(|e| bad(path, e.to_string()))
}

#[derive(Debug)]
struct BBox {
    min_lon: f64,
    max_lon: f64,
    min_lat: f64,
    max_lat: f64,
}

impl Default for BBox {
    fn default() -> Self {
        BBox {
            min_lon: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            min_lat: f64::INFINITY,
            max_lat: f64::NEG_INFINITY,
        }
    }
}

impl BBox {
    fn add(&mut self, p: GeoPoint) {
        self.min_lon = self.min_lon.min(p.lon);
        self.max_lon = self.max_lon.max(p.lon);
        self.min_lat = self.min_lat.min(p.lat);
        self.max_lat = self.max_lat.max(p.lat);
    }
}

fn parse_polygon(geometry: &Value, bbox: &mut BBox) -> Result<Polygon, String> {
    if geometry["type"] != "Polygon" {
        return Err("geometry must be a Polygon".into());
    }
    let rings = geometry["coordinates"]
        .as_array()
        .ok_or("coordinates must be an array of rings")?;
    if rings.is_empty() {
        return Err("polygon has no rings".into());
    }
    let mut parsed: Vec<Vec<GeoPoint>> = Vec::with_capacity(rings.len());
    for ring in rings {
        let positions = ring.as_array().ok_or("ring must be an array of positions")?;
        let mut pts = Vec::with_capacity(positions.len());
        for pos in positions {
            let coords = pos.as_array().ok_or("position must be [lon, lat]")?;
            if coords.len() < 2 {
                return Err("position must have at least lon and lat".into());
            }
            let lon = coords[0].as_f64().ok_or("lon must be a number")?;
            let lat = coords[1].as_f64().ok_or("lat must be a number")?;
            let p = GeoPoint::new(lon, lat).map_err(|e| e.to_string())?;
            bbox.add(p);
            pts.push(p);
        }
        parsed.push(pts);
    }
    let outer = parsed.remove(0);
    Polygon::new(outer, parsed).map_err(|e| e.to_string())
}

/// Writes a district map in the exact form `read_districts` accepts. Output
/// is deterministic: object keys are sorted and features follow id order.
pub fn write_districts(path: &Path, map: &DistrictMap) -> CliResult<()> {
    let features: Vec<Value> = map
        .districts()
        .iter()
        .map(|d| {
            let ring_coords = |ring: &[GeoPoint]| -> Value {
                Value::Array(ring.iter().map(|p| json!([p.lon, p.lat])).collect())
            };
            let mut rings = vec![ring_coords(d.polygon.outer())];
            rings.extend(d.polygon.holes().iter().map(|h| ring_coords(h)));
            json!({
                "type": "Feature",
                "properties": { "district_id": d.id.0, "name": d.name },
                "geometry": { "type": "Polygon", "coordinates": rings },
            })
        })
        .collect();
    let doc = json!({ "type": "FeatureCollection", "features": features });
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::internal(format!("serializing districts: {e}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::internal(format!("writing {}: {e}", path.display())))?;
    Ok(())
}
