//! Geographic primitives: lon/lat points, a local equirectangular projection,
//! and point-in-district lookup over polygon maps.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Mean Earth radius in metres; every projection in the crate uses it.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// District identifier. Maps keep ids contiguous starting at zero, so the id
/// doubles as a matrix row/column index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DistrictId(pub u16);

impl DistrictId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DistrictId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A longitude/latitude pair in degrees, lon first.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        let p = GeoPoint { lon, lat };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(GeoError::InvalidCoordinate { lon, lat })
        }
    }

    /// Skips range validation; for literals known to be in range.
    pub const fn raw(lon: f64, lat: f64) -> Self {
        GeoPoint { lon, lat }
    }

    pub fn is_valid(self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && self.lon.abs() <= 180.0
            && self.lat.abs() <= 90.0
    }
}

/// Planar coordinates in metres relative to some projection origin.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LocalXY {
    pub x: f64,
    pub y: f64,
}

impl LocalXY {
    pub const fn new(x: f64, y: f64) -> Self {
        LocalXY { x, y }
    }

    pub fn distance(self, other: LocalXY) -> f64 {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        libm::sqrt(dx * dx + dy * dy)
    }
}

/// Equirectangular projection about `origin`: x grows east, y grows north.
/// Adequate for city extents; error stays sub-metre over tens of kilometres.
pub fn project(p: GeoPoint, origin: GeoPoint) -> LocalXY {
    let k = libm::cos(origin.lat.to_radians());
    LocalXY {
        x: EARTH_RADIUS_M * (p.lon - origin.lon).to_radians() * k,
        y: EARTH_RADIUS_M * (p.lat - origin.lat).to_radians(),
    }
}

/// Inverse of [`project`] about the same origin.
pub fn unproject(xy: LocalXY, origin: GeoPoint) -> GeoPoint {
    let k = libm::cos(origin.lat.to_radians());
    GeoPoint {
        lon: origin.lon + (xy.x / (EARTH_RADIUS_M * k)).to_degrees(),
        lat: origin.lat + (xy.y / EARTH_RADIUS_M).to_degrees(),
    }
}

/// Great-circle-free ground distance: projects about the midpoint latitude and
/// takes the Euclidean norm. Symmetric by construction and exact to zero when
/// `a == b`.
pub fn distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let mid_lat = 0.5 * (a.lat + b.lat);
    let k = libm::cos(mid_lat.to_radians());
    let x = EARTH_RADIUS_M * (b.lon - a.lon).to_radians() * k;
    let y = EARTH_RADIUS_M * (b.lat - a.lat).to_radians();
    libm::sqrt(x * x + y * y)
}

pub(crate) trait XY: Copy {
    fn xy(self) -> (f64, f64);
}

impl XY for GeoPoint {
    fn xy(self) -> (f64, f64) {
        (self.lon, self.lat)
    }
}

impl XY for LocalXY {
    fn xy(self) -> (f64, f64) {
        (self.x, self.y)
    }
}

fn on_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    if cross != 0.0 {
        return false;
    }
    px >= ax.min(bx) && px <= ax.max(bx) && py >= ay.min(by) && py <= ay.max(by)
}

pub(crate) fn on_ring_boundary<P: XY>(ring: &[P], p: P) -> bool {
    let (px, py) = p.xy();
    ring.windows(2).any(|w| {
        let (ax, ay) = w[0].xy();
        let (bx, by) = w[1].xy();
        on_segment(px, py, ax, ay, bx, by)
    })
}

/// Number of times an upward ray from `p` crosses the ring (even-odd rule).
pub(crate) fn ring_crossings<P: XY>(ring: &[P], p: P) -> usize {
    let (px, py) = p.xy();
    let mut crossings = 0;
    for w in ring.windows(2) {
        let (ax, ay) = w[0].xy();
        let (bx, by) = w[1].xy();
        if (ay > py) != (by > py) {
            let x_hit = ax + (py - ay) * (bx - ax) / (by - ay);
            if px < x_hit {
                crossings += 1;
            }
        }
    }
    crossings
}

/// Even-odd containment over a set of rings, inclusive of ring boundaries.
pub(crate) fn rings_contain<P: XY>(rings: &[&[P]], p: P) -> bool {
    let mut crossings = 0;
    for ring in rings {
        if on_ring_boundary(ring, p) {
            return true;
        }
        crossings += ring_crossings(ring, p);
    }
    crossings % 2 == 1
}

/// Signed shoelace area and centroid of a closed ring. Degenerate rings report
/// zero area and the vertex mean.
pub(crate) fn ring_area_centroid<P: XY>(ring: &[P]) -> (f64, f64, f64) {
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for w in ring.windows(2) {
        let (ax, ay) = w[0].xy();
        let (bx, by) = w[1].xy();
        let cross = ax * by - bx * ay;
        area2 += cross;
        cx += (ax + bx) * cross;
        cy += (ay + by) * cross;
    }
    if area2 == 0.0 {
        let n = (ring.len() - 1).max(1) as f64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for p in &ring[..ring.len() - 1] {
            let (x, y) = p.xy();
            sx += x;
            sy += y;
        }
        return (0.0, sx / n, sy / n);
    }
    (area2 / 2.0, cx / (3.0 * area2), cy / (3.0 * area2))
}

/// A polygon with an outer ring and zero or more holes. Rings are closed
/// (first vertex repeated last).
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    outer: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
}

impl Polygon {
    pub fn new(outer: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self, GeoError> {
        check_ring(&outer)?;
        for h in &holes {
            check_ring(h)?;
        }
        Ok(Polygon { outer, holes })
    }

    /// Axis-aligned rectangle between two corners, a common case in tests and
    /// synthetic worlds.
    pub fn rectangle(min: GeoPoint, max: GeoPoint) -> Result<Self, GeoError> {
        Polygon::new(
            alloc::vec![
                min,
                GeoPoint { lon: max.lon, lat: min.lat },
                max,
                GeoPoint { lon: min.lon, lat: max.lat },
                min,
            ],
            Vec::new(),
        )
    }

    pub fn outer(&self) -> &[GeoPoint] {
        &self.outer
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    /// Boundary-inclusive containment; points on hole edges count as inside.
    pub fn contains(&self, p: GeoPoint) -> bool {
        if on_ring_boundary(&self.outer, p) {
            return true;
        }
        let mut crossings = ring_crossings(&self.outer, p);
        for h in &self.holes {
            if on_ring_boundary(h, p) {
                return true;
            }
            crossings += ring_crossings(h, p);
        }
        crossings % 2 == 1
    }

    /// (min_lon, min_lat, max_lon, max_lat) of the outer ring.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.outer {
            b.0 = b.0.min(p.lon);
            b.1 = b.1.min(p.lat);
            b.2 = b.2.max(p.lon);
            b.3 = b.3.max(p.lat);
        }
        b
    }
}

fn check_ring(ring: &[GeoPoint]) -> Result<(), GeoError> {
    if ring.len() < 4 {
        return Err(GeoError::RingTooShort { len: ring.len() });
    }
    if ring[0] != ring[ring.len() - 1] {
        return Err(GeoError::OpenRing);
    }
    for p in ring {
        if !p.is_valid() {
            return Err(GeoError::InvalidCoordinate { lon: p.lon, lat: p.lat });
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct District {
    pub id: DistrictId,
    pub name: String,
    pub polygon: Polygon,
    bbox: (f64, f64, f64, f64),
}

impl District {
    pub fn new(id: DistrictId, name: String, polygon: Polygon) -> Self {
        let bbox = polygon.bbox();
        District { id, name, polygon, bbox }
    }
}

/// The full set of districts for a study area, with ids `0..d` and a shared
/// projection origin for planar work.
#[derive(Clone, Debug)]
pub struct DistrictMap {
    districts: Vec<District>,
    projection_origin: GeoPoint,
}

impl DistrictMap {
    /// Districts may arrive in any order but ids must form `0..d` with no
    /// duplicates or gaps.
    pub fn new(mut districts: Vec<District>, projection_origin: GeoPoint) -> Result<Self, GeoError> {
        if districts.is_empty() {
            return Err(GeoError::EmptyMap);
        }
        if !projection_origin.is_valid() {
            return Err(GeoError::InvalidCoordinate {
                lon: projection_origin.lon,
                lat: projection_origin.lat,
            });
        }
        districts.sort_by_key(|d| d.id);
        for (i, d) in districts.iter().enumerate() {
            if d.id.index() != i {
                if i > 0 && districts[i - 1].id == d.id {
                    return Err(GeoError::DuplicateDistrictId { id: d.id.0 });
                }
                return Err(GeoError::NonContiguousDistrictIds { expected: i as u16, found: d.id.0 });
            }
        }
        Ok(DistrictMap { districts, projection_origin })
    }

    pub fn d(&self) -> usize {
        self.districts.len()
    }

    pub fn districts(&self) -> &[District] {
        &self.districts
    }

    pub fn district(&self, id: DistrictId) -> &District {
        &self.districts[id.index()]
    }

    pub fn projection_origin(&self) -> GeoPoint {
        self.projection_origin
    }

    /// District containing `p`, or `None` outside the map. A point on a shared
    /// boundary belongs to the lowest district id that contains it.
    pub fn district_of(&self, p: GeoPoint) -> Option<DistrictId> {
        for d in &self.districts {
            let (lo_x, lo_y, hi_x, hi_y) = d.bbox;
            if p.lon < lo_x || p.lon > hi_x || p.lat < lo_y || p.lat > hi_y {
                continue;
            }
            if d.polygon.contains(p) {
                return Some(d.id);
            }
        }
        None
    }

    /// All rings of a district projected about the map origin, outer first.
    pub fn projected_rings(&self, id: DistrictId) -> Vec<Vec<LocalXY>> {
        let d = self.district(id);
        let mut rings = Vec::with_capacity(1 + d.polygon.holes().len());
        rings.push(project_ring(d.polygon.outer(), self.projection_origin));
        for h in d.polygon.holes() {
            rings.push(project_ring(h, self.projection_origin));
        }
        rings
    }

    /// Polygon area in square metres (holes subtracted).
    pub fn area_m2(&self, id: DistrictId) -> f64 {
        let rings = self.projected_rings(id);
        let mut area = ring_area_centroid(&rings[0]).0.abs();
        for h in &rings[1..] {
            area -= ring_area_centroid(h).0.abs();
        }
        area.max(0.0)
    }

    /// Area-weighted centroid; falls back to the vertex mean for degenerate
    /// polygons.
    pub fn centroid(&self, id: DistrictId) -> GeoPoint {
        let rings = self.projected_rings(id);
        let (a0, cx0, cy0) = ring_area_centroid(&rings[0]);
        let mut w = a0.abs();
        let mut cx = cx0 * w;
        let mut cy = cy0 * w;
        for h in &rings[1..] {
            let (a, hx, hy) = ring_area_centroid(h);
            let aw = a.abs();
            w -= aw;
            cx -= hx * aw;
            cy -= hy * aw;
        }
        let xy = if w > 0.0 {
            LocalXY { x: cx / w, y: cy / w }
        } else {
            LocalXY { x: cx0, y: cy0 }
        };
        unproject(xy, self.projection_origin)
    }
}

fn project_ring(ring: &[GeoPoint], origin: GeoPoint) -> Vec<LocalXY> {
    ring.iter().map(|&p| project(p, origin)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeoError {
    InvalidCoordinate { lon: f64, lat: f64 },
    RingTooShort { len: usize },
    OpenRing,
    EmptyMap,
    DuplicateDistrictId { id: u16 },
    NonContiguousDistrictIds { expected: u16, found: u16 },
}

impl fmt::Display for GeoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeoError::InvalidCoordinate { lon, lat } => {
                write!(f, "coordinate out of range: lon={lon}, lat={lat}")
            }
            GeoError::RingTooShort { len } => {
                write!(f, "polygon ring has {len} points, need at least 4 including closure")
            }
            GeoError::OpenRing => write!(f, "polygon ring is not closed"),
            GeoError::EmptyMap => write!(f, "district map has no districts"),
            GeoError::DuplicateDistrictId { id } => write!(f, "duplicate district id {id}"),
            GeoError::NonContiguousDistrictIds { expected, found } => {
                write!(f, "district ids must be contiguous from 0: expected {expected}, found {found}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GeoError {}
