//! Frequently-visited place detection per user, and the district-level place
//! tallies that feed sampling-bias correction.

use crate::cdr::{EventRecord, UserId};
use crate::geo::{self, DistrictId, DistrictMap, GeoPoint, LocalXY};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Tuning for place detection. Defaults follow the reference deployment:
/// 1 km cluster radius, 15% minimum share, 50 iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaceParams {
    pub radius_m: f64,
    pub min_share: f64,
    pub max_iter: u32,
}

impl Default for PlaceParams {
    fn default() -> Self {
        PlaceParams { radius_m: 1000.0, min_share: 0.15, max_iter: 50 }
    }
}

impl PlaceParams {
    pub fn validated(self) -> Result<Self, PlaceError> {
        let ok = self.radius_m.is_finite()
            && self.radius_m > 0.0
            && self.min_share.is_finite()
            && (0.0..=1.0).contains(&self.min_share)
            && self.max_iter > 0;
        if ok {
            Ok(self)
        } else {
            Err(PlaceError::BadParams)
        }
    }
}

/// A cluster that holds at least the minimum share of a user's events.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignificantPlace {
    pub user: UserId,
    pub centroid: GeoPoint,
    /// Fraction of the user's total events assigned to this place.
    pub share: f64,
    pub n_events: u32,
    pub district: Option<DistrictId>,
}

/// Radius-constrained k-means over one user's events.
///
/// Seeding walks the stream once: an event joins the nearest existing
/// centroid if strictly within the radius, otherwise it spawns a centroid at
/// itself. Lloyd iterations then alternate radius-gated reassignment (events
/// outside every centroid's radius stay unassigned and dilute all shares)
/// with mean updates, stopping when assignments fix or `max_iter` is hit.
/// Clusters below `min_share` of the user's event count are dropped; the
/// survivors come back sorted by descending share.
pub fn significant_places(
    user: UserId,
    events: &[EventRecord],
    params: &PlaceParams,
    map: &DistrictMap,
) -> Result<Vec<SignificantPlace>, PlaceError> {
    let params = params.validated()?;
    if events.is_empty() {
        return Ok(Vec::new());
    }

    let origin = events[0].pos;
    let pts: Vec<LocalXY> = events.iter().map(|e| geo::project(e.pos, origin)).collect();
    let r2 = params.radius_m * params.radius_m;

    let mut centroids: Vec<LocalXY> = Vec::new();
    let mut assign: Vec<u32> = Vec::with_capacity(pts.len());
    for &p in &pts {
        match nearest_within(&centroids, p, r2) {
            Some(c) => assign.push(c),
            None => {
                centroids.push(p);
                assign.push((centroids.len() - 1) as u32);
            }
        }
    }

    let mut scratch: Vec<u32> = vec![UNASSIGNED; pts.len()];
    for _ in 0..params.max_iter {
        let mut changed = false;
        for (i, &p) in pts.iter().enumerate() {
            let a = nearest_within(&centroids, p, r2).unwrap_or(UNASSIGNED);
            if a != assign[i] {
                changed = true;
            }
            scratch[i] = a;
        }
        core::mem::swap(&mut assign, &mut scratch);
        recompute_means(&pts, &assign, &mut centroids);
        if !changed {
            break;
        }
    }

    // Final membership against the settled centroids. At a fixed point this
    // reproduces the loop's last assignment and every centroid is its
    // members' mean; at a max_iter cutoff it still keeps every member within
    // the radius of the centroid it is counted under.
    let mut counts = vec![0u32; centroids.len()];
    for &p in &pts {
        if let Some(a) = nearest_within(&centroids, p, r2) {
            counts[a as usize] += 1;
        }
    }

    let total = pts.len() as f64;
    let mut places: Vec<SignificantPlace> = Vec::new();
    for (&count, &xy) in counts.iter().zip(centroids.iter()) {
        if count == 0 {
            continue;
        }
        let share = count as f64 / total;
        if share < params.min_share {
            continue;
        }
        let centroid = geo::unproject(xy, origin);
        places.push(SignificantPlace {
            user,
            centroid,
            share,
            n_events: count,
            district: map.district_of(centroid),
        });
    }
    // Descending share; seeding order breaks ties so output is deterministic.
    places.sort_by(|a, b| b.share.total_cmp(&a.share));
    Ok(places)
}

const UNASSIGNED: u32 = u32::MAX;

fn nearest_within(centroids: &[LocalXY], p: LocalXY, r2: f64) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for (i, c) in centroids.iter().enumerate() {
        let dx = p.x - c.x;
        let dy = p.y - c.y;
        let d2 = dx * dx + dy * dy;
        if d2 < r2 && best.is_none_or(|(bd, _)| d2 < bd) {
            best = Some((d2, i as u32));
        }
    }
    best.map(|(_, i)| i)
}

/// Means over current members; clusters that lost every member keep their
/// previous centroid so a later pass can still refill them.
fn recompute_means(pts: &[LocalXY], assign: &[u32], centroids: &mut [LocalXY]) {
    let k = centroids.len();
    let mut sums = vec![LocalXY::new(0.0, 0.0); k];
    let mut counts = vec![0u32; k];
    for (i, &a) in assign.iter().enumerate() {
        if a == UNASSIGNED {
            continue;
        }
        let a = a as usize;
        sums[a].x += pts[i].x;
        sums[a].y += pts[i].y;
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = LocalXY::new(sums[c].x / counts[c] as f64, sums[c].y / counts[c] as f64);
        }
    }
}

/// Per-district counts of detected places: `m` from frequent users only,
/// `n` from everyone. Places outside the map contribute to neither.
#[derive(Clone, Debug, PartialEq)]
pub struct DistrictShares {
    m: Vec<u64>,
    n: Vec<u64>,
}

impl DistrictShares {
    pub fn compute<I, J>(frequent_places: I, all_places: J, d: usize) -> Self
    where
        I: IntoIterator<Item = Option<DistrictId>>,
        J: IntoIterator<Item = Option<DistrictId>>,
    {
        let mut m = vec![0u64; d];
        let mut n = vec![0u64; d];
        for p in frequent_places.into_iter().flatten() {
            m[p.index()] += 1;
        }
        for p in all_places.into_iter().flatten() {
            n[p.index()] += 1;
        }
        DistrictShares { m, n }
    }

    pub fn d(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self, i: DistrictId) -> u64 {
        self.m[i.index()]
    }

    pub fn n(&self, i: DistrictId) -> u64 {
        self.n[i.index()]
    }

    /// Global frequent share of places: `sum(m) / sum(n)`; zero when no
    /// places exist at all.
    pub fn phi(&self) -> f64 {
        let m: u64 = self.m.iter().sum();
        let n: u64 = self.n.iter().sum();
        if n == 0 {
            0.0
        } else {
            m as f64 / n as f64
        }
    }

    /// Per-district frequent share, `None` where no places landed.
    pub fn phi_i(&self, i: DistrictId) -> Option<f64> {
        let n = self.n[i.index()];
        if n == 0 {
            None
        } else {
            Some(self.m[i.index()] as f64 / n as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaceError {
    BadParams,
}

impl fmt::Display for PlaceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlaceError::BadParams => write!(f, "place detection parameters out of range"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PlaceError {}
