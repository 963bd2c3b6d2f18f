//! Derived results: private-mode OD by subtraction, mode shares, underserved
//! connection ranking, and Monte Carlo intra-district trip lengths.

use crate::geo::{self, DistrictId, DistrictMap, LocalXY};
use crate::od::{MatrixKind, ODMatrix, OdError};
use alloc::vec::Vec;
use core::fmt;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mean distance between two uniform points in a unit square. Used by the
/// area law that turns district areas into expected intra-district trip
/// lengths.
pub const UNIT_SQUARE_MEAN_DISTANCE: f64 = 0.52141;

/// Overall minus public, clamped at zero. The clamped mass is reported, not
/// silently dropped: it measures how far the estimate dipped below the exact
/// public counts.
#[derive(Clone, Debug)]
pub struct PrivateOd {
    pub matrix: ODMatrix,
    pub clamped_cells: u64,
    pub clamped_mass: f64,
}

pub fn private_od(overall: &ODMatrix, public: &ODMatrix) -> Result<PrivateOd, AnalysisError> {
    if overall.d() != public.d() {
        return Err(AnalysisError::Od(OdError::DimensionMismatch {
            left: overall.d(),
            right: public.d(),
        }));
    }
    if overall.window() != public.window() {
        return Err(AnalysisError::WindowMismatch {
            left: overall.window(),
            right: public.window(),
        });
    }
    let mut out = ODMatrix::zero(
        overall.d(),
        overall.window(),
        alloc::format!("{}-private", overall.label()),
        MatrixKind::Estimate,
    )
    .map_err(AnalysisError::Od)?;
    let mut clamped_cells = 0u64;
    let mut clamped_mass = 0.0;
    for (o, dd, v) in overall.iter() {
        let diff = v - public.get(o, dd);
        if diff < 0.0 {
            clamped_cells += 1;
            clamped_mass += -diff;
            out.set(o, dd, 0.0);
        } else {
            out.set(o, dd, diff);
        }
    }
    Ok(PrivateOd { matrix: out, clamped_cells, clamped_mass })
}

/// Inter-district totals by mode. The diagonal is excluded: within-district
/// movement is below the spatial resolution of the method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeShare {
    pub public_trips: f64,
    pub private_trips: f64,
    /// `None` when both totals are zero.
    pub public_share: Option<f64>,
}

pub fn mode_share(public: &ODMatrix, private: &ODMatrix) -> Result<ModeShare, AnalysisError> {
    if public.d() != private.d() {
        return Err(AnalysisError::Od(OdError::DimensionMismatch {
            left: public.d(),
            right: private.d(),
        }));
    }
    let public_trips = public.inter_district_total();
    let private_trips = private.inter_district_total();
    let total = public_trips + private_trips;
    let public_share = if total > 0.0 { Some(public_trips / total) } else { None };
    Ok(ModeShare { public_trips, private_trips, public_share })
}

/// One directed inter-district connection with its mode split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectionRecord {
    pub origin: DistrictId,
    pub dest: DistrictId,
    pub public_n: f64,
    pub private_n: f64,
    pub total_n: f64,
    /// Private fraction of the connection's total; zero-total pairs report 0.
    pub private_share: f64,
    /// Strictly more private than public trips.
    pub underserved: bool,
}

/// All `d * (d - 1)` directed off-diagonal pairs ranked by total flow
/// descending, ties broken by (origin, dest) ascending, truncated to `top_k`.
pub fn underserved_ranking(
    public: &ODMatrix,
    private: &ODMatrix,
    top_k: usize,
) -> Result<Vec<ConnectionRecord>, AnalysisError> {
    if public.d() != private.d() {
        return Err(AnalysisError::Od(OdError::DimensionMismatch {
            left: public.d(),
            right: private.d(),
        }));
    }
    let d = public.d();
    let mut records = Vec::with_capacity(d * (d - 1));
    for o in 0..d {
        for dd in 0..d {
            if o == dd {
                continue;
            }
            let (o, dd) = (DistrictId(o as u16), DistrictId(dd as u16));
            let public_n = public.get(o, dd);
            let private_n = private.get(o, dd);
            let total_n = public_n + private_n;
            records.push(ConnectionRecord {
                origin: o,
                dest: dd,
                public_n,
                private_n,
                total_n,
                private_share: if total_n > 0.0 { private_n / total_n } else { 0.0 },
                underserved: private_n > public_n,
            });
        }
    }
    records.sort_by(|a, b| {
        b.total_n
            .total_cmp(&a.total_n)
            .then_with(|| a.origin.cmp(&b.origin))
            .then_with(|| a.dest.cmp(&b.dest))
    });
    records.truncate(top_k);
    Ok(records)
}

/// Monte Carlo mean distance between two uniform points in a polygon given as
/// projected rings (outer first). Sampling is rejection from the outer bbox;
/// `None` when the polygon is too thin to hit in a reasonable number of
/// throws.
pub fn mean_pair_distance_in_rings(
    rings: &[Vec<LocalXY>],
    n_samples: u32,
    rng: &mut impl Rng,
) -> Option<f64> {
    if rings.is_empty() || n_samples == 0 {
        return None;
    }
    let outer = &rings[0];
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) =
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in outer {
        lo_x = lo_x.min(p.x);
        lo_y = lo_y.min(p.y);
        hi_x = hi_x.max(p.x);
        hi_y = hi_y.max(p.y);
    }
    if !(hi_x > lo_x && hi_y > lo_y) {
        return None;
    }

    let ring_refs: Vec<&[LocalXY]> = rings.iter().map(|r| r.as_slice()).collect();
    let bbox = (lo_x, lo_y, hi_x, hi_y);
    let mut sum = 0.0;
    for _ in 0..n_samples {
        let a = sample_in_rings(&ring_refs, bbox, rng)?;
        let b = sample_in_rings(&ring_refs, bbox, rng)?;
        sum += a.distance(b);
    }
    Some(sum / n_samples as f64)
}

/// Rejection sampling from the bbox. 10k misses in a row means the polygon
/// area is a vanishing fraction of its bbox; report that as degenerate
/// rather than spin.
fn sample_in_rings(
    rings: &[&[LocalXY]],
    bbox: (f64, f64, f64, f64),
    rng: &mut impl Rng,
) -> Option<LocalXY> {
    const MAX_MISSES: u32 = 10_000;
    let (lo_x, lo_y, hi_x, hi_y) = bbox;
    let mut misses = 0;
    loop {
        let p = LocalXY::new(
            lo_x + (hi_x - lo_x) * rng.gen::<f64>(),
            lo_y + (hi_y - lo_y) * rng.gen::<f64>(),
        );
        if geo::rings_contain(rings, p) {
            return Some(p);
        }
        misses += 1;
        if misses >= MAX_MISSES {
            return None;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistrictDistance {
    pub district: DistrictId,
    pub mean_m: f64,
    pub area_m2: f64,
    pub n_samples: u32,
}

/// The square-equivalent shortcut: mean district area, its square side, and
/// the implied mean intra-district distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaLawEstimate {
    pub mean_district_area_m2: f64,
    pub square_side_m: f64,
    pub mean_distance_m: f64,
}

#[derive(Clone, Debug)]
pub struct IntraDistrictReport {
    pub per_district: Vec<DistrictDistance>,
    pub skipped: Vec<DistrictId>,
    pub area_law: AreaLawEstimate,
}

/// Per-district Monte Carlo intra-district trip lengths plus the area-law
/// summary. Each district gets its own seeded stream, so results do not
/// depend on evaluation order. Degenerate districts are skipped and listed.
pub fn intra_district_mean_distance(
    map: &DistrictMap,
    n_samples: u32,
    seed: u64,
) -> IntraDistrictReport {
    let mut per_district = Vec::new();
    let mut skipped = Vec::new();
    let mut total_area = 0.0;
    for district in map.districts() {
        let id = district.id;
        let area = map.area_m2(id);
        total_area += area;
        let rings = map.projected_rings(id);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, id.0 as u64));
        match mean_pair_distance_in_rings(&rings, n_samples, &mut rng) {
            Some(mean_m) if area > 0.0 => {
                per_district.push(DistrictDistance { district: id, mean_m, area_m2: area, n_samples });
            }
            _ => skipped.push(id),
        }
    }
    let mean_area = total_area / map.d() as f64;
    let side = libm::sqrt(mean_area);
    IntraDistrictReport {
        per_district,
        skipped,
        area_law: AreaLawEstimate {
            mean_district_area_m2: mean_area,
            square_side_m: side,
            mean_distance_m: UNIT_SQUARE_MEAN_DISTANCE * side,
        },
    }
}

/// SplitMix64-style mixer for deriving independent per-stream seeds
/// from a master seed. Distinct streams stay decorrelated even when
/// stream ids are consecutive integers.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalysisError {
    WindowMismatch { left: (i64, i64), right: (i64, i64) },
    Od(OdError),
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::WindowMismatch { left, right } => {
                write!(f, "window mismatch: [{}, {}) vs [{}, {})", left.0, left.1, right.0, right.1)
            }
            AnalysisError::Od(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AnalysisError {}
