//! Turning per-user cellphone event streams into trips: inter-event activity
//! stats, spatial runs, dwell clusters, and cluster-to-cluster trips.

use crate::geo::{self, DistrictId, DistrictMap, GeoPoint, LocalXY};
use alloc::vec::Vec;

/// Index into the run's user table; ids stay stable for one dataset load.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

/// One located event (call, text, or data session) for one user.
/// `t` is Unix UTC seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord {
    pub user: UserId,
    pub t: i64,
    pub pos: GeoPoint,
}

/// Activity profile of a single user's sorted event stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserStats {
    pub n_events: u64,
    /// Mean gap between consecutive events, in minutes. `None` below two
    /// events, where the mean is undefined.
    pub inter_event_mean_min: Option<f64>,
    /// 25th/50th/75th percentile gaps in minutes, linearly interpolated.
    pub gap_quartiles_min: Option<[f64; 3]>,
}

/// Mean and quartiles of consecutive gaps. The mean telescopes to
/// `(t_n - t_1) / (n - 1)`, which is what gets computed; the quartiles need
/// the individual gaps.
///
/// Precondition: `events` sorted by `t` ascending.
pub fn user_stats(events: &[EventRecord]) -> UserStats {
    let n = events.len();
    if n < 2 {
        return UserStats { n_events: n as u64, inter_event_mean_min: None, gap_quartiles_min: None };
    }
    let span_s = (events[n - 1].t - events[0].t) as f64;
    let mean_min = span_s / 60.0 / (n - 1) as f64;

    let mut gaps: Vec<f64> = events
        .windows(2)
        .map(|w| (w[1].t - w[0].t) as f64 / 60.0)
        .collect();
    gaps.sort_by(f64::total_cmp);
    let quartiles = [
        interpolate_sorted(&gaps, 0.25),
        interpolate_sorted(&gaps, 0.50),
        interpolate_sorted(&gaps, 0.75),
    ];

    UserStats {
        n_events: n as u64,
        inter_event_mean_min: Some(mean_min),
        gap_quartiles_min: Some(quartiles),
    }
}

/// Linear interpolation between order statistics at quantile `q`.
fn interpolate_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// A user is "frequent" when their mean gap is strictly under the threshold.
/// Users with fewer than two events never qualify.
pub fn is_frequent(stats: &UserStats, threshold_min: f64) -> bool {
    matches!(stats.inter_event_mean_min, Some(m) if m < threshold_min)
}

pub fn filter_frequent(stats: &[(UserId, UserStats)], threshold_min: f64) -> Vec<UserId> {
    stats
        .iter()
        .filter(|(_, s)| is_frequent(s, threshold_min))
        .map(|(u, _)| *u)
        .collect()
}

/// A maximal run of consecutive events near one spot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VirtualLocation {
    pub centroid: GeoPoint,
    pub t_first: i64,
    pub t_last: i64,
    pub n_records: u32,
}

impl VirtualLocation {
    pub fn dwell_min(&self) -> f64 {
        (self.t_last - self.t_first) as f64 / 60.0
    }
}

/// Greedy run extraction: a run starts at the first unconsumed event and
/// absorbs consecutive events strictly within `merge_radius_m` of that first
/// event (not of the running centroid). The centroid is the planar mean of
/// the run's positions. Runs partition the stream, so `sum(n_records)` equals
/// `events.len()`.
///
/// Precondition: `events` sorted by `t` ascending.
pub fn extract_virtual_locations(events: &[EventRecord], merge_radius_m: f64) -> Vec<VirtualLocation> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let anchor = events[i].pos;
        let mut j = i + 1;
        while j < events.len() && geo::distance_m(anchor, events[j].pos) < merge_radius_m {
            j += 1;
        }
        let mut sum = LocalXY::new(0.0, 0.0);
        for e in &events[i..j] {
            let xy = geo::project(e.pos, anchor);
            sum.x += xy.x;
            sum.y += xy.y;
        }
        let n = (j - i) as f64;
        let centroid = geo::unproject(LocalXY::new(sum.x / n, sum.y / n), anchor);
        out.push(VirtualLocation {
            centroid,
            t_first: events[i].t,
            t_last: events[j - 1].t,
            n_records: (j - i) as u32,
        });
        i = j;
    }
    out
}

/// A virtual location that qualifies as an actual stay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DwellCluster {
    pub centroid: GeoPoint,
    pub t_first: i64,
    pub t_last: i64,
    pub n_records: u32,
}

/// Keeps runs with at least two records and dwell strictly over
/// `min_dwell_min`. Order is preserved.
pub fn extract_clusters(vlocs: &[VirtualLocation], min_dwell_min: f64) -> Vec<DwellCluster> {
    vlocs
        .iter()
        .filter(|v| v.n_records >= 2 && v.dwell_min() > min_dwell_min)
        .map(|v| DwellCluster {
            centroid: v.centroid,
            t_first: v.t_first,
            t_last: v.t_last,
            n_records: v.n_records,
        })
        .collect()
}

/// A displacement between two consecutive dwell clusters. The trip starts
/// when the user was last seen at the origin and ends when first seen at the
/// destination; hourly binning keys off `end_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trip {
    pub user: UserId,
    pub origin: GeoPoint,
    pub dest: GeoPoint,
    pub start_t: i64,
    pub end_t: i64,
    pub origin_district: Option<DistrictId>,
    pub dest_district: Option<DistrictId>,
}

/// Consecutive cluster pairs become trips; `p` clusters yield `p - 1` trips.
/// Pairs whose timestamps do not advance (possible only when a cluster's last
/// record shares a timestamp with the next cluster's first) are dropped and
/// counted in the second return value.
pub fn extract_trips(user: UserId, clusters: &[DwellCluster], map: &DistrictMap) -> (Vec<Trip>, u64) {
    let mut trips = Vec::new();
    let mut degenerate = 0;
    for w in clusters.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.t_last >= b.t_first {
            degenerate += 1;
            continue;
        }
        trips.push(Trip {
            user,
            origin: a.centroid,
            dest: b.centroid,
            start_t: a.t_last,
            end_t: b.t_first,
            origin_district: map.district_of(a.centroid),
            dest_district: map.district_of(b.centroid),
        });
    }
    (trips, degenerate)
}
