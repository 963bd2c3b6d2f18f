//! Origin-destination matrices on hourly windows, plus the two calibration
//! steps that lift frequent-user counts to population-level estimates:
//! place-share bias correction and market upscaling.

use crate::cdr::Trip;
use crate::geo::DistrictId;
use crate::places::DistrictShares;
use crate::time::{is_workday, local_civil, TzOffset};
use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Whether cells are raw trip counts or upscaled population estimates.
/// Aggregation refuses to mix the two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    Count,
    Estimate,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixKind::Count => write!(f, "count"),
            MatrixKind::Estimate => write!(f, "estimate"),
        }
    }
}

/// A dense `d x d` matrix of directed flows for one half-open time window
/// `[start, end)` in Unix UTC seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct ODMatrix {
    d: usize,
    window: (i64, i64),
    label: String,
    kind: MatrixKind,
    cells: Vec<f64>,
}

impl ODMatrix {
    pub fn zero(
        d: usize,
        window: (i64, i64),
        label: impl Into<String>,
        kind: MatrixKind,
    ) -> Result<Self, OdError> {
        if d == 0 {
            return Err(OdError::EmptyMatrix);
        }
        if window.0 >= window.1 {
            return Err(OdError::BadWindow { start: window.0, end: window.1 });
        }
        Ok(ODMatrix { d, window, label: label.into(), kind, cells: vec![0.0; d * d] })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn window(&self) -> (i64, i64) {
        self.window
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    fn idx(&self, o: DistrictId, dd: DistrictId) -> usize {
        o.index() * self.d + dd.index()
    }

    pub fn get(&self, o: DistrictId, dd: DistrictId) -> f64 {
        self.cells[self.idx(o, dd)]
    }

    pub fn set(&mut self, o: DistrictId, dd: DistrictId, v: f64) {
        let i = self.idx(o, dd);
        self.cells[i] = v;
    }

    pub fn add(&mut self, o: DistrictId, dd: DistrictId, v: f64) {
        let i = self.idx(o, dd);
        self.cells[i] += v;
    }

    /// All cells in row-major order with their district pair.
    pub fn iter(&self) -> impl Iterator<Item = (DistrictId, DistrictId, f64)> + '_ {
        let d = self.d;
        self.cells.iter().enumerate().map(move |(i, &v)| {
            (DistrictId((i / d) as u16), DistrictId((i % d) as u16), v)
        })
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// Sum excluding the diagonal (trips that stay within one district).
    pub fn inter_district_total(&self) -> f64 {
        let mut s = 0.0;
        for o in 0..self.d {
            for dd in 0..self.d {
                if o != dd {
                    s += self.cells[o * self.d + dd];
                }
            }
        }
        s
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BinDiagnostics {
    pub binned: u64,
    pub skipped_no_district: u64,
}

/// Buckets trips into consecutive windows of `granularity_s` by trip end
/// time. Trips with either endpoint off the map are skipped and counted.
/// Output windows are sorted and only non-empty ones are materialized.
pub fn bin_trips<'a, I>(
    trips: I,
    d: usize,
    granularity_s: i64,
    label: &str,
) -> Result<(Vec<ODMatrix>, BinDiagnostics), OdError>
where
    I: IntoIterator<Item = &'a Trip>,
{
    if granularity_s <= 0 {
        return Err(OdError::BadGranularity { granularity_s });
    }
    let mut bins: BTreeMap<i64, ODMatrix> = BTreeMap::new();
    let mut diag = BinDiagnostics::default();
    for trip in trips {
        let (Some(o), Some(dd)) = (trip.origin_district, trip.dest_district) else {
            diag.skipped_no_district += 1;
            continue;
        };
        let bin = trip.end_t.div_euclid(granularity_s);
        let m = match bins.entry(bin) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let window = (bin * granularity_s, (bin + 1) * granularity_s);
                e.insert(ODMatrix::zero(d, window, label, MatrixKind::Count)?)
            }
        };
        m.add(o, dd, 1.0);
        diag.binned += 1;
    }
    Ok((bins.into_values().collect(), diag))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    Total,
    PerDay,
}

/// Selects hourly windows by local civil time before aggregation.
#[derive(Clone, Copy, Debug)]
pub struct WindowFilter {
    /// Half-open local-hour range a window's start must fall in.
    pub hours: Option<(u32, u32)>,
    pub workdays_only: bool,
    pub tz: TzOffset,
}

impl WindowFilter {
    pub fn all(tz: TzOffset) -> Self {
        WindowFilter { hours: None, workdays_only: false, tz }
    }

    pub fn validated(self) -> Result<Self, OdError> {
        if let Some((h0, h1)) = self.hours {
            if h0 >= h1 || h1 > 24 {
                return Err(OdError::BadHourRange { start: h0, end: h1 });
            }
        }
        Ok(self)
    }

    fn matches(&self, window: (i64, i64)) -> bool {
        let Some(civil) = local_civil(window.0, self.tz) else {
            return false;
        };
        if self.workdays_only && !is_workday(civil.date) {
            return false;
        }
        match self.hours {
            Some((h0, h1)) => civil.hour >= h0 && civil.hour < h1,
            None => true,
        }
    }
}

/// Sums the windows selected by `filter` into one matrix. `PerDay` divides by
/// the number of distinct local dates among the selected windows, yielding an
/// average single-day matrix.
pub fn aggregate(
    ms: &[ODMatrix],
    filter: &WindowFilter,
    normalization: Normalization,
    label: &str,
) -> Result<ODMatrix, OdError> {
    let filter = filter.validated()?;
    let selected: Vec<&ODMatrix> = ms.iter().filter(|m| filter.matches(m.window)).collect();
    let Some(first) = selected.first() else {
        return Err(OdError::NoWindowsSelected);
    };

    let d = first.d;
    let kind = first.kind;
    let mut start = i64::MAX;
    let mut end = i64::MIN;
    let mut days = alloc::collections::BTreeSet::new();
    for m in &selected {
        if m.d != d {
            return Err(OdError::DimensionMismatch { left: d, right: m.d });
        }
        if m.kind != kind {
            return Err(OdError::KindMismatch);
        }
        start = start.min(m.window.0);
        end = end.max(m.window.1);
        // matches() already proved the window converts.
        days.insert(local_civil(m.window.0, filter.tz).unwrap().date);
    }

    let mut out = ODMatrix::zero(d, (start, end), label, kind)?;
    for m in &selected {
        for (i, v) in m.cells.iter().enumerate() {
            out.cells[i] += v;
        }
    }
    if normalization == Normalization::PerDay {
        let n_days = days.len() as f64;
        for c in &mut out.cells {
            *c /= n_days;
        }
    }
    Ok(out)
}

/// Result of place-share bias correction. `substituted` lists districts whose
/// own share was unusable (no places, or no frequent places) and fell back to
/// the global share.
#[derive(Clone, Debug)]
pub struct BiasCorrection {
    pub matrix: ODMatrix,
    pub substituted: Vec<DistrictId>,
    pub phi: f64,
}

/// Rescales each cell by `sqrt(phi^2 / (phi_o * phi_d))`, damping flows
/// between districts where frequent users are over-represented and boosting
/// the opposite. Cell-linear, so zero cells stay zero.
pub fn correct_bias(a: &ODMatrix, shares: &DistrictShares) -> Result<BiasCorrection, OdError> {
    if shares.d() != a.d {
        return Err(OdError::DimensionMismatch { left: a.d, right: shares.d() });
    }
    let phi = shares.phi();
    if phi <= 0.0 {
        return Err(OdError::ZeroGlobalShare);
    }

    let mut substituted = Vec::new();
    let mut phi_eff = Vec::with_capacity(a.d);
    for i in 0..a.d {
        let id = DistrictId(i as u16);
        match shares.phi_i(id) {
            Some(p) if p > 0.0 => phi_eff.push(p),
            _ => {
                substituted.push(id);
                phi_eff.push(phi);
            }
        }
    }

    let mut out = a.clone();
    out.label = format!("{}-corrected", a.label);
    for o in 0..a.d {
        for dd in 0..a.d {
            let f = libm::sqrt(phi * phi / (phi_eff[o] * phi_eff[dd]));
            out.cells[o * a.d + dd] = a.cells[o * a.d + dd] * f;
        }
    }
    Ok(BiasCorrection { matrix: out, substituted, phi })
}

/// Device-market calibration for the 2011 Singapore deployment.
pub const SG2011_MARKET_SHARE: f64 = 0.453;
pub const SG2011_PENETRATION: f64 = 1.44;
pub const SG2011_FREQUENT_SHARE: f64 = 0.34;
pub const SG2011_SUBSCRIBERS: f64 = 3.4e6;
pub const SG2011_POPULATION: f64 = 5.2e6;

/// Cross-check of the Singapore calibration constants against each other.
#[derive(Clone, Copy, Debug)]
pub struct MarketConsistency {
    /// Devices implied by subscriber count over market share.
    pub implied_devices: f64,
    /// Devices per resident implied by the above.
    pub implied_penetration: f64,
}

pub fn sg2011_market_consistency() -> MarketConsistency {
    let implied_devices = SG2011_SUBSCRIBERS / SG2011_MARKET_SHARE;
    MarketConsistency { implied_devices, implied_penetration: implied_devices / SG2011_POPULATION }
}

/// The three divisors that lift frequent-user trip counts to the full
/// population: operator market share, device penetration, and the share of
/// users active enough to be modelled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingConfig {
    pub market_share: f64,
    pub penetration: f64,
    pub frequent_share: f64,
}

impl ScalingConfig {
    pub fn new(market_share: f64, penetration: f64, frequent_share: f64) -> Result<Self, OdError> {
        for (name, v) in
            [("market_share", market_share), ("penetration", penetration), ("frequent_share", frequent_share)]
        {
            if !v.is_finite() || v <= 0.0 || v > 3.0 {
                return Err(OdError::BadScalingFactor { name, value: v });
            }
        }
        Ok(ScalingConfig { market_share, penetration, frequent_share })
    }

    pub fn sg2011() -> Self {
        ScalingConfig {
            market_share: SG2011_MARKET_SHARE,
            penetration: SG2011_PENETRATION,
            frequent_share: SG2011_FREQUENT_SHARE,
        }
    }

    pub fn divisor(&self) -> f64 {
        self.market_share * self.penetration * self.frequent_share
    }
}

/// Divides every cell by the market divisor, turning counts into estimates.
/// This is the only COUNT to ESTIMATE transition in the pipeline.
pub fn upscale(a: &ODMatrix, cfg: &ScalingConfig) -> Result<ODMatrix, OdError> {
    if a.kind != MatrixKind::Count {
        return Err(OdError::KindMismatch);
    }
    let divisor = cfg.divisor();
    let mut out = a.clone();
    out.kind = MatrixKind::Estimate;
    out.label = format!("{}-upscaled", a.label);
    for c in &mut out.cells {
        *c /= divisor;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OdError {
    EmptyMatrix,
    BadWindow { start: i64, end: i64 },
    BadGranularity { granularity_s: i64 },
    BadHourRange { start: u32, end: u32 },
    DimensionMismatch { left: usize, right: usize },
    KindMismatch,
    NoWindowsSelected,
    ZeroGlobalShare,
    BadScalingFactor { name: &'static str, value: f64 },
}

impl fmt::Display for OdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdError::EmptyMatrix => write!(f, "matrix needs at least one district"),
            OdError::BadWindow { start, end } => {
                write!(f, "window start {start} must precede end {end}")
            }
            OdError::BadGranularity { granularity_s } => {
                write!(f, "granularity must be positive, got {granularity_s}s")
            }
            OdError::BadHourRange { start, end } => {
                write!(f, "hour range [{start}, {end}) is not a valid sub-day range")
            }
            OdError::DimensionMismatch { left, right } => {
                write!(f, "district count mismatch: {left} vs {right}")
            }
            OdError::KindMismatch => write!(f, "count/estimate kinds are incompatible here"),
            OdError::NoWindowsSelected => write!(f, "no windows match the aggregation filter"),
            OdError::ZeroGlobalShare => {
                write!(f, "global frequent place share is zero; bias correction undefined")
            }
            OdError::BadScalingFactor { name, value } => {
                write!(f, "scaling factor {name} = {value} outside (0, 3]")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OdError {}
