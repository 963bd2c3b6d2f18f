//! Smart-card leg chaining into journeys and exact public-transport OD
//! counting.

use crate::geo::DistrictId;
use crate::od::{MatrixKind, ODMatrix, OdError};
use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CardId(pub u32);

/// Index into the run's station table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StationId(pub u32);

/// One fare-gated ride: tap-in to tap-out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmartCardLeg {
    pub card: CardId,
    pub board_t: i64,
    pub alight_t: i64,
    pub board_station: StationId,
    pub alight_station: StationId,
}

/// One or more legs merged across short transfers. The journey runs from the
/// first boarding to the last alighting; OD windows key off `end_t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Journey {
    pub card: CardId,
    pub origin_station: StationId,
    pub dest_station: StationId,
    pub start_t: i64,
    pub end_t: i64,
    pub n_legs: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChainDiagnostics {
    pub legs_in: u64,
    /// Legs discarded because a later leg started before they ended.
    pub legs_dropped_overlap: u64,
    pub legs_chained: u64,
}

/// Merges consecutive legs of one card into journeys when the gap from
/// alighting to the next boarding is strictly under `transfer_min` minutes.
/// Overlapping legs (data glitches) resolve in favour of the later leg.
///
/// Precondition: `legs` all belong to one card and are sorted by `board_t`.
pub fn chain_journeys(legs: &[SmartCardLeg], transfer_min: f64) -> (Vec<Journey>, ChainDiagnostics) {
    let mut diag = ChainDiagnostics { legs_in: legs.len() as u64, ..Default::default() };

    let mut accepted: Vec<&SmartCardLeg> = Vec::with_capacity(legs.len());
    for leg in legs {
        while let Some(prev) = accepted.last() {
            if leg.board_t < prev.alight_t {
                accepted.pop();
                diag.legs_dropped_overlap += 1;
            } else {
                break;
            }
        }
        accepted.push(leg);
    }
    diag.legs_chained = accepted.len() as u64;

    let transfer_s = transfer_min * 60.0;
    let mut journeys = Vec::new();
    let mut i = 0;
    while i < accepted.len() {
        let first = accepted[i];
        let mut last = first;
        let mut n_legs = 1u32;
        while i + 1 < accepted.len() {
            let next = accepted[i + 1];
            let gap_s = (next.board_t - last.alight_t) as f64;
            if gap_s < transfer_s {
                last = next;
                n_legs += 1;
                i += 1;
            } else {
                break;
            }
        }
        journeys.push(Journey {
            card: first.card,
            origin_station: first.board_station,
            dest_station: last.alight_station,
            start_t: first.board_t,
            end_t: last.alight_t,
            n_legs,
        });
        i += 1;
    }
    (journeys, diag)
}

/// Station-to-district assignment, fixed at load time. Every station is in
/// some district; loaders reject station files that fall outside the map.
#[derive(Clone, Debug)]
pub struct StationIndex {
    districts: Vec<DistrictId>,
}

impl StationIndex {
    pub fn new(districts: Vec<DistrictId>) -> Self {
        StationIndex { districts }
    }

    pub fn len(&self) -> usize {
        self.districts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.districts.is_empty()
    }

    pub fn district(&self, s: StationId) -> Option<DistrictId> {
        self.districts.get(s.0 as usize).copied()
    }
}

/// Exact public-transport OD: every journey lands in one cell of one hourly
/// window, no sampling or scaling anywhere. An unknown station id is a data
/// integrity failure, not a skippable record.
pub fn public_od(
    journeys: &[Journey],
    stations: &StationIndex,
    d: usize,
    granularity_s: i64,
    label: &str,
) -> Result<Vec<ODMatrix>, TransitError> {
    if granularity_s <= 0 {
        return Err(TransitError::Od(OdError::BadGranularity { granularity_s }));
    }
    let mut bins: BTreeMap<i64, ODMatrix> = BTreeMap::new();
    for j in journeys {
        let o = stations
            .district(j.origin_station)
            .ok_or(TransitError::UnknownStation { station: j.origin_station })?;
        let dd = stations
            .district(j.dest_station)
            .ok_or(TransitError::UnknownStation { station: j.dest_station })?;
        let bin = j.end_t.div_euclid(granularity_s);
        let m = match bins.entry(bin) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let window = (bin * granularity_s, (bin + 1) * granularity_s);
                e.insert(
                    ODMatrix::zero(d, window, String::from(label), MatrixKind::Count)
                        .map_err(TransitError::Od)?,
                )
            }
        };
        m.add(o, dd, 1.0);
    }
    Ok(bins.into_values().collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransitError {
    UnknownStation { station: StationId },
    Od(OdError),
}

impl fmt::Display for TransitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitError::UnknownStation { station } => {
                write!(f, "journey references station index {} with no district", station.0)
            }
            TransitError::Od(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TransitError {}

#[cfg(test)]
mod tests {
    use super::*;

    fn leg(board_min: i64, alight_min: i64, from: u32, to: u32) -> SmartCardLeg {
        SmartCardLeg {
            card: CardId(1),
            board_t: board_min * 60,
            alight_t: alight_min * 60,
            board_station: StationId(from),
            alight_station: StationId(to),
        }
    }

    #[test]
    fn single_leg_single_journey() {
        let (js, diag) = chain_journeys(&[leg(0, 20, 0, 1)], 45.0);
        assert_eq!(js.len(), 1);
        assert_eq!(js[0].n_legs, 1);
        assert_eq!(js[0].start_t, 0);
        assert_eq!(js[0].end_t, 1200);
        assert_eq!(diag.legs_chained, 1);
    }

    #[test]
    fn forty_five_minute_boundary_is_strict() {
        // Gap of exactly 45:00 stays split; 44:59 merges.
        let split = [leg(0, 20, 0, 1), leg(65, 80, 1, 2)];
        let (js, _) = chain_journeys(&split, 45.0);
        assert_eq!(js.len(), 2);

        let merged = [
            leg(0, 20, 0, 1),
            SmartCardLeg { board_t: 20 * 60 + 44 * 60 + 59, ..leg(0, 80, 1, 2) },
        ];
        let (js, _) = chain_journeys(&merged, 45.0);
        assert_eq!(js.len(), 1);
        assert_eq!(js[0].n_legs, 2);
    }

    #[test]
    fn chain_of_three_with_one_long_gap() {
        // A->B, 10 min, B->C, 50 min, C->D: journeys A->C and C->D.
        let legs = [leg(0, 20, 0, 1), leg(30, 50, 1, 2), leg(100, 120, 2, 3)];
        let (js, _) = chain_journeys(&legs, 45.0);
        assert_eq!(js.len(), 2);
        assert_eq!(js[0].origin_station, StationId(0));
        assert_eq!(js[0].dest_station, StationId(2));
        assert_eq!(js[0].end_t, 50 * 60);
        assert_eq!(js[0].n_legs, 2);
        assert_eq!(js[1].origin_station, StationId(2));
        assert_eq!(js[1].dest_station, StationId(3));
    }

    #[test]
    fn overlapping_legs_keep_the_later_one() {
        let legs = [leg(0, 60, 0, 1), leg(30, 50, 2, 3)];
        let (js, diag) = chain_journeys(&legs, 45.0);
        assert_eq!(diag.legs_dropped_overlap, 1);
        assert_eq!(js.len(), 1);
        assert_eq!(js[0].origin_station, StationId(2));
    }

    #[test]
    fn leg_conservation_invariant() {
        let legs = [leg(0, 10, 0, 1), leg(15, 30, 1, 2), leg(200, 220, 2, 0), leg(210, 230, 0, 1)];
        let (js, diag) = chain_journeys(&legs, 45.0);
        let chained: u32 = js.iter().map(|j| j.n_legs).sum();
        assert_eq!(chained as u64, diag.legs_chained);
        assert_eq!(diag.legs_chained + diag.legs_dropped_overlap, diag.legs_in);
    }

    #[test]
    fn empty_legs_empty_journeys() {
        let (js, diag) = chain_journeys(&[], 45.0);
        assert!(js.is_empty());
        assert_eq!(diag.legs_in, 0);
    }

    #[test]
    fn public_od_bins_by_journey_end() {
        let idx = StationIndex::new(alloc::vec![DistrictId(0), DistrictId(1)]);
        let j = Journey {
            card: CardId(0),
            origin_station: StationId(0),
            dest_station: StationId(1),
            start_t: 9 * 3600,
            end_t: 9 * 3600 + 1800,
            n_legs: 1,
        };
        let ms = public_od(&[j], &idx, 2, 3600, "pub").unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].window(), (9 * 3600, 10 * 3600));
        assert_eq!(ms[0].get(DistrictId(0), DistrictId(1)), 1.0);
    }

    #[test]
    fn unknown_station_is_fatal() {
        let idx = StationIndex::new(alloc::vec![DistrictId(0)]);
        let j = Journey {
            card: CardId(0),
            origin_station: StationId(0),
            dest_station: StationId(9),
            start_t: 0,
            end_t: 60,
            n_legs: 1,
        };
        assert_eq!(
            public_od(&[j], &idx, 1, 3600, "pub").unwrap_err(),
            TransitError::UnknownStation { station: StationId(9) }
        );
    }
}
