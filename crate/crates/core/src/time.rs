//! Local-time bookkeeping. Timestamps are Unix UTC seconds everywhere; a
//! fixed UTC offset turns them into civil dates and hours for windowing.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use core::fmt;

/// Default analysis windows as half-open local-hour ranges.
pub const MORNING_HOURS: (u32, u32) = (6, 10);
pub const MIDDAY_HOURS: (u32, u32) = (10, 17);
pub const EVENING_HOURS: (u32, u32) = (17, 22);

const MAX_OFFSET_S: i32 = 18 * 3600;

/// A fixed offset east of UTC. Daylight-saving rules are out of scope; the
/// cities this models keep a constant offset year round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TzOffset {
    seconds: i32,
}

impl TzOffset {
    pub const UTC: TzOffset = TzOffset { seconds: 0 };

    pub fn from_seconds(seconds: i32) -> Result<Self, TimeError> {
        if seconds.abs() > MAX_OFFSET_S {
            return Err(TimeError::OffsetOutOfRange { seconds });
        }
        Ok(TzOffset { seconds })
    }

    pub fn from_minutes(minutes: i32) -> Result<Self, TimeError> {
        Self::from_seconds(minutes.saturating_mul(60))
    }

    pub fn seconds(self) -> i32 {
        self.seconds
    }
}

/// Civil date and hour of a timestamp under an offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalCivil {
    pub date: NaiveDate,
    pub hour: u32,
}

impl LocalCivil {
    pub fn weekday(self) -> Weekday {
        self.date.weekday()
    }
}

/// `None` only for timestamps outside chrono's representable range.
pub fn local_civil(t: i64, tz: TzOffset) -> Option<LocalCivil> {
    let shifted = t.checked_add(tz.seconds as i64)?;
    let dt: NaiveDateTime = chrono::DateTime::from_timestamp(shifted, 0)?.naive_utc();
    Some(LocalCivil { date: dt.date(), hour: dt.hour() })
}

pub fn is_workday(date: NaiveDate) -> bool {
    !matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeError {
    OffsetOutOfRange { seconds: i32 },
}

impl fmt::Display for TimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeError::OffsetOutOfRange { seconds } => {
                write!(f, "utc offset {seconds}s exceeds +/-18h")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TimeError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singapore_offset_maps_to_local_morning() {
        let tz = TzOffset::from_minutes(480).unwrap();
        // 2011-04-04 08:30 local = 00:30 UTC.
        let t = 1301877000;
        let civil = local_civil(t, tz).unwrap();
        assert_eq!(civil.hour, 8);
        assert_eq!(civil.date, NaiveDate::from_ymd_opt(2011, 4, 4).unwrap());
        assert_eq!(civil.weekday(), Weekday::Mon);
        assert!(is_workday(civil.date));
    }

    #[test]
    fn weekend_detection() {
        assert!(!is_workday(NaiveDate::from_ymd_opt(2011, 4, 9).unwrap()));
        assert!(!is_workday(NaiveDate::from_ymd_opt(2011, 4, 10).unwrap()));
        assert!(is_workday(NaiveDate::from_ymd_opt(2011, 4, 8).unwrap()));
    }

    #[test]
    fn offset_bounds() {
        assert!(TzOffset::from_seconds(MAX_OFFSET_S).is_ok());
        assert!(TzOffset::from_seconds(MAX_OFFSET_S + 1).is_err());
    }
}
