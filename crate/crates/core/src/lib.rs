//! Algorithms for estimating city-scale travel demand from two passive data
//! sources: located cellphone activity (calls, texts, data sessions) and
//! smart-card transit taps.
//!
//! The chain runs: per-user event streams -> dwell clusters -> trips ->
//! hourly origin-destination matrices -> bias correction and market
//! upscaling -> subtraction of exact public-transport counts -> mode shares
//! and underserved-connection rankings.
//!
//! The crate is `no_std` + `alloc`; all file formats, parallelism, and CLI
//! live in the companion `odflow` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod analysis;
pub mod cdr;
pub mod geo;
pub mod metrics;
pub mod od;
pub mod places;
pub mod time;
pub mod transit;

pub use analysis::{
    mix_seed, mode_share, private_od, underserved_ranking, AnalysisError, ConnectionRecord,
    ModeShare,
};
pub use cdr::{EventRecord, Trip, UserId, UserStats};
pub use geo::{DistrictId, DistrictMap, GeoPoint, LocalXY};
pub use od::{MatrixKind, ODMatrix, OdError, ScalingConfig};
pub use places::{DistrictShares, PlaceParams, SignificantPlace};
pub use transit::{CardId, Journey, SmartCardLeg, StationId, StationIndex};
