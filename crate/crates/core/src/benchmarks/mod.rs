//! The two numerical studies as ready-made models plus data generators.

pub mod bearings;
pub mod changepoint;
pub mod data;

pub use bearings::{simulate_bearings, BearingsData, BearingsModel, BearingsParams, InitialProposal};
pub use changepoint::{simulate_changepoint, ChangePointData, ChangePointModel, IndicatorProposal, SegmentSummary};
pub use data::{read_series, write_series, Series};
