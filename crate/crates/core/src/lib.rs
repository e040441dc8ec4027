//! Old-age mortality smoothing and rates of mortality improvement.
//!
//! The crate runs a two-step procedure on single-age, single-year death
//! counts and exposures:
//!
//! 1. Death rates at ages 85–109 are estimated per population-year with four
//!    competing smoothers ([`smoothers`]): a gamma-Gompertz-Makeham maximum
//!    likelihood fit, Poisson P-splines, the penalized composite link model
//!    and per-age gamma posteriors. The method with the smallest RMSE against
//!    the raw rates wins ([`selection`]).
//! 2. For each reported age the winner's `ln m_x(t)` series is fitted with a
//!    continuous segmented median regression ([`segreg`]). The slope of the
//!    last segment is the current rate of mortality improvement (CRMI).
//!
//! [`pipeline`] ties the steps together behind a config file and writes the
//! report tables; [`testgen`] holds the simulators and brute-force oracles
//! used by the test suites.

// `!(x > 0.0)` is used on purpose to reject NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod ingest;
pub mod pipeline;
pub mod segreg;
pub mod selection;
pub mod smoothers;
pub mod testgen;

mod rng;

pub use ingest::{MortalitySeries, RawTable, Sex, StudyWindow};
pub use segreg::{CrmiResult, SegmentedFit};
pub use smoothers::{Method, SmoothedSeries};

/// First age of the smoothing range.
pub const AGE_MIN: u32 = 85;
/// Last age of the smoothing range.
pub const AGE_MAX: u32 = 109;
/// Number of single ages in the smoothing range.
pub const N_AGES: usize = (AGE_MAX - AGE_MIN + 1) as usize;
