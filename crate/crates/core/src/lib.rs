//! Street-level air-quality prediction.
//!
//! Station measurements, atmospheric-model grids and emission proxies (roads,
//! traffic, land cover, power plants) are turned into exponential-kernel
//! features at any location and hour, and a two-hidden-layer network maps
//! those features to NO2, O3, PM2.5 and PM10 concentrations. On top of the
//! predictor sit a nearest-station benchmark, partial dependence curves,
//! raster maps and exposure-aware routing.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix formulas in the network code.
#![allow(clippy::needless_range_loop)]

pub mod apps;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod geo;
pub mod ingest;
pub mod model;
mod pollutant;
mod time;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geo::{BoundingBox, GeoPoint};
pub use pollutant::{Concentrations, Pollutant, POLLUTANTS};
pub use time::Hour;
