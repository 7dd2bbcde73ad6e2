//! Command-line experiments for the `isacform` crate: scenario documents,
//! experiment drivers and CSV/JSON emitters.

pub mod checks;
pub mod config;
pub mod experiments;
pub mod output;
