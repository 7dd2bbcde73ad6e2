//! Decibel conversions used at configuration and report boundaries.
//!
//! Everything inside the crate works in linear units (watts, linear gains).

/// `10^(db/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `10 log10(x)`.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}
