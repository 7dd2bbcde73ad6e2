//! Energy-saving UAV formation flight and control-fair dual-functional
//! (communication + sensing) beamforming.
//!
//! The crate is organised bottom-up:
//!
//! * [`aero`] – horseshoe-vortex upwash field, its wingspan average and gradient.
//! * [`formation`] – adapt-then-combine diffusion-LMS formation simulator.
//! * [`radio`] – line-of-sight channel, steering vectors, SINR and beampattern gain.
//! * [`control`] – Riccati solvers, LQR/rate trade-off and a closed-loop validator.
//! * [`conic`] – a dense primal-dual interior-point solver for multi-block SDPs.
//! * [`beamform`] – successive convex approximation of the max-LQR beamforming
//!   problem plus the benchmark schemes.

pub mod aero;
pub mod beamform;
pub mod conic;
pub mod control;
pub mod formation;
pub mod radio;
pub mod units;

pub use nalgebra::{Vector2, Vector3};

/// Horizontal position / offset in metres.
pub type Vec2 = Vector2<f64>;
/// Position in metres.
pub type Vec3 = Vector3<f64>;
