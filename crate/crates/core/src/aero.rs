//! Horseshoe-vortex upwash model.
//!
//! A wing flying along `-y` sheds two counter-rotating trailing vortices
//! separated by `alpha`. The Burnham–Hallock core model with a Gaussian decay
//! along the flight axis gives the vertical velocity induced by one vortex
//! line; averaging the pair over a trailing wingspan gives the closed form
//! used throughout the formation layer.
//!
//! Coordinate convention: offsets are `(trailing - generator)`, so `dy > 0`
//! means the trailing wing is behind the generator. Positive velocity is
//! upward (upwash).
//!
//! [`induced_velocity`] is the single-line field. The wingspan average
//! [`avg_upwash`] integrates the vortex *pair*, i.e. the superposition
//! [`pair_velocity`] of two single-line fields centred at `±alpha/2` with
//! opposite signs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum AeroError {
    #[error("invalid aerodynamic parameter: {0}")]
    InvalidParams(&'static str),
}

/// Wake geometry of one UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeroParams {
    /// Wingspan (m).
    pub beta: f64,
    /// Separation of the two trailing vortices (m).
    pub alpha: f64,
    /// Vortex circulation (m²/s).
    pub zeta: f64,
    /// Vortex core radius (m).
    pub r_c: f64,
    /// Centre of the Gaussian decay along the flight axis (m).
    pub mu: f64,
    /// Spread of the Gaussian decay; appears as `2 * sigma0` in the exponent
    /// denominator, so it carries units of m².
    pub sigma0: f64,
}

impl Default for AeroParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            alpha: PI / 4.0,
            zeta: 2.0,
            r_c: 0.1,
            mu: 0.7,
            sigma0: 4.0,
        }
    }
}

impl AeroParams {
    pub fn validate(&self) -> Result<(), AeroError> {
        let finite = [self.beta, self.alpha, self.zeta, self.r_c, self.mu, self.sigma0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(AeroError::InvalidParams("non-finite value"));
        }
        if self.beta <= 0.0 {
            return Err(AeroError::InvalidParams("beta must be positive"));
        }
        if self.r_c <= 0.0 {
            return Err(AeroError::InvalidParams("r_c must be positive"));
        }
        if self.sigma0 <= 0.0 {
            return Err(AeroError::InvalidParams("sigma0 must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < self.beta) {
            return Err(AeroError::InvalidParams("alpha must lie in (0, beta)"));
        }
        Ok(())
    }

    /// Longitudinal factor `(1 + y / sqrt((beta/2)^2 + y^2)) * exp(-(y-mu)^2 / (2 sigma0))`.
    fn axial(&self, y: f64) -> f64 {
        let half = 0.5 * self.beta;
        let s = (half * half + y * y).sqrt();
        (1.0 + y / s) * (-(y - self.mu).powi(2) / (2.0 * self.sigma0)).exp()
    }

    fn axial_derivative(&self, y: f64) -> f64 {
        let half = 0.5 * self.beta;
        let s2 = half * half + y * y;
        let s = s2.sqrt();
        let decay = (-(y - self.mu).powi(2) / (2.0 * self.sigma0)).exp();
        let ratio_d = half * half / (s2 * s);
        decay * (ratio_d - (1.0 + y / s) * (y - self.mu) / self.sigma0)
    }

    /// Lateral log-ratio factor of the wingspan-averaged pair field.
    fn lateral(&self, x: f64) -> f64 {
        let (a, b, rc2) = (0.5 * self.alpha, 0.5 * self.beta, self.r_c * self.r_c);
        let q = |t: f64| t * t + rc2;
        (q(x - a + b) / q(x - a - b)).ln() - (q(x + a + b) / q(x + a - b)).ln()
    }

    fn lateral_derivative(&self, x: f64) -> f64 {
        let (a, b, rc2) = (0.5 * self.alpha, 0.5 * self.beta, self.r_c * self.r_c);
        let dlog = |t: f64| 2.0 * t / (t * t + rc2);
        dlog(x - a + b) - dlog(x - a - b) - dlog(x + a + b) + dlog(x + a - b)
    }

    fn avg_scale(&self) -> f64 {
        self.zeta / (4.0 * PI * self.beta)
    }
}

/// Offset of a trailing UAV relative to a reference UAV.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelOffset {
    /// Lateral offset (m).
    pub dx: f64,
    /// Longitudinal offset (m); positive means behind the reference.
    pub dy: f64,
}

impl RelOffset {
    pub const fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }

    pub fn between(trailing: &Vec2, reference: &Vec2) -> Self {
        Self::new(trailing.x - reference.x, trailing.y - reference.y)
    }

    pub fn to_vec(self) -> Vec2 {
        Vec2::new(self.dx, self.dy)
    }

    pub fn from_vec(v: &Vec2) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite()
    }
}

impl std::ops::Sub for RelOffset {
    type Output = RelOffset;
    fn sub(self, rhs: Self) -> Self {
        RelOffset::new(self.dx - rhs.dx, self.dy - rhs.dy)
    }
}

/// Flight-energy constants of one UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyParams {
    /// Lift force (N).
    pub lift: f64,
    /// Airspeed (m/s).
    pub v0: f64,
    /// Lumped parasite-drag coefficient.
    pub c: f64,
    /// Reference area (m²).
    pub s0: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        // A 2 kg airframe at the formation cruise speed.
        Self {
            lift: 2.0 * 9.81,
            v0: 5.0,
            c: 1.2,
            s0: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSaving {
    /// Induced-drag reduction (N).
    pub drag_reduction: f64,
    /// Flight-power reduction (W).
    pub power_reduction: f64,
}

/// Vertical velocity induced by a single trailing vortex line at `offset`.
pub fn induced_velocity(offset: RelOffset, p: &AeroParams) -> f64 {
    let x = offset.dx;
    p.zeta / (2.0 * PI) * x / (p.r_c * p.r_c + x * x) * p.axial(offset.dy)
}

/// Field of the vortex pair: the line at `+alpha/2` minus the line at `-alpha/2`.
pub fn pair_velocity(offset: RelOffset, p: &AeroParams) -> f64 {
    let a = 0.5 * p.alpha;
    induced_velocity(RelOffset::new(offset.dx - a, offset.dy), p)
        - induced_velocity(RelOffset::new(offset.dx + a, offset.dy), p)
}

/// Pair field averaged over a trailing wingspan centred at `offset`.
pub fn avg_upwash(offset: RelOffset, p: &AeroParams) -> f64 {
    p.avg_scale() * p.lateral(offset.dx) * p.axial(offset.dy)
}

/// Analytic `(d/d dx, d/d dy)` of [`avg_upwash`].
pub fn avg_upwash_grad(offset: RelOffset, p: &AeroParams) -> Vec2 {
    let k = p.avg_scale();
    Vec2::new(
        k * p.lateral_derivative(offset.dx) * p.axial(offset.dy),
        k * p.lateral(offset.dx) * p.axial_derivative(offset.dy),
    )
}

/// Total upwash felt by UAV `me`, summed over every other UAV in `positions`.
pub fn total_upwash(me: usize, positions: &[Vec2], p: &AeroParams) -> f64 {
    let here = positions[me];
    positions
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != me)
        .map(|(_, g)| avg_upwash(RelOffset::between(&here, g), p))
        .sum()
}

/// Total upwash at an arbitrary point from a set of generating UAVs.
pub fn upwash_at(point: &Vec2, generators: &[Vec2], p: &AeroParams) -> f64 {
    generators
        .iter()
        .map(|g| avg_upwash(RelOffset::between(point, g), p))
        .sum()
}

/// Regressor of the LMS observation model: `[lambda * du/d dx, du/d dy]` of
/// the total upwash at `offset`, where `others` are the offsets of every
/// other UAV in the same reference frame (the reference itself sits at the
/// origin and must be included).
pub fn upwash_gradient(offset: RelOffset, lambda: f64, others: &[RelOffset], p: &AeroParams) -> Vec2 {
    let g = others
        .iter()
        .fold(Vec2::zeros(), |acc, o| acc + avg_upwash_grad(offset - *o, p));
    Vec2::new(lambda * g.x, g.y)
}

pub fn power_saving(u_bar: f64, e: &EnergyParams) -> PowerSaving {
    PowerSaving {
        drag_reduction: e.lift * u_bar / e.v0,
        power_reduction: e.lift * u_bar,
    }
}

pub fn parasite_drag(e: &EnergyParams) -> f64 {
    0.5 * e.c * e.s0 * e.v0 * e.v0
}

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Grid argmax on `[lo, hi]` with spacing `step`, refined by golden section
/// inside the neighbouring cells.
pub fn grid_argmax_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).ceil() as usize;
    let (best, _) = (0..=n)
        .map(|i| (lo + i as f64 * step).min(hi))
        .map(|x| (x, f(x)))
        .fold((lo, f64::NEG_INFINITY), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc });
    golden_max(&f, (best - step).max(lo), (best + step).min(hi), 1e-12)
}

/// Position of maximum upwash behind a single generator, on the `dx > 0`
/// side (the field is even in `dx`).
///
/// The wingspan-averaged field factors into a lateral and a positive axial
/// term, so the 2-D argmax splits into two 1-D searches, each on a 1 mm grid
/// followed by golden-section refinement.
pub fn upwash_optimum(p: &AeroParams) -> RelOffset {
    const STEP: f64 = 1e-3;
    let span = 4.0 * p.beta;
    let dx = grid_argmax_1d(|x| p.lateral(x), 0.0, span, STEP);
    let dy = grid_argmax_1d(|y| p.axial(y), -span, p.mu + span + 4.0 * p.sigma0.sqrt(), STEP);
    RelOffset::new(dx, dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper() -> AeroParams {
        AeroParams::default()
    }

    #[test]
    fn validation() {
        assert!(paper().validate().is_ok());
        let mut p = paper();
        p.alpha = 1.2;
        assert!(p.validate().is_err());
        p = paper();
        p.r_c = 0.0;
        assert!(p.validate().is_err());
        p = paper();
        p.sigma0 = -1.0;
        assert!(p.validate().is_err());
        p = paper();
        p.beta = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn induced_velocity_vanishes_on_axis() {
        let mut p = paper();
        for zeta in [0.5, 2.0, 7.0] {
            p.zeta = zeta;
            assert_eq!(induced_velocity(RelOffset::new(0.0, 1.0), &p), 0.0);
        }
    }

    #[test]
    fn induced_velocity_high_precision_values() {
        // 40-digit evaluations of the single-line field.
        let p = paper();
        let v = induced_velocity(RelOffset::new(0.2, 1.0), &p);
        assert!((v - 2.385_076_010_903_514_6).abs() < 1e-14 * 2.4);
        let v = induced_velocity(RelOffset::new(-0.7, 2.5), &p);
        assert!((v + 0.588_682_919_695_239).abs() < 1e-14);
    }

    #[test]
    fn downwash_behind_centreline() {
        let p = paper();
        for i in 0..40 {
            let y = 0.05 + i as f64 * 0.1;
            assert!(avg_upwash(RelOffset::new(0.0, y), &p) < 0.0, "y = {y}");
        }
    }

    #[test]
    fn optimum_matches_independent_optimiser() {
        // Bounded Brent search on each separable factor, xatol = 1e-12.
        let opt = upwash_optimum(&paper());
        assert!((opt.dx - 0.909_653_362_225_638_9).abs() < 1e-7, "{opt:?}");
        assert!((opt.dy - 1.041_253_871_581_304_7).abs() < 1e-7, "{opt:?}");
        let g = avg_upwash_grad(opt, &paper());
        assert!(g.norm() < 1e-6);
    }

    #[test]
    fn total_upwash_is_sum_of_pairs() {
        let p = paper();
        let pos = [Vec2::new(0.0, 0.0), Vec2::new(0.9, 1.0)];
        let t = total_upwash(1, &pos, &p);
        assert_eq!(t, avg_upwash(RelOffset::new(0.9, 1.0), &p));
        let pos = [Vec2::new(0.0, 0.0), Vec2::new(-1.0, 1.1), Vec2::new(0.9, 1.0)];
        let t = total_upwash(2, &pos, &p);
        let explicit = avg_upwash(RelOffset::new(0.9, 1.0), &p)
            + avg_upwash(RelOffset::new(1.9, -0.1), &p);
        assert!((t - explicit).abs() < 1e-15);
    }

    #[test]
    fn gradient_side_flip() {
        let p = paper();
        let others = [RelOffset::new(0.0, 0.0), RelOffset::new(-1.0, 1.0)];
        let at = RelOffset::new(0.8, 1.2);
        let plus = upwash_gradient(at, 1.0, &others, &p);
        let minus = upwash_gradient(at, -1.0, &others, &p);
        assert_eq!(plus.x, -minus.x);
        assert_eq!(plus.y, minus.y);
    }

    #[test]
    fn energy_formulas() {
        let e = EnergyParams { lift: 10.0, v0: 5.0, c: 1.0, s0: 1.0 };
        assert_eq!(power_saving(0.0, &e), PowerSaving { drag_reduction: 0.0, power_reduction: 0.0 });
        let s = power_saving(0.5, &e);
        assert!((s.drag_reduction - 1.0).abs() < 1e-15 && (s.power_reduction - 5.0).abs() < 1e-15);
        let s = power_saving(-0.2, &e);
        assert!((s.drag_reduction + 0.4).abs() < 1e-15 && (s.power_reduction + 2.0).abs() < 1e-15);

        let mut e = EnergyParams { lift: 0.0, v0: 0.0, c: 1.0, s0: 1.0 };
        assert_eq!(parasite_drag(&e), 0.0);
        e.v0 = 2.0;
        assert_eq!(parasite_drag(&e), 2.0);
        e.v0 = 4.0;
        assert_eq!(parasite_drag(&e), 8.0);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_max(|x| -(x - 0.3).powi(2), -2.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn avg_upwash_even_in_dx(x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let p = paper();
            let a = avg_upwash(RelOffset::new(x, y), &p);
            let b = avg_upwash(RelOffset::new(-x, y), &p);
            // The lateral term is a difference of O(1) logs, so rounding is
            // bounded on that scale rather than relative to the result.
            let scale = p.avg_scale() * p.axial(y);
            prop_assert!((a - b).abs() <= 1e-14 * scale);
        }

        #[test]
        fn induced_velocity_odd_in_dx(x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let p = paper();
            let a = induced_velocity(RelOffset::new(x, y), &p);
            let b = induced_velocity(RelOffset::new(-x, y), &p);
            prop_assert_eq!(a, -b);
        }
    }
}
