//! Adapt-then-combine diffusion LMS formation flight.
//!
//! Every UAV flies along `-y`. In each slot the UAV with the smallest `y`
//! leads; every other UAV picks as reference the preceding UAV closest in the
//! weighted distance `dx^2 + kappa dy^2`, observes its total upwash, updates
//! its estimate of the best offset behind the reference (adapt), averages the
//! updates of itself and its two nearest neighbours (combine) and moves
//! towards `reference + (lambda dx*, dy*)`.
//!
//! Offsets are kept in a side-normalised frame: the actual lateral offset is
//! `lambda * dx`, so UAVs on either wing share one estimate.
//!
//! The combine step averages the neighbours' intermediate estimates
//! `psi_i`, the usual diffusion form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aero::{self, AeroParams, EnergyParams, RelOffset};
use crate::Vec2;

/// Stream of the slot loop; initial layouts draw from stream 0.
const SLOT_STREAM: u64 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum FormationError {
    #[error("invalid formation config: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite position of UAV {uav} at slot {slot}")]
    Divergence { slot: usize, uav: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: usize,
    /// Horizontal position (m).
    pub pos: Vec2,
    /// Side preference, +1 or -1.
    pub lambda: f64,
    /// Current offset estimate in the side-normalised frame (m).
    pub est: RelOffset,
    /// Largest total upwash experienced so far (m/s).
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormationConfig {
    /// Number of UAVs.
    pub m: usize,
    /// Weight of the longitudinal term in the reference distance.
    pub kappa: f64,
    /// Motion blend factor.
    pub theta_mix: f64,
    /// LMS step size.
    pub step: f64,
    /// Combine weights for (self, nearest, second nearest).
    pub comb_weights: [f64; 3],
    /// Cruise speed (m/s).
    pub v0: f64,
    /// Slot length (s).
    pub dt: f64,
    /// Lateral motion-noise variance (m²).
    pub sigma_x2: f64,
    /// Longitudinal motion-noise variance (m²).
    pub sigma_y2: f64,
    /// Observation-noise variance ((m/s)²).
    pub sigma_obs2: f64,
    /// Initial offset estimate (m).
    pub init_est: RelOffset,
    pub energy: EnergyParams,
}

impl Default for FormationConfig {
    fn default() -> Self {
        Self {
            m: 9,
            kappa: 1.0 / 3.0,
            theta_mix: 0.5,
            step: 2e-3,
            comb_weights: [1.0 / 3.0; 3],
            v0: 5.0,
            dt: 0.05,
            sigma_x2: 2e-4,
            sigma_y2: 2e-4,
            sigma_obs2: 1e-4,
            init_est: RelOffset::new(1.0, 1.0),
            energy: EnergyParams::default(),
        }
    }
}

impl FormationConfig {
    pub fn validate(&self) -> Result<(), FormationError> {
        let bad = |msg: &str| Err(FormationError::Config(msg.to_string()));
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return bad("kappa must lie in (0, 1)");
        }
        if !(self.theta_mix > 0.0 && self.theta_mix < 1.0) {
            return bad("theta_mix must lie in (0, 1)");
        }
        if !(self.step > 0.0) {
            return bad("step must be positive");
        }
        if self.comb_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("comb_weights must be nonnegative");
        }
        if (self.comb_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("comb_weights must sum to 1");
        }
        if !(self.v0 > 0.0 && self.dt > 0.0) {
            return bad("v0 and dt must be positive");
        }
        if [self.sigma_x2, self.sigma_y2, self.sigma_obs2].iter().any(|s| !(*s >= 0.0)) {
            return bad("noise variances must be nonnegative");
        }
        if !self.init_est.is_finite() {
            return bad("init_est must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub d: f64,
    pub f: Vec2,
    /// Noise-free total upwash at the observation point.
    pub u_tot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSnapshot {
    /// States at the start of the slot, with `u_max` and `est` as updated
    /// during the slot.
    pub states: Vec<UavState>,
    pub leader: usize,
    pub refs: Vec<Option<usize>>,
    pub u_tot: Vec<f64>,
    /// Mean flight-power reduction over followers (W).
    pub mean_power_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationTrace {
    pub slots: Vec<SlotSnapshot>,
    pub final_states: Vec<UavState>,
}

/// Index of the UAV with the smallest `y`; ties go to the smallest id.
pub fn select_leader(states: &[UavState]) -> usize {
    let mut best = 0;
    for (i, s) in states.iter().enumerate().skip(1) {
        let b = &states[best];
        if s.pos.y < b.pos.y || (s.pos.y == b.pos.y && s.id < b.id) {
            best = i;
        }
    }
    best
}

/// Preceding UAV minimising `dx^2 + kappa dy^2`; `None` when nobody is ahead.
pub fn find_reference(me: usize, states: &[UavState], kappa: f64) -> Option<usize> {
    let here = states[me].pos;
    let mut best: Option<(usize, f64)> = None;
    for (j, s) in states.iter().enumerate() {
        if j == me || s.pos.y >= here.y {
            continue;
        }
        let d = here - s.pos;
        let dist = d.x * d.x + kappa * d.y * d.y;
        let better = match best {
            None => true,
            Some((b, bd)) => dist < bd || (dist == bd && s.id < states[b].id),
        };
        if better {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

/// `me` followed by its two nearest UAVs (Euclidean, ties by id). With fewer
/// than three UAVs the whole formation is returned, `me` first.
pub fn neighbor_set(me: usize, states: &[UavState]) -> Vec<usize> {
    let here = states[me].pos;
    let mut others: Vec<usize> = (0..states.len()).filter(|&j| j != me).collect();
    others.sort_by(|&a, &b| {
        let da = (states[a].pos - here).norm_squared();
        let db = (states[b].pos - here).norm_squared();
        da.total_cmp(&db).then(states[a].id.cmp(&states[b].id))
    });
    let mut set = vec![me];
    set.extend(others.into_iter().take(2));
    set
}

/// Noisy upwash observation of follower `me` behind `reference`.
///
/// Updates `u_max` with the noise-free total upwash before forming
/// `d = u_max - u_tot + f^T est + v`.
pub fn observe_upwash(
    me: usize,
    reference: Option<usize>,
    states: &mut [UavState],
    p: &AeroParams,
    cfg: &FormationConfig,
    noise: f64,
) -> Result<Observation, FormationError> {
    let Some(r) = reference else {
        return Err(FormationError::Contract(format!("UAV {me} has no reference")));
    };
    let positions: Vec<Vec2> = states.iter().map(|s| s.pos).collect();
    let u_tot = aero::total_upwash(me, &positions, p);
    let origin = positions[r];
    let others: Vec<RelOffset> = positions
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != me)
        .map(|(_, q)| RelOffset::between(q, &origin))
        .collect();
    let s = &mut states[me];
    let f = aero::upwash_gradient(RelOffset::between(&s.pos, &origin), s.lambda, &others, p);
    s.u_max = s.u_max.max(u_tot);
    let d = s.u_max - u_tot + f.dot(&s.est.to_vec()) + cfg.sigma_obs2.sqrt() * noise;
    Ok(Observation { d, f, u_tot })
}

/// LMS adaptation; UAVs without an observation keep their estimate.
pub fn adapt(est: RelOffset, obs: Option<&Observation>, cfg: &FormationConfig) -> Vec2 {
    let z = est.to_vec();
    match obs {
        Some(o) => z + o.f.scale(cfg.step * (o.d - o.f.dot(&z))),
        None => z,
    }
}

/// Convex combination `sum_i w_i psi_i`.
pub fn combine(psis: &[Vec2], weights: &[f64]) -> Result<Vec2, FormationError> {
    if psis.len() != weights.len() {
        return Err(FormationError::Config(format!(
            "{} estimates but {} weights",
            psis.len(),
            weights.len()
        )));
    }
    if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
        return Err(FormationError::Config("combine weights must be a convex combination".into()));
    }
    Ok(psis.iter().zip(weights).fold(Vec2::zeros(), |acc, (p, w)| acc + p.scale(*w)))
}

/// One motion step. `noise` holds unit normals for the x and y channels.
pub fn step_motion(
    state: &UavState,
    ref_pos: Option<Vec2>,
    dz_star: Vec2,
    is_leader: bool,
    cfg: &FormationConfig,
    noise: [f64; 2],
) -> Result<Vec2, FormationError> {
    let vx = cfg.sigma_x2.sqrt() * noise[0];
    let vy = cfg.sigma_y2.sqrt() * noise[1];
    let advect = cfg.v0 * cfg.dt;
    if is_leader {
        return Ok(Vec2::new(state.pos.x + vx, state.pos.y - advect + vy));
    }
    let Some(r) = ref_pos else {
        return Err(FormationError::Contract(format!("follower {} has no reference", state.id)));
    };
    let th = cfg.theta_mix;
    let target = Vec2::new(r.x + state.lambda * dz_star.x, r.y + dz_star.y);
    Ok(Vec2::new(
        th * state.pos.x + (1.0 - th) * target.x + vx,
        th * state.pos.y + (1.0 - th) * target.y - advect + vy,
    ))
}

/// Random layout: `x` uniform in `[-m beta/4, m beta/4]`, `y` uniform in
/// `[0, m beta/2]` around `center`, resampling any UAV closer than
/// `0.2 beta` to an earlier one. Sides are drawn uniformly.
pub fn init_states(cfg: &FormationConfig, p: &AeroParams, center: Vec2, seed: u64) -> Vec<UavState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_x = cfg.m as f64 * p.beta / 4.0;
    let span_y = cfg.m as f64 * p.beta / 2.0;
    let min_sep2 = (0.2 * p.beta).powi(2);
    let mut states: Vec<UavState> = Vec::with_capacity(cfg.m);
    for id in 0..cfg.m {
        let pos = loop {
            let cand = center + Vec2::new(rng.random_range(-half_x..=half_x), rng.random_range(0.0..=span_y));
            if states.iter().all(|s| (s.pos - cand).norm_squared() >= min_sep2) {
                break cand;
            }
        };
        let lambda = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        states.push(UavState { id, pos, lambda, est: cfg.init_est, u_max: 0.0 });
    }
    states
}

/// Runs the formation loop for `n_slots` slots.
///
/// Each slot draws three unit normals per UAV in id order (observation,
/// x motion, y motion); the leader's observation draw is discarded so that
/// the draw order does not depend on leadership.
pub fn run_formation(
    cfg: &FormationConfig,
    p: &AeroParams,
    init: Vec<UavState>,
    n_slots: usize,
    seed: u64,
) -> Result<FormationTrace, FormationError> {
    cfg.validate()?;
    p.validate().map_err(|e| FormationError::Config(e.to_string()))?;
    if init.is_empty() {
        return Err(FormationError::Config("empty formation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SLOT_STREAM);
    let mut states = init;
    let m = states.len();
    let mut slots = Vec::with_capacity(n_slots);

    for slot in 0..n_slots {
        let noise: Vec<[f64; 3]> = (0..m)
            .map(|_| {
                [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ]
            })
            .collect();
        let start = states.clone();
        let leader = select_leader(&states);
        let refs: Vec<Option<usize>> = (0..m)
            .map(|i| if i == leader { None } else { find_reference(i, &states, cfg.kappa) })
            .collect();

        let positions: Vec<Vec2> = states.iter().map(|s| s.pos).collect();
        let mut u_tot = vec![0.0; m];
        let mut psis = Vec::with_capacity(m);
        for i in 0..m {
            let obs = match refs[i] {
                Some(_) => Some(observe_upwash(i, refs[i], &mut states, p, cfg, noise[i][0])?),
                None => None,
            };
            u_tot[i] = match &obs {
                Some(o) => o.u_tot,
                None => aero::total_upwash(i, &positions, p),
            };
            psis.push(adapt(states[i].est, obs.as_ref(), cfg));
        }

        let mut dz_star = Vec::with_capacity(m);
        for i in 0..m {
            let set = neighbor_set(i, &states);
            let weights: Vec<f64> = if set.len() == 3 {
                cfg.comb_weights.to_vec()
            } else {
                vec![1.0 / set.len() as f64; set.len()]
            };
            let local: Vec<Vec2> = set.iter().map(|&j| psis[j]).collect();
            dz_star.push(combine(&local, &weights)?);
        }

        let mut next = Vec::with_capacity(m);
        for i in 0..m {
            let pos = step_motion(
                &states[i],
                refs[i].map(|r| start[r].pos),
                dz_star[i],
                refs[i].is_none(),
                cfg,
                [noise[i][1], noise[i][2]],
            )?;
            if !(pos.x.is_finite() && pos.y.is_finite()) || !dz_star[i].iter().all(|v| v.is_finite()) {
                return Err(FormationError::Divergence { slot, uav: states[i].id });
            }
            next.push(pos);
        }

        let followers: Vec<f64> = (0..m).filter(|&i| refs[i].is_some()).map(|i| u_tot[i]).collect();
        let mean_power_reduction = if followers.is_empty() {
            0.0
        } else {
            followers
                .iter()
                .map(|u| aero::power_saving(*u, &cfg.energy).power_reduction)
                .sum::<f64>()
                / followers.len() as f64
        };

        let mut snap_states = start;
        for i in 0..m {
            snap_states[i].u_max = states[i].u_max;
            snap_states[i].est = RelOffset::from_vec(&dz_star[i]);
            states[i].est = RelOffset::from_vec(&dz_star[i]);
            states[i].pos = next[i];
        }
        slots.push(SlotSnapshot { states: snap_states, leader, refs, u_tot, mean_power_reduction });
    }
    Ok(FormationTrace { slots, final_states: states })
}

/// Mean distance between each follower's offset from its reference and the
/// nearer of the two single-generator optima `(+-x*, y*)`.
pub fn v_shape_score(states: &[UavState], p: &AeroParams, kappa: f64) -> f64 {
    v_shape_score_with(states, aero::upwash_optimum(p), kappa)
}

/// [`v_shape_score`] against a precomputed optimum.
pub fn v_shape_score_with(states: &[UavState], opt: RelOffset, kappa: f64) -> f64 {
    let leader = select_leader(states);
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..states.len() {
        if i == leader {
            continue;
        }
        let Some(r) = find_reference(i, states, kappa) else { continue };
        let off = states[i].pos - states[r].pos;
        let dy = off.y - opt.dy;
        let dx = (off.x.abs() - opt.dx).abs();
        total += (dx * dx + dy * dy).sqrt();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Mean noise-free total upwash over the followers of `states`.
pub fn mean_follower_upwash(states: &[UavState], p: &AeroParams) -> f64 {
    let leader = select_leader(states);
    let positions: Vec<Vec2> = states.iter().map(|s| s.pos).collect();
    let n = states.len();
    if n < 2 {
        return 0.0;
    }
    (0..n)
        .filter(|&i| i != leader)
        .map(|i| aero::total_upwash(i, &positions, p))
        .sum::<f64>()
        / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uav(id: usize, x: f64, y: f64) -> UavState {
        UavState { id, pos: Vec2::new(x, y), lambda: 1.0, est: RelOffset::new(0.0, 0.0), u_max: 0.0 }
    }

    fn quiet() -> FormationConfig {
        FormationConfig { sigma_x2: 0.0, sigma_y2: 0.0, sigma_obs2: 0.0, ..Default::default() }
    }

    #[test]
    fn leader_election() {
        let s = vec![uav(0, 0.0, 3.0), uav(1, 0.0, 1.0), uav(2, 0.0, 2.0)];
        assert_eq!(select_leader(&s), 1);
        let s = vec![uav(0, 1.0, 2.0), uav(1, 0.0, 2.0), uav(2, 5.0, 2.0)];
        assert_eq!(select_leader(&s), 0);
    }

    #[test]
    fn weighted_reference_prefers_straight_ahead() {
        let h = 3f64.sqrt() / 2.0;
        let s = vec![uav(0, 0.0, 0.0), uav(1, 0.0, -1.0), uav(2, 0.5, -h)];
        assert_eq!(find_reference(0, &s, 1.0 / 3.0), Some(1));
        let s = vec![uav(0, 0.0, 0.0), uav(1, 3.0, -2.0)];
        assert_eq!(find_reference(0, &s, 1.0 / 3.0), Some(1));
        assert_eq!(find_reference(1, &s, 1.0 / 3.0), None);
    }

    #[test]
    fn neighbours() {
        let s = vec![uav(0, 0.0, 0.0), uav(1, 1.0, 0.0), uav(2, 2.0, 0.0), uav(3, 10.0, 0.0)];
        let mut n = neighbor_set(1, &s);
        assert_eq!(n[0], 1);
        n.sort();
        assert_eq!(n, vec![0, 1, 2]);
        let s3 = &s[..3];
        let mut n = neighbor_set(2, s3);
        n.sort();
        assert_eq!(n, vec![0, 1, 2]);
        assert_eq!(neighbor_set(0, &s[..2]), vec![0, 1]);
    }

    #[test]
    fn observation_identities() {
        let p = AeroParams::default();
        let cfg = quiet();
        let mut s = vec![uav(0, 0.0, 0.0), uav(1, 0.9, 1.0)];
        let u = aero::total_upwash(1, &[s[0].pos, s[1].pos], &p);
        s[1].u_max = u;
        let o = observe_upwash(1, Some(0), &mut s, &p, &cfg, 0.3).unwrap();
        assert_eq!(o.d, 0.0);

        s[1].est = RelOffset::new(0.4, 0.7);
        s[1].u_max = u + 0.25;
        let o = observe_upwash(1, Some(0), &mut s, &p, &cfg, 0.0).unwrap();
        assert!((o.d - o.f.dot(&s[1].est.to_vec()) - 0.25).abs() < 1e-15);

        let err = observe_upwash(0, None, &mut s, &p, &cfg, 0.0);
        assert!(matches!(err, Err(FormationError::Contract(_))));
    }

    #[test]
    fn u_max_updates_before_innovation() {
        let p = AeroParams::default();
        let mut s = vec![uav(0, 0.0, 0.0), uav(1, 0.9, 1.0)];
        s[1].u_max = -1.0;
        let o = observe_upwash(1, Some(0), &mut s, &p, &quiet(), 0.0).unwrap();
        assert_eq!(s[1].u_max, o.u_tot);
        assert_eq!(o.d, 0.0);
    }

    #[test]
    fn adapt_cases() {
        let cfg = FormationConfig { step: 2e-3, ..Default::default() };
        let z = RelOffset::new(0.3, 0.4);
        let o = Observation { d: 5.0, f: Vec2::zeros(), u_tot: 0.0 };
        assert_eq!(adapt(z, Some(&o), &cfg), z.to_vec());
        let f = Vec2::new(1.0, 2.0);
        let o = Observation { d: f.dot(&z.to_vec()), f, u_tot: 0.0 };
        assert_eq!(adapt(z, Some(&o), &cfg), z.to_vec());
        let o = Observation { d: 1.0, f: Vec2::new(1.0, 1.0), u_tot: 0.0 };
        let psi = adapt(RelOffset::new(0.0, 0.0), Some(&o), &cfg);
        assert!((psi - Vec2::new(0.002, 0.002)).norm() < 1e-18);
        assert_eq!(adapt(z, None, &cfg), z.to_vec());
    }

    #[test]
    fn combine_cases() {
        let v = Vec2::new(0.7, -0.2);
        let third = [1.0 / 3.0; 3];
        assert!((combine(&[v, v, v], &third).unwrap() - v).norm() < 1e-15);
        let psis = [Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(0.0, 3.0)];
        assert_eq!(combine(&psis, &[1.0, 0.0, 0.0]).unwrap(), psis[0]);
        assert!((combine(&psis, &third).unwrap() - Vec2::new(1.0, 1.0)).norm() < 1e-15);
        assert!(combine(&psis, &[0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn motion_cases() {
        let cfg = quiet();
        let me = UavState { lambda: -1.0, ..uav(1, 2.0, 5.0) };
        let dz = Vec2::new(0.9, 1.0);
        let r = Some(Vec2::new(1.0, 3.0));
        let zero = FormationConfig { theta_mix: 1e-300, ..cfg.clone() };
        let p = step_motion(&me, r, dz, false, &zero, [0.0; 2]).unwrap();
        assert!((p - Vec2::new(0.1, 4.0 - 0.25)).norm() < 1e-12);
        let one = FormationConfig { theta_mix: 1.0 - 1e-16, ..cfg.clone() };
        let p = step_motion(&me, r, dz, false, &one, [0.0; 2]).unwrap();
        assert!((p - Vec2::new(2.0, 4.75)).norm() < 1e-12);
        let p = step_motion(&me, None, dz, true, &cfg, [0.0; 2]).unwrap();
        assert_eq!(p, Vec2::new(2.0, 4.75));
        assert!(step_motion(&me, None, dz, false, &cfg, [0.0; 2]).is_err());
    }

    #[test]
    fn single_uav_advects() {
        let cfg = FormationConfig { m: 1, ..quiet() };
        let p = AeroParams::default();
        let tr = run_formation(&cfg, &p, vec![uav(0, 1.0, 2.0)], 20, 3).unwrap();
        assert!((tr.final_states[0].pos - Vec2::new(1.0, 2.0 - 5.0)).norm() < 1e-12);
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = FormationConfig::default();
        let p = AeroParams::default();
        let init = init_states(&cfg, &p, Vec2::zeros(), 5);
        let a = run_formation(&cfg, &p, init.clone(), 40, 5).unwrap();
        let b = run_formation(&cfg, &p, init, 40, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.slots.len(), 40);
    }

    #[test]
    fn init_layout_respects_box_and_spacing() {
        let cfg = FormationConfig { m: 19, ..Default::default() };
        let p = AeroParams::default();
        let s = init_states(&cfg, &p, Vec2::new(10.0, 20.0), 8);
        for a in &s {
            assert!((a.pos.x - 10.0).abs() <= 19.0 / 4.0);
            assert!(a.pos.y >= 20.0 && a.pos.y <= 20.0 + 9.5);
            assert!(a.lambda == 1.0 || a.lambda == -1.0);
            for b in &s {
                if a.id != b.id {
                    assert!((a.pos - b.pos).norm() >= 0.2);
                }
            }
        }
    }

    #[test]
    fn trace_invariants() {
        let cfg = FormationConfig::default();
        let p = AeroParams::default();
        let init = init_states(&cfg, &p, Vec2::zeros(), 11);
        let tr = run_formation(&cfg, &p, init, 100, 11).unwrap();
        let mut prev_umax = vec![f64::NEG_INFINITY; cfg.m];
        for snap in &tr.slots {
            let min_y = snap.states.iter().map(|s| s.pos.y).fold(f64::INFINITY, f64::min);
            assert_eq!(snap.states[snap.leader].pos.y, min_y);
            for (i, s) in snap.states.iter().enumerate() {
                if i != snap.leader {
                    assert!(snap.refs[i].is_some());
                    assert!(s.u_max >= prev_umax[i]);
                    prev_umax[i] = s.u_max;
                }
            }
        }
    }

    #[test]
    fn score_is_zero_for_ideal_v() {
        let p = AeroParams::default();
        let o = aero::upwash_optimum(&p);
        let mut s = vec![uav(0, 0.0, 0.0)];
        for k in 1..4 {
            let kf = k as f64;
            s.push(uav(2 * k - 1, kf * o.dx, kf * o.dy));
            s.push(uav(2 * k, -kf * o.dx, kf * o.dy));
        }
        s.sort_by_key(|u| u.id);
        assert!(v_shape_score(&s, &p, 1.0 / 3.0) < 1e-12);
        let cloud = vec![uav(0, 0.0, 0.0), uav(1, 3.0, 0.2), uav(2, -1.0, 4.0)];
        assert!(v_shape_score(&cloud, &p, 1.0 / 3.0) > 0.0);
    }

    #[test]
    fn noise_free_follower_contracts() {
        let cfg = FormationConfig { m: 2, ..quiet() };
        let p = AeroParams::default();
        let opt = aero::upwash_optimum(&p);
        let init = vec![uav(0, 0.0, 0.0), UavState { est: cfg.init_est, ..uav(1, 2.5, 3.0) }];
        let tr = run_formation(&cfg, &p, init, 200, 0).unwrap();
        let err: Vec<f64> = tr
            .slots
            .iter()
            .map(|s| v_shape_score_with(&s.states, opt, cfg.kappa))
            .collect();
        let win: Vec<f64> = err.chunks(20).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        for w in win.windows(2).skip(1) {
            assert!(w[1] <= w[0] + 1e-12, "{win:?}");
        }
    }

    proptest! {
        #[test]
        fn combine_stays_in_hull(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
                                 w0 in 0.0f64..1.0, w1 in 0.0f64..1.0) {
            let t = w0 + w1 + 1.0;
            let w = [w0 / t, w1 / t, 1.0 / t];
            let psis = [Vec2::new(a, b), Vec2::new(b, c), Vec2::new(c, a)];
            let out = combine(&psis, &w).unwrap();
            let lo = a.min(b).min(c) - 1e-12;
            let hi = a.max(b).max(c) + 1e-12;
            prop_assert!(out.x >= lo && out.x <= hi && out.y >= lo && out.y <= hi);
        }

        #[test]
        fn neighbour_set_matches_exhaustive(seed in 0u64..200) {
            let cfg = FormationConfig { m: 12, ..Default::default() };
            let s = init_states(&cfg, &AeroParams::default(), Vec2::zeros(), seed);
            for i in 0..s.len() {
                let set = neighbor_set(i, &s);
                let far: f64 = set[1..].iter().map(|&j| (s[j].pos - s[i].pos).norm()).fold(0.0, f64::max);
                for j in 0..s.len() {
                    if !set.contains(&j) {
                        prop_assert!((s[j].pos - s[i].pos).norm() >= far);
                    }
                }
            }
        }
    }
}
