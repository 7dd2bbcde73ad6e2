//! Control-fair dual-functional beamforming.
//!
//! The design minimises the largest steady-state LQR cost over the
//! formations, subject to a per-slot power budget and a summed beampattern
//! gain towards every sensing sample point. Each formation's cost follows
//! from its average downlink rate through the rate/cost trade-off of
//! [`crate::control`].
//!
//! The solver is a successive convex approximation. At every outer iteration
//! the interference term `log2(interference)` of each rate is replaced by its
//! tangent at the current point, which lower-bounds the rate. The resulting
//! relaxed problem (rank constraints dropped) is solved for the smallest
//! feasible cost `eta` by bisection. Each probe is a max-margin SDP in which
//! the concave `log2(total)` terms are represented by tangent cuts that are
//! refined until the margin is certified. Rank-one beamformers are then
//! recovered from the relaxed covariances without changing any SINR or
//! beampattern gain.
//!
//! Inside the SDPs variables are normalised: `X = W / P_max` and channels are
//! scaled so that `H~ = P_max h h^H / sigma^2`, putting noise at 1.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{
    self, extract_hermitian, herm_outer_coeff, ConicError, ConicProblem, LinearFunctional, Relation, SolveStatus,
    SolverOptions, SymCoeff,
};
use crate::control::{self, LqrDerived};
use crate::radio::{self, ArrayGeometry, BeamformerSet, CMat, CVec, ChannelConst, RadioError};
use crate::Vec3;

const LOG2_E: f64 = std::f64::consts::LOG2_E;
const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintFamily {
    Power,
    Sensing,
    Rate,
}

#[derive(Debug, Error, PartialEq)]
pub enum BeamformError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("eta {eta} does not exceed the minimum cost {l_min}")]
    Domain { eta: f64, l_min: f64 },
    #[error("infeasible: {family:?} constraints cannot be met ({detail})")]
    Infeasible { family: ConstraintFamily, detail: String },
    #[error("degenerate direction: {0}")]
    Degenerate(String),
}

/// Inputs of one beamforming design.
#[derive(Debug, Clone, PartialEq)]
pub struct BfScenario {
    pub geo: ArrayGeometry,
    pub cc: ChannelConst,
    /// Leader positions, indexed `[slot][formation]`.
    pub leaders: Vec<Vec<Vec3>>,
    pub sample_points: Vec<Vec3>,
    /// Sensing threshold (W); each point needs a summed gain of
    /// `gamma_th * d^2` where `d` is its distance to the array.
    pub gamma_th: f64,
    /// Per-slot power budget (W).
    pub p_max: f64,
    /// Steady-state control terms of each formation.
    pub control: Vec<LqrDerived>,
    /// Number of physical slots each design slot stands for in the sensing
    /// sum (1 when the horizon is not subsampled).
    pub slot_weight: f64,
}

impl BfScenario {
    pub fn n_slots(&self) -> usize {
        self.leaders.len()
    }

    pub fn k(&self) -> usize {
        self.control.len()
    }

    pub fn validate(&self) -> Result<(), BeamformError> {
        let bad = |m: String| Err(BeamformError::Scenario(m));
        if self.leaders.is_empty() {
            return bad("at least one slot is required".into());
        }
        if self.control.is_empty() {
            return bad("at least one formation is required".into());
        }
        if let Some(n) = self.leaders.iter().position(|l| l.len() != self.k()) {
            return bad(format!("slot {n} lists {} leaders for {} formations", self.leaders[n].len(), self.k()));
        }
        if self.sample_points.is_empty() {
            return bad("sample_points must be nonempty".into());
        }
        if !(self.gamma_th >= 0.0 && self.p_max > 0.0 && self.slot_weight > 0.0) {
            return bad("gamma_th must be >= 0; p_max and slot_weight > 0".into());
        }
        if !(self.cc.noise_power > 0.0 && self.cc.rho0 > 0.0 && self.cc.bandwidth > 0.0) {
            return bad("channel constants must be positive".into());
        }
        if self.geo.n_s == 0 {
            return bad("n_s must be at least 1".into());
        }
        Ok(())
    }

    /// Physical channels `[slot][formation]`.
    pub fn channels(&self) -> Result<Vec<Vec<CVec>>, BeamformError> {
        self.leaders
            .iter()
            .map(|slot| slot.iter().map(|q| radio::channel(q, &self.geo, &self.cc).map_err(Into::into)).collect())
            .collect()
    }

    /// `gamma_th * d(t_j)^2` for each sample point.
    pub fn sensing_required(&self) -> Vec<f64> {
        self.sample_points
            .iter()
            .map(|t| self.gamma_th * (t - self.geo.gbs_pos).norm_squared())
            .collect()
    }

    fn max_l_min(&self) -> f64 {
        self.control.iter().map(|d| d.l_min).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `W / N`.
    fn rate_scale(&self) -> f64 {
        self.cc.bandwidth / self.n_slots() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfOptions {
    /// Absolute tolerance on eta for bisection and outer convergence.
    pub tol: f64,
    pub max_outer: usize,
    pub max_probes: usize,
    pub max_cut_rounds: usize,
    /// Cuts kept per (formation, slot); the oldest is evicted first.
    pub cut_cap: usize,
    /// Relative tightening of power and sensing rows inside the SDPs.
    pub tighten: f64,
    /// Largest accepted gap (bit) between a cut envelope and its log term.
    pub cut_tol: f64,
    pub solver: SolverOptions,
}

impl Default for BfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_outer: 30,
            max_probes: 60,
            max_cut_rounds: 40,
            cut_cap: 50,
            tighten: 1e-6,
            cut_tol: 1e-6,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub outer_iter: usize,
    pub eta: f64,
    pub probe_count: usize,
    pub cuts_total: usize,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamSolution {
    pub slots: Vec<BeamformerSet>,
    /// Largest LQR cost over the formations.
    pub eta: f64,
    /// Average rate of each formation (bit/s, bit per slot when `W = 1`).
    pub rates: Vec<f64>,
    /// Summed beampattern gain towards each sample point.
    pub gains: Vec<f64>,
    pub iter_log: Vec<IterRecord>,
}

/// Rates, cost and gains of a set of per-slot beamformers.
pub fn evaluate(scn: &BfScenario, slots: &[BeamformerSet]) -> Result<(Vec<f64>, f64, Vec<f64>), BeamformError> {
    let ch = scn.channels()?;
    let scale = scn.rate_scale();
    let rates: Vec<f64> = (0..scn.k())
        .map(|k| {
            scale
                * (0..scn.n_slots())
                    .map(|n| radio::rate(radio::sinr(k, &ch[n], &slots[n], &scn.cc), &ChannelConst { bandwidth: 1.0, ..scn.cc }))
                    .sum::<f64>()
        })
        .collect();
    let eta = eta_of_rates(scn, &rates);
    let mut gains = vec![0.0; scn.sample_points.len()];
    for (j, t) in scn.sample_points.iter().enumerate() {
        for bf in slots {
            gains[j] += scn.slot_weight * radio::beampattern_gain(t, bf, &scn.geo)?;
        }
    }
    Ok((rates, eta, gains))
}

/// `max_k l*(R_k)`; infinite when some rate cannot stabilise its plant.
pub fn eta_of_rates(scn: &BfScenario, rates: &[f64]) -> f64 {
    rates
        .iter()
        .zip(&scn.control)
        .map(|(r, d)| control::optimal_cost_for_rate(*r, d).unwrap_or(f64::INFINITY))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn solution(scn: &BfScenario, slots: Vec<BeamformerSet>, iter_log: Vec<IterRecord>) -> Result<BeamSolution, BeamformError> {
    let (rates, eta, gains) = evaluate(scn, &slots)?;
    Ok(BeamSolution { slots, eta, rates, gains, iter_log })
}

// ---------------------------------------------------------------------------
// Successive convex approximation pieces

/// Tangent of `log2(interference)` at a reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// `log2(e) H_k / interference0`.
    pub d_matrix: CMat,
    /// `log2(interference0)`.
    pub r_hat_lo: f64,
    /// Interference plus noise at the reference point (W).
    pub interf0: f64,
}

/// `sum_{i != k} |h_k^H w_i|^2 + h_k^H C_d h_k + sigma^2`.
pub fn interference(k: usize, channels: &[CVec], bf: &BeamformerSet, cc: &ChannelConst) -> f64 {
    let h = &channels[k];
    bf.w
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, w)| h.dotc(w).norm_sqr())
        .sum::<f64>()
        + radio::quad_form(h, &bf.c_d)
        + cc.noise_power
}

/// Linearises `log2(interference_k)` at `current`.
pub fn sca_linearize(k: usize, channels: &[CVec], current: &BeamformerSet, cc: &ChannelConst) -> Linearization {
    let interf0 = interference(k, channels, current, cc);
    let h = &channels[k];
    Linearization {
        d_matrix: (h * h.adjoint()).scale(LOG2_E / interf0),
        r_hat_lo: interf0.log2(),
        interf0,
    }
}

impl Linearization {
    /// Affine upper bound of `log2(interference_k)` at `bf`.
    pub fn upper_bound(&self, k: usize, channels: &[CVec], bf: &BeamformerSet, cc: &ChannelConst) -> f64 {
        self.r_hat_lo + LOG2_E * (interference(k, channels, bf, cc) - self.interf0) / self.interf0
    }

    /// Concave lower bound of `log2(1 + SINR_k)` at `bf`.
    pub fn rate_lower_bound(&self, k: usize, channels: &[CVec], bf: &BeamformerSet, cc: &ChannelConst) -> f64 {
        let total = interference(k, channels, bf, cc) + channels[k].dotc(&bf.w[k]).norm_sqr();
        total.log2() - self.upper_bound(k, channels, bf, cc)
    }
}

/// Tangent-cut anchors of `log2(total_{k,n})` in normalised units.
#[derive(Debug, Clone, PartialEq)]
pub struct CutSet {
    anchors: Vec<Vec<VecDeque<f64>>>,
    cap: usize,
}

impl CutSet {
    pub fn new(k: usize, n_slots: usize, cap: usize) -> Self {
        Self { anchors: vec![vec![VecDeque::new(); n_slots]; k], cap: cap.max(1) }
    }

    pub fn add(&mut self, k: usize, n: usize, s0: f64) {
        let q = &mut self.anchors[k][n];
        if q.iter().any(|a| (a - s0).abs() <= 1e-12 * s0) {
            return;
        }
        if q.len() == self.cap {
            q.pop_front();
        }
        q.push_back(s0);
    }

    pub fn anchors(&self, k: usize, n: usize) -> impl Iterator<Item = &f64> {
        self.anchors[k][n].iter()
    }

    pub fn total(&self) -> usize {
        self.anchors.iter().flatten().map(|q| q.len()).sum()
    }
}

/// The cut `t <= log2(s0) + (s - s0) / (s0 ln 2)`, which upper-bounds
/// `log2(s)` everywhere.
pub fn cut_value(s0: f64, s: f64) -> f64 {
    s0.log2() + (s - s0) / (s0 * LN_2)
}

/// Normalised per-slot quantities shared by the SDP builders.
struct Normalised {
    /// `sqrt(P_max) h / sigma`, `[slot][formation]`.
    h: Vec<Vec<CVec>>,
    /// Steering vectors of the sample points.
    a: Vec<CVec>,
    /// Required summed gains over `P_max * slot_weight`.
    g: Vec<f64>,
}

impl Normalised {
    fn new(scn: &BfScenario) -> Result<Self, BeamformError> {
        let s = (scn.p_max / scn.cc.noise_power).sqrt();
        let h = scn
            .channels()?
            .into_iter()
            .map(|slot| slot.into_iter().map(|h| h.scale(s)).collect())
            .collect();
        let a = scn
            .sample_points
            .iter()
            .map(|t| radio::steering_vector(t, &scn.geo))
            .collect::<Result<_, _>>()?;
        let g = scn
            .sensing_required()
            .into_iter()
            .map(|r| r / (scn.p_max * scn.slot_weight))
            .collect();
        Ok(Self { h, a, g })
    }
}

/// Normalised covariances of one slot: `x[k]` per formation and `c`.
#[derive(Debug, Clone, PartialEq)]
struct SlotCov {
    x: Vec<CMat>,
    c: CMat,
}

impl SlotCov {
    fn from_physical(bf: &BeamformerSet, p_max: f64) -> Self {
        Self {
            x: bf.w.iter().map(|w| (w * w.adjoint()).unscale(p_max)).collect(),
            c: bf.c_d.unscale(p_max),
        }
    }

    fn total(&self) -> CMat {
        self.x.iter().fold(self.c.clone(), |acc, x| acc + x)
    }
}

fn block_index(k: usize, n: usize, i: usize) -> usize {
    n * (k + 1) + i
}

/// `total_{k,n}` and `interference_{k,n}` in normalised units.
fn totals(h: &CVec, k: usize, cov: &SlotCov) -> (f64, f64) {
    let own = radio::quad_form(h, &cov.x[k]);
    let total = radio::quad_form(h, &cov.total()) + 1.0;
    (total, total - own)
}

/// Lower-bound average rate of formation `k` under anchors `i0[n]`.
fn rate_lb(scale: f64, nrm: &Normalised, i0: &[Vec<f64>], k: usize, covs: &[SlotCov]) -> f64 {
    scale
        * covs
            .iter()
            .enumerate()
            .map(|(n, cov)| {
                let (total, interf) = totals(&nrm.h[n][k], k, cov);
                total.log2() - (i0[k][n].log2() + LOG2_E * (interf - i0[k][n]) / i0[k][n])
            })
            .sum::<f64>()
}

/// Builds the max-margin relaxed problem for a fixed `eta`.
///
/// Variables: the embedded covariances of every formation and of the
/// sensing signal in every slot, `t_{k,n}` (index `k N + n`) and the margin
/// `tau` (last). The objective is `-tau`; the probe is feasible when the
/// optimal margin is nonnegative. Rows, in order: `N` power rows, `J`
/// sensing rows, `K` rate rows, then the tangent cuts.
pub fn build_feasibility(
    scn: &BfScenario,
    eta: f64,
    lin_points: &[BeamformerSet],
    cuts: &CutSet,
) -> Result<ConicProblem, BeamformError> {
    build_with(scn, eta, lin_points, cuts, 0.0)
}

fn anchors_of(scn: &BfScenario, nrm: &Normalised, lin_points: &[BeamformerSet]) -> Vec<Vec<f64>> {
    (0..scn.k())
        .map(|k| {
            (0..scn.n_slots())
                .map(|n| totals(&nrm.h[n][k], k, &SlotCov::from_physical(&lin_points[n], scn.p_max)).1)
                .collect()
        })
        .collect()
}

fn build_with(
    scn: &BfScenario,
    eta: f64,
    lin_points: &[BeamformerSet],
    cuts: &CutSet,
    tighten: f64,
) -> Result<ConicProblem, BeamformError> {
    scn.validate()?;
    let l_min = scn.max_l_min();
    if !(eta > l_min) {
        return Err(BeamformError::Domain { eta, l_min });
    }
    if lin_points.len() != scn.n_slots() {
        return Err(BeamformError::Scenario("one linearisation point per slot is required".into()));
    }
    let nrm = Normalised::new(scn)?;
    let i0 = anchors_of(scn, &nrm, lin_points);
    let (k_n, n_n, dim) = (scn.k(), scn.n_slots(), 2 * scn.geo.n_s);
    let tau = k_n * n_n;
    let mut p = ConicProblem::new(vec![dim; n_n * (k_n + 1)], tau + 1);
    p.objective = LinearFunctional::new().scalar(tau, -1.0);

    for n in 0..n_n {
        let mut f = LinearFunctional::new();
        for i in 0..=k_n {
            f = f.block(block_index(k_n, n, i), SymCoeff::Identity(0.5));
        }
        p.add(f, Relation::Le, 1.0 - tighten);
    }
    for (j, a) in nrm.a.iter().enumerate() {
        let mut f = LinearFunctional::new();
        let coeff = herm_outer_coeff(a, 1.0);
        for n in 0..n_n {
            for i in 0..=k_n {
                f = f.block(block_index(k_n, n, i), coeff.clone());
            }
        }
        p.add(f, Relation::Ge, nrm.g[j] * (1.0 + tighten));
    }
    let scale = scn.rate_scale();
    for k in 0..k_n {
        let rho = control::min_rate_for_cost(eta, &scn.control[k]).map_err(|_| BeamformError::Domain { eta, l_min })?;
        let mut f = LinearFunctional::new().scalar(tau, -1.0);
        let mut rhs = rho;
        for n in 0..n_n {
            let i0 = i0[k][n];
            f = f.scalar(k * n_n + n, scale);
            let coeff = herm_outer_coeff(&nrm.h[n][k], -scale * LOG2_E / i0);
            for i in (0..=k_n).filter(|&i| i != k) {
                f = f.block(block_index(k_n, n, i), coeff.clone());
            }
            // ub = log2(i0) + log2(e) (interf - i0) / i0, with the noise
            // term of interf folded into the constant.
            rhs += scale * (i0.log2() + LOG2_E * (1.0 - i0) / i0);
        }
        p.add(f, Relation::Ge, rhs);
    }
    for k in 0..k_n {
        for n in 0..n_n {
            for &s0 in cuts.anchors(k, n) {
                let coeff = herm_outer_coeff(&nrm.h[n][k], -1.0 / (s0 * LN_2));
                let mut f = LinearFunctional::new().scalar(k * n_n + n, 1.0);
                for i in 0..=k_n {
                    f = f.block(block_index(k_n, n, i), coeff.clone());
                }
                p.add(f, Relation::Le, s0.log2() - 1.0 / LN_2 + 1.0 / (s0 * LN_2));
            }
        }
    }
    Ok(p)
}

struct Probe {
    feasible: bool,
    covs: Option<Vec<SlotCov>>,
}

fn extract_covs(scn: &BfScenario, blocks: &[DMatrix<f64>]) -> Vec<SlotCov> {
    let k_n = scn.k();
    (0..scn.n_slots())
        .map(|n| SlotCov {
            x: (0..k_n).map(|k| extract_hermitian(&blocks[block_index(k_n, n, k)])).collect(),
            c: extract_hermitian(&blocks[block_index(k_n, n, k_n)]),
        })
        .collect()
}

/// Solves the probe at `eta`, refining cuts until the margin sign is
/// certified.
fn probe(
    scn: &BfScenario,
    nrm: &Normalised,
    i0: &[Vec<f64>],
    eta: f64,
    lin_points: &[BeamformerSet],
    cuts: &mut CutSet,
    opts: &BfOptions,
) -> Result<Probe, BeamformError> {
    let scale = scn.rate_scale();
    let rho: Vec<f64> = scn
        .control
        .iter()
        .map(|d| control::min_rate_for_cost(eta, d).unwrap_or(f64::INFINITY))
        .collect();
    for _ in 0..opts.max_cut_rounds {
        let p = build_with(scn, eta, lin_points, cuts, opts.tighten)?;
        let sol = conic::solve(&p, &opts.solver)?;
        match sol.status {
            SolveStatus::Optimal | SolveStatus::MaxIter => {}
            SolveStatus::Infeasible | SolveStatus::Unbounded => {
                return Ok(Probe { feasible: false, covs: None });
            }
        }
        let relaxed = *sol.scalar_values.last().unwrap_or(&f64::NEG_INFINITY);
        let covs = extract_covs(scn, &sol.block_values);
        let margin = (0..scn.k())
            .map(|k| rate_lb(scale, nrm, i0, k, &covs) - rho[k])
            .fold(f64::INFINITY, f64::min);
        if margin >= 0.0 && point_feasible(nrm, &covs) {
            return Ok(Probe { feasible: true, covs: Some(covs) });
        }
        if relaxed < 0.0 && sol.status == SolveStatus::Optimal {
            return Ok(Probe { feasible: false, covs: None });
        }
        let mut added = 0;
        for k in 0..scn.k() {
            for (n, cov) in covs.iter().enumerate() {
                let (total, _) = totals(&nrm.h[n][k], k, cov);
                let t = sol.scalar_values[k * scn.n_slots() + n];
                if t > total.log2() + opts.cut_tol {
                    cuts.add(k, n, total);
                    added += 1;
                }
            }
        }
        // Every log term is matched to within `cut_tol`: the margin is
        // settled up to `W cut_tol`.
        if added == 0 {
            break;
        }
    }
    Ok(Probe { feasible: false, covs: None })
}

/// Power and sensing rows hold at a normalised point.
fn point_feasible(nrm: &Normalised, covs: &[SlotCov]) -> bool {
    let totals: Vec<CMat> = covs.iter().map(SlotCov::total).collect();
    let power = totals.iter().all(|t| t.trace().re <= 1.0);
    let sensing = nrm
        .a
        .iter()
        .zip(&nrm.g)
        .all(|(a, g)| totals.iter().map(|t| radio::quad_form(a, t)).sum::<f64>() >= *g);
    power && sensing
}

/// Rank-one beamformers with the same total covariance and the same
/// `tr(H_k W_k)` for every formation:
/// `w_k = W_k h_k / sqrt(h_k^H W_k h_k)`, `C = sum W_k + C - sum w_k w_k^H`.
pub fn reconstruct_rank1(w_tilde: &[CMat], c_tilde: &CMat, channels: &[CVec]) -> Result<BeamformerSet, BeamformError> {
    if w_tilde.len() != channels.len() {
        return Err(BeamformError::Scenario("one channel per covariance is required".into()));
    }
    let mut w = Vec::with_capacity(w_tilde.len());
    for (k, (wt, h)) in w_tilde.iter().zip(channels).enumerate() {
        let q = radio::quad_form(h, wt);
        if !(q > 0.0) {
            return Err(BeamformError::Degenerate(format!("tr(H W) = {q:e} for formation {k}")));
        }
        w.push((wt * h).unscale(q.sqrt()));
    }
    Ok(finish_rank1(w_tilde, c_tilde, w))
}

fn finish_rank1(w_tilde: &[CMat], c_tilde: &CMat, w: Vec<CVec>) -> BeamformerSet {
    let mut c = c_tilde.clone();
    for (wt, wk) in w_tilde.iter().zip(&w) {
        c += wt - wk * wk.adjoint();
    }
    let c = (&c + c.adjoint()).scale(0.5);
    BeamformerSet { w, c_d: c }
}

/// As [`reconstruct_rank1`], sending zero power to formations whose
/// covariance is orthogonal to their channel.
fn reconstruct_tolerant(w_tilde: &[CMat], c_tilde: &CMat, channels: &[CVec]) -> BeamformerSet {
    let w = w_tilde
        .iter()
        .zip(channels)
        .map(|(wt, h)| {
            let q = radio::quad_form(h, wt);
            if q > 0.0 {
                (wt * h).unscale(q.sqrt())
            } else {
                CVec::zeros(h.len())
            }
        })
        .collect();
    finish_rank1(w_tilde, c_tilde, w)
}

fn to_physical(scn: &BfScenario, covs: &[SlotCov], ch: &[Vec<CVec>]) -> Vec<BeamformerSet> {
    covs.iter()
        .zip(ch)
        .map(|(cov, h)| {
            let x: Vec<CMat> = cov.x.iter().map(|x| x.scale(scn.p_max)).collect();
            reconstruct_tolerant(&x, &cov.c.scale(scn.p_max), h)
        })
        .collect()
}

/// Largest relative violation of the power and sensing constraints.
fn max_violation(scn: &BfScenario, slots: &[BeamformerSet], gains: &[f64]) -> f64 {
    let p = slots
        .iter()
        .map(|bf| (bf.total_power() - scn.p_max) / scn.p_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let s = scn
        .sensing_required()
        .iter()
        .zip(gains)
        .map(|(req, g)| (req - g) / req.max(1e-300))
        .fold(f64::NEG_INFINITY, f64::max);
    p.max(s).max(0.0)
}

/// Identical-power matched filter with a weak isotropic sensing signal,
/// `C_d = eps I` with `eps = 1e-4 P_max / N_s`.
pub fn default_init(scn: &BfScenario) -> Result<Vec<BeamformerSet>, BeamformError> {
    let ch = scn.channels()?;
    let n_s = scn.geo.n_s;
    let eps = 1e-4 * scn.p_max / n_s as f64;
    let per_beam = (scn.p_max - eps * n_s as f64) / scn.k() as f64;
    Ok(ch
        .iter()
        .map(|h| BeamformerSet {
            w: h.iter().map(|hk| hk.scale(per_beam.sqrt() / hk.norm())).collect(),
            c_d: CMat::identity(n_s, n_s).scale(eps),
        })
        .collect())
}

/// Sensing-only design: maximises the common relative margin of the
/// sensing rows under the power budget, ignoring rates. Returns the margin
/// (feasible when nonnegative) and the per-slot sensing covariances (W).
pub fn sensing_precheck(scn: &BfScenario, opts: &BfOptions) -> Result<(f64, Vec<CMat>), BeamformError> {
    scn.validate()?;
    let nrm = Normalised::new(scn)?;
    let (n_n, dim) = (scn.n_slots(), 2 * scn.geo.n_s);
    let active: Vec<usize> = (0..nrm.g.len()).filter(|&j| nrm.g[j] > 0.0).collect();
    if active.is_empty() {
        let c = CMat::identity(scn.geo.n_s, scn.geo.n_s).scale(scn.p_max / scn.geo.n_s as f64);
        return Ok((f64::INFINITY, vec![c; n_n]));
    }
    let mut p = ConicProblem::new(vec![dim; n_n], 1);
    p.objective = LinearFunctional::new().scalar(0, -1.0);
    for n in 0..n_n {
        p.add(LinearFunctional::new().block(n, SymCoeff::Identity(0.5)), Relation::Le, 1.0 - opts.tighten);
    }
    for &j in &active {
        let coeff = herm_outer_coeff(&nrm.a[j], 1.0 / nrm.g[j]);
        let mut f = LinearFunctional::new().scalar(0, -1.0);
        for n in 0..n_n {
            f = f.block(n, coeff.clone());
        }
        p.add(f, Relation::Ge, 1.0 + opts.tighten);
    }
    let sol = conic::solve(&p, &opts.solver)?;
    let covs: Vec<CMat> = sol.block_values.iter().map(|b| extract_hermitian(b).scale(scn.p_max)).collect();
    // Certify on the extracted covariances rather than trusting the solver.
    let margin = active
        .iter()
        .map(|&j| {
            let g: f64 = covs.iter().map(|c| radio::quad_form(&nrm.a[j], c)).sum::<f64>() / scn.p_max;
            g / nrm.g[j] - 1.0
        })
        .fold(f64::INFINITY, f64::min);
    Ok((margin, covs))
}

fn sensing_ok(scn: &BfScenario, gains: &[f64]) -> bool {
    scn.sensing_required().iter().zip(gains).all(|(r, g)| g >= r)
}

/// Runs the SCA loop from `init`.
///
/// If `init` misses a sensing requirement it is blended with the
/// sensing-only design, `(1 - a) init + a C_sense`, with the smallest `a`
/// that meets every requirement, so that every logged iterate is feasible.
pub fn optimize(scn: &BfScenario, init: &[BeamformerSet], opts: &BfOptions) -> Result<BeamSolution, BeamformError> {
    scn.validate()?;
    if init.len() != scn.n_slots() {
        return Err(BeamformError::Scenario("init needs one beamformer set per slot".into()));
    }
    if let Some(n) = init.iter().position(|bf| bf.total_power() > scn.p_max * (1.0 + 1e-9)) {
        return Err(BeamformError::Scenario(format!("init exceeds the power budget in slot {n}")));
    }
    let ch = scn.channels()?;
    let nrm = Normalised::new(scn)?;

    let (margin, sense) = sensing_precheck(scn, opts)?;
    if margin < 0.0 {
        return Err(BeamformError::Infeasible {
            family: ConstraintFamily::Sensing,
            detail: format!("full power reaches only {:.4}% of the weakest requirement", 100.0 * (1.0 + margin)),
        });
    }
    let mut cur: Vec<BeamformerSet> = init.to_vec();
    let (_, _, gains) = evaluate(scn, &cur)?;
    if !sensing_ok(scn, &gains) {
        let a = (1.0 / (1.0 + margin)).min(1.0) * (1.0 + 1e-6);
        let a = a.min(1.0);
        cur = cur
            .iter()
            .zip(&sense)
            .map(|(bf, c)| BeamformerSet {
                w: bf.w.iter().map(|w| w.scale((1.0 - a).sqrt())).collect(),
                c_d: bf.c_d.scale(1.0 - a) + c.scale(a),
            })
            .collect();
    }

    let (_, mut eta_cur, gains) = evaluate(scn, &cur)?;
    let mut log = vec![IterRecord {
        outer_iter: 0,
        eta: eta_cur,
        probe_count: 0,
        cuts_total: 0,
        max_violation: max_violation(scn, &cur, &gains),
    }];
    let lo0 = scn.max_l_min() * (1.0 + 1e-6);

    for outer in 1..=opts.max_outer {
        let i0 = anchors_of(scn, &nrm, &cur);
        let mut cuts = CutSet::new(scn.k(), scn.n_slots(), opts.cut_cap);
        let cur_cov: Vec<SlotCov> = cur.iter().map(|bf| SlotCov::from_physical(bf, scn.p_max)).collect();
        for k in 0..scn.k() {
            for (n, cov) in cur_cov.iter().enumerate() {
                cuts.add(k, n, totals(&nrm.h[n][k], k, cov).0);
            }
        }
        let scale = scn.rate_scale();
        let eta_lb = |covs: &[SlotCov]| -> f64 {
            let r: Vec<f64> = (0..scn.k()).map(|k| rate_lb(scale, &nrm, &i0, k, covs)).collect();
            eta_of_rates(scn, &r)
        };

        let mut lo = lo0;
        let mut hi = if eta_cur.is_finite() { eta_cur } else { lo0 * 1e6 };
        let mut best: Option<Vec<SlotCov>> = None;
        let mut probes = 0;
        let mut last_feasible = true;
        while hi - lo > opts.tol && probes < opts.max_probes {
            let eta = if last_feasible { (hi - opts.tol).max(0.5 * (lo + hi)) } else { 0.5 * (lo + hi) };
            probes += 1;
            let pr = probe(scn, &nrm, &i0, eta, &cur, &mut cuts, opts)?;
            if pr.feasible {
                let covs = pr.covs.expect("feasible probe carries a point");
                hi = eta_lb(&covs).min(eta);
                best = Some(covs);
                last_feasible = true;
            } else {
                lo = eta;
                last_feasible = false;
            }
        }
        // A pass that cannot improve on the current point is logged with an
        // unchanged eta and ends the loop.
        let stalled = |log: &mut Vec<IterRecord>, gains: &[f64]| {
            log.push(IterRecord {
                outer_iter: outer,
                eta: eta_cur,
                probe_count: probes,
                cuts_total: cuts.total(),
                max_violation: max_violation(scn, &cur, gains),
            })
        };
        let Some(best) = best else {
            let (_, _, g) = evaluate(scn, &cur)?;
            stalled(&mut log, &g);
            break;
        };
        let next = to_physical(scn, &best, &ch);
        let (_, eta_next, gains) = evaluate(scn, &next)?;
        if !(eta_next < eta_cur) {
            let (_, _, g) = evaluate(scn, &cur)?;
            stalled(&mut log, &g);
            break;
        }
        let step = eta_cur - eta_next;
        cur = next;
        eta_cur = eta_next;
        log.push(IterRecord {
            outer_iter: outer,
            eta: eta_cur,
            probe_count: probes,
            cuts_total: cuts.total(),
            max_violation: max_violation(scn, &cur, &gains),
        });
        if step <= opts.tol {
            break;
        }
    }
    solution(scn, cur, log)
}

// ---------------------------------------------------------------------------
// Baselines

fn fixed_split(scn: &BfScenario, dirs: impl Fn(usize, &[CVec]) -> Vec<CVec>) -> Result<BeamSolution, BeamformError> {
    scn.validate()?;
    let ch = scn.channels()?;
    let n_s = scn.geo.n_s;
    let per = scn.p_max / scn.k() as f64;
    let slots = ch
        .iter()
        .enumerate()
        .map(|(n, h)| BeamformerSet {
            w: dirs(n, h).into_iter().map(|d| d.scale(per.sqrt() / d.norm())).collect(),
            c_d: CMat::zeros(n_s, n_s),
        })
        .collect();
    solution(scn, slots, Vec::new())
}

/// Equal power on matched-filter beams, no sensing signal.
pub fn baseline_identical_power(scn: &BfScenario) -> Result<BeamSolution, BeamformError> {
    fixed_split(scn, |_, h| h.to_vec())
}

/// Equal power on isotropically random beams, no sensing signal.
pub fn baseline_random(scn: &BfScenario, seed: u64) -> Result<BeamSolution, BeamformError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_s = scn.geo.n_s;
    let draws: Vec<Vec<CVec>> = (0..scn.n_slots())
        .map(|_| {
            (0..scn.k())
                .map(|_| {
                    CVec::from_fn(n_s, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                })
                .collect()
        })
        .collect();
    fixed_split(scn, |n, _| draws[n].clone())
}

/// Water-filling of `p_max` over channels with gains `g` (sum-rate optimal).
pub fn water_fill(gains: &[f64], p_max: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&k| gains[k] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut out = vec![0.0; gains.len()];
    for m in (1..=order.len()).rev() {
        let active = &order[..m];
        let level = (p_max + active.iter().map(|&k| 1.0 / gains[k]).sum::<f64>()) / m as f64;
        if level > 1.0 / gains[active[m - 1]] {
            for &k in active {
                out[k] = level - 1.0 / gains[k];
            }
            return out;
        }
    }
    out
}

/// Zero-forcing directions `V = H (H^H H)^{-1}` with unit-norm columns;
/// matched filter when the channels are linearly dependent.
pub fn zero_forcing_directions(h: &[CVec]) -> Vec<CVec> {
    let n_s = h[0].len();
    let hm = CMat::from_fn(n_s, h.len(), |i, k| h[k][i]);
    let gram = hm.adjoint() * &hm;
    match gram.try_inverse() {
        Some(inv) if h.len() <= n_s => {
            let v = &hm * inv;
            (0..h.len()).map(|k| {
                let c = v.column(k).into_owned();
                c.unscale(c.norm())
            }).collect()
        }
        _ => h.iter().map(|x| x.unscale(x.norm())).collect(),
    }
}

/// Zero-forcing beams with per-slot water-filling over the resulting
/// interference-free gains, no sensing signal. With one formation this is
/// the full-power matched filter.
pub fn baseline_water_filling(scn: &BfScenario) -> Result<BeamSolution, BeamformError> {
    scn.validate()?;
    let ch = scn.channels()?;
    let n_s = scn.geo.n_s;
    let slots = ch
        .iter()
        .map(|h| {
            let dirs = zero_forcing_directions(h);
            let gains: Vec<f64> = dirs
                .iter()
                .zip(h)
                .map(|(d, hk)| hk.dotc(d).norm_sqr() / scn.cc.noise_power)
                .collect();
            let p = water_fill(&gains, scn.p_max);
            BeamformerSet {
                w: dirs.iter().zip(&p).map(|(d, pk)| d.scale(pk.sqrt())).collect(),
                c_d: CMat::zeros(n_s, n_s),
            }
        })
        .collect();
    solution(scn, slots, Vec::new())
}

// ---------------------------------------------------------------------------
// Audit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `P_max - total power` per slot (W).
    pub power_margins: Vec<f64>,
    /// Summed gain minus requirement per sample point.
    pub sensing_margins: Vec<f64>,
    /// Average rate minus the rate needed for the reported eta, per formation.
    pub rate_margins: Vec<f64>,
    /// Second over first singular value of every `w_k w_k^H`.
    pub worst_rank_ratio: f64,
}

impl FeasibilityReport {
    pub fn min_margin(&self) -> f64 {
        self.power_margins
            .iter()
            .chain(&self.sensing_margins)
            .chain(&self.rate_margins)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn binding_family(&self) -> ConstraintFamily {
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let p = min(&self.power_margins);
        let s = min(&self.sensing_margins);
        let r = min(&self.rate_margins);
        if p <= s && p <= r {
            ConstraintFamily::Power
        } else if s <= r {
            ConstraintFamily::Sensing
        } else {
            ConstraintFamily::Rate
        }
    }
}

pub fn check_feasibility(sol: &BeamSolution, scn: &BfScenario) -> Result<FeasibilityReport, BeamformError> {
    let (rates, _, gains) = evaluate(scn, &sol.slots)?;
    let power_margins = sol.slots.iter().map(|bf| scn.p_max - bf.total_power()).collect();
    let sensing_margins = gains.iter().zip(scn.sensing_required()).map(|(g, r)| g - r).collect();
    let rate_margins = rates
        .iter()
        .zip(&scn.control)
        .map(|(r, d)| match control::min_rate_for_cost(sol.eta, d) {
            Ok(need) => r - need,
            Err(_) => f64::NEG_INFINITY,
        })
        .collect();
    let worst_rank_ratio = sol
        .slots
        .iter()
        .flat_map(|bf| bf.w.iter())
        .map(|w| {
            let m = w * w.adjoint();
            let sv = m.singular_values();
            let mut s: Vec<f64> = sv.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            if s.len() < 2 || s[0] == 0.0 {
                0.0
            } else {
                s[1] / s[0]
            }
        })
        .fold(0.0, f64::max);
    Ok(FeasibilityReport { power_margins, sensing_margins, rate_margins, worst_rank_ratio })
}
