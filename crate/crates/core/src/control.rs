//! Steady-state LQG layer of each formation's control loop.
//!
//! The plant is `x[n+1] = A x[n] + B u[n] + v[n]` observed through
//! `y[n] = G x[n] + w[n]`. Two Riccati fixed points define the steady state:
//! the control solution `S` and the filtering solution `P`. From these follow
//! the minimum achievable LQR cost `l_min` and the rate/cost trade-off
//!
//! ```text
//! R_min(l) = h + (n1/2) log2(1 + n1 det(N M)^(1/n1) / (l - l_min))
//! ```
//!
//! whose inverse is [`optimal_cost_for_rate`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix {0} is not symmetric PSD (min eigenvalue {1:e})")]
    NotPsd(&'static str, f64),
    #[error("Riccati iteration did not converge after {iterations} steps (last residual {residual:e})")]
    Divergence { iterations: usize, residual: f64 },
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("det A = 0: intrinsic entropy rate undefined")]
    SingularA,
    #[error("target cost {l_bar} does not exceed the minimum cost {l_min}")]
    Infeasible { l_bar: f64, l_min: f64 },
    #[error("rate {rate} bits does not exceed the intrinsic entropy rate {h} bits")]
    Unstabilizable { rate: f64, h: f64 },
    #[error("closed loop diverged in trial {trial} at slot {slot}")]
    Unstable { trial: usize, slot: usize },
}

/// Linear plant, quadratic cost and Gaussian noise statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Terminal cost; only used by the finite-horizon simulator.
    pub q1: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub sigma_v: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
}

impl ControlModel {
    /// `A = B = G = Q = Q1 = I`, `R = 0`, isotropic noises.
    pub fn identity(n1: usize, sigma_v: f64, sigma_w: f64) -> Self {
        Self::scaled_identity(n1, 1.0, sigma_v, sigma_w)
    }

    /// As [`ControlModel::identity`] with `A = a I`.
    pub fn scaled_identity(n1: usize, a: f64, sigma_v: f64, sigma_w: f64) -> Self {
        let eye = DMatrix::identity(n1, n1);
        Self {
            a: eye.scale(a),
            b: eye.clone(),
            g: eye.clone(),
            q: eye.clone(),
            q1: eye.clone(),
            r: DMatrix::zeros(n1, n1),
            sigma_v: eye.scale(sigma_v),
            sigma_w: eye.scale(sigma_w),
        }
    }

    pub fn n1(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let n1 = self.a.nrows();
        let n2 = self.b.ncols();
        let l = self.g.nrows();
        let shapes = [
            ("A", &self.a, n1, n1),
            ("B", &self.b, n1, n2),
            ("G", &self.g, l, n1),
            ("Q", &self.q, n1, n1),
            ("Q1", &self.q1, n1, n1),
            ("R", &self.r, n2, n2),
            ("Sigma_v", &self.sigma_v, n1, n1),
            ("Sigma_w", &self.sigma_w, l, l),
        ];
        for (name, m, r, c) in shapes {
            if m.shape() != (r, c) {
                return Err(ControlError::Dimension(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(ControlError::Dimension(format!("{name} has non-finite entries")));
            }
        }
        for (name, m) in [
            ("Q", &self.q),
            ("Q1", &self.q1),
            ("R", &self.r),
            ("Sigma_v", &self.sigma_v),
            ("Sigma_w", &self.sigma_w),
        ] {
            let e = sym_min_eigenvalue(m);
            if e < -1e-10 || (m - m.transpose()).amax() > 1e-10 * (1.0 + m.amax()) {
                return Err(ControlError::NotPsd(name, e));
            }
        }
        Ok(())
    }
}

/// A Riccati fixed point with its convergence certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub value: DMatrix<f64>,
    /// Frobenius norm of the last update.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSolution {
    pub p: DMatrix<f64>,
    pub kgain: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Steady-state quantities entering the rate/cost trade-off.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrDerived {
    pub s: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub kgain: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub nmat: DMatrix<f64>,
    /// `log2 |det A|` (bits).
    pub h: f64,
    pub l_min: f64,
    pub n1: usize,
    /// `ln det(N M)`; `-inf` when the product is singular.
    pub logdet_nm: f64,
}

impl LqrDerived {
    /// `det(N M)^(1/n1)`.
    pub fn det_root(&self) -> f64 {
        (self.logdet_nm / self.n1 as f64).exp()
    }
}

pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let s = (m + m.transpose()).scale(0.5);
    s.symmetric_eigenvalues().min()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()).scale(0.5)
}

fn solve_spd_or_lu(m: DMatrix<f64>, rhs: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>, ControlError> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    m.lu().solve(rhs).ok_or(ControlError::Singular(what))
}

/// With `R = 0` and an invertible square `B`, `M = S` holds exactly.
fn fully_actuated(model: &ControlModel) -> bool {
    model.r.amax() == 0.0 && model.b.is_square() && model.b.clone().lu().determinant() != 0.0
}

/// `M = S B (R + B^T S B)^{-1} B^T S`.
pub fn m_matrix(model: &ControlModel, s: &DMatrix<f64>) -> Result<DMatrix<f64>, ControlError> {
    if fully_actuated(model) {
        return Ok(s.clone());
    }
    let bts = model.b.transpose() * s;
    let inner = &model.r + &bts * &model.b;
    let x = solve_spd_or_lu(inner, &bts, "R + B^T S B")?;
    Ok(symmetrize(bts.transpose() * x))
}

/// Control Riccati equation `S = Q + A^T (S - M(S)) A`, iterated from `S = Q`.
pub fn solve_dare_s(model: &ControlModel, tol: f64, max_iter: usize) -> Result<DareSolution, ControlError> {
    model.validate()?;
    let mut s = model.q.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let m = m_matrix(model, &s)?;
        let next = symmetrize(&model.q + model.a.transpose() * (&s - m) * &model.a);
        residual = (&next - &s).norm();
        s = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            return Ok(DareSolution { value: s, residual, iterations: it });
        }
    }
    Err(ControlError::Divergence { iterations: max_iter, residual })
}

fn kalman_gain(model: &ControlModel, p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), ControlError> {
    let innov = &model.g * p * model.g.transpose() + &model.sigma_w;
    let gp = &model.g * p;
    // K^T = innov^{-1} G P
    let kt = solve_spd_or_lu(innov.clone(), &gp, "innovation covariance")?;
    let k = kt.transpose();
    let sigma = symmetrize(p - &k * innov * k.transpose());
    Ok((k, sigma))
}

/// Filtering Riccati equation `P = A Sigma(P) A^T + Sigma_v`, iterated from
/// `P = Sigma_v`, where `Sigma(P)` is the filtered error covariance.
pub fn solve_dare_p(model: &ControlModel, tol: f64, max_iter: usize) -> Result<FilterSolution, ControlError> {
    model.validate()?;
    let mut p = model.sigma_v.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let (_, sigma) = kalman_gain(model, &p)?;
        let next = symmetrize(&model.a * sigma * model.a.transpose() + &model.sigma_v);
        residual = (&next - &p).norm();
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            let (kgain, sigma) = kalman_gain(model, &p)?;
            return Ok(FilterSolution { p, kgain, sigma, residual, iterations: it });
        }
    }
    Err(ControlError::Divergence { iterations: max_iter, residual })
}

fn log_abs_det(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    (0..u.nrows()).map(|i| u[(i, i)].abs().ln()).sum()
}

/// Solves both Riccati equations and assembles the trade-off constants.
pub fn derive_lqr_terms(model: &ControlModel, tol: f64) -> Result<LqrDerived, ControlError> {
    let s = solve_dare_s(model, tol, DEFAULT_MAX_ITER)?.value;
    let f = solve_dare_p(model, tol, DEFAULT_MAX_ITER)?;
    let a = &model.a;
    let m = m_matrix(model, &s)?;
    let nmat = symmetrize(a * &f.sigma * a.transpose() - &f.sigma + &model.sigma_v);
    let log_det_a = log_abs_det(a);
    if !log_det_a.is_finite() {
        return Err(ControlError::SingularA);
    }
    let h = log_det_a / std::f64::consts::LN_2;
    let l_min = (&model.sigma_v * &s).trace() + (&f.sigma * &s * a.transpose() * &m * a).trace();
    let logdet_nm = log_abs_det(&(&nmat * &m));
    Ok(LqrDerived {
        s,
        p: f.p,
        kgain: f.kgain,
        sigma: f.sigma,
        m,
        nmat,
        h,
        l_min,
        n1: model.n1(),
        logdet_nm: if logdet_nm.is_nan() { f64::NEG_INFINITY } else { logdet_nm },
    })
}

/// Minimum average rate (bits per slot) that supports average cost `l_bar`.
pub fn min_rate_for_cost(l_bar: f64, d: &LqrDerived) -> Result<f64, ControlError> {
    if !(l_bar > d.l_min) {
        return Err(ControlError::Infeasible { l_bar, l_min: d.l_min });
    }
    let n1 = d.n1 as f64;
    let ratio = n1 * d.det_root() / (l_bar - d.l_min);
    Ok(d.h + 0.5 * n1 * ratio.ln_1p() / std::f64::consts::LN_2)
}

/// Smallest average cost reachable at average rate `avg_rate` (bits per slot).
pub fn optimal_cost_for_rate(avg_rate: f64, d: &LqrDerived) -> Result<f64, ControlError> {
    if !(avg_rate > d.h) {
        return Err(ControlError::Unstabilizable { rate: avg_rate, h: d.h });
    }
    let n1 = d.n1 as f64;
    let r_nats = std::f64::consts::LN_2 * (avg_rate - d.h);
    Ok(n1 * d.det_root() / (2.0 * r_nats / n1).exp_m1() + d.l_min)
}

/// Steady-state certainty-equivalent feedback `L = (R + B^T S B)^{-1} B^T S A`.
pub fn feedback_gain(model: &ControlModel, s: &DMatrix<f64>) -> Result<DMatrix<f64>, ControlError> {
    let bts = model.b.transpose() * s;
    let inner = &model.r + &bts * &model.b;
    solve_spd_or_lu(inner, &(bts * &model.a), "R + B^T S B")
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m.clone()).symmetric_eigen();
    let d = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

fn gaussian(rng: &mut ChaCha8Rng, root: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(root.ncols(), |_, _| StandardNormal.sample(rng));
    root * z
}

/// Monte-Carlo LQG loop with a rate-limited state estimate.
///
/// The controller applies `u = -L (x_hat + q)` where `x_hat` is the steady
/// Kalman estimate and `q ~ N(0, delta I)` models the distortion of sending
/// the estimate at `rate_budget` bits per slot. `delta` is chosen so that the
/// expected excess cost `delta tr(A^T M A)` equals the trade-off curve's
/// excess `l*(rate) - l_min`. An infinite budget gives `delta = 0`.
///
/// Returns the mean over trials of the time-averaged stage cost, with `Q1`
/// applied to the final state.
pub fn simulate_closed_loop(
    model: &ControlModel,
    d: &LqrDerived,
    rate_budget: f64,
    n_slots: usize,
    n_trials: usize,
    seed: u64,
) -> Result<f64, ControlError> {
    model.validate()?;
    if n_slots == 0 || n_trials == 0 {
        return Err(ControlError::Dimension("n_slots and n_trials must be positive".into()));
    }
    let excess = if rate_budget.is_infinite() {
        0.0
    } else {
        optimal_cost_for_rate(rate_budget, d)? - d.l_min
    };
    let gain_cost = (model.a.transpose() * &d.m * &model.a).trace();
    let delta = if excess > 0.0 && gain_cost > 0.0 { excess / gain_cost } else { 0.0 };

    let l = feedback_gain(model, &d.s)?;
    let root_v = psd_sqrt(&model.sigma_v);
    let root_w = psd_sqrt(&model.sigma_w);
    let root_x0 = psd_sqrt(&d.sigma);
    let n1 = model.n1();
    let q_root = DMatrix::<f64>::identity(n1, n1).scale(delta.sqrt());

    let costs: Vec<Result<f64, ControlError>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            // Start with the estimation error already at its steady covariance.
            let mut x = gaussian(&mut rng, &root_x0);
            let mut x_hat = DVector::zeros(n1);
            let mut total = 0.0;
            for slot in 0..n_slots {
                let q = gaussian(&mut rng, &q_root);
                let u = -(&l * (&x_hat + q));
                total += x.dot(&(&model.q * &x)) + u.dot(&(&model.r * &u));
                x = &model.a * &x + &model.b * &u + gaussian(&mut rng, &root_v);
                let y = &model.g * &x + gaussian(&mut rng, &root_w);
                let pred = &model.a * &x_hat + &model.b * &u;
                x_hat = &pred + &d.kgain * (y - &model.g * &pred);
                if !(x.amax() < 1e12) {
                    return Err(ControlError::Unstable { trial, slot });
                }
            }
            total += x.dot(&(&model.q1 * &x));
            Ok(total / n_slots as f64)
        })
        .collect();
    let mut sum = 0.0;
    for c in costs {
        sum += c?;
    }
    Ok(sum / n_trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(a: f64, b: f64, q: f64, r: f64, sv: f64, sw: f64) -> ControlModel {
        let m = |x: f64| DMatrix::from_element(1, 1, x);
        ControlModel {
            a: m(a),
            b: m(b),
            g: m(1.0),
            q: m(q),
            q1: m(q),
            r: m(r),
            sigma_v: m(sv),
            sigma_w: m(sw),
        }
    }

    fn p_closed_form(sv: f64, sw: f64) -> f64 {
        (sv + (sv * sv + 4.0 * sv * sw).sqrt()) / 2.0
    }

    #[test]
    fn zero_input_cost_gives_s_equal_q() {
        let mut model = ControlModel::identity(4, 0.01, 0.001);
        model.q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let sol = solve_dare_s(&model, DEFAULT_TOL, 10).unwrap();
        assert_eq!(sol.value, model.q);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn scalar_control_riccati() {
        // s = 1 + s - s^2/(1+s)  =>  s^2 - s - 1 = 0
        let model = scalar(1.0, 1.0, 1.0, 1.0, 0.01, 0.001);
        let s = solve_dare_s(&model, 1e-13, DEFAULT_MAX_ITER).unwrap().value[(0, 0)];
        assert!((s - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-10);
    }

    #[test]
    fn noiseless_filter() {
        let model = ControlModel::identity(3, 0.0, 0.001);
        let f = solve_dare_p(&model, DEFAULT_TOL, 100).unwrap();
        assert_eq!(f.p.amax(), 0.0);
        assert_eq!(f.kgain.amax(), 0.0);
        assert_eq!(f.sigma.amax(), 0.0);
    }

    #[test]
    fn scalar_filter_matches_quadratic_root() {
        let model = scalar(1.0, 1.0, 1.0, 0.0, 0.01, 0.001);
        let f = solve_dare_p(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let p = p_closed_form(0.01, 0.001);
        assert!((f.p[(0, 0)] - p).abs() < 1e-10);
        assert!((f.sigma[(0, 0)] - p * 0.001 / (p + 0.001)).abs() < 1e-10);
        assert!((f.kgain[(0, 0)] - p / (p + 0.001)).abs() < 1e-9);
    }

    #[test]
    fn diagonal_model_decouples() {
        let model = ControlModel::identity(50, 0.01, 0.001);
        let d = derive_lqr_terms(&model, DEFAULT_TOL).unwrap();
        let p = p_closed_form(0.01, 0.001);
        assert!((&d.s - DMatrix::<f64>::identity(50, 50)).amax() < 1e-12);
        assert!((&d.m - DMatrix::<f64>::identity(50, 50)).amax() < 1e-12);
        for i in 0..50 {
            for j in 0..50 {
                let expect = if i == j { p } else { 0.0 };
                assert!((d.p[(i, j)] - expect).abs() < 1e-10);
            }
        }
        assert_eq!(d.h, 0.0);
        assert!((&d.nmat - &model.sigma_v).amax() < 1e-15);
        assert!((d.l_min - 50.0 * p).abs() < 1e-8);
        assert!((d.det_root() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn unstable_plant_entropy() {
        let model = ControlModel::scaled_identity(3, 1.05, 0.01, 0.001);
        let d = derive_lqr_terms(&model, DEFAULT_TOL).unwrap();
        assert!((d.h - 3.0 * 1.05f64.log2()).abs() < 1e-12);
        let e = derive_lqr_terms(&ControlModel::scaled_identity(2, 0.0, 0.01, 0.001), DEFAULT_TOL);
        assert_eq!(e.unwrap_err(), ControlError::SingularA);
    }

    #[test]
    fn rate_cost_reference_value() {
        // Independent 50-digit evaluation for the 50-dim paper model at 2 l_min.
        let d = derive_lqr_terms(&ControlModel::identity(50, 0.01, 0.001), DEFAULT_TOL).unwrap();
        let r = min_rate_for_cost(2.0 * d.l_min, &d).unwrap();
        assert!((r - 23.453_940_857_303_344).abs() < 1e-9, "{r}");
        let back = optimal_cost_for_rate(r, &d).unwrap();
        assert!((back / (2.0 * d.l_min) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let d = derive_lqr_terms(&ControlModel::identity(2, 0.01, 0.001), DEFAULT_TOL).unwrap();
        assert!(matches!(min_rate_for_cost(d.l_min, &d), Err(ControlError::Infeasible { .. })));
        assert!(matches!(optimal_cost_for_rate(0.0, &d), Err(ControlError::Unstabilizable { .. })));
        let big = min_rate_for_cost(1e12, &d).unwrap();
        assert!((big - d.h).abs() < 1e-9);
        assert!((optimal_cost_for_rate(1e4, &d).unwrap() - d.l_min).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_models() {
        let mut m = ControlModel::identity(2, 0.01, 0.001);
        m.sigma_v[(0, 0)] = -1.0;
        assert!(matches!(m.validate(), Err(ControlError::NotPsd("Sigma_v", _))));
        let mut m = ControlModel::identity(2, 0.01, 0.001);
        m.b = DMatrix::zeros(3, 2);
        assert!(matches!(m.validate(), Err(ControlError::Dimension(_))));
    }

    #[test]
    fn noiseless_loop_costs_nothing() {
        let model = ControlModel::identity(4, 0.0, 0.001);
        let d = derive_lqr_terms(&model, DEFAULT_TOL).unwrap();
        let c = simulate_closed_loop(&model, &d, f64::INFINITY, 50, 4, 1).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn closed_loop_is_deterministic_and_near_l_min() {
        let model = ControlModel::identity(10, 0.01, 0.001);
        let d = derive_lqr_terms(&model, DEFAULT_TOL).unwrap();
        let a = simulate_closed_loop(&model, &d, f64::INFINITY, 200, 20, 9).unwrap();
        let b = simulate_closed_loop(&model, &d, f64::INFINITY, 200, 20, 9).unwrap();
        assert_eq!(a, b);
        assert!((a / d.l_min - 1.0).abs() < 0.1, "{a} vs {}", d.l_min);
        let rate = min_rate_for_cost(2.0 * d.l_min, &d).unwrap();
        let c = simulate_closed_loop(&model, &d, rate, 200, 20, 9).unwrap();
        assert!((c / (2.0 * d.l_min) - 1.0).abs() < 0.1, "{c}");
    }

    proptest! {
        #[test]
        fn inverse_pair(scale in 1.0001f64..1e3, sv in 1e-3f64..1.0, sw in 1e-4f64..1.0) {
            let d = derive_lqr_terms(&ControlModel::identity(3, sv, sw), DEFAULT_TOL).unwrap();
            let l = d.l_min * scale;
            let r = min_rate_for_cost(l, &d).unwrap();
            let back = optimal_cost_for_rate(r, &d).unwrap();
            prop_assert!((back / l - 1.0).abs() < 1e-9);
        }

        #[test]
        fn cost_decreasing_in_rate(r in 0.01f64..50.0, dr in 1e-3f64..5.0) {
            let d = derive_lqr_terms(&ControlModel::identity(4, 0.01, 0.001), DEFAULT_TOL).unwrap();
            let a = optimal_cost_for_rate(r, &d).unwrap();
            let b = optimal_cost_for_rate(r + dr, &d).unwrap();
            prop_assert!(b < a);
            prop_assert!(b > d.l_min);
        }

        #[test]
        fn riccati_residuals_and_psd(sv in 1e-3f64..1.0, sw in 1e-4f64..1.0, a in 0.5f64..1.2) {
            let model = ControlModel::scaled_identity(3, a, sv, sw);
            let s = solve_dare_s(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().value;
            let m = m_matrix(&model, &s).unwrap();
            let res = (&s - (&model.q + model.a.transpose() * (&s - &m) * &model.a)).norm();
            prop_assert!(res <= 1e-9);
            let f = solve_dare_p(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            prop_assert!(sym_min_eigenvalue(&f.p) >= -1e-10);
            prop_assert!(sym_min_eigenvalue(&f.sigma) >= -1e-10);
            prop_assert!(sym_min_eigenvalue(&s) >= -1e-10);
        }
    }
}
