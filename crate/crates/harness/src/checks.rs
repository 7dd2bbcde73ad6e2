//! Fast invariant suite behind `selftest`.

use std::time::Instant;

use isacform::aero::{self, AeroParams, RelOffset};
use isacform::beamform::reconstruct_rank1;
use isacform::conic::{self, ConicProblem, LinearFunctional, Relation, SolveStatus, SolverOptions, SymCoeff};
use isacform::control::{self, ControlModel, DEFAULT_MAX_ITER, DEFAULT_TOL};
use isacform::radio::{self, ArrayGeometry, CMat, CVec, ChannelConst};
use isacform::units;
use isacform::{Vec2, Vec3};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Perturbs the analytic gradient before comparing it with finite
    /// differences; the gradient check must then fail.
    pub mutate_gradient: bool,
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Check {
    let t = Instant::now();
    let (passed, detail) = f();
    Check { name, passed, detail, seconds: t.elapsed().as_secs_f64() }
}

pub fn run_selftest(opts: SelftestOptions) -> Vec<Check> {
    vec![
        timed("upwash gradient vs finite differences", || gradient_check(opts.mutate_gradient, 200)),
        timed("control DARE with R = 0, B = I gives S = Q", dare_identity),
        timed("scalar filtering DARE closed form", scalar_filter),
        timed("rate/cost trade-off round trip", tradeoff_round_trip),
        timed("rank-one reconstruction invariance", || reconstruction(20)),
        timed("conic solver on eigenvalue instances", conic_micro),
        timed("dB conversions round trip", db_round_trip),
    ]
}

/// Worst relative error between the analytic gradient and central
/// differences over random layouts.
pub fn gradient_error(mutate: bool, trials: usize, seed: u64) -> f64 {
    let p = AeroParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let m = rng.random_range(1..8);
        let mut others = vec![RelOffset::new(0.0, 0.0)];
        for _ in 1..m {
            others.push(RelOffset::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..0.5)));
        }
        let o = RelOffset::new(rng.random_range(-4.0..4.0), rng.random_range(-1.0..4.0));
        let lambda = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut analytic = aero::upwash_gradient(o, lambda, &others, &p);
        if mutate {
            analytic *= 1.0 + 1e-3;
        }
        let total = |o: RelOffset| others.iter().map(|g| aero::avg_upwash(o - *g, &p)).sum::<f64>();
        let h = 1e-6;
        let gx = (total(RelOffset::new(o.dx + h, o.dy)) - total(RelOffset::new(o.dx - h, o.dy))) / (2.0 * h);
        let gy = (total(RelOffset::new(o.dx, o.dy + h)) - total(RelOffset::new(o.dx, o.dy - h))) / (2.0 * h);
        let numeric = Vec2::new(lambda * gx, gy);
        worst = worst.max((analytic - numeric).norm() / analytic.norm().max(1e-3));
    }
    worst
}

fn gradient_check(mutate: bool, trials: usize) -> (bool, String) {
    let worst = gradient_error(mutate, trials, 2024);
    (worst <= 1e-5, format!("worst relative error {worst:.3e} over {trials} layouts"))
}

fn dare_identity() -> (bool, String) {
    let model = ControlModel::identity(50, 0.01, 0.001);
    match control::solve_dare_s(&model, DEFAULT_TOL, DEFAULT_MAX_ITER) {
        Ok(s) => {
            let err = (&s.value - &model.q).amax();
            (err == 0.0, format!("max |S - Q| = {err:e}"))
        }
        Err(e) => (false, e.to_string()),
    }
}

/// Positive root of `P^2 - sv P - sv sw = 0`, the filtering fixed point with
/// `A = G = 1`.
pub fn scalar_filter_root(sv: f64, sw: f64) -> f64 {
    (sv + (sv * sv + 4.0 * sv * sw).sqrt()) / 2.0
}

fn scalar_filter() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for (sv, sw) in [(0.01, 0.001), (1.0, 1.0), (0.2, 3.0), (5.0, 0.05)] {
        let model = ControlModel::identity(1, sv, sw);
        match control::solve_dare_p(&model, 1e-14, DEFAULT_MAX_ITER) {
            Ok(f) => worst = worst.max((f.p[(0, 0)] - scalar_filter_root(sv, sw)).abs()),
            Err(e) => return (false, e.to_string()),
        }
    }
    (worst <= 1e-10, format!("max |P - root| = {worst:.3e}"))
}

fn tradeoff_round_trip() -> (bool, String) {
    let d = match control::derive_lqr_terms(&ControlModel::identity(50, 0.01, 0.001), DEFAULT_TOL) {
        Ok(d) => d,
        Err(e) => return (false, e.to_string()),
    };
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let l = d.l_min * (1.0 + 10f64.powf(-3.0 + 6.0 * i as f64 / 19.0));
        let back = control::min_rate_for_cost(l, &d).and_then(|r| control::optimal_cost_for_rate(r, &d));
        match back {
            Ok(b) => worst = worst.max((b - l).abs() / l),
            Err(e) => return (false, e.to_string()),
        }
    }
    (worst <= 1e-9, format!("worst relative error {worst:.3e}"))
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, scale: f64) -> CMat {
    let f = CMat::from_fn(n, rank, |_, _| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&f * f.adjoint()).scale(scale)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Worst invariance error, worst rank ratio and most negative sensing
/// eigenvalue of rank-one reconstruction over random inputs.
pub fn reconstruction_errors(trials: usize, seed: u64) -> Result<(f64, f64, f64), String> {
    let geo = ArrayGeometry::default();
    let cc = ChannelConst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec3> = (0..8)
        .map(|_| Vec3::new(rng.random_range(15.0..85.0), rng.random_range(-140.0..-130.0), 30.0))
        .collect();
    let (mut inv, mut rank, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..trials {
        let k = rng.random_range(1..4);
        let channels: Vec<CVec> = (0..k)
            .map(|_| {
                let q = Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(10.0..100.0), 30.0);
                radio::channel(&q, &geo, &cc).map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        let w_tilde: Vec<CMat> = (0..k)
            .map(|_| {
                let r = rng.random_range(1..6);
                random_psd(&mut rng, geo.n_s, r, 0.05)
            })
            .collect();
        let rc = rng.random_range(1..4);
        let c_tilde = random_psd(&mut rng, geo.n_s, rc, 0.01);
        let out = reconstruct_rank1(&w_tilde, &c_tilde, &channels).map_err(|e| e.to_string())?;
        let before = w_tilde.iter().fold(c_tilde.clone(), |acc, w| acc + w);
        let after = out.total_covariance();
        inv = inv.max(rel(before.trace().re, after.trace().re));
        for (i, h) in channels.iter().enumerate() {
            inv = inv.max(rel(radio::quad_form(h, &w_tilde[i]), h.dotc(&out.w[i]).norm_sqr()));
        }
        for t in &samples {
            let a = radio::steering_vector(t, &geo).map_err(|e| e.to_string())?;
            inv = inv.max(rel(radio::quad_form(&a, &before), radio::quad_form(&a, &after)));
        }
        for w in &out.w {
            let mut sv: Vec<f64> = (w * w.adjoint()).singular_values().iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            rank = rank.max(sv[1] / sv[0]);
        }
        min_eig = min_eig.min(radio::hermitian_min_eigenvalue(&out.c_d));
    }
    Ok((inv, rank, min_eig))
}

fn reconstruction(trials: usize) -> (bool, String) {
    match reconstruction_errors(trials, 77) {
        Ok((inv, rank, eig)) => (
            inv <= 1e-9 && rank <= 1e-6 && eig >= -1e-8,
            format!("invariance {inv:.2e}, rank ratio {rank:.2e}, min eig(C) {eig:.2e}"),
        ),
        Err(e) => (false, e),
    }
}

/// `max <C, X>` subject to `tr X = 1`, `X` PSD; the optimum is `lambda_max(C)`.
pub fn lambda_max_problem(c: &DMatrix<f64>) -> ConicProblem {
    let n = c.nrows();
    let mut p = ConicProblem::new(vec![n], 0);
    p.objective = LinearFunctional::new().block(0, SymCoeff::Dense(-c));
    p.add(LinearFunctional::new().block(0, SymCoeff::Identity(1.0)), Relation::Eq, 1.0);
    p
}

fn conic_micro() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for n in 2..=6 {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let c = (&a + a.transpose()).scale(0.5);
        match conic::solve(&lambda_max_problem(&c), &SolverOptions::default()) {
            Ok(sol) if sol.status == SolveStatus::Optimal => {
                let eig = c.symmetric_eigenvalues().max();
                worst = worst.max((-sol.objective_value - eig).abs());
            }
            Ok(sol) => return (false, format!("n = {n}: status {:?}", sol.status)),
            Err(e) => return (false, e.to_string()),
        }
    }
    (worst <= 1e-6, format!("worst eigenvalue error {worst:.3e}"))
}

fn db_round_trip() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for i in -200..=200 {
        let db = i as f64 * 0.7;
        let x = 10f64.powf(db / 10.0);
        worst = worst.max(rel(units::db_to_linear(units::linear_to_db(x)), x));
        worst = worst.max(rel(units::dbm_to_watts(units::watts_to_dbm(x)), x));
        let scale = db.abs().max(1.0);
        worst = worst.max((units::linear_to_db(units::db_to_linear(db)) - db).abs() / scale);
        worst = worst.max((units::watts_to_dbm(units::dbm_to_watts(db)) - db).abs() / scale);
    }
    (worst <= 1e-12, format!("worst relative error {worst:.3e}"))
}
