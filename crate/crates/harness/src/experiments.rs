//! Experiment drivers behind the CLI subcommands.
//!
//! Each `cmd_*` function runs one study, writes its tables under `out` and
//! returns the [`ExperimentResult`] that is also saved as `<experiment>.json`.
//! The `run_*` functions hold the computation and return plain structs, so
//! tests can inspect results without touching the file system.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use isacform::aero::{self, AeroParams};
use isacform::beamform::{self, BeamSolution, BeamformError, BfOptions, BfScenario, FeasibilityReport};
use isacform::control::{derive_lqr_terms, ControlModel, DEFAULT_TOL};
use isacform::formation::{self, FormationTrace};
use isacform::radio::BeamformerSet;
use isacform::Vec2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{GridSpec, ScenarioDoc};
use crate::output::{self, num, opt_id, opt_num, ExperimentResult, Table, SCHEMA_VERSION};

/// Independent seed for sub-run `stream` of a command seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

fn finish(
    experiment: &str,
    doc: &ScenarioDoc,
    seed: u64,
    extra: Value,
    outputs: Vec<String>,
    summary: Value,
    started: Instant,
    out: &Path,
) -> Result<ExperimentResult> {
    let input_digest = output::digest(&json!({
        "experiment": experiment,
        "scenario": doc,
        "seed": seed,
        "extra": extra,
    }))?;
    let mut outputs = outputs;
    let json_name = format!("{experiment}.json");
    outputs.push(json_name.clone());
    let result = ExperimentResult {
        schema_version: SCHEMA_VERSION,
        experiment: experiment.into(),
        input_digest,
        seed,
        outputs,
        summary,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    output::write_json(&out.join(json_name), &result)?;
    Ok(result)
}

// ---------------------------------------------------------------------------
// Formation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormationSummary {
    pub formation: usize,
    pub m: usize,
    pub seed: u64,
    /// First slot whose layout scores within tolerance.
    pub convergence_slot: Option<usize>,
    pub convergence_time_s: Option<f64>,
    pub final_v_shape_score: f64,
    pub initial_mean_upwash: f64,
    pub final_mean_upwash: f64,
    /// Mean flight-power saving over followers in the last slot (W).
    pub final_mean_power_reduction: f64,
}

#[derive(Debug, Clone)]
pub struct FormationRun {
    pub trace: FormationTrace,
    /// Score of every snapshot followed by the final layout.
    pub scores: Vec<f64>,
    pub upwash: Vec<f64>,
    pub summary: FormationSummary,
}

pub fn run_formation_group(doc: &ScenarioDoc, index: usize, seed: u64) -> Result<FormationRun> {
    let cfg = doc.formation.groups.get(index).context("no such formation group")?;
    let p = &doc.aero;
    let s = derive_seed(seed, index as u64);
    let init = formation::init_states(cfg, p, Vec2::zeros(), s);
    let trace = formation::run_formation(cfg, p, init, doc.formation.n_slots, s)?;
    let opt = aero::upwash_optimum(p);
    let layouts = trace.slots.iter().map(|sn| &sn.states[..]).chain(std::iter::once(&trace.final_states[..]));
    let (scores, upwash): (Vec<f64>, Vec<f64>) = layouts
        .map(|st| (formation::v_shape_score_with(st, opt, cfg.kappa), formation::mean_follower_upwash(st, p)))
        .unzip();
    let convergence_slot = scores.iter().position(|&s| s <= doc.formation.tolerance);
    let summary = FormationSummary {
        formation: index,
        m: cfg.m,
        seed: s,
        convergence_slot,
        convergence_time_s: convergence_slot.map(|n| n as f64 * cfg.dt),
        final_v_shape_score: *scores.last().expect("at least the final layout"),
        initial_mean_upwash: upwash[0],
        final_mean_upwash: *upwash.last().expect("at least the final layout"),
        final_mean_power_reduction: trace.slots.last().map_or(0.0, |s| s.mean_power_reduction),
    };
    Ok(FormationRun { trace, scores, upwash, summary })
}

fn trace_table(index: usize, trace: &FormationTrace) -> Result<Table> {
    let mut t = Table::new(
        &format!("formation_{index}_trace"),
        &["slot", "uav_id", "x", "y", "leader_flag", "ref_id", "u_tot", "u_max", "dx_est", "dy_est"],
    )?;
    for (slot, snap) in trace.slots.iter().enumerate() {
        for (i, st) in snap.states.iter().enumerate() {
            t.row([
                slot.to_string(),
                st.id.to_string(),
                num(st.pos.x),
                num(st.pos.y),
                u8::from(i == snap.leader).to_string(),
                opt_id(snap.refs[i]),
                num(snap.u_tot[i]),
                num(st.u_max),
                num(st.est.dx),
                num(st.est.dy),
            ])?;
        }
    }
    Ok(t)
}

/// Total upwash of a layout over its bounding box grown by `margin`.
fn field_table(name: &str, generators: &[Vec2], p: &AeroParams, step: f64, margin: f64) -> Result<Table> {
    let lo = generators.iter().fold(Vec2::repeat(f64::INFINITY), |a, g| a.inf(g)) - Vec2::repeat(margin);
    let hi = generators.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, g| a.sup(g)) + Vec2::repeat(margin);
    let nx = ((hi.x - lo.x) / step).round() as usize + 1;
    let ny = ((hi.y - lo.y) / step).round() as usize + 1;
    let mut t = Table::new(name, &["x", "y", "upwash"])?;
    for iy in 0..ny {
        for ix in 0..nx {
            let q = Vec2::new(lo.x + ix as f64 * step, lo.y + iy as f64 * step);
            t.row([num(q.x), num(q.y), num(aero::upwash_at(&q, generators, p))])?;
        }
    }
    Ok(t)
}

pub fn cmd_formation(doc: &ScenarioDoc, seed: u64, out: &Path) -> Result<ExperimentResult> {
    let started = Instant::now();
    let runs: Vec<FormationRun> = (0..doc.formation.groups.len())
        .into_par_iter()
        .map(|i| run_formation_group(doc, i, seed))
        .collect::<Result<_>>()?;
    let mut outputs = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        outputs.push(trace_table(i, &run.trace)?.save(out)?);
        let dt = doc.formation.groups[i].dt;
        let mut conv = Table::new(
            &format!("formation_{i}_convergence"),
            &["slot", "time_s", "v_shape_score", "mean_follower_upwash", "mean_power_reduction"],
        )?;
        for (n, (s, u)) in run.scores.iter().zip(&run.upwash).enumerate() {
            let power = run.trace.slots.get(n).map(|sn| sn.mean_power_reduction);
            conv.row([n.to_string(), num(n as f64 * dt), num(*s), num(*u), opt_num(power)])?;
        }
        outputs.push(conv.save(out)?);
        let positions: Vec<Vec2> = run.trace.final_states.iter().map(|s| s.pos).collect();
        let field = field_table(&format!("formation_{i}_field"), &positions, &doc.aero, doc.formation.field_step, 2.0)?;
        outputs.push(field.save(out)?);
    }
    let summaries: Vec<&FormationSummary> = runs.iter().map(|r| &r.summary).collect();
    finish("formation", doc, seed, Value::Null, outputs, json!({ "formations": summaries }), started, out)
}

// ---------------------------------------------------------------------------
// Upwash map

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpwashMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major over `ys`, then `xs`.
    pub values: Vec<f64>,
    pub argmax: [f64; 3],
}

pub fn run_upwash_map(generators: &[Vec2], p: &AeroParams, grid: &GridSpec) -> UpwashMap {
    let (xs, ys) = (grid.xs(), grid.ys());
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    let mut argmax = [0.0, 0.0, f64::NEG_INFINITY];
    for &y in &ys {
        for &x in &xs {
            let v = aero::upwash_at(&Vec2::new(x, y), generators, p);
            // Ties between mirror images go to the larger x.
            if v > argmax[2] || (v == argmax[2] && x > argmax[0]) {
                argmax = [x, y, v];
            }
            values.push(v);
        }
    }
    UpwashMap { xs, ys, values, argmax }
}

pub fn cmd_upwash_map(doc: &ScenarioDoc, grid: Option<&GridSpec>, out: &Path) -> Result<ExperimentResult> {
    let started = Instant::now();
    let grid = match grid {
        Some(g) => *g,
        None => GridSpec::parse(&doc.upwash_map.grid)?,
    };
    let gens: Vec<Vec2> = doc.upwash_map.generators.iter().map(|g| Vec2::new(g[0], g[1])).collect();
    anyhow::ensure!(!gens.is_empty(), "upwash_map.generators must not be empty");
    let map = run_upwash_map(&gens, &doc.aero, &grid);
    let mut t = Table::new("upwash_map", &["kind", "x", "y", "upwash"])?;
    let mut it = map.values.iter();
    for &y in &map.ys {
        for &x in &map.xs {
            t.row(["cell".to_string(), num(x), num(y), num(*it.next().expect("one value per cell"))])?;
        }
    }
    t.row(["argmax".to_string(), num(map.argmax[0]), num(map.argmax[1]), num(map.argmax[2])])?;
    let mut summary = json!({
        "grid": grid,
        "argmax": { "x": map.argmax[0], "y": map.argmax[1], "upwash": map.argmax[2] },
    });
    if gens.len() == 1 {
        let opt = aero::upwash_optimum(&doc.aero);
        let v = aero::avg_upwash(opt, &doc.aero);
        for sx in [-1.0, 1.0] {
            let q = gens[0] + Vec2::new(sx * opt.dx, opt.dy);
            t.row(["optimum".to_string(), num(q.x), num(q.y), num(v)])?;
        }
        summary["optimum"] = json!({ "dx": opt.dx, "dy": opt.dy, "upwash": v });
    }
    let outputs = vec![t.save(out)?];
    finish("upwash-map", doc, 0, json!({ "grid": grid }), outputs, summary, started, out)
}

// ---------------------------------------------------------------------------
// Beamforming

#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub scheme: String,
    pub seed: Option<u64>,
    pub solution: BeamSolution,
    pub report: FeasibilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub p_max_dbm: f64,
    pub gamma_th_dbm: f64,
    pub scheme: String,
    pub seed: Option<u64>,
    /// `None` when the design is infeasible.
    pub eta: Option<f64>,
    /// Binding family of an infeasible design.
    pub infeasible: Option<String>,
    pub precheck_margin: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BeamformRun {
    pub scenario: BfScenario,
    pub proposed: SchemeResult,
    pub baselines: Vec<SchemeResult>,
    pub p_max_sweep: Vec<SweepPoint>,
    pub gamma_sweep: Vec<SweepPoint>,
    pub proposed_s: f64,
    pub total_s: f64,
}

pub fn bf_options(doc: &ScenarioDoc) -> BfOptions {
    BfOptions { tol: doc.beamform.tol, max_outer: doc.beamform.max_outer, ..Default::default() }
}

fn scheme(name: &str, seed: Option<u64>, scn: &BfScenario, solution: BeamSolution) -> Result<SchemeResult> {
    let report = beamform::check_feasibility(&solution, scn)?;
    Ok(SchemeResult { scheme: name.into(), seed, solution, report })
}

fn solve_proposed(scn: &BfScenario, opts: &BfOptions) -> Result<BeamSolution, BeamformError> {
    let init = beamform::default_init(scn)?;
    beamform::optimize(scn, &init, opts)
}

fn baselines(scn: &BfScenario, seeds: &[u64]) -> Result<Vec<SchemeResult>> {
    let mut out = vec![
        scheme("water_filling", None, scn, beamform::baseline_water_filling(scn)?)?,
        scheme("identical_power", None, scn, beamform::baseline_identical_power(scn)?)?,
    ];
    for &s in seeds {
        out.push(scheme("random", Some(s), scn, beamform::baseline_random(scn, s)?)?);
    }
    Ok(out)
}

fn sweep_point(p_dbm: f64, g_dbm: f64, name: &str, seed: Option<u64>, r: Result<f64, BeamformError>) -> Result<SweepPoint> {
    let (eta, infeasible) = match r {
        Ok(eta) => (Some(eta), None),
        Err(BeamformError::Infeasible { family, .. }) => (None, Some(format!("{family:?}").to_lowercase())),
        Err(e) => return Err(e.into()),
    };
    Ok(SweepPoint {
        p_max_dbm: p_dbm,
        gamma_th_dbm: g_dbm,
        scheme: name.into(),
        seed,
        eta,
        infeasible,
        precheck_margin: None,
    })
}

pub fn run_beamform(doc: &ScenarioDoc, seed: u64) -> Result<BeamformRun> {
    let started = Instant::now();
    let res = doc.resolve()?;
    let b = &doc.beamform;
    let opts = bf_options(doc);
    let seeds: Vec<u64> = (0..b.random_seeds as u64).map(|i| derive_seed(seed, i)).collect();

    let scn = doc.bf_scenario(&res, b.p_max_dbm, b.gamma_th_dbm);
    let sol = solve_proposed(&scn, &opts).context("proposed design")?;
    let proposed = scheme("proposed", None, &scn, sol)?;
    let proposed_s = started.elapsed().as_secs_f64();
    let base = baselines(&scn, &seeds)?;

    let p_max_sweep: Vec<Vec<SweepPoint>> = b
        .p_max_sweep_dbm
        .par_iter()
        .map(|&p| -> Result<Vec<SweepPoint>> {
            let g = b.gamma_th_dbm;
            let (s, reuse) = if p == b.p_max_dbm {
                (scn.clone(), Some(proposed.solution.eta))
            } else {
                (doc.bf_scenario(&res, p, g), None)
            };
            let eta = match reuse {
                Some(e) => Ok(e),
                None => solve_proposed(&s, &opts).map(|x| x.eta),
            };
            let mut pts = vec![sweep_point(p, g, "proposed", None, eta)?];
            for r in baselines(&s, &seeds)? {
                pts.push(sweep_point(p, g, &r.scheme, r.seed, Ok(r.solution.eta))?);
            }
            Ok(pts)
        })
        .collect::<Result<_>>()?;

    let gamma_sweep: Vec<SweepPoint> = b
        .gamma_sweep_dbm
        .par_iter()
        .map(|&g| -> Result<SweepPoint> {
            let p = b.gamma_sweep_p_max_dbm;
            let s = doc.bf_scenario(&res, p, g);
            let (margin, _) = beamform::sensing_precheck(&s, &opts)?;
            let eta = if p == b.p_max_dbm && g == b.gamma_th_dbm {
                Ok(proposed.solution.eta)
            } else {
                solve_proposed(&s, &opts).map(|x| x.eta)
            };
            let mut pt = sweep_point(p, g, "proposed", None, eta)?;
            pt.precheck_margin = Some(margin);
            Ok(pt)
        })
        .collect::<Result<_>>()?;

    Ok(BeamformRun {
        scenario: scn,
        proposed,
        baselines: base,
        p_max_sweep: p_max_sweep.into_iter().flatten().collect(),
        gamma_sweep,
        proposed_s,
        total_s: started.elapsed().as_secs_f64(),
    })
}

fn interleave<'a>(it: impl Iterator<Item = &'a nalgebra::Complex<f64>>) -> Vec<f64> {
    it.flat_map(|c| [c.re, c.im]).collect()
}

/// JSON form of a solution. Complex vectors and matrices are flattened to
/// `[re0, im0, re1, im1, ...]`; matrices are stored row-major.
pub fn solution_json(sol: &BeamSolution) -> Value {
    let slots: Vec<Value> = sol
        .slots
        .iter()
        .map(|bf: &BeamformerSet| {
            let c = &bf.c_d;
            let rows: Vec<_> = (0..c.nrows()).flat_map(|i| (0..c.ncols()).map(move |j| c[(i, j)])).collect();
            json!({
                "w": bf.w.iter().map(|w| interleave(w.iter())).collect::<Vec<_>>(),
                "c_d": { "rows": c.nrows(), "cols": c.ncols(), "data": interleave(rows.iter()) },
            })
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "eta": sol.eta,
        "rates": sol.rates,
        "gains": sol.gains,
        "slots": slots,
    })
}

fn binding(r: &FeasibilityReport) -> String {
    format!("{:?}", r.binding_family()).to_lowercase()
}

fn fmin(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn fmax(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn cmd_beamform(doc: &ScenarioDoc, seed: u64, out: &Path) -> Result<ExperimentResult> {
    let started = Instant::now();
    let run = run_beamform(doc, seed)?;
    let mut outputs = Vec::new();

    let mut cmp = Table::new(
        "beamform_compare",
        &["scheme", "seed", "eta", "rate_min", "rate_max", "power_margin", "sensing_margin", "binding"],
    )?;
    for r in std::iter::once(&run.proposed).chain(&run.baselines) {
        cmp.row([
            r.scheme.clone(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            num(r.solution.eta),
            num(fmin(&r.solution.rates)),
            num(fmax(&r.solution.rates)),
            num(fmin(&r.report.power_margins)),
            num(fmin(&r.report.sensing_margins)),
            binding(&r.report),
        ])?;
    }
    outputs.push(cmp.save(out)?);

    let mut it = Table::new("beamform_iterations", &["outer_iter", "eta", "probe_count", "cuts_total", "max_violation"])?;
    for rec in &run.proposed.solution.iter_log {
        it.row([
            rec.outer_iter.to_string(),
            num(rec.eta),
            rec.probe_count.to_string(),
            rec.cuts_total.to_string(),
            num(rec.max_violation),
        ])?;
    }
    outputs.push(it.save(out)?);

    let req = run.scenario.sensing_required();
    let mut gains = Table::new(
        "beamform_gains",
        &["sample", "x", "y", "z", "required", "proposed", "water_filling", "identical_power"],
    )?;
    for (j, t) in run.scenario.sample_points.iter().enumerate() {
        gains.row([
            j.to_string(),
            num(t.x),
            num(t.y),
            num(t.z),
            num(req[j]),
            num(run.proposed.solution.gains[j]),
            num(run.baselines[0].solution.gains[j]),
            num(run.baselines[1].solution.gains[j]),
        ])?;
    }
    outputs.push(gains.save(out)?);

    let sweep_header = ["p_max_dbm", "gamma_th_dbm", "scheme", "seed", "eta", "infeasible", "precheck_margin"];
    for (stem, pts) in [("beamform_pmax_sweep", &run.p_max_sweep), ("beamform_gamma_sweep", &run.gamma_sweep)] {
        let mut t = Table::new(stem, &sweep_header)?;
        for p in pts {
            t.row([
                num(p.p_max_dbm),
                num(p.gamma_th_dbm),
                p.scheme.clone(),
                p.seed.map(|s| s.to_string()).unwrap_or_default(),
                opt_num(p.eta),
                p.infeasible.clone().unwrap_or_default(),
                opt_num(p.precheck_margin),
            ])?;
        }
        outputs.push(t.save(out)?);
    }

    output::write_json(&out.join("beamform_solution.json"), &solution_json(&run.proposed.solution))?;
    outputs.push("beamform_solution.json".into());

    let scheme_eta: Vec<Value> = run
        .baselines
        .iter()
        .map(|r| json!({ "scheme": r.scheme, "seed": r.seed, "eta": r.solution.eta }))
        .collect();
    let proposed_sweep: Vec<Value> = run
        .p_max_sweep
        .iter()
        .filter(|p| p.scheme == "proposed")
        .map(|p| json!({ "p_max_dbm": p.p_max_dbm, "eta": p.eta }))
        .collect();
    let summary = json!({
        "eta": run.proposed.solution.eta,
        "outer_iterations": run.proposed.solution.iter_log.len().saturating_sub(1),
        "min_margin": run.proposed.report.min_margin(),
        "binding": binding(&run.proposed.report),
        "worst_rank_ratio": run.proposed.report.worst_rank_ratio,
        "baselines": scheme_eta,
        "p_max_sweep": proposed_sweep,
        "gamma_sweep": run.gamma_sweep,
    });
    finish("beamform", doc, seed, Value::Null, outputs, summary, started, out)
}

// ---------------------------------------------------------------------------
// LQR trade-off sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LqrPoint {
    pub p_max_dbm: f64,
    pub sigma_v_scale: f64,
    pub sigma_w_scale: f64,
    /// Smallest per-formation rate of the proposed design (bit per slot).
    pub rate_min: Option<f64>,
    pub l_min: f64,
    pub eta: Option<f64>,
    /// `(eta - l_min) / l_min`.
    pub rel_excess: Option<f64>,
}

/// Rates come from the proposed design under the nominal noise model; the
/// beamformer does not depend on the noise statistics except through the
/// cost it reports, so the same rates are re-priced for every noise scale.
pub fn run_lqr_sweep(doc: &ScenarioDoc) -> Result<Vec<LqrPoint>> {
    let res = doc.resolve()?;
    let opts = bf_options(doc);
    let sw = &doc.lqr_sweep;
    let rates: Vec<Option<Vec<f64>>> = sw
        .p_max_dbm
        .par_iter()
        .map(|&p| {
            let scn = doc.bf_scenario(&res, p, doc.beamform.gamma_th_dbm);
            match solve_proposed(&scn, &opts) {
                Ok(s) => Ok(Some(s.rates)),
                Err(BeamformError::Infeasible { .. }) => Ok(None),
                Err(e) => Err(anyhow::Error::from(e)),
            }
        })
        .collect::<Result<_>>()?;
    let mut grid = Vec::new();
    for &sv in &sw.sigma_v_scales {
        for &sw_ in &sw.sigma_w_scales {
            let derived = doc
                .control
                .iter()
                .map(|c| {
                    let m = ControlModel::scaled_identity(c.n1, c.a_scale, sv * c.sigma_v, sw_ * c.sigma_w);
                    derive_lqr_terms(&m, DEFAULT_TOL)
                })
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("noise scales ({sv}, {sw_})"))?;
            grid.push((sv, sw_, derived));
        }
    }
    let mut points = Vec::new();
    for (p, r) in sw.p_max_dbm.iter().zip(&rates) {
        for (sv, sw_, derived) in &grid {
            let l_min = derived.iter().map(|d| d.l_min).fold(f64::NEG_INFINITY, f64::max);
            let eta = r.as_ref().map(|r| {
                let scn = BfScenario { control: derived.clone(), ..doc.bf_scenario(&res, *p, doc.beamform.gamma_th_dbm) };
                beamform::eta_of_rates(&scn, r)
            });
            points.push(LqrPoint {
                p_max_dbm: *p,
                sigma_v_scale: *sv,
                sigma_w_scale: *sw_,
                rate_min: r.as_ref().map(|r| fmin(r)),
                l_min,
                eta,
                rel_excess: eta.filter(|_| l_min > 0.0).map(|e| (e - l_min) / l_min),
            });
        }
    }
    Ok(points)
}

pub fn cmd_lqr_sweep(doc: &ScenarioDoc, seed: u64, out: &Path) -> Result<ExperimentResult> {
    let started = Instant::now();
    let points = run_lqr_sweep(doc)?;
    let mut t = Table::new(
        "lqr_sweep",
        &["p_max_dbm", "sigma_v_scale", "sigma_w_scale", "rate_min", "l_min", "eta", "rel_excess"],
    )?;
    for p in &points {
        t.row([
            num(p.p_max_dbm),
            num(p.sigma_v_scale),
            num(p.sigma_w_scale),
            opt_num(p.rate_min),
            num(p.l_min),
            opt_num(p.eta),
            opt_num(p.rel_excess),
        ])?;
    }
    let outputs = vec![t.save(out)?];
    let summary = json!({ "points": points.len() });
    finish("lqr-sweep", doc, seed, Value::Null, outputs, summary, started, out)
}

