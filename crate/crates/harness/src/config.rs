//! Scenario documents.
//!
//! A scenario is one TOML file; every section is optional and falls back to
//! the published parameter set. Unknown keys are rejected so that a typo in
//! a physical constant fails loudly instead of silently using a default.
//! Power-like quantities are written in dB/dBm and converted to linear units
//! by [`ScenarioDoc::resolve`].

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use isacform::aero::AeroParams;
use isacform::beamform::BfScenario;
use isacform::control::{derive_lqr_terms, ControlModel, LqrDerived, DEFAULT_TOL};
use isacform::formation::FormationConfig;
use isacform::radio::{ArrayGeometry, ChannelConst};
use isacform::units::{db_to_linear, dbm_to_watts};
use isacform::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioDoc {
    pub seed: u64,
    pub aero: AeroParams,
    pub formation: FormationSection,
    pub radio: RadioSection,
    /// One plant per formation served by the beamformer.
    pub control: Vec<ControlSection>,
    pub beamform: BeamformSection,
    pub lqr_sweep: LqrSweepSection,
    pub upwash_map: UpwashMapSection,
}

impl Default for ScenarioDoc {
    fn default() -> Self {
        Self {
            seed: 1,
            aero: AeroParams::default(),
            formation: FormationSection::default(),
            radio: RadioSection::default(),
            control: vec![ControlSection::default(); 2],
            beamform: BeamformSection::default(),
            lqr_sweep: LqrSweepSection::default(),
            upwash_map: UpwashMapSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormationSection {
    pub n_slots: usize,
    /// Score (m) below which a formation counts as converged.
    pub tolerance: f64,
    /// Grid step (m) of the emitted upwash field.
    pub field_step: f64,
    pub groups: Vec<FormationConfig>,
}

impl Default for FormationSection {
    fn default() -> Self {
        Self {
            n_slots: 200,
            tolerance: 0.15,
            field_step: 0.1,
            groups: vec![
                FormationConfig { m: 19, ..Default::default() },
                FormationConfig { m: 9, ..Default::default() },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSection {
    pub n_s: usize,
    pub spacing_over_lambda: f64,
    pub gbs_pos: [f64; 3],
    pub rho0_db: f64,
    pub noise_dbm: f64,
    pub bandwidth: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            n_s: 12,
            spacing_over_lambda: 0.5,
            gbs_pos: [0.0; 3],
            rho0_db: -60.0,
            noise_dbm: -90.0,
            bandwidth: 1.0,
        }
    }
}

/// `A = a I`, `B = G = Q = Q1 = I`, `R = 0` with isotropic noises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub n1: usize,
    pub a_scale: f64,
    pub sigma_v: f64,
    pub sigma_w: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self { n1: 50, a_scale: 1.0, sigma_v: 0.01, sigma_w: 0.001 }
    }
}

impl ControlSection {
    pub fn model(&self) -> ControlModel {
        ControlModel::scaled_identity(self.n1, self.a_scale, self.sigma_v, self.sigma_w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleGrid {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for SampleGrid {
    fn default() -> Self {
        Self { x: [15.0, 85.0], y: [-140.0, -130.0], z: 30.0, nx: 4, ny: 2 }
    }
}

impl SampleGrid {
    pub fn points(&self) -> Vec<Vec3> {
        let lin = |r: [f64; 2], n: usize, i: usize| if n == 1 { 0.5 * (r[0] + r[1]) } else { r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64 };
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push(Vec3::new(lin(self.x, self.nx, ix), lin(self.y, self.ny, iy), self.z));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamformSection {
    pub p_max_dbm: f64,
    pub gamma_th_dbm: f64,
    /// Design slots spread evenly over the horizon.
    pub n_slots: usize,
    pub horizon_s: f64,
    /// Length of one physical slot (s); each design slot stands for
    /// `horizon_s / physical_dt / n_slots` physical slots in the sensing sum.
    pub physical_dt: f64,
    /// Leader position at `t = 0`, one per formation (m).
    pub leader_start: Vec<[f64; 3]>,
    /// Common leader velocity (m/s).
    pub leader_velocity: [f64; 3],
    pub samples: SampleGrid,
    pub tol: f64,
    pub max_outer: usize,
    pub p_max_sweep_dbm: Vec<f64>,
    /// Sensing thresholds swept at `gamma_sweep_p_max_dbm`.
    pub gamma_sweep_dbm: Vec<f64>,
    pub gamma_sweep_p_max_dbm: f64,
    pub random_seeds: usize,
}

impl Default for BeamformSection {
    fn default() -> Self {
        Self {
            p_max_dbm: 30.0,
            gamma_th_dbm: 0.0,
            n_slots: 8,
            horizon_s: 10.0,
            physical_dt: 0.05,
            leader_start: vec![[20.0, 50.0, 30.0], [100.0, 50.0, 30.0]],
            leader_velocity: [0.0, -5.0, 0.0],
            samples: SampleGrid::default(),
            tol: 1e-4,
            max_outer: 30,
            p_max_sweep_dbm: vec![15.0, 20.0, 25.0, 30.0, 35.0],
            gamma_sweep_dbm: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            gamma_sweep_p_max_dbm: 25.0,
            random_seeds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrSweepSection {
    pub sigma_v_scales: Vec<f64>,
    pub sigma_w_scales: Vec<f64>,
    pub p_max_dbm: Vec<f64>,
}

impl Default for LqrSweepSection {
    fn default() -> Self {
        Self {
            sigma_v_scales: vec![0.01, 0.5, 1.0, 2.0],
            sigma_w_scales: vec![0.01, 0.5, 1.0, 2.0],
            p_max_dbm: vec![20.0, 30.0, 40.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpwashMapSection {
    /// `x0:x1:nx,y0:y1:ny`.
    pub grid: String,
    /// Generator positions (m); a single UAV at the origin by default.
    pub generators: Vec<[f64; 2]>,
}

impl Default for UpwashMapSection {
    fn default() -> Self {
        Self { grid: "-3:3:121,-2:4:121".into(), generators: vec![[0.0, 0.0]] }
    }
}

/// Parsed `x0:x1:nx,y0:y1:ny` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: [f64; 2],
    pub nx: usize,
    pub y: [f64; 2],
    pub ny: usize,
}

impl GridSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let axis = |a: &str| -> Result<([f64; 2], usize)> {
            let parts: Vec<&str> = a.trim().split(':').collect();
            ensure!(parts.len() == 3, "axis '{a}' must read lo:hi:count");
            let lo: f64 = parts[0].parse().with_context(|| format!("bad bound in '{a}'"))?;
            let hi: f64 = parts[1].parse().with_context(|| format!("bad bound in '{a}'"))?;
            let n: usize = parts[2].parse().with_context(|| format!("bad count in '{a}'"))?;
            ensure!(lo.is_finite() && hi.is_finite() && hi > lo, "axis '{a}' needs lo < hi");
            ensure!(n >= 2, "axis '{a}' needs at least two points");
            Ok(([lo, hi], n))
        };
        let (xs, ys) = s.split_once(',').context("grid must read x0:x1:nx,y0:y1:ny")?;
        let (x, nx) = axis(xs)?;
        let (y, ny) = axis(ys)?;
        Ok(Self { x, nx, y, ny })
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x[0] + (self.x[1] - self.x[0]) * i as f64 / (self.nx - 1) as f64).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|i| self.y[0] + (self.y[1] - self.y[0]) * i as f64 / (self.ny - 1) as f64).collect()
    }
}

/// Linear-unit view of a scenario.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub geo: ArrayGeometry,
    pub cc: ChannelConst,
    pub control: Vec<LqrDerived>,
}

impl ScenarioDoc {
    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: Self = toml::from_str(text).context("invalid scenario document")?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.aero.validate()?;
        ensure!(!self.formation.groups.is_empty(), "formation.groups must not be empty");
        for g in &self.formation.groups {
            g.validate()?;
        }
        ensure!(self.formation.tolerance > 0.0, "formation.tolerance must be positive");
        ensure!(self.formation.field_step > 0.0, "formation.field_step must be positive");
        let r = &self.radio;
        ensure!(r.n_s >= 1, "radio.n_s must be at least 1");
        ensure!(r.spacing_over_lambda > 0.0, "radio.spacing_over_lambda must be positive");
        ensure!(r.bandwidth > 0.0, "radio.bandwidth must be positive");
        ensure!(r.rho0_db.is_finite() && r.noise_dbm.is_finite(), "radio dB fields must be finite");
        ensure!(!self.control.is_empty(), "at least one control entry is required");
        for c in &self.control {
            ensure!(c.n1 >= 1, "control.n1 must be at least 1");
            ensure!(c.sigma_v >= 0.0 && c.sigma_w >= 0.0, "control noise variances must be nonnegative");
            ensure!(c.a_scale.is_finite() && c.a_scale != 0.0, "control.a_scale must be finite and nonzero");
        }
        let b = &self.beamform;
        if b.leader_start.len() != self.control.len() {
            bail!(
                "beamform.leader_start lists {} leaders but {} control entries are given",
                b.leader_start.len(),
                self.control.len()
            );
        }
        ensure!(b.n_slots >= 1, "beamform.n_slots must be at least 1");
        ensure!(b.horizon_s > 0.0 && b.physical_dt > 0.0, "beamform horizon and physical_dt must be positive");
        ensure!(b.samples.nx >= 1 && b.samples.ny >= 1, "beamform.samples needs at least one point");
        ensure!(b.tol > 0.0 && b.max_outer >= 1, "beamform.tol and max_outer must be positive");
        GridSpec::parse(&self.upwash_map.grid)?;
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let geo = ArrayGeometry {
            n_s: self.radio.n_s,
            spacing_over_lambda: self.radio.spacing_over_lambda,
            gbs_pos: Vec3::from(self.radio.gbs_pos),
        };
        let cc = ChannelConst {
            rho0: db_to_linear(self.radio.rho0_db),
            noise_power: dbm_to_watts(self.radio.noise_dbm),
            bandwidth: self.radio.bandwidth,
        };
        let control = self
            .control
            .iter()
            .map(|c| derive_lqr_terms(&c.model(), DEFAULT_TOL))
            .collect::<Result<_, _>>()?;
        Ok(Resolved { geo, cc, control })
    }

    /// Leader positions of each design slot.
    pub fn leader_track(&self) -> Vec<Vec<Vec3>> {
        let b = &self.beamform;
        let v = Vec3::from(b.leader_velocity);
        (0..b.n_slots)
            .map(|n| {
                let t = if b.n_slots == 1 { 0.0 } else { b.horizon_s * n as f64 / (b.n_slots - 1) as f64 };
                b.leader_start.iter().map(|s| Vec3::from(*s) + v * t).collect()
            })
            .collect()
    }

    pub fn slot_weight(&self) -> f64 {
        let b = &self.beamform;
        (b.horizon_s / b.physical_dt) / b.n_slots as f64
    }

    /// Beamforming scenario at the given budget and threshold.
    pub fn bf_scenario(&self, res: &Resolved, p_max_dbm: f64, gamma_th_dbm: f64) -> BfScenario {
        BfScenario {
            geo: res.geo.clone(),
            cc: res.cc,
            leaders: self.leader_track(),
            sample_points: self.beamform.samples.points(),
            gamma_th: dbm_to_watts(gamma_th_dbm),
            p_max: dbm_to_watts(p_max_dbm),
            control: res.control.clone(),
            slot_weight: self.slot_weight(),
        }
    }
}
