//! Line-of-sight downlink model of the ground base station (GBS).
//!
//! The GBS carries a uniform linear array of `n_s` vertically placed antennas.
//! The angle of departure towards a point `q` satisfies
//! `cos(theta) = H / |q - b|`, where `H` is the height of `q` above the array,
//! so the steering vector has no azimuth dependence.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("target coincides with the base station")]
    ZeroDistance,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("transmit covariance is not Hermitian PSD (min eigenvalue {0:e})")]
    NotPsd(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_s: usize,
    /// Antenna spacing over carrier wavelength.
    pub spacing_over_lambda: f64,
    /// Array phase centre (m).
    pub gbs_pos: Vec3,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            n_s: 12,
            spacing_over_lambda: 0.5,
            gbs_pos: Vec3::zeros(),
        }
    }
}

/// Linear-unit channel constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConst {
    /// Channel power gain at 1 m.
    pub rho0: f64,
    /// Receiver noise power (W).
    pub noise_power: f64,
    /// Bandwidth (Hz); 1 gives rates in bit/s/Hz.
    pub bandwidth: f64,
}

impl Default for ChannelConst {
    fn default() -> Self {
        Self {
            rho0: 1e-6,
            noise_power: 1e-12,
            bandwidth: 1.0,
        }
    }
}

/// Transmit beamformers of one time slot: one vector per formation leader
/// plus the covariance of the dedicated sensing signal.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub w: Vec<CVec>,
    pub c_d: CMat,
}

impl BeamformerSet {
    pub fn new(w: Vec<CVec>, c_d: CMat) -> Result<Self, RadioError> {
        let n = c_d.nrows();
        if c_d.ncols() != n || w.iter().any(|v| v.len() != n) {
            return Err(RadioError::Dimension(format!(
                "c_d is {}x{}, beamformer lengths {:?}",
                c_d.nrows(),
                c_d.ncols(),
                w.iter().map(|v| v.len()).collect::<Vec<_>>()
            )));
        }
        let herm_err = (&c_d - c_d.adjoint()).norm();
        let min_eig = hermitian_min_eigenvalue(&c_d);
        if herm_err > 1e-9 * (1.0 + c_d.norm()) || min_eig < -1e-8 {
            return Err(RadioError::NotPsd(min_eig));
        }
        Ok(Self { w, c_d })
    }

    pub fn zeros(k: usize, n_s: usize) -> Self {
        Self {
            w: vec![CVec::zeros(n_s); k],
            c_d: CMat::zeros(n_s, n_s),
        }
    }

    pub fn n_s(&self) -> usize {
        self.c_d.nrows()
    }

    /// `sum_k w_k w_k^H + C_d`.
    pub fn total_covariance(&self) -> CMat {
        self.w
            .iter()
            .fold(self.c_d.clone(), |acc, w| acc + w * w.adjoint())
    }

    /// `sum_k |w_k|^2 + tr(C_d)` (W).
    pub fn total_power(&self) -> f64 {
        self.w.iter().map(|w| w.norm_squared()).sum::<f64>() + self.c_d.trace().re
    }
}

pub fn hermitian_min_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues().min()
}

/// `cos(theta)` of the angle of departure towards `target`.
pub fn cos_aod(target: &Vec3, geo: &ArrayGeometry) -> Result<f64, RadioError> {
    let rel = target - geo.gbs_pos;
    let dist = rel.norm();
    if dist <= 0.0 || !dist.is_finite() {
        return Err(RadioError::ZeroDistance);
    }
    Ok(rel.z / dist)
}

/// `[1, e^{j2π(d/λ)cosθ}, …, e^{j2π(d/λ)(N_s−1)cosθ}]`.
pub fn steering_vector(target: &Vec3, geo: &ArrayGeometry) -> Result<CVec, RadioError> {
    let c = cos_aod(target, geo)?;
    let phase = 2.0 * std::f64::consts::PI * geo.spacing_over_lambda * c;
    Ok(CVec::from_fn(geo.n_s, |i, _| Complex64::from_polar(1.0, phase * i as f64)))
}

/// `h = sqrt(rho0 / dist^2) a(q)`.
pub fn channel(leader: &Vec3, geo: &ArrayGeometry, cc: &ChannelConst) -> Result<CVec, RadioError> {
    let a = steering_vector(leader, geo)?;
    let d2 = (leader - geo.gbs_pos).norm_squared();
    Ok(a.scale((cc.rho0 / d2).sqrt()))
}

/// `Re(x^H C x)`.
pub fn quad_form(x: &CVec, c: &CMat) -> f64 {
    x.dotc(&(c * x)).re
}

/// Downlink SINR at leader `k`, with the dedicated sensing signal treated as
/// interference.
pub fn sinr(k: usize, channels: &[CVec], bf: &BeamformerSet, cc: &ChannelConst) -> f64 {
    let h = &channels[k];
    let signal = h.dotc(&bf.w[k]).norm_sqr();
    let interference: f64 = bf
        .w
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, w)| h.dotc(w).norm_sqr())
        .sum();
    signal / (interference + quad_form(h, &bf.c_d) + cc.noise_power)
}

/// `W log2(1 + SINR)`.
pub fn rate(sinr: f64, cc: &ChannelConst) -> f64 {
    cc.bandwidth * sinr.ln_1p() / std::f64::consts::LN_2
}

/// `a^H (sum_k w_k w_k^H + C_d) a` towards `sample`.
pub fn beampattern_gain(sample: &Vec3, bf: &BeamformerSet, geo: &ArrayGeometry) -> Result<f64, RadioError> {
    let a = steering_vector(sample, geo)?;
    let w_part: f64 = bf.w.iter().map(|w| a.dotc(w).norm_sqr()).sum();
    Ok(w_part + quad_form(&a, &bf.c_d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geo(n_s: usize) -> ArrayGeometry {
        ArrayGeometry { n_s, ..Default::default() }
    }

    fn random_cvec(rng: &mut ChaCha8Rng, n: usize) -> CVec {
        CVec::from_fn(n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn steering_basics() {
        let a = steering_vector(&Vec3::new(3.0, 4.0, 30.0), &geo(1)).unwrap();
        assert_eq!(a.len(), 1);
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);

        let a = steering_vector(&Vec3::new(0.0, 0.0, 30.0), &geo(12)).unwrap();
        for i in 0..12 {
            let expect = Complex64::from_polar(1.0, std::f64::consts::PI * i as f64);
            assert!((a[i] - expect).norm() < 1e-12);
        }
        let a = steering_vector(&Vec3::new(20.0, -37.0, 30.0), &geo(12)).unwrap();
        assert!((a.norm_squared() - 12.0).abs() < 1e-12);
        assert_eq!(steering_vector(&Vec3::zeros(), &geo(4)), Err(RadioError::ZeroDistance));
    }

    #[test]
    fn channel_gain() {
        let cc = ChannelConst { rho0: 1e-6, ..Default::default() };
        let h = channel(&Vec3::new(0.0, 0.0, 1.0), &geo(12), &cc).unwrap();
        assert!((h.norm_squared() - 1.2e-5).abs() < 1e-18);
        let far = channel(&Vec3::new(0.0, 0.0, 2.0), &geo(12), &cc).unwrap();
        assert!((far.norm_squared() * 4.0 - h.norm_squared()).abs() < 1e-18);
        let overhead = channel(&Vec3::new(0.0, 0.0, 30.0), &geo(12), &cc).unwrap();
        assert!((overhead.norm_squared() - 1e-6 * 12.0 / 900.0).abs() < 1e-20);
    }

    #[test]
    fn matched_filter_sinr() {
        let cc = ChannelConst::default();
        let h = channel(&Vec3::new(20.0, 50.0, 30.0), &geo(12), &cc).unwrap();
        let p: f64 = 0.5;
        let w = h.scale(p.sqrt() / h.norm());
        let bf = BeamformerSet::new(vec![w], CMat::zeros(12, 12)).unwrap();
        let s = sinr(0, std::slice::from_ref(&h), &bf, &cc);
        let expect = p * h.norm_squared() / cc.noise_power;
        assert!((s - expect).abs() < 1e-10 * expect);

        let bf = BeamformerSet::zeros(1, 12);
        assert_eq!(sinr(0, &[h], &bf, &cc), 0.0);
    }

    #[test]
    fn two_user_sinr_matches_dense_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 6;
        let cc = ChannelConst { noise_power: 0.3, ..Default::default() };
        let h: Vec<CVec> = (0..2).map(|_| random_cvec(&mut rng, n)).collect();
        let w: Vec<CVec> = (0..2).map(|_| random_cvec(&mut rng, n)).collect();
        let f = random_cvec(&mut rng, n);
        let c_d = &f * f.adjoint();
        let bf = BeamformerSet::new(w.clone(), c_d.clone()).unwrap();
        for k in 0..2 {
            // Element-by-element complex arithmetic.
            let inner = |x: &CVec, y: &CVec| -> Complex64 {
                (0..n).map(|i| x[i].conj() * y[i]).fold(Complex64::new(0.0, 0.0), |a, b| a + b)
            };
            let mut cd_form = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    cd_form += h[k][i].conj() * c_d[(i, j)] * h[k][j];
                }
            }
            let num = inner(&h[k], &w[k]).norm_sqr();
            let den = inner(&h[k], &w[1 - k]).norm_sqr() + cd_form.re + 0.3;
            let s = sinr(k, &h, &bf, &cc);
            assert!((s - num / den).abs() <= 1e-12 * s);
        }
    }

    #[test]
    fn rate_values() {
        let cc = ChannelConst { bandwidth: 1.0, ..Default::default() };
        assert_eq!(rate(0.0, &cc), 0.0);
        assert!((rate(1.0, &cc) - 1.0).abs() < 1e-15);
        let cc = ChannelConst { bandwidth: 2.0, ..Default::default() };
        assert!((rate(3.0, &cc) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn beampattern_cases() {
        let g = geo(12);
        let t = Vec3::new(40.0, -135.0, 30.0);
        let bf = BeamformerSet::new(vec![], CMat::identity(12, 12)).unwrap();
        assert!((beampattern_gain(&t, &bf, &g).unwrap() - 12.0).abs() < 1e-12);

        let a = steering_vector(&t, &g).unwrap();
        let p = 0.7;
        let c = (&a * a.adjoint()).scale(p / a.norm_squared());
        let bf = BeamformerSet::new(vec![], c).unwrap();
        assert!((beampattern_gain(&t, &bf, &g).unwrap() - p * 12.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = CMat::from_fn(12, 12, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let c = &f * f.adjoint();
        let w0 = random_cvec(&mut rng, 12);
        let bf = BeamformerSet::new(vec![w0.clone()], c.clone()).unwrap();
        let total = c + &w0 * w0.adjoint();
        let mut oracle = 0.0;
        for i in 0..12 {
            for j in 0..12 {
                oracle += (a[i].conj() * total[(i, j)] * a[j]).re;
            }
        }
        let got = beampattern_gain(&t, &bf, &g).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs());
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let mut c = CMat::identity(2, 2);
        c[(1, 1)] = Complex64::new(-1.0, 0.0);
        assert!(matches!(BeamformerSet::new(vec![], c), Err(RadioError::NotPsd(_))));
        let bad = BeamformerSet::new(vec![CVec::zeros(3)], CMat::zeros(2, 2));
        assert!(matches!(bad, Err(RadioError::Dimension(_))));
    }

    proptest! {
        #[test]
        fn sinr_phase_invariant(seed in 0u64..500, phi in 0.0f64..std::f64::consts::TAU) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cc = ChannelConst { noise_power: 0.1, ..Default::default() };
            let h: Vec<CVec> = (0..2).map(|_| random_cvec(&mut rng, 4)).collect();
            let w: Vec<CVec> = (0..2).map(|_| random_cvec(&mut rng, 4)).collect();
            let bf = BeamformerSet::new(w.clone(), CMat::zeros(4, 4)).unwrap();
            let rot = Complex64::from_polar(1.0, phi);
            let bf2 = BeamformerSet::new(w.iter().map(|v| v * rot).collect(), CMat::zeros(4, 4)).unwrap();
            for k in 0..2 {
                let a = sinr(k, &h, &bf, &cc);
                let b = sinr(k, &h, &bf2, &cc);
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-12));
            }
        }

        #[test]
        fn rate_monotone(a in 0.0f64..1e4, d in 1e-6f64..1e3) {
            let cc = ChannelConst::default();
            prop_assert!(rate(a + d, &cc) > rate(a, &cc));
        }

        #[test]
        fn gain_nonnegative_for_psd(seed in 0u64..500, x in -200.0f64..200.0, y in -200.0f64..200.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = CMat::from_fn(8, 3, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let bf = BeamformerSet::new(vec![], &f * f.adjoint()).unwrap();
            let g = beampattern_gain(&Vec3::new(x, y, 30.0), &bf, &geo(8)).unwrap();
            prop_assert!(g >= -1e-10);
        }
    }
}
