use isacform::beamform::*;
use isacform::radio::{self, ArrayGeometry, CMat, CVec, ChannelConst};
use isacform::Vec3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, scale: f64) -> CMat {
    let f = CMat::from_fn(n, rank, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&f * f.adjoint()).scale(scale)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn rank_one_reconstruction_invariance() {
    let geo = ArrayGeometry::default();
    let cc = ChannelConst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let samples: Vec<Vec3> = (0..8)
        .map(|_| Vec3::new(rng.random_range(15.0..85.0), rng.random_range(-140.0..-130.0), 30.0))
        .collect();
    for _ in 0..100 {
        let k = rng.random_range(1..4);
        let channels: Vec<CVec> = (0..k)
            .map(|_| {
                let q = Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(10.0..100.0), 30.0);
                radio::channel(&q, &geo, &cc).unwrap()
            })
            .collect();
        let w_tilde: Vec<CMat> = (0..k)
            .map(|_| {
                let r = rng.random_range(1..6);
                random_psd(&mut rng, 12, r, 0.05)
            })
            .collect();
        let rc = rng.random_range(1..4);
        let c_tilde = random_psd(&mut rng, 12, rc, 0.01);
        let out = reconstruct_rank1(&w_tilde, &c_tilde, &channels).unwrap();

        let before = w_tilde.iter().fold(c_tilde.clone(), |acc, w| acc + w);
        let after = out.total_covariance();
        assert!(rel(before.trace().re, after.trace().re) <= 1e-9);
        for (i, h) in channels.iter().enumerate() {
            let a = radio::quad_form(h, &w_tilde[i]);
            let b = h.dotc(&out.w[i]).norm_sqr();
            assert!(rel(a, b) <= 1e-9);
        }
        for t in &samples {
            let a = radio::steering_vector(t, &geo).unwrap();
            assert!(rel(radio::quad_form(&a, &before), radio::quad_form(&a, &after)) <= 1e-9);
        }
        for w in &out.w {
            let m = w * w.adjoint();
            let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            assert!(sv[1] / sv[0] <= 1e-6);
        }
        assert!(radio::hermitian_min_eigenvalue(&out.c_d) >= -1e-8);
    }
}

#[test]
fn every_cut_upper_bounds_the_log() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for _ in 0..50 {
        let s0 = 10f64.powf(rng.random_range(0.0..6.0));
        for _ in 0..100 {
            let s = 10f64.powf(rng.random_range(0.0..8.0));
            assert!(cut_value(s0, s) >= s.log2() - 1e-12 * s.log2().abs().max(1.0));
        }
    }
}
