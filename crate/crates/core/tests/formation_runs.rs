use isacform::aero::{AeroParams, RelOffset};
use isacform::formation::*;
use isacform::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_states(rng: &mut ChaCha8Rng, m: usize) -> Vec<UavState> {
    (0..m)
        .map(|id| UavState {
            id,
            pos: Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            lambda: 1.0,
            est: RelOffset::new(1.0, 1.0),
            u_max: 0.0,
        })
        .collect()
}

#[test]
fn neighbours_match_pairwise_distance_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let m = rng.random_range(3..20);
        let states = random_states(&mut rng, m);
        for me in 0..m {
            let mut d: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != me)
                .map(|j| {
                    let dx = states[j].pos.x - states[me].pos.x;
                    let dy = states[j].pos.y - states[me].pos.y;
                    (dx * dx + dy * dy, j)
                })
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(neighbor_set(me, &states), vec![me, d[0].1, d[1].1]);
        }
    }
}

#[test]
fn reference_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let kappa = 1.0 / 3.0;
    for _ in 0..200 {
        let m = rng.random_range(2..20);
        let states = random_states(&mut rng, m);
        for me in 0..m {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..m {
                let dy = states[me].pos.y - states[j].pos.y;
                if j == me || states[j].pos.y >= states[me].pos.y {
                    continue;
                }
                let dx = states[me].pos.x - states[j].pos.x;
                let w = dx * dx + kappa * dy * dy;
                if best.is_none_or(|(bw, _)| w < bw) {
                    best = Some((w, j));
                }
            }
            assert_eq!(find_reference(me, &states, kappa), best.map(|b| b.1));
        }
    }
}

#[test]
fn small_formation_converges_and_gains_upwash() {
    let p = AeroParams::default();
    let cfg = FormationConfig { m: 9, ..Default::default() };
    let init = init_states(&cfg, &p, Vec2::zeros(), 3);
    let before = mean_follower_upwash(&init, &p);
    let trace = run_formation(&cfg, &p, init, 100, 3).unwrap();
    let score = v_shape_score(&trace.final_states, &p, cfg.kappa);
    assert!(score <= 0.15, "score {score}");
    assert!(mean_follower_upwash(&trace.final_states, &p) > before);
}

#[test]
fn runs_are_deterministic() {
    let p = AeroParams::default();
    let cfg = FormationConfig::default();
    let a = run_formation(&cfg, &p, init_states(&cfg, &p, Vec2::zeros(), 8), 30, 8).unwrap();
    let b = run_formation(&cfg, &p, init_states(&cfg, &p, Vec2::zeros(), 8), 30, 8).unwrap();
    assert_eq!(a, b);
}
