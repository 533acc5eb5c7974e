//! End-to-end regression quality on a freshly generated dataset.

use pho_core::predictor::{generate_dataset, grid_mae, r_squared, split, train, AnalyticPredictor};
use pho_core::ScenarioConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ten_thousand_samples_fit_the_kinematic_law() {
    let cfg = ScenarioConfig::default();
    let s = cfg.build().unwrap();
    let edge = s.blocked_edge().unwrap();
    let speeds = cfg.train.speeds_mps();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let data = generate_dataset(&s.scene, edge, cfg.train.samples, &speeds, &mut rng).unwrap();
    assert_eq!(data.len(), 10_000);
    assert!(data.iter().all(|d| d.t_to_blk >= 0.0));
    let (tr, va, te) = split(&data, cfg.train.split, cfg.run.seed).unwrap();
    let out = train(&tr, &va, &cfg.train.train_config()).unwrap();
    assert_eq!(out.history.len(), 50);

    let r2 = r_squared(&out.net, &te).unwrap();
    let mae = grid_mae(
        &out.net,
        edge,
        s.scene.trajectory.direction,
        s.scene.trajectory.y_lane,
        s.scene.street_length_m,
        50,
        &speeds,
    )
    .unwrap();
    eprintln!("r2 {r2:.6} mae {mae:.4}");
    assert!(r2 >= 0.999, "r2 {r2}");
    assert!(mae <= 0.05, "mae {mae}");

    let exact = AnalyticPredictor {
        blocked_edge_x: edge,
        direction: s.scene.trajectory.direction,
    };
    assert!(grid_mae(&exact, edge, exact.direction, 9.0, 90.0, 50, &speeds).unwrap() < 1e-12);
}
