use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use pho_core::engine::run;
use pho_core::perception::{project_noisy, CameraModel, ObjectClass, SceneObject};
use pho_core::pho::{plan_trigger, TimingBudget};
use pho_core::predictor::{predict, Activation, Normalizer, RegressionNet};
use pho_core::scene::shadow_interval;
use pho_core::{SbsId, ScenarioConfig, SimTime, StrategyKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn inference(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let norm = Normalizer::fit([([0.0, 0.0, 2.0], 0.0), ([90.0, 15.0, 16.0], 30.0)]);
    let net = RegressionNet::new(&[64, 64], Activation::Relu, norm, &mut rng);
    c.bench_function("predict 64x64", |b| {
        b.iter(|| predict(&net, black_box(40.0), black_box(9.0), black_box(13.4)).unwrap())
    });
}

fn geometry(c: &mut Criterion) {
    let s = ScenarioConfig::default().build().unwrap();
    c.bench_function("shadow_interval", |b| {
        b.iter(|| shadow_interval(black_box(&s.scene), SbsId(1)).unwrap())
    });
    let budget = TimingBudget::default();
    c.bench_function("plan_trigger", |b| {
        b.iter(|| plan_trigger(black_box(1.64), &budget, 13.4112, SimTime::ZERO, SbsId(2)).unwrap())
    });
}

fn perception(c: &mut Criterion) {
    let cam = CameraModel::default();
    let obj = SceneObject {
        class_label: ObjectClass::Car,
        center_x: 12.3,
        center_y: 9.0,
        width_m: 2.0,
        depth_m: 1.8,
    };
    c.bench_function("project noisy", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(3),
            |mut rng| project_noisy(&cam, black_box(&obj), 1.0, &mut rng),
            BatchSize::SmallInput,
        )
    });
}

fn engine(c: &mut Criterion) {
    let mut g = c.benchmark_group("engine run");
    g.sample_size(20);
    for kind in [StrategyKind::Proactive, StrategyKind::Reactive] {
        let mut cfg = ScenarioConfig::default();
        cfg.strategy.kind = kind;
        let s = cfg.build().unwrap();
        let p = s.analytic_predictor();
        g.bench_function(kind.as_str(), |b| {
            b.iter(|| run(&s, p.as_ref().map(|p| p as _), 42).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, inference, geometry, perception, engine);
criterion_main!(benches);
