use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stitchsim::experiments::{SeedWorld, WorldConfig};
use stitchsim::estimator::Learner;
use stitchsim::experiments::AccuracyDriver;
use stitchsim::preloader::{compute_hotness, greedy_preload, Admission};
use stitchsim::profiles::{intel_processors, GenParams};
use stitchsim::simulator::{run_simulation, Permutations, PolicyKind, SimSettings, WorkloadSpec};
use stitchsim::zoo::{enumerate_stitched, template_zoo, Platform};

fn world() -> SeedWorld {
    let cfg = WorldConfig {
        zoo: template_zoo(Platform::Intel),
        processors: intel_processors(),
        params: GenParams::intel(),
        train_n: 50,
        learner: Learner::default(),
        accuracy: AccuracyDriver::Estimator,
    };
    SeedWorld::build(&cfg, 7).expect("world")
}

fn pipeline(c: &mut Criterion) {
    let sw = world();
    let configs = sw.slo25();
    let task = sw.zoo.tasks()[0].task.clone();

    c.bench_function("enumerate_stitched_v10_s3", |b| b.iter(|| enumerate_stitched(black_box(&task))));
    c.bench_function("plan_25_configs", |b| {
        b.iter(|| configs.iter().map(|s| sw.candidates.plan(black_box(s)).ok()).collect::<Vec<_>>())
    });
    let sets = sw.satisfying_sets(&configs).expect("sets");
    let hotness = compute_hotness(&sets);
    let budget = sw.zoo.full_preload_memory().expect("memory") / 2;
    c.bench_function("hotness_25_configs", |b| b.iter(|| compute_hotness(black_box(&sets))));
    c.bench_function("greedy_preload_half_budget", |b| {
        b.iter(|| greedy_preload(black_box(&hotness), &sw.zoo, budget, Admission::Rounds))
    });
    let workload = WorkloadSpec { queries_per_task: 100, permutations: Permutations::First(4) };
    let settings = SimSettings { injected_hop_ms: 0.0, switch: Default::default() };
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("stitched_25_configs_4_orders", |b| {
        b.iter(|| run_simulation(&sw.world(), &workload, &[PolicyKind::Stitched], &configs, &settings, None, 7).expect("sim"))
    });
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
