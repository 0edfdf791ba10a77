use std::collections::BTreeMap;

use proptest::prelude::*;
use stitchsim::estimator::{estimate_latency, GroundTruth, Learner, TableLatency};
use stitchsim::experiments::{run_experiment, AccuracyDriver, ExperimentSpec, SeedWorld, WorldConfig};
use stitchsim::optimizer::{all_orders, Candidates, PlanResult, SloConfig, TaskSlo};
use stitchsim::preloader::{Admission, PreloadPlan};
use stitchsim::profiles::{generate_synthetic, intel_processors, jetson_processors, GenParams};
use stitchsim::simulator::engine::{simulate, EngineConfig, Job, Stage};
use stitchsim::zoo::{enumerate_stitched, template_zoo, Platform};

fn world(seed: u64, t: usize, v: usize) -> SeedWorld {
    let cfg = WorldConfig {
        zoo: template_zoo(Platform::Intel).truncated(t, v).unwrap(),
        processors: intel_processors(),
        params: GenParams::intel(),
        train_n: 50,
        learner: Learner::default(),
        accuracy: AccuracyDriver::GroundTruth,
    };
    SeedWorld::build(&cfg, seed).unwrap()
}

/// Exhaustive objective: for each order, the mean over tasks of the fastest
/// feasible map, minimised over orders.
fn oracle(sw: &SeedWorld, slo: &SloConfig) -> Option<f64> {
    let mut best: Option<f64> = None;
    let feasible: BTreeMap<u32, Vec<_>> = sw
        .zoo
        .tasks()
        .iter()
        .map(|tz| {
            let s = slo.per_task[&tz.task.task_id];
            let maps: Vec<_> = enumerate_stitched(&tz.task)
                .into_iter()
                .filter(|m| {
                    sw.table.stitched_accuracy_truth(m).unwrap() >= s.acc_floor
                        && sw.orders.iter().any(|o| estimate_latency(m, o, &sw.table, 0.0).unwrap() <= s.lat_ceiling_ms)
                })
                .collect();
            (tz.task.task_id, maps)
        })
        .collect();
    for o in &sw.orders {
        let mins: Vec<f64> = feasible
            .values()
            .filter(|m| !m.is_empty())
            .map(|m| m.iter().map(|x| estimate_latency(x, o, &sw.table, 0.0).unwrap()).fold(f64::INFINITY, f64::min))
            .collect();
        if mins.is_empty() {
            return None;
        }
        let mean = mins.iter().sum::<f64>() / mins.len() as f64;
        best = Some(best.map_or(mean, |b: f64| b.min(mean)));
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn plan_objective_matches_exhaustive_search(seed in 0u64..1000, t in 1usize..=3, v in 1usize..=4, qa in 0.0f64..1.0, ql in 0.0f64..1.0) {
        let sw = world(seed, t, v);
        let per_task = sw.ranges.iter().map(|(&id, r)| {
            (id, TaskSlo {
                acc_floor: r.acc_min - 1.0 + qa * (r.acc_max - r.acc_min + 2.0),
                lat_ceiling_ms: r.lat_min_ms * 0.9 + ql * (r.lat_max_ms * 1.2 - r.lat_min_ms * 0.9),
            })
        }).collect();
        let slo = SloConfig { config_id: 1, per_task };
        let got = sw.world().plan(&slo).unwrap();
        let want = oracle(&sw, &slo);
        prop_assert_eq!(got.as_ref().map(|p| p.mean_latency_ms), want);
        if let Some(p) = got {
            // chosen maps never exceed their ceiling under the chosen order
            for (id, c) in &p.per_task_choice {
                if let Some(m) = c.map() {
                    let l = estimate_latency(m, &p.best_order, &sw.table, 0.0).unwrap();
                    prop_assert!(l <= slo.per_task[id].lat_ceiling_ms);
                    prop_assert!(sw.table.stitched_accuracy_truth(m).unwrap() >= slo.per_task[id].acc_floor);
                }
            }
            let back = PlanResult::from_file(&p.to_file(sw.table.processors()), sw.table.processors()).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn engine_conserves_queries_and_never_overlaps(
        services in prop::collection::vec(prop::collection::vec((0u32..3, 0.1f64..5.0), 1..4), 1..5),
        queries in 1u32..6,
        hop in 0.0f64..1.0,
    ) {
        let jobs: Vec<Job> = services.iter().enumerate().map(|(k, st)| Job {
            task_id: k as u32 + 1,
            stages: st.iter().map(|&(p, s)| Stage { proc_id: p, service_ms: s, first_query_extra_ms: 0.0 }).collect(),
        }).collect();
        let arrival: Vec<usize> = (0..jobs.len()).rev().collect();
        let out = simulate(&jobs, &arrival, EngineConfig { queries, hop_ms: hop, record_trace: true });
        prop_assert_eq!(out.completed(), jobs.len() * queries as usize);
        prop_assert!((out.throughput_qps() - out.completed() as f64 / out.makespan_ms * 1000.0).abs() < 1e-9);
        for p in 0..3u32 {
            let mut spans: Vec<(f64, f64)> = out.trace.iter().filter(|r| r.proc_id == p).map(|r| (r.start, r.end)).collect();
            spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in spans.windows(2) {
                prop_assert!(w[0].1 <= w[1].0 + 1e-9);
            }
        }
        for r in &out.trace {
            prop_assert!(r.start >= r.ready - 1e-12);
        }
        // contention only adds delay on top of the stage sum
        for t in &out.per_task {
            let job = &jobs[t.task_id as usize - 1];
            let floor: f64 = job.stages.iter().map(|s| s.service_ms).sum::<f64>() + hop * (job.stages.len() - 1) as f64;
            prop_assert!(t.latencies_ms.iter().all(|&l| l >= floor - 1e-9));
        }
    }
}

#[test]
fn ground_truth_and_estimator_candidates_share_latency() {
    let zoo = template_zoo(Platform::Jetson).truncated(2, 5).unwrap();
    let table = generate_synthetic(&zoo, &jetson_processors(), &GenParams::jetson(), 4).unwrap();
    let orders = all_orders(2, 2).unwrap();
    assert_eq!(orders.len(), 2);
    let maps: Vec<_> = zoo.tasks().iter().map(|tz| (tz.task.task_id, enumerate_stitched(&tz.task))).collect();
    let c = Candidates::build(maps, &GroundTruth(&table), &TableLatency::new(&table), orders).unwrap();
    assert_eq!(c.tasks.iter().map(|t| t.maps.len()).sum::<usize>(), 2 * 25);
    let sw = SeedWorld::from_parts(zoo, table, 4, 50, &Learner::default(), AccuracyDriver::Estimator, 0.0).unwrap();
    for (a, b) in c.tasks.iter().zip(&sw.candidates.tasks) {
        assert_eq!(a.latency, b.latency);
    }
}

#[test]
fn full_budget_rounds_preload_everything() {
    let sw = world(2, 4, 10);
    let plan = sw.preload(1.0, Admission::Rounds).unwrap();
    assert_eq!(plan.per_task, PreloadPlan::full(&sw.zoo).unwrap().per_task);
    let back = PreloadPlan::from_file(&plan.to_file(), &sw.zoo).unwrap();
    assert_eq!(back, plan);
    let single = sw.preload(1.0, Admission::Single).unwrap();
    assert!(single.per_task.values().all(|s| s.len() == 3));
}

#[test]
fn budget_bundle_layout() {
    let spec: ExperimentSpec = serde_json::from_value(serde_json::json!({
        "name": "budget", "zoo_template": "intel", "T": 2, "V": 5, "S": 3, "P": 3,
        "seeds": [3, 4], "sweep": "budget", "budgets": [0.15, 0.55, 1.0], "queries": 5, "permutations": "1"
    }))
    .unwrap();
    let d = tempfile::tempdir().unwrap();
    let bundle = run_experiment(&spec, d.path()).unwrap();
    let names: Vec<String> = bundle.files.iter().map(|f| f.display().to_string()).collect();
    for want in ["spec.json", "seed_3/zoo.json", "seed_3/profiles.json", "seed_4/slo_configs.json", "seed_4/plans.json", "seed_4/preload_0.55.json", "budget_sweep.csv"] {
        assert!(names.iter().any(|n| n == want), "missing {want} in {names:?}");
    }
    let text = std::fs::read_to_string(d.path().join("budget_sweep.csv")).unwrap();
    // header, then three budgets and the full reference per seed
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    let mut by_seed: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        by_seed.entry(cols[0]).or_default().push(cols[5].parse().unwrap());
    }
    for rates in by_seed.values() {
        assert!(rates[..3].windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
        assert_eq!(rates[2], rates[3]);
    }
}

#[test]
fn spec_rejects_template_mismatch() {
    let bad = serde_json::json!({
        "name": "x", "zoo_template": "jetson", "T": 2, "V": 5, "S": 3, "P": 3, "seeds": [1], "sweep": "slo25"
    });
    let spec: ExperimentSpec = serde_json::from_value(bad).unwrap();
    let err = spec.validate().unwrap_err().to_string();
    assert!(err.contains("S = 2"), "{err}");
}
