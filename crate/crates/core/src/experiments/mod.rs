//! Canned experiment recipes. Each seed builds an independent synthetic
//! world (zoo, profiles, estimators, candidate tables); a sweep then runs
//! the pipeline over it and writes a bundle of JSON and CSV files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{
    estimate_latency, latency_error, profiling_cost, top_k_recall, training_profiling_runs, EstimatorSet, GroundTruth, Learner,
    PredictedSet, TableLatency,
};
use crate::io::{read_json, write_csv, write_json};
use crate::optimizer::{all_orders, Candidates, PlacementOrder, PlanFile, SloConfig, TaskSlo};
use crate::preloader::{compute_hotness, greedy_preload, Admission, PreloadFile, PreloadPlan, SwitchCost};
use crate::profiles::{
    generate_synthetic, intel_processors, jetson_processors, GenParams, OrderLatencyFixture, Processor, ProfileTable,
    ORDER_TABLE_ORDERS, ORDER_TABLE_VARIANTS,
};
use crate::simulator::{
    aggregate, default_fixed_order, generate_guaranteed_slos, generate_slo_configs, lone_query_latency, run_simulation, task_ranges,
    GuaranteeMode, Permutations, PolicyKind, ReportRow, SimSettings, TaskRanges, World, WorkloadSpec,
};
use crate::zoo::{enumerate_stitched, template_zoo, Platform, StitchMap, Zoo, ZooFile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZooTemplate {
    Intel,
    Jetson,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Slo25,
    AccGuaranteed,
    LatGuaranteed,
    Budget,
    OrderSensitivity,
    ProfilingCost,
    EstimatorEval,
}

/// Which accuracy drives planning: trained estimators or the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyDriver {
    #[default]
    Estimator,
    GroundTruth,
}

fn default_queries() -> u32 {
    100
}

fn default_permutations() -> String {
    "all".into()
}

fn default_train_n() -> usize {
    50
}

fn default_recall_k() -> Vec<usize> {
    vec![1, 5, 10, 20, 50]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub zoo_template: ZooTemplate,
    /// Zoo file for the `custom` template, relative to the spec file.
    #[serde(default)]
    pub zoo_path: Option<PathBuf>,
    #[serde(rename = "T")]
    pub tasks: usize,
    #[serde(rename = "V")]
    pub variants: usize,
    #[serde(rename = "S")]
    pub subgraphs: u32,
    #[serde(rename = "P")]
    pub processors: u32,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub budgets: Vec<f64>,
    pub sweep: Sweep,
    #[serde(default = "default_queries")]
    pub queries: u32,
    #[serde(default = "default_permutations")]
    pub permutations: String,
    #[serde(default)]
    pub sigma_acc: Option<f64>,
    #[serde(default = "default_train_n")]
    pub train_n: usize,
    /// Per-hop cost known to the latency estimator.
    #[serde(default)]
    pub comm_ms: f64,
    /// Per-hop cost applied by the simulator only, as a fraction of the
    /// mean subgraph latency of the world.
    #[serde(default)]
    pub injected_hop_frac: f64,
    #[serde(default)]
    pub compile_x: Option<f64>,
    #[serde(default)]
    pub load_x: Option<f64>,
    #[serde(default)]
    pub admission: Admission,
    #[serde(default)]
    pub accuracy: AccuracyDriver,
    #[serde(default = "default_recall_k")]
    pub recall_k: Vec<usize>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: ExperimentSpec = read_json(path)?;
        if let (Some(p), Some(dir)) = (&spec.zoo_path, path.parent()) {
            if p.is_relative() {
                spec.zoo_path = Some(dir.join(p));
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("experiment {:?}: {m}", self.name)));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a non-empty file name".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if let Some(b) = self.budgets.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return bad(format!("budget fraction {b} outside [0, 1]"));
        }
        if self.sweep == Sweep::Budget && self.budgets.is_empty() {
            return bad("the budget sweep needs a list of budgets".into());
        }
        if self.tasks == 0 || self.variants == 0 || self.queries == 0 {
            return bad("T, V and queries must be positive".into());
        }
        if self.zoo_template == ZooTemplate::Custom && self.zoo_path.is_none() {
            return bad("the custom template needs zoo_path".into());
        }
        if self.injected_hop_frac < 0.0 || self.comm_ms < 0.0 {
            return bad("communication costs must be non-negative".into());
        }
        self.permutations.parse::<Permutations>().map_err(Error::Invalid)?;
        if self.sweep == Sweep::ProfilingCost {
            return Ok(());
        }
        let (s, p) = match self.zoo_template {
            ZooTemplate::Intel => (Platform::Intel.subgraph_count(), 3),
            ZooTemplate::Jetson => (Platform::Jetson.subgraph_count(), 2),
            ZooTemplate::Custom => (self.subgraphs, self.processors),
        };
        if (self.subgraphs, self.processors) != (s, p) {
            return bad(format!("template fixes S = {s} and P = {p}"));
        }
        Ok(())
    }

    pub fn workload(&self) -> WorkloadSpec {
        WorkloadSpec { queries_per_task: self.queries, permutations: self.permutations.parse().unwrap_or(Permutations::All) }
    }

    pub fn switch(&self) -> SwitchCost {
        let d = SwitchCost::default();
        SwitchCost { compile_x: self.compile_x.unwrap_or(d.compile_x), load_x: self.load_x.unwrap_or(d.load_x) }
    }

    fn platform_defaults(&self) -> (Vec<Processor>, GenParams) {
        match self.zoo_template {
            ZooTemplate::Jetson => (jetson_processors(), GenParams::jetson()),
            ZooTemplate::Intel | ZooTemplate::Custom => (intel_processors(), GenParams::intel()),
        }
    }

    pub fn zoo(&self) -> Result<Zoo> {
        let full = match self.zoo_template {
            ZooTemplate::Intel => template_zoo(Platform::Intel),
            ZooTemplate::Jetson => template_zoo(Platform::Jetson),
            ZooTemplate::Custom => {
                let path = self.zoo_path.as_ref().ok_or_else(|| Error::Invalid("custom template without zoo_path".into()))?;
                Zoo::from_file(read_json::<ZooFile>(path)?)?
            }
        };
        Ok(full.truncated(self.tasks, self.variants)?)
    }

    pub fn world_config(&self) -> Result<WorldConfig> {
        let (processors, mut params) = self.platform_defaults();
        if let Some(s) = self.sigma_acc {
            params.sigma_acc = s;
        }
        params.comm_ms = self.comm_ms;
        Ok(WorldConfig {
            zoo: self.zoo()?,
            processors: processors.into_iter().take(self.processors as usize).collect(),
            params,
            train_n: self.train_n,
            learner: Learner::default(),
            accuracy: self.accuracy,
        })
    }
}

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub zoo: Zoo,
    pub processors: Vec<Processor>,
    pub params: GenParams,
    pub train_n: usize,
    pub learner: Learner,
    pub accuracy: AccuracyDriver,
}

/// Everything derived from one seed.
pub struct SeedWorld {
    pub seed: u64,
    pub zoo: Zoo,
    pub table: ProfileTable,
    pub estimators: EstimatorSet,
    pub orders: Vec<PlacementOrder>,
    pub candidates: Candidates,
    pub fixed_order: PlacementOrder,
    pub ranges: BTreeMap<u32, TaskRanges>,
    pub comm_ms: f64,
}

impl SeedWorld {
    pub fn build(cfg: &WorldConfig, seed: u64) -> Result<Self> {
        let table = generate_synthetic(&cfg.zoo, &cfg.processors, &cfg.params, seed)?;
        Self::from_parts(cfg.zoo.clone(), table, seed, cfg.train_n, &cfg.learner, cfg.accuracy, cfg.params.comm_ms)
    }

    /// Trains estimators with `seed` on an existing profile table and builds
    /// the candidate tables for every stitched map and order.
    pub fn from_parts(
        zoo: Zoo,
        table: ProfileTable,
        seed: u64,
        train_n: usize,
        learner: &Learner,
        accuracy: AccuracyDriver,
        comm_ms: f64,
    ) -> Result<Self> {
        let tasks: Vec<_> = zoo.tasks().iter().map(|tz| tz.task.clone()).collect();
        let s = tasks.first().map_or(1, |t| t.subgraph_count);
        if tasks.iter().any(|t| t.subgraph_count != s) {
            return Err(Error::Invalid("all tasks must share one subgraph count".into()));
        }
        let n = train_n.min(tasks.iter().map(|t| (t.variant_count as usize).pow(s)).min().unwrap_or(0));
        let estimators = EstimatorSet::train(&tasks, &table, n, learner, seed)?;
        let orders = all_orders(table.proc_count(), s)?;
        let lat = TableLatency { table: &table, comm_ms };
        let maps: Vec<_> = tasks.iter().map(|t| (t.task_id, enumerate_stitched(t))).collect();
        let candidates = match accuracy {
            AccuracyDriver::Estimator => {
                Candidates::build(maps, &PredictedSet { estimators: &estimators, table: &table }, &lat, orders.clone())?
            }
            AccuracyDriver::GroundTruth => Candidates::build(maps, &GroundTruth(&table), &lat, orders.clone())?,
        };
        let ranges = task_ranges(&zoo, &table, &lat, &orders)?;
        let fixed_order = default_fixed_order(table.processors(), s);
        Ok(SeedWorld { seed, zoo, table, estimators, orders, candidates, fixed_order, ranges, comm_ms })
    }

    pub fn world(&self) -> World<'_> {
        World {
            zoo: &self.zoo,
            table: &self.table,
            stitched: &self.candidates,
            estimate_comm_ms: self.comm_ms,
            fixed_order: self.fixed_order.clone(),
        }
    }

    pub fn slo25(&self) -> Vec<SloConfig> {
        generate_slo_configs(&self.ranges)
    }

    /// Satisfying stitched sets per (task, config).
    pub fn satisfying_sets(&self, configs: &[SloConfig]) -> Result<BTreeMap<(u32, u32), Vec<StitchMap>>> {
        let mut out = BTreeMap::new();
        for c in configs {
            for (t, idx) in self.candidates.tasks.iter().zip(self.candidates.feasible_sets(c)?) {
                out.insert((t.task_id, c.config_id), idx.into_iter().map(|i| t.maps[i].clone()).collect());
            }
        }
        Ok(out)
    }

    /// Hotness over the 25 generated configs, then greedy admission at
    /// `frac` of the full-preload memory.
    pub fn preload(&self, frac: f64, admission: Admission) -> Result<PreloadPlan> {
        let hotness = compute_hotness(&self.satisfying_sets(&self.slo25())?);
        let full = self.zoo.full_preload_memory()?;
        Ok(greedy_preload(&hotness, &self.zoo, (full as f64 * frac).floor() as u64, admission))
    }

    /// Mean subgraph latency over every (variant, position, processor) entry.
    pub fn mean_stage_latency_ms(&self) -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for tz in self.zoo.tasks() {
            for i in 1..=tz.task.variant_count {
                for j in 1..=tz.task.subgraph_count {
                    for p in self.table.processors() {
                        sum += self.table.lookup_latency(tz.task.task_id, i, j, p.proc_id)?;
                        n += 1;
                    }
                }
            }
        }
        Ok(sum / n.max(1) as f64)
    }
}

/// Infeasible-task counts for one config at planning time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfeasibleCounts {
    pub config_id: u32,
    /// stitched tasks whose satisfying set is empty
    pub stitched_no_variant: usize,
    /// stitched tasks infeasible for any reason, including the best-order recheck
    pub stitched_total: usize,
    pub adaptive_pipelined: usize,
}

pub fn infeasible_counts(sw: &SeedWorld, configs: &[SloConfig]) -> Result<Vec<InfeasibleCounts>> {
    let world = sw.world();
    configs
        .iter()
        .map(|c| {
            let plan = world.plan(c)?;
            let tasks = sw.zoo.tasks().len();
            let av = world.assignments(PolicyKind::AvP, c, plan.as_ref())?;
            Ok(InfeasibleCounts {
                config_id: c.config_id,
                stitched_no_variant: plan.as_ref().map_or(tasks, |p| p.planning_infeasible_count()),
                stitched_total: plan.as_ref().map_or(tasks, |p| p.infeasible_count()),
                adaptive_pipelined: av.iter().filter(|a| a.choice.map().is_none()).count(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub seed: u64,
    pub budget: String,
    pub budget_bytes: u64,
    pub preloaded_bytes: u64,
    pub preloaded_subgraphs: usize,
    pub violation_rate: f64,
    pub throughput_qps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTableRow {
    pub order: String,
    pub variant: String,
    pub latency_ms: f64,
    pub best_for_variant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderThroughputRow {
    pub seed: u64,
    pub order: String,
    pub mean_latency_ms: f64,
    pub throughput_qps: f64,
    pub chosen_by_optimizer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingCostRow {
    #[serde(rename = "T")]
    pub t: u64,
    #[serde(rename = "V")]
    pub v: u64,
    #[serde(rename = "S")]
    pub s: u32,
    #[serde(rename = "P")]
    pub p: u64,
    pub without_stitching: u64,
    pub stitching_exhaustive: u64,
    pub stitching_with_estimators: u64,
    pub estimator_training_runs: u64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub seed: u64,
    pub task_id: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyErrorRow {
    pub seed: u64,
    pub injected_hop_ms: f64,
    pub pairs: usize,
    #[serde(rename = "MAE_ms")]
    pub mae_ms: f64,
    #[serde(rename = "MAPE")]
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPoint {
    pub policy: String,
    pub x: f64,
    pub violation_rate: f64,
    pub throughput_qps: f64,
}

/// Paths of everything a run wrote, relative to the bundle directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    bundle: Bundle,
}

impl Writer<'_> {
    fn json<T: Serialize>(&mut self, rel: impl AsRef<Path>, v: &T) -> Result<()> {
        write_json(&self.dir.join(rel.as_ref()), v)?;
        self.bundle.files.push(rel.as_ref().to_path_buf());
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, rel: impl AsRef<Path>, seed: Option<u64>, rows: &[T]) -> Result<()> {
        write_csv(&self.dir.join(rel.as_ref()), seed, rows)?;
        self.bundle.files.push(rel.as_ref().to_path_buf());
        Ok(())
    }
}

/// Seeds recorded in a CSV header: the single seed, or none when the file
/// mixes several (each row then carries its own `seed` column).
fn header_seed(spec: &ExperimentSpec) -> Option<u64> {
    (spec.seeds.len() == 1).then(|| spec.seeds[0])
}

fn write_world_files(w: &mut Writer<'_>, sw: &SeedWorld, configs: &[SloConfig]) -> Result<()> {
    let dir = PathBuf::from(format!("seed_{}", sw.seed));
    w.json(dir.join("zoo.json"), &sw.zoo.to_file())?;
    w.json(dir.join("profiles.json"), &sw.table.to_file())?;
    w.json(dir.join("slo_configs.json"), &configs)?;
    let plans: Vec<_> = configs
        .iter()
        .map(|c| sw.world().plan(c))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .map(|p| PlanFile { seed: Some(sw.seed), ..p.to_file(sw.table.processors()) })
        .collect();
    w.json(dir.join("plans.json"), &plans)
}

/// Runs a sweep and writes its bundle into `out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<Bundle> {
    spec.validate()?;
    let ctx = |e: Error| e.context(format!("experiment {}", spec.name));
    let mut w = Writer { dir: out_dir, bundle: Bundle::default() };
    w.json("spec.json", spec).map_err(ctx)?;
    match spec.sweep {
        Sweep::ProfilingCost => profiling_cost_sweep(spec, &mut w),
        Sweep::OrderSensitivity => order_sensitivity_sweep(spec, &mut w),
        Sweep::EstimatorEval => estimator_eval_sweep(spec, &mut w),
        Sweep::Budget => budget_sweep(spec, &mut w),
        Sweep::Slo25 | Sweep::AccGuaranteed | Sweep::LatGuaranteed => policy_sweep(spec, &mut w),
    }
    .map_err(ctx)?;
    Ok(w.bundle)
}

fn build_worlds(spec: &ExperimentSpec) -> Result<Vec<SeedWorld>> {
    let cfg = spec.world_config()?;
    spec.seeds.par_iter().map(|&s| SeedWorld::build(&cfg, s)).collect()
}

fn configs_for(spec: &ExperimentSpec, sw: &SeedWorld) -> Vec<SloConfig> {
    match spec.sweep {
        Sweep::AccGuaranteed => generate_guaranteed_slos(&sw.ranges, GuaranteeMode::AccuracyGuaranteed),
        Sweep::LatGuaranteed => generate_guaranteed_slos(&sw.ranges, GuaranteeMode::LatencyGuaranteed),
        _ => sw.slo25(),
    }
}

fn settings(spec: &ExperimentSpec, sw: &SeedWorld) -> Result<SimSettings> {
    Ok(SimSettings { injected_hop_ms: spec.injected_hop_frac * sw.mean_stage_latency_ms()?, switch: spec.switch() })
}

fn policy_sweep(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<()> {
    let worlds = build_worlds(spec)?;
    let mut rows: Vec<ReportRow> = Vec::new();
    for sw in &worlds {
        let configs = configs_for(spec, sw);
        write_world_files(w, sw, &configs)?;
        info!("seed {}: simulating {} configs", sw.seed, configs.len());
        let report = run_simulation(&sw.world(), &spec.workload(), &PolicyKind::ALL, &configs, &settings(spec, sw)?, None, sw.seed)?;
        rows.extend(report.rows);
    }
    w.csv("report.csv", header_seed(spec), &rows)?;
    let summary = aggregate(&rows);
    w.csv("summary.csv", header_seed(spec), &summary)?;

    // plot data: violation and throughput per policy against the config index
    let points: Vec<PolicyPoint> =
        summary.iter().map(|s| PolicyPoint { policy: s.policy.clone(), x: s.config_id as f64, violation_rate: s.violation_rate, throughput_qps: s.throughput_qps }).collect();
    w.csv("plot_violation_by_config.csv", header_seed(spec), &points)?;
    let per_policy: Vec<PolicyPoint> = aggregate(
        &rows.iter().map(|r| ReportRow { config_id: 0, ..r.clone() }).collect::<Vec<_>>(),
    )
    .into_iter()
    .map(|s| PolicyPoint { policy: s.policy, x: 0.0, violation_rate: s.violation_rate, throughput_qps: s.throughput_qps })
    .collect();
    w.csv("plot_policy_means.csv", header_seed(spec), &per_policy)
}

/// Violation rate and throughput of the stitched policy for one preload plan,
/// averaged over the 25 configs and all arrival orders.
pub fn stitched_under_preload(sw: &SeedWorld, workload: &WorkloadSpec, settings: &SimSettings, preload: Option<&PreloadPlan>) -> Result<(f64, f64)> {
    let report = run_simulation(&sw.world(), workload, &[PolicyKind::Stitched], &sw.slo25(), settings, preload, sw.seed)?;
    let n = report.rows.len().max(1) as f64;
    Ok((
        report.rows.iter().map(|r| r.violation_rate).sum::<f64>() / n,
        report.rows.iter().map(|r| r.throughput_qps).sum::<f64>() / n,
    ))
}

pub fn budget_rows(spec: &ExperimentSpec, sw: &SeedWorld) -> Result<Vec<BudgetRow>> {
    let workload = spec.workload();
    let settings = settings(spec, sw)?;
    let full = PreloadPlan::full(&sw.zoo)?;
    let mut out = Vec::new();
    for &b in &spec.budgets {
        let plan = sw.preload(b, spec.admission)?;
        let (v, t) = stitched_under_preload(sw, &workload, &settings, Some(&plan))?;
        out.push(BudgetRow {
            seed: sw.seed,
            budget: format!("{b}"),
            budget_bytes: plan.budget_bytes,
            preloaded_bytes: plan.total_mem_bytes,
            preloaded_subgraphs: plan.subgraph_count(),
            violation_rate: v,
            throughput_qps: t,
        });
    }
    let (v, t) = stitched_under_preload(sw, &workload, &settings, Some(&full))?;
    out.push(BudgetRow {
        seed: sw.seed,
        budget: "full".into(),
        budget_bytes: full.budget_bytes,
        preloaded_bytes: full.total_mem_bytes,
        preloaded_subgraphs: full.subgraph_count(),
        violation_rate: v,
        throughput_qps: t,
    });
    Ok(out)
}

fn budget_sweep(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<()> {
    let worlds = build_worlds(spec)?;
    let per_seed: Vec<Vec<BudgetRow>> = worlds.par_iter().map(|sw| budget_rows(spec, sw)).collect::<Result<_>>()?;
    for sw in &worlds {
        let configs = sw.slo25();
        write_world_files(w, sw, &configs)?;
        for &b in &spec.budgets {
            let plan = sw.preload(b, spec.admission)?;
            w.json(format!("seed_{}/preload_{b}.json", sw.seed), &PreloadFile { seed: Some(sw.seed), ..plan.to_file() })?;
        }
    }
    let rows: Vec<BudgetRow> = per_seed.into_iter().flatten().collect();
    w.csv("budget_sweep.csv", header_seed(spec), &rows)
}

pub fn published_order_table() -> Vec<OrderTableRow> {
    let f = OrderLatencyFixture::published();
    let mut out = Vec::new();
    for v in ORDER_TABLE_VARIANTS {
        let map = OrderLatencyFixture::variant(v).expect("fixture label");
        let cells: Vec<(String, f64)> = ORDER_TABLE_ORDERS
            .iter()
            .map(|o| {
                let order = f.order(o).expect("fixture order");
                (o.to_string(), f.lookup(&map, &order).expect("fixture cell"))
            })
            .collect();
        let best = cells.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        for (o, l) in cells {
            out.push(OrderTableRow { order: o, variant: v.to_string(), latency_ms: l, best_for_variant: l == best });
        }
    }
    out
}

pub fn order_throughput_rows(spec: &ExperimentSpec, sw: &SeedWorld) -> Result<Vec<OrderThroughputRow>> {
    // loose SLOs: every task takes its fastest map under each forced order
    let loose = SloConfig { config_id: 0, per_task: sw.zoo.task_ids().into_iter().map(|t| (t, TaskSlo::VACUOUS)).collect() };
    let best = sw.world().plan(&loose)?.map(|p| p.best_order);
    let mut out = Vec::new();
    for (k, o) in sw.orders.iter().enumerate() {
        let forced = Candidates { orders: vec![o.clone()], tasks: sw.candidates.tasks.iter().map(|t| {
            let mut t = t.clone();
            t.latency = t.latency.iter().map(|row| vec![row[k]]).collect();
            t
        }).collect() };
        let world = World { stitched: &forced, ..sw.world() };
        let plan = forced.plan(&loose)?;
        let report = run_simulation(&world, &spec.workload(), &[PolicyKind::Stitched], std::slice::from_ref(&loose), &settings(spec, sw)?, None, sw.seed)?;
        let n = report.rows.len().max(1) as f64;
        out.push(OrderThroughputRow {
            seed: sw.seed,
            order: o.label(sw.table.processors()),
            mean_latency_ms: plan.mean_latency_ms,
            throughput_qps: report.rows.iter().map(|r| r.throughput_qps).sum::<f64>() / n,
            chosen_by_optimizer: best.as_ref() == Some(o),
        });
    }
    Ok(out)
}

fn order_sensitivity_sweep(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<()> {
    w.csv("order_table.csv", None, &published_order_table())?;
    let worlds = build_worlds(spec)?;
    let rows: Vec<Vec<OrderThroughputRow>> = worlds.par_iter().map(|sw| order_throughput_rows(spec, sw)).collect::<Result<_>>()?;
    w.csv("order_throughput.csv", header_seed(spec), &rows.into_iter().flatten().collect::<Vec<_>>())
}

pub fn profiling_cost_rows(max_t: u64, max_v: u64, s: u32, p: u64, train_n: u64) -> Result<Vec<ProfilingCostRow>> {
    let mut out = Vec::new();
    for t in 1..=max_t {
        for v in 2..=max_v.max(2) {
            let exhaustive = profiling_cost(t, v, s, p, true, false)?;
            let with = profiling_cost(t, v, s, p, true, true)?;
            out.push(ProfilingCostRow {
                t,
                v,
                s,
                p,
                without_stitching: profiling_cost(t, v, s, p, false, false)?,
                stitching_exhaustive: exhaustive,
                stitching_with_estimators: with,
                estimator_training_runs: training_profiling_runs(t, train_n)?,
                reduction: 1.0 - with as f64 / exhaustive as f64,
            });
        }
    }
    Ok(out)
}

fn profiling_cost_sweep(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<()> {
    let rows = profiling_cost_rows(spec.tasks as u64, spec.variants as u64, spec.subgraphs, spec.processors as u64, spec.train_n as u64)?;
    w.csv("profiling_cost.csv", None, &rows)
}

pub fn recall_rows(sw: &SeedWorld, ks: &[usize]) -> Result<Vec<RecallRow>> {
    let mut out = Vec::new();
    for tz in sw.zoo.tasks() {
        let est = sw.estimators.get(tz.task.task_id).ok_or_else(|| Error::Invalid("missing estimator".into()))?;
        let maps = enumerate_stitched(&tz.task);
        for &k in ks.iter().filter(|&&k| k >= 1 && k <= maps.len()) {
            out.push(RecallRow { seed: sw.seed, task_id: tz.task.task_id, k, recall: top_k_recall(est, &maps, &sw.table, k)? });
        }
    }
    Ok(out)
}

/// Estimated latency (no hop cost) against the simulated lone-query latency
/// with `hop_ms` injected, over every stitched variant and order.
pub fn latency_error_row(sw: &SeedWorld, hop_ms: f64) -> Result<LatencyErrorRow> {
    let mut est = Vec::new();
    let mut sim = Vec::new();
    for tz in sw.zoo.tasks() {
        for map in enumerate_stitched(&tz.task) {
            for o in &sw.orders {
                est.push(estimate_latency(&map, o, &sw.table, 0.0)?);
                sim.push(lone_query_latency(&map, o, &sw.table, hop_ms)?);
            }
        }
    }
    let (mae_ms, mape) = latency_error(&est, &sim)?;
    Ok(LatencyErrorRow { seed: sw.seed, injected_hop_ms: hop_ms, pairs: est.len(), mae_ms, mape })
}

fn estimator_eval_sweep(spec: &ExperimentSpec, w: &mut Writer<'_>) -> Result<()> {
    let worlds = build_worlds(spec)?;
    let per_seed: Vec<(Vec<RecallRow>, Vec<LatencyErrorRow>)> = worlds
        .par_iter()
        .map(|sw| {
            let hop = spec.injected_hop_frac * sw.mean_stage_latency_ms()?;
            let mut lat = vec![latency_error_row(sw, 0.0)?];
            if hop > 0.0 {
                lat.push(latency_error_row(sw, hop)?);
            }
            Ok((recall_rows(sw, &spec.recall_k)?, lat))
        })
        .collect::<Result<_>>()?;
    let (recall, lat): (Vec<_>, Vec<_>) = per_seed.into_iter().unzip();
    w.csv("estimator_eval.csv", header_seed(spec), &recall.into_iter().flatten().collect::<Vec<_>>())?;
    w.csv("latency_error.csv", header_seed(spec), &lat.into_iter().flatten().collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sweep: Sweep) -> ExperimentSpec {
        serde_json::from_value(serde_json::json!({
            "name": "t", "zoo_template": "intel", "T": 2, "V": 4, "S": 3, "P": 3,
            "seeds": [1], "sweep": sweep, "queries": 5, "permutations": "2",
        }))
        .unwrap()
    }

    #[test]
    fn validation() {
        assert!(spec(Sweep::Slo25).validate().is_ok());
        assert!(spec(Sweep::Budget).validate().is_err());
        let mut s = spec(Sweep::Slo25);
        s.subgraphs = 2;
        assert!(s.validate().is_err());
        let mut s = spec(Sweep::Budget);
        s.budgets = vec![0.5, 1.5];
        assert!(s.validate().is_err());
        assert!(serde_json::from_str::<ExperimentSpec>(r#"{"name":"x","zoo_template":"intel","T":1,"V":1,"S":3,"P":3,"seeds":[1],"sweep":"slo25","bogus":1}"#).is_err());
    }

    #[test]
    fn profiling_cost_curve_matches_closed_form() {
        let rows = profiling_cost_rows(8, 10, 3, 3, 50).unwrap();
        assert_eq!(rows.len(), 8 * 9);
        for r in &rows {
            assert_eq!(r.without_stitching, r.t * r.v * 7);
            assert_eq!(r.stitching_exhaustive, r.t * r.v.pow(3) * 7);
            assert_eq!(r.stitching_with_estimators, r.t * r.v + r.t * 3 * r.v * 3);
        }
    }

    #[test]
    fn order_table_flags_published_best() {
        let rows = published_order_table();
        assert_eq!(rows.len(), 36);
        let best: Vec<_> = rows.iter().filter(|r| r.best_for_variant).map(|r| (r.variant.as_str(), r.order.as_str())).collect();
        assert!(best.contains(&("P-Q-P", "C-G-N")));
        assert!(best.contains(&("D-P-Q", "N-C-G")));
    }

    #[test]
    fn bundles_are_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut s = spec(Sweep::Budget);
        s.budgets = vec![0.15, 1.0];
        let fa = run_experiment(&s, a.path()).unwrap();
        let fb = run_experiment(&s, b.path()).unwrap();
        assert_eq!(fa, fb);
        for f in &fa.files {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{}", f.display());
        }
    }

    #[test]
    fn policy_sweep_writes_reports() {
        let d = tempfile::tempdir().unwrap();
        let bundle = run_experiment(&spec(Sweep::AccGuaranteed), d.path()).unwrap();
        assert!(bundle.files.iter().any(|f| f.ends_with("summary.csv")));
        let rows: Vec<ReportRow> = crate::io::read_csv(&d.path().join("report.csv")).unwrap();
        assert_eq!(rows.len(), 7 * 5 * 2);
    }
}
