//! Multi-task serving simulation: per-policy variant selection and placement,
//! the event engine, SLO sweeps, and report aggregation.

pub mod engine;
pub mod slo;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{LatencySource, TableLatency};
use crate::optimizer::{Candidates, Infeasibility, OptimizerError, PlacementOrder, PlanResult, SloConfig, TaskChoice, TaskSlo};
use crate::preloader::{switch_cost_per_stage, PreloadPlan, SwitchCost};
use crate::profiles::{Processor, ProfileTable};
use crate::zoo::{StitchMap, TaskZoo, Zoo};

use engine::{EngineConfig, Job, RunOutcome, Stage};

pub use slo::{generate_guaranteed_slos, generate_slo_configs, task_ranges, GuaranteeMode, TaskRanges};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyKind {
    SvAoP,
    SvAoNp,
    SvLoP,
    SvLoNp,
    AvP,
    AvNp,
    Stitched,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::SvAoP,
        PolicyKind::SvAoNp,
        PolicyKind::SvLoP,
        PolicyKind::SvLoNp,
        PolicyKind::AvP,
        PolicyKind::AvNp,
        PolicyKind::Stitched,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::SvAoP => "SV-AO-P",
            PolicyKind::SvAoNp => "SV-AO-NP",
            PolicyKind::SvLoP => "SV-LO-P",
            PolicyKind::SvLoNp => "SV-LO-NP",
            PolicyKind::AvP => "AV-P",
            PolicyKind::AvNp => "AV-NP",
            PolicyKind::Stitched => "STITCHED",
        }
    }

    pub fn partitioned(self) -> bool {
        !matches!(self, PolicyKind::SvAoNp | PolicyKind::SvLoNp | PolicyKind::AvNp)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.label().eq_ignore_ascii_case(s) || p.label().replace('-', "_").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    /// Order used by partitioned baselines. Ignored by monolithic ones and
    /// by the stitched policy, which takes its order from the optimizer.
    pub fixed_order: PlacementOrder,
}

/// The conventional NPU, GPU, CPU order, truncated to `s` positions;
/// processors with other names follow in id order.
pub fn default_fixed_order(processors: &[Processor], s: u32) -> PlacementOrder {
    let rank = |p: &Processor| match p.name.to_ascii_uppercase().as_str() {
        "NPU" => 0,
        "GPU" => 1,
        "CPU" => 2,
        _ => 3,
    };
    let mut ps: Vec<&Processor> = processors.iter().collect();
    ps.sort_by_key(|p| (rank(p), p.proc_id));
    PlacementOrder { procs: ps.iter().take(s as usize).map(|p| p.proc_id).collect() }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Pipelined(PlacementOrder),
    /// Whole variant as one unit on one processor.
    Monolithic(u32),
}

impl Placement {
    pub fn procs(&self, s: usize) -> Vec<u32> {
        match self {
            Placement::Pipelined(o) => o.procs.clone(),
            Placement::Monolithic(p) => vec![*p; s],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub task_id: u32,
    pub choice: TaskChoice,
    pub placement: Option<Placement>,
}

impl Assignment {
    fn infeasible(task_id: u32, why: Infeasibility) -> Self {
        Assignment { task_id, choice: TaskChoice::Infeasible(why), placement: None }
    }
}

fn monolithic_ms(table: &ProfileTable, map: &StitchMap, proc_id: u32) -> crate::Result<f64> {
    let mut total = 0.0;
    for key in map.subgraph_keys() {
        total += table.lookup_latency(key.task_id, key.variant_index, key.position, proc_id)?;
    }
    Ok(total)
}

/// Fastest processor for running `map` whole; ties go to the lower id.
fn best_processor(table: &ProfileTable, map: &StitchMap) -> crate::Result<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for p in table.processors() {
        let l = monolithic_ms(table, map, p.proc_id)?;
        if best.is_none_or(|(_, bl)| l < bl) {
            best = Some((p.proc_id, l));
        }
    }
    best.ok_or_else(|| crate::Error::Invalid("profile table lists no processors".into()))
}

/// Latency of an original variant under the policy's placement mode.
fn placed_latency(kind: PolicyKind, map: &StitchMap, fixed: &PlacementOrder, table: &ProfileTable, lat: &dyn LatencySource) -> crate::Result<(Placement, f64)> {
    if kind.partitioned() {
        Ok((Placement::Pipelined(fixed.clone()), lat.end_to_end_ms(map, fixed)?))
    } else {
        let (p, l) = best_processor(table, map)?;
        Ok((Placement::Monolithic(p), l))
    }
}

/// Variant and placement a baseline policy runs for one task. The stitched
/// policy reads its choice from `plan` instead.
pub fn select_for_policy(
    policy: &Policy,
    tz: &TaskZoo,
    table: &ProfileTable,
    lat: &dyn LatencySource,
    slo: TaskSlo,
    plan: Option<&PlanResult>,
) -> crate::Result<Assignment> {
    let t = &tz.task;
    if policy.kind == PolicyKind::Stitched {
        let Some(plan) = plan else {
            return Ok(Assignment::infeasible(t.task_id, Infeasibility::NoFeasibleVariant));
        };
        let choice = plan.per_task_choice.get(&t.task_id).cloned().unwrap_or(TaskChoice::Infeasible(Infeasibility::NoFeasibleVariant));
        let placement = choice.map().map(|_| Placement::Pipelined(plan.best_order.clone()));
        return Ok(Assignment { task_id: t.task_id, choice, placement });
    }

    let originals: Vec<StitchMap> = (1..=t.variant_count).map(|i| StitchMap::constant(t.task_id, i, t.subgraph_count)).collect();
    let mut best: Option<(usize, f64, Placement)> = None;
    for (k, map) in originals.iter().enumerate() {
        let i = k as u32 + 1;
        let (placement, l) = placed_latency(policy.kind, map, &policy.fixed_order, table, lat)?;
        let key = match policy.kind {
            PolicyKind::SvAoP | PolicyKind::SvAoNp => -table.variant_accuracy(t.task_id, i)?,
            PolicyKind::SvLoP | PolicyKind::SvLoNp => l,
            _ => {
                if table.variant_accuracy(t.task_id, i)? < slo.acc_floor || l > slo.lat_ceiling_ms {
                    continue;
                }
                l
            }
        };
        if best.as_ref().is_none_or(|(_, bk, _)| key < *bk) {
            best = Some((k, key, placement));
        }
    }
    Ok(match best {
        Some((k, _, placement)) => {
            Assignment { task_id: t.task_id, choice: TaskChoice::Chosen(originals[k].clone()), placement: Some(placement) }
        }
        None => Assignment::infeasible(t.task_id, Infeasibility::NoFeasibleVariant),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Permutations {
    All,
    First(usize),
}

impl FromStr for Permutations {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Permutations::All);
        }
        s.parse::<usize>().map(Permutations::First).map_err(|_| format!("expected `all` or a count, got {s:?}"))
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    while let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) {
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub queries_per_task: u32,
    pub permutations: Permutations,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec { queries_per_task: 100, permutations: Permutations::All }
    }
}

impl WorkloadSpec {
    pub fn arrival_orders(&self, tasks: usize) -> Vec<Vec<usize>> {
        let mut all = permutations(tasks);
        if let Permutations::First(n) = self.permutations {
            all.truncate(n);
        }
        all
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    /// Per-hop delay applied by the simulator only; the estimators never see it.
    pub injected_hop_ms: f64,
    pub switch: SwitchCost,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings { injected_hop_ms: 0.0, switch: SwitchCost::default() }
    }
}

/// Static inputs shared by every run of one synthetic world.
pub struct World<'a> {
    pub zoo: &'a Zoo,
    pub table: &'a ProfileTable,
    /// Stitched candidates scored by whichever accuracy source drives planning.
    pub stitched: &'a Candidates,
    pub estimate_comm_ms: f64,
    pub fixed_order: PlacementOrder,
}

impl World<'_> {
    pub fn latency(&self) -> TableLatency<'_> {
        TableLatency { table: self.table, comm_ms: self.estimate_comm_ms }
    }

    pub fn plan(&self, slo: &SloConfig) -> crate::Result<Option<PlanResult>> {
        match self.stitched.plan(slo) {
            Ok(p) => Ok(Some(p)),
            Err(OptimizerError::AllTasksInfeasible) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn assignments(&self, kind: PolicyKind, slo: &SloConfig, plan: Option<&PlanResult>) -> crate::Result<Vec<Assignment>> {
        let policy = Policy { kind, fixed_order: self.fixed_order.clone() };
        let lat = self.latency();
        self.zoo.tasks().iter().map(|tz| select_for_policy(&policy, tz, self.table, &lat, slo.get(tz.task.task_id)?, plan)).collect()
    }
}

/// Engine jobs for the feasible assignments. Switch costs are charged for
/// subgraphs missing from `preload`; `None` means everything is resident.
pub fn build_jobs(assignments: &[Assignment], table: &ProfileTable, preload: Option<&PreloadPlan>, switch: SwitchCost) -> crate::Result<Vec<Job>> {
    let mut jobs = Vec::new();
    for a in assignments {
        let (Some(map), Some(placement)) = (a.choice.map(), &a.placement) else { continue };
        let procs = placement.procs(map.donors.len());
        let extra = match preload {
            Some(plan) => switch_cost_per_stage(map, &procs, plan, table, switch)?,
            None => vec![0.0; procs.len()],
        };
        let mut stages = Vec::with_capacity(procs.len());
        for (key, (&p, &x)) in map.subgraph_keys().zip(procs.iter().zip(&extra)) {
            stages.push(Stage {
                proc_id: p,
                service_ms: table.lookup_latency(key.task_id, key.variant_index, key.position, p)?,
                first_query_extra_ms: x,
            });
        }
        if let Placement::Monolithic(p) = placement {
            let service_ms = stages.iter().map(|s| s.service_ms).sum();
            let first_query_extra_ms = stages.iter().map(|s| s.first_query_extra_ms).sum();
            stages = vec![Stage { proc_id: *p, service_ms, first_query_extra_ms }];
        }
        jobs.push(Job { task_id: a.task_id, stages });
    }
    Ok(jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub config_id: u32,
    pub permutation_index: usize,
    pub seed: u64,
    pub violation_rate: f64,
    pub throughput_qps: f64,
    pub mean_latency_ms: Option<f64>,
    pub infeasible_tasks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub violations: usize,
    pub infeasible: usize,
}

/// A task violates when it is infeasible, when its variant's true accuracy
/// is below the floor, or when its mean query latency exceeds the ceiling.
pub fn judge(assignments: &[Assignment], outcome: &RunOutcome, slo: &SloConfig, table: &ProfileTable) -> crate::Result<Verdict> {
    let mut v = Verdict { violations: 0, infeasible: 0 };
    for a in assignments {
        let s = slo.get(a.task_id)?;
        let Some(map) = a.choice.map() else {
            v.infeasible += 1;
            v.violations += 1;
            continue;
        };
        let mean = outcome.per_task.iter().find(|t| t.task_id == a.task_id).and_then(|t| t.mean_latency_ms());
        let late = mean.is_none_or(|m| m > s.lat_ceiling_ms);
        if table.stitched_accuracy_truth(map)? < s.acc_floor || late {
            v.violations += 1;
        }
    }
    Ok(v)
}

/// Simulates one policy under one config for one arrival order.
pub fn run_once(
    assignments: &[Assignment],
    table: &ProfileTable,
    arrival: &[usize],
    workload: &WorkloadSpec,
    settings: &SimSettings,
    preload: Option<&PreloadPlan>,
    record_trace: bool,
) -> crate::Result<RunOutcome> {
    let jobs = build_jobs(assignments, table, preload, settings.switch)?;
    // `arrival` indexes tasks; map to the feasible jobs in that order
    let order: Vec<usize> = arrival
        .iter()
        .filter_map(|&k| assignments.get(k))
        .filter_map(|a| jobs.iter().position(|j| j.task_id == a.task_id))
        .collect();
    let cfg = EngineConfig { queries: workload.queries_per_task, hop_ms: settings.injected_hop_ms, record_trace };
    Ok(engine::simulate(&jobs, &order, cfg))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimReport {
    pub rows: Vec<ReportRow>,
}

/// Runs every (policy, config, arrival order) combination. The stitched
/// policy is charged switch costs against `preload`; baselines keep every
/// original variant resident.
pub fn run_simulation(
    world: &World<'_>,
    workload: &WorkloadSpec,
    policies: &[PolicyKind],
    configs: &[SloConfig],
    settings: &SimSettings,
    preload: Option<&PreloadPlan>,
    seed: u64,
) -> crate::Result<SimReport> {
    let plans = configs.iter().map(|c| world.plan(c)).collect::<crate::Result<Vec<_>>>()?;
    run_simulation_with_plans(world, workload, policies, configs, &plans, settings, preload, seed)
}

/// As [`run_simulation`], with the stitched plans supplied by the caller
/// (one per config, `None` when every task is infeasible).
#[allow(clippy::too_many_arguments)]
pub fn run_simulation_with_plans(
    world: &World<'_>,
    workload: &WorkloadSpec,
    policies: &[PolicyKind],
    configs: &[SloConfig],
    plans: &[Option<PlanResult>],
    settings: &SimSettings,
    preload: Option<&PreloadPlan>,
    seed: u64,
) -> crate::Result<SimReport> {
    if plans.len() != configs.len() {
        return Err(crate::Error::Invalid(format!("{} plans for {} configs", plans.len(), configs.len())));
    }
    if let Some((c, p)) = configs.iter().zip(plans).find(|(c, p)| p.as_ref().is_some_and(|p| p.config_id != c.config_id)) {
        return Err(crate::Error::Invalid(format!("plan for config {} paired with config {}", p.as_ref().map_or(0, |p| p.config_id), c.config_id)));
    }
    let arrivals = workload.arrival_orders(world.zoo.tasks().len());
    let mut jobs = Vec::new();
    for &kind in policies {
        for (c, plan) in configs.iter().zip(plans) {
            let assignments = world.assignments(kind, c, plan.as_ref())?;
            jobs.push((kind, c, assignments));
        }
    }
    let mut rows: Vec<(PolicyKind, ReportRow)> = jobs
        .par_iter()
        .flat_map_iter(|(kind, c, assignments)| {
            let pre = if *kind == PolicyKind::Stitched { preload } else { None };
            arrivals.iter().enumerate().map(move |(pi, arrival)| {
                let out = run_once(assignments, world.table, arrival, workload, settings, pre, false)?;
                let verdict = judge(assignments, &out, c, world.table)?;
                let lat: Vec<f64> = out.per_task.iter().flat_map(|t| t.latencies_ms.iter().copied()).collect();
                Ok((
                    *kind,
                    ReportRow {
                        policy: kind.label().to_string(),
                        config_id: c.config_id,
                        permutation_index: pi,
                        seed,
                        violation_rate: verdict.violations as f64 / assignments.len().max(1) as f64,
                        throughput_qps: out.throughput_qps(),
                        mean_latency_ms: (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64),
                        infeasible_tasks: verdict.infeasible,
                    },
                ))
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    rows.sort_by_key(|(kind, r)| (*kind, r.config_id, r.permutation_index));
    Ok(SimReport { rows: rows.into_iter().map(|(_, r)| r).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub config_id: u32,
    pub runs: usize,
    pub violation_rate: f64,
    pub throughput_qps: f64,
}

/// Mean violation rate and throughput per (policy, config), in order of
/// first appearance.
pub fn aggregate(rows: &[ReportRow]) -> Vec<SummaryRow> {
    let mut index: BTreeMap<(String, u32), usize> = BTreeMap::new();
    let mut acc: Vec<(String, u32, usize, f64, f64)> = Vec::new();
    for r in rows {
        let k = *index.entry((r.policy.clone(), r.config_id)).or_insert_with(|| {
            acc.push((r.policy.clone(), r.config_id, 0, 0.0, 0.0));
            acc.len() - 1
        });
        acc[k].2 += 1;
        acc[k].3 += r.violation_rate;
        acc[k].4 += r.throughput_qps;
    }
    acc.into_iter()
        .map(|(policy, config_id, n, v, t)| SummaryRow { policy, config_id, runs: n, violation_rate: v / n as f64, throughput_qps: t / n as f64 })
        .collect()
}

/// Simulated latency of one query of `map` alone on the machine.
pub fn lone_query_latency(map: &StitchMap, order: &PlacementOrder, table: &ProfileTable, hop_ms: f64) -> crate::Result<f64> {
    let a = Assignment { task_id: map.task_id, choice: TaskChoice::Chosen(map.clone()), placement: Some(Placement::Pipelined(order.clone())) };
    let workload = WorkloadSpec { queries_per_task: 1, permutations: Permutations::All };
    let settings = SimSettings { injected_hop_ms: hop_ms, switch: SwitchCost::default() };
    let out = run_once(&[a], table, &[0], &workload, &settings, None, false)?;
    out.per_task[0].mean_latency_ms().ok_or_else(|| crate::Error::Invalid("query did not complete".into()))
}
