//! Joint placement-order and variant selection.
//!
//! Every task keeps the candidates that meet its accuracy floor and fit its
//! latency ceiling under at least one order. One global order is then picked
//! to minimize the mean, over tasks with candidates, of each task's fastest
//! candidate; each task finally takes its fastest candidate under that order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::estimator::{AccuracySource, LatencySource};
use crate::profiles::Processor;
use crate::zoo::StitchMap;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OptimizerError {
    #[error("no task has a feasible variant")]
    AllTasksInfeasible,
    #[error("the set of placement orders is empty")]
    NoOrders,
    #[error("{positions} positions cannot be placed on {processors} processors without overlap")]
    TooManyPositions { positions: u32, processors: u32 },
    #[error("SLO config {config_id} has no entry for task {task_id}")]
    MissingSlo { config_id: u32, task_id: u32 },
    #[error("bad placement order: {0}")]
    BadOrder(String),
}

/// Processor id per subgraph position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlacementOrder {
    pub procs: Vec<u32>,
}

impl PlacementOrder {
    /// Parses `N-G-C` style labels against the processors' tags.
    pub fn parse(label: &str, processors: &[Processor]) -> Option<Self> {
        let procs = label
            .split('-')
            .map(|part| {
                let mut chars = part.chars();
                let c = chars.next()?.to_ascii_uppercase();
                if chars.next().is_some() {
                    return processors.iter().find(|p| p.name.eq_ignore_ascii_case(part)).map(|p| p.proc_id);
                }
                processors.iter().find(|p| p.tag() == c).map(|p| p.proc_id)
            })
            .collect::<Option<Vec<u32>>>()?;
        let mut seen = procs.clone();
        seen.sort_unstable();
        seen.dedup();
        (seen.len() == procs.len()).then_some(PlacementOrder { procs })
    }

    pub fn label(&self, processors: &[Processor]) -> String {
        self.procs
            .iter()
            .map(|id| processors.iter().find(|p| p.proc_id == *id).map_or('?', Processor::tag).to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn names(&self, processors: &[Processor]) -> Vec<String> {
        self.procs
            .iter()
            .map(|id| processors.iter().find(|p| p.proc_id == *id).map_or_else(|| format!("#{id}"), |p| p.name.clone()))
            .collect()
    }
}

/// All injective assignments of processors `1..=p` to `s` positions, in
/// lexicographic order of the processor-id sequence.
pub fn all_orders(p: u32, s: u32) -> Result<Vec<PlacementOrder>, OptimizerError> {
    if s > p {
        return Err(OptimizerError::TooManyPositions { positions: s, processors: p });
    }
    fn extend(prefix: &mut Vec<u32>, p: u32, s: u32, out: &mut Vec<PlacementOrder>) {
        if prefix.len() == s as usize {
            out.push(PlacementOrder { procs: prefix.clone() });
            return;
        }
        for id in 1..=p {
            if !prefix.contains(&id) {
                prefix.push(id);
                extend(prefix, p, s, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), p, s, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSlo {
    pub acc_floor: f64,
    pub lat_ceiling_ms: f64,
}

impl TaskSlo {
    pub const VACUOUS: TaskSlo = TaskSlo { acc_floor: 0.0, lat_ceiling_ms: f64::INFINITY };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloConfig {
    pub config_id: u32,
    pub per_task: BTreeMap<u32, TaskSlo>,
}

impl SloConfig {
    pub fn get(&self, task_id: u32) -> Result<TaskSlo, OptimizerError> {
        self.per_task.get(&task_id).copied().ok_or(OptimizerError::MissingSlo { config_id: self.config_id, task_id })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasibility {
    /// No candidate meets both constraints under any order.
    NoFeasibleVariant,
    /// Candidates exist, but none fits the latency ceiling under the chosen order.
    InfeasibleUnderBestOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskChoice {
    Chosen(StitchMap),
    Infeasible(Infeasibility),
}

impl TaskChoice {
    pub fn map(&self) -> Option<&StitchMap> {
        match self {
            TaskChoice::Chosen(m) => Some(m),
            TaskChoice::Infeasible(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub config_id: u32,
    pub best_order: PlacementOrder,
    pub per_task_choice: BTreeMap<u32, TaskChoice>,
    /// Objective of the chosen order: mean over tasks with candidates of
    /// their fastest candidate's latency.
    pub mean_latency_ms: f64,
    /// Mean latency of the variants actually chosen (tasks marked
    /// infeasible excluded); equals `mean_latency_ms` unless a task was
    /// marked infeasible under the best order.
    pub chosen_mean_latency_ms: Option<f64>,
}

impl PlanResult {
    pub fn infeasible_count(&self) -> usize {
        self.per_task_choice.values().filter(|c| c.map().is_none()).count()
    }

    pub fn planning_infeasible_count(&self) -> usize {
        self.per_task_choice.values().filter(|c| **c == TaskChoice::Infeasible(Infeasibility::NoFeasibleVariant)).count()
    }

    pub fn to_file(&self, processors: &[Processor]) -> PlanFile {
        PlanFile {
            config_id: self.config_id,
            best_order: self.best_order.names(processors),
            per_task: self
                .per_task_choice
                .iter()
                .map(|(&task_id, c)| match c {
                    TaskChoice::Chosen(m) => PlanTaskRecord { task_id, donors: Some(m.donors.clone()), infeasible: None },
                    TaskChoice::Infeasible(why) => PlanTaskRecord { task_id, donors: None, infeasible: Some(*why) },
                })
                .collect(),
            mean_latency_ms: self.mean_latency_ms,
            chosen_mean_latency_ms: self.chosen_mean_latency_ms,
            seed: None,
        }
    }

    pub fn from_file(file: &PlanFile, processors: &[Processor]) -> Result<Self, OptimizerError> {
        let procs = file
            .best_order
            .iter()
            .map(|name| {
                processors
                    .iter()
                    .find(|p| p.name == *name)
                    .map(|p| p.proc_id)
                    .ok_or_else(|| OptimizerError::BadOrder(format!("unknown processor {name}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut per_task_choice = BTreeMap::new();
        for r in &file.per_task {
            let choice = match (&r.donors, r.infeasible) {
                (Some(d), None) => TaskChoice::Chosen(StitchMap { task_id: r.task_id, donors: d.clone() }),
                (None, Some(why)) => TaskChoice::Infeasible(why),
                _ => return Err(OptimizerError::BadOrder(format!("task {} needs exactly one of donors/infeasible", r.task_id))),
            };
            per_task_choice.insert(r.task_id, choice);
        }
        Ok(PlanResult {
            config_id: file.config_id,
            best_order: PlacementOrder { procs },
            per_task_choice,
            mean_latency_ms: file.mean_latency_ms,
            chosen_mean_latency_ms: file.chosen_mean_latency_ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub config_id: u32,
    pub best_order: Vec<String>,
    pub per_task: Vec<PlanTaskRecord>,
    pub mean_latency_ms: f64,
    #[serde(default)]
    pub chosen_mean_latency_ms: Option<f64>,
    /// seed of the estimators that drove planning, when any
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanTaskRecord {
    pub task_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donors: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infeasible: Option<Infeasibility>,
}

/// Accuracy and per-order latency of every candidate of one task, so that
/// many SLO configs can be planned without repeated lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskCandidates {
    pub task_id: u32,
    pub maps: Vec<StitchMap>,
    pub accuracy: Vec<f64>,
    /// `latency[map][order]`
    pub latency: Vec<Vec<f64>>,
}

impl TaskCandidates {
    pub fn build(
        task_id: u32,
        maps: Vec<StitchMap>,
        acc: &dyn AccuracySource,
        lat: &dyn LatencySource,
        orders: &[PlacementOrder],
    ) -> crate::Result<Self> {
        let accuracy = maps.iter().map(|m| acc.accuracy(m)).collect::<crate::Result<Vec<_>>>()?;
        let latency = maps
            .iter()
            .map(|m| orders.iter().map(|o| lat.end_to_end_ms(m, o)).collect::<crate::Result<Vec<_>>>())
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(TaskCandidates { task_id, maps, accuracy, latency })
    }

    /// Indices of maps meeting the floor and fitting the ceiling under some order.
    pub fn feasible(&self, slo: TaskSlo) -> Vec<usize> {
        (0..self.maps.len())
            .filter(|&i| self.accuracy[i] >= slo.acc_floor && self.latency[i].iter().any(|&l| l <= slo.lat_ceiling_ms))
            .collect()
    }

    /// Fastest of `feasible` under order `o`; ties go to the smaller donor vector.
    fn fastest(&self, feasible: &[usize], o: usize) -> Option<usize> {
        feasible.iter().copied().min_by(|&a, &b| {
            self.latency[a][o].total_cmp(&self.latency[b][o]).then_with(|| self.maps[a].donors.cmp(&self.maps[b].donors))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub orders: Vec<PlacementOrder>,
    pub tasks: Vec<TaskCandidates>,
}

impl Candidates {
    pub fn build(
        task_maps: Vec<(u32, Vec<StitchMap>)>,
        acc: &dyn AccuracySource,
        lat: &dyn LatencySource,
        orders: Vec<PlacementOrder>,
    ) -> crate::Result<Self> {
        if orders.is_empty() {
            return Err(OptimizerError::NoOrders.into());
        }
        let tasks = task_maps
            .into_iter()
            .map(|(t, maps)| TaskCandidates::build(t, maps, acc, lat, &orders))
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(Candidates { orders, tasks })
    }

    pub fn feasible_sets(&self, slo: &SloConfig) -> Result<Vec<Vec<usize>>, OptimizerError> {
        self.tasks.iter().map(|t| Ok(t.feasible(slo.get(t.task_id)?))).collect()
    }

    /// Mean over tasks with candidates of their fastest candidate under order `o`.
    fn objective(&self, feasible: &[Vec<usize>], o: usize) -> Option<f64> {
        let mins: Vec<f64> = self
            .tasks
            .iter()
            .zip(feasible)
            .filter_map(|(t, f)| t.fastest(f, o).map(|i| t.latency[i][o]))
            .collect();
        (!mins.is_empty()).then(|| mins.iter().sum::<f64>() / mins.len() as f64)
    }

    /// Index of the best order and its objective value.
    pub fn choose_order(&self, feasible: &[Vec<usize>]) -> Result<(usize, f64), OptimizerError> {
        let mut best: Option<(usize, f64)> = None;
        for o in 0..self.orders.len() {
            let value = self.objective(feasible, o).ok_or(OptimizerError::AllTasksInfeasible)?;
            // orders are visited lexicographically, so strict < keeps the first tie
            if best.is_none_or(|(_, v)| value < v) {
                best = Some((o, value));
            }
        }
        best.ok_or(OptimizerError::NoOrders)
    }

    pub fn select(&self, feasible: &[Vec<usize>], o: usize, slo: &SloConfig) -> Result<BTreeMap<u32, TaskChoice>, OptimizerError> {
        let mut out = BTreeMap::new();
        for (t, f) in self.tasks.iter().zip(feasible) {
            let ceiling = slo.get(t.task_id)?.lat_ceiling_ms;
            let choice = match t.fastest(f, o) {
                None => TaskChoice::Infeasible(Infeasibility::NoFeasibleVariant),
                Some(i) if t.latency[i][o] > ceiling => TaskChoice::Infeasible(Infeasibility::InfeasibleUnderBestOrder),
                Some(i) => TaskChoice::Chosen(t.maps[i].clone()),
            };
            out.insert(t.task_id, choice);
        }
        Ok(out)
    }

    pub fn plan(&self, slo: &SloConfig) -> Result<PlanResult, OptimizerError> {
        let feasible = self.feasible_sets(slo)?;
        let (o, mean_latency_ms) = self.choose_order(&feasible)?;
        let per_task_choice = self.select(&feasible, o, slo)?;
        let chosen: Vec<f64> = self
            .tasks
            .iter()
            .filter_map(|t| {
                let m = per_task_choice[&t.task_id].map()?;
                t.maps.iter().position(|x| x == m).map(|i| t.latency[i][o])
            })
            .collect();
        let chosen_mean_latency_ms = (!chosen.is_empty()).then(|| chosen.iter().sum::<f64>() / chosen.len() as f64);
        Ok(PlanResult {
            config_id: slo.config_id,
            best_order: self.orders[o].clone(),
            per_task_choice,
            mean_latency_ms,
            chosen_mean_latency_ms,
        })
    }
}

/// Candidates of one task that meet `slo` under at least one order.
pub fn filter_feasible(
    candidates: &[StitchMap],
    acc: &dyn AccuracySource,
    lat: &dyn LatencySource,
    slo: TaskSlo,
    orders: &[PlacementOrder],
) -> crate::Result<Vec<StitchMap>> {
    if orders.is_empty() {
        return Err(OptimizerError::NoOrders.into());
    }
    let mut out = Vec::new();
    for m in candidates {
        if acc.accuracy(m)? < slo.acc_floor {
            continue;
        }
        for o in orders {
            if lat.end_to_end_ms(m, o)? <= slo.lat_ceiling_ms {
                out.push(m.clone());
                break;
            }
        }
    }
    Ok(out)
}

/// Order minimizing the mean of per-task fastest feasible latencies, with that mean.
pub fn choose_order(
    feasible: &BTreeMap<u32, Vec<StitchMap>>,
    lat: &dyn LatencySource,
    orders: &[PlacementOrder],
) -> crate::Result<(PlacementOrder, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, o) in orders.iter().enumerate() {
        let mut mins = Vec::new();
        for maps in feasible.values().filter(|m| !m.is_empty()) {
            let mut lo = f64::INFINITY;
            for m in maps {
                lo = lo.min(lat.end_to_end_ms(m, o)?);
            }
            mins.push(lo);
        }
        if mins.is_empty() {
            return Err(OptimizerError::AllTasksInfeasible.into());
        }
        let value = mins.iter().sum::<f64>() / mins.len() as f64;
        if best.is_none_or(|(_, v)| value < v) {
            best = Some((k, value));
        }
    }
    let (k, v) = best.ok_or(OptimizerError::NoOrders)?;
    Ok((orders[k].clone(), v))
}

/// Fastest feasible map per task under `best_order`, re-checked against the ceiling.
pub fn select_final_variants(
    feasible: &BTreeMap<u32, Vec<StitchMap>>,
    lat: &dyn LatencySource,
    best_order: &PlacementOrder,
    slo: &SloConfig,
) -> crate::Result<BTreeMap<u32, TaskChoice>> {
    let mut out = BTreeMap::new();
    for (&task_id, maps) in feasible {
        let mut best: Option<(f64, &StitchMap)> = None;
        for m in maps {
            let l = lat.end_to_end_ms(m, best_order)?;
            if best.is_none_or(|(bl, bm)| l < bl || (l == bl && m.donors < bm.donors)) {
                best = Some((l, m));
            }
        }
        let choice = match best {
            None => TaskChoice::Infeasible(Infeasibility::NoFeasibleVariant),
            Some((l, _)) if l > slo.get(task_id)?.lat_ceiling_ms => TaskChoice::Infeasible(Infeasibility::InfeasibleUnderBestOrder),
            Some((_, m)) => TaskChoice::Chosen(m.clone()),
        };
        out.insert(task_id, choice);
    }
    Ok(out)
}

/// Full selection over explicit candidate sets.
pub fn plan(
    task_maps: Vec<(u32, Vec<StitchMap>)>,
    acc: &dyn AccuracySource,
    lat: &dyn LatencySource,
    orders: Vec<PlacementOrder>,
    slo: &SloConfig,
) -> crate::Result<PlanResult> {
    Ok(Candidates::build(task_maps, acc, lat, orders)?.plan(slo)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::OrderLatencyFixture;
    use crate::rng::{stream, Stream};
    use rand::Rng as _;
    use std::collections::HashMap;

    /// Hand-built sources keyed by donor vector (and order).
    struct Hand {
        acc: HashMap<(u32, Vec<u32>), f64>,
        lat: HashMap<(u32, Vec<u32>, Vec<u32>), f64>,
    }

    impl AccuracySource for Hand {
        fn accuracy(&self, m: &StitchMap) -> crate::Result<f64> {
            Ok(self.acc[&(m.task_id, m.donors.clone())])
        }
    }

    impl LatencySource for Hand {
        fn end_to_end_ms(&self, m: &StitchMap, o: &PlacementOrder) -> crate::Result<f64> {
            Ok(self.lat[&(m.task_id, m.donors.clone(), o.procs.clone())])
        }
    }

    fn map(t: u32, d: &[u32]) -> StitchMap {
        StitchMap { task_id: t, donors: d.to_vec() }
    }

    fn all_maps(t: u32, v: u32, s: u32) -> Vec<StitchMap> {
        crate::zoo::enumerate_stitched(&crate::zoo::Task { task_id: t, name: String::new(), variant_count: v, subgraph_count: s })
    }

    fn slo(entries: &[(u32, f64, f64)]) -> SloConfig {
        SloConfig {
            config_id: 0,
            per_task: entries.iter().map(|&(t, a, l)| (t, TaskSlo { acc_floor: a, lat_ceiling_ms: l })).collect(),
        }
    }

    fn random_instance(seed: u64, t: u32, v: u32, s: u32, p: u32) -> (Hand, Vec<(u32, Vec<StitchMap>)>, SloConfig) {
        let mut rng = stream(seed, Stream::Instance, 0);
        let orders = all_orders(p, s).unwrap();
        let mut hand = Hand { acc: HashMap::new(), lat: HashMap::new() };
        let mut task_maps = Vec::new();
        let mut cfg = SloConfig { config_id: seed as u32, per_task: BTreeMap::new() };
        for task in 1..=t {
            let maps = all_maps(task, v, s);
            for m in &maps {
                hand.acc.insert((task, m.donors.clone()), rng.random_range(70.0..95.0));
                for o in &orders {
                    hand.lat.insert((task, m.donors.clone(), o.procs.clone()), rng.random_range(5.0..30.0));
                }
            }
            cfg.per_task.insert(task, TaskSlo { acc_floor: rng.random_range(70.0..95.0), lat_ceiling_ms: rng.random_range(5.0..30.0) });
            task_maps.push((task, maps));
        }
        (hand, task_maps, cfg)
    }

    /// Exhaustive search over every order and every combination of feasible choices.
    fn brute_force(hand: &Hand, task_maps: &[(u32, Vec<StitchMap>)], cfg: &SloConfig, orders: &[PlacementOrder]) -> Option<f64> {
        let feasible: Vec<Vec<&StitchMap>> = task_maps
            .iter()
            .map(|(t, maps)| {
                let s = cfg.per_task[t];
                maps.iter()
                    .filter(|m| {
                        hand.acc[&(*t, m.donors.clone())] >= s.acc_floor
                            && orders.iter().any(|o| hand.lat[&(*t, m.donors.clone(), o.procs.clone())] <= s.lat_ceiling_ms)
                    })
                    .collect()
            })
            .filter(|f: &Vec<&StitchMap>| !f.is_empty())
            .collect();
        if feasible.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        for o in orders {
            let mut idx = vec![0usize; feasible.len()];
            loop {
                let total: f64 = feasible
                    .iter()
                    .zip(&idx)
                    .map(|(f, &i)| hand.lat[&(f[i].task_id, f[i].donors.clone(), o.procs.clone())])
                    .sum();
                best = best.min(total / feasible.len() as f64);
                let mut k = 0;
                while k < idx.len() {
                    idx[k] += 1;
                    if idx[k] < feasible[k].len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == idx.len() {
                    break;
                }
            }
        }
        Some(best)
    }

    #[test]
    fn orders_are_injective_and_lexicographic() {
        let o = all_orders(3, 3).unwrap();
        assert_eq!(o.len(), 6);
        assert_eq!(o[0].procs, vec![1, 2, 3]);
        assert_eq!(o[5].procs, vec![3, 2, 1]);
        assert!(o.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(all_orders(4, 2).unwrap().len(), 12);
        assert_eq!(all_orders(2, 3), Err(OptimizerError::TooManyPositions { positions: 3, processors: 2 }));
    }

    #[test]
    fn order_labels_roundtrip() {
        let f = OrderLatencyFixture::published();
        let o = PlacementOrder::parse("N-G-C", f.processors()).unwrap();
        assert_eq!(o.procs, vec![3, 2, 1]);
        assert_eq!(o.label(f.processors()), "N-G-C");
        assert_eq!(PlacementOrder::parse("NPU-GPU-CPU", f.processors()), Some(o));
        assert_eq!(PlacementOrder::parse("N-N-C", f.processors()), None);
        assert_eq!(PlacementOrder::parse("X-G-C", f.processors()), None);
    }

    #[test]
    fn filter_vacuous_and_impossible() {
        let (hand, task_maps, _) = random_instance(3, 1, 3, 3, 3);
        let orders = all_orders(3, 3).unwrap();
        let maps = &task_maps[0].1;
        assert_eq!(filter_feasible(maps, &hand, &hand, TaskSlo::VACUOUS, &orders).unwrap().len(), 27);
        let high = TaskSlo { acc_floor: 99.0, lat_ceiling_ms: f64::INFINITY };
        assert!(filter_feasible(maps, &hand, &hand, high, &orders).unwrap().is_empty());
    }

    #[test]
    fn filter_exists_an_order() {
        let a = PlacementOrder { procs: vec![1, 2] };
        let b = PlacementOrder { procs: vec![2, 1] };
        let (v1, v2) = (map(1, &[1, 1]), map(1, &[2, 2]));
        let mut hand = Hand { acc: HashMap::new(), lat: HashMap::new() };
        hand.acc.insert((1, v1.donors.clone()), 90.0);
        hand.acc.insert((1, v2.donors.clone()), 90.0);
        hand.lat.insert((1, v1.donors.clone(), a.procs.clone()), 8.0);
        hand.lat.insert((1, v1.donors.clone(), b.procs.clone()), 12.0);
        hand.lat.insert((1, v2.donors.clone(), a.procs.clone()), 11.0);
        hand.lat.insert((1, v2.donors.clone(), b.procs.clone()), 13.0);
        let got = filter_feasible(&[v1.clone(), v2], &hand, &hand, TaskSlo { acc_floor: 0.0, lat_ceiling_ms: 10.0 }, &[a, b]).unwrap();
        assert_eq!(got, vec![v1]);
    }

    #[test]
    fn published_order_table() {
        let f = OrderLatencyFixture::published();
        let orders = f.orders();
        for (variant, best, ms) in [("P-Q-P", "C-G-N", 11.01), ("D-P-Q", "N-C-G", 12.01)] {
            let feasible = BTreeMap::from([(1, vec![OrderLatencyFixture::variant(variant).unwrap()])]);
            let (o, v) = choose_order(&feasible, &f, &orders).unwrap();
            assert_eq!(o.label(f.processors()), best);
            assert_eq!(v, ms);
        }
    }

    #[test]
    fn single_order_is_returned() {
        let f = OrderLatencyFixture::published();
        let only = vec![f.order("G-N-C").unwrap()];
        let feasible = BTreeMap::from([(1, vec![OrderLatencyFixture::variant("P-Q-P").unwrap()])]);
        assert_eq!(choose_order(&feasible, &f, &only).unwrap().0, only[0]);
    }

    #[test]
    fn all_infeasible_is_an_error() {
        let f = OrderLatencyFixture::published();
        let feasible = BTreeMap::from([(1, Vec::new())]);
        assert!(matches!(
            choose_order(&feasible, &f, &f.orders()),
            Err(crate::Error::Optimizer(OptimizerError::AllTasksInfeasible))
        ));
    }

    #[test]
    fn final_selection_and_reverification() {
        let a = PlacementOrder { procs: vec![1, 2] };
        let b = PlacementOrder { procs: vec![2, 1] };
        let (v1, v2) = (map(1, &[1, 2]), map(1, &[2, 1]));
        let mut hand = Hand { acc: HashMap::new(), lat: HashMap::new() };
        for (m, la, lb) in [(&v1, 9.0, 12.0), (&v2, 11.0, 8.0)] {
            hand.acc.insert((1, m.donors.clone()), 90.0);
            hand.lat.insert((1, m.donors.clone(), a.procs.clone()), la);
            hand.lat.insert((1, m.donors.clone(), b.procs.clone()), lb);
        }
        let feasible = BTreeMap::from([(1, vec![v1.clone(), v2.clone()])]);
        let got = select_final_variants(&feasible, &hand, &a, &slo(&[(1, 0.0, 100.0)])).unwrap();
        assert_eq!(got[&1], TaskChoice::Chosen(v1.clone()));
        // v1 alone passes the ceiling only under a; under b it takes 12 ms
        let feasible = BTreeMap::from([(1, vec![v1])]);
        let got = select_final_variants(&feasible, &hand, &b, &slo(&[(1, 0.0, 10.0)])).unwrap();
        assert_eq!(got[&1], TaskChoice::Infeasible(Infeasibility::InfeasibleUnderBestOrder));
    }

    #[test]
    fn two_by_two_matches_brute_force() {
        for seed in 0..50 {
            let (hand, task_maps, cfg) = random_instance(seed, 2, 2, 2, 2);
            let orders = all_orders(2, 2).unwrap();
            let want = brute_force(&hand, &task_maps, &cfg, &orders);
            match plan(task_maps, &hand, &hand, orders, &cfg) {
                Ok(p) => assert_eq!(Some(p.mean_latency_ms), want, "seed {seed}"),
                Err(e) => {
                    assert!(matches!(e, crate::Error::Optimizer(OptimizerError::AllTasksInfeasible)));
                    assert_eq!(want, None);
                }
            }
        }
    }

    #[test]
    fn plan_is_order_and_choice_optimal() {
        for seed in 0..100 {
            let (hand, task_maps, cfg) = random_instance(1000 + seed, 3, 3, 3, 3);
            let orders = all_orders(3, 3).unwrap();
            let cands = Candidates::build(task_maps.clone(), &hand, &hand, orders.clone()).unwrap();
            let Ok(result) = cands.plan(&cfg) else { continue };
            assert_eq!(Some(result.mean_latency_ms), brute_force(&hand, &task_maps, &cfg, &orders));
            let o = orders.iter().position(|x| *x == result.best_order).unwrap();
            for (t, f) in cands.tasks.iter().zip(cands.feasible_sets(&cfg).unwrap()) {
                if let TaskChoice::Chosen(m) = &result.per_task_choice[&t.task_id] {
                    let mine = hand.lat[&(t.task_id, m.donors.clone(), orders[o].procs.clone())];
                    assert!(f.iter().all(|&i| t.latency[i][o] >= mine));
                }
            }
        }
    }

    #[test]
    fn loose_slo_takes_global_minimum() {
        let (hand, task_maps, _) = random_instance(5, 2, 3, 3, 3);
        let cfg = slo(&[(1, 0.0, f64::INFINITY), (2, 0.0, f64::INFINITY)]);
        let orders = all_orders(3, 3).unwrap();
        let r = plan(task_maps.clone(), &hand, &hand, orders, &cfg).unwrap();
        for (t, maps) in &task_maps {
            let chosen = r.per_task_choice[t].map().unwrap();
            let l = |m: &StitchMap| hand.lat[&(*t, m.donors.clone(), r.best_order.procs.clone())];
            assert!(maps.iter().all(|m| l(m) >= l(chosen)));
        }
    }

    #[test]
    fn only_originals_satisfy() {
        // 2 variants, 2 positions: mixed maps are inaccurate
        let orders = all_orders(2, 2).unwrap();
        let mut hand = Hand { acc: HashMap::new(), lat: HashMap::new() };
        let maps = all_maps(1, 2, 2);
        for m in &maps {
            let acc = if m.constant_donor().is_some() { 90.0 } else { 80.0 };
            hand.acc.insert((1, m.donors.clone()), acc);
            for o in &orders {
                let l = if m.donors == [2, 2] { 7.0 } else { 5.0 };
                hand.lat.insert((1, m.donors.clone(), o.procs.clone()), l);
            }
        }
        let r = plan(vec![(1, maps)], &hand, &hand, orders, &slo(&[(1, 85.0, 10.0)])).unwrap();
        assert_eq!(r.per_task_choice[&1], TaskChoice::Chosen(map(1, &[1, 1])));
    }

    #[test]
    fn stitched_feasible_superset_of_originals() {
        for seed in 0..30 {
            let (hand, task_maps, cfg) = random_instance(500 + seed, 2, 3, 3, 3);
            let orders = all_orders(3, 3).unwrap();
            for (t, maps) in &task_maps {
                let s = cfg.per_task[t];
                let all = filter_feasible(maps, &hand, &hand, s, &orders).unwrap();
                let originals: Vec<_> = maps.iter().filter(|m| m.constant_donor().is_some()).cloned().collect();
                let orig = filter_feasible(&originals, &hand, &hand, s, &orders).unwrap();
                assert!(orig.iter().all(|m| all.contains(m)));
            }
        }
    }

    #[test]
    fn plan_file_roundtrip() {
        let f = OrderLatencyFixture::published();
        let r = PlanResult {
            config_id: 7,
            best_order: f.order("C-G-N").unwrap(),
            per_task_choice: BTreeMap::from([
                (1, TaskChoice::Chosen(map(1, &[2, 3, 2]))),
                (2, TaskChoice::Infeasible(Infeasibility::NoFeasibleVariant)),
            ]),
            mean_latency_ms: 11.01,
            chosen_mean_latency_ms: Some(11.01),
        };
        let file = r.to_file(f.processors());
        assert_eq!(file.best_order, vec!["CPU", "GPU", "NPU"]);
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"infeasible\":\"no_feasible_variant\""));
        let back: PlanFile = serde_json::from_str(&json).unwrap();
        assert_eq!(PlanResult::from_file(&back, f.processors()).unwrap(), r);
    }
}
