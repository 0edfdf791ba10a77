//! Hotness scoring and greedy subgraph preloading under a global memory budget.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::profiles::{ProfileError, ProfileTable};
use crate::zoo::{StitchMap, SubgraphKey, Zoo};

/// Per-subgraph sum over configs of the share of satisfying variants that
/// contain it. Subgraphs never seen score 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HotnessTable {
    scores: BTreeMap<SubgraphKey, f64>,
    config_count: usize,
}

impl HotnessTable {
    pub fn score(&self, key: SubgraphKey) -> f64 {
        self.scores.get(&key).copied().unwrap_or(0.0)
    }

    pub fn config_count(&self) -> usize {
        self.config_count
    }

    /// Nonzero scores in key order.
    pub fn iter(&self) -> impl Iterator<Item = (SubgraphKey, f64)> + '_ {
        self.scores.iter().map(|(k, v)| (*k, *v))
    }
}

/// `satisfying` maps `(task_id, config_id)` to that config's satisfying set.
/// Empty sets contribute nothing.
pub fn compute_hotness(satisfying: &BTreeMap<(u32, u32), Vec<StitchMap>>) -> HotnessTable {
    let configs: BTreeSet<u32> = satisfying.keys().map(|&(_, c)| c).collect();
    let mut scores: BTreeMap<SubgraphKey, f64> = BTreeMap::new();
    for maps in satisfying.values().filter(|m| !m.is_empty()) {
        let mut occur: BTreeMap<SubgraphKey, usize> = BTreeMap::new();
        for m in maps {
            for key in m.subgraph_keys() {
                *occur.entry(key).or_default() += 1;
            }
        }
        for (key, n) in occur {
            *scores.entry(key).or_default() += n as f64 / maps.len() as f64;
        }
    }
    HotnessTable { scores, config_count: configs.len() }
}

/// How many subgraphs one `(task, position)` visit may admit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admission {
    /// One admission per position, one sweep over all tasks and positions.
    Single,
    /// Repeat the single-admission sweep until a full sweep admits nothing.
    /// At the full-preload budget this admits every subgraph.
    #[default]
    Rounds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreloadPlan {
    pub per_task: BTreeMap<u32, BTreeSet<SubgraphKey>>,
    pub total_mem_bytes: u64,
    pub budget_bytes: u64,
}

impl PreloadPlan {
    /// Every subgraph of every variant resident.
    pub fn full(zoo: &Zoo) -> crate::Result<Self> {
        let total = zoo.full_preload_memory()?;
        let mut per_task: BTreeMap<u32, BTreeSet<SubgraphKey>> = BTreeMap::new();
        for sg in zoo.all_subgraphs() {
            per_task.entry(sg.task_id).or_default().insert(sg.key());
        }
        Ok(PreloadPlan { per_task, total_mem_bytes: total, budget_bytes: total })
    }

    pub fn contains(&self, key: SubgraphKey) -> bool {
        self.per_task.get(&key.task_id).is_some_and(|s| s.contains(&key))
    }

    pub fn subgraph_count(&self) -> usize {
        self.per_task.values().map(BTreeSet::len).sum()
    }

    pub fn to_file(&self) -> PreloadFile {
        PreloadFile {
            budget_bytes: self.budget_bytes,
            per_task: self
                .per_task
                .iter()
                .map(|(&task_id, keys)| PreloadTaskRecord {
                    task_id,
                    subgraphs: keys.iter().map(|k| (k.variant_index, k.position)).collect(),
                })
                .collect(),
            total_mem_bytes: self.total_mem_bytes,
            seed: None,
        }
    }

    /// Rebuilds a plan, checking every subgraph against the zoo and the
    /// recorded memory total.
    pub fn from_file(file: &PreloadFile, zoo: &Zoo) -> crate::Result<Self> {
        let mut per_task: BTreeMap<u32, BTreeSet<SubgraphKey>> = BTreeMap::new();
        let mut total = 0u64;
        for r in &file.per_task {
            let set = per_task.entry(r.task_id).or_default();
            for &(variant_index, position) in &r.subgraphs {
                let key = SubgraphKey { task_id: r.task_id, variant_index, position };
                let sg = zoo.subgraph(key).ok_or_else(|| crate::Error::Invalid(format!("preload plan names unknown subgraph {key}")))?;
                if set.insert(key) {
                    total += sg.mem_bytes;
                }
            }
        }
        if total != file.total_mem_bytes || total > file.budget_bytes {
            return Err(crate::Error::Invalid(format!(
                "preload plan memory {total} disagrees with recorded total {} or exceeds budget {}",
                file.total_mem_bytes, file.budget_bytes
            )));
        }
        Ok(PreloadPlan { per_task, total_mem_bytes: total, budget_bytes: file.budget_bytes })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreloadFile {
    pub budget_bytes: u64,
    pub per_task: Vec<PreloadTaskRecord>,
    pub total_mem_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreloadTaskRecord {
    pub task_id: u32,
    pub subgraphs: Vec<(u32, u32)>,
}

/// Tasks in id order, positions `1..=S`; at each position the candidates are
/// ranked by hotness (ties: lower variant index) and the first one not yet
/// admitted that fits the remaining budget is admitted.
pub fn greedy_preload(hotness: &HotnessTable, zoo: &Zoo, budget_bytes: u64, admission: Admission) -> PreloadPlan {
    let mut per_task: BTreeMap<u32, BTreeSet<SubgraphKey>> = BTreeMap::new();
    let mut used = 0u64;
    let ranked: Vec<Vec<Vec<(SubgraphKey, u64)>>> = zoo
        .tasks()
        .iter()
        .map(|tz| {
            (1..=tz.task.subgraph_count)
                .map(|j| {
                    let mut c: Vec<(SubgraphKey, u64)> = tz
                        .variants
                        .iter()
                        .map(|v| {
                            let key = SubgraphKey { task_id: tz.task.task_id, variant_index: v.variant_index, position: j };
                            (key, tz.subgraph(key).map_or(0, |s| s.mem_bytes))
                        })
                        .collect();
                    c.sort_by(|a, b| hotness.score(b.0).total_cmp(&hotness.score(a.0)).then(a.0.variant_index.cmp(&b.0.variant_index)));
                    c
                })
                .collect()
        })
        .collect();

    loop {
        let mut admitted_any = false;
        for (tz, positions) in zoo.tasks().iter().zip(&ranked) {
            let phi = per_task.entry(tz.task.task_id).or_default();
            for candidates in positions {
                if let Some(&(key, mem)) = candidates.iter().find(|(k, m)| !phi.contains(k) && used + m <= budget_bytes) {
                    phi.insert(key);
                    used += mem;
                    admitted_any = true;
                }
            }
        }
        if admission == Admission::Single || !admitted_any {
            break;
        }
    }
    PreloadPlan { per_task, total_mem_bytes: used, budget_bytes }
}

/// Compile and load time as multiples of the subgraph's inference latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchCost {
    pub compile_x: f64,
    pub load_x: f64,
}

impl Default for SwitchCost {
    fn default() -> Self {
        SwitchCost { compile_x: 23.7, load_x: 3.0 }
    }
}

/// Per-position switch time of `map` placed on `procs`: zero for resident
/// subgraphs, `(compile_x + load_x) * latency` otherwise.
pub fn switch_cost_per_stage(
    map: &StitchMap,
    procs: &[u32],
    plan: &PreloadPlan,
    table: &ProfileTable,
    cost: SwitchCost,
) -> Result<Vec<f64>, ProfileError> {
    map.subgraph_keys()
        .zip(procs)
        .map(|(key, &p)| {
            if plan.contains(key) {
                Ok(0.0)
            } else {
                Ok((cost.compile_x + cost.load_x) * table.lookup_latency(key.task_id, key.variant_index, key.position, p)?)
            }
        })
        .collect()
}

pub fn switch_cost(map: &StitchMap, procs: &[u32], plan: &PreloadPlan, table: &ProfileTable, cost: SwitchCost) -> Result<f64, ProfileError> {
    Ok(switch_cost_per_stage(map, procs, plan, table, cost)?.iter().sum())
}
