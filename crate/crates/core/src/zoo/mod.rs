//! Tasks, sparse model zoos and layer-aligned subgraphs.
//!
//! Every task owns `V` original variants, each split at the same `S` layer
//! boundaries. A stitched variant is identified by its donor vector: the
//! subgraph at position `j` is taken from variant `donors[j]`. Indices are
//! 1-based throughout (task ids, variant indices, positions, processor ids),
//! matching the zoo file format.

mod template;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use template::{template_zoo, Platform, TemplateVariant, INTEL_VARIANTS, JETSON_VARIANTS, TEMPLATE_TASKS};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ZooError {
    #[error("task {task_id}: donor variant {variant_index} does not exist")]
    MissingVariant { task_id: u32, variant_index: u32 },
    #[error("task {0} not found in zoo")]
    MissingTask(u32),
    #[error("stitched variant count overflows u64 (T={tasks}, V={variants}, S={subgraphs})")]
    Overflow { tasks: u64, variants: u64, subgraphs: u32 },
    #[error("invalid zoo: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityKind {
    Dense,
    UnstructuredPruned,
    StructuredPruned,
    Quantized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Precision {
    FP32,
    FP16,
    INT8,
}

impl Precision {
    /// Bytes per parameter relative to FP32.
    pub fn width_factor(self) -> f64 {
        match self {
            Precision::FP32 => 1.0,
            Precision::FP16 => 0.5,
            Precision::INT8 => 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: u32,
    pub name: String,
    pub variant_count: u32,
    pub subgraph_count: u32,
}

/// Identity of a subgraph: `(task, variant, position)`. Never content based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubgraphKey {
    pub task_id: u32,
    pub variant_index: u32,
    pub position: u32,
}

impl fmt::Display for SubgraphKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}/v{}@{}", self.task_id, self.variant_index, self.position)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub task_id: u32,
    pub variant_index: u32,
    pub position: u32,
    pub mem_bytes: u64,
}

impl Subgraph {
    pub fn key(&self) -> SubgraphKey {
        SubgraphKey { task_id: self.task_id, variant_index: self.variant_index, position: self.position }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVariant {
    pub task_id: u32,
    pub variant_index: u32,
    pub sparsity_kind: SparsityKind,
    pub sparsity_level: f64,
    pub precision: Precision,
    pub subgraphs: Vec<Subgraph>,
}

impl SparseVariant {
    /// Short label used in fixtures and reports, e.g. `D`, `Q8`, `U90`, `S40`.
    pub fn label(&self) -> String {
        let pct = (self.sparsity_level * 100.0).round() as u32;
        match (self.sparsity_kind, self.precision) {
            (SparsityKind::Dense, _) => "D".to_string(),
            (SparsityKind::Quantized, Precision::FP16) => "Q16".to_string(),
            (SparsityKind::Quantized, _) => "Q8".to_string(),
            (SparsityKind::UnstructuredPruned, _) => format!("U{pct}"),
            (SparsityKind::StructuredPruned, _) => format!("S{pct}"),
        }
    }

    pub fn total_mem_bytes(&self) -> u64 {
        self.subgraphs.iter().map(|s| s.mem_bytes).sum()
    }
}

/// A stitched variant, canonicalized as its donor vector. `donors[j - 1]` is
/// the variant that supplies position `j`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StitchMap {
    pub task_id: u32,
    pub donors: Vec<u32>,
}

impl StitchMap {
    pub fn constant(task_id: u32, variant_index: u32, subgraph_count: u32) -> Self {
        StitchMap { task_id, donors: vec![variant_index; subgraph_count as usize] }
    }

    /// The original variant this map reproduces, if all donors agree.
    pub fn constant_donor(&self) -> Option<u32> {
        let first = *self.donors.first()?;
        self.donors.iter().all(|&d| d == first).then_some(first)
    }

    /// Lexicographic rank among the `V^S` maps of the task (0-based).
    pub fn rank(&self, variant_count: u32) -> u64 {
        self.donors.iter().fold(0u64, |acc, &d| acc * variant_count as u64 + (d as u64 - 1))
    }

    /// Inverse of [`StitchMap::rank`].
    pub fn from_rank(task_id: u32, mut rank: u64, variant_count: u32, subgraph_count: u32) -> Self {
        let v = variant_count as u64;
        let mut donors = vec![0u32; subgraph_count as usize];
        for slot in donors.iter_mut().rev() {
            *slot = (rank % v) as u32 + 1;
            rank /= v;
        }
        StitchMap { task_id, donors }
    }

    pub fn subgraph_keys(&self) -> impl Iterator<Item = SubgraphKey> + '_ {
        self.donors.iter().enumerate().map(move |(j, &d)| SubgraphKey {
            task_id: self.task_id,
            variant_index: d,
            position: j as u32 + 1,
        })
    }

    pub fn donors_label(&self) -> String {
        self.donors.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("-")
    }
}

impl fmt::Display for StitchMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}[{}]", self.task_id, self.donors_label())
    }
}

/// Iterator over all `V^S` donor vectors of a task in lexicographic order.
#[derive(Debug, Clone)]
pub struct StitchIter {
    task_id: u32,
    variant_count: u32,
    next: Option<Vec<u32>>,
}

impl Iterator for StitchIter {
    type Item = StitchMap;

    fn next(&mut self) -> Option<StitchMap> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // odometer increment, last position fastest
        let mut carried = true;
        for slot in succ.iter_mut().rev() {
            if *slot < self.variant_count {
                *slot += 1;
                carried = false;
                break;
            }
            *slot = 1;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(StitchMap { task_id: self.task_id, donors: current })
    }
}

pub fn stitch_iter(task: &Task) -> StitchIter {
    let start = (task.variant_count >= 1 && task.subgraph_count >= 1)
        .then(|| vec![1; task.subgraph_count as usize]);
    StitchIter { task_id: task.task_id, variant_count: task.variant_count, next: start }
}

/// All stitched variants of a task, in lexicographic donor order.
pub fn enumerate_stitched(task: &Task) -> Vec<StitchMap> {
    stitch_iter(task).collect()
}

/// The `V` constant-donor maps, i.e. the original zoo.
pub fn original_maps(task: &Task) -> Vec<StitchMap> {
    (1..=task.variant_count).map(|i| StitchMap::constant(task.task_id, i, task.subgraph_count)).collect()
}

/// Subgraphs making up a stitched variant, position order.
pub fn resolve_subgraphs(map: &StitchMap, variants: &[SparseVariant]) -> Result<Vec<Subgraph>, ZooError> {
    map.donors
        .iter()
        .enumerate()
        .map(|(j, &donor)| {
            let variant = variants
                .iter()
                .find(|v| v.task_id == map.task_id && v.variant_index == donor)
                .ok_or(ZooError::MissingVariant { task_id: map.task_id, variant_index: donor })?;
            variant
                .subgraphs
                .get(j)
                .cloned()
                .ok_or_else(|| ZooError::Invalid(format!("variant {donor} of task {} has no position {}", map.task_id, j + 1)))
        })
        .collect()
}

/// `T * V^S`, reported rather than wrapped on overflow.
pub fn stitched_variant_count(tasks: u64, variants: u64, subgraphs: u32) -> Result<u64, ZooError> {
    variants
        .checked_pow(subgraphs)
        .and_then(|per_task| per_task.checked_mul(tasks))
        .ok_or(ZooError::Overflow { tasks, variants, subgraphs })
}

/// One task with its original variants.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskZoo {
    pub task: Task,
    pub variants: Vec<SparseVariant>,
}

impl TaskZoo {
    pub fn variant(&self, variant_index: u32) -> Option<&SparseVariant> {
        self.variants.get(variant_index.checked_sub(1)? as usize).filter(|v| v.variant_index == variant_index)
    }

    pub fn subgraph(&self, key: SubgraphKey) -> Option<&Subgraph> {
        self.variant(key.variant_index)?.subgraphs.get(key.position.checked_sub(1)? as usize)
    }
}

/// A validated zoo. Tasks are sorted by id; variants by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Zoo {
    tasks: Vec<TaskZoo>,
}

impl Zoo {
    pub fn new(mut tasks: Vec<TaskZoo>) -> Result<Self, ZooError> {
        tasks.sort_by_key(|t| t.task.task_id);
        let mut seen = BTreeSet::new();
        for tz in &mut tasks {
            let t = &tz.task;
            if !seen.insert(t.task_id) {
                return Err(ZooError::Invalid(format!("duplicate task id {}", t.task_id)));
            }
            if t.subgraph_count == 0 {
                return Err(ZooError::Invalid(format!("task {} has S = 0", t.task_id)));
            }
            tz.variants.sort_by_key(|v| v.variant_index);
            if tz.variants.len() != t.variant_count as usize {
                return Err(ZooError::Invalid(format!(
                    "task {} declares V = {} but lists {} variants",
                    t.task_id,
                    t.variant_count,
                    tz.variants.len()
                )));
            }
            for (i, v) in tz.variants.iter().enumerate() {
                if v.variant_index != i as u32 + 1 {
                    return Err(ZooError::Invalid(format!("task {}: variant indices must be 1..V", t.task_id)));
                }
                if v.task_id != t.task_id {
                    return Err(ZooError::Invalid(format!("variant {} tagged with task {}", v.variant_index, v.task_id)));
                }
                if !(0.0..=1.0).contains(&v.sparsity_level) {
                    return Err(ZooError::Invalid(format!(
                        "task {} variant {}: sparsity level {} outside [0,1]",
                        t.task_id, v.variant_index, v.sparsity_level
                    )));
                }
                if v.subgraphs.len() != t.subgraph_count as usize {
                    return Err(ZooError::Invalid(format!(
                        "task {} variant {} has {} subgraphs, expected {}",
                        t.task_id,
                        v.variant_index,
                        v.subgraphs.len(),
                        t.subgraph_count
                    )));
                }
                for (j, s) in v.subgraphs.iter().enumerate() {
                    if s.position != j as u32 + 1 || s.variant_index != v.variant_index || s.task_id != t.task_id {
                        return Err(ZooError::Invalid(format!("task {} variant {}: misnumbered subgraph", t.task_id, v.variant_index)));
                    }
                }
            }
        }
        Ok(Zoo { tasks })
    }

    pub fn tasks(&self) -> &[TaskZoo] {
        &self.tasks
    }

    pub fn task(&self, task_id: u32) -> Result<&TaskZoo, ZooError> {
        self.tasks.iter().find(|t| t.task.task_id == task_id).ok_or(ZooError::MissingTask(task_id))
    }

    pub fn task_ids(&self) -> Vec<u32> {
        self.tasks.iter().map(|t| t.task.task_id).collect()
    }

    pub fn subgraph(&self, key: SubgraphKey) -> Option<&Subgraph> {
        self.task(key.task_id).ok()?.subgraph(key)
    }

    pub fn all_subgraphs(&self) -> impl Iterator<Item = &Subgraph> {
        self.tasks.iter().flat_map(|t| t.variants.iter()).flat_map(|v| v.subgraphs.iter())
    }

    /// Memory needed to keep every subgraph of every variant resident.
    pub fn full_preload_memory(&self) -> Result<u64, ZooError> {
        self.all_subgraphs()
            .try_fold(0u64, |acc, s| acc.checked_add(s.mem_bytes))
            .ok_or_else(|| ZooError::Invalid("full preload memory overflows u64".into()))
    }

    /// Restrict to the first `tasks` tasks and first `variants` variants of each.
    pub fn truncated(&self, tasks: usize, variants: usize) -> Result<Zoo, ZooError> {
        let picked = self
            .tasks
            .iter()
            .take(tasks)
            .map(|tz| {
                let vs: Vec<_> = tz.variants.iter().take(variants).cloned().collect();
                TaskZoo { task: Task { variant_count: vs.len() as u32, ..tz.task.clone() }, variants: vs }
            })
            .collect();
        Zoo::new(picked)
    }

    pub fn to_file(&self) -> ZooFile {
        ZooFile {
            tasks: self
                .tasks
                .iter()
                .map(|tz| TaskRecord {
                    task_id: tz.task.task_id,
                    name: tz.task.name.clone(),
                    subgraph_count: tz.task.subgraph_count,
                    variants: tz
                        .variants
                        .iter()
                        .map(|v| VariantRecord {
                            variant_index: v.variant_index,
                            sparsity_kind: v.sparsity_kind,
                            sparsity_level: v.sparsity_level,
                            precision: v.precision,
                            subgraph_mem_bytes: v.subgraphs.iter().map(|s| s.mem_bytes).collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: ZooFile) -> Result<Self, ZooError> {
        let tasks = file
            .tasks
            .into_iter()
            .map(|t| {
                let variants = t
                    .variants
                    .into_iter()
                    .map(|v| SparseVariant {
                        task_id: t.task_id,
                        variant_index: v.variant_index,
                        sparsity_kind: v.sparsity_kind,
                        sparsity_level: v.sparsity_level,
                        precision: v.precision,
                        subgraphs: v
                            .subgraph_mem_bytes
                            .iter()
                            .enumerate()
                            .map(|(j, &mem)| Subgraph {
                                task_id: t.task_id,
                                variant_index: v.variant_index,
                                position: j as u32 + 1,
                                mem_bytes: mem,
                            })
                            .collect(),
                    })
                    .collect::<Vec<_>>();
                TaskZoo {
                    task: Task {
                        task_id: t.task_id,
                        name: t.name,
                        variant_count: variants.len() as u32,
                        subgraph_count: t.subgraph_count,
                    },
                    variants,
                }
            })
            .collect();
        Zoo::new(tasks)
    }
}

/// On-disk zoo definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZooFile {
    pub tasks: Vec<TaskRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub task_id: u32,
    pub name: String,
    #[serde(rename = "S")]
    pub subgraph_count: u32,
    pub variants: Vec<VariantRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantRecord {
    pub variant_index: u32,
    pub sparsity_kind: SparsityKind,
    pub sparsity_level: f64,
    pub precision: Precision,
    pub subgraph_mem_bytes: Vec<u64>,
}
