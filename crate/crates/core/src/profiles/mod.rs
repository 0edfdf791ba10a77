//! Ground-truth profile data: subgraph latency per processor, original
//! variant accuracy, and the true accuracy of every stitched variant.
//!
//! Real hardware profiling is replaced by [`generate_synthetic`]; everything
//! downstream only reads a [`ProfileTable`].

mod fixture;
mod generate;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::zoo::StitchMap;

pub use fixture::{OrderLatencyFixture, ORDER_TABLE_LATENCY_MS, ORDER_TABLE_ORDERS, ORDER_TABLE_VARIANTS};
pub use generate::{generate_synthetic, intel_processors, jetson_processors, GenParams, KindScaling};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProfileError {
    #[error("no latency for task {task_id} variant {variant_index} position {position} on processor {proc_id}")]
    MissingLatency { task_id: u32, variant_index: u32, position: u32, proc_id: u32 },
    #[error("no accuracy for task {task_id} variant {variant_index}")]
    MissingAccuracy { task_id: u32, variant_index: u32 },
    #[error("no ground-truth accuracy for stitched variant {0}")]
    MissingStitched(StitchMap),
    #[error("task {0} has no profile")]
    MissingTask(u32),
    #[error("fixture has no entry for variant {variant} under order {order}")]
    MissingFixtureEntry { variant: String, order: String },
    #[error("invalid generation parameter: {0}")]
    InvalidParameter(String),
    #[error("inconsistent profile: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Processor {
    pub proc_id: u32,
    pub name: String,
    pub speed_factor: f64,
}

impl Processor {
    /// One-letter tag used in order labels (`C`, `G`, `N`).
    pub fn tag(&self) -> char {
        self.name.chars().next().unwrap_or('?').to_ascii_uppercase()
    }
}

/// Dense per-task profile storage.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskProfile {
    pub task_id: u32,
    pub variant_count: u32,
    pub subgraph_count: u32,
    proc_count: u32,
    /// `[(variant - 1) * S + (position - 1)] * P + (proc - 1)`
    latency_ms: Vec<f64>,
    variant_accuracy: Vec<f64>,
    /// indexed by lexicographic rank of the donor vector
    stitched_accuracy: Vec<f64>,
}

impl TaskProfile {
    pub(crate) fn new(
        task_id: u32,
        variant_count: u32,
        subgraph_count: u32,
        proc_count: u32,
        latency_ms: Vec<f64>,
        variant_accuracy: Vec<f64>,
        stitched_accuracy: Vec<f64>,
    ) -> Self {
        TaskProfile { task_id, variant_count, subgraph_count, proc_count, latency_ms, variant_accuracy, stitched_accuracy }
    }

    fn latency_index(&self, variant_index: u32, position: u32, proc_id: u32) -> Option<usize> {
        let in_range = (1..=self.variant_count).contains(&variant_index)
            && (1..=self.subgraph_count).contains(&position)
            && (1..=self.proc_count).contains(&proc_id);
        in_range.then(|| {
            (((variant_index - 1) * self.subgraph_count + (position - 1)) * self.proc_count + (proc_id - 1)) as usize
        })
    }

    pub fn latency(&self, variant_index: u32, position: u32, proc_id: u32) -> Result<f64, ProfileError> {
        self.latency_index(variant_index, position, proc_id).map(|i| self.latency_ms[i]).ok_or(
            ProfileError::MissingLatency { task_id: self.task_id, variant_index, position, proc_id },
        )
    }

    pub fn variant_accuracy(&self, variant_index: u32) -> Result<f64, ProfileError> {
        variant_index
            .checked_sub(1)
            .and_then(|i| self.variant_accuracy.get(i as usize).copied())
            .ok_or(ProfileError::MissingAccuracy { task_id: self.task_id, variant_index })
    }

    pub fn stitched_accuracy(&self, map: &StitchMap) -> Result<f64, ProfileError> {
        let valid = map.task_id == self.task_id
            && map.donors.len() == self.subgraph_count as usize
            && map.donors.iter().all(|d| (1..=self.variant_count).contains(d));
        if !valid {
            return Err(ProfileError::MissingStitched(map.clone()));
        }
        Ok(self.stitched_accuracy[map.rank(self.variant_count) as usize])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    processors: Vec<Processor>,
    tasks: Vec<TaskProfile>,
    generation_seed: u64,
    gen_params: Option<GenParams>,
}

impl ProfileTable {
    pub(crate) fn from_parts(
        processors: Vec<Processor>,
        tasks: Vec<TaskProfile>,
        generation_seed: u64,
        gen_params: Option<GenParams>,
    ) -> Result<Self, ProfileError> {
        let table = ProfileTable { processors, tasks, generation_seed, gen_params };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<(), ProfileError> {
        for (k, p) in self.processors.iter().enumerate() {
            if p.proc_id != k as u32 + 1 {
                return Err(ProfileError::Inconsistent("processor ids must be 1..P without gaps".into()));
            }
        }
        for tp in &self.tasks {
            if tp.latency_ms.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                return Err(ProfileError::Inconsistent(format!("task {}: latencies must be positive", tp.task_id)));
            }
            let in_range = |a: &f64| (0.0..=100.0).contains(a);
            if !tp.variant_accuracy.iter().all(in_range) || !tp.stitched_accuracy.iter().all(in_range) {
                return Err(ProfileError::Inconsistent(format!("task {}: accuracies must lie in [0,100]", tp.task_id)));
            }
            for i in 1..=tp.variant_count {
                let map = StitchMap::constant(tp.task_id, i, tp.subgraph_count);
                if tp.stitched_accuracy(&map)? != tp.variant_accuracy(i)? {
                    return Err(ProfileError::Inconsistent(format!(
                        "task {}: constant map of variant {i} disagrees with the variant's accuracy",
                        tp.task_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn processors(&self) -> &[Processor] {
        &self.processors
    }

    pub fn proc_count(&self) -> u32 {
        self.processors.len() as u32
    }

    pub fn generation_seed(&self) -> u64 {
        self.generation_seed
    }

    pub fn gen_params(&self) -> Option<&GenParams> {
        self.gen_params.as_ref()
    }

    pub fn tasks(&self) -> &[TaskProfile] {
        &self.tasks
    }

    pub fn task(&self, task_id: u32) -> Result<&TaskProfile, ProfileError> {
        self.tasks.iter().find(|t| t.task_id == task_id).ok_or(ProfileError::MissingTask(task_id))
    }

    /// Measured latency of one subgraph on one processor.
    pub fn lookup_latency(&self, task_id: u32, variant_index: u32, position: u32, proc_id: u32) -> Result<f64, ProfileError> {
        self.task(task_id)
            .map_err(|_| ProfileError::MissingLatency { task_id, variant_index, position, proc_id })?
            .latency(variant_index, position, proc_id)
    }

    pub fn variant_accuracy(&self, task_id: u32, variant_index: u32) -> Result<f64, ProfileError> {
        self.task(task_id)
            .map_err(|_| ProfileError::MissingAccuracy { task_id, variant_index })?
            .variant_accuracy(variant_index)
    }

    pub fn stitched_accuracy_truth(&self, map: &StitchMap) -> Result<f64, ProfileError> {
        self.task(map.task_id).map_err(|_| ProfileError::MissingStitched(map.clone()))?.stitched_accuracy(map)
    }

    pub fn to_file(&self) -> ProfileFile {
        let mut latency = Vec::new();
        let mut variant_accuracy = Vec::new();
        let mut stitched_accuracy = Vec::new();
        for tp in &self.tasks {
            for i in 1..=tp.variant_count {
                for j in 1..=tp.subgraph_count {
                    for p in 1..=tp.proc_count {
                        latency.push(LatencyRecord {
                            task_id: tp.task_id,
                            variant_index: i,
                            position: j,
                            proc_id: p,
                            latency_ms: tp.latency(i, j, p).expect("in range"),
                        });
                    }
                }
                variant_accuracy.push(AccuracyRecord {
                    task_id: tp.task_id,
                    variant_index: i,
                    accuracy: tp.variant_accuracy[i as usize - 1],
                });
            }
            for (k, &acc) in tp.stitched_accuracy.iter().enumerate() {
                let map = StitchMap::from_rank(tp.task_id, k as u64, tp.variant_count, tp.subgraph_count);
                stitched_accuracy.push(StitchedAccuracyRecord { task_id: tp.task_id, donors: map.donors, accuracy: acc });
            }
        }
        ProfileFile {
            seed: self.generation_seed,
            gen_params: self.gen_params.clone(),
            processors: self.processors.clone(),
            latency,
            variant_accuracy,
            stitched_accuracy,
        }
    }

    pub fn from_file(file: ProfileFile) -> Result<Self, ProfileError> {
        use std::collections::BTreeMap;

        let p = file.processors.len() as u32;
        let mut shapes: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
        for r in &file.latency {
            let e = shapes.entry(r.task_id).or_insert((0, 0));
            e.0 = e.0.max(r.variant_index);
            e.1 = e.1.max(r.position);
        }
        let mut tasks = Vec::new();
        for (&task_id, &(v, s)) in &shapes {
            let mut latency = vec![f64::NAN; (v * s * p) as usize];
            let mut acc = vec![f64::NAN; v as usize];
            let n_maps = (v as u64).checked_pow(s).ok_or_else(|| ProfileError::Inconsistent("too many stitched variants".into()))?;
            let mut stitched = vec![f64::NAN; n_maps as usize];
            let mut shell = TaskProfile::new(task_id, v, s, p, Vec::new(), Vec::new(), Vec::new());
            for r in file.latency.iter().filter(|r| r.task_id == task_id) {
                let idx = shell.latency_index(r.variant_index, r.position, r.proc_id).ok_or(ProfileError::MissingLatency {
                    task_id,
                    variant_index: r.variant_index,
                    position: r.position,
                    proc_id: r.proc_id,
                })?;
                if !latency[idx].is_nan() {
                    return Err(ProfileError::Inconsistent(format!("duplicate latency entry for task {task_id}")));
                }
                latency[idx] = r.latency_ms;
            }
            for r in file.variant_accuracy.iter().filter(|r| r.task_id == task_id) {
                let slot = r
                    .variant_index
                    .checked_sub(1)
                    .and_then(|i| acc.get_mut(i as usize))
                    .ok_or(ProfileError::MissingAccuracy { task_id, variant_index: r.variant_index })?;
                *slot = r.accuracy;
            }
            for r in file.stitched_accuracy.iter().filter(|r| r.task_id == task_id) {
                let map = StitchMap { task_id, donors: r.donors.clone() };
                if map.donors.len() != s as usize || map.donors.iter().any(|d| !(1..=v).contains(d)) {
                    return Err(ProfileError::MissingStitched(map));
                }
                stitched[map.rank(v) as usize] = r.accuracy;
            }
            if let Some(k) = latency.iter().position(|x| x.is_nan()) {
                let (i, rest) = (k as u32 / (s * p), k as u32 % (s * p));
                return Err(ProfileError::MissingLatency {
                    task_id,
                    variant_index: i + 1,
                    position: rest / p + 1,
                    proc_id: rest % p + 1,
                });
            }
            if let Some(i) = acc.iter().position(|x| x.is_nan()) {
                return Err(ProfileError::MissingAccuracy { task_id, variant_index: i as u32 + 1 });
            }
            if let Some(k) = stitched.iter().position(|x| x.is_nan()) {
                return Err(ProfileError::MissingStitched(StitchMap::from_rank(task_id, k as u64, v, s)));
            }
            shell.latency_ms = latency;
            shell.variant_accuracy = acc;
            shell.stitched_accuracy = stitched;
            tasks.push(shell);
        }
        ProfileTable::from_parts(file.processors, tasks, file.seed, file.gen_params)
    }

    /// Latency map as CSV, one row per (subgraph, processor).
    pub fn write_latency_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task_id", "variant_index", "position", "proc_id", "proc_name", "latency_ms"])?;
        for r in self.to_file().latency {
            w.write_record([
                r.task_id.to_string(),
                r.variant_index.to_string(),
                r.position.to_string(),
                r.proc_id.to_string(),
                self.processors[r.proc_id as usize - 1].name.clone(),
                r.latency_ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub seed: u64,
    pub gen_params: Option<GenParams>,
    pub processors: Vec<Processor>,
    pub latency: Vec<LatencyRecord>,
    pub variant_accuracy: Vec<AccuracyRecord>,
    pub stitched_accuracy: Vec<StitchedAccuracyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub task_id: u32,
    pub variant_index: u32,
    pub position: u32,
    pub proc_id: u32,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub task_id: u32,
    pub variant_index: u32,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchedAccuracyRecord {
    pub task_id: u32,
    pub donors: Vec<u32>,
    pub accuracy: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{template_zoo, Platform};

    fn table() -> ProfileTable {
        generate_synthetic(&template_zoo(Platform::Intel), &intel_processors(), &GenParams::intel(), 11).unwrap()
    }

    #[test]
    fn lookup_unknown_processor_is_missing_key() {
        let t = table();
        assert!(t.lookup_latency(1, 1, 1, 3).is_ok());
        assert_eq!(
            t.lookup_latency(1, 1, 1, 4),
            Err(ProfileError::MissingLatency { task_id: 1, variant_index: 1, position: 1, proc_id: 4 })
        );
        assert!(matches!(t.lookup_latency(9, 1, 1, 1), Err(ProfileError::MissingLatency { task_id: 9, .. })));
    }

    #[test]
    fn file_round_trip_is_exact() {
        let t = table();
        let json = serde_json::to_string(&t.to_file()).unwrap();
        let back = ProfileTable::from_file(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn from_file_reports_missing_entries() {
        let mut f = table().to_file();
        f.latency.retain(|r| !(r.task_id == 2 && r.variant_index == 3 && r.position == 2 && r.proc_id == 1));
        assert_eq!(
            ProfileTable::from_file(f).unwrap_err(),
            ProfileError::MissingLatency { task_id: 2, variant_index: 3, position: 2, proc_id: 1 }
        );
    }

    #[test]
    fn rejects_constant_map_disagreement() {
        let mut f = table().to_file();
        let r = f.stitched_accuracy.iter_mut().find(|r| r.donors == vec![2, 2, 2]).unwrap();
        r.accuracy += 0.5;
        assert!(matches!(ProfileTable::from_file(f), Err(ProfileError::Inconsistent(_))));
    }

    #[test]
    fn latency_csv_has_row_per_entry() {
        let t = table();
        let mut buf = Vec::new();
        t.write_latency_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 10 * 3 * 3);
    }
}
