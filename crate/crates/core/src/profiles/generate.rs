use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Processor, ProfileError, ProfileTable, TaskProfile};
use crate::rng::{stream, Stream};
use crate::zoo::{stitch_iter, Precision, SparseVariant, SparsityKind, Zoo};

/// How a variant's sparsity pattern scales subgraph latency on a processor.
///
/// Pruned variants run at `1 - gain * sparsity_level` of dense latency;
/// reduced precision multiplies by the matching factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindScaling {
    pub unstructured_gain: f64,
    pub structured_gain: f64,
    pub fp16_factor: f64,
    pub int8_factor: f64,
}

impl KindScaling {
    pub const NEUTRAL: KindScaling =
        KindScaling { unstructured_gain: 0.0, structured_gain: 0.0, fp16_factor: 1.0, int8_factor: 1.0 };

    pub fn factor(&self, kind: SparsityKind, precision: Precision, level: f64) -> f64 {
        let sparsity = match kind {
            SparsityKind::UnstructuredPruned => 1.0 - self.unstructured_gain * level,
            SparsityKind::StructuredPruned => 1.0 - self.structured_gain * level,
            SparsityKind::Dense | SparsityKind::Quantized => 1.0,
        };
        let width = match precision {
            Precision::FP32 => 1.0,
            Precision::FP16 => self.fp16_factor,
            Precision::INT8 => self.int8_factor,
        };
        sparsity * width
    }

    fn validate(&self, who: &str) -> Result<(), ProfileError> {
        let fields = [
            ("unstructured_gain", self.unstructured_gain),
            ("structured_gain", self.structured_gain),
            ("fp16_factor", self.fp16_factor),
            ("int8_factor", self.int8_factor),
        ];
        for (name, value) in fields {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ProfileError::InvalidParameter(format!("{who}: {name} = {value} must be a non-negative number")));
            }
        }
        if self.unstructured_gain >= 1.0 || self.structured_gain >= 1.0 {
            return Err(ProfileError::InvalidParameter(format!("{who}: pruning gains must be below 1")));
        }
        if self.fp16_factor == 0.0 || self.int8_factor == 0.0 {
            return Err(ProfileError::InvalidParameter(format!("{who}: precision factors must be positive")));
        }
        Ok(())
    }
}

/// Knobs of the synthetic world.
///
/// `latency = base_work_ms[j] * task_work_scale[t] * scaling(kind, precision, level) / speed_factor`,
/// jittered by a uniform factor in `[1 - jitter, 1 + jitter]`. `proc_scaling`
/// overrides `scaling` for processors of that name, which is what makes the
/// best placement order depend on the sparsity pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub base_work_ms: Vec<f64>,
    #[serde(default)]
    pub task_work_scale: BTreeMap<u32, f64>,
    pub scaling: KindScaling,
    #[serde(default)]
    pub proc_scaling: BTreeMap<String, KindScaling>,
    pub jitter: f64,
    #[serde(default)]
    pub base_accuracy: BTreeMap<u32, f64>,
    pub default_base_accuracy: f64,
    /// accuracy loss `coef * level^3` for unstructured pruning
    pub unstructured_penalty: f64,
    /// accuracy loss `coef * level^2` for structured pruning
    pub structured_penalty: f64,
    pub fp16_penalty: f64,
    pub int8_penalty: f64,
    pub variant_acc_noise: f64,
    /// std-dev of the stitched-accuracy noise around the donor mean
    pub sigma_acc: f64,
    /// optional constant inter-stage communication cost
    #[serde(default)]
    pub comm_ms: f64,
}

impl GenParams {
    pub fn intel() -> Self {
        GenParams {
            base_work_ms: vec![3.0, 4.0, 3.5],
            task_work_scale: BTreeMap::from([(1, 1.0), (2, 1.4), (3, 0.6), (4, 1.6)]),
            scaling: KindScaling { unstructured_gain: 0.5, structured_gain: 0.8, fp16_factor: 0.7, int8_factor: 0.5 },
            proc_scaling: BTreeMap::from([
                (
                    "CPU".to_string(),
                    KindScaling { unstructured_gain: 0.75, structured_gain: 0.9, fp16_factor: 1.0, int8_factor: 0.45 },
                ),
                (
                    "GPU".to_string(),
                    KindScaling { unstructured_gain: 0.1, structured_gain: 0.8, fp16_factor: 0.6, int8_factor: 0.7 },
                ),
                (
                    "NPU".to_string(),
                    KindScaling { unstructured_gain: 0.0, structured_gain: 0.7, fp16_factor: 0.6, int8_factor: 0.3 },
                ),
            ]),
            jitter: 0.05,
            base_accuracy: BTreeMap::from([(1, 77.4), (2, 92.3), (3, 89.5), (4, 94.0)]),
            default_base_accuracy: 90.0,
            unstructured_penalty: 14.0,
            structured_penalty: 22.0,
            fp16_penalty: 0.1,
            int8_penalty: 0.9,
            variant_acc_noise: 0.25,
            sigma_acc: 0.5,
            comm_ms: 0.0,
        }
    }

    pub fn jetson() -> Self {
        GenParams {
            base_work_ms: vec![5.0, 6.0],
            proc_scaling: BTreeMap::from([
                (
                    "CPU".to_string(),
                    KindScaling { unstructured_gain: 0.0, structured_gain: 0.9, fp16_factor: 1.0, int8_factor: 0.6 },
                ),
                (
                    "GPU".to_string(),
                    KindScaling { unstructured_gain: 0.0, structured_gain: 0.85, fp16_factor: 0.55, int8_factor: 0.4 },
                ),
            ]),
            ..GenParams::intel()
        }
    }

    fn scaling_for(&self, proc: &Processor) -> &KindScaling {
        self.proc_scaling.get(&proc.name).unwrap_or(&self.scaling)
    }

    fn validate(&self, subgraph_count: u32) -> Result<(), ProfileError> {
        let bad = |msg: String| Err(ProfileError::InvalidParameter(msg));
        if !(0.0..1.0).contains(&self.jitter) {
            return bad(format!("jitter epsilon {} must lie in [0, 1)", self.jitter));
        }
        if self.base_work_ms.len() < subgraph_count as usize {
            return bad(format!("base_work_ms has {} entries, zoo needs {subgraph_count}", self.base_work_ms.len()));
        }
        if self.base_work_ms.iter().chain(self.task_work_scale.values()).any(|&w| !(w > 0.0 && w.is_finite())) {
            return bad("work amounts and task scales must be positive".into());
        }
        self.scaling.validate("scaling")?;
        for (name, s) in &self.proc_scaling {
            s.validate(name)?;
        }
        let non_negative = [
            ("unstructured_penalty", self.unstructured_penalty),
            ("structured_penalty", self.structured_penalty),
            ("fp16_penalty", self.fp16_penalty),
            ("int8_penalty", self.int8_penalty),
            ("variant_acc_noise", self.variant_acc_noise),
            ("sigma_acc", self.sigma_acc),
            ("comm_ms", self.comm_ms),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return bad(format!("{name} = {value} must be non-negative"));
            }
        }
        Ok(())
    }

    fn accuracy_penalty(&self, v: &SparseVariant) -> f64 {
        let level = v.sparsity_level;
        let pruning = match v.sparsity_kind {
            SparsityKind::UnstructuredPruned => self.unstructured_penalty * level.powi(3),
            SparsityKind::StructuredPruned => self.structured_penalty * level.powi(2),
            SparsityKind::Dense | SparsityKind::Quantized => 0.0,
        };
        let precision = match v.precision {
            Precision::FP32 => 0.0,
            Precision::FP16 => self.fp16_penalty,
            Precision::INT8 => self.int8_penalty,
        };
        pruning + precision
    }
}

pub fn intel_processors() -> Vec<Processor> {
    vec![
        Processor { proc_id: 1, name: "CPU".into(), speed_factor: 1.0 },
        Processor { proc_id: 2, name: "GPU".into(), speed_factor: 1.8 },
        Processor { proc_id: 3, name: "NPU".into(), speed_factor: 1.5 },
    ]
}

pub fn jetson_processors() -> Vec<Processor> {
    vec![
        Processor { proc_id: 1, name: "CPU".into(), speed_factor: 0.4 },
        Processor { proc_id: 2, name: "GPU".into(), speed_factor: 2.5 },
    ]
}

fn gaussian(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

/// Build a reproducible synthetic profile table for `zoo` on `processors`.
///
/// Each task draws from its own seeded streams, so the table is a pure
/// function of `(zoo, processors, params, seed)`.
pub fn generate_synthetic(
    zoo: &Zoo,
    processors: &[Processor],
    params: &GenParams,
    seed: u64,
) -> Result<ProfileTable, ProfileError> {
    for (k, p) in processors.iter().enumerate() {
        if p.proc_id != k as u32 + 1 {
            return Err(ProfileError::InvalidParameter("processor ids must be 1..P without gaps".into()));
        }
        if !(p.speed_factor > 0.0 && p.speed_factor.is_finite()) {
            return Err(ProfileError::InvalidParameter(format!("{}: speed factor must be positive", p.name)));
        }
    }
    let max_s = zoo.tasks().iter().map(|t| t.task.subgraph_count).max().unwrap_or(0);
    params.validate(max_s)?;

    let acc_noise = gaussian(params.variant_acc_noise);
    let stitch_noise = gaussian(params.sigma_acc);
    let mut tasks = Vec::with_capacity(zoo.tasks().len());
    for tz in zoo.tasks() {
        let t = &tz.task;
        let idx = t.task_id as u64;
        let work_scale = params.task_work_scale.get(&t.task_id).copied().unwrap_or(1.0);

        let mut rng = stream(seed, Stream::Latency, idx);
        let mut latency = Vec::with_capacity((t.variant_count * t.subgraph_count) as usize * processors.len());
        for v in &tz.variants {
            for j in 0..t.subgraph_count as usize {
                for p in processors {
                    let scale = params.scaling_for(p).factor(v.sparsity_kind, v.precision, v.sparsity_level);
                    let noise = if params.jitter > 0.0 {
                        rng.random_range(1.0 - params.jitter..=1.0 + params.jitter)
                    } else {
                        1.0
                    };
                    let value = params.base_work_ms[j] * work_scale * scale / p.speed_factor * noise;
                    // also catches NaN
                    #[allow(clippy::neg_cmp_op_on_partial_ord)]
                    if !(value > 0.0) {
                        return Err(ProfileError::InvalidParameter(format!(
                            "non-positive latency for task {} variant {} on {}",
                            t.task_id, v.variant_index, p.name
                        )));
                    }
                    latency.push(value);
                }
            }
        }

        let mut rng = stream(seed, Stream::VariantAccuracy, idx);
        let base = params.base_accuracy.get(&t.task_id).copied().unwrap_or(params.default_base_accuracy);
        let accuracy: Vec<f64> = tz
            .variants
            .iter()
            .map(|v| {
                let noise = acc_noise.map_or(0.0, |n| n.sample(&mut rng));
                (base - params.accuracy_penalty(v) + noise).clamp(0.0, 100.0)
            })
            .collect();

        let mut rng = stream(seed, Stream::StitchedAccuracy, idx);
        let stitched: Vec<f64> = stitch_iter(t)
            .map(|m| {
                let noise = stitch_noise.map_or(0.0, |n| n.sample(&mut rng));
                if let Some(i) = m.constant_donor() {
                    return accuracy[i as usize - 1];
                }
                let mean = m.donors.iter().map(|&d| accuracy[d as usize - 1]).sum::<f64>() / m.donors.len() as f64;
                (mean + noise).clamp(0.0, 100.0)
            })
            .collect();

        tasks.push(TaskProfile::new(
            t.task_id,
            t.variant_count,
            t.subgraph_count,
            processors.len() as u32,
            latency,
            accuracy,
            stitched,
        ));
    }
    ProfileTable::from_parts(processors.to_vec(), tasks, seed, Some(params.clone()))
}
