//! Built-in sparse model zoos mirroring the evaluation setup: four tasks,
//! ten variants each (one dense base, quantized and pruned derivatives).

use serde::{Deserialize, Serialize};

use super::{Precision, SparseVariant, SparsityKind, Subgraph, Task, TaskZoo, Zoo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    /// CPU + GPU + NPU, three subgraphs per variant.
    Intel,
    /// CPU + GPU, two subgraphs per variant.
    Jetson,
}

impl Platform {
    pub fn subgraph_count(self) -> u32 {
        match self {
            Platform::Intel => 3,
            Platform::Jetson => 2,
        }
    }

    pub fn variants(self) -> &'static [TemplateVariant] {
        match self {
            Platform::Intel => INTEL_VARIANTS,
            Platform::Jetson => JETSON_VARIANTS,
        }
    }

    /// Share of the dense model's parameters held by each subgraph position.
    fn position_shares(self) -> &'static [f64] {
        match self {
            Platform::Intel => &[0.25, 0.35, 0.40],
            Platform::Jetson => &[0.45, 0.55],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateVariant {
    pub kind: SparsityKind,
    pub level: f64,
    pub precision: Precision,
}

const fn tv(kind: SparsityKind, level: f64, precision: Precision) -> TemplateVariant {
    TemplateVariant { kind, level, precision }
}

use Precision::*;
use SparsityKind::*;

pub const INTEL_VARIANTS: &[TemplateVariant] = &[
    tv(Dense, 0.0, FP32),
    tv(Quantized, 0.0, INT8),
    tv(UnstructuredPruned, 0.90, FP32),
    tv(UnstructuredPruned, 0.85, FP32),
    tv(UnstructuredPruned, 0.80, FP32),
    tv(UnstructuredPruned, 0.75, FP32),
    tv(UnstructuredPruned, 0.70, FP32),
    tv(UnstructuredPruned, 0.65, FP32),
    tv(StructuredPruned, 0.40, FP32),
    tv(StructuredPruned, 0.50, FP32),
];

pub const JETSON_VARIANTS: &[TemplateVariant] = &[
    tv(Dense, 0.0, FP32),
    tv(Quantized, 0.0, FP16),
    tv(Quantized, 0.0, INT8),
    tv(StructuredPruned, 0.20, FP32),
    tv(StructuredPruned, 0.30, FP32),
    tv(StructuredPruned, 0.35, FP32),
    tv(StructuredPruned, 0.40, FP32),
    tv(StructuredPruned, 0.45, FP32),
    tv(StructuredPruned, 0.50, FP32),
    tv(StructuredPruned, 0.55, FP32),
];

/// `(name, dense FP32 model size in bytes)`.
pub const TEMPLATE_TASKS: &[(&str, u64)] = &[
    ("ResNet101", 170_000_000),
    ("BERT-Base", 440_000_000),
    ("ViT-Small", 88_000_000),
    ("Wav2vec2", 378_000_000),
];

/// Subgraph memory is the dense share scaled by the kept-weight fraction
/// `1 - sparsity_level` and by the parameter width.
pub fn template_zoo(platform: Platform) -> Zoo {
    let s = platform.subgraph_count();
    let shares = platform.position_shares();
    let tasks = TEMPLATE_TASKS
        .iter()
        .enumerate()
        .map(|(t, &(name, dense_bytes))| {
            let task_id = t as u32 + 1;
            let variants: Vec<_> = platform
                .variants()
                .iter()
                .enumerate()
                .map(|(i, tv)| {
                    let variant_index = i as u32 + 1;
                    let subgraphs = shares
                        .iter()
                        .enumerate()
                        .map(|(j, share)| Subgraph {
                            task_id,
                            variant_index,
                            position: j as u32 + 1,
                            mem_bytes: (dense_bytes as f64 * share * (1.0 - tv.level) * tv.precision.width_factor()).round()
                                as u64,
                        })
                        .collect();
                    SparseVariant {
                        task_id,
                        variant_index,
                        sparsity_kind: tv.kind,
                        sparsity_level: tv.level,
                        precision: tv.precision,
                        subgraphs,
                    }
                })
                .collect();
            TaskZoo {
                task: Task { task_id, name: name.to_string(), variant_count: variants.len() as u32, subgraph_count: s },
                variants,
            }
        })
        .collect();
    Zoo::new(tasks).expect("template zoo is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_shape() {
        let zoo = template_zoo(Platform::Intel);
        assert_eq!(zoo.tasks().len(), 4);
        for tz in zoo.tasks() {
            assert_eq!(tz.task.variant_count, 10);
            assert_eq!(tz.task.subgraph_count, 3);
            let dense = &tz.variants[0];
            assert_eq!((dense.sparsity_kind, dense.sparsity_level, dense.precision), (Dense, 0.0, FP32));
        }
        let jetson = template_zoo(Platform::Jetson);
        assert!(jetson.tasks().iter().all(|t| t.task.variant_count == 10 && t.task.subgraph_count == 2));
    }

    #[test]
    fn full_preload_matches_direct_summation() {
        // Independent spreadsheet-style sum straight from the variant table.
        for platform in [Platform::Intel, Platform::Jetson] {
            let mut expected = 0u64;
            for &(_, bytes) in TEMPLATE_TASKS {
                for v in platform.variants() {
                    for share in platform.position_shares() {
                        let kept = 1.0 - v.level;
                        let width = match v.precision {
                            FP32 => 1.0,
                            FP16 => 0.5,
                            INT8 => 0.25,
                        };
                        expected += (bytes as f64 * share * kept * width).round() as u64;
                    }
                }
            }
            assert_eq!(template_zoo(platform).full_preload_memory().unwrap(), expected);
        }
    }
}
