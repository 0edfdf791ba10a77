//! SLO configuration sweeps derived from the original variants' accuracy
//! and latency ranges.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::estimator::LatencySource;
use crate::optimizer::{PlacementOrder, SloConfig, TaskSlo};
use crate::profiles::ProfileTable;
use crate::zoo::{StitchMap, Zoo};

pub const SAMPLES_PER_AXIS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRanges {
    pub acc_min: f64,
    pub acc_max: f64,
    pub lat_min_ms: f64,
    pub lat_max_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuaranteeMode {
    AccuracyGuaranteed,
    LatencyGuaranteed,
}

/// Accuracy and best-order latency ranges over each task's original variants.
pub fn task_ranges(
    zoo: &Zoo,
    table: &ProfileTable,
    lat: &dyn LatencySource,
    orders: &[PlacementOrder],
) -> crate::Result<BTreeMap<u32, TaskRanges>> {
    let mut out = BTreeMap::new();
    for tz in zoo.tasks() {
        let t = &tz.task;
        let mut r = TaskRanges { acc_min: f64::INFINITY, acc_max: f64::NEG_INFINITY, lat_min_ms: f64::INFINITY, lat_max_ms: f64::NEG_INFINITY };
        for i in 1..=t.variant_count {
            let acc = table.variant_accuracy(t.task_id, i)?;
            let map = StitchMap::constant(t.task_id, i, t.subgraph_count);
            let mut best = f64::INFINITY;
            for o in orders {
                best = best.min(lat.end_to_end_ms(&map, o)?);
            }
            r.acc_min = r.acc_min.min(acc);
            r.acc_max = r.acc_max.max(acc);
            r.lat_min_ms = r.lat_min_ms.min(best);
            r.lat_max_ms = r.lat_max_ms.max(best);
        }
        out.insert(t.task_id, r);
    }
    Ok(out)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn axis_samples(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn extended(r: &TaskRanges) -> (Vec<f64>, Vec<f64>) {
    let acc = axis_samples((r.acc_min - 2.0).max(0.0), (r.acc_max + 2.0).min(100.0), SAMPLES_PER_AXIS);
    let lat = axis_samples(0.8 * r.lat_min_ms, 1.2 * r.lat_max_ms, SAMPLES_PER_AXIS);
    (acc, lat)
}

/// Cartesian product of 5 accuracy floors and 5 latency ceilings per task.
/// Config `a * 5 + l + 1` pairs the `a`-th floor with the `l`-th ceiling.
pub fn generate_slo_configs(ranges: &BTreeMap<u32, TaskRanges>) -> Vec<SloConfig> {
    let axes: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = ranges.iter().map(|(&t, r)| (t, extended(r))).collect();
    let mut out = Vec::with_capacity(SAMPLES_PER_AXIS * SAMPLES_PER_AXIS);
    for a in 0..SAMPLES_PER_AXIS {
        for l in 0..SAMPLES_PER_AXIS {
            let per_task = axes
                .iter()
                .map(|(&t, (acc, lat))| (t, TaskSlo { acc_floor: acc[a], lat_ceiling_ms: lat[l] }))
                .collect();
            out.push(SloConfig { config_id: (a * SAMPLES_PER_AXIS + l + 1) as u32, per_task });
        }
    }
    out
}

/// Five configs pinning one axis at its hardest value and sweeping the
/// other over the unextended range.
pub fn generate_guaranteed_slos(ranges: &BTreeMap<u32, TaskRanges>, mode: GuaranteeMode) -> Vec<SloConfig> {
    for (t, r) in ranges {
        let flat = match mode {
            GuaranteeMode::AccuracyGuaranteed => r.lat_min_ms == r.lat_max_ms,
            GuaranteeMode::LatencyGuaranteed => r.acc_min == r.acc_max,
        };
        if flat {
            warn!("task {t}: degenerate range, the single boundary value is repeated");
        }
    }
    (0..SAMPLES_PER_AXIS)
        .map(|k| {
            let per_task = ranges
                .iter()
                .map(|(&t, r)| {
                    let slo = match mode {
                        GuaranteeMode::AccuracyGuaranteed => TaskSlo {
                            acc_floor: r.acc_max,
                            lat_ceiling_ms: axis_samples(r.lat_min_ms, r.lat_max_ms, SAMPLES_PER_AXIS)[k],
                        },
                        GuaranteeMode::LatencyGuaranteed => TaskSlo {
                            acc_floor: axis_samples(r.acc_min, r.acc_max, SAMPLES_PER_AXIS)[k],
                            lat_ceiling_ms: r.lat_min_ms,
                        },
                    };
                    (t, slo)
                })
                .collect();
            SloConfig { config_id: k as u32 + 1, per_task }
        })
        .collect()
}
