//! Published end-to-end latencies of six stitched ResNet101 variants under
//! the six non-overlapping CPU/GPU/NPU placement orders.
//!
//! Only the sums are published, so the fixture answers whole-variant
//! queries and never per-subgraph ones.

use std::collections::BTreeMap;

use super::{Processor, ProfileError};
use crate::estimator::LatencySource;
use crate::optimizer::PlacementOrder;
use crate::zoo::StitchMap;

/// Variant columns; letters name the donor of each position
/// (D = dense, P = pruned, Q = quantized).
pub const ORDER_TABLE_VARIANTS: [&str; 6] = ["P-Q-P", "P-P-Q", "D-D-P", "D-P-Q", "Q-P-D", "P-D-Q"];

/// Order rows; letters name the processor of each position.
pub const ORDER_TABLE_ORDERS: [&str; 6] = ["N-G-C", "C-G-N", "G-C-N", "G-N-C", "N-C-G", "C-N-G"];

/// `ORDER_TABLE_LATENCY_MS[order][variant]`, milliseconds.
pub const ORDER_TABLE_LATENCY_MS: [[f64; 6]; 6] = [
    [12.05, 16.91, 14.77, 17.73, 18.25, 16.99],
    [11.01, 13.40, 14.45, 15.56, 20.27, 13.48],
    [13.20, 13.69, 13.51, 12.14, 12.17, 15.54],
    [12.98, 14.22, 13.49, 14.57, 13.63, 16.51],
    [15.72, 11.93, 17.39, 12.01, 13.79, 15.73],
    [13.72, 10.77, 15.40, 12.88, 18.21, 12.51],
];

const TASK_ID: u32 = 1;

#[derive(Debug, Clone)]
pub struct OrderLatencyFixture {
    processors: Vec<Processor>,
    entries: BTreeMap<(Vec<u32>, Vec<u32>), f64>,
}

impl OrderLatencyFixture {
    pub fn published() -> Self {
        let processors = vec![
            Processor { proc_id: 1, name: "CPU".into(), speed_factor: 1.0 },
            Processor { proc_id: 2, name: "GPU".into(), speed_factor: 1.0 },
            Processor { proc_id: 3, name: "NPU".into(), speed_factor: 1.0 },
        ];
        let mut fixture = OrderLatencyFixture { processors, entries: BTreeMap::new() };
        for (r, order) in ORDER_TABLE_ORDERS.iter().enumerate() {
            let order = fixture.order(order).expect("known order label");
            for (c, variant) in ORDER_TABLE_VARIANTS.iter().enumerate() {
                let map = Self::variant(variant).expect("known variant label");
                fixture.entries.insert((map.donors, order.procs.clone()), ORDER_TABLE_LATENCY_MS[r][c]);
            }
        }
        fixture
    }

    pub fn processors(&self) -> &[Processor] {
        &self.processors
    }

    /// Donor vector for a label such as `P-Q-P` (D = 1, P = 2, Q = 3).
    pub fn variant(label: &str) -> Option<StitchMap> {
        let donors = label
            .split('-')
            .map(|c| match c {
                "D" => Some(1),
                "P" => Some(2),
                "Q" => Some(3),
                _ => None,
            })
            .collect::<Option<Vec<u32>>>()?;
        Some(StitchMap { task_id: TASK_ID, donors })
    }

    pub fn variant_label(map: &StitchMap) -> String {
        map.donors
            .iter()
            .map(|d| match d {
                1 => "D",
                2 => "P",
                3 => "Q",
                _ => "?",
            })
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn order(&self, label: &str) -> Option<PlacementOrder> {
        PlacementOrder::parse(label, &self.processors)
    }

    pub fn lookup(&self, map: &StitchMap, order: &PlacementOrder) -> Result<f64, ProfileError> {
        self.entries.get(&(map.donors.clone(), order.procs.clone())).copied().ok_or_else(|| {
            ProfileError::MissingFixtureEntry { variant: Self::variant_label(map), order: order.label(&self.processors) }
        })
    }

    /// All six orders in lexicographic processor-id order.
    pub fn orders(&self) -> Vec<PlacementOrder> {
        crate::optimizer::all_orders(3, 3).expect("3 positions on 3 processors")
    }
}

impl LatencySource for OrderLatencyFixture {
    fn end_to_end_ms(&self, map: &StitchMap, order: &PlacementOrder) -> crate::Result<f64> {
        Ok(self.lookup(map, order)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_cells() {
        let f = OrderLatencyFixture::published();
        let pqp = OrderLatencyFixture::variant("P-Q-P").unwrap();
        assert_eq!(f.lookup(&pqp, &f.order("N-G-C").unwrap()), Ok(12.05));
        assert_eq!(f.lookup(&pqp, &f.order("C-G-N").unwrap()), Ok(11.01));
        let row_min = f.orders().iter().map(|o| f.lookup(&pqp, o).unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(row_min, 11.01);
    }

    #[test]
    fn unknown_variant_is_missing_entry() {
        let f = OrderLatencyFixture::published();
        let ddd = OrderLatencyFixture::variant("D-D-D").unwrap();
        assert!(matches!(f.lookup(&ddd, &f.order("N-G-C").unwrap()), Err(ProfileError::MissingFixtureEntry { .. })));
    }
}
