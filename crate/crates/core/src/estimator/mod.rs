//! Accuracy and latency estimation for stitched variants.
//!
//! Accuracy is learned: every subgraph inherits the measured accuracy of its
//! original variant, and a regressor maps the per-position accuracy vector of
//! a stitched variant to its predicted accuracy. Latency is analytic: the sum
//! of the measured subgraph latencies along the placement order.

mod regressor;

use std::cmp::Ordering;

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::optimizer::PlacementOrder;
use crate::profiles::{ProfileError, ProfileTable};
use crate::rng::{stream, Stream};
use crate::zoo::{stitch_iter, StitchMap, Task};

pub use regressor::{BoostedTrees, BoostingConfig, LinearModel, RegressionTree};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EstimatorError {
    #[error("no training samples")]
    EmptySamples,
    #[error("training label {0} outside [0, 100]")]
    LabelOutOfRange(f64),
    #[error("feature has {got} positions, estimator was trained on {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("K must be positive, got {0}")]
    InvalidK(usize),
    #[error("K = {k} exceeds the {candidates} candidates")]
    KExceedsCandidates { k: usize, candidates: usize },
    #[error("length mismatch: {estimates} estimates vs {truths} truths")]
    LengthMismatch { estimates: usize, truths: usize },
    #[error("no estimate/truth pairs")]
    EmptyErrorInput,
    #[error("truth at index {0} is zero; MAPE undefined")]
    ZeroTruth(usize),
    #[error("profiling cost overflows u64")]
    Overflow,
    #[error("cannot draw {wanted} training samples from {available} stitched variants")]
    NotEnoughCandidates { wanted: usize, available: usize },
}

/// End-to-end latency of a stitched variant under a placement order.
pub trait LatencySource {
    fn end_to_end_ms(&self, map: &StitchMap, order: &PlacementOrder) -> crate::Result<f64>;
}

/// Accuracy attributed to a stitched variant (measured or predicted).
pub trait AccuracySource {
    fn accuracy(&self, map: &StitchMap) -> crate::Result<f64>;
}

/// Sum of subgraph latencies along `order`, plus `comm_ms` per hop.
pub fn estimate_latency(map: &StitchMap, order: &PlacementOrder, table: &ProfileTable, comm_ms: f64) -> Result<f64, ProfileError> {
    let task = table.task(map.task_id).map_err(|_| ProfileError::MissingLatency {
        task_id: map.task_id,
        variant_index: map.donors.first().copied().unwrap_or(0),
        position: 1,
        proc_id: order.procs.first().copied().unwrap_or(0),
    })?;
    if order.procs.len() != map.donors.len() {
        return Err(ProfileError::Inconsistent(format!(
            "order has {} positions, variant has {}",
            order.procs.len(),
            map.donors.len()
        )));
    }
    let mut total = 0.0;
    for (j, (&donor, &proc_id)) in map.donors.iter().zip(&order.procs).enumerate() {
        total += task.latency(donor, j as u32 + 1, proc_id)?;
    }
    Ok(total + comm_ms * map.donors.len().saturating_sub(1) as f64)
}

/// Summed subgraph latency backed by a profile table.
#[derive(Debug, Clone, Copy)]
pub struct TableLatency<'a> {
    pub table: &'a ProfileTable,
    pub comm_ms: f64,
}

impl<'a> TableLatency<'a> {
    pub fn new(table: &'a ProfileTable) -> Self {
        TableLatency { table, comm_ms: table.gen_params().map_or(0.0, |p| p.comm_ms) }
    }
}

impl LatencySource for TableLatency<'_> {
    fn end_to_end_ms(&self, map: &StitchMap, order: &PlacementOrder) -> crate::Result<f64> {
        Ok(estimate_latency(map, order, self.table, self.comm_ms)?)
    }
}

/// Ground-truth accuracy straight from the profile table.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a>(pub &'a ProfileTable);

impl AccuracySource for GroundTruth<'_> {
    fn accuracy(&self, map: &StitchMap) -> crate::Result<f64> {
        Ok(self.0.stitched_accuracy_truth(map)?)
    }
}

/// Per-position donor accuracies of a stitched variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyFeature {
    pub values: Vec<f64>,
}

pub fn extract_features(map: &StitchMap, table: &ProfileTable) -> Result<AccuracyFeature, ProfileError> {
    let values = map.donors.iter().map(|&d| table.variant_accuracy(map.task_id, d)).collect::<Result<_, _>>()?;
    Ok(AccuracyFeature { values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    BoostedTrees(BoostingConfig),
    Linear { ridge: f64 },
    /// Mean of the feature vector. Exact when stitched accuracy is the donor mean.
    MeanOfFeatures,
}

impl Default for Learner {
    fn default() -> Self {
        Learner::BoostedTrees(BoostingConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Model {
    Boosted(BoostedTrees),
    Linear(LinearModel),
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimator {
    model: Model,
    dimension: usize,
    pub train_sample_count: usize,
    pub train_seed: u64,
    pub degenerate: bool,
}

impl AccuracyEstimator {
    /// Reference predictor that needs no training.
    pub fn mean_of_features(dimension: usize) -> Self {
        AccuracyEstimator { model: Model::Mean, dimension, train_sample_count: 0, train_seed: 0, degenerate: false }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

pub fn train_accuracy_estimator(
    samples: &[(AccuracyFeature, f64)],
    learner: &Learner,
    seed: u64,
) -> Result<AccuracyEstimator, EstimatorError> {
    let first = samples.first().ok_or(EstimatorError::EmptySamples)?;
    let dimension = first.0.values.len();
    for (f, label) in samples {
        if f.values.len() != dimension {
            return Err(EstimatorError::DimensionMismatch { expected: dimension, got: f.values.len() });
        }
        if !(0.0..=100.0).contains(label) {
            return Err(EstimatorError::LabelOutOfRange(*label));
        }
    }
    let degenerate = samples.iter().all(|(f, _)| f.values == first.0.values);
    if degenerate && samples.len() > 1 {
        warn!("all {} training features are identical; the estimator can only learn a constant", samples.len());
    }

    let rows: Vec<Vec<f64>> = samples.iter().map(|(f, _)| f.values.clone()).collect();
    let targets: Vec<f64> = samples.iter().map(|(_, y)| *y).collect();
    let model = match learner {
        Learner::BoostedTrees(cfg) => {
            let mut rng = stream(seed, Stream::Learner, 0);
            Model::Boosted(BoostedTrees::fit(&rows, &targets, cfg, &mut rng))
        }
        Learner::Linear { ridge } => Model::Linear(LinearModel::fit(&rows, &targets, *ridge)),
        Learner::MeanOfFeatures => Model::Mean,
    };
    Ok(AccuracyEstimator { model, dimension, train_sample_count: samples.len(), train_seed: seed, degenerate })
}

pub fn predict_accuracy(est: &AccuracyEstimator, feat: &AccuracyFeature) -> Result<f64, EstimatorError> {
    if feat.values.len() != est.dimension {
        return Err(EstimatorError::DimensionMismatch { expected: est.dimension, got: feat.values.len() });
    }
    let raw = match &est.model {
        Model::Boosted(m) => m.predict(&feat.values),
        Model::Linear(m) => m.predict(&feat.values),
        Model::Mean => feat.values.iter().sum::<f64>() / feat.values.len().max(1) as f64,
    };
    Ok(raw.clamp(0.0, 100.0))
}

/// Accuracy predicted by a trained estimator from original-variant accuracies.
#[derive(Debug, Clone, Copy)]
pub struct Predicted<'a> {
    pub estimator: &'a AccuracyEstimator,
    pub table: &'a ProfileTable,
}

impl AccuracySource for Predicted<'_> {
    fn accuracy(&self, map: &StitchMap) -> crate::Result<f64> {
        let feat = extract_features(map, self.table)?;
        Ok(predict_accuracy(self.estimator, &feat)?)
    }
}

/// One estimator per task, trained on `n` stitched variants drawn uniformly
/// without replacement, labelled with ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSet {
    pub per_task: Vec<(u32, AccuracyEstimator)>,
}

impl EstimatorSet {
    pub fn train(tasks: &[Task], table: &ProfileTable, n: usize, learner: &Learner, seed: u64) -> crate::Result<Self> {
        let mut per_task = Vec::with_capacity(tasks.len());
        for task in tasks {
            let sample = sample_training_maps(task, n, seed)?;
            let samples = sample
                .iter()
                .map(|m| Ok((extract_features(m, table)?, table.stitched_accuracy_truth(m)?)))
                .collect::<Result<Vec<_>, ProfileError>>()?;
            per_task.push((task.task_id, train_accuracy_estimator(&samples, learner, seed ^ task.task_id as u64)?));
        }
        Ok(EstimatorSet { per_task })
    }

    pub fn get(&self, task_id: u32) -> Option<&AccuracyEstimator> {
        self.per_task.iter().find(|(t, _)| *t == task_id).map(|(_, e)| e)
    }
}

/// Accuracy from a per-task estimator set. Original variants were profiled,
/// so constant donor vectors report their measured accuracy instead.
#[derive(Debug, Clone, Copy)]
pub struct PredictedSet<'a> {
    pub estimators: &'a EstimatorSet,
    pub table: &'a ProfileTable,
}

impl AccuracySource for PredictedSet<'_> {
    fn accuracy(&self, map: &StitchMap) -> crate::Result<f64> {
        if let Some(i) = map.constant_donor() {
            return Ok(self.table.variant_accuracy(map.task_id, i)?);
        }
        let est = self.estimators.get(map.task_id).ok_or(ProfileError::MissingTask(map.task_id))?;
        Predicted { estimator: est, table: self.table }.accuracy(map)
    }
}

/// Seeded uniform sample of `n` distinct stitched variants, in lexicographic order.
pub fn sample_training_maps(task: &Task, n: usize, seed: u64) -> Result<Vec<StitchMap>, EstimatorError> {
    let all: Vec<StitchMap> = stitch_iter(task).collect();
    if n > all.len() {
        return Err(EstimatorError::NotEnoughCandidates { wanted: n, available: all.len() });
    }
    let mut rng = stream(seed, Stream::TrainingSample, task.task_id as u64);
    let mut picked = index::sample(&mut rng, all.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| all[i].clone()).collect())
}

fn factorial(p: u64) -> Option<u64> {
    (1..=p).try_fold(1u64, |acc, k| acc.checked_mul(k))
}

/// Profiling runs needed to fill the accuracy/latency lookup table.
///
/// Without estimators every variant is profiled for accuracy once and for
/// latency under each of the `P!` orders; with estimators only the `V`
/// originals are profiled for accuracy and each of the `S * V` subgraphs on
/// each of the `P` processors for latency.
pub fn profiling_cost(t: u64, v: u64, s: u32, p: u64, with_stitching: bool, with_estimators: bool) -> Result<u64, EstimatorError> {
    let overflow = EstimatorError::Overflow;
    if with_estimators {
        let acc = t.checked_mul(v).ok_or(EstimatorError::Overflow)?;
        let lat = t
            .checked_mul(s as u64)
            .and_then(|x| x.checked_mul(v))
            .and_then(|x| x.checked_mul(p))
            .ok_or(EstimatorError::Overflow)?;
        return acc.checked_add(lat).ok_or(overflow);
    }
    let variants = if with_stitching { v.checked_pow(s) } else { Some(v) };
    variants
        .and_then(|n| n.checked_mul(t))
        .and_then(|n| factorial(p).and_then(|f| f.checked_add(1)).and_then(|f| n.checked_mul(f)))
        .ok_or(overflow)
}

/// Ground-truth runs used to train the accuracy estimators (`T * N`),
/// reported separately from [`profiling_cost`].
pub fn training_profiling_runs(t: u64, n: u64) -> Result<u64, EstimatorError> {
    t.checked_mul(n).ok_or(EstimatorError::Overflow)
}

fn top_k_indices(maps: &[StitchMap], scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..maps.len()).collect();
    idx.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => maps[a].donors.cmp(&maps[b].donors),
        other => other,
    });
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Overlap of the predicted and true top-K sets divided by K. Ties rank the
/// lexicographically smaller donor vector first.
pub fn top_k_recall_scores(maps: &[StitchMap], predicted: &[f64], truth: &[f64], k: usize) -> Result<f64, EstimatorError> {
    if k == 0 {
        return Err(EstimatorError::InvalidK(k));
    }
    if k > maps.len() {
        return Err(EstimatorError::KExceedsCandidates { k, candidates: maps.len() });
    }
    if predicted.len() != maps.len() || truth.len() != maps.len() {
        return Err(EstimatorError::LengthMismatch { estimates: predicted.len(), truths: truth.len() });
    }
    let want = top_k_indices(maps, truth, k);
    let got = top_k_indices(maps, predicted, k);
    let hits = want.iter().filter(|i| got.binary_search(i).is_ok()).count();
    Ok(hits as f64 / k as f64)
}

pub fn top_k_recall(est: &AccuracyEstimator, candidates: &[StitchMap], table: &ProfileTable, k: usize) -> crate::Result<f64> {
    let source = Predicted { estimator: est, table };
    let predicted = candidates.iter().map(|m| source.accuracy(m)).collect::<crate::Result<Vec<_>>>()?;
    let truth = candidates.iter().map(|m| table.stitched_accuracy_truth(m)).collect::<Result<Vec<_>, _>>()?;
    Ok(top_k_recall_scores(candidates, &predicted, &truth, k)?)
}

/// Mean absolute error and mean absolute percentage error (as a fraction).
pub fn latency_error(estimates: &[f64], truths: &[f64]) -> Result<(f64, f64), EstimatorError> {
    if estimates.len() != truths.len() {
        return Err(EstimatorError::LengthMismatch { estimates: estimates.len(), truths: truths.len() });
    }
    if estimates.is_empty() {
        return Err(EstimatorError::EmptyErrorInput);
    }
    if let Some(i) = truths.iter().position(|t| t.abs() < 1e-9) {
        return Err(EstimatorError::ZeroTruth(i));
    }
    let n = estimates.len() as f64;
    let mae = estimates.iter().zip(truths).map(|(e, t)| (e - t).abs()).sum::<f64>() / n;
    let mape = estimates.iter().zip(truths).map(|(e, t)| (e - t).abs() / t).sum::<f64>() / n;
    Ok((mae, mape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{generate_synthetic, intel_processors, GenParams};
    use crate::zoo::{template_zoo, enumerate_stitched, Platform};
    use proptest::prelude::*;

    fn world(sigma: f64, seed: u64) -> (crate::zoo::Zoo, ProfileTable) {
        let zoo = template_zoo(Platform::Intel);
        let params = GenParams { sigma_acc: sigma, ..GenParams::intel() };
        let table = generate_synthetic(&zoo, &intel_processors(), &params, seed).unwrap();
        (zoo, table)
    }

    fn order(p: &[u32]) -> PlacementOrder {
        PlacementOrder { procs: p.to_vec() }
    }

    #[test]
    fn features_are_donor_accuracies() {
        let (_, table) = world(0.5, 1);
        let a1 = table.variant_accuracy(1, 1).unwrap();
        let a3 = table.variant_accuracy(1, 3).unwrap();
        let f = extract_features(&StitchMap { task_id: 1, donors: vec![1, 3, 1] }, &table).unwrap();
        assert_eq!(f.values, vec![a1, a3, a1]);
        assert!(matches!(
            extract_features(&StitchMap { task_id: 1, donors: vec![11, 1, 1] }, &table),
            Err(ProfileError::MissingAccuracy { .. })
        ));
    }

    #[test]
    fn latency_sums_lookups_and_hops() {
        let (_, table) = world(0.5, 1);
        let map = StitchMap { task_id: 2, donors: vec![4, 1, 9] };
        let o = order(&[3, 2, 1]);
        let parts = [
            table.lookup_latency(2, 4, 1, 3).unwrap(),
            table.lookup_latency(2, 1, 2, 2).unwrap(),
            table.lookup_latency(2, 9, 3, 1).unwrap(),
        ];
        let sum: f64 = parts.iter().sum();
        assert_eq!(estimate_latency(&map, &o, &table, 0.0).unwrap(), sum);
        assert!((estimate_latency(&map, &o, &table, 0.2).unwrap() - (sum + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn profiling_cost_formulas() {
        assert_eq!(profiling_cost(4, 10, 3, 3, true, false), Ok(28_000));
        assert_eq!(profiling_cost(4, 10, 3, 3, true, true), Ok(400));
        assert_eq!(profiling_cost(4, 10, 3, 3, false, false), Ok(280));
        assert_eq!(profiling_cost(4, 10, 30, 3, true, false), Err(EstimatorError::Overflow));
        assert_eq!(training_profiling_runs(4, 50), Ok(200));
    }

    #[test]
    fn latency_error_examples() {
        assert_eq!(latency_error(&[10.0, 20.0], &[10.0, 20.0]), Ok((0.0, 0.0)));
        let (mae, mape) = latency_error(&[11.0, 18.0], &[10.0, 20.0]).unwrap();
        assert!((mae - 1.5).abs() < 1e-12 && (mape - 0.10).abs() < 1e-12);
        let (mae, mape) = latency_error(&[9.0], &[10.0]).unwrap();
        assert!((mae - 1.0).abs() < 1e-12 && (mape - 0.10).abs() < 1e-12);
        assert_eq!(latency_error(&[1.0], &[1.0, 2.0]), Err(EstimatorError::LengthMismatch { estimates: 1, truths: 2 }));
        assert_eq!(latency_error(&[1.0], &[0.0]), Err(EstimatorError::ZeroTruth(0)));
    }

    #[test]
    fn noise_free_training_fits_mean_model() {
        let (zoo, table) = world(0.0, 9);
        let task = &zoo.task(1).unwrap().task;
        let maps = sample_training_maps(task, 50, 9).unwrap();
        let samples: Vec<_> =
            maps.iter().map(|m| (extract_features(m, &table).unwrap(), table.stitched_accuracy_truth(m).unwrap())).collect();
        let est = train_accuracy_estimator(&samples, &Learner::default(), 9).unwrap();
        let rmse = (samples.iter().map(|(f, y)| (predict_accuracy(&est, f).unwrap() - y).powi(2)).sum::<f64>()
            / samples.len() as f64)
            .sqrt();
        assert!(rmse <= 0.5, "training rmse {rmse}");

        let probe = AccuracyFeature { values: vec![90.0, 90.0, 84.0] };
        assert!((predict_accuracy(&est, &probe).unwrap() - 88.0).abs() <= 0.5);

        for i in 1..=task.variant_count {
            let f = extract_features(&StitchMap::constant(1, i, 3), &table).unwrap();
            let want = table.variant_accuracy(1, i).unwrap();
            assert!((predict_accuracy(&est, &f).unwrap() - want).abs() <= 1.0);
        }
    }

    #[test]
    fn single_sample_interpolates() {
        let feat = AccuracyFeature { values: vec![91.0, 85.0] };
        let est = train_accuracy_estimator(&[(feat.clone(), 87.25)], &Learner::default(), 0).unwrap();
        assert!((predict_accuracy(&est, &feat).unwrap() - 87.25).abs() < 1e-9);
    }

    #[test]
    fn constant_zoo_predicts_constant() {
        let samples: Vec<_> = (0..10).map(|_| (AccuracyFeature { values: vec![90.0; 3] }, 90.0)).collect();
        let est = train_accuracy_estimator(&samples, &Learner::default(), 0).unwrap();
        assert!(est.degenerate);
        let p = predict_accuracy(&est, &AccuracyFeature { values: vec![90.0; 3] }).unwrap();
        assert!((p - 90.0).abs() <= 0.5);
    }

    #[test]
    fn training_is_deterministic() {
        let (zoo, table) = world(0.5, 4);
        let tasks: Vec<_> = zoo.tasks().iter().map(|t| t.task.clone()).collect();
        let a = EstimatorSet::train(&tasks, &table, 50, &Learner::default(), 4).unwrap();
        let b = EstimatorSet::train(&tasks, &table, 50, &Learner::default(), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_checks_dimension() {
        let est = AccuracyEstimator::mean_of_features(3);
        assert_eq!(
            predict_accuracy(&est, &AccuracyFeature { values: vec![1.0, 2.0] }),
            Err(EstimatorError::DimensionMismatch { expected: 3, got: 2 })
        );
        assert!(matches!(train_accuracy_estimator(&[], &Learner::default(), 0), Err(EstimatorError::EmptySamples)));
    }

    #[test]
    fn recall_with_constant_predictor_against_explicit_intersection() {
        // 20 candidates; constant predictions rank purely by donor order.
        let task = Task { task_id: 1, name: "x".into(), variant_count: 20, subgraph_count: 1 };
        let maps = enumerate_stitched(&task);
        let truth: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
        let predicted = vec![50.0; 20];
        for k in [1usize, 3, 5, 10, 20] {
            // oracle: true top-k = indices with the k largest truth values; predicted top-k = first k
            let mut by_truth: Vec<usize> = (0..20).collect();
            by_truth.sort_by(|&a, &b| truth[b].partial_cmp(&truth[a]).unwrap().then(a.cmp(&b)));
            let true_set: std::collections::BTreeSet<usize> = by_truth[..k].iter().copied().collect();
            let hits = (0..k).filter(|i| true_set.contains(i)).count();
            let got = top_k_recall_scores(&maps, &predicted, &truth, k).unwrap();
            assert_eq!(got, hits as f64 / k as f64, "k = {k}");
        }
        assert_eq!(top_k_recall_scores(&maps, &predicted, &truth, 0), Err(EstimatorError::InvalidK(0)));
        assert!(top_k_recall_scores(&maps, &predicted, &truth, 21).is_err());
    }

    #[test]
    fn recall_of_perfect_predictor() {
        let (zoo, table) = world(0.5, 2);
        let task = &zoo.task(3).unwrap().task;
        let maps = enumerate_stitched(task);
        let truth: Vec<f64> = maps.iter().map(|m| table.stitched_accuracy_truth(m).unwrap()).collect();
        assert_eq!(top_k_recall_scores(&maps, &truth, &truth, 10), Ok(1.0));
        let est = AccuracyEstimator::mean_of_features(3);
        assert_eq!(top_k_recall(&est, &maps, &table, maps.len()).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn recall_is_a_fraction(truth in prop::collection::vec(0.0f64..100.0, 12), pred in prop::collection::vec(0.0f64..100.0, 12), k in 1usize..=12) {
            let task = Task { task_id: 1, name: "x".into(), variant_count: 12, subgraph_count: 1 };
            let maps = enumerate_stitched(&task);
            let r = top_k_recall_scores(&maps, &pred, &truth, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            let monotone: Vec<f64> = truth.iter().map(|t| 3.0 * t + 1.0).collect();
            prop_assert_eq!(top_k_recall_scores(&maps, &monotone, &truth, k).unwrap(), 1.0);
        }

        #[test]
        fn estimator_cost_beats_exhaustive(t in 1u64..8, v in 2u64..11, s in 2u32..4, p in 2u64..5) {
            let with = profiling_cost(t, v, s, p, true, true).unwrap();
            let without = profiling_cost(t, v, s, p, true, false).unwrap();
            prop_assert!(with < without);
        }
    }
}
