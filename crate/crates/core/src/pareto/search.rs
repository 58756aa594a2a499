use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::direct::{maximize, DirectOptions};
use super::{hypervolume_xy, ParetoArchive, ParetoError};
use crate::proxy::{ObjectiveKind, ObjectivePoint, ProxyEvaluator, WeightVector};
use crate::rng::stream_rng;

/// Default number of bin edges (giving one fewer bins).
pub const DEFAULT_BIN_EDGES: usize = 14;
/// Weight of the distance-to-bin penalty in the binned objective.
pub const PENALTY: f64 = 10.0;
// Returned for weight vectors the evaluator rejects.
const FAILED_EVALUATION: f64 = -1e6;
// Samples evaluated per parallel batch in random search.
const BATCH: u64 = 1 << 14;

/// Sensitivity bins `[e_k, e_{k+1})`. The last bin is `[e_{B-1}, ∞)`: a
/// weighted combination can be more sensitive than any single metric, and
/// such points would otherwise fall outside every bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    edges: Vec<f64>,
}

impl BinSpec {
    pub fn new(edges: Vec<f64>) -> Result<Self, ParetoError> {
        if edges.len() < 2 {
            return Err(ParetoError::InvalidBins(format!("need at least 2 edges, got {}", edges.len())));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(ParetoError::InvalidBins("edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ParetoError::InvalidBins("edges must be strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    /// `count` equally spaced edges from 0 to `upper`.
    pub fn uniform(upper: f64, count: usize) -> Result<Self, ParetoError> {
        if !(upper > 0.0 && upper.is_finite()) {
            return Err(ParetoError::InvalidBins(format!("upper edge must be positive, got {upper}")));
        }
        if count < 2 {
            return Err(ParetoError::InvalidBins(format!("need at least 2 edges, got {count}")));
        }
        let last = (count - 1) as f64;
        Self::new((0..count).map(|k| upper * k as f64 / last).collect())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        (self.edges[bin], self.edges[bin + 1])
    }

    pub fn contains(&self, bin: usize, s: f64) -> bool {
        let (lo, hi) = self.bounds(bin);
        if bin + 1 == self.num_bins() {
            s >= lo
        } else {
            s >= lo && s < hi
        }
    }

    /// Distance from `s` to the bin interval (0 inside it).
    pub fn distance(&self, bin: usize, s: f64) -> f64 {
        if self.contains(bin, s) {
            return 0.0;
        }
        let (lo, hi) = self.bounds(bin);
        if s < lo {
            lo - s
        } else {
            // the upper edge itself belongs to the next bin
            (s - hi).max(f64::MIN_POSITIVE)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    pub weights: Vec<f64>,
    pub sensitivity: f64,
    pub directionality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinOutcome {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub evaluations: usize,
    pub best: Option<FrontEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoResult {
    pub algorithm: String,
    pub objectives: ObjectiveKind,
    pub metric_ids: Vec<String>,
    pub entries: Vec<FrontEntry>,
    pub infeasible_bins: Vec<usize>,
    pub evaluations: u64,
    pub wall_time_ms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bins: Vec<BinOutcome>,
}

impl ParetoResult {
    fn from_archive(algorithm: &str, kind: ObjectiveKind, metric_ids: &[String], archive: ParetoArchive) -> Self {
        let evaluations = archive.evaluations();
        Self {
            algorithm: algorithm.to_string(),
            objectives: kind,
            metric_ids: metric_ids.to_vec(),
            entries: archive
                .into_entries()
                .into_iter()
                .map(|e| FrontEntry {
                    weights: e.weights.into_inner(),
                    sensitivity: e.point.sensitivity,
                    directionality: e.point.directionality,
                })
                .collect(),
            infeasible_bins: Vec::new(),
            evaluations,
            wall_time_ms: 0.0,
            bins: Vec::new(),
        }
    }

    pub fn points(&self) -> Vec<ObjectivePoint> {
        self.entries
            .iter()
            .map(|e| ObjectivePoint::new(e.sensitivity, e.directionality, self.objectives))
            .collect()
    }

    /// Area under the front relative to `reference`. Entries that do not
    /// dominate the reference are left out.
    pub fn aupf(&self, reference: [f64; 2]) -> f64 {
        let pts: Vec<[f64; 2]> = self
            .entries
            .iter()
            .filter(|e| e.sensitivity >= reference[0] && e.directionality >= reference[1])
            .map(|e| [e.sensitivity, e.directionality])
            .collect();
        hypervolume_xy(&pts, reference).expect("points filtered against the reference")
    }
}

/// Weights for sample `index` of a random search seeded with `seed`:
/// i.i.d. uniform on [0, 1).
pub fn sample_weights(seed: u64, index: u64, m: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, index);
    (0..m).map(|_| rng.random::<f64>()).collect()
}

/// Uniform random search over the weight simplex.
pub fn random_search(
    ev: &ProxyEvaluator,
    metric_ids: &[String],
    samples: u64,
    seed: u64,
    capacity: usize,
) -> Result<ParetoResult, ParetoError> {
    if samples == 0 {
        return Err(ParetoError::InvalidSettings("sample count must be positive".into()));
    }
    let start = Instant::now();
    let m = ev.num_metrics();
    let mut archive = ParetoArchive::with_capacity(capacity);
    let mut lo = 0;
    while lo < samples {
        let hi = (lo + BATCH).min(samples);
        let batch: Vec<(WeightVector, ObjectivePoint)> = (lo..hi)
            .into_par_iter()
            .map(|index| {
                let w = WeightVector::new(sample_weights(seed, index, m))
                    .map_err(|source| ParetoError::Evaluation { index, source })?;
                let p = ev.evaluate(&w).map_err(|source| ParetoError::Evaluation { index, source })?;
                Ok((w, p))
            })
            .collect::<Result<_, ParetoError>>()?;
        for (w, p) in &batch {
            archive.insert(w, *p)?;
        }
        lo = hi;
    }
    let mut out = ParetoResult::from_archive("random", ev.config().kind, metric_ids, archive);
    out.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

/// Best sensitivity any single metric reaches on its own.
pub fn max_single_metric_sensitivity(ev: &ProxyEvaluator) -> Result<f64, ParetoError> {
    let m = ev.num_metrics();
    let mut best = f64::NEG_INFINITY;
    for k in 0..m {
        best = best.max(ev.evaluate(&WeightVector::one_hot(m, k))?.sensitivity);
    }
    Ok(best)
}

/// `edges` equally spaced bin edges from 0 to the best single-metric
/// sensitivity.
pub fn default_bins(ev: &ProxyEvaluator, edges: usize) -> Result<BinSpec, ParetoError> {
    let upper = max_single_metric_sensitivity(ev)?;
    if upper <= 0.0 {
        return Err(ParetoError::InvalidBins("no single metric has positive sensitivity".into()));
    }
    BinSpec::uniform(upper, edges)
}

/// Weights for a point of the DIRECT search cube. The lower third of each
/// axis maps to weight 0, so proxies that ignore some metrics are reachable
/// (the search never samples the cube's faces).
pub fn cube_to_weights(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| ((3.0 * v - 1.0) / 2.0).max(0.0)).collect()
}

fn search_bin(ev: &ProxyEvaluator, bins: &BinSpec, bin: usize, budget: usize) -> Result<BinOutcome, ParetoError> {
    let mut best: Option<(ObjectivePoint, Vec<f64>)> = None;
    let result = maximize(ev.num_metrics(), DirectOptions::new(budget), |x| {
        let w = cube_to_weights(x);
        match ev.evaluate_raw(&w) {
            Ok(p) => {
                let dist = bins.distance(bin, p.sensitivity);
                if dist == 0.0 && best.as_ref().is_none_or(|(b, _)| p.directionality > b.directionality) {
                    best = Some((p, w));
                }
                p.directionality - PENALTY * dist
            }
            Err(_) => FAILED_EVALUATION,
        }
    })?;
    let (lower, upper) = bins.bounds(bin);
    Ok(BinOutcome {
        bin,
        lower,
        upper,
        evaluations: result.evaluations,
        best: best.map(|(p, w)| FrontEntry {
            weights: crate::proxy::normalize(&w).expect("evaluated weights are valid").into_inner(),
            sensitivity: p.sensitivity,
            directionality: p.directionality,
        }),
    })
}

/// Maximizes directionality inside each sensitivity bin with DIRECT-L and
/// keeps the non-dominated bin winners.
pub fn binned_search(
    ev: &ProxyEvaluator,
    metric_ids: &[String],
    bins: &BinSpec,
    budget_per_bin: usize,
) -> Result<ParetoResult, ParetoError> {
    let start = Instant::now();
    let outcomes: Vec<BinOutcome> = (0..bins.num_bins())
        .into_par_iter()
        .map(|b| search_bin(ev, bins, b, budget_per_bin))
        .collect::<Result<_, _>>()?;
    let kind = ev.config().kind;
    let mut archive = ParetoArchive::new();
    let mut infeasible = Vec::new();
    for o in &outcomes {
        match &o.best {
            Some(e) => {
                let w = WeightVector::new(e.weights.clone())?;
                archive.insert(&w, ObjectivePoint::new(e.sensitivity, e.directionality, kind))?;
            }
            None => infeasible.push(o.bin),
        }
    }
    let mut out = ParetoResult::from_archive("binned", kind, metric_ids, archive);
    out.evaluations = outcomes.iter().map(|o| o.evaluations as u64).sum();
    out.infeasible_bins = infeasible;
    out.bins = outcomes;
    out.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proxy::{ObjectiveConfig, ProxyEvaluator};
    use crate::pareto::DEFAULT_CAPACITY;
    use crate::testutil::random_panel;

    fn ids(m: usize) -> Vec<String> {
        (0..m).map(|k| format!("m{k}")).collect()
    }

    #[test]
    fn cube_lower_third_is_zero_weight() {
        assert_eq!(cube_to_weights(&[0.0, 1.0 / 3.0, 0.5, 1.0]), vec![0.0, 0.0, 0.25, 1.0]);
    }

    #[test]
    fn bins_membership() {
        let b = BinSpec::uniform(1.0, 3).unwrap();
        assert_eq!(b.num_bins(), 2);
        assert!(b.contains(0, 0.0) && b.contains(0, 0.49) && !b.contains(0, 0.5));
        assert!(b.contains(1, 0.5) && b.contains(1, 1.0) && b.contains(1, 1.2));
        assert_eq!(b.distance(1, 0.25), 0.25);
        assert!(b.distance(0, 0.5) > 0.0);
        assert!(BinSpec::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(BinSpec::new(vec![0.0]).is_err());
    }

    #[test]
    fn single_metric_random_search_has_one_entry() {
        let panel = random_panel(3, 12, 20, 1);
        let ev = ProxyEvaluator::new(&panel, ObjectiveConfig::default()).unwrap();
        let r = random_search(&ev, &ids(1), 50, 9, DEFAULT_CAPACITY).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].weights, vec![1.0]);
        assert_eq!(r.evaluations, 50);
    }

    #[test]
    fn random_search_is_reproducible_and_non_dominated() {
        let panel = random_panel(5, 30, 20, 4);
        let ev = ProxyEvaluator::new(&panel, ObjectiveConfig::default()).unwrap();
        let a = random_search(&ev, &ids(4), 3000, 17, DEFAULT_CAPACITY).unwrap();
        let b = random_search(&ev, &ids(4), 3000, 17, DEFAULT_CAPACITY).unwrap();
        assert_eq!(a.entries, b.entries);
        for e in &a.entries {
            assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let pts = a.points();
        for p in &pts {
            for q in &pts {
                assert!(!crate::pareto::dominates(p, q).unwrap());
            }
        }
    }

    #[test]
    fn one_bin_matches_unconstrained_maximum() {
        let panel = random_panel(8, 25, 20, 2);
        let ev = ProxyEvaluator::new(&panel, ObjectiveConfig::default()).unwrap();
        let bins = BinSpec::new(vec![0.0, 1.0]).unwrap();
        let r = binned_search(&ev, &ids(2), &bins, 300).unwrap();
        let direct = maximize(2, DirectOptions::new(300), |x| {
            ev.evaluate_raw(&cube_to_weights(x)).map_or(-1e6, |p| p.directionality)
        })
        .unwrap();
        assert_eq!(r.entries.len(), 1);
        assert!((r.entries[0].directionality - direct.value).abs() < 1e-12);
        assert!(r.infeasible_bins.is_empty());
    }

    #[test]
    fn binned_entries_lie_in_their_bins() {
        let panel = random_panel(21, 40, 20, 3);
        let ev = ProxyEvaluator::new(&panel, ObjectiveConfig::default()).unwrap();
        let bins = default_bins(&ev, 6).unwrap();
        let r = binned_search(&ev, &ids(3), &bins, 150).unwrap();
        assert_eq!(r.bins.len(), 5);
        for o in &r.bins {
            match &o.best {
                Some(e) => assert!(bins.contains(o.bin, e.sensitivity)),
                None => assert!(r.infeasible_bins.contains(&o.bin)),
            }
            assert!(o.evaluations <= 150);
        }
        assert!(r.evaluations <= 5 * 150);
    }

    #[test]
    fn aupf_drops_points_below_reference() {
        let r = ParetoResult {
            algorithm: "random".into(),
            objectives: ObjectiveKind::BS_CORR,
            metric_ids: vec![],
            entries: vec![
                FrontEntry { weights: vec![], sensitivity: 0.2, directionality: 0.9 },
                FrontEntry { weights: vec![], sensitivity: 0.9, directionality: -0.1 },
            ],
            infeasible_bins: vec![],
            evaluations: 0,
            wall_time_ms: 0.0,
            bins: vec![],
        };
        assert!((r.aupf([0.0, 0.0]) - 0.18).abs() < 1e-15);
    }
}
