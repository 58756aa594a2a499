//! Linear proxy metrics and their (sensitivity, directionality) objectives.
//!
//! A proxy is `Z[i,j] = Σ_m w_m · X[i,j,m]`. Binary sensitivity and
//! correlation are invariant to the scale of `w`; MSE is not, so objectives
//! using MSE always normalize `w` to sum to one before evaluating.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::ExperimentPanel;
use crate::stats::{
    self, column_average_sensitivity, column_binary_sensitivity, directionality_corr, directionality_mse,
    CorrelationMethod, IqrClamp, MetricSummary, StatsError, Thresholds,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProxyError {
    #[error("weight vector has {got} entries, panel has {want} metrics")]
    DimensionMismatch { got: usize, want: usize },
    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("weight {index} is negative or not finite: {value}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("need at least 3 experiments, panel has {0}")]
    TooFewExperiments(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Nonnegative auxiliary-metric weights with at least one positive entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, ProxyError> {
        for (index, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ProxyError::InvalidWeight { index, value });
            }
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(ProxyError::AllZeroWeights);
        }
        Ok(Self(weights))
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut w = vec![0.0; len];
        w[index] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn normalized(&self) -> Self {
        let total: f64 = self.0.iter().sum();
        Self(self.0.iter().map(|w| w / total).collect())
    }

    pub fn scaled(&self, c: f64) -> Result<Self, ProxyError> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `w / Σw`.
pub fn normalize(weights: &[f64]) -> Result<WeightVector, ProxyError> {
    Ok(WeightVector::new(weights.to_vec())?.normalized())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityKind {
    Binary,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionalityKind {
    Pearson,
    Spearman,
    NegMse,
}

/// The objective pair a point was computed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectiveKind {
    pub sensitivity: SensitivityKind,
    pub directionality: DirectionalityKind,
}

impl ObjectiveKind {
    pub const BS_CORR: Self = Self {
        sensitivity: SensitivityKind::Binary,
        directionality: DirectionalityKind::Pearson,
    };
    pub const AS_NEGMSE: Self = Self {
        sensitivity: SensitivityKind::Average,
        directionality: DirectionalityKind::NegMse,
    };

    pub fn uses_mse(self) -> bool {
        self.directionality == DirectionalityKind::NegMse
    }
}

impl Default for ObjectiveKind {
    fn default() -> Self {
        Self::BS_CORR
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.sensitivity {
            SensitivityKind::Binary => "bs",
            SensitivityKind::Average => "as",
        };
        let d = match self.directionality {
            DirectionalityKind::Pearson => "corr",
            DirectionalityKind::Spearman => "spearman",
            DirectionalityKind::NegMse => "negmse",
        };
        write!(f, "{s}-{d}")
    }
}

impl FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| format!("objective pair `{s}` must look like bs-corr"))?;
        let sensitivity = match a {
            "bs" => SensitivityKind::Binary,
            "as" => SensitivityKind::Average,
            _ => return Err(format!("unknown sensitivity `{a}` (bs|as)")),
        };
        let directionality = match b {
            "corr" => DirectionalityKind::Pearson,
            "spearman" => DirectionalityKind::Spearman,
            "negmse" => DirectionalityKind::NegMse,
            _ => return Err(format!("unknown directionality `{b}` (corr|spearman|negmse)")),
        };
        Ok(Self {
            sensitivity,
            directionality,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub alpha: f64,
    pub clamp: Option<IqrClamp>,
    /// z-score both series before the MSE.
    pub standardize_mse: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::BS_CORR,
            alpha: 0.05,
            clamp: None,
            standardize_mse: false,
        }
    }
}

/// Objective values; both axes are maximized (MSE enters negated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub sensitivity: f64,
    pub directionality: f64,
    pub kind: ObjectiveKind,
}

impl ObjectivePoint {
    pub fn new(sensitivity: f64, directionality: f64, kind: ObjectiveKind) -> Self {
        Self {
            sensitivity,
            directionality,
            kind,
        }
    }
}

fn check_weights(panel: &ExperimentPanel, w: &WeightVector) -> Result<(), ProxyError> {
    if w.len() != panel.num_metrics() {
        return Err(ProxyError::DimensionMismatch {
            got: w.len(),
            want: panel.num_metrics(),
        });
    }
    Ok(())
}

/// Proxy values per experiment and bucket, laid out like the north-star Y.
pub fn proxy_series(panel: &ExperimentPanel, w: &WeightVector) -> Result<Vec<Vec<f64>>, ProxyError> {
    check_weights(panel, w)?;
    let m = panel.num_metrics();
    let w = w.as_slice();
    Ok(panel
        .experiments()
        .iter()
        .map(|e| {
            (0..e.num_buckets())
                .map(|i| e.row(i, m).iter().zip(w).map(|(x, w)| x * w).sum())
                .collect()
        })
        .collect())
}

/// Reduces per-experiment proxy summaries and north-star means to an
/// objective point.
pub fn objectives_from_summaries(
    summaries: &[MetricSummary],
    y_means: &[f64],
    cfg: &ObjectiveConfig,
) -> Result<ObjectivePoint, ProxyError> {
    let sensitivity = match cfg.kind.sensitivity {
        SensitivityKind::Binary => column_binary_sensitivity(summaries)?,
        SensitivityKind::Average => column_average_sensitivity(summaries, cfg.clamp)?,
    };
    let z: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
    let directionality = match cfg.kind.directionality {
        DirectionalityKind::Pearson => directionality_corr(&z, y_means, CorrelationMethod::Pearson)?,
        DirectionalityKind::Spearman => directionality_corr(&z, y_means, CorrelationMethod::Spearman)?,
        DirectionalityKind::NegMse => -directionality_mse(&z, y_means, cfg.standardize_mse)?,
    };
    Ok(ObjectivePoint::new(sensitivity, directionality, cfg.kind))
}

/// Objectives and per-experiment proxy summaries, computed by materializing
/// the proxy series and running the jackknife on it.
pub fn evaluate_detailed(
    panel: &ExperimentPanel,
    w: &WeightVector,
    cfg: &ObjectiveConfig,
) -> Result<(ObjectivePoint, Vec<MetricSummary>), ProxyError> {
    check_weights(panel, w)?;
    if panel.num_experiments() < 3 {
        return Err(ProxyError::TooFewExperiments(panel.num_experiments()));
    }
    let w = if cfg.kind.uses_mse() { w.normalized() } else { w.clone() };
    let z = proxy_series(panel, &w)?;
    let mut th = Thresholds::new(cfg.alpha);
    let summaries: Vec<MetricSummary> = z.iter().map(|zj| stats::summarize_values(zj, &mut th)).collect();
    let y: Vec<f64> = panel.experiments().iter().map(|e| stats::mean(e.y())).collect();
    let point = objectives_from_summaries(&summaries, &y, cfg)?;
    Ok((point, summaries))
}

pub fn evaluate_objectives(
    panel: &ExperimentPanel,
    w: &WeightVector,
    cfg: &ObjectiveConfig,
) -> Result<ObjectivePoint, ProxyError> {
    evaluate_detailed(panel, w, cfg).map(|(p, _)| p)
}

struct Moments {
    n: usize,
    tau: f64,
    means: Vec<f64>,
    /// Sample covariance of the bucket rows, row-major M×M.
    cov: Vec<f64>,
}

/// Precomputed per-experiment means and bucket covariances, so a candidate
/// weight vector costs O(J·M²) instead of O(J·N·M).
///
/// The proxy's jackknife standard error of the mean is `s_Z/√N`, and
/// `s_Z² = wᵀ C w` for the bucket covariance `C`, so this is the same
/// quantity [`evaluate_objectives`] computes from the materialized series.
pub struct ProxyEvaluator {
    cfg: ObjectiveConfig,
    m: usize,
    experiments: Vec<Moments>,
    y_means: Vec<f64>,
}

impl ProxyEvaluator {
    pub fn new(panel: &ExperimentPanel, cfg: ObjectiveConfig) -> Result<Self, ProxyError> {
        if panel.num_experiments() < 3 {
            return Err(ProxyError::TooFewExperiments(panel.num_experiments()));
        }
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            return Err(StatsError::InvalidAlpha(cfg.alpha).into());
        }
        let m = panel.num_metrics();
        let mut th = Thresholds::new(cfg.alpha);
        let experiments = panel
            .experiments()
            .iter()
            .map(|e| {
                let n = e.num_buckets();
                let mut means = vec![0.0; m];
                for i in 0..n {
                    for (acc, x) in means.iter_mut().zip(e.row(i, m)) {
                        *acc += x;
                    }
                }
                for v in &mut means {
                    *v /= n as f64;
                }
                let mut cov = vec![0.0; m * m];
                let mut dev = vec![0.0; m];
                for i in 0..n {
                    for ((d, x), mu) in dev.iter_mut().zip(e.row(i, m)).zip(&means) {
                        *d = x - mu;
                    }
                    for a in 0..m {
                        for b in a..m {
                            cov[a * m + b] += dev[a] * dev[b];
                        }
                    }
                }
                for a in 0..m {
                    for b in a..m {
                        let v = cov[a * m + b] / (n as f64 - 1.0);
                        cov[a * m + b] = v;
                        cov[b * m + a] = v;
                    }
                }
                Moments {
                    n,
                    tau: th.tau(n - 1),
                    means,
                    cov,
                }
            })
            .collect();
        let y_means = panel.experiments().iter().map(|e| stats::mean(e.y())).collect();
        Ok(Self {
            cfg,
            m,
            experiments,
            y_means,
        })
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    pub fn num_metrics(&self) -> usize {
        self.m
    }

    pub fn y_means(&self) -> &[f64] {
        &self.y_means
    }

    /// Per-experiment proxy summaries for raw weights (no normalization).
    pub fn summaries(&self, w: &[f64]) -> Vec<MetricSummary> {
        let m = self.m;
        self.experiments
            .iter()
            .map(|e| {
                let zbar: f64 = e.means.iter().zip(w).map(|(a, b)| a * b).sum();
                let mut q = 0.0;
                for a in 0..m {
                    let row = &e.cov[a * m..(a + 1) * m];
                    let inner: f64 = row.iter().zip(w).map(|(c, wb)| c * wb).sum();
                    q += w[a] * inner;
                }
                let se = if q > 0.0 { (q / e.n as f64).sqrt() } else { 0.0 };
                MetricSummary::from_mean_se(zbar, se, e.n - 1, e.tau)
            })
            .collect()
    }

    pub fn evaluate(&self, w: &WeightVector) -> Result<ObjectivePoint, ProxyError> {
        if w.len() != self.m {
            return Err(ProxyError::DimensionMismatch {
                got: w.len(),
                want: self.m,
            });
        }
        let summaries = if self.cfg.kind.uses_mse() {
            self.summaries(w.normalized().as_slice())
        } else {
            self.summaries(w.as_slice())
        };
        objectives_from_summaries(&summaries, &self.y_means, &self.cfg)
    }

    /// Evaluates raw weights, rejecting invalid vectors.
    pub fn evaluate_raw(&self, w: &[f64]) -> Result<ObjectivePoint, ProxyError> {
        self.evaluate(&WeightVector::new(w.to_vec())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{Experiment, MetricEntry, MetricRegistry, MetricRole, Sign};
    use crate::stats::{sensitivity_report, SensitivityConfig};
    use crate::testutil::random_panel;
    use proptest::prelude::*;


    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(normalize(&[0.0, 3.0, 1.0]).unwrap().as_slice(), &[0.0, 0.75, 0.25]);
        assert_eq!(normalize(&[0.0, 0.0]), Err(ProxyError::AllZeroWeights));
        assert!(matches!(normalize(&[1.0, -1.0]), Err(ProxyError::InvalidWeight { index: 1, .. })));
    }

    #[test]
    fn one_hot_series_is_the_metric() {
        let panel = random_panel(1, 4, 5, 3);
        let z = proxy_series(&panel, &WeightVector::one_hot(3, 2)).unwrap();
        for j in 0..4 {
            assert_eq!(z[j], panel.metric_column(j, 2));
        }
        assert!(matches!(
            proxy_series(&panel, &WeightVector::one_hot(2, 0)),
            Err(ProxyError::DimensionMismatch { got: 2, want: 3 })
        ));
    }

    #[test]
    fn equal_weights_average_cells() {
        let registry = MetricRegistry::new(vec![
            MetricEntry::new("a", MetricRole::Auxiliary, Sign::Positive),
            MetricEntry::new("b", MetricRole::Auxiliary, Sign::Positive),
            MetricEntry::new("y", MetricRole::NorthStarLong, Sign::Positive),
        ])
        .unwrap();
        let e = Experiment::new("e", vec!["0".into()], vec![2.0, 4.0], vec![0.0]);
        let panel = ExperimentPanel::new(registry, vec![e]).unwrap();
        let z = proxy_series(&panel, &WeightVector::new(vec![0.5, 0.5]).unwrap()).unwrap();
        assert_eq!(z[0][0], 3.0);
    }

    #[test]
    fn one_hot_objectives_match_sensitivity_report() {
        let panel = random_panel(7, 30, 20, 3);
        let report = sensitivity_report(&panel, &SensitivityConfig::default()).unwrap();
        let cfg = ObjectiveConfig::default();
        let fast = ProxyEvaluator::new(&panel, cfg).unwrap();
        for (k, row) in report.iter().enumerate() {
            let w = WeightVector::one_hot(3, k);
            let p = evaluate_objectives(&panel, &w, &cfg).unwrap();
            assert_eq!(p.sensitivity, row.binary_sensitivity);
            assert!((p.directionality - row.correlation).abs() < 1e-12);
            let q = fast.evaluate(&w).unwrap();
            assert_eq!(q.sensitivity, p.sensitivity);
            assert!((q.directionality - p.directionality).abs() < 1e-12);
        }
    }

    #[test]
    fn self_correlation_is_one() {
        let base = random_panel(3, 10, 6, 2);
        let registry = base.registry().clone();
        let experiments = base
            .experiments()
            .iter()
            .map(|e| {
                let y = (0..e.num_buckets()).map(|i| e.row(i, 2)[1]).collect();
                Experiment::new(e.id.clone(), e.bucket_ids.clone(), e.x().to_vec(), y)
            })
            .collect();
        let panel = ExperimentPanel::new(registry, experiments).unwrap();
        let p = evaluate_objectives(&panel, &WeightVector::one_hot(2, 1), &ObjectiveConfig::default()).unwrap();
        assert!((p.directionality - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_objective_uses_normalized_weights() {
        let panel = random_panel(11, 12, 8, 3);
        let cfg = ObjectiveConfig {
            kind: ObjectiveKind::AS_NEGMSE,
            ..Default::default()
        };
        let w = WeightVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let a = evaluate_objectives(&panel, &w, &cfg).unwrap();
        let b = evaluate_objectives(&panel, &w.scaled(10.0).unwrap(), &cfg).unwrap();
        assert!((a.directionality - b.directionality).abs() < 1e-10);
        assert!(a.directionality <= 0.0);
    }

    #[test]
    fn too_few_experiments() {
        let panel = random_panel(2, 2, 5, 2);
        assert_eq!(
            evaluate_objectives(&panel, &WeightVector::one_hot(2, 0), &ObjectiveConfig::default()),
            Err(ProxyError::TooFewExperiments(2))
        );
    }

    #[test]
    fn objective_kind_parsing() {
        assert_eq!("bs-corr".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::BS_CORR);
        assert_eq!("as-negmse".parse::<ObjectiveKind>().unwrap(), ObjectiveKind::AS_NEGMSE);
        assert_eq!(ObjectiveKind::AS_NEGMSE.to_string(), "as-negmse");
        assert!("xx-corr".parse::<ObjectiveKind>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scale_invariance_and_fast_path(seed in 0u64..1000, c in 0.05f64..50.0, raw in prop::collection::vec(0.01f64..1.0, 4)) {
            let panel = random_panel(seed, 8, 6, 4);
            let cfg = ObjectiveConfig::default();
            let w = WeightVector::new(raw).unwrap();
            let a = evaluate_objectives(&panel, &w, &cfg).unwrap();
            let b = evaluate_objectives(&panel, &w.scaled(c).unwrap(), &cfg).unwrap();
            prop_assert!((a.sensitivity - b.sensitivity).abs() <= 1e-10);
            prop_assert!((a.directionality - b.directionality).abs() <= 1e-10);
            let fast = ProxyEvaluator::new(&panel, cfg).unwrap().evaluate(&w).unwrap();
            prop_assert!((fast.sensitivity - a.sensitivity).abs() <= 1e-10);
            prop_assert!((fast.directionality - a.directionality).abs() <= 1e-10);
        }

        #[test]
        fn proxy_means_are_linear(seed in 0u64..1000, raw in prop::collection::vec(0.0f64..3.0, 3)) {
            prop_assume!(raw.iter().any(|w| *w > 0.0));
            let panel = random_panel(seed, 5, 7, 3);
            let w = WeightVector::new(raw.clone()).unwrap();
            let z = proxy_series(&panel, &w).unwrap();
            for (j, zj) in z.iter().enumerate() {
                let direct = stats::mean(zj);
                let via_metrics: f64 = (0..3).map(|k| raw[k] * stats::mean(&panel.metric_column(j, k))).sum();
                prop_assert!((direct - via_metrics).abs() <= 1e-12 * (1.0 + direct.abs()));
            }
            let doubled = proxy_series(&panel, &w.scaled(2.0).unwrap()).unwrap();
            for (a, b) in z.iter().flatten().zip(doubled.iter().flatten()) {
                prop_assert_eq!(2.0 * a, *b);
            }
        }
    }
}
