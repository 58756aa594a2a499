//! Agreement between a proxy and the north star, experiment by experiment.
//!
//! Each experiment lands in a 3×3 table of (proxy direction, north-star
//! direction), where a direction is 0 unless the effect is significant. A
//! detection is a significant proxy agreeing with a significant north star; a
//! mistake is the two significant in opposite directions. The proxy score is
//! `(detections − mistakes) / #experiments with a significant north star`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::ExperimentPanel;
use crate::proxy::{proxy_series, ProxyError, WeightVector};
use crate::stats::{self, MetricSummary, StatsError, Thresholds};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("no experiments to score")]
    EmptyLabels,
    #[error("{labels} labels but {means} north-star means")]
    LengthMismatch { labels: usize, means: usize },
    #[error("metric `{0}` is not in the panel")]
    UnknownMetric(String),
    #[error(transparent)]
    Proxy(#[from] ProxyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyLabel {
    pub proxy_direction: i8,
    pub northstar_direction: i8,
}

impl ContingencyLabel {
    pub fn new(proxy_direction: i8, northstar_direction: i8) -> Self {
        assert!((-1..=1).contains(&proxy_direction) && (-1..=1).contains(&northstar_direction));
        Self {
            proxy_direction,
            northstar_direction,
        }
    }

    pub fn is_detection(&self) -> bool {
        self.proxy_direction != 0 && self.proxy_direction == self.northstar_direction
    }

    pub fn is_mistake(&self) -> bool {
        self.proxy_direction != 0 && self.northstar_direction == -self.proxy_direction
    }
}

/// Labels one experiment from its proxy and north-star summaries.
pub fn classify(proxy: &MetricSummary, north_star: &MetricSummary) -> ContingencyLabel {
    ContingencyLabel::new(proxy.direction, north_star.direction)
}

/// Counts indexed `[proxy + 1][north star + 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable(pub [[u64; 3]; 3]);

impl ContingencyTable {
    pub fn from_labels(labels: &[ContingencyLabel]) -> Self {
        let mut t = [[0u64; 3]; 3];
        for l in labels {
            t[(l.proxy_direction + 1) as usize][(l.northstar_direction + 1) as usize] += 1;
        }
        Self(t)
    }

    pub fn get(&self, proxy_direction: i8, northstar_direction: i8) -> u64 {
        self.0[(proxy_direction + 1) as usize][(northstar_direction + 1) as usize]
    }

    /// Long-format CSV: `proxy_direction,northstar_direction,count`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["proxy_direction", "northstar_direction", "count"])?;
        for p in -1i8..=1 {
            for n in -1i8..=1 {
                w.write_record([p.to_string(), n.to_string(), self.get(p, n).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub experiments: u64,
    pub detections: u64,
    pub mistakes: u64,
    pub ns_significant: u64,
    /// `None` when no experiment has a significant north star.
    pub proxy_score: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    /// Fraction of experiments where the proxy is significant.
    pub binary_sensitivity_proxy: f64,
    pub table: ContingencyTable,
}

pub fn score(labels: &[ContingencyLabel]) -> Result<ScoreReport, ScoringError> {
    if labels.is_empty() {
        return Err(ScoringError::EmptyLabels);
    }
    let detections = labels.iter().filter(|l| l.is_detection()).count() as u64;
    let mistakes = labels.iter().filter(|l| l.is_mistake()).count() as u64;
    let ns_significant = labels.iter().filter(|l| l.northstar_direction != 0).count() as u64;
    let proxy_significant = labels.iter().filter(|l| l.proxy_direction != 0).count();
    let ratio = |num: f64, den: u64| (den > 0).then(|| num / den as f64);
    Ok(ScoreReport {
        experiments: labels.len() as u64,
        detections,
        mistakes,
        ns_significant,
        proxy_score: ratio(detections as f64 - mistakes as f64, ns_significant),
        recall: ratio(detections as f64, ns_significant),
        precision: ratio(detections as f64, detections + mistakes),
        binary_sensitivity_proxy: proxy_significant as f64 / labels.len() as f64,
        table: ContingencyTable::from_labels(labels),
    })
}

/// Mean north-star effect per proxy direction, over experiments whose north
/// star is not significant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeutralBreakdown {
    pub negative: Option<f64>,
    pub neutral: Option<f64>,
    pub positive: Option<f64>,
    pub counts: [u64; 3],
}

pub fn neutral_ns_breakdown(labels: &[ContingencyLabel], ns_means: &[f64]) -> Result<NeutralBreakdown, ScoringError> {
    if labels.len() != ns_means.len() {
        return Err(ScoringError::LengthMismatch {
            labels: labels.len(),
            means: ns_means.len(),
        });
    }
    let mut sums = [0.0; 3];
    let mut counts = [0u64; 3];
    for (l, y) in labels.iter().zip(ns_means) {
        if l.northstar_direction == 0 {
            let g = (l.proxy_direction + 1) as usize;
            sums[g] += y;
            counts[g] += 1;
        }
    }
    let group = |g: usize| (counts[g] > 0).then(|| sums[g] / counts[g] as f64);
    Ok(NeutralBreakdown {
        negative: group(0),
        neutral: group(1),
        positive: group(2),
        counts,
    })
}

/// Per-experiment north-star summaries.
pub fn north_star_summaries(panel: &ExperimentPanel, alpha: f64) -> Vec<MetricSummary> {
    let mut th = Thresholds::new(alpha);
    panel
        .experiments()
        .iter()
        .map(|e| stats::summarize_values(e.y(), &mut th))
        .collect()
}

/// Per-experiment summaries of the proxy with weights `w`.
pub fn proxy_summaries(panel: &ExperimentPanel, w: &WeightVector, alpha: f64) -> Result<Vec<MetricSummary>, ScoringError> {
    let mut th = Thresholds::new(alpha);
    Ok(proxy_series(panel, w)?
        .iter()
        .map(|z| stats::summarize_values(z, &mut th))
        .collect())
}

pub fn labels_for(proxy: &[MetricSummary], north_star: &[MetricSummary]) -> Vec<ContingencyLabel> {
    proxy.iter().zip(north_star).map(|(p, n)| classify(p, n)).collect()
}

/// Scores the proxy with weights `w` against the panel's north star.
pub fn score_weights(panel: &ExperimentPanel, w: &WeightVector, alpha: f64) -> Result<ScoreReport, ScoringError> {
    let proxy = proxy_summaries(panel, w, alpha)?;
    score(&labels_for(&proxy, &north_star_summaries(panel, alpha)))
}

/// Scores a single metric column as the proxy.
pub fn score_metric(panel: &ExperimentPanel, metric_id: &str, alpha: f64) -> Result<ScoreReport, ScoringError> {
    let k = panel
        .metric_index(metric_id)
        .ok_or_else(|| ScoringError::UnknownMetric(metric_id.to_string()))?;
    score_weights(panel, &WeightVector::one_hot(panel.num_metrics(), k), alpha)
}
