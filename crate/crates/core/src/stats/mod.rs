//! Per-experiment summaries (mean, jackknife standard error, t-test) and the
//! sensitivity and directionality measures computed from them.

pub mod special;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::ExperimentPanel;

pub use special::{student_t_cdf, student_t_critical, student_t_two_sided_p};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

/// Upper-tail clamp for |t| values: anything above Q3 + multiplier·IQR is set
/// to that cap. Quartiles use linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqrClamp {
    pub multiplier: f64,
}

impl Default for IqrClamp {
    fn default() -> Self {
        Self { multiplier: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub alpha: f64,
    pub clamp: Option<IqrClamp>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            clamp: None,
        }
    }
}

impl SensitivityConfig {
    pub fn validate(&self) -> Result<(), StatsError> {
        if self.alpha > 0.0 && self.alpha < 1.0 {
            Ok(())
        } else {
            Err(StatsError::InvalidAlpha(self.alpha))
        }
    }
}

/// Two-sided test summary of one metric in one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub se: f64,
    /// `None` when the standard error is zero (degenerate variance).
    pub t: Option<f64>,
    pub df: usize,
    pub significant: bool,
    pub direction: i8,
}

impl MetricSummary {
    pub fn is_degenerate(&self) -> bool {
        self.t.is_none()
    }

    /// Builds a summary from a mean and standard error against threshold `tau`.
    pub fn from_mean_se(mean: f64, se: f64, df: usize, tau: f64) -> Self {
        let t = (se > 0.0).then(|| mean / se);
        let significant = t.is_some_and(|t| t.abs() > tau);
        let direction = if significant {
            if mean > 0.0 {
                1
            } else if mean < 0.0 {
                -1
            } else {
                0
            }
        } else {
            0
        };
        Self {
            mean,
            se,
            t,
            df,
            significant,
            direction,
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Leave-one-out jackknife standard error of the mean.
///
/// Returns exactly 0 when every value is identical.
pub fn jackknife_se(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 2, "jackknife needs at least two values");
    if values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    // Leave-one-out means shift with the data, so work on centred values to
    // avoid cancellation when the mean dwarfs the spread.
    let center = mean(values);
    let centred: Vec<f64> = values.iter().map(|v| v - center).collect();
    let total: f64 = centred.iter().sum();
    let nf = n as f64;
    let loo: Vec<f64> = centred.iter().map(|&v| (total - v) / (nf - 1.0)).collect();
    let loo_mean = mean(&loo);
    let ss: f64 = loo.iter().map(|&m| (m - loo_mean).powi(2)).sum();
    ((nf - 1.0) / nf * ss).sqrt()
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

/// Memoized two-sided critical values by degrees of freedom.
#[derive(Debug, Clone)]
pub struct Thresholds {
    alpha: f64,
    by_df: BTreeMap<usize, f64>,
}

impl Thresholds {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            by_df: BTreeMap::new(),
        }
    }

    pub fn for_panel(alpha: f64, panel: &ExperimentPanel) -> Self {
        let mut th = Self::new(alpha);
        for e in panel.experiments() {
            th.tau(e.num_buckets().saturating_sub(1).max(1));
        }
        th
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&mut self, df: usize) -> f64 {
        let alpha = self.alpha;
        *self
            .by_df
            .entry(df)
            .or_insert_with(|| student_t_critical(alpha, df as f64))
    }

    /// Lookup without inserting; falls back to computing.
    pub fn get(&self, df: usize) -> f64 {
        self.by_df
            .get(&df)
            .copied()
            .unwrap_or_else(|| student_t_critical(self.alpha, df as f64))
    }
}

/// Mean, jackknife se and two-sided test of one bucket series.
pub fn summarize_values(values: &[f64], thresholds: &mut Thresholds) -> MetricSummary {
    let df = values.len() - 1;
    let tau = thresholds.tau(df);
    MetricSummary::from_mean_se(mean(values), jackknife_se(values), df, tau)
}

/// Summaries for every experiment and every metric column. Columns are the
/// panel's auxiliary metrics followed by the long-term north star.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummaryTable {
    pub alpha: f64,
    pub columns: Vec<String>,
    pub experiment_ids: Vec<String>,
    /// `rows[j][c]`: experiment j, column c.
    pub rows: Vec<Vec<MetricSummary>>,
}

impl MetricSummaryTable {
    pub fn column(&self, c: usize) -> Vec<MetricSummary> {
        self.rows.iter().map(|r| r[c]).collect()
    }

    pub fn north_star_column(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn means(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c].mean).collect()
    }
}

pub fn summarize(panel: &ExperimentPanel, cfg: &SensitivityConfig) -> Result<MetricSummaryTable, StatsError> {
    cfg.validate()?;
    let mut th = Thresholds::new(cfg.alpha);
    let m = panel.num_metrics();
    let mut rows = Vec::with_capacity(panel.num_experiments());
    for (j, e) in panel.experiments().iter().enumerate() {
        let mut row = Vec::with_capacity(m + 1);
        for k in 0..m {
            row.push(summarize_values(&panel.metric_column(j, k), &mut th));
        }
        row.push(summarize_values(e.y(), &mut th));
        rows.push(row);
    }
    let mut columns = panel.metric_ids().to_vec();
    columns.push(panel.registry().north_star_long().metric_id.clone());
    Ok(MetricSummaryTable {
        alpha: cfg.alpha,
        columns,
        experiment_ids: panel.experiments().iter().map(|e| e.id.clone()).collect(),
        rows,
    })
}

/// Fraction of experiments whose |t| exceeds `tau`.
pub fn binary_sensitivity(t_stats: &[f64], tau: f64) -> Result<f64, StatsError> {
    if t_stats.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if !(tau > 0.0) {
        return Err(StatsError::InvalidThreshold(tau));
    }
    let hits = t_stats.iter().filter(|t| t.abs() > tau).count();
    Ok(hits as f64 / t_stats.len() as f64)
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean |t|, optionally with the IQR upper clamp applied to the |t| sample.
pub fn average_sensitivity(t_stats: &[f64], clamp: Option<IqrClamp>) -> Result<f64, StatsError> {
    if t_stats.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut abs: Vec<f64> = t_stats.iter().map(|t| t.abs()).collect();
    if let Some(c) = clamp {
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let q3 = quantile_sorted(&sorted, 0.75);
        let cap = q3 + c.multiplier * (q3 - q1);
        for v in &mut abs {
            if *v > cap {
                *v = cap;
            }
        }
    }
    Ok(mean(&abs))
}

fn check_lengths(x: &[f64], y: &[f64], need: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < need {
        return Err(StatsError::TooShort { need, got: x.len() });
    }
    Ok(())
}

fn zscores(v: &[f64]) -> Result<Vec<f64>, StatsError> {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    if var <= 0.0 {
        return Err(StatsError::ZeroVariance("standardized series"));
    }
    let sd = var.sqrt();
    Ok(v.iter().map(|x| (x - m) / sd).collect())
}

/// Mean squared error between per-experiment metric means and north-star
/// means, optionally after z-scoring both series (population sd).
pub fn directionality_mse(x_means: &[f64], y_means: &[f64], standardize: bool) -> Result<f64, StatsError> {
    check_lengths(x_means, y_means, 2)?;
    let (x, y) = if standardize {
        (zscores(x_means)?, zscores(y_means)?)
    } else {
        (x_means.to_vec(), y_means.to_vec())
    };
    Ok(x.iter().zip(&y).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return Err(StatsError::ZeroVariance("metric series"));
    }
    if syy <= 0.0 {
        return Err(StatsError::ZeroVariance("north-star series"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties share their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut k = i;
        while k + 1 < idx.len() && v[idx[k + 1]] == v[idx[i]] {
            k += 1;
        }
        let r = (i + k) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=k] {
            out[p] = r;
        }
        i = k + 1;
    }
    out
}

pub fn directionality_corr(x_means: &[f64], y_means: &[f64], method: CorrelationMethod) -> Result<f64, StatsError> {
    check_lengths(x_means, y_means, 3)?;
    match method {
        CorrelationMethod::Pearson => pearson(x_means, y_means),
        CorrelationMethod::Spearman => pearson(&ranks(x_means), &ranks(y_means)),
    }
}

/// Binary sensitivity of a summary column; degenerate experiments are left
/// out of the denominator.
pub fn column_binary_sensitivity(col: &[MetricSummary]) -> Result<f64, StatsError> {
    let usable: Vec<&MetricSummary> = col.iter().filter(|s| !s.is_degenerate()).collect();
    if usable.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    Ok(usable.iter().filter(|s| s.significant).count() as f64 / usable.len() as f64)
}

pub fn column_average_sensitivity(col: &[MetricSummary], clamp: Option<IqrClamp>) -> Result<f64, StatsError> {
    let t: Vec<f64> = col.iter().filter_map(|s| s.t).collect();
    average_sensitivity(&t, clamp)
}

/// One row of the per-metric sensitivity report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub metric_id: String,
    pub binary_sensitivity: f64,
    pub average_sensitivity: f64,
    pub correlation: f64,
    pub mse: f64,
}

/// Single-metric sensitivity and directionality for every auxiliary metric.
pub fn sensitivity_report(panel: &ExperimentPanel, cfg: &SensitivityConfig) -> Result<Vec<SensitivityRow>, StatsError> {
    let table = summarize(panel, cfg)?;
    let ns = table.north_star_column();
    let y = table.means(ns);
    panel
        .metric_ids()
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let col = table.column(k);
            let x = table.means(k);
            Ok(SensitivityRow {
                metric_id: id.clone(),
                binary_sensitivity: column_binary_sensitivity(&col)?,
                average_sensitivity: column_average_sensitivity(&col, cfg.clamp)?,
                correlation: directionality_corr(&x, &y, CorrelationMethod::Pearson)?,
                mse: directionality_mse(&x, &y, false)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Leave-one-out by explicit recomputation, independent of the O(N) path.
    fn jackknife_brute(v: &[f64]) -> f64 {
        let n = v.len();
        let loo: Vec<f64> = (0..n)
            .map(|i| {
                let rest: Vec<f64> = v.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, x)| *x).collect();
                mean(&rest)
            })
            .collect();
        let m = mean(&loo);
        ((n as f64 - 1.0) / n as f64 * loo.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt()
    }

    #[test]
    fn summary_of_one_two_three() {
        let mut th = Thresholds::new(0.05);
        let s = summarize_values(&[1.0, 2.0, 3.0], &mut th);
        assert_eq!(s.mean, 2.0);
        assert!(close(s.se, 1.0 / 3f64.sqrt(), 1e-15));
        assert!(close(jackknife_brute(&[1.0, 2.0, 3.0]), s.se, 1e-15));
        assert!(close(s.t.unwrap(), 3f64.sqrt() * 2.0, 1e-12));
        assert_eq!(s.df, 2);
        // τ(0.05, 2) ≈ 4.303 > 3.464
        assert!(!s.significant);
        assert_eq!(s.direction, 0);
    }

    #[test]
    fn constant_buckets_are_degenerate() {
        let mut th = Thresholds::new(0.05);
        let s = summarize_values(&[5.0; 10], &mut th);
        assert_eq!(s.se, 0.0);
        assert!(s.is_degenerate());
        assert!(!s.significant);
        let col = [s, MetricSummary::from_mean_se(3.0, 1.0, 9, 2.262)];
        assert_eq!(column_binary_sensitivity(&col).unwrap(), 1.0);
    }

    #[test]
    fn binary_sensitivity_examples() {
        let tau = 1.9842;
        assert!(close(binary_sensitivity(&[2.5, 1.0, -3.0], tau).unwrap(), 2.0 / 3.0, 1e-15));
        assert_eq!(binary_sensitivity(&[0.0, 0.0, 0.0], tau).unwrap(), 0.0);
        assert_eq!(binary_sensitivity(&[10.0, -10.0, 12.0], tau).unwrap(), 1.0);
        assert_eq!(binary_sensitivity(&[], tau), Err(StatsError::EmptyInput));
        assert!(binary_sensitivity(&[1.0], 0.0).is_err());
    }

    #[test]
    fn average_sensitivity_examples() {
        assert!(close(average_sensitivity(&[2.0, -2.0, 4.0], None).unwrap(), 8.0 / 3.0, 1e-15));
        // type-7 quartiles of {1,1,1,100}: Q1 = 1, Q3 = 25.75, cap = 62.875
        let clamped = average_sensitivity(&[1.0, 1.0, 1.0, 100.0], Some(IqrClamp::default())).unwrap();
        assert!(close(clamped, (3.0 + 62.875) / 4.0, 1e-12));
        assert!(clamped < 25.75);
        assert_eq!(average_sensitivity(&[], None), Err(StatsError::EmptyInput));
    }

    #[test]
    fn mse_examples() {
        let v = [1.0, -0.5, 0.2];
        assert_eq!(directionality_mse(&v, &v, false).unwrap(), 0.0);
        assert_eq!(directionality_mse(&[0.0, 0.0], &[1.0, -1.0], false).unwrap(), 1.0);
        assert!(close(directionality_mse(&[2.0, 4.0], &[1.0, 2.0], true).unwrap(), 0.0, 1e-15));
        assert!(matches!(directionality_mse(&[1.0], &[1.0, 2.0], false), Err(StatsError::LengthMismatch(1, 2))));
    }

    #[test]
    fn correlation_examples() {
        let x = [0.3, -1.2, 2.5, 0.0, 4.1];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!(close(directionality_corr(&x, &y, CorrelationMethod::Pearson).unwrap(), 1.0, 1e-14));
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(close(directionality_corr(&x, &neg, CorrelationMethod::Pearson).unwrap(), -1.0, 1e-14));
        let s = directionality_corr(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0], CorrelationMethod::Spearman).unwrap();
        assert!(close(s, 0.5, 1e-15));
        assert!(matches!(
            directionality_corr(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], CorrelationMethod::Pearson),
            Err(StatsError::ZeroVariance(_))
        ));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn thresholds_cache() {
        let mut th = Thresholds::new(0.05);
        assert!(close(th.tau(99), 1.984_216_95, 1e-8));
        assert_eq!(th.get(99), th.tau(99));
    }

    proptest! {
        #[test]
        fn jackknife_equals_closed_form(v in prop::collection::vec(-50.0f64..50.0, 3..120)) {
            prop_assume!(v.iter().any(|x| *x != v[0]));
            let jk = jackknife_se(&v);
            let closed = sample_sd(&v) / (v.len() as f64).sqrt();
            prop_assert!(((jk - closed) / closed).abs() < 1e-12);
        }

        #[test]
        fn sensitivities_ignore_sign(t in prop::collection::vec(-8.0f64..8.0, 1..60), flips in prop::collection::vec(any::<bool>(), 60)) {
            let flipped: Vec<f64> = t.iter().zip(&flips).map(|(v, f)| if *f { -v } else { *v }).collect();
            prop_assert_eq!(binary_sensitivity(&t, 1.98).unwrap(), binary_sensitivity(&flipped, 1.98).unwrap());
            prop_assert_eq!(
                average_sensitivity(&t, Some(IqrClamp::default())).unwrap(),
                average_sensitivity(&flipped, Some(IqrClamp::default())).unwrap()
            );
        }

        #[test]
        fn pearson_affine_invariance(
            x in prop::collection::vec(-10.0f64..10.0, 4..40),
            a in 0.1f64..20.0, b in -5.0f64..5.0,
        ) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() + i as f64 * 0.1).collect();
            let Ok(r) = pearson(&x, &y) else { return Ok(()); };
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert!((pearson(&xt, &y).unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson(&neg, &y).unwrap() + r).abs() < 1e-12);
        }

        #[test]
        fn adding_a_rejection_keeps_scaled_bs(t in prop::collection::vec(-5.0f64..5.0, 1..50), extra in 2.0f64..9.0) {
            let tau = 1.9842;
            let j = t.len() as f64;
            let before = binary_sensitivity(&t, tau).unwrap();
            let mut more = t.clone();
            more.push(extra);
            let after = binary_sensitivity(&more, tau).unwrap();
            prop_assert!(after >= before * j / (j + 1.0) - 1e-15);
        }
    }
}
