//! Synthetic experiment panels with known true effects.
//!
//! Experiment `j` draws its true effects `θ_j ~ MVN(effect_mean, effect_cov)`,
//! then each bucket observes `θ_j + ε` with independent Gaussian noise per
//! metric. All draws for experiment `j` come from random stream `j` of the
//! seed, so generation can run in parallel.
//!
//! Presets describe the effects through a few latent factors:
//!
//! * `insensitive_ns`: the long-term north star follows a latent effect `L`
//!   (mean 0.1, sd 0.5, bucket noise 0.3). The short-term north star moves by
//!   `0.2·L` under bucket noise 1.2, so it tracks `L` well but is rarely
//!   significant. Two auxiliaries carry `L ± 0.8·P` for a shared nuisance
//!   factor `P`, so their average is `L` itself. The remaining auxiliaries
//!   form a ladder from correlation 0.45 down to 0.05 with the north star
//!   while their total effect spread grows from 1.0 to 2.5.
//! * `short_long_divergence`: the short-term north star moves against `L`
//!   (loading −0.4, mean −0.2) while the auxiliaries follow `L` with
//!   correlations from 0.85 down to 0.35.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{DataError, Experiment, ExperimentPanel, MetricEntry, MetricRegistry, MetricRole, Sign};
use crate::rng::stream_rng;

/// Id of the north-star column in simulated panels.
pub const NORTH_STAR_ID: &str = "ns_long";
/// Id of the short-term north-star column in presets.
pub const SHORT_TERM_ID: &str = "ns_short";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown preset `{0}` (insensitive_ns|short_long_divergence)")]
    UnknownPreset(String),
    #[error("effect covariance is not positive semidefinite (smallest eigenvalue {0:e})")]
    InvalidCovariance(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataErrorMessage),
}

/// Wraps data errors (which are not `Clone`) by message.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct DataErrorMessage(pub String);

impl From<DataError> for SimError {
    fn from(e: DataError) -> Self {
        SimError::Data(DataErrorMessage(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Custom,
    InsensitiveNs,
    ShortLongDivergence,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Custom => "custom",
            Scenario::InsensitiveNs => "insensitive_ns",
            Scenario::ShortLongDivergence => "short_long_divergence",
        })
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "custom" => Ok(Scenario::Custom),
            "insensitive_ns" => Ok(Scenario::InsensitiveNs),
            "short_long_divergence" => Ok(Scenario::ShortLongDivergence),
            other => Err(SimError::UnknownPreset(other.to_string())),
        }
    }
}

/// Generative configuration. Vectors of length M+1 list the auxiliary
/// metrics first and the north star last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub experiments: usize,
    pub buckets: usize,
    /// Ids of the M auxiliary columns.
    pub metric_ids: Vec<String>,
    /// Column holding the short-term north star, if any.
    pub short_term_column: Option<usize>,
    pub effect_mean: Vec<f64>,
    /// Row-major (M+1)×(M+1).
    pub effect_cov: Vec<f64>,
    pub noise_sd: Vec<f64>,
    pub scenario: Scenario,
    pub seed: u64,
}

impl SimConfig {
    /// Independent metrics: every effect has the given mean and variance and
    /// every bucket has the given noise.
    pub fn independent(experiments: usize, buckets: usize, m: usize, mean: f64, var: f64, noise: f64, seed: u64) -> Self {
        let k = m + 1;
        let mut cov = vec![0.0; k * k];
        for i in 0..k {
            cov[i * k + i] = var;
        }
        Self {
            experiments,
            buckets,
            metric_ids: aux_ids(m, 0),
            short_term_column: None,
            effect_mean: vec![mean; k],
            effect_cov: cov,
            noise_sd: vec![noise; k],
            scenario: Scenario::Custom,
            seed,
        }
    }

    pub fn num_metrics(&self) -> usize {
        self.metric_ids.len()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.experiments < 3 {
            return bad(format!("need at least 3 experiments, got {}", self.experiments));
        }
        if self.buckets < 3 {
            return bad(format!("need at least 3 buckets, got {}", self.buckets));
        }
        let m = self.num_metrics();
        if m < 1 {
            return bad("need at least one auxiliary metric".into());
        }
        let k = m + 1;
        if self.effect_mean.len() != k || self.noise_sd.len() != k || self.effect_cov.len() != k * k {
            return bad(format!("effect mean, noise and covariance must cover {k} columns"));
        }
        if self.effect_mean.iter().chain(&self.effect_cov).any(|v| !v.is_finite()) {
            return bad("effects must be finite".into());
        }
        if self.noise_sd.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise sds must be finite and nonnegative".into());
        }
        if let Some(c) = self.short_term_column {
            if c >= m {
                return bad(format!("short-term column {c} out of range"));
            }
        }
        let scale = self.effect_cov.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..k {
            for j in 0..i {
                if (self.effect_cov[i * k + j] - self.effect_cov[j * k + i]).abs() > 1e-12 * scale {
                    return bad("effect covariance must be symmetric".into());
                }
            }
        }
        Ok(())
    }

    fn registry(&self) -> Result<MetricRegistry, SimError> {
        let mut entries: Vec<MetricEntry> = self
            .metric_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let role = if Some(i) == self.short_term_column {
                    MetricRole::NorthStarShort
                } else {
                    MetricRole::Auxiliary
                };
                MetricEntry::new(id.clone(), role, Sign::Positive)
            })
            .collect();
        entries.push(MetricEntry::new(NORTH_STAR_ID, MetricRole::NorthStarLong, Sign::Positive));
        Ok(MetricRegistry::new(entries)?)
    }
}

fn aux_ids(count: usize, offset: usize) -> Vec<String> {
    (1..=count).map(|k| format!("aux_{:02}", k + offset)).collect()
}

/// True effects drawn per experiment, columns as in the panel plus the
/// north star last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub columns: Vec<String>,
    pub experiment_ids: Vec<String>,
    pub true_effects: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["experiment_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.experiment_ids.iter().zip(&self.true_effects) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Lower-triangular `F` with `F·Fᵀ` equal to `cov` after clipping negative
/// eigenvalues to zero.
pub fn psd_factor(cov: &[f64], k: usize) -> Result<Vec<f64>, SimError> {
    let a = DMatrix::from_row_slice(k, k, cov);
    let scale = cov.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let eig = SymmetricEigen::new(a);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * scale.max(1.0) {
        return Err(SimError::InvalidCovariance(min));
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let fixed = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    // Cholesky that zeroes pivots lost to rounding
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut f = vec![0.0; k * k];
    for j in 0..k {
        let d = fixed[(j, j)] - (0..j).map(|p| f[j * k + p] * f[j * k + p]).sum::<f64>();
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        f[j * k + j] = pivot;
        for i in j + 1..k {
            let s = fixed[(i, j)] - (0..j).map(|p| f[i * k + p] * f[j * k + p]).sum::<f64>();
            f[i * k + j] = s / pivot;
        }
    }
    Ok(f)
}

/// Draws a panel and its true effects.
pub fn simulate_panel(cfg: &SimConfig) -> Result<(ExperimentPanel, GroundTruth), SimError> {
    cfg.validate()?;
    let m = cfg.num_metrics();
    let k = m + 1;
    let factor = psd_factor(&cfg.effect_cov, k)?;
    let n = cfg.buckets;
    let bucket_ids: Vec<String> = (0..n).map(|i| format!("b{i:03}")).collect();
    let width = cfg.experiments.to_string().len().max(4);

    let drawn: Vec<(Experiment, Vec<f64>)> = (0..cfg.experiments)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(cfg.seed, j as u64);
            let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let theta: Vec<f64> = (0..k)
                .map(|r| cfg.effect_mean[r] + (0..=r).map(|c| factor[r * k + c] * z[c]).sum::<f64>())
                .collect();
            let mut x = Vec::with_capacity(n * m);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                for c in 0..m {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    x.push(theta[c] + cfg.noise_sd[c] * e);
                }
                let e: f64 = StandardNormal.sample(&mut rng);
                y.push(theta[m] + cfg.noise_sd[m] * e);
            }
            let id = format!("exp_{:0width$}", j + 1);
            (Experiment::new(id, bucket_ids.clone(), x, y), theta)
        })
        .collect();

    let (experiments, true_effects): (Vec<_>, Vec<_>) = drawn.into_iter().unzip();
    let experiment_ids = experiments.iter().map(|e: &Experiment| e.id.clone()).collect();
    let panel = ExperimentPanel::new(cfg.registry()?, experiments)?;
    let mut columns = cfg.metric_ids.clone();
    columns.push(NORTH_STAR_ID.to_string());
    Ok((
        panel,
        GroundTruth {
            columns,
            experiment_ids,
            true_effects,
        },
    ))
}

/// Effects as loadings on independent standard normal factors:
/// `θ = mean + loadings·ξ`, so the covariance is `loadings·loadingsᵀ`.
struct FactorModel {
    columns: usize,
    factors: usize,
    mean: Vec<f64>,
    loadings: Vec<f64>,
}

impl FactorModel {
    fn new(columns: usize, factors: usize) -> Self {
        Self {
            columns,
            factors,
            mean: vec![0.0; columns],
            loadings: vec![0.0; columns * factors],
        }
    }

    fn set(&mut self, column: usize, factor: usize, loading: f64) {
        self.loadings[column * self.factors + factor] = loading;
    }

    fn covariance(&self) -> Vec<f64> {
        let (k, f) = (self.columns, self.factors);
        let mut cov = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                cov[a * k + b] = (0..f).map(|p| self.loadings[a * f + p] * self.loadings[b * f + p]).sum();
            }
        }
        cov
    }
}

/// Linear interpolation from `from` to `to` at step `i` of `count`.
fn ladder(from: f64, to: f64, i: usize, count: usize) -> f64 {
    if count <= 1 {
        from
    } else {
        from + (to - from) * i as f64 / (count - 1) as f64
    }
}

// Latent north-star effect L = LATENT_MEAN + LATENT_SD·ξ₀.
const LATENT_MEAN: f64 = 0.1;
const LATENT_SD: f64 = 0.5;
const NS_NOISE: f64 = 0.3;

/// Loadings on ξ₀ and on a private factor giving total effect sd `spread`
/// and correlation `corr` between the metric's and the north star's
/// per-experiment means.
fn ladder_loadings(corr: f64, spread: f64, noise: f64, buckets: usize) -> (f64, f64) {
    let n = buckets as f64;
    let ns_var = LATENT_SD * LATENT_SD + NS_NOISE * NS_NOISE / n;
    let x_var = spread * spread + noise * noise / n;
    let on_latent = (corr * (x_var * ns_var).sqrt() / LATENT_SD).min(spread);
    (on_latent, (spread * spread - on_latent * on_latent).max(0.0).sqrt())
}

/// Preset configuration at the given scale (M counts the short-term north
/// star as one of the auxiliary columns).
pub fn preset(name: &str, experiments: usize, buckets: usize, m: usize, seed: u64) -> Result<SimConfig, SimError> {
    let scenario: Scenario = name.parse()?;
    if m < 1 {
        return Err(SimError::InvalidConfig("presets need M ≥ 1".into()));
    }
    let k = m + 1;
    // factors: 0 latent, 1 shared nuisance, 2.. one private per column
    let mut model = FactorModel::new(k, 2 + k);
    let mut noise = vec![1.0; k];
    let mut ids = vec![SHORT_TERM_ID.to_string()];

    model.mean[m] = LATENT_MEAN;
    model.set(m, 0, LATENT_SD);
    noise[m] = NS_NOISE;

    match scenario {
        Scenario::Custom => return Err(SimError::UnknownPreset(name.to_string())),
        Scenario::InsensitiveNs => {
            model.mean[0] = 0.2 * LATENT_MEAN;
            model.set(0, 0, 0.2 * LATENT_SD);
            noise[0] = 1.2;
            let mut next = 1;
            if m >= 3 {
                for (c, sign) in [(1, 1.0), (2, -1.0)] {
                    model.mean[c] = LATENT_MEAN;
                    model.set(c, 0, LATENT_SD);
                    model.set(c, 1, sign * 0.8);
                }
                next = 3;
            }
            let rungs = m - next;
            for r in 0..rungs {
                let c = next + r;
                let corr = ladder(0.45, 0.05, r, rungs);
                let spread = ladder(1.0, 2.5, r, rungs);
                let (on_latent, private) = ladder_loadings(corr, spread, 1.0, buckets);
                model.mean[c] = LATENT_MEAN * on_latent / LATENT_SD;
                model.set(c, 0, on_latent);
                model.set(c, 2 + c, private);
            }
        }
        Scenario::ShortLongDivergence => {
            model.mean[0] = -0.2;
            model.set(0, 0, -0.4);
            model.set(0, 2, 0.3);
            let rungs = m - 1;
            for r in 0..rungs {
                let c = 1 + r;
                let corr = ladder(0.85, 0.35, r, rungs);
                let (on_latent, private) = ladder_loadings(corr, 0.8, 1.0, buckets);
                model.mean[c] = LATENT_MEAN * on_latent / LATENT_SD;
                model.set(c, 0, on_latent);
                model.set(c, 2 + c, private);
            }
        }
    }
    ids.extend(aux_ids(m - 1, 0));

    Ok(SimConfig {
        experiments,
        buckets,
        metric_ids: ids,
        short_term_column: Some(0),
        effect_cov: model.covariance(),
        effect_mean: model.mean,
        noise_sd: noise,
        scenario,
        seed,
    })
}
