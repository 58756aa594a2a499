//! Experiment panels: per-bucket percent deltas for auxiliary metrics and the
//! long-term north star, plus the metric registry that carries roles and sign
//! conventions.
//!
//! Two CSV layouts are accepted for the data file:
//!
//! * arm-level: `experiment_id,bucket_id,metric_id,treatment_value,control_value`
//! * delta-level: `experiment_id,bucket_id,metric_id,pct_delta`
//!
//! The registry is `metric_id,role,sign,display_name`. Signs are applied once,
//! at load time, so every stored auxiliary value reads "up is good".

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum buckets per experiment; the jackknife needs leave-one-out spread.
pub const MIN_BUCKETS: usize = 3;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("unrecognized data header in {path}: {header}")]
    Schema { path: String, header: String },
    #[error("invalid registry: {0}")]
    Registry(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("panel shape mismatch: {0}")]
    Shape(String),
    #[error("panel rejected with {} error(s); first: {}", .0.errors.len(), .0.errors.first().map(|e| e.message.as_str()).unwrap_or(""))]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricRole {
    Auxiliary,
    NorthStarShort,
    NorthStarLong,
}

impl MetricRole {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricRole::Auxiliary => "auxiliary",
            MetricRole::NorthStarShort => "north_star_short",
            MetricRole::NorthStarLong => "north_star_long",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "auxiliary" => Some(MetricRole::Auxiliary),
            "north_star_short" => Some(MetricRole::NorthStarShort),
            "north_star_long" => Some(MetricRole::NorthStarLong),
            _ => None,
        }
    }
}

/// Orientation of a metric: `Negative` metrics (abandonment, query refinement)
/// improve when they go down and are flipped at load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "1" | "+1" => Some(Sign::Positive),
            "-1" => Some(Sign::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Positive => f.write_str("+1"),
            Sign::Negative => f.write_str("-1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub metric_id: String,
    pub role: MetricRole,
    pub sign: Sign,
    pub display_name: String,
}

impl MetricEntry {
    pub fn new(metric_id: impl Into<String>, role: MetricRole, sign: Sign) -> Self {
        let metric_id = metric_id.into();
        Self {
            display_name: metric_id.clone(),
            metric_id,
            role,
            sign,
        }
    }
}

/// Metric roles and signs. Entries keep file order; auxiliary metrics
/// (including the short-term north star) are indexed in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRegistry {
    entries: Vec<MetricEntry>,
}

impl MetricRegistry {
    /// Builds a registry, enforcing unique ids, exactly one long-term north
    /// star and at least one auxiliary metric.
    pub fn new(entries: Vec<MetricEntry>) -> Result<Self, DataError> {
        let mut seen = HashMap::new();
        for e in &entries {
            if e.metric_id.trim().is_empty() {
                return Err(DataError::Registry("empty metric_id".into()));
            }
            if seen.insert(e.metric_id.as_str(), ()).is_some() {
                return Err(DataError::Registry(format!(
                    "duplicate metric_id `{}`",
                    e.metric_id
                )));
            }
        }
        let n_long = entries
            .iter()
            .filter(|e| e.role == MetricRole::NorthStarLong)
            .count();
        if n_long != 1 {
            return Err(DataError::Registry(format!(
                "expected exactly one north_star_long metric, found {n_long}"
            )));
        }
        if entries.iter().all(|e| e.role == MetricRole::NorthStarLong) {
            return Err(DataError::Registry("no auxiliary metrics".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[MetricEntry] {
        &self.entries
    }

    pub fn get(&self, metric_id: &str) -> Option<&MetricEntry> {
        self.entries.iter().find(|e| e.metric_id == metric_id)
    }

    /// Auxiliary metrics (role auxiliary or north_star_short) in registry order.
    pub fn auxiliaries(&self) -> impl Iterator<Item = &MetricEntry> {
        self.entries
            .iter()
            .filter(|e| e.role != MetricRole::NorthStarLong)
    }

    pub fn north_star_long(&self) -> &MetricEntry {
        self.entries
            .iter()
            .find(|e| e.role == MetricRole::NorthStarLong)
            .expect("registry invariant: one north_star_long")
    }

    pub fn north_star_short(&self) -> Option<&MetricEntry> {
        self.entries
            .iter()
            .find(|e| e.role == MetricRole::NorthStarShort)
    }

    pub fn read_csv<R: Read>(reader: R, path: &str) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let csv_err = |source| DataError::Csv {
            path: path.to_string(),
            source,
        };
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(c_id), Some(c_role), Some(c_sign)) = (col("metric_id"), col("role"), col("sign"))
        else {
            return Err(DataError::Registry(format!(
                "{path}: header must contain metric_id,role,sign[,display_name]"
            )));
        };
        let c_name = col("display_name");
        let mut entries = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |c: usize| rec.get(c).unwrap_or("").to_string();
            let metric_id = field(c_id);
            let role = MetricRole::parse(&field(c_role)).ok_or_else(|| {
                DataError::Registry(format!(
                    "{path} row {}: bad role `{}`",
                    line + 2,
                    field(c_role)
                ))
            })?;
            let sign = Sign::parse(&field(c_sign)).ok_or_else(|| {
                DataError::Registry(format!(
                    "{path} row {}: sign must be +1 or -1, got `{}`",
                    line + 2,
                    field(c_sign)
                ))
            })?;
            let display_name = c_name
                .map(field)
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| metric_id.clone());
            entries.push(MetricEntry {
                metric_id,
                role,
                sign,
                display_name,
            });
        }
        Self::new(entries)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric_id", "role", "sign", "display_name"])?;
        for e in &self.entries {
            w.write_record([
                e.metric_id.as_str(),
                e.role.as_str(),
                &e.sign.to_string(),
                e.display_name.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Registry restricted to `metric_ids` (in the given order) plus the
    /// long-term north star.
    pub fn select(&self, metric_ids: &[String]) -> Result<Self, DataError> {
        let mut entries = Vec::with_capacity(metric_ids.len() + 1);
        for id in metric_ids {
            let e = self
                .get(id)
                .filter(|e| e.role != MetricRole::NorthStarLong)
                .ok_or_else(|| DataError::UnknownMetric(id.clone()))?;
            entries.push(e.clone());
        }
        entries.push(self.north_star_long().clone());
        Self::new(entries)
    }
}

/// One experiment's bucket-level data. `x` is row-major `buckets × metrics`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub id: String,
    pub bucket_ids: Vec<String>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Experiment {
    /// `x` holds sign-adjusted auxiliary deltas, one row per bucket.
    pub fn new(
        id: impl Into<String>,
        bucket_ids: Vec<String>,
        x: Vec<f64>,
        y: Vec<f64>,
    ) -> Self {
        Self {
            id: id.into(),
            bucket_ids,
            x,
            y,
        }
    }

    pub fn num_buckets(&self) -> usize {
        self.bucket_ids.len()
    }

    /// Bucket row of auxiliary deltas.
    pub fn row(&self, bucket: usize, num_metrics: usize) -> &[f64] {
        &self.x[bucket * num_metrics..(bucket + 1) * num_metrics]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Immutable panel of percent deltas: X indexed (experiment, bucket, metric),
/// Y indexed (experiment, bucket).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPanel {
    registry: MetricRegistry,
    metric_ids: Vec<String>,
    experiments: Vec<Experiment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelShape {
    pub experiments: usize,
    /// Largest bucket count; equals every experiment's count for balanced panels.
    pub buckets: usize,
    pub metrics: usize,
}

impl ExperimentPanel {
    pub fn new(registry: MetricRegistry, experiments: Vec<Experiment>) -> Result<Self, DataError> {
        let metric_ids: Vec<String> = registry.auxiliaries().map(|e| e.metric_id.clone()).collect();
        let m = metric_ids.len();
        for e in &experiments {
            let n = e.num_buckets();
            if e.x.len() != n * m || e.y.len() != n {
                return Err(DataError::Shape(format!(
                    "experiment `{}`: {} buckets, {} x-values (want {}), {} y-values",
                    e.id,
                    n,
                    e.x.len(),
                    n * m,
                    e.y.len()
                )));
            }
        }
        Ok(Self {
            registry,
            metric_ids,
            experiments,
        })
    }

    pub fn registry(&self) -> &MetricRegistry {
        &self.registry
    }

    pub fn metric_ids(&self) -> &[String] {
        &self.metric_ids
    }

    pub fn metric_index(&self, metric_id: &str) -> Option<usize> {
        self.metric_ids.iter().position(|m| m == metric_id)
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn num_experiments(&self) -> usize {
        self.experiments.len()
    }

    pub fn num_metrics(&self) -> usize {
        self.metric_ids.len()
    }

    pub fn shape(&self) -> PanelShape {
        PanelShape {
            experiments: self.experiments.len(),
            buckets: self
                .experiments
                .iter()
                .map(Experiment::num_buckets)
                .max()
                .unwrap_or(0),
            metrics: self.metric_ids.len(),
        }
    }

    /// Bucket values of auxiliary metric `m` in experiment `j`.
    pub fn metric_column(&self, j: usize, m: usize) -> Vec<f64> {
        let mm = self.num_metrics();
        self.experiments[j].x.iter().skip(m).step_by(mm).copied().collect()
    }

    /// Panel restricted to the named auxiliary metrics.
    pub fn select_metrics(&self, metric_ids: &[String]) -> Result<Self, DataError> {
        let idx: Vec<usize> = metric_ids
            .iter()
            .map(|id| {
                self.metric_index(id)
                    .ok_or_else(|| DataError::UnknownMetric(id.clone()))
            })
            .collect::<Result<_, _>>()?;
        let registry = self.registry.select(metric_ids)?;
        let m = self.num_metrics();
        let experiments = self
            .experiments
            .iter()
            .map(|e| {
                let x = (0..e.num_buckets())
                    .flat_map(|i| idx.iter().map(move |&k| e.x[i * m + k]))
                    .collect();
                Experiment::new(e.id.clone(), e.bucket_ids.clone(), x, e.y.clone())
            })
            .collect();
        Self::new(registry, experiments)
    }

    /// Writes the delta-level CSV in raw (pre-sign-flip) orientation, so that
    /// reloading with the same registry reproduces this panel exactly.
    pub fn write_delta_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["experiment_id", "bucket_id", "metric_id", "pct_delta"])?;
        let m = self.num_metrics();
        let aux_signs: Vec<f64> = self.registry.auxiliaries().map(|e| e.sign.factor()).collect();
        let ns = self.registry.north_star_long();
        for e in &self.experiments {
            for (i, bucket) in e.bucket_ids.iter().enumerate() {
                for (k, id) in self.metric_ids.iter().enumerate() {
                    let v = e.x[i * m + k] * aux_signs[k];
                    w.write_record([e.id.as_str(), bucket, id, &v.to_string()])?;
                }
                let v = e.y[i] * ns.sign.factor();
                w.write_record([e.id.as_str(), bucket, &ns.metric_id, &v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidationCode {
    MissingCell,
    DuplicateCell,
    ZeroControl,
    UnknownMetric,
    MalformedRow,
    NonFiniteValue,
    BucketCountTooSmall,
    TooFewExperiments,
    UnusedMetric,
    UnbalancedBuckets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub code: ValidationCode,
    pub experiment_id: Option<String>,
    pub metric_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
    pub panel_shape: Option<PanelShape>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has(&self, code: ValidationCode) -> bool {
        self.errors.iter().any(|e| e.code == code)
    }

    fn error(&mut self, code: ValidationCode, exp: Option<&str>, metric: Option<&str>, message: String) {
        self.errors.push(ValidationIssue {
            code,
            experiment_id: exp.map(str::to_string),
            metric_id: metric.map(str::to_string),
            message,
        });
    }

    fn warning(&mut self, code: ValidationCode, exp: Option<&str>, metric: Option<&str>, message: String) {
        self.warnings.push(ValidationIssue {
            code,
            experiment_id: exp.map(str::to_string),
            metric_id: metric.map(str::to_string),
            message,
        });
    }
}

/// Checks panel invariants. Never mutates; errors are returned as data.
pub fn validate_panel(panel: &ExperimentPanel) -> ValidationReport {
    let mut report = ValidationReport {
        panel_shape: Some(panel.shape()),
        ..Default::default()
    };
    let m = panel.num_metrics();
    for e in panel.experiments() {
        let n = e.num_buckets();
        if n < MIN_BUCKETS {
            report.error(
                ValidationCode::BucketCountTooSmall,
                Some(&e.id),
                None,
                format!("experiment `{}` has {n} buckets; at least {MIN_BUCKETS} required", e.id),
            );
        }
        for (k, id) in panel.metric_ids().iter().enumerate() {
            if (0..n).any(|i| !e.x[i * m + k].is_finite()) {
                report.error(
                    ValidationCode::NonFiniteValue,
                    Some(&e.id),
                    Some(id),
                    format!("non-finite delta for `{id}` in experiment `{}`", e.id),
                );
            }
        }
        if e.y.iter().any(|v| !v.is_finite()) {
            let ns = &panel.registry().north_star_long().metric_id;
            report.error(
                ValidationCode::NonFiniteValue,
                Some(&e.id),
                Some(ns),
                format!("non-finite delta for `{ns}` in experiment `{}`", e.id),
            );
        }
    }
    let shape = panel.shape();
    if panel
        .experiments()
        .iter()
        .any(|e| e.num_buckets() != shape.buckets)
    {
        report.warning(
            ValidationCode::UnbalancedBuckets,
            None,
            None,
            "experiments have differing bucket counts".into(),
        );
    }
    if shape.experiments < 3 {
        report.warning(
            ValidationCode::TooFewExperiments,
            None,
            None,
            format!(
                "{} experiment(s); proxy objectives need at least 3",
                shape.experiments
            ),
        );
    }
    report
}

enum Schema {
    Arm { treat: usize, ctrl: usize },
    Delta { delta: usize },
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads registry and data, returning the panel (if the cells are complete)
/// together with every problem found, including [`validate_panel`] results.
pub fn load_and_validate(
    data_path: &Path,
    registry_path: &Path,
) -> Result<(Option<ExperimentPanel>, ValidationReport), DataError> {
    let reg_text = read_to_string(registry_path)?;
    let registry = MetricRegistry::read_csv(reg_text.as_bytes(), &registry_path.display().to_string())?;
    let data_text = read_to_string(data_path)?;
    parse_panel(data_text.as_bytes(), &data_path.display().to_string(), registry)
}

/// Loads a panel, rejecting incomplete or malformed data with
/// [`DataError::Invalid`]. Panel-level invariants (bucket counts) are left to
/// [`validate_panel`].
pub fn load_panel(data_path: &Path, registry_path: &Path) -> Result<ExperimentPanel, DataError> {
    let (panel, report) = load_and_validate(data_path, registry_path)?;
    match panel {
        Some(p) => Ok(p),
        None => Err(DataError::Invalid(report)),
    }
}

pub fn parse_panel<R: Read>(
    reader: R,
    path: &str,
    registry: MetricRegistry,
) -> Result<(Option<ExperimentPanel>, ValidationReport), DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let csv_err = |source| DataError::Csv {
        path: path.to_string(),
        source,
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let schema_err = || DataError::Schema {
        path: path.to_string(),
        header: headers.iter().collect::<Vec<_>>().join(","),
    };
    let (c_exp, c_bucket, c_metric) = match (col("experiment_id"), col("bucket_id"), col("metric_id")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(schema_err()),
    };
    let schema = match (col("treatment_value"), col("control_value"), col("pct_delta")) {
        (Some(treat), Some(ctrl), None) => Schema::Arm { treat, ctrl },
        (None, None, Some(delta)) => Schema::Delta { delta },
        _ => return Err(schema_err()),
    };

    // Registry columns: auxiliaries first (panel order), long-term north star last.
    let aux: Vec<&MetricEntry> = registry.auxiliaries().collect();
    let ns = registry.north_star_long();
    let mut columns: Vec<&MetricEntry> = aux.clone();
    columns.push(ns);
    let col_of: HashMap<&str, usize> = columns
        .iter()
        .enumerate()
        .map(|(k, e)| (e.metric_id.as_str(), k))
        .collect();
    let ncol = columns.len();

    let mut report = ValidationReport::default();
    let mut exp_index: HashMap<String, usize> = HashMap::new();
    let mut exp_ids: Vec<String> = Vec::new();
    let mut buckets: Vec<(Vec<String>, HashMap<String, usize>)> = Vec::new();
    let mut cells: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut unknown_reported: HashMap<String, ()> = HashMap::new();
    let mut used = vec![false; ncol];

    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = line + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let exp_id = field(c_exp);
        let metric_id = field(c_metric);
        let bucket_id = field(c_bucket);
        let Some(&k) = col_of.get(metric_id) else {
            if unknown_reported.insert(metric_id.to_string(), ()).is_none() {
                report.error(
                    ValidationCode::UnknownMetric,
                    Some(exp_id),
                    Some(metric_id),
                    format!("row {row}: metric `{metric_id}` is not in the registry"),
                );
            }
            continue;
        };
        used[k] = true;
        let parse = |c: usize| field(c).parse::<f64>().ok();
        let raw = match schema {
            Schema::Delta { delta } => parse(delta),
            Schema::Arm { treat, ctrl } => match (parse(treat), parse(ctrl)) {
                (Some(_), Some(0.0)) => {
                    report.error(
                        ValidationCode::ZeroControl,
                        Some(exp_id),
                        Some(metric_id),
                        format!("row {row}: control value is zero (bucket `{bucket_id}`)"),
                    );
                    continue;
                }
                (Some(t), Some(c)) => Some(100.0 * (t - c) / c),
                _ => None,
            },
        };
        let Some(raw) = raw else {
            report.error(
                ValidationCode::MalformedRow,
                Some(exp_id),
                Some(metric_id),
                format!("row {row}: non-numeric value"),
            );
            continue;
        };
        let j = *exp_index.entry(exp_id.to_string()).or_insert_with(|| {
            exp_ids.push(exp_id.to_string());
            buckets.push((Vec::new(), HashMap::new()));
            exp_ids.len() - 1
        });
        let (order, index) = &mut buckets[j];
        let i = *index.entry(bucket_id.to_string()).or_insert_with(|| {
            order.push(bucket_id.to_string());
            order.len() - 1
        });
        let value = raw * columns[k].sign.factor();
        if cells.insert((j, i, k), value).is_some() {
            report.error(
                ValidationCode::DuplicateCell,
                Some(exp_id),
                Some(metric_id),
                format!("row {row}: duplicate cell for bucket `{bucket_id}`"),
            );
        }
    }

    for (k, e) in columns.iter().enumerate() {
        if !used[k] {
            report.warning(
                ValidationCode::UnusedMetric,
                None,
                Some(&e.metric_id),
                format!("registry metric `{}` never appears in the data", e.metric_id),
            );
        }
    }
    for (j, exp_id) in exp_ids.iter().enumerate() {
        let order = &buckets[j].0;
        for (k, e) in columns.iter().enumerate() {
            let missing: Vec<&str> = order
                .iter()
                .enumerate()
                .filter(|(i, _)| !cells.contains_key(&(j, *i, k)))
                .map(|(_, b)| b.as_str())
                .collect();
            if !missing.is_empty() {
                report.error(
                    ValidationCode::MissingCell,
                    Some(exp_id),
                    Some(&e.metric_id),
                    format!(
                        "experiment `{exp_id}` metric `{}` missing bucket(s) {}",
                        e.metric_id,
                        missing.join(",")
                    ),
                );
            }
        }
    }
    if !report.errors.is_empty() {
        return Ok((None, report));
    }

    let m = aux.len();
    let experiments = exp_ids
        .into_iter()
        .enumerate()
        .map(|(j, id)| {
            let order = std::mem::take(&mut buckets[j].0);
            let n = order.len();
            let mut x = Vec::with_capacity(n * m);
            let mut y = Vec::with_capacity(n);
            for i in 0..n {
                x.extend((0..m).map(|k| cells[&(j, i, k)]));
                y.push(cells[&(j, i, m)]);
            }
            Experiment::new(id, order, x, y)
        })
        .collect();
    let panel = ExperimentPanel::new(registry, experiments)?;
    let checked = validate_panel(&panel);
    report.errors.extend(checked.errors);
    report.warnings.extend(checked.warnings);
    report.panel_shape = checked.panel_shape;
    Ok((Some(panel), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> MetricRegistry {
        let text = "metric_id,role,sign,display_name\n\
                    clicks,auxiliary,+1,Clicks\n\
                    abandon_rate,auxiliary,-1,Abandonment\n\
                    dau,north_star_long,1,DAU\n";
        MetricRegistry::read_csv(text.as_bytes(), "reg").unwrap()
    }

    fn delta_fixture() -> String {
        let mut s = String::from("experiment_id,bucket_id,metric_id,pct_delta\n");
        for e in ["e1", "e2"] {
            for b in 0..3 {
                for (m, v) in [("clicks", 1.0), ("abandon_rate", -0.5), ("dau", 0.1)] {
                    s.push_str(&format!("{e},{b},{m},{}\n", v * (b as f64 + 1.0)));
                }
            }
        }
        s
    }

    #[test]
    fn arm_level_percent_delta_and_sign_flip() {
        let text = "experiment_id,bucket_id,metric_id,treatment_value,control_value\n\
                    e1,0,clicks,102,100\ne1,0,abandon_rate,98,100\ne1,0,dau,10,10\n\
                    e1,1,clicks,100,100\ne1,1,abandon_rate,100,100\ne1,1,dau,10,10\n\
                    e1,2,clicks,100,100\ne1,2,abandon_rate,100,100\ne1,2,dau,10,10\n";
        let (panel, report) = parse_panel(text.as_bytes(), "t", registry()).unwrap();
        assert!(report.is_ok(), "{report:?}");
        let panel = panel.unwrap();
        let row = panel.experiments()[0].row(0, 2);
        assert_eq!(row[0], 2.0);
        assert_eq!(row[1], 2.0);
    }

    #[test]
    fn delta_fixture_shape() {
        let (panel, report) = parse_panel(delta_fixture().as_bytes(), "t", registry()).unwrap();
        assert!(report.errors.is_empty());
        assert_eq!(
            report.panel_shape,
            Some(PanelShape {
                experiments: 2,
                buckets: 3,
                metrics: 2
            })
        );
        let panel = panel.unwrap();
        assert_eq!(panel.metric_column(1, 1), vec![0.5, 1.0, 1.5]);
        assert_eq!(panel.experiments()[0].y(), &[0.1, 0.2, 0.30000000000000004]);
    }

    #[test]
    fn missing_cell_is_reported_with_ids() {
        let text: String = delta_fixture()
            .lines()
            .filter(|l| *l != "e2,1,clicks,2")
            .map(|l| format!("{l}\n"))
            .collect();
        let (panel, report) = parse_panel(text.as_bytes(), "t", registry()).unwrap();
        assert!(panel.is_none());
        let err = report
            .errors
            .iter()
            .find(|e| e.code == ValidationCode::MissingCell)
            .unwrap();
        assert_eq!(err.experiment_id.as_deref(), Some("e2"));
        assert_eq!(err.metric_id.as_deref(), Some("clicks"));
        assert_eq!(report.errors.len(), 1);
    }

    #[test]
    fn duplicate_unknown_and_zero_control() {
        let mut text = delta_fixture();
        text.push_str("e1,0,clicks,9\ne1,0,mystery,1\n");
        let (_, report) = parse_panel(text.as_bytes(), "t", registry()).unwrap();
        assert!(report.has(ValidationCode::DuplicateCell));
        assert!(report.has(ValidationCode::UnknownMetric));

        let arm = "experiment_id,bucket_id,metric_id,treatment_value,control_value\n\
                   e1,0,clicks,1,0\n";
        let (_, report) = parse_panel(arm.as_bytes(), "t", registry()).unwrap();
        assert!(report.has(ValidationCode::ZeroControl));
    }

    #[test]
    fn two_buckets_fail_validation() {
        let text: String = delta_fixture()
            .lines()
            .filter(|l| !l.starts_with("e1,2,"))
            .map(|l| format!("{l}\n"))
            .collect();
        let (panel, report) = parse_panel(text.as_bytes(), "t", registry()).unwrap();
        assert!(panel.is_some());
        assert!(report.has(ValidationCode::BucketCountTooSmall));
        let bad = report
            .errors
            .iter()
            .find(|e| e.code == ValidationCode::BucketCountTooSmall)
            .unwrap();
        assert_eq!(bad.experiment_id.as_deref(), Some("e1"));
    }

    #[test]
    fn registry_rejects_two_long_north_stars() {
        let text = "metric_id,role,sign\na,auxiliary,1\nb,north_star_long,1\nc,north_star_long,1\n";
        assert!(matches!(
            MetricRegistry::read_csv(text.as_bytes(), "r"),
            Err(DataError::Registry(_))
        ));
        let text = "metric_id,role,sign\na,auxiliary,2\nb,north_star_long,1\n";
        assert!(MetricRegistry::read_csv(text.as_bytes(), "r").is_err());
    }

    #[test]
    fn delta_round_trip_is_exact() {
        let (panel, _) = parse_panel(delta_fixture().as_bytes(), "t", registry()).unwrap();
        let panel = panel.unwrap();
        let mut buf = Vec::new();
        panel.write_delta_csv(&mut buf).unwrap();
        let (again, report) = parse_panel(buf.as_slice(), "t", registry()).unwrap();
        assert!(report.is_ok());
        assert_eq!(again.unwrap(), panel);
    }

    #[test]
    fn select_metrics_keeps_order_and_values() {
        let (panel, _) = parse_panel(delta_fixture().as_bytes(), "t", registry()).unwrap();
        let panel = panel.unwrap();
        let sub = panel.select_metrics(&["abandon_rate".to_string()]).unwrap();
        assert_eq!(sub.num_metrics(), 1);
        assert_eq!(sub.metric_column(0, 0), panel.metric_column(0, 1));
        assert!(matches!(
            panel.select_metrics(&["nope".to_string()]),
            Err(DataError::UnknownMetric(_))
        ));
    }
}
