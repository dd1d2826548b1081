//! Solar forecast error quantification: binned Gaussian models of the
//! relative error, and quantile-shifted generation for a confidence level.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normal::{inv_norm_cdf, NormalError};

pub const DEFAULT_BINS: usize = 12;
pub const DEFAULT_MIN_COUNT: usize = 20;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("invalid record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("no daylight records left after removing zero forecasts")]
    EmptyAfterCleaning,
    #[error("{available} samples available, at least {required} required")]
    InsufficientData { available: usize, required: usize },
    #[error("normalized forecast {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid error model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Quantile(#[from] NormalError),
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub timestamp: String,
    pub forecast_kw: f64,
    pub actual_kw: f64,
    pub capacity_kw: f64,
}

/// A daylight observation: forecast as a fraction of capacity, and the
/// relative error `(actual - forecast) / forecast`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPair {
    pub f_norm: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mu: f64,
    pub sigma: f64,
}

impl ErrorBin {
    pub const NIGHT: ErrorBin = ErrorBin { lo: 0.0, hi: 0.0, count: 0, mu: 0.0, sigma: 0.0 };

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub bins: Vec<ErrorBin>,
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<Vec<ForecastRecord>, ForecastError> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|source| ForecastError::Io { path: path.display().to_string(), source })?;
    parse_history_csv(file)
}

pub fn parse_history_csv(reader: impl Read) -> Result<Vec<ForecastRecord>, ForecastError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| ForecastError::Parse(e.to_string()))?.clone();
    let expected = ["timestamp", "forecast_kw", "actual_kw", "capacity_kw"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(ForecastError::Parse(format!(
            "expected header {:?}, found {:?}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (index, row) in rdr.deserialize::<ForecastRecord>().enumerate() {
        let rec = row.map_err(|e| ForecastError::Parse(e.to_string()))?;
        check_record(index, &rec)?;
        out.push(rec);
    }
    Ok(out)
}

fn check_record(index: usize, r: &ForecastRecord) -> Result<(), ForecastError> {
    let bad = |reason: &str| Err(ForecastError::InvalidRecord { index, reason: reason.to_string() });
    if !(r.capacity_kw > 0.0 && r.capacity_kw.is_finite()) {
        return bad("capacity must be positive");
    }
    if !(r.forecast_kw >= 0.0 && r.forecast_kw.is_finite()) {
        return bad("forecast must be nonnegative");
    }
    if !(r.actual_kw >= 0.0 && r.actual_kw.is_finite()) {
        return bad("actual output must be nonnegative");
    }
    if r.forecast_kw > r.capacity_kw {
        return bad("forecast exceeds installed capacity");
    }
    Ok(())
}

/// Drops night-time (zero-forecast) rows and normalizes the rest.
pub fn clean_and_normalize(records: &[ForecastRecord]) -> Result<Vec<NormalizedPair>, ForecastError> {
    if records.is_empty() {
        return Err(ForecastError::EmptyAfterCleaning);
    }
    let mut pairs = Vec::with_capacity(records.len() / 2);
    for (i, r) in records.iter().enumerate() {
        check_record(i, r)?;
        if r.forecast_kw == 0.0 {
            continue;
        }
        pairs.push(NormalizedPair {
            f_norm: r.forecast_kw / r.capacity_kw,
            rel_err: (r.actual_kw - r.forecast_kw) / r.forecast_kw,
        });
    }
    if pairs.is_empty() {
        return Err(ForecastError::EmptyAfterCleaning);
    }
    Ok(pairs)
}

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    // Shifted by the first sample so constant data gives an exact mean.
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Equal-width binning over (0, 1] with a normal fit per bin; bins below
/// `min_count` are merged into their smaller adjacent neighbour until every
/// bin qualifies.
pub fn fit_error_model(pairs: &[NormalizedPair], n_bins: usize, min_count: usize) -> Result<ErrorModel, ForecastError> {
    if n_bins == 0 {
        return Err(ForecastError::Argument("bin count must be at least 1".into()));
    }
    if pairs.len() < min_count.max(1) {
        return Err(ForecastError::InsufficientData { available: pairs.len(), required: min_count.max(1) });
    }
    let edges: Vec<f64> = (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect();
    let mut groups: Vec<(f64, f64, Vec<f64>)> = (0..n_bins).map(|k| (edges[k], edges[k + 1], Vec::new())).collect();
    for p in pairs {
        if !(p.f_norm > 0.0 && p.f_norm <= 1.0) {
            return Err(ForecastError::OutOfRange(p.f_norm));
        }
        let k = edges[1..].partition_point(|&e| e < p.f_norm).min(n_bins - 1);
        groups[k].2.push(p.rel_err);
    }

    while groups.len() > 1 {
        let Some((idx, _)) =
            groups.iter().enumerate().filter(|(_, g)| g.2.len() < min_count).min_by_key(|(i, g)| (g.2.len(), *i))
        else {
            break;
        };
        let neighbour = match (idx.checked_sub(1), (idx + 1 < groups.len()).then_some(idx + 1)) {
            (Some(l), Some(r)) => {
                if groups[r].2.len() < groups[l].2.len() {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!("more than one group"),
        };
        let (a, b) = (idx.min(neighbour), idx.max(neighbour));
        let (_, hi, vals) = groups.remove(b);
        groups[a].1 = hi;
        groups[a].2.extend(vals);
    }

    let bins = groups
        .into_iter()
        .map(|(lo, hi, vals)| {
            let (mu, sigma) = mean_and_sd(&vals);
            ErrorBin { lo, hi, count: vals.len(), mu, sigma }
        })
        .collect();
    let model = ErrorModel { bins };
    model.validate(min_count)?;
    Ok(model)
}

impl ErrorModel {
    pub fn validate(&self, min_count: usize) -> Result<(), ForecastError> {
        let bad = |m: String| Err(ForecastError::InvalidModel(m));
        let (Some(first), Some(last)) = (self.bins.first(), self.bins.last()) else {
            return bad("no bins".into());
        };
        if first.lo != 0.0 || last.hi != 1.0 {
            return bad("bins must cover (0, 1]".into());
        }
        for (i, b) in self.bins.iter().enumerate() {
            if !(b.lo >= 0.0 && b.lo < b.hi && b.hi <= 1.0) {
                return bad(format!("bin {i} has invalid edges ({}, {}]", b.lo, b.hi));
            }
            if !(b.sigma >= 0.0) || !b.mu.is_finite() || !b.sigma.is_finite() {
                return bad(format!("bin {i} has invalid statistics"));
            }
            if b.count < min_count {
                return bad(format!("bin {i} holds {} samples, fewer than {min_count}", b.count));
            }
            if i > 0 && self.bins[i - 1].hi != b.lo {
                return bad(format!("bins {} and {i} are not contiguous", i - 1));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, ForecastError> {
        let model: ErrorModel = serde_json::from_str(text).map_err(|e| ForecastError::Parse(e.to_string()))?;
        model.validate(0)?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ForecastError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ForecastError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("error model serializes")
    }

    /// The bin containing `f_norm`; `f_norm = 0` maps to a zero-error bin.
    pub fn lookup_bin(&self, f_norm: f64) -> Result<ErrorBin, ForecastError> {
        if f_norm == 0.0 {
            return Ok(ErrorBin::NIGHT);
        }
        if !(f_norm > 0.0 && f_norm <= 1.0) {
            return Err(ForecastError::OutOfRange(f_norm));
        }
        let k = self.bins.partition_point(|b| b.hi < f_norm).min(self.bins.len() - 1);
        Ok(self.bins[k])
    }

    /// Table-style summary: bin center, mean, standard deviation, count.
    pub fn summary(&self) -> String {
        let mut out = String::from("  #   center     mean_err   std_dev    count\n");
        for (i, b) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{:>3}  {:>7.4}  {:>9.4}  {:>8.4}  {:>7}", i + 1, b.center(), b.mu, b.sigma, b.count);
        }
        out
    }
}

/// Quantile-shifted generation `forecast (1 + mu + z sigma)` clamped to `[0, p_cap_kw]`,
/// with `z` the standard normal quantile of `probability`.
pub fn adjust_forecast(
    model: &ErrorModel,
    forecast_kw: f64,
    capacity_kw: f64,
    probability: f64,
    p_cap_kw: f64,
) -> Result<f64, ForecastError> {
    let z = inv_norm_cdf(probability)?;
    if !(forecast_kw >= 0.0) {
        return Err(ForecastError::Argument(format!("forecast {forecast_kw} must be nonnegative")));
    }
    if !(p_cap_kw > 0.0) {
        return Err(ForecastError::Argument(format!("operational cap {p_cap_kw} must be positive")));
    }
    if forecast_kw == 0.0 {
        return Ok(0.0);
    }
    if !(capacity_kw > 0.0) {
        return Err(ForecastError::Argument(format!("capacity {capacity_kw} must be positive")));
    }
    let bin = model.lookup_bin(forecast_kw / capacity_kw)?;
    Ok((forecast_kw * (1.0 + bin.mu + z * bin.sigma)).clamp(0.0, p_cap_kw))
}
