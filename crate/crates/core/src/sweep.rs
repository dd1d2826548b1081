//! 24-hour sweep over probability levels: profiles, DER placement, and the
//! flexibility-region table.

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{adjust_forecast, ErrorModel, ForecastError};
use crate::network::{NetworkModel, Phase};
use crate::normal::inv_norm_cdf;
use crate::opf::{
    compute_fr, reformulate_bounds, Binding, DerSet, DerSpec, FlexibilityRegion, HourModel, OpfError, QBounds,
    ScenarioHour, VoltageLimits, ACTIVE_POWER_SHARE,
};
use crate::sensitivity::impedance_sensitivities;

pub const HOURS: usize = 24;
pub const DEFAULT_PENETRATION: f64 = 0.9;
pub const DEFAULT_P_LEVELS: [f64; 3] = [0.5, 0.84, 0.976];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("profiles: {0}")]
    Profiles(String),
    #[error("DER config: {0}")]
    DerConfig(String),
    #[error("probability level {0} outside (0, 1)")]
    Probability(f64),
    #[error("no probability levels given")]
    NoLevels,
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Opf(#[from] OpfError),
}

fn read_file(path: &Path) -> Result<String, SweepError> {
    std::fs::read_to_string(path).map_err(|source| SweepError::Io { path: path.display().to_string(), source })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub hour: u32,
    pub load_mult: f64,
    /// Solar forecast as a fraction of installed capacity.
    pub solar_forecast_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    pub rows: Vec<ProfileRow>,
}

impl Profiles {
    pub fn new(mut rows: Vec<ProfileRow>) -> Result<Self, SweepError> {
        rows.sort_by_key(|r| r.hour);
        let hours: Vec<u32> = rows.iter().map(|r| r.hour).collect();
        if hours != (0..HOURS as u32).collect::<Vec<_>>() {
            return Err(SweepError::Profiles(format!(
                "expected one row for each hour 0..{}, got {hours:?}",
                HOURS - 1
            )));
        }
        for r in &rows {
            if !(r.load_mult >= 0.0 && r.load_mult.is_finite()) {
                return Err(SweepError::Profiles(format!(
                    "hour {}: load_mult {} must be nonnegative",
                    r.hour, r.load_mult
                )));
            }
            if !(0.0..=1.0).contains(&r.solar_forecast_norm) {
                return Err(SweepError::Profiles(format!(
                    "hour {}: solar_forecast_norm {} outside [0, 1]",
                    r.hour, r.solar_forecast_norm
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn parse_csv(reader: impl Read) -> Result<Self, SweepError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| SweepError::Parse(e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != ["hour", "load_mult", "solar_forecast_norm"] {
            return Err(SweepError::Parse(format!(
                "profiles header must be hour,load_mult,solar_forecast_norm, got {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows =
            rdr.deserialize().collect::<Result<Vec<ProfileRow>, _>>().map_err(|e| SweepError::Parse(e.to_string()))?;
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SweepError> {
        Self::parse_csv(read_file(path.as_ref())?.as_bytes())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("hour,load_mult,solar_forecast_norm\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.hour, r.load_mult, r.solar_forecast_norm));
        }
        out
    }

    pub fn peak_load_mult(&self) -> f64 {
        self.rows.iter().map(|r| r.load_mult).fold(0.0, f64::max)
    }

    /// Hour with the largest solar forecast (earliest on ties).
    pub fn peak_solar_hour(&self) -> u32 {
        self.rows
            .iter()
            .fold(None::<&ProfileRow>, |best, r| match best {
                Some(b) if b.solar_forecast_norm >= r.solar_forecast_norm => Some(b),
                _ => Some(r),
            })
            .map_or(0, |r| r.hour)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerOverride {
    pub bus: String,
    /// Applies to every DER at the bus when absent.
    #[serde(default)]
    pub phase: Option<Phase>,
    #[serde(default)]
    pub s_rating_kva: Option<f64>,
    #[serde(default)]
    pub p_peak_kw: Option<f64>,
}

/// DER placement: explicit list, or equal units on every loaded node-phase
/// sized so installed PV equals `penetration` times the peak feeder load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerConfig {
    #[serde(default = "default_penetration")]
    pub penetration: f64,
    /// Inverter kVA per kW of PV; at least `1 / 0.9`.
    #[serde(default = "default_rating_factor")]
    pub rating_factor: f64,
    #[serde(default)]
    pub ders: Option<Vec<DerSpec>>,
    #[serde(default)]
    pub overrides: Vec<DerOverride>,
}

fn default_penetration() -> f64 {
    DEFAULT_PENETRATION
}

fn default_rating_factor() -> f64 {
    1.0 / ACTIVE_POWER_SHARE
}

impl Default for DerConfig {
    fn default() -> Self {
        Self {
            penetration: default_penetration(),
            rating_factor: default_rating_factor(),
            ders: None,
            overrides: Vec::new(),
        }
    }
}

impl DerConfig {
    pub fn from_json_str(text: &str) -> Result<Self, SweepError> {
        serde_json::from_str(text).map_err(|e| SweepError::Parse(format!("DER config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SweepError> {
        Self::from_json_str(&read_file(path.as_ref())?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("DER config serializes")
    }

    pub fn build(&self, net: &NetworkModel, profiles: &Profiles) -> Result<Vec<DerSpec>, SweepError> {
        if !(self.penetration >= 0.0 && self.penetration.is_finite()) {
            return Err(SweepError::DerConfig(format!("penetration {} must be nonnegative", self.penetration)));
        }
        if !(self.rating_factor * ACTIVE_POWER_SHARE >= 1.0 - 1e-12) {
            return Err(SweepError::DerConfig(format!(
                "rating_factor {} below 1/{ACTIVE_POWER_SHARE}",
                self.rating_factor
            )));
        }
        let mut ders = match &self.ders {
            Some(list) => list.clone(),
            None => default_placement(
                net,
                self.penetration * net.total_load_kw() * profiles.peak_load_mult(),
                self.rating_factor,
            ),
        };
        for o in &self.overrides {
            let mut hit = false;
            for d in ders.iter_mut().filter(|d| d.bus == o.bus && o.phase.is_none_or(|p| p == d.phase)) {
                hit = true;
                if let Some(p) = o.p_peak_kw {
                    d.p_peak_kw = p;
                    if o.s_rating_kva.is_none() {
                        d.s_rating_kva = p * self.rating_factor;
                    }
                }
                if let Some(s) = o.s_rating_kva {
                    d.s_rating_kva = s;
                }
            }
            if !hit {
                return Err(SweepError::DerConfig(format!("override for bus {:?} matches no DER", o.bus)));
            }
        }
        DerSet::resolve(net, ders.clone())?;
        Ok(ders)
    }
}

/// Equal units on every non-slack node-phase with nonzero active load.
pub fn default_placement(net: &NetworkModel, total_pv_kw: f64, rating_factor: f64) -> Vec<DerSpec> {
    let sites: Vec<_> =
        net.node_phases().iter().filter(|np| net.buses[np.bus].load_p[np.phase.index()] > 0.0).collect();
    if sites.is_empty() {
        return Vec::new();
    }
    let p_peak = total_pv_kw / sites.len() as f64;
    sites
        .into_iter()
        .map(|np| DerSpec {
            bus: net.buses[np.bus].id.clone(),
            phase: np.phase,
            s_rating_kva: p_peak * rating_factor,
            p_peak_kw: p_peak,
        })
        .collect()
}

/// Quantile-shifted output of every DER for one hour.
pub fn adjusted_generation(
    model: &ErrorModel,
    ders: &[DerSpec],
    solar_norm: f64,
    probability: f64,
) -> Result<Vec<f64>, SweepError> {
    ders.iter()
        .map(|d| {
            if d.p_peak_kw == 0.0 {
                return Ok(0.0);
            }
            Ok(adjust_forecast(model, solar_norm * d.p_peak_kw, d.p_peak_kw, probability, d.p_cap_kw())?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionStatus {
    Optimal,
    Infeasible,
    SolverFailure,
}

impl RegionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::SolverFailure => "solver_failure",
        }
    }
}

impl std::str::FromStr for RegionStatus {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(Self::Optimal),
            "infeasible" => Ok(Self::Infeasible),
            "solver_failure" => Ok(Self::SolverFailure),
            other => Err(SweepError::Parse(format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub hour: u32,
    pub probability: f64,
    pub load_mult: f64,
    pub solar_forecast_norm: f64,
    pub status: RegionStatus,
    pub region: Option<FlexibilityRegion>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub limits: VoltageLimits,
    pub parallel: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { limits: VoltageLimits::default(), parallel: true }
    }
}

pub fn validate_levels(levels: &[f64]) -> Result<(), SweepError> {
    if levels.is_empty() {
        return Err(SweepError::NoLevels);
    }
    for &p in levels {
        if !(p > 0.0 && p < 1.0) || inv_norm_cdf(p).is_err() {
            return Err(SweepError::Probability(p));
        }
    }
    Ok(())
}

fn solve_hour(
    model: &HourModel,
    ders: &DerSet,
    error_model: &ErrorModel,
    row: &ProfileRow,
    probability: f64,
    limits: VoltageLimits,
) -> Result<SweepEntry, SweepError> {
    let p_hat = adjusted_generation(error_model, &ders.specs, row.solar_forecast_norm, probability)?;
    let bounds =
        ders.specs.iter().zip(&p_hat).map(|(d, &p)| reformulate_bounds(d, p)).collect::<Result<Vec<QBounds>, _>>()?;
    let scenario = ScenarioHour { hour: row.hour, p_hat_kw: p_hat, load_mult: row.load_mult, probability };
    let (status, region, message) = match compute_fr(model, ders, &scenario, &bounds, limits) {
        Ok(fr) => (RegionStatus::Optimal, Some(fr), None),
        Err(e @ OpfError::Infeasible { .. }) => (RegionStatus::Infeasible, None, Some(e.to_string())),
        Err(e @ (OpfError::Solver(_) | OpfError::PostCheck(_))) => {
            (RegionStatus::SolverFailure, None, Some(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(SweepEntry {
        hour: row.hour,
        probability,
        load_mult: row.load_mult,
        solar_forecast_norm: row.solar_forecast_norm,
        status,
        region,
        message,
    })
}

/// Flexibility regions for every hour and level, ordered by (hour, level as given).
pub fn sweep(
    net: &NetworkModel,
    error_model: &ErrorModel,
    profiles: &Profiles,
    ders: &[DerSpec],
    p_levels: &[f64],
    opts: SweepOptions,
) -> Result<Vec<SweepEntry>, SweepError> {
    validate_levels(p_levels)?;
    let der_set = DerSet::resolve(net, ders.to_vec())?;
    let (r_eq, x_eq) = impedance_sensitivities::<f64>(net);

    let run_hour = |row: &ProfileRow| -> Result<Vec<SweepEntry>, SweepError> {
        let model = HourModel::with_impedance(net, row.load_mult, &r_eq, &x_eq)?;
        p_levels.iter().map(|&p| solve_hour(&model, &der_set, error_model, row, p, opts.limits)).collect()
    };
    let per_hour: Vec<Result<Vec<SweepEntry>, SweepError>> = if opts.parallel {
        profiles.rows.par_iter().map(run_hour).collect()
    } else {
        profiles.rows.iter().map(run_hour).collect()
    };
    let mut out = Vec::with_capacity(HOURS * p_levels.len());
    for hour in per_hour {
        out.extend(hour?);
    }
    Ok(out)
}

/// Shortest decimal that round-trips the value rounded to 6 significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    let s = format!("{rounded}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub const TABLE_HEADER: &str = "hour,probability,q_sub_max_kvar,q_sub_min_kvar,status,base_load_kvar";

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub hour: u32,
    pub probability: f64,
    pub q_sub_max_kvar: Option<f64>,
    pub q_sub_min_kvar: Option<f64>,
    pub status: RegionStatus,
    pub base_load_kvar: Option<f64>,
}

impl From<&SweepEntry> for TableRow {
    fn from(e: &SweepEntry) -> Self {
        Self {
            hour: e.hour,
            probability: e.probability,
            q_sub_max_kvar: e.region.as_ref().map(|r| r.q_sub_max_kvar),
            q_sub_min_kvar: e.region.as_ref().map(|r| r.q_sub_min_kvar),
            status: e.status,
            base_load_kvar: e.region.as_ref().map(|r| r.base_load_kvar),
        }
    }
}

pub fn write_table_csv(rows: &[TableRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_sig6).unwrap_or_default();
    let mut out = format!("{TABLE_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.hour,
            fmt_sig6(r.probability),
            opt(r.q_sub_max_kvar),
            opt(r.q_sub_min_kvar),
            r.status.as_str(),
            opt(r.base_load_kvar)
        ));
    }
    out
}

pub fn parse_table_csv(reader: impl Read) -> Result<Vec<TableRow>, SweepError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| SweepError::Parse(e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 5 || names[..5] != TABLE_HEADER.split(',').collect::<Vec<_>>()[..5] {
        return Err(SweepError::Parse(format!("unexpected table header {}", names.join(","))));
    }
    let num = |s: &str| -> Result<Option<f64>, SweepError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| SweepError::Parse(format!("bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| SweepError::Parse(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        rows.push(TableRow {
            hour: field(0).parse().map_err(|_| SweepError::Parse(format!("bad hour {:?}", field(0))))?,
            probability: num(field(1))?.ok_or_else(|| SweepError::Parse("missing probability".into()))?,
            q_sub_max_kvar: num(field(2))?,
            q_sub_min_kvar: num(field(3))?,
            status: field(4).parse()?,
            base_load_kvar: num(field(5))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingRecord {
    pub kind: String,
    pub bus: String,
    pub phase: Phase,
}

impl BindingRecord {
    fn from_binding(b: Binding, net: &NetworkModel, ders: &[DerSpec]) -> Self {
        let (kind, bus, phase) = match b {
            Binding::VoltageUpper { node_phase } | Binding::VoltageLower { node_phase } => {
                let np = net.node_phases()[node_phase];
                let kind = if matches!(b, Binding::VoltageUpper { .. }) { "voltage_upper" } else { "voltage_lower" };
                (kind, net.buses[np.bus].id.clone(), np.phase)
            }
            Binding::DerUpper { der } | Binding::DerLower { der } => {
                let kind = if matches!(b, Binding::DerUpper { .. }) { "der_upper" } else { "der_lower" };
                (kind, ders[der].bus.clone(), ders[der].phase)
            }
        };
        Self { kind: kind.into(), bus, phase }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerDispatch {
    #[serde(flatten)]
    pub spec: DerSpec,
    pub forecast_kw: f64,
    pub p_hat_kw: f64,
    pub q_hi_kvar: f64,
    pub q_max_dispatch_kvar: f64,
    pub q_min_dispatch_kvar: f64,
}

/// Per (hour, level) detail: DER operating points at both extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub hour: u32,
    pub probability: f64,
    pub load_mult: f64,
    pub status: RegionStatus,
    pub q_sub_max_kvar: Option<f64>,
    pub q_sub_min_kvar: Option<f64>,
    pub base_load_kvar: Option<f64>,
    pub ders: Vec<DerDispatch>,
    pub binding_max: Vec<BindingRecord>,
    pub binding_min: Vec<BindingRecord>,
    #[serde(default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchFile {
    pub records: Vec<DispatchRecord>,
}

impl DispatchFile {
    pub fn from_sweep(net: &NetworkModel, ders: &[DerSpec], entries: &[SweepEntry]) -> Self {
        let records = entries
            .iter()
            .map(|e| {
                let der_rows = match &e.region {
                    Some(fr) => ders
                        .iter()
                        .enumerate()
                        .map(|(k, d)| DerDispatch {
                            spec: d.clone(),
                            forecast_kw: e.solar_forecast_norm * d.p_peak_kw,
                            p_hat_kw: fr.p_hat_kw[k],
                            q_hi_kvar: fr.bounds[k].q_hi,
                            q_max_dispatch_kvar: fr.dispatch_max_kvar[k],
                            q_min_dispatch_kvar: fr.dispatch_min_kvar[k],
                        })
                        .collect(),
                    None => Vec::new(),
                };
                let binds = |list: Option<&Vec<Binding>>| {
                    list.map(|l| l.iter().map(|&b| BindingRecord::from_binding(b, net, ders)).collect())
                        .unwrap_or_default()
                };
                DispatchRecord {
                    hour: e.hour,
                    probability: e.probability,
                    load_mult: e.load_mult,
                    status: e.status,
                    q_sub_max_kvar: e.region.as_ref().map(|r| r.q_sub_max_kvar),
                    q_sub_min_kvar: e.region.as_ref().map(|r| r.q_sub_min_kvar),
                    base_load_kvar: e.region.as_ref().map(|r| r.base_load_kvar),
                    ders: der_rows,
                    binding_max: binds(e.region.as_ref().map(|r| &r.binding_max)),
                    binding_min: binds(e.region.as_ref().map(|r| &r.binding_min)),
                    message: e.message.clone(),
                }
            })
            .collect();
        Self { records }
    }

    pub fn from_json_str(text: &str) -> Result<Self, SweepError> {
        serde_json::from_str(text).map_err(|e| SweepError::Parse(format!("dispatch: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SweepError> {
        Self::from_json_str(&read_file(path.as_ref())?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("dispatch serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(4264.123456), "4264.12");
        assert_eq!(fmt_sig6(-1923.0), "-1923");
        assert_eq!(fmt_sig6(0.976), "0.976");
        assert_eq!(fmt_sig6(1234567.0), "1234570");
        assert_eq!(fmt_sig6(-0.0), "0");
        assert_eq!(fmt_sig6(1.0e-7), "0.0000001");
    }

    #[test]
    fn level_validation() {
        assert!(validate_levels(&[0.5, 0.84, 0.976]).is_ok());
        assert!(matches!(validate_levels(&[1.0]), Err(SweepError::Probability(_))));
        assert!(matches!(validate_levels(&[0.0]), Err(SweepError::Probability(_))));
        assert!(matches!(validate_levels(&[]), Err(SweepError::NoLevels)));
    }

    #[test]
    fn profiles_need_every_hour() {
        let mut text = String::from("hour,load_mult,solar_forecast_norm\n");
        for h in 0..23 {
            text.push_str(&format!("{h},1,0\n"));
        }
        assert!(matches!(Profiles::parse_csv(text.as_bytes()), Err(SweepError::Profiles(_))));
        text.push_str("23,1,0\n");
        let p = Profiles::parse_csv(text.as_bytes()).unwrap();
        assert_eq!(Profiles::parse_csv(p.to_csv_string().as_bytes()).unwrap(), p);
    }

    #[test]
    fn table_round_trip() {
        let rows = vec![
            TableRow {
                hour: 12,
                probability: 0.976,
                q_sub_max_kvar: Some(3670.0),
                q_sub_min_kvar: Some(939.0),
                status: RegionStatus::Optimal,
                base_load_kvar: Some(2000.5),
            },
            TableRow {
                hour: 13,
                probability: 0.5,
                q_sub_max_kvar: None,
                q_sub_min_kvar: None,
                status: RegionStatus::Infeasible,
                base_load_kvar: None,
            },
        ];
        let text = write_table_csv(&rows);
        assert_eq!(parse_table_csv(text.as_bytes()).unwrap(), rows);
    }
}
