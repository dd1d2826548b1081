//! Monte Carlo check of the inverter chance constraint under sampled solar
//! output, with optional nonlinear voltage re-solves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{ErrorModel, ForecastError};
use crate::network::NetworkModel;
use crate::opf::{DerSet, DerSpec, OpfError, VoltageLimits};
use crate::powerflow::{solve_pf, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::sweep::{DispatchRecord, RegionStatus};

pub const MIN_SAMPLES: usize = 100;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Error)]
pub enum McError {
    #[error("at least {MIN_SAMPLES} samples required, got {0}")]
    TooFewSamples(usize),
    #[error("alpha {0} outside (0, 1)")]
    Alpha(f64),
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Opf(#[from] OpfError),
}

/// How relative forecast errors are drawn across DERs in one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// One standard-normal draw per sample drives every DER (a single
    /// solar profile scaled per site).
    #[default]
    Shared,
    /// Independent draws per DER.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub alpha: f64,
    pub check_voltages: bool,
    pub sampling: Sampling,
    pub limits: VoltageLimits,
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64, alpha: f64) -> Self {
        Self {
            n_samples,
            seed,
            alpha,
            check_voltages: false,
            sampling: Sampling::Shared,
            limits: VoltageLimits::default(),
        }
    }

    pub fn validate(&self) -> Result<(), McError> {
        if self.n_samples < MIN_SAMPLES {
            return Err(McError::TooFewSamples(self.n_samples));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(McError::Alpha(self.alpha));
        }
        Ok(())
    }
}

/// Operating points of one (hour, level) under test.
#[derive(Debug, Clone, PartialEq)]
pub struct McCase {
    pub hour: u32,
    pub probability: f64,
    pub load_mult: f64,
    pub ders: Vec<DerSpec>,
    /// Point forecast per DER (kW).
    pub forecast_kw: Vec<f64>,
    pub dispatch_max_kvar: Vec<f64>,
    pub dispatch_min_kvar: Vec<f64>,
}

impl McCase {
    /// Case for an optimal dispatch record; `None` for infeasible hours.
    pub fn from_record(rec: &DispatchRecord) -> Option<Self> {
        if rec.status != RegionStatus::Optimal {
            return None;
        }
        Some(Self {
            hour: rec.hour,
            probability: rec.probability,
            load_mult: rec.load_mult,
            ders: rec.ders.iter().map(|d| d.spec.clone()).collect(),
            forecast_kw: rec.ders.iter().map(|d| d.forecast_kw).collect(),
            dispatch_max_kvar: rec.ders.iter().map(|d| d.q_max_dispatch_kvar).collect(),
            dispatch_min_kvar: rec.ders.iter().map(|d| d.q_min_dispatch_kvar).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub hour: u32,
    pub probability: f64,
    pub n: usize,
    pub seed: u64,
    /// Fraction of samples in which any DER leaves its capability circle at
    /// either extreme dispatch.
    pub hardware_violation_rate: f64,
    pub per_der_max_rate: f64,
    pub voltage_violation_rate: Option<f64>,
    pub indeterminate: usize,
    pub ci_halfwidth: f64,
    pub pass: bool,
    /// Per-DER violation rate, DER order.
    pub per_der_rates: Vec<f64>,
}

impl McReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Binomial 95% half-width at rate `alpha` over `n` trials.
pub fn ci_halfwidth(alpha: f64, n: usize) -> f64 {
    Z95 * (alpha * (1.0 - alpha) / n as f64).sqrt()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for `(seed, sample, stream)`, independent of evaluation order.
pub fn stream_rng(seed: u64, sample: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed ^ splitmix64(sample)) ^ stream))
}

/// Realized output for a standard-normal draw `z`: `forecast (1 + mu + z sigma)`
/// clamped to `[0, p_cap_kw]`.
pub fn realize(
    model: &ErrorModel,
    forecast_kw: f64,
    capacity_kw: f64,
    p_cap_kw: f64,
    z: f64,
) -> Result<f64, ForecastError> {
    if forecast_kw == 0.0 {
        return Ok(0.0);
    }
    let bin = model.lookup_bin(forecast_kw / capacity_kw)?;
    Ok((forecast_kw * (1.0 + bin.mu + z * bin.sigma)).clamp(0.0, p_cap_kw))
}

/// One clamped-Gaussian draw of realized generation.
pub fn sample_generation<R: Rng + ?Sized>(
    model: &ErrorModel,
    forecast_kw: f64,
    capacity_kw: f64,
    p_cap_kw: f64,
    rng: &mut R,
) -> Result<f64, ForecastError> {
    if forecast_kw == 0.0 {
        return Ok(0.0);
    }
    let z: f64 = rng.sample(StandardNormal);
    realize(model, forecast_kw, capacity_kw, p_cap_kw, z)
}

fn outside_circle(q: f64, s: f64, p: f64) -> bool {
    q * q > s * s - p * p + 1e-9 * s * s
}

/// Reactive output after giving active power priority.
fn watt_priority(q: f64, s: f64, p: f64) -> f64 {
    let room = (s * s - p * p).max(0.0).sqrt();
    if q.abs() > room {
        room.copysign(q)
    } else {
        q
    }
}

struct SampleOutcome {
    any_hw: bool,
    der_hw: Vec<bool>,
    voltage: Option<bool>,
}

pub fn validate_fr(case: &McCase, net: &NetworkModel, model: &ErrorModel, cfg: &McConfig) -> Result<McReport, McError> {
    cfg.validate()?;
    let nd = case.ders.len();
    for (what, got) in [
        ("forecast_kw", case.forecast_kw.len()),
        ("dispatch_max_kvar", case.dispatch_max_kvar.len()),
        ("dispatch_min_kvar", case.dispatch_min_kvar.len()),
    ] {
        if got != nd {
            return Err(McError::Dimension { what, expected: nd, got });
        }
    }
    let der_set = DerSet::resolve(net, case.ders.clone())?;
    let hour_net = net.scaled_loads(case.load_mult);
    // Validate bin lookups once so sampling cannot fail midway.
    for (d, &f) in case.ders.iter().zip(&case.forecast_kw) {
        realize(model, f, d.p_peak_kw, d.p_cap_kw(), 0.0)?;
    }

    let run = |i: usize| -> SampleOutcome {
        let mut shared = stream_rng(cfg.seed, i as u64, 0);
        let z_shared: f64 = shared.sample(StandardNormal);
        let p: Vec<f64> = case
            .ders
            .iter()
            .zip(&case.forecast_kw)
            .enumerate()
            .map(|(k, (d, &f))| {
                let z = match cfg.sampling {
                    Sampling::Shared => z_shared,
                    Sampling::Independent => stream_rng(cfg.seed, i as u64, k as u64 + 1).sample(StandardNormal),
                };
                realize(model, f, d.p_peak_kw, d.p_cap_kw(), z).expect("bins checked")
            })
            .collect();
        let der_hw: Vec<bool> = (0..nd)
            .map(|k| {
                let s = case.ders[k].s_rating_kva;
                outside_circle(case.dispatch_max_kvar[k], s, p[k]) || outside_circle(case.dispatch_min_kvar[k], s, p[k])
            })
            .collect();
        // None when the oracle does not converge.
        let voltage = || -> Option<bool> {
            let mut p_inj = vec![0.0; hour_net.n_node_phases()];
            for k in 0..nd {
                p_inj[der_set.node_phase[k]] += hour_net.to_pu_power(p[k]);
            }
            let mut violated = false;
            for dispatch in [&case.dispatch_max_kvar, &case.dispatch_min_kvar] {
                let mut q_inj = vec![0.0; hour_net.n_node_phases()];
                for k in 0..nd {
                    let q = watt_priority(dispatch[k], case.ders[k].s_rating_kva, p[k]);
                    q_inj[der_set.node_phase[k]] += hour_net.to_pu_power(q);
                }
                let sol = solve_pf(&hour_net, &p_inj, &q_inj, DEFAULT_TOL, DEFAULT_MAX_ITER).ok()?;
                violated |= !sol.check_limits(cfg.limits.v_lo, cfg.limits.v_hi).ok()?.is_empty();
            }
            Some(violated)
        };
        let voltage = if cfg.check_voltages { voltage() } else { None };
        SampleOutcome { any_hw: der_hw.iter().any(|&b| b), der_hw, voltage }
    };
    let outcomes: Vec<SampleOutcome> = (0..cfg.n_samples).into_par_iter().map(run).collect();

    let n = cfg.n_samples;
    let hw = outcomes.iter().filter(|o| o.any_hw).count();
    let per_der_rates: Vec<f64> =
        (0..nd).map(|k| outcomes.iter().filter(|o| o.der_hw[k]).count() as f64 / n as f64).collect();
    let (voltage_violation_rate, indeterminate) = if cfg.check_voltages {
        let determinate: Vec<bool> = outcomes.iter().filter_map(|o| o.voltage).collect();
        let bad = determinate.iter().filter(|&&b| b).count();
        let rate = if determinate.is_empty() { None } else { Some(bad as f64 / determinate.len() as f64) };
        (rate, n - determinate.len())
    } else {
        (None, 0)
    };
    let hardware_violation_rate = hw as f64 / n as f64;
    let ci = ci_halfwidth(cfg.alpha, n);
    Ok(McReport {
        hour: case.hour,
        probability: case.probability,
        n,
        seed: cfg.seed,
        hardware_violation_rate,
        per_der_max_rate: per_der_rates.iter().copied().fold(0.0, f64::max),
        voltage_violation_rate,
        indeterminate,
        ci_halfwidth: ci,
        pass: hardware_violation_rate <= cfg.alpha + ci,
        per_der_rates,
    })
}
