//! Chance-constrained reactive-power flexibility: quantile-shifted inverter
//! limits and the min/max linear programs over the linearized feeder.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::lp::{solve_lp, LpError, LpProblem, LpSolution, LpStatus, Sense};
use crate::network::{NetworkModel, NodePhase, Phase};
use crate::scalar::Scalar;
use crate::sensitivity::{LinearSensitivity, SensitivityError};

/// Share of the kVA rating available for active power (IEEE 1547-2018).
pub const ACTIVE_POWER_SHARE: f64 = 0.9;
/// Slack on post-solve voltage verification (p.u.^2).
pub const VOLTAGE_CHECK_TOL: f64 = 1e-7;
const RATING_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OpfError {
    #[error("DER at bus {bus:?} phase {phase}: {reason}")]
    InvalidDer { bus: String, phase: Phase, reason: String },
    #[error("active power {p_hat} exceeds inverter rating {s_rating}")]
    Domain { p_hat: f64, s_rating: f64 },
    #[error("voltage limits infeasible; most violated at bus {bus:?} phase {phase} by {violation:e} p.u.^2")]
    Infeasible { bus: String, phase: Phase, violation: f64 },
    #[error("LP solver returned {0:?}")]
    Solver(LpStatus),
    #[error("dispatch violates voltage limits after solve by {0:e} p.u.^2")]
    PostCheck(f64),
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerSpec {
    pub bus: String,
    pub phase: Phase,
    /// Inverter apparent-power rating (kVA).
    pub s_rating_kva: f64,
    /// Peak active output, i.e. installed PV capacity (kW).
    pub p_peak_kw: f64,
}

impl DerSpec {
    pub fn validate(&self) -> Result<(), OpfError> {
        let invalid = |reason: String| OpfError::InvalidDer { bus: self.bus.clone(), phase: self.phase, reason };
        if !(self.p_peak_kw >= 0.0 && self.p_peak_kw.is_finite()) {
            return Err(invalid(format!("peak output {} must be nonnegative", self.p_peak_kw)));
        }
        if !(self.s_rating_kva.is_finite())
            || self.s_rating_kva * ACTIVE_POWER_SHARE < self.p_peak_kw * (1.0 - RATING_TOL)
        {
            return Err(invalid(format!(
                "rating {} kVA below peak output {} kW / {ACTIVE_POWER_SHARE}",
                self.s_rating_kva, self.p_peak_kw
            )));
        }
        Ok(())
    }

    /// Active-power ceiling `0.9 S`.
    pub fn p_cap_kw(&self) -> f64 {
        ACTIVE_POWER_SHARE * self.s_rating_kva
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QBounds {
    pub q_lo: f64,
    pub q_hi: f64,
}

/// Reactive headroom `sqrt(S^2 - p^2)` left on the capability circle.
pub fn reactive_headroom<T: Scalar>(s_rating: T, p_hat: T) -> Option<T> {
    if p_hat < T::zero() || p_hat > s_rating {
        return None;
    }
    Some((s_rating * s_rating - p_hat * p_hat).max(T::zero()).sqrt())
}

/// Deterministic reactive limits for a DER whose active output is the
/// quantile-shifted `p_hat` (kW).
pub fn reformulate_bounds(der: &DerSpec, p_hat: f64) -> Result<QBounds, OpfError> {
    let q_hi =
        reactive_headroom(der.s_rating_kva, p_hat).ok_or(OpfError::Domain { p_hat, s_rating: der.s_rating_kva })?;
    Ok(QBounds { q_lo: -q_hi, q_hi })
}

/// DERs resolved to node-phase positions of a network.
#[derive(Debug, Clone)]
pub struct DerSet {
    pub specs: Vec<DerSpec>,
    pub node_phase: Vec<usize>,
}

impl DerSet {
    pub fn resolve(net: &NetworkModel, specs: Vec<DerSpec>) -> Result<Self, OpfError> {
        let mut node_phase = Vec::with_capacity(specs.len());
        for d in &specs {
            d.validate()?;
            let invalid =
                |reason: &str| OpfError::InvalidDer { bus: d.bus.clone(), phase: d.phase, reason: reason.into() };
            let bus = net.bus_index(&d.bus).ok_or_else(|| invalid("unknown bus"))?;
            if bus == net.slack {
                return Err(invalid("DERs cannot sit at the slack bus"));
            }
            let idx = net
                .node_phase_index(NodePhase { bus, phase: d.phase })
                .ok_or_else(|| invalid("phase not present at bus"))?;
            node_phase.push(idx);
        }
        Ok(Self { specs, node_phase })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioHour {
    pub hour: u32,
    /// Adjusted generation per DER (kW).
    pub p_hat_kw: Vec<f64>,
    pub load_mult: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageLimits {
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Default for VoltageLimits {
    fn default() -> Self {
        Self { v_lo: 0.95, v_hi: 1.05 }
    }
}

/// Feeder with loads scaled to one hour and its linear model.
#[derive(Debug, Clone)]
pub struct HourModel {
    pub net: NetworkModel,
    pub sens: LinearSensitivity<f64>,
}

impl HourModel {
    pub fn build(base: &NetworkModel, load_mult: f64) -> Result<Self, OpfError> {
        let net = base.scaled_loads(load_mult);
        let sens = crate::sensitivity::build_sensitivity(&net)?;
        Ok(Self { net, sens })
    }

    /// Reuses impedance sensitivities computed for `base`.
    pub fn with_impedance(
        base: &NetworkModel,
        load_mult: f64,
        r_eq: &DenseMatrix<f64>,
        x_eq: &DenseMatrix<f64>,
    ) -> Result<Self, OpfError> {
        let net = base.scaled_loads(load_mult);
        let sens = LinearSensitivity::from_impedance(&net, r_eq.clone(), x_eq.clone())?;
        Ok(Self { net, sens })
    }

    /// Generation injections per node-phase (p.u.) from per-DER values (kW / kVAr).
    pub fn injections(&self, ders: &DerSet, per_der_kw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.net.n_node_phases()];
        for (k, &v) in per_der_kw.iter().enumerate() {
            out[ders.node_phase[k]] += self.net.to_pu_power(v);
        }
        out
    }

    /// Reactive demand of every load at squared voltages `y`, slack loads at
    /// the slack voltage (p.u.).
    pub fn reactive_demand(&self, y: &[f64]) -> f64 {
        let net = &self.net;
        let slack = &net.buses[net.slack];
        let mut total: f64 = slack
            .phases
            .iter()
            .map(|p| {
                let k = p.index();
                let v2 = net.v0[k] * net.v0[k];
                net.to_pu_power(slack.load_q[k]) * (slack.a0[k] + slack.a1[k] * v2)
            })
            .sum();
        for (i, np) in net.node_phases().iter().enumerate() {
            let bus = &net.buses[np.bus];
            let k = np.phase.index();
            total += net.to_pu_power(bus.load_q[k]) * (bus.a0[k] + bus.a1[k] * y[i]);
        }
        total
    }
}

/// Builds the LP over per-DER reactive output (p.u.): objective
/// `sum q_g - sum q_l(y)` with `y` affine in `q_g`, voltage rows
/// `v_lo^2 <= y <= v_hi^2`, and DER boxes from `bounds`.
pub fn assemble_lp(
    model: &HourModel,
    ders: &DerSet,
    scenario: &ScenarioHour,
    bounds: &[QBounds],
    limits: VoltageLimits,
    sense: Sense,
) -> Result<LpProblem<f64>, OpfError> {
    let nd = ders.len();
    for (what, got) in [("p_hat", scenario.p_hat_kw.len()), ("bounds", bounds.len())] {
        if got != nd {
            return Err(OpfError::Dimension { what, expected: nd, got });
        }
    }
    if !(limits.v_lo < limits.v_hi) {
        return Err(OpfError::Dimension { what: "voltage limits (v_lo < v_hi)", expected: 0, got: 1 });
    }
    let net = &model.net;
    let sens = &model.sens;
    let n = sens.dim();

    let p_inj = model.injections(ders, &scenario.p_hat_kw);
    let y0 = sens.predict_voltages(&p_inj, &vec![0.0; n])?;

    // Sensitivity of y to each DER's reactive output.
    let g = DenseMatrix::from_fn(n, nd, |i, k| sens.dy_dq[(i, ders.node_phase[k])]);

    let w: Vec<f64> = net
        .node_phases()
        .iter()
        .map(|np| {
            let bus = &net.buses[np.bus];
            let k = np.phase.index();
            net.to_pu_power(bus.load_q[k]) * bus.a1[k]
        })
        .collect();
    let wg = g.vec_mul(&w).expect("dimensions agree");
    let objective: Vec<f64> = wg.iter().map(|v| 1.0 - v).collect();
    let offset = -model.reactive_demand(&y0);

    let (lo2, hi2) = (limits.v_lo * limits.v_lo, limits.v_hi * limits.v_hi);
    let mut rows = DenseMatrix::zeros(2 * n, nd);
    let mut rhs = Vec::with_capacity(2 * n);
    for i in 0..n {
        rows.row_mut(i).copy_from_slice(g.row(i));
        rhs.push(hi2 - y0[i]);
    }
    for i in 0..n {
        for (dst, &src) in rows.row_mut(n + i).iter_mut().zip(g.row(i)) {
            *dst = -src;
        }
        rhs.push(y0[i] - lo2);
    }

    let lower = bounds.iter().map(|b| net.to_pu_power(b.q_lo)).collect();
    let upper = bounds.iter().map(|b| net.to_pu_power(b.q_hi)).collect();
    let mut lp = LpProblem::new(sense, objective, lower, upper).with_rows(rows, rhs);
    lp.objective_offset = offset;
    Ok(lp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binding {
    VoltageUpper { node_phase: usize },
    VoltageLower { node_phase: usize },
    DerUpper { der: usize },
    DerLower { der: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexibilityRegion {
    pub hour: u32,
    pub probability: f64,
    /// Largest net reactive draw from the grid (kVAr, positive = import).
    pub q_sub_max_kvar: f64,
    /// Smallest net reactive draw (negative = export toward the grid).
    pub q_sub_min_kvar: f64,
    /// Substation reactive draw with every DER at zero reactive output.
    pub base_load_kvar: f64,
    pub dispatch_max_kvar: Vec<f64>,
    pub dispatch_min_kvar: Vec<f64>,
    pub binding_max: Vec<Binding>,
    pub binding_min: Vec<Binding>,
    pub p_hat_kw: Vec<f64>,
    pub bounds: Vec<QBounds>,
}

fn bindings(sol: &LpSolution<f64>, n: usize) -> Vec<Binding> {
    let mut out: Vec<Binding> =
        sol.active_rows
            .iter()
            .map(|&r| {
                if r < n {
                    Binding::VoltageUpper { node_phase: r }
                } else {
                    Binding::VoltageLower { node_phase: r - n }
                }
            })
            .collect();
    out.extend(sol.at_upper.iter().map(|&der| Binding::DerUpper { der }));
    out.extend(sol.at_lower.iter().map(|&der| Binding::DerLower { der }));
    out
}

/// Solves the min- and max-sense programs for one hour and probability level.
pub fn compute_fr(
    model: &HourModel,
    ders: &DerSet,
    scenario: &ScenarioHour,
    bounds: &[QBounds],
    limits: VoltageLimits,
) -> Result<FlexibilityRegion, OpfError> {
    let net = &model.net;
    let n = model.sens.dim();
    let solve = |sense| -> Result<(LpSolution<f64>, LpProblem<f64>), OpfError> {
        let lp = assemble_lp(model, ders, scenario, bounds, limits, sense)?;
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => Ok((sol, lp)),
            LpStatus::Infeasible => {
                let (row, violation) = sol.most_violated.unwrap_or((0, f64::NAN));
                let np = net.node_phases()[row % n.max(1)];
                Err(OpfError::Infeasible { bus: net.buses[np.bus].id.clone(), phase: np.phase, violation })
            }
            other => Err(OpfError::Solver(other)),
        }
    };
    // Minimizing the nodal expression maximizes the substation draw.
    let (sol_absorb, lp) = solve(Sense::Minimize)?;
    let (sol_inject, _) = solve(Sense::Maximize)?;

    let p_inj = model.injections(ders, &scenario.p_hat_kw);
    let (lo2, hi2) = (limits.v_lo * limits.v_lo, limits.v_hi * limits.v_hi);
    for sol in [&sol_absorb, &sol_inject] {
        let q_kvar: Vec<f64> = sol.x.iter().map(|&q| net.from_pu_power(q)).collect();
        let y = model.sens.predict_voltages(&p_inj, &model.injections(ders, &q_kvar))?;
        let worst = y.iter().map(|&v| (lo2 - v).max(v - hi2)).fold(0.0, f64::max);
        if worst > VOLTAGE_CHECK_TOL {
            return Err(OpfError::PostCheck(worst));
        }
    }

    let to_kvar = |x: &[f64]| x.iter().map(|&q| net.from_pu_power(q)).collect::<Vec<_>>();
    Ok(FlexibilityRegion {
        hour: scenario.hour,
        probability: scenario.probability,
        q_sub_max_kvar: -net.from_pu_power(sol_absorb.objective),
        q_sub_min_kvar: -net.from_pu_power(sol_inject.objective),
        base_load_kvar: -net.from_pu_power(lp.objective_offset),
        dispatch_max_kvar: to_kvar(&sol_absorb.x),
        dispatch_min_kvar: to_kvar(&sol_inject.x),
        binding_max: bindings(&sol_absorb, n),
        binding_min: bindings(&sol_inject, n),
        p_hat_kw: scenario.p_hat_kw.clone(),
        bounds: bounds.to_vec(),
    })
}
