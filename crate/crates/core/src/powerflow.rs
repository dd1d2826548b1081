//! Nonlinear three-phase backward/forward sweep power flow for radial feeders.

use num_complex::Complex;
use thiserror::Error;

use crate::network::{NetworkModel, NodePhase};
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PfError {
    #[error("injection vector has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("tolerance must be positive")]
    Tolerance,
    #[error("power flow did not converge ({iterations} iterations, mismatch {mismatch:e})")]
    NotConverged { iterations: usize, mismatch: f64 },
}

#[derive(Debug, Clone)]
pub struct PfSolution<T> {
    /// Phase voltages per bus (p.u.); absent phases are zero.
    pub v: Vec<[Complex<T>; 3]>,
    /// Current flowing into each non-slack bus through its feeding line.
    pub line_current: Vec<[Complex<T>; 3]>,
    pub node_phases: Vec<NodePhase>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: T,
    /// Mismatch after each iteration.
    pub mismatch_history: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageViolation {
    pub node_phase: NodePhase,
    pub magnitude: f64,
}

fn slack_voltages<T: Scalar>(net: &NetworkModel) -> [Complex<T>; 3] {
    let mut v = [Complex::new(T::zero(), T::zero()); 3];
    for (k, item) in v.iter_mut().enumerate() {
        let angle = -2.0 * std::f64::consts::PI * k as f64 / 3.0;
        *item = Complex::from_polar(T::lit(net.v0[k]), T::lit(angle));
    }
    v
}

/// Solves with generation injections `p_inj`, `q_inj` (p.u., node-phase order)
/// and the network's voltage-dependent loads.
pub fn solve_pf<T: Scalar>(
    net: &NetworkModel,
    p_inj: &[T],
    q_inj: &[T],
    tol: T,
    max_iter: usize,
) -> Result<PfSolution<T>, PfError> {
    let n = net.n_node_phases();
    for v in [p_inj, q_inj] {
        if v.len() != n {
            return Err(PfError::Dimension { expected: n, got: v.len() });
        }
    }
    if !(tol > T::zero()) {
        return Err(PfError::Tolerance);
    }

    let zero = Complex::new(T::zero(), T::zero());
    let nb = net.buses.len();
    let zb = net.z_base_ohm();
    let z_pu: Vec<[[Complex<T>; 3]; 3]> = net
        .lines
        .iter()
        .map(|l| l.z.map(|row| row.map(|c| Complex::new(T::lit(c.re / zb), T::lit(c.im / zb)))))
        .collect();

    // Per-bus nameplate load and generation (p.u.).
    let mut load = vec![[zero; 3]; nb];
    let mut a0 = vec![[T::zero(); 3]; nb];
    let mut a1 = vec![[T::zero(); 3]; nb];
    for (b, bus) in net.buses.iter().enumerate() {
        for k in 0..3 {
            load[b][k] = Complex::new(T::lit(net.to_pu_power(bus.load_p[k])), T::lit(net.to_pu_power(bus.load_q[k])));
            a0[b][k] = T::lit(bus.a0[k]);
            a1[b][k] = T::lit(bus.a1[k]);
        }
    }
    let mut gen = vec![[zero; 3]; nb];
    for (i, np) in net.node_phases().iter().enumerate() {
        gen[np.bus][np.phase.index()] = Complex::new(p_inj[i], q_inj[i]);
    }
    let demand = |b: usize, k: usize, v: Complex<T>| -> Complex<T> {
        load[b][k] * (a0[b][k] + a1[b][k] * v.norm_sqr()) - gen[b][k]
    };

    let v_slack = slack_voltages::<T>(net);
    let mut v: Vec<[Complex<T>; 3]> = net
        .buses
        .iter()
        .map(|bus| {
            let mut out = [zero; 3];
            for p in bus.phases.iter() {
                out[p.index()] = v_slack[p.index()];
            }
            out
        })
        .collect();

    let order = net.bfs_order();
    let mut inj = vec![[zero; 3]; nb];
    let mut flow = vec![[zero; 3]; nb];
    let mut history = Vec::new();
    let mut converged = false;
    let mut mismatch = T::infinity();
    let mut iterations = 0;

    for it in 1..=max_iter {
        iterations = it;
        for &b in order {
            if b == net.slack {
                continue;
            }
            for p in net.buses[b].phases.iter() {
                let k = p.index();
                inj[b][k] = (demand(b, k, v[b][k]) / v[b][k]).conj();
            }
        }
        // Backward sweep: accumulate currents leaf to root.
        for slot in flow.iter_mut() {
            *slot = [zero; 3];
        }
        for &b in order.iter().rev() {
            if b == net.slack {
                continue;
            }
            for k in 0..3 {
                flow[b][k] = flow[b][k] + inj[b][k];
            }
            let parent = net.parent_bus(b).expect("non-slack bus has a parent");
            if parent != net.slack {
                let child = flow[b];
                for k in 0..3 {
                    flow[parent][k] = flow[parent][k] + child[k];
                }
            }
        }
        // Forward sweep: propagate voltages root to leaf.
        for &b in order {
            let (Some(li), Some(parent)) = (net.parent_line(b), net.parent_bus(b)) else {
                continue;
            };
            let z = &z_pu[li];
            for p in net.buses[b].phases.iter() {
                let f = p.index();
                let drop = (0..3).fold(zero, |acc, g| acc + z[f][g] * flow[b][g]);
                v[b][f] = v[parent][f] - drop;
            }
        }
        mismatch = T::zero();
        for np in net.node_phases() {
            let (b, k) = (np.bus, np.phase.index());
            let s_drawn = v[b][k] * inj[b][k].conj();
            mismatch = mismatch.max((s_drawn - demand(b, k, v[b][k])).norm());
        }
        history.push(mismatch);
        if mismatch <= tol {
            converged = true;
            break;
        }
    }

    Ok(PfSolution {
        v,
        line_current: flow,
        node_phases: net.node_phases().to_vec(),
        converged,
        iterations,
        max_mismatch: mismatch,
        mismatch_history: history,
    })
}

impl<T: Scalar> PfSolution<T> {
    /// Squared voltage magnitudes in node-phase order.
    pub fn squared_magnitudes(&self) -> Vec<T> {
        self.node_phases.iter().map(|np| self.v[np.bus][np.phase.index()].norm_sqr()).collect()
    }

    pub fn magnitudes(&self) -> Vec<T> {
        self.node_phases.iter().map(|np| self.v[np.bus][np.phase.index()].norm()).collect()
    }

    /// Node-phases whose magnitude lies outside `[v_lo, v_hi]`.
    pub fn check_limits(&self, v_lo: T, v_hi: T) -> Result<Vec<VoltageViolation>, PfError> {
        if !self.converged {
            return Err(PfError::NotConverged {
                iterations: self.iterations,
                mismatch: self.max_mismatch.to_f64_lossy(),
            });
        }
        Ok(self
            .node_phases
            .iter()
            .zip(self.magnitudes())
            .filter(|(_, m)| *m < v_lo || *m > v_hi)
            .map(|(&np, m)| VoltageViolation { node_phase: np, magnitude: m.to_f64_lossy() })
            .collect())
    }

    /// Complex power delivered into the feeder at the slack bus.
    pub fn slack_power(&self, net: &NetworkModel) -> Complex<T> {
        let mut s = Complex::new(T::zero(), T::zero());
        for line in &net.lines {
            if net.upstream(line) != net.slack {
                continue;
            }
            let down = net.downstream(line);
            for k in 0..3 {
                s = s + self.v[net.slack][k] * self.line_current[down][k].conj();
            }
        }
        s
    }

    /// Total series losses.
    pub fn losses(&self, net: &NetworkModel) -> Complex<T> {
        let mut s = Complex::new(T::zero(), T::zero());
        for line in &net.lines {
            let (up, down) = (net.upstream(line), net.downstream(line));
            for p in net.buses[down].phases.iter() {
                let k = p.index();
                s = s + (self.v[up][k] - self.v[down][k]) * self.line_current[down][k].conj();
            }
        }
        s
    }
}
