//! Three-phase linearized branch-flow model mapping nodal injections to
//! squared voltage magnitudes.

use num_complex::Complex;
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::network::{Line, NetworkModel};
use crate::scalar::Scalar;

/// Condition-number ceiling for the voltage-dependent load coupling matrix.
const MAX_K_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("load-coupling matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularK { condition: f64 },
    #[error("injection vector has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Per-line coefficient blocks of the squared-voltage drop
/// `y_down = y_up - Zp P - Zq Q`, with `P`, `Q` the per-phase flows into the
/// downstream bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCoefficients<T> {
    pub zp: [[T; 3]; 3],
    pub zq: [[T; 3]; 3],
}

/// Phase-rotation construction: `Zp = 2 Re(G . conj(z))`, `Zq = -2 Im(G . conj(z))`
/// with `G[f][g] = a^(f - g)` and `a = exp(-j 2 pi / 3)`.
pub fn build_coefficients<T: Scalar>(z: &[[Complex<T>; 3]; 3]) -> LineCoefficients<T> {
    let two = T::lit(2.0);
    let mut zp = [[T::zero(); 3]; 3];
    let mut zq = [[T::zero(); 3]; 3];
    for f in 0..3 {
        for g in 0..3 {
            let k = f as f64 - g as f64;
            let angle = T::lit(-2.0 * std::f64::consts::PI * k / 3.0);
            let gamma = Complex::new(angle.cos(), angle.sin());
            let w = gamma * z[f][g].conj();
            zp[f][g] = two * w.re;
            zq[f][g] = -two * w.im;
        }
    }
    LineCoefficients { zp, zq }
}

/// Coefficients of a network line in per-unit.
pub fn line_coefficients_pu<T: Scalar>(net: &NetworkModel, line: &Line) -> LineCoefficients<T> {
    let zb = net.z_base_ohm();
    let z = line.z.map(|row| row.map(|c| Complex::new(T::lit(c.re / zb), T::lit(c.im / zb))));
    build_coefficients(&z)
}

/// Affine map from generation injections to squared voltages,
/// `y = K^-1 [R (p - p_l a0) + X (q - q_l a0) + v0^2]`.
#[derive(Debug, Clone)]
pub struct LinearSensitivity<T> {
    pub r_eq: DenseMatrix<T>,
    pub x_eq: DenseMatrix<T>,
    pub k_inv: DenseMatrix<T>,
    /// Squared slack voltage of each node-phase's phase.
    pub base_term: Vec<T>,
    /// Constant-power load parts `p_l a0`, `q_l a0` (p.u.).
    pub load_p_a0: Vec<T>,
    pub load_q_a0: Vec<T>,
    /// `K^-1 R` and `K^-1 X`.
    pub dy_dp: DenseMatrix<T>,
    pub dy_dq: DenseMatrix<T>,
    /// Squared voltages at zero generation.
    pub no_injection: Vec<T>,
    pub k_condition: f64,
}

/// Path-sum form of `M^-T Z M^-1` (M the bus/line incidence matrix): entry ((j, f), (k, g)) sums the line
/// blocks shared by the slack paths of buses j and k.
pub fn impedance_sensitivities<T: Scalar>(net: &NetworkModel) -> (DenseMatrix<T>, DenseMatrix<T>) {
    let nb = net.buses.len();
    let mut cum_p = vec![[[T::zero(); 3]; 3]; nb];
    let mut cum_q = vec![[[T::zero(); 3]; 3]; nb];
    for &bus in net.bfs_order() {
        if let (Some(li), Some(parent)) = (net.parent_line(bus), net.parent_bus(bus)) {
            let c = line_coefficients_pu::<T>(net, &net.lines[li]);
            for f in 0..3 {
                for g in 0..3 {
                    cum_p[bus][f][g] = cum_p[parent][f][g] + c.zp[f][g];
                    cum_q[bus][f][g] = cum_q[parent][f][g] + c.zq[f][g];
                }
            }
        }
    }

    let nps = net.node_phases();
    let n = nps.len();
    let mut r = DenseMatrix::zeros(n, n);
    let mut x = DenseMatrix::zeros(n, n);
    for (i, a) in nps.iter().enumerate() {
        for (j, b) in nps.iter().enumerate() {
            let lca = common_ancestor(net, a.bus, b.bus);
            let (f, g) = (a.phase.index(), b.phase.index());
            r[(i, j)] = cum_p[lca][f][g];
            x[(i, j)] = cum_q[lca][f][g];
        }
    }
    (r, x)
}

fn common_ancestor(net: &NetworkModel, mut a: usize, mut b: usize) -> usize {
    while net.depth(a) > net.depth(b) {
        a = net.parent_bus(a).expect("non-root has parent");
    }
    while net.depth(b) > net.depth(a) {
        b = net.parent_bus(b).expect("non-root has parent");
    }
    while a != b {
        a = net.parent_bus(a).expect("non-root has parent");
        b = net.parent_bus(b).expect("non-root has parent");
    }
    a
}

pub fn build_sensitivity<T: Scalar>(net: &NetworkModel) -> Result<LinearSensitivity<T>, SensitivityError> {
    let (r_eq, x_eq) = impedance_sensitivities::<T>(net);
    LinearSensitivity::from_impedance(net, r_eq, x_eq)
}

impl<T: Scalar> LinearSensitivity<T> {
    /// Completes the model for the loads currently in `net`; `r_eq`/`x_eq`
    /// depend only on impedances and may be reused across load levels.
    pub fn from_impedance(
        net: &NetworkModel,
        r_eq: DenseMatrix<T>,
        x_eq: DenseMatrix<T>,
    ) -> Result<Self, SensitivityError> {
        let nps = net.node_phases();
        let n = nps.len();
        let pu = |kw: f64| T::lit(net.to_pu_power(kw));
        let mut load_p_a0 = Vec::with_capacity(n);
        let mut load_q_a0 = Vec::with_capacity(n);
        let mut load_p_a1 = Vec::with_capacity(n);
        let mut load_q_a1 = Vec::with_capacity(n);
        let mut base_term = Vec::with_capacity(n);
        for np in nps {
            let bus = &net.buses[np.bus];
            let k = np.phase.index();
            load_p_a0.push(pu(bus.load_p[k] * bus.a0[k]));
            load_q_a0.push(pu(bus.load_q[k] * bus.a0[k]));
            load_p_a1.push(pu(bus.load_p[k] * bus.a1[k]));
            load_q_a1.push(pu(bus.load_q[k] * bus.a1[k]));
            base_term.push(T::lit(net.v0[k] * net.v0[k]));
        }

        // K = I + R diag(p_l a1) + X diag(q_l a1)
        let k_mat = DenseMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { T::one() } else { T::zero() };
            id + r_eq[(i, j)] * load_p_a1[j] + x_eq[(i, j)] * load_q_a1[j]
        });
        let lu = k_mat.lu().map_err(|e| match e {
            LinalgError::Singular { .. } => SensitivityError::SingularK { condition: f64::INFINITY },
            LinalgError::Dimension { .. } => unreachable!("K is square"),
        })?;
        let k_inv = lu.inverse();
        let k_condition = (k_mat.norm1() * k_inv.norm1()).to_f64_lossy();
        if !(k_condition <= MAX_K_CONDITION) {
            return Err(SensitivityError::SingularK { condition: k_condition });
        }

        let dy_dp = k_inv.matmul(&r_eq).expect("square");
        let dy_dq = k_inv.matmul(&x_eq).expect("square");
        let rhs: Vec<T> = {
            let rp = r_eq.mul_vec(&load_p_a0).expect("square");
            let xq = x_eq.mul_vec(&load_q_a0).expect("square");
            (0..n).map(|i| base_term[i] - rp[i] - xq[i]).collect()
        };
        let no_injection = k_inv.mul_vec(&rhs).expect("square");

        Ok(Self { r_eq, x_eq, k_inv, base_term, load_p_a0, load_q_a0, dy_dp, dy_dq, no_injection, k_condition })
    }

    pub fn dim(&self) -> usize {
        self.base_term.len()
    }

    /// Squared voltage magnitudes for per-node-phase generation `p_inj`, `q_inj` (p.u.).
    pub fn predict_voltages(&self, p_inj: &[T], q_inj: &[T]) -> Result<Vec<T>, SensitivityError> {
        let n = self.dim();
        for v in [p_inj, q_inj] {
            if v.len() != n {
                return Err(SensitivityError::Dimension { expected: n, got: v.len() });
            }
        }
        let yp = self.dy_dp.mul_vec(p_inj).expect("checked");
        let yq = self.dy_dq.mul_vec(q_inj).expect("checked");
        Ok((0..n).map(|i| self.no_injection[i] + yp[i] + yq[i]).collect())
    }
}
