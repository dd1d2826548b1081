//! Dense bounded-variable primal simplex.
//!
//! Problems take the form `opt c^T x + offset` subject to `A x <= b` and
//! `l <= x <= u` (finite `l`, `u` may be `+inf`). The solver runs a two-phase
//! simplex with Dantzig pricing, switching to Bland's rule for the rest of a
//! degenerate stretch, then refines alternate optima to the lexicographically
//! smallest primal vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Consecutive degenerate pivots tolerated before Bland's rule takes over.
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("variable {index} has lower bound {lower} above upper bound {upper}")]
    EmptyBox { index: usize, lower: f64, upper: f64 },
}

#[derive(Debug, Clone)]
pub struct LpProblem<T> {
    pub sense: Sense,
    pub objective: Vec<T>,
    pub objective_offset: T,
    /// Inequality rows `A x <= b`.
    pub rows: DenseMatrix<T>,
    pub rhs: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Objective in the problem's own sense, offset included.
    pub objective: T,
    pub x: Vec<T>,
    /// Row multipliers `y >= 0` of the maximization form `max c~^T x`
    /// (`c~ = c` for maximize, `-c` for minimize).
    pub row_duals: Vec<T>,
    /// `c~ - A^T y`; nonpositive at lower bounds, nonnegative at upper bounds.
    pub reduced_costs: Vec<T>,
    pub active_rows: Vec<usize>,
    pub at_lower: Vec<usize>,
    pub at_upper: Vec<usize>,
    pub iterations: usize,
    /// For infeasible problems: the row most violated by the phase-1 point.
    pub most_violated: Option<(usize, T)>,
    /// Whether `x` satisfies every constraint (meaningful on iteration limit).
    pub feasible: bool,
}

impl<T: Scalar> LpProblem<T> {
    pub fn new(sense: Sense, objective: Vec<T>, lower: Vec<T>, upper: Vec<T>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            objective_offset: T::zero(),
            rows: DenseMatrix::zeros(0, n),
            rhs: Vec::new(),
            lower,
            upper,
        }
    }

    pub fn with_rows(mut self, rows: DenseMatrix<T>, rhs: Vec<T>) -> Self {
        self.rows = rows;
        self.rhs = rhs;
        self
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        let dim = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(LpError::Dimension { what, expected, got })
            }
        };
        dim("lower bounds", n, self.lower.len())?;
        dim("upper bounds", n, self.upper.len())?;
        dim("row matrix columns", n, self.rows.cols())?;
        dim("right-hand side", self.rows.rows(), self.rhs.len())?;
        if self.objective.iter().any(|v| !v.is_finite()) || !self.objective_offset.is_finite() {
            return Err(LpError::NonFinite("objective"));
        }
        for i in 0..self.n_rows() {
            if self.rows.row(i).iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite("constraint matrix"));
            }
        }
        if self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("right-hand side"));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !l.is_finite() || u.is_nan() || u == T::neg_infinity() {
                return Err(LpError::NonFinite("variable bounds"));
            }
            if l > u {
                return Err(LpError::EmptyBox { index: j, lower: l.to_f64_lossy(), upper: u.to_f64_lossy() });
            }
        }
        Ok(())
    }

    fn max_form_objective(&self) -> Vec<T> {
        match self.sense {
            Sense::Maximize => self.objective.clone(),
            Sense::Minimize => self.objective.iter().map(|&c| -c).collect(),
        }
    }

    pub fn evaluate(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(&c, &v)| c * v).sum::<T>() + self.objective_offset
    }

    /// Largest violation of rows and bounds at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for i in 0..self.n_rows() {
            let ax: T = self.rows.row(i).iter().zip(x).map(|(&a, &v)| a * v).sum();
            worst = worst.max(ax - self.rhs[i]);
        }
        for j in 0..self.n_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Structural(usize),
    Slack(usize),
    Artificial,
}

struct Tableau<T> {
    m: usize,
    ncols: usize,
    /// `B^-1 [A_shifted | I | artificial]`, row-major.
    t: Vec<T>,
    /// Current values of the basic variables.
    beta: Vec<T>,
    basis: Vec<usize>,
    in_basis: Vec<Option<usize>>,
    at_upper: Vec<bool>,
    /// Upper bound of each (shifted) column; lower is always zero.
    range: Vec<T>,
    roles: Vec<Role>,
    locked: Vec<bool>,
    iterations: usize,
    max_iter: usize,
    pivot_tol: T,
    feas_tol: T,
}

enum RunOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl<T: Scalar> Tableau<T> {
    fn build(p: &LpProblem<T>, max_iter: usize) -> Self {
        let (m, n) = (p.n_rows(), p.n_vars());
        let shifted_rhs: Vec<T> =
            (0..m).map(|i| p.rhs[i] - p.rows.row(i).iter().zip(&p.lower).map(|(&a, &l)| a * l).sum::<T>()).collect();
        let negative: Vec<usize> = (0..m).filter(|&i| shifted_rhs[i] < T::zero()).collect();
        let ncols = n + m + negative.len();

        let mut roles: Vec<Role> = (0..n).map(Role::Structural).collect();
        roles.extend((0..m).map(Role::Slack));
        roles.extend(std::iter::repeat_n(Role::Artificial, negative.len()));

        let mut range: Vec<T> = (0..n).map(|j| p.upper[j] - p.lower[j]).collect();
        range.extend(std::iter::repeat_n(T::infinity(), m + negative.len()));

        let mut t = vec![T::zero(); m * ncols];
        let mut beta = vec![T::zero(); m];
        let mut basis = vec![0; m];
        let mut art = n + m;
        for i in 0..m {
            let row = &mut t[i * ncols..(i + 1) * ncols];
            let sign = if shifted_rhs[i] < T::zero() { -T::one() } else { T::one() };
            for j in 0..n {
                row[j] = sign * p.rows[(i, j)];
            }
            row[n + i] = sign;
            beta[i] = sign * shifted_rhs[i];
            if sign < T::zero() {
                row[art] = T::one();
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = n + i;
            }
        }
        let mut in_basis = vec![None; ncols];
        for (i, &b) in basis.iter().enumerate() {
            in_basis[b] = Some(i);
        }
        Self {
            m,
            ncols,
            t,
            beta,
            basis,
            in_basis,
            at_upper: vec![false; ncols],
            range,
            roles,
            locked: vec![false; ncols],
            iterations: 0,
            max_iter,
            pivot_tol: T::lit(T::PIVOT_TOL),
            feas_tol: T::lit(T::FEAS_TOL),
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.t[i * self.ncols + j]
    }

    fn reduced_costs(&self, cost: &[T]) -> Vec<T> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == T::zero() {
                continue;
            }
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            for (dj, &a) in d.iter_mut().zip(row) {
                *dj = *dj - cb * a;
            }
        }
        for i in 0..self.m {
            d[self.basis[i]] = T::zero();
        }
        d
    }

    fn value_of(&self, col: usize) -> T {
        match self.in_basis[col] {
            Some(i) => self.beta[i],
            None if self.at_upper[col] => self.range[col],
            None => T::zero(),
        }
    }

    fn objective_value(&self, cost: &[T]) -> T {
        (0..self.ncols).map(|j| cost[j] * self.value_of(j)).sum()
    }

    fn pivot(&mut self, r: usize, e: usize, extra_rows: &mut [&mut Vec<T>]) {
        let nc = self.ncols;
        let piv = self.at(r, e);
        {
            let row = &mut self.t[r * nc..(r + 1) * nc];
            for v in row.iter_mut() {
                *v = *v / piv;
            }
        }
        let (before, rest) = self.t.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        for chunk in before.chunks_mut(nc).chain(after.chunks_mut(nc)) {
            let f = chunk[e];
            if f == T::zero() {
                continue;
            }
            for (v, &p) in chunk.iter_mut().zip(prow.iter()) {
                *v = *v - f * p;
            }
            chunk[e] = T::zero();
        }
        for d in extra_rows.iter_mut() {
            let f = d[e];
            if f != T::zero() {
                for (v, &p) in d.iter_mut().zip(prow.iter()) {
                    *v = *v - f * p;
                }
                d[e] = T::zero();
            }
        }
        let leaving = self.basis[r];
        self.in_basis[leaving] = None;
        self.basis[r] = e;
        self.in_basis[e] = Some(r);
    }

    /// Maximizes from the current basis; `d` holds the objective's reduced costs.
    fn run(&mut self, d: &mut Vec<T>, also_update: &mut [&mut Vec<T>]) -> RunOutcome {
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.max_iter {
                return RunOutcome::IterationLimit;
            }
            let bland = degenerate >= DEGENERATE_STREAK;

            let mut entering = None;
            let mut best = T::zero();
            for j in 0..self.ncols {
                if self.locked[j] || self.in_basis[j].is_some() {
                    continue;
                }
                let gain = if self.at_upper[j] { -d[j] } else { d[j] };
                if gain > self.feas_tol && (self.range[j] > T::zero()) {
                    if bland {
                        entering = Some(j);
                        break;
                    }
                    if gain > best {
                        best = gain;
                        entering = Some(j);
                    }
                }
            }
            let Some(e) = entering else {
                return RunOutcome::Optimal;
            };
            let dir = if self.at_upper[e] { -T::one() } else { T::one() };

            // Ratio test over basic variables, then the entering variable's own range.
            let mut step = self.range[e];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.m {
                let a = dir * self.at(i, e);
                if a.abs() <= self.pivot_tol {
                    continue;
                }
                let b = self.basis[i];
                let (limit, to_upper) = if a > T::zero() {
                    ((self.beta[i] / a).max(T::zero()), false)
                } else if self.range[b].is_finite() {
                    (((self.range[b] - self.beta[i]) / -a).max(T::zero()), true)
                } else {
                    continue;
                };
                let better = match leave {
                    _ if limit < step => true,
                    Some((r, _)) if limit == step => {
                        if bland {
                            b < self.basis[r]
                        } else {
                            let (cur, old) = (self.at(i, e).abs(), self.at(r, e).abs());
                            cur > old || (cur == old && b < self.basis[r])
                        }
                    }
                    _ => false,
                };
                if better {
                    step = limit;
                    leave = Some((i, to_upper));
                }
            }
            if step == T::infinity() {
                return RunOutcome::Unbounded;
            }

            self.iterations += 1;
            if step <= self.feas_tol {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for i in 0..self.m {
                let a = self.at(i, e);
                if a != T::zero() {
                    self.beta[i] = self.beta[i] - dir * step * a;
                }
            }
            match leave {
                None => {
                    // Bound flip: no basis change.
                    self.at_upper[e] = !self.at_upper[e];
                }
                Some((r, to_upper)) => {
                    let entering_value = if self.at_upper[e] { self.range[e] - step } else { step };
                    let leaving = self.basis[r];
                    self.at_upper[e] = false;
                    let mut rows: Vec<&mut Vec<T>> = Vec::with_capacity(also_update.len() + 1);
                    rows.push(d);
                    for x in also_update.iter_mut() {
                        rows.push(x);
                    }
                    self.pivot(r, e, &mut rows);
                    self.beta[r] = entering_value;
                    self.at_upper[leaving] = to_upper;
                    if self.roles[leaving] == Role::Artificial {
                        self.locked[leaving] = true;
                    }
                }
            }
        }
    }

    fn structural_values(&self, p: &LpProblem<T>) -> Vec<T> {
        (0..p.n_vars()).map(|j| p.lower[j] + self.value_of(j)).collect()
    }
}

/// Solves with a default iteration cap proportional to problem size.
pub fn solve_lp<T: Scalar>(problem: &LpProblem<T>) -> Result<LpSolution<T>, LpError> {
    let cap = 200 * (problem.n_vars() + problem.n_rows() + 10);
    solve_lp_with_limit(problem, cap)
}

pub fn solve_lp_with_limit<T: Scalar>(problem: &LpProblem<T>, max_iter: usize) -> Result<LpSolution<T>, LpError> {
    problem.validate()?;
    let (n, m) = (problem.n_vars(), problem.n_rows());
    let mut tab = Tableau::build(problem, max_iter);
    let ncols = tab.ncols;

    // Phase 1: maximize minus the sum of artificials.
    let has_artificial = tab.roles.contains(&Role::Artificial);
    if has_artificial {
        let cost1: Vec<T> =
            tab.roles.iter().map(|r| if *r == Role::Artificial { -T::one() } else { T::zero() }).collect();
        let mut d1 = tab.reduced_costs(&cost1);
        let outcome = tab.run(&mut d1, &mut []);
        let infeas = -tab.objective_value(&cost1);
        let scale = T::one() + problem.rhs.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        if matches!(outcome, RunOutcome::IterationLimit) {
            return Ok(finish(problem, &tab, LpStatus::IterationLimit, None));
        }
        if infeas > tab.feas_tol * scale {
            let x = tab.structural_values(problem);
            let most = (0..m)
                .map(|i| {
                    let ax: T = problem.rows.row(i).iter().zip(&x).map(|(&a, &v)| a * v).sum();
                    (i, ax - problem.rhs[i])
                })
                .fold(None::<(usize, T)>, |best, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            return Ok(finish(problem, &tab, LpStatus::Infeasible, most));
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tab.roles[tab.basis[r]] != Role::Artificial {
                continue;
            }
            let pick = (0..n + m)
                .filter(|&j| tab.in_basis[j].is_none())
                .max_by(|&a, &b| tab.at(r, a).abs().partial_cmp(&tab.at(r, b).abs()).unwrap().then(b.cmp(&a)));
            if let Some(j) = pick {
                if tab.at(r, j).abs() > tab.pivot_tol {
                    let value = tab.value_of(j);
                    let leaving = tab.basis[r];
                    tab.pivot(r, j, &mut []);
                    tab.beta[r] = value;
                    tab.at_upper[j] = false;
                    tab.at_upper[leaving] = false;
                }
            }
        }
        for j in 0..ncols {
            if tab.roles[j] == Role::Artificial {
                tab.locked[j] = true;
            }
        }
    }

    // Phase 2.
    let c = problem.max_form_objective();
    let mut cost2 = vec![T::zero(); ncols];
    cost2[..n].copy_from_slice(&c);
    let mut d2 = tab.reduced_costs(&cost2);
    match tab.run(&mut d2, &mut []) {
        RunOutcome::Optimal => {}
        RunOutcome::Unbounded => return Ok(finish(problem, &tab, LpStatus::Unbounded, None)),
        RunOutcome::IterationLimit => return Ok(finish(problem, &tab, LpStatus::IterationLimit, None)),
    }

    // Lexicographic refinement over the optimal face.
    lock_priced_out(&mut tab, &d2);
    for k in 0..n {
        let free = (0..ncols).any(|j| !tab.locked[j] && tab.in_basis[j].is_none() && tab.range[j] > T::zero());
        if !free {
            break;
        }
        let mut cost = vec![T::zero(); ncols];
        cost[k] = -T::one();
        let mut dk = tab.reduced_costs(&cost);
        match tab.run(&mut dk, &mut [&mut d2]) {
            RunOutcome::Optimal => lock_priced_out(&mut tab, &dk),
            RunOutcome::Unbounded => unreachable!("coordinate bounded below on the optimal face"),
            RunOutcome::IterationLimit => return Ok(finish(problem, &tab, LpStatus::IterationLimit, None)),
        }
    }

    let mut sol = finish(problem, &tab, LpStatus::Optimal, None);
    sol.row_duals = (0..m).map(|i| -d2[n + i]).collect();
    sol.reduced_costs = d2[..n].to_vec();
    Ok(sol)
}

fn lock_priced_out<T: Scalar>(tab: &mut Tableau<T>, d: &[T]) {
    for j in 0..tab.ncols {
        if tab.in_basis[j].is_none() && d[j].abs() > tab.feas_tol {
            tab.locked[j] = true;
        }
    }
}

fn finish<T: Scalar>(
    problem: &LpProblem<T>,
    tab: &Tableau<T>,
    status: LpStatus,
    most_violated: Option<(usize, T)>,
) -> LpSolution<T> {
    let x = tab.structural_values(problem);
    let tol = T::lit(1e-7);
    let feasible = problem.max_violation(&x) <= tol;
    let active_rows = (0..problem.n_rows())
        .filter(|&i| {
            let ax: T = problem.rows.row(i).iter().zip(&x).map(|(&a, &v)| a * v).sum();
            (ax - problem.rhs[i]).abs() <= tol
        })
        .collect();
    let at_lower = (0..problem.n_vars()).filter(|&j| (x[j] - problem.lower[j]).abs() <= tol).collect();
    let at_upper = (0..problem.n_vars()).filter(|&j| (x[j] - problem.upper[j]).abs() <= tol).collect();
    LpSolution {
        status,
        objective: problem.evaluate(&x),
        x,
        row_duals: Vec::new(),
        reduced_costs: Vec::new(),
        active_rows,
        at_lower,
        at_upper,
        iterations: tab.iterations,
        most_violated,
        feasible,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("solution is not optimal ({0:?})")]
    NotOptimal(LpStatus),
    #[error("primal infeasible by {0:e}")]
    Primal(f64),
    #[error("row {row} has negative multiplier {value:e}")]
    DualSign { row: usize, value: f64 },
    #[error("variable {var}: reduced cost {reduced:e} has the wrong sign for its position")]
    ReducedCost { var: usize, reduced: f64 },
    #[error("row {row} carries multiplier {dual:e} but has slack {slack:e}")]
    Complementarity { row: usize, dual: f64, slack: f64 },
}

/// Checks primal feasibility, dual sign conditions and complementary
/// slackness from scratch, using only the problem data and the reported
/// primal/dual vectors.
pub fn certify<T: Scalar>(problem: &LpProblem<T>, sol: &LpSolution<T>, tol: T) -> Result<(), CertificateError> {
    if sol.status != LpStatus::Optimal {
        return Err(CertificateError::NotOptimal(sol.status));
    }
    let viol = problem.max_violation(&sol.x);
    if viol > tol {
        return Err(CertificateError::Primal(viol.to_f64_lossy()));
    }
    let c = problem.max_form_objective();
    let mut reduced = c.clone();
    for (i, &y) in sol.row_duals.iter().enumerate() {
        if y < -tol {
            return Err(CertificateError::DualSign { row: i, value: y.to_f64_lossy() });
        }
        let ax: T = problem.rows.row(i).iter().zip(&sol.x).map(|(&a, &v)| a * v).sum();
        let slack = problem.rhs[i] - ax;
        if y > tol && slack > tol {
            return Err(CertificateError::Complementarity {
                row: i,
                dual: y.to_f64_lossy(),
                slack: slack.to_f64_lossy(),
            });
        }
        for (r, &a) in reduced.iter_mut().zip(problem.rows.row(i)) {
            *r = *r - y * a;
        }
    }
    for (j, &r) in reduced.iter().enumerate() {
        let at_lower = sol.x[j] - problem.lower[j] <= tol;
        let at_upper = problem.upper[j] - sol.x[j] <= tol;
        let ok = if r > tol {
            at_upper
        } else if r < -tol {
            at_lower
        } else {
            true
        };
        if !ok {
            return Err(CertificateError::ReducedCost { var: j, reduced: r.to_f64_lossy() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_matrix(rows: &[&[f64]]) -> DenseMatrix<f64> {
        let n = rows.first().map_or(0, |r| r.len());
        DenseMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
    }

    #[test]
    fn box_only_minimum() {
        let p = LpProblem::new(Sense::Minimize, vec![1.0], vec![0.0], vec![1.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.objective, 0.0);
        certify(&p, &s, 1e-9).unwrap();
    }

    #[test]
    fn single_binding_row() {
        let b = [1.0, 2.0, 3.0];
        let c = 4.0;
        let p = LpProblem::new(Sense::Maximize, vec![1.0; 3], b.iter().map(|v| -v).collect(), b.to_vec())
            .with_rows(row_matrix(&[&[1.0, 1.0, 1.0]]), vec![c]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - c).abs() < 1e-12);
        assert_eq!(s.active_rows, vec![0]);
        certify(&p, &s, 1e-9).unwrap();
    }

    #[test]
    fn needs_phase_one() {
        // x + y >= 2 written as -x - y <= -2, minimize x + 2y on [0, 5]^2.
        let p = LpProblem::new(Sense::Minimize, vec![1.0, 2.0], vec![0.0; 2], vec![5.0; 2])
            .with_rows(row_matrix(&[&[-1.0, -1.0]]), vec![-2.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        certify(&p, &s, 1e-9).unwrap();
    }

    #[test]
    fn detects_infeasibility() {
        let p = LpProblem::new(Sense::Minimize, vec![1.0], vec![0.0], vec![1.0])
            .with_rows(row_matrix(&[&[-1.0], &[1.0]]), vec![-3.0, 10.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert_eq!(s.most_violated.unwrap().0, 0);
    }

    #[test]
    fn detects_unboundedness() {
        let p = LpProblem::new(Sense::Maximize, vec![1.0, 0.0], vec![0.0; 2], vec![f64::INFINITY, 1.0])
            .with_rows(row_matrix(&[&[-1.0, 1.0]]), vec![0.5]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn lexicographic_tie_break() {
        // Every point on x + y = 1 (within the box) is optimal.
        let p = LpProblem::new(Sense::Maximize, vec![1.0, 1.0], vec![0.0; 2], vec![1.0; 2])
            .with_rows(row_matrix(&[&[1.0, 1.0]]), vec![1.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.x, vec![0.0, 1.0]);
        certify(&p, &s, 1e-9).unwrap();
    }

    #[test]
    fn zero_variable_problem() {
        let mut p = LpProblem::<f64>::new(Sense::Minimize, vec![], vec![], vec![]);
        p.objective_offset = -3.5;
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.objective, -3.5);
    }

    #[test]
    fn rejects_bad_input() {
        let p = LpProblem::new(Sense::Minimize, vec![1.0], vec![2.0], vec![1.0]);
        assert!(matches!(solve_lp(&p), Err(LpError::EmptyBox { .. })));
        let p = LpProblem::new(Sense::Minimize, vec![f64::NAN], vec![0.0], vec![1.0]);
        assert!(matches!(solve_lp(&p), Err(LpError::NonFinite(_))));
        let p = LpProblem::new(Sense::Minimize, vec![1.0], vec![f64::NEG_INFINITY], vec![1.0]);
        assert!(matches!(solve_lp(&p), Err(LpError::NonFinite(_))));
    }

    #[test]
    fn iteration_limit_is_flagged() {
        let p = LpProblem::new(Sense::Maximize, vec![1.0, 1.0, 1.0], vec![0.0; 3], vec![1.0; 3])
            .with_rows(row_matrix(&[&[1.0, 2.0, 1.0], &[2.0, 1.0, 1.0]]), vec![2.0, 2.0]);
        let s = solve_lp_with_limit(&p, 0).unwrap();
        assert_eq!(s.status, LpStatus::IterationLimit);
        assert!(s.feasible);
    }

    #[test]
    fn single_precision_instance() {
        let p = LpProblem::new(Sense::Maximize, vec![3.0_f32, 2.0], vec![0.0; 2], vec![4.0; 2])
            .with_rows(DenseMatrix::from_fn(1, 2, |_, _| 1.0_f32), vec![5.0]);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 14.0).abs() < 1e-4);
    }
}
