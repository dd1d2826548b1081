//! Independent oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::path::PathBuf;

use varflex::lp::LpProblem;
use varflex::{ErrorModel, NetworkModel, Sense};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn network(name: &str) -> NetworkModel {
    varflex::load_network(fixture(&format!("{name}.json"))).expect("fixture network loads")
}

pub fn fitted_model() -> ErrorModel {
    let records = varflex::forecast::read_history_csv(fixture("solar_history.csv")).unwrap();
    let pairs = varflex::forecast::clean_and_normalize(&records).unwrap();
    varflex::fit_error_model(&pairs, 12, 20).unwrap()
}

/// erf by its everywhere-positive series
/// `erf x = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (1 3 5 ... (2n+1))`.
pub fn erf_series(x: f64) -> f64 {
    if x < 0.0 {
        return -erf_series(-x);
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term > sum * 1e-18 {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / std::f64::consts::PI.sqrt() * (-x2).exp() * sum
}

pub fn phi_series(z: f64) -> f64 {
    0.5 * (1.0 + erf_series(z / std::f64::consts::SQRT_2))
}

/// Quantile by bisection on the series CDF.
pub fn quantile_bisect(p: f64) -> f64 {
    let (mut lo, mut hi) = (-9.0, 9.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi_series(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best objective over all basic feasible points: every choice of `n`
/// constraints (rows and bounds) made tight. `None` when no vertex is feasible.
pub fn vertex_enumeration(lp: &LpProblem<f64>) -> Option<f64> {
    let n = lp.n_vars();
    if n == 0 {
        return Some(lp.objective_offset);
    }
    let mut cons: Vec<(Vec<f64>, f64)> = (0..lp.n_rows()).map(|i| (lp.rows.row(i).to_vec(), lp.rhs[i])).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cons.push((e.clone(), lp.upper[j]));
        e[j] = -1.0;
        cons.push((e, -lp.lower[j]));
    }
    let m = cons.len();
    let mut best: Option<f64> = None;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = pick.iter().map(|&i| cons[i].0.clone()).collect();
        let b = pick.iter().map(|&i| cons[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            let ok = cons.iter().all(|(row, rhs)| {
                let lhs: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
                lhs <= rhs + 1e-9 * (1.0 + rhs.abs())
            });
            if ok {
                let v = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum::<f64>() + lp.objective_offset;
                best = Some(match (best, lp.sense) {
                    (None, _) => v,
                    (Some(b), Sense::Minimize) => b.min(v),
                    (Some(b), Sense::Maximize) => b.max(v),
                });
            }
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < m - n + i {
                break;
            }
        }
        pick[i] += 1;
        for k in i + 1..n {
            pick[k] = pick[k - 1] + 1;
        }
    }
}

/// Optimum of `max c.x` s.t. `a.x <= b`, `0 <= x <= u` with `a, c > 0`:
/// fill variables in decreasing `c/a` order (fractional knapsack).
pub fn knapsack_optimum(c: &[f64], a: &[f64], u: &[f64], b: f64) -> f64 {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| (c[j] / a[j]).total_cmp(&(c[i] / a[i])));
    let mut room = b;
    let mut value = 0.0;
    for i in order {
        let take = u[i].min(room / a[i]).max(0.0);
        value += c[i] * take;
        room -= a[i] * take;
    }
    value
}

/// Inverse by Gauss-Jordan, one right-hand side per column.
pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve_square(a.to_vec(), e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}
