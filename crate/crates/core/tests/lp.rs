mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varflex::linalg::DenseMatrix;
use varflex::lp::LpProblem;
use varflex::{certify, solve_lp, LpStatus, Sense};

/// Random LP with a known interior point so it is feasible.
fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LpProblem<f64> {
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
    let x0: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| l + (u - l) * rng.random_range(0.2..0.8)).collect();
    let rows = DenseMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let rhs = (0..m)
        .map(|i| rows.row(i).iter().zip(&x0).map(|(a, x)| a * x).sum::<f64>() + rng.random_range(0.0..0.5))
        .collect();
    let sense = if rng.random_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
    let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    LpProblem::new(sense, c, lower, upper).with_rows(rows, rhs)
}

#[test]
fn matches_vertex_enumeration_on_seeded_lps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..60 {
        let n = 2 + case % 5;
        let m = 1 + (case * 7) % 9;
        let lp = random_lp(&mut rng, n, m);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal, "case {case}");
        certify(&lp, &sol, 1e-7).unwrap_or_else(|e| panic!("case {case}: {e}"));
        let best = common::vertex_enumeration(&lp).expect("feasible");
        assert!((sol.objective - best).abs() < 1e-6, "case {case}: {} vs {best}", sol.objective);
    }
}

#[test]
fn twenty_variable_knapsacks() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..20 {
        let n = 20;
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
        let cap = 0.4 * a.iter().zip(&u).map(|(a, u)| a * u).sum::<f64>();
        let lp = LpProblem::new(Sense::Maximize, c.clone(), vec![0.0; n], u.clone())
            .with_rows(DenseMatrix::from_fn(1, n, |_, j| a[j]), vec![cap]);
        let sol = solve_lp(&lp).unwrap();
        certify(&lp, &sol, 1e-7).unwrap();
        let best = common::knapsack_optimum(&c, &a, &u, cap);
        assert!((sol.objective - best).abs() < 1e-9, "case {case}");
    }
}

#[test]
fn infeasible_and_unbounded_verdicts() {
    // x0 + x1 <= -1 with x >= 0.
    let lp = LpProblem::new(Sense::Minimize, vec![1.0, 1.0], vec![0.0; 2], vec![5.0; 2])
        .with_rows(DenseMatrix::from_fn(1, 2, |_, _| 1.0), vec![-1.0]);
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.status, LpStatus::Infeasible);
    assert_eq!(sol.most_violated.map(|(r, _)| r), Some(0));

    let lp = LpProblem::new(Sense::Maximize, vec![1.0], vec![0.0], vec![f64::INFINITY]);
    assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
}

#[test]
fn degenerate_vertex_terminates() {
    // Many rows through the optimal vertex.
    let n = 3;
    let rows = DenseMatrix::from_fn(8, n, |i, j| if (i + j) % 3 == 0 { 1.0 } else { 0.5 });
    let rhs = (0..8).map(|i| rows.row(i).iter().sum::<f64>()).collect();
    let lp = LpProblem::new(Sense::Maximize, vec![1.0; n], vec![0.0; n], vec![10.0; n]).with_rows(rows, rhs);
    let sol = solve_lp(&lp).unwrap();
    certify(&lp, &sol, 1e-9).unwrap();
    assert!((sol.objective - 3.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn optimal_solutions_certify(seed in any::<u64>(), n in 1usize..8, m in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng, n, m);
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(lp.max_violation(&sol.x) <= 1e-7);
        prop_assert!(certify(&lp, &sol, 1e-7).is_ok());
    }

    #[test]
    fn solve_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng, 5, 6);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        prop_assert_eq!(a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
