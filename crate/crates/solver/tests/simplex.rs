#![allow(clippy::needless_range_loop)]

use approx::assert_relative_eq;
use billopt_solver::{
    solve, solve_with_basis, Backend, LpProblem, Sense, SolverConfig, Status,
};
mod common;

use common::{random_lp, storage_lp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

#[test]
fn minimize_x_with_floor() {
    let mut lp = LpProblem::<f64>::new("floor");
    let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
    lp.add_row("r", vec![(x, 1.0)], Sense::Ge, 3.0);
    let s = solve(&lp, &cfg()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_relative_eq!(s.values[0], 3.0, epsilon = 1e-9);
    assert_relative_eq!(s.objective, 3.0, epsilon = 1e-9);
}

#[test]
fn upper_bound_binding() {
    let mut lp = LpProblem::<f64>::new("cap");
    let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
    lp.add_row("r", vec![(x, 1.0)], Sense::Le, 5.0);
    let s = solve(&lp, &cfg()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_relative_eq!(s.values[0], 5.0, epsilon = 1e-9);
}

#[test]
fn detects_infeasible() {
    let mut lp = LpProblem::<f64>::new("inf");
    let x = lp.add_var("x", 0.0, 10.0, 1.0);
    let y = lp.add_var("y", 0.0, 10.0, 1.0);
    lp.add_row("a", vec![(x, 1.0), (y, 1.0)], Sense::Ge, 5.0);
    lp.add_row("b", vec![(x, 1.0), (y, 1.0)], Sense::Le, 4.0);
    assert_eq!(solve(&lp, &cfg()).unwrap().status, Status::Infeasible);
}

#[test]
fn detects_unbounded() {
    let mut lp = LpProblem::<f64>::new("unb");
    let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
    let y = lp.add_var("y", 0.0, f64::INFINITY, 0.0);
    lp.add_row("a", vec![(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
    assert_eq!(solve(&lp, &cfg()).unwrap().status, Status::Unbounded);
}

#[test]
fn free_variables_and_equalities() {
    // min |t| style: t >= x - 2, t >= 2 - x, x free, x = 7 - y, y in [0, 3].
    let mut lp = LpProblem::<f64>::new("abs");
    let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.0);
    let t = lp.add_var("t", f64::NEG_INFINITY, f64::INFINITY, 1.0);
    let y = lp.add_var("y", 0.0, 3.0, 0.0);
    lp.add_row("p", vec![(t, 1.0), (x, -1.0)], Sense::Ge, -2.0);
    lp.add_row("n", vec![(t, 1.0), (x, 1.0)], Sense::Ge, 2.0);
    lp.add_row("e", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 7.0);
    let s = solve(&lp, &cfg()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_relative_eq!(s.objective, 2.0, epsilon = 1e-9);
    assert_relative_eq!(s.values[0], 4.0, epsilon = 1e-9);
}

#[test]
fn no_rows() {
    let mut lp = LpProblem::<f64>::new("bounds");
    lp.add_var("a", -1.0, 2.0, 3.0);
    lp.add_var("b", -1.0, 2.0, -3.0);
    let s = solve(&lp, &cfg()).unwrap();
    assert_eq!(s.values, vec![-1.0, 2.0]);
    assert_relative_eq!(s.objective, -9.0);
}

#[test]
fn invalid_config_rejected() {
    let lp = LpProblem::<f64>::new("x");
    let mut c = cfg();
    c.feasibility_tolerance = 0.0;
    assert!(solve(&lp, &c).is_err());
    c.feasibility_tolerance = 1e-7;
    c.optimality_tolerance = -1.0;
    assert!(solve(&lp, &c).is_err());
}

#[test]
fn iteration_limit_is_numerical_failure() {
    let lp = random_lp(&mut ChaCha8Rng::seed_from_u64(9), 30, 40);
    let mut c = cfg();
    c.max_iterations = 2;
    let s = solve(&lp, &c).unwrap();
    assert!(matches!(s.status, Status::NumericalFailure(_)), "{:?}", s.status);
}

#[test]
fn single_precision_solve() {
    let mut lp = LpProblem::<f32>::new("f32");
    let x = lp.add_var("x", 0.0, 4.0, -1.0);
    let y = lp.add_var("y", 0.0, 4.0, -2.0);
    lp.add_row("r", vec![(x, 1.0), (y, 1.0)], Sense::Le, 5.0);
    let mut c = cfg();
    c.feasibility_tolerance = 1e-5;
    c.optimality_tolerance = 1e-5;
    let s = solve(&lp, &c).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert_relative_eq!(s.objective, -9.0, epsilon = 1e-4);
}

// ---------------------------------------------------------------- oracle

/// Exhaustive vertex enumeration for small box-bounded LPs: every choice of `n`
/// tight constraints (rows as equalities or variable bounds) is solved by
/// Gaussian elimination and kept if feasible.
fn vertex_oracle(lp: &LpProblem<f64>) -> Option<f64> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for r in &lp.rows {
        let mut a = vec![0.0; n];
        for &(v, c) in &r.terms {
            a[v.0] += c;
        }
        planes.push((a, r.rhs));
    }
    for (j, v) in lp.vars.iter().enumerate() {
        for b in [v.lower, v.upper] {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            planes.push((a, b));
        }
    }
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(n);
    fn rec(
        planes: &[(Vec<f64>, f64)],
        start: usize,
        n: usize,
        pick: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if pick.len() == n {
            visit(pick);
            return;
        }
        for k in start..planes.len() {
            pick.push(k);
            rec(planes, k + 1, n, pick, visit);
            pick.pop();
        }
    }
    let mut visit = |set: &[usize]| {
        let mut m: Vec<Vec<f64>> = set
            .iter()
            .map(|&k| {
                let mut row = planes[k].0.clone();
                row.push(planes[k].1);
                row
            })
            .collect();
        for c in 0..n {
            let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            if m[p][c].abs() < 1e-9 {
                return;
            }
            m.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|i| m[i][n] / m[i][i]).collect();
        if lp.max_violation(&x) <= 1e-7 {
            let obj = lp.objective_value(&x);
            if best.is_none_or(|b| obj < b) {
                best = Some(obj);
            }
        }
    };
    rec(&planes, 0, n, &mut pick, &mut visit);
    best
}

#[test]
fn random_small_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut optimal, mut infeasible) = (0, 0);
    for case in 0..400 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=4);
        let lp = random_lp(&mut rng, n, m);
        let s = solve(&lp, &cfg()).unwrap();
        match vertex_oracle(&lp) {
            Some(best) => {
                optimal += 1;
                assert_eq!(s.status, Status::Optimal, "case {case}: {lp:?}");
                assert!(
                    (s.objective - best).abs() <= 1e-7 * (1.0 + best.abs()),
                    "case {case}: solver {} vs oracle {best}",
                    s.objective
                );
                assert!(lp.max_violation(&s.values) <= 1e-7, "case {case}");
            }
            None => {
                infeasible += 1;
                assert_eq!(s.status, Status::Infeasible, "case {case}: {lp:?}");
            }
        }
    }
    assert!(optimal > 100 && infeasible > 20, "{optimal} / {infeasible}");
}

#[test]
fn deterministic_objective_bits() {
    let lp = storage_lp(200, 3);
    let a = solve(&lp, &cfg()).unwrap();
    let b = solve(&lp, &cfg()).unwrap();
    assert_eq!(a.status, Status::Optimal);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.values, b.values);
    assert!(lp.max_violation(&a.values) <= 1e-7);
}

#[test]
fn warm_start_reaches_same_optimum_faster() {
    let lp = storage_lp(300, 5);
    let cold = solve(&lp, &cfg()).unwrap();
    let mut changed = lp.clone();
    for r in changed.rows.iter_mut().filter(|r| r.name.starts_with("bal")) {
        r.rhs *= 1.03;
    }
    let base = solve(&changed, &cfg()).unwrap();
    let warm = solve_with_basis(&changed, &cfg(), cold.basis.as_ref()).unwrap();
    assert_eq!(warm.status, Status::Optimal);
    assert!((warm.objective - base.objective).abs() <= 1e-7 * base.objective.abs());
    assert!(warm.iterations < base.iterations, "{} vs {}", warm.iterations, base.iterations);

    // A basis of the wrong shape is ignored rather than trusted.
    let other = storage_lp(10, 1);
    let junk = solve(&other, &cfg()).unwrap().basis;
    let s = solve_with_basis(&lp, &cfg(), junk.as_ref()).unwrap();
    assert!((s.objective - cold.objective).abs() <= 1e-7 * cold.objective.abs());
}

#[test]
fn storage_lp_beats_idle_dispatch() {
    let lp = storage_lp(96, 11);
    let s = solve(&lp, &cfg()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    // Idle dispatch is feasible, so it bounds the optimum from above.
    let mut idle = vec![0.0; lp.num_vars()];
    let mut peak: f64 = 0.0;
    for r in lp.rows.iter().filter(|r| r.name.starts_with("bal")) {
        let net = r.terms[0].0;
        idle[net.0] = r.rhs;
        peak = peak.max(r.rhs);
    }
    for v in lp.vars.iter().enumerate().filter(|(_, v)| v.name.starts_with("soc")) {
        idle[v.0] = 50.0;
    }
    idle[0] = peak;
    assert!(lp.max_violation(&idle) <= 1e-9);
    assert!(s.objective <= lp.objective_value(&idle) + 1e-9);
}

#[test]
fn external_backend_missing_command_is_error() {
    let lp = storage_lp(4, 1);
    let mut c = cfg();
    c.backend = Backend::External {
        command: "/nonexistent/solver-binary".into(),
    };
    assert!(solve(&lp, &c).is_err());
}
