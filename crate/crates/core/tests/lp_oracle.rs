mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vmc_core::lp::{solve_lp, verify_kkt, LinearProgram, LpStatus, Relation, VarStatus};

fn dual_objective(lp: &LinearProgram, sol: &vmc_core::lp::LpSolution) -> f64 {
    let mut d = 0.0;
    for (j, &r) in sol.reduced_costs.iter().enumerate() {
        d += r * sol.primal[j];
    }
    for (i, row) in lp.constraints.iter().enumerate() {
        d += sol.duals[i] * row.activity(&sol.primal);
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn random_feasible_lps_satisfy_kkt(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = common::random_feasible_lp(&mut rng, 50, 40, false);
        let sol = solve_lp(&lp).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let v = verify_kkt(&lp, &sol);
        prop_assert!(v.is_empty(), "{:?}", v);
        let gap = (sol.objective - dual_objective(&lp, &sol)).abs();
        prop_assert!(gap <= 1e-6 * sol.objective.abs().max(1.0));
    }

    #[test]
    fn small_lps_match_vertex_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = common::random_feasible_lp(&mut rng, 6, 6, true);
        let sol = solve_lp(&lp).unwrap();
        let oracle = common::vertex_enumeration_min(&lp).expect("feasible by construction");
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!((sol.objective - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "solver {} oracle {}", sol.objective, oracle);
    }

    #[test]
    fn nonbasic_reduced_cost_signs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = common::random_feasible_lp(&mut rng, 30, 20, false);
        let sol = solve_lp(&lp).unwrap();
        let scale = lp.objective.iter().fold(1.0f64, |s, c| s.max(c.abs()));
        for j in 0..lp.num_vars {
            match sol.basis[j] {
                VarStatus::AtLower => prop_assert!(sol.reduced_costs[j] >= -1e-6 * scale),
                VarStatus::AtUpper => prop_assert!(sol.reduced_costs[j] <= 1e-6 * scale),
                _ => {}
            }
        }
    }

    #[test]
    fn resolving_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = common::random_feasible_lp(&mut rng, 30, 25, false);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}

#[test]
fn two_server_relaxation_matches_vertex_enumeration() {
    // one VM type (CPU 1, RAM 1, BW 10), two servers (CPU 4, RAM 8, BW 1000),
    // three old VMs on server 0. Variables: x0, x1, z0, z1, y0, y1.
    let c_run = 108.0;
    let c_assign = 18.0;
    let mut lp = LinearProgram::new(6)
        .with_objective(vec![c_assign, c_assign, c_assign, c_assign, c_run, c_run])
        .with_bounds(vec![0.0; 6], vec![3.0, 3.0, 3.0, 3.0, 1.0, 1.0]);
    for (u, s) in [(1.0, 4.0), (1.0, 8.0), (10.0, 1000.0)] {
        for j in 0..2 {
            lp.add_constraint(vec![(j, u), (4 + j, -s)], Relation::Le, 0.0);
        }
    }
    lp.add_constraint(vec![(0, 1.0), (2, -1.0)], Relation::Le, 3.0);
    lp.add_constraint(vec![(1, 1.0), (3, -1.0)], Relation::Le, 0.0);
    lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 3.0);
    let sol = solve_lp(&lp).unwrap();
    let oracle = common::vertex_enumeration_min(&lp).unwrap();
    assert!((sol.objective - oracle).abs() <= 1e-6);
    assert!(verify_kkt(&lp, &sol).is_empty());
}
