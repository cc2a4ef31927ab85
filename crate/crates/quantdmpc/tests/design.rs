use quantdmpc::design::{
    interval_slack, iterations_sufficient, kappa_grid, min_iterations, optimize_design, solve_subproblem, subproblem_constraints,
    BoundParams, CoefficientReading, DesignOptions, KappaGrid,
};
use quantdmpc::Error;

fn reference_params() -> BoundParams<f64> {
    BoundParams {
        agents: 6,
        degree: 2,
        max_local_dim: 2,
        lipschitz: 21.99,
        lipschitz_max: 16.54,
        strong_convexity: 15.93,
        rho: 8.42,
        step_size: 0.9 / 21.99,
        budget: 100,
    }
}

/// Smallest `ε ≥ 0` meeting all three rows for fixed intervals, or `None`.
fn epsilon_for(rows: &[([f64; 3], f64); 3], ca: f64, cb: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for (a, r) in rows {
        let rest = r - a[1] * ca - a[2] * cb;
        if a[0] < 0.0 {
            lo = lo.max(rest / a[0]);
        } else if a[0] > 0.0 {
            hi = hi.min(rest / a[0]);
        } else if rest < 0.0 {
            return None;
        }
    }
    (lo <= hi).then_some(lo)
}

#[test]
fn vertex_enumeration_matches_a_mesh_search() {
    let params = reference_params();
    for &(kappa, bits) in &[(0.3, 14u32), (0.5, 10), (0.8, 20), (0.45, 25)] {
        let k = params.budget / bits;
        let rows = subproblem_constraints(&params, kappa, bits, k, CoefficientReading::Ratio).unwrap();
        let lp = solve_subproblem(&params, kappa, bits, k, CoefficientReading::Ratio).unwrap();
        let (sa, sb) = interval_slack(&params, kappa, bits, &lp, CoefficientReading::Ratio).unwrap();
        assert!(sa >= -1e-9 * lp.c_alpha && sb >= -1e-9 * lp.c_beta);
        let mut best = f64::INFINITY;
        let n = 300;
        for i in 0..=n {
            for j in 0..=n {
                let ca = 2.0 * lp.c_alpha * i as f64 / n as f64;
                let cb = 2.0 * lp.c_beta * j as f64 / n as f64;
                if let Some(e) = epsilon_for(&rows, ca, cb) {
                    best = best.min(e);
                }
            }
        }
        assert!(best >= lp.epsilon * (1.0 - 1e-9), "κ {kappa} n {bits}: mesh {best} below LP {}", lp.epsilon);
        assert!(best <= lp.epsilon * 1.05, "κ {kappa} n {bits}: mesh {best} far above LP {}", lp.epsilon);
    }
}

#[test]
fn kappa_grid_sizes_follow_the_resolution() {
    let gamma = 0.3;
    for grid in [KappaGrid::Offset, KappaGrid::Multiples] {
        let coarse = kappa_grid(gamma, &DesignOptions { resolution: 0.02, kappa_grid: grid, ..DesignOptions::default() }).unwrap();
        let fine = kappa_grid(gamma, &DesignOptions { resolution: 0.01, kappa_grid: grid, ..DesignOptions::default() }).unwrap();
        assert!(coarse.iter().all(|&k| k > 1.0 - gamma && k < 1.0));
        assert!(fine.iter().all(|&k| k > 1.0 - gamma && k < 1.0));
        assert!(fine.len() == 2 * coarse.len() || fine.len() == 2 * coarse.len() + 1, "{grid:?}: {} vs {}", fine.len(), coarse.len());
    }
    let offset = kappa_grid(gamma, &DesignOptions { resolution: 0.01, ..DesignOptions::default() }).unwrap();
    assert_eq!(offset.len(), 29);
    assert!(kappa_grid(gamma, &DesignOptions { resolution: 0.0, ..DesignOptions::default() }).is_err());
}

#[test]
fn min_iterations_is_the_smallest_sufficient_count() {
    for &(eps, rho, delta, kappa) in &[(1e-3, 8.0, 0.1, 0.3), (0.5, 1.0, 0.0, 0.9), (1e-8, 100.0, 3.0, 0.99), (10.0, 1.0, 1.0, 0.5)] {
        let k = min_iterations(eps, rho, delta, kappa).unwrap();
        assert!(iterations_sufficient(eps, rho, delta, kappa, k));
        assert!(k == 0 || !iterations_sufficient(eps, rho, delta, kappa, k - 1));
    }
    assert!(min_iterations(0.0, 1.0, 0.0, 0.5).is_err());
    assert!(min_iterations(1.0, 1.0, 0.0, 1.0).is_err());
}

#[test]
fn optimum_is_the_grid_minimum() {
    let params = reference_params();
    let search = optimize_design(&params, &DesignOptions::default()).unwrap();
    let min = search.grid.iter().filter_map(|g| g.epsilon).fold(f64::INFINITY, f64::min);
    assert_eq!(search.best.epsilon, min);
    assert!(search.best.feasible);
    assert!(search.best.bits * search.best.iterations <= params.budget);
    assert_eq!(search.grid.len(), search.kappas.len() * params.budget as usize);
}

#[test]
fn single_precision_search_agrees_with_double() {
    let p = reference_params();
    let p32 = BoundParams::<f32> {
        agents: p.agents,
        degree: p.degree,
        max_local_dim: p.max_local_dim,
        lipschitz: p.lipschitz as f32,
        lipschitz_max: p.lipschitz_max as f32,
        strong_convexity: p.strong_convexity as f32,
        rho: p.rho as f32,
        step_size: p.step_size as f32,
        budget: p.budget,
    };
    let opts = DesignOptions { resolution: 0.05, ..DesignOptions::default() };
    let a = optimize_design(&p, &opts).unwrap().best;
    let b = optimize_design(&p32, &opts).unwrap().best;
    assert_eq!(a.bits, b.bits);
    assert!((a.kappa - b.kappa as f64).abs() < 1e-5);
    assert!(((a.epsilon - b.epsilon as f64) / a.epsilon).abs() < 1e-2);
}

#[test]
fn tiny_budget_has_no_feasible_design() {
    let params = BoundParams { budget: 2, ..reference_params() };
    assert!(matches!(optimize_design(&params, &DesignOptions::default()), Err(Error::NoFeasibleDesign)));
}

#[test]
fn invalid_parameters_are_rejected() {
    let params = BoundParams { strong_convexity: 30.0, ..reference_params() };
    assert!(optimize_design(&params, &DesignOptions::default()).is_err());
    let params = BoundParams { step_size: 1.0, ..reference_params() };
    assert!(optimize_design(&params, &DesignOptions::default()).is_err());
}
