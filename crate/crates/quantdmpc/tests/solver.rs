mod common;

use nalgebra::{DMatrix, DVector};
use quantdmpc::netqp::{AffineBoxSet, Ellipsoid, LocalConstraintSet};
use quantdmpc::oracle;
use quantdmpc::quant::QuantizedMessage;
use quantdmpc::solver::{
    inner_solve, project, AffineMethod, NoObserver, Observer, ProjectionOptions, QuantizerSettings, Schedule, SolverConfig,
    SolverState,
};
use quantdmpc::Error;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle_projection(set: &LocalConstraintSet, x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    oracle::solve_qp(&DMatrix::identity(n, n), &(-x), &[(0, set)]).unwrap()
}

#[test]
fn projections_match_the_conic_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for method in [AffineMethod::Newton, AffineMethod::Dykstra] {
        let opts = ProjectionOptions { method, sweeps: 20_000, ..ProjectionOptions::default() };
        for _ in 0..150 {
            let dim = rng.random_range(1..=6);
            let set = common::random_set(&mut rng, dim);
            let x = DVector::from_fn(dim, |_, _| rng.random_range(-4.0..4.0));
            let p = project(&set, &x, &opts).unwrap();
            let o = oracle_projection(&set, &x);
            assert!(set.violation(&p) <= 1e-8, "{method:?}: violation {}", set.violation(&p));
            assert!((&p - &o).norm() <= 1e-5 * (1.0 + x.norm()), "{method:?}: {p} vs {o}");
        }
    }
}

#[test]
fn affine_box_ellipsoid_projection_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..40 {
        let dim = 6;
        let lower = DVector::from_element(dim, -2.0);
        let upper = DVector::from_element(dim, 2.0);
        let x0 = DVector::from_fn(dim, |_, _| rng.random_range(-0.3..0.3));
        let a = DMatrix::from_fn(2, dim, |_, _| rng.random_range(-1.0..1.0));
        let b = &a * &x0;
        let affine = AffineBoxSet::new(a, b, lower, upper).unwrap();
        let shape = common::random_spd(&mut rng, 2, 0.5, 2.0);
        let center = DVector::from_vec(vec![x0[4], x0[5]]);
        let ell = Ellipsoid::new(vec![4, 5], center, shape, rng.random_range(0.05..0.5)).unwrap();
        let set = LocalConstraintSet::affine_box_ellipsoid(affine, ell).unwrap();
        let x = DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0));
        let p = project(&set, &x, &ProjectionOptions::default()).unwrap();
        let o = oracle_projection(&set, &x);
        assert!(set.violation(&p) <= 1e-7);
        assert!((&p - &o).norm() <= 1e-4, "{p} vs {o}");
    }
}

#[test]
fn schedules_give_identical_iterates() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let problem = common::random_problem(&mut rng, 5, 3);
    let zeta = common::random_parameter(&mut rng, &problem);
    let settings = QuantizerSettings { bits: 8, kappa: 0.99, c_alpha: 10.0, c_beta: 50.0 };
    let z0 = DVector::zeros(problem.dim());
    let mut out = Vec::new();
    for schedule in [Schedule::Sequential, Schedule::Parallel] {
        let config = SolverConfig { schedule, ..SolverConfig::quantized(&problem, 30, settings) };
        let mut state = SolverState::new(&problem, &z0, &zeta, &config.projection).unwrap();
        out.push(inner_solve(&problem, &config, &mut state, &zeta, None, &mut NoObserver).unwrap());
    }
    assert_eq!(out[0], out[1]);
    assert_eq!(out[0].bits_per_scalar, 8 * 31);
    let m = problem.sizes().iter().sum::<usize>() as u64;
    assert_eq!(out[0].variable_bits.iter().sum::<u64>(), 8 * 31 * m);
}

#[test]
fn refined_quantization_converges_for_any_bit_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let problem = common::random_problem(&mut rng, 4, 2);
    let zeta = common::random_parameter(&mut rng, &problem);
    let target = oracle::solve_centralized(&problem, &zeta).unwrap();
    let z0 = DVector::zeros(problem.dim());
    let kappa = 1.0 - 0.5 * problem.convexity_metadata().gamma;
    let mut errors = Vec::new();
    for bits in [4, 8, 16, 24] {
        let settings = QuantizerSettings { bits, kappa, c_alpha: 20.0, c_beta: 200.0 };
        let config = SolverConfig::quantized(&problem, 400, settings);
        let mut state = SolverState::new(&problem, &z0, &zeta, &config.projection).unwrap();
        let r = inner_solve(&problem, &config, &mut state, &zeta, Some(&target), &mut NoObserver).unwrap();
        assert!(problem.violation(&r.global_iterate()) <= 1e-7);
        errors.push(r.suboptimality.unwrap());
    }
    // The intervals shrink with the iterates, so even coarse lattices converge.
    assert!(errors.iter().all(|&e| e < 1e-6), "{errors:?}");
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let problem = common::random_problem(&mut rng, 3, 2);
    let zeta = common::random_parameter(&mut rng, &problem);
    let z0 = DVector::zeros(problem.dim());
    let gamma = problem.convexity_metadata().gamma;
    let mut state = SolverState::new(&problem, &z0, &zeta, &ProjectionOptions::default()).unwrap();

    let mut bad = SolverConfig::pass_through(&problem, 5);
    bad.step_size = 2.0 / problem.convexity_metadata().lipschitz;
    assert!(matches!(inner_solve(&problem, &bad, &mut state, &zeta, None, &mut NoObserver), Err(Error::InvalidParameter(_))));

    let low = QuantizerSettings { bits: 4, kappa: 1.0 - gamma - 1e-3, c_alpha: 1.0, c_beta: 1.0 };
    let cfg = SolverConfig::quantized(&problem, 5, low);
    assert!(matches!(inner_solve(&problem, &cfg, &mut state, &zeta, None, &mut NoObserver), Err(Error::InvalidParameter(_))));

    let ok = QuantizerSettings { bits: 10, kappa: 0.999, c_alpha: 1.0, c_beta: 1.0 };
    let mut cfg = SolverConfig::quantized(&problem, 9, ok);
    cfg.bit_budget = Some(89);
    assert!(matches!(
        inner_solve(&problem, &cfg, &mut state, &zeta, None, &mut NoObserver),
        Err(Error::BudgetViolation { required: 90, budget: 89 })
    ));
}

struct Truncate;

impl Observer for Truncate {
    fn on_message(&mut self, msg: &mut QuantizedMessage) {
        if let quantdmpc::quant::Payload::Lattice { indices, .. } = &mut msg.payload {
            indices.pop();
        }
    }
}

#[test]
fn corrupted_messages_are_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let problem = common::random_problem(&mut rng, 3, 2);
    let zeta = common::random_parameter(&mut rng, &problem);
    let z0 = DVector::zeros(problem.dim());
    let settings = QuantizerSettings { bits: 6, kappa: 0.999, c_alpha: 5.0, c_beta: 5.0 };
    let config = SolverConfig::quantized(&problem, 3, settings);
    let mut state = SolverState::new(&problem, &z0, &zeta, &config.projection).unwrap();
    let r = inner_solve(&problem, &config, &mut state, &zeta, None, &mut Truncate);
    assert!(matches!(r, Err(Error::StateMismatch(_))), "{r:?}");
}
