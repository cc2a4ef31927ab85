use nalgebra::{DMatrix, DVector};
use quantdmpc::auv::{linearize_discretize, AuvParams};
use quantdmpc::dmpc::{
    build_distributed_qp, dare_residual, formation_references, riccati_terminal, DmpcSpec, FormationEdge, Layout, TerminalWeight,
};
use quantdmpc::oracle;
use quantdmpc::Error;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference_state(p: [f64; 3]) -> DVector<f64> {
    let mut x = DVector::zeros(12);
    x.rows_mut(0, 3).copy_from_slice(&p);
    x
}

#[test]
fn layout_round_trip() {
    let layout = Layout { state_dim: 12, input_dim: 8, horizon: 10 };
    assert_eq!(layout.dim(), 12 * 11 + 8 * 10);
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let states: Vec<DVector<f64>> = (0..11).map(|_| DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0))).collect();
    let inputs: Vec<DVector<f64>> = (0..10).map(|_| DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0))).collect();
    let z = layout.pack(&states, &inputs).unwrap();
    let (s, u) = layout.unpack(&z).unwrap();
    assert_eq!((s, u.clone()), (states, inputs));
    assert_eq!(layout.first_input(&z).unwrap(), u[0]);
    assert!(matches!(layout.pack(&[], &[]), Err(Error::LayoutError(_))));
}

#[test]
fn riccati_solution_satisfies_the_dare() {
    let model = linearize_discretize(&AuvParams::default()).unwrap();
    let spec = DmpcSpec::three_auv();
    let p = riccati_terminal(&model.a, &model.b, &spec.state_weight, &spec.input_weight).unwrap();
    let res = dare_residual(&model.a, &model.b, &spec.state_weight, &spec.input_weight, &p);
    assert!(res < 1e-8 * p.norm(), "residual {res}");
    // P − Q is positive semidefinite.
    let d = &p - &spec.state_weight;
    assert!(d.symmetric_eigenvalues().min() > -1e-8 * p.norm());
}

#[test]
fn optimal_plan_obeys_the_prediction_model() {
    let model = linearize_discretize(&AuvParams::default()).unwrap();
    let spec = DmpcSpec::three_auv();
    let models = vec![model.clone(); 3];
    let states = vec![reference_state([-8.0, 0.5, -0.5]), reference_state([-7.0, 1.5, 1.0]), reference_state([-8.0, -0.5, -1.0])];
    let (qp, zeta) = build_distributed_qp(&spec, &models, &states).unwrap();
    let layout = qp.layout();
    assert_eq!(qp.problem().dim(), 3 * layout.dim());
    assert!(qp.problem().convexity_metadata().strong_convexity > 0.0);
    let w = oracle::solve_centralized(qp.problem(), &zeta).unwrap();
    let z = qp.global_to_physical(&w).unwrap();
    for i in 0..3 {
        let zi = z.rows(i * layout.dim(), layout.dim()).into_owned();
        let (xs, us) = layout.unpack(&zi).unwrap();
        assert!((&xs[0] - &states[i]).norm() < 1e-6);
        for l in 0..layout.horizon {
            assert!((&xs[l + 1] - model.step(&xs[l], &us[l])).norm() < 1e-5, "agent {i} step {l}");
            assert!(us[l].iter().all(|&v| v.abs() <= 2.0 + 1e-6));
        }
        let u0 = qp.extract_control(i, &w.rows(i * layout.dim(), layout.dim()).into_owned()).unwrap();
        assert!((u0 - &us[0]).norm() < 1e-12);
    }
}

#[test]
fn plan_is_idle_at_the_formation() {
    let model = linearize_discretize(&AuvParams::default()).unwrap();
    for terminal in [TerminalWeight::Stage, TerminalWeight::Riccati] {
        let spec = DmpcSpec { terminal_weight: terminal, ..DmpcSpec::three_auv() };
        let refs = formation_references(3, spec.leader, spec.setpoint, &spec.edges).unwrap();
        let states: Vec<_> = refs.iter().map(|&p| reference_state(p)).collect();
        let (qp, zeta) = build_distributed_qp(&spec, &vec![model.clone(); 3], &states).unwrap();
        let w = oracle::solve_centralized(qp.problem(), &zeta).unwrap();
        for i in 0..3 {
            let u0 = qp.extract_control(i, &w.rows(i * qp.layout().dim(), qp.layout().dim()).into_owned()).unwrap();
            assert!(u0.norm() < 1e-6, "{terminal:?} agent {i}: {u0}");
        }
    }
}

#[test]
fn scaling_round_trips() {
    let model = linearize_discretize(&AuvParams::default()).unwrap();
    let spec = DmpcSpec::three_auv();
    let states = vec![DVector::zeros(12); 3];
    let (qp, _) = build_distributed_qp(&spec, &vec![model; 3], &states).unwrap();
    let z = DVector::from_fn(qp.layout().dim(), |k, _| k as f64 * 0.01 - 1.0);
    let back = qp.to_physical(1, &qp.to_scaled(1, &z).unwrap()).unwrap();
    assert!((back - z).norm() < 1e-12);
}

#[test]
fn inconsistent_formations_are_rejected() {
    let edges = vec![
        FormationEdge { from: 0, to: 1, offset: [1.0, 0.0, 0.0], weight: 1.0 },
        FormationEdge { from: 1, to: 2, offset: [1.0, 0.0, 0.0], weight: 1.0 },
        FormationEdge { from: 0, to: 2, offset: [1.0, 0.0, 0.0], weight: 1.0 },
    ];
    assert!(formation_references(3, 0, [0.0; 3], &edges).is_err());
    assert!(formation_references(4, 0, [0.0; 3], &edges[..2]).is_err());
    let model = linearize_discretize(&AuvParams::default()).unwrap();
    let spec = DmpcSpec { horizon: 0, ..DmpcSpec::three_auv() };
    assert!(build_distributed_qp(&spec, &vec![model; 3], &vec![DVector::zeros(12); 3]).is_err());
    let spec = DmpcSpec { input_weight: DMatrix::zeros(8, 8), ..DmpcSpec::three_auv() };
    let model = linearize_discretize(&AuvParams::default()).unwrap();
    assert!(build_distributed_qp(&spec, &vec![model; 3], &vec![DVector::zeros(12); 3]).is_err());
}
