use nalgebra::DVector;
use quantdmpc::design::QuantizationDesign;
use quantdmpc::dmpc::formation_references;
use quantdmpc::sim::benchmark::{benchmark_random_qp, BenchmarkConfig};
use quantdmpc::sim::{inject_disturbance, run_closed_loop, DisturbanceSpec, FormationScenario, PlantKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fine design for the Riccati-terminal scenarios.
fn fine_design() -> QuantizationDesign<f64> {
    QuantizationDesign::manual(0.9, 25, 4, 100.0, 100.0)
}

/// Design for the stage-terminal scenarios.
fn design() -> QuantizationDesign<f64> {
    QuantizationDesign::manual(0.51, 20, 5, 65.85, 66.23)
}

#[test]
fn formation_at_rest_stays_at_rest() {
    let mut s = FormationScenario::convergence();
    let d = &s.dmpc;
    s.initial_positions = formation_references(3, d.leader, d.setpoint, &d.edges).unwrap();
    s.steps = 10;
    s.track_suboptimality = false;
    s.initial_tolerance = 1e-6;
    let (_, log) = run_closed_loop(&s, Some(fine_design())).unwrap();
    assert_eq!(log.len(), 10);
    for r in &log.records {
        for u in &r.inputs {
            assert!(u.norm() < 1e-5, "step {}: {u}", r.t);
        }
        for e in &r.formation_errors {
            assert!(e.iter().all(|v| v.abs() < 1e-5));
        }
    }
}

#[test]
fn disturbed_runs_are_reproducible_per_seed() {
    let mut s = FormationScenario::disturbed();
    s.steps = 5;
    s.track_suboptimality = false;
    let (_, a) = run_closed_loop(&s, Some(design())).unwrap();
    let (_, b) = run_closed_loop(&s, Some(design())).unwrap();
    assert_eq!(a, b);
    s.seed += 1;
    let (_, c) = run_closed_loop(&s, Some(design())).unwrap();
    assert_ne!(a.final_states, c.final_states);
}

#[test]
fn undisturbed_formation_converges() {
    let mut s = FormationScenario::convergence();
    s.steps = 250;
    s.track_suboptimality = false;
    s.plant = PlantKind::Linear;
    let (_, log) = run_closed_loop(&s, Some(fine_design())).unwrap();
    let bands: Vec<f64> = [10.0, 14.0, 18.0, 22.0].iter().map(|&t| log.formation_band(t)).collect();
    assert!(bands.windows(2).all(|w| w[1] < w[0]), "{bands:?}");
    assert!(bands[3] < 1e-4, "{bands:?}");
    assert!(log.max_input_violation() <= 1e-8);
}

#[test]
fn disturbance_stays_inside_its_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let spec = DisturbanceSpec { position: 0.1, angle: 0.03, ..DisturbanceSpec::default() };
    let x = DVector::zeros(12);
    for _ in 0..1000 {
        let y = inject_disturbance(&x, &spec, &mut rng);
        assert!((0..3).all(|k| y[k].abs() <= 0.1));
        assert!((3..6).all(|k| y[k].abs() <= 0.03));
        assert!((6..12).all(|k| y[k] == 0.0));
    }
}

#[test]
fn small_benchmark_is_deterministic_and_writes_csv() {
    let config = BenchmarkConfig { bits: vec![8, 20], kappa_stride: 20, steps: 5, rho_samples: 10, ..BenchmarkConfig::default() };
    let a = benchmark_random_qp(&config, 5).unwrap();
    let b = benchmark_random_qp(&config, 5).unwrap();
    assert_eq!(a, b);
    assert!(!a.rows.is_empty());
    let dir = std::env::temp_dir().join(format!("quantdmpc-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("b.csv");
    a.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), a.rows.len() + 1);
    assert!(text.lines().next().unwrap().starts_with("instance,mode,kappa,bits"));
    std::fs::remove_dir_all(&dir).unwrap();
}
