mod common;

use nalgebra::{DMatrix, DVector};
use quantdmpc::config::ProblemConfig;
use quantdmpc::netqp::{DistributedProblem, Graph, LocalConstraintSet, LocalCost};
use quantdmpc::Error;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    // Repeated relaxation of the reachability set from vertex 0.
    let mut seen = vec![false; n];
    seen[0] = true;
    loop {
        let mut changed = false;
        for &(a, b) in edges {
            if seen[a] != seen[b] {
                seen[a] = true;
                seen[b] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    seen.iter().all(|&s| s)
}

#[test]
fn connectivity_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.random_range(1..=7);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random::<f64>() < 0.3 {
                    edges.push((a, b));
                }
            }
        }
        let g = Graph::new(n, &edges).unwrap();
        assert_eq!(g.is_connected(), brute_connected(n, &edges), "{n} {edges:?}");
    }
}

#[test]
fn graph_rejects_bad_edges() {
    assert!(matches!(Graph::new(3, &[(0, 0)]), Err(Error::InvalidGraph(_))));
    assert!(matches!(Graph::new(3, &[(0, 3)]), Err(Error::InvalidGraph(_))));
    assert!(matches!(Graph::from_one_indexed(3, &[(0, 1)]), Err(Error::InvalidGraph(_))));
    let g = Graph::from_one_indexed(3, &[(1, 2), (2, 3)]).unwrap();
    assert!(g.has_edge(0, 1) && g.has_edge(2, 1) && !g.has_edge(0, 2));
}

#[test]
fn selectors_gather_and_lift_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let agents = rng.random_range(1..=6);
        let p = common::random_problem(&mut rng, agents, 3);
        let sel = p.selectors();
        let z = DVector::from_fn(p.dim(), |_, _| rng.random_range(-1.0..1.0));
        let blocks = sel.split(&z);
        for i in 0..agents {
            let g = sel.gather(i, &z);
            assert_eq!(g.len(), sel.neighborhood_dim(i));
            assert_eq!(g, sel.gather_blocks(i, &blocks));
            let members = sel.members(i);
            assert_eq!(members, p.graph().closed_neighborhood(i).as_slice());
            for &j in members {
                let r = sel.f_range(i, j).unwrap();
                assert_eq!(g.rows(r.start, r.len()), blocks[j].rows(0, blocks[j].len()));
            }
            // The lift is the adjoint of the gather.
            let y = DVector::from_fn(g.len(), |_, _| rng.random_range(-1.0..1.0));
            assert!((sel.lift(i, &y).dot(&z) - y.dot(&g)).abs() < 1e-12);
        }
    }
}

#[test]
fn global_gradient_is_sum_of_local_gradients_and_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let agents = rng.random_range(1..=5);
        let p = common::random_problem(&mut rng, agents, 3);
        let zeta = common::random_parameter(&mut rng, &p);
        let z = DVector::from_fn(p.dim(), |_, _| rng.random_range(-1.0..1.0));
        let mut sum = DVector::zeros(p.dim());
        for i in 0..agents {
            let local = p.local_gradient(i, &p.selectors().gather(i, &z), &zeta.0[i]).unwrap();
            sum += p.lift(i, &local);
        }
        let g = p.global_gradient(&z, &zeta).unwrap();
        assert!((&g - &sum).norm() < 1e-10);
        let h = 1e-6;
        for k in 0..p.dim() {
            let mut e = DVector::zeros(p.dim());
            e[k] = h;
            let fd = (p.objective(&(&z + &e), &zeta).unwrap() - p.objective(&(&z - &e), &zeta).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()), "component {k}: {fd} vs {}", g[k]);
        }
    }
}

#[test]
fn convexity_constants_bracket_the_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let p = common::random_problem(&mut rng, 4, 3);
        let md = p.convexity_metadata();
        assert!(md.strong_convexity > 0.0 && md.strong_convexity <= md.lipschitz);
        assert!((md.gamma - md.strong_convexity / md.lipschitz).abs() < 1e-12);
        assert!(md.lipschitz_max <= md.lipschitz * (1.0 + 1e-9));
        let h2 = 2.0 * p.global_hessian();
        let eig = h2.symmetric_eigenvalues();
        assert!((eig.max() - md.lipschitz).abs() < 1e-8 * md.lipschitz);
        assert!((eig.min() - md.strong_convexity).abs() < 1e-8 * md.lipschitz);
    }
}

#[test]
fn indefinite_problem_is_rejected() {
    let g = Graph::path(2).unwrap();
    let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    let costs = vec![LocalCost::quadratic(h).unwrap(), LocalCost::quadratic(DMatrix::zeros(2, 2)).unwrap()];
    let cons = vec![
        LocalConstraintSet::boxed(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap(),
        LocalConstraintSet::boxed(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap(),
    ];
    assert!(matches!(DistributedProblem::build(g, costs, cons), Err(Error::NotStronglyConvex { .. })));
}

#[test]
fn disconnected_graph_is_rejected() {
    let g = Graph::new(3, &[(0, 1)]).unwrap();
    let costs = (0..3).map(|i| LocalCost::quadratic(DMatrix::identity(if i == 2 { 1 } else { 2 }, if i == 2 { 1 } else { 2 })).unwrap()).collect();
    let cons = (0..3)
        .map(|_| LocalConstraintSet::boxed(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap())
        .collect();
    assert!(matches!(DistributedProblem::build(g, costs, cons), Err(Error::DisconnectedGraph)));
}

#[test]
fn problem_config_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..10 {
        let p = common::random_problem(&mut rng, 4, 3);
        let zeta = common::random_parameter(&mut rng, &p);
        let cfg = ProblemConfig::from_problem(&p);
        let q = cfg.build().unwrap();
        assert_eq!(q.dim(), p.dim());
        assert!((q.global_hessian() - p.global_hessian()).norm() < 1e-12);
        let z = DVector::from_fn(p.dim(), |_, _| rng.random_range(-1.0..1.0));
        assert!((q.objective(&z, &zeta).unwrap() - p.objective(&z, &zeta).unwrap()).abs() < 1e-10);
        assert!((q.violation(&z) - p.violation(&z)).abs() < 1e-12);
    }
}
