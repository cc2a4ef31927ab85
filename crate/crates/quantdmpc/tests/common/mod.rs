//! Random problem generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use quantdmpc::netqp::{AffineBoxSet, DistributedProblem, Graph, LocalConstraintSet, LocalCost, Parameter};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

/// Connected random graph: a random spanning tree plus extra edges.
pub fn random_graph(rng: &mut ChaCha8Rng, agents: usize) -> Graph {
    let mut edges = Vec::new();
    for v in 1..agents {
        edges.push((rng.random_range(0..v), v));
    }
    for a in 0..agents {
        for b in a + 1..agents {
            if !edges.contains(&(a, b)) && rng.random::<f64>() < 0.25 {
                edges.push((a, b));
            }
        }
    }
    Graph::new(agents, &edges).unwrap()
}

/// Symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(lo..=hi)));
    let h = &q * d * q.transpose();
    (&h + h.transpose()) * 0.5
}

pub fn random_set(rng: &mut ChaCha8Rng, dim: usize) -> LocalConstraintSet {
    let lower = DVector::from_fn(dim, |_, _| -rng.random_range(0.2..2.0));
    let upper = DVector::from_fn(dim, |_, _| rng.random_range(0.2..2.0));
    match rng.random_range(0..3) {
        0 => LocalConstraintSet::boxed(lower, upper).unwrap(),
        1 => {
            // Box rows plus a few random cuts through a neighbourhood of the origin.
            let cuts = rng.random_range(1..=3);
            let mut g = DMatrix::zeros(2 * dim + cuts, dim);
            let mut h = DVector::zeros(2 * dim + cuts);
            for k in 0..dim {
                g[(2 * k, k)] = 1.0;
                h[2 * k] = upper[k];
                g[(2 * k + 1, k)] = -1.0;
                h[2 * k + 1] = -lower[k];
            }
            for c in 0..cuts {
                for k in 0..dim {
                    g[(2 * dim + c, k)] = rng.random_range(-1.0..1.0);
                }
                h[2 * dim + c] = rng.random_range(0.1..1.0);
            }
            LocalConstraintSet::polytope(g, h).unwrap()
        }
        _ => {
            let a = DMatrix::from_fn(1, dim, |_, _| rng.random_range(-1.0..1.0));
            let x0 = DVector::from_fn(dim, |k, _| rng.random_range(lower[k] * 0.5..=upper[k] * 0.5));
            let b = &a * x0;
            LocalConstraintSet::AffineIntersectBox(AffineBoxSet::new(a, b, lower, upper).unwrap())
        }
    }
}

/// Random strongly convex QP with `agents` agents of dimension at most `max_dim`.
/// Costs depend on a parameter of the agent's own dimension.
pub fn random_problem(rng: &mut ChaCha8Rng, agents: usize, max_dim: usize) -> DistributedProblem {
    let graph = random_graph(rng, agents);
    let sizes: Vec<usize> = (0..agents).map(|_| rng.random_range(1..=max_dim)).collect();
    let constraints: Vec<LocalConstraintSet> = sizes.iter().map(|&m| random_set(rng, m)).collect();
    let costs = (0..agents)
        .map(|i| {
            let nd: usize = graph.closed_neighborhood(i).iter().map(|&j| sizes[j]).sum();
            let h = random_spd(rng, nd, 0.5, 5.0);
            let p = DMatrix::from_fn(sizes[i], nd, |_, _| rng.random_range(-1.0..1.0));
            let c = DVector::from_fn(nd, |_, _| rng.random_range(-3.0..3.0));
            LocalCost::new(h, p, c).unwrap()
        })
        .collect();
    DistributedProblem::build(graph, costs, constraints).unwrap()
}

pub fn random_parameter(rng: &mut ChaCha8Rng, problem: &DistributedProblem) -> Parameter {
    Parameter(
        (0..problem.agent_count())
            .map(|i| DVector::from_fn(problem.cost(i).param_dim(), |_, _| rng.random_range(-1.0..1.0)))
            .collect(),
    )
}
