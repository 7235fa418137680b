//! Seeded fixtures shared by the benchmarks.

use higl_core::coverage::Landmark;
use higl_core::planner::LandmarkGraph;
use higl_core::rng::{seeded, Rng};
use ndarray::Array2;
use rand::Rng as _;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_points(n: usize, dim: usize, scale: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

pub fn random_landmarks(n: usize, state_dim: usize, goal_dim: usize, seed: u64) -> Vec<Landmark> {
    let mut rng = seeded(seed);
    random_points(n, state_dim, 10.0, &mut rng)
        .into_iter()
        .map(|state| Landmark { goal: state[..goal_dim].to_vec(), state })
        .collect()
}

/// Dense graph with uniform weights in `[0, 50)` and about 60% of edges kept.
pub fn random_graph(nodes: usize, seed: u64) -> LandmarkGraph {
    let mut rng = seeded(seed);
    let goals = random_points(nodes, 2, 10.0, &mut rng);
    let costs: Vec<Option<f64>> =
        (0..nodes * nodes).map(|_| rng.random_bool(0.6).then(|| rng.random_range(0.0..50.0))).collect();
    LandmarkGraph::from_costs(goals, &costs, 38.0).expect("at least two nodes")
}
