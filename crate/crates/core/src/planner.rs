//! Landmark graphs weighted by the low-level value function, shortest-path
//! landmark selection, pseudo-landmarks and the landmark loss.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::{Array1, Array2};

use crate::adjacency::AdjacencyNet;
use crate::coverage::Landmark;
use crate::error::{check_dim, Error, Result};
use crate::goal::{l2, project, SubgoalScheme};

pub const CURRENT: usize = 0;
pub const GOAL: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Current,
    Goal,
    Landmark,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Current => "current",
            NodeKind::Goal => "goal",
            NodeKind::Landmark => "landmark",
        }
    }
}

/// Directed graph over the current state (node 0), the final goal (node 1)
/// and landmarks (nodes 2..). Absent entries are pruned edges. Graphs built
/// from value estimates have no edges into the current node or out of the
/// goal node.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkGraph {
    goals: Vec<Vec<f64>>,
    weights: Vec<Option<f64>>,
    gamma_dist: f64,
}

/// Edge cost from a value estimate: `−V`, clamped at zero, dropped when it
/// exceeds the threshold or is not finite.
pub fn edge_weight(value: f64, gamma_dist: f64) -> Option<f64> {
    let w = (-value).max(0.0);
    (w.is_finite() && w <= gamma_dist).then_some(w)
}

impl LandmarkGraph {
    /// Builds a graph from raw costs (`None` for no edge); costs above
    /// `gamma_dist`, negative or non-finite are pruned, as are self-loops
    /// and edges leaving the goal node.
    pub fn from_costs(goals: Vec<Vec<f64>>, costs: &[Option<f64>], gamma_dist: f64) -> Result<Self> {
        let n = goals.len();
        if n < 2 {
            return Err(Error::invalid("a landmark graph needs at least the current and goal nodes"));
        }
        check_dim(n * n, costs.len())?;
        let mut weights = vec![None; n * n];
        for u in 0..n {
            if u == GOAL {
                continue;
            }
            for v in 0..n {
                if u != v {
                    weights[u * n + v] = costs[u * n + v].filter(|&w| w.is_finite() && (0.0..=gamma_dist).contains(&w));
                }
            }
        }
        Ok(LandmarkGraph { goals, weights, gamma_dist })
    }

    pub fn num_nodes(&self) -> usize {
        self.goals.len()
    }

    pub fn gamma_dist(&self) -> f64 {
        self.gamma_dist
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        match node {
            CURRENT => NodeKind::Current,
            GOAL => NodeKind::Goal,
            _ => NodeKind::Landmark,
        }
    }

    pub fn goal(&self, node: usize) -> &[f64] {
        &self.goals[node]
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.weights[u * self.num_nodes() + v]
    }

    pub fn num_edges(&self) -> usize {
        self.weights.iter().filter(|w| w.is_some()).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.num_nodes();
        self.weights.iter().enumerate().filter_map(move |(i, w)| w.map(|w| (i / n, i % n, w)))
    }

    /// Node-per-line, edge-per-line text dump.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, g) in self.goals.iter().enumerate() {
            let _ = write!(out, "node {id} {}", self.kind(id).name());
            for x in g {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        for (u, v, w) in self.edges() {
            let _ = writeln!(out, "edge {u} {v} {w}");
        }
        out
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedLandmark {
    pub node: usize,
    pub goal: Vec<f64>,
    /// Total cost of the shortest path from the current node to the goal.
    pub path_cost: f64,
}

/// Dijkstra from the current node. Returns the first hop and total cost of
/// a minimum-cost path to the goal node, or `None` if it is unreachable.
pub fn shortest_first_hop(graph: &LandmarkGraph) -> Option<(usize, f64)> {
    let n = graph.num_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut first = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[CURRENT] = 0.0;
    for _ in 0..n {
        let mut u = None;
        for i in 0..n {
            if !done[i] && dist[i].is_finite() && u.is_none_or(|j: usize| dist[i] < dist[j]) {
                u = Some(i);
            }
        }
        let Some(u) = u else { break };
        done[u] = true;
        if u == GOAL {
            break;
        }
        for v in 0..n {
            if let Some(w) = graph.weight(u, v) {
                let d = dist[u] + w;
                if !done[v] && d < dist[v] {
                    dist[v] = d;
                    first[v] = if u == CURRENT { v } else { first[u] };
                }
            }
        }
    }
    dist[GOAL].is_finite().then(|| (first[GOAL], dist[GOAL]))
}

pub fn select_landmark(graph: &LandmarkGraph) -> Option<SelectedLandmark> {
    shortest_first_hop(graph).map(|(node, path_cost)| SelectedLandmark { node, goal: graph.goal(node).to_vec(), path_cost })
}

/// Input the low-level value function sees for the edge `u → v`.
fn edge_subgoal(scheme: SubgoalScheme, from_goal: &[f64], to_goal: &[f64], out: &mut Vec<f64>) {
    out.clear();
    match scheme {
        SubgoalScheme::Relative => out.extend(to_goal.iter().zip(from_goal).map(|(t, f)| t - f)),
        SubgoalScheme::Absolute => out.extend_from_slice(to_goal),
    }
}

/// Low-level value of each `(state, subgoal)` row, evaluated in one batch.
pub type ValueBatchFn<'a> = dyn FnMut(&Array2<f64>) -> Result<Array1<f64>> + 'a;

/// Landmark-to-landmark edge weights computed once and shared by every
/// graph built over the same landmark set.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningContext {
    landmarks: Vec<Landmark>,
    between: Vec<Option<f64>>,
    scheme: SubgoalScheme,
    goal_dim: usize,
    gamma_dist: f64,
}

impl PlanningContext {
    pub fn new(
        landmarks: Vec<Landmark>,
        value: &mut ValueBatchFn<'_>,
        scheme: SubgoalScheme,
        goal_dim: usize,
        gamma_dist: f64,
    ) -> Result<Self> {
        if !(gamma_dist > 0.0) {
            return Err(Error::invalid("gamma_dist must be positive"));
        }
        let l = landmarks.len();
        let mut between = vec![None; l * l];
        if l > 1 {
            let state_dim = landmarks[0].state.len();
            let mut rows = Vec::with_capacity(l * (l - 1) * (state_dim + goal_dim));
            let mut sub = Vec::with_capacity(goal_dim);
            for u in &landmarks {
                check_dim(state_dim, u.state.len())?;
                check_dim(goal_dim, u.goal.len())?;
                for v in &landmarks {
                    if std::ptr::eq(u, v) {
                        continue;
                    }
                    rows.extend_from_slice(&u.state);
                    edge_subgoal(scheme, &u.goal, &v.goal, &mut sub);
                    rows.extend_from_slice(&sub);
                }
            }
            let obs = Array2::from_shape_vec((l * (l - 1), state_dim + goal_dim), rows)
                .map_err(|e| Error::invalid(e.to_string()))?;
            let values = value(&obs)?;
            check_dim(obs.nrows(), values.len())?;
            let mut it = values.iter();
            for i in 0..l {
                for j in 0..l {
                    if i != j {
                        between[i * l + j] = edge_weight(*it.next().expect("one value per row"), gamma_dist);
                    }
                }
            }
        }
        Ok(PlanningContext { landmarks, between, scheme, goal_dim, gamma_dist })
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    /// Graphs for a batch of `(current state, final goal)` queries.
    pub fn graphs(&self, states: &[&[f64]], goals: &[&[f64]], value: &mut ValueBatchFn<'_>) -> Result<Vec<LandmarkGraph>> {
        check_dim(states.len(), goals.len())?;
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let l = self.landmarks.len();
        let gd = self.goal_dim;
        let state_dim = states[0].len();
        // Per query: current → goal, current → each landmark, landmark → goal.
        let per = 1 + 2 * l;
        let width = state_dim + gd;
        let mut rows = Vec::with_capacity(states.len() * per * width);
        let mut sub = Vec::with_capacity(gd);
        for (s, g) in states.iter().zip(goals) {
            check_dim(state_dim, s.len())?;
            check_dim(gd, g.len())?;
            let cur = project(s, gd);
            rows.extend_from_slice(s);
            edge_subgoal(self.scheme, cur, g, &mut sub);
            rows.extend_from_slice(&sub);
            for lm in &self.landmarks {
                rows.extend_from_slice(s);
                edge_subgoal(self.scheme, cur, &lm.goal, &mut sub);
                rows.extend_from_slice(&sub);
            }
            for lm in &self.landmarks {
                check_dim(state_dim, lm.state.len())?;
                rows.extend_from_slice(&lm.state);
                edge_subgoal(self.scheme, &lm.goal, g, &mut sub);
                rows.extend_from_slice(&sub);
            }
        }
        let obs = Array2::from_shape_vec((states.len() * per, width), rows).map_err(|e| Error::invalid(e.to_string()))?;
        let values = value(&obs)?;
        check_dim(obs.nrows(), values.len())?;

        let n = 2 + l;
        let mut out = Vec::with_capacity(states.len());
        for (q, (s, g)) in states.iter().zip(goals).enumerate() {
            let v = &values.as_slice().expect("contiguous")[q * per..(q + 1) * per];
            let w = |x: f64| edge_weight(x, self.gamma_dist);
            let mut weights = vec![None; n * n];
            weights[CURRENT * n + GOAL] = w(v[0]);
            for i in 0..l {
                weights[CURRENT * n + 2 + i] = w(v[1 + i]);
                weights[(2 + i) * n + GOAL] = w(v[1 + l + i]);
                for j in 0..l {
                    weights[(2 + i) * n + 2 + j] = self.between[i * l + j];
                }
            }
            let mut node_goals = Vec::with_capacity(n);
            node_goals.push(project(s, gd).to_vec());
            node_goals.push(g.to_vec());
            node_goals.extend(self.landmarks.iter().map(|lm| lm.goal.clone()));
            out.push(LandmarkGraph { goals: node_goals, weights, gamma_dist: self.gamma_dist });
        }
        Ok(out)
    }
}

/// Graph over one current state, one final goal and a landmark set.
pub fn build_graph(
    current: &[f64],
    final_goal: &[f64],
    landmarks: &[Landmark],
    value: &mut ValueBatchFn<'_>,
    scheme: SubgoalScheme,
    gamma_dist: f64,
) -> Result<LandmarkGraph> {
    let ctx = PlanningContext::new(landmarks.to_vec(), value, scheme, final_goal.len(), gamma_dist)?;
    Ok(ctx.graphs(&[current], &[final_goal], value)?.remove(0))
}

/// The point `delta` along the segment from `current` toward `selected`,
/// or `selected` itself if it is nearer than that.
pub fn pseudo_landmark(current: &[f64], selected: &[f64], delta: f64) -> Vec<f64> {
    let d = l2(current, selected);
    if delta <= 0.0 || d == 0.0 {
        current.to_vec()
    } else if d <= delta {
        selected.to_vec()
    } else {
        current.iter().zip(selected).map(|(c, s)| c + delta * (s - c) / d).collect()
    }
}

/// `max(‖ψ(a) − ψ(b)‖ − ε, 0)`.
pub fn landmark_loss(net: &AdjacencyNet, pseudo: &[f64], subgoal: &[f64]) -> Result<f64> {
    Ok((net.embedding_distance(pseudo, subgoal)? - net.eps_k).max(0.0))
}

/// Mean landmark loss over a batch of absolute subgoals and its gradient
/// with respect to each subgoal row. Rows with `active[i] == false`
/// contribute neither loss nor gradient but still count in the mean.
pub fn landmark_loss_batch(
    net: &AdjacencyNet,
    pseudo: &Array2<f64>,
    subgoals: &Array2<f64>,
    active: &[bool],
) -> Result<(f64, Array2<f64>)> {
    let b = subgoals.nrows();
    if b == 0 {
        return Err(Error::invalid("empty batch"));
    }
    check_dim(b, pseudo.nrows())?;
    check_dim(b, active.len())?;
    let target = net.embed_batch(pseudo)?;
    let cache = net.embedding.forward_cached(subgoals.clone())?;
    let emb = cache.output();
    let n = b as f64;
    let mut upstream = Array2::zeros(emb.raw_dim());
    let mut total = 0.0;
    for i in 0..b {
        if !active[i] {
            continue;
        }
        let diff = &emb.row(i) - &target.row(i);
        let d = diff.dot(&diff).sqrt();
        if d > net.eps_k {
            total += d - net.eps_k;
            upstream.row_mut(i).assign(&(diff / (d * n)));
        }
    }
    let grad = net.embedding.input_gradient(&cache, &upstream)?;
    Ok((total / n, grad))
}

/// Running mean of distances to selected landmarks, used as an adaptive
/// shift magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShiftTracker {
    pub sum: f64,
    pub count: u64,
}

impl ShiftTracker {
    pub fn record(&mut self, distance: f64) {
        if distance.is_finite() {
            self.sum += distance;
            self.count += 1;
        }
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}
