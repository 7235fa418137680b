//! k-step adjacency labels gathered from trajectories and the embedding
//! network trained on them, whose scaled distances estimate how many steps
//! separate two goals.

use std::collections::HashSet;

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;

use crate::agents::rows_to_matrix;
use crate::error::{check_dim, Error, Result};
use crate::goal::l2;
use crate::nn::codec::{Codec, Decoder, Encoder};
use crate::nn::{Adam, AdamConfig, ForwardCache, Mlp, MlpSpec, ParameterSet};
use crate::rng::Rng;

/// Discretized explored goals ("anchors") and the symmetric set of anchor
/// pairs observed within `k` steps of each other. Labels only ever go from
/// non-adjacent to adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    k: usize,
    resolution: f64,
    anchors: Vec<Vec<f64>>,
    positives: Vec<(usize, usize)>,
    positive_set: HashSet<(usize, usize)>,
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i <= j { (i, j) } else { (j, i) }
}

impl AdjacencyMatrix {
    /// A goal becomes a new anchor only when it is at least `resolution`
    /// away from every existing anchor; otherwise it maps to the nearest.
    pub fn new(k: usize, resolution: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("adjacency degree must be positive"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::invalid("anchor resolution must be positive"));
        }
        Ok(AdjacencyMatrix { k, resolution, anchors: Vec::new(), positives: Vec::new(), positive_set: HashSet::new() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    /// Off-diagonal adjacent pairs `(i, j)` with `i < j`, in discovery order.
    pub fn positive_pairs(&self) -> &[(usize, usize)] {
        &self.positives
    }

    pub fn num_negative_pairs(&self) -> usize {
        let n = self.anchors.len();
        n * n.saturating_sub(1) / 2 - self.positives.len()
    }

    /// Nearest anchor strictly within the resolution.
    pub fn find_anchor(&self, goal: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, a) in self.anchors.iter().enumerate() {
            let d = l2(a, goal);
            if d < self.resolution && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    fn anchor_for(&mut self, goal: &[f64]) -> Result<usize> {
        if let Some(a) = self.anchors.first() {
            check_dim(a.len(), goal.len())?;
        }
        Ok(match self.find_anchor(goal) {
            Some(i) => i,
            None => {
                self.anchors.push(goal.to_vec());
                self.anchors.len() - 1
            }
        })
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        i == j || self.positive_set.contains(&ordered(i, j))
    }

    fn mark(&mut self, i: usize, j: usize) {
        if i != j && self.positive_set.insert(ordered(i, j)) {
            self.positives.push(ordered(i, j));
        }
    }

    /// Labels every pair of goals visited within `k` steps of each other
    /// along one trajectory.
    pub fn add_trajectory<G: AsRef<[f64]>>(&mut self, goals: &[G]) -> Result<()> {
        let ids = goals.iter().map(|g| self.anchor_for(g.as_ref())).collect::<Result<Vec<_>>>()?;
        for i in 0..ids.len() {
            for j in i + 1..ids.len().min(i + self.k + 1) {
                self.mark(ids[i], ids[j]);
            }
        }
        Ok(())
    }

    pub fn update<G: AsRef<[f64]>>(&mut self, trajectories: &[Vec<G>]) -> Result<()> {
        for t in trajectories {
            self.add_trajectory(t)?;
        }
        Ok(())
    }

    /// `count` anchor pairs with labels, half adjacent and half not (as far
    /// as each class exists). Adjacent pairs are drawn from the off-diagonal
    /// positives; non-adjacent pairs uniformly from all unlabeled pairs.
    pub fn sample_balanced(&self, count: usize, rng: &mut Rng) -> Vec<(usize, usize, bool)> {
        let n = self.anchors.len();
        let negatives = self.num_negative_pairs();
        let (mut want_pos, mut want_neg) = (count - count / 2, count / 2);
        if self.positives.is_empty() {
            (want_pos, want_neg) = (0, if negatives > 0 { count } else { 0 });
        } else if negatives == 0 {
            (want_pos, want_neg) = (count, 0);
        }
        let mut out = Vec::with_capacity(want_pos + want_neg);
        for _ in 0..want_pos {
            let (i, j) = self.positives[rng.random_range(0..self.positives.len())];
            out.push((i, j, true));
        }
        let mut listed: Option<Vec<(usize, usize)>> = None;
        for _ in 0..want_neg {
            let mut found = None;
            if listed.is_none() {
                for _ in 0..32 {
                    let i = rng.random_range(0..n);
                    let j = rng.random_range(0..n);
                    if !self.is_adjacent(i, j) {
                        found = Some(ordered(i, j));
                        break;
                    }
                }
            }
            let pair = match found {
                Some(p) => p,
                None => {
                    let all = listed.get_or_insert_with(|| {
                        (0..n)
                            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                            .filter(|&(i, j)| !self.is_adjacent(i, j))
                            .collect()
                    });
                    all[rng.random_range(0..all.len())]
                }
            };
            out.push((pair.0, pair.1, false));
        }
        out
    }
}

impl Codec for AdjacencyMatrix {
    fn encode(&self, e: &mut Encoder) {
        e.usize(self.k);
        e.f64(self.resolution);
        e.usize(self.anchors.len());
        for a in &self.anchors {
            e.f64s(a);
        }
        e.usize(self.positives.len());
        for &(i, j) in &self.positives {
            e.usize(i);
            e.usize(j);
        }
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let mut m = AdjacencyMatrix::new(d.usize()?, d.f64()?).map_err(|e| Error::Format(e.to_string()))?;
        let n = d.usize()?;
        for _ in 0..n {
            m.anchors.push(d.f64s()?);
        }
        let p = d.usize()?;
        for _ in 0..p {
            let (i, j) = (d.usize()?, d.usize()?);
            if i >= j || j >= n {
                return Err(Error::Format("adjacent pair out of range".into()));
            }
            m.mark(i, j);
        }
        Ok(m)
    }
}

/// Hinge terms on embedding distance `d`: adjacent pairs pay
/// `max(d − ε, 0)`, others pay `max(ε + margin − d, 0)`.
pub fn pair_hinge(distance: f64, adjacent: bool, eps_k: f64, margin: f64) -> f64 {
    if adjacent {
        (distance - eps_k).max(0.0)
    } else {
        (eps_k + margin - distance).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyNet {
    pub embedding: Mlp,
    pub optimizer: Adam,
    pub eps_k: f64,
    pub margin: f64,
}

/// Row-wise `a − b` and its norms.
fn row_diffs(a: &Array2<f64>, b: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let diff = a - b;
    let norms = diff.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    (diff, norms)
}

impl AdjacencyNet {
    pub fn new(goal_dim: usize, hidden: &[usize], embedding_dim: usize, lr: f64, eps_k: f64, margin: f64, rng: &mut Rng) -> Result<Self> {
        if !(eps_k > 0.0 && margin > 0.0) {
            return Err(Error::invalid("eps_k and margin must be positive"));
        }
        let embedding = Mlp::new(MlpSpec::linear_head(goal_dim, hidden, embedding_dim)?, rng)?;
        let optimizer = Adam::new(AdamConfig::with_lr(lr), &embedding.params);
        Ok(AdjacencyNet { embedding, optimizer, eps_k, margin })
    }

    pub fn goal_dim(&self) -> usize {
        self.embedding.input_dim()
    }

    pub fn embed(&self, goal: &[f64]) -> Result<Vec<f64>> {
        self.embedding.forward(goal)
    }

    pub fn embed_batch(&self, goals: &Array2<f64>) -> Result<Array2<f64>> {
        self.embedding.forward_batch(goals)
    }

    pub fn embedding_distance(&self, g1: &[f64], g2: &[f64]) -> Result<f64> {
        Ok(l2(&self.embed(g1)?, &self.embed(g2)?))
    }

    /// Estimated number of steps between two goals: `(k / ε)·‖ψ(g1) − ψ(g2)‖`.
    pub fn estimate_distance(&self, g1: &[f64], g2: &[f64], k: usize) -> Result<f64> {
        Ok(k as f64 / self.eps_k * self.embedding_distance(g1, g2)?)
    }

    fn check_pairs(&self, a: &Array2<f64>, b: &Array2<f64>, labels: &[bool]) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        check_dim(labels.len(), a.nrows())?;
        check_dim(labels.len(), b.nrows())?;
        check_dim(self.goal_dim(), a.ncols())?;
        check_dim(self.goal_dim(), b.ncols())
    }

    /// Mean hinge loss over labeled goal pairs.
    pub fn loss(&self, a: &Array2<f64>, b: &Array2<f64>, labels: &[bool]) -> Result<f64> {
        self.check_pairs(a, b, labels)?;
        let (_, norms) = row_diffs(&self.embed_batch(a)?, &self.embed_batch(b)?);
        let total: f64 = norms.iter().zip(labels).map(|(&d, &l)| pair_hinge(d, l, self.eps_k, self.margin)).sum();
        Ok(total / labels.len() as f64)
    }

    /// Loss and parameter gradient. At a zero embedding distance the
    /// direction is undefined and that pair contributes no gradient.
    pub fn loss_and_grad(&self, a: &Array2<f64>, b: &Array2<f64>, labels: &[bool]) -> Result<(f64, ParameterSet)> {
        self.check_pairs(a, b, labels)?;
        let n = labels.len() as f64;
        let ca: ForwardCache = self.embedding.forward_cached(a.clone())?;
        let cb: ForwardCache = self.embedding.forward_cached(b.clone())?;
        let (diff, norms) = row_diffs(ca.output(), cb.output());
        let mut up = Array2::zeros(diff.raw_dim());
        let mut total = 0.0;
        for (i, (&d, &l)) in norms.iter().zip(labels).enumerate() {
            let h = pair_hinge(d, l, self.eps_k, self.margin);
            total += h;
            if h > 0.0 && d > 0.0 {
                let sign = if l { 1.0 } else { -1.0 };
                up.row_mut(i).assign(&(&diff.row(i) * (sign / (d * n))));
            }
        }
        let (mut ga, _) = self.embedding.backward(&ca, &up)?;
        let (gb, _) = self.embedding.backward(&cb, &(-&up))?;
        ga.add_scaled(&gb, 1.0);
        Ok((total / n, ga))
    }

    /// One Adam step; returns the loss before the step.
    pub fn train_batch(&mut self, a: &Array2<f64>, b: &Array2<f64>, labels: &[bool]) -> Result<f64> {
        let (loss, grads) = self.loss_and_grad(a, b, labels)?;
        self.optimizer.step(&mut self.embedding.params, &grads)?;
        Ok(loss)
    }

    /// `epochs` passes of balanced minibatches drawn from the matrix. One
    /// epoch is enough batches to visit every adjacent pair once in
    /// expectation, capped at `max_batches_per_epoch`. Returns the mean
    /// batch loss of the final epoch, or `None` if the matrix has no labels.
    pub fn train_on(
        &mut self,
        matrix: &AdjacencyMatrix,
        epochs: usize,
        batch_size: usize,
        max_batches_per_epoch: usize,
        rng: &mut Rng,
    ) -> Result<Option<f64>> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if matrix.positive_pairs().is_empty() && matrix.num_negative_pairs() == 0 {
            return Ok(None);
        }
        let half = (batch_size / 2).max(1);
        let batches = matrix.positive_pairs().len().div_ceil(half).clamp(1, max_batches_per_epoch.max(1));
        let dim = self.goal_dim();
        let anchors = matrix.anchors();
        let mut last = None;
        for _ in 0..epochs {
            let mut sum = 0.0;
            for _ in 0..batches {
                let pairs = matrix.sample_balanced(batch_size, rng);
                let a = rows_to_matrix(pairs.iter().map(|p| anchors[p.0].as_slice()), dim);
                let b = rows_to_matrix(pairs.iter().map(|p| anchors[p.1].as_slice()), dim);
                let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
                sum += self.train_batch(&a, &b, &labels)?;
            }
            last = Some(sum / batches as f64);
        }
        Ok(last)
    }
}

impl Codec for AdjacencyNet {
    fn encode(&self, e: &mut Encoder) {
        e.put(&self.embedding);
        e.put(&self.optimizer);
        e.f64(self.eps_k);
        e.f64(self.margin);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        Ok(AdjacencyNet { embedding: d.get()?, optimizer: d.get()?, eps_k: d.f64()?, margin: d.f64()? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::relative_error;
    use crate::rng::seeded;
    use ndarray::array;
    use proptest::prelude::*;

    fn chain(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64, 0.0]).collect()
    }

    #[test]
    fn step_gap_definition() {
        let mut m = AdjacencyMatrix::new(1, 0.5).unwrap();
        m.add_trajectory(&chain(3)).unwrap();
        assert!(m.is_adjacent(0, 1) && m.is_adjacent(1, 2) && !m.is_adjacent(0, 2));
        assert!(m.is_adjacent(2, 2));
        let mut m = AdjacencyMatrix::new(2, 0.5).unwrap();
        m.add_trajectory(&chain(3)).unwrap();
        assert!(m.is_adjacent(0, 2) && m.is_adjacent(2, 0));
    }

    #[test]
    fn discretization_merges_nearby_goals() {
        let mut m = AdjacencyMatrix::new(1, 0.5).unwrap();
        m.add_trajectory(&[vec![0.0, 0.0], vec![0.3, 0.0], vec![0.6, 0.0]]).unwrap();
        assert_eq!(m.num_anchors(), 2);
        assert!(m.is_adjacent(0, 1));
        assert!(m.add_trajectory(&[vec![0.0]]).is_err());
    }

    #[test]
    fn labels_are_monotone() {
        let mut m = AdjacencyMatrix::new(1, 0.5).unwrap();
        m.add_trajectory(&chain(4)).unwrap();
        let before = m.positive_pairs().to_vec();
        m.add_trajectory(&[vec![3.0, 0.0], vec![9.0, 9.0]]).unwrap();
        for &(i, j) in &before {
            assert!(m.is_adjacent(i, j));
        }
    }

    #[test]
    fn balanced_sampling() {
        let mut m = AdjacencyMatrix::new(1, 0.5).unwrap();
        m.add_trajectory(&chain(6)).unwrap();
        let pairs = m.sample_balanced(64, &mut seeded(3));
        assert_eq!(pairs.len(), 64);
        assert_eq!(pairs.iter().filter(|p| p.2).count(), 32);
        for &(i, j, l) in &pairs {
            assert_eq!(m.is_adjacent(i, j), l);
            assert!(i != j);
        }
        // All pairs adjacent: every sample is a positive.
        let mut full = AdjacencyMatrix::new(5, 0.5).unwrap();
        full.add_trajectory(&chain(3)).unwrap();
        assert!(full.sample_balanced(10, &mut seeded(0)).iter().all(|p| p.2));
    }

    #[test]
    fn hinge_values() {
        assert_eq!(pair_hinge(0.0, true, 1.0, 0.2), 0.0);
        assert_eq!(pair_hinge(1.2, false, 1.0, 0.2), 0.0);
        assert_eq!(pair_hinge(1.5, true, 1.0, 0.2), 0.5);
        assert!((pair_hinge(0.5, false, 1.0, 0.2) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn distance_estimate_properties() {
        let net = AdjacencyNet::new(2, &[16], 8, 2e-4, 1.0, 0.2, &mut seeded(1)).unwrap();
        let (g1, g2) = ([0.3, -1.0], [2.0, 0.5]);
        assert_eq!(net.estimate_distance(&g1, &g1, 5).unwrap(), 0.0);
        assert_eq!(net.estimate_distance(&g1, &g2, 5).unwrap(), net.estimate_distance(&g2, &g1, 5).unwrap());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut net = AdjacencyNet::new(2, &[8, 8], 4, 2e-4, 0.3, 0.2, &mut seeded(5)).unwrap();
        let a = array![[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5], [0.2, 0.2]];
        let b = array![[0.5, 0.1], [3.0, -1.0], [-1.2, 0.4], [2.0, 2.0]];
        let labels = [true, false, true, false];
        // Stay away from hinge kinks.
        let (ea, eb) = (net.embed_batch(&a).unwrap(), net.embed_batch(&b).unwrap());
        let (_, norms) = row_diffs(&ea, &eb);
        for (&d, &l) in norms.iter().zip(&labels) {
            let slack = if l { d - net.eps_k } else { net.eps_k + net.margin - d };
            assert!(slack.abs() > 1e-6);
        }
        let (_, grads) = net.loss_and_grad(&a, &b, &labels).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..grads.num_params() {
            let orig = net.embedding.params.get(i);
            net.embedding.params.set(i, orig + h);
            let plus = net.loss(&a, &b, &labels).unwrap();
            net.embedding.params.set(i, orig - h);
            let minus = net.loss(&a, &b, &labels).unwrap();
            net.embedding.params.set(i, orig);
            worst = worst.max(relative_error(grads.get(i), (plus - minus) / (2.0 * h)));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn codec_round_trip() {
        let mut m = AdjacencyMatrix::new(2, 0.5).unwrap();
        m.add_trajectory(&chain(5)).unwrap();
        let net = AdjacencyNet::new(2, &[4], 3, 1e-3, 1.0, 0.2, &mut seeded(0)).unwrap();
        let mut e = Encoder::new();
        e.put(&m);
        e.put(&net);
        let bytes = e.finish();
        let mut d = Decoder::new(&bytes);
        assert_eq!(d.get::<AdjacencyMatrix>().unwrap(), m);
        assert_eq!(d.get::<AdjacencyNet>().unwrap(), net);
    }

    proptest! {
        #[test]
        fn loss_zero_iff_margins_satisfied(
            d in proptest::collection::vec((0.0f64..3.0, any::<bool>()), 1..20),
        ) {
            let total: f64 = d.iter().map(|&(x, l)| pair_hinge(x, l, 1.0, 0.2)).sum();
            let ok = d.iter().all(|&(x, l)| if l { x <= 1.0 } else { x >= 1.2 });
            prop_assert_eq!(total == 0.0, ok);
        }
    }
}
