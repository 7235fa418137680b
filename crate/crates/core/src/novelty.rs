//! Novelty scoring by random network distillation and the bounded novelty
//! queue that stores the most novel states seen so far.

use ndarray::Array2;
use rand::seq::index;

use crate::coverage::Landmark;
use crate::error::{check_dim, Error, Result};
use crate::goal::l2;
use crate::nn::codec::{Codec, Decoder, Encoder};
use crate::nn::{Adam, AdamConfig, Mlp, MlpSpec};
use crate::rng::Rng;

/// A frozen random target network and a predictor trained to imitate it.
/// The novelty of an input is the predictor's error on it.
#[derive(Debug, Clone, PartialEq)]
pub struct RndPair {
    target: Mlp,
    pub predictor: Mlp,
    pub optimizer: Adam,
}

impl RndPair {
    pub fn new(input_dim: usize, hidden: &[usize], embedding_dim: usize, lr: f64, rng: &mut Rng) -> Result<Self> {
        let spec = MlpSpec::linear_head(input_dim, hidden, embedding_dim)?;
        let target = Mlp::new(spec.clone(), rng)?;
        let predictor = Mlp::new(spec, rng)?;
        let optimizer = Adam::new(AdamConfig::with_lr(lr), &predictor.params);
        Ok(RndPair { target, predictor, optimizer })
    }

    /// A pair whose predictor starts as an exact copy of the target.
    pub fn with_predictor_copy(input_dim: usize, hidden: &[usize], embedding_dim: usize, lr: f64, rng: &mut Rng) -> Result<Self> {
        let mut pair = Self::new(input_dim, hidden, embedding_dim, lr, rng)?;
        pair.predictor = pair.target.clone();
        Ok(pair)
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn input_dim(&self) -> usize {
        self.target.input_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.target.output_dim()
    }

    pub fn score(&self, input: &[f64]) -> Result<f64> {
        let p = self.predictor.forward(input)?;
        let t = self.target.forward(input)?;
        Ok(l2(&p, &t))
    }

    pub fn score_batch(&self, inputs: &Array2<f64>) -> Result<Vec<f64>> {
        let diff = self.predictor.forward_batch(inputs)? - self.target.forward_batch(inputs)?;
        Ok(diff.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect())
    }

    /// One Adam step on the mean squared prediction error; returns the loss
    /// before the step.
    pub fn update(&mut self, inputs: &Array2<f64>) -> Result<f64> {
        if inputs.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        check_dim(self.input_dim(), inputs.ncols())?;
        let n = inputs.nrows() as f64;
        let target = self.target.forward_batch(inputs)?;
        let cache = self.predictor.forward_cached(inputs.clone())?;
        let diff = cache.output() - &target;
        let loss = diff.mapv(|d| d * d).sum() / n;
        let upstream = diff.mapv(|d| 2.0 * d / n);
        let (grads, _) = self.predictor.backward(&cache, &upstream)?;
        self.optimizer.step(&mut self.predictor.params, &grads)?;
        Ok(loss)
    }
}

impl Codec for RndPair {
    fn encode(&self, e: &mut Encoder) {
        e.put(&self.target);
        e.put(&self.predictor);
        e.put(&self.optimizer);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let target: Mlp = d.get()?;
        let predictor: Mlp = d.get()?;
        let optimizer: Adam = d.get()?;
        if target.spec() != predictor.spec() || !predictor.params.same_shape(&optimizer.first_moment) {
            return Err(Error::Format("RND networks disagree in shape".into()));
        }
        Ok(RndPair { target, predictor, optimizer })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub state: Vec<f64>,
    pub goal: Vec<f64>,
    pub priority: f64,
    /// Insertion counter; lower is older.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InsertReport {
    /// Entries discarded for being within the similarity threshold.
    pub similar: Vec<QueueEntry>,
    /// Entry evicted because the queue overflowed (possibly the new one).
    pub overflow: Option<QueueEntry>,
}

impl InsertReport {
    pub fn removed(&self) -> usize {
        self.similar.len() + usize::from(self.overflow.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleMode {
    #[default]
    Uniform,
    TopPriority,
}

impl std::str::FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SampleMode::Uniform),
            "top" | "top_priority" => Ok(SampleMode::TopPriority),
            _ => Err(Error::Config(format!("unknown queue sampling mode {s:?}"))),
        }
    }
}

impl SampleMode {
    pub fn name(self) -> &'static str {
        match self {
            SampleMode::Uniform => "uniform",
            SampleMode::TopPriority => "top_priority",
        }
    }
}

/// Fixed-capacity store of novel states. Inserting a state first discards
/// every stored entry whose goal lies within `lambda` of it, then adds it;
/// if that overflows the capacity the lowest-priority entry goes (oldest
/// first among ties).
#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyQueue {
    capacity: usize,
    lambda: f64,
    entries: Vec<QueueEntry>,
    next_seq: u64,
}

impl NoveltyQueue {
    pub fn new(capacity: usize, lambda: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("queue capacity must be positive"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("similarity threshold must be positive"));
        }
        Ok(NoveltyQueue { capacity, lambda, entries: Vec::new(), next_seq: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    pub fn insert(&mut self, state: &[f64], goal: &[f64], priority: f64) -> Result<InsertReport> {
        self.insert_with_metric(state, goal, priority, l2)
    }

    /// Same as [`insert`](Self::insert) with a custom similarity distance
    /// between goals, e.g. an estimated transition distance.
    pub fn insert_with_metric(
        &mut self,
        state: &[f64],
        goal: &[f64],
        priority: f64,
        mut distance: impl FnMut(&[f64], &[f64]) -> f64,
    ) -> Result<InsertReport> {
        if !(priority >= 0.0 && priority.is_finite()) {
            return Err(Error::invalid(format!("priority {priority} must be finite and nonnegative")));
        }
        if let Some(e) = self.entries.first() {
            check_dim(e.goal.len(), goal.len())?;
            check_dim(e.state.len(), state.len())?;
        }
        let mut report = InsertReport::default();
        let mut kept = Vec::with_capacity(self.entries.len() + 1);
        for e in self.entries.drain(..) {
            if distance(&e.goal, goal) < self.lambda {
                report.similar.push(e);
            } else {
                kept.push(e);
            }
        }
        self.entries = kept;
        self.entries.push(QueueEntry { state: state.to_vec(), goal: goal.to_vec(), priority, seq: self.next_seq });
        self.next_seq += 1;
        if self.entries.len() > self.capacity {
            let worst = self
                .entries
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.priority.total_cmp(&b.priority).then(a.seq.cmp(&b.seq)))
                .map(|(i, _)| i)
                .expect("queue is non-empty");
            report.overflow = Some(self.entries.remove(worst));
        }
        Ok(report)
    }

    /// Up to `count` entries without replacement.
    pub fn sample(&self, count: usize, mode: SampleMode, rng: &mut Rng) -> Vec<Landmark> {
        let n = count.min(self.entries.len());
        let pick = |e: &QueueEntry| Landmark { state: e.state.clone(), goal: e.goal.clone() };
        match mode {
            SampleMode::Uniform => {
                index::sample(rng, self.entries.len(), n).into_iter().map(|i| pick(&self.entries[i])).collect()
            }
            SampleMode::TopPriority => {
                let mut order: Vec<usize> = (0..self.entries.len()).collect();
                order.sort_by(|&a, &b| {
                    let (ea, eb) = (&self.entries[a], &self.entries[b]);
                    eb.priority.total_cmp(&ea.priority).then(ea.seq.cmp(&eb.seq))
                });
                order[..n].iter().map(|&i| pick(&self.entries[i])).collect()
            }
        }
    }
}

impl Codec for NoveltyQueue {
    fn encode(&self, e: &mut Encoder) {
        e.usize(self.capacity);
        e.f64(self.lambda);
        e.u64(self.next_seq);
        e.usize(self.entries.len());
        for entry in &self.entries {
            e.f64s(&entry.state);
            e.f64s(&entry.goal);
            e.f64(entry.priority);
            e.u64(entry.seq);
        }
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let capacity = d.usize()?;
        let lambda = d.f64()?;
        let next_seq = d.u64()?;
        let len = d.usize()?;
        if capacity == 0 || len > capacity || !(lambda > 0.0) {
            return Err(Error::Format("inconsistent novelty queue header".into()));
        }
        let mut entries = Vec::with_capacity(len);
        for _ in 0..len {
            entries.push(QueueEntry { state: d.f64s()?, goal: d.f64s()?, priority: d.f64()?, seq: d.u64()? });
        }
        Ok(NoveltyQueue { capacity, lambda, entries, next_seq })
    }
}
