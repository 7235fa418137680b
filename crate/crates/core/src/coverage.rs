//! Coverage landmarks: farthest point sampling over goal-space projections
//! of states drawn from the replay buffer.

use rand::Rng as _;

use crate::agents::ReplayBuffer;
use crate::error::{Error, Result};
use crate::goal::{l2, project};
use crate::novelty::{NoveltyQueue, SampleMode};
use crate::rng::Rng;

/// A stored state and its goal-space image.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub state: Vec<f64>,
    pub goal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LandmarkSet {
    pub coverage: Vec<Landmark>,
    pub novelty: Vec<Landmark>,
}

impl LandmarkSet {
    pub fn len(&self) -> usize {
        self.coverage.len() + self.novelty.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coverage landmarks first, then novelty landmarks.
    pub fn iter(&self) -> impl Iterator<Item = &Landmark> {
        self.coverage.iter().chain(&self.novelty)
    }
}

/// Greedy farthest point sampling starting from a uniformly random index.
pub fn fps_sample<P: AsRef<[f64]>>(pool: &[P], count: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::invalid("farthest point sampling needs a non-empty pool"));
    }
    let first = rng.random_range(0..pool.len());
    fps_from(pool, count, first)
}

/// Greedy farthest point sampling from a fixed first index. Each later pick
/// maximizes the distance to its nearest selected point; ties go to the
/// lowest index.
pub fn fps_from<P: AsRef<[f64]>>(pool: &[P], count: usize, first: usize) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::invalid("farthest point sampling needs a non-empty pool"));
    }
    if first >= pool.len() {
        return Err(Error::invalid(format!("first index {first} outside pool of {}", pool.len())));
    }
    let n = count.min(pool.len());
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut selected = vec![false; pool.len()];
    let mut nearest = vec![f64::INFINITY; pool.len()];
    let mut out = Vec::with_capacity(n);
    let mut pick = first;
    loop {
        selected[pick] = true;
        out.push(pick);
        if out.len() == n {
            return Ok(out);
        }
        let chosen = pool[pick].as_ref();
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in pool.iter().enumerate() {
            if selected[i] {
                continue;
            }
            nearest[i] = nearest[i].min(l2(p.as_ref(), chosen));
            if best.is_none_or(|(_, d)| nearest[i] > d) {
                best = Some((i, nearest[i]));
            }
        }
        pick = best.expect("unselected points remain").0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkCounts {
    pub coverage: usize,
    pub novelty: usize,
    pub pool_size: usize,
    pub queue_mode: SampleMode,
}

/// Coverage landmarks from an FPS pool drawn uniformly (with replacement)
/// from `buffer`, plus novelty landmarks from `queue`.
pub fn gather_landmarks<T>(
    buffer: &ReplayBuffer<T>,
    state_of: impl Fn(&T) -> &[f64],
    goal_dim: usize,
    queue: &NoveltyQueue,
    counts: LandmarkCounts,
    coverage_rng: &mut Rng,
    queue_rng: &mut Rng,
) -> Result<LandmarkSet> {
    let mut set = LandmarkSet::default();
    if counts.coverage > 0 && !buffer.is_empty() && counts.pool_size > 0 {
        let states: Vec<&[f64]> = (0..counts.pool_size)
            .map(|_| state_of(buffer.get(coverage_rng.random_range(0..buffer.len()))))
            .collect();
        let goals: Vec<&[f64]> = states.iter().map(|s| project(s, goal_dim)).collect();
        for i in fps_sample(&goals, counts.coverage, coverage_rng)? {
            set.coverage.push(Landmark { state: states[i].to_vec(), goal: goals[i].to_vec() });
        }
    }
    set.novelty = queue.sample(counts.novelty, counts.queue_mode, queue_rng);
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn brute_force(pool: &[Vec<f64>], count: usize, first: usize) -> Vec<usize> {
        // Recompute every min-distance from scratch at each step.
        let mut sel = vec![first];
        while sel.len() < count.min(pool.len()) {
            let mut best = None;
            let mut best_d = -1.0;
            for i in 0..pool.len() {
                if sel.contains(&i) {
                    continue;
                }
                let d = sel.iter().map(|&j| l2(&pool[i], &pool[j])).fold(f64::INFINITY, f64::min);
                if d > best_d {
                    best_d = d;
                    best = Some(i);
                }
            }
            sel.push(best.unwrap());
        }
        sel
    }

    #[test]
    fn forced_maximum() {
        let pool = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![5.0, 0.0]];
        assert_eq!(fps_from(&pool, 2, 0).unwrap(), vec![0, 1]);
        assert_eq!(fps_from(&pool, 3, 0).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn exhaustive_and_errors() {
        let pool: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 1.7 % 3.0, i as f64]).collect();
        let mut sel = fps_sample(&pool, 7, &mut seeded(4)).unwrap();
        sel.sort();
        assert_eq!(sel, (0..7).collect::<Vec<_>>());
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(fps_sample(&empty, 1, &mut seeded(0)).is_err());
        assert!(fps_from(&pool, 2, 7).is_err());
    }

    #[test]
    fn degenerate_pool_repeats_goal() {
        let pool = vec![vec![1.0, 1.0]; 5];
        let sel = fps_from(&pool, 3, 2).unwrap();
        assert_eq!(sel, vec![2, 0, 1]);
    }

    #[test]
    fn gather_edge_cases() {
        let mut buffer = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            buffer.push(vec![i as f64, 0.0, 7.0]);
        }
        let queue = NoveltyQueue::new(5, 0.2).unwrap();
        let counts = LandmarkCounts { coverage: 4, novelty: 4, pool_size: 50, queue_mode: SampleMode::Uniform };
        let set = gather_landmarks(&buffer, |s| s, 2, &queue, counts, &mut seeded(1), &mut seeded(2)).unwrap();
        assert_eq!((set.coverage.len(), set.novelty.len()), (4, 0));
        for l in &set.coverage {
            assert_eq!(l.goal, l.state[..2].to_vec());
        }
        let none = LandmarkCounts { coverage: 0, novelty: 0, ..counts };
        assert!(gather_landmarks(&buffer, |s| s, 2, &queue, none, &mut seeded(1), &mut seeded(2)).unwrap().is_empty());
        let empty: ReplayBuffer<Vec<f64>> = ReplayBuffer::new(3).unwrap();
        assert!(gather_landmarks(&empty, |s| s, 2, &queue, counts, &mut seeded(1), &mut seeded(2)).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pool in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 1..=12),
            count in 1usize..=4,
            seed in any::<u64>(),
        ) {
            let first = seed as usize % pool.len();
            let fast = fps_from(&pool, count, first).unwrap();
            prop_assert_eq!(&fast, &brute_force(&pool, count, first));
            // Greedy certificate: no unselected point is farther from the set
            // than the last pick was when it was chosen.
            if fast.len() >= 2 {
                let last = *fast.last().unwrap();
                let prefix = &fast[..fast.len() - 1];
                let dmin = |i: usize, set: &[usize]| set.iter().map(|&j| l2(&pool[i], &pool[j])).fold(f64::INFINITY, f64::min);
                let certificate = dmin(last, prefix);
                for i in 0..pool.len() {
                    if !fast.contains(&i) {
                        prop_assert!(dmin(i, &fast) <= certificate + 1e-12);
                    }
                }
            }
        }
    }
}
