//! Greedy evaluation rollouts.

use crate::agents::ActorCritic;
use crate::envs::{MazeEnv, MazeSpec};
use crate::error::{check_dim, Result};
use crate::goal::{goal_transition_into, SubgoalScheme};

/// Anything that maps observations to actions for a fixed final goal.
pub trait GoalPolicy {
    fn begin_episode(&mut self);
    fn act(&mut self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>>;
}

/// The two-level policy without exploration noise: a new subgoal every
/// `period` steps, carried forward by the goal transition in between.
pub struct HierarchicalPolicy<'a> {
    high: &'a ActorCritic,
    low: &'a ActorCritic,
    scheme: SubgoalScheme,
    period: usize,
    goal_dim: usize,
    t: usize,
    subgoal: Vec<f64>,
    prev_obs: Vec<f64>,
    input: Vec<f64>,
}

impl<'a> HierarchicalPolicy<'a> {
    pub fn new(high: &'a ActorCritic, low: &'a ActorCritic, scheme: SubgoalScheme, period: usize) -> Self {
        let goal_dim = high.action_dim();
        HierarchicalPolicy {
            high,
            low,
            scheme,
            period: period.max(1),
            goal_dim,
            t: 0,
            subgoal: vec![0.0; goal_dim],
            prev_obs: Vec::new(),
            input: Vec::new(),
        }
    }

    pub fn subgoal(&self) -> &[f64] {
        &self.subgoal
    }
}

impl GoalPolicy for HierarchicalPolicy<'_> {
    fn begin_episode(&mut self) {
        self.t = 0;
    }

    fn act(&mut self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        if self.t % self.period == 0 {
            self.input.clear();
            self.input.extend_from_slice(obs);
            self.input.extend_from_slice(goal);
            self.subgoal = self.high.actor.forward(&self.input)?;
        } else {
            let prev = std::mem::take(&mut self.subgoal);
            self.subgoal = vec![0.0; self.goal_dim];
            goal_transition_into(&prev, &self.prev_obs, obs, self.scheme, &mut self.subgoal);
        }
        self.prev_obs.clear();
        self.prev_obs.extend_from_slice(obs);
        self.input.clear();
        self.input.extend_from_slice(obs);
        self.input.extend_from_slice(&self.subgoal);
        self.t += 1;
        self.low.actor.forward(&self.input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub success_rate: f64,
    pub mean_return: f64,
}

/// Runs `episodes` rollouts toward the evaluation goal; episode `i` resets
/// the environment with seed `seed + i`.
pub fn evaluate(policy: &mut dyn GoalPolicy, spec: &MazeSpec, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let mut env = MazeEnv::new(spec.clone())?;
    let mut successes = 0usize;
    let mut total = 0.0;
    for i in 0..episodes {
        let mut obs = env.reset(seed.wrapping_add(i as u64), false);
        let goal = env.target();
        policy.begin_episode();
        loop {
            let a = policy.act(&obs, &goal)?;
            check_dim(env.action_dim(), a.len())?;
            let out = env.step(&a)?;
            total += out.reward;
            obs = out.state;
            if out.done {
                successes += usize::from(out.success);
                break;
            }
        }
    }
    let n = episodes.max(1) as f64;
    Ok(EvalSummary { success_rate: successes as f64 / n, mean_return: total / n })
}
