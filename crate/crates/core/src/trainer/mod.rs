//! The training loop: episode collection with novelty tracking, per-episode
//! update batches for both levels, periodic adjacency retraining and
//! greedy evaluation.

mod checkpoint;
pub mod config;
pub mod eval;
pub mod metrics;

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::RngCore;

use crate::adjacency::{AdjacencyMatrix, AdjacencyNet};
use crate::agents::{ActorCritic, HighLevelBatch, HighTransition, ReplayBuffer, TdBatch};
use crate::coverage::{gather_landmarks, LandmarkCounts};
use crate::envs::{MazeEnv, MazeSpec};
use crate::error::{check_dim, Error, Result};
use crate::goal::{goal_transition_into, l2, low_level_reward_raw, project, GoalVector, StateVector, SubgoalScheme, Transition};
use crate::nn::codec::Container;
use crate::novelty::{NoveltyQueue, RndPair};
use crate::planner::{landmark_loss_batch, pseudo_landmark, select_landmark, PlanningContext, ShiftTracker};
use crate::rng::{stream, Rng, Stream};

pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, CHECKPOINT_VERSION};
pub use config::{QueueMetric, RndInput, TrainConfig};
pub use eval::{evaluate, EvalSummary, GoalPolicy, HierarchicalPolicy};
pub use metrics::{MetricsRecord, CSV_HEADER};

use metrics::LossAccumulator;

/// Novelty, adjacency and planning state; absent when bypassed.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkState {
    pub rnd: RndPair,
    pub queue: NoveltyQueue,
    pub matrix: AdjacencyMatrix,
    pub net: AdjacencyNet,
    pub net_trained: bool,
    /// Goal sequences of episodes not yet folded into the matrix.
    pub pending: Vec<Vec<Vec<f64>>>,
    pub shift: ShiftTracker,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Streams {
    env: Rng,
    low_noise: Rng,
    high_noise: Rng,
    low_buffer: Rng,
    high_buffer: Rng,
    coverage: Rng,
    queue: Rng,
    adjacency: Rng,
    rnd: Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            env: stream(seed, Stream::Env),
            low_noise: stream(seed, Stream::LowNoise),
            high_noise: stream(seed, Stream::HighNoise),
            low_buffer: stream(seed, Stream::LowBuffer),
            high_buffer: stream(seed, Stream::HighBuffer),
            coverage: stream(seed, Stream::Coverage),
            queue: stream(seed, Stream::Queue),
            adjacency: stream(seed, Stream::Adjacency),
            rnd: stream(seed, Stream::Rnd),
        }
    }

    fn all(&self) -> [&Rng; 9] {
        [
            &self.env,
            &self.low_noise,
            &self.high_noise,
            &self.low_buffer,
            &self.high_buffer,
            &self.coverage,
            &self.queue,
            &self.adjacency,
            &self.rnd,
        ]
    }

    fn all_mut(&mut self) -> [&mut Rng; 9] {
        [
            &mut self.env,
            &mut self.low_noise,
            &mut self.high_noise,
            &mut self.low_buffer,
            &mut self.high_buffer,
            &mut self.coverage,
            &mut self.queue,
            &mut self.adjacency,
            &mut self.rnd,
        ]
    }
}

/// Observation of one collected step, exposed for instrumentation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step: u64,
    pub t: usize,
    pub state: Vec<f64>,
    pub subgoal: Vec<f64>,
    pub resampled: bool,
}

/// One high-level update's planning outcome, exposed for instrumentation.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanTrace {
    pub step: u64,
    pub delta_pseudo: f64,
    pub current: Vec<Vec<f64>>,
    pub pseudo: Vec<Vec<f64>>,
    pub reachable: Vec<bool>,
    pub plain_actor_loss: f64,
    pub landmark_loss: f64,
    pub actor_loss: f64,
}

#[derive(Default)]
pub struct Hooks<'a> {
    pub on_step: Option<Box<dyn FnMut(&StepTrace) + 'a>>,
    pub on_plan: Option<Box<dyn FnMut(&PlanTrace) + 'a>>,
}

pub struct Trainer<'h> {
    config: TrainConfig,
    spec: MazeSpec,
    env: MazeEnv,
    pub high: ActorCritic,
    pub low: ActorCritic,
    pub low_buffer: ReplayBuffer<Transition>,
    pub high_buffer: ReplayBuffer<HighTransition>,
    pub landmarks: Option<LandmarkState>,
    rngs: Streams,
    step: u64,
    episode: u64,
    evals: u64,
    losses: LossAccumulator,
    last_counts: (usize, usize),
    metrics: Vec<MetricsRecord>,
    elapsed_before: f64,
    started: Instant,
    graph_dump: Option<Box<dyn Write>>,
    hooks: Hooks<'h>,
}

fn state_vector(v: &[f64]) -> Result<StateVector> {
    StateVector::new(v.to_vec())
}

impl<'h> Trainer<'h> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.env.maze_spec()?;
        let env = MazeEnv::new(spec.clone())?;
        let state_dim = spec.state_dim();
        let goal_dim = env.goal_dim();
        let mut init = stream(config.seed, Stream::Init);
        let high = ActorCritic::new(
            state_dim + goal_dim,
            vec![config.subgoal_scale; goal_dim],
            config.high.td3(),
            &mut init,
        )?;
        let low = ActorCritic::new(state_dim + goal_dim, env.action_bound().to_vec(), config.low.td3(), &mut init)?;
        let landmarks = if config.landmarks.bypass {
            None
        } else {
            let rnd_dim = match config.novelty.rnd_input {
                RndInput::Goal => goal_dim,
                RndInput::State => state_dim,
            };
            let n = &config.novelty;
            let a = &config.adjacency;
            let mut rnd_init = stream(config.seed ^ 0x5eed, Stream::Rnd);
            let mut adj_init = stream(config.seed ^ 0x5eed, Stream::Adjacency);
            Some(LandmarkState {
                rnd: RndPair::new(rnd_dim, &n.rnd_hidden, n.rnd_embedding, n.rnd_lr, &mut rnd_init)?,
                queue: NoveltyQueue::new(n.capacity, n.lambda)?,
                matrix: AdjacencyMatrix::new(a.k, a.resolution)?,
                net: AdjacencyNet::new(goal_dim, &a.hidden, a.embedding, a.lr, a.eps_k, a.margin, &mut adj_init)?,
                net_trained: false,
                pending: Vec::new(),
                shift: ShiftTracker::default(),
            })
        };
        Ok(Trainer {
            low_buffer: ReplayBuffer::new(config.low.buffer_size)?,
            high_buffer: ReplayBuffer::new(config.high.buffer_size)?,
            rngs: Streams::new(config.seed),
            config,
            spec,
            env,
            high,
            low,
            landmarks,
            step: 0,
            episode: 0,
            evals: 0,
            losses: LossAccumulator::default(),
            last_counts: (0, 0),
            metrics: Vec::new(),
            elapsed_before: 0.0,
            started: Instant::now(),
            graph_dump: None,
            hooks: Hooks::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn spec(&self) -> &MazeSpec {
        &self.spec
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        &self.metrics
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.total_steps && !self.metrics.is_empty()
    }

    /// Writes each planned graph (first batch sample) as text.
    pub fn set_graph_dump(&mut self, sink: Box<dyn Write>) {
        self.graph_dump = Some(sink);
    }

    pub fn set_hooks(&mut self, hooks: Hooks<'h>) {
        self.hooks = hooks;
    }

    fn goal_dim(&self) -> usize {
        self.env.goal_dim()
    }

    /// Trains to the configured step budget.
    pub fn run(&mut self) -> Result<&[MetricsRecord]> {
        self.run_until(self.config.total_steps)?;
        Ok(&self.metrics)
    }

    /// Runs whole episodes until at least `limit` steps have been taken (or
    /// the budget is exhausted), so the trainer stops on an episode boundary.
    pub fn run_until(&mut self, limit: u64) -> Result<()> {
        self.started = Instant::now();
        if self.metrics.is_empty() {
            self.record_eval()?;
        }
        let limit = limit.min(self.config.total_steps);
        while self.step < limit {
            self.run_episode()?;
        }
        self.elapsed_before += self.started.elapsed().as_secs_f64();
        self.started = Instant::now();
        Ok(())
    }

    fn run_episode(&mut self) -> Result<()> {
        let m = self.config.subgoal_period;
        let gd = self.goal_dim();
        let scheme = self.config.scheme;
        let seed = self.rngs.env.next_u64();
        let mut obs = self.env.reset(seed, true);
        let goal = self.env.target().to_vec();
        let mut subgoal = vec![0.0; gd];
        let mut segment_start = obs.clone();
        let mut segment_subgoal = subgoal.clone();
        let mut segment_reward = 0.0;
        let mut segment_open = false;
        let mut trajectory = vec![project(&obs, gd).to_vec()];
        let mut input = Vec::with_capacity(obs.len() + gd);
        let mut t = 0usize;

        while self.step < self.config.total_steps {
            let resampled = t % m == 0;
            if resampled {
                if segment_open {
                    self.push_high(&segment_start, &goal, &segment_subgoal, segment_reward, &obs, false);
                }
                input.clear();
                input.extend_from_slice(&obs);
                input.extend_from_slice(&goal);
                subgoal = self.high.act(&input, true, &mut self.rngs.high_noise)?;
                segment_start.clone_from(&obs);
                segment_subgoal.clone_from(&subgoal);
                segment_reward = 0.0;
                segment_open = true;
            }
            if let Some(f) = self.hooks.on_step.as_mut() {
                f(&StepTrace { step: self.step, t, state: obs.clone(), subgoal: subgoal.clone(), resampled });
            }
            input.clear();
            input.extend_from_slice(&obs);
            input.extend_from_slice(&subgoal);
            let action = self.low.act(&input, true, &mut self.rngs.low_noise)?;
            let out = self.env.step(&action)?;
            segment_reward += out.reward;

            let low_reward = self.config.low.reward_scale * low_level_reward_raw(&obs, &subgoal, &out.state, scheme);
            self.low_buffer.push(Transition::new(
                state_vector(&obs)?,
                GoalVector::new(subgoal.clone())?,
                action.try_into()?,
                low_reward,
                state_vector(&out.state)?,
                false,
            )?);
            self.observe_novelty(&obs)?;

            let mut next_subgoal = vec![0.0; gd];
            goal_transition_into(&subgoal, &obs, &out.state, scheme, &mut next_subgoal);
            subgoal = next_subgoal;
            trajectory.push(project(&out.state, gd).to_vec());

            self.step += 1;
            t += 1;
            obs = out.state;
            if self.config.per_step_training {
                self.low_update()?;
                if t % m == 0 {
                    self.high_update()?;
                    self.rnd_update()?;
                }
            }
            if self.step % self.config.eval.period == 0 {
                self.record_eval()?;
            }
            if out.done {
                self.push_high(&segment_start, &goal, &segment_subgoal, segment_reward, &obs, out.success);
                segment_open = false;
                break;
            }
        }
        if segment_open {
            self.push_high(&segment_start, &goal, &segment_subgoal, segment_reward, &obs, false);
        }
        self.episode += 1;

        if !self.config.per_step_training {
            for j in 0..t {
                self.low_update()?;
                if j % m == 0 {
                    self.high_update()?;
                    self.rnd_update()?;
                }
            }
        }
        self.adjacency_update(trajectory)
    }

    fn push_high(&mut self, start: &[f64], goal: &[f64], subgoal: &[f64], reward: f64, next: &[f64], done: bool) {
        self.high_buffer.push(HighTransition {
            state: start.to_vec(),
            goal: goal.to_vec(),
            subgoal: subgoal.to_vec(),
            reward: self.config.high.reward_scale * reward,
            next_state: next.to_vec(),
            done,
        });
    }

    fn rnd_input<'a>(&self, state: &'a [f64]) -> &'a [f64] {
        match self.config.novelty.rnd_input {
            RndInput::Goal => project(state, self.goal_dim()),
            RndInput::State => state,
        }
    }

    fn observe_novelty(&mut self, state: &[f64]) -> Result<()> {
        let gd = self.goal_dim();
        let input = self.rnd_input(state).to_vec();
        let metric = self.config.novelty.metric;
        let k = self.config.adjacency.k;
        let Some(lm) = self.landmarks.as_mut() else { return Ok(()) };
        let score = lm.rnd.score(&input)?;
        if !score.is_finite() {
            return Err(Error::NonFinite(format!("novelty score at step {}", self.step)));
        }
        let goal = project(state, gd);
        if metric == QueueMetric::Adjacency && lm.net_trained {
            let net = &lm.net;
            lm.queue.insert_with_metric(state, goal, score, |a, b| {
                net.estimate_distance(a, b, k).unwrap_or(f64::INFINITY)
            })?;
        } else {
            lm.queue.insert(state, goal, score)?;
        }
        Ok(())
    }

    fn check_finite(&self, what: &str, value: f64) -> Result<()> {
        if value.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{what} = {value} at step {} (episode {})", self.step, self.episode)))
        }
    }

    fn low_update(&mut self) -> Result<()> {
        let batch = self.config.low.batch_size;
        if self.low_buffer.len() < batch {
            return Ok(());
        }
        let scheme = self.config.scheme;
        let gd = self.goal_dim();
        let idx = self.low_buffer.sample_indices(batch, &mut self.rngs.low_buffer)?;
        let sd = self.spec.state_dim();
        let width = sd + gd;
        let mut obs = Array2::zeros((batch, width));
        let mut next = Array2::zeros((batch, width));
        let mut actions = Array2::zeros((batch, self.low.action_dim()));
        let mut rewards = ndarray::Array1::zeros(batch);
        let mut h = vec![0.0; gd];
        for (r, &i) in idx.iter().enumerate() {
            let tr = self.low_buffer.get(i);
            let mut row = obs.row_mut(r);
            row.slice_mut(ndarray::s![..sd]).assign(&ndarray::ArrayView1::from(tr.state.as_slice()));
            row.slice_mut(ndarray::s![sd..]).assign(&ndarray::ArrayView1::from(tr.subgoal.as_slice()));
            goal_transition_into(&tr.subgoal, &tr.state, &tr.next_state, scheme, &mut h);
            let mut row = next.row_mut(r);
            row.slice_mut(ndarray::s![..sd]).assign(&ndarray::ArrayView1::from(tr.next_state.as_slice()));
            row.slice_mut(ndarray::s![sd..]).assign(&ndarray::ArrayView1::from(h.as_slice()));
            actions.row_mut(r).assign(&ndarray::ArrayView1::from(tr.action.as_slice()));
            rewards[r] = tr.reward;
        }
        let td = TdBatch { obs, actions, rewards, next_obs: next, dones: ndarray::Array1::zeros(batch) };
        let (critic, actor) = self.low.train_step(&td, None, 0.0, &mut self.rngs.low_noise)?;
        self.check_finite("low critic loss", critic)?;
        self.losses.low_critic.add(critic);
        if let Some(a) = actor {
            self.check_finite("low actor loss", a.total)?;
            self.losses.low_actor.add(a.total);
        }
        Ok(())
    }

    fn rnd_update(&mut self) -> Result<()> {
        let batch = self.config.novelty.rnd_batch_size;
        if self.landmarks.is_none() || self.low_buffer.len() < batch {
            return Ok(());
        }
        let idx = self.low_buffer.sample_indices(batch, &mut self.rngs.rnd)?;
        let dim = self.rnd_input(self.low_buffer.get(0).state.as_slice()).len();
        let mut x = Array2::zeros((batch, dim));
        for (r, &i) in idx.iter().enumerate() {
            let s = self.rnd_input(self.low_buffer.get(i).state.as_slice());
            x.row_mut(r).assign(&ndarray::ArrayView1::from(s));
        }
        let lm = self.landmarks.as_mut().expect("checked above");
        let loss = lm.rnd.update(&x)?;
        self.check_finite("RND loss", loss)?;
        self.losses.rnd.add(loss);
        Ok(())
    }

    fn shift_magnitude(&self) -> f64 {
        if self.step < self.config.warmup_steps() {
            return 0.0;
        }
        match (&self.landmarks, self.config.planner.auto_shift) {
            (Some(lm), true) => lm.shift.mean().unwrap_or(self.config.planner.delta_pseudo),
            _ => self.config.planner.delta_pseudo,
        }
    }

    fn high_update(&mut self) -> Result<()> {
        let batch = self.config.high.batch_size;
        if self.high_buffer.len() < batch {
            return Ok(());
        }
        let records = self.high_buffer.sample(batch, &mut self.rngs.high_buffer)?;
        let hb = HighLevelBatch::from_records(&records)?;
        let td = hb.td_batch();
        // With a zero weight the landmark term cannot change the update, so
        // planning is skipped.
        let guided = self.config.landmarks.eta > 0.0 && self.landmarks.as_ref().is_some_and(|lm| lm.net_trained);
        if !guided {
            let (critic, actor) = self.high.train_step(&td, None, 0.0, &mut self.rngs.high_noise)?;
            return self.log_high(critic, actor.map(|a| (a.total, None)));
        }

        let gd = self.goal_dim();
        let scheme = self.config.scheme;
        let cfg = &self.config;
        let counts = LandmarkCounts {
            coverage: cfg.landmarks.coverage,
            novelty: cfg.landmarks.novelty,
            pool_size: cfg.landmarks.pool_size,
            queue_mode: cfg.landmarks.queue_sampling,
        };
        let gamma_dist = cfg.planner.gamma_dist;
        let eta = cfg.landmarks.eta;
        let delta = self.shift_magnitude();
        let lm = self.landmarks.as_mut().expect("guided implies landmarks");
        let set = gather_landmarks(
            &self.low_buffer,
            |t| t.state.as_slice(),
            gd,
            &lm.queue,
            counts,
            &mut self.rngs.coverage,
            &mut self.rngs.queue,
        )?;
        self.last_counts = (set.coverage.len(), set.novelty.len());

        let low = &self.low;
        let mut value = |x: &Array2<f64>| low.value_batch(x);
        let ctx = PlanningContext::new(set.iter().cloned().collect(), &mut value, scheme, gd, gamma_dist)?;
        let states: Vec<&[f64]> = records.iter().map(|r| r.state.as_slice()).collect();
        let goals: Vec<&[f64]> = records.iter().map(|r| r.goal.as_slice()).collect();
        let graphs = ctx.graphs(&states, &goals, &mut value)?;

        let mut current = Array2::zeros((batch, gd));
        let mut pseudo = Array2::zeros((batch, gd));
        let mut active = vec![false; batch];
        for (i, g) in graphs.iter().enumerate() {
            let cur = project(states[i], gd);
            current.row_mut(i).assign(&ndarray::ArrayView1::from(cur));
            let target = match select_landmark(g) {
                Some(sel) => {
                    lm.shift.record(l2(&sel.goal, cur));
                    active[i] = true;
                    pseudo_landmark(cur, &sel.goal, delta)
                }
                None => cur.to_vec(),
            };
            pseudo.row_mut(i).assign(&ndarray::ArrayView1::from(target.as_slice()));
        }
        if let Some(sink) = self.graph_dump.as_mut() {
            writeln!(sink, "graph step={} episode={}", self.step, self.episode)?;
            graphs[0].write_text(&mut *sink)?;
        }

        let net = &lm.net;
        let mut loss = |_: &Array2<f64>, actions: &Array2<f64>| -> (f64, Array2<f64>) {
            let absolute = match scheme {
                SubgoalScheme::Relative => actions + &current,
                SubgoalScheme::Absolute => actions.clone(),
            };
            landmark_loss_batch(net, &pseudo, &absolute, &active)
                .unwrap_or_else(|_| (f64::NAN, Array2::zeros(actions.raw_dim())))
        };
        let (critic, actor) = self.high.train_step(&td, Some(&mut loss), eta, &mut self.rngs.high_noise)?;
        if let (Some(a), Some(f)) = (actor.as_ref(), self.hooks.on_plan.as_mut()) {
            f(&PlanTrace {
                step: self.step,
                delta_pseudo: delta,
                current: current.rows().into_iter().map(|r| r.to_vec()).collect(),
                pseudo: pseudo.rows().into_iter().map(|r| r.to_vec()).collect(),
                reachable: active.clone(),
                plain_actor_loss: a.plain,
                landmark_loss: a.extra,
                actor_loss: a.total,
            });
        }
        self.log_high(critic, actor.map(|a| (a.total, Some(a.extra))))
    }

    fn log_high(&mut self, critic: f64, actor: Option<(f64, Option<f64>)>) -> Result<()> {
        self.check_finite("high critic loss", critic)?;
        self.losses.high_critic.add(critic);
        if let Some((total, extra)) = actor {
            self.check_finite("high actor loss", total)?;
            self.losses.high_actor.add(total);
            if let Some(l) = extra {
                self.check_finite("landmark loss", l)?;
                self.losses.landmark.add(l);
            }
        }
        if !self.high.is_finite() {
            return Err(Error::NonFinite(format!("high-level parameters at step {}", self.step)));
        }
        Ok(())
    }

    fn adjacency_update(&mut self, trajectory: Vec<Vec<f64>>) -> Result<()> {
        let period = self.config.adjacency_period() as u64;
        let a = &self.config.adjacency;
        let Some(lm) = self.landmarks.as_mut() else { return Ok(()) };
        lm.pending.push(trajectory);
        if self.episode % period != 0 {
            return Ok(());
        }
        let pending = std::mem::take(&mut lm.pending);
        lm.matrix.update(&pending)?;
        if let Some(loss) = lm.net.train_on(&lm.matrix, a.epochs, a.batch_size, a.max_batches_per_epoch, &mut self.rngs.adjacency)? {
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("adjacency loss at episode {}", self.episode)));
            }
            lm.net_trained = true;
        }
        Ok(())
    }

    fn eval_seed(&self) -> u64 {
        // Fixed per evaluation index and disjoint from training resets.
        self.config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (0xe7a1_0000_0000 + self.evals * 10_007)
    }

    pub fn evaluate_policy(&self, episodes: usize, seed: u64) -> Result<EvalSummary> {
        evaluate_checkpoint(self, &self.spec, episodes, seed)
    }

    fn record_eval(&mut self) -> Result<()> {
        let summary = self.evaluate_policy(self.config.eval.episodes, self.eval_seed())?;
        self.evals += 1;
        let queue_size = self.landmarks.as_ref().map_or(0, |lm| lm.queue.len());
        let l = &mut self.losses;
        self.metrics.push(MetricsRecord {
            step: self.step,
            episode: self.episode,
            eval_success_rate: summary.success_rate,
            mean_episode_return: summary.mean_return,
            high_critic_loss: l.high_critic.take(),
            low_critic_loss: l.low_critic.take(),
            high_actor_loss: l.high_actor.take(),
            low_actor_loss: l.low_actor.take(),
            landmark_loss: l.landmark.take(),
            rnd_loss: l.rnd.take(),
            queue_size,
            coverage_landmarks: self.last_counts.0,
            novelty_landmarks: self.last_counts.1,
            wall_seconds: self.elapsed_before + self.started.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    pub fn to_container(&self) -> Container {
        checkpoint::encode(self)
    }

    pub fn from_container(container: &Container) -> Result<Self> {
        checkpoint::decode(container)
    }
}

/// Greedy evaluation of a trainer's policies on `spec`, which may differ
/// from the training maze as long as the dimensions agree.
pub fn evaluate_checkpoint(trainer: &Trainer, spec: &MazeSpec, episodes: usize, seed: u64) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::invalid("episodes must be positive"));
    }
    let env = MazeEnv::new(spec.clone())?;
    check_dim(trainer.high.obs_dim(), env.state_dim() + env.goal_dim())?;
    check_dim(trainer.high.action_dim(), env.goal_dim())?;
    check_dim(trainer.low.action_dim(), env.action_dim())?;
    let config = trainer.config();
    let mut policy = HierarchicalPolicy::new(&trainer.high, &trainer.low, config.scheme, config.subgoal_period);
    evaluate(&mut policy, spec, episodes, seed)
}
