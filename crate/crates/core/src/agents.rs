//! TD3 actor-critic used at both levels of the hierarchy, replay storage,
//! and the low-level value function the planner uses as a distance oracle.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::goal::Transition;
use crate::nn::codec::{Codec, Decoder, Encoder};
use crate::nn::{Adam, AdamConfig, Mlp, MlpSpec, ParameterSet};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Config {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    /// Target-network soft update rate.
    pub tau: f64,
    /// Target policy smoothing noise, as a fraction of the action bound.
    pub policy_noise: f64,
    /// Clip for the smoothing noise, as a fraction of the action bound.
    pub noise_clip: f64,
    /// Exploration noise standard deviation in action units.
    pub expl_sigma: f64,
    /// Actor (and target) update every `policy_freq` critic updates.
    pub policy_freq: u64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            hidden: vec![64, 64],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            policy_noise: 0.2,
            noise_clip: 0.5,
            expl_sigma: 1.0,
            policy_freq: 1,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("discount {} outside [0, 1)", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid("soft update rate must be in (0, 1]"));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if self.policy_noise < 0.0 || self.noise_clip < 0.0 || self.expl_sigma < 0.0 {
            return Err(Error::invalid("noise parameters must be nonnegative"));
        }
        if self.policy_freq == 0 {
            return Err(Error::invalid("policy_freq must be positive"));
        }
        Ok(())
    }
}

/// One minibatch for a TD update. `dones` holds 0.0 / 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct TdBatch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub dones: Array1<f64>,
}

impl TdBatch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.nrows() == 0
    }

    fn validate(&self, obs_dim: usize, action_dim: usize) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        check_dim(obs_dim, self.obs.ncols())?;
        check_dim(obs_dim, self.next_obs.ncols())?;
        check_dim(action_dim, self.actions.ncols())?;
        for len in [self.actions.nrows(), self.rewards.len(), self.next_obs.nrows(), self.dones.len()] {
            check_dim(n, len)?;
        }
        Ok(())
    }
}

/// An auxiliary actor objective: mean loss over the batch and its gradient
/// with respect to each row of the actor's output.
pub trait ActionLoss {
    fn loss_and_grad(&mut self, obs: &Array2<f64>, actions: &Array2<f64>) -> (f64, Array2<f64>);
}

impl<F> ActionLoss for F
where
    F: FnMut(&Array2<f64>, &Array2<f64>) -> (f64, Array2<f64>),
{
    fn loss_and_grad(&mut self, obs: &Array2<f64>, actions: &Array2<f64>) -> (f64, Array2<f64>) {
        self(obs, actions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActorLoss {
    /// `−mean Q₁(s, π(s))`.
    pub plain: f64,
    /// Mean of the auxiliary loss (0 when none was supplied).
    pub extra: f64,
    /// `plain + η·extra`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub config: Td3Config,
    obs_dim: usize,
    action_bound: Vec<f64>,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub actor_opt: Adam,
    pub critic1_opt: Adam,
    pub critic2_opt: Adam,
    pub critic_updates: u64,
}

fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate![Axis(1), *a, *b]
}

impl ActorCritic {
    /// Actions live in `[-bound, bound]` componentwise.
    pub fn new(obs_dim: usize, action_bound: Vec<f64>, config: Td3Config, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if obs_dim == 0 || action_bound.is_empty() {
            return Err(Error::invalid("observation and action dimensions must be positive"));
        }
        let action_dim = action_bound.len();
        let actor = Mlp::new(MlpSpec::tanh_head(obs_dim, &config.hidden, action_bound.clone())?, rng)?;
        let critic_spec = MlpSpec::linear_head(obs_dim + action_dim, &config.hidden, 1)?;
        let critic1 = Mlp::new(critic_spec.clone(), rng)?;
        let critic2 = Mlp::new(critic_spec, rng)?;
        let actor_opt = Adam::new(AdamConfig::with_lr(config.actor_lr), &actor.params);
        let critic1_opt = Adam::new(AdamConfig::with_lr(config.critic_lr), &critic1.params);
        let critic2_opt = Adam::new(AdamConfig::with_lr(config.critic_lr), &critic2.params);
        Ok(ActorCritic {
            config,
            obs_dim,
            action_bound,
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            actor_opt,
            critic1_opt,
            critic2_opt,
            critic_updates: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_bound.len()
    }

    pub fn action_bound(&self) -> &[f64] {
        &self.action_bound
    }

    /// Deterministic actor output plus, when exploring, Gaussian noise; the
    /// result is clamped to the action bounds.
    pub fn act(&self, obs: &[f64], explore: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        let mut a = self.actor.forward(obs)?;
        for (ai, &b) in a.iter_mut().zip(&self.action_bound) {
            if explore && self.config.expl_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                *ai += self.config.expl_sigma * z;
            }
            *ai = ai.clamp(-b, b);
        }
        Ok(a)
    }

    pub fn act_batch(&self, obs: &Array2<f64>) -> Result<Array2<f64>> {
        self.actor.forward_batch(obs)
    }

    /// `V(obs) = Q₁(obs, π(obs))`.
    pub fn value_estimate(&self, obs: &[f64]) -> Result<f64> {
        let a = self.actor.forward(obs)?;
        let mut x = obs.to_vec();
        x.extend_from_slice(&a);
        Ok(self.critic1.forward(&x)?[0])
    }

    pub fn value_batch(&self, obs: &Array2<f64>) -> Result<Array1<f64>> {
        let a = self.actor.forward_batch(obs)?;
        let q = self.critic1.forward_batch(&hstack(obs, &a))?;
        Ok(q.column(0).to_owned())
    }

    /// Clipped double-Q target `r + γ(1 − done)·min(Q′₁, Q′₂)` at the
    /// smoothed target action.
    pub fn td_targets(&self, batch: &TdBatch, rng: &mut Rng) -> Result<Array1<f64>> {
        let mut next_a = self.actor_target.forward_batch(&batch.next_obs)?;
        for mut row in next_a.rows_mut() {
            for (a, &b) in row.iter_mut().zip(&self.action_bound) {
                let z: f64 = StandardNormal.sample(rng);
                let clip = self.config.noise_clip * b;
                let noise = (self.config.policy_noise * b * z).clamp(-clip, clip);
                *a = (*a + noise).clamp(-b, b);
            }
        }
        let x = hstack(&batch.next_obs, &next_a);
        let q1 = self.critic1_target.forward_batch(&x)?;
        let q2 = self.critic2_target.forward_batch(&x)?;
        let gamma = self.config.gamma;
        Ok(Array1::from_shape_fn(batch.len(), |i| {
            batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * q1[(i, 0)].min(q2[(i, 0)])
        }))
    }

    /// One Adam step on both critics; returns the mean squared TD error
    /// (averaged over the two critics) measured before the step.
    pub fn critic_update(&mut self, batch: &TdBatch, rng: &mut Rng) -> Result<f64> {
        batch.validate(self.obs_dim, self.action_dim())?;
        let y = self.td_targets(batch, rng)?;
        let x = hstack(&batch.obs, &batch.actions);
        let n = batch.len() as f64;
        let mut total = 0.0;
        for (critic, opt) in [(&mut self.critic1, &mut self.critic1_opt), (&mut self.critic2, &mut self.critic2_opt)] {
            let cache = critic.forward_cached(x.clone())?;
            let q = cache.output().column(0);
            let err = &q - &y;
            total += err.mapv(|e| e * e).sum() / n;
            let upstream = err.mapv(|e| 2.0 * e / n).insert_axis(Axis(1));
            let (grads, _) = critic.backward(&cache, &upstream)?;
            opt.step(&mut critic.params, &grads)?;
        }
        self.critic_updates += 1;
        Ok(total / 2.0)
    }

    /// Loss and actor-parameter gradient of `−mean Q₁(s, π(s)) + η·extra`.
    /// The auxiliary loss is always evaluated (for logging) but contributes
    /// gradient only when `eta > 0`.
    pub fn actor_gradient(
        &self,
        obs: &Array2<f64>,
        extra: Option<&mut dyn ActionLoss>,
        eta: f64,
    ) -> Result<(ActorLoss, ParameterSet)> {
        if obs.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        check_dim(self.obs_dim, obs.ncols())?;
        let n = obs.nrows() as f64;
        let actor_cache = self.actor.forward_cached(obs.clone())?;
        let actions = actor_cache.output();
        let critic_cache = self.critic1.forward_cached(hstack(obs, actions))?;
        let plain = -critic_cache.output().sum() / n;
        let upstream = Array2::from_elem((obs.nrows(), 1), -1.0 / n);
        let gx = self.critic1.input_gradient(&critic_cache, &upstream)?;
        let mut ga = gx.slice(s![.., self.obs_dim..]).to_owned();
        let mut extra_mean = 0.0;
        if let Some(f) = extra {
            let (l, g) = f.loss_and_grad(obs, actions);
            if g.dim() != ga.dim() {
                return Err(Error::invalid("auxiliary loss gradient has the wrong shape"));
            }
            extra_mean = l;
            if eta > 0.0 {
                ga.scaled_add(eta, &g);
            }
        }
        let (grads, _) = self.actor.backward(&actor_cache, &ga)?;
        Ok((ActorLoss { plain, extra: extra_mean, total: plain + eta * extra_mean }, grads))
    }

    /// Adam step on the actor followed by a soft update of all targets.
    pub fn actor_update(
        &mut self,
        obs: &Array2<f64>,
        extra: Option<&mut dyn ActionLoss>,
        eta: f64,
    ) -> Result<ActorLoss> {
        let (loss, grads) = self.actor_gradient(obs, extra, eta)?;
        self.actor_opt.step(&mut self.actor.params, &grads)?;
        self.soft_update_targets();
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self) {
        let tau = self.config.tau;
        self.actor_target.params.soft_update_from(&self.actor.params, tau);
        self.critic1_target.params.soft_update_from(&self.critic1.params, tau);
        self.critic2_target.params.soft_update_from(&self.critic2.params, tau);
    }

    /// Critic update, then an actor update when the delayed-policy counter
    /// says so. Returns `(critic loss, actor loss if updated)`.
    pub fn train_step(
        &mut self,
        batch: &TdBatch,
        extra: Option<&mut dyn ActionLoss>,
        eta: f64,
        rng: &mut Rng,
    ) -> Result<(f64, Option<ActorLoss>)> {
        let critic = self.critic_update(batch, rng)?;
        let actor = if self.critic_updates % self.config.policy_freq == 0 {
            Some(self.actor_update(&batch.obs, extra, eta)?)
        } else {
            None
        };
        Ok((critic, actor))
    }

    pub fn is_finite(&self) -> bool {
        [&self.actor, &self.critic1, &self.critic2].iter().all(|n| n.params.is_finite())
    }
}

impl Codec for Td3Config {
    fn encode(&self, e: &mut Encoder) {
        e.usize(self.hidden.len());
        for &h in &self.hidden {
            e.usize(h);
        }
        for v in [self.actor_lr, self.critic_lr, self.gamma, self.tau, self.policy_noise, self.noise_clip, self.expl_sigma]
        {
            e.f64(v);
        }
        e.u64(self.policy_freq);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let n = d.usize()?;
        if n > 64 {
            return Err(Error::Format("too many hidden layers".into()));
        }
        let hidden = (0..n).map(|_| d.usize()).collect::<Result<_>>()?;
        Ok(Td3Config {
            hidden,
            actor_lr: d.f64()?,
            critic_lr: d.f64()?,
            gamma: d.f64()?,
            tau: d.f64()?,
            policy_noise: d.f64()?,
            noise_clip: d.f64()?,
            expl_sigma: d.f64()?,
            policy_freq: d.u64()?,
        })
    }
}

impl Codec for ActorCritic {
    fn encode(&self, e: &mut Encoder) {
        e.put(&self.config);
        e.usize(self.obs_dim);
        e.f64s(&self.action_bound);
        for net in [&self.actor, &self.actor_target, &self.critic1, &self.critic2, &self.critic1_target, &self.critic2_target]
        {
            e.put(net);
        }
        for opt in [&self.actor_opt, &self.critic1_opt, &self.critic2_opt] {
            e.put(opt);
        }
        e.u64(self.critic_updates);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let config: Td3Config = d.get()?;
        let obs_dim = d.usize()?;
        let action_bound = d.f64s()?;
        let ac = ActorCritic {
            config,
            obs_dim,
            action_bound,
            actor: d.get()?,
            actor_target: d.get()?,
            critic1: d.get()?,
            critic2: d.get()?,
            critic1_target: d.get()?,
            critic2_target: d.get()?,
            actor_opt: d.get()?,
            critic1_opt: d.get()?,
            critic2_opt: d.get()?,
            critic_updates: d.u64()?,
        };
        if ac.actor.input_dim() != ac.obs_dim || ac.critic1.input_dim() != ac.obs_dim + ac.action_bound.len() {
            return Err(Error::Format("actor-critic dimensions are inconsistent".into()));
        }
        Ok(ac)
    }
}

/// Ring buffer with FIFO eviction and uniform sampling with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(ReplayBuffer { capacity, items: Vec::new(), next: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Slot `i` in storage order (not insertion order once wrapped).
    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    /// Items from oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &T> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    pub fn sample_indices(&self, batch: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::InvalidState(format!(
                "cannot sample {batch} items from a buffer holding {}",
                self.items.len()
            )));
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<Vec<&T>> {
        Ok(self.sample_indices(batch, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }
}

impl<T: Codec> Codec for ReplayBuffer<T> {
    fn encode(&self, e: &mut Encoder) {
        e.usize(self.capacity);
        e.usize(self.next);
        e.usize(self.items.len());
        for item in &self.items {
            item.encode(e);
        }
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let capacity = d.usize()?;
        let next = d.usize()?;
        let len = d.usize()?;
        if capacity == 0 || len > capacity || next >= capacity || len > d.remaining() {
            return Err(Error::Format("inconsistent replay buffer header".into()));
        }
        let items = (0..len).map(|_| T::decode(d)).collect::<Result<Vec<_>>>()?;
        Ok(ReplayBuffer { capacity, items, next })
    }
}

/// One high-level decision: the state and final goal it was made in, the
/// subgoal emitted, the summed (scaled) environment reward over the segment
/// and the state the segment ended in.
#[derive(Debug, Clone, PartialEq)]
pub struct HighTransition {
    pub state: Vec<f64>,
    pub goal: Vec<f64>,
    pub subgoal: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

impl Codec for HighTransition {
    fn encode(&self, e: &mut Encoder) {
        e.f64s(&self.state);
        e.f64s(&self.goal);
        e.f64s(&self.subgoal);
        e.f64(self.reward);
        e.f64s(&self.next_state);
        e.bool(self.done);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        Ok(HighTransition {
            state: d.f64s()?,
            goal: d.f64s()?,
            subgoal: d.f64s()?,
            reward: d.f64()?,
            next_state: d.f64s()?,
            done: d.bool()?,
        })
    }
}

impl Codec for Transition {
    fn encode(&self, e: &mut Encoder) {
        e.f64s(&self.state);
        e.f64s(&self.subgoal);
        e.f64s(&self.action);
        e.f64(self.reward);
        e.f64s(&self.next_state);
        e.bool(self.done);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let state = d.f64s()?.try_into()?;
        let subgoal = d.f64s()?.try_into()?;
        let action = d.f64s()?.try_into()?;
        let reward = d.f64()?;
        let next_state = d.f64s()?.try_into()?;
        let done = d.bool()?;
        Transition::new(state, subgoal, action, reward, next_state, done)
    }
}

/// Sampled high-level records laid out as matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelBatch {
    pub states: Array2<f64>,
    pub goals: Array2<f64>,
    pub subgoals: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

fn stack_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * width);
    for r in rows {
        data.extend_from_slice(r);
    }
    Array2::from_shape_vec((n, width), data).expect("rows share a width")
}

impl HighLevelBatch {
    pub fn from_records(records: &[&HighTransition]) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let (sd, gd, ad) = (first.state.len(), first.goal.len(), first.subgoal.len());
        for r in records {
            check_dim(sd, r.state.len())?;
            check_dim(sd, r.next_state.len())?;
            check_dim(gd, r.goal.len())?;
            check_dim(ad, r.subgoal.len())?;
        }
        Ok(HighLevelBatch {
            states: stack_rows(records.iter().map(|r| r.state.as_slice()), sd),
            goals: stack_rows(records.iter().map(|r| r.goal.as_slice()), gd),
            subgoals: stack_rows(records.iter().map(|r| r.subgoal.as_slice()), ad),
            rewards: records.iter().map(|r| r.reward).collect(),
            next_states: stack_rows(records.iter().map(|r| r.next_state.as_slice()), sd),
            dones: records.iter().map(|r| if r.done { 1.0 } else { 0.0 }).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    /// High-level observations are `state ⊕ final goal`.
    pub fn td_batch(&self) -> TdBatch {
        TdBatch {
            obs: hstack(&self.states, &self.goals),
            actions: self.subgoals.clone(),
            rewards: self.rewards.clone(),
            next_obs: hstack(&self.next_states, &self.goals),
            dones: self.dones.clone(),
        }
    }
}

pub(crate) fn rows_to_matrix<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Array2<f64> {
    stack_rows(rows, width)
}
