//! Flat `key = value` training configuration with dotted keys.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::agents::Td3Config;
use crate::envs::{Dynamics, Layout, MazeSpec, RewardMode, U_MAZE};
use crate::error::{Error, Result};
use crate::goal::SubgoalScheme;
use crate::novelty::SampleMode;

/// What the RND networks see: the goal-space projection or the full state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RndInput {
    #[default]
    Goal,
    State,
}

/// Distance used for similarity eviction in the novelty queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueueMetric {
    #[default]
    Goal,
    /// Estimated transition distance from the adjacency network (falls
    /// back to goal distance until the network has been trained).
    Adjacency,
}

/// Value types that can appear in a config file.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(f64, u64, usize, bool, String);

macro_rules! named_value {
    ($t:ty { $($name:literal => $variant:expr),* $(,)? }) => {
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($variant),)*
                    _ => Err(format!("expected one of {}", [$($name),*].join(", "))),
                }
            }
            fn render(&self) -> String {
                $(if *self == $variant { return $name.to_string(); })*
                unreachable!()
            }
        }
    };
}

named_value!(SubgoalScheme { "relative" => SubgoalScheme::Relative, "absolute" => SubgoalScheme::Absolute });
named_value!(RewardMode { "dense" => RewardMode::Dense, "sparse" => RewardMode::Sparse });
named_value!(Dynamics { "point" => Dynamics::PointMass, "grid" => Dynamics::Grid });
named_value!(SampleMode { "uniform" => SampleMode::Uniform, "top_priority" => SampleMode::TopPriority });
named_value!(RndInput { "goal" => RndInput::Goal, "state" => RndInput::State });
named_value!(QueueMetric { "goal" => QueueMetric::Goal, "adjacency" => QueueMetric::Adjacency });

impl ConfigValue for Vec<usize> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| p.trim().parse().map_err(|e| format!("{e}"))).collect()
    }

    fn render(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// `u_maze` for the built-in layout, otherwise a path to a layout file.
    pub layout: String,
    pub dynamics: Dynamics,
    pub cell_size: f64,
    pub max_steps: usize,
    pub success_radius: f64,
    pub reward: RewardMode,
    pub noise_sigma: f64,
}

impl EnvConfig {
    pub fn maze_spec(&self) -> Result<MazeSpec> {
        let layout = if self.layout == "u_maze" {
            Layout::parse(U_MAZE)?
        } else {
            Layout::from_file(Path::new(&self.layout))?
        };
        let mut spec = MazeSpec::from_layout(layout, self.dynamics, self.cell_size);
        spec.max_steps = self.max_steps;
        spec.success_radius = self.success_radius;
        spec.reward_mode = self.reward;
        spec.noise_sigma = self.noise_sigma;
        spec.validate()?;
        Ok(spec)
    }
}

/// Hyperparameters of one level of the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub expl_sigma: f64,
    pub policy_freq: u64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub reward_scale: f64,
}

impl LevelConfig {
    pub fn td3(&self) -> Td3Config {
        Td3Config {
            hidden: self.hidden.clone(),
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            gamma: self.gamma,
            tau: self.tau,
            policy_noise: self.policy_noise,
            noise_clip: self.noise_clip,
            expl_sigma: self.expl_sigma,
            policy_freq: self.policy_freq,
        }
    }

    fn defaults(gamma: f64, expl_sigma: f64, reward_scale: f64) -> Self {
        LevelConfig {
            hidden: vec![64, 64],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma,
            tau: 0.005,
            policy_noise: 0.2,
            noise_clip: 0.5,
            expl_sigma,
            policy_freq: 1,
            batch_size: 128,
            buffer_size: 200_000,
            reward_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkConfig {
    pub coverage: usize,
    pub novelty: usize,
    pub pool_size: usize,
    pub queue_sampling: SampleMode,
    /// Weight of the landmark loss in the high-level actor objective.
    pub eta: f64,
    /// Skip every landmark component (novelty, adjacency, planning).
    pub bypass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyConfig {
    pub capacity: usize,
    pub lambda: f64,
    pub metric: QueueMetric,
    pub rnd_input: RndInput,
    pub rnd_hidden: Vec<usize>,
    pub rnd_embedding: usize,
    pub rnd_lr: f64,
    pub rnd_batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyConfig {
    pub k: usize,
    pub eps_k: f64,
    pub margin: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_batches_per_epoch: usize,
    /// Episodes between matrix updates and retraining; 0 derives it from
    /// `period_fraction` of the step budget.
    pub period_episodes: usize,
    pub period_fraction: f64,
    pub hidden: Vec<usize>,
    pub embedding: usize,
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub gamma_dist: f64,
    pub delta_pseudo: f64,
    /// Fraction of the step budget trained with a zero shift magnitude.
    pub warmup_fraction: f64,
    pub auto_shift: bool,
    pub dump_graphs: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub period: u64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_steps: u64,
    pub scheme: SubgoalScheme,
    /// Steps between high-level decisions.
    pub subgoal_period: usize,
    /// Bound on each subgoal component.
    pub subgoal_scale: f64,
    /// Train during the episode (one low update per step) instead of after it.
    pub per_step_training: bool,
    pub env: EnvConfig,
    pub high: LevelConfig,
    pub low: LevelConfig,
    pub landmarks: LandmarkConfig,
    pub novelty: NoveltyConfig,
    pub adjacency: AdjacencyConfig,
    pub planner: PlannerConfig,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            total_steps: 150_000,
            scheme: SubgoalScheme::Relative,
            subgoal_period: 10,
            subgoal_scale: 4.0,
            per_step_training: false,
            env: EnvConfig {
                layout: "u_maze".into(),
                dynamics: Dynamics::PointMass,
                cell_size: 4.0,
                max_steps: 200,
                success_radius: 2.5,
                reward: RewardMode::Dense,
                noise_sigma: 0.0,
            },
            high: LevelConfig::defaults(0.99, 1.0, 0.1),
            low: LevelConfig::defaults(0.95, 0.2, 1.0),
            landmarks: LandmarkConfig {
                coverage: 20,
                novelty: 20,
                pool_size: 400,
                queue_sampling: SampleMode::Uniform,
                eta: 20.0,
                bypass: false,
            },
            novelty: NoveltyConfig {
                capacity: 500,
                lambda: 0.2,
                metric: QueueMetric::Goal,
                rnd_input: RndInput::Goal,
                rnd_hidden: vec![64, 64],
                rnd_embedding: 32,
                rnd_lr: 1e-3,
                rnd_batch_size: 128,
            },
            adjacency: AdjacencyConfig {
                k: 5,
                eps_k: 1.0,
                margin: 0.2,
                lr: 2e-4,
                batch_size: 64,
                epochs: 25,
                max_batches_per_epoch: 50,
                period_episodes: 0,
                period_fraction: 0.05,
                hidden: vec![64, 64],
                embedding: 32,
                resolution: 0.5,
            },
            planner: PlannerConfig {
                gamma_dist: 38.0 * 200.0 / 500.0,
                delta_pseudo: 0.5,
                warmup_fraction: 0.06,
                auto_shift: false,
                dump_graphs: false,
            },
            eval: EvalConfig { period: 5000, episodes: 5 },
        }
    }
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        /// Every accepted key, in file order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl TrainConfig {
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key.trim() {
                    $($key => {
                        self.$($field).+ = ConfigValue::parse_value(value)
                            .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))?;
                    })*
                    other => return Err(Error::Config(format!("unknown key {other:?}"))),
                }
                Ok(())
            }

            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$($field).+.render())),*]
            }
        }
    };
}

config_keys! {
    "seed" => seed,
    "total_steps" => total_steps,
    "scheme" => scheme,
    "subgoal_period" => subgoal_period,
    "subgoal_scale" => subgoal_scale,
    "per_step_training" => per_step_training,
    "env.layout" => env.layout,
    "env.dynamics" => env.dynamics,
    "env.cell_size" => env.cell_size,
    "env.max_steps" => env.max_steps,
    "env.success_radius" => env.success_radius,
    "env.reward" => env.reward,
    "env.noise_sigma" => env.noise_sigma,
    "high.hidden" => high.hidden,
    "high.actor_lr" => high.actor_lr,
    "high.critic_lr" => high.critic_lr,
    "high.gamma" => high.gamma,
    "high.tau" => high.tau,
    "high.policy_noise" => high.policy_noise,
    "high.noise_clip" => high.noise_clip,
    "high.expl_sigma" => high.expl_sigma,
    "high.policy_freq" => high.policy_freq,
    "high.batch_size" => high.batch_size,
    "high.buffer_size" => high.buffer_size,
    "high.reward_scale" => high.reward_scale,
    "low.hidden" => low.hidden,
    "low.actor_lr" => low.actor_lr,
    "low.critic_lr" => low.critic_lr,
    "low.gamma" => low.gamma,
    "low.tau" => low.tau,
    "low.policy_noise" => low.policy_noise,
    "low.noise_clip" => low.noise_clip,
    "low.expl_sigma" => low.expl_sigma,
    "low.policy_freq" => low.policy_freq,
    "low.batch_size" => low.batch_size,
    "low.buffer_size" => low.buffer_size,
    "low.reward_scale" => low.reward_scale,
    "landmarks.coverage" => landmarks.coverage,
    "landmarks.novelty" => landmarks.novelty,
    "landmarks.pool_size" => landmarks.pool_size,
    "landmarks.queue_sampling" => landmarks.queue_sampling,
    "landmarks.eta" => landmarks.eta,
    "landmarks.bypass" => landmarks.bypass,
    "novelty.capacity" => novelty.capacity,
    "novelty.lambda" => novelty.lambda,
    "novelty.metric" => novelty.metric,
    "novelty.rnd_input" => novelty.rnd_input,
    "novelty.rnd_hidden" => novelty.rnd_hidden,
    "novelty.rnd_embedding" => novelty.rnd_embedding,
    "novelty.rnd_lr" => novelty.rnd_lr,
    "novelty.rnd_batch_size" => novelty.rnd_batch_size,
    "adjacency.k" => adjacency.k,
    "adjacency.eps_k" => adjacency.eps_k,
    "adjacency.margin" => adjacency.margin,
    "adjacency.lr" => adjacency.lr,
    "adjacency.batch_size" => adjacency.batch_size,
    "adjacency.epochs" => adjacency.epochs,
    "adjacency.max_batches_per_epoch" => adjacency.max_batches_per_epoch,
    "adjacency.period_episodes" => adjacency.period_episodes,
    "adjacency.period_fraction" => adjacency.period_fraction,
    "adjacency.hidden" => adjacency.hidden,
    "adjacency.embedding" => adjacency.embedding,
    "adjacency.resolution" => adjacency.resolution,
    "planner.gamma_dist" => planner.gamma_dist,
    "planner.delta_pseudo" => planner.delta_pseudo,
    "planner.warmup_fraction" => planner.warmup_fraction,
    "planner.auto_shift" => planner.auto_shift,
    "planner.dump_graphs" => planner.dump_graphs,
    "eval.period" => eval.period,
    "eval.episodes" => eval.episodes,
}

impl TrainConfig {
    /// The U-maze topology on unit grid cells with short episodes; used by
    /// fast tests.
    pub fn grid() -> Self {
        let mut c = TrainConfig::default();
        c.env.dynamics = Dynamics::Grid;
        c.env.cell_size = 1.0;
        c.env.max_steps = 50;
        c.env.success_radius = 0.5;
        c.subgoal_scale = 2.0;
        c.planner.gamma_dist = 38.0 * 50.0 / 500.0;
        c
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k, v)
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        self.env.maze_spec().map_err(|e| Error::Config(format!("environment: {e}")))?;
        self.high.td3().validate().map_err(|e| Error::Config(format!("high level: {e}")))?;
        self.low.td3().validate().map_err(|e| Error::Config(format!("low level: {e}")))?;
        for (name, level) in [("high", &self.high), ("low", &self.low)] {
            if level.batch_size == 0 || level.buffer_size == 0 {
                return Err(Error::Config(format!("{name}: batch and buffer sizes must be positive")));
            }
            if !(level.reward_scale.is_finite() && level.reward_scale > 0.0) {
                return Err(Error::Config(format!("{name}: reward_scale must be positive")));
            }
        }
        if self.subgoal_period == 0 {
            return fail("subgoal_period must be positive");
        }
        if !(self.subgoal_scale > 0.0 && self.subgoal_scale.is_finite()) {
            return fail("subgoal_scale must be positive");
        }
        if !(self.landmarks.eta >= 0.0 && self.landmarks.eta.is_finite()) {
            return fail("landmarks.eta must be nonnegative");
        }
        if self.landmarks.pool_size == 0 && self.landmarks.coverage > 0 {
            return fail("landmarks.pool_size must be positive");
        }
        if self.novelty.capacity == 0 || !(self.novelty.lambda > 0.0) {
            return fail("novelty capacity and lambda must be positive");
        }
        if self.novelty.rnd_embedding == 0 || self.novelty.rnd_batch_size == 0 || !(self.novelty.rnd_lr > 0.0) {
            return fail("RND embedding, batch size and learning rate must be positive");
        }
        let a = &self.adjacency;
        if a.k == 0 || a.batch_size == 0 || a.embedding == 0 || a.max_batches_per_epoch == 0 {
            return fail("adjacency counts must be positive");
        }
        if !(a.eps_k > 0.0 && a.margin > 0.0 && a.lr > 0.0 && a.resolution > 0.0) {
            return fail("adjacency eps_k, margin, lr and resolution must be positive");
        }
        if a.period_episodes == 0 && !(a.period_fraction > 0.0 && a.period_fraction <= 1.0) {
            return fail("adjacency.period_fraction must be in (0, 1]");
        }
        let p = &self.planner;
        if !(p.gamma_dist > 0.0) || !(p.delta_pseudo >= 0.0) || !(0.0..=1.0).contains(&p.warmup_fraction) {
            return fail("planner: gamma_dist > 0, delta_pseudo >= 0, warmup_fraction in [0, 1]");
        }
        if self.eval.period == 0 || self.eval.episodes == 0 {
            return fail("eval.period and eval.episodes must be positive");
        }
        Ok(())
    }

    /// Episodes between adjacency updates.
    pub fn adjacency_period(&self) -> usize {
        if self.adjacency.period_episodes > 0 {
            return self.adjacency.period_episodes;
        }
        let steps = self.adjacency.period_fraction * self.total_steps as f64;
        ((steps / self.env.max_steps as f64).floor() as usize).max(1)
    }

    /// Steps trained with a zero shift magnitude.
    pub fn warmup_steps(&self) -> u64 {
        (self.planner.warmup_fraction * self.total_steps as f64).round() as u64
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for TrainConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::grid();
        c.apply_override("high.hidden=32,16").unwrap();
        c.apply_override("landmarks.eta = 0").unwrap();
        let back = TrainConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.high.hidden, vec![32, 16]);
        assert_eq!(KEYS.len(), c.entries().len());
    }

    #[test]
    fn comments_and_errors() {
        let c = TrainConfig::parse("# comment\n\nseed = 7\nscheme=absolute\n").unwrap();
        assert_eq!((c.seed, c.scheme), (7, SubgoalScheme::Absolute));
        assert!(TrainConfig::parse("nonsense = 1").is_err());
        assert!(TrainConfig::parse("seed").is_err());
        assert!(TrainConfig::parse("seed = -1").is_err());
        assert!(TrainConfig::parse("env.reward = medium").is_err());
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig::grid().validate().is_ok());
        let mut c = TrainConfig::default();
        c.landmarks.eta = -1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.subgoal_period = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.high.gamma = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn derived_schedules() {
        let c = TrainConfig::default();
        // 5% of 150k steps over 200-step episodes.
        assert_eq!(c.adjacency_period(), 37);
        assert_eq!(c.warmup_steps(), 9000);
        assert!((c.planner.gamma_dist - 15.2).abs() < 1e-12);
    }
}
