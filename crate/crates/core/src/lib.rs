//! Landmark-guided hierarchical reinforcement learning.
//!
//! A two-level goal-conditioned agent (TD3 at both levels) whose high-level
//! subgoals are pulled toward landmark states. Landmarks come from two
//! sources: farthest point sampling over the replay buffer ([`coverage`]) and
//! a novelty priority queue scored by random network distillation
//! ([`novelty`]). The [`planner`] picks the first landmark on a shortest path
//! to the final goal and turns it into a pseudo-landmark target that the
//! [`adjacency`] embedding scores as a hinge loss on the high-level actor.
//!
//! Everything runs on small maze environments ([`envs`]) with a
//! self-contained dense network stack ([`nn`]).

pub mod adjacency;
pub mod agents;
pub mod coverage;
pub mod envs;
pub mod error;
pub mod goal;
pub mod nn;
pub mod novelty;
pub mod planner;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use goal::{
    goal_transition, high_level_reward, low_level_reward, map_state_to_goal, ActionVector,
    GoalVector, StateVector, SubgoalScheme, TrajectorySegment, Transition,
};
