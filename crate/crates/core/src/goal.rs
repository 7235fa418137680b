//! Goal-space primitives: state/goal/action vectors, the goal mapping, the
//! subgoal transition rule and the two levels' reward definitions.
//!
//! The goal mapping is a projection onto the leading `goal_dim` state
//! components (for mazes, the agent's `(x, y)` position).

use std::ops::Deref;

use crate::error::{check_dim, Error, Result};

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            /// Wraps `values`, rejecting NaN and infinities.
            pub fn new(values: Vec<f64>) -> Result<Self> {
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "{} component {} is {}",
                        stringify!($name),
                        i,
                        values[i]
                    )));
                }
                Ok(Self(values))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl TryFrom<Vec<f64>> for $name {
            type Error = Error;

            fn try_from(values: Vec<f64>) -> Result<Self> {
                Self::new(values)
            }
        }

        impl From<$name> for Vec<f64> {
            fn from(v: $name) -> Vec<f64> {
                v.0
            }
        }
    };
}

real_vector!(
    /// Environment state `s`.
    StateVector
);
real_vector!(
    /// Point in goal space; subgoals, landmarks and targets all live here.
    GoalVector
);
real_vector!(
    /// Low-level action `a`.
    ActionVector
);

/// Whether the high-level action is an offset from the current position or
/// an absolute goal-space point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubgoalScheme {
    #[default]
    Relative,
    Absolute,
}

impl SubgoalScheme {
    pub fn name(self) -> &'static str {
        match self {
            SubgoalScheme::Relative => "relative",
            SubgoalScheme::Absolute => "absolute",
        }
    }
}

impl std::str::FromStr for SubgoalScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(SubgoalScheme::Relative),
            "absolute" => Ok(SubgoalScheme::Absolute),
            other => Err(Error::invalid(format!("unknown subgoal scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub subgoal: GoalVector,
    pub action: ActionVector,
    pub reward: f64,
    pub next_state: StateVector,
    pub done: bool,
}

impl Transition {
    pub fn new(
        state: StateVector,
        subgoal: GoalVector,
        action: ActionVector,
        reward: f64,
        next_state: StateVector,
        done: bool,
    ) -> Result<Self> {
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("transition reward {reward}")));
        }
        check_dim(state.dim(), next_state.dim())?;
        Ok(Transition { state, subgoal, action, reward, next_state, done })
    }
}

/// `m` consecutive transitions under one high-level decision. The last
/// segment of an episode may be shorter when the episode ends early.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    transitions: Vec<Transition>,
}

impl TrajectorySegment {
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::invalid("trajectory segment is empty"));
        }
        Ok(TrajectorySegment { transitions })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Slice form of the goal mapping used on hot paths.
#[inline]
pub fn project(state: &[f64], goal_dim: usize) -> &[f64] {
    &state[..goal_dim]
}

pub fn map_state_to_goal(state: &StateVector, goal_dim: usize) -> Result<GoalVector> {
    if goal_dim == 0 || goal_dim > state.dim() {
        return Err(Error::invalid(format!(
            "goal_dim {goal_dim} must be in 1..={}",
            state.dim()
        )));
    }
    Ok(GoalVector(project(state, goal_dim).to_vec()))
}

/// Slice form of [`goal_transition`]; writes the new subgoal into `out`.
pub fn goal_transition_into(
    prev_goal: &[f64],
    prev_state: &[f64],
    state: &[f64],
    scheme: SubgoalScheme,
    out: &mut [f64],
) {
    match scheme {
        SubgoalScheme::Relative => {
            for i in 0..prev_goal.len() {
                out[i] = prev_goal[i] + prev_state[i] - state[i];
            }
        }
        SubgoalScheme::Absolute => out.copy_from_slice(prev_goal),
    }
}

pub fn goal_transition(
    prev_goal: &GoalVector,
    prev_state: &StateVector,
    state: &StateVector,
    scheme: SubgoalScheme,
) -> Result<GoalVector> {
    let goal_dim = prev_goal.dim();
    check_dim(prev_state.dim(), state.dim())?;
    if goal_dim > state.dim() {
        return Err(Error::DimensionMismatch { expected: state.dim(), actual: goal_dim });
    }
    let mut out = vec![0.0; goal_dim];
    goal_transition_into(prev_goal, prev_state, state, scheme, &mut out);
    GoalVector::new(out)
}

/// Slice form of [`low_level_reward`].
pub fn low_level_reward_raw(
    state: &[f64],
    subgoal: &[f64],
    next_state: &[f64],
    scheme: SubgoalScheme,
) -> f64 {
    let sq: f64 = match scheme {
        SubgoalScheme::Relative => subgoal
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let d = g - (next_state[i] - state[i]);
                d * d
            })
            .sum(),
        SubgoalScheme::Absolute => subgoal
            .iter()
            .zip(next_state)
            .map(|(g, s)| (g - s) * (g - s))
            .sum(),
    };
    -sq.sqrt()
}

/// Intrinsic reward: negative distance between the subgoal and the achieved
/// displacement (relative) or achieved position (absolute).
pub fn low_level_reward(
    state: &StateVector,
    subgoal: &GoalVector,
    next_state: &StateVector,
    scheme: SubgoalScheme,
) -> Result<f64> {
    check_dim(state.dim(), next_state.dim())?;
    if subgoal.dim() > state.dim() {
        return Err(Error::DimensionMismatch { expected: state.dim(), actual: subgoal.dim() });
    }
    Ok(low_level_reward_raw(state, subgoal, next_state, scheme))
}

/// Sum of the environment rewards collected during one segment.
pub fn high_level_reward(segment: &TrajectorySegment) -> Result<f64> {
    if segment.is_empty() {
        return Err(Error::invalid("empty segment"));
    }
    Ok(segment.transitions.iter().map(|t| t.reward).sum())
}

/// Euclidean norm of `a - b`.
#[inline]
pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(v: &[f64]) -> StateVector {
        StateVector::new(v.to_vec()).unwrap()
    }

    fn gv(v: &[f64]) -> GoalVector {
        GoalVector::new(v.to_vec()).unwrap()
    }

    fn tr(reward: f64) -> Transition {
        Transition::new(sv(&[0.0]), gv(&[0.0]), ActionVector::new(vec![0.0]).unwrap(), reward, sv(&[0.0]), false)
            .unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(map_state_to_goal(&sv(&[1.0, 2.0, 9.9, -3.0]), 2).unwrap().as_slice(), &[1.0, 2.0]);
        assert_eq!(map_state_to_goal(&sv(&[0.0, 0.0, 0.0]), 3).unwrap().as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(map_state_to_goal(&sv(&[5.5]), 1).unwrap().as_slice(), &[5.5]);
        assert!(matches!(map_state_to_goal(&sv(&[1.0]), 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_finite_vectors_rejected() {
        assert!(StateVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(GoalVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn transition_examples() {
        let rel = SubgoalScheme::Relative;
        let g = goal_transition(&gv(&[2.0, 2.0]), &sv(&[0.0, 0.0, 7.0]), &sv(&[1.0, 0.0, 3.0]), rel).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 2.0]);

        let g = goal_transition(&gv(&[3.0, -1.0]), &sv(&[5.0, 5.0]), &sv(&[-4.0, 1.0]), SubgoalScheme::Absolute)
            .unwrap();
        assert_eq!(g.as_slice(), &[3.0, -1.0]);

        let g = goal_transition(&gv(&[0.0, 0.0]), &sv(&[4.0, 4.0]), &sv(&[4.0, 4.0]), rel).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);

        assert!(goal_transition(&gv(&[0.0, 0.0]), &sv(&[0.0, 0.0]), &sv(&[0.0]), rel).is_err());
    }

    #[test]
    fn low_reward_examples() {
        let rel = SubgoalScheme::Relative;
        let r = low_level_reward(&sv(&[0.0, 0.0, 1.0]), &gv(&[1.0, 0.0]), &sv(&[1.0, 0.0, 2.0]), rel).unwrap();
        assert_eq!(r, 0.0);
        let r = low_level_reward(&sv(&[2.0, 2.0]), &gv(&[3.0, 4.0]), &sv(&[2.0, 2.0]), rel).unwrap();
        assert_eq!(r, -5.0);
        let r = low_level_reward(&sv(&[5.0, 5.0]), &gv(&[0.0, 8.0]), &sv(&[0.0, 8.0, 1.0]), SubgoalScheme::Absolute)
            .unwrap_err();
        assert!(matches!(r, Error::DimensionMismatch { .. }));
        let r = low_level_reward(&sv(&[5.0, 5.0, 0.0]), &gv(&[0.0, 8.0]), &sv(&[0.0, 8.0, 1.0]), SubgoalScheme::Absolute)
            .unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn high_reward_examples() {
        let seg = |rs: &[f64]| TrajectorySegment::new(rs.iter().map(|&r| tr(r)).collect()).unwrap();
        assert_eq!(high_level_reward(&seg(&[-1.0, -1.0, -1.0])).unwrap(), -3.0);
        assert_eq!(high_level_reward(&seg(&[0.0; 5])).unwrap(), 0.0);
        assert_eq!(high_level_reward(&seg(&[-1.0, 0.0, -1.0, 0.0])).unwrap(), -2.0);
        assert!(TrajectorySegment::new(vec![]).is_err());
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-50.0f64..50.0, n)
    }

    proptest! {
        #[test]
        fn low_reward_nonpositive_and_zero_iff_reached(
            s in vec_strategy(4), ns in vec_strategy(4), g in vec_strategy(2), abs in any::<bool>()
        ) {
            let scheme = if abs { SubgoalScheme::Absolute } else { SubgoalScheme::Relative };
            let r = low_level_reward(&sv(&s), &gv(&g), &sv(&ns), scheme).unwrap();
            prop_assert!(r <= 0.0);
            // Choosing the subgoal equal to the achieved quantity gives exactly zero.
            let achieved: Vec<f64> = match scheme {
                SubgoalScheme::Relative => (0..2).map(|i| ns[i] - s[i]).collect(),
                SubgoalScheme::Absolute => ns[..2].to_vec(),
            };
            let r0 = low_level_reward(&sv(&s), &gv(&achieved), &sv(&ns), scheme).unwrap();
            prop_assert!(r0.abs() < 1e-12);
        }

        #[test]
        fn relative_transition_preserves_target_point(
            g in vec_strategy(2), s0 in vec_strategy(3), s1 in vec_strategy(3)
        ) {
            let g1 = goal_transition(&gv(&g), &sv(&s0), &sv(&s1), SubgoalScheme::Relative).unwrap();
            for i in 0..2 {
                prop_assert!(((g[i] + s0[i]) - (g1[i] + s1[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn projection_idempotent_under_padding(s in vec_strategy(5), d in 1usize..=5) {
            let g = map_state_to_goal(&sv(&s), d).unwrap();
            let mut padded = g.as_slice().to_vec();
            padded.resize(5, 0.0);
            let g2 = map_state_to_goal(&sv(&padded), d).unwrap();
            prop_assert_eq!(g, g2);
        }
    }
}
