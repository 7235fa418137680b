//! Maze environments: a discrete grid maze and a continuous point-mass maze
//! sharing one layout format.
//!
//! Layout files use `#` for walls, `.` for free cells, `S` for the start cell
//! and `G` for the evaluation goal, one row per line with the top row first.
//! World coordinates put the start cell's centre at the origin, `x` growing
//! with the column and `y` growing upward.
//!
//! State vectors are `(x, y, [vx, vy,] t/max_steps, target_x, target_y)`;
//! the velocity pair is present only for the point mass.

use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::goal::l2;
use crate::rng::{seeded, Rng};

pub const GOAL_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;

/// The U-shaped maze: start bottom-left, evaluation goal top-left.
pub const U_MAZE: &str = "\
#####
#G..#
###.#
#S..#
#####
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    start: (usize, usize),
    goal: (usize, usize),
}

impl Layout {
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::invalid("empty maze layout"));
        }
        let cols = lines[0].chars().count();
        let mut cells = Vec::with_capacity(lines.len() * cols);
        let (mut start, mut goal) = (None, None);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::invalid(format!("maze row {r} has a different width")));
            }
            for (c, ch) in line.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    'S' => {
                        if start.replace((r, c)).is_some() {
                            return Err(Error::invalid("maze has more than one 'S'"));
                        }
                        Cell::Free
                    }
                    'G' => {
                        if goal.replace((r, c)).is_some() {
                            return Err(Error::invalid("maze has more than one 'G'"));
                        }
                        Cell::Free
                    }
                    other => return Err(Error::invalid(format!("unknown maze character '{other}'"))),
                };
                cells.push(cell);
            }
        }
        let start = start.ok_or_else(|| Error::invalid("maze has no 'S'"))?;
        let goal = goal.ok_or_else(|| Error::invalid("maze has no 'G'"))?;
        Ok(Layout { rows: lines.len(), cols, cells, start, goal })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn start_cell(&self) -> (usize, usize) {
        self.start
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.goal
    }

    pub fn free_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows)
            .flat_map(move |r| (0..self.cols).map(move |c| (r, c)))
            .filter(move |&(r, c)| self.cell(r, c) == Cell::Free)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardMode {
    #[default]
    Dense,
    Sparse,
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(RewardMode::Dense),
            "sparse" => Ok(RewardMode::Sparse),
            other => Err(Error::invalid(format!("unknown reward mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dynamics {
    /// One cell per step in {N, S, E, W, stay}.
    Grid,
    /// Damped double integrator.
    #[default]
    PointMass,
}

impl FromStr for Dynamics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Dynamics::Grid),
            "point" => Ok(Dynamics::PointMass),
            other => Err(Error::invalid(format!("unknown dynamics '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MazeSpec {
    pub layout: Layout,
    pub dynamics: Dynamics,
    /// World units per layout cell.
    pub cell_size: f64,
    pub eval_goal: [f64; 2],
    /// Box `[low, high]` over which training targets are drawn.
    pub goal_low: [f64; 2],
    pub goal_high: [f64; 2],
    pub success_radius: f64,
    pub max_steps: usize,
    pub reward_mode: RewardMode,
    pub noise_sigma: f64,
    pub damping: f64,
    pub accel: f64,
}

impl MazeSpec {
    /// Spec with defaults derived from the layout: goal box spans the free
    /// cells, evaluation goal at the centre of the `G` cell.
    pub fn from_layout(layout: Layout, dynamics: Dynamics, cell_size: f64) -> Self {
        let mut low = [f64::INFINITY; 2];
        let mut high = [f64::NEG_INFINITY; 2];
        let half = cell_size / 2.0;
        let centre = |r, c| cell_centre(&layout, cell_size, r, c);
        for (r, c) in layout.free_cells() {
            let p = centre(r, c);
            for i in 0..2 {
                low[i] = low[i].min(p[i] - half);
                high[i] = high[i].max(p[i] + half);
            }
        }
        let (gr, gc) = layout.goal_cell();
        let eval_goal = centre(gr, gc);
        MazeSpec {
            layout,
            dynamics,
            cell_size,
            eval_goal,
            goal_low: low,
            goal_high: high,
            success_radius: 2.5,
            max_steps: 200,
            reward_mode: RewardMode::Dense,
            noise_sigma: 0.0,
            damping: 0.9,
            accel: 0.1,
        }
    }

    /// 12×12 continuous U-maze: start (0, 0), evaluation goal (0, 8),
    /// training targets in `[-2, 10]²`.
    pub fn u_maze() -> Self {
        Self::from_layout(Layout::parse(U_MAZE).unwrap(), Dynamics::PointMass, 4.0)
    }

    /// The U-maze topology as a discrete grid with unit cells.
    pub fn grid_u_maze() -> Self {
        let mut spec = Self::from_layout(Layout::parse(U_MAZE).unwrap(), Dynamics::Grid, 1.0);
        spec.success_radius = 0.5;
        spec.max_steps = 50;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.success_radius > 0.0) {
            return Err(Error::invalid("success_radius must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be positive"));
        }
        if !(self.cell_size > 0.0) {
            return Err(Error::invalid("cell_size must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.damping) || !(self.accel > 0.0) {
            return Err(Error::invalid("damping must be in [0, 1] and accel positive"));
        }
        for i in 0..2 {
            if !(self.goal_low[i] <= self.goal_high[i]) {
                return Err(Error::invalid("goal box is empty"));
            }
        }
        if !self.is_free(self.eval_goal) {
            return Err(Error::invalid("evaluation goal lies in a wall"));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        match self.dynamics {
            Dynamics::Grid => 5,
            Dynamics::PointMass => 7,
        }
    }

    pub fn start_position(&self) -> [f64; 2] {
        [0.0, 0.0]
    }

    /// Layout cell containing `p`, or `None` outside the layout.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let (sr, sc) = self.layout.start_cell();
        let col = (p[0] / self.cell_size + 0.5).floor() + sc as f64;
        let row = sr as f64 - (p[1] / self.cell_size + 0.5).floor();
        if !(col.is_finite() && row.is_finite()) || col < 0.0 || row < 0.0 {
            return None;
        }
        let (row, col) = (row as usize, col as usize);
        (row < self.layout.rows() && col < self.layout.cols()).then_some((row, col))
    }

    pub fn is_free(&self, p: [f64; 2]) -> bool {
        matches!(self.cell_of(p), Some((r, c)) if self.layout.cell(r, c) == Cell::Free)
    }

    pub fn centre(&self, row: usize, col: usize) -> [f64; 2] {
        cell_centre(&self.layout, self.cell_size, row, col)
    }
}

fn cell_centre(layout: &Layout, cell_size: f64, row: usize, col: usize) -> [f64; 2] {
    let (sr, sc) = layout.start_cell();
    [(col as f64 - sc as f64) * cell_size, (sr as f64 - row as f64) * cell_size]
}

pub fn success(position: &[f64], target: &[f64], radius: f64) -> bool {
    l2(position, target) <= radius
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub step_count: usize,
    pub target: [f64; 2],
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct MazeEnv {
    spec: MazeSpec,
    state: EnvState,
    rng: Rng,
    noise: Option<Normal<f64>>,
}

impl MazeEnv {
    pub fn new(spec: MazeSpec) -> Result<Self> {
        spec.validate()?;
        let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).unwrap());
        let state = EnvState {
            position: spec.start_position(),
            velocity: [0.0; 2],
            step_count: 0,
            target: spec.eval_goal,
            done: true,
        };
        Ok(MazeEnv { spec, state, rng: seeded(0), noise })
    }

    pub fn spec(&self) -> &MazeSpec {
        &self.spec
    }

    pub fn env_state(&self) -> &EnvState {
        &self.state
    }

    pub fn state_dim(&self) -> usize {
        self.spec.state_dim()
    }

    pub fn goal_dim(&self) -> usize {
        GOAL_DIM
    }

    pub fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    /// Symmetric action bound per component.
    pub fn action_bound(&self) -> [f64; 2] {
        [1.0, 1.0]
    }

    pub fn target(&self) -> [f64; 2] {
        self.state.target
    }

    /// Places the agent at the start; in training mode the target is drawn
    /// uniformly from the goal box, otherwise it is the evaluation goal.
    pub fn reset(&mut self, seed: u64, train_mode: bool) -> Vec<f64> {
        self.rng = seeded(seed);
        let target = if train_mode {
            let (lo, hi) = (self.spec.goal_low, self.spec.goal_high);
            [self.rng.random_range(lo[0]..=hi[0]), self.rng.random_range(lo[1]..=hi[1])]
        } else {
            self.spec.eval_goal
        };
        self.state = EnvState {
            position: self.spec.start_position(),
            velocity: [0.0; 2],
            step_count: 0,
            target,
            done: false,
        };
        self.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        let s = &self.state;
        let t = s.step_count as f64 / self.spec.max_steps as f64;
        match self.spec.dynamics {
            Dynamics::Grid => vec![s.position[0], s.position[1], t, s.target[0], s.target[1]],
            Dynamics::PointMass => {
                vec![s.position[0], s.position[1], s.velocity[0], s.velocity[1], t, s.target[0], s.target[1]]
            }
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.state.done {
            return Err(Error::InvalidState("step called on a finished episode".into()));
        }
        check_dim(ACTION_DIM, action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("action".into()));
        }
        let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        match self.spec.dynamics {
            Dynamics::Grid => self.grid_move(a),
            Dynamics::PointMass => self.point_move(a),
        }
        self.state.step_count += 1;
        let pos = self.state.position;
        let reached = success(&pos, &self.state.target, self.spec.success_radius);
        let reward = match self.spec.reward_mode {
            RewardMode::Dense => -l2(&pos, &self.state.target),
            RewardMode::Sparse => {
                if reached {
                    0.0
                } else {
                    -1.0
                }
            }
        };
        let done = reached || self.state.step_count >= self.spec.max_steps;
        self.state.done = done;
        Ok(StepOutcome { state: self.observation(), reward, done, success: reached })
    }

    fn sample_noise(&mut self) -> [f64; 2] {
        match &self.noise {
            Some(n) => [n.sample(&mut self.rng), n.sample(&mut self.rng)],
            None => [0.0; 2],
        }
    }

    fn grid_move(&mut self, a: [f64; 2]) {
        let (dx, dy) = if a[0].abs().max(a[1].abs()) < 1.0 / 3.0 {
            (0.0, 0.0)
        } else if a[0].abs() >= a[1].abs() {
            (a[0].signum(), 0.0)
        } else {
            (0.0, a[1].signum())
        };
        let noise = self.sample_noise();
        let p = self.state.position;
        let cs = self.spec.cell_size;
        let proposed = [p[0] + dx * cs + noise[0], p[1] + dy * cs + noise[1]];
        if let Some((r, c)) = self.spec.cell_of(proposed) {
            if self.spec.layout.cell(r, c) == Cell::Free {
                self.state.position = self.spec.centre(r, c);
            }
        }
    }

    fn point_move(&mut self, a: [f64; 2]) {
        let spec = &self.spec;
        let mut v = self.state.velocity;
        for i in 0..2 {
            v[i] = spec.damping * v[i] + spec.accel * a[i];
        }
        let noise = self.sample_noise();
        let p = self.state.position;
        let proposed = [p[0] + v[0] + noise[0], p[1] + v[1] + noise[1]];
        let mut next = p;
        // Axis-separated collision: resolve x, then y from the updated x.
        if self.spec.is_free([proposed[0], p[1]]) {
            next[0] = proposed[0];
        } else {
            v[0] = 0.0;
        }
        if self.spec.is_free([next[0], proposed[1]]) {
            next[1] = proposed[1];
        } else {
            v[1] = 0.0;
        }
        self.state.position = next;
        self.state.velocity = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn u_maze_geometry() {
        let spec = MazeSpec::u_maze();
        assert_eq!(spec.eval_goal, [0.0, 8.0]);
        assert_eq!(spec.goal_low, [-2.0, -2.0]);
        assert_eq!(spec.goal_high, [10.0, 10.0]);
        assert!(spec.is_free([0.0, 0.0]));
        assert!(spec.is_free([8.0, 4.0]));
        assert!(!spec.is_free([0.0, 4.0]));
        assert!(!spec.is_free([4.0, 4.0]));
        assert!(!spec.is_free([-3.0, 0.0]));
    }

    #[test]
    fn eval_reset_uses_eval_goal() {
        let mut env = MazeEnv::new(MazeSpec::u_maze()).unwrap();
        let s = env.reset(3, false);
        assert_eq!(&s[5..7], &[0.0, 8.0]);
        assert_eq!(s.len(), 7);
    }

    #[test]
    fn train_reset_is_seed_deterministic() {
        let mut env = MazeEnv::new(MazeSpec::u_maze()).unwrap();
        let a = env.reset(42, true);
        let b = env.reset(42, true);
        assert_eq!(a, b);
        let c = env.reset(43, true);
        assert_ne!(a, c);
    }

    #[test]
    fn train_targets_uniform_over_goal_box() {
        // Pearson chi-square on a 4×4 binning: 15 degrees of freedom, the
        // p = 0.01 critical value is 30.578.
        let mut env = MazeEnv::new(MazeSpec::u_maze()).unwrap();
        let n = 10_000;
        let mut counts = [0usize; 16];
        for seed in 0..n {
            let s = env.reset(seed as u64, true);
            let bx = (((s[5] + 2.0) / 3.0).floor() as usize).min(3);
            let by = (((s[6] + 2.0) / 3.0).floor() as usize).min(3);
            counts[by * 4 + bx] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 30.578, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn grid_wall_blocks_move() {
        let mut env = MazeEnv::new(MazeSpec::grid_u_maze()).unwrap();
        env.reset(0, false);
        // Start (0,0): north is a wall in the U-maze.
        let out = env.step(&[0.0, 1.0]).unwrap();
        assert_eq!(&out.state[..2], &[0.0, 0.0]);
        assert_eq!(env.env_state().step_count, 1);
        let out = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(&out.state[..2], &[1.0, 0.0]);
        // West of the start is the outer wall.
        let mut env = MazeEnv::new(MazeSpec::grid_u_maze()).unwrap();
        env.reset(0, false);
        assert_eq!(&env.step(&[-1.0, 0.2]).unwrap().state[..2], &[0.0, 0.0]);
    }

    #[test]
    fn dense_reward_is_negative_distance() {
        let mut spec = MazeSpec::grid_u_maze();
        spec.max_steps = 10;
        let mut env = MazeEnv::new(spec).unwrap();
        env.reset(0, false);
        // Move east once: (1, 0), target (0, 2) → distance √5.
        let out = env.step(&[1.0, 0.0]).unwrap();
        assert!((out.reward + 5f64.sqrt()).abs() < 1e-12);
        // A 3-4-5 case in the continuous maze.
        let mut env = MazeEnv::new(MazeSpec::u_maze()).unwrap();
        env.reset(0, false);
        env.state.target = [3.0, 4.0];
        env.state.position = [0.0, 0.0];
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(out.reward, -5.0);
    }

    #[test]
    fn sparse_success_ends_episode() {
        let mut spec = MazeSpec::u_maze();
        spec.reward_mode = RewardMode::Sparse;
        let mut env = MazeEnv::new(spec).unwrap();
        env.reset(0, false);
        env.state.position = [0.0, 7.0];
        let out = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.done && out.success);
        assert!(matches!(env.step(&[0.0, 0.0]), Err(Error::InvalidState(_))));
    }

    #[test]
    fn success_boundary_inclusive() {
        assert!(success(&[0.0, 8.0], &[0.0, 8.0], 2.5));
        assert!(!success(&[3.0, 8.0], &[0.0, 8.0], 2.5));
        assert!(success(&[0.0, 5.5], &[0.0, 8.0], 2.5));
    }

    #[test]
    fn layout_parse_errors() {
        assert!(Layout::parse("").is_err());
        assert!(Layout::parse("#S#\n#.\n").is_err());
        assert!(Layout::parse("#S.#\n").is_err());
        assert!(Layout::parse("#SGx\n").is_err());
        assert!(Layout::parse("#SS#\n#G.#\n").is_err());
    }

    #[test]
    fn layout_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.txt");
        std::fs::write(&path, U_MAZE).unwrap();
        let layout = Layout::from_file(&path).unwrap();
        assert_eq!((layout.rows(), layout.cols()), (5, 5));
        assert_eq!(layout.start_cell(), (3, 1));
        assert_eq!(layout.goal_cell(), (1, 1));
    }

    fn rollout(spec: MazeSpec, seed: u64, actions: &[(f64, f64)]) -> Vec<Vec<f64>> {
        let mut env = MazeEnv::new(spec).unwrap();
        let mut out = vec![env.reset(seed, true)];
        for &(ax, ay) in actions {
            let o = env.step(&[ax, ay]).unwrap();
            out.push(o.state);
            if o.done {
                break;
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn agent_never_enters_walls(
            seed in 0u64..1000,
            grid in any::<bool>(),
            noise in prop_oneof![Just(0.0), 0.0f64..0.5],
            actions in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..300),
        ) {
            let mut spec = if grid { MazeSpec::grid_u_maze() } else { MazeSpec::u_maze() };
            spec.noise_sigma = noise;
            for s in rollout(spec.clone(), seed, &actions) {
                prop_assert!(spec.is_free([s[0], s[1]]), "position {:?}", &s[..2]);
            }
        }

        #[test]
        fn episodes_terminate_within_max_steps(seed in 0u64..1000, ax in -1.0f64..1.0, ay in -1.0f64..1.0) {
            let spec = MazeSpec::u_maze();
            let max = spec.max_steps;
            let mut env = MazeEnv::new(spec).unwrap();
            env.reset(seed, true);
            let mut steps = 0;
            loop {
                steps += 1;
                if env.step(&[ax, ay]).unwrap().done {
                    break;
                }
                prop_assert!(steps < max);
            }
            prop_assert!(steps <= max);
        }

        #[test]
        fn noiseless_rollouts_reproducible(
            seed in 0u64..1000,
            actions in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..100),
        ) {
            let a = rollout(MazeSpec::u_maze(), seed, &actions);
            let b = rollout(MazeSpec::u_maze(), seed, &actions);
            prop_assert_eq!(a, b);
        }
    }
}
