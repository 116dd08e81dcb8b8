use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::StateDataset;
use crate::io::format_number;
use crate::math::Rng;
use crate::policy::{TabularPolicy, DIRECTIONS, DOWN, LEFT, RIGHT, UP};

use super::{gather_data, return_distance, Environment, Step};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    rows: usize,
    cols: usize,
    walls: Vec<bool>,
    start: (usize, usize),
    goal: Option<(usize, usize)>,
}

impl GridLayout {
    pub fn new(
        rows: usize,
        cols: usize,
        walls: Vec<bool>,
        start: (usize, usize),
        goal: Option<(usize, usize)>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("grid must have at least one cell"));
        }
        Error::check_dim(rows * cols, walls.len())?;
        let inside = |(r, c): (usize, usize)| r < rows && c < cols;
        if !inside(start) || walls[start.0 * cols + start.1] {
            return Err(Error::invalid("start must be an open cell inside the grid"));
        }
        if let Some(g) = goal {
            if !inside(g) || walls[g.0 * cols + g.1] || g == start {
                return Err(Error::invalid(
                    "goal must be an open cell distinct from the start",
                ));
            }
        }
        Ok(GridLayout {
            rows,
            cols,
            walls,
            start,
            goal,
        })
    }

    /// Whitespace-separated tokens, one line per row: `S` start, `G` goal,
    /// `#` wall, `.` open. Lines starting with `;` are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut walls = Vec::new();
        let (mut rows, mut cols) = (0, None);
        let (mut start, mut goal) = (None, None);
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if *cols.get_or_insert(tokens.len()) != tokens.len() {
                return Err(Error::Parse(format!(
                    "row {rows} has {} cells",
                    tokens.len()
                )));
            }
            for (c, tok) in tokens.iter().enumerate() {
                walls.push(*tok == "#");
                match *tok {
                    "S" if start.is_none() => start = Some((rows, c)),
                    "G" if goal.is_none() => goal = Some((rows, c)),
                    "#" | "." => {}
                    other => {
                        return Err(Error::Parse(format!("unexpected layout token {other:?}")))
                    }
                }
            }
            rows += 1;
        }
        let start = start.ok_or_else(|| Error::Parse("layout has no start cell".into()))?;
        Self::new(rows, cols.unwrap_or(0), walls, start, goal)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn walls(&self) -> &[bool] {
        &self.walls
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn goal(&self) -> Option<(usize, usize)> {
        self.goal
    }

    pub fn is_wall(&self, row: usize, col: usize) -> bool {
        self.walls[row * self.cols + col]
    }

    /// Cell reached by moving in `direction`; blocked moves stay put.
    pub fn neighbor(&self, (r, c): (usize, usize), direction: usize) -> (usize, usize) {
        let next = match direction {
            UP if r > 0 => (r - 1, c),
            DOWN if r + 1 < self.rows => (r + 1, c),
            LEFT if c > 0 => (r, c - 1),
            RIGHT if c + 1 < self.cols => (r, c + 1),
            _ => return (r, c),
        };
        if self.is_wall(next.0, next.1) {
            (r, c)
        } else {
            next
        }
    }

    /// Breadth-first distance from start to goal in moves.
    pub fn shortest_path(&self) -> Option<usize> {
        let goal = self.goal?;
        let mut dist = vec![usize::MAX; self.rows * self.cols];
        let mut queue = VecDeque::from([self.start]);
        dist[self.start.0 * self.cols + self.start.1] = 0;
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell.0 * self.cols + cell.1];
            if cell == goal {
                return Some(d);
            }
            for a in 0..DIRECTIONS {
                let n = self.neighbor(cell, a);
                let idx = n.0 * self.cols + n.1;
                if dist[idx] == usize::MAX {
                    dist[idx] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.rows() != self.rows
            || policy.cols() != self.cols
            || policy.wall_mask() != self.walls
        {
            return Err(Error::LayoutMismatch(
                "policy walls do not match the grid".into(),
            ));
        }
        Ok(())
    }
}

/// Grid navigation with slippery moves: with probability `slip` the chosen
/// direction is replaced by a uniformly random one.
#[derive(Debug, Clone)]
pub struct GridWorld {
    layout: GridLayout,
    slip: f64,
    max_steps: usize,
    shortest: Option<usize>,
    pos: (usize, usize),
    steps: usize,
}

impl GridWorld {
    pub const DEFAULT_MAX_STEPS: usize = 50;

    pub fn new(layout: GridLayout, slip: f64, max_steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&slip) {
            return Err(Error::invalid(format!(
                "slip probability {slip} outside [0, 1]"
            )));
        }
        if max_steps == 0 {
            return Err(Error::invalid("max steps must be positive"));
        }
        let shortest = layout.shortest_path();
        let pos = layout.start;
        Ok(GridWorld {
            layout,
            slip,
            max_steps,
            shortest,
            pos,
            steps: 0,
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn slip(&self) -> f64 {
        self.slip
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn with_slip(&self, slip: f64) -> Result<Self> {
        Self::new(self.layout.clone(), slip, self.max_steps)
    }

    /// Reward for reaching the goal after `steps` moves.
    pub fn goal_reward(&self, steps: usize) -> f64 {
        match self.shortest {
            Some(s) => 1.0 - (steps.saturating_sub(s)) as f64 / self.max_steps as f64,
            None => 0.0,
        }
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.pos.0 as f64, self.pos.1 as f64]
    }

    /// Probability of each executed direction given the policy's choice distribution.
    fn executed(&self, chosen: &[f64; DIRECTIONS]) -> [f64; DIRECTIONS] {
        let mut p = [0.0; DIRECTIONS];
        for (a, slot) in p.iter_mut().enumerate() {
            *slot = (1.0 - self.slip) * chosen[a] + self.slip / DIRECTIONS as f64;
        }
        p
    }
}

impl Environment for GridWorld {
    type Action = usize;

    fn observation_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, _rng: &mut Rng) -> Vec<f64> {
        self.pos = self.layout.start;
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &usize, rng: &mut Rng) -> Result<Step> {
        if *action >= DIRECTIONS {
            return Err(Error::invalid(format!(
                "grid action {action} out of range 0..4"
            )));
        }
        let mut direction = *action;
        if self.slip > 0.0 && rng.uniform() < self.slip {
            direction = rng.below(DIRECTIONS);
        }
        self.pos = self.layout.neighbor(self.pos, direction);
        self.steps += 1;
        let at_goal = Some(self.pos) == self.layout.goal;
        let reward = if at_goal {
            self.goal_reward(self.steps)
        } else {
            0.0
        };
        Ok(Step {
            state: self.observe(),
            reward,
            done: at_goal || self.steps >= self.max_steps,
        })
    }
}

/// Fraction of recorded steps spent in each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDistribution {
    rows: usize,
    cols: usize,
    walls: Vec<bool>,
    probs: Vec<f64>,
}

impl CellDistribution {
    pub fn probability(&self, row: usize, col: usize) -> f64 {
        self.probs[row * self.cols + col]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn from_counts(layout: &GridLayout, counts: Vec<f64>) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Empty("occupancy counts"));
        }
        Ok(CellDistribution {
            rows: layout.rows,
            cols: layout.cols,
            walls: layout.walls.clone(),
            probs: counts.into_iter().map(|c| c / total).collect(),
        })
    }
}

/// Monte Carlo occupancy from `episodes` rollouts.
pub fn grid_occupancy(
    env: &GridWorld,
    policy: &TabularPolicy,
    episodes: usize,
    rng: &mut Rng,
) -> Result<CellDistribution> {
    env.layout.check_policy(policy)?;
    occupancy_of(
        &env.layout,
        &gather_data(&mut env.clone(), policy, episodes, rng)?,
    )
}

fn occupancy_of(layout: &GridLayout, data: &StateDataset) -> Result<CellDistribution> {
    let mut counts = vec![0.0; layout.rows * layout.cols];
    for s in data.states() {
        counts[s[0] as usize * layout.cols + s[1] as usize] += 1.0;
    }
    CellDistribution::from_counts(layout, counts)
}

/// Occupancy in the limit of infinitely many episodes, by propagating the
/// state distribution step by step.
pub fn grid_occupancy_exact(env: &GridWorld, policy: &TabularPolicy) -> Result<CellDistribution> {
    let layout = &env.layout;
    layout.check_policy(policy)?;
    let n = layout.rows * layout.cols;
    let mut dist = vec![0.0; n];
    dist[layout.start.0 * layout.cols + layout.start.1] = 1.0;
    let mut counts = vec![0.0; n];
    for _ in 0..env.max_steps {
        let mut next = vec![0.0; n];
        for (idx, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            counts[idx] += mass;
            let cell = (idx / layout.cols, idx % layout.cols);
            let moves = env.executed(policy.distribution(cell.0, cell.1)?);
            for (a, &p) in moves.iter().enumerate() {
                let to = layout.neighbor(cell, a);
                if Some(to) != layout.goal {
                    next[to.0 * layout.cols + to.1] += mass * p;
                }
            }
        }
        dist = next;
    }
    CellDistribution::from_counts(layout, counts)
}

/// `Σ |p - q|` over cells, in `[0, 2]`.
pub fn grid_state_distance(p: &CellDistribution, q: &CellDistribution) -> Result<f64> {
    if p.rows != q.rows || p.cols != q.cols || p.walls != q.walls {
        return Err(Error::LayoutMismatch(
            "occupancies come from different grids".into(),
        ));
    }
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// `Σ_cells Σ_a |π(a|s) - π̂(a|s)|` over open cells.
pub fn grid_action_distance(a: &TabularPolicy, b: &TabularPolicy) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() || a.wall_mask() != b.wall_mask() {
        return Err(Error::LayoutMismatch(
            "policies are defined on different grids".into(),
        ));
    }
    Ok(a.cells()
        .iter()
        .zip(b.cells())
        .filter_map(|(x, y)| {
            Some(
                x.as_ref()?
                    .iter()
                    .zip(y.as_ref()?)
                    .map(|(p, q)| (p - q).abs())
                    .sum::<f64>(),
            )
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoRow {
    pub epsilon: f64,
    pub return_distance: f64,
    pub action_distance: f64,
    pub state_distance: f64,
}

/// Compares the scenario's blue and green policies (or blue with itself when
/// `identical`) at each slip probability, from `episodes` rollouts each.
/// Both policies are rolled out on the same random stream.
pub fn gridworld_demo(
    scenario: GridScenario,
    epsilons: &[f64],
    episodes: usize,
    identical: bool,
    rng: &Rng,
) -> Result<Vec<DemoRow>> {
    let blue = scenario.blue();
    let other = if identical {
        blue.clone()
    } else {
        scenario.green()
    };
    let action_distance = grid_action_distance(&blue, &other)?;
    epsilons
        .iter()
        .enumerate()
        .map(|(i, &epsilon)| {
            let env = scenario.world(epsilon)?;
            let stream = rng.split(i as u64);
            let a = gather_data(&mut env.clone(), &blue, episodes, &mut stream.clone())?;
            let b = gather_data(&mut env.clone(), &other, episodes, &mut stream.clone())?;
            Ok(DemoRow {
                epsilon,
                return_distance: return_distance(&a, &b)?,
                action_distance,
                state_distance: grid_state_distance(
                    &occupancy_of(env.layout(), &a)?,
                    &occupancy_of(env.layout(), &b)?,
                )?,
            })
        })
        .collect()
}

pub fn demo_csv(rows: &[DemoRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "epsilon",
        "return_distance",
        "action_distance",
        "state_distance",
    ])?;
    for r in rows {
        w.write_record(
            [
                r.epsilon,
                r.return_distance,
                r.action_distance,
                r.state_distance,
            ]
            .map(format_number),
        )?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Built-in 5x5 layouts, each shipped with a "blue" and a "green" policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScenario {
    /// Two routes through an empty room that disagree on most cells.
    Open,
    /// A wall with a single gap; the green policy turns back just before it.
    Doorway,
    /// A walled-off column where only the two policies' actions differ.
    Unreachable,
}

impl GridScenario {
    pub const ALL: [GridScenario; 3] = [
        GridScenario::Open,
        GridScenario::Doorway,
        GridScenario::Unreachable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridScenario::Open => "open",
            GridScenario::Doorway => "doorway",
            GridScenario::Unreachable => "unreachable",
        }
    }

    /// Accepts `stochastic` as another name for the open room.
    pub fn from_name(name: &str) -> Result<Self> {
        if name == "stochastic" {
            return Ok(GridScenario::Open);
        }
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown grid scenario {name:?}")))
    }

    fn texts(self) -> (&'static str, &'static str, &'static str) {
        match self {
            GridScenario::Open => (
                include_str!("../../fixtures/gridworld/open.layout"),
                include_str!("../../fixtures/gridworld/open_blue.policy"),
                include_str!("../../fixtures/gridworld/open_green.policy"),
            ),
            GridScenario::Doorway => (
                include_str!("../../fixtures/gridworld/doorway.layout"),
                include_str!("../../fixtures/gridworld/doorway_blue.policy"),
                include_str!("../../fixtures/gridworld/doorway_green.policy"),
            ),
            GridScenario::Unreachable => (
                include_str!("../../fixtures/gridworld/unreachable.layout"),
                include_str!("../../fixtures/gridworld/unreachable_blue.policy"),
                include_str!("../../fixtures/gridworld/unreachable_green.policy"),
            ),
        }
    }

    pub fn layout(self) -> GridLayout {
        GridLayout::parse(self.texts().0).expect("bundled layout parses")
    }

    pub fn blue(self) -> TabularPolicy {
        TabularPolicy::parse(self.texts().1).expect("bundled policy parses")
    }

    pub fn green(self) -> TabularPolicy {
        TabularPolicy::parse(self.texts().2).expect("bundled policy parses")
    }

    pub fn world(self, slip: f64) -> Result<GridWorld> {
        GridWorld::new(self.layout(), slip, GridWorld::DEFAULT_MAX_STEPS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_and_policies_agree() {
        for s in GridScenario::ALL {
            let layout = s.layout();
            assert_eq!((layout.rows(), layout.cols()), (5, 5));
            layout.check_policy(&s.blue()).unwrap();
            layout.check_policy(&s.green()).unwrap();
            assert_eq!(GridScenario::from_name(s.name()).unwrap(), s);
        }
    }

    #[test]
    fn shortest_path_episode() {
        let env = GridScenario::Open.world(0.0).unwrap();
        let blue = GridScenario::Open.blue();
        let data = gather_data(&mut env.clone(), &blue, 1, &mut Rng::new(0)).unwrap();
        assert_eq!(data.episode_lengths(), &[8]);
        assert_eq!(data.returns(), &[1.0]);
        assert_eq!(env.layout().shortest_path(), Some(8));
    }

    #[test]
    fn blocked_moves_stay() {
        let layout = GridLayout::parse("S #\n. G").unwrap();
        assert_eq!(layout.neighbor((0, 0), RIGHT), (0, 0));
        assert_eq!(layout.neighbor((0, 0), UP), (0, 0));
        assert_eq!(layout.neighbor((0, 0), DOWN), (1, 0));
        let mut env = GridWorld::new(layout, 0.0, 5).unwrap();
        assert!(env.step(&4, &mut Rng::new(0)).is_err());
        assert!(GridWorld::new(env.layout().clone(), 1.5, 5).is_err());
    }

    #[test]
    fn slower_arrival_earns_less() {
        let env = GridWorld::new(GridLayout::parse("S . G").unwrap(), 0.0, 10).unwrap();
        assert_eq!(env.goal_reward(2), 1.0);
        assert!((env.goal_reward(4) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn corridor_occupancy() {
        let layout = GridLayout::new(1, 2, vec![false, false], (0, 0), None).unwrap();
        let env = GridWorld::new(layout, 0.0, 2).unwrap();
        let right = TabularPolicy::deterministic(1, 2, &[Some(RIGHT), Some(RIGHT)]).unwrap();
        let exact = grid_occupancy_exact(&env, &right).unwrap();
        assert_eq!(exact.probs(), &[0.5, 0.5]);
        let mc = grid_occupancy(&env, &right, 3, &mut Rng::new(0)).unwrap();
        assert_eq!(mc.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn self_loop_stays_on_start() {
        let env = GridScenario::Open.world(0.0).unwrap();
        let up = TabularPolicy::deterministic(5, 5, &[Some(UP); 25]).unwrap();
        let occ = grid_occupancy_exact(&env, &up).unwrap();
        assert_eq!(occ.probability(0, 0), 1.0);
    }

    #[test]
    fn exact_matches_monte_carlo() {
        let env = GridScenario::Doorway.world(0.3).unwrap();
        let green = GridScenario::Doorway.green();
        let exact = grid_occupancy_exact(&env, &green).unwrap();
        let mc = grid_occupancy(&env, &green, 4000, &mut Rng::new(11)).unwrap();
        assert!((exact.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(grid_state_distance(&exact, &mc).unwrap() < 0.05);
    }

    #[test]
    fn action_distance_counts_every_differing_cell() {
        let a = TabularPolicy::deterministic(5, 5, &[Some(UP); 25]).unwrap();
        let b = TabularPolicy::deterministic(5, 5, &[Some(DOWN); 25]).unwrap();
        assert_eq!(grid_action_distance(&a, &b).unwrap(), 50.0);
        assert_eq!(grid_action_distance(&a, &a).unwrap(), 0.0);
        let c = TabularPolicy::deterministic(1, 1, &[Some(UP)]).unwrap();
        assert!(grid_action_distance(&a, &c).is_err());
    }

    #[test]
    fn disjoint_occupancy_is_two() {
        let layout = GridScenario::Open.layout();
        let mut a = vec![0.0; 25];
        let mut b = vec![0.0; 25];
        a[0] = 3.0;
        a[1] = 1.0;
        b[24] = 2.0;
        let p = CellDistribution::from_counts(&layout, a).unwrap();
        let q = CellDistribution::from_counts(&layout, b).unwrap();
        assert_eq!(grid_state_distance(&p, &q).unwrap(), 2.0);
        assert_eq!(grid_state_distance(&p, &p).unwrap(), 0.0);
        assert!(CellDistribution::from_counts(&layout, vec![0.0; 25]).is_err());
    }
}
