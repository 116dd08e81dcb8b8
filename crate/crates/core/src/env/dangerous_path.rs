use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::math::{mix64, Rng};
use crate::policy::Policy;

use super::{Environment, Step};

pub const DANGEROUS_PATH_STEPS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellAction {
    /// Advances one cell along the action's axis.
    Correct,
    /// Sends the player back to the origin.
    Mine,
    Noop,
}

/// Per-cell action roles, derived from a hash of the seed and the cell so the
/// unbounded grid needs no storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathLabeling {
    seed: u64,
    actions: usize,
}

impl PathLabeling {
    pub fn new(seed: u64, actions: usize) -> Result<Self> {
        if actions < 2 {
            return Err(Error::invalid("dangerous path needs at least two actions"));
        }
        Ok(PathLabeling { seed, actions })
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    /// Roles of every action in `cell`: one correct, up to two mines, the rest no-ops.
    pub fn labels(&self, cell: &[i64]) -> Vec<CellAction> {
        let mines = 2.min(self.actions - 1);
        let mut roles: Vec<CellAction> = (0..self.actions)
            .map(|i| match i {
                0 => CellAction::Correct,
                i if i <= mines => CellAction::Mine,
                _ => CellAction::Noop,
            })
            .collect();
        let mut h = mix64(self.seed);
        for &c in cell {
            h = mix64(h ^ c as u64);
        }
        for i in (1..roles.len()).rev() {
            h = mix64(h);
            roles.swap(i, (h % (i as u64 + 1)) as usize);
        }
        roles
    }

    pub fn correct_action(&self, cell: &[i64]) -> usize {
        self.labels(cell)
            .iter()
            .position(|&r| r == CellAction::Correct)
            .expect("one correct action per cell")
    }
}

/// N-dimensional grid walk with one rewarding action per cell, two mines
/// that reset the player, and no-ops.
#[derive(Debug, Clone)]
pub struct DangerousPath {
    labeling: PathLabeling,
    max_steps: usize,
    pos: Vec<i64>,
    visited: HashSet<Vec<i64>>,
    steps: usize,
}

impl DangerousPath {
    pub const DEFAULT_ACTIONS: usize = 5;

    pub fn new(actions: usize, seed: u64) -> Result<Self> {
        let labeling = PathLabeling::new(seed, actions)?;
        let mut env = DangerousPath {
            labeling,
            max_steps: DANGEROUS_PATH_STEPS,
            pos: vec![0; actions],
            visited: HashSet::new(),
            steps: 0,
        };
        env.reset_state();
        Ok(env)
    }

    pub fn labeling(&self) -> &PathLabeling {
        &self.labeling
    }

    pub fn actions(&self) -> usize {
        self.labeling.actions
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn position(&self) -> &[i64] {
        &self.pos
    }

    fn reset_state(&mut self) {
        self.pos.iter_mut().for_each(|c| *c = 0);
        self.visited.clear();
        self.visited.insert(self.pos.clone());
        self.steps = 0;
    }

    fn observe(&self) -> Vec<f64> {
        self.pos.iter().map(|&c| c as f64).collect()
    }
}

impl Environment for DangerousPath {
    type Action = usize;

    fn observation_dim(&self) -> usize {
        self.labeling.actions
    }

    fn reset(&mut self, _rng: &mut Rng) -> Vec<f64> {
        self.reset_state();
        self.observe()
    }

    fn step(&mut self, action: &usize, _rng: &mut Rng) -> Result<Step> {
        let a = *action;
        if a >= self.actions() {
            return Err(Error::invalid(format!(
                "action {a} out of range 0..{}",
                self.actions()
            )));
        }
        let mut reward = 0.0;
        match self.labeling.labels(&self.pos)[a] {
            CellAction::Correct => {
                self.pos[a] += 1;
                if self.visited.insert(self.pos.clone()) {
                    reward = 1.0;
                }
            }
            CellAction::Mine => self.pos.iter_mut().for_each(|c| *c = 0),
            CellAction::Noop => {}
        }
        self.steps += 1;
        Ok(Step {
            state: self.observe(),
            reward,
            done: self.steps >= self.max_steps,
        })
    }
}

/// Takes the correct action with probability `1 - epsilon`, otherwise a
/// uniformly random one.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonGreedyPath {
    labeling: PathLabeling,
    epsilon: f64,
}

impl EpsilonGreedyPath {
    pub fn new(labeling: PathLabeling, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(EpsilonGreedyPath { labeling, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Policy for EpsilonGreedyPath {
    type Action = usize;

    fn sample(&self, state: &[f64], rng: &mut Rng) -> Result<usize> {
        Error::check_dim(self.labeling.actions, state.len())?;
        if rng.uniform() < self.epsilon {
            return Ok(rng.below(self.labeling.actions));
        }
        let cell: Vec<i64> = state.iter().map(|&x| x.round() as i64).collect();
        Ok(self.labeling.correct_action(&cell))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::gather_data;

    fn first(env: &DangerousPath, role: CellAction) -> usize {
        env.labeling()
            .labels(env.position())
            .iter()
            .position(|&r| r == role)
            .unwrap()
    }

    #[test]
    fn labeling_has_one_correct_two_mines() {
        let l = PathLabeling::new(3, 5).unwrap();
        for cell in [[0, 0, 0, 0, 0], [1, 0, 2, 0, 0], [7, 3, 1, 1, 9]] {
            let labels = l.labels(&cell);
            assert_eq!(
                labels.iter().filter(|&&r| r == CellAction::Correct).count(),
                1
            );
            assert_eq!(labels.iter().filter(|&&r| r == CellAction::Mine).count(), 2);
            assert_eq!(labels.iter().filter(|&&r| r == CellAction::Noop).count(), 2);
            assert_eq!(labels, l.labels(&cell));
        }
        let differs =
            (0..20).any(|s| PathLabeling::new(s, 5).unwrap().labels(&[0; 5]) != l.labels(&[0; 5]));
        assert!(differs);
    }

    #[test]
    fn correct_move_then_mine() {
        let mut env = DangerousPath::new(5, 1).unwrap();
        let mut rng = Rng::new(0);
        assert_eq!(env.reset(&mut rng), vec![0.0; 5]);
        let a = first(&env, CellAction::Correct);
        let step = env.step(&a, &mut rng).unwrap();
        assert_eq!(step.reward, 1.0);
        assert_eq!(step.state[a], 1.0);
        assert_eq!(step.state.iter().sum::<f64>(), 1.0);

        let mine = first(&env, CellAction::Mine);
        let step = env.step(&mine, &mut rng).unwrap();
        assert_eq!(step.state, vec![0.0; 5]);
        assert_eq!(step.reward, 0.0);

        // revisiting an already reached cell pays nothing
        let step = env.step(&a, &mut rng).unwrap();
        assert_eq!(step.reward, 0.0);
        let noop = first(&env, CellAction::Noop);
        let before = env.position().to_vec();
        assert_eq!(env.step(&noop, &mut rng).unwrap().reward, 0.0);
        assert_eq!(env.position(), before.as_slice());
        assert!(env.step(&5, &mut rng).is_err());
    }

    #[test]
    fn optimal_policy_earns_max_return() {
        let mut env = DangerousPath::new(5, 7).unwrap();
        let oracle = EpsilonGreedyPath::new(*env.labeling(), 0.0).unwrap();
        let data = gather_data(&mut env, &oracle, 3, &mut Rng::new(0)).unwrap();
        assert_eq!(data.returns(), &[25.0, 25.0, 25.0]);
        let random = EpsilonGreedyPath::new(*env.labeling(), 1.0).unwrap();
        let data = gather_data(&mut env, &random, 50, &mut Rng::new(0)).unwrap();
        assert!(data.returns().iter().all(|&r| (0.0..=25.0).contains(&r)));
        assert!(data.mean_return().unwrap() < 5.0);
    }
}
