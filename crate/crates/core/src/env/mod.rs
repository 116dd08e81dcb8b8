//! Simulators and the data-gathering loop.

mod csv;
mod dangerous_path;
mod gridworld;
mod point;

pub use self::csv::{read_dataset_csv, write_dataset_csv};
pub use dangerous_path::{
    CellAction, DangerousPath, EpsilonGreedyPath, PathLabeling, DANGEROUS_PATH_STEPS,
};
pub use gridworld::{
    demo_csv, grid_action_distance, grid_occupancy, grid_occupancy_exact, grid_state_distance,
    gridworld_demo, CellDistribution, DemoRow, GridLayout, GridScenario, GridWorld,
};
pub use point::{PointWorld, POINT_SPEED, POINT_STEPS, SIDE_WALL_BOTTOM, WALL_HALF_WIDTH, WALL_Y};

use crate::error::{Error, Result};
use crate::gmm::{DatasetBuilder, StateDataset};
use crate::math::Rng;
use crate::policy::Policy;

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    type Action: Clone;

    fn observation_dim(&self) -> usize;

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;

    fn step(&mut self, action: &Self::Action, rng: &mut Rng) -> Result<Step>;
}

/// One episode. `states[t]` is the state the agent acted from at step `t`;
/// the state reached after the final action is kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<A> {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<A>,
    pub rewards: Vec<f64>,
    pub final_state: Vec<f64>,
    pub terminal: bool,
}

impl<A> Trajectory<A> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Runs one episode. The environment and the policy draw from separate
/// streams derived from a single value of `rng`.
pub fn rollout<E, P>(env: &mut E, policy: &P, rng: &mut Rng) -> Result<Trajectory<E::Action>>
where
    E: Environment,
    P: Policy<Action = E::Action> + ?Sized,
{
    let base = Rng::new(rng.next_u64());
    let mut env_rng = base.split(0);
    let mut policy_rng = base.split(1);
    let mut state = env.reset(&mut env_rng);
    let mut traj = Trajectory {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        final_state: Vec::new(),
        terminal: false,
    };
    loop {
        let action = policy.sample(&state, &mut policy_rng)?;
        let step = env.step(&action, &mut env_rng)?;
        traj.states.push(std::mem::replace(&mut state, step.state));
        traj.actions.push(action);
        traj.rewards.push(step.reward);
        if step.done {
            traj.final_state = state;
            traj.terminal = true;
            return Ok(traj);
        }
    }
}

/// Collects `episodes` rollouts, recording each state before the action taken from it.
pub fn gather_data<E, P>(
    env: &mut E,
    policy: &P,
    episodes: usize,
    rng: &mut Rng,
) -> Result<StateDataset>
where
    E: Environment,
    P: Policy<Action = E::Action> + ?Sized,
{
    Ok(gather_trajectories(env, policy, episodes, rng)?.0)
}

/// Like [`gather_data`], also returning the raw trajectories.
pub fn gather_trajectories<E, P>(
    env: &mut E,
    policy: &P,
    episodes: usize,
    rng: &mut Rng,
) -> Result<(StateDataset, Vec<Trajectory<E::Action>>)>
where
    E: Environment,
    P: Policy<Action = E::Action> + ?Sized,
{
    if episodes == 0 {
        return Err(Error::invalid("episode count must be at least 1"));
    }
    let mut builder = DatasetBuilder::new(env.observation_dim());
    let mut trajs = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let traj = rollout(env, policy, rng)?;
        for (s, r) in traj.states.iter().zip(&traj.rewards) {
            builder.push(s, *r)?;
        }
        builder.end_episode();
        trajs.push(traj);
    }
    Ok((builder.finish()?, trajs))
}

/// `|mean return(a) - mean return(b)|`.
pub fn return_distance(a: &StateDataset, b: &StateDataset) -> Result<f64> {
    let ra = a.mean_return().ok_or(Error::Empty("returns"))?;
    let rb = b.mean_return().ok_or(Error::Empty("returns"))?;
    Ok((ra - rb).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{TabularPolicy, RIGHT};

    #[test]
    fn return_distance_arithmetic() {
        let a = StateDataset::from_rows(1, &[vec![0.0]], vec![3.7], vec![1]).unwrap();
        let b = StateDataset::from_rows(1, &[vec![0.0]], vec![0.65], vec![1]).unwrap();
        assert!((return_distance(&a, &b).unwrap() - 3.05).abs() < 1e-12);
        assert_eq!(
            return_distance(&a, &b).unwrap(),
            return_distance(&b, &a).unwrap()
        );
        assert_eq!(return_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn gathers_requested_episodes() {
        let layout = GridLayout::parse("S . G").unwrap();
        let mut env = GridWorld::new(layout, 0.3, 10).unwrap();
        let policy = TabularPolicy::deterministic(1, 3, &[Some(RIGHT); 3]).unwrap();
        let data = gather_data(&mut env, &policy, 5, &mut Rng::new(1)).unwrap();
        assert_eq!(data.episode_count(), 5);
        assert_eq!(data.episode_lengths().iter().sum::<usize>(), data.len());
        let again = gather_data(&mut env, &policy, 5, &mut Rng::new(1)).unwrap();
        assert_eq!(data, again);
        assert!(gather_data(&mut env, &policy, 0, &mut Rng::new(1)).is_err());
    }
}
