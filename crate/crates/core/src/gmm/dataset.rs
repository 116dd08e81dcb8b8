use std::ops::Range;

use crate::error::{Error, Result};

/// States visited by one policy, grouped into episodes.
///
/// Each recorded state carries the reward of the action taken from it, so an
/// episode's return is the sum of its rows' rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDataset {
    dim: usize,
    states: Vec<f64>,
    rewards: Vec<f64>,
    episode_lengths: Vec<usize>,
    returns: Vec<f64>,
}

impl StateDataset {
    /// Builds a dataset from a flat row-major state buffer.
    pub fn from_flat(
        dim: usize,
        states: Vec<f64>,
        rewards: Vec<f64>,
        episode_lengths: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("state dimension must be positive"));
        }
        if !states.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "state buffer of length {} is not a multiple of dimension {dim}",
                states.len()
            )));
        }
        let n = states.len() / dim;
        Error::check_dim(n, rewards.len())?;
        if episode_lengths.contains(&0) {
            return Err(Error::invalid("episode lengths must be positive"));
        }
        let total: usize = episode_lengths.iter().sum();
        if total != n {
            return Err(Error::invalid(format!(
                "episode lengths sum to {total} but the dataset holds {n} states"
            )));
        }
        if states.iter().chain(&rewards).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state dataset"));
        }
        let mut returns = Vec::with_capacity(episode_lengths.len());
        let mut start = 0;
        for &len in &episode_lengths {
            returns.push(rewards[start..start + len].iter().sum());
            start += len;
        }
        Ok(StateDataset {
            dim,
            states,
            rewards,
            episode_lengths,
            returns,
        })
    }

    pub fn from_rows(
        dim: usize,
        rows: &[Vec<f64>],
        rewards: Vec<f64>,
        episode_lengths: Vec<usize>,
    ) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            Error::check_dim(dim, row.len())?;
            flat.extend_from_slice(row);
        }
        Self::from_flat(dim, flat, rewards, episode_lengths)
    }

    /// Single-episode dataset with zero rewards; handy for synthetic data.
    pub fn from_states(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let lengths = if rows.is_empty() {
            vec![]
        } else {
            vec![rows.len()]
        };
        Self::from_rows(dim, rows, vec![0.0; rows.len()], lengths)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.states.chunks_exact(self.dim)
    }

    pub fn flat_states(&self) -> &[f64] {
        &self.states
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn episode_lengths(&self) -> &[usize] {
        &self.episode_lengths
    }

    pub fn episode_count(&self) -> usize {
        self.episode_lengths.len()
    }

    /// Per-episode returns.
    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn mean_return(&self) -> Option<f64> {
        crate::math::mean(&self.returns)
    }

    /// Row ranges of every episode, in order.
    pub fn episode_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.episode_lengths
            .iter()
            .map(|&len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }

    /// Dataset made of the selected episodes, in the given order.
    pub fn select_episodes(&self, indices: &[usize]) -> Result<Self> {
        let ranges = self.episode_ranges();
        let mut states = Vec::new();
        let mut rewards = Vec::new();
        let mut lengths = Vec::with_capacity(indices.len());
        for &i in indices {
            let r = ranges
                .get(i)
                .ok_or_else(|| Error::invalid(format!("episode index {i} out of range")))?;
            states.extend_from_slice(&self.states[r.start * self.dim..r.end * self.dim]);
            rewards.extend_from_slice(&self.rewards[r.clone()]);
            lengths.push(r.len());
        }
        Self::from_flat(self.dim, states, rewards, lengths)
    }

    /// Copy with every state coordinate perturbed by `N(0, sigma²)` noise.
    pub fn with_noise(&self, sigma: f64, rng: &mut crate::math::Rng) -> Self {
        let mut out = self.clone();
        for v in &mut out.states {
            *v += sigma * rng.normal();
        }
        out
    }
}

/// Incremental builder used by rollout collection and file readers.
#[derive(Debug, Clone)]
pub struct DatasetBuilder {
    dim: usize,
    states: Vec<f64>,
    rewards: Vec<f64>,
    lengths: Vec<usize>,
    current: usize,
}

impl DatasetBuilder {
    pub fn new(dim: usize) -> Self {
        DatasetBuilder {
            dim,
            states: Vec::new(),
            rewards: Vec::new(),
            lengths: Vec::new(),
            current: 0,
        }
    }

    pub fn push(&mut self, state: &[f64], reward: f64) -> Result<()> {
        Error::check_dim(self.dim, state.len())?;
        self.states.extend_from_slice(state);
        self.rewards.push(reward);
        self.current += 1;
        Ok(())
    }

    /// Closes the running episode; a no-op if it holds no states.
    pub fn end_episode(&mut self) {
        if self.current > 0 {
            self.lengths.push(self.current);
            self.current = 0;
        }
    }

    pub fn finish(mut self) -> Result<StateDataset> {
        self.end_episode();
        StateDataset::from_flat(self.dim, self.states, self.rewards, self.lengths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn returns_follow_episode_boundaries() {
        let ds = StateDataset::from_flat(
            1,
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![1.0, 0.0, 2.0, 0.5, 0.5],
            vec![2, 3],
        )
        .unwrap();
        assert_eq!(ds.returns(), &[1.0, 3.0]);
        assert_eq!(ds.mean_return(), Some(2.0));
        assert_eq!(ds.episode_ranges(), vec![0..2, 2..5]);
    }

    #[test]
    fn rejects_inconsistent_lengths() {
        assert!(StateDataset::from_flat(1, vec![0.0, 1.0], vec![0.0, 0.0], vec![3]).is_err());
        assert!(StateDataset::from_flat(2, vec![0.0, 1.0, 2.0], vec![0.0], vec![1]).is_err());
        assert!(StateDataset::from_flat(1, vec![f64::NAN], vec![0.0], vec![1]).is_err());
        assert!(StateDataset::from_flat(1, vec![0.0], vec![0.0], vec![0, 1]).is_err());
    }

    #[test]
    fn select_episodes_keeps_structure() {
        let ds = StateDataset::from_flat(
            1,
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![1.0, 0.0, 2.0, 0.5, 0.5],
            vec![2, 3],
        )
        .unwrap();
        let sel = ds.select_episodes(&[1, 0]).unwrap();
        assert_eq!(sel.flat_states(), &[2.0, 3.0, 4.0, 0.0, 1.0]);
        assert_eq!(sel.returns(), &[3.0, 1.0]);
        assert!(ds.select_episodes(&[2]).is_err());
    }

    #[test]
    fn builder_skips_empty_episodes() {
        let mut b = DatasetBuilder::new(2);
        b.push(&[1.0, 2.0], 0.5).unwrap();
        b.end_episode();
        b.end_episode();
        b.push(&[3.0, 4.0], 1.0).unwrap();
        let ds = b.finish().unwrap();
        assert_eq!(ds.episode_lengths(), &[1, 1]);
        assert_eq!(ds.len(), 2);
    }
}
