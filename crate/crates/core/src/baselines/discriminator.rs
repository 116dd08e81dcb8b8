use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::StateDataset;
use crate::math::{sigmoid, Activation, AdamConfig, AdamState, Mlp, Rng};
use crate::supervector::{default_labels, pool_datasets, DistanceMatrix};

pub const LOGIT_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub logit_clip: f64,
    /// Cap on the "others" pool as a multiple of the own-dataset size.
    pub max_other_ratio: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            hidden: vec![256, 256, 256],
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 128,
            logit_clip: LOGIT_CLIP,
            max_other_ratio: 10,
        }
    }
}

/// Classifier `D_i(s)` separating one policy's states from everyone else's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorBc {
    net: Mlp,
    shift: Vec<f64>,
    scale: Vec<f64>,
    clip: f64,
}

impl DiscriminatorBc {
    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    fn normalize(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    fn raw_logit(&self, state: &[f64]) -> Result<f64> {
        Error::check_dim(self.shift.len(), state.len())?;
        Ok(self.net.forward(&self.normalize(state))?[0])
    }

    /// Network output clipped to `[-clip, clip]`.
    pub fn logit(&self, state: &[f64]) -> Result<f64> {
        Ok(self.raw_logit(state)?.clamp(-self.clip, self.clip))
    }

    /// Probability that `state` came from the own policy.
    pub fn probability(&self, state: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(state)?))
    }

    /// `(1 - D) / D`, the inverse density ratio, bounded by `e^clip`.
    pub fn inverse_ratio(&self, state: &[f64]) -> Result<f64> {
        Ok((-self.logit(state)?).exp())
    }

    pub fn mean_inverse_ratio(&self, data: &StateDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("discriminator evaluation data"));
        }
        let mut sum = 0.0;
        for s in data.states() {
            sum += self.inverse_ratio(s)?;
        }
        Ok(sum / data.len() as f64)
    }

    /// Class-balanced binary cross-entropy, i.e. the negated objective
    /// `E_own log D + E_others log(1 - D)` divided by two.
    pub fn balanced_loss(&self, own: &StateDataset, others: &StateDataset) -> Result<f64> {
        let side = |data: &StateDataset, label: f64| -> Result<f64> {
            let mut sum = 0.0;
            for s in data.states() {
                sum += bce(self.logit(s)?, label);
            }
            Ok(sum / data.len().max(1) as f64)
        };
        Ok(0.5 * (side(own, 1.0)? + side(others, 0.0)?))
    }
}

fn bce(logit: f64, label: f64) -> f64 {
    // log(1 + e^z) - y z, computed without overflow
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    softplus - label * logit
}

#[derive(Debug, Clone)]
pub struct DiscriminatorFit {
    pub discriminator: DiscriminatorBc,
    /// Balanced loss on the training pool before training and after each epoch.
    pub losses: Vec<f64>,
}

pub fn train_discriminator(
    own: &StateDataset,
    others: &StateDataset,
    config: &DiscriminatorConfig,
    rng: &mut Rng,
) -> Result<DiscriminatorBc> {
    Ok(train_discriminator_traced(own, others, config, rng)?.discriminator)
}

pub fn train_discriminator_traced(
    own: &StateDataset,
    others: &StateDataset,
    config: &DiscriminatorConfig,
    rng: &mut Rng,
) -> Result<DiscriminatorFit> {
    Error::check_dim(own.dim(), others.dim())?;
    if own.is_empty() || others.is_empty() {
        return Err(Error::Empty("discriminator training data"));
    }
    if config.batch_size == 0 || !(config.logit_clip > 0.0) {
        return Err(Error::invalid("batch size and logit clip must be positive"));
    }
    let d = own.dim();

    let cap = own.len().saturating_mul(config.max_other_ratio.max(1));
    let mut other_idx: Vec<usize> = (0..others.len()).collect();
    if other_idx.len() > cap {
        rng.shuffle(&mut other_idx);
        other_idx.truncate(cap);
        other_idx.sort_unstable();
    }
    let others_kept = StateDataset::from_flat(
        d,
        other_idx
            .iter()
            .flat_map(|&i| others.state(i).iter().copied())
            .collect(),
        vec![0.0; other_idx.len()],
        vec![other_idx.len()],
    )?;

    let mut shift = vec![0.0; d];
    let mut scale = vec![0.0; d];
    let total = (own.len() + others_kept.len()) as f64;
    for s in own.states().chain(others_kept.states()) {
        for (m, x) in shift.iter_mut().zip(s) {
            *m += x / total;
        }
    }
    for s in own.states().chain(others_kept.states()) {
        for ((v, x), m) in scale.iter_mut().zip(s).zip(&shift) {
            *v += (x - m) * (x - m) / total;
        }
    }
    scale
        .iter_mut()
        .for_each(|v| *v = if *v > 1e-12 { v.sqrt() } else { 1.0 });

    let mut sizes = vec![d];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(1);
    let mut disc = DiscriminatorBc {
        net: Mlp::new(&sizes, Activation::Identity, rng)?,
        shift,
        scale,
        clip: config.logit_clip,
    };

    // (state, label, weight); weights make each class contribute half of the objective
    let n_own = own.len() as f64;
    let n_oth = others_kept.len() as f64;
    let mut samples: Vec<(Vec<f64>, f64, f64)> = own
        .states()
        .map(|s| (disc.normalize(s), 1.0, total / (2.0 * n_own)))
        .chain(
            others_kept
                .states()
                .map(|s| (disc.normalize(s), 0.0, total / (2.0 * n_oth))),
        )
        .collect();

    let mut params = disc.net.params();
    let mut adam = AdamState::new(
        params.len(),
        AdamConfig::with_learning_rate(config.learning_rate),
    );
    let mut grads = vec![0.0; params.len()];
    let mut losses = vec![disc.balanced_loss(own, &others_kept)?];
    for _ in 0..config.epochs {
        rng.shuffle(&mut samples);
        for batch in samples.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let inv = 1.0 / batch.len() as f64;
            for (x, y, w) in batch {
                let trace = disc.net.forward_trace(x)?;
                let z = trace.output()[0];
                if z.abs() >= disc.clip {
                    continue;
                }
                let dz = sigmoid(z) - y;
                disc.net
                    .accumulate_gradient(&trace, &[dz], w * inv, &mut grads)?;
            }
            adam.step(&mut params, &grads)?;
            disc.net.set_params(&params)?;
        }
        losses.push(disc.balanced_loss(own, &others_kept)?);
    }
    Ok(DiscriminatorFit {
        discriminator: disc,
        losses,
    })
}

/// Trains one discriminator per dataset (own vs. all others) and sums the
/// mean inverse ratios both ways: `d(i,j) = E_{B_j} f_i + E_{B_i} f_j`.
pub fn discriminator_distance(
    datasets: &[StateDataset],
    config: &DiscriminatorConfig,
    rng: &Rng,
) -> Result<(Vec<DiscriminatorBc>, DistanceMatrix)> {
    let n = datasets.len();
    if n < 2 {
        return Err(Error::invalid("need at least two datasets to compare"));
    }
    let discs: Vec<DiscriminatorBc> = (0..n)
        .into_par_iter()
        .map(|i| {
            let rest: Vec<StateDataset> = datasets
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, d)| d.clone())
                .collect();
            let others = pool_datasets(&rest)?;
            train_discriminator(&datasets[i], &others, config, &mut rng.split(i as u64))
        })
        .collect::<Result<_>>()?;

    // f[i][j] = mean over B_j of f_i
    let f: Vec<Vec<f64>> = discs
        .par_iter()
        .map(|disc| {
            datasets
                .iter()
                .map(|d| disc.mean_inverse_ratio(d))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let matrix = DistanceMatrix::from_fn(default_labels(n), |i, j| Ok(f[i][j] + f[j][i]))?;
    Ok((discs, matrix))
}
