use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_gaussian_bc, gaussian_symmetric_kl};
use crate::env::{gather_data, DangerousPath, Environment};
use crate::error::{Error, Result};
use crate::gmm::StateDataset;
use crate::math::{Activation, AdamConfig, AdamState, Mlp, Rng};
use crate::policy::{Policy, SoftmaxPolicy, HIDDEN};
use crate::supervector::{supervector_distance_matrix, SupervectorConfig};

use super::LearningCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    None,
    MaxTv,
    Gaussian,
    Supervector,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 4] = [
        ConstraintKind::None,
        ConstraintKind::MaxTv,
        ConstraintKind::Gaussian,
        ConstraintKind::Supervector,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::None => "none",
            ConstraintKind::MaxTv => "max_tv",
            ConstraintKind::Gaussian => "gaussian",
            ConstraintKind::Supervector => "supervector",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown constraint {name:?}")))
    }

    /// Threshold used when none is given; ignored by `None`.
    pub fn default_threshold(self) -> f64 {
        match self {
            ConstraintKind::None => 0.0,
            ConstraintKind::MaxTv => 0.4,
            ConstraintKind::Gaussian => 10.0,
            ConstraintKind::Supervector => 0.05,
        }
    }

    /// Candidate thresholds for a sweep.
    pub fn sweep_grid(self) -> &'static [f64] {
        match self {
            ConstraintKind::None => &[],
            ConstraintKind::MaxTv => &[0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
            ConstraintKind::Gaussian => &[0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 15.0, 20.0],
            ConstraintKind::Supervector => &[0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub threshold: f64,
}

impl Constraint {
    pub fn none() -> Self {
        Constraint {
            kind: ConstraintKind::None,
            threshold: 0.0,
        }
    }

    pub fn with_default_threshold(kind: ConstraintKind) -> Self {
        Constraint {
            kind,
            threshold: kind.default_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub constraint: Constraint,
    pub actions: usize,
    pub iterations: usize,
    pub envs: usize,
    pub samples_per_env: usize,
    pub minibatches: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub probe_trajectories: usize,
    pub probe_noise: f64,
    pub supervector_components: usize,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        TrustRegionConfig {
            constraint: Constraint::none(),
            actions: DangerousPath::DEFAULT_ACTIONS,
            iterations: 50,
            envs: 8,
            samples_per_env: 512,
            minibatches: 100,
            minibatch_size: 64,
            learning_rate: 1e-3,
            probe_trajectories: 5,
            probe_noise: 1e-3,
            supervector_components: 4,
        }
    }
}

impl TrustRegionConfig {
    pub fn with_constraint(constraint: Constraint) -> Self {
        TrustRegionConfig {
            constraint,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.actions,
            self.iterations,
            self.envs,
            self.samples_per_env,
            self.minibatches,
            self.minibatch_size,
            self.probe_trajectories,
            self.supervector_components,
        ];
        if counts.contains(&0) {
            return Err(Error::invalid("all trust-region counts must be at least 1"));
        }
        if self.constraint.kind != ConstraintKind::None && !(self.constraint.threshold > 0.0) {
            return Err(Error::invalid("constraint threshold must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.probe_noise >= 0.0) {
            return Err(Error::invalid(
                "learning rate must be positive and probe noise non-negative",
            ));
        }
        Ok(())
    }
}

/// `max_s ½ Σ_a |π(a|s) - π'(a|s)|` over the given states.
pub fn max_tv_divergence<'a>(
    old: &SoftmaxPolicy,
    new: &SoftmaxPolicy,
    states: impl IntoIterator<Item = &'a [f64]>,
) -> Result<f64> {
    let mut best: Option<f64> = None;
    for s in states {
        let p = old.probabilities(s)?;
        let q = new.probabilities(s)?;
        Error::check_dim(p.len(), q.len())?;
        let tv = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        best = Some(best.map_or(tv, |b: f64| b.max(tv)));
    }
    best.map(|b| b.min(1.0)).ok_or(Error::Empty("probe states"))
}

/// Gathers fresh probe trajectories from `new` on a copy of `probe_stream`,
/// compares them with the cached `old_probe` data and reports whether the
/// distance exceeds `threshold`. When `old_probe` was gathered on the same
/// stream, an unchanged policy reproduces it exactly and scores zero.
#[allow(clippy::too_many_arguments)]
pub fn behavioural_constraint(
    kind: ConstraintKind,
    threshold: f64,
    old_probe: &StateDataset,
    new: &SoftmaxPolicy,
    env: &DangerousPath,
    config: &TrustRegionConfig,
    probe_stream: &Rng,
    rng: &mut Rng,
) -> Result<(bool, f64)> {
    let new_probe = probe(env, new, config, &mut probe_stream.clone())?;
    let value = state_distance(kind, old_probe, &new_probe, config, rng)?;
    Ok((value > threshold, value))
}

fn probe(
    env: &DangerousPath,
    policy: &SoftmaxPolicy,
    config: &TrustRegionConfig,
    rng: &mut Rng,
) -> Result<StateDataset> {
    let data = gather_data(&mut env.clone(), policy, config.probe_trajectories, rng)?;
    Ok(data.with_noise(config.probe_noise, rng))
}

fn state_distance(
    kind: ConstraintKind,
    old: &StateDataset,
    new: &StateDataset,
    config: &TrustRegionConfig,
    rng: &mut Rng,
) -> Result<f64> {
    match kind {
        ConstraintKind::Gaussian => {
            gaussian_symmetric_kl(&fit_gaussian_bc(old)?, &fit_gaussian_bc(new)?)
        }
        ConstraintKind::Supervector => {
            let cfg = SupervectorConfig::with_components(config.supervector_components);
            let analysis = supervector_distance_matrix(&[old.clone(), new.clone()], &cfg, rng)?;
            Ok(analysis.distances.get(0, 1))
        }
        other => Err(Error::invalid(format!(
            "{} is not a state-based constraint",
            other.name()
        ))),
    }
}

struct Batch {
    states: Vec<Vec<f64>>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    old_log_probs: Vec<f64>,
    mean_return: f64,
}

type EnvRollout = (Vec<(Vec<f64>, usize, f64)>, Vec<f64>);

/// Runs `envs` copies of the environment for `samples_per_env` steps each,
/// restarting episodes as they end.
fn collect(
    env: &DangerousPath,
    policy: &SoftmaxPolicy,
    config: &TrustRegionConfig,
    rng: &Rng,
) -> Result<Batch> {
    let parts: Vec<EnvRollout> = (0..config.envs)
        .into_par_iter()
        .map(|e| {
            let mut rng = rng.split(e as u64);
            let mut env = env.clone();
            let mut state = env.reset(&mut rng);
            let mut episode_return = 0.0;
            let mut rows = Vec::with_capacity(config.samples_per_env);
            let mut returns = Vec::new();
            for _ in 0..config.samples_per_env {
                let a = policy.sample(&state, &mut rng)?;
                let step = env.step(&a, &mut rng)?;
                episode_return += step.reward;
                rows.push((std::mem::replace(&mut state, step.state), a, step.reward));
                if step.done {
                    returns.push(episode_return);
                    episode_return = 0.0;
                    state = env.reset(&mut rng);
                }
            }
            Ok((rows, returns))
        })
        .collect::<Result<_>>()?;

    let mut batch = Batch {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        old_log_probs: Vec::new(),
        mean_return: 0.0,
    };
    let mut returns = Vec::new();
    for (rows, r) in parts {
        for (s, a, rew) in rows {
            batch.old_log_probs.push(policy.action_log_prob(&s, a)?);
            batch.states.push(s);
            batch.actions.push(a);
            batch.rewards.push(rew);
        }
        returns.extend(r);
    }
    batch.mean_return = if returns.is_empty() {
        0.0
    } else {
        returns.iter().sum::<f64>() / returns.len() as f64
    };
    Ok(batch)
}

/// Policy-gradient training on the dangerous-path environment with the ratio
/// clip replaced by a behavioural constraint checked after every update.
///
/// The returned curve holds the mean episode return of each iteration's
/// rollout, with `aux = 1` when the constraint cut the updates short.
pub fn train_trust_region(
    env: &DangerousPath,
    config: &TrustRegionConfig,
    seed: u64,
) -> Result<LearningCurve> {
    config.validate()?;
    if env.actions() != config.actions {
        return Err(Error::invalid(format!(
            "environment has {} actions but the config expects {}",
            env.actions(),
            config.actions
        )));
    }
    let root = Rng::new(seed);
    let mut init_rng = root.split(0);
    let mut policy = SoftmaxPolicy::new(config.actions, config.actions, &mut init_rng)?;
    let mut value = Mlp::new(
        &[config.actions, HIDDEN[0], HIDDEN[1], 1],
        Activation::Identity,
        &mut init_rng,
    )?;
    let mut policy_params = policy.params();
    let mut value_params = value.params();
    let adam_cfg = AdamConfig::with_learning_rate(config.learning_rate);
    let mut policy_adam = AdamState::new(policy_params.len(), adam_cfg);
    let mut value_adam = AdamState::new(value_params.len(), adam_cfg);
    let constraint = config.constraint;

    let mut curve = LearningCurve::new(seed);
    for it in 0..config.iterations {
        let iter_rng = root.split(1 + it as u64);
        let batch = collect(env, &policy, config, &iter_rng.split(0))?;
        let mut rng = iter_rng.split(1);
        let probe_stream = iter_rng.split(2);
        let old = policy.clone();
        let baseline: Vec<f64> = batch
            .states
            .iter()
            .map(|s| Ok(value.forward(s)?[0]))
            .collect::<Result<_>>()?;
        let advantages: Vec<f64> = batch
            .rewards
            .iter()
            .zip(&baseline)
            .map(|(r, v)| r - v)
            .collect();

        let tv_states: Vec<Vec<f64>> = match constraint.kind {
            ConstraintKind::MaxTv => {
                let unique: BTreeSet<Vec<i64>> = batch
                    .states
                    .iter()
                    .map(|s| s.iter().map(|&x| x as i64).collect())
                    .collect();
                unique
                    .into_iter()
                    .map(|c| c.into_iter().map(|x| x as f64).collect())
                    .collect()
            }
            _ => Vec::new(),
        };
        let old_probe = match constraint.kind {
            ConstraintKind::Gaussian | ConstraintKind::Supervector => {
                Some(probe(env, &old, config, &mut probe_stream.clone())?)
            }
            _ => None,
        };

        let n = batch.states.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut cursor = n;
        let mut stopped = false;
        for _ in 0..config.minibatches {
            let mut idx = Vec::with_capacity(config.minibatch_size);
            while idx.len() < config.minibatch_size.min(n) {
                if cursor == n {
                    rng.shuffle(&mut order);
                    cursor = 0;
                }
                idx.push(order[cursor]);
                cursor += 1;
            }
            let b = idx.len() as f64;
            let adv: Vec<f64> = idx.iter().map(|&i| advantages[i]).collect();
            let mean = adv.iter().sum::<f64>() / b;
            let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / b).sqrt();

            let mut pg = vec![0.0; policy_params.len()];
            let mut vg = vec![0.0; value_params.len()];
            for (&i, a) in idx.iter().zip(&adv) {
                let s = &batch.states[i];
                let norm_adv = (a - mean) / (std + 1e-8);
                let ratio =
                    (policy.action_log_prob(s, batch.actions[i])? - batch.old_log_probs[i]).exp();
                if !ratio.is_finite() {
                    return Err(Error::NonFinite("policy ratio"));
                }
                // loss = -mean(ratio * adv); d ratio = ratio * d log π
                policy.accumulate_log_prob_gradient(
                    s,
                    batch.actions[i],
                    -norm_adv * ratio / b,
                    &mut pg,
                )?;
                let trace = value.forward_trace(s)?;
                let err = trace.output()[0] - batch.rewards[i];
                value.accumulate_gradient(&trace, &[err], 2.0 / b, &mut vg)?;
            }
            policy_adam.step(&mut policy_params, &pg)?;
            value_adam.step(&mut value_params, &vg)?;
            policy = policy.with_params(&policy_params)?;
            value.set_params(&value_params)?;

            let violated = match constraint.kind {
                ConstraintKind::None => false,
                ConstraintKind::MaxTv => {
                    max_tv_divergence(&old, &policy, tv_states.iter().map(Vec::as_slice))?
                        > constraint.threshold
                }
                kind => {
                    let old_probe = old_probe
                        .as_ref()
                        .expect("probe gathered for state constraints");
                    behavioural_constraint(
                        kind,
                        constraint.threshold,
                        old_probe,
                        &policy,
                        env,
                        config,
                        &probe_stream,
                        &mut rng,
                    )?
                    .0
                }
            };
            if violated {
                stopped = true;
                break;
            }
        }
        curve.push(batch.mean_return, if stopped { 1.0 } else { 0.0 });
    }
    Ok(curve)
}
