use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_gaussian_bc, gaussian_symmetric_kl, GaussianBc};
use crate::env::{gather_trajectories, Environment, PointWorld};
use crate::error::{Error, Result};
use crate::gmm::DiagGmm;
use crate::gmm::StateDataset;
use crate::math::{AdamConfig, AdamState, Rng};
use crate::policy::{AnglePolicy, Policy};
use crate::supervector::{fit_ubm, kl_upper_bound, map_adapt, Supervector, SupervectorConfig};

use super::LearningCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    Terminal,
    Gaussian,
    Supervector,
}

impl BcKind {
    pub const ALL: [BcKind; 3] = [BcKind::Terminal, BcKind::Gaussian, BcKind::Supervector];

    pub fn name(self) -> &'static str {
        match self {
            BcKind::Terminal => "terminal",
            BcKind::Gaussian => "gaussian",
            BcKind::Supervector => "supervector",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown BC {name:?}")))
    }
}

/// Evolution-strategy settings. A zero `novelty_weight` gives plain ES:
/// members are updated round-robin and scored on fitness alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub bc: BcKind,
    pub novelty_weight: f64,
    pub population: usize,
    pub pairs: usize,
    pub sigma: f64,
    pub step_size: f64,
    pub k_nearest: usize,
    pub generations: usize,
    pub bc_episodes: usize,
    /// Standard deviation of the noise added to states before fitting the
    /// Gaussian BC, which otherwise collapses on wall-pinned coordinates.
    pub gaussian_jitter: f64,
    pub supervector_components: usize,
    pub max_ubm_states: usize,
    /// Generations between refits of the supervector UBM on the archive.
    pub ubm_refit: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            bc: BcKind::Terminal,
            novelty_weight: 0.0,
            population: 3,
            pairs: 50,
            sigma: 0.2,
            step_size: 0.05,
            k_nearest: 10,
            generations: 500,
            bc_episodes: 5,
            gaussian_jitter: 0.05,
            supervector_components: 4,
            max_ubm_states: 4096,
            ubm_refit: 10,
        }
    }
}

impl EsConfig {
    pub fn es() -> Self {
        EsConfig::default()
    }

    pub fn nsr_es(bc: BcKind) -> Self {
        EsConfig {
            bc,
            novelty_weight: 0.5,
            ..Default::default()
        }
    }

    pub fn is_novelty_search(&self) -> bool {
        self.novelty_weight > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if [
            self.population,
            self.pairs,
            self.k_nearest,
            self.bc_episodes,
            self.supervector_components,
            self.ubm_refit,
        ]
        .contains(&0)
        {
            return Err(Error::invalid("ES counts must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.novelty_weight)
            || !(self.sigma >= 0.0)
            || !(self.step_size > 0.0)
            || !(self.gaussian_jitter >= 0.0)
        {
            return Err(Error::invalid(
                "novelty weight must lie in [0, 1], sigma >= 0 and step size > 0",
            ));
        }
        Ok(())
    }
}

/// A policy's behaviour as seen by one BC.
#[derive(Debug, Clone, PartialEq)]
pub enum Behaviour {
    Terminal(Vec<f64>),
    Gaussian(GaussianBc),
    States(StateDataset),
}

struct Evaluation {
    fitness: f64,
    behaviour: Behaviour,
}

fn evaluate(policy: &AnglePolicy, config: &EsConfig) -> Result<Evaluation> {
    // the point world and angle policies are deterministic: every episode repeats the first
    let (once, trajs) =
        gather_trajectories(&mut PointWorld::default(), policy, 1, &mut Rng::new(0))?;
    let mut data = once.select_episodes(&vec![0; config.bc_episodes])?;
    let fitness = data.mean_return().ok_or(Error::Empty("episodes"))?;
    if !fitness.is_finite() {
        return Err(Error::NonFinite("fitness"));
    }
    if config.bc == BcKind::Gaussian && config.gaussian_jitter > 0.0 {
        data = data.with_noise(config.gaussian_jitter, &mut Rng::new(0).split(1));
    }
    let behaviour = match config.bc {
        BcKind::Terminal => Behaviour::Terminal(trajs[0].final_state.clone()),
        BcKind::Gaussian => Behaviour::Gaussian(fit_gaussian_bc(&data)?),
        BcKind::Supervector => Behaviour::States(data),
    };
    Ok(Evaluation { fitness, behaviour })
}

fn mean_final_state<'a>(finals: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0.0;
    for f in finals {
        if sum.is_empty() {
            sum = vec![0.0; f.len()];
        }
        sum.iter_mut().zip(f).for_each(|(s, x)| *s += x);
        n += 1.0;
    }
    sum.iter_mut().for_each(|s| *s /= n);
    sum
}

/// Mean final state over `episodes` rollouts.
pub fn terminal_state_bc<E, P>(
    env: &mut E,
    policy: &P,
    episodes: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>>
where
    E: Environment,
    P: Policy<Action = E::Action>,
{
    let (_, trajs) = gather_trajectories(env, policy, episodes, rng)?;
    Ok(mean_final_state(
        trajs.iter().map(|t| t.final_state.as_slice()),
    ))
}

/// Maps values to evenly spaced ranks in `[-0.5, 0.5]`; ties keep index order.
pub fn centered_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    for (rank, &i) in idx.iter().enumerate() {
        out[i] = rank as f64 / (n - 1) as f64 - 0.5;
    }
    out
}

/// Behaviours seen so far. Supervector archives also hold a UBM, refitted on
/// the archive's states on demand, and every entry's adapted means under it.
struct Archive {
    entries: Vec<Behaviour>,
    ubm: Option<DiagGmm>,
    supervectors: Vec<Supervector>,
    sv_config: SupervectorConfig,
}

impl Archive {
    fn new(config: &EsConfig) -> Self {
        Archive {
            entries: Vec::new(),
            ubm: None,
            supervectors: Vec::new(),
            sv_config: SupervectorConfig {
                max_ubm_states: Some(config.max_ubm_states),
                ..SupervectorConfig::with_components(config.supervector_components)
            },
        }
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn push(&mut self, behaviour: Behaviour) -> Result<()> {
        if let Some(ubm) = &self.ubm {
            self.supervectors.push(map_adapt(
                ubm,
                states_of(&behaviour)?,
                self.sv_config.relevance,
            )?);
        }
        self.entries.push(behaviour);
        Ok(())
    }

    fn refit(&mut self, rng: &mut Rng) -> Result<()> {
        let datasets = self
            .entries
            .iter()
            .map(|b| states_of(b).cloned())
            .collect::<Result<Vec<_>>>()?;
        let ubm = fit_ubm(&datasets, &self.sv_config, rng)?;
        self.supervectors = datasets
            .par_iter()
            .map(|d| map_adapt(&ubm, d, self.sv_config.relevance))
            .collect::<Result<_>>()?;
        self.ubm = Some(ubm);
        Ok(())
    }

    /// Mean distance from each candidate to its `k` nearest entries.
    fn novelty(&self, candidates: &[&Behaviour], k: usize) -> Result<Vec<f64>> {
        let pairwise: Vec<Vec<f64>> = match &self.ubm {
            None => candidates
                .par_iter()
                .map(|c| {
                    self.entries
                        .iter()
                        .map(|a| behaviour_distance(c, a))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
            Some(ubm) => candidates
                .par_iter()
                .map(|c| {
                    let sv = map_adapt(ubm, states_of(c)?, self.sv_config.relevance)?;
                    self.supervectors
                        .iter()
                        .map(|a| kl_upper_bound(&sv, a, ubm))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
        };
        Ok(pairwise
            .into_iter()
            .map(|mut d| {
                d.sort_by(f64::total_cmp);
                let k = k.min(d.len()).max(1);
                d.iter().take(k).sum::<f64>() / k as f64
            })
            .collect())
    }
}

fn states_of(b: &Behaviour) -> Result<&StateDataset> {
    match b {
        Behaviour::States(d) => Ok(d),
        _ => Err(Error::invalid("supervector novelty needs state data")),
    }
}

fn behaviour_distance(a: &Behaviour, b: &Behaviour) -> Result<f64> {
    match (a, b) {
        (Behaviour::Terminal(x), Behaviour::Terminal(y)) => {
            Error::check_dim(x.len(), y.len())?;
            Ok(x.iter()
                .zip(y)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt())
        }
        (Behaviour::Gaussian(x), Behaviour::Gaussian(y)) => gaussian_symmetric_kl(x, y),
        _ => Err(Error::invalid(
            "behaviours of different kinds cannot be compared pairwise",
        )),
    }
}

#[derive(Debug, Clone)]
pub struct EsRun {
    /// Per generation: the best current population return, and the novelty of the updated member.
    pub curve: LearningCurve,
    pub population: Vec<AnglePolicy>,
    pub returns: Vec<f64>,
    pub archive_size: usize,
}

impl EsRun {
    pub fn final_return(&self) -> f64 {
        self.returns
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn train_es(config: &EsConfig, seed: u64) -> Result<LearningCurve> {
    Ok(train_es_traced(config, seed)?.curve)
}

/// ES / NSR-ES on the point world with a population of parameter vectors.
/// Each generation updates one member using mirrored Gaussian perturbations
/// scored by centered ranks of fitness, blended with ranks of novelty
/// against the archive when `novelty_weight > 0`.
pub fn train_es_traced(config: &EsConfig, seed: u64) -> Result<EsRun> {
    config.validate()?;
    let root = Rng::new(seed);
    let mut noise_rng = root.split(1);
    let mut select_rng = root.split(2);
    let mut ubm_rng = root.split(3);

    let mut population = Vec::with_capacity(config.population);
    for m in 0..config.population {
        population.push(AnglePolicy::new(2, &mut root.split(100 + m as u64))?);
    }
    let dim = population[0].params().len();
    let mut params: Vec<Vec<f64>> = population.iter().map(AnglePolicy::params).collect();
    let mut adams: Vec<AdamState> = (0..config.population)
        .map(|_| AdamState::new(dim, AdamConfig::with_learning_rate(config.step_size)))
        .collect();

    let mut returns = Vec::with_capacity(config.population);
    let mut current = Vec::with_capacity(config.population);
    let mut archive = Archive::new(config);
    for p in &population {
        let e = evaluate(p, config)?;
        returns.push(e.fitness);
        current.push(e.behaviour.clone());
        if config.is_novelty_search() {
            archive.push(e.behaviour)?;
        }
    }
    let refits = config.is_novelty_search() && config.bc == BcKind::Supervector;
    if refits {
        archive.refit(&mut ubm_rng)?;
    }

    let mut curve = LearningCurve::new(seed);
    for g in 0..config.generations {
        if refits && g > 0 && g % config.ubm_refit == 0 {
            archive.refit(&mut ubm_rng)?;
        }
        let (m, member_novelty) = if config.is_novelty_search() {
            let refs: Vec<&Behaviour> = current.iter().collect();
            let nov = archive.novelty(&refs, config.k_nearest)?;
            let m = select_rng
                .weighted_index(&nov)
                .unwrap_or_else(|| select_rng.below(nov.len()));
            (m, nov[m])
        } else {
            (g % config.population, 0.0)
        };

        let eps: Vec<Vec<f64>> = (0..config.pairs)
            .map(|_| (0..dim).map(|_| noise_rng.normal()).collect())
            .collect();
        let center = &params[m];
        let candidates: Vec<Vec<f64>> = eps
            .iter()
            .flat_map(|e| {
                let plus: Vec<f64> = center
                    .iter()
                    .zip(e)
                    .map(|(c, x)| c + config.sigma * x)
                    .collect();
                let minus: Vec<f64> = center
                    .iter()
                    .zip(e)
                    .map(|(c, x)| c - config.sigma * x)
                    .collect();
                [plus, minus]
            })
            .collect();
        let template = &population[m];
        let evals: Vec<Evaluation> = candidates
            .par_iter()
            .map(|c| evaluate(&template.with_params(c)?, config))
            .collect::<Result<_>>()?;

        let fitness: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
        let mut scores = centered_ranks(&fitness);
        if config.is_novelty_search() {
            let refs: Vec<&Behaviour> = evals.iter().map(|e| &e.behaviour).collect();
            let nov = centered_ranks(&archive.novelty(&refs, config.k_nearest)?);
            let w = config.novelty_weight;
            scores
                .iter_mut()
                .zip(&nov)
                .for_each(|(s, n)| *s = (1.0 - w) * *s + w * n);
        }

        // ascent direction, negated for the descent-form optimizer
        let mut grad = vec![0.0; dim];
        if config.sigma > 0.0 {
            let scale = 1.0 / (2.0 * config.pairs as f64 * config.sigma);
            for (i, e) in eps.iter().enumerate() {
                let w = scores[2 * i] - scores[2 * i + 1];
                grad.iter_mut()
                    .zip(e)
                    .for_each(|(g, x)| *g -= scale * w * x);
            }
        }
        adams[m].step(&mut params[m], &grad)?;
        population[m] = population[m].with_params(&params[m])?;

        let e = evaluate(&population[m], config)?;
        returns[m] = e.fitness;
        current[m] = e.behaviour.clone();
        if config.is_novelty_search() {
            archive.push(e.behaviour)?;
        }
        let best = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        curve.push(best, member_novelty);
    }
    Ok(EsRun {
        curve,
        population,
        returns,
        archive_size: archive.len(),
    })
}
