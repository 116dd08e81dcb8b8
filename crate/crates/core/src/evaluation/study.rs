use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    discriminator_distance, gaussian_distance_matrix, histogram_distance_matrix,
    DiscriminatorConfig,
};
use crate::env::{gather_data, DangerousPath, EpsilonGreedyPath};
use crate::error::{Error, Result};
use crate::gmm::StateDataset;
use crate::io::format_number;
use crate::math::Rng;
use crate::supervector::{supervector_distance_matrix, DistanceMatrix, SupervectorConfig};

use super::{
    coefficient_of_variation, distance_error, minmax_normalize, return_correlation, MetricReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcMethod {
    Supervector,
    Gaussian,
    Histogram,
    Discriminator,
}

impl BcMethod {
    pub const ALL: [BcMethod; 4] = [
        BcMethod::Supervector,
        BcMethod::Gaussian,
        BcMethod::Histogram,
        BcMethod::Discriminator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BcMethod::Supervector => "supervector",
            BcMethod::Gaussian => "gaussian",
            BcMethod::Histogram => "histogram",
            BcMethod::Discriminator => "discriminator",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown method {name:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct MethodParams {
    pub supervector: SupervectorConfig,
    pub discriminator: DiscriminatorConfig,
}

/// Pairwise distances between the datasets under one BC method.
pub fn bc_distance_matrix(
    method: BcMethod,
    datasets: &[StateDataset],
    params: &MethodParams,
    rng: &mut Rng,
) -> Result<DistanceMatrix> {
    match method {
        BcMethod::Supervector => {
            Ok(supervector_distance_matrix(datasets, &params.supervector, rng)?.distances)
        }
        BcMethod::Gaussian => gaussian_distance_matrix(datasets),
        BcMethod::Histogram => histogram_distance_matrix(datasets),
        BcMethod::Discriminator => {
            Ok(discriminator_distance(datasets, &params.discriminator, rng)?.1)
        }
    }
}

/// Graded ε-greedy dangerous-path policies compared at several trajectory
/// budgets over repeated data draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricStudyConfig {
    pub actions: usize,
    pub env_seed: u64,
    pub epsilons: Vec<f64>,
    pub budgets: Vec<usize>,
    pub repetitions: usize,
    /// Repetition at the largest budget used as the reference matrix.
    pub truth_repetition: usize,
    pub methods: Vec<BcMethod>,
    pub params: MethodParams,
}

impl Default for MetricStudyConfig {
    fn default() -> Self {
        MetricStudyConfig {
            actions: DangerousPath::DEFAULT_ACTIONS,
            env_seed: 0,
            epsilons: (0..20).map(|i| i as f64 * 0.05).collect(),
            budgets: vec![10, 25, 50],
            repetitions: 3,
            truth_repetition: 0,
            methods: vec![
                BcMethod::Supervector,
                BcMethod::Gaussian,
                BcMethod::Histogram,
            ],
            params: MethodParams {
                supervector: SupervectorConfig {
                    max_ubm_states: Some(5000),
                    ..SupervectorConfig::with_components(16)
                },
                discriminator: DiscriminatorConfig {
                    hidden: vec![32, 32],
                    epochs: 10,
                    ..Default::default()
                },
            },
        }
    }
}

impl MetricStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.len() < 3 {
            return Err(Error::invalid("the study needs at least three policies"));
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return Err(Error::invalid("trajectory budgets must be positive"));
        }
        if self.repetitions < 2 {
            return Err(Error::invalid("the study needs at least two repetitions"));
        }
        if self.truth_repetition >= self.repetitions {
            return Err(Error::invalid("reference repetition out of range"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods selected"));
        }
        Ok(())
    }

    fn max_budget(&self) -> usize {
        self.budgets.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub method: String,
    pub trajectories: usize,
    pub repetition: usize,
    pub correlation: f64,
    pub distance_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricStudy {
    pub rows: Vec<StudyRow>,
    pub reports: Vec<MetricReport>,
}

impl MetricStudy {
    /// One line per (method, trajectories, repetition).
    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "trajectories",
            "repetition",
            "correlation",
            "distance_error",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.trajectories.to_string(),
                r.repetition.to_string(),
                format_number(r.correlation),
                r.distance_error.map(format_number).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn report(&self, method: BcMethod, trajectories: usize) -> Option<&MetricReport> {
        self.reports
            .iter()
            .find(|r| r.method == method.name() && r.trajectories == trajectories)
    }
}

/// Gathers `max(budgets)` episodes per policy and repetition, then scores
/// every method on the leading `budget` episodes of each draw.
pub fn run_metric_study(config: &MetricStudyConfig, seed: u64) -> Result<MetricStudy> {
    config.validate()?;
    let env = DangerousPath::new(config.actions, config.env_seed)?;
    let policies = config
        .epsilons
        .iter()
        .map(|&e| EpsilonGreedyPath::new(*env.labeling(), e))
        .collect::<Result<Vec<_>>>()?;
    let root = Rng::new(seed);
    let data_root = root.split(0);
    let fit_root = root.split(1);
    let max_budget = config.max_budget();

    let draws: Vec<Vec<StateDataset>> = (0..config.repetitions)
        .map(|rep| {
            let rep_rng = data_root.split(rep as u64);
            policies
                .par_iter()
                .enumerate()
                .map(|(i, p)| {
                    gather_data(
                        &mut env.clone(),
                        p,
                        max_budget,
                        &mut rep_rng.split(i as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        let mut normalized: Vec<Vec<DistanceMatrix>> = Vec::with_capacity(config.budgets.len());
        let mut correlations: Vec<Vec<f64>> = Vec::with_capacity(config.budgets.len());
        for (bi, &budget) in config.budgets.iter().enumerate() {
            let leading: Vec<usize> = (0..budget).collect();
            let mut mats = Vec::with_capacity(config.repetitions);
            let mut corr = Vec::with_capacity(config.repetitions);
            for (rep, draw) in draws.iter().enumerate() {
                let datasets = draw
                    .iter()
                    .map(|d| d.select_episodes(&leading))
                    .collect::<Result<Vec<_>>>()?;
                let returns: Vec<f64> = datasets
                    .iter()
                    .map(|d| d.mean_return().unwrap_or(0.0))
                    .collect();
                let mut rng = fit_root.split(mi as u64).split(bi as u64).split(rep as u64);
                let m = minmax_normalize(&bc_distance_matrix(
                    method,
                    &datasets,
                    &config.params,
                    &mut rng,
                )?)?;
                corr.push(return_correlation(&m, &returns)?);
                mats.push(m);
            }
            normalized.push(mats);
            correlations.push(corr);
        }

        let truth_budget = config
            .budgets
            .iter()
            .position(|&b| b == max_budget)
            .unwrap_or(0);
        let truth = normalized[truth_budget][config.truth_repetition].clone();
        for (bi, &budget) in config.budgets.iter().enumerate() {
            let mut errors = Vec::new();
            for rep in 0..config.repetitions {
                let is_truth = budget == max_budget && rep == config.truth_repetition;
                let err = if is_truth {
                    None
                } else {
                    Some(distance_error(&normalized[bi][rep], &truth)?)
                };
                errors.extend(err);
                rows.push(StudyRow {
                    method: method.name().to_string(),
                    trajectories: budget,
                    repetition: rep,
                    correlation: correlations[bi][rep],
                    distance_error: err,
                });
            }
            reports.push(MetricReport {
                method: method.name().to_string(),
                trajectories: budget,
                repetitions: config.repetitions,
                policies: policies.len(),
                correlation: correlations[bi].iter().sum::<f64>() / config.repetitions as f64,
                distance_error: (!errors.is_empty())
                    .then(|| errors.iter().sum::<f64>() / errors.len() as f64),
                coefficient_of_variation: coefficient_of_variation(&normalized[bi])?,
            });
        }
    }
    Ok(MetricStudy { rows, reports })
}
