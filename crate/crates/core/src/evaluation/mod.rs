//! Metrics over distance matrices: correlation with return gaps, relative
//! error against a reference matrix, and spread across repetitions.

mod study;

pub use study::{
    bc_distance_matrix, run_metric_study, BcMethod, MethodParams, MetricStudy, MetricStudyConfig,
    StudyRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::supervector::DistanceMatrix;

/// Summary of one method at one trajectory budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub trajectories: usize,
    pub repetitions: usize,
    pub policies: usize,
    /// Mean return correlation over repetitions.
    pub correlation: f64,
    /// Mean relative error against the reference matrix; `None` when the
    /// reference is the only matrix at this budget.
    pub distance_error: Option<f64>,
    pub coefficient_of_variation: f64,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Rescales `values` linearly onto `[0, 1]`. A constant input maps to zeros.
pub fn minmax_scale(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Min-max normalization over every entry, diagonal included.
pub fn minmax_normalize(m: &DistanceMatrix) -> Result<DistanceMatrix> {
    if m.len() < 2 {
        return Err(Error::invalid("normalization needs at least two policies"));
    }
    DistanceMatrix::new(m.labels().to_vec(), minmax_scale(m.values()))
}

/// Pearson correlation between the upper-triangle distances and the
/// absolute differences of the policies' mean returns.
pub fn return_correlation(distances: &DistanceMatrix, returns: &[f64]) -> Result<f64> {
    Error::check_dim(distances.len(), returns.len())?;
    if returns.len() < 3 {
        return Err(Error::invalid("correlation needs at least three policies"));
    }
    let n = returns.len();
    let gaps: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (returns[i] - returns[j]).abs())
        .collect();
    pearson(&distances.upper_triangle(), &gaps)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    Error::check_dim(x.len(), y.len())?;
    if x.is_empty() {
        return Err(Error::Empty("correlation samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("distances are constant"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("return gaps are constant"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn check_shape(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<()> {
    Error::check_dim(a.len(), b.len())
}

/// Mean of `|predicted - truth| / truth` over upper-triangle entries with a
/// nonzero truth. Both matrices are expected to be normalized already.
pub fn distance_error(predicted: &DistanceMatrix, truth: &DistanceMatrix) -> Result<f64> {
    check_shape(predicted, truth)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (p, t) in predicted
        .upper_triangle()
        .into_iter()
        .zip(truth.upper_triangle())
    {
        if t > 0.0 {
            sum += (p - t).abs() / t;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("nonzero reference distances"));
    }
    Ok(sum / count as f64)
}

/// Population `σ/μ` of each upper-triangle entry across repetitions,
/// averaged over entries with nonzero mean.
pub fn coefficient_of_variation(matrices: &[DistanceMatrix]) -> Result<f64> {
    if matrices.len() < 2 {
        return Err(Error::invalid(
            "coefficient of variation needs at least two repetitions",
        ));
    }
    for m in &matrices[1..] {
        check_shape(&matrices[0], m)?;
    }
    let uppers: Vec<Vec<f64>> = matrices
        .iter()
        .map(DistanceMatrix::upper_triangle)
        .collect();
    let reps = matrices.len() as f64;
    let (mut sum, mut count) = (0.0, 0usize);
    for e in 0..uppers[0].len() {
        let mean = uppers.iter().map(|u| u[e]).sum::<f64>() / reps;
        if mean == 0.0 {
            continue;
        }
        let var = uppers.iter().map(|u| (u[e] - mean).powi(2)).sum::<f64>() / reps;
        sum += var.sqrt() / mean;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}
