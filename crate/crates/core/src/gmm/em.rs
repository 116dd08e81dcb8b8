//! Expectation-maximization for diagonal mixtures.
//!
//! The E-step may run in parallel over states; every reduction in the M-step
//! walks the states in index order so a fit is bit-reproducible for a seed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{count_unique_rows, kmeans_init};
use super::{DiagGmm, StateDataset, VARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::math::Rng;

/// Components whose soft count drops below this are re-seeded.
pub const DEAD_COMPONENT_COUNT: f64 = 1e-8;

const PARALLEL_WORK: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Stop once the relative change in mean log-likelihood falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub variance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-6,
            max_iters: 200,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub gmm: DiagGmm,
    /// Mean log-likelihood of the initial model and after every M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeded: usize,
}

pub fn em_fit(data: &StateDataset, k: usize, rng: &mut Rng, config: &EmConfig) -> Result<DiagGmm> {
    em_fit_traced(data, k, rng, config).map(|f| f.gmm)
}

struct Params {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

pub fn em_fit_traced(
    data: &StateDataset,
    k: usize,
    rng: &mut Rng,
    config: &EmConfig,
) -> Result<EmFit> {
    if k == 0 {
        return Err(Error::invalid("component count must be positive"));
    }
    if data.len() < k {
        return Err(Error::invalid(format!(
            "fitting {k} components needs at least {k} states, got {}",
            data.len()
        )));
    }
    if !(config.variance_floor > 0.0) {
        return Err(Error::invalid("variance floor must be positive"));
    }

    let n = data.len();
    let d = data.dim();
    let floor = config.variance_floor;
    let pooled_var = pooled_variance(data, floor);

    let mut params = initial_params(data, k, rng, floor)?;
    let mut gmm = to_gmm(k, d, &params)?;
    let mut resp = vec![0.0; n * k];
    let mut log_p = vec![0.0; n];

    let mut ll = e_step(&gmm, data, &mut resp, &mut log_p);
    let mut history = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    let mut reseeded = 0;

    while iterations < config.max_iters {
        iterations += 1;
        reseeded += m_step(data, k, &resp, &log_p, floor, &pooled_var, &mut params);
        gmm = to_gmm(k, d, &params)?;
        let next = e_step(&gmm, data, &mut resp, &mut log_p);
        history.push(next);
        let change = (next - ll).abs();
        ll = next;
        if change <= config.tol * ll.abs().max(1e-12) {
            converged = true;
            break;
        }
    }

    Ok(EmFit {
        gmm,
        log_likelihoods: history,
        iterations,
        converged,
        reseeded,
    })
}

fn pooled_variance(data: &StateDataset, floor: f64) -> Vec<f64> {
    let d = data.dim();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for s in data.states() {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for s in data.states() {
        for ((v, x), m) in var.iter_mut().zip(s).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().map(|v| (*v / n).max(floor)).collect()
}

/// Hard k-means assignment turned into mixture parameters. When the data has
/// fewer distinct states than `k`, the most populated clusters are duplicated
/// and share their weight.
fn initial_params(data: &StateDataset, k: usize, rng: &mut Rng, floor: f64) -> Result<Params> {
    let d = data.dim();
    let n = data.len();
    let distinct = count_unique_rows(data, k).min(k);
    let km = kmeans_init(data, distinct, rng)?;

    let mut counts = vec![0usize; distinct];
    let mut sums = vec![0.0; distinct * d];
    for (s, &c) in data.states().zip(&km.assignment) {
        counts[c] += 1;
        for (acc, x) in sums[c * d..(c + 1) * d].iter_mut().zip(s) {
            *acc += x;
        }
    }
    let mut means = vec![0.0; distinct * d];
    for c in 0..distinct {
        for j in 0..d {
            means[c * d + j] = if counts[c] > 0 {
                sums[c * d + j] / counts[c] as f64
            } else {
                km.centers[c * d + j]
            };
        }
    }
    let mut sq = vec![0.0; distinct * d];
    for (s, &c) in data.states().zip(&km.assignment) {
        for j in 0..d {
            let diff = s[j] - means[c * d + j];
            sq[c * d + j] += diff * diff;
        }
    }
    let mut variances = vec![floor; distinct * d];
    for c in 0..distinct {
        if counts[c] > 0 {
            for j in 0..d {
                variances[c * d + j] = (sq[c * d + j] / counts[c] as f64).max(floor);
            }
        }
    }

    // which cluster each final component copies
    let mut order: Vec<usize> = (0..distinct).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut source: Vec<usize> = (0..distinct).collect();
    for i in 0..(k - distinct) {
        source.push(order[i % distinct]);
    }
    let mut copies = vec![0usize; distinct];
    for &s in &source {
        copies[s] += 1;
    }

    let mut weights = Vec::with_capacity(k);
    let mut out_means = Vec::with_capacity(k * d);
    let mut out_vars = Vec::with_capacity(k * d);
    for &s in &source {
        weights.push(counts[s] as f64 / n as f64 / copies[s] as f64);
        out_means.extend_from_slice(&means[s * d..(s + 1) * d]);
        out_vars.extend_from_slice(&variances[s * d..(s + 1) * d]);
    }
    normalize(&mut weights);
    Ok(Params {
        weights,
        means: out_means,
        variances: out_vars,
    })
}

fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
}

fn to_gmm(k: usize, d: usize, p: &Params) -> Result<DiagGmm> {
    DiagGmm::new(
        k,
        d,
        p.weights.clone(),
        p.means.clone(),
        p.variances.clone(),
    )
}

/// Fills responsibilities and per-state log densities; returns the mean log-likelihood.
fn e_step(gmm: &DiagGmm, data: &StateDataset, resp: &mut [f64], log_p: &mut [f64]) -> f64 {
    let k = gmm.components();
    let d = data.dim();
    let states = data.flat_states();
    if data.len() * k * d >= PARALLEL_WORK {
        resp.par_chunks_mut(k)
            .zip(log_p.par_iter_mut())
            .zip(states.par_chunks_exact(d))
            .for_each(|((r, lp), s)| *lp = gmm.posterior_into(s, r));
    } else {
        for ((r, lp), s) in resp
            .chunks_mut(k)
            .zip(log_p.iter_mut())
            .zip(states.chunks_exact(d))
        {
            *lp = gmm.posterior_into(s, r);
        }
    }
    log_p.iter().sum::<f64>() / data.len() as f64
}

/// Returns the number of components re-seeded in this step.
fn m_step(
    data: &StateDataset,
    k: usize,
    resp: &[f64],
    log_p: &[f64],
    floor: f64,
    pooled_var: &[f64],
    p: &mut Params,
) -> usize {
    let d = data.dim();
    let n = data.len();
    let mut counts = vec![0.0; k];
    let mut sums = vec![0.0; k * d];
    for (s, r) in data.states().zip(resp.chunks_exact(k)) {
        for c in 0..k {
            let rc = r[c];
            counts[c] += rc;
            if rc != 0.0 {
                for (acc, x) in sums[c * d..(c + 1) * d].iter_mut().zip(s) {
                    *acc += rc * x;
                }
            }
        }
    }
    let live: Vec<bool> = counts.iter().map(|&c| c >= DEAD_COMPONENT_COUNT).collect();
    for c in 0..k {
        if live[c] {
            for j in 0..d {
                p.means[c * d + j] = sums[c * d + j] / counts[c];
            }
        }
    }
    let mut sq = vec![0.0; k * d];
    for (s, r) in data.states().zip(resp.chunks_exact(k)) {
        for c in 0..k {
            let rc = r[c];
            if rc != 0.0 && live[c] {
                for j in 0..d {
                    let diff = s[j] - p.means[c * d + j];
                    sq[c * d + j] += rc * diff * diff;
                }
            }
        }
    }
    for c in 0..k {
        if live[c] {
            for j in 0..d {
                p.variances[c * d + j] = (sq[c * d + j] / counts[c]).max(floor);
            }
            p.weights[c] = counts[c] / n as f64;
        }
    }

    let dead: Vec<usize> = (0..k).filter(|&c| !live[c]).collect();
    if !dead.is_empty() {
        // worst-explained states first; ties resolved by index for determinism
        let mut worst: Vec<usize> = (0..n).collect();
        worst.sort_by(|&a, &b| log_p[a].total_cmp(&log_p[b]).then(a.cmp(&b)));
        for (slot, &c) in dead.iter().enumerate() {
            let s = data.state(worst[slot % n]);
            p.means[c * d..(c + 1) * d].copy_from_slice(s);
            p.variances[c * d..(c + 1) * d].copy_from_slice(pooled_var);
            // keep the weight negligible so re-seeding cannot lower the likelihood measurably
            p.weights[c] = counts[c].max(1e-10) / n as f64;
        }
    }
    normalize(&mut p.weights);
    dead.len()
}
