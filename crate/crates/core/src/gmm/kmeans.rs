//! k-means with k-means++ seeding, used to initialize EM.

use super::StateDataset;
use crate::error::{Error, Result};
use crate::math::Rng;

pub const MAX_LLOYD_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Flat `k x d` centers.
    pub centers: Vec<f64>,
    pub k: usize,
    pub d: usize,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

impl KMeans {
    pub fn center(&self, c: usize) -> &[f64] {
        &self.centers[c * self.d..(c + 1) * self.d]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn count_unique_rows(data: &StateDataset, at_least: usize) -> usize {
    let mut rows: Vec<&[f64]> = data.states().collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut unique = 0;
    for (i, r) in rows.iter().enumerate() {
        if i == 0 || rows[i - 1] != *r {
            unique += 1;
            if unique >= at_least {
                return unique;
            }
        }
    }
    unique
}

/// Runs k-means++ seeding followed by Lloyd iterations until assignments stop
/// changing or [`MAX_LLOYD_ITERS`] is reached.
pub fn kmeans_init(data: &StateDataset, k: usize, rng: &mut Rng) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if data.len() < k {
        return Err(Error::invalid(format!(
            "k-means needs at least {k} states, got {}",
            data.len()
        )));
    }
    let unique = count_unique_rows(data, k);
    if unique < k {
        return Err(Error::invalid(format!(
            "k-means needs {k} distinct states, the data holds only {unique}"
        )));
    }

    let d = data.dim();
    let n = data.len();
    let mut centers = Vec::with_capacity(k * d);
    centers.extend_from_slice(data.state(rng.below(n)));

    let mut nearest: Vec<f64> = data.states().map(|s| sq_dist(s, &centers[0..d])).collect();
    for c in 1..k {
        // `unique >= k` guarantees some state still has positive distance
        let pick = rng
            .weighted_index(&nearest)
            .expect("positive seeding mass while distinct states remain");
        centers.extend_from_slice(data.state(pick));
        let new_center = &centers[c * d..(c + 1) * d];
        for (dist, s) in nearest.iter_mut().zip(data.states()) {
            *dist = dist.min(sq_dist(s, new_center));
        }
    }

    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    while iterations < MAX_LLOYD_ITERS {
        iterations += 1;
        let mut changed = false;
        for (i, s) in data.states().enumerate() {
            let best = (0..k)
                .map(|c| sq_dist(s, &centers[c * d..(c + 1) * d]))
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .unwrap();
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        sums.iter_mut().for_each(|v| *v = 0.0);
        counts.iter_mut().for_each(|v| *v = 0);
        for (s, &c) in data.states().zip(&assignment) {
            counts[c] += 1;
            for (acc, x) in sums[c * d..(c + 1) * d].iter_mut().zip(s) {
                *acc += x;
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its previous center
            if counts[c] > 0 {
                for j in 0..d {
                    centers[c * d + j] = sums[c * d + j] / counts[c] as f64;
                }
            }
        }
    }

    Ok(KMeans {
        centers,
        k,
        d,
        assignment,
        iterations,
    })
}
