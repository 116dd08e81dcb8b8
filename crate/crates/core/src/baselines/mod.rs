//! Comparison behavioural characterizations: a single Gaussian, a sparse
//! state-space histogram and a per-policy discriminator.

mod discriminator;
mod gaussian;
mod histogram;

pub use discriminator::{
    discriminator_distance, train_discriminator, train_discriminator_traced, DiscriminatorBc,
    DiscriminatorConfig, DiscriminatorFit, LOGIT_CLIP,
};
pub use gaussian::{fit_gaussian_bc, gaussian_symmetric_kl, GaussianBc};
pub use histogram::{
    compute_bin_edges, fit_histogram_bc, histogram_distance, BinEdges, HistogramBc, BINS,
};

use crate::error::Result;
use crate::gmm::StateDataset;
use crate::supervector::{default_labels, pool_datasets, DistanceMatrix};

/// Pairwise symmetric KL between per-dataset Gaussians.
pub fn gaussian_distance_matrix(datasets: &[StateDataset]) -> Result<DistanceMatrix> {
    let fits = datasets
        .iter()
        .map(fit_gaussian_bc)
        .collect::<Result<Vec<_>>>()?;
    DistanceMatrix::from_fn(default_labels(fits.len()), |i, j| {
        gaussian_symmetric_kl(&fits[i], &fits[j])
    })
}

/// Pairwise histogram distances with edges computed over all datasets.
pub fn histogram_distance_matrix(datasets: &[StateDataset]) -> Result<DistanceMatrix> {
    let edges = compute_bin_edges(&pool_datasets(datasets)?)?;
    let fits = datasets
        .iter()
        .map(|d| fit_histogram_bc(d, &edges))
        .collect::<Result<Vec<_>>>()?;
    DistanceMatrix::from_fn(default_labels(fits.len()), |i, j| {
        histogram_distance(&fits[i], &fits[j])
    })
}
