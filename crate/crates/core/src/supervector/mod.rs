//! Policy supervectors.
//!
//! All compared datasets are pooled to fit one universal background model
//! (UBM). Each policy's data then pulls the UBM component means towards its
//! own states through MAP adaptation:
//!
//! ```text
//! p(k|s)  = w_k N(s; μ_k, Σ_k) / Σ_l w_l N(s; μ_l, Σ_l)
//! n_k     = Σ_t p(k|s_t)
//! E_k     = Σ_t p(k|s_t) s_t / n_k
//! α_k     = n_k / (n_k + r)
//! μ̂_k     = α_k E_k + (1 - α_k) μ_k
//! ```
//!
//! Two supervectors adapted from the same UBM are compared with the
//! KL-divergence upper bound `½ Σ_k w_k (μ̂ᵃ_k - μ̂ᵇ_k)ᵀ Σ_k⁻¹ (μ̂ᵃ_k - μ̂ᵇ_k)`.

mod matrix;

pub use matrix::{default_labels, DistanceMatrix};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{em_fit, DiagGmm, EmConfig, StateDataset};
use crate::math::Rng;

pub const DEFAULT_COMPONENTS: usize = 64;
pub const DEFAULT_RELEVANCE: f64 = 16.0;

/// Relevance factor `r` of MAP adaptation. Larger values keep adapted means
/// closer to the background model; `+∞` disables adaptation entirely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceFactor(f64);

impl RelevanceFactor {
    pub fn new(r: f64) -> Result<Self> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::invalid(format!(
                "relevance factor must be non-negative, got {r}"
            )));
        }
        Ok(RelevanceFactor(r))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Adaptation coefficient for a soft count; zero when there is no data.
    pub fn alpha(self, soft_count: f64) -> f64 {
        if soft_count <= 0.0 || self.0 == f64::INFINITY {
            0.0
        } else {
            soft_count / (soft_count + self.0)
        }
    }
}

impl Default for RelevanceFactor {
    fn default() -> Self {
        RelevanceFactor(DEFAULT_RELEVANCE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supervector {
    k: usize,
    d: usize,
    means: Vec<f64>,
    ubm_id: String,
}

impl Supervector {
    pub fn new(ubm: &DiagGmm, means: Vec<f64>) -> Result<Self> {
        Error::check_dim(ubm.components() * ubm.dim(), means.len())?;
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("supervector"));
        }
        Ok(Supervector {
            k: ubm.components(),
            d: ubm.dim(),
            means,
            ubm_id: ubm.id().to_owned(),
        })
    }

    pub fn ubm_id(&self) -> &str {
        &self.ubm_id
    }

    /// Concatenated adapted means, `k x d` row-major.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.d..(k + 1) * self.d]
    }

    pub fn components(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = SupervectorDocument {
            kind: "supervector".into(),
            ubm_id: self.ubm_id.clone(),
            means: self
                .means
                .chunks_exact(self.d)
                .map(<[f64]>::to_vec)
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SupervectorDocument = serde_json::from_str(text)?;
        if doc.kind != "supervector" {
            return Err(Error::Parse(format!(
                "expected type \"supervector\", found \"{}\"",
                doc.kind
            )));
        }
        let k = doc.means.len();
        let d = doc.means.first().map_or(0, Vec::len);
        if k == 0 || d == 0 || doc.means.iter().any(|r| r.len() != d) {
            return Err(Error::Parse(
                "supervector means must be a non-empty rectangular array".into(),
            ));
        }
        Ok(Supervector {
            k,
            d,
            means: doc.means.concat(),
            ubm_id: doc.ubm_id,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SupervectorDocument {
    #[serde(rename = "type")]
    kind: String,
    ubm_id: String,
    means: Vec<Vec<f64>>,
}

/// Zeroth- and first-order statistics of a dataset under a UBM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationStats {
    /// Soft counts `n_k`.
    pub counts: Vec<f64>,
    /// Posterior-weighted means `E_k`; rows with `n_k = 0` hold zeros.
    pub expectations: Vec<f64>,
}

pub fn adaptation_stats(ubm: &DiagGmm, data: &StateDataset) -> Result<AdaptationStats> {
    Error::check_dim(ubm.dim(), data.dim())?;
    if data.is_empty() {
        return Err(Error::Empty("adaptation dataset"));
    }
    let k = ubm.components();
    let d = ubm.dim();
    let mut counts = vec![0.0; k];
    let mut sums = vec![0.0; k * d];
    let mut post = vec![0.0; k];
    for s in data.states() {
        ubm.posterior_into(s, &mut post);
        for (c, &p) in post.iter().enumerate() {
            if p != 0.0 {
                counts[c] += p;
                for (acc, x) in sums[c * d..(c + 1) * d].iter_mut().zip(s) {
                    *acc += p * x;
                }
            }
        }
    }
    for c in 0..k {
        if counts[c] > 0.0 {
            sums[c * d..(c + 1) * d]
                .iter_mut()
                .for_each(|v| *v /= counts[c]);
        }
    }
    Ok(AdaptationStats {
        counts,
        expectations: sums,
    })
}

/// MAP-adapts the UBM means to one policy's states.
pub fn map_adapt(
    ubm: &DiagGmm,
    data: &StateDataset,
    relevance: RelevanceFactor,
) -> Result<Supervector> {
    let stats = adaptation_stats(ubm, data)?;
    let d = ubm.dim();
    let mut means = ubm.means().to_vec();
    for (c, &n_k) in stats.counts.iter().enumerate() {
        let alpha = relevance.alpha(n_k);
        if alpha == 0.0 {
            continue;
        }
        for j in 0..d {
            let prior = ubm.means()[c * d + j];
            means[c * d + j] = alpha * stats.expectations[c * d + j] + (1.0 - alpha) * prior;
        }
    }
    Supervector::new(ubm, means)
}

fn ensure_same_ubm(a: &Supervector, b: &Supervector, ubm: &DiagGmm) -> Result<()> {
    for sv in [a, b] {
        if sv.ubm_id != ubm.id() {
            return Err(Error::UbmMismatch {
                left: sv.ubm_id.clone(),
                right: ubm.id().to_owned(),
            });
        }
    }
    Ok(())
}

/// KL-divergence upper bound between two supervectors of the same UBM.
pub fn kl_upper_bound(a: &Supervector, b: &Supervector, ubm: &DiagGmm) -> Result<f64> {
    ensure_same_ubm(a, b, ubm)?;
    let d = ubm.dim();
    let mut total = 0.0;
    for (c, &w) in ubm.weights().iter().enumerate() {
        let var = ubm.variance(c);
        let term: f64 = (0..d)
            .map(|j| {
                let diff = a.means[c * d + j] - b.means[c * d + j];
                diff * diff / var[j]
            })
            .sum();
        total += w * term;
    }
    Ok(0.5 * total)
}

/// Concatenates datasets, keeping each one's episodes intact.
pub fn pool_datasets(datasets: &[StateDataset]) -> Result<StateDataset> {
    let first = datasets.first().ok_or(Error::Empty("dataset list"))?;
    if datasets.len() == 1 {
        return Ok(first.clone());
    }
    let dim = first.dim();
    let mut states = Vec::new();
    let mut rewards = Vec::new();
    let mut lengths = Vec::new();
    for ds in datasets {
        Error::check_dim(dim, ds.dim())?;
        states.extend_from_slice(ds.flat_states());
        rewards.extend_from_slice(ds.rewards());
        lengths.extend_from_slice(ds.episode_lengths());
    }
    StateDataset::from_flat(dim, states, rewards, lengths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervectorConfig {
    pub components: usize,
    pub relevance: RelevanceFactor,
    pub em: EmConfig,
    /// Optional cap on the number of pooled states used to fit the UBM.
    pub max_ubm_states: Option<usize>,
}

impl Default for SupervectorConfig {
    fn default() -> Self {
        SupervectorConfig {
            components: DEFAULT_COMPONENTS,
            relevance: RelevanceFactor::default(),
            em: EmConfig::default(),
            max_ubm_states: None,
        }
    }
}

impl SupervectorConfig {
    pub fn with_components(components: usize) -> Self {
        SupervectorConfig {
            components,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SupervectorAnalysis {
    pub ubm: DiagGmm,
    pub supervectors: Vec<Supervector>,
    pub distances: DistanceMatrix,
}

/// Fits the UBM on the pooled data of the given states.
pub fn fit_ubm(
    datasets: &[StateDataset],
    config: &SupervectorConfig,
    rng: &mut Rng,
) -> Result<DiagGmm> {
    let pooled = pool_datasets(datasets)?;
    let training = match config.max_ubm_states {
        Some(cap) if cap < pooled.len() => {
            let mut idx: Vec<usize> = (0..pooled.len()).collect();
            let mut sub_rng = rng.split(0x5ab5);
            sub_rng.shuffle(&mut idx);
            idx.truncate(cap);
            idx.sort_unstable();
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| pooled.state(i).to_vec()).collect();
            StateDataset::from_states(pooled.dim(), &rows)?
        }
        _ => pooled,
    };
    em_fit(&training, config.components, rng, &config.em)
}

/// Pairwise supervector distances under an existing UBM.
pub fn supervector_distances(
    ubm: &DiagGmm,
    datasets: &[StateDataset],
    relevance: RelevanceFactor,
) -> Result<(Vec<Supervector>, DistanceMatrix)> {
    let supervectors = datasets
        .par_iter()
        .map(|ds| map_adapt(ubm, ds, relevance))
        .collect::<Result<Vec<_>>>()?;
    let matrix = DistanceMatrix::from_fn(default_labels(datasets.len()), |i, j| {
        kl_upper_bound(&supervectors[i], &supervectors[j], ubm)
    })?;
    Ok((supervectors, matrix))
}

/// Pool, fit the UBM, adapt one supervector per dataset and compare all pairs.
pub fn supervector_distance_matrix(
    datasets: &[StateDataset],
    config: &SupervectorConfig,
    rng: &mut Rng,
) -> Result<SupervectorAnalysis> {
    if datasets.len() < 2 {
        return Err(Error::invalid(
            "comparing policies needs at least two datasets",
        ));
    }
    let ubm = fit_ubm(datasets, config, rng)?;
    let (supervectors, distances) = supervector_distances(&ubm, datasets, config.relevance)?;
    Ok(SupervectorAnalysis {
        ubm,
        supervectors,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ubm() -> DiagGmm {
        DiagGmm::new(1, 1, vec![1.0], vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn hand_adaptation() {
        let ds = StateDataset::from_states(1, &[vec![2.0]]).unwrap();
        let sv = map_adapt(&unit_ubm(), &ds, RelevanceFactor::new(16.0).unwrap()).unwrap();
        assert!((sv.means()[0] - 2.0 / 17.0).abs() < 1e-12);
    }

    #[test]
    fn relevance_limits() {
        let ds = StateDataset::from_states(1, &[vec![2.0], vec![5.0], vec![-1.0]]).unwrap();
        let ubm = unit_ubm();
        let frozen = map_adapt(&ubm, &ds, RelevanceFactor::new(f64::INFINITY).unwrap()).unwrap();
        assert_eq!(frozen.means(), ubm.means());
        let full = map_adapt(&ubm, &ds, RelevanceFactor::new(0.0).unwrap()).unwrap();
        assert!((full.means()[0] - 2.0).abs() < 1e-12);
        assert!(RelevanceFactor::new(-1.0).is_err());
        assert!(RelevanceFactor::new(f64::NAN).is_err());
    }

    #[test]
    fn unvisited_component_keeps_prior_mean_even_without_relevance() {
        // second component is so far away that it receives exactly zero mass
        let ubm = DiagGmm::new(2, 1, vec![0.5, 0.5], vec![0.0, 1e6], vec![1.0, 1.0]).unwrap();
        let ds = StateDataset::from_states(1, &[vec![0.5]]).unwrap();
        let sv = map_adapt(&ubm, &ds, RelevanceFactor::new(0.0).unwrap()).unwrap();
        assert_eq!(sv.mean(1), &[1e6]);
        assert!((sv.mean(0)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_hand_case() {
        let ubm = DiagGmm::new(1, 2, vec![1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let a = Supervector::new(&ubm, vec![0.0, 0.0]).unwrap();
        let b = Supervector::new(&ubm, vec![2.0, 0.0]).unwrap();
        assert_eq!(kl_upper_bound(&a, &b, &ubm).unwrap(), 2.0);
        assert_eq!(kl_upper_bound(&b, &a, &ubm).unwrap(), 2.0);
        assert_eq!(kl_upper_bound(&a, &a, &ubm).unwrap(), 0.0);
    }

    #[test]
    fn rejects_foreign_ubm() {
        let ubm = unit_ubm();
        let other = DiagGmm::new(1, 1, vec![1.0], vec![0.5], vec![1.0]).unwrap();
        let a = Supervector::new(&ubm, vec![0.0]).unwrap();
        let b = Supervector::new(&other, vec![0.0]).unwrap();
        assert!(matches!(
            kl_upper_bound(&a, &b, &ubm),
            Err(Error::UbmMismatch { .. })
        ));
    }

    #[test]
    fn pooling() {
        let a = StateDataset::from_states(2, &vec![vec![0.0, 0.0]; 10]).unwrap();
        let b = StateDataset::from_states(2, &vec![vec![1.0, 1.0]; 20]).unwrap();
        assert_eq!(pool_datasets(std::slice::from_ref(&a)).unwrap(), a);
        let p = pool_datasets(&[a.clone(), b]).unwrap();
        assert_eq!(p.len(), 30);
        assert_eq!(p.episode_lengths(), &[10, 20]);
        let c = StateDataset::from_states(3, &[vec![0.0; 3]]).unwrap();
        assert!(pool_datasets(&[a, c]).is_err());
        assert!(pool_datasets(&[]).is_err());
    }

    #[test]
    fn supervector_json_round_trip() {
        let ubm =
            DiagGmm::new(2, 2, vec![0.5, 0.5], vec![0.0, 0.0, 1.0, 1.0], vec![1.0; 4]).unwrap();
        let sv = Supervector::new(&ubm, vec![0.1, 0.2, 0.9, 1.1]).unwrap();
        let text = sv.to_json().unwrap();
        assert!(text.contains("\"type\": \"supervector\""));
        assert_eq!(Supervector::from_json(&text).unwrap(), sv);
    }

    #[test]
    fn identical_datasets_have_zero_distance() {
        let mut rng = Rng::new(5);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let ds = StateDataset::from_states(2, &rows).unwrap();
        let cfg = SupervectorConfig::with_components(4);
        let out =
            supervector_distance_matrix(&[ds.clone(), ds.clone()], &cfg, &mut Rng::new(1)).unwrap();
        assert!(out.distances.get(0, 1).abs() < 1e-9);
        assert!(supervector_distance_matrix(&[ds], &cfg, &mut Rng::new(1)).is_err());
    }
}
