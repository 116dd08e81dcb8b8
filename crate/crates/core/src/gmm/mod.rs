//! Diagonal-covariance Gaussian mixture models.

mod dataset;
mod em;
mod kmeans;

pub use dataset::{DatasetBuilder, StateDataset};
pub use em::{em_fit, em_fit_traced, EmConfig, EmFit};
pub use kmeans::{kmeans_init, KMeans};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::log_sum_exp_unchecked;

/// Lower bound applied to every fitted per-dimension variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    k: usize,
    d: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    // log w_k - ½ Σ_j ln(2π σ²_kj), cached for density evaluation
    log_norm: Vec<f64>,
    id: String,
}

impl DiagGmm {
    /// `means` and `variances` are flat `k x d` row-major buffers.
    pub fn new(
        k: usize,
        d: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::invalid(
                "a mixture needs at least one component and one dimension",
            ));
        }
        Error::check_dim(k, weights.len())?;
        Error::check_dim(k * d, means.len())?;
        Error::check_dim(k * d, variances.len())?;
        if weights
            .iter()
            .chain(&means)
            .chain(&variances)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("mixture parameters"));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("mixture weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        if variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::invalid("variances must be positive"));
        }
        let log_norm = (0..k)
            .map(|c| {
                let var = &variances[c * d..(c + 1) * d];
                weights[c].ln() - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>()
            })
            .collect();
        let id = content_hash(k, d, &weights, &means, &variances);
        Ok(DiagGmm {
            k,
            d,
            weights,
            means,
            variances,
            log_norm,
            id,
        })
    }

    pub fn from_rows(
        weights: Vec<f64>,
        means: &[Vec<f64>],
        variances: &[Vec<f64>],
    ) -> Result<Self> {
        let k = weights.len();
        let d = means.first().map_or(0, Vec::len);
        if means.len() != k || variances.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: means.len().min(variances.len()),
            });
        }
        let flat = |rows: &[Vec<f64>]| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(k * d);
            for r in rows {
                Error::check_dim(d, r.len())?;
                out.extend_from_slice(r);
            }
            Ok(out)
        };
        Self::new(k, d, weights, flat(means)?, flat(variances)?)
    }

    pub fn components(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.d..(k + 1) * self.d]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.d..(k + 1) * self.d]
    }

    /// Content hash identifying this model; supervectors carry it.
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Writes `ln(w_k N(s; μ_k, Σ_k))` for every component into `out`.
    pub(crate) fn weighted_log_densities(&self, state: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let mu = &self.means[c * self.d..(c + 1) * self.d];
            let var = &self.variances[c * self.d..(c + 1) * self.d];
            let maha: f64 = state
                .iter()
                .zip(mu)
                .zip(var)
                .map(|((x, m), v)| (x - m) * (x - m) / v)
                .sum();
            *o = self.log_norm[c] - 0.5 * maha;
        }
    }

    /// Fills `out` with `p(k | state)` and returns `ln p(state)`.
    pub(crate) fn posterior_into(&self, state: &[f64], out: &mut [f64]) -> f64 {
        self.weighted_log_densities(state, out);
        let lse = log_sum_exp_unchecked(out);
        for o in out.iter_mut() {
            *o = (*o - lse).exp();
        }
        lse
    }

    /// Posterior component probabilities for one state, computed in the log domain.
    pub fn responsibilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.d, state.len())?;
        let mut out = vec![0.0; self.k];
        self.posterior_into(state, &mut out);
        Ok(out)
    }

    pub fn log_density(&self, state: &[f64]) -> Result<f64> {
        Error::check_dim(self.d, state.len())?;
        let mut buf = vec![0.0; self.k];
        self.weighted_log_densities(state, &mut buf);
        Ok(log_sum_exp_unchecked(&buf))
    }

    /// Average per-state log density over a dataset.
    pub fn mean_log_likelihood(&self, data: &StateDataset) -> Result<f64> {
        Error::check_dim(self.d, data.dim())?;
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut buf = vec![0.0; self.k];
        let mut total = 0.0;
        for s in data.states() {
            self.weighted_log_densities(s, &mut buf);
            total += log_sum_exp_unchecked(&buf);
        }
        Ok(total / data.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GmmDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GmmDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

fn content_hash(k: usize, d: usize, weights: &[f64], means: &[f64], variances: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(b"diag_gmm");
    h.update((k as u64).to_le_bytes());
    h.update((d as u64).to_le_bytes());
    for v in weights.iter().chain(means).chain(variances) {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..16])
}

/// On-disk representation of a [`DiagGmm`].
#[derive(Debug, Serialize, Deserialize)]
pub struct GmmDocument {
    #[serde(rename = "type")]
    pub kind: String,
    pub k: usize,
    pub d: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub ubm_id: String,
}

impl From<&DiagGmm> for GmmDocument {
    fn from(g: &DiagGmm) -> Self {
        let rows = |flat: &[f64]| flat.chunks_exact(g.d).map(<[f64]>::to_vec).collect();
        GmmDocument {
            kind: "diag_gmm".into(),
            k: g.k,
            d: g.d,
            weights: g.weights.clone(),
            means: rows(&g.means),
            variances: rows(&g.variances),
            ubm_id: g.id.clone(),
        }
    }
}

impl TryFrom<GmmDocument> for DiagGmm {
    type Error = Error;

    fn try_from(doc: GmmDocument) -> Result<Self> {
        if doc.kind != "diag_gmm" {
            return Err(Error::Parse(format!(
                "expected type \"diag_gmm\", found \"{}\"",
                doc.kind
            )));
        }
        let gmm = DiagGmm::from_rows(doc.weights, &doc.means, &doc.variances)?;
        if gmm.k != doc.k || gmm.d != doc.d {
            return Err(Error::Parse(
                "declared k/d disagree with the parameter arrays".into(),
            ));
        }
        if gmm.id != doc.ubm_id {
            return Err(Error::Parse(format!(
                "ubm_id {} does not match the parameters (hash {})",
                doc.ubm_id, gmm.id
            )));
        }
        Ok(gmm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_pair() -> DiagGmm {
        DiagGmm::new(2, 1, vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn responsibilities_hand_cases() {
        let g = symmetric_pair();
        let r = g.responsibilities(&[0.0]).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);

        let r = g.responsibilities(&[1.0]).unwrap();
        let e2 = (2.0f64).exp();
        assert!((r[0] - 1.0 / (1.0 + e2)).abs() < 1e-12);
        assert!((r[1] - e2 / (1.0 + e2)).abs() < 1e-12);
        assert!((r[0] - 0.1192).abs() < 1e-4);

        let single = DiagGmm::new(1, 2, vec![1.0], vec![3.0, -2.0], vec![0.5, 2.0]).unwrap();
        assert_eq!(single.responsibilities(&[100.0, 100.0]).unwrap(), vec![1.0]);
        assert!(g.responsibilities(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn responsibilities_survive_far_states() {
        let g = symmetric_pair();
        let r = g.responsibilities(&[1e6]).unwrap();
        assert!(r.iter().all(|v| v.is_finite()));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standard_normal_log_likelihood_at_mean() {
        let g = DiagGmm::new(1, 1, vec![1.0], vec![0.0], vec![1.0]).unwrap();
        let ds = StateDataset::from_states(1, &[vec![0.0]]).unwrap();
        let ll = g.mean_log_likelihood(&ds).unwrap();
        assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        assert!((ll + 0.9189).abs() < 1e-4);

        let far = StateDataset::from_states(1, &[vec![2.0]]).unwrap();
        let farther = StateDataset::from_states(1, &[vec![4.0]]).unwrap();
        assert!(g.mean_log_likelihood(&far).unwrap() < ll);
        assert!(g.mean_log_likelihood(&farther).unwrap() < g.mean_log_likelihood(&far).unwrap());

        let empty = StateDataset::from_states(1, &[]).unwrap();
        assert!(matches!(
            g.mean_log_likelihood(&empty),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn validates_parameters() {
        assert!(DiagGmm::new(2, 1, vec![0.6, 0.6], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(DiagGmm::new(1, 1, vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(DiagGmm::new(1, 1, vec![1.0], vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn json_round_trip_preserves_identity() {
        let g = DiagGmm::new(
            2,
            2,
            vec![0.25, 0.75],
            vec![0.0, 1.0, -2.0, 0.5],
            vec![1.0, 2.0, 0.5, 0.25],
        )
        .unwrap();
        let text = g.to_json().unwrap();
        assert!(text.contains("\"type\": \"diag_gmm\""));
        let back = DiagGmm::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.id(), g.id());

        let tampered = text.replace("0.25,", "0.3,");
        assert!(DiagGmm::from_json(&tampered).is_err());
    }

    #[test]
    fn id_depends_on_parameters() {
        let a = DiagGmm::new(1, 1, vec![1.0], vec![0.0], vec![1.0]).unwrap();
        let b = DiagGmm::new(1, 1, vec![1.0], vec![0.0], vec![1.0 + 1e-12]).unwrap();
        assert_ne!(a.id(), b.id());
    }
}
