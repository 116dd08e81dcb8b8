use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{StateDataset, VARIANCE_FLOOR};

/// Diagonal Gaussian fitted to a policy's visited states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "gaussian_bc")]
pub struct GaussianBc {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Sample mean and population variance per dimension, floored at [`VARIANCE_FLOOR`].
pub fn fit_gaussian_bc(data: &StateDataset) -> Result<GaussianBc> {
    if data.len() < 2 {
        return Err(Error::invalid(format!(
            "a Gaussian BC needs at least two states, got {}",
            data.len()
        )));
    }
    let d = data.dim();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for s in data.states() {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut variance = vec![0.0; d];
    for s in data.states() {
        for ((v, x), m) in variance.iter_mut().zip(s).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    variance
        .iter_mut()
        .for_each(|v| *v = (*v / n).max(VARIANCE_FLOOR));
    Ok(GaussianBc { mean, variance })
}

fn kl(p: &GaussianBc, q: &GaussianBc) -> f64 {
    0.5 * p
        .mean
        .iter()
        .zip(&p.variance)
        .zip(q.mean.iter().zip(&q.variance))
        .map(|((mp, vp), (mq, vq))| vp / vq + (mq - mp) * (mq - mp) / vq - 1.0 + (vq / vp).ln())
        .sum::<f64>()
}

/// `KL(a || b) + KL(b || a)` for diagonal Gaussians.
pub fn gaussian_symmetric_kl(a: &GaussianBc, b: &GaussianBc) -> Result<f64> {
    Error::check_dim(a.mean.len(), b.mean.len())?;
    Error::check_dim(a.variance.len(), b.variance.len())?;
    Ok((kl(a, b) + kl(b, a)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_fit() {
        let ds = StateDataset::from_states(2, &[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let g = fit_gaussian_bc(&ds).unwrap();
        assert_eq!(g.mean, vec![1.0, 1.0]);
        assert_eq!(g.variance, vec![1.0, 1.0]);
    }

    #[test]
    fn constant_and_shifted_data() {
        let c = StateDataset::from_states(1, &vec![vec![4.0]; 5]).unwrap();
        assert_eq!(fit_gaussian_bc(&c).unwrap().variance, vec![VARIANCE_FLOOR]);

        let ds = StateDataset::from_states(1, &[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let shifted = StateDataset::from_states(1, &[vec![10.0], vec![11.0], vec![15.0]]).unwrap();
        let (a, b) = (
            fit_gaussian_bc(&ds).unwrap(),
            fit_gaussian_bc(&shifted).unwrap(),
        );
        assert!((b.mean[0] - a.mean[0] - 10.0).abs() < 1e-12);
        assert!((b.variance[0] - a.variance[0]).abs() < 1e-12);

        let single = StateDataset::from_states(1, &[vec![0.0]]).unwrap();
        assert!(fit_gaussian_bc(&single).is_err());
    }

    #[test]
    fn closed_form_kl() {
        let a = GaussianBc {
            mean: vec![0.0],
            variance: vec![1.0],
        };
        let b = GaussianBc {
            mean: vec![1.0],
            variance: vec![1.0],
        };
        assert!((gaussian_symmetric_kl(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_symmetric_kl(&a, &a).unwrap(), 0.0);
        let c = GaussianBc {
            mean: vec![0.0, 1.0],
            variance: vec![1.0, 1.0],
        };
        assert!(gaussian_symmetric_kl(&a, &c).is_err());
    }

    #[test]
    fn serializes_with_type_tag() {
        let a = GaussianBc {
            mean: vec![0.5],
            variance: vec![2.0],
        };
        let text = serde_json::to_string(&a).unwrap();
        assert!(text.contains("\"type\":\"gaussian_bc\""));
        assert_eq!(serde_json::from_str::<GaussianBc>(&text).unwrap(), a);
    }
}
