//! Fits a diagonal Gaussian mixture to three synthetic clusters and prints the
//! log-likelihood after every EM iteration.

use polbc::gmm::{em_fit_traced, EmConfig, StateDataset};
use polbc::math::Rng;

fn main() -> polbc::Result<()> {
    let mut rng = Rng::new(7);
    let centers = [[-1.5, 0.0], [0.0, 1.2], [1.5, -0.5]];
    let rows: Vec<Vec<f64>> = (0..900)
        .map(|i| {
            let c = centers[i % 3];
            vec![c[0] + 0.9 * rng.normal(), c[1] + 0.6 * rng.normal()]
        })
        .collect();
    let data = StateDataset::from_states(2, &rows)?;

    let fit = em_fit_traced(&data, 3, &mut Rng::new(1), &EmConfig::default())?;
    for (i, ll) in fit.log_likelihoods.iter().enumerate() {
        println!("iter {i:>3}  mean log-likelihood {ll:.6}");
    }
    println!(
        "converged: {} after {} iterations",
        fit.converged, fit.iterations
    );
    for k in 0..fit.gmm.components() {
        println!(
            "component {k}: weight {:.3} mean {:.3?} variance {:.3?}",
            fit.gmm.weights()[k],
            fit.gmm.mean(k),
            fit.gmm.variance(k)
        );
    }
    Ok(())
}
