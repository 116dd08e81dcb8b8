//! How well each characterization tracks return gaps between graded
//! ε-greedy policies, and how stable its distances are across re-samplings.
//!
//! Defaults are a reduced study; pass `full` for 20 policies and budgets
//! of 10, 25 and 50 trajectories.

use polbc::evaluation::{run_metric_study, BcMethod, MetricStudyConfig};

fn main() -> polbc::Result<()> {
    let full = std::env::args().any(|a| a == "full");
    let config = if full {
        MetricStudyConfig::default()
    } else {
        MetricStudyConfig {
            epsilons: (0..8).map(|i| i as f64 * 0.12).collect(),
            budgets: vec![5, 10, 20],
            methods: vec![
                BcMethod::Supervector,
                BcMethod::Gaussian,
                BcMethod::Histogram,
            ],
            ..Default::default()
        }
    };
    let study = run_metric_study(&config, 0)?;
    println!(
        "{:<12} {:>6} {:>12} {:>10} {:>8}",
        "method", "traj", "correlation", "error", "cv"
    );
    for r in &study.reports {
        let err = r
            .distance_error
            .map_or("-".to_string(), |e| format!("{e:.4}"));
        println!(
            "{:<12} {:>6} {:>12.4} {:>10} {:>8.4}",
            r.method, r.trajectories, r.correlation, err, r.coefficient_of_variation
        );
    }
    Ok(())
}
