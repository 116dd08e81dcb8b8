//! Clip-free policy-gradient training on the dangerous path with each
//! behavioural constraint at its default threshold.
//!
//! ```text
//! cargo run --release --example trust_region -- [iterations] [seeds]
//! ```

use polbc::env::DangerousPath;
use polbc::train::{train_trust_region, Constraint, ConstraintKind, TrustRegionConfig};

fn main() -> polbc::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map_or(20, |a| a.parse().expect("iterations"));
    let seeds: u64 = args.next().map_or(3, |a| a.parse().expect("seeds"));

    for kind in ConstraintKind::ALL {
        let config = TrustRegionConfig {
            iterations,
            ..TrustRegionConfig::with_constraint(Constraint::with_default_threshold(kind))
        };
        let mut areas = Vec::new();
        let mut stops = 0.0;
        for seed in 0..seeds {
            let curve =
                train_trust_region(&DangerousPath::new(config.actions, seed)?, &config, seed)?;
            stops += curve.points.iter().map(|p| p.aux).sum::<f64>();
            areas.push(curve.area());
        }
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        let rate = stops / (seeds as f64 * iterations as f64);
        println!(
            "{:<12} threshold {:<5} mean AUC {mean:6.3}  stop rate {rate:.2}  per seed {areas:.2?}",
            kind.name(),
            config.constraint.threshold
        );
    }
    Ok(())
}
