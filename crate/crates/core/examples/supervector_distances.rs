//! Policy supervectors for ε-greedy walkers on the dangerous path.
//!
//! Each policy's visited states are pooled into a background model, every
//! policy gets MAP-adapted means, and pairs are compared with the KL bound.
//!
//! ```text
//! cargo run --release --example supervector_distances -- [components] [episodes]
//! ```

use polbc::env::{gather_data, DangerousPath, EpsilonGreedyPath};
use polbc::math::Rng;
use polbc::supervector::{supervector_distance_matrix, SupervectorConfig};

fn main() -> polbc::Result<()> {
    let mut args = std::env::args().skip(1);
    let components: usize = args.next().map_or(8, |a| a.parse().expect("components"));
    let episodes: usize = args.next().map_or(20, |a| a.parse().expect("episodes"));

    let env = DangerousPath::new(DangerousPath::DEFAULT_ACTIONS, 0)?;
    let epsilons = [0.0, 0.2, 0.4, 0.6, 0.8];
    let rng = Rng::new(1);
    let mut datasets = Vec::new();
    for (i, &eps) in epsilons.iter().enumerate() {
        let policy = EpsilonGreedyPath::new(*env.labeling(), eps)?;
        datasets.push(gather_data(
            &mut env.clone(),
            &policy,
            episodes,
            &mut rng.split(i as u64),
        )?);
    }

    let config = SupervectorConfig::with_components(components);
    let analysis = supervector_distance_matrix(&datasets, &config, &mut rng.split(99))?;
    let labels: Vec<String> = epsilons.iter().map(|e| format!("eps={e}")).collect();

    println!(
        "UBM: {} components over {} states",
        analysis.ubm.components(),
        datasets.iter().map(|d| d.len()).sum::<usize>()
    );
    for (eps, d) in epsilons.iter().zip(&datasets) {
        println!(
            "eps {eps:.1}: mean return {:.2}",
            d.mean_return().unwrap_or(0.0)
        );
    }
    print!("\n{}", analysis.distances.with_labels(labels)?.to_csv()?);
    Ok(())
}
