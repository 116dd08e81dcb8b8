//! The three baseline characterizations side by side on the same data:
//! a single diagonal Gaussian, a 10-bin histogram and trained discriminators.

use polbc::baselines::{
    discriminator_distance, gaussian_distance_matrix, histogram_distance_matrix,
    DiscriminatorConfig,
};
use polbc::env::{gather_data, DangerousPath, EpsilonGreedyPath};
use polbc::math::Rng;

fn main() -> polbc::Result<()> {
    let env = DangerousPath::new(5, 3)?;
    let rng = Rng::new(4);
    let datasets = [0.05, 0.5, 0.95]
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let policy = EpsilonGreedyPath::new(*env.labeling(), eps)?;
            gather_data(&mut env.clone(), &policy, 30, &mut rng.split(i as u64))
        })
        .collect::<polbc::Result<Vec<_>>>()?;

    println!(
        "gaussian symmetric KL\n{}",
        gaussian_distance_matrix(&datasets)?.to_csv()?
    );
    println!(
        "histogram L1 / 2\n{}",
        histogram_distance_matrix(&datasets)?.to_csv()?
    );
    let config = DiscriminatorConfig {
        epochs: 5,
        ..Default::default()
    };
    let (_, disc) = discriminator_distance(&datasets, &config, &rng.split(9))?;
    println!("discriminator\n{}", disc.to_csv()?);
    Ok(())
}
