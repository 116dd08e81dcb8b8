//! Return, action and state distances between the blue and green gridworld
//! policies as the slip probability grows, plus the exact-occupancy ratio
//! that separates the doorway layout from the open room.

use polbc::env::{
    demo_csv, grid_action_distance, grid_occupancy_exact, grid_state_distance, gridworld_demo,
    GridScenario,
};
use polbc::math::Rng;

fn main() -> polbc::Result<()> {
    let episodes: usize = std::env::args()
        .nth(1)
        .map_or(2000, |a| a.parse().expect("episodes"));
    let epsilons: Vec<f64> = (0..=5).map(|i| i as f64 / 5.0).collect();
    for scenario in GridScenario::ALL {
        let world = scenario.world(0.0)?;
        let (blue, green) = (scenario.blue(), scenario.green());
        let exact = grid_state_distance(
            &grid_occupancy_exact(&world, &blue)?,
            &grid_occupancy_exact(&world, &green)?,
        )?;
        println!(
            "{}: exact state/action ratio at slip 0 = {:.3}",
            scenario.name(),
            exact / grid_action_distance(&blue, &green)?
        );
        let rows = gridworld_demo(scenario, &epsilons, episodes, false, &Rng::new(0))?;
        println!("{}", demo_csv(&rows)?);
    }
    Ok(())
}
