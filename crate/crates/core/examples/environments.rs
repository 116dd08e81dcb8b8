//! One rollout in each built-in environment, and a policy saved to JSON and
//! loaded back.

use polbc::env::{
    gather_data, rollout, write_dataset_csv, DangerousPath, EpsilonGreedyPath, GridScenario,
    PointWorld,
};
use polbc::math::Rng;
use polbc::policy::{AnglePolicy, AnyPolicy};

fn main() -> polbc::Result<()> {
    let mut rng = Rng::new(3);

    let scenario = GridScenario::Doorway;
    let mut grid = scenario.world(0.1)?;
    let t = rollout(&mut grid, &scenario.blue(), &mut rng)?;
    println!(
        "gridworld: {} steps, return {:.3}, path {:?}",
        t.len(),
        t.total_return(),
        t.states
    );

    let mut path = DangerousPath::new(5, 0)?;
    let walker = EpsilonGreedyPath::new(*path.labeling(), 0.1)?;
    let t = rollout(&mut path, &walker, &mut rng)?;
    println!(
        "dangerous path: {} steps, return {}, final cell {:?}",
        t.len(),
        t.total_return(),
        t.final_state
    );

    let policy = AnglePolicy::new(2, &mut rng)?;
    let saved = AnyPolicy::Angle(policy).to_json()?;
    let AnyPolicy::Angle(loaded) = AnyPolicy::from_json(&saved)? else {
        unreachable!()
    };
    let mut point = PointWorld::default();
    let data = gather_data(&mut point, &loaded, 2, &mut rng)?;
    println!("point world: returns {:?}", data.returns());
    print!(
        "{}",
        write_dataset_csv(&data)?
            .lines()
            .take(4)
            .collect::<Vec<_>>()
            .join("\n")
    );
    println!();
    Ok(())
}
