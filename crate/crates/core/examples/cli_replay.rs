//! Drives the command line in-process: gathers two datasets, compares them,
//! then replays the comparison from its manifest.

use std::fs;

use polbc::cli::{run, MANIFEST};

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = |name: &str| dir.path().join(name).display().to_string();
    let policy = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/gridworld/open_blue.policy"
    );

    for (name, slip) in [("calm", "0.0"), ("windy", "0.6")] {
        let code = run([
            "polbc",
            "gather",
            "--env",
            "gridworld",
            "--policy",
            policy,
            "--slip",
            slip,
            "--episodes",
            "200",
            "--out",
            &out(name),
        ]);
        assert_eq!(code, 0);
    }
    let calm = format!("{}/trajectories.csv", out("calm"));
    let windy = format!("{}/trajectories.csv", out("windy"));
    assert_eq!(
        run([
            "polbc",
            "distance",
            &calm,
            &windy,
            "--components",
            "8",
            "--out",
            &out("distance")
        ]),
        0
    );
    println!(
        "{}",
        fs::read_to_string(format!("{}/distances.csv", out("distance"))).unwrap()
    );
    println!(
        "{}",
        fs::read_to_string(format!("{}/{MANIFEST}", out("distance"))).unwrap()
    );

    let manifest = format!("{}/{MANIFEST}", out("distance"));
    assert_eq!(
        run(["polbc", "replay", &manifest, "--out", &out("replayed")]),
        0
    );
    let same = fs::read(format!("{}/distances.csv", out("distance"))).unwrap()
        == fs::read(format!("{}/distances.csv", out("replayed"))).unwrap();
    println!("replay identical: {same}");
}
