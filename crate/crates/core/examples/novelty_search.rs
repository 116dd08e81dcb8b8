//! ES against NSR-ES on the point world. The wall above the spawn point traps
//! fitness-only search near 0.65; novelty pushes members around it.

use polbc::train::{train_es_traced, BcKind, EsConfig};

fn main() -> polbc::Result<()> {
    let mut args = std::env::args().skip(1);
    let generations: usize = args.next().map_or(200, |a| a.parse().expect("generations"));
    let seeds: u64 = args.next().map_or(3, |a| a.parse().expect("seeds"));

    let runs = [
        ("ES", EsConfig::es()),
        ("NSR-ES terminal", EsConfig::nsr_es(BcKind::Terminal)),
        ("NSR-ES gaussian", EsConfig::nsr_es(BcKind::Gaussian)),
        ("NSR-ES supervector", EsConfig::nsr_es(BcKind::Supervector)),
    ];
    for (name, config) in runs {
        let config = EsConfig {
            generations,
            ..config
        };
        let finals = (0..seeds)
            .map(|s| Ok(train_es_traced(&config, s)?.final_return()))
            .collect::<polbc::Result<Vec<f64>>>()?;
        println!("{name:<20} final returns {finals:.3?}");
    }
    Ok(())
}
