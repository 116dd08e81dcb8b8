//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run a subset with `cargo test --test acceptance -- 1 5 10`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use polbc::baselines::{
    compute_bin_edges, discriminator_distance, fit_gaussian_bc, fit_histogram_bc,
    gaussian_symmetric_kl, histogram_distance, DiscriminatorConfig, GaussianBc,
};
use polbc::cli::{self, RunManifest, MANIFEST};
use polbc::env::{
    grid_action_distance, grid_occupancy_exact, grid_state_distance, gridworld_demo,
    write_dataset_csv, DangerousPath, GridScenario,
};
use polbc::evaluation::{run_metric_study, BcMethod, MetricStudyConfig};
use polbc::gmm::{em_fit_traced, DiagGmm, EmConfig, StateDataset};
use polbc::math::{Activation, Mlp, Rng};
use polbc::policy::{AnglePolicy, AnyPolicy};
use polbc::supervector::{kl_upper_bound, map_adapt, pool_datasets, RelevanceFactor, Supervector};
use polbc::train::{
    train_es_traced, train_trust_region, BcKind, Constraint, ConstraintKind, EsConfig,
    TrustRegionConfig,
};
use tempfile::TempDir;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_map_hand_case() -> Check {
    let ubm = DiagGmm::new(1, 1, vec![1.0], vec![0.0], vec![1.0]).unwrap();
    let data = StateDataset::from_states(1, &[vec![2.0]]).unwrap();
    let sv = map_adapt(&ubm, &data, RelevanceFactor::new(16.0).unwrap()).unwrap();
    let err = (sv.mean(0)[0] - 2.0 / 17.0).abs();
    ensure(
        err <= 1e-12,
        format!(
            "adapted mean {:.15}, |error| {err:.1e} (tolerance 1e-12)",
            sv.mean(0)[0]
        ),
    )
}

fn c2_kl_bound() -> Check {
    let ubm = DiagGmm::new(1, 2, vec![1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let a = Supervector::new(&ubm, vec![0.0, 0.0]).unwrap();
    let b = Supervector::new(&ubm, vec![2.0, 0.0]).unwrap();
    let analytic = kl_upper_bound(&a, &b, &ubm).unwrap();

    let mut rng = Rng::new(2);
    let mut failures = 0;
    for _ in 0..1000 {
        let k = 1 + rng.below(4);
        let d = 1 + rng.below(4);
        let raw: Vec<f64> = (0..k).map(|_| rng.uniform_range(0.05, 1.0)).collect();
        let total: f64 = raw.iter().sum();
        let means: Vec<f64> = (0..k * d).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
        let vars: Vec<f64> = (0..k * d).map(|_| rng.uniform_range(0.1, 4.0)).collect();
        let ubm = DiagGmm::new(k, d, raw.iter().map(|w| w / total).collect(), means, vars).unwrap();
        let mut draw =
            || Supervector::new(&ubm, (0..k * d).map(|_| rng.normal() * 3.0).collect()).unwrap();
        let (x, y) = (draw(), draw());
        let xy = kl_upper_bound(&x, &y, &ubm).unwrap();
        let yx = kl_upper_bound(&y, &x, &ubm).unwrap();
        let xx = kl_upper_bound(&x, &x, &ubm).unwrap();
        if !(xy >= 0.0 && (xy - yx).abs() <= 1e-12 * xy.max(1.0) && xx == 0.0) {
            failures += 1;
        }
    }
    ensure(
        analytic == 2.0 && failures == 0,
        format!("analytic case {analytic} (expected 2.0 exactly), {failures}/1000 randomized cases violate symmetry, sign or self-distance"),
    )
}

fn c3_em_monotone() -> Check {
    let config = EmConfig {
        tol: 0.0,
        max_iters: 40,
        ..Default::default()
    };
    let mut worst_drop = 0.0f64;
    let mut min_var = f64::INFINITY;
    for case in 0..50u64 {
        let mut rng = Rng::new(1000 + case);
        let d = 1 + rng.below(3);
        let clusters = 1 + rng.below(4);
        let centers: Vec<Vec<f64>> = (0..clusters)
            .map(|_| (0..d).map(|_| rng.uniform_range(-6.0, 6.0)).collect())
            .collect();
        let n = 60 + rng.below(200);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let c = &centers[rng.below(clusters)];
                c.iter()
                    .map(|m| m + rng.normal() * rng.uniform_range(0.2, 1.5))
                    .collect()
            })
            .collect();
        let data = StateDataset::from_states(d, &rows).unwrap();
        let k = 1 + rng.below(5);
        let fit = em_fit_traced(&data, k, &mut Rng::new(case), &config).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        min_var = min_var.min(
            fit.gmm
                .variances()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min),
        );
    }
    let floor = EmConfig::default().variance_floor;
    ensure(
        worst_drop <= 1e-9 && min_var >= floor,
        format!("largest per-iteration log-likelihood drop {worst_drop:.2e} (tolerance 1e-9), smallest variance {min_var:.2e} (floor {floor:.0e})"),
    )
}

fn c4_gradients() -> Check {
    let mut rng = Rng::new(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let depth = 1 + rng.below(3);
        let sizes: Vec<usize> = (0..=depth).map(|_| 1 + rng.below(6)).collect();
        let act = if rng.below(2) == 0 {
            Activation::Identity
        } else {
            Activation::Tanh
        };
        let net = Mlp::new(&sizes, act, &mut rng).unwrap();
        let mut params = net.params();
        for p in params.iter_mut() {
            *p += rng.normal() * 0.3;
        }
        let net = net.with_params(&params).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.normal()).collect();
        let g: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.normal()).collect();
        let analytic = net.backward(&x, &g).unwrap();
        let loss = |p: &[f64]| -> f64 {
            let out = net.with_params(p).unwrap().forward(&x).unwrap();
            out.iter().zip(&g).map(|(o, w)| o * w).sum()
        };
        let h = 1e-6;
        for i in 0..params.len() {
            let mut up = params.clone();
            let mut down = params.clone();
            up[i] += h;
            down[i] -= h;
            let numeric = (loss(&up) - loss(&down)) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    ensure(
        worst < 1e-4,
        format!("worst relative error {worst:.2e} over 100 networks (tolerance 1e-4)"),
    )
}

fn c5_gridworld() -> Check {
    let rng = Rng::new(5);
    let epsilons: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut identical_max = 0.0f64;
    for s in GridScenario::ALL {
        for r in gridworld_demo(s, &[0.0, 0.5, 1.0], 500, true, &rng).unwrap() {
            identical_max = identical_max
                .max(r.return_distance)
                .max(r.action_distance)
                .max(r.state_distance);
        }
    }
    let rows = gridworld_demo(GridScenario::Open, &epsilons, 10_000, false, &rng).unwrap();
    let action_constant = rows
        .iter()
        .all(|r| r.action_distance == rows[0].action_distance);
    let state_at_one = rows.last().unwrap().state_distance;

    let ratio = |s: GridScenario| {
        let world = s.world(0.0).unwrap();
        let (blue, green) = (s.blue(), s.green());
        let state = grid_state_distance(
            &grid_occupancy_exact(&world, &blue).unwrap(),
            &grid_occupancy_exact(&world, &green).unwrap(),
        )
        .unwrap();
        state / grid_action_distance(&blue, &green).unwrap()
    };
    let (doorway, open) = (ratio(GridScenario::Doorway), ratio(GridScenario::Open));
    ensure(
        identical_max == 0.0 && action_constant && state_at_one < 0.05 && doorway > 5.0 * open,
        format!(
            "(a) identical max distance {identical_max}; (b) action distance constant: {action_constant}, state distance at slip 1 {state_at_one:.4} (< 0.05); (c) doorway ratio {doorway:.4} vs open {open:.4} (need > 5x)"
        ),
    )
}

fn c6_baselines() -> Check {
    let mut rng = Rng::new(6);
    let mut axiom_failures = 0;
    for _ in 0..200 {
        let mut sparse = || {
            let n = 2 + rng.below(6);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.below(8) as f64, rng.below(8) as f64 * 10.0])
                .collect();
            StateDataset::from_states(2, &rows).unwrap()
        };
        let (a, b, c) = (sparse(), sparse(), sparse());
        let edges =
            compute_bin_edges(&pool_datasets(&[a.clone(), b.clone(), c.clone()]).unwrap()).unwrap();
        let [ha, hb, hc] = [&a, &b, &c].map(|d| fit_histogram_bc(d, &edges).unwrap());
        let ab = histogram_distance(&ha, &hb).unwrap();
        let ok = (0.0..=1.0).contains(&ab)
            && ab == histogram_distance(&hb, &ha).unwrap()
            && histogram_distance(&ha, &ha).unwrap() == 0.0
            && ab
                <= histogram_distance(&ha, &hc).unwrap()
                    + histogram_distance(&hc, &hb).unwrap()
                    + 1e-12;
        if !ok {
            axiom_failures += 1;
        }
    }

    let closed = gaussian_symmetric_kl(
        &GaussianBc {
            mean: vec![0.0],
            variance: vec![1.0],
        },
        &GaussianBc {
            mean: vec![1.0],
            variance: vec![1.0],
        },
    )
    .unwrap();
    let sample = |shift: f64, rng: &mut Rng| {
        let rows: Vec<Vec<f64>> = (0..10_000).map(|_| vec![shift + rng.normal()]).collect();
        StateDataset::from_states(1, &rows).unwrap()
    };
    let (p, q) = (sample(0.0, &mut rng), sample(1.0, &mut rng));
    let estimate =
        gaussian_symmetric_kl(&fit_gaussian_bc(&p).unwrap(), &fit_gaussian_bc(&q).unwrap())
            .unwrap();

    let two_d = |shift: f64, rng: &mut Rng| {
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![shift + rng.normal(), rng.normal()])
            .collect();
        StateDataset::from_states(2, &rows).unwrap()
    };
    let same = two_d(0.0, &mut rng);
    let config = DiscriminatorConfig::default();
    let (_, identical) =
        discriminator_distance(&[same.clone(), same], &config, &Rng::new(61)).unwrap();
    let far = [
        two_d(0.0, &mut rng),
        two_d(50.0, &mut rng),
        two_d(-50.0, &mut rng),
    ];
    let (_, spread) = discriminator_distance(&far, &config, &Rng::new(62)).unwrap();
    let bound = 2.0 * 10f64.exp();
    let max_far = spread.upper_triangle().into_iter().fold(0.0, f64::max);
    let disc_same = identical.get(0, 1);
    ensure(
        axiom_failures == 0 && closed == 1.0 && (estimate - 1.0).abs() <= 0.1 && (disc_same - 2.0).abs() <= 0.5 && max_far <= bound,
        format!(
            "histogram axiom failures {axiom_failures}/200; Gaussian closed form {closed}, 10^4-sample estimate {estimate:.4} (1.0 +- 0.1); discriminator on identical data {disc_same:.4} (2 +- 0.5), max on separated data {max_far:.1} (<= {bound:.1})"
        ),
    )
}

fn c7_correlation() -> Check {
    let config = MetricStudyConfig {
        methods: vec![BcMethod::Supervector],
        ..Default::default()
    };
    assert_eq!(config.epsilons.len(), 20);
    assert_eq!(config.budgets, [10, 25, 50]);
    assert_eq!(config.repetitions, 3);
    let study = run_metric_study(&config, 7).unwrap();
    let at = |t: usize| study.report(BcMethod::Supervector, t).unwrap();
    let corr = at(50).correlation;
    let cvs: Vec<f64> = config
        .budgets
        .iter()
        .map(|&t| at(t).coefficient_of_variation)
        .collect();
    let inversions = cvs.windows(2).filter(|w| w[1] >= w[0]).count();
    ensure(
        corr > 0.3 && inversions <= 1,
        format!("return correlation at 50 trajectories {corr:.4} (> 0.3); CV over budgets 10/25/50 = {cvs:.4?}, {inversions} inversion(s) (<= 1)"),
    )
}

fn c8_novelty() -> Check {
    let seeds: Vec<u64> = (0..10).collect();
    let finals = |config: &EsConfig| -> Vec<f64> {
        seeds
            .iter()
            .map(|&s| train_es_traced(config, s).unwrap().final_return())
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let median = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        (v[4] + v[5]) / 2.0
    };
    let es = finals(&EsConfig::es());
    let sv = finals(&EsConfig::nsr_es(BcKind::Supervector));
    let gauss = finals(&EsConfig::nsr_es(BcKind::Gaussian));
    let (es_mean, sv_median, gauss_mean) = (mean(&es), median(&sv), mean(&gauss));
    ensure(
        (es_mean - 0.65).abs() <= 0.1 && sv_median >= 2.0 && gauss_mean > es_mean,
        format!(
            "ES mean final return {es_mean:.3} (0.65 +- 0.1); NSR-ES supervector median {sv_median:.3} (>= 2.0); NSR-ES Gaussian mean {gauss_mean:.3} (> ES)"
        ),
    )
}

fn c9_trust_region() -> Check {
    let seeds: Vec<u64> = (0..10).collect();
    let run = |kind: ConstraintKind| -> (f64, f64) {
        let config = TrustRegionConfig::with_constraint(Constraint::with_default_threshold(kind));
        let curves: Vec<_> = seeds
            .iter()
            .map(|&s| {
                train_trust_region(&DangerousPath::new(config.actions, s).unwrap(), &config, s)
                    .unwrap()
            })
            .collect();
        let auc = curves.iter().map(|c| c.area()).sum::<f64>() / curves.len() as f64;
        let stops: Vec<f64> = curves
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.aux))
            .collect();
        (auc, stops.iter().sum::<f64>() / stops.len() as f64)
    };
    let (base, _) = run(ConstraintKind::None);
    let mut ok = true;
    let mut parts = vec![format!("unconstrained AUC {base:.3}")];
    for kind in [
        ConstraintKind::MaxTv,
        ConstraintKind::Gaussian,
        ConstraintKind::Supervector,
    ] {
        let (auc, stop_rate) = run(kind);
        ok &= auc > base && stop_rate > 0.0;
        parts.push(format!(
            "{} AUC {auc:.3} stop rate {stop_rate:.2}",
            kind.name()
        ));
    }
    ensure(
        ok,
        format!(
            "{} (each constrained AUC must exceed unconstrained, stop rate > 0)",
            parts.join("; ")
        ),
    )
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn c10_replay() -> Check {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    let p = |name: &str| root.join(name).display().to_string();
    let mut rng = Rng::new(10);
    for (name, shift) in [("a.csv", 0.0), ("b.csv", 1.5), ("c.csv", 3.0)] {
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![shift + rng.normal(), rng.normal()])
            .collect();
        fs::write(
            root.join(name),
            write_dataset_csv(&StateDataset::from_states(2, &rows).unwrap()).unwrap(),
        )
        .unwrap();
    }
    fs::write(
        root.join("angle.json"),
        AnyPolicy::Angle(AnglePolicy::new(2, &mut rng).unwrap())
            .to_json()
            .unwrap(),
    )
    .unwrap();
    fs::write(
        root.join("tr.json"),
        r#"{"base": {"iterations": 3, "envs": 2, "samples_per_env": 64, "minibatches": 5, "minibatch_size": 16}, "thresholds": [0.05]}"#,
    )
    .unwrap();
    fs::write(
        root.join("es.json"),
        r#"{"base": {"generations": 4, "pairs": 4, "bc_episodes": 2}}"#,
    )
    .unwrap();
    fs::write(
        root.join("study.json"),
        r#"{"epsilons": [0.0, 0.3, 0.6, 0.9], "budgets": [2, 4], "repetitions": 2, "methods": ["supervector", "gaussian", "histogram", "discriminator"], "params": {"supervector": {"components": 2}, "discriminator": {"epochs": 2}}}"#,
    )
    .unwrap();
    let grid_policy = format!(
        "{}/fixtures/gridworld/doorway_blue.policy",
        env!("CARGO_MANIFEST_DIR")
    );

    let commands: Vec<Vec<String>> = [
        vec![
            "gather",
            "--env",
            "gridworld",
            "--scenario",
            "doorway",
            "--policy",
            &grid_policy,
            "--slip",
            "0.2",
            "--episodes",
            "20",
        ],
        vec![
            "gather",
            "--env",
            "dangerous-path",
            "--epsilon",
            "0.3",
            "--episodes",
            "10",
            "--seed",
            "3",
        ],
        vec![
            "gather",
            "--env",
            "point",
            "--policy",
            &p("angle.json"),
            "--episodes",
            "3",
        ],
        vec![
            "distance",
            &p("a.csv"),
            &p("b.csv"),
            &p("c.csv"),
            "--method",
            "supervector",
            "--components",
            "4",
        ],
        vec![
            "distance",
            &p("a.csv"),
            &p("b.csv"),
            &p("c.csv"),
            "--method",
            "gaussian",
        ],
        vec![
            "distance",
            &p("a.csv"),
            &p("b.csv"),
            &p("c.csv"),
            "--method",
            "histogram",
        ],
        vec![
            "distance",
            &p("a.csv"),
            &p("b.csv"),
            &p("c.csv"),
            "--method",
            "discriminator",
        ],
        vec![
            "demo-gridworld",
            "--scenario",
            "unreachable",
            "--episodes",
            "200",
        ],
        vec![
            "experiment",
            "trust-region",
            "--config",
            &p("tr.json"),
            "--seeds",
            "0..2",
        ],
        vec![
            "experiment",
            "novelty",
            "--config",
            &p("es.json"),
            "--seeds",
            "0..2",
        ],
        vec!["experiment", "metric-study", "--config", &p("study.json")],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(str::to_owned).collect())
    .collect();

    let mut failed = Vec::new();
    let mut outputs = 0;
    for (i, args) in commands.iter().enumerate() {
        let first = root.join(format!("run{i}"));
        let second = root.join(format!("replay{i}"));
        let mut argv = vec!["polbc".to_string()];
        argv.extend(args.iter().cloned());
        argv.extend(["--out".to_string(), first.display().to_string()]);
        let replay = [
            "polbc",
            "replay",
            &first.join(MANIFEST).display().to_string(),
            "--out",
            &second.display().to_string(),
        ]
        .map(str::to_owned);
        if cli::run(argv) != 0 || cli::run(replay) != 0 {
            failed.push(format!("{} {}", args[0], i));
            continue;
        }
        let manifest =
            RunManifest::from_json(&fs::read_to_string(first.join(MANIFEST)).unwrap()).unwrap();
        outputs += manifest.outputs.len();
        if files(&first) != files(&second) || manifest.outputs.is_empty() {
            failed.push(format!("{} {}", args[0], i));
        }
    }
    ensure(
        failed.is_empty(),
        format!("{} commands replayed, {outputs} outputs plus manifests compared byte for byte; mismatches: {failed:?}", commands.len()),
    )
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 10] = [
        ("MAP adaptation hand case", c1_map_hand_case),
        (
            "KL upper bound analytic case and premetric suite",
            c2_kl_bound,
        ),
        ("EM monotonicity and variance floor", c3_em_monotone),
        ("network gradients against finite differences", c4_gradients),
        ("gridworld demonstration", c5_gridworld),
        ("baseline agreements", c6_baselines),
        (
            "supervector return correlation and CV trend",
            c7_correlation,
        ),
        ("novelty search escapes the trap", c8_novelty),
        (
            "trust-region constraints beat unconstrained",
            c9_trust_region,
        ),
        ("CLI replay reproducibility", c10_replay),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {number:>2} {status} {name} [{secs:.1}s]: {detail}");
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
