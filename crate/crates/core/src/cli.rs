//! The `polbc` command line.
//!
//! Every command writes its outputs and a `manifest.json` into the `--out`
//! directory. The manifest holds the fully resolved job (config, seeds and
//! input-file hashes) plus the hash of every output, and `polbc replay`
//! re-executes it and checks the outputs match byte for byte.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::env::{
    demo_csv, gather_data, gridworld_demo, read_dataset_csv, write_dataset_csv, DangerousPath,
    EpsilonGreedyPath, GridLayout, GridScenario, GridWorld, PointWorld, POINT_SPEED, POINT_STEPS,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    bc_distance_matrix, run_metric_study, BcMethod, MethodParams, MetricStudyConfig,
};
use crate::gmm::StateDataset;
use crate::io::{atomic_write, format_number, sha256_hex};
use crate::math::Rng;
use crate::policy::{AnyPolicy, TabularPolicy};
use crate::supervector::{supervector_distance_matrix, RelevanceFactor, SupervectorConfig};
use crate::train::{
    train_es_traced, train_trust_region, BcKind, Constraint, ConstraintKind, EsConfig,
    LearningCurve, TrustRegionConfig,
};

pub const MANIFEST: &str = "manifest.json";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_VAR: &str = "POLBC_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn usage_from(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// A file read by a job, pinned by its content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> Result<Self> {
        let path = path.canonicalize()?;
        let sha256 = sha256_hex(&std::fs::read(&path)?);
        Ok(InputFile { path, sha256 })
    }

    /// Reads the file, failing if its content no longer matches the hash.
    pub fn read(&self) -> Result<String> {
        let bytes = std::fs::read(&self.path)?;
        let found = sha256_hex(&bytes);
        if found != self.sha256 {
            return Err(Error::invalid(format!(
                "{} changed since the run was recorded (sha256 {found}, expected {})",
                self.path.display(),
                self.sha256
            )));
        }
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    fn stem(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSource {
    Scenario(String),
    File(InputFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    Gridworld {
        layout: GridSource,
        slip: f64,
        max_steps: usize,
    },
    DangerousPath {
        actions: usize,
        env_seed: u64,
    },
    Point {
        max_steps: usize,
        speed: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySource {
    File(InputFile),
    EpsilonGreedy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EsMode {
    Es,
    NsrEs,
}

impl EsMode {
    pub fn name(self) -> &'static str {
        match self {
            EsMode::Es => "es",
            EsMode::NsrEs => "nsr-es",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "es" => Ok(EsMode::Es),
            "nsr-es" | "nsr_es" | "nsres" => Ok(EsMode::NsrEs),
            _ => Err(Error::invalid(format!("unknown mode {name:?}"))),
        }
    }
}

/// Constrained training on the dangerous path, one setting per
/// (constraint, threshold) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionExperiment {
    pub base: TrustRegionConfig,
    pub constraints: Vec<ConstraintKind>,
    /// Thresholds for every constrained kind; empty uses each kind's sweep grid.
    pub thresholds: Vec<f64>,
}

impl Default for TrustRegionExperiment {
    fn default() -> Self {
        TrustRegionExperiment {
            base: TrustRegionConfig::default(),
            constraints: ConstraintKind::ALL.to_vec(),
            thresholds: Vec::new(),
        }
    }
}

impl TrustRegionExperiment {
    pub fn settings(&self) -> Vec<Constraint> {
        self.constraints
            .iter()
            .flat_map(|&kind| match kind {
                ConstraintKind::None => vec![Constraint::none()],
                _ => {
                    let grid = if self.thresholds.is_empty() {
                        kind.sweep_grid()
                    } else {
                        &self.thresholds
                    };
                    grid.iter()
                        .map(|&threshold| Constraint { kind, threshold })
                        .collect()
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.constraints.is_empty() {
            return Err(Error::invalid("no constraints selected"));
        }
        if self.thresholds.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::invalid("thresholds must be non-negative"));
        }
        Ok(())
    }
}

/// ES against NSR-ES on the point world; every run uses the same seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoveltyExperiment {
    pub base: EsConfig,
    pub modes: Vec<EsMode>,
    pub bcs: Vec<BcKind>,
    /// Novelty weight of the NSR-ES runs.
    pub novelty_weight: f64,
}

impl Default for NoveltyExperiment {
    fn default() -> Self {
        NoveltyExperiment {
            base: EsConfig::default(),
            modes: vec![EsMode::Es, EsMode::NsrEs],
            bcs: BcKind::ALL.to_vec(),
            novelty_weight: EsConfig::nsr_es(BcKind::Terminal).novelty_weight,
        }
    }
}

impl NoveltyExperiment {
    /// Named configurations: `es` once, then `nsr-es-<bc>` per BC.
    pub fn runs(&self) -> Vec<(String, EsConfig)> {
        let mut runs = Vec::new();
        for mode in &self.modes {
            match mode {
                EsMode::Es => runs.push((
                    "es".to_string(),
                    EsConfig {
                        novelty_weight: 0.0,
                        ..self.base.clone()
                    },
                )),
                EsMode::NsrEs => {
                    for &bc in &self.bcs {
                        let config = EsConfig {
                            bc,
                            novelty_weight: self.novelty_weight,
                            ..self.base.clone()
                        };
                        runs.push((format!("nsr-es-{}", bc.name()), config));
                    }
                }
            }
        }
        runs
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::invalid("no modes selected"));
        }
        if self.modes.contains(&EsMode::NsrEs) && self.bcs.is_empty() {
            return Err(Error::invalid("NSR-ES needs at least one BC"));
        }
        if !(self.novelty_weight > 0.0 && self.novelty_weight <= 1.0) {
            return Err(Error::invalid("novelty weight must lie in (0, 1]"));
        }
        self.runs().iter().try_for_each(|(_, c)| c.validate())
    }
}

/// A fully resolved command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Job {
    Gather {
        env: EnvSpec,
        policy: PolicySource,
        episodes: usize,
        seed: u64,
    },
    Distance {
        method: BcMethod,
        datasets: Vec<InputFile>,
        params: MethodParams,
        seed: u64,
    },
    DemoGridworld {
        scenario: String,
        epsilons: Vec<f64>,
        episodes: usize,
        identical: bool,
        seed: u64,
    },
    TrustRegion {
        config: TrustRegionExperiment,
        seeds: Vec<u64>,
    },
    Novelty {
        config: NoveltyExperiment,
        seeds: Vec<u64>,
    },
    MetricStudy {
        config: MetricStudyConfig,
        seeds: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    pub job: Job,
    /// sha256 of each output, keyed by its path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

type Outputs = Vec<(String, Vec<u8>)>;

impl Job {
    /// Checks made before any work starts; failures are usage errors.
    pub fn validate(&self) -> Result<()> {
        match self {
            Job::Gather {
                env,
                policy,
                episodes,
                ..
            } => {
                if *episodes == 0 {
                    return Err(Error::invalid("--episodes must be at least 1"));
                }
                match (env, policy) {
                    (EnvSpec::DangerousPath { .. }, _) | (_, PolicySource::File(_)) => Ok(()),
                    _ => Err(Error::invalid(
                        "--epsilon only applies to the dangerous-path environment",
                    )),
                }
            }
            Job::Distance { datasets, .. } => {
                if datasets.len() < 2 {
                    return Err(Error::invalid("distance needs at least two dataset files"));
                }
                Ok(())
            }
            Job::DemoGridworld {
                scenario,
                epsilons,
                episodes,
                ..
            } => {
                GridScenario::from_name(scenario)?;
                if *episodes == 0 {
                    return Err(Error::invalid("--episodes must be at least 1"));
                }
                if epsilons.is_empty() || epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
                    return Err(Error::invalid("slip probabilities must lie in [0, 1]"));
                }
                Ok(())
            }
            Job::TrustRegion { config, seeds } => {
                check_seeds(seeds).and_then(|_| config.validate())
            }
            Job::Novelty { config, seeds } => check_seeds(seeds).and_then(|_| config.validate()),
            Job::MetricStudy { config, seeds } => {
                check_seeds(seeds).and_then(|_| config.validate())
            }
        }
    }

    /// Runs the job and returns its output files in memory.
    pub fn execute(&self) -> Result<Outputs> {
        match self {
            Job::Gather {
                env,
                policy,
                episodes,
                seed,
            } => {
                let data = gather(env, policy, *episodes, &mut Rng::new(*seed))?;
                Ok(vec![(
                    "trajectories.csv".into(),
                    write_dataset_csv(&data)?.into_bytes(),
                )])
            }
            Job::Distance {
                method,
                datasets,
                params,
                seed,
            } => distance(*method, datasets, params, *seed),
            Job::DemoGridworld {
                scenario,
                epsilons,
                episodes,
                identical,
                seed,
            } => {
                let rows = gridworld_demo(
                    GridScenario::from_name(scenario)?,
                    epsilons,
                    *episodes,
                    *identical,
                    &Rng::new(*seed),
                )?;
                Ok(vec![("demo.csv".into(), demo_csv(&rows)?.into_bytes())])
            }
            Job::TrustRegion { config, seeds } => trust_region(config, seeds),
            Job::Novelty { config, seeds } => novelty(config, seeds),
            Job::MetricStudy { config, seeds } => metric_study(config, seeds),
        }
    }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::invalid("no seeds given"));
    }
    Ok(())
}

fn load_policy(file: &InputFile) -> Result<AnyPolicy> {
    let text = file.read()?;
    if text.trim_start().starts_with('{') {
        AnyPolicy::from_json(&text)
    } else {
        Ok(AnyPolicy::Tabular(TabularPolicy::parse(&text)?))
    }
}

fn wrong_policy(policy: &AnyPolicy, env: &str, wanted: &str) -> Error {
    Error::invalid(format!(
        "the {env} environment needs a {wanted} policy, got {}",
        policy.kind()
    ))
}

fn gather(
    env: &EnvSpec,
    policy: &PolicySource,
    episodes: usize,
    rng: &mut Rng,
) -> Result<StateDataset> {
    match env {
        EnvSpec::Gridworld {
            layout,
            slip,
            max_steps,
        } => {
            let layout = match layout {
                GridSource::Scenario(name) => GridScenario::from_name(name)?.layout(),
                GridSource::File(f) => GridLayout::parse(&f.read()?)?,
            };
            let PolicySource::File(file) = policy else {
                return Err(Error::invalid("the gridworld needs a policy file"));
            };
            let policy = match load_policy(file)? {
                AnyPolicy::Tabular(p) => p,
                other => return Err(wrong_policy(&other, "gridworld", "tabular")),
            };
            if (policy.rows(), policy.cols()) != (layout.rows(), layout.cols()) {
                return Err(Error::LayoutMismatch(format!(
                    "policy is {}x{} but the layout is {}x{}",
                    policy.rows(),
                    policy.cols(),
                    layout.rows(),
                    layout.cols()
                )));
            }
            gather_data(
                &mut GridWorld::new(layout, *slip, *max_steps)?,
                &policy,
                episodes,
                rng,
            )
        }
        EnvSpec::DangerousPath { actions, env_seed } => {
            let mut world = DangerousPath::new(*actions, *env_seed)?;
            match policy {
                PolicySource::EpsilonGreedy(e) => {
                    let p = EpsilonGreedyPath::new(*world.labeling(), *e)?;
                    gather_data(&mut world, &p, episodes, rng)
                }
                PolicySource::File(file) => match load_policy(file)? {
                    AnyPolicy::Softmax(p) => gather_data(&mut world, &p, episodes, rng),
                    other => Err(wrong_policy(&other, "dangerous-path", "softmax")),
                },
            }
        }
        EnvSpec::Point { max_steps, speed } => {
            let PolicySource::File(file) = policy else {
                return Err(Error::invalid("the point environment needs a policy file"));
            };
            match load_policy(file)? {
                AnyPolicy::Angle(p) => {
                    gather_data(&mut PointWorld::new(*max_steps, *speed)?, &p, episodes, rng)
                }
                other => Err(wrong_policy(&other, "point", "angle")),
            }
        }
    }
}

fn distance(
    method: BcMethod,
    files: &[InputFile],
    params: &MethodParams,
    seed: u64,
) -> Result<Outputs> {
    let datasets = files
        .iter()
        .map(|f| read_dataset_csv(&f.read()?))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = files.iter().map(InputFile::stem).collect();
    let mut rng = Rng::new(seed);
    let mut outputs = Vec::new();
    let matrix = if method == BcMethod::Supervector {
        let analysis = supervector_distance_matrix(&datasets, &params.supervector, &mut rng)?;
        let supervectors = analysis
            .supervectors
            .iter()
            .map(|s| Ok(serde_json::from_str::<serde_json::Value>(&s.to_json()?)?))
            .collect::<Result<Vec<_>>>()?;
        outputs.push(("ubm.json".to_string(), analysis.ubm.to_json()?.into_bytes()));
        outputs.push((
            "supervectors.json".to_string(),
            serde_json::to_vec_pretty(&supervectors)?,
        ));
        analysis.distances
    } else {
        bc_distance_matrix(method, &datasets, params, &mut rng)?
    };
    outputs.insert(
        0,
        (
            "distances.csv".to_string(),
            matrix.with_labels(labels)?.to_csv()?.into_bytes(),
        ),
    );
    Ok(outputs)
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn curve_name(run: &str, seed: u64) -> String {
    format!("curves/{run}-seed{seed}.csv")
}

fn trust_region(config: &TrustRegionExperiment, seeds: &[u64]) -> Result<Outputs> {
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for constraint in config.settings() {
        let run = match constraint.kind {
            ConstraintKind::None => "none".to_string(),
            kind => format!("{}-{}", kind.name(), format_number(constraint.threshold)),
        };
        let cfg = TrustRegionConfig {
            constraint,
            ..config.base.clone()
        };
        let mut curves: Vec<LearningCurve> = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let env = DangerousPath::new(cfg.actions, seed)?;
            let curve = train_trust_region(&env, &cfg, seed)?;
            outputs.push((curve_name(&run, seed), curve.to_csv()?.into_bytes()));
            curves.push(curve);
        }
        let areas: Vec<f64> = curves.iter().map(LearningCurve::area).collect();
        let finals: Vec<f64> = curves
            .iter()
            .filter_map(LearningCurve::final_return)
            .collect();
        let aux: Vec<f64> = curves
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.aux))
            .collect();
        summary.push(vec![
            constraint.kind.name().to_string(),
            format_number(constraint.threshold),
            seeds.len().to_string(),
            format_number(mean(&areas)),
            format_number(mean(&finals)),
            format_number(mean(&aux)),
        ]);
    }
    let header = [
        "constraint",
        "threshold",
        "seeds",
        "mean_auc",
        "mean_final_return",
        "stop_rate",
    ];
    outputs.push(("summary.csv".into(), csv_bytes(&header, summary)?));
    Ok(outputs)
}

fn novelty(config: &NoveltyExperiment, seeds: &[u64]) -> Result<Outputs> {
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    let mut finals_rows = Vec::new();
    for (run, cfg) in config.runs() {
        let mut finals = Vec::with_capacity(seeds.len());
        let mut areas = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let result = train_es_traced(&cfg, seed)?;
            outputs.push((curve_name(&run, seed), result.curve.to_csv()?.into_bytes()));
            finals_rows.push(vec![
                run.clone(),
                seed.to_string(),
                format_number(result.final_return()),
            ]);
            finals.push(result.final_return());
            areas.push(result.curve.area());
        }
        summary.push(vec![
            run.clone(),
            seeds.len().to_string(),
            format_number(mean(&finals)),
            format_number(median(&finals)),
            format_number(mean(&areas)),
        ]);
    }
    outputs.push((
        "finals.csv".into(),
        csv_bytes(&["run", "seed", "final_return"], finals_rows)?,
    ));
    let header = [
        "run",
        "seeds",
        "mean_final_return",
        "median_final_return",
        "mean_auc",
    ];
    outputs.push(("summary.csv".into(), csv_bytes(&header, summary)?));
    Ok(outputs)
}

fn metric_study(config: &MetricStudyConfig, seeds: &[u64]) -> Result<Outputs> {
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for &seed in seeds {
        let study = run_metric_study(config, seed)?;
        outputs.push((
            format!("rows-seed{seed}.csv"),
            study.rows_csv()?.into_bytes(),
        ));
        outputs.push((
            format!("reports-seed{seed}.json"),
            serde_json::to_vec_pretty(&study.reports)?,
        ));
        for r in &study.reports {
            summary.push(vec![
                r.method.clone(),
                r.trajectories.to_string(),
                seed.to_string(),
                format_number(r.correlation),
                r.distance_error.map(format_number).unwrap_or_default(),
                format_number(r.coefficient_of_variation),
            ]);
        }
    }
    let header = [
        "method",
        "trajectories",
        "seed",
        "correlation",
        "distance_error",
        "coefficient_of_variation",
    ];
    outputs.push(("summary.csv".into(), csv_bytes(&header, summary)?));
    Ok(outputs)
}

/// Executes `job`, writes its outputs and manifest under `out`.
pub fn write_run(job: &Job, out: &Path) -> Result<RunManifest> {
    let mut outputs = BTreeMap::new();
    for (name, bytes) in job.execute()? {
        atomic_write(out.join(&name), &bytes)?;
        outputs.insert(name, sha256_hex(&bytes));
    }
    let manifest = RunManifest {
        version: VERSION.to_string(),
        job: job.clone(),
        outputs,
    };
    atomic_write(out.join(MANIFEST), manifest.to_json()?.as_bytes())?;
    Ok(manifest)
}

/// Re-executes a recorded run into `out` and checks every output hash.
pub fn replay(manifest: &Path, out: &Path) -> Result<RunManifest> {
    let recorded = RunManifest::from_json(&std::fs::read_to_string(manifest)?)?;
    if recorded.version != VERSION {
        eprintln!(
            "warning: manifest was written by version {}, running {VERSION}",
            recorded.version
        );
    }
    let fresh = write_run(&recorded.job, out)?;
    if fresh.outputs != recorded.outputs {
        let differing: Vec<&str> = recorded
            .outputs
            .iter()
            .filter(|(name, hash)| fresh.outputs.get(*name) != Some(*hash))
            .map(|(name, _)| name.as_str())
            .collect();
        return Err(Error::invalid(format!(
            "replayed outputs differ from the recording: {differing:?}"
        )));
    }
    Ok(fresh)
}

#[derive(Parser, Debug)]
#[command(
    name = "polbc",
    version,
    about = "Characterize policies by the states they visit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll out a policy and write its visited states as trajectory CSV
    Gather(GatherArgs),
    /// Pairwise distances between trajectory datasets
    Distance(DistanceArgs),
    /// Return, action and state distances of a gridworld policy pair over slip probabilities
    DemoGridworld(DemoArgs),
    /// Run the trust-region, novelty or metric-study experiment
    Experiment(ExperimentArgs),
    /// Re-run a manifest into a new directory and check the outputs match
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct GatherArgs {
    /// gridworld, dangerous-path or point
    #[arg(long)]
    env: String,
    /// Policy file: tabular text for the gridworld, policy JSON otherwise
    #[arg(long, required_unless_present = "epsilon")]
    policy: Option<PathBuf>,
    /// Use the ε-greedy dangerous-path policy instead of a policy file
    #[arg(long, conflicts_with = "policy")]
    epsilon: Option<f64>,
    #[arg(long)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Built-in gridworld layout: open (alias stochastic), doorway or unreachable
    #[arg(long, default_value = "open")]
    scenario: String,
    /// Gridworld layout file, instead of --scenario
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Gridworld slip probability
    #[arg(long, default_value_t = 0.0)]
    slip: f64,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Dangerous-path action count
    #[arg(long, default_value_t = DangerousPath::DEFAULT_ACTIONS)]
    actions: usize,
    /// Seed of the dangerous-path action labelling
    #[arg(long, default_value_t = 0)]
    env_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    /// Trajectory CSV files, at least two
    #[arg(required = true)]
    datasets: Vec<PathBuf>,
    /// supervector, gaussian, histogram or discriminator
    #[arg(long, default_value = "supervector")]
    method: String,
    /// UBM mixture components
    #[arg(long, default_value_t = 64)]
    components: usize,
    /// MAP relevance factor
    #[arg(long, default_value_t = 16.0)]
    relevance: f64,
    /// Subsample the pooled states to at most this many before fitting the UBM
    #[arg(long)]
    max_ubm_states: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// stochastic (the open room), doorway or unreachable
    #[arg(long, default_value = "stochastic")]
    scenario: String,
    /// Comma-separated slip probabilities [default: 0, 0.1, ..., 1]
    #[arg(long, value_delimiter = ',')]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compare the blue policy with itself
    #[arg(long)]
    identical: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// trust-region, novelty or metric-study
    name: String,
    /// JSON configuration; omitted keys keep their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds as a list (1,2,3) or a half-open range (0..10)
    #[arg(long, alias = "seed")]
    seeds: Option<String>,
    /// Trust region: constraint kinds (none, max_tv, gaussian, supervector)
    #[arg(long, value_delimiter = ',')]
    constraint: Vec<String>,
    /// Trust region: thresholds swept for every constrained kind
    #[arg(long, value_delimiter = ',')]
    threshold: Vec<f64>,
    /// Trust region: training iterations
    #[arg(long)]
    iterations: Option<usize>,
    /// Novelty: es and/or nsr-es
    #[arg(long, value_delimiter = ',')]
    mode: Vec<String>,
    /// Novelty: BCs used by NSR-ES (terminal, gaussian, supervector)
    #[arg(long, value_delimiter = ',')]
    bc: Vec<String>,
    /// Novelty: ES generations
    #[arg(long)]
    generations: Option<usize>,
    /// Metric study: methods (supervector, gaussian, histogram, discriminator)
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Supervector mixture components
    #[arg(long)]
    components: Option<usize>,
    /// Metric study: MAP relevance factor
    #[arg(long)]
    relevance: Option<f64>,
    /// Metric study: trajectory budgets
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<usize>,
    /// Metric study: data re-samplings per budget
    #[arg(long)]
    repetitions: Option<usize>,
    /// Metric study: repetition at the largest budget used as the reference
    #[arg(long)]
    truth_repetition: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `0..10` or `1,4,7`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::invalid(format!("cannot parse seeds {text:?}"));
    let seeds = if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        (a..b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<Vec<u64>>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn parse_names<T>(
    names: &[String],
    from_name: impl Fn(&str) -> Result<T>,
) -> std::result::Result<Vec<T>, CliError> {
    names
        .iter()
        .map(|n| from_name(n))
        .collect::<Result<Vec<_>>>()
        .map_err(usage_from)
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(
    path: Option<&Path>,
) -> std::result::Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(Error::from)?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", p.display())))
        }
    }
}

fn input(path: &Path) -> std::result::Result<InputFile, CliError> {
    InputFile::hash(path).map_err(|e| {
        CliError::Runtime(Error::invalid(format!(
            "cannot read {}: {e}",
            path.display()
        )))
    })
}

fn gather_job(a: GatherArgs) -> std::result::Result<Job, CliError> {
    let env = match a.env.as_str() {
        "gridworld" => EnvSpec::Gridworld {
            layout: match &a.layout {
                Some(p) => GridSource::File(input(p)?),
                None => GridSource::Scenario(
                    GridScenario::from_name(&a.scenario)
                        .map_err(usage_from)?
                        .name()
                        .to_string(),
                ),
            },
            slip: a.slip,
            max_steps: a.max_steps.unwrap_or(GridWorld::DEFAULT_MAX_STEPS),
        },
        "dangerous-path" => EnvSpec::DangerousPath {
            actions: a.actions,
            env_seed: a.env_seed,
        },
        "point" => EnvSpec::Point {
            max_steps: a.max_steps.unwrap_or(POINT_STEPS),
            speed: POINT_SPEED,
        },
        other => {
            return Err(usage(format!(
                "unknown env {other:?}; expected gridworld, dangerous-path or point"
            )))
        }
    };
    let policy = match (&a.policy, a.epsilon) {
        (Some(p), _) => PolicySource::File(input(p)?),
        (None, Some(e)) => PolicySource::EpsilonGreedy(e),
        (None, None) => return Err(usage("--policy is required")),
    };
    Ok(Job::Gather {
        env,
        policy,
        episodes: a.episodes,
        seed: a.seed,
    })
}

fn distance_job(a: DistanceArgs) -> std::result::Result<Job, CliError> {
    let method = BcMethod::from_name(&a.method).map_err(usage_from)?;
    if a.datasets.len() < 2 {
        return Err(usage("distance needs at least two dataset files"));
    }
    let relevance = RelevanceFactor::new(a.relevance).map_err(usage_from)?;
    let params = MethodParams {
        supervector: SupervectorConfig {
            relevance,
            max_ubm_states: a.max_ubm_states,
            ..SupervectorConfig::with_components(a.components)
        },
        ..Default::default()
    };
    let datasets = a
        .datasets
        .iter()
        .map(|p| input(p))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Job::Distance {
        method,
        datasets,
        params,
        seed: a.seed,
    })
}

fn demo_job(a: DemoArgs) -> Job {
    let epsilons = if a.epsilons.is_empty() {
        (0..=10).map(|i| i as f64 / 10.0).collect()
    } else {
        a.epsilons
    };
    Job::DemoGridworld {
        scenario: a.scenario,
        epsilons,
        episodes: a.episodes,
        identical: a.identical,
        seed: a.seed,
    }
}

fn reject_flags(name: &str, flags: &[(&str, bool)]) -> std::result::Result<(), CliError> {
    match flags.iter().find(|(_, set)| *set) {
        Some((flag, _)) => Err(usage(format!(
            "{flag} does not apply to the {name} experiment"
        ))),
        None => Ok(()),
    }
}

fn experiment_job(a: ExperimentArgs) -> std::result::Result<Job, CliError> {
    let seeds = a
        .seeds
        .as_deref()
        .map(parse_seeds)
        .transpose()
        .map_err(usage_from)?;
    let config_path = a.config.as_deref();
    let tr_flags = [
        ("--constraint", !a.constraint.is_empty()),
        ("--threshold", !a.threshold.is_empty()),
        ("--iterations", a.iterations.is_some()),
    ];
    let es_flags = [
        ("--mode", !a.mode.is_empty()),
        ("--bc", !a.bc.is_empty()),
        ("--generations", a.generations.is_some()),
    ];
    let study_flags = [
        ("--method", !a.method.is_empty()),
        ("--relevance", a.relevance.is_some()),
        ("--budgets", !a.budgets.is_empty()),
        ("--repetitions", a.repetitions.is_some()),
        ("--truth-repetition", a.truth_repetition.is_some()),
    ];
    match a.name.as_str() {
        "trust-region" => {
            reject_flags(&a.name, &es_flags)?;
            reject_flags(&a.name, &study_flags)?;
            let mut config: TrustRegionExperiment = read_config(config_path)?;
            if !a.constraint.is_empty() {
                config.constraints = parse_names(&a.constraint, ConstraintKind::from_name)?;
            }
            if !a.threshold.is_empty() {
                config.thresholds = a.threshold;
            }
            if let Some(n) = a.iterations {
                config.base.iterations = n;
            }
            if let Some(k) = a.components {
                config.base.supervector_components = k;
            }
            Ok(Job::TrustRegion {
                config,
                seeds: seeds.unwrap_or_else(|| (0..10).collect()),
            })
        }
        "novelty" => {
            reject_flags(&a.name, &tr_flags)?;
            reject_flags(&a.name, &study_flags)?;
            let mut config: NoveltyExperiment = read_config(config_path)?;
            if !a.mode.is_empty() {
                config.modes = parse_names(&a.mode, EsMode::from_name)?;
            }
            if !a.bc.is_empty() {
                config.bcs = parse_names(&a.bc, BcKind::from_name)?;
            }
            if let Some(n) = a.generations {
                config.base.generations = n;
            }
            if let Some(k) = a.components {
                config.base.supervector_components = k;
            }
            Ok(Job::Novelty {
                config,
                seeds: seeds.unwrap_or_else(|| (0..10).collect()),
            })
        }
        "metric-study" => {
            reject_flags(&a.name, &tr_flags)?;
            reject_flags(&a.name, &es_flags)?;
            let mut config: MetricStudyConfig = read_config(config_path)?;
            if !a.method.is_empty() {
                config.methods = parse_names(&a.method, BcMethod::from_name)?;
            }
            if let Some(k) = a.components {
                config.params.supervector.components = k;
            }
            if let Some(r) = a.relevance {
                config.params.supervector.relevance =
                    RelevanceFactor::new(r).map_err(usage_from)?;
            }
            if !a.budgets.is_empty() {
                config.budgets = a.budgets;
            }
            if let Some(n) = a.repetitions {
                config.repetitions = n;
            }
            if let Some(i) = a.truth_repetition {
                config.truth_repetition = i;
            }
            Ok(Job::MetricStudy {
                config,
                seeds: seeds.unwrap_or_else(|| vec![0]),
            })
        }
        other => Err(usage(format!(
            "unknown experiment {other:?}; expected trust-region, novelty or metric-study"
        ))),
    }
}

fn configure_threads() -> std::result::Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            usage(format!(
                "{THREADS_VAR} must be a positive integer, got {value:?}"
            ))
        })?;
    // The global pool can only be built once per process; later calls keep the first size.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn dispatch(command: Command) -> std::result::Result<(PathBuf, RunManifest), CliError> {
    configure_threads()?;
    let (job, out) = match command {
        Command::Replay(a) => return Ok((a.out.clone(), replay(&a.manifest, &a.out)?)),
        Command::Gather(a) => {
            let out = a.out.clone();
            (gather_job(a)?, out)
        }
        Command::Distance(a) => {
            let out = a.out.clone();
            (distance_job(a)?, out)
        }
        Command::DemoGridworld(a) => {
            let out = a.out.clone();
            (demo_job(a), out)
        }
        Command::Experiment(a) => {
            let out = a.out.clone();
            (experiment_job(a)?, out)
        }
    };
    job.validate().map_err(usage_from)?;
    let manifest = write_run(&job, &out)?;
    Ok((out, manifest))
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok((out, manifest)) => {
            println!(
                "wrote {} files and {MANIFEST} to {}",
                manifest.outputs.len(),
                out.display()
            );
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
