//! Experiment runner: configuration, the `run`, `ablation`, `compare` and
//! `metrics` commands, and their on-disk outputs.
//!
//! Every CSV and JSON output is a pure function of the configuration, so a
//! rerun reproduces it byte for byte. Timestamps and timings only appear in
//! `manifest.json`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::acquisition::{AcquisitionConfig, AcquisitionSet};
use crate::baselines::{mc_estimate, pmc_estimate, run_selection_baseline, EstimateTrace, PmcConfig, Selector};
use crate::bsv::{read_records_csv, run_bsv, write_history_csv, write_records_csv, BsvConfig, BsvResult, EvaluationRecord};
use crate::error::{BsvError, Result};
use crate::estimator::{estimate_pfail, true_labels, weighted_mean, EstimateMode};
use crate::field::SurrogateField;
use crate::gp::{GpSurrogate, KernelParams, LinkParams, DEFAULT_JITTER};
use crate::grid::{ProposalGrid, DEFAULT_RESOLUTION};
use crate::metrics::{metric_report, relative_error, MetricReport};
use crate::operational::OperationalModel;
use crate::space::DesignPoint;
use crate::systems::{BlackBox, OutputKind, Problem, SubprocessSystem};

pub const ENV_OUTPUT_DIR: &str = "BSV_OUTPUT_DIR";
pub const ENV_WORKERS: &str = "BSV_WORKERS";

/// Smoothing weight kept from the previous smoothed value in comparison
/// curves: `s_k = (1 - a) x_k + a s_{k-1}`.
pub const COMPARE_SMOOTHING: f64 = 0.1;

/// Records above this size skip the surrogate refit in `metrics`.
const METRICS_REFIT_LIMIT: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bsv,
    Mc,
    Pmc,
    Lhs,
    Sobol,
    Grid,
    Uniform,
}

impl Method {
    pub fn all() -> [Method; 7] {
        [
            Method::Bsv,
            Method::Mc,
            Method::Pmc,
            Method::Lhs,
            Method::Sobol,
            Method::Grid,
            Method::Uniform,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Bsv => "bsv",
            Method::Mc => "mc",
            Method::Pmc => "pmc",
            Method::Lhs => "lhs",
            Method::Sobol => "sobol",
            Method::Grid => "grid",
            Method::Uniform => "uniform",
        }
    }

    pub fn selector(&self) -> Option<Selector> {
        match self {
            Method::Lhs => Some(Selector::Lhs),
            Method::Sobol => Some(Selector::Sobol),
            Method::Grid => Some(Selector::Grid),
            Method::Uniform => Some(Selector::Uniform),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = BsvError;

    fn from_str(s: &str) -> Result<Self> {
        Method::all()
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| BsvError::Unknown {
                kind: "method",
                name: s.to_string(),
            })
    }
}

/// External system reached through the subprocess protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalSystem {
    pub command: Vec<String>,
    #[serde(default = "default_output_kind")]
    pub output_kind: OutputKind,
    #[serde(default = "default_true")]
    pub expensive: bool,
}

fn default_output_kind() -> OutputKind {
    OutputKind::Binary
}

fn default_true() -> bool {
    true
}

fn default_iterations() -> usize {
    333
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

fn default_lambda() -> f64 {
    0.1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_workers() -> usize {
    1
}

fn default_ablation_budget() -> usize {
    90
}

fn default_methods() -> Vec<Method> {
    vec![Method::Bsv, Method::Lhs, Method::Sobol, Method::Grid, Method::Uniform]
}

/// Experiment configuration, read from a JSON file. Every field except
/// `problem` has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in problem name, or a free label when `system` is given.
    pub problem: String,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Methods compared by `compare`.
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Main-loop iterations; three evaluations each.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Evaluations for Monte Carlo and the selection baselines. Defaults to
    /// `3 * iterations` (selection) or the PMC total (Monte Carlo).
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub mode: EstimateMode,
    #[serde(default)]
    pub acquisitions: AcquisitionSet,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default)]
    pub pmc: PmcConfig,
    /// Total evaluations per ablation run.
    #[serde(default = "default_ablation_budget")]
    pub ablation_budget: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub system: Option<ExternalSystem>,
    /// Operational model for external systems.
    #[serde(default)]
    pub model: Option<OperationalModel>,
}

fn default_method() -> Method {
    Method::Bsv
}

impl RunConfig {
    pub fn new(problem: &str) -> Self {
        serde_json::from_value(serde_json::json!({ "problem": problem })).expect("defaults")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Output directory and worker count from the environment, when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            self.output_dir = PathBuf::from(dir);
        }
        if let Ok(w) = std::env::var(ENV_WORKERS) {
            self.workers = w
                .parse()
                .map_err(|_| BsvError::InvalidParameter(format!("{ENV_WORKERS} must be a positive integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(BsvError::InvalidParameter("at least one seed is required".into()));
        }
        if self.iterations == 0 {
            return Err(BsvError::InvalidParameter("iterations must be positive".into()));
        }
        if self.budget == Some(0) {
            return Err(BsvError::InvalidParameter("budget must be positive".into()));
        }
        if self.workers == 0 {
            return Err(BsvError::InvalidParameter("workers must be positive".into()));
        }
        if self.grid_resolution < 2 {
            return Err(BsvError::InvalidParameter("grid resolution must be at least 2".into()));
        }
        if self.methods.is_empty() {
            return Err(BsvError::InvalidParameter("at least one method is required".into()));
        }
        if self.ablation_budget == 0 {
            return Err(BsvError::InvalidParameter("ablation budget must be positive".into()));
        }
        self.kernel.validate()?;
        self.pmc.validate()?;
        self.acquisition().validate()?;
        match (&self.system, &self.model) {
            (Some(s), Some(m)) => {
                if s.command.is_empty() {
                    return Err(BsvError::InvalidParameter("external system command is empty".into()));
                }
                m.parameters.iter().try_for_each(|p| p.distribution.validate())?;
            }
            (Some(_), None) => {
                return Err(BsvError::InvalidParameter("external systems need an operational model".into()));
            }
            (None, _) => {
                Problem::by_name(&self.problem)?;
            }
        }
        Ok(())
    }

    pub fn acquisition(&self) -> AcquisitionConfig {
        AcquisitionConfig {
            lambda: self.lambda,
            active: self.acquisitions.clone(),
        }
    }

    pub fn bsv_config(&self) -> BsvConfig {
        BsvConfig {
            iterations: self.iterations,
            acquisition: self.acquisition(),
            kernel: self.kernel,
            link: LinkParams::default(),
            jitter: DEFAULT_JITTER,
            mode: self.mode,
        }
    }

    pub fn selection_budget(&self) -> usize {
        self.budget.unwrap_or(3 * self.iterations)
    }

    pub fn mc_budget(&self) -> usize {
        self.budget.unwrap_or_else(|| self.pmc.total_samples())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serializable");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Ground truth for systems cheap enough to sweep over the grid.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub pfail: f64,
    pub labels: Vec<f64>,
}

type SystemFactory = Box<dyn Fn() -> Result<Box<dyn BlackBox + Send>> + Sync>;

/// A resolved problem: model, grid, optional ground truth, and a way to
/// construct fresh system instances (one per job).
pub struct Setup {
    pub name: String,
    pub model: OperationalModel,
    pub grid: ProposalGrid,
    pub truth: Option<GroundTruth>,
    factory: SystemFactory,
}

impl Setup {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let (model, factory): (OperationalModel, SystemFactory) = match (&config.system, &config.model) {
            (Some(ext), Some(model)) => {
                let ext = ext.clone();
                (
                    model.clone(),
                    Box::new(move || {
                        let s = SubprocessSystem::new(ext.command.clone(), ext.output_kind)?;
                        let s = if ext.expensive { s } else { s.inexpensive() };
                        Ok(Box::new(s) as Box<dyn BlackBox + Send>)
                    }),
                )
            }
            _ => {
                let problem = Problem::by_name(&config.problem)?;
                let kind = problem.kind;
                (
                    problem.model,
                    Box::new(move || Ok(Box::new(Problem::toy(kind).system()) as Box<dyn BlackBox + Send>)),
                )
            }
        };
        let grid = ProposalGrid::build_uniform(&model.space(), &model, config.grid_resolution)?;
        let mut probe = factory()?;
        let truth = if probe.info().expensive {
            None
        } else {
            probe.initialize()?;
            let labels = true_labels(probe.as_mut(), &grid)?;
            Some(GroundTruth {
                pfail: weighted_mean(&grid, &labels)?,
                labels,
            })
        };
        probe.reset()?;
        Ok(Setup {
            name: config.problem.clone(),
            model,
            grid,
            truth,
            factory,
        })
    }

    pub fn system(&self) -> Result<Box<dyn BlackBox + Send>> {
        (self.factory)()
    }

    fn truth_ref(&self) -> Option<(f64, &[f64])> {
        self.truth.as_ref().map(|t| (t.pfail, &t.labels[..]))
    }
}

/// Writes a file by writing a sibling temporary and renaming it over.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut fs::File) -> Result<()>,
{
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        write(&mut f)?;
        f.flush()?;
        f.sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |f| {
        serde_json::to_writer_pretty(&mut *f, value)?;
        f.write_all(b"\n")?;
        Ok(())
    })
}

/// Outcome of one (method, seed) job.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub method: Method,
    pub seed: u64,
    pub num_evaluations: usize,
    pub estimate: f64,
    pub mode: EstimateMode,
    pub ground_truth: Option<f64>,
    pub failures: Vec<DesignPoint>,
    pub most_likely_failure: Option<DesignPoint>,
    pub metrics: MetricReport,
}

struct JobOutput {
    summary: RunSummary,
    records: Vec<EvaluationRecord>,
    history_csv: Vec<u8>,
    surrogate: Option<GpSurrogate>,
}

fn traces_csv(history: &[EstimateTrace]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for h in history {
        w.serialize(h)?;
    }
    w.into_inner().map_err(|e| BsvError::Io(e.into_error()))
}

fn summary_from_bsv(setup: &Setup, method: Method, seed: u64, r: &BsvResult) -> Result<RunSummary> {
    Ok(RunSummary {
        problem: setup.name.clone(),
        method,
        seed,
        num_evaluations: r.records.len(),
        estimate: r.pfail_estimate,
        mode: r.mode,
        ground_truth: setup.truth.as_ref().map(|t| t.pfail),
        failures: r.failures.clone(),
        most_likely_failure: r.most_likely_failure.clone(),
        metrics: metric_report(&r.records, &setup.model, r.pfail_estimate, Some(&r.field), setup.truth_ref(), Some(&setup.grid))?,
    })
}

/// Runs one method under one seed.
pub fn run_job(setup: &Setup, config: &RunConfig, method: Method, seed: u64) -> Result<BsvJob> {
    let mut system = setup.system()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match method {
        Method::Bsv => {
            let r = run_bsv(system.as_mut(), &setup.model, &setup.grid, &config.bsv_config(), &mut rng)?;
            let mut hist = Vec::new();
            write_history_csv(&r.history, &mut hist)?;
            JobOutput {
                summary: summary_from_bsv(setup, method, seed, &r)?,
                history_csv: hist,
                surrogate: Some(r.surrogate.clone()),
                records: r.records,
            }
        }
        Method::Mc | Method::Pmc => {
            let r = if method == Method::Mc {
                mc_estimate(system.as_mut(), &setup.model, config.mc_budget(), &mut rng)?
            } else {
                pmc_estimate(system.as_mut(), &setup.model, &config.pmc, &mut rng)?
            };
            let failures = crate::bsv::falsification(&r.records);
            JobOutput {
                summary: RunSummary {
                    problem: setup.name.clone(),
                    method,
                    seed,
                    num_evaluations: r.records.len(),
                    estimate: r.estimate,
                    mode: config.mode,
                    ground_truth: setup.truth.as_ref().map(|t| t.pfail),
                    most_likely_failure: crate::bsv::most_likely_failure(&r.records, &setup.model),
                    failures,
                    metrics: metric_report(&r.records, &setup.model, r.estimate, None, setup.truth_ref(), Some(&setup.grid))?,
                },
                history_csv: traces_csv(&r.history)?,
                surrogate: None,
                records: r.records,
            }
        }
        _ => {
            let selector = method.selector().expect("selection method");
            let points = selector.select(setup.grid.space(), config.selection_budget(), &mut rng)?;
            let r = run_selection_baseline(system.as_mut(), &setup.model, &setup.grid, &points, &config.bsv_config())?;
            let mut hist = Vec::new();
            write_history_csv(&r.history, &mut hist)?;
            JobOutput {
                summary: summary_from_bsv(setup, method, seed, &r)?,
                history_csv: hist,
                surrogate: Some(r.surrogate.clone()),
                records: r.records,
            }
        }
    };
    system.reset()?;
    Ok(BsvJob(out))
}

/// Result of [`run_job`]; write it with [`BsvJob::write`].
pub struct BsvJob(JobOutput);

impl BsvJob {
    pub fn summary(&self) -> &RunSummary {
        &self.0.summary
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.0.records
    }

    /// Writes `result.json`, `records.csv`, `history.csv` and, for
    /// surrogate-based methods, `surrogate.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("result.json"), &self.0.summary)?;
        write_atomic(&dir.join("records.csv"), |f| write_records_csv(&self.0.records, f))?;
        write_atomic(&dir.join("history.csv"), |f| Ok(f.write_all(&self.0.history_csv)?))?;
        if let Some(gp) = &self.0.surrogate {
            write_json(&dir.join("surrogate.json"), &gp.snapshot())?;
        }
        Ok(())
    }
}

/// Runs `jobs` on `workers` threads; results come back in job order.
pub fn run_pool<J, T, F>(jobs: &[J], workers: usize, f: F) -> Vec<Result<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                *slots[i].lock().expect("slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot").expect("job ran"))
        .collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: String,
    config: &'a RunConfig,
    seeds: &'a [u64],
    code_version: &'static str,
    started_unix: u64,
    elapsed_seconds: f64,
    parameters: serde_json::Value,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_manifest(dir: &Path, command: &str, config: &RunConfig, started: u64, clock: Instant, parameters: serde_json::Value) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            command,
            config_hash: config.hash(),
            config,
            seeds: &config.seeds,
            code_version: env!("CARGO_PKG_VERSION"),
            started_unix: started,
            elapsed_seconds: clock.elapsed().as_secs_f64(),
            parameters,
        },
    )
}

#[derive(Serialize)]
struct MetricRow<'a> {
    method: &'a str,
    seed: u64,
    num_evaluations: usize,
    estimate: f64,
    ground_truth: Option<f64>,
    r_fail: f64,
    l_star: Option<f64>,
    delta_fail: Option<f64>,
    c_input: f64,
    c_output: Option<f64>,
}

fn metric_row(s: &RunSummary) -> MetricRow<'_> {
    MetricRow {
        method: s.method.as_str(),
        seed: s.seed,
        num_evaluations: s.num_evaluations,
        estimate: s.estimate,
        ground_truth: s.ground_truth,
        r_fail: s.metrics.r_fail,
        l_star: s.metrics.l_star,
        delta_fail: s.metrics.delta_fail,
        c_input: s.metrics.c_input,
        c_output: s.metrics.c_output,
    }
}

fn problem_dir(config: &RunConfig) -> PathBuf {
    config.output_dir.join(&config.problem)
}

/// `run`: one result set per seed for `config.method`, plus a `metrics.csv`
/// with one row per seed.
pub fn cmd_run(config: &RunConfig) -> Result<Vec<RunSummary>> {
    config.validate()?;
    let started = unix_now();
    let clock = Instant::now();
    let setup = Setup::new(config)?;
    let dir = problem_dir(config).join(config.method.as_str());
    let results = run_pool(&config.seeds, config.workers, |&seed| {
        let job = run_job(&setup, config, config.method, seed)?;
        job.write(&dir.join(format!("seed-{seed}")))?;
        Ok(job.0.summary)
    });
    let summaries = results.into_iter().collect::<Result<Vec<_>>>()?;
    write_atomic(&dir.join("metrics.csv"), |f| {
        let mut w = csv::Writer::from_writer(f);
        for s in &summaries {
            w.serialize(metric_row(s))?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_manifest(&dir, "run", config, started, clock, serde_json::json!({ "method": config.method }))?;
    Ok(summaries)
}

/// One row of the ablation table (medians over seeds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: String,
    pub r_fail: f64,
    pub l_star: Option<f64>,
    pub delta_fail: Option<f64>,
    pub c_input: f64,
    pub c_output: Option<f64>,
}

/// Median of the values, `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Iterations giving each active acquisition an equal share of `budget`.
pub fn ablation_iterations(budget: usize, subset: &AcquisitionSet) -> usize {
    budget / subset.len()
}

/// Per-seed ablation report: subset label, seed, metrics.
pub type AblationRun = (String, u64, MetricReport);

/// Runs every acquisition subset on the same seeds and budget. Returns the
/// per-subset medians and the per-seed reports.
pub fn run_ablation(setup: &Setup, config: &RunConfig) -> Result<(Vec<AblationRow>, Vec<AblationRun>)> {
    let subsets = AcquisitionSet::ablation_subsets();
    let jobs: Vec<(AcquisitionSet, u64)> = subsets
        .iter()
        .flat_map(|s| config.seeds.iter().map(move |&seed| (s.clone(), seed)))
        .collect();
    let results = run_pool(&jobs, config.workers, |(subset, seed)| {
        let mut bsv = config.bsv_config();
        bsv.iterations = ablation_iterations(config.ablation_budget, subset);
        bsv.acquisition.active = subset.clone();
        let mut system = setup.system()?;
        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
        let r = run_bsv(system.as_mut(), &setup.model, &setup.grid, &bsv, &mut rng)?;
        system.reset()?;
        metric_report(&r.records, &setup.model, r.pfail_estimate, Some(&r.field), setup.truth_ref(), Some(&setup.grid))
    });
    let mut runs = Vec::with_capacity(jobs.len());
    for ((subset, seed), r) in jobs.iter().zip(results) {
        runs.push((subset.label(), *seed, r?));
    }
    let rows = subsets
        .iter()
        .map(|s| {
            let label = s.label();
            let mine: Vec<&MetricReport> = runs.iter().filter(|(l, _, _)| *l == label).map(|(_, _, m)| m).collect();
            let col = |f: &dyn Fn(&MetricReport) -> Option<f64>| median(&mine.iter().filter_map(|m| f(m)).collect::<Vec<_>>());
            AblationRow {
                r_fail: col(&|m| Some(m.r_fail)).unwrap_or(0.0),
                l_star: col(&|m| m.l_star),
                delta_fail: col(&|m| m.delta_fail),
                c_input: col(&|m| Some(m.c_input)).unwrap_or(0.0),
                c_output: col(&|m| m.c_output),
                subset: label,
            }
        })
        .collect();
    Ok((rows, runs))
}

/// `ablation`: writes `ablation.csv` (seven rows of medians) and
/// `ablation_runs.csv` (one row per subset and seed).
pub fn cmd_ablation(config: &RunConfig) -> Result<Vec<AblationRow>> {
    config.validate()?;
    let started = unix_now();
    let clock = Instant::now();
    let setup = Setup::new(config)?;
    let (rows, runs) = run_ablation(&setup, config)?;
    let dir = problem_dir(config).join("ablation");
    write_atomic(&dir.join("ablation.csv"), |f| {
        let mut w = csv::Writer::from_writer(f);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_atomic(&dir.join("ablation_runs.csv"), |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["subset", "seed", "r_fail", "l_star", "delta_fail", "c_input", "c_output"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for (label, seed, m) in &runs {
            w.write_record([
                label.clone(),
                seed.to_string(),
                m.r_fail.to_string(),
                opt(m.l_star),
                opt(m.delta_fail),
                m.c_input.to_string(),
                opt(m.c_output),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_manifest(
        &dir,
        "ablation",
        config,
        started,
        clock,
        serde_json::json!({ "budget": config.ablation_budget }),
    )?;
    Ok(rows)
}

/// One point of a convergence curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub num_samples: usize,
    pub estimate: f64,
    pub relative_error: f64,
    pub smoothed: f64,
}

/// Sample counts at which the selection baselines are refit: multiples of
/// three, roughly log-spaced, ending at `budget`.
pub fn selection_schedule(budget: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = 3.0f64;
    while (n as usize) < budget {
        let k = ((n / 3.0).round() as usize).max(1) * 3;
        if out.last() != Some(&k) && k < budget {
            out.push(k);
        }
        n *= 1.4;
    }
    out.push(budget);
    out
}

/// Relative-error curve with exponential smoothing.
pub fn convergence_curve(series: &[(usize, f64)], p_true: f64) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::with_capacity(series.len());
    let mut s = None;
    for &(n, est) in series {
        let e = relative_error(p_true, est)?;
        let sm = match s {
            None => e,
            Some(prev) => (1.0 - COMPARE_SMOOTHING) * e + COMPARE_SMOOTHING * prev,
        };
        s = Some(sm);
        out.push(CurvePoint {
            num_samples: n,
            estimate: est,
            relative_error: e,
            smoothed: sm,
        });
    }
    Ok(out)
}

/// Estimate series of one method under one seed.
pub fn estimate_series(setup: &Setup, config: &RunConfig, method: Method, seed: u64) -> Result<Vec<(usize, f64)>> {
    let mut system = setup.system()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = match method {
        Method::Bsv => {
            let r = run_bsv(system.as_mut(), &setup.model, &setup.grid, &config.bsv_config(), &mut rng)?;
            r.history.iter().map(|h| (h.num_evaluations, h.estimate)).collect()
        }
        Method::Mc => mc_estimate(system.as_mut(), &setup.model, config.mc_budget(), &mut rng)?
            .history
            .iter()
            .map(|h| (h.num_samples, h.estimate))
            .collect(),
        Method::Pmc => pmc_estimate(system.as_mut(), &setup.model, &config.pmc, &mut rng)?
            .history
            .iter()
            .map(|h| (h.num_samples, h.estimate))
            .collect(),
        _ => {
            let selector = method.selector().expect("selection method");
            let mut out = Vec::new();
            for n in selection_schedule(config.selection_budget()) {
                let points = selector.select(setup.grid.space(), n, &mut rng)?;
                let r = run_selection_baseline(system.as_mut(), &setup.model, &setup.grid, &points, &config.bsv_config())?;
                out.push((n, r.pfail_estimate));
            }
            out
        }
    };
    system.reset()?;
    Ok(series)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub seed: u64,
    pub num_samples: usize,
    pub estimate: f64,
    pub relative_error: f64,
}

/// `compare`: one convergence CSV per method and seed, plus
/// `summary.csv` with the final relative error of each.
pub fn cmd_compare(config: &RunConfig) -> Result<Vec<CompareRow>> {
    config.validate()?;
    let started = unix_now();
    let clock = Instant::now();
    let setup = Setup::new(config)?;
    let p_true = match &setup.truth {
        Some(t) => t.pfail,
        None => {
            return Err(BsvError::InvalidParameter(format!(
                "problem `{}` has no ground truth to compare against",
                config.problem
            )))
        }
    };
    if p_true == 0.0 {
        return Err(BsvError::RelativeErrorUndefined);
    }
    let dir = problem_dir(config).join("compare");
    let jobs: Vec<(Method, u64)> = config
        .methods
        .iter()
        .flat_map(|&m| config.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results = run_pool(&jobs, config.workers, |&(method, seed)| {
        let curve = convergence_curve(&estimate_series(&setup, config, method, seed)?, p_true)?;
        write_atomic(&dir.join(format!("{method}-seed-{seed}.csv")), |f| {
            let mut w = csv::Writer::from_writer(f);
            for p in &curve {
                w.serialize(p)?;
            }
            w.flush()?;
            Ok(())
        })?;
        let last = curve.last().copied().ok_or(BsvError::EmptyRecords)?;
        Ok(CompareRow {
            method,
            seed,
            num_samples: last.num_samples,
            estimate: last.estimate,
            relative_error: last.relative_error,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    write_atomic(&dir.join("summary.csv"), |f| {
        let mut w = csv::Writer::from_writer(f);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_manifest(
        &dir,
        "compare",
        config,
        started,
        clock,
        serde_json::json!({ "smoothing": COMPARE_SMOOTHING, "ground_truth": p_true }),
    )?;
    Ok(rows)
}

/// `metrics`: recomputes the metric report from a records CSV. The
/// surrogate is refit on the records in file order, which reproduces the
/// main loop's final surrogate exactly.
pub fn cmd_metrics(config: &RunConfig, records_path: &Path) -> Result<MetricReport> {
    config.validate()?;
    let records = read_records_csv(fs::File::open(records_path)?)?;
    if records.is_empty() {
        return Err(BsvError::EmptyRecords);
    }
    let setup = Setup::new(config)?;
    if records.len() > METRICS_REFIT_LIMIT {
        let est = records.iter().map(|r| r.y).sum::<f64>() / records.len() as f64;
        return metric_report(&records, &setup.model, est, None, setup.truth_ref(), Some(&setup.grid));
    }
    let xs: Vec<DesignPoint> = records.iter().map(|r| r.x.clone()).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.y).collect();
    let gp = GpSurrogate::fit(&xs, &ys, config.kernel, LinkParams::default(), DEFAULT_JITTER)?;
    let field = SurrogateField::mean_only(&gp, &setup.grid);
    let est = estimate_pfail(&field, &setup.grid, config.mode)?;
    metric_report(&records, &setup.model, est, Some(&field), setup.truth_ref(), Some(&setup.grid))
}
