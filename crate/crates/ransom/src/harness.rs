//! Builds problems from configs, runs optimizers over seeds in a worker
//! pool, and writes per-run CSVs plus a JSON summary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ransom_core::problems::{MatrixCompletionProblem, MlpWelschProblem, QuadraticProblem};
use ransom_core::rng::RngState;
use ransom_core::{Consumer, Optimizer, OptimizerConfig, StepSchedule, StochasticOracle};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{oracle_noise, ClassificationData, ProblemSpec, RatingsData, RunConfig, TheorySpec};
use crate::data;
use crate::error::{HarnessError, Result};
use crate::metrics::{self, mean_std, MeanStd, MetricsRow, SlopeFit};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "RANSOM_THREADS";

pub struct BuiltProblem {
    pub oracle: Box<dyn StochasticOracle>,
    /// Where the data came from, e.g. `libsvm:/data/splice` or `synthetic-splice`.
    pub source: String,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| HarnessError::io(path, e))
}

pub fn build_problem(spec: &ProblemSpec) -> Result<BuiltProblem> {
    match spec {
        ProblemSpec::Quadratic { dim, mu, l, problem_seed, gradient_noise, hvp_noise } => {
            let noise = oracle_noise(gradient_noise, hvp_noise)?;
            let mut rng = RngState::new(*problem_seed).split(Consumer::Data).rng();
            let q = QuadraticProblem::random(*dim, *mu, *l, noise, &mut rng)?;
            Ok(BuiltProblem { oracle: Box::new(q), source: "quadratic".into() })
        }
        ProblemSpec::Mlp { data, sizes, lambda } => {
            let (train, test, source) = match data {
                ClassificationData::Libsvm { train, test, n_features, split_seed } => {
                    let full = data::parse_libsvm(open(train)?, *n_features)?;
                    let width = Some(full.n_features);
                    match test {
                        Some(test_path) => {
                            let t = data::parse_libsvm(open(test_path)?, width)?;
                            (full, Some(t), format!("libsvm:{}", train.display()))
                        }
                        None => {
                            let (tr, te) = data::split_indices(full.n_samples, 0.2, *split_seed)?;
                            (full.select(&tr), Some(full.select(&te)), format!("libsvm-split:{}", train.display()))
                        }
                    }
                }
                ClassificationData::SyntheticSplice { n_train, n_test, flip, data_seed } => {
                    let root = RngState::new(*data_seed).split(Consumer::Data);
                    let train = data::synthetic_splice(*n_train, *flip, &mut root.fork(0).rng());
                    let test = data::synthetic_splice(*n_test, *flip, &mut root.fork(1).rng());
                    (train, Some(test), "synthetic-splice".into())
                }
            };
            if train.is_empty() {
                return Err(HarnessError::config("training set is empty"));
            }
            let p = MlpWelschProblem::new(sizes.clone(), *lambda, train, test)?;
            Ok(BuiltProblem { oracle: Box::new(p), source })
        }
        ProblemSpec::Completion { data, test_fraction, split_seed } => {
            let (rows, cols, ratings, source) = match data {
                RatingsData::Movielens { path, top_users, top_items } => {
                    let table = data::parse_movielens(open(path)?, *top_users, *top_items)?;
                    let (r, c) = table.shape();
                    (r, c, table.ratings(), format!("movielens:{}", path.display()))
                }
                RatingsData::SyntheticLowRank { rows, cols, rank, noise_sigma, density, data_seed } => {
                    let mut rng = RngState::new(*data_seed).split(Consumer::Data).rng();
                    let m = data::synth_lowrank(*rows, *cols, *rank, *noise_sigma, *density, &mut rng)?;
                    (*rows, *cols, m.observed(), "synthetic-lowrank".into())
                }
            };
            let (tr, te) = data::split_indices(ratings.len(), *test_fraction, *split_seed)?;
            if tr.is_empty() {
                return Err(HarnessError::config("no training ratings"));
            }
            let train = tr.iter().map(|&i| ratings[i]).collect();
            let test = te.iter().map(|&i| ratings[i]).collect();
            let p = MatrixCompletionProblem::centered(rows, cols, train, test);
            Ok(BuiltProblem { oracle: Box::new(p), source })
        }
    }
}

/// Everything needed to execute one (optimizer, seed) run.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub label: String,
    pub config: OptimizerConfig,
    pub seed: u64,
    pub steps: u64,
    pub eval_every: u64,
    pub diagnostics: bool,
    pub timing: bool,
}

impl RunPlan {
    pub fn run_id(&self) -> String {
        run_id(&self.label, self.seed)
    }
}

pub fn run_id(label: &str, seed: u64) -> String {
    format!("{label}-seed{seed}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub label: String,
    pub run_id: String,
    pub seed: u64,
    pub steps: u64,
    pub rows: Vec<MetricsRow>,
    /// Set when a step failed; the last row is then a diagnostic row of NaNs.
    pub abort: Option<String>,
}

fn eval_row<P: StochasticOracle + ?Sized>(
    opt: &Optimizer<'_, P>,
    plan: &RunPlan,
    started: Instant,
    s_w: Option<(f64, f64)>,
) -> ransom_core::Result<MetricsRow> {
    let ev = opt.evaluate(plan.diagnostics)?;
    let w = match (plan.config.method.is_stein(), s_w) {
        (true, Some((_, w))) => Some(w),
        _ => None,
    };
    Ok(MetricsRow {
        run_id: plan.run_id(),
        seed: plan.seed,
        t: opt.state().t,
        wall_ms: if plan.timing { started.elapsed().as_millis() as u64 } else { 0 },
        train_loss: ev.train_loss,
        stationarity: ev.stationarity,
        test_metric: ev.test_metric,
        momentum_error: ev.momentum_error,
        s_t: s_w.map(|p| p.0),
        w_t: w,
    })
}

fn abort_row(plan: &RunPlan, t: u64, started: Instant) -> MetricsRow {
    MetricsRow {
        run_id: plan.run_id(),
        seed: plan.seed,
        t,
        wall_ms: if plan.timing { started.elapsed().as_millis() as u64 } else { 0 },
        train_loss: f64::NAN,
        stationarity: f64::NAN,
        test_metric: None,
        momentum_error: None,
        s_t: None,
        w_t: None,
    }
}

/// Execute one run. Rows are written at `t = 0`, every `eval_every` steps,
/// and at the final step.
pub fn run_single(problem: &dyn StochasticOracle, plan: &RunPlan) -> RunOutcome {
    let started = Instant::now();
    let mut outcome = RunOutcome {
        label: plan.label.clone(),
        run_id: plan.run_id(),
        seed: plan.seed,
        steps: plan.steps,
        rows: Vec::new(),
        abort: None,
    };
    let fail = |outcome: &mut RunOutcome, t: u64, e: ransom_core::Error| {
        outcome.rows.push(abort_row(plan, t, started));
        outcome.abort = Some(e.to_string());
    };
    let mut opt = match Optimizer::new(problem, plan.config.clone(), plan.seed) {
        Ok(o) => o,
        Err(e) => {
            fail(&mut outcome, 0, e);
            return outcome;
        }
    };
    match eval_row(&opt, plan, started, None) {
        Ok(r) => outcome.rows.push(r),
        Err(e) => {
            fail(&mut outcome, 0, e);
            return outcome;
        }
    }
    for t in 1..=plan.steps {
        let rec = match opt.step() {
            Ok(rec) => rec,
            Err(e) => {
                fail(&mut outcome, t, e);
                return outcome;
            }
        };
        if t % plan.eval_every == 0 || t == plan.steps {
            match eval_row(&opt, plan, started, Some((rec.s, rec.w))) {
                Ok(r) => outcome.rows.push(r),
                Err(e) => {
                    fail(&mut outcome, t, e);
                    return outcome;
                }
            }
        }
    }
    outcome
}

/// Steps for one optimizer: `steps`, or `ceil(epochs · n / B)`.
pub fn horizon(cfg: &RunConfig, batch_size: usize, dataset_size: Option<usize>) -> Result<u64> {
    match (cfg.steps, cfg.epochs) {
        (Some(t), _) => Ok(t),
        (None, Some(epochs)) => {
            let n = dataset_size.ok_or_else(|| HarnessError::config("epochs need a finite training set"))?;
            Ok(((epochs * n as f64) / batch_size as f64).ceil().max(1.0) as u64)
        }
        (None, None) => Err(HarnessError::config("set steps or epochs")),
    }
}

fn apply_theory(cfg: &mut OptimizerConfig, theory: &TheorySpec, steps: u64) -> Result<()> {
    let (eta, beta) = theory.schedule(steps)?;
    cfg.eta = StepSchedule::Constant(eta);
    cfg.beta = beta;
    cfg.validate()?;
    Ok(())
}

pub fn plan_runs(cfg: &RunConfig, problem: &dyn StochasticOracle) -> Result<Vec<RunPlan>> {
    let mut plans = Vec::new();
    for spec in &cfg.optimizers {
        let mut oc = spec.to_config()?;
        let steps = horizon(cfg, oc.batch_size, problem.dataset_size())?;
        if let Some(theory) = &cfg.theory_schedule {
            apply_theory(&mut oc, theory, steps)?;
        }
        for &seed in &cfg.seeds {
            plans.push(RunPlan {
                label: spec.label().to_string(),
                config: oc.clone(),
                seed,
                steps,
                eval_every: cfg.eval_every,
                diagnostics: cfg.diagnostics,
                timing: cfg.timing,
            });
        }
    }
    Ok(plans)
}

/// Worker pool sized by [`THREADS_ENV`] when set, else rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| HarnessError::config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| HarnessError::config(e.to_string()))
}

/// Runs all plans concurrently; results come back in plan order.
pub fn execute(problem: &dyn StochasticOracle, plans: &[RunPlan]) -> Result<Vec<RunOutcome>> {
    let pool = thread_pool()?;
    Ok(pool.install(|| plans.par_iter().map(|p| run_single(problem, p)).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub csv: Option<String>,
    pub final_t: u64,
    pub final_train_loss: Option<f64>,
    pub final_stationarity: Option<f64>,
    pub final_test_metric: Option<f64>,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerSummary {
    pub method: String,
    pub steps: u64,
    pub n_runs: usize,
    pub aborted_runs: usize,
    /// Over completed runs only.
    pub final_test_metric: Option<MeanStd>,
    pub final_train_loss: Option<MeanStd>,
    pub final_stationarity: Option<MeanStd>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema: &'static str,
    pub name: Option<String>,
    pub data_source: String,
    pub seeds: Vec<u64>,
    pub annotations: BTreeMap<String, f64>,
    pub optimizers: BTreeMap<String, OptimizerSummary>,
}

impl Summary {
    pub fn any_aborted(&self) -> bool {
        self.optimizers.values().any(|o| o.aborted_runs > 0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub fn csv_name(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}.csv")
}

/// Pure reduction of run outcomes; recomputing it from the CSV files gives
/// the same result.
pub fn summarize(cfg: &RunConfig, source: &str, outcomes: &[RunOutcome]) -> Summary {
    let mut optimizers = BTreeMap::new();
    for spec in &cfg.optimizers {
        let label = spec.label();
        let runs: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.label == label).collect();
        let run_summaries: Vec<RunSummary> = runs
            .iter()
            .map(|o| {
                let last = o.rows.last().filter(|_| o.abort.is_none());
                RunSummary {
                    run_id: o.run_id.clone(),
                    seed: o.seed,
                    csv: Some(csv_name(label, o.seed)),
                    final_t: o.rows.last().map(|r| r.t).unwrap_or(0),
                    final_train_loss: last.map(|r| r.train_loss),
                    final_stationarity: last.map(|r| r.stationarity),
                    final_test_metric: last.and_then(|r| r.test_metric),
                    aborted: o.abort.clone(),
                }
            })
            .collect();
        let collect = |f: fn(&RunSummary) -> Option<f64>| -> Vec<f64> { run_summaries.iter().filter_map(f).collect() };
        let summary = OptimizerSummary {
            method: spec.method.clone(),
            steps: runs.first().map(|o| o.steps).unwrap_or(0),
            n_runs: runs.len(),
            aborted_runs: runs.iter().filter(|o| o.abort.is_some()).count(),
            final_test_metric: mean_std(&collect(|r| r.final_test_metric)),
            final_train_loss: mean_std(&collect(|r| r.final_train_loss)),
            final_stationarity: mean_std(&collect(|r| r.final_stationarity)),
            runs: run_summaries,
        };
        optimizers.insert(label.to_string(), summary);
    }
    Summary {
        schema: "ransom-summary v1",
        name: cfg.name.clone(),
        data_source: source.to_string(),
        seeds: cfg.seeds.clone(),
        annotations: cfg.annotations.clone(),
        optimizers,
    }
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub outcomes: Vec<RunOutcome>,
    pub summary: Summary,
    pub csv_paths: Vec<PathBuf>,
    pub output_dir: PathBuf,
}

/// Build, run, and write `<label>_seed<seed>.csv` files plus `summary.json`
/// and the effective `config.json` into `cfg.output_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let built = build_problem(&cfg.problem)?;
    let plans = plan_runs(cfg, built.oracle.as_ref())?;
    let outcomes = execute(built.oracle.as_ref(), &plans)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut csv_paths = Vec::new();
    for o in &outcomes {
        let path = dir.join(csv_name(&o.label, o.seed));
        metrics::write_metrics_file(&path, &o.rows)?;
        csv_paths.push(path);
    }
    let summary = summarize(cfg, &built.source, &outcomes);
    write_text(&dir.join("summary.json"), &summary.to_json())?;
    write_text(&dir.join("config.json"), &cfg.to_json())?;
    Ok(ExperimentReport { outcomes, summary, csv_paths, output_dir: dir.clone() })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, format!("{text}\n")).map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEntry {
    /// `(T, mean over seeds of the tail-average stationarity)`.
    pub points: Vec<(f64, f64)>,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub horizons: Vec<u64>,
    pub burn_in: f64,
    pub labels: BTreeMap<String, RateEntry>,
    pub aborted_runs: usize,
}

/// Run the config once per horizon (under `output_dir/T<horizon>`) and fit
/// the log-log slope of tail-averaged stationarity against the horizon for
/// each optimizer. About `eval_points` evaluations are recorded per run.
pub fn rate_suite(cfg: &RunConfig, horizons: &[u64], burn_in: f64, eval_points: u64) -> Result<RateReport> {
    let mut per_label: BTreeMap<String, Vec<Vec<MetricsRow>>> = BTreeMap::new();
    let mut aborted_runs = 0;
    for &t in horizons {
        let mut c = cfg.clone();
        c.steps = Some(t);
        c.epochs = None;
        c.eval_every = (t / eval_points.max(1)).max(1);
        c.output_dir = cfg.output_dir.join(format!("T{t}"));
        let report = run_experiment(&c)?;
        for o in report.outcomes {
            if o.abort.is_some() {
                aborted_runs += 1;
                continue;
            }
            per_label.entry(o.label).or_default().push(o.rows);
        }
    }
    let mut labels = BTreeMap::new();
    for (label, runs) in per_label {
        let (points, fit) = metrics::fit_rate_slope_runs(&runs, burn_in)?;
        labels.insert(label, RateEntry { points, fit });
    }
    let report = RateReport { horizons: horizons.to_vec(), burn_in, labels, aborted_runs };
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
    write_text(&cfg.output_dir.join("rate.json"), &serde_json::to_string_pretty(&report).expect("serializes"))?;
    Ok(report)
}
