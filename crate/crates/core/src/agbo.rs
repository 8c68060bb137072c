//! The optimization loop.
//!
//! `N` uniform random points seed the dataset. Each iteration then refits
//! the GP on everything evaluated so far, evolves a candidate pool from the
//! elite of the dataset, scores the pool with the acquisition function and
//! evaluates only the pool's argmax. The best evaluated point is returned.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::{evolve_candidates, EvolutionError, GaParams};
use crate::objectives::Benchmark;
use crate::space::{sample_uniform, Candidate, SearchSpace, SpaceError};
use crate::surrogate::{
    gp_fit, select_lengthscale, AcquisitionSpec, GpError, GpModel, KernelSpec, LENGTHSCALE_GRID,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("point outside objective domain: {0}")]
    OutOfDomain(String),
    #[error("objective returned a non-finite value {0}")]
    NonFinite(f64),
    #[error("objective failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Concurrency {
    #[default]
    Serial,
    ParallelSafe,
}

/// A black-box function to maximize. `evaluate` receives the numeric view of
/// a candidate (see [`SearchSpace::decode`]) and must be deterministic.
pub trait Objective {
    fn name(&self) -> &str;
    fn arity(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<f64, ObjectiveError>;
    fn concurrency(&self) -> Concurrency {
        Concurrency::Serial
    }
}

/// Adapts a closure into an [`Objective`].
pub struct FnObjective<F> {
    name: String,
    arity: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Result<f64, ObjectiveError>> FnObjective<F> {
    pub fn new(name: &str, arity: usize, f: F) -> Self {
        Self {
            name: name.to_string(),
            arity,
            f,
        }
    }
}

impl<F: Fn(&[f64]) -> Result<f64, ObjectiveError>> Objective for FnObjective<F> {
    fn name(&self) -> &str {
        &self.name
    }
    fn arity(&self) -> usize {
        self.arity
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        (self.f)(x)
    }
}

fn default_init_points() -> usize {
    10
}

fn default_iterations() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgboConfig {
    pub space: SearchSpace,
    #[serde(default = "default_init_points")]
    pub init_points: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub ga: GaParams,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub acquisition: AcquisitionSpec,
    pub seed: u64,
    /// Stop after this many consecutive iterations without improvement.
    #[serde(default)]
    pub patience: Option<usize>,
    /// Pick the lengthscale from [`LENGTHSCALE_GRID`] by marginal likelihood
    /// at every refit.
    #[serde(default)]
    pub refine_lengthscale: bool,
}

impl AgboConfig {
    pub fn new(space: SearchSpace, seed: u64) -> Self {
        Self {
            space,
            init_points: default_init_points(),
            iterations: default_iterations(),
            ga: GaParams::default(),
            kernel: KernelSpec::default(),
            acquisition: AcquisitionSpec::default(),
            seed,
            patience: None,
            refine_lengthscale: false,
        }
    }
}

/// One evaluated point. `iter` below `init_points` marks the random phase,
/// where `acq` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub iter: usize,
    pub candidate: Candidate,
    pub fitness: f64,
    pub best_so_far: f64,
    pub acq_value: Option<f64>,
    /// Wall time of the objective call; only recorded on request so that
    /// histories stay reproducible byte for byte.
    pub elapsed_ms: Option<f64>,
}

/// Receives each record as soon as it is evaluated.
pub trait HistorySink {
    fn append(&mut self, space: &SearchSpace, rec: &HistoryRecord) -> std::io::Result<()>;
}

impl HistorySink for Vec<HistoryRecord> {
    fn append(&mut self, _space: &SearchSpace, rec: &HistoryRecord) -> std::io::Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// Discards records.
pub struct NullSink;

impl HistorySink for NullSink {
    fn append(&mut self, _: &SearchSpace, _: &HistoryRecord) -> std::io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgboError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("objective arity {objective} does not match search space dimension {space}")]
    ArityMismatch { objective: usize, space: usize },
    #[error("objective evaluation failed after {} records: {source}", history.len())]
    Objective {
        source: ObjectiveError,
        history: Vec<HistoryRecord>,
    },
    #[error("surrogate failed after {} records: {source}", history.len())]
    Surrogate {
        source: GpError,
        history: Vec<HistoryRecord>,
    },
    #[error("history sink failed: {0}")]
    Sink(#[from] std::io::Error),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

impl AgboError {
    /// Records evaluated before the failure, when the run got that far.
    pub fn partial_history(&self) -> Option<&[HistoryRecord]> {
        match self {
            AgboError::Objective { history, .. } | AgboError::Surrogate { history, .. } => {
                Some(history)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub best: (Candidate, f64),
    pub history: Vec<HistoryRecord>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub record_timing: bool,
}

/// Where each iteration's candidate pool comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolSource {
    Genetic,
    /// Uniform samples, i.e. plain BO with a random acquisition optimizer.
    Uniform,
}

/// Phase streams split from the master seed.
pub(crate) mod stream {
    pub const INIT: u64 = 0;
    pub const GA: u64 = 1;
    pub const ACQUISITION: u64 = 2;
}

pub(crate) fn phase_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn validate_config(cfg: &AgboConfig) -> Result<(), AgboError> {
    cfg.space.validate()?;
    if cfg.init_points < 1 {
        return Err(AgboError::Config("init_points must be >= 1".into()));
    }
    cfg.kernel
        .validate()
        .map_err(|e| AgboError::Config(e.to_string()))?;
    Ok(())
}

pub fn agbo_run(cfg: &AgboConfig, obj: &dyn Objective) -> Result<RunOutcome, AgboError> {
    agbo_run_with(cfg, obj, &mut NullSink, RunOptions::default())
}

pub fn agbo_run_with(
    cfg: &AgboConfig,
    obj: &dyn Objective,
    sink: &mut dyn HistorySink,
    opts: RunOptions,
) -> Result<RunOutcome, AgboError> {
    run_loop(cfg, obj, sink, opts, PoolSource::Genetic)
}

/// Evaluation bookkeeping shared by the optimizers in this crate.
pub(crate) struct Evaluator<'a> {
    space: &'a SearchSpace,
    obj: &'a dyn Objective,
    sink: &'a mut dyn HistorySink,
    opts: RunOptions,
    pub records: Vec<HistoryRecord>,
    pub data: Vec<(Candidate, f64)>,
    pub best: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        space: &'a SearchSpace,
        obj: &'a dyn Objective,
        sink: &'a mut dyn HistorySink,
        opts: RunOptions,
    ) -> Result<Self, AgboError> {
        if obj.arity() != space.len() {
            return Err(AgboError::ArityMismatch {
                objective: obj.arity(),
                space: space.len(),
            });
        }
        Ok(Self {
            space,
            obj,
            sink,
            opts,
            records: Vec::new(),
            data: Vec::new(),
            best: f64::NEG_INFINITY,
        })
    }

    pub fn evaluate(&mut self, c: Candidate, acq: Option<f64>) -> Result<f64, AgboError> {
        self.space.check(&c)?;
        let start = self.opts.record_timing.then(Instant::now);
        let result = self.obj.evaluate(&self.space.decode(&c)).and_then(|f| {
            if f.is_finite() {
                Ok(f)
            } else {
                Err(ObjectiveError::NonFinite(f))
            }
        });
        let elapsed_ms = start.map(|s| s.elapsed().as_secs_f64() * 1e3);
        let f = match result {
            Ok(f) => f,
            Err(source) => {
                return Err(AgboError::Objective {
                    source,
                    history: std::mem::take(&mut self.records),
                })
            }
        };
        if f > self.best {
            self.best = f;
        }
        let rec = HistoryRecord {
            iter: self.records.len(),
            candidate: c.clone(),
            fitness: f,
            best_so_far: self.best,
            acq_value: acq,
            elapsed_ms,
        };
        self.sink.append(self.space, &rec)?;
        self.records.push(rec);
        self.data.push((c, f));
        Ok(f)
    }
}

fn fit_surrogate(cfg: &AgboConfig, data: &[(Candidate, f64)]) -> Result<GpModel, GpError> {
    let x: Vec<Vec<f64>> = data.iter().map(|(c, _)| cfg.space.normalize(c)).collect();
    let y: Vec<f64> = data.iter().map(|(_, f)| *f).collect();
    if cfg.refine_lengthscale {
        select_lengthscale(&x, &y, &cfg.kernel, &LENGTHSCALE_GRID)
    } else {
        gp_fit(&x, &y, &cfg.kernel)
    }
}

/// Index and score of the best-scoring pool member (first on ties).
fn pick_by_acquisition(
    cfg: &AgboConfig,
    model: &GpModel,
    pool: &[Candidate],
    f_best: f64,
) -> Result<(usize, f64), GpError> {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in pool.iter().enumerate() {
        let (mu, var) = model.predict(&cfg.space.normalize(c))?;
        let a = cfg.acquisition.score(mu, var, f_best);
        if a > best.1 {
            best = (i, a);
        }
    }
    Ok(best)
}

pub(crate) fn run_loop(
    cfg: &AgboConfig,
    obj: &dyn Objective,
    sink: &mut dyn HistorySink,
    opts: RunOptions,
    source: PoolSource,
) -> Result<RunOutcome, AgboError> {
    validate_config(cfg)?;
    let mut ev = Evaluator::new(&cfg.space, obj, sink, opts)?;
    let mut init_rng = phase_rng(cfg.seed, stream::INIT);
    let mut ga_rng = phase_rng(cfg.seed, stream::GA);
    let mut pool_rng = phase_rng(cfg.seed, stream::ACQUISITION);

    for _ in 0..cfg.init_points {
        let c = sample_uniform(&cfg.space, &mut init_rng);
        ev.evaluate(c, None)?;
    }

    let mut stale = 0usize;
    for _ in 0..cfg.iterations {
        let model = match fit_surrogate(cfg, &ev.data) {
            Ok(m) => m,
            Err(source) => {
                return Err(AgboError::Surrogate {
                    source,
                    history: std::mem::take(&mut ev.records),
                })
            }
        };
        let pool = match source {
            PoolSource::Genetic => evolve_candidates(&cfg.space, &ev.data, &cfg.ga, &mut ga_rng)?,
            PoolSource::Uniform => (0..cfg.ga.pool_size.max(1))
                .map(|_| sample_uniform(&cfg.space, &mut pool_rng))
                .collect(),
        };
        let f_best = ev.best;
        let (idx, acq) = match pick_by_acquisition(cfg, &model, &pool, f_best) {
            Ok(p) => p,
            Err(source) => {
                return Err(AgboError::Surrogate {
                    source,
                    history: std::mem::take(&mut ev.records),
                })
            }
        };
        let chosen = pool.into_iter().nth(idx).expect("nonempty pool");
        ev.evaluate(chosen, Some(acq))?;

        if ev.best > f_best {
            stale = 0;
        } else {
            stale += 1;
        }
        if cfg.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }

    let best = best_of_history(&ev.records).expect("at least one record");
    Ok(RunOutcome {
        best,
        history: ev.records,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("empty history")]
pub struct EmptyHistory;

/// Fittest record, earliest on ties.
pub fn best_of_history(history: &[HistoryRecord]) -> Result<(Candidate, f64), EmptyHistory> {
    let mut best: Option<&HistoryRecord> = None;
    for r in history {
        if best.is_none_or(|b| r.fitness > b.fitness) {
            best = Some(r);
        }
    }
    best.map(|r| (r.candidate.clone(), r.fitness))
        .ok_or(EmptyHistory)
}

/// Optimizers compared by [`compare_methods`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Agbo,
    Random,
    GaOnly,
    BoOnly,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Agbo, Method::Random, Method::GaOnly, Method::BoOnly];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Agbo => "agbo",
            Method::Random => "random",
            Method::GaOnly => "ga-only",
            Method::BoOnly => "bo-only",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                format!("unknown method '{s}' (expected agbo, random, ga-only or bo-only)")
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub objective: String,
    pub method: Method,
    pub seed: u64,
    pub best: f64,
    pub evaluations: usize,
}

/// Runs `method` on `bench` with `budget` evaluations, the first
/// `cfg.init_points` of which are the same uniform draws for every method.
pub fn run_method(
    method: Method,
    bench: &Benchmark,
    cfg: &AgboConfig,
    budget: usize,
) -> Result<RunOutcome, AgboError> {
    if budget < cfg.init_points {
        return Err(AgboError::Config(format!(
            "budget {budget} is smaller than init_points {}",
            cfg.init_points
        )));
    }
    let mut cfg = cfg.clone();
    cfg.iterations = budget - cfg.init_points;
    cfg.patience = None;
    let mut sink = NullSink;
    let opts = RunOptions::default();
    match method {
        Method::Agbo => run_loop(&cfg, bench, &mut sink, opts, PoolSource::Genetic),
        Method::BoOnly => run_loop(&cfg, bench, &mut sink, opts, PoolSource::Uniform),
        Method::Random => {
            validate_config(&cfg)?;
            let mut ev = Evaluator::new(&cfg.space, bench, &mut sink, opts)?;
            let mut rng = phase_rng(cfg.seed, stream::INIT);
            for _ in 0..budget {
                let c = sample_uniform(&cfg.space, &mut rng);
                ev.evaluate(c, None)?;
            }
            finish(ev.records)
        }
        Method::GaOnly => {
            validate_config(&cfg)?;
            let mut ev = Evaluator::new(&cfg.space, bench, &mut sink, opts)?;
            let mut init_rng = phase_rng(cfg.seed, stream::INIT);
            let mut ga_rng = phase_rng(cfg.seed, stream::GA);
            for _ in 0..cfg.init_points {
                let c = sample_uniform(&cfg.space, &mut init_rng);
                ev.evaluate(c, None)?;
            }
            // Generations are as large as the initial population; the last
            // one is truncated to the remaining budget.
            let ga = GaParams {
                pool_size: cfg.init_points,
                ..cfg.ga
            };
            while ev.records.len() < budget {
                let offspring = evolve_candidates(&cfg.space, &ev.data, &ga, &mut ga_rng)?;
                let room = budget - ev.records.len();
                for c in offspring.into_iter().take(room) {
                    ev.evaluate(c, None)?;
                }
            }
            finish(ev.records)
        }
    }
}

fn finish(history: Vec<HistoryRecord>) -> Result<RunOutcome, AgboError> {
    let best = best_of_history(&history).expect("at least one record");
    Ok(RunOutcome { best, history })
}

/// One row per (objective, method, seed), in that nesting order. Every
/// method spends exactly `budget` evaluations.
pub fn compare_methods(
    objectives: &[Benchmark],
    methods: &[Method],
    seeds: &[u64],
    budget: usize,
) -> Result<Vec<ComparisonRow>, AgboError> {
    let mut rows = Vec::with_capacity(objectives.len() * methods.len() * seeds.len());
    for bench in objectives {
        for &method in methods {
            for &seed in seeds {
                let cfg = AgboConfig::new(bench.space(), seed);
                let out = run_method(method, bench, &cfg, budget)?;
                rows.push(ComparisonRow {
                    objective: bench.name().to_string(),
                    method,
                    seed,
                    best: out.best.1,
                    evaluations: out.history.len(),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Gene;
    use rand::Rng;

    fn sphere_cfg(seed: u64) -> AgboConfig {
        AgboConfig::new(SearchSpace::uniform_box(3, -5.0, 5.0).unwrap(), seed)
    }

    #[test]
    fn zero_iterations_returns_best_initial_point() {
        let mut cfg = sphere_cfg(3);
        cfg.iterations = 0;
        let sphere = Benchmark::Sphere { dims: 3 };
        let out = agbo_run(&cfg, &sphere).unwrap();
        assert_eq!(out.history.len(), cfg.init_points);
        let max = out
            .history
            .iter()
            .map(|r| r.fitness)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best.1, max);
        assert!(out.history.iter().all(|r| r.acq_value.is_none()));
    }

    #[test]
    fn same_seed_same_history() {
        let mut cfg = sphere_cfg(11);
        cfg.iterations = 8;
        let sphere = Benchmark::Sphere { dims: 3 };
        let a = agbo_run(&cfg, &sphere).unwrap();
        let b = agbo_run(&cfg, &sphere).unwrap();
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn one_evaluation_per_iteration_and_monotone_best() {
        let mut cfg = sphere_cfg(5);
        cfg.iterations = 12;
        let out = agbo_run(&cfg, &Benchmark::Sphere { dims: 3 }).unwrap();
        assert_eq!(out.history.len(), cfg.init_points + cfg.iterations);
        for (i, r) in out.history.iter().enumerate() {
            assert_eq!(r.iter, i);
            assert_eq!(r.acq_value.is_some(), i >= cfg.init_points);
            assert!(cfg.space.contains(&r.candidate));
            assert!(r.elapsed_ms.is_none());
        }
        for w in out.history.windows(2) {
            assert!(w[1].best_so_far >= w[0].best_so_far);
        }
    }

    #[test]
    fn patience_stops_early() {
        let mut cfg = sphere_cfg(5);
        cfg.patience = Some(1);
        let flat = FnObjective::new("flat", 3, |_| Ok(1.0));
        let out = agbo_run(&cfg, &flat).unwrap();
        assert_eq!(out.history.len(), cfg.init_points + 1);
    }

    #[test]
    fn arity_mismatch_rejected() {
        let cfg = sphere_cfg(1);
        let err = agbo_run(&cfg, &Benchmark::Branin).unwrap_err();
        assert!(matches!(
            err,
            AgboError::ArityMismatch {
                objective: 2,
                space: 3
            }
        ));
    }

    #[test]
    fn failure_keeps_partial_history() {
        let cfg = sphere_cfg(2);
        let calls = std::cell::Cell::new(0);
        let flaky = FnObjective::new("flaky", 3, |x: &[f64]| {
            calls.set(calls.get() + 1);
            if calls.get() > 12 {
                Err(ObjectiveError::Failed("boom".into()))
            } else {
                Ok(-x[0].abs())
            }
        });
        let mut sink: Vec<HistoryRecord> = Vec::new();
        let err = agbo_run_with(&cfg, &flaky, &mut sink, RunOptions::default()).unwrap_err();
        assert_eq!(err.partial_history().unwrap().len(), 12);
        assert_eq!(sink.len(), 12);

        let nan = FnObjective::new("nan", 3, |_| Ok(f64::NAN));
        assert!(matches!(
            agbo_run(&cfg, &nan).unwrap_err(),
            AgboError::Objective {
                source: ObjectiveError::NonFinite(_),
                ..
            }
        ));
    }

    #[test]
    fn best_of_history_rules() {
        assert_eq!(best_of_history(&[]), Err(EmptyHistory));
        let rec = |i: usize, f: f64| HistoryRecord {
            iter: i,
            candidate: Candidate::new(vec![Gene::Real(i as f64)]),
            fitness: f,
            best_so_far: f,
            acq_value: None,
            elapsed_ms: None,
        };
        let one = [rec(0, 3.0)];
        assert_eq!(best_of_history(&one).unwrap().1, 3.0);
        let tie = [rec(0, 1.0), rec(1, 1.0)];
        assert_eq!(best_of_history(&tie).unwrap().0, tie[0].candidate);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h: Vec<_> = (0..100)
            .map(|i| rec(i, rng.random_range(-5.0..5.0)))
            .collect();
        let mut oracle = 0;
        for i in 1..h.len() {
            if h[i].fitness > h[oracle].fitness {
                oracle = i;
            }
        }
        assert_eq!(best_of_history(&h).unwrap().0, h[oracle].candidate);
    }

    #[test]
    fn config_defaults() {
        let cfg: AgboConfig =
            serde_json::from_str(r#"{"space":[{"type":"continuous","lo":0,"hi":1}],"seed":4}"#)
                .unwrap();
        assert_eq!((cfg.init_points, cfg.iterations), (10, 50));
        assert_eq!(cfg.ga, GaParams::default());
        assert_eq!(cfg.kernel, KernelSpec::default());
        assert!(cfg.patience.is_none());
    }

    #[test]
    fn comparison_shape_and_budget() {
        let rows = compare_methods(
            &[Benchmark::Sphere { dims: 2 }, Benchmark::Branin],
            &Method::ALL,
            &[1, 2],
            14,
        )
        .unwrap();
        assert_eq!(rows.len(), 2 * 4 * 2);
        assert!(rows.iter().all(|r| r.evaluations == 14));
        let err = compare_methods(&[Benchmark::Branin], &[Method::Random], &[0], 5);
        assert!(err.is_err());
    }

    #[test]
    fn budget_equal_to_init_ties_all_methods() {
        let rows = compare_methods(&[Benchmark::Branin], &Method::ALL, &[9], 10).unwrap();
        assert!(rows.iter().all(|r| r.best == rows[0].best));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bo".parse::<Method>().is_err());
    }
}
