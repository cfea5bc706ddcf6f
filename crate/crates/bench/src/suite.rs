//! Benchmark suites: which instances to generate and how to run solvers on
//! them.

use std::fmt;
use std::path::Path as FsPath;
use std::str::FromStr;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use mrpp_core::budget::Budget;
use mrpp_core::ecbs::TraceRow;
use mrpp_core::primdb::PrimitiveDb;
use mrpp_core::scenario::{gen_corner_rearrangement, gen_gaussian, gen_uniform};
use mrpp_core::{lower_bounds, metrics, validate_plan, DistanceOracle, GridMap, Instance, SolveError};
use serde::{Deserialize, Serialize};

use crate::solver::SolverSpec;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    /// Bad input detected before any solver ran.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Loads a map from a MovingAI file or one of the built-in names:
/// `warehouse`, `empty:WxH`.
pub fn load_map(spec: &str) -> Result<GridMap, BenchError> {
    if spec == "warehouse" {
        return Ok(GridMap::warehouse());
    }
    if let Some(size) = spec.strip_prefix("empty:") {
        let parsed = size.split_once('x').and_then(|(w, h)| Some((w.parse::<u16>().ok()?, h.parse::<u16>().ok()?)));
        return match parsed {
            Some((w, h)) if w > 0 && h > 0 => Ok(GridMap::empty(w, h)),
            _ => Err(BenchError::Config(format!("bad map size in `{spec}` (expected empty:WxH)"))),
        };
    }
    let path = FsPath::new(spec);
    if !path.exists() {
        return Err(BenchError::Config(format!("map file `{spec}` not found")));
    }
    GridMap::load_movingai(path).map_err(|e| BenchError::Config(format!("map `{spec}`: {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    Uniform,
    /// Corner-to-corner rearrangement; the robot count must be a perfect
    /// square.
    Corner,
    /// Gaussian-clustered endpoints on a generated empty grid; ignores the
    /// suite's maps.
    Gaussian { sigma: f64 },
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Uniform => write!(f, "uniform"),
            Generator::Corner => write!(f, "corner"),
            Generator::Gaussian { sigma } => write!(f, "gauss:{sigma}"),
        }
    }
}

impl FromStr for Generator {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s.split_once(':') {
            None if s == "uniform" => Ok(Generator::Uniform),
            None if s == "corner" => Ok(Generator::Corner),
            None if s == "gauss" => Ok(Generator::Gaussian { sigma: 5.0 }),
            Some(("gauss", sigma)) => match sigma.parse::<f64>() {
                Ok(sigma) if sigma > 0.0 => Ok(Generator::Gaussian { sigma }),
                _ => Err(BenchError::Config(format!("bad sigma in `{s}`"))),
            },
            _ => Err(BenchError::Config(format!("unknown generator `{s}` (uniform, corner, gauss[:sigma])"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchSuite {
    pub maps: Vec<Arc<GridMap>>,
    pub generator: Generator,
    pub robots: Vec<usize>,
    pub reps: usize,
    pub time_limit: Duration,
    /// Seeds are `seed_base + rep`.
    pub seed_base: u64,
}

/// One generated instance with the keys it is reported under.
#[derive(Clone, Debug)]
pub struct SuiteInstance {
    pub id: String,
    pub map: String,
    pub robots: usize,
    pub seed: u64,
    pub instance: Instance,
}

impl BenchSuite {
    pub fn new(maps: Vec<Arc<GridMap>>, generator: Generator, robots: Vec<usize>) -> Self {
        BenchSuite {
            maps,
            generator,
            robots,
            reps: 20,
            time_limit: Duration::from_secs(60),
            seed_base: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let config = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.maps.is_empty() && !matches!(self.generator, Generator::Gaussian { .. }) {
            return config("no maps given");
        }
        if self.robots.is_empty() || self.robots.contains(&0) {
            return config("robot counts must be positive");
        }
        if self.reps == 0 {
            return config("reps must be positive");
        }
        if self.time_limit.is_zero() {
            return config("time limit must be positive");
        }
        if self.generator == Generator::Corner {
            if let Some(k) = self.robots.iter().find(|&&k| (k as f64).sqrt().round().powi(2) as usize != k) {
                return Err(BenchError::Config(format!("corner rearrangement needs a square robot count, got {k}")));
            }
        }
        Ok(())
    }

    /// Generates every instance; any generator failure (too many robots for
    /// a map, corner blocks that do not fit) is a configuration error.
    pub fn instances(&self) -> Result<Vec<SuiteInstance>, BenchError> {
        self.validate()?;
        let mut out = Vec::new();
        let maps: Vec<Option<&Arc<GridMap>>> = match self.generator {
            Generator::Gaussian { .. } => vec![None],
            _ => self.maps.iter().map(Some).collect(),
        };
        for map in maps {
            for &robots in &self.robots {
                for rep in 0..self.reps {
                    let seed = self.seed_base + rep as u64;
                    let generated = match (self.generator, map) {
                        (Generator::Uniform, Some(m)) => gen_uniform(m.clone(), robots, seed),
                        (Generator::Corner, Some(m)) => gen_corner_rearrangement(m.clone(), robots, seed),
                        (Generator::Gaussian { sigma }, _) => gen_gaussian(robots, sigma, seed),
                        _ => unreachable!("map-based generators always get a map"),
                    };
                    let instance = generated.map_err(|e| {
                        let name = map.map_or("gauss", |m| m.name());
                        BenchError::Config(format!("{} with {robots} robots on {name}: {e}", self.generator))
                    })?;
                    let map_name = instance.map.name().to_string();
                    out.push(SuiteInstance {
                        id: format!("{map_name}-{}-n{robots}-s{seed}", self.generator).replace([':', '/'], "_"),
                        map: map_name,
                        robots,
                        seed,
                        instance,
                    });
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Solved,
    Timeout,
    Error,
}

/// One solver run on one instance. Ratios are present only for solved runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub map: String,
    pub generator: String,
    pub robots: usize,
    pub seed: u64,
    pub solver: String,
    pub outcome: Outcome,
    pub error: Option<String>,
    pub wall_s: f64,
    pub makespan: Option<usize>,
    pub soc: Option<usize>,
    pub mkpn_lb: u32,
    pub soc_lb: u64,
    pub mkpn_ratio: Option<f64>,
    pub soc_ratio: Option<f64>,
    pub expansions: usize,
    pub db_calls: Option<usize>,
    /// High-level search trace (iteration, NOC of the expanded node, open
    /// list size); written to a separate file, not to the records table.
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

fn ratio(value: f64, bound: f64) -> f64 {
    if bound == 0.0 {
        if value == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        value / bound
    }
}

/// Runs `solver` once on `item` and checks the returned plan independently.
pub fn run_one(item: &SuiteInstance, generator: Generator, solver: &SolverSpec, oracle: &DistanceOracle, db: Option<&PrimitiveDb>, time_limit: Duration) -> RunRecord {
    let bounds = lower_bounds(oracle, &item.instance);
    let started = Instant::now();
    let run = solver.run(&item.instance, oracle, db, &Budget::with_timeout(time_limit));
    let wall_s = started.elapsed().as_secs_f64();
    let mut record = RunRecord {
        instance: item.id.clone(),
        map: item.map.clone(),
        generator: generator.to_string(),
        robots: item.robots,
        seed: item.seed,
        solver: solver.to_string(),
        outcome: Outcome::Error,
        error: None,
        wall_s,
        makespan: None,
        soc: None,
        mkpn_lb: bounds.makespan,
        soc_lb: bounds.soc,
        mkpn_ratio: None,
        soc_ratio: None,
        expansions: run.expansions,
        db_calls: run.db.map(|d| d.calls),
        trace: run.trace,
    };
    match run.outcome {
        Ok(plan) => {
            let violations = validate_plan(&item.instance.map, &item.instance, &plan);
            if let Some(v) = violations.first() {
                record.error = Some(format!("invalid plan ({} violations, first: {v:?})", violations.len()));
            } else {
                let m = metrics(&plan);
                record.outcome = Outcome::Solved;
                record.makespan = Some(m.makespan);
                record.soc = Some(m.soc);
                record.mkpn_ratio = Some(ratio(m.makespan as f64, bounds.makespan as f64));
                record.soc_ratio = Some(ratio(m.soc as f64, bounds.soc as f64));
            }
        }
        Err(SolveError::Timeout) => record.outcome = Outcome::Timeout,
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub workers: usize,
    pub keep_traces: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: thread::available_parallelism().map_or(1, |n| n.get()),
            keep_traces: false,
        }
    }
}

/// Runs every solver on every instance of the suite on a pool of worker
/// threads. `on_record` sees each record as soon as it completes (in
/// completion order) so partial results survive an interrupted run; the
/// returned records are in (instance, solver) order.
///
/// Configuration problems — invalid suite, generator failures, a solver that
/// needs the primitive database when none is given — are reported before any
/// solver runs.
pub fn run_suite(
    suite: &BenchSuite,
    solvers: &[SolverSpec],
    db: Option<&PrimitiveDb>,
    options: RunOptions,
    mut on_record: impl FnMut(&RunRecord) -> Result<(), BenchError>,
) -> Result<Vec<RunRecord>, BenchError> {
    if solvers.is_empty() {
        return Err(BenchError::Config("no solvers given".into()));
    }
    if db.is_none() {
        if let Some(s) = solvers.iter().find(|s| s.needs_db()) {
            return Err(BenchError::Config(format!("solver `{s}` needs the primitive database")));
        }
    }
    let items = suite.instances()?;
    let mut oracles: Vec<(Arc<GridMap>, Arc<DistanceOracle>)> = Vec::new();
    let item_oracle: Vec<Arc<DistanceOracle>> = items
        .iter()
        .map(|item| {
            if let Some((_, o)) = oracles.iter().find(|(m, _)| Arc::ptr_eq(m, &item.instance.map)) {
                return o.clone();
            }
            let o = Arc::new(DistanceOracle::new(item.instance.map.clone()));
            oracles.push((item.instance.map.clone(), o.clone()));
            o
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..items.len()).flat_map(|i| (0..solvers.len()).map(move |s| (i, s))).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = options.workers.clamp(1, jobs.len().max(1));
    let mut records: Vec<((usize, usize), RunRecord)> = Vec::with_capacity(jobs.len());
    let mut sink_error = None;
    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, items, item_oracle, next) = (&jobs, &items, &item_oracle, &next);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(&(i, s)) = jobs.get(k) else { break };
                let mut record = run_one(&items[i], suite.generator, &solvers[s], &item_oracle[i], db, suite.time_limit);
                if !options.keep_traces {
                    record.trace = Vec::new();
                }
                tracing::info!(instance = %record.instance, solver = %record.solver, outcome = ?record.outcome, wall_s = record.wall_s, "run finished");
                if tx.send(((i, s), record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (key, record) in rx {
            if sink_error.is_none() {
                if let Err(e) = on_record(&record) {
                    // Stop handing out work; runs already started finish.
                    next.store(jobs.len(), std::sync::atomic::Ordering::Relaxed);
                    sink_error = Some(e);
                }
            }
            records.push((key, record));
        }
    });
    if let Some(e) = sink_error {
        return Err(e);
    }
    records.sort_by_key(|(key, _)| *key);
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_parse() {
        assert_eq!("uniform".parse::<Generator>().unwrap(), Generator::Uniform);
        assert_eq!("gauss:3".parse::<Generator>().unwrap(), Generator::Gaussian { sigma: 3.0 });
        assert!("gauss:-1".parse::<Generator>().is_err());
        assert!("poisson".parse::<Generator>().is_err());
    }

    #[test]
    fn corner_counts_must_be_square() {
        let mut suite = BenchSuite::new(vec![Arc::new(GridMap::empty(20, 20))], Generator::Corner, vec![49, 50]);
        assert!(matches!(suite.validate(), Err(BenchError::Config(_))));
        suite.robots = vec![49];
        assert!(suite.validate().is_ok());
    }

    #[test]
    fn ratios_handle_zero_bounds() {
        assert_eq!(ratio(0.0, 0.0), 1.0);
        assert_eq!(ratio(3.0, 2.0), 1.5);
    }

    #[test]
    fn built_in_maps_load() {
        assert_eq!(load_map("warehouse").unwrap().free_count(), 360);
        assert_eq!(load_map("empty:4x3").unwrap().free_count(), 12);
        assert!(matches!(load_map("empty:0x3"), Err(BenchError::Config(_))));
        assert!(matches!(load_map("/nonexistent.map"), Err(BenchError::Config(_))));
    }
}
