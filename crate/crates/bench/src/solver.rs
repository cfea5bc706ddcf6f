//! Solver specifications as written on the command line, e.g. `ecbs:1.5`,
//! `cbs`, `dcbs:noc=20`, `dcbs:stag=100,w2=2,gate=mkpn`,
//! `scbs:rho=0.5,window=5`, `dbroot`.

use std::fmt;
use std::str::FromStr;

use mrpp_core::budget::Budget;
use mrpp_core::dcbs::{run_dcbs, solve_db_root, DbStats, DcbsConfig, GateObjective, TriggerPolicy};
use mrpp_core::ecbs::{run_ecbs, EcbsConfig, FocalRule, TieBreak, TraceRow};
use mrpp_core::primdb::PrimitiveDb;
use mrpp_core::scbs::{solve_scbs, DensityParams, ScbsConfig};
use mrpp_core::{DistanceOracle, Instance, Plan, SolveError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverSpec {
    /// ECBS; `cbs` is ECBS with `w1 = 1`.
    Ecbs(EcbsConfig),
    Dcbs(DcbsConfig),
    Scbs(ScbsConfig),
    /// Database repair applied once to the root node's paths.
    DbRoot,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("solver spec `{spec}`: {msg}")]
pub struct SpecError {
    spec: String,
    msg: String,
}

/// What one solver invocation produced.
#[derive(Clone, Debug)]
pub struct SolverRun {
    pub outcome: Result<Plan, SolveError>,
    pub trace: Vec<TraceRow>,
    pub expansions: usize,
    pub db: Option<DbStats>,
}

impl SolverSpec {
    pub fn needs_db(&self) -> bool {
        matches!(self, SolverSpec::Dcbs(_) | SolverSpec::DbRoot)
    }

    pub fn run(&self, instance: &Instance, oracle: &DistanceOracle, db: Option<&PrimitiveDb>, budget: &Budget) -> SolverRun {
        let missing_db = || SolverRun {
            outcome: Err(SolveError::InvalidInput("this solver needs a primitive database".into())),
            trace: Vec::new(),
            expansions: 0,
            db: None,
        };
        match self {
            SolverSpec::Ecbs(config) => {
                let report = run_ecbs(instance, oracle, *config, budget);
                SolverRun {
                    outcome: report.outcome,
                    expansions: report.stats.expansions,
                    trace: report.trace,
                    db: None,
                }
            }
            SolverSpec::Dcbs(config) => {
                let Some(db) = db else { return missing_db() };
                let report = run_dcbs(instance, oracle, config, db, budget);
                SolverRun {
                    outcome: report.search.outcome,
                    expansions: report.search.stats.expansions,
                    trace: report.search.trace,
                    db: Some(report.db),
                }
            }
            SolverSpec::Scbs(config) => match solve_scbs(instance, config, budget) {
                Ok(sol) => SolverRun {
                    outcome: Ok(sol.plan),
                    trace: Vec::new(),
                    expansions: sol.middle_stats.expansions,
                    db: None,
                },
                Err(e) => SolverRun {
                    outcome: Err(e),
                    trace: Vec::new(),
                    expansions: 0,
                    db: None,
                },
            },
            SolverSpec::DbRoot => {
                let Some(db) = db else { return missing_db() };
                SolverRun {
                    outcome: solve_db_root(instance, db, budget),
                    trace: Vec::new(),
                    expansions: 0,
                    db: None,
                }
            }
        }
    }
}

fn tie_name(t: TieBreak) -> &'static str {
    match t {
        TieBreak::BySoc => "soc",
        TieBreak::ByLifo => "lifo",
    }
}

fn focal_name(f: FocalRule) -> &'static str {
    match f {
        FocalRule::GlobalLb => "global",
        FocalRule::PerNode => "node",
    }
}

impl fmt::Display for SolverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverSpec::Ecbs(c) if c.w1 == 1.0 && *c == EcbsConfig::cbs() => write!(f, "cbs"),
            SolverSpec::Ecbs(c) => {
                write!(f, "ecbs:{}", c.w1)?;
                let default = EcbsConfig::new(c.w1);
                if c.tiebreak != default.tiebreak {
                    write!(f, ",tie={}", tie_name(c.tiebreak))?;
                }
                if c.focal_rule != default.focal_rule {
                    write!(f, ",focal={}", focal_name(c.focal_rule))?;
                }
                Ok(())
            }
            SolverSpec::Dcbs(c) => {
                match c.trigger {
                    TriggerPolicy::NocThreshold(n) => write!(f, "dcbs:noc={n}")?,
                    TriggerPolicy::PocRatio(r) => write!(f, "dcbs:poc={r}")?,
                    TriggerPolicy::Stagnation { window, delta: 0 } => write!(f, "dcbs:stag={window}")?,
                    TriggerPolicy::Stagnation { window, delta } => write!(f, "dcbs:stag={window},delta={delta}")?,
                }
                let default = DcbsConfig::new(1.5, c.trigger);
                if c.w1 != default.w1 {
                    write!(f, ",w1={}", c.w1)?;
                }
                if c.w2.is_finite() {
                    write!(f, ",w2={}", c.w2)?;
                }
                if c.gate != default.gate {
                    write!(f, ",gate=soc")?;
                }
                if c.tiebreak != default.tiebreak {
                    write!(f, ",tie={}", tie_name(c.tiebreak))?;
                }
                if c.focal_rule != default.focal_rule {
                    write!(f, ",focal={}", focal_name(c.focal_rule))?;
                }
                Ok(())
            }
            SolverSpec::Scbs(c) => {
                write!(f, "scbs:rho={},window={}", c.density.rho, c.density.window)?;
                if c.middle.w1 != 1.5 {
                    write!(f, ",mid={}", c.middle.w1)?;
                }
                if let Some(seed) = c.shuffle {
                    write!(f, ",shuffle={seed}")?;
                }
                Ok(())
            }
            SolverSpec::DbRoot => write!(f, "dbroot"),
        }
    }
}

impl FromStr for SolverSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        let err = |msg: String| SpecError {
            spec: s.to_string(),
            msg,
        };
        let (name, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut bare = Vec::new();
        let mut keys = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                Some((k, v)) => keys.push((k.trim().to_ascii_lowercase(), v.trim().to_string())),
                None => bare.push(part.to_string()),
            }
        }
        let num = |key: &str, v: &str| v.parse::<f64>().map_err(|_| err(format!("`{key}` expects a number, got `{v}`")));
        let int = |key: &str, v: &str| v.parse::<usize>().map_err(|_| err(format!("`{key}` expects an integer, got `{v}`")));
        let tie = |v: &str| match v {
            "soc" => Ok(TieBreak::BySoc),
            "lifo" => Ok(TieBreak::ByLifo),
            _ => Err(err(format!("unknown tie-break `{v}` (soc or lifo)"))),
        };
        let focal = |v: &str| match v {
            "global" => Ok(FocalRule::GlobalLb),
            "node" => Ok(FocalRule::PerNode),
            _ => Err(err(format!("unknown focal rule `{v}` (global or node)"))),
        };
        let unknown = |k: &str| Err(err(format!("unknown option `{k}` for {name}")));
        match name.to_ascii_lowercase().as_str() {
            "ecbs" | "cbs" => {
                let mut config = if name.eq_ignore_ascii_case("cbs") {
                    EcbsConfig::cbs()
                } else {
                    EcbsConfig::new(1.5)
                };
                if let Some(w) = bare.first() {
                    config.w1 = num("w1", w)?;
                }
                for (k, v) in &keys {
                    match k.as_str() {
                        "w1" => config.w1 = num(k, v)?,
                        "tie" => config.tiebreak = tie(v)?,
                        "focal" => config.focal_rule = focal(v)?,
                        _ => return unknown(k),
                    }
                }
                if !(config.w1 >= 1.0) {
                    return Err(err(format!("w1 = {} below 1", config.w1)));
                }
                Ok(SolverSpec::Ecbs(config))
            }
            "dcbs" => {
                let mut trigger = None;
                let mut delta = 0;
                let mut config = DcbsConfig::noc20();
                let mut set_trigger = |t: TriggerPolicy| {
                    if trigger.replace(t).is_some() {
                        Err(err("more than one trigger given".into()))
                    } else {
                        Ok(())
                    }
                };
                for (k, v) in &keys {
                    match k.as_str() {
                        "noc" => set_trigger(TriggerPolicy::NocThreshold(int(k, v)?))?,
                        "poc" => set_trigger(TriggerPolicy::PocRatio(num(k, v)?))?,
                        "stag" => set_trigger(TriggerPolicy::Stagnation { window: int(k, v)?, delta: 0 })?,
                        "delta" => delta = int(k, v)?,
                        "w1" => config.w1 = num(k, v)?,
                        "w2" => config.w2 = if v == "inf" { f64::INFINITY } else { num(k, v)? },
                        "gate" => {
                            config.gate = match v.as_str() {
                                "mkpn" | "makespan" => GateObjective::Makespan,
                                "soc" => GateObjective::Soc,
                                _ => return Err(err(format!("unknown gate objective `{v}` (mkpn or soc)"))),
                            }
                        }
                        "tie" => config.tiebreak = tie(v)?,
                        "focal" => config.focal_rule = focal(v)?,
                        _ => return unknown(k),
                    }
                }
                if let Some(b) = bare.first() {
                    return Err(err(format!("unexpected `{b}`; use noc=, poc= or stag=")));
                }
                config.trigger = match trigger.ok_or_else(|| err("missing trigger (noc=, poc= or stag=)".into()))? {
                    TriggerPolicy::Stagnation { window, .. } => TriggerPolicy::Stagnation { window, delta },
                    t => t,
                };
                config.validate().map_err(|e| err(e.to_string()))?;
                Ok(SolverSpec::Dcbs(config))
            }
            "scbs" => {
                let mut config = ScbsConfig::default();
                for (k, v) in &keys {
                    match k.as_str() {
                        "rho" => config.density.rho = num(k, v)?,
                        "window" | "w" => config.density.window = int(k, v)?,
                        "mid" => config.middle = EcbsConfig::new(num(k, v)?),
                        "shuffle" => config.shuffle = Some(int(k, v)? as u64),
                        _ => return unknown(k),
                    }
                }
                DensityParams::new(config.density.window, config.density.rho).map_err(|e| err(e.to_string()))?;
                Ok(SolverSpec::Scbs(config))
            }
            "dbroot" => Ok(SolverSpec::DbRoot),
            other => Err(err(format!("unknown solver `{other}`"))),
        }
    }
}
