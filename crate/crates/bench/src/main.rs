use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mrpp_bench::{load_map, run_suite, summarize, write_summary, BenchError, BenchSuite, Generator, RecordWriter, RunOptions, SolverSpec};
use mrpp_core::primdb::{file_name, generate_db, save_db, BaseShape, PrimitiveDb, DB_ENV_VAR};
use mrpp_core::scenario::{gen_corner_rearrangement, gen_gaussian, gen_uniform, load_instance, save_instance};
use mrpp_core::{lower_bounds, metrics, validate_plan, DistanceOracle};

#[derive(Parser)]
#[command(name = "mrpp", version, about = "Multi-robot path planning on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one instance as a MovingAI scenario plus JSON sidecar.
    Gen {
        /// MovingAI map file, `warehouse` or `empty:WxH` (ignored by gauss).
        #[arg(long, default_value = "warehouse")]
        map: String,
        /// uniform, corner or gauss[:sigma].
        #[arg(long = "gen", default_value = "uniform")]
        generator: String,
        #[arg(long)]
        robots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one scenario file and print its metrics.
    Solve {
        scen: PathBuf,
        #[arg(long, default_value = "ecbs:1.5")]
        solver: String,
        /// Time limit in seconds.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        #[command(flatten)]
        db: DbArgs,
        /// Write the plan as JSON.
        #[arg(long)]
        plan_out: Option<PathBuf>,
    },
    /// Build the primitive database tables and write them to a directory.
    DbGen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        shape: ShapeArg,
    },
    /// Run a suite of solvers on generated instances.
    Bench {
        /// Maps (repeatable): MovingAI files, `warehouse` or `empty:WxH`.
        #[arg(long, required = true)]
        map: Vec<String>,
        #[arg(long = "gen", default_value = "uniform")]
        generator: String,
        /// Robot counts, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        robots: Vec<usize>,
        /// Solver specs, separated by `;` or given repeatedly, e.g.
        /// `--solvers 'ecbs:1.5;dcbs:noc=20'`.
        #[arg(long, value_delimiter = ';', required = true)]
        solvers: Vec<String>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Time limit per run in seconds.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write per-run high-level search traces.
        #[arg(long)]
        traces: bool,
        #[command(flatten)]
        db: DbArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DbArgs {
    /// Directory holding prim_3x2.db and prim_3x3.db.
    #[arg(long = "db", env = DB_ENV_VAR)]
    dir: Option<PathBuf>,
    /// Build tables on demand instead of loading them.
    #[arg(long)]
    db_lazy: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    #[value(name = "3x2")]
    ThreeByTwo,
    #[value(name = "3x3")]
    ThreeByThree,
    All,
}

fn config(msg: impl Into<String>) -> anyhow::Error {
    BenchError::Config(msg.into()).into()
}

fn parse_solvers(specs: &[String]) -> anyhow::Result<Vec<SolverSpec>> {
    specs
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<SolverSpec>().map_err(|e| config(e.to_string())))
        .collect()
}

fn parse_timeout(secs: f64) -> anyhow::Result<Duration> {
    if secs.is_finite() && secs > 0.0 {
        Ok(Duration::from_secs_f64(secs))
    } else {
        Err(config(format!("timeout must be positive, got {secs}")))
    }
}

impl DbArgs {
    /// The database when some solver needs one. Both table files must exist
    /// unless lazy construction was asked for.
    fn load(&self, needed: bool) -> anyhow::Result<Option<PrimitiveDb>> {
        if !needed {
            return Ok(None);
        }
        if self.db_lazy {
            return Ok(Some(PrimitiveDb::lazy()));
        }
        let Some(dir) = &self.dir else {
            return Err(config(format!("the primitive database is required: pass --db, set {DB_ENV_VAR}, or use --db-lazy")));
        };
        for shape in [BaseShape::ThreeByTwo, BaseShape::ThreeByThree] {
            let path = dir.join(file_name(shape));
            if !path.exists() {
                return Err(config(format!("database file {} not found (run `mrpp db-gen --out {}`)", path.display(), dir.display())));
            }
        }
        let db = PrimitiveDb::load_dir(dir).map_err(|e| config(e.to_string()))?;
        Ok(Some(db))
    }
}

fn generator_for(name: &str) -> anyhow::Result<Generator> {
    Ok(name.parse::<Generator>()?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen {
            map,
            generator,
            robots,
            seed,
            out,
        } => {
            let generator = generator_for(&generator)?;
            let instance = match generator {
                Generator::Gaussian { sigma } => gen_gaussian(robots, sigma, seed),
                Generator::Uniform => gen_uniform(Arc::new(load_map(&map)?), robots, seed),
                Generator::Corner => gen_corner_rearrangement(Arc::new(load_map(&map)?), robots, seed),
            }
            .map_err(|e| config(e.to_string()))?;
            save_instance(&out, &instance)?;
            println!("wrote {} ({} robots on {})", out.display(), instance.num_robots(), instance.map.name());
        }
        Command::Solve {
            scen,
            solver,
            timeout,
            db,
            plan_out,
        } => {
            let spec: SolverSpec = solver.parse().map_err(|e: mrpp_bench::SpecError| config(e.to_string()))?;
            let limit = parse_timeout(timeout)?;
            let db = db.load(spec.needs_db())?;
            let instance = load_instance(&scen).map_err(|e| config(e.to_string()))?;
            let oracle = DistanceOracle::new(instance.map.clone());
            let bounds = lower_bounds(&oracle, &instance);
            let started = std::time::Instant::now();
            let outcome = spec.run(&instance, &oracle, db.as_ref(), &mrpp_core::budget::Budget::with_timeout(limit)).outcome;
            let wall = started.elapsed().as_secs_f64();
            match outcome {
                Ok(plan) => {
                    let violations = validate_plan(&instance.map, &instance, &plan);
                    anyhow::ensure!(violations.is_empty(), "solver returned an invalid plan: {:?}", violations[0]);
                    let m = metrics(&plan);
                    println!(
                        "solved in {wall:.3}s: makespan {} (lb {}), soc {} (lb {})",
                        m.makespan, bounds.makespan, m.soc, bounds.soc
                    );
                    if let Some(path) = plan_out {
                        std::fs::write(&path, serde_json::to_string(&plan)?).with_context(|| format!("writing {}", path.display()))?;
                    }
                }
                Err(e) => println!("not solved after {wall:.3}s: {e}"),
            }
        }
        Command::DbGen { out, shape } => {
            std::fs::create_dir_all(&out)?;
            let shapes: &[BaseShape] = match shape {
                ShapeArg::ThreeByTwo => &[BaseShape::ThreeByTwo],
                ShapeArg::ThreeByThree => &[BaseShape::ThreeByThree],
                ShapeArg::All => &[BaseShape::ThreeByTwo, BaseShape::ThreeByThree],
            };
            for &shape in shapes {
                let started = std::time::Instant::now();
                let db = generate_db(shape, 1, shape.cells());
                let path = out.join(file_name(shape));
                save_db(&path, &db)?;
                println!("wrote {} in {:.1}s", path.display(), started.elapsed().as_secs_f64());
            }
        }
        Command::Bench {
            map,
            generator,
            robots,
            solvers,
            reps,
            timeout,
            seed,
            workers,
            traces,
            db,
            out,
        } => {
            let solvers = parse_solvers(&solvers)?;
            let generator = generator_for(&generator)?;
            let maps = match generator {
                Generator::Gaussian { .. } => Vec::new(),
                _ => map.iter().map(|m| load_map(m).map(Arc::new)).collect::<Result<_, _>>()?,
            };
            let suite = BenchSuite {
                maps,
                generator,
                robots,
                reps,
                time_limit: parse_timeout(timeout)?,
                seed_base: seed,
            };
            suite.validate()?;
            let db = db.load(solvers.iter().any(SolverSpec::needs_db))?;
            let mut options = RunOptions {
                keep_traces: traces,
                ..RunOptions::default()
            };
            if let Some(w) = workers {
                if w == 0 {
                    return Err(config("workers must be positive"));
                }
                options.workers = w;
            }
            let mut writer = RecordWriter::create(&out)?;
            let records = run_suite(&suite, &solvers, db.as_ref(), options, |r| writer.append(r))?;
            let summary = summarize(&records);
            write_summary(&out, &summary)?;
            print_summary(&out, &summary);
        }
    }
    Ok(())
}

fn print_summary(out: &FsPath, summary: &[mrpp_bench::SummaryRow]) {
    let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    println!("{:<40} {:>7} {:>8} {:>8} {:>10} {:>10}", "solver / setting", "robots", "success", "time_s", "mkpn/lb", "soc/lb");
    for row in summary {
        println!(
            "{:<40} {:>7} {:>8.2} {:>8} {:>10} {:>10}",
            format!("{} / {}", row.solver, row.map),
            row.robots,
            row.success_rate,
            show(row.mean_wall_s),
            show(row.mean_mkpn_ratio),
            show(row.mean_soc_ratio)
        );
    }
    println!("results in {}", out.display());
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_config = e.downcast_ref::<BenchError>().is_some_and(|b| matches!(b, BenchError::Config(_)));
            ExitCode::from(if is_config { 2 } else { 1 })
        }
    }
}
