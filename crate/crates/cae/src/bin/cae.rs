use std::path::PathBuf;
use std::process::ExitCode;

use cae::config::RunConfig;
use cae::domains::tsp::{PerformanceParams, PluginTask};
use cae::engine::parse_solution;
use cae::report::{self, BenchParams, Format};
use cae::run::{self, RunError, EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK};
use cae::sandbox::{ExecutionLimits, Sandbox, ShimCommand};
use cae_core::tsp::Algorithm;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cae", version, about = "Co-evolution of candidate solvers with an LLM in the loop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    #[value(name = "GA", alias = "ga")]
    Ga,
    #[value(name = "ACO", alias = "aco")]
    Aco,
    #[value(name = "KGLS", alias = "kgls")]
    Kgls,
}

#[derive(Subcommand)]
enum Command {
    /// Run evolution from a config file; prints the run directory.
    Evolve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Gap report for a finished or partial run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Solver traces over generated quadratic instances.
    BenchQuad {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, value_delimiter = ',', default_value = "4")]
        xi: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "a,b")]
        variants: Vec<String>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2000)]
        max_iter: usize,
        #[arg(long, default_value = "bench")]
        out: PathBuf,
    },
    /// Baseline metaheuristic against an optional plugin candidate.
    EvalTsp {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, value_enum)]
        algo: AlgoArg,
        /// Candidate solution JSON: {"units": [...], "deps": [...], "entrypoint": ...}.
        #[arg(long)]
        plugin: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = 20)]
        population_size: usize,
        #[arg(long, default_value = "cae-stub-shim")]
        shim: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Re-run a recorded run from its transcript and compare artifacts.
    Replay {
        #[arg(long)]
        run: PathBuf,
        /// Where the replayed run directory goes; defaults to `<run>/replays`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn format(f: FormatArg) -> Format {
    match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Table => Format::Table,
    }
}

fn fail(code: i32, message: impl std::fmt::Display) -> Result<(), i32> {
    eprintln!("error: {message}");
    Err(code)
}

fn evolve(config: PathBuf) -> Result<(), i32> {
    let cfg = match RunConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let outcome = run::evolve(&cfg, &mut |s| println!("generation {}: best fitness {}", s.generation, s.best_fitness));
    match outcome {
        Ok(done) => {
            if done.result.stopped_early {
                println!("stopped early");
            }
            println!("{}", done.dir.path().display());
            Ok(())
        }
        Err(e) => fail(e.exit_code(), e),
    }
}

fn bench_quad(params: BenchParams, out: PathBuf) -> Result<(), i32> {
    match report::bench_quad(&params, &out) {
        Ok(cells) => {
            print!("{}", report::summary_csv(&cells));
            Ok(())
        }
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

#[allow(clippy::too_many_arguments)]
fn eval_tsp(
    instances: PathBuf,
    algorithm: Algorithm,
    plugin: Option<PathBuf>,
    seeds: Vec<u64>,
    iterations: usize,
    population_size: usize,
    shim: PathBuf,
    fmt: Format,
) -> Result<(), i32> {
    let set = match report::load_instances(&instances) {
        Ok(s) if !s.is_empty() => s,
        Ok(_) => return fail(EXIT_CONFIG, format!("no .tsp files in {}", instances.display())),
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let params = PerformanceParams {
        algorithm,
        iterations,
        population_size,
        seeds,
        instances: vec![],
        task: PluginTask::GuideTsp,
    };
    let candidate = match &plugin {
        Some(p) => match std::fs::read_to_string(p).map_err(|e| e.to_string()).and_then(|t| parse_solution(&t).map_err(|e| e.to_string())) {
            Ok(s) => Some(s),
            Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", p.display())),
        },
        None => None,
    };
    let sandbox = match Sandbox::new(ShimCommand::new(shim), ExecutionLimits::default(), 1) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let outcome = report::eval_tsp(&set, &params, candidate.as_ref().map(|c| (&sandbox, c)));
    match outcome {
        Ok((rows, mean)) => {
            match fmt {
                Format::Csv => print!("{}", report::to_csv(&rows)),
                Format::Table => {
                    print!("{}", report::render_table(&rows, Some(algorithm)));
                    println!("mean gap: {mean}%");
                }
            }
            Ok(())
        }
        Err(e) => fail(EXIT_INTERNAL, e),
    }
}

fn replay(run: PathBuf, out: Option<PathBuf>) -> Result<(), i32> {
    let out = out.unwrap_or_else(|| run.join("replays"));
    match run::replay(&run, &out) {
        Ok(r) if r.mismatches.is_empty() => {
            println!("replay identical: {}", r.replay.path().display());
            Ok(())
        }
        Ok(r) => {
            let e = RunError::Diverged(r.mismatches);
            fail(e.exit_code(), e)
        }
        Err(e) => fail(e.exit_code(), e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve { config } => evolve(config),
        Command::Report { run, format: f } => match report::write_report(&run, format(f)) {
            Ok(text) => {
                print!("{text}");
                Ok(())
            }
            Err(e) => {
                let e = RunError::from(e);
                fail(e.exit_code(), e)
            }
        },
        Command::BenchQuad {
            n,
            d,
            xi,
            seeds,
            variants,
            k,
            max_iter,
            out,
        } => {
            let parsed: Option<Vec<_>> = variants.iter().map(|v| report::parse_variant(v)).collect();
            match parsed {
                Some(variants) => {
                    let mut params = BenchParams::new(n, d, xi, seeds, variants);
                    params.k = k;
                    params.max_iter = max_iter;
                    bench_quad(params, out)
                }
                None => fail(EXIT_CONFIG, "variants must be `a` or `b`"),
            }
        }
        Command::EvalTsp {
            instances,
            algo,
            plugin,
            seeds,
            iterations,
            population_size,
            shim,
            format: f,
        } => {
            let algorithm = match algo {
                AlgoArg::Ga => Algorithm::Ga,
                AlgoArg::Aco => Algorithm::Aco,
                AlgoArg::Kgls => Algorithm::Kgls,
            };
            eval_tsp(instances, algorithm, plugin, seeds, iterations, population_size, shim, format(f))
        }
        Command::Replay { run, out } => replay(run, out),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(code) => ExitCode::from(code as u8),
    }
}
