//! `rpia`: run fitting experiments from a config file and/or flags.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rpia_core::config::ExperimentConfig;
use rpia_core::exec::Execution;
use rpia_core::experiment::{build_problem, estimate_lambda, run_experiment};
use rpia_core::report::write_bundle;
use rpia_core::FitError;
use toml::Value;

#[derive(Parser)]
#[command(name = "rpia", version, about = "Regularized randomized PIA fitting of noisy curves and surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every seed at a fixed, estimated or self-consistent λ.
    Fit {
        #[command(flatten)]
        common: Common,
        /// A number, `estimate` or `self-consistent`.
        #[arg(long)]
        lambda: Option<String>,
    },
    /// Mean error over a log-spaced λ grid, plus the estimated λ.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda_min: Option<f64>,
        #[arg(long)]
        lambda_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Print the spectral-decay estimate of the optimal λ.
    EstimateLambda {
        #[command(flatten)]
        common: Common,
    },
    /// Fit every seed with the self-consistent λ iteration.
    SelfConsistent {
        #[command(flatten)]
        common: Common,
    },
    /// Write the eigenvalue spectrum and the fitted decay rate.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Write the clean base data and the noisy data of each seed.
    GenData {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Curve,
    Surface,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Rose,
    Blob,
    Boy,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Rpia,
    Direct,
}

fn enum_name(v: impl ValueEnum) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_owned()
}

/// Flags mirroring the config fields; each one overrides the `--config` file.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    problem: Option<ProblemArg>,
    #[arg(long, value_enum)]
    generator: Option<GeneratorArg>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    block_size_v: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    penalty_scale: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    head_count: Option<usize>,
    #[arg(long)]
    eps_lambda: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    trajectory_stride: Option<usize>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long, value_enum)]
    inner_solver: Option<SolverArg>,
    #[arg(long)]
    workers: Option<usize>,
}

fn int(v: usize) -> Value {
    Value::Integer(v as i64)
}

impl Common {
    /// Config file table with the flags layered on top. `lambda` replaces the
    /// file's λ mode when given.
    fn table(&self, lambda: Option<toml::Table>) -> Result<toml::Table> {
        let mut t = match &self.config {
            Some(path) => ExperimentConfig::load_table(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => toml::Table::new(),
        };
        let mut set = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                t.insert(key.into(), v);
            }
        };
        set("problem", self.problem.map(|v| Value::String(enum_name(v))));
        set("generator", self.generator.map(|v| Value::String(enum_name(v))));
        set("input", self.input.as_ref().map(|v| Value::String(v.to_string_lossy().into_owned())));
        set("m", self.m.map(int));
        set("p", self.p.map(int));
        set("n1", self.n1.map(int));
        set("n2", self.n2.map(int));
        set("block_size", self.block_size.map(int));
        set("block_size_v", self.block_size_v.map(int));
        set("noise_amplitude", self.noise.map(Value::Float));
        set("penalty_scale", self.penalty_scale.map(Value::Float));
        set("tolerance", self.tolerance.map(Value::Float));
        set("max_iterations", self.max_iterations.map(int));
        set(
            "seeds",
            self.seeds.as_ref().map(|s| Value::Array(s.iter().map(|&v| Value::Integer(v as i64)).collect())),
        );
        set("head_count", self.head_count.map(int));
        set("eps_lambda", self.eps_lambda.map(Value::Float));
        set("max_outer", self.max_outer.map(int));
        set("trajectory_stride", self.trajectory_stride.map(int));
        set("solver", self.solver.map(|v| Value::String(enum_name(v))));
        set("inner_solver", self.inner_solver.map(|v| Value::String(enum_name(v))));
        set("workers", self.workers.map(int));
        set("lambda", lambda.map(Value::Table));
        // generator and input are exclusive; a flag for one drops the file's other
        if self.generator.is_some() && self.input.is_none() {
            t.remove("input");
        }
        if self.input.is_some() && self.generator.is_none() {
            t.remove("generator");
        }
        Ok(t)
    }

    fn config(&self, lambda: Option<toml::Table>) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig::from_toml_table(self.table(lambda)?)?.resolved()?)
    }

    /// Config for subcommands that ignore λ; a missing λ mode defaults to
    /// the estimate.
    fn config_any_lambda(&self) -> Result<ExperimentConfig> {
        let mut t = self.table(None)?;
        t.entry("lambda").or_insert_with(|| Value::Table(mode("estimate")));
        Ok(ExperimentConfig::from_toml_table(t)?.resolved()?)
    }
}

fn mode(name: &str) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert("mode".into(), Value::String(name.into()));
    t
}

fn parse_lambda(text: &str) -> Result<toml::Table> {
    Ok(match text {
        "estimate" | "self-consistent" => mode(text),
        v => {
            let value: f64 = v
                .parse()
                .map_err(|_| FitError::InvalidConfig(format!("--lambda expects a number, estimate or self-consistent, got {v:?}")))?;
            let mut t = mode("fixed");
            t.insert("value".into(), Value::Float(value));
            t
        }
    })
}

fn run_and_write(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let output = run_experiment(cfg, &Execution::with_workers(cfg.workers))?;
    for path in write_bundle(&output, out)? {
        log::info!("wrote {}", path.display());
    }
    print!("{}", rpia_core::report::summary(&output.report));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { common, lambda } => {
            let cfg = common.config(lambda.as_deref().map(parse_lambda).transpose()?)?;
            run_and_write(&cfg, &common.out)
        }
        Command::SelfConsistent { common } => run_and_write(&common.config(Some(mode("self-consistent")))?, &common.out),
        Command::Sweep {
            common,
            lambda_min,
            lambda_max,
            points,
        } => {
            let mut grid = match common.table(None)?.remove("lambda") {
                Some(Value::Table(t)) if t.get("mode").and_then(Value::as_str) == Some("sweep") => t,
                _ => mode("sweep"),
            };
            for (key, v) in [("min", lambda_min.map(Value::Float)), ("max", lambda_max.map(Value::Float))] {
                if let Some(v) = v {
                    grid.insert(key.into(), v);
                }
            }
            if let Some(n) = points {
                grid.insert("points".into(), int(n));
            }
            run_and_write(&common.config(Some(grid))?, &common.out)
        }
        Command::EstimateLambda { common } => {
            let cfg = common.config_any_lambda()?;
            let problem = build_problem(&cfg)?;
            let est = estimate_lambda(problem.as_ref(), cfg.spectral_head())?;
            let json = serde_json::to_string_pretty(&est)?;
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("estimate.json"), format!("{json}\n"))?;
            println!("{json}");
            Ok(())
        }
        Command::Spectrum { common } => {
            let cfg = common.config_any_lambda()?;
            let problem = build_problem(&cfg)?;
            let fit = problem.spectral_decay(cfg.spectral_head())?;
            std::fs::create_dir_all(&common.out)?;
            let mut text = String::from("k,eigenvalue\n");
            for (k, v) in fit.eigenvalues.iter().enumerate() {
                text.push_str(&format!("{},{}\n", k + 1, rpia_core::io::format_f64(*v)));
            }
            std::fs::write(common.out.join("spectrum.csv"), text)?;
            println!(
                "alpha {:.6} over {} eigenvalues (log constant {:.6}, rms residual {:.3e})",
                fit.alpha, fit.head_count, fit.log_constant, fit.fit_residual
            );
            Ok(())
        }
        Command::GenData { common } => {
            let cfg = common.config_any_lambda()?;
            let problem = build_problem(&cfg)?;
            std::fs::create_dir_all(&common.out)?;
            problem.data(None)?.save(&common.out.join("clean.csv"))?;
            for &seed in cfg.seed_list() {
                problem.data(Some(seed))?.save(&common.out.join(format!("noisy_seed{seed}.csv")))?;
            }
            println!("wrote data to {}", common.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .chain()
                .find_map(|e| e.downcast_ref::<FitError>())
                .map(FitError::exit_code)
                .or_else(|| err.chain().find_map(|e| e.downcast_ref::<std::io::Error>()).map(|_| 4))
                .unwrap_or(3);
            ExitCode::from(code as u8)
        }
    }
}
