use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hypotube::cli::{self, Config, Table};

#[derive(Parser)]
#[command(name = "hypotube", version, about = "Tube estimates for hypoelliptic diffusions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a config file.
    Run { config: PathBuf },
    /// List the built-in models.
    ListModels,
    /// Monte Carlo check of the norm-equivalence lemmas.
    CheckNorms {
        model: String,
        #[arg(long, default_value_t = 10_000)]
        cases: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tube probabilities and bounds around the zero control.
    Tube {
        model: String,
        #[arg(long = "R", value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
        radii: Vec<f64>,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value = "zero")]
        control: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Density of the rescaled short-time increment.
    Density {
        model: String,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Control-distance upper bound between two points.
    Dc {
        model: String,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(cfg: &Config, out: Option<PathBuf>) -> u8 {
    let result = match out {
        Some(dir) => cli::run_config(cfg, &dir),
        None => cli::execute(cfg),
    };
    match result {
        Ok(tables) => {
            for t in tables.iter().filter(|t: &&Table| !t.rows.is_empty()) {
                println!("# {}", t.name);
                print!("{}", t.to_csv().unwrap_or_default());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e) as u8
        }
    }
}

fn base(experiment: &str, model: &str, seed: Option<u64>) -> Config {
    let mut cfg = Config::default();
    cfg.set("experiment", experiment);
    cfg.set("model.name", model);
    if let Some(s) = seed {
        cfg.set("seed", s.to_string());
    }
    cfg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match Cli::parse().cmd {
        Cmd::Run { config } => cli::run(&config) as u8,
        Cmd::ListModels => {
            print!("{}", cli::list_models());
            0
        }
        Cmd::CheckNorms { model, cases, seed, out } => {
            let mut cfg = base("norms-check", &model, seed);
            cfg.set("norms.cases", cases.to_string());
            emit(&cfg, out)
        }
        Cmd::Tube { model, radii, horizon, paths, control, seed, out } => {
            let mut cfg = base("tube", &model, seed);
            let radii: Vec<String> = radii.iter().map(|r| r.to_string()).collect();
            cfg.set("tube.radii", radii.join(", "));
            cfg.set("tube.T", &horizon.to_string());
            cfg.set("tube.control", control);
            cfg.set("sim.paths", paths.to_string());
            emit(&cfg, out)
        }
        Cmd::Density { model, delta, paths, seed, out } => {
            let mut cfg = base("density", &model, seed);
            cfg.set("density.delta", delta.to_string());
            cfg.set("sim.paths", paths.to_string());
            emit(&cfg, out)
        }
        Cmd::Dc { model, x, y, out } => {
            let mut cfg = base("control-metric", &model, None);
            cfg.set("metric.x", x);
            cfg.set("metric.y", y);
            emit(&cfg, out)
        }
    };
    ExitCode::from(code)
}
