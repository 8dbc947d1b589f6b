//! Config-driven experiment runner: CSV tables, a run manifest and a structured log.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::model::BUILTIN_MODELS;

pub mod config;
pub mod runner;
pub mod table;

pub use config::Config;
pub use runner::{execute, log_log_fit, model_from_config, remainder_rms, EXPERIMENTS};
pub use table::{fmt_f64, Table};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for configuration errors (including a missing config file).
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numeric failures propagated from the library.
pub const EXIT_NUMERIC: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERIC
    }
}

/// Text table of the built-in models.
pub fn list_models() -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<12} {:<14} {:<4} {:<34} note",
        "name", "sigma", "drift", "h3", "domain"
    );
    for m in BUILTIN_MODELS {
        let d = crate::model::builtin(m.name, None)
            .map(|model| *model.domain())
            .expect("built-in models construct");
        let domain = format!("[{}, {}] x [{}, {}]", d.lo.x1, d.hi.x1, d.lo.x2, d.hi.x2);
        let _ = writeln!(
            out,
            "{:<16} {:<12} {:<14} {:<4} {:<34} {}",
            m.name,
            m.sigma,
            m.drift,
            if m.h3 { "yes" } else { "no" },
            domain,
            m.note
        );
    }
    out
}

/// Append-only `key=value` event log.
pub struct RunLog {
    file: Option<File>,
}

impl RunLog {
    pub fn open(path: &Path) -> Self {
        let file = OpenOptions::new().create(true).append(true).open(path).ok();
        Self { file }
    }

    pub fn event(&mut self, level: &str, event: &str, fields: &[(&str, String)]) {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64());
        let mut line = format!("ts={ts:.3} level={level} event={event}");
        for (k, v) in fields {
            let _ = write!(line, " {k}={v:?}");
        }
        if let Some(f) = self.file.as_mut() {
            let _ = writeln!(f, "{line}");
        }
    }
}

fn manifest(cfg: &Config, seed: u64, wall: f64, tables: &[Table]) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "seed = {seed}");
    let _ = writeln!(m, "wall_time_s = {wall:.3}");
    let _ = writeln!(
        m,
        "outputs = {}",
        tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>().join(", ")
    );
    let _ = writeln!(m, "# config");
    for (k, v) in cfg.entries() {
        let _ = writeln!(m, "{k} = {v}");
    }
    m
}

/// Output directory named by `output` (default `out`).
pub fn output_dir(cfg: &Config) -> PathBuf {
    PathBuf::from(cfg.string_or("output", "out"))
}

/// Runs a parsed configuration, writing tables, `manifest.txt` and `run.log` to `dir`.
pub fn run_config(cfg: &Config, dir: &Path) -> Result<Vec<Table>> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create '{}': {e}", dir.display())))?;
    let mut log = RunLog::open(&dir.join("run.log"));
    let seed = cfg.u64_or("seed", runner::DEFAULT_SEED)?;
    log.event(
        "INFO",
        "start",
        &[
            ("experiment", cfg.get("experiment").unwrap_or("").to_string()),
            ("seed", seed.to_string()),
        ],
    );
    let start = Instant::now();
    let tables = match execute(cfg) {
        Ok(t) => t,
        Err(e) => {
            log.event(
                "ERROR",
                "failed",
                &[("exit_code", exit_code(&e).to_string()), ("error", e.to_string())],
            );
            return Err(e);
        }
    };
    for t in &tables {
        t.write_to(dir)?;
        log.event("INFO", "wrote", &[("file", format!("{}.csv", t.name)), ("rows", t.rows.len().to_string())]);
    }
    let wall = start.elapsed().as_secs_f64();
    fs::write(dir.join("manifest.txt"), manifest(cfg, seed, wall, &tables))
        .map_err(|e| Error::Config(format!("cannot write manifest: {e}")))?;
    log.event("INFO", "done", &[("wall_time_s", format!("{wall:.3}"))]);
    Ok(tables)
}

/// `run <config>`: loads the file and runs it; returns the process exit code.
pub fn run(config_path: &Path) -> i32 {
    let cfg = match Config::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run_config(&cfg, &output_dir(&cfg)) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
