//! Runs a configuration in-process and prints the resulting CSV tables.
//!
//!     cargo run --example run_config -- crates/core/configs/escape_asian.conf

use hypotube::cli::{execute, Config};

fn main() -> hypotube::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => Config::load(std::path::Path::new(&path))?,
        None => Config::parse("experiment = taylor-scaling\nmodel.name = asian\nsim.paths = 2000\n")?,
    };
    for table in execute(&cfg)? {
        println!("# {}", table.name);
        print!("{}", table.to_csv()?);
    }
    Ok(())
}
