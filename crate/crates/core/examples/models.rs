//! Built-in models: fields, brackets and the H3 check on each reference region.

use hypotube::model::{builtin, check_h3, BUILTIN_MODELS};
use hypotube::Point2;

fn main() -> hypotube::Result<()> {
    print!("{}", hypotube::cli::list_models());
    println!();
    let x = Point2::new(1.0, 0.5);
    for info in BUILTIN_MODELS {
        let m = builtin(info.name, None)?;
        let samples = check_h3(&m, &m.reference_region().grid(8), 1e-8)?;
        let kappa = samples.iter().map(|s| s.kappa).fold(f64::NAN, f64::max);
        println!(
            "{:<15} sigma{:?}  b{:?}  [b,sigma]{:?}  det A = {:.3}  max kappa = {kappa:.3}",
            info.name,
            m.sigma(x)?.to_array(),
            m.drift(x)?.to_array(),
            m.bracket(x)?.to_array(),
            m.a_matrix(x)?.det(),
        );
    }
    Ok(())
}
