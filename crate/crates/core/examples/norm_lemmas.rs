//! Anisotropic norms, the quasi-distance and the four norm-comparison suites.

use hypotube::model::{asian, BUILTIN_MODELS, builtin};
use hypotube::norms::lemmas::{run_all, LocalityParams};
use hypotube::norms::{frame, frame_bar, quasi_distance};
use hypotube::Point2;

fn main() -> hypotube::Result<()> {
    let m = asian();
    let x = Point2::new(1.0, 1.0);
    let xi = Point2::new(0.01, 0.001);
    for r in [1.0, 0.1, 0.01] {
        println!(
            "R = {r:<5} |xi|_A_R = {:.6}   |xi|_Abar_R = {:.6}",
            frame(&m, x, r)?.norm(xi),
            frame_bar(&m, x, r)?.norm(xi)
        );
    }
    for y in [Point2::new(1.01, 1.0), Point2::new(1.0, 1.001), Point2::new(1.3, 1.3)] {
        let q = quasi_distance(&m, x, y, 1e-12)?;
        println!("d({x:?}, {y:?}) = {:.6}{}", q.d, if q.saturated { " (saturated)" } else { "" });
    }
    println!();
    for info in BUILTIN_MODELS {
        let model = builtin(info.name, None)?;
        for r in run_all(&model, 10_000, 1, LocalityParams::default())? {
            println!(
                "{:<15} {:<22} violations {:>3}  worst {:.4} / limit {:.1}",
                info.name, r.name, r.violations, r.worst, r.limit
            );
        }
    }
    Ok(())
}
