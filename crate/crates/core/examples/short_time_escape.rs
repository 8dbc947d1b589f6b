//! Probability that the diffusion leaves the A_R ball around x + b(x)t before time δ.

use hypotube::mc::{short_time_escape, SimConfig};
use hypotube::model::{asian, counterexample};
use hypotube::Point2;

fn main() -> hypotube::Result<()> {
    let delta = 0.01;
    let cfg = SimConfig::new(delta / 100.0, 20_000, 1, delta);
    for (name, m, x) in [("asian", asian(), Point2::new(1.0, 1.0)), ("counterexample", counterexample(), Point2::new(1.0, 0.0))] {
        for r in [0.05, 0.2, 0.8] {
            for threshold in [0.25, 0.5, 1.0] {
                let e = short_time_escape(&m, x, r, threshold, &cfg)?;
                println!("{name:<15} R {r:<4} threshold {threshold:<4} p_hat {:.4} [{:.4}, {:.4}]", e.p_hat, e.ci_low, e.ci_high);
            }
        }
    }
    Ok(())
}
